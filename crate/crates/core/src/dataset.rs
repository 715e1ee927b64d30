//! Synthetic training data: seeded sampling of Black-Scholes inputs, the
//! price filter, train/test partitioning, the two scaling transforms (direct
//! pricer and inverse volatility map) and CSV persistence.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bs_oracle::{norm_cdf, norm_cdf_inv, OptionSample};
use crate::error::{Error, Result};

/// Prices outside `[PRICE_FLOOR, PRICE_CAP]` are discarded by [`generate`].
pub const PRICE_FLOOR: f64 = 0.001;
pub const PRICE_CAP: f64 = 10.0;

/// Default half-width of the at-the-money band removed by [`scale_inverse`], in `|ln m|`.
pub const DEFAULT_EPS_ATM: f64 = 1e-3;

/// Number of features seen by both networks.
pub const N_FEATURES: usize = 5;

/// Feature positions shared by the direct and inverse layouts.
pub const FEATURE_MONEYNESS: usize = 0;
pub const FEATURE_MATURITY: usize = 1;
pub const FEATURE_RATE: usize = 2;
pub const FEATURE_DIVIDEND: usize = 3;
/// σ in the direct layout, the scaled price in the inverse layout.
pub const FEATURE_LAST: usize = 4;

// Fixed so that the generated data does not depend on how chunks are scheduled.
const GENERATION_CHUNK: usize = 8192;

pub const CSV_HEADER: [&str; 7] = ["S", "K", "T", "r", "q", "sigma", "C"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        self.lower + (self.upper - self.lower) * rng.gen::<f64>()
    }
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.lower, self.upper)
    }
}

/// Uniform sampling box for `(S, K, T, r, q, σ)`.
///
/// A coordinate with `lower == upper` is pinned to that value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingRanges {
    pub spot: Bounds,
    pub strike: Bounds,
    pub maturity: Bounds,
    pub rate: Bounds,
    pub dividend: Bounds,
    pub vol: Bounds,
}

impl Default for SamplingRanges {
    fn default() -> Self {
        Self {
            spot: Bounds::new(8.0, 24.0),
            strike: Bounds::new(8.0, 24.0),
            maturity: Bounds::new(0.05, 2.5),
            rate: Bounds::new(0.0, 0.05),
            // With q > 0 deep in-the-money calls decay in T at fixed K, so
            // the calendar condition would flag the exact model itself.
            dividend: Bounds::new(0.0, 0.0),
            vol: Bounds::new(0.05, 0.8),
        }
    }
}

impl SamplingRanges {
    pub fn fields(&self) -> [(&'static str, Bounds); 6] {
        [
            ("S", self.spot),
            ("K", self.strike),
            ("T", self.maturity),
            ("r", self.rate),
            ("q", self.dividend),
            ("sigma", self.vol),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, b) in self.fields() {
            if !(b.lower.is_finite() && b.upper.is_finite()) || b.lower > b.upper {
                return Err(Error::Config(format!(
                    "range for {name} must satisfy lower <= upper, got [{}, {}]",
                    b.lower, b.upper
                )));
            }
        }
        for (name, b) in [
            ("S", self.spot),
            ("K", self.strike),
            ("T", self.maturity),
            ("sigma", self.vol),
        ] {
            if b.lower <= 0.0 {
                return Err(Error::Config(format!(
                    "range for {name} must be strictly positive, got lower bound {}",
                    b.lower
                )));
            }
        }
        Ok(())
    }
}

/// Filter bookkeeping for one call to [`generate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenerationStats {
    pub requested: usize,
    pub kept: usize,
    pub below_floor: usize,
    pub above_cap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub ranges: SamplingRanges,
    pub stats: GenerationStats,
}

/// Disjoint, exhaustive partition of sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<OptionSample>,
    pub split: Option<Split>,
    pub provenance: Option<Provenance>,
}

impl Dataset {
    pub fn from_samples(samples: Vec<OptionSample>) -> Self {
        Self {
            samples,
            split: None,
            provenance: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Training indices; every sample when no split was made.
    pub fn train_indices(&self) -> Vec<usize> {
        match &self.split {
            Some(s) => s.train.clone(),
            None => (0..self.samples.len()).collect(),
        }
    }

    pub fn test_indices(&self) -> Vec<usize> {
        match &self.split {
            Some(s) => s.test.clone(),
            None => Vec::new(),
        }
    }

    pub fn train(&self) -> Vec<OptionSample> {
        self.train_indices().into_iter().map(|i| self.samples[i]).collect()
    }

    pub fn test(&self) -> Vec<OptionSample> {
        self.test_indices().into_iter().map(|i| self.samples[i]).collect()
    }
}

/// Draws `n` uniform input vectors, prices them, and keeps those with
/// `PRICE_FLOOR <= C <= PRICE_CAP`.
pub fn generate(n: usize, ranges: &SamplingRanges, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    ranges.validate()?;

    let mut stats = GenerationStats {
        requested: n,
        ..Default::default()
    };
    let mut samples = Vec::with_capacity(n);
    for (chunk, start) in (0..n).step_by(GENERATION_CHUNK).enumerate() {
        let len = GENERATION_CHUNK.min(n - start);
        let mut rng = chunk_rng(seed, chunk as u64);
        for _ in 0..len {
            let s = OptionSample::priced(
                ranges.spot.sample(&mut rng),
                ranges.strike.sample(&mut rng),
                ranges.maturity.sample(&mut rng),
                ranges.rate.sample(&mut rng),
                ranges.dividend.sample(&mut rng),
                ranges.vol.sample(&mut rng),
            )?;
            if s.call < PRICE_FLOOR {
                stats.below_floor += 1;
            } else if s.call > PRICE_CAP {
                stats.above_cap += 1;
            } else {
                samples.push(s);
            }
        }
    }
    stats.kept = samples.len();
    log::info!(
        "generated {} samples, kept {} ({} below floor, {} above cap)",
        n,
        stats.kept,
        stats.below_floor,
        stats.above_cap
    );
    Ok(Dataset {
        samples,
        split: None,
        provenance: Some(Provenance {
            seed,
            ranges: *ranges,
            stats,
        }),
    })
}

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Assigns a seeded random partition with `round(fraction * len)` training samples.
pub fn split(mut ds: Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = ds.samples.len();
    let n_train = (fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order.split_off(n_train);
    ds.split = Some(Split { train: order, test });
    Ok(ds)
}

/// Parameters needed to map network outputs back to prices or volatilities.
///
/// Both layouts share the price scaling `c = C/K - shift - 0.5` with `shift`
/// the smallest `C/K` seen on the training split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scaling {
    /// Features `[S/K, T, r, q, σ]`, target `c`.
    Direct { shift: f64 },
    /// Features `[S/K, T, r, q, c]`, target `N(ln(S/K) / (σ√T))`.
    Inverse { shift: f64, eps_atm: f64 },
}

impl Scaling {
    pub fn shift(&self) -> f64 {
        match *self {
            Scaling::Direct { shift } | Scaling::Inverse { shift, .. } => shift,
        }
    }

    pub fn scale_price(&self, strike: f64, call: f64) -> f64 {
        call / strike - self.shift() - 0.5
    }

    pub fn unscale_price(&self, strike: f64, scaled: f64) -> f64 {
        strike * (scaled + self.shift() + 0.5)
    }

    pub fn direct_features(sample: &OptionSample) -> [f64; N_FEATURES] {
        [
            sample.moneyness(),
            sample.maturity,
            sample.rate,
            sample.dividend,
            sample.vol,
        ]
    }

    /// Inverse-map features for a quote with observed price `call`.
    pub fn inverse_features(
        &self,
        spot: f64,
        strike: f64,
        maturity: f64,
        rate: f64,
        dividend: f64,
        call: f64,
    ) -> [f64; N_FEATURES] {
        [
            spot / strike,
            maturity,
            rate,
            dividend,
            self.scale_price(strike, call),
        ]
    }
}

/// `N(ln m / (σ√T))`
pub fn vol_to_target(moneyness: f64, maturity: f64, vol: f64) -> f64 {
    norm_cdf(moneyness.ln() / (vol * maturity.sqrt()))
}

/// Analytic inverse of [`vol_to_target`]; undefined at the money.
pub fn target_to_vol(moneyness: f64, maturity: f64, target: f64) -> Result<f64> {
    let x = norm_cdf_inv(target)?;
    let log_m = moneyness.ln();
    if log_m == 0.0 || x == 0.0 {
        return Err(Error::Domain(
            "volatility is not identifiable at the money".into(),
        ));
    }
    let vol = log_m / (x * maturity.sqrt());
    if !(vol > 0.0) {
        return Err(Error::Domain(format!(
            "target {target} has the wrong side of 0.5 for moneyness {moneyness}"
        )));
    }
    Ok(vol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledRow {
    pub features: [f64; N_FEATURES],
    pub target: f64,
    /// Original strike and maturity, used to normalise the penalty terms.
    pub strike: f64,
    pub maturity: f64,
    /// Index of the originating sample in the unscaled dataset.
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledDataset {
    pub rows: Vec<ScaledRow>,
    /// Indices into `rows`.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub scaling: Scaling,
    /// Samples removed by the at-the-money band (inverse layout only).
    pub dropped: usize,
}

impl ScaledDataset {
    pub fn train_rows(&self) -> Vec<ScaledRow> {
        self.train.iter().map(|&i| self.rows[i]).collect()
    }

    pub fn test_rows(&self) -> Vec<ScaledRow> {
        self.test.iter().map(|&i| self.rows[i]).collect()
    }
}

fn train_shift(ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Domain("cannot scale an empty dataset".into()));
    }
    let train = ds.train_indices();
    let pool: Box<dyn Iterator<Item = usize>> = if train.is_empty() {
        Box::new(0..ds.len())
    } else {
        Box::new(train.into_iter())
    };
    Ok(pool
        .map(|i| ds.samples[i].call / ds.samples[i].strike)
        .fold(f64::INFINITY, f64::min))
}

/// Rebuilds train/test row indices after some source samples were dropped.
fn remap_split(ds: &Dataset, kept_row: &[Option<usize>]) -> (Vec<usize>, Vec<usize>) {
    let map = |idx: Vec<usize>| idx.into_iter().filter_map(|i| kept_row[i]).collect();
    (map(ds.train_indices()), map(ds.test_indices()))
}

pub fn scale_direct(ds: &Dataset) -> Result<ScaledDataset> {
    let scaling = Scaling::Direct {
        shift: train_shift(ds)?,
    };
    Ok(apply_scaling(ds, scaling))
}

pub fn scale_inverse(ds: &Dataset, eps_atm: f64) -> Result<ScaledDataset> {
    if !(eps_atm >= 0.0) {
        return Err(Error::Config(format!("eps_atm must be >= 0, got {eps_atm}")));
    }
    let scaling = Scaling::Inverse {
        shift: train_shift(ds)?,
        eps_atm,
    };
    Ok(apply_scaling(ds, scaling))
}

/// Scales `ds` with fixed metadata, e.g. the scaling stored in a trained model.
pub fn apply_scaling(ds: &Dataset, scaling: Scaling) -> ScaledDataset {
    let mut rows = Vec::with_capacity(ds.len());
    let mut kept = vec![None; ds.len()];
    let mut saturated = 0usize;
    for (i, s) in ds.samples.iter().enumerate() {
        let (features, target) = match scaling {
            Scaling::Direct { .. } => (
                Scaling::direct_features(s),
                scaling.scale_price(s.strike, s.call),
            ),
            Scaling::Inverse { eps_atm, .. } => {
                let m = s.moneyness();
                if m.ln().abs() < eps_atm || m == 1.0 {
                    continue;
                }
                // Deep in or out of the money the target rounds to 0 or 1 and
                // the volatility can no longer be read back from it.
                let target = vol_to_target(m, s.maturity, s.vol);
                if !(target > 0.0 && target < 1.0) {
                    saturated += 1;
                    continue;
                }
                let f = scaling.inverse_features(s.spot, s.strike, s.maturity, s.rate, s.dividend, s.call);
                (f, target)
            }
        };
        kept[i] = Some(rows.len());
        rows.push(ScaledRow {
            features,
            target,
            strike: s.strike,
            maturity: s.maturity,
            source: i,
        });
    }
    let dropped = ds.len() - rows.len();
    if dropped > saturated {
        log::info!("dropped {} samples inside the at-the-money band", dropped - saturated);
    }
    if saturated > 0 {
        log::info!("dropped {saturated} samples whose target rounds to 0 or 1");
    }
    let (train, test) = remap_split(ds, &kept);
    ScaledDataset {
        rows,
        train,
        test,
        scaling,
        dropped,
    }
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in &ds.samples {
        w.write_record(
            [s.spot, s.strike, s.maturity, s.rate, s.dividend, s.vol, s.call].map(format_float),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(ds, file)
}

/// Maps named columns of a CSV header to positions, rejecting absent ones.
pub(crate) fn column_positions(
    headers: &csv::StringRecord,
    required: &[&str],
) -> Result<Vec<usize>> {
    required
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| Error::Parse {
                    line: 1,
                    message: format!("missing column '{name}'"),
                })
        })
        .collect()
}

pub(crate) fn parse_field(record: &csv::StringRecord, pos: usize, name: &str, line: u64) -> Result<f64> {
    let raw = record.get(pos).ok_or_else(|| Error::Parse {
        line,
        message: format!("row has no value for column '{name}'"),
    })?;
    raw.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("column '{name}': invalid number '{raw}'"),
    })
}

pub(crate) fn csv_error_line(e: &csv::Error) -> u64 {
    e.position().map(|p| p.line()).unwrap_or(0)
}

pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    let pos = column_positions(&headers, &CSV_HEADER)?;
    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: csv_error_line(&e),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut v = [0.0; 7];
        for (k, name) in CSV_HEADER.iter().enumerate() {
            v[k] = parse_field(&record, pos[k], name, line)?;
        }
        samples.push(OptionSample {
            spot: v[0],
            strike: v[1],
            maturity: v[2],
            rate: v[3],
            dividend: v[4],
            vol: v[5],
            call: v[6],
        });
    }
    Ok(Dataset::from_samples(samples))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    read_csv(std::fs::File::open(path)?)
}
