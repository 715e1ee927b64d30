//! Calibration through the inverse map.
//!
//! An inverse network reads `[S/K, T, r, q, c]` and predicts the scaled
//! target `y = N(ln m / (σ√T))`, so every quote yields its own volatility
//! analytically. The per-quote values are combined with weights
//! `ω̄ = ω |∂C/∂σ|` taken from the direct network, and the weighted mean is
//! the exact minimiser of `Σ ω̄ (σ_i - σ)²`. Nothing here iterates on a loss.

use std::io::{Read, Write};
use std::path::Path;

use crate::bs_oracle::{bs_call, bs_greeks, call_bounds};
use crate::dataset::{
    column_positions, csv_error_line, format_float, parse_field, scale_inverse, target_to_vol,
    Dataset, Scaling, DEFAULT_EPS_ATM, FEATURE_LAST,
};
use crate::error::{Error, Result};
use crate::net::{batch_matrix, Direction, Network};
use crate::trainer::{train, TrainConfig, TrainReport};

/// Clamping band for the inverse-net output before the analytic unscaling.
pub const Y_CLAMP: f64 = 1e-6;

pub const QUOTE_COLUMNS: [&str; 6] = ["S", "r", "q", "T", "K", "C_market"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quote {
    pub spot: f64,
    pub rate: f64,
    pub dividend: f64,
    pub maturity: f64,
    pub strike: f64,
    pub price: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuoteSet {
    pub quotes: Vec<Quote>,
}

impl QuoteSet {
    /// Exact Black-Scholes prices on a maturity × strike grid.
    pub fn synthetic(
        spot: f64,
        rate: f64,
        dividend: f64,
        vol: f64,
        maturities: &[f64],
        strikes: &[f64],
    ) -> Result<Self> {
        let mut quotes = Vec::with_capacity(maturities.len() * strikes.len());
        for &t in maturities {
            for &k in strikes {
                quotes.push(Quote {
                    spot,
                    rate,
                    dividend,
                    maturity: t,
                    strike: k,
                    price: bs_call(spot, k, t, rate, dividend, vol)?,
                    weight: 1.0,
                });
            }
        }
        Ok(Self { quotes })
    }

    pub fn len(&self) -> usize {
        self.quotes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quotes.is_empty()
    }

    /// Checks price bounds, weights and distinct strikes per maturity.
    pub fn validate(&self) -> Result<()> {
        for (i, q) in self.quotes.iter().enumerate() {
            let fields = [q.spot, q.rate, q.dividend, q.maturity, q.strike, q.price, q.weight];
            if fields.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("quote {i} has a non-finite field")));
            }
            if q.spot <= 0.0 || q.strike <= 0.0 || q.maturity <= 0.0 {
                return Err(Error::Domain(format!(
                    "quote {i}: S, K and T must be positive"
                )));
            }
            if q.weight < 0.0 {
                return Err(Error::Domain(format!("quote {i}: negative weight {}", q.weight)));
            }
            let (lo, hi) = call_bounds(q.spot, q.strike, q.maturity, q.rate, q.dividend);
            if q.price < lo || q.price > hi {
                return Err(Error::Domain(format!(
                    "quote {i}: price {} outside call bounds [{lo}, {hi}]",
                    q.price
                )));
            }
        }
        let mut keys: Vec<(u64, u64)> = self
            .quotes
            .iter()
            .map(|q| (q.maturity.to_bits(), q.strike.to_bits()))
            .collect();
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("two quotes share a maturity and strike".into()));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(QUOTE_COLUMNS.iter().chain(["weight"].iter()))?;
        for q in &self.quotes {
            w.write_record(
                [q.spot, q.rate, q.dividend, q.maturity, q.strike, q.price, q.weight].map(format_float),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Reads `S,r,q,T,K,C_market[,weight]`; a missing weight column means 1.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() {
            return Ok(Self::default());
        }
        let pos = column_positions(&headers, &QUOTE_COLUMNS)?;
        let weight_pos = headers.iter().position(|h| h.trim() == "weight");
        let mut quotes = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Parse {
                line: csv_error_line(&e),
                message: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let mut v = [0.0; 6];
            for (k, name) in QUOTE_COLUMNS.iter().enumerate() {
                v[k] = parse_field(&record, pos[k], name, line)?;
            }
            let weight = match weight_pos {
                Some(p) if !record.get(p).unwrap_or("").trim().is_empty() => {
                    parse_field(&record, p, "weight", line)?
                }
                _ => 1.0,
            };
            quotes.push(Quote {
                spot: v[0],
                rate: v[1],
                dividend: v[2],
                maturity: v[3],
                strike: v[4],
                price: v[5],
                weight,
            });
        }
        let set = Self { quotes };
        set.validate()?;
        Ok(set)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Replaces every price in `ds` with the direct network's price, keeping the
/// split, so the inverse map is fitted to the surrogate it will be paired with.
pub fn relabel_with_direct(ds: &Dataset, direct: &Network) -> Result<Dataset> {
    let scaling = match direct.scaling {
        Some(s @ Scaling::Direct { .. }) => s,
        _ => {
            return Err(Error::Config(
                "relabelling needs a network trained on direct-scaled prices".into(),
            ))
        }
    };
    let pred = direct.forward_batch(batch_matrix(ds.samples.iter().map(Scaling::direct_features)).view())?;
    let mut out = ds.clone();
    for (s, c) in out.samples.iter_mut().zip(pred) {
        s.call = scaling.unscale_price(s.strike, c);
    }
    Ok(out)
}

/// Fits the inverse map on `ds` (scaled here, dropping the at-the-money band).
pub fn train_inverse(
    net: &mut Network,
    ds: &Dataset,
    cfg: &TrainConfig,
    eps_atm: f64,
) -> Result<TrainReport> {
    let data = scale_inverse(ds, eps_atm)?;
    train(net, &data, cfg, None)
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuoteStatus {
    Used,
    /// Network output left `(ε, 1-ε)` and was clamped; the quote is still used.
    Clamped,
    Excluded(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuotePrediction {
    pub y_hat: f64,
    pub vol: Option<f64>,
    pub status: QuoteStatus,
}

fn inverse_scaling(net: &Network) -> Result<(Scaling, f64)> {
    match net.scaling {
        Some(s @ Scaling::Inverse { eps_atm, .. }) => Ok((s, eps_atm)),
        _ => Err(Error::Config(
            "calibration needs a network trained on inverse-scaled data".into(),
        )),
    }
}

/// Per-quote volatility from the inverse map, unscaled analytically.
pub fn predict_params(inv_net: &Network, quotes: &QuoteSet) -> Result<Vec<QuotePrediction>> {
    let (scaling, eps_atm) = inverse_scaling(inv_net)?;
    let eps_atm = if eps_atm > 0.0 { eps_atm } else { DEFAULT_EPS_ATM };
    let features = quotes.quotes.iter().map(|q| {
        scaling.inverse_features(q.spot, q.strike, q.maturity, q.rate, q.dividend, q.price)
    });
    let y = inv_net.forward_batch(batch_matrix(features).view())?;
    Ok(quotes
        .quotes
        .iter()
        .zip(y)
        .map(|(q, y_hat)| {
            let m = q.spot / q.strike;
            if m.ln().abs() < eps_atm {
                return QuotePrediction {
                    y_hat,
                    vol: None,
                    status: QuoteStatus::Excluded(format!("at the money (|ln m| < {eps_atm})")),
                };
            }
            let clamped = y_hat.clamp(Y_CLAMP, 1.0 - Y_CLAMP);
            match target_to_vol(m, q.maturity, clamped) {
                Ok(vol) => QuotePrediction {
                    y_hat,
                    vol: Some(vol),
                    status: if clamped != y_hat {
                        QuoteStatus::Clamped
                    } else {
                        QuoteStatus::Used
                    },
                },
                Err(e) => QuotePrediction {
                    y_hat,
                    vol: None,
                    status: QuoteStatus::Excluded(e.to_string()),
                },
            }
        })
        .collect())
}

/// Source of `|∂C/∂σ|` for the aggregation weights.
#[derive(Debug, Clone, Copy)]
pub enum WeightSource<'a> {
    /// Autodiff through a direct network: `K |∂c/∂σ|`.
    Direct(&'a Network),
    /// Closed-form Black-Scholes vega.
    OracleVega,
    /// User weights only.
    Uniform,
}

/// `ω̄ = ω |∂C/∂σ|` at each quote's own predicted volatility; zero for excluded quotes.
pub fn gradient_weights(
    source: WeightSource<'_>,
    quotes: &QuoteSet,
    preds: &[QuotePrediction],
) -> Result<Vec<f64>> {
    if preds.len() != quotes.len() {
        return Err(Error::Shape {
            expected: quotes.len(),
            got: preds.len(),
        });
    }
    let sensitivity: Vec<f64> = match source {
        WeightSource::Uniform => vec![1.0; quotes.len()],
        WeightSource::OracleVega => quotes
            .quotes
            .iter()
            .zip(preds)
            .map(|(q, p)| match p.vol {
                Some(v) => Ok(bs_greeks(q.spot, q.strike, q.maturity, q.rate, q.dividend, v)?.vega),
                None => Ok(0.0),
            })
            .collect::<Result<_>>()?,
        WeightSource::Direct(net) => {
            if !matches!(net.scaling, Some(Scaling::Direct { .. })) {
                return Err(Error::Config(
                    "gradient weights need a network trained on direct-scaled prices".into(),
                ));
            }
            let features = quotes.quotes.iter().zip(preds).map(|(q, p)| {
                [
                    q.spot / q.strike,
                    q.maturity,
                    q.rate,
                    q.dividend,
                    p.vol.unwrap_or(0.0),
                ]
            });
            let jets = net.jets(batch_matrix(features).view(), &[Direction::first(FEATURE_LAST)])?;
            quotes
                .quotes
                .iter()
                .zip(&jets.first[0])
                .map(|(q, dc)| q.strike * dc)
                .collect()
        }
    };
    Ok(quotes
        .quotes
        .iter()
        .zip(preds)
        .zip(sensitivity)
        .map(|((q, p), s)| if p.vol.is_some() { q.weight * s.abs() } else { 0.0 })
        .collect())
}

/// Weighted mean `Σ ω̄ p / Σ ω̄`, the minimiser of `Σ ω̄ (p_i - p)²`.
///
/// For a model with several parameters apply it to each parameter's column
/// with that parameter's weights.
pub fn aggregate(predictions: &[f64], weights: &[f64]) -> Result<f64> {
    if predictions.len() != weights.len() {
        return Err(Error::Shape {
            expected: predictions.len(),
            got: weights.len(),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, w) in predictions.iter().zip(weights) {
        if *w > 0.0 {
            num += w * p;
            den += w;
        }
    }
    if !(den > 0.0 && den.is_finite()) {
        return Err(Error::Degenerate("total aggregation weight is zero".into()));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuoteResult {
    pub quote: Quote,
    pub prediction: QuotePrediction,
    pub weight_bar: f64,
    pub model_price: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub vol: f64,
    pub rows: Vec<QuoteResult>,
    /// Root-mean-square of `bs_call(σ) - C_market` over all quotes.
    pub residual_rmse: f64,
    pub used: usize,
    pub clamped: usize,
    pub excluded: usize,
}

impl CalibrationResult {
    pub fn warnings(&self) -> usize {
        self.clamped + self.excluded
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "S", "r", "q", "T", "K", "C_market", "weight", "y_hat", "sigma_ann", "weight_bar",
            "C_model", "status",
        ])?;
        for r in &self.rows {
            let q = r.quote;
            let status = match &r.prediction.status {
                QuoteStatus::Used => "used".to_string(),
                QuoteStatus::Clamped => "clamped".to_string(),
                QuoteStatus::Excluded(why) => format!("excluded: {why}"),
            };
            let mut rec: Vec<String> = [
                q.spot,
                q.rate,
                q.dividend,
                q.maturity,
                q.strike,
                q.price,
                q.weight,
                r.prediction.y_hat,
            ]
            .map(format_float)
            .to_vec();
            rec.push(r.prediction.vol.map(format_float).unwrap_or_default());
            rec.push(format_float(r.weight_bar));
            rec.push(format_float(r.model_price));
            rec.push(status);
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "sigma          {}\nresidual rmse  {}\nquotes used    {}\nclamped        {}\nexcluded       {}\nwarnings       {}\n",
            format_float(self.vol),
            format_float(self.residual_rmse),
            self.used,
            self.clamped,
            self.excluded,
            self.warnings()
        )
    }
}

/// Predict, weight and aggregate. The only arithmetic on the calibrated value
/// is the closed-form weighted mean.
pub fn calibrate(
    inv_net: &Network,
    weights: WeightSource<'_>,
    quotes: &QuoteSet,
) -> Result<CalibrationResult> {
    if quotes.is_empty() {
        return Err(Error::Degenerate("quote set is empty".into()));
    }
    let preds = predict_params(inv_net, quotes)?;
    let w = gradient_weights(weights, quotes, &preds)?;
    let vols: Vec<f64> = preds.iter().map(|p| p.vol.unwrap_or(0.0)).collect();
    let vol = aggregate(&vols, &w)?;

    let mut sq = 0.0;
    let mut rows = Vec::with_capacity(quotes.len());
    for ((q, p), wb) in quotes.quotes.iter().zip(preds).zip(w) {
        let model_price = bs_call(q.spot, q.strike, q.maturity, q.rate, q.dividend, vol)?;
        sq += (model_price - q.price).powi(2);
        rows.push(QuoteResult {
            quote: *q,
            prediction: p,
            weight_bar: wb,
            model_price,
        });
    }
    let count = |f: fn(&QuoteStatus) -> bool| rows.iter().filter(|r| f(&r.prediction.status)).count();
    let used = count(|s| !matches!(s, QuoteStatus::Excluded(_)));
    let clamped = count(|s| matches!(s, QuoteStatus::Clamped));
    let excluded = count(|s| matches!(s, QuoteStatus::Excluded(_)));
    for r in &rows {
        if let QuoteStatus::Excluded(why) = &r.prediction.status {
            log::warn!("quote T={} K={} excluded: {why}", r.quote.maturity, r.quote.strike);
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} inverse-net outputs were clamped into ({Y_CLAMP}, {})", 1.0 - Y_CLAMP);
    }
    Ok(CalibrationResult {
        vol,
        residual_rmse: (sq / rows.len() as f64).sqrt(),
        rows,
        used,
        clamped,
        excluded,
    })
}
