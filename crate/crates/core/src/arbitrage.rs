//! Static no-arbitrage audits of a pricing function.
//!
//! A call price surface `C(K, T)` is free of static arbitrage when
//! `∂C/∂T > 0`, `∂C/∂K < 0` and `∂²C/∂K² > 0`. The checks here apply those
//! inequalities pointwise (differential form) and on strike triples and
//! maturity pairs (discrete form), and sum penalty functions of the
//! normalised violation magnitudes over a dataset.

use std::io::Write;

use crate::bs_oracle::{bs_greeks, OptionSample};
use crate::dataset::{format_float, ScaledRow, Scaling, FEATURE_MONEYNESS};
use crate::error::{Error, Result};
use crate::net::{batch_matrix, Network};
use crate::trainer::penalty::{
    phi, price_sensitivities, PenaltyConfig, PriceSensitivities, CONDITION_NAMES, PENALTY_DIRECTIONS,
};

/// Anything that can report a price with its strike and maturity sensitivities.
pub trait Pricer {
    fn sensitivities(&self, samples: &[OptionSample]) -> Result<Vec<PriceSensitivities>>;
}

/// Closed-form Black-Scholes.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePricer;

impl Pricer for OraclePricer {
    fn sensitivities(&self, samples: &[OptionSample]) -> Result<Vec<PriceSensitivities>> {
        samples
            .iter()
            .map(|s| {
                let g = bs_greeks(s.spot, s.strike, s.maturity, s.rate, s.dividend, s.vol)?;
                Ok(PriceSensitivities {
                    price: g.price,
                    dc_dk: g.dc_dk,
                    d2c_dk2: g.d2c_dk2,
                    dc_dt: g.dc_dt,
                })
            })
            .collect()
    }
}

/// A direct network; derivatives use the same chain rule as training.
#[derive(Debug, Clone, Copy)]
pub struct NetworkPricer<'a> {
    net: &'a Network,
    shift: f64,
}

impl<'a> NetworkPricer<'a> {
    pub fn new(net: &'a Network) -> Result<Self> {
        match net.scaling {
            Some(Scaling::Direct { shift }) => Ok(Self { net, shift }),
            _ => Err(Error::Config(
                "arbitrage checks need a network trained on direct-scaled prices".into(),
            )),
        }
    }
}

impl Pricer for NetworkPricer<'_> {
    fn sensitivities(&self, samples: &[OptionSample]) -> Result<Vec<PriceSensitivities>> {
        let features = samples.iter().map(Scaling::direct_features);
        network_sensitivities(
            self.net,
            batch_matrix(features),
            samples.iter().map(|s| s.strike),
            self.shift,
        )
    }
}

fn network_sensitivities(
    net: &Network,
    inputs: ndarray::Array2<f64>,
    strikes: impl Iterator<Item = f64>,
    shift: f64,
) -> Result<Vec<PriceSensitivities>> {
    let jets = net.jets(inputs.view(), &PENALTY_DIRECTIONS)?;
    Ok(strikes
        .enumerate()
        .map(|(b, k)| {
            price_sensitivities(
                shift,
                k,
                inputs[[b, FEATURE_MONEYNESS]],
                jets.value[b],
                jets.first[0][b],
                jets.second[0][b],
                jets.first[1][b],
            )
        })
        .collect())
}

/// Outcome of the three pointwise conditions; `true` means satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DifferentialFlags {
    pub butterfly: bool,
    pub calendar: bool,
    pub vertical: bool,
}

impl DifferentialFlags {
    pub fn all(&self) -> bool {
        self.butterfly && self.calendar && self.vertical
    }

    pub fn violations(&self) -> usize {
        [self.butterfly, self.calendar, self.vertical]
            .iter()
            .filter(|ok| !**ok)
            .count()
    }
}

/// A condition is violated when its normalised magnitude is `>= slack`.
pub fn check_differential(
    sens: &PriceSensitivities,
    strike: f64,
    maturity: f64,
    slack: f64,
) -> DifferentialFlags {
    let v = sens.violations(strike, maturity);
    DifferentialFlags {
        butterfly: v[0] < slack,
        calendar: v[1] < slack,
        vertical: v[2] < slack,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscreteFlags {
    /// `C(K₃) > 0`
    pub positive: bool,
    /// `C(K₂) > C(K₃)`
    pub vertical: bool,
    /// `(K₃-K₂) C(K₁) - (K₃-K₁) C(K₂) + (K₂-K₁) C(K₃) > 0`
    pub butterfly: bool,
}

/// Discrete strike conditions on three prices with `K₁ < K₂ < K₃`.
pub fn check_discrete(strikes: [f64; 3], prices: [f64; 3]) -> Result<DiscreteFlags> {
    let [k1, k2, k3] = strikes;
    if !(k1 < k2 && k2 < k3) {
        return Err(Error::Domain(format!(
            "strikes must be strictly increasing, got {strikes:?}"
        )));
    }
    let [c1, c2, c3] = prices;
    Ok(DiscreteFlags {
        positive: c3 > 0.0,
        vertical: c2 > c3,
        butterfly: (k3 - k2) * c1 - (k3 - k1) * c2 + (k2 - k1) * c3 > 0.0,
    })
}

/// `C(T₂) > C(T₁)` for `T₁ < T₂`.
pub fn check_calendar(c1: f64, c2: f64, t1: f64, t2: f64) -> Result<bool> {
    if !(t1 < t2) {
        return Err(Error::Domain(format!(
            "maturities must satisfy T1 < T2, got {t1} and {t2}"
        )));
    }
    Ok(c2 > c1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Offender {
    pub sample: usize,
    pub condition: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArbitrageReport {
    /// Violations per condition (butterfly, calendar, vertical).
    pub counts: [u64; 3],
    /// `P_{λ,m}` for the configuration the report was built with.
    pub total: f64,
    pub samples: usize,
    pub worst: Vec<Offender>,
}

pub const WORST_OFFENDERS: usize = 10;

impl ArbitrageReport {
    pub fn violation_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "condition,violations")?;
        for (name, c) in CONDITION_NAMES.iter().zip(self.counts) {
            writeln!(out, "{name},{c}")?;
        }
        writeln!(out, "total,{}", self.violation_count())?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "samples      {}\nbutterfly    {}\ncalendar     {}\nvertical     {}\npenalty      {}\n",
            self.samples,
            self.counts[0],
            self.counts[1],
            self.counts[2],
            format_float(self.total)
        );
        if !self.worst.is_empty() {
            s.push_str("worst offenders (sample, condition, magnitude):\n");
            for o in &self.worst {
                s.push_str(&format!(
                    "  {:>8}  {:<9}  {:.6e}\n",
                    o.sample, CONDITION_NAMES[o.condition], o.magnitude
                ));
            }
        }
        s
    }
}

fn build_report<'a>(
    items: impl Iterator<Item = (PriceSensitivities, f64, f64)>,
    pcfg: &PenaltyConfig,
    slack: f64,
) -> ArbitrageReport {
    let mut counts = [0u64; 3];
    let mut total = 0.0;
    let mut samples = 0;
    let mut worst: Vec<Offender> = Vec::new();
    for (i, (sens, k, t)) in items.enumerate() {
        samples += 1;
        let v = sens.violations(k, t);
        for c in 0..3 {
            let x = v[c] - slack;
            total += phi(x, pcfg.lambda[c], pcfg.power[c]);
            if x >= 0.0 {
                counts[c] += 1;
                worst.push(Offender {
                    sample: i,
                    condition: c,
                    magnitude: v[c],
                });
            }
        }
        if worst.len() > 4 * WORST_OFFENDERS {
            rank(&mut worst);
        }
    }
    rank(&mut worst);
    ArbitrageReport {
        counts,
        total,
        samples,
        worst,
    }
}

fn rank(worst: &mut Vec<Offender>) {
    worst.sort_by(|a, b| {
        b.magnitude
            .total_cmp(&a.magnitude)
            .then(a.sample.cmp(&b.sample))
            .then(a.condition.cmp(&b.condition))
    });
    worst.truncate(WORST_OFFENDERS);
}

/// `Σ Φ_{λ,m}` of the violation magnitudes over `samples`, shifted by `slack`.
pub fn penalty_metric(
    pricer: &dyn Pricer,
    samples: &[OptionSample],
    pcfg: &PenaltyConfig,
    slack: f64,
) -> Result<ArbitrageReport> {
    if samples.is_empty() {
        return Err(Error::Domain("cannot audit an empty dataset".into()));
    }
    pcfg.validate()?;
    let sens = pricer.sensitivities(samples)?;
    Ok(build_report(
        sens.into_iter().zip(samples).map(|(s, o)| (s, o.strike, o.maturity)),
        pcfg,
        slack,
    ))
}

/// [`penalty_metric`] for a direct network on already scaled rows.
pub fn scaled_rows_report(
    net: &Network,
    rows: &[ScaledRow],
    shift: f64,
    pcfg: &PenaltyConfig,
    slack: f64,
) -> Result<ArbitrageReport> {
    if rows.is_empty() {
        return Err(Error::Domain("cannot audit an empty dataset".into()));
    }
    let sens = network_sensitivities(
        net,
        batch_matrix(rows.iter().map(|r| r.features)),
        rows.iter().map(|r| r.strike),
        shift,
    )?;
    Ok(build_report(
        sens.into_iter().zip(rows).map(|(s, r)| (s, r.strike, r.maturity)),
        pcfg,
        slack,
    ))
}
