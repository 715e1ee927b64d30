//! Calibrate one volatility to a grid of quotes without any optimiser: the
//! inverse map predicts σ per quote and the results are vega-weighted.
//!
//!     cargo run --release --example calibrate_quotes

use annpricer::calibrator::{aggregate, calibrate, train_inverse, QuoteSet, WeightSource};
use annpricer::dataset::{generate, split, SamplingRanges, DEFAULT_EPS_ATM};
use annpricer::net::Network;
use annpricer::trainer::TrainConfig;

fn main() -> annpricer::Result<()> {
    let ds = split(generate(40_000, &SamplingRanges::default(), 5)?, 0.8, 5)?;
    let mut inverse = Network::standard(5);
    let cfg = TrainConfig { epochs: 8, ..TrainConfig::inverse_default() };
    train_inverse(&mut inverse, &ds, &cfg, DEFAULT_EPS_ATM)?;

    let strikes: Vec<f64> = (0..20).map(|i| 12.05 + 0.4 * i as f64).collect();
    let quotes = QuoteSet::synthetic(16.0, 0.02, 0.0, 0.25, &[0.25, 0.5, 1.0, 1.5, 2.0], &strikes)?;
    for source in [WeightSource::OracleVega, WeightSource::Uniform] {
        let result = calibrate(&inverse, source, &quotes)?;
        println!("{source:?} weights:\n{}", result.summary());
    }

    // The aggregate is the weighted mean, the minimiser of Σ w (σ - σ̂)².
    println!("aggregate([0.2, 0.3], [1, 3]) = {}", aggregate(&[0.2, 0.3], &[1.0, 3.0])?);
    Ok(())
}
