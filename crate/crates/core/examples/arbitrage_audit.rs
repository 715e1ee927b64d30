//! Count static-arbitrage violations of a pricer over a dataset.
//!
//!     cargo run --release --example arbitrage_audit

use annpricer::arbitrage::{check_calendar, check_discrete, penalty_metric, NetworkPricer, OraclePricer};
use annpricer::bs_oracle::bs_call;
use annpricer::dataset::{generate, scale_direct, split, SamplingRanges};
use annpricer::net::Network;
use annpricer::trainer::{train, PenaltyConfig, TrainConfig};

fn main() -> annpricer::Result<()> {
    let ds = split(generate(10_000, &SamplingRanges::default(), 3)?, 0.8, 3)?;
    let counting = PenaltyConfig::counting();

    let exact = penalty_metric(&OraclePricer, &ds.samples, &counting, 0.0)?;
    println!("closed form:\n{}", exact.summary());

    let mut net = Network::standard(3);
    train(&mut net, &scale_direct(&ds)?, &TrainConfig { epochs: 3, ..TrainConfig::default() }, None)?;
    let fitted = penalty_metric(&NetworkPricer::new(&net)?, &ds.samples, &counting, 0.0)?;
    println!("network after 3 epochs:\n{}", fitted.summary());

    // Discrete versions of the same conditions on a strike and maturity grid.
    let c = |k: f64, t: f64| bs_call(16.0, k, t, 0.02, 0.0, 0.3);
    let flags = check_discrete([14.0, 16.0, 18.0], [c(14.0, 1.0)?, c(16.0, 1.0)?, c(18.0, 1.0)?])?;
    println!("discrete strike checks on exact prices: {flags:?}");
    println!("calendar check on exact prices: {}", check_calendar(c(16.0, 0.5)?, c(16.0, 1.0)?, 0.5, 1.0)?);
    let bad = check_discrete([14.0, 16.0, 18.0], [3.0, 2.2, 1.0])?;
    println!("concave triple: {bad:?}");
    Ok(())
}
