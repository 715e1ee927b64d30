//! Soft no-arbitrage penalties: an unconstrained fit, then penalised
//! fine-tuning from it, compared on violation counts and accuracy.
//!
//!     cargo run --release --example no_arbitrage_penalty -- 30000 8

use annpricer::dataset::{generate, scale_direct, split, SamplingRanges};
use annpricer::trainer::{penalty_sweep, phi, sweep_table, SweepConfig, TrainConfig};

fn main() -> annpricer::Result<()> {
    let _ = env_logger::builder().filter_level(log::LevelFilter::Info).try_init();
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(30_000);
    let epochs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(8);

    // Φ is zero on satisfied conditions and λ x^m on violations; with m = 0
    // it counts them.
    for x in [-0.5, 0.0, 0.1, 1.0] {
        println!("phi_100,4({x:+}) = {:e}   phi_1,0({x:+}) = {}", phi(x, 100.0, 4), phi(x, 1.0, 0));
    }

    let ds = split(generate(n, &SamplingRanges::default(), 21)?, 0.8, 21)?;
    let data = scale_direct(&ds)?;
    let cfg = SweepConfig {
        lambdas: vec![0.0, 1.0, 100.0],
        train: TrainConfig { epochs, ..TrainConfig::default() },
        ..SweepConfig::default()
    };
    let points = penalty_sweep(&data, &cfg)?;
    println!("\n{}", sweep_table(&points.iter().map(|p| p.row).collect::<Vec<_>>()));
    Ok(())
}
