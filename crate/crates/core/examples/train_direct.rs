//! Train the direct pricer on closed-form prices and compare it with them.
//!
//!     cargo run --release --example train_direct -- 40000 10

use annpricer::bs_oracle::bs_call;
use annpricer::dataset::{generate, scale_direct, split, SamplingRanges};
use annpricer::net::{load_model, save_model, Network};
use annpricer::trainer::{train, TrainConfig};

fn main() -> annpricer::Result<()> {
    let _ = env_logger::builder().filter_level(log::LevelFilter::Info).try_init();
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(40_000);
    let epochs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);

    let ds = split(generate(n, &SamplingRanges::default(), 1)?, 0.8, 1)?;
    let data = scale_direct(&ds)?;
    let mut net = Network::standard(1);
    let cfg = TrainConfig { epochs, ..TrainConfig::default() };
    let report = train(&mut net, &data, &cfg, None)?;
    for r in &report.history {
        println!("epoch {:>2}: train {:.4} bps, test {:.4} bps", r.epoch, r.train_mse_bps, r.test_mse_bps);
    }
    let test = report.test.expect("split has a test part");
    println!("out-of-sample mse {:.4} bps, mean percent error {:.4}", test.mse_bps, test.mean_pct_error);

    let path = std::env::temp_dir().join("annpricer_direct.model");
    save_model(&net, &path)?;
    let net = load_model(&path)?;
    let scaling = net.scaling.expect("training records the scaling");
    let (spot, rate, maturity, vol) = (16.0, 0.02, 1.0, 0.25);
    println!("\n{:>5} {:>12} {:>12}", "K", "network", "exact");
    for strike in [12.0, 14.0, 16.0, 18.0, 20.0] {
        let c = net.forward(&[spot / strike, maturity, rate, 0.0, vol])?;
        println!(
            "{strike:>5.1} {:>12.6} {:>12.6}",
            scaling.unscale_price(strike, c),
            bs_call(spot, strike, maturity, rate, 0.0, vol)?
        );
    }
    Ok(())
}
