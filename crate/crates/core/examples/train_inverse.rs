//! Train the inverse map (inputs and price to volatility) and recover σ.
//!
//!     cargo run --release --example train_inverse -- 40000 10

use annpricer::bs_oracle::implied_vol;
use annpricer::calibrator::{predict_params, train_inverse, Quote, QuoteSet};
use annpricer::dataset::{generate, split, SamplingRanges, DEFAULT_EPS_ATM};
use annpricer::net::Network;
use annpricer::trainer::TrainConfig;

fn main() -> annpricer::Result<()> {
    let _ = env_logger::builder().filter_level(log::LevelFilter::Info).try_init();
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(40_000);
    let epochs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);

    let ds = split(generate(n, &SamplingRanges::default(), 11)?, 0.8, 11)?;
    let mut net = Network::standard(11);
    // Clipping and the plateau schedule are on by default for this map.
    let cfg = TrainConfig { epochs, ..TrainConfig::inverse_default() };
    let report = train_inverse(&mut net, &ds, &cfg, DEFAULT_EPS_ATM)?;
    let test = report.test.expect("split has a test part");
    println!("out-of-sample mse {:.4} bps in scaled-y units", test.mse_bps);

    let sample: Vec<_> = ds.test().into_iter().take(8).collect();
    let quotes = QuoteSet {
        quotes: sample
            .iter()
            .map(|s| Quote {
                spot: s.spot,
                rate: s.rate,
                dividend: s.dividend,
                maturity: s.maturity,
                strike: s.strike,
                price: s.call,
                weight: 1.0,
            })
            .collect(),
    };
    println!("{:>7} {:>7} {:>9} {:>9} {:>9}", "m", "T", "sigma", "network", "implied");
    for (s, p) in sample.iter().zip(predict_params(&net, &quotes)?) {
        let iv = implied_vol(s.spot, s.strike, s.maturity, s.rate, s.dividend, s.call)
            .map(|v| format!("{v:.5}"))
            .unwrap_or_else(|_| "-".into());
        let vol = p.vol.map(|v| format!("{v:.5}")).unwrap_or_else(|| "-".into());
        println!("{:>7.4} {:>7.4} {:>9.5} {vol:>9} {iv:>9}", s.moneyness(), s.maturity, s.vol);
    }
    Ok(())
}
