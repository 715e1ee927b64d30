//! Closed-form prices, Greeks and implied volatility.
//!
//!     cargo run --example pricing_greeks

use annpricer::bs_oracle::{bs_call, bs_put, implied_vol, OptionSample};

fn main() -> annpricer::Result<()> {
    let (spot, rate, dividend, maturity, vol) = (16.0, 0.02, 0.01, 0.75, 0.3);
    println!("{:>6} {:>10} {:>10} {:>9} {:>9} {:>10} {:>10}", "K", "call", "put", "delta", "vega", "dC/dK", "d2C/dK2");
    for strike in [12.0, 14.0, 16.0, 18.0, 20.0] {
        let g = OptionSample::priced(spot, strike, maturity, rate, dividend, vol)?.greeks()?;
        println!(
            "{strike:>6.1} {:>10.6} {:>10.6} {:>9.5} {:>9.5} {:>10.6} {:>10.6}",
            g.price,
            bs_put(spot, strike, maturity, rate, dividend, vol)?,
            g.delta,
            g.vega,
            g.dc_dk,
            g.d2c_dk2
        );
    }

    let quote = bs_call(spot, 17.0, maturity, rate, dividend, 0.42)?;
    let iv = implied_vol(spot, 17.0, maturity, rate, dividend, quote)?;
    println!("\nprice {quote:.8} at K=17 implies sigma = {iv:.12}");

    // Prices outside the no-arbitrage bounds have no implied volatility.
    match implied_vol(spot, 17.0, maturity, rate, dividend, spot) {
        Ok(v) => println!("unexpected solution {v}"),
        Err(e) => println!("price = spot: {e}"),
    }
    Ok(())
}
