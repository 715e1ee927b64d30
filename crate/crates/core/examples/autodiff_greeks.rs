//! Input derivatives of a network by Taylor-mode autodiff, checked against
//! finite differences. The same machinery gives the price Greeks that enter
//! the no-arbitrage penalty.
//!
//!     cargo run --example autodiff_greeks

use annpricer::dataset::{FEATURE_MATURITY, FEATURE_MONEYNESS, FEATURE_LAST};
use annpricer::net::{batch_matrix, Direction, Network};

fn main() -> annpricer::Result<()> {
    let net = Network::standard(3);
    println!("widths {:?}, {} parameters", net.widths(), net.n_params());

    let x = [1.1, 0.8, 0.02, 0.0, 0.3];
    let dims = [FEATURE_MONEYNESS, FEATURE_MATURITY, FEATURE_LAST];
    let d = net.input_derivs(&x, &dims)?;
    println!("c(x) = {:.10}", d.value);
    for (k, &i) in dims.iter().enumerate() {
        let h = 1e-4;
        let (mut up, mut down) = (x, x);
        up[i] += h;
        down[i] -= h;
        let (fu, f0, fd) = (net.forward(&up)?, net.forward(&x)?, net.forward(&down)?);
        println!(
            "input {i}: d/dx {:+.8e} (fd {:+.8e})  d2/dx2 {:+.8e} (fd {:+.8e})",
            d.first[k],
            (fu - fd) / (2.0 * h),
            d.second[k],
            (fu - 2.0 * f0 + fd) / (h * h)
        );
    }

    // Batched jets along chosen directions, as used during training.
    let rows = [[0.9, 0.5, 0.01, 0.0, 0.2], [1.2, 1.5, 0.03, 0.0, 0.4]];
    let jets = net.jets(
        batch_matrix(rows.into_iter()).view(),
        &[Direction::second(FEATURE_MONEYNESS), Direction::first(FEATURE_MATURITY)],
    )?;
    for i in 0..jets.len() {
        println!(
            "row {i}: c {:.6}  c_mm {:+.6e}  c_T {:+.6e}",
            jets.value[i], jets.second[0][i], jets.first[1][i]
        );
    }
    Ok(())
}
