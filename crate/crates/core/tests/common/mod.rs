//! Independent oracles shared by the integration suites and the acceptance run.
#![allow(dead_code)]

use annpricer::bs_oracle::{bs_call, bs_greeks, bs_put, call_bounds, implied_vol};
use annpricer::dataset::{SamplingRanges, ScaledRow, Scaling, PRICE_CAP, PRICE_FLOOR};
use annpricer::net::{batch_matrix, grad_params, Activation, Network};
use annpricer::trainer::{penalized_loss, penalized_loss_and_grad, PenaltyConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = std::result::Result<(), String>;

/// erf from its Maclaurin series for small arguments and the Laplace
/// continued fraction for erfc beyond that.
pub fn erf_reference(x: f64) -> f64 {
    let a = x.abs();
    let v = if a < 2.5 {
        let mut term = a;
        let mut sum = a;
        let mut n = 0.0;
        while term.abs() > 1e-18 * sum.abs() {
            n += 1.0;
            term *= -a * a / n;
            sum += term / (2.0 * n + 1.0);
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    } else {
        // erfc(a) = e^{-a²}/√π / (a + (1/2)/(a + 1/(a + (3/2)/(a + ...)))), from the tail up.
        let mut f = a;
        for k in (1..200).rev() {
            f = a + (k as f64 / 2.0) / f;
        }
        1.0 - (-a * a).exp() / std::f64::consts::PI.sqrt() / f
    };
    v.copysign(x)
}

pub fn cdf_reference(x: f64) -> f64 {
    0.5 * (1.0 + erf_reference(x / std::f64::consts::SQRT_2))
}

pub fn call_reference(s: f64, k: f64, t: f64, r: f64, q: f64, v: f64) -> f64 {
    let sd = v * t.sqrt();
    let d1 = ((s / k).ln() + (r - q + 0.5 * v * v) * t) / sd;
    let d2 = d1 - sd;
    s * (-q * t).exp() * cdf_reference(d1) - k * (-r * t).exp() * cdf_reference(d2)
}

#[derive(Debug, Clone, Copy)]
pub struct Draw {
    pub s: f64,
    pub k: f64,
    pub t: f64,
    pub r: f64,
    pub q: f64,
    pub v: f64,
}

/// Draws over the default sampling box, with a non-zero dividend range so
/// that the carry terms are exercised too.
pub fn draws(n: usize, seed: u64) -> Vec<Draw> {
    let b = SamplingRanges::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Draw {
            s: rng.gen_range(b.spot.lower..b.spot.upper),
            k: rng.gen_range(b.strike.lower..b.strike.upper),
            t: rng.gen_range(b.maturity.lower..b.maturity.upper),
            r: rng.gen_range(b.rate.lower..b.rate.upper),
            q: rng.gen_range(0.0..0.03),
            v: rng.gen_range(b.vol.lower..b.vol.upper),
        })
        .collect()
}

fn close_to(what: &str, d: Draw, analytic: f64, reference: f64, rel: f64, abs: f64) -> Check {
    let tol = rel * analytic.abs().max(reference.abs()) + abs;
    if (analytic - reference).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what} at {d:?}: {analytic:e} vs {reference:e}"))
    }
}

fn call(d: Draw) -> f64 {
    bs_call(d.s, d.k, d.t, d.r, d.q, d.v).unwrap()
}

pub fn check_call_reference(d: Draw) -> Check {
    close_to("call", d, call(d), call_reference(d.s, d.k, d.t, d.r, d.q, d.v), 1e-10, 1e-12)
}

pub fn check_parity(d: Draw) -> Check {
    let p = bs_put(d.s, d.k, d.t, d.r, d.q, d.v).map_err(|e| e.to_string())?;
    let forward = d.s * (-d.q * d.t).exp() - d.k * (-d.r * d.t).exp();
    close_to("parity", d, call(d) - p, forward, 0.0, 1e-12 * d.s.max(d.k))
}

/// Greeks against fourth-order central differences at 1e-6 relative; the
/// absolute floors sit at the rounding level of each quotient.
pub fn check_greeks(d: Draw) -> Check {
    let g = bs_greeks(d.s, d.k, d.t, d.r, d.q, d.v).map_err(|e| e.to_string())?;
    let c = |s: f64, k: f64, t: f64, v: f64| bs_call(s, k, t, d.r, d.q, v).unwrap();
    let fd = |f: &dyn Fn(f64) -> f64, x: f64, h: f64| {
        (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
    };
    let fd2 = |f: &dyn Fn(f64) -> f64, x: f64, h: f64| {
        (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h)) / (12.0 * h * h)
    };
    close_to("delta", d, g.delta, fd(&|s| c(s, d.k, d.t, d.v), d.s, 1e-3), 1e-6, 1e-11)?;
    close_to("vega", d, g.vega, fd(&|v| c(d.s, d.k, d.t, v), d.v, 1e-4), 1e-6, 1e-10)?;
    close_to("dC/dT", d, g.dc_dt, fd(&|t| c(d.s, d.k, t, d.v), d.t, 1e-4 * d.t), 1e-6, 1e-9)?;
    close_to("dC/dK", d, g.dc_dk, fd(&|k| c(d.s, k, d.t, d.v), d.k, 1e-3), 1e-6, 1e-11)?;
    close_to("d2C/dK2", d, g.d2c_dk2, fd2(&|k| c(d.s, k, d.t, d.v), d.k, 2e-2), 1e-6, 1e-10)
}

/// Inside the dataset's price window and strictly inside the no-arbitrage
/// bounds; deep in the money at low volatility the time value can round to
/// nothing, and then no volatility reproduces the price.
pub fn invertible(d: Draw) -> bool {
    let c = call(d);
    let (lo, hi) = call_bounds(d.s, d.k, d.t, d.r, d.q);
    (PRICE_FLOOR..=PRICE_CAP).contains(&c) && c > lo && c < hi
}

/// Round trip at 1e-8 relative. A few ulp of rounding in the price move the
/// root by about ε·C/vega; where that exceeds 1e-8 the bound is that floor.
/// Returns whether the draw was held to the 1e-8 bound itself.
pub fn check_round_trip(d: Draw) -> std::result::Result<bool, String> {
    let c = call(d);
    let g = bs_greeks(d.s, d.k, d.t, d.r, d.q, d.v).map_err(|e| e.to_string())?;
    let iv = implied_vol(d.s, d.k, d.t, d.r, d.q, c).map_err(|e| format!("{d:?}: {e}"))?;
    let conditioning = 16.0 * f64::EPSILON * c / (g.vega * d.v);
    let tol = 1e-8_f64.max(conditioning);
    if (iv - d.v).abs() <= tol * d.v {
        Ok(conditioning <= 1e-8)
    } else {
        Err(format!("{d:?}: implied {iv} vs {}", d.v))
    }
}

fn random_activation(rng: &mut ChaCha8Rng) -> Activation {
    match rng.gen_range(0..4) {
        0 => Activation::LeakyRelu { alpha: 1.0 },
        1 => Activation::Elu {
            alpha: rng.gen_range(0.2..1.5),
        },
        2 => Activation::Melu {
            alpha: rng.gen_range(0.1..0.49),
        },
        _ => Activation::SoftplusShift,
    }
}

/// A small network with 1-3 hidden layers of width 2-6 and mixed activations.
pub fn random_net(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(1..=3);
    let mut widths = vec![5];
    let mut acts = Vec::new();
    for _ in 0..depth {
        widths.push(rng.gen_range(2..=6));
        acts.push(random_activation(&mut rng));
    }
    widths.push(1);
    acts.push(Activation::SoftplusShift);
    let mut net = Network::new(widths, acts, seed).unwrap();
    // Non-zero biases so every activation branch is exercised.
    for p in net.params_mut() {
        *p += rng.gen_range(-0.3..0.3);
    }
    net
}

pub fn random_rows(seed: u64, n: usize) -> Vec<ScaledRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    (0..n)
        .map(|i| {
            let strike = rng.gen_range(8.0..24.0);
            let maturity = rng.gen_range(0.05..2.5);
            ScaledRow {
                features: [
                    rng.gen_range(0.5..1.8),
                    maturity,
                    rng.gen_range(0.0..0.05),
                    0.0,
                    rng.gen_range(0.05..0.8),
                ],
                target: rng.gen_range(-0.5..0.5),
                strike,
                maturity,
                source: i,
            }
        })
        .collect()
}

/// Relative agreement with an absolute floor tied to the gradient's scale.
pub fn close(analytic: &[f64], fd: &[f64], rel: f64) -> Check {
    let scale = fd.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    for (i, (a, b)) in analytic.iter().zip(fd).enumerate() {
        let tol = rel * a.abs().max(b.abs()) + 1e-7 * scale.max(1e-3);
        if (a - b).abs() > tol {
            return Err(format!("component {i}: analytic {a:e} vs finite difference {b:e}"));
        }
    }
    Ok(())
}

pub fn fd_gradient(net: &Network, f: impl Fn(&Network) -> f64) -> Vec<f64> {
    let mut probe = net.clone();
    (0..net.n_params())
        .map(|i| {
            let p = net.params()[i];
            let h = 1e-5 * p.abs().max(1.0);
            probe.params_mut()[i] = p + h;
            let up = f(&probe);
            probe.params_mut()[i] = p - h;
            let down = f(&probe);
            probe.params_mut()[i] = p;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn check_grad_params(seed: u64) -> Check {
    let net = random_net(seed);
    let rows = random_rows(seed, 5);
    let inputs = batch_matrix(rows.iter().map(|r| r.features));
    let targets: Vec<f64> = rows.iter().map(|r| r.target).collect();
    let (_, grad) = grad_params(&net, inputs.view(), &targets).map_err(|e| e.to_string())?;
    let fd = fd_gradient(&net, |n| grad_params(n, inputs.view(), &targets).unwrap().0);
    close(&grad, &fd, 1e-4)
}

pub fn check_input_derivs(seed: u64) -> Check {
    let net = random_net(seed);
    let x = random_rows(seed, 1)[0].features;
    let dims = [0, 1, 2, 3, 4];
    let d = net.input_derivs(&x, &dims).map_err(|e| e.to_string())?;
    let f = |x: &[f64]| net.forward(x).unwrap();
    let mut first = Vec::new();
    let mut second = Vec::new();
    for &i in &dims {
        let h = 1e-4;
        let mut up = x;
        up[i] += h;
        let mut down = x;
        down[i] -= h;
        first.push((f(&up) - f(&down)) / (2.0 * h));
        second.push((f(&up) - 2.0 * f(&x) + f(&down)) / (h * h));
    }
    close(&d.first, &first, 1e-5)?;
    // The second difference quotient carries ~1e-8 of rounding noise.
    for (a, b) in d.second.iter().zip(&second) {
        if (a - b).abs() > 1e-4 * a.abs().max(b.abs()) + 1e-6 {
            return Err(format!("second derivative {a:e} vs {b:e}"));
        }
    }
    Ok(())
}

pub fn check_penalty_grad(seed: u64) -> Check {
    let net = random_net(seed);
    let rows = random_rows(seed, 6);
    let scaling = Scaling::Direct { shift: 1e-3 };
    let pcfg = PenaltyConfig {
        lambda: [1.0, 0.5, 2.0],
        power: [4, 3, 4],
    };
    let (loss, grad) =
        penalized_loss_and_grad(&net, &rows, scaling, Some(&pcfg)).map_err(|e| e.to_string())?;
    let forward = penalized_loss(&net, &rows, scaling, Some(&pcfg)).map_err(|e| e.to_string())?;
    if (loss.total - forward.total).abs() > 1e-12 * forward.total.abs().max(1.0) {
        return Err(format!("loss {} vs forward pass {}", loss.total, forward.total));
    }
    let fd = fd_gradient(&net, |n| penalized_loss(n, &rows, scaling, Some(&pcfg)).unwrap().total);
    close(&grad, &fd, 1e-4)
}
