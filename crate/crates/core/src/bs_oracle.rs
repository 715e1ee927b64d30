//! Closed-form Black-Scholes pricing for European calls with a continuous
//! dividend yield, the analytic sensitivities used by the no-arbitrage
//! conditions, and a safeguarded implied-volatility solver.
//!
//! Everything downstream (data generation, audits, acceptance checks) treats
//! these functions as ground truth, so the normal CDF is evaluated through
//! `erfc` to full double precision rather than a polynomial fit.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Below this total volatility the price collapses to discounted intrinsic value.
const MIN_TOTAL_VOL: f64 = 1e-10;

/// Newton falls back to bisection once vega drops below this.
const MIN_NEWTON_VEGA: f64 = 1e-12;

/// One market/model record: inputs of the Black-Scholes formula plus its call price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionSample {
    pub spot: f64,
    pub strike: f64,
    pub maturity: f64,
    pub rate: f64,
    pub dividend: f64,
    pub vol: f64,
    pub call: f64,
}

impl OptionSample {
    /// Builds a sample whose `call` field is the oracle price of the inputs.
    pub fn priced(
        spot: f64,
        strike: f64,
        maturity: f64,
        rate: f64,
        dividend: f64,
        vol: f64,
    ) -> Result<Self> {
        let call = bs_call(spot, strike, maturity, rate, dividend, vol)?;
        Ok(Self {
            spot,
            strike,
            maturity,
            rate,
            dividend,
            vol,
            call,
        })
    }

    pub fn moneyness(&self) -> f64 {
        self.spot / self.strike
    }

    pub fn greeks(&self) -> Result<Greeks> {
        bs_greeks(
            self.spot,
            self.strike,
            self.maturity,
            self.rate,
            self.dividend,
            self.vol,
        )
    }

    /// Lower and upper no-arbitrage bounds for a call on these inputs.
    pub fn call_bounds(&self) -> (f64, f64) {
        call_bounds(
            self.spot,
            self.strike,
            self.maturity,
            self.rate,
            self.dividend,
        )
    }
}

/// Price and the sensitivities that enter the static no-arbitrage conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Greeks {
    pub price: f64,
    /// ∂C/∂S
    pub delta: f64,
    /// ∂C/∂σ
    pub vega: f64,
    /// ∂C/∂T
    pub dc_dt: f64,
    /// ∂C/∂K
    pub dc_dk: f64,
    /// ∂²C/∂K²
    pub d2c_dk2: f64,
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, `N(x) = erfc(-x/√2)/2`.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Inverse of [`norm_cdf`] on the open unit interval.
pub fn norm_cdf_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "norm_cdf_inv needs 0 < p < 1, got {p}"
        )));
    }
    Ok(inverse_normal(p))
}

// Acklam's rational approximation (relative error ~1e-9) polished with two
// Halley steps against the erfc-based CDF.
fn inverse_normal(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const P_LOW: f64 = 0.02425;

    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    for _ in 0..2 {
        // Work with the smaller tail to keep the residual well conditioned.
        let e = if x < 0.0 {
            norm_cdf(x) - p
        } else {
            (1.0 - p) - norm_cdf(-x)
        };
        let pdf = norm_pdf(x);
        if pdf == 0.0 {
            break;
        }
        let u = e / pdf;
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

fn check_inputs(spot: f64, strike: f64, maturity: f64, rate: f64, dividend: f64, vol: f64) -> Result<()> {
    let positive = [("spot", spot), ("strike", strike), ("maturity", maturity), ("vol", vol)];
    for (name, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
        }
    }
    if !rate.is_finite() || !dividend.is_finite() {
        return Err(Error::Domain(format!(
            "rate and dividend must be finite, got r={rate}, q={dividend}"
        )));
    }
    Ok(())
}

/// `(max(S e^{-qT} - K e^{-rT}, 0), S e^{-qT})`
pub fn call_bounds(spot: f64, strike: f64, maturity: f64, rate: f64, dividend: f64) -> (f64, f64) {
    let fwd_spot = spot * (-dividend * maturity).exp();
    let pv_strike = strike * (-rate * maturity).exp();
    ((fwd_spot - pv_strike).max(0.0), fwd_spot)
}

struct D12 {
    d1: f64,
    d2: f64,
    total_vol: f64,
    disc_spot: f64,
    disc_strike: f64,
}

fn d12(spot: f64, strike: f64, maturity: f64, rate: f64, dividend: f64, vol: f64) -> D12 {
    let total_vol = vol * maturity.sqrt();
    let d1 = ((spot / strike).ln() + (rate - dividend + 0.5 * vol * vol) * maturity) / total_vol;
    D12 {
        d1,
        d2: d1 - total_vol,
        total_vol,
        disc_spot: spot * (-dividend * maturity).exp(),
        disc_strike: strike * (-rate * maturity).exp(),
    }
}

pub fn bs_call(spot: f64, strike: f64, maturity: f64, rate: f64, dividend: f64, vol: f64) -> Result<f64> {
    check_inputs(spot, strike, maturity, rate, dividend, vol)?;
    if vol * maturity.sqrt() < MIN_TOTAL_VOL {
        return Ok(call_bounds(spot, strike, maturity, rate, dividend).0);
    }
    let d = d12(spot, strike, maturity, rate, dividend, vol);
    let price = d.disc_spot * norm_cdf(d.d1) - d.disc_strike * norm_cdf(d.d2);
    Ok(price.max(0.0))
}

pub fn bs_put(spot: f64, strike: f64, maturity: f64, rate: f64, dividend: f64, vol: f64) -> Result<f64> {
    check_inputs(spot, strike, maturity, rate, dividend, vol)?;
    if vol * maturity.sqrt() < MIN_TOTAL_VOL {
        let fwd_spot = spot * (-dividend * maturity).exp();
        let pv_strike = strike * (-rate * maturity).exp();
        return Ok((pv_strike - fwd_spot).max(0.0));
    }
    let d = d12(spot, strike, maturity, rate, dividend, vol);
    let price = d.disc_strike * norm_cdf(-d.d2) - d.disc_spot * norm_cdf(-d.d1);
    Ok(price.max(0.0))
}

pub fn bs_greeks(
    spot: f64,
    strike: f64,
    maturity: f64,
    rate: f64,
    dividend: f64,
    vol: f64,
) -> Result<Greeks> {
    check_inputs(spot, strike, maturity, rate, dividend, vol)?;
    let price = bs_call(spot, strike, maturity, rate, dividend, vol)?;
    if vol * maturity.sqrt() < MIN_TOTAL_VOL {
        let disc_spot = spot * (-dividend * maturity).exp();
        let disc_strike = strike * (-rate * maturity).exp();
        let itm = if disc_spot > disc_strike { 1.0 } else { 0.0 };
        return Ok(Greeks {
            price,
            delta: itm * (-dividend * maturity).exp(),
            vega: 0.0,
            dc_dt: itm * (rate * disc_strike - dividend * disc_spot),
            dc_dk: -itm * (-rate * maturity).exp(),
            d2c_dk2: positive(0.0),
        });
    }
    let d = d12(spot, strike, maturity, rate, dividend, vol);
    let nd1 = norm_cdf(d.d1);
    let nd2 = norm_cdf(d.d2);
    let pdf1 = norm_pdf(d.d1);
    let pdf2 = norm_pdf(d.d2);
    let sqrt_t = maturity.sqrt();
    Ok(Greeks {
        price,
        delta: (-dividend * maturity).exp() * nd1,
        vega: d.disc_spot * pdf1 * sqrt_t,
        dc_dt: d.disc_spot * pdf1 * vol / (2.0 * sqrt_t) - dividend * d.disc_spot * nd1
            + rate * d.disc_strike * nd2,
        dc_dk: -(-rate * maturity).exp() * nd2,
        d2c_dk2: positive((-rate * maturity).exp() * pdf2 / (strike * d.total_vol)),
    })
}

/// The strike convexity is strictly positive but underflows far from the
/// money at small `σ√T`; keeping the smallest positive double preserves its
/// sign for the no-arbitrage checks.
fn positive(v: f64) -> f64 {
    v.max(f64::from_bits(1))
}

thread_local! {
    static SOLVES_ON_THREAD: std::cell::Cell<u64> = const { std::cell::Cell::new(0) };
}

/// Calls to [`implied_vol`] made so far on the calling thread.
pub fn implied_vol_calls_on_thread() -> u64 {
    SOLVES_ON_THREAD.with(std::cell::Cell::get)
}

/// Volatility reproducing `target` under [`bs_call`].
///
/// The root is bracketed first (price is increasing in σ), then refined with
/// Newton steps that are rejected in favour of bisection whenever they leave
/// the bracket or vega is too small to trust.
pub fn implied_vol(
    spot: f64,
    strike: f64,
    maturity: f64,
    rate: f64,
    dividend: f64,
    target: f64,
) -> Result<f64> {
    check_inputs(spot, strike, maturity, rate, dividend, 1.0)?;
    SOLVES_ON_THREAD.with(|c| c.set(c.get() + 1));
    let (lower, upper) = call_bounds(spot, strike, maturity, rate, dividend);
    if !(target > lower && target < upper) {
        return Err(Error::NoSolution(format!(
            "price {target} outside open bounds ({lower}, {upper})"
        )));
    }
    let price = |vol: f64| bs_call(spot, strike, maturity, rate, dividend, vol);

    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while price(hi)? <= target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::NoSolution(format!(
                "price {target} too close to the upper bound {upper}"
            )));
        }
    }

    let mut vol = 0.5 * (lo + hi);
    for _ in 0..300 {
        let g = bs_greeks(spot, strike, maturity, rate, dividend, vol)?;
        let diff = g.price - target;
        if diff.abs() <= 2.0 * f64::EPSILON * target {
            return Ok(vol);
        }
        if diff > 0.0 {
            hi = vol;
        } else {
            lo = vol;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let newton = vol - diff / g.vega;
        vol = if g.vega > MIN_NEWTON_VEGA && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(vol)
}
