//! Soft no-arbitrage penalties on the strike/maturity derivatives of a
//! scaled-network price.
//!
//! The network sees `m = S/K` and returns `c`, with the price recovered as
//! `C = K (c + shift + 0.5)`. Writing `g = c + shift + 0.5`:
//!
//! ```text
//! ∂C/∂K   = g - m ∂c/∂m
//! ∂²C/∂K² = (m²/K) ∂²c/∂m²
//! ∂C/∂T   = K ∂c/∂T
//! ```
//!
//! The three normalised violation magnitudes are
//! `[-K² ∂²C/∂K², -T ∂C/∂T, K ∂C/∂K]` (butterfly, calendar, vertical); each
//! is non-negative exactly when its no-arbitrage inequality fails.

use crate::dataset::{FEATURE_MATURITY, FEATURE_MONEYNESS};
use crate::error::{Error, Result};
use crate::net::{Direction, OutputJets};

pub const BUTTERFLY: usize = 0;
pub const CALENDAR: usize = 1;
pub const VERTICAL: usize = 2;
pub const CONDITION_NAMES: [&str; 3] = ["butterfly", "calendar", "vertical"];

/// Derivative directions a direct pricer must supply for the penalties.
pub const PENALTY_DIRECTIONS: [Direction; 2] = [
    Direction {
        input: FEATURE_MONEYNESS,
        second_order: true,
    },
    Direction {
        input: FEATURE_MATURITY,
        second_order: false,
    },
];

/// `0` for `x < 0`, `λ x^m` otherwise. With `m = 0` it counts violations.
pub fn phi(x: f64, lambda: f64, m: u32) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        lambda * x.powi(m as i32)
    }
}

/// Derivative of [`phi`] in `x`; zero below the origin and for `m = 0`.
pub fn phi_derivative(x: f64, lambda: f64, m: u32) -> f64 {
    if x < 0.0 || m == 0 {
        0.0
    } else {
        lambda * m as f64 * x.powi(m as i32 - 1)
    }
}

/// Scales `(λ₁, λ₂, λ₃)` and exponents `(m₁, m₂, m₃)` for the butterfly,
/// calendar and vertical terms, in that order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub lambda: [f64; 3],
    pub power: [u32; 3],
}

impl PenaltyConfig {
    pub fn uniform(lambda: f64, power: u32) -> Self {
        Self {
            lambda: [lambda; 3],
            power: [power; 3],
        }
    }

    /// `(λ, m) = (1, 0)`: one unit per violated condition.
    pub fn counting() -> Self {
        Self::uniform(1.0, 0)
    }

    pub fn is_active(&self) -> bool {
        self.lambda.iter().any(|&l| l > 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config(format!(
                "penalty scales must be finite and non-negative, got {:?}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Training needs a differentiable penalty wherever it is active.
    pub fn validate_for_training(&self) -> Result<()> {
        self.validate()?;
        for (l, m) in self.lambda.iter().zip(self.power) {
            if *l > 0.0 && m < 2 {
                return Err(Error::Config(format!(
                    "penalty exponents must be >= 2 for training, got {:?}",
                    self.power
                )));
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, violations: &[f64; 3]) -> f64 {
        (0..3)
            .map(|i| phi(violations[i], self.lambda[i], self.power[i]))
            .sum()
    }
}

/// Unscaled price and its strike/maturity sensitivities at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceSensitivities {
    pub price: f64,
    pub dc_dk: f64,
    pub d2c_dk2: f64,
    pub dc_dt: f64,
}

impl PriceSensitivities {
    /// `[-K² ∂²C/∂K², -T ∂C/∂T, K ∂C/∂K]`
    pub fn violations(&self, strike: f64, maturity: f64) -> [f64; 3] {
        [
            -strike * strike * self.d2c_dk2,
            -maturity * self.dc_dt,
            strike * self.dc_dk,
        ]
    }
}

/// Chain rule from scaled-network derivatives to price sensitivities.
pub fn price_sensitivities(
    shift: f64,
    strike: f64,
    moneyness: f64,
    c: f64,
    dc_dm: f64,
    d2c_dm2: f64,
    dc_dt: f64,
) -> PriceSensitivities {
    let g = c + shift + 0.5;
    PriceSensitivities {
        price: strike * g,
        dc_dk: g - moneyness * dc_dm,
        d2c_dk2: moneyness * moneyness / strike * d2c_dm2,
        dc_dt: strike * dc_dt,
    }
}

/// Per-row context the penalty needs besides the network jets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyPoint {
    pub strike: f64,
    pub maturity: f64,
    pub moneyness: f64,
}

/// Sum over the batch of squared errors plus penalties, writing adjoints
/// into `adj`. Jets must follow [`PENALTY_DIRECTIONS`].
///
/// Returns `(squared_error_sum, penalty_sum)`.
pub(crate) fn penalized_kernel(
    jets: &OutputJets,
    adj: &mut OutputJets,
    targets: &[f64],
    points: &[PenaltyPoint],
    shift: f64,
    pcfg: &PenaltyConfig,
) -> (f64, f64) {
    let mut sq = 0.0;
    let mut pen = 0.0;
    for b in 0..jets.value.len() {
        let p = points[b];
        let c = jets.value[b];
        let c_m = jets.first[0][b];
        let c_mm = jets.second[0][b];
        let c_t = jets.first[1][b];

        let err = c - targets[b];
        sq += err * err;
        let mut d_c = 2.0 * err;

        let sens = price_sensitivities(shift, p.strike, p.moneyness, c, c_m, c_mm, c_t);
        let v = sens.violations(p.strike, p.maturity);
        pen += pcfg.evaluate(&v);

        let g = [
            phi_derivative(v[BUTTERFLY], pcfg.lambda[0], pcfg.power[0]),
            phi_derivative(v[CALENDAR], pcfg.lambda[1], pcfg.power[1]),
            phi_derivative(v[VERTICAL], pcfg.lambda[2], pcfg.power[2]),
        ];
        // v_bf = -K m² c_mm, v_cal = -T K c_T, v_vert = K (c + shift + 0.5 - m c_m)
        let k = p.strike;
        let m = p.moneyness;
        d_c += g[2] * k;
        adj.value[b] = d_c;
        adj.first[0][b] = -g[2] * k * m;
        adj.second[0][b] = -g[0] * k * m * m;
        adj.first[1][b] = -g[1] * p.maturity * k;
    }
    (sq, pen)
}
