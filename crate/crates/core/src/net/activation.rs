use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Pointwise nonlinearities. Each one is C² on the real line (LeakyReLU only
/// when its slope is 1, i.e. the identity).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu { alpha: f64 },
    Elu { alpha: f64 },
    /// Rational right branch glued to the ELU left branch so that value,
    /// slope and curvature all equal `(0, α, α)` at the origin.
    Melu { alpha: f64 },
    /// `ln(1 + e^z) - 0.5`
    SoftplusShift,
}

impl Activation {
    pub fn melu(alpha: f64) -> Result<Self> {
        let a = Activation::Melu { alpha };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::Melu { alpha } if !(alpha > 0.0 && alpha < 0.5) => Err(Error::Config(
                format!("MELU needs 0 < alpha < 0.5, got {alpha}"),
            )),
            Activation::LeakyRelu { alpha } | Activation::Elu { alpha } if !alpha.is_finite() => {
                Err(Error::Config(format!("activation alpha must be finite, got {alpha}")))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, z: f64) -> f64 {
        self.eval(z)[0]
    }

    /// `[f(z), f'(z), f''(z), f'''(z)]`
    ///
    /// The third derivative is needed when differentiating second-order
    /// input derivatives with respect to the weights.
    #[inline]
    pub fn eval(&self, z: f64) -> [f64; 4] {
        match *self {
            Activation::LeakyRelu { alpha } => {
                if z > 0.0 {
                    [z, 1.0, 0.0, 0.0]
                } else {
                    [alpha * z, alpha, 0.0, 0.0]
                }
            }
            Activation::Elu { alpha } => {
                if z > 0.0 {
                    [z, 1.0, 0.0, 0.0]
                } else {
                    let e = z.exp();
                    [alpha * (e - 1.0), alpha * e, alpha * e, alpha * e]
                }
            }
            Activation::Melu { alpha } => {
                if z > 0.0 {
                    let a = 1.0 - 2.0 * alpha;
                    let b = -2.0 + 1.0 / alpha;
                    // (z²/2 + a z)/(z + b) = z/2 + (a - b/2) - k/(z + b)
                    let k = b * (a - 0.5 * b);
                    let u = z + b;
                    let u2 = u * u;
                    [
                        (0.5 * z * z + a * z) / u,
                        0.5 + k / u2,
                        -2.0 * k / (u2 * u),
                        6.0 * k / (u2 * u2),
                    ]
                } else {
                    let e = z.exp();
                    [alpha * (e - 1.0), alpha * e, alpha * e, alpha * e]
                }
            }
            Activation::SoftplusShift => {
                let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
                let s = sigmoid(z);
                let s1 = s * (1.0 - s);
                [softplus - 0.5, s, s1, s1 * (1.0 - 2.0 * s)]
            }
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Activation::LeakyRelu { .. } => "leaky_relu",
            Activation::Elu { .. } => "elu",
            Activation::Melu { .. } => "melu",
            Activation::SoftplusShift => "softplus_shift",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            Activation::LeakyRelu { alpha }
            | Activation::Elu { alpha }
            | Activation::Melu { alpha } => Some(alpha),
            Activation::SoftplusShift => None,
        }
    }

    /// Rebuilds an activation from its tag and optional `alpha`.
    pub fn from_tag(tag: &str, alpha: Option<f64>) -> Result<Self> {
        let need = |alpha: Option<f64>| {
            alpha.ok_or_else(|| Error::Config(format!("activation '{tag}' needs an alpha")))
        };
        let act = match tag {
            "leaky_relu" => Activation::LeakyRelu { alpha: need(alpha)? },
            "elu" => Activation::Elu { alpha: need(alpha)? },
            "melu" => Activation::Melu { alpha: need(alpha)? },
            "softplus_shift" => Activation::SoftplusShift,
            other => {
                return Err(Error::Config(format!("unknown activation tag '{other}'")));
            }
        };
        act.validate()?;
        Ok(act)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.alpha() {
            Some(a) => write!(f, "{} {:.16e}", self.tag(), a),
            None => write!(f, "{}", self.tag()),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut it = s.split_whitespace();
        let tag = it
            .next()
            .ok_or_else(|| Error::Config("empty activation".into()))?;
        let alpha = match it.next() {
            Some(a) => Some(
                a.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad activation alpha '{a}'")))?,
            ),
            None => None,
        };
        Activation::from_tag(tag, alpha)
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
