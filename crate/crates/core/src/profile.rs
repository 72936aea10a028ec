//! Analytic test functions used as parameter presets.
//!
//! Presets are referenced by name in configuration files:
//!
//! | name                 | f(x)                                   |
//! |----------------------|----------------------------------------|
//! | `cos_half`           | `cos(pi x / 2)` on `[-1, 1]`, 0 outside |
//! | `cos_half:<a>`       | `a cos(pi x / 2)` on `[-1, 1]`          |
//! | `exp`                | `e^x`                                  |
//! | `one_plus_sin_sq`    | `1 + sin(x)^2`                         |
//! | `one_minus_x_sq`     | `1 - x^2`                              |
//! | `const:<v>`          | `v`                                    |
//! | `quad:<a>:<b>:<c>`   | `a + b x + c x^2`                      |

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::field::ParameterField;
use crate::grid::SpatialGrid;

/// A scalar function with a known derivative.
pub trait Analytic {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;

    fn log_derivative(&self, x: f64) -> f64 {
        self.derivative(x) / self.value(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    CosHalf { amplitude: f64 },
    Exp,
    OnePlusSinSq,
    OneMinusXSq,
    Const(f64),
    Quadratic { c0: f64, c1: f64, c2: f64 },
}

impl Profile {
    pub fn cos_half() -> Self {
        Profile::CosHalf { amplitude: 1.0 }
    }

    pub fn sample(&self, grid: &SpatialGrid) -> ParameterField {
        ParameterField::from_fn(grid, |x| self.value(x))
    }

    pub fn sample_derivative(&self, grid: &SpatialGrid) -> ParameterField {
        ParameterField::from_fn(grid, |x| self.derivative(x))
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            Profile::Const(_) => true,
            Profile::Quadratic { c1, c2, .. } => c1 == 0.0 && c2 == 0.0,
            _ => false,
        }
    }
}

impl Analytic for Profile {
    fn value(&self, x: f64) -> f64 {
        match *self {
            Profile::CosHalf { amplitude } => {
                if x.abs() <= 1.0 {
                    amplitude * (FRAC_PI_2 * x).cos()
                } else {
                    0.0
                }
            }
            Profile::Exp => x.exp(),
            Profile::OnePlusSinSq => 1.0 + x.sin().powi(2),
            Profile::OneMinusXSq => 1.0 - x * x,
            Profile::Const(v) => v,
            Profile::Quadratic { c0, c1, c2 } => c0 + x * (c1 + x * c2),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match *self {
            Profile::CosHalf { amplitude } => {
                if x.abs() <= 1.0 {
                    -amplitude * FRAC_PI_2 * (FRAC_PI_2 * x).sin()
                } else {
                    0.0
                }
            }
            Profile::Exp => x.exp(),
            Profile::OnePlusSinSq => (2.0 * x).sin(),
            Profile::OneMinusXSq => -2.0 * x,
            Profile::Const(_) => 0.0,
            Profile::Quadratic { c1, c2, .. } => c1 + 2.0 * c2 * x,
        }
    }

    fn log_derivative(&self, x: f64) -> f64 {
        match *self {
            // avoids the cancellation in sin/cos near the support boundary
            Profile::CosHalf { .. } if x.abs() < 1.0 => -FRAC_PI_2 * (FRAC_PI_2 * x).tan(),
            _ => self.derivative(x) / self.value(x),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Profile::CosHalf { amplitude: 1.0 } => write!(f, "cos_half"),
            Profile::CosHalf { amplitude } => write!(f, "cos_half:{amplitude}"),
            Profile::Exp => write!(f, "exp"),
            Profile::OnePlusSinSq => write!(f, "one_plus_sin_sq"),
            Profile::OneMinusXSq => write!(f, "one_minus_x_sq"),
            Profile::Const(v) => write!(f, "const:{v}"),
            Profile::Quadratic { c0, c1, c2 } => write!(f, "quad:{c0}:{c1}:{c2}"),
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let name = parts.next().unwrap_or_default();
        let args = parts
            .map(|a| {
                a.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::InvalidArgument(format!("bad numeric argument `{a}` in preset `{s}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let profile = match (name, args.as_slice()) {
            ("cos_half", []) => Profile::cos_half(),
            ("cos_half", [a]) => Profile::CosHalf { amplitude: *a },
            ("exp", []) => Profile::Exp,
            ("one_plus_sin_sq", []) => Profile::OnePlusSinSq,
            ("one_minus_x_sq", []) => Profile::OneMinusXSq,
            ("const", [v]) => Profile::Const(*v),
            ("quad", [c0, c1, c2]) => Profile::Quadratic {
                c0: *c0,
                c1: *c1,
                c2: *c2,
            },
            _ => return Err(Error::InvalidArgument(format!("unknown preset `{s}`"))),
        };
        Ok(profile)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for s in [
            "cos_half",
            "cos_half:0.25",
            "exp",
            "one_plus_sin_sq",
            "one_minus_x_sq",
            "const:1.5",
            "quad:1:0:2.5",
        ] {
            let p: Profile = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!("cosine".parse::<Profile>().is_err());
        assert!("const".parse::<Profile>().is_err());
        assert!("const:abc".parse::<Profile>().is_err());
        assert!("quad:1:2".parse::<Profile>().is_err());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let eps = 1e-6;
        for p in [
            Profile::cos_half(),
            Profile::Exp,
            Profile::OnePlusSinSq,
            Profile::OneMinusXSq,
            Profile::Const(2.0),
            Profile::Quadratic {
                c0: 1.0,
                c1: -0.5,
                c2: 3.0,
            },
        ] {
            for x in [-0.7, -0.1, 0.0, 0.3, 0.9] {
                let fd = (p.value(x + eps) - p.value(x - eps)) / (2.0 * eps);
                assert!((fd - p.derivative(x)).abs() < 1e-7, "{p} at {x}");
            }
        }
    }

    #[test]
    fn cos_half_vanishes_outside_support() {
        let p = Profile::cos_half();
        assert_eq!(p.value(1.5), 0.0);
        assert!(p.value(1.0).abs() < 1e-15);
        let x = 0.4;
        assert!((p.log_derivative(x) - p.derivative(x) / p.value(x)).abs() < 1e-12);
    }
}
