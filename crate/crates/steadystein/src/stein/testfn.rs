use serde::Serialize;

use crate::error::{Error, Result};

/// Piecewise-polynomial test functions for the Poisson equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFn {
    /// `slope * x + intercept`
    Linear { slope: f64, intercept: f64 },
    /// `|x - c|`
    Abs { c: f64 },
    /// `x` clamped to `[lo, hi]`
    Clamp { lo: f64, hi: f64 },
    /// `1{x <= a}`
    Indicator { a: f64 },
    /// `x^m`
    Monomial { m: u32 },
}

/// `(lo, hi, coefficients in increasing degree)`.
pub type PolyPiece = (f64, f64, Vec<f64>);

impl TestFn {
    pub fn identity() -> Self {
        TestFn::Linear { slope: 1.0, intercept: 0.0 }
    }

    /// The sampled Lip(1) family.
    pub fn lipschitz_family() -> Vec<TestFn> {
        vec![
            TestFn::identity(),
            TestFn::Linear { slope: -1.0, intercept: 0.0 },
            TestFn::Abs { c: -1.0 },
            TestFn::Abs { c: 0.0 },
            TestFn::Abs { c: 1.0 },
            TestFn::Clamp { lo: -2.0, hi: 2.0 },
        ]
    }

    pub fn label(&self) -> String {
        match self {
            TestFn::Linear { slope, intercept } => format!("linear({slope},{intercept})"),
            TestFn::Abs { c } => format!("abs({c})"),
            TestFn::Clamp { lo, hi } => format!("clamp({lo},{hi})"),
            TestFn::Indicator { a } => format!("indicator({a})"),
            TestFn::Monomial { m } => format!("monomial({m})"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TestFn::Linear { slope, intercept } => slope.is_finite() && intercept.is_finite(),
            TestFn::Abs { c } => c.is_finite(),
            TestFn::Clamp { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            TestFn::Indicator { a } => a.is_finite(),
            TestFn::Monomial { m } => m <= crate::diffusion::MAX_MOMENT,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("bad test function {self:?}")))
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFn::Linear { slope, intercept } => slope * x + intercept,
            TestFn::Abs { c } => (x - c).abs(),
            TestFn::Clamp { lo, hi } => x.clamp(lo, hi),
            TestFn::Indicator { a } => {
                if x <= a {
                    1.0
                } else {
                    0.0
                }
            }
            TestFn::Monomial { m } => x.powi(m as i32),
        }
    }

    /// `h'(x)`, zero where `h` jumps.
    pub fn deriv(&self, x: f64) -> f64 {
        match *self {
            TestFn::Linear { slope, .. } => slope,
            TestFn::Abs { c } => {
                if x >= c {
                    1.0
                } else {
                    -1.0
                }
            }
            TestFn::Clamp { lo, hi } => {
                if x > lo && x < hi {
                    1.0
                } else {
                    0.0
                }
            }
            TestFn::Indicator { .. } => 0.0,
            TestFn::Monomial { m } => {
                if m == 0 {
                    0.0
                } else {
                    m as f64 * x.powi(m as i32 - 1)
                }
            }
        }
    }

    /// Points where `h` or `h'` is discontinuous.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            TestFn::Abs { c } => vec![c],
            TestFn::Clamp { lo, hi } => vec![lo, hi],
            TestFn::Indicator { a } => vec![a],
            _ => Vec::new(),
        }
    }

    pub fn pieces(&self) -> Vec<PolyPiece> {
        let ninf = f64::NEG_INFINITY;
        let inf = f64::INFINITY;
        match *self {
            TestFn::Linear { slope, intercept } => vec![(ninf, inf, vec![intercept, slope])],
            TestFn::Abs { c } => vec![(ninf, c, vec![c, -1.0]), (c, inf, vec![-c, 1.0])],
            TestFn::Clamp { lo, hi } => vec![(ninf, lo, vec![lo]), (lo, hi, vec![0.0, 1.0]), (hi, inf, vec![hi])],
            TestFn::Indicator { a } => vec![(ninf, a, vec![1.0])],
            TestFn::Monomial { m } => {
                let mut c = vec![0.0; m as usize + 1];
                c[m as usize] = 1.0;
                vec![(ninf, inf, c)]
            }
        }
    }
}
