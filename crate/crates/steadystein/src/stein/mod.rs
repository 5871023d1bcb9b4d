//! Numerical checks of the Stein-method ingredients: Poisson-equation
//! solutions, gradient bounds, moment bounds and the basic adjoint relation.

mod bounds;
mod gradients;
mod poisson;
mod testfn;

pub use bounds::{
    bar_residual, density_bounds, idle_identity_error, moment_bounds, mgf_check, order_of_magnitude, MgfCheck,
};
pub use gradients::{check_gradient_bounds, GradientSuite};
pub use poisson::{central_window, linspace, solve_poisson, PoissonSolution};
pub use testfn::{PolyPiece, TestFn};

use serde::Serialize;

use crate::models::QueueParams;

/// Outcome of one inequality or identity check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRecord {
    pub suite: String,
    pub check: String,
    pub params: Option<QueueParams>,
    /// Left-hand side at the worst point found.
    pub value: f64,
    /// Right-hand side at that point; absent for monitored quantities.
    pub bound: Option<f64>,
    pub passed: bool,
    /// Location of the worst point, when the check ranges over `x`.
    pub witness: Option<f64>,
    pub detail: Option<String>,
}

impl CheckRecord {
    pub fn inequality(suite: &str, check: &str, params: Option<QueueParams>, value: f64, bound: f64) -> Self {
        CheckRecord {
            suite: suite.into(),
            check: check.into(),
            params,
            value,
            bound: Some(bound),
            passed: value <= bound,
            witness: None,
            detail: None,
        }
    }

    /// As [`CheckRecord::inequality`], allowing `value` to exceed `bound` by a relative `tol`.
    pub fn inequality_rel(suite: &str, check: &str, params: Option<QueueParams>, value: f64, bound: f64, tol: f64) -> Self {
        let mut r = Self::inequality(suite, check, params, value, bound);
        r.passed = value <= bound * (1.0 + tol);
        r
    }

    pub fn monitored(suite: &str, check: &str, params: Option<QueueParams>, value: f64) -> Self {
        CheckRecord {
            suite: suite.into(),
            check: check.into(),
            params,
            value,
            bound: None,
            passed: value.is_finite(),
            witness: None,
            detail: None,
        }
    }

    pub fn with_witness(mut self, x: f64) -> Self {
        self.witness = Some(x);
        self
    }

    pub fn with_detail(mut self, d: impl Into<String>) -> Self {
        self.detail = Some(d.into());
        self
    }

    /// `bound - value`, or `None` for monitored quantities.
    pub fn slack(&self) -> Option<f64> {
        self.bound.map(|b| b - self.value)
    }
}

pub fn all_passed(records: &[CheckRecord]) -> bool {
    records.iter().all(|r| r.passed)
}
