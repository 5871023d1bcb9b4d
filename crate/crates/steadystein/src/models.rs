//! Queue parameterizations and the drift / diffusion coefficients of the
//! scaled customer-count process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which diffusion coefficient to pair with the drift.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `a(x) = 2 mu` everywhere.
    Constant,
    /// `a(x)` matched to the infinitesimal variance of the chain.
    StateDependent,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Constant, Mode::StateDependent];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Constant => "constant",
            Mode::StateDependent => "state_dependent",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" | "c" => Ok(Mode::Constant),
            "state_dependent" | "state-dependent" | "statedep" | "s" => Ok(Mode::StateDependent),
            _ => Err(Error::InvalidParam(format!("unknown mode '{s}'"))),
        }
    }
}

/// Erlang-C (`alpha = 0`) or Erlang-A queue with all derived scalars cached.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QueueParams {
    lambda: f64,
    mu: f64,
    n: u64,
    alpha: f64,
    r: f64,
    delta: f64,
    rho: f64,
    x_fluid: f64,
    zeta: f64,
}

impl QueueParams {
    pub fn new(lambda: f64, mu: f64, n: u64, alpha: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParam(format!("lambda must be positive, got {lambda}")));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidParam(format!("mu must be positive, got {mu}")));
        }
        if n == 0 {
            return Err(Error::InvalidParam("n must be at least 1".into()));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidParam(format!("alpha must be non-negative, got {alpha}")));
        }
        let r = lambda / mu;
        let nf = n as f64;
        if alpha == 0.0 && r >= nf {
            return Err(Error::Stability { r, n });
        }
        let x_fluid = if r >= nf { nf + (lambda - nf * mu) / alpha } else { r };
        let delta = 1.0 / r.sqrt();
        Ok(QueueParams {
            lambda,
            mu,
            n,
            alpha,
            r,
            delta,
            rho: r / nf,
            x_fluid,
            zeta: delta * (x_fluid - nf),
        })
    }

    pub fn erlang_c(lambda: f64, mu: f64, n: u64) -> Result<Self> {
        Self::new(lambda, mu, n, 0.0)
    }

    /// Unit service rate, `lambda = R`.
    pub fn with_load(r: f64, n: u64, alpha: f64) -> Result<Self> {
        Self::new(r, 1.0, n, alpha)
    }

    /// Square-root staffing `n = ceil(R + beta sqrt(R))`.
    pub fn halfin_whitt(r: f64, beta: f64, alpha: f64) -> Result<Self> {
        let n = (r + beta * r.sqrt()).ceil().max(1.0) as u64;
        Self::new(r, 1.0, n, alpha)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_erlang_c(&self) -> bool {
        self.alpha == 0.0
    }

    /// Offered load `R = lambda / mu`.
    pub fn offered_load(&self) -> f64 {
        self.r
    }

    /// Spatial scale `1/sqrt(R)` used for the single-station models.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Spatial scale `1/sqrt(lambda)` used for the phase-type models.
    /// Coincides with [`delta`](Self::delta) only when `mu = 1`.
    pub fn delta_arrival(&self) -> f64 {
        1.0 / self.lambda.sqrt()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `beta` in `n = R + beta sqrt(R)`.
    pub fn beta(&self) -> f64 {
        (self.n as f64 - self.r) / self.r.sqrt()
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn fluid_equilibrium(&self) -> f64 {
        self.x_fluid
    }

    /// Total departure rate with `k` customers present; `k` may be fractional.
    pub fn departure_rate(&self, k: f64) -> f64 {
        let nf = self.n as f64;
        if k <= 0.0 {
            0.0
        } else if k <= nf {
            self.mu * k
        } else {
            self.mu * nf + self.alpha * (k - nf)
        }
    }

    /// `x_k = delta (k - x_fluid)`.
    pub fn lattice_point(&self, k: u64) -> f64 {
        self.delta * (k as f64 - self.x_fluid)
    }

    /// Inverse of [`lattice_point`](Self::lattice_point) on the real line.
    pub fn lattice_index(&self, x: f64) -> f64 {
        self.x_fluid + x / self.delta
    }

    pub fn drift(&self, x: f64) -> f64 {
        let z = self.zeta;
        let neg = |v: f64| (-v).max(0.0);
        let pos = |v: f64| v.max(0.0);
        (neg(x + z) - neg(z)) * self.mu - (pos(x + z) - pos(z)) * self.alpha
    }

    pub fn diff_coeff(&self, x: f64, mode: Mode) -> f64 {
        match mode {
            Mode::Constant => 2.0 * self.mu,
            Mode::StateDependent => {
                let k = self.lattice_index(x);
                let d2 = self.delta * self.delta;
                if k <= 0.0 {
                    d2 * self.lambda
                } else {
                    d2 * (self.lambda + self.departure_rate(k))
                }
            }
        }
    }

    /// `b'(x)`, taking the right derivative at `-zeta`.
    pub fn drift_slope(&self, x: f64) -> f64 {
        if x < -self.zeta {
            -self.mu
        } else {
            -self.alpha
        }
    }

    /// `a'(x)`, taking right derivatives at the breakpoints.
    pub fn diff_coeff_slope(&self, x: f64, mode: Mode) -> f64 {
        match mode {
            Mode::Constant => 0.0,
            Mode::StateDependent => {
                let [l, r] = self.breakpoints();
                if x < l {
                    0.0
                } else if x < r {
                    self.mu * self.delta
                } else {
                    self.delta * self.alpha
                }
            }
        }
    }

    /// Generator form of the drift at lattice index `k`.
    pub fn drift_at(&self, k: u64) -> f64 {
        self.delta * (self.lambda - self.departure_rate(k as f64))
    }

    /// Generator form of the state-dependent coefficient at lattice index `k`.
    pub fn diff_coeff_at(&self, k: u64) -> f64 {
        let d = if k > 0 { self.departure_rate(k as f64) } else { 0.0 };
        self.delta * self.delta * (self.lambda + d)
    }

    /// Points where `b` or the state-dependent `a` change formula:
    /// `x = -delta x_fluid` (empty system) and `x = -zeta` (all servers busy).
    pub fn breakpoints(&self) -> [f64; 2] {
        [-self.delta * self.x_fluid, -self.zeta]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fluid_equilibrium_branches() {
        let p = QueueParams::new(3.0, 1.0, 5, 0.0).unwrap();
        assert_relative_eq!(p.fluid_equilibrium(), 3.0);
        let p = QueueParams::new(6.0, 1.0, 5, 2.0).unwrap();
        assert_relative_eq!(p.fluid_equilibrium(), 5.5);
        let p = QueueParams::new(5.0, 1.0, 5, 1.0).unwrap();
        assert_relative_eq!(p.fluid_equilibrium(), 5.0);
    }

    #[test]
    fn unstable_erlang_c_rejected() {
        assert!(matches!(
            QueueParams::new(5.0, 1.0, 5, 0.0),
            Err(Error::Stability { .. })
        ));
        assert!(QueueParams::new(0.0, 1.0, 5, 0.0).is_err());
        assert!(QueueParams::new(1.0, 1.0, 0, 0.0).is_err());
    }

    #[test]
    fn zeta_sign_follows_load() {
        let under = QueueParams::new(4.0, 1.0, 5, 1.0).unwrap();
        let over = QueueParams::new(6.0, 1.0, 5, 1.0).unwrap();
        assert!(under.zeta() < 0.0);
        assert!(over.zeta() > 0.0);
        assert_relative_eq!(under.zeta(), (4.0 - 5.0) / 2.0);
    }

    #[test]
    fn erlang_c_drift_shape() {
        let p = QueueParams::erlang_c(4.0, 1.0, 5).unwrap();
        let z = p.zeta();
        assert_relative_eq!(p.drift(-z), p.mu() * z, epsilon = 1e-15);
        assert_eq!(p.drift(0.0), 0.0);
        assert_relative_eq!(p.drift(-1.0), 1.0);
        assert_relative_eq!(p.drift(10.0), z);
    }

    #[test]
    fn state_dependent_coefficient_at_full_occupancy() {
        let p = QueueParams::erlang_c(4.0, 1.0, 5).unwrap();
        let x = p.lattice_point(5);
        let closed = p.mu() * (2.0 + p.delta() * p.zeta().abs());
        assert_relative_eq!(p.diff_coeff(x, Mode::StateDependent), closed, max_relative = 1e-12);
        assert_relative_eq!(p.diff_coeff_at(5), closed, max_relative = 1e-12);
        assert_relative_eq!(closed, 2.25, max_relative = 1e-12);
    }

    #[test]
    fn state_dependent_coefficient_middle_piece() {
        let p = QueueParams::erlang_c(9.0, 1.0, 12).unwrap();
        for x in [-0.9, -0.2, 0.0, 0.4, 0.9] {
            let want = p.mu() * (2.0 + p.delta() * x);
            assert_relative_eq!(p.diff_coeff(x, Mode::StateDependent), want, max_relative = 1e-12);
        }
        assert_relative_eq!(p.diff_coeff(-5.0, Mode::StateDependent), p.mu());
    }

    #[test]
    fn deltas_are_distinct_when_mu_differs() {
        let p = QueueParams::new(8.0, 2.0, 6, 0.5).unwrap();
        assert_relative_eq!(p.delta(), 0.5);
        assert_relative_eq!(p.delta_arrival(), 1.0 / 8f64.sqrt());
    }

    #[test]
    fn halfin_whitt_staffing() {
        let p = QueueParams::halfin_whitt(100.0, 1.0, 0.0).unwrap();
        assert_eq!(p.n(), 110);
        assert_relative_eq!(p.beta(), 1.0);
    }
}
