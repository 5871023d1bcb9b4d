use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::birth_death::Coxian2;
use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// Phase-type service law `(p, nu, P)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseType {
    p: Vec<f64>,
    nu: Vec<f64>,
    /// Row-major `d x d` routing matrix.
    routing: Vec<f64>,
    mu: f64,
    gamma: Vec<f64>,
}

impl PhaseType {
    pub fn new(p: Vec<f64>, nu: Vec<f64>, routing: Vec<f64>) -> Result<Self> {
        let d = p.len();
        let bad = |m: String| Err(Error::InvalidPhaseType(m));
        if d == 0 || nu.len() != d || routing.len() != d * d {
            return bad(format!("dimension mismatch: p {d}, nu {}, P {}", nu.len(), routing.len()));
        }
        if p.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || (p.iter().sum::<f64>() - 1.0).abs() > SUM_TOL {
            return bad(format!("p must be a probability vector, got {p:?}"));
        }
        if nu.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return bad(format!("phase rates must be positive, got {nu:?}"));
        }
        for i in 0..d {
            let row = &routing[i * d..(i + 1) * d];
            if row.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || row.iter().sum::<f64>() > 1.0 + SUM_TOL {
                return bad(format!("row {i} of P is not substochastic"));
            }
            if row[i] != 0.0 {
                return bad(format!("P[{i}][{i}] must be zero"));
            }
            if p[i] == 0.0 && (0..d).all(|j| routing[j * d + i] == 0.0) {
                return bad(format!("phase {i} is never visited"));
            }
        }
        let ip = DMatrix::identity(d, d) - DMatrix::from_row_slice(d, d, &routing);
        let inv = ip.clone().try_inverse().ok_or_else(|| Error::InvalidPhaseType("I - P is singular".into()))?;
        if inv.iter().any(|x| !x.is_finite()) {
            return bad("I - P is singular".into());
        }
        // mean = p^T (I - P)^-1 diag(1/nu) 1
        let pv = DVector::from_column_slice(&p);
        let inv_nu = DVector::from_iterator(d, nu.iter().map(|v| 1.0 / v));
        let mean = (pv.transpose() * &inv * &inv_nu)[(0, 0)];
        if !(mean > 0.0 && mean.is_finite()) {
            return bad(format!("mean service time {mean} is not positive"));
        }
        let mu = 1.0 / mean;
        let rmat = ip.transpose() * DMatrix::from_diagonal(&DVector::from_column_slice(&nu));
        let gamma = rmat
            .lu()
            .solve(&(pv * mu))
            .ok_or_else(|| Error::InvalidPhaseType("R is singular".into()))?;
        let gamma: Vec<f64> = gamma.iter().map(|&g| if g.abs() < 1e-15 { 0.0 } else { g }).collect();
        if gamma.iter().any(|&g| g < 0.0) {
            return bad(format!("negative load fraction {gamma:?}"));
        }
        Ok(PhaseType { p, nu, routing, mu, gamma })
    }

    pub fn exponential(mu: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mu], vec![0.0])
    }

    /// Sum of two exponentials with rate `theta`.
    pub fn erlang2(theta: f64) -> Result<Self> {
        Self::new(vec![1.0, 0.0], vec![theta, theta], vec![0.0, 1.0, 0.0, 0.0])
    }

    pub fn hyperexp2(p1: f64, nu1: f64, nu2: f64) -> Result<Self> {
        Self::new(vec![p1, 1.0 - p1], vec![nu1, nu2], vec![0.0; 4])
    }

    pub fn coxian2(c: &Coxian2) -> Result<Self> {
        Self::new(vec![1.0, 0.0], vec![c.nu1, c.nu2], vec![0.0, c.p12, 0.0, 0.0])
    }

    /// Unit-mean `H2` with `p = (1/2, 1/2)`, `nu = (2/3, 2)`.
    pub fn h2_preset() -> Self {
        Self::hyperexp2(0.5, 2.0 / 3.0, 2.0).expect("valid preset")
    }

    /// Unit-mean two-phase Coxian with squared coefficient of variation 24.
    pub fn c2_preset() -> Self {
        Self::coxian2(&Coxian2::unit_mean(24.0).expect("valid preset")).expect("valid preset")
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn routing(&self, i: usize, j: usize) -> f64 {
        self.routing[i * self.dim() + j]
    }

    pub fn routing_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.routing)
    }

    /// Probability of leaving the system after phase `i`.
    pub fn exit_prob(&self, i: usize) -> f64 {
        let d = self.dim();
        (1.0 - self.routing[i * d..(i + 1) * d].iter().sum::<f64>()).max(0.0)
    }

    /// Service rate `mu`, the reciprocal of the mean service time.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Phase load fractions `gamma = mu R^-1 p`.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// `R = (I - P^T) diag(nu)`.
    pub fn r_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        (DMatrix::identity(d, d) - self.routing_matrix().transpose())
            * DMatrix::from_diagonal(&DVector::from_column_slice(&self.nu))
    }

    /// `diag(p) + (sum_k gamma_k nu_k H^k + (I - P^T) diag(nu) diag(gamma) (I - P)) / mu`.
    ///
    /// The service terms carry `n / lambda`, which is `1 / mu` under square-root staffing.
    pub fn sigma(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut s = DMatrix::from_diagonal(&DVector::from_column_slice(&self.p));
        for k in 0..d {
            let w = self.gamma[k] * self.nu[k] / self.mu;
            for i in 0..d {
                for j in 0..d {
                    let pki = self.routing(k, i);
                    let h = if i == j { pki * (1.0 - pki) } else { -pki * self.routing(k, j) };
                    s[(i, j)] += w * h;
                }
            }
        }
        let ip = DMatrix::identity(d, d) - self.routing_matrix();
        let mid = DMatrix::from_diagonal(&DVector::from_iterator(d, (0..d).map(|i| self.nu[i] * self.gamma[i] / self.mu)));
        s += ip.transpose() * mid * ip;
        // Symmetrize away rounding.
        let t = s.transpose();
        (s + t) * 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erlang2_load_split() {
        let pt = PhaseType::erlang2(2.0).unwrap();
        assert!((pt.mu() - 1.0).abs() < 1e-14);
        assert!((pt.gamma()[0] - 0.5).abs() < 1e-14 && (pt.gamma()[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn hyperexp_load_split() {
        let pt = PhaseType::hyperexp2(0.3, 0.5, 4.0).unwrap();
        for i in 0..2 {
            let want = pt.mu() * pt.p()[i] / pt.nu()[i];
            assert!((pt.gamma()[i] - want).abs() < 1e-14);
        }
        let s = pt.sigma();
        for i in 0..2 {
            assert!((s[(i, i)] - (pt.p()[i] + pt.nu()[i] * pt.gamma()[i] / pt.mu())).abs() < 1e-14);
        }
        assert!(s[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn single_phase() {
        let pt = PhaseType::exponential(3.0).unwrap();
        assert_eq!(pt.gamma(), &[1.0]);
        // Arrivals and services each contribute unit variance.
        assert!((pt.sigma()[(0, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn c2_preset_matches_closed_forms() {
        let pt = PhaseType::c2_preset();
        let (nu1, nu2, p12) = (pt.nu()[0], pt.nu()[1], pt.routing(0, 1));
        assert!((1.0 / pt.mu() - (1.0 / nu1 + p12 / nu2)).abs() < 1e-12);
        assert!((pt.gamma()[0] - pt.mu() / nu1).abs() < 1e-14);
        assert!((pt.gamma()[1] - pt.mu() * p12 / nu2).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PhaseType::new(vec![0.5, 0.4], vec![1.0, 1.0], vec![0.0; 4]).is_err());
        assert!(PhaseType::new(vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0; 4]).is_err());
        assert!(PhaseType::new(vec![0.5, 0.5], vec![1.0, 1.0], vec![0.0, 1.0, 1.0, 0.0]).is_err());
        assert!(PhaseType::new(vec![1.0], vec![0.0], vec![0.0]).is_err());
    }
}
