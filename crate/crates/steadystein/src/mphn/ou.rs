//! Euler-Maruyama simulation of the piecewise OU diffusion and of its
//! state-dependent counterpart.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::Mode;

use super::phasetype::PhaseType;
use super::SimEstimate;

/// A run fails when more than this fraction of steps needed eigenvalue clipping.
const MAX_CLIP_FRACTION: f64 = 1e-4;
const DIVERGENCE: f64 = 1e8;

/// Diffusion limit of the many-server queue with phase-type service.
#[derive(Clone, Debug, Serialize)]
pub struct OuSpec {
    pt: PhaseType,
    lambda: f64,
    n: u64,
    alpha: f64,
    beta: f64,
    delta: f64,
    #[serde(skip)]
    sigma_chol: DMatrix<f64>,
}

impl OuSpec {
    pub fn new(pt: PhaseType, lambda: f64, n: u64, alpha: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) || n == 0 {
            return Err(Error::InvalidParam(format!("need lambda > 0 and n >= 1, got {lambda}, {n}")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParam(format!("alpha must be non-negative, got {alpha}")));
        }
        let beta = (n as f64 * pt.mu() - lambda) / lambda.sqrt();
        if alpha == 0.0 && beta <= 0.0 {
            return Err(Error::Stability { r: lambda / pt.mu(), n });
        }
        let sigma = pt.sigma();
        let sigma_chol = sigma
            .cholesky()
            .ok_or_else(|| Error::Numeric("the diffusion matrix is not positive definite".into()))?
            .l();
        Ok(OuSpec { delta: 1.0 / lambda.sqrt(), pt, lambda, n, alpha, beta, sigma_chol })
    }

    pub fn phase_type(&self) -> &PhaseType {
        &self.pt
    }

    pub fn dim(&self) -> usize {
        self.pt.dim()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Scaled service occupancy `delta z_i` implied by the scaled state, floored at 0.
    fn service_load(&self, y: &[f64], out: &mut [f64]) {
        let s = y.iter().sum::<f64>().max(0.0);
        let n = self.n as f64;
        for i in 0..y.len() {
            out[i] = (y[i] - self.pt.p()[i] * s + self.delta * self.pt.gamma()[i] * n).max(0.0);
        }
    }

    pub fn drift(&self, mode: Mode, y: &[f64], out: &mut [f64]) {
        let mut w = vec![0.0; self.dim()];
        self.drift_with(mode, y, out, &mut w);
    }

    fn drift_with(&self, mode: Mode, y: &[f64], out: &mut [f64], w: &mut [f64]) {
        let d = self.dim();
        let p = self.pt.p();
        let nu = self.pt.nu();
        let s = y.iter().sum::<f64>().max(0.0);
        match mode {
            Mode::Constant => {
                // -p beta - R (y - p s+) - alpha p s+
                for i in 0..d {
                    w[i] = y[i] - p[i] * s;
                }
                for i in 0..d {
                    out[i] = -p[i] * self.beta - self.alpha * p[i] * s - nu[i] * w[i];
                }
            }
            Mode::StateDependent => {
                self.service_load(y, w);
                for i in 0..d {
                    out[i] = self.delta * self.lambda * p[i] - self.alpha * p[i] * s - nu[i] * w[i];
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                out[i] += self.pt.routing(j, i) * nu[j] * w[j];
            }
        }
    }

    /// Second-order coefficient matrix `A`, the generator being `(1/2) sum A_ij d_ij f`.
    pub fn second_order(&self, mode: Mode, y: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        match mode {
            Mode::Constant => self.pt.sigma(),
            Mode::StateDependent => {
                let mut a = vec![0.0; d * d];
                let mut w = vec![0.0; d];
                self.state_second_order(y, &mut a, &mut w);
                DMatrix::from_row_slice(d, d, &a)
            }
        }
    }

    /// Row-major state-dependent `A` written into `a`.
    fn state_second_order(&self, y: &[f64], a: &mut [f64], w: &mut [f64]) {
        let d = self.dim();
        let p = self.pt.p();
        let nu = self.pt.nu();
        let s = y.iter().sum::<f64>().max(0.0);
        self.service_load(y, w);
        let dl = self.delta;
        a.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            let mut v = dl * dl * self.lambda * p[i] + dl * self.alpha * p[i] * s + dl * nu[i] * w[i];
            for j in 0..d {
                v += dl * self.pt.routing(j, i) * nu[j] * w[j];
            }
            a[i * d + i] += v;
            for j in 0..d {
                if j != i {
                    let c = dl * nu[i] * w[i] * self.pt.routing(i, j);
                    a[i * d + j] -= c;
                    a[j * d + i] -= c;
                }
            }
        }
    }

    /// Noise-free Euler path of the drift.
    pub fn drift_path(&self, mode: Mode, y0: &[f64], step: f64, steps: usize) -> Vec<f64> {
        let mut y = y0.to_vec();
        let mut b = vec![0.0; y.len()];
        for _ in 0..steps {
            self.drift(mode, &y, &mut b);
            for (yi, bi) in y.iter_mut().zip(&b) {
                *yi += step * bi;
            }
        }
        y
    }
}

/// Functionals of the stationary diffusion, all through the total `e^T y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OuFunctional {
    AbsTotal,
    TotalMoment { m: u32 },
    /// `1{lo < e^T y <= hi}`
    TotalInterval { lo: f64, hi: f64 },
}

impl OuFunctional {
    pub fn eval(&self, y: &[f64]) -> f64 {
        let s: f64 = y.iter().sum();
        match *self {
            OuFunctional::AbsTotal => s.abs(),
            OuFunctional::TotalMoment { m } => s.powi(m as i32),
            OuFunctional::TotalInterval { lo, hi } => {
                if s > lo && s <= hi {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OuConfig {
    pub step: f64,
    /// Burn-in in time units.
    pub burnin: f64,
    /// Fine steps per replication after burn-in.
    pub steps: u64,
    pub reps: usize,
    pub seed: u64,
    /// Combine step `h` with a coupled `2h` path to cancel the first-order bias.
    pub richardson: bool,
}

impl Default for OuConfig {
    fn default() -> Self {
        OuConfig { step: 1e-3, burnin: 1e3, steps: 1_000_000, reps: 32, seed: 0, richardson: false }
    }
}

impl OuConfig {
    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) || !(self.burnin >= 0.0) || self.steps < 2 || self.reps < 2 {
            return Err(Error::InvalidParam(format!("invalid simulation config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OuRun {
    pub mode: Mode,
    pub estimates: Vec<SimEstimate>,
    pub clipped_steps: u64,
    pub total_steps: u64,
}

/// In-place lower Cholesky factor of a row-major matrix; `false` if not positive definite.
fn cholesky_in_place(a: &mut [f64], d: usize) -> bool {
    for j in 0..d {
        let mut s = a[j * d + j];
        for k in 0..j {
            s -= a[j * d + k] * a[j * d + k];
        }
        if !(s > 0.0) {
            return false;
        }
        let ljj = s.sqrt();
        a[j * d + j] = ljj;
        for i in j + 1..d {
            let mut t = a[i * d + j];
            for k in 0..j {
                t -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = t / ljj;
        }
        for k in j + 1..d {
            a[j * d + k] = 0.0;
        }
    }
    true
}

/// One Euler-Maruyama path with its own state and scratch space.
struct Path<'a> {
    spec: &'a OuSpec,
    mode: Mode,
    y: Vec<f64>,
    b: Vec<f64>,
    w: Vec<f64>,
    /// Row-major factor of the second-order matrix.
    l: Vec<f64>,
    clipped: u64,
}

impl<'a> Path<'a> {
    fn new(spec: &'a OuSpec, mode: Mode) -> Self {
        let d = spec.dim();
        let l = spec.sigma_chol.transpose().iter().copied().collect();
        Path { spec, mode, y: vec![0.0; d], b: vec![0.0; d], w: vec![0.0; d], l, clipped: 0 }
    }

    /// Advance by `h` given normal increments already scaled by `sqrt(h)`.
    fn step(&mut self, h: f64, dw: &[f64]) -> Result<()> {
        let d = self.y.len();
        self.spec.drift_with(self.mode, &self.y, &mut self.b, &mut self.w);
        if self.mode == Mode::StateDependent {
            self.spec.state_second_order(&self.y, &mut self.l, &mut self.w);
            if !cholesky_in_place(&mut self.l, d) {
                self.clipped += 1;
                self.spec.state_second_order(&self.y, &mut self.l, &mut self.w);
                let r = sqrt_psd(DMatrix::from_row_slice(d, d, &self.l));
                for i in 0..d {
                    for j in 0..d {
                        self.l[i * d + j] = r[(i, j)];
                    }
                }
            }
        }
        for i in 0..d {
            let noise: f64 = (0..d).map(|j| self.l[i * d + j] * dw[j]).sum();
            self.y[i] += h * self.b[i] + noise;
            if !(self.y[i].abs() < DIVERGENCE) {
                return Err(Error::Numeric(format!("Euler path diverged at step size {h}; use a smaller step")));
            }
        }
        Ok(())
    }
}

/// Symmetric square root after clipping negative eigenvalues at 0.
fn sqrt_psd(a: DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(a);
    let root = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&root) * e.eigenvectors.transpose()
}

struct RepOut {
    values: Vec<f64>,
    clipped: u64,
    steps: u64,
}

fn run_rep(spec: &OuSpec, mode: Mode, fns: &[OuFunctional], cfg: &OuConfig, rep: usize) -> Result<RepOut> {
    let d = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep as u64);
    let h = cfg.step;
    let sh = h.sqrt();
    let mut fine = Path::new(spec, mode);
    let mut coarse = Path::new(spec, mode);
    let mut dw1 = vec![0.0; d];
    let mut dw2 = vec![0.0; d];
    let mut sum = vec![0.0; d];
    let burn_pairs = (cfg.burnin / (2.0 * h)).ceil() as u64;
    let pairs = cfg.steps / 2;
    let mut acc_f = vec![0.0; fns.len()];
    let mut acc_c = vec![0.0; fns.len()];
    for t in 0..burn_pairs + pairs {
        for v in dw1.iter_mut().chain(dw2.iter_mut()) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = z * sh;
        }
        let record = t >= burn_pairs;
        if record {
            for (k, f) in fns.iter().enumerate() {
                acc_f[k] += f.eval(&fine.y);
            }
        }
        fine.step(h, &dw1)?;
        if record {
            for (k, f) in fns.iter().enumerate() {
                acc_f[k] += f.eval(&fine.y);
            }
        }
        fine.step(h, &dw2)?;
        if cfg.richardson {
            if record {
                for (k, f) in fns.iter().enumerate() {
                    acc_c[k] += f.eval(&coarse.y);
                }
            }
            for i in 0..d {
                sum[i] = dw1[i] + dw2[i];
            }
            coarse.step(2.0 * h, &sum)?;
        }
    }
    let nf = (2 * pairs) as f64;
    let values = if cfg.richardson {
        acc_f.iter().zip(&acc_c).map(|(f, c)| 2.0 * f / nf - c / pairs as f64).collect()
    } else {
        acc_f.iter().map(|f| f / nf).collect()
    };
    let steps = 2 * (burn_pairs + pairs) + if cfg.richardson { burn_pairs + pairs } else { 0 };
    Ok(RepOut { values, clipped: fine.clipped + coarse.clipped, steps })
}

/// Long-run averages of `fns` over independent replications.
///
/// The Brownian increments depend only on `(seed, replication)`, so runs of the
/// two modes with the same config are coupled.
pub fn ou_simulate(spec: &OuSpec, mode: Mode, fns: &[OuFunctional], cfg: &OuConfig) -> Result<OuRun> {
    cfg.validate()?;
    let reps: Vec<RepOut> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| run_rep(spec, mode, fns, cfg, r))
        .collect::<Result<_>>()?;
    let clipped: u64 = reps.iter().map(|r| r.clipped).sum();
    let total: u64 = reps.iter().map(|r| r.steps).sum();
    if clipped as f64 > MAX_CLIP_FRACTION * total as f64 {
        return Err(Error::Numeric(format!(
            "second-order matrix clipped on {clipped} of {total} steps"
        )));
    }
    let burnin = cfg.burnin;
    let estimates = (0..fns.len())
        .map(|k| SimEstimate::from_reps(reps.iter().map(|r| r.values[k]).collect(), burnin, cfg.seed))
        .collect();
    Ok(OuRun { mode, estimates, clipped_steps: clipped, total_steps: total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::DensityCurve;
    use crate::models::QueueParams;

    #[test]
    fn one_dimensional_reduction() {
        // Single exponential phase: the diffusion is the Erlang-A one.
        let (lam, n, alpha) = (25.0, 25u64, 1.0);
        let spec = OuSpec::new(PhaseType::exponential(1.0).unwrap(), lam, n, alpha).unwrap();
        let cfg = OuConfig { step: 0.01, burnin: 20.0, steps: 400_000, reps: 8, seed: 3, richardson: true };
        let run = ou_simulate(&spec, Mode::Constant, &[OuFunctional::AbsTotal], &cfg).unwrap();
        let q = QueueParams::new(lam, 1.0, n, alpha).unwrap();
        let exact = DensityCurve::new(&q, Mode::Constant).unwrap().expect(|x| x.abs(), &[0.0]).unwrap();
        let e = &run.estimates[0];
        assert!((e.estimate - exact).abs() < 3.0 * e.stderr, "{} +- {} vs {exact}", e.estimate, e.stderr);
    }

    #[test]
    fn drift_fixed_point() {
        let pt = PhaseType::c2_preset();
        // Overloaded: beta < 0, the fluid point has a positive total.
        let spec = OuSpec::new(pt.clone(), 18.0, 15, 1.0).unwrap();
        let y = spec.drift_path(Mode::Constant, &[0.0, 0.0], 0.01, 200_000);
        // Solving the two linear pieces by hand gives y = (-beta / alpha, 0).
        let want = [-spec.beta() / spec.alpha(), 0.0];
        assert!((y[0] - want[0]).abs() < 1e-8 && y[1].abs() < 1e-8, "{y:?} vs {want:?}");
        // At lambda = n mu the origin is fixed in both modes.
        let spec = OuSpec::new(pt, 15.0, 15, 1.0).unwrap();
        for mode in Mode::ALL {
            let y = spec.drift_path(mode, &[0.0, 0.0], 0.01, 1000);
            assert!(y.iter().all(|v| v.abs() < 1e-12), "{mode:?} {y:?}");
        }
    }

    #[test]
    fn state_dependent_matches_constant_at_origin() {
        // With lambda = n mu and mu = 1 the coefficients coincide at y = 0.
        let pt = PhaseType::erlang2(2.0).unwrap();
        let spec = OuSpec::new(pt, 40.0, 40, 0.5).unwrap();
        let a = spec.second_order(Mode::StateDependent, &[0.0, 0.0]);
        let s = spec.second_order(Mode::Constant, &[0.0, 0.0]);
        assert!((a - s).abs().max() < 1e-12);
    }

    #[test]
    fn generator_matches_chain_rates() {
        // Two-phase Coxian: the queue holds only phase-1 customers, so the
        // surrogates are exact at lattice states.
        let pt = PhaseType::c2_preset();
        let (lam, n, alpha) = (15.0, 15u64, 1.0);
        let spec = OuSpec::new(pt.clone(), lam, n, alpha).unwrap();
        let dl = spec.delta();
        let (nu1, nu2, p12) = (pt.nu()[0], pt.nu()[1], pt.routing(0, 1));
        for (z1, z2, q) in [(10u64, 5u64, 0u64), (3, 12, 4), (15, 0, 7), (0, 15, 2), (2, 4, 0)] {
            let (z1, z2, q) = (z1 as f64, z2 as f64, q as f64);
            let x = [dl * (z1 + q - pt.gamma()[0] * n as f64), dl * (z2 - pt.gamma()[1] * n as f64)];
            let mut b = [0.0; 2];
            spec.drift(Mode::StateDependent, &x, &mut b);
            let b1 = dl * (lam - alpha * q - nu1 * z1);
            let b2 = dl * (p12 * nu1 * z1 - nu2 * z2);
            let a = spec.second_order(Mode::StateDependent, &x);
            let a11 = dl * dl * (lam + alpha * q + nu1 * z1);
            let a22 = dl * dl * (nu2 * z2 + p12 * nu1 * z1);
            let a12 = -dl * dl * nu1 * z1 * p12;
            assert!((b[0] - b1).abs() < 1e-10 && (b[1] - b2).abs() < 1e-10, "{b:?} vs {b1} {b2}");
            assert!((a[(0, 0)] - a11).abs() < 1e-10);
            assert!((a[(1, 1)] - a22).abs() < 1e-10);
            assert!((a[(0, 1)] - a12).abs() < 1e-10);
        }
    }

    #[test]
    fn coupled_runs_are_reproducible() {
        let spec = OuSpec::new(PhaseType::c2_preset(), 15.0, 15, 1.0).unwrap();
        let cfg = OuConfig { step: 0.01, burnin: 1.0, steps: 2000, reps: 2, seed: 7, richardson: true };
        let a = ou_simulate(&spec, Mode::StateDependent, &[OuFunctional::AbsTotal], &cfg).unwrap();
        let b = ou_simulate(&spec, Mode::StateDependent, &[OuFunctional::AbsTotal], &cfg).unwrap();
        assert_eq!(a.estimates[0].rep_means, b.estimates[0].rep_means);
    }
}
