//! Named invariant suites over built-in parameter grids. Every suite returns
//! one [`CheckRecord`] per checked quantity.

use std::str::FromStr;

use rayon::prelude::*;

use crate::birth_death::{stationary, LatticeDist};
use crate::diffusion::DensityCurve;
use crate::error::{Error, Result};
use crate::metrics::{erlang_c_kolmogorov_bound, erlang_c_wasserstein_bound, kolmogorov, wasserstein1};
use crate::models::{Mode, QueueParams};
use crate::mphn::{des_simulate, ssc_binomial_test, DesConfig, PhaseType, SscStatus};
use crate::stein::{
    bar_residual, central_window, check_gradient_bounds, density_bounds, linspace, mgf_check, moment_bounds,
    order_of_magnitude, CheckRecord, GradientSuite, PoissonSolution, TestFn,
};

pub const BAR_TOL: f64 = 1e-8;
pub const ODE_TOL: f64 = 1e-7;
/// Largest allowed growth of a scaled error sequence relative to its first value.
pub const TREND_FACTOR: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Bar,
    Moments,
    Gradients,
    Mgf,
    Ssc,
    DensityBounds,
    TheoremBounds,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Bar,
        Suite::Moments,
        Suite::Gradients,
        Suite::Mgf,
        Suite::Ssc,
        Suite::DensityBounds,
        Suite::TheoremBounds,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Bar => "bar",
            Suite::Moments => "moments",
            Suite::Gradients => "gradients",
            Suite::Mgf => "mgf",
            Suite::Ssc => "ssc",
            Suite::DensityBounds => "density-bounds",
            Suite::TheoremBounds => "theorem-bounds",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown suite '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    ErlangC,
    ErlangA,
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erlang_c" | "erlang-c" => Ok(Model::ErlangC),
            "erlang_a" | "erlang-a" => Ok(Model::ErlangA),
            _ => Err(Error::InvalidParam(format!("unknown model '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    H2,
    C2,
}

impl Preset {
    pub fn phase_type(self) -> PhaseType {
        match self {
            Preset::H2 => PhaseType::h2_preset(),
            Preset::C2 => PhaseType::c2_preset(),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h2" => Ok(Preset::H2),
            "c2" => Ok(Preset::C2),
            _ => Err(Error::InvalidParam(format!("unknown preset '{s}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Restrict to one model; `None` runs every model the suite covers.
    pub model: Option<Model>,
    pub tail_eps: f64,
    pub seed: u64,
    pub preset: Preset,
    /// Target number of composition samples for the SSC suite.
    pub samples: f64,
    pub reps: usize,
    pub burnin: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            model: None,
            tail_eps: 1e-14,
            seed: 0,
            preset: Preset::H2,
            samples: 1e6,
            reps: 8,
            burnin: 100.0,
        }
    }
}

impl VerifyOptions {
    fn wants(&self, m: Model) -> bool {
        self.model.is_none_or(|x| x == m)
    }
}

const C_N: [u64; 20] = [2, 3, 4, 5, 7, 10, 15, 20, 30, 50, 75, 100, 150, 200, 300, 400, 500, 650, 800, 1000];
const C_FRAC: [f64; 11] = [0.0, 0.1, 0.25, 0.4, 0.55, 0.7, 0.8, 0.9, 0.95, 0.98, 0.995];
const A_N: [u64; 9] = [2, 5, 10, 20, 50, 100, 200, 500, 1000];
const A_LOAD: [f64; 11] = [0.3, 0.6, 0.8, 0.9, 0.95, 0.99, 1.0, 1.05, 1.2, 1.5, 2.0];
const A_ALPHA: [f64; 3] = [0.1, 1.0, 5.0];

/// Erlang-C points with `1 <= R < n`, `n` from 2 to 1000.
pub fn erlang_c_grid() -> Vec<QueueParams> {
    C_N.iter()
        .flat_map(|&n| {
            C_FRAC.iter().map(move |&f| QueueParams::erlang_c(1.0 + f * (n - 1) as f64, 1.0, n).expect("grid point"))
        })
        .collect()
}

/// Erlang-A points on both sides of critical loading.
pub fn erlang_a_grid() -> Vec<QueueParams> {
    let mut out = Vec::new();
    for &n in &A_N {
        for &l in &A_LOAD {
            for &a in &A_ALPHA {
                out.push(QueueParams::new(l * n as f64, 1.0, n, a).expect("grid point"));
            }
        }
    }
    out
}

/// Every `step`-th element, so the lighter suites still span the grid.
fn thin(v: Vec<QueueParams>, step: usize) -> Vec<QueueParams> {
    v.into_iter().step_by(step).collect()
}

fn grid(opts: &VerifyOptions, c_step: usize, a_step: usize) -> Vec<QueueParams> {
    let mut g = Vec::new();
    if opts.wants(Model::ErlangC) {
        g.extend(thin(erlang_c_grid(), c_step));
    }
    if opts.wants(Model::ErlangA) {
        g.extend(thin(erlang_a_grid(), a_step));
    }
    g
}

fn par_flat<F>(points: &[QueueParams], f: F) -> Result<Vec<CheckRecord>>
where
    F: Fn(&QueueParams) -> Result<Vec<CheckRecord>> + Sync + Send,
{
    let parts: Vec<Vec<CheckRecord>> = points.par_iter().map(f).collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<Vec<CheckRecord>> {
    match suite {
        Suite::Bar => bar_suite(opts),
        Suite::Moments => moments_suite(opts),
        Suite::Gradients => gradients_suite(opts),
        Suite::Mgf => mgf_suite(opts),
        Suite::Ssc => ssc_suite(opts),
        Suite::DensityBounds => density_suite(opts),
        Suite::TheoremBounds => theorem_suite(opts),
    }
}

fn bar_suite(opts: &VerifyOptions) -> Result<Vec<CheckRecord>> {
    let points = grid(opts, 3, 3);
    let mut out = par_flat(&points, |p| {
        let l = stationary(p, opts.tail_eps)?;
        let fs: [(&str, fn(f64) -> f64); 3] = [("x", |x| x), ("x2", |x| x * x), ("x3", |x| x * x * x)];
        Ok(fs
            .iter()
            .map(|(name, f)| CheckRecord::inequality("bar", name, Some(*p), bar_residual(&l, f).abs(), BAR_TOL))
            .collect())
    })?;
    out.extend(par_flat(&thin(points, 4), |p| poisson_residuals(p))?);
    Ok(out)
}

/// Largest finite-difference residual of the Poisson equation per mode and test function.
pub fn poisson_residuals(p: &QueueParams) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    for mode in Mode::ALL {
        let c = DensityCurve::new(p, mode)?;
        let (lo, hi) = central_window(&c, 1e-6);
        let mut fns = TestFn::lipschitz_family();
        fns.push(TestFn::Indicator { a: 0.3 });
        for h in fns {
            let s = PoissonSolution::new(&c, h)?;
            let (worst, at) = linspace(lo, hi, 200)
                .into_iter()
                .filter(|&x| s.stencil_is_smooth(x))
                .map(|x| (s.ode_residual(x), x))
                .fold((0.0f64, f64::NAN), |a, t| if t.0 > a.0 { t } else { a });
            out.push(
                CheckRecord::inequality("bar", "poisson_ode", Some(*p), worst, ODE_TOL)
                    .with_witness(at)
                    .with_detail(format!("{} {}", mode.as_str(), h.label())),
            );
        }
    }
    Ok(out)
}

fn moments_suite(opts: &VerifyOptions) -> Result<Vec<CheckRecord>> {
    par_flat(&grid(opts, 1, 1), |p| Ok(moment_bounds(&stationary(p, opts.tail_eps)?)))
}

fn gradients_suite(opts: &VerifyOptions) -> Result<Vec<CheckRecord>> {
    par_flat(&grid(opts, 5, 5), |p| {
        let suites: &[GradientSuite] = if p.is_erlang_c() {
            &[GradientSuite::WassersteinC, GradientSuite::KolmogorovC]
        } else {
            &[GradientSuite::KolmogorovA, GradientSuite::WassersteinA]
        };
        let mut out = Vec::new();
        for &s in suites {
            out.extend(check_gradient_bounds(p, s)?);
        }
        Ok(out)
    })
}

fn mgf_suite(opts: &VerifyOptions) -> Result<Vec<CheckRecord>> {
    let points: Vec<QueueParams> = erlang_c_grid().into_iter().filter(|p| p.rho() >= 0.1).step_by(2).collect();
    par_flat(&points, |p| {
        let l = stationary(p, opts.tail_eps)?;
        let az = p.zeta().abs();
        let gamma = 2.0 * (2.0 + p.delta() * az) / (2.0 * az);
        let m = mgf_check(&l, gamma)?;
        Ok(vec![
            CheckRecord::inequality("mgf", "shifted_below_unshifted", Some(*p), m.lhs_shifted, m.lhs),
            CheckRecord::monitored("mgf", "constant_shifted", Some(*p), m.constant_shifted),
            CheckRecord::monitored("mgf", "constant", Some(*p), m.constant),
        ])
    })
}

/// Erlang-C point at `n` servers with `|zeta| = z`: `R = ((sqrt(z^2 + 4n) - z) / 2)^2`.
pub fn erlang_c_at_zeta(n: u64, z: f64) -> Result<QueueParams> {
    let s = ((z * z + 4.0 * n as f64).sqrt() - z) / 2.0;
    QueueParams::erlang_c(s * s, 1.0, n)
}

fn density_suite(opts: &VerifyOptions) -> Result<Vec<CheckRecord>> {
    let mut out = par_flat(&grid(opts, 1, 1), density_bounds)?;
    if opts.wants(Model::ErlangC) {
        for (z, tol) in [(1e-3, 1e-2), (1e-4, 1e-3)] {
            let p = erlang_c_at_zeta(500, z)?;
            let v = order_of_magnitude(&p, 1)?;
            out.push(
                CheckRecord::inequality("density_bounds", "order_of_magnitude", Some(p), (v - 1.0).abs(), tol)
                    .with_detail(format!("|zeta| E[Y] = {v} at |zeta| = {}", p.zeta().abs())),
            );
        }
    }
    Ok(out)
}

/// Wasserstein and Kolmogorov distances to the constant-coefficient diffusion.
pub fn distances(p: &QueueParams, tail_eps: f64) -> Result<(f64, f64)> {
    let l: LatticeDist = stationary(p, tail_eps)?;
    let c = DensityCurve::new(p, Mode::Constant)?;
    Ok((wasserstein1(&l, &c), kolmogorov(&l, &c)))
}

/// `max_k s_k <= TREND_FACTOR * s_0` with every value finite and positive.
pub fn trend_ok(scaled: &[f64]) -> bool {
    let first = scaled[0];
    first > 0.0 && scaled.iter().all(|s| s.is_finite() && *s <= TREND_FACTOR * first)
}

const TREND_R: [f64; 4] = [10.0, 100.0, 1000.0, 10000.0];

fn theorem_suite(opts: &VerifyOptions) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    if opts.wants(Model::ErlangC) {
        let recs = par_flat(&erlang_c_grid(), |p| {
            let (w, k) = distances(p, opts.tail_eps)?;
            let r = p.offered_load();
            Ok(vec![
                CheckRecord::inequality("theorem_bounds", "wasserstein_c", Some(*p), w, erlang_c_wasserstein_bound(r)),
                CheckRecord::inequality("theorem_bounds", "kolmogorov_c", Some(*p), k, erlang_c_kolmogorov_bound(r)),
            ])
        })?;
        for (name, bound) in [("wasserstein_c", 190.0), ("kolmogorov_c", 156.0)] {
            let max = recs
                .iter()
                .filter(|r| r.check == name)
                .map(|r| r.value * r.params.expect("params").offered_load().sqrt())
                .fold(0.0, f64::max);
            out.push(CheckRecord::inequality("theorem_bounds", &format!("max_sqrt_r_{name}"), None, max, bound));
        }
        out.extend(recs);
    }
    if opts.wants(Model::ErlangA) {
        out.extend(erlang_a_trends(opts.tail_eps)?);
    }
    Ok(out)
}

/// `sqrt(R)`-scaled distances for Erlang-A along square-root staffing over
/// three decades of `R`; each sequence must stay within [`TREND_FACTOR`] of its first value.
pub fn erlang_a_trends(tail_eps: f64) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    for beta in [-1.0, 0.0, 1.0] {
        for alpha in [0.5, 2.0] {
            let pts: Vec<QueueParams> = TREND_R
                .iter()
                .map(|&r| {
                    let n = (r + beta * r.sqrt()).round().max(1.0) as u64;
                    QueueParams::new(r, 1.0, n, alpha)
                })
                .collect::<Result<_>>()?;
            let d: Vec<(f64, f64)> = pts.par_iter().map(|p| distances(p, tail_eps)).collect::<Result<_>>()?;
            for (name, pick) in [("wasserstein_a_trend", 0usize), ("kolmogorov_a_trend", 1)] {
                let scaled: Vec<f64> = d
                    .iter()
                    .zip(&TREND_R)
                    .map(|(v, r)| if pick == 0 { v.0 } else { v.1 } * r.sqrt())
                    .collect();
                let last = *scaled.last().expect("non-empty");
                let mut rec = CheckRecord::monitored("theorem_bounds", name, Some(*pts.last().expect("non-empty")), last)
                    .with_detail(format!("beta = {beta}, alpha = {alpha}, sqrt(R) d over R = 1e1..1e4: {scaled:?}"));
                rec.passed = trend_ok(&scaled);
                out.push(rec);
            }
        }
    }
    Ok(out)
}

/// Arrival rate and staffing used by the SSC suite.
pub const SSC_LAMBDA: f64 = 60.0;
pub const SSC_N: u64 = 50;
pub const SSC_LEVEL: f64 = 0.01;
pub const SSC_MIN_STRATUM: usize = 500;

fn ssc_suite(opts: &VerifyOptions) -> Result<Vec<CheckRecord>> {
    let pt = opts.preset.phase_type();
    let interval = 1.0;
    let per_rep = opts.samples / opts.reps as f64;
    let cfg = DesConfig {
        horizon: opts.burnin + per_rep * interval,
        burnin: opts.burnin,
        reps: opts.reps,
        seed: opts.seed,
        ssc_interval: interval,
    };
    let res = des_simulate(&pt, SSC_LAMBDA, SSC_N, 1.0, &cfg)?;
    let delta = 1.0 / SSC_LAMBDA.sqrt();
    let report = ssc_binomial_test(&res.ssc_samples, pt.p(), delta, SSC_LEVEL, SSC_MIN_STRATUM);
    let mut out = Vec::new();
    out.push(
        CheckRecord::monitored("ssc", "status", None, report.samples as f64)
            .with_detail(format!("{:?} over {} strata, per-stratum threshold {:e}", report.status, report.strata.len(), report.threshold)),
    );
    out.last_mut().expect("pushed").passed = report.status == SscStatus::Pass;
    for s in &report.strata {
        let mut r = CheckRecord::monitored("ssc", &format!("chi2_l{}_phase{}", s.queue_len, s.phase), None, s.p_value)
            .with_detail(format!("chi2 = {}, dof = {}, samples = {}", s.chi2, s.dof, s.samples));
        r.bound = Some(report.threshold);
        r.passed = s.passed;
        out.push(r);
    }
    for (i, e) in res.ssc_residual.iter().enumerate() {
        out.push(
            CheckRecord::inequality("ssc", &format!("residual_phase{i}"), None, e.estimate.abs(), 3.0 * e.stderr)
                .with_detail(format!("mean {} stderr {}", e.estimate, e.stderr)),
        );
    }
    for (i, v) in report.scaled_second_moment.iter().enumerate() {
        out.push(CheckRecord::monitored("ssc", &format!("scaled_second_moment_phase{i}"), None, *v));
    }
    let mut flows = CheckRecord::monitored("ssc", "flow_conservation", None, res.events() as f64);
    flows.passed = res.flow_balanced();
    out.push(flows);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_are_large_enough() {
        let c = erlang_c_grid();
        assert!(c.len() >= 200);
        assert!(c.iter().all(|p| p.offered_load() >= 1.0 && p.offered_load() < p.n() as f64));
        let under = erlang_a_grid().iter().filter(|p| p.offered_load() <= p.n() as f64).count();
        assert!(under >= 100);
    }

    #[test]
    fn zeta_target() {
        let p = erlang_c_at_zeta(500, 1e-3).unwrap();
        assert!((p.zeta().abs() - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn trend_rule() {
        assert!(trend_ok(&[1.0, 1.5, 1.2, 0.9]));
        assert!(!trend_ok(&[1.0, 1.5, 2.5]));
        assert!(!trend_ok(&[1.0, f64::NAN]));
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
    }
}
