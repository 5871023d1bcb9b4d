use serde::Serialize;

use crate::diffusion::DensityCurve;
use crate::error::{Error, Result};
use crate::models::{Mode, QueueParams};

use super::poisson::{linspace, PoissonSolution};
use super::testfn::TestFn;
use super::CheckRecord;

const POINTS_PER_PIECE: usize = 200;
/// Grid ends where the log-density has fallen this far below its peak.
const GRID_DROP: f64 = 60.0;
/// Some bounds are attained as `x -> inf`; this absorbs roundoff there.
const ROUNDOFF: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientSuite {
    WassersteinC,
    KolmogorovC,
    KolmogorovA,
    WassersteinA,
}

impl GradientSuite {
    pub const ALL: [GradientSuite; 4] = [
        GradientSuite::WassersteinC,
        GradientSuite::KolmogorovC,
        GradientSuite::KolmogorovA,
        GradientSuite::WassersteinA,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GradientSuite::WassersteinC => "wasserstein_c",
            GradientSuite::KolmogorovC => "kolmogorov_c",
            GradientSuite::KolmogorovA => "kolmogorov_a",
            GradientSuite::WassersteinA => "wasserstein_a",
        }
    }

    fn test_fns(self, p: &QueueParams) -> Vec<TestFn> {
        match self {
            GradientSuite::WassersteinC | GradientSuite::WassersteinA => TestFn::lipschitz_family(),
            GradientSuite::KolmogorovC | GradientSuite::KolmogorovA => {
                let mut v: Vec<TestFn> = [-2.0, 0.0, 2.0].iter().map(|&a| TestFn::Indicator { a }).collect();
                v.push(TestFn::Indicator { a: -p.zeta() });
                v
            }
        }
    }
}

/// Sample points on `x <= -zeta` and `x >= -zeta` out to where the density is negligible.
fn grids(curve: &DensityCurve) -> (Vec<f64>, Vec<f64>) {
    let z = -curve.params().zeta();
    let peak = curve.sup_density().ln();
    let mut lo = z.min(0.0) - 1.0;
    while curve.ln_density(lo) > peak - GRID_DROP {
        lo -= 1.0;
    }
    let mut step = 1.0;
    let mut hi = z.max(0.0) + 1.0;
    while curve.ln_density(hi) > peak - GRID_DROP {
        hi += step;
        step *= 1.25;
    }
    (linspace(lo, z, POINTS_PER_PIECE), linspace(z, hi, POINTS_PER_PIECE))
}

struct Worst {
    ratio: f64,
    value: f64,
    bound: f64,
    x: f64,
}

fn scan<F: Fn(f64) -> f64, B: Fn(f64) -> f64>(xs: &[f64], f: F, bound: B) -> Worst {
    let mut w = Worst { ratio: f64::NEG_INFINITY, value: 0.0, bound: 0.0, x: f64::NAN };
    for &x in xs {
        let v = f(x).abs();
        let b = bound(x);
        let r = if v.is_nan() { f64::INFINITY } else { v / b };
        if r > w.ratio {
            w = Worst { ratio: r, value: v, bound: b, x };
        }
    }
    w
}

fn record(suite: GradientSuite, name: &str, h: &TestFn, p: &QueueParams, w: Worst) -> CheckRecord {
    CheckRecord::inequality_rel(suite.as_str(), name, Some(*p), w.value, w.bound, ROUNDOFF)
        .with_witness(w.x)
        .with_detail(h.label())
}

fn monitor(suite: GradientSuite, name: &str, h: &TestFn, p: &QueueParams, xs: &[f64], f: impl Fn(f64) -> f64) -> CheckRecord {
    let (v, x) = xs
        .iter()
        .map(|&x| (f(x).abs(), x))
        .fold((0.0f64, f64::NAN), |acc, t| if t.0 > acc.0 || t.0.is_nan() { t } else { acc });
    CheckRecord::monitored(suite.as_str(), name, Some(*p), v * p.mu())
        .with_witness(x)
        .with_detail(format!("{}; value is mu * sup", h.label()))
}

/// Check the explicit-constant gradient bounds on 200 points per side of `-zeta`.
pub fn check_gradient_bounds(params: &QueueParams, suite: GradientSuite) -> Result<Vec<CheckRecord>> {
    let p = *params;
    let erlang_c_suite = matches!(suite, GradientSuite::WassersteinC | GradientSuite::KolmogorovC);
    if erlang_c_suite != p.is_erlang_c() {
        return Err(Error::Precondition(format!(
            "suite {} does not apply to alpha = {}",
            suite.as_str(),
            p.alpha()
        )));
    }
    let curve = DensityCurve::new(&p, Mode::Constant)?;
    let (left, right) = grids(&curve);
    let mu = p.mu();
    let az = p.zeta().abs();
    let mut out = Vec::new();
    for h in suite.test_fns(&p) {
        let s = PoissonSolution::new(&curve, h)?;
        let kinks = h.kinks();
        let off_kink = |xs: &[f64]| -> Vec<f64> {
            xs.iter().copied().filter(|x| kinks.iter().all(|k| (x - k).abs() > 1e-9)).collect()
        };
        let f1 = |x: f64| s.fprime(x);
        let f2 = |x: f64| s.fsecond(x);
        let f3 = |x: f64| s.fthird(x);
        match suite {
            GradientSuite::WassersteinC => {
                out.push(record(suite, "f1_left", &h, &p, scan(&left, f1, |_| (7.5 + 5.0 / az) / mu)));
                out.push(record(suite, "f1_right", &h, &p, scan(&right, f1, |x| (x + 1.0 + 2.0 / az) / (mu * az))));
                out.push(record(suite, "f2_left", &h, &p, scan(&left, f2, |_| 34.0 / mu * (1.0 + 1.0 / az))));
                out.push(record(suite, "f2_right", &h, &p, scan(&right, f2, |_| 1.0 / (mu * az))));
                out.push(record(suite, "f3_left", &h, &p, scan(&off_kink(&left), f3, |_| (17.0 + 10.0 / az) / mu)));
                out.push(record(suite, "f3_right", &h, &p, scan(&off_kink(&right), f3, |_| 2.0 / mu)));
            }
            GradientSuite::KolmogorovC => {
                let TestFn::Indicator { a } = h else { unreachable!() };
                let mut all: Vec<f64> = left.iter().chain(&right).copied().collect();
                all.push(a);
                out.push(record(suite, "f1_left", &h, &p, scan(&left, f1, |_| 4.0 / mu)));
                out.push(record(suite, "f1_right", &h, &p, scan(&right, f1, |_| 1.0 / (mu * az))));
                out.push(record(suite, "f2", &h, &p, scan(&all, f2, |_| 2.0 / mu)));
            }
            GradientSuite::KolmogorovA => {
                let TestFn::Indicator { a } = h else { unreachable!() };
                let r = p.offered_load();
                let n = p.n() as f64;
                let ratio = mu / p.alpha();
                if r <= n {
                    let bl = (2.0 * std::f64::consts::PI).sqrt() * 0.5f64.exp() / mu;
                    let br = (std::f64::consts::FRAC_PI_2 * ratio).sqrt().min(1.0 / az) / mu;
                    out.push(record(suite, "f1_left_under", &h, &p, scan(&left, f1, |_| bl)));
                    out.push(record(suite, "f1_right_under", &h, &p, scan(&right, f1, |_| br)));
                }
                if r >= n {
                    let c = std::f64::consts::FRAC_PI_2.sqrt();
                    out.push(record(suite, "f1_left_over", &h, &p, scan(&left, f1, |_| c / mu)));
                    out.push(record(suite, "f1_right_over", &h, &p, scan(&right, f1, |_| c * (1.0 + ratio.sqrt()) / mu)));
                }
                let mut all: Vec<f64> = left.iter().chain(&right).copied().collect();
                all.push(a);
                out.push(record(suite, "f2", &h, &p, scan(&all, f2, |_| 3.0 / mu)));
            }
            GradientSuite::WassersteinA => {
                out.push(monitor(suite, "f1_left", &h, &p, &left, f1));
                out.push(monitor(suite, "f1_right", &h, &p, &right, f1));
                out.push(monitor(suite, "f2_left", &h, &p, &left, f2));
                out.push(monitor(suite, "f2_right", &h, &p, &right, f2));
                out.push(monitor(suite, "f3_left", &h, &p, &off_kink(&left), f3));
                out.push(monitor(suite, "f3_right", &h, &p, &off_kink(&right), f3));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stein::all_passed;

    #[test]
    fn erlang_c_suites_pass() {
        for (lam, n) in [(4.0, 5), (90.0, 100), (99.0, 100), (20.0, 100)] {
            let p = QueueParams::erlang_c(lam, 1.0, n).unwrap();
            for suite in [GradientSuite::WassersteinC, GradientSuite::KolmogorovC] {
                let recs = check_gradient_bounds(&p, suite).unwrap();
                for r in recs.iter().filter(|r| !r.passed) {
                    panic!("{r:?}");
                }
                assert!(all_passed(&recs));
            }
        }
    }

    #[test]
    fn erlang_a_suites_pass() {
        for (lam, n, alpha) in [(4.0, 5, 1.0), (90.0, 100, 0.5), (110.0, 100, 2.0), (100.0, 100, 1.0)] {
            let p = QueueParams::new(lam, 1.0, n, alpha).unwrap();
            for suite in [GradientSuite::KolmogorovA, GradientSuite::WassersteinA] {
                let recs = check_gradient_bounds(&p, suite).unwrap();
                for r in recs.iter().filter(|r| !r.passed) {
                    panic!("{r:?}");
                }
            }
        }
    }

    #[test]
    fn suite_model_mismatch() {
        let p = QueueParams::new(4.0, 1.0, 5, 1.0).unwrap();
        assert!(matches!(check_gradient_bounds(&p, GradientSuite::WassersteinC), Err(Error::Precondition(_))));
    }
}
