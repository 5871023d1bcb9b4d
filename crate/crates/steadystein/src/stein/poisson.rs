//! Solution of `b f' + (a/2) f'' = E h(Y) - h` for a diffusion density.

use crate::diffusion::DensityCurve;
use crate::error::{Error, Result};
use crate::models::Mode;
use crate::numeric::KahanSum;

use super::testfn::TestFn;

/// Step of the finite-difference stencil used for the residual check.
const FD_STEP: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct PoissonSolution<'a> {
    curve: &'a DensityCurve,
    h: TestFn,
    eh: f64,
}

pub fn solve_poisson<'a>(curve: &'a DensityCurve, h: TestFn) -> Result<PoissonSolution<'a>> {
    PoissonSolution::new(curve, h)
}

impl<'a> PoissonSolution<'a> {
    pub fn new(curve: &'a DensityCurve, h: TestFn) -> Result<Self> {
        h.validate()?;
        let mut sol = PoissonSolution { curve, h, eh: 0.0 };
        sol.eh = sol.h_integral(f64::NEG_INFINITY, f64::INFINITY);
        if !sol.eh.is_finite() {
            return Err(Error::Numeric(format!("E h(Y) is not finite for {}", h.label())));
        }
        Ok(sol)
    }

    pub fn test_fn(&self) -> TestFn {
        self.h
    }

    pub fn curve(&self) -> &DensityCurve {
        self.curve
    }

    /// `E h(Y)`.
    pub fn expected_h(&self) -> f64 {
        self.eh
    }

    /// `int_u^v h nu`.
    fn h_integral(&self, u: f64, v: f64) -> f64 {
        let mut acc = KahanSum::new();
        for (lo, hi, coeffs) in self.h.pieces() {
            let a = u.max(lo);
            let b = v.min(hi);
            if a >= b {
                continue;
            }
            for (j, c) in coeffs.iter().enumerate() {
                if *c != 0.0 {
                    acc.add(c * self.curve.partial_moment(j as u32, a, b));
                }
            }
        }
        acc.value()
    }

    fn a(&self, x: f64) -> f64 {
        self.curve.params().diff_coeff(x, self.curve.mode())
    }

    fn b(&self, x: f64) -> f64 {
        self.curve.params().drift(x)
    }

    /// `f'` from the integral over `(-inf, x]`.
    pub fn fprime_left(&self, x: f64) -> f64 {
        let inner = self.eh * self.curve.cdf(x) - self.h_integral(f64::NEG_INFINITY, x);
        2.0 * inner / (self.a(x) * self.curve.density(x))
    }

    /// `f'` from the integral over `[x, inf)`.
    pub fn fprime_right(&self, x: f64) -> f64 {
        let inner = self.eh * self.curve.sf(x) - self.h_integral(x, f64::INFINITY);
        -2.0 * inner / (self.a(x) * self.curve.density(x))
    }

    /// `f'`, using whichever integral avoids cancellation.
    pub fn fprime(&self, x: f64) -> f64 {
        if x <= 0.0 {
            self.fprime_left(x)
        } else {
            self.fprime_right(x)
        }
    }

    /// `f''` from the equation itself; at a jump of `h` this is the left limit.
    pub fn fsecond(&self, x: f64) -> f64 {
        (2.0 / self.a(x)) * (self.eh - self.h.eval(x) - self.b(x) * self.fprime(x))
    }

    /// `f'''` where it exists.
    pub fn fthird(&self, x: f64) -> f64 {
        let p = self.curve.params();
        let mode = self.curve.mode();
        let a = self.a(x);
        let b = self.b(x);
        let da = p.diff_coeff_slope(x, mode);
        let db = p.drift_slope(x);
        let f1 = self.fprime(x);
        let f2 = self.fsecond(x);
        let ratio_slope = 2.0 * (db * a - b * da) / (a * a);
        -ratio_slope * f1 - 2.0 * b / a * f2 - 2.0 / a * self.h.deriv(x) - 2.0 * da / (a * a) * (self.eh - self.h.eval(x))
    }

    /// `f''` by a fourth-order central difference of `f'`.
    pub fn fsecond_numeric(&self, x: f64) -> f64 {
        let s = FD_STEP;
        let f = |t: f64| self.fprime(t);
        (f(x - 2.0 * s) - 8.0 * f(x - s) + 8.0 * f(x + s) - f(x + 2.0 * s)) / (12.0 * s)
    }

    /// Whether the stencil around `x` avoids every kink of `h`, `a` and `b`.
    pub fn stencil_is_smooth(&self, x: f64) -> bool {
        let margin = 3.0 * FD_STEP;
        let mut kinks = self.h.kinks();
        kinks.push(-self.curve.params().zeta());
        if self.curve.mode() == Mode::StateDependent {
            kinks.extend(self.curve.params().breakpoints());
        }
        kinks.iter().all(|k| (x - k).abs() > margin)
    }

    /// `|b f' + (a/2) f'' - (E h - h)|` with `f''` from finite differences.
    pub fn ode_residual(&self, x: f64) -> f64 {
        let lhs = self.b(x) * self.fprime(x) + 0.5 * self.a(x) * self.fsecond_numeric(x);
        (lhs - (self.eh - self.h.eval(x))).abs()
    }
}

/// Evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Interval carrying all but about `2 * tail` of the density's mass.
pub fn central_window(curve: &DensityCurve, tail: f64) -> (f64, f64) {
    let lo = crate::numeric::bisect(|x| curve.cdf(x) - tail, curve.lower_cut(), 0.0f64.max(-curve.params().zeta()), 1e-10);
    let hi = crate::numeric::bisect(|x| tail - curve.sf(x), lo, curve.upper_cut(), 1e-10);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::QueueParams;

    fn curves() -> Vec<DensityCurve> {
        let mut out = Vec::new();
        for (lam, n, alpha) in [(4.0, 5, 0.0), (95.0, 100, 0.0), (6.0, 5, 2.0), (80.0, 100, 0.5)] {
            let p = QueueParams::new(lam, 1.0, n, alpha).unwrap();
            for mode in Mode::ALL {
                out.push(DensityCurve::new(&p, mode).unwrap());
            }
        }
        out
    }

    #[test]
    fn two_forms_agree_and_residual_small() {
        for c in curves() {
            let mut fns = TestFn::lipschitz_family();
            fns.push(TestFn::Indicator { a: 0.3 });
            for h in fns {
                let s = PoissonSolution::new(&c, h).unwrap();
                for x in linspace(-1.0, 1.0, 21) {
                    let l = s.fprime_left(x);
                    let r = s.fprime_right(x);
                    assert!((l - r).abs() < 1e-8 * (1.0 + l.abs()), "{:?} {h:?} x={x}: {l} vs {r}", c.params());
                }
                let (lo, hi) = central_window(&c, 1e-6);
                for x in linspace(lo, hi, 200) {
                    if s.stencil_is_smooth(x) {
                        let r = s.ode_residual(x);
                        assert!(r < 1e-7, "{:?} {:?} {h:?} x={x}: residual {r}", c.params(), c.mode());
                    }
                }
            }
        }
    }

    #[test]
    fn expected_h_matches_quadrature() {
        for c in curves() {
            for h in TestFn::lipschitz_family() {
                let s = PoissonSolution::new(&c, h).unwrap();
                let q = c.expect(|x| h.eval(x), &h.kinks()).unwrap();
                assert!((s.expected_h() - q).abs() < 1e-9, "{h:?}: {} vs {q}", s.expected_h());
            }
        }
    }

    #[test]
    fn indicator_second_derivative_jump() {
        let p = QueueParams::erlang_c(4.0, 1.0, 5).unwrap();
        let c = DensityCurve::new(&p, Mode::Constant).unwrap();
        let a = 0.2;
        let s = PoissonSolution::new(&c, TestFn::Indicator { a }).unwrap();
        let left = s.fsecond(a);
        let right = s.fsecond(a + 1e-12);
        assert!((right - left - 1.0 / p.mu()).abs() < 1e-6, "{left} {right}");
    }

    #[test]
    fn lipschitz_second_derivative_continuous_at_boundary() {
        let p = QueueParams::erlang_c(40.0, 1.0, 47).unwrap();
        let c = DensityCurve::new(&p, Mode::Constant).unwrap();
        let z = -p.zeta();
        for h in TestFn::lipschitz_family() {
            let s = PoissonSolution::new(&c, h).unwrap();
            let d = (s.fsecond(z - 1e-9) - s.fsecond(z + 1e-9)).abs();
            assert!(d < 1e-6, "{h:?}: jump {d}");
        }
    }
}
