//! Small numerical kernels: compensated summation, adaptive Simpson
//! quadrature and tail-safe error-function helpers.

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}

pub fn ksum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

/// Error reported when adaptive quadrature hits its depth limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadFailure {
    pub lo: f64,
    pub hi: f64,
    pub estimate: f64,
}

/// Adaptive Simpson on `[lo, hi]` with absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> Result<f64, QuadFailure> {
    if hi == lo {
        return Ok(0.0);
    }
    if hi < lo {
        return simpson(f, hi, lo, tol).map(|v| -v);
    }
    // Seed with a few panels so narrow features are not skipped.
    const SEED: usize = 8;
    let h = (hi - lo) / SEED as f64;
    let mut acc = KahanSum::new();
    for i in 0..SEED {
        let a = lo + h * i as f64;
        let b = if i + 1 == SEED { hi } else { a + h };
        let fa = f(a);
        let fb = f(b);
        let m = 0.5 * (a + b);
        let fm = f(m);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        acc.add(simpson_rec(f, a, b, fa, fm, fb, whole, tol / SEED as f64, 48)?);
    }
    Ok(acc.value())
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, QuadFailure> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if diff.abs() <= 15.0 * tol || diff.abs() <= 1e-12 * (left + right).abs() || (b - a) <= 1e-14 * (a.abs() + b.abs()) {
        return Ok(left + right + diff / 15.0);
    }
    if depth == 0 {
        return Err(QuadFailure { lo: a, hi: b, estimate: left + right });
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// `ln(erfc(x))`, accurate far into the right tail.
pub fn ln_erfc(x: f64) -> f64 {
    if x < 25.0 {
        libm::erfc(x).ln()
    } else {
        // Asymptotic series: erfc(x) ~ exp(-x^2)/(x sqrt(pi)) * (1 - 1/(2x^2) + 3/(4x^4) - ...)
        let x2 = x * x;
        let inv = 1.0 / (2.0 * x2);
        let series = 1.0 - inv + 3.0 * inv * inv - 15.0 * inv * inv * inv + 105.0 * inv.powi(4);
        -x2 - x.ln() - 0.5 * std::f64::consts::PI.ln() + series.ln()
    }
}

/// Standard normal density.
pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(Z <= x)` for standard normal `Z`.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `ln P(Z >= x)`.
pub fn ln_norm_sf(x: f64) -> f64 {
    ln_erfc(x / std::f64::consts::SQRT_2) - std::f64::consts::LN_2
}

/// `P(l <= Z <= h)` computed on the side of the mean that avoids cancellation.
pub fn norm_interval(l: f64, h: f64) -> f64 {
    if l >= h {
        return 0.0;
    }
    if l >= 0.0 {
        0.5 * (libm::erfc(l / std::f64::consts::SQRT_2) - libm::erfc(h / std::f64::consts::SQRT_2))
    } else if h <= 0.0 {
        0.5 * (libm::erfc(-h / std::f64::consts::SQRT_2) - libm::erfc(-l / std::f64::consts::SQRT_2))
    } else {
        1.0 - norm_cdf(l) - (1.0 - norm_cdf(h))
    }
}

/// `ln P(l <= Z <= h)`, stable when the interval sits deep in either tail.
pub fn ln_norm_interval(l: f64, h: f64) -> f64 {
    if l >= h {
        return f64::NEG_INFINITY;
    }
    if l >= 0.0 {
        let a = ln_norm_sf(l);
        a + (-(ln_norm_sf(h) - a).exp()).ln_1p()
    } else if h <= 0.0 {
        ln_norm_interval(-h, -l)
    } else {
        norm_interval(l, h).ln()
    }
}

/// `ln(exp(a) + exp(b))`.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln(1 + t) - t` without cancellation for small `t`.
pub fn log1p_minus(t: f64) -> f64 {
    if t.abs() < 1e-4 {
        let t2 = t * t;
        -t2 / 2.0 + t2 * t / 3.0 - t2 * t2 / 4.0 + t2 * t2 * t / 5.0
    } else {
        t.ln_1p() - t
    }
}

/// Find the root of a monotone function on `[lo, hi]` by bisection.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol {
            return mid;
        }
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
