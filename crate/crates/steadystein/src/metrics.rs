//! Distances and error measures between an exact lattice law and a diffusion density.

use serde::Serialize;

use crate::birth_death::{Centering, LatticeDist};
use crate::diffusion::DensityCurve;
use crate::error::{Error, Result};
use crate::models::QueueParams;
use crate::numeric::{bisect, KahanSum};

/// A computed error with the theorem bound that applies to it, if any.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorReport {
    pub metric: String,
    pub value: f64,
    pub params: QueueParams,
    pub bound: Option<f64>,
    pub bound_satisfied: Option<bool>,
}

impl ErrorReport {
    pub fn new(metric: &str, value: f64, params: QueueParams, bound: Option<f64>) -> Self {
        ErrorReport {
            metric: metric.to_string(),
            value,
            params,
            bound,
            bound_satisfied: bound.map(|b| value <= b),
        }
    }
}

/// Wasserstein bound for Erlang-C with the constant-coefficient diffusion.
pub fn erlang_c_wasserstein_bound(r: f64) -> f64 {
    190.0 / r.sqrt()
}

/// Kolmogorov bound for Erlang-C with the constant-coefficient diffusion.
pub fn erlang_c_kolmogorov_bound(r: f64) -> f64 {
    156.0 / r.sqrt()
}

/// `int_u^v (F_Y(x) - c) dx` where `g_u = F_Y(u) - c`.
fn cdf_gap_integral(curve: &DensityCurve, u: f64, v: f64, g_u: f64) -> f64 {
    let p = curve.interval_prob(u, v);
    let m1 = curve.partial_moment(1, u, v);
    (v - u) * g_u + (v * p - m1)
}

/// `int |F_Y(x) - c| dx` over `[u, v]` where `F_X = c` is constant.
fn cell_distance(curve: &DensityCurve, u: f64, v: f64, c: f64) -> f64 {
    let g_u = curve.cdf(u) - c;
    let g_v = g_u + curve.interval_prob(u, v);
    if g_u >= 0.0 {
        return cdf_gap_integral(curve, u, v, g_u);
    }
    if g_v <= 0.0 {
        return -cdf_gap_integral(curve, u, v, g_u);
    }
    let x = bisect(|t| g_u + curve.interval_prob(u, t), u, v, 1e-13 * (1.0 + v.abs()));
    -cdf_gap_integral(curve, u, x, g_u) + cdf_gap_integral(curve, x, v, 0.0)
}

/// `W1 = int |F_X - F_Y| dx`, exact between lattice points.
pub fn wasserstein1(lattice: &LatticeDist, curve: &DensityCurve) -> f64 {
    let probs = lattice.probs();
    let kmax = lattice.k_max();
    let x0 = lattice.lattice_point(0);
    let mut acc = KahanSum::new();
    // Left of the lattice F_X = 0.
    let p = curve.interval_prob(f64::NEG_INFINITY, x0);
    acc.add(x0 * p - curve.partial_moment(1, f64::NEG_INFINITY, x0));
    let mut fx = KahanSum::new();
    for k in 0..kmax {
        fx.add(probs[k]);
        let u = lattice.lattice_point(k);
        let v = lattice.lattice_point(k + 1);
        acc.add(cell_distance(curve, u, v, fx.value().min(1.0)));
    }
    // Right of the lattice F_X = 1 up to the truncated tail.
    let xk = lattice.lattice_point(kmax);
    acc.add(curve.partial_moment(1, xk, f64::INFINITY) - xk * curve.sf(xk));
    acc.value()
}

/// `sup_x |F_X(x) - F_Y(x)|`, attained at a lattice point from one side.
pub fn kolmogorov(lattice: &LatticeDist, curve: &DensityCurve) -> f64 {
    let mut fx = 0.0;
    let mut worst: f64 = 0.0;
    let mut fy = curve.cdf(lattice.lattice_point(0));
    for (k, &pk) in lattice.probs().iter().enumerate() {
        if k > 0 {
            let u = lattice.lattice_point(k - 1);
            let v = lattice.lattice_point(k);
            fy += curve.interval_prob(u, v);
        }
        worst = worst.max((fx - fy).abs());
        fx += pk;
        worst = worst.max((fx - fy).abs());
    }
    worst
}

/// `sup_k |pi_k - P(Y in [x_k - delta/2, x_k + delta/2])|`.
pub fn pmf_sup_error(lattice: &LatticeDist, curve: &DensityCurve) -> f64 {
    let h = 0.5 * lattice.params().delta();
    lattice
        .probs()
        .iter()
        .enumerate()
        .map(|(k, &pk)| {
            let x = lattice.lattice_point(k);
            (pk - curve.interval_prob(x - h, x + h)).abs()
        })
        .fold(0.0, f64::max)
}

/// `ln P(X~ >= z) - ln P(Y >= z)`, finite even when both tails underflow.
pub fn ln_tail_ratio(lattice: &LatticeDist, curve: &DensityCurve, z: f64) -> Result<f64> {
    let px = lattice.tail_prob(z);
    let ln_py = curve.ln_sf(z);
    if !(px > 0.0) || !ln_py.is_finite() {
        return Err(Error::Numeric(format!("tail probability at z = {z} is zero")));
    }
    Ok(px.ln() - ln_py)
}

/// `|P(X~ >= z) / P(Y >= z) - 1|`.
pub fn tail_ratio_error(lattice: &LatticeDist, curve: &DensityCurve, z: f64) -> Result<f64> {
    Ok(ln_tail_ratio(lattice, curve, z)?.exp_m1().abs())
}

/// `|P(Y >= z) / P(X~ >= z) - 1|`, the ratio taken the other way round.
pub fn reverse_tail_ratio_error(lattice: &LatticeDist, curve: &DensityCurve, z: f64) -> Result<f64> {
    Ok((-ln_tail_ratio(lattice, curve, z)?).exp_m1().abs())
}

/// `|E X~^m - E Y^m|` with fluid centering.
pub fn moment_error(lattice: &LatticeDist, curve: &DensityCurve, m: u32) -> Result<f64> {
    if m == 0 {
        return Ok(0.0);
    }
    let a = lattice.scaled_moment(m, Centering::Fluid)?;
    let b = curve.moment(m)?;
    Ok((a - b).abs())
}

/// Finitely supported law on the real line.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteLaw {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteLaw {
    /// Atoms `(x, p)`; probabilities must be non-negative and sum to one.
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.iter().any(|&(x, p)| !x.is_finite() || !(p >= 0.0)) {
            return Err(Error::InvalidParam("atoms need finite locations and non-negative mass".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!("atom masses sum to {total}")));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(DiscreteLaw { atoms })
    }

    pub fn point(x: f64) -> Self {
        DiscreteLaw { atoms: vec![(x, 1.0)] }
    }

    pub fn from_lattice(lattice: &LatticeDist) -> Self {
        let atoms = lattice
            .probs()
            .iter()
            .enumerate()
            .map(|(k, &p)| (lattice.lattice_point(k), p))
            .collect();
        DiscreteLaw { atoms }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    fn merged_steps(a: &Self, b: &Self) -> Vec<(f64, f64, f64)> {
        let mut xs: Vec<f64> = a.atoms.iter().chain(&b.atoms).map(|t| t.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let (mut i, mut j) = (0, 0);
        let (mut fa, mut fb) = (0.0, 0.0);
        xs.into_iter()
            .map(|x| {
                while i < a.atoms.len() && a.atoms[i].0 <= x {
                    fa += a.atoms[i].1;
                    i += 1;
                }
                while j < b.atoms.len() && b.atoms[j].0 <= x {
                    fb += b.atoms[j].1;
                    j += 1;
                }
                (x, fa, fb)
            })
            .collect()
    }
}

pub fn wasserstein1_discrete(a: &DiscreteLaw, b: &DiscreteLaw) -> f64 {
    let steps = DiscreteLaw::merged_steps(a, b);
    let mut acc = KahanSum::new();
    for w in steps.windows(2) {
        acc.add((w[0].1 - w[0].2).abs() * (w[1].0 - w[0].0));
    }
    acc.value()
}

pub fn kolmogorov_discrete(a: &DiscreteLaw, b: &DiscreteLaw) -> f64 {
    DiscreteLaw::merged_steps(a, b)
        .into_iter()
        .map(|(_, fa, fb)| (fa - fb).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::birth_death::stationary;
    use crate::diffusion::DensityCurve;
    use crate::models::Mode;
    use approx::assert_relative_eq;

    fn setup(lam: f64, n: u64, mode: Mode) -> (LatticeDist, DensityCurve) {
        let p = QueueParams::erlang_c(lam, 1.0, n).unwrap();
        (stationary(&p, 1e-14).unwrap(), DensityCurve::new(&p, mode).unwrap())
    }

    #[test]
    fn point_masses() {
        let a = DiscreteLaw::point(0.0);
        let b = DiscreteLaw::point(1.0);
        assert!((wasserstein1_discrete(&a, &b) - 1.0).abs() < 1e-15);
        assert_eq!(wasserstein1_discrete(&a, &a), 0.0);
        assert_eq!(kolmogorov_discrete(&a, &b), 1.0);
    }

    #[test]
    fn small_system_against_brute_force() {
        for mode in Mode::ALL {
            let (l, c) = setup(4.0, 5, mode);
            let law = DiscreteLaw::from_lattice(&l);
            let fx = |x: f64| law.atoms().iter().take_while(|a| a.0 <= x).map(|a| a.1).sum::<f64>();
            let (lo, hi) = (c.lower_cut(), l.lattice_point(l.k_max()));
            let n = 200_000;
            let mut k = 0.0f64;
            for i in 0..=n {
                let x = lo + (hi - lo) * i as f64 / n as f64;
                k = k.max((fx(x) - c.cdf(x)).abs());
            }
            let mut below = 0.0;
            for &(x, w) in law.atoms() {
                k = k.max((below - c.cdf(x)).abs());
                below += w;
                k = k.max((below - c.cdf(x)).abs());
            }
            assert!((kolmogorov(&l, &c) - k).abs() < 1e-9, "{mode:?}");
            let h = 0.5 * l.params().delta();
            let pmf = (0..l.probs().len())
                .map(|j| {
                    let x = l.lattice_point(j);
                    let mass = crate::numeric::simpson(&|t| c.density(t), x - h, x + h, 1e-14).unwrap();
                    (l.pmf_at(j) - mass).abs()
                })
                .fold(0.0, f64::max);
            assert!((pmf_sup_error(&l, &c) - pmf).abs() < 1e-10, "{mode:?}");
            let ey = c.expect(|x| x, &[]).unwrap();
            let ex = l.expect(|x| x);
            assert!((moment_error(&l, &c, 1).unwrap() - (ex - ey).abs()).abs() < 1e-9, "{mode:?}");
        }
    }

    #[test]
    fn wasserstein_matches_brute_quadrature() {
        let (l, c) = setup(8.0, 10, Mode::StateDependent);
        let w = wasserstein1(&l, &c);
        let law = DiscreteLaw::from_lattice(&l);
        let fx = |x: f64| law.atoms().iter().take_while(|a| a.0 <= x).map(|a| a.1).sum::<f64>();
        let lo = c.lower_cut();
        let hi = l.lattice_point(l.k_max()).max(c.upper_cut());
        let n = 400_000;
        let h = (hi - lo) / n as f64;
        let brute: f64 = (0..n).map(|i| lo + (i as f64 + 0.5) * h).map(|x| (fx(x) - c.cdf(x)).abs() * h).sum();
        assert!((w - brute).abs() < 1e-5, "{w} vs {brute}");
        assert!(w <= erlang_c_wasserstein_bound(8.0));
    }

    #[test]
    fn tail_ratios_against_direct_sums() {
        let p = QueueParams::erlang_c(60.0, 1.0, 100).unwrap();
        let l = stationary(&p, 1e-14).unwrap();
        let k0 = l.lattice_floor(2.4);
        let z = l.lattice_point(k0);
        let px: f64 = l.probs()[k0..].iter().sum();
        assert_relative_eq!(l.tail_prob(z), px, max_relative = 1e-10);
        for mode in Mode::ALL {
            let c = DensityCurve::new(&p, mode).unwrap();
            let py = crate::numeric::simpson(&|t| c.density(t), z, c.upper_cut(), 1e-16).unwrap();
            assert_relative_eq!(reverse_tail_ratio_error(&l, &c, z).unwrap(), (py / px - 1.0).abs(), max_relative = 1e-7);
            assert_relative_eq!(tail_ratio_error(&l, &c, z).unwrap(), (px / py - 1.0).abs(), max_relative = 1e-7);
        }
    }

    #[test]
    fn tail_ratio_against_itself_and_beyond_lattice() {
        let (l, c) = setup(60.0, 100, Mode::Constant);
        assert!(tail_ratio_error(&l, &c, 0.0).unwrap() < 0.5);
        let far = l.lattice_point(l.k_max() + 10);
        assert!(matches!(tail_ratio_error(&l, &c, far), Err(Error::Numeric(_))));
    }
}
