use serde::Serialize;

use crate::birth_death::LatticeDist;
use crate::diffusion::DensityCurve;
use crate::error::{Error, Result};
use crate::models::{Mode, QueueParams};
use crate::numeric::{ln_add_exp, KahanSum};

use super::CheckRecord;

/// `sum_k pi_k [lambda (f(x_{k+1}) - f(x_k)) + d(k) (f(x_{k-1}) - f(x_k))]`.
pub fn bar_residual<F: Fn(f64) -> f64>(lattice: &LatticeDist, f: F) -> f64 {
    let p = lattice.params();
    let lam = p.lambda();
    let mut acc = KahanSum::new();
    let mut f_prev = f(lattice.lattice_point(0));
    let mut f_cur = f_prev;
    for (k, &pk) in lattice.probs().iter().enumerate() {
        let f_next = f(lattice.lattice_point(k + 1));
        if pk > 0.0 {
            acc.add(pk * lam * (f_next - f_cur));
            if k > 0 {
                acc.add(pk * p.departure_rate(k as f64) * (f_prev - f_cur));
            }
        }
        f_prev = f_cur;
        f_cur = f_next;
    }
    acc.value()
}

/// `|E[|(X~ + zeta) 1(X~ <= -zeta)|] - |zeta||`, which vanishes for Erlang-C.
pub fn idle_identity_error(lattice: &LatticeDist) -> Result<f64> {
    let p = lattice.params();
    if !p.is_erlang_c() {
        return Err(Error::Precondition("the idle-server identity holds for Erlang-C only".into()));
    }
    let z = p.zeta();
    let n = p.n() as usize;
    let lhs: f64 = crate::numeric::ksum(
        lattice
            .probs()
            .iter()
            .enumerate()
            .take(n + 1)
            .map(|(k, &pk)| pk * (lattice.lattice_point(k) + z).abs()),
    );
    Ok((lhs - z.abs()).abs())
}

fn expect_below(lattice: &LatticeDist, g: impl Fn(f64) -> f64) -> f64 {
    let n = lattice.params().n() as usize;
    crate::numeric::ksum(
        lattice
            .probs()
            .iter()
            .enumerate()
            .take(n + 1)
            .map(|(k, &pk)| pk * g(lattice.lattice_point(k))),
    )
}

fn expect_above(lattice: &LatticeDist, g: impl Fn(f64) -> f64) -> f64 {
    let n = lattice.params().n() as usize;
    crate::numeric::ksum(
        lattice
            .probs()
            .iter()
            .enumerate()
            .skip(n)
            .map(|(k, &pk)| pk * g(lattice.lattice_point(k))),
    )
}

/// The explicit moment bounds for the customer count, split at `-zeta`.
pub fn moment_bounds(lattice: &LatticeDist) -> Vec<CheckRecord> {
    let p = *lattice.params();
    let d = p.delta();
    let d2 = d * d;
    let z = p.zeta();
    let az = z.abs();
    let mu = p.mu();
    let alpha = p.alpha();
    let r = p.offered_load();
    let n = p.n() as f64;
    let below_sq = expect_below(lattice, |x| x * x);
    let below_abs = expect_below(lattice, f64::abs);
    let above_abs = expect_above(lattice, f64::abs);
    let idle = expect_below(lattice, |_| 1.0);
    let mut out = Vec::new();
    let mut push = |suite: &str, name: &str, v: f64, b: f64| {
        out.push(CheckRecord::inequality(suite, name, Some(p), v, b));
    };
    if p.is_erlang_c() {
        let s = "moments_c";
        let q = 4.0 / 3.0 + 2.0 * d2 / 3.0;
        push(s, "x2_below", below_sq, q);
        push(s, "abs_below_const", below_abs, q.sqrt());
        push(s, "abs_below_zeta", below_abs, 2.0 * az);
        push(s, "abs_above", above_abs, 1.0 / az + d2 / (4.0 * az) + d / 2.0);
        push(s, "idle_prob", idle, (2.0 + d) * az);
        return out;
    }
    let am = alpha / mu;
    let ma = mu / alpha;
    let shifted_above_sq = expect_above(lattice, |x| (x + z) * (x + z));
    let shifted_above = expect_above(lattice, |x| x + z);
    let shifted_below_sq = expect_below(lattice, |x| (x + z) * (x + z));
    let shifted_below_abs = expect_below(lattice, |x| (x + z).abs());
    if r <= n {
        let s = "moments_a_under";
        let sq = (am * d2 + d2 + 4.0) / 3.0;
        let t = (ma * d2 + 4.0 * ma + d2) / 3.0;
        push(s, "x2_below", below_sq, sq);
        push(s, "abs_below_const", below_abs, sq.sqrt());
        push(s, "abs_below_zeta", below_abs, 2.0 * az + am * t.sqrt());
        push(s, "abs_above", above_abs, (1.0 + d2 / 4.0 + d / 2.0 * sq.sqrt()) * (mu / mu.min(alpha)).min(1.0 / az));
        push(s, "shift_sq_above", shifted_above_sq, t);
        push(s, "shift_above_const", shifted_above, t.sqrt());
        push(s, "shift_above_zeta", shifted_above, (d2 / 4.0 * am + d2 / 4.0 + 1.0) / az);
        push(s, "idle_prob", idle, (2.0 + d) * (az + am * t.sqrt()));
    }
    if r >= n {
        let s = "moments_a_over";
        let u = (d2 + 4.0 * ma) / 3.0;
        let above_sq = expect_above(lattice, |x| x * x);
        push(s, "abs_below_const", below_abs, ((alpha * d2 / 4.0 + mu) / alpha.min(mu)).sqrt());
        push(s, "abs_below_zeta", below_abs, (d2 / 4.0 + ma) / az);
        push(s, "x2_above", above_sq, u);
        push(s, "abs_above", above_abs, u.sqrt());
        push(s, "shift_below_zeta", shifted_below_abs, (d2 / 4.0 + 1.0) / az);
        push(s, "shift_sq_below", shifted_below_sq, d2 / 4.0 * am + 1.0);
        push(s, "shift_below_const", shifted_below_abs, (d2 / 4.0 * am + 1.0).sqrt());
        push(s, "shift_below_ratio", shifted_below_abs, am * u.sqrt());
        let m = (1.0 / z).max(am).min(am.sqrt());
        push(s, "idle_prob", idle, (3.0 + d) * 16.0 / 2f64.sqrt() * (d2 / 4.0 + 1.0) * m);
    }
    out
}

/// Upper bounds on the diffusion density.
pub fn density_bounds(params: &QueueParams) -> Result<Vec<CheckRecord>> {
    let p = *params;
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let mut out = Vec::new();
    let constant = DensityCurve::new(&p, Mode::Constant)?.sup_density();
    let r = p.offered_load();
    let n = p.n() as f64;
    if p.is_erlang_c() {
        out.push(CheckRecord::inequality("density_bounds", "constant_c", Some(p), constant, c));
    } else {
        if r <= n {
            out.push(CheckRecord::inequality("density_bounds", "constant_a_under", Some(p), constant, c));
        }
        if r >= n {
            let b = c * (p.alpha() / p.mu()).sqrt();
            out.push(CheckRecord::inequality("density_bounds", "constant_a_over", Some(p), constant, b));
        }
    }
    let state = DensityCurve::new(&p, Mode::StateDependent)?.sup_density();
    if p.is_erlang_c() && r >= 1.0 {
        out.push(CheckRecord::inequality("density_bounds", "state_dependent_c", Some(p), state, 4.0));
    } else {
        out.push(CheckRecord::monitored("density_bounds", "state_dependent_sup", Some(p), state));
    }
    Ok(out)
}

/// `|zeta|^m E[Y^m]` for the constant-coefficient Erlang-C diffusion; tends to `m!` as `zeta -> 0`.
pub fn order_of_magnitude(params: &QueueParams, m: u32) -> Result<f64> {
    if !params.is_erlang_c() {
        return Err(Error::Precondition("defined for Erlang-C".into()));
    }
    let curve = DensityCurve::new(params, Mode::Constant)?;
    Ok(params.zeta().abs().powi(m as i32) * curve.moment(m)?)
}

/// Exponential-moment check for the lattice law beyond `-zeta`.
#[derive(Clone, Debug, Serialize)]
pub struct MgfCheck {
    pub params: QueueParams,
    pub gamma: f64,
    /// `E[exp((theta - 1/gamma) W) 1(W >= -zeta)]` with `theta = 2|zeta| / (2 + delta |zeta|)`.
    pub lhs_shifted: f64,
    /// `lhs_shifted / (gamma exp(2 zeta^2 / (2 + delta |zeta|)))`, a lower estimate of `C`.
    pub constant_shifted: f64,
    /// `E[exp(theta W) 1(W >= -zeta)]`.
    pub lhs: f64,
    /// `lhs / (delta^-2 (1/|zeta| + delta)^3 exp(2 zeta^2 / (2 + delta |zeta|)))`.
    pub constant: f64,
}

/// `ln E[exp(t W) 1(W >= -zeta)]` with the truncated tail added geometrically.
fn ln_exp_moment_above(lattice: &LatticeDist, t: f64) -> Result<f64> {
    let p = lattice.params();
    let n = p.n() as usize;
    let mut acc = f64::NEG_INFINITY;
    for (k, &pk) in lattice.probs().iter().enumerate().skip(n) {
        if pk > 0.0 {
            acc = ln_add_exp(acc, pk.ln() + t * lattice.lattice_point(k));
        }
    }
    let km = lattice.k_max();
    let r = lattice.tail_ratio() * (t * p.delta()).exp();
    if r >= 1.0 {
        return Err(Error::Numeric(format!("exponential moment diverges: ratio {r}")));
    }
    let last = lattice.pmf_at(km);
    if last > 0.0 {
        acc = ln_add_exp(acc, last.ln() + t * lattice.lattice_point(km) + r.ln() - (-r).ln_1p());
    }
    Ok(acc)
}

pub fn mgf_check(lattice: &LatticeDist, gamma: f64) -> Result<MgfCheck> {
    let p = *lattice.params();
    if !p.is_erlang_c() {
        return Err(Error::Precondition("the exponential-moment bound is for Erlang-C".into()));
    }
    if p.rho() < 0.1 {
        return Err(Error::Precondition(format!("rho = {} below 0.1", p.rho())));
    }
    let d = p.delta();
    let az = p.zeta().abs();
    let threshold = (2.0 + d * az) / (2.0 * az);
    if !(gamma > threshold) {
        return Err(Error::Precondition(format!("gamma = {gamma} must exceed {threshold}")));
    }
    let theta = 2.0 * az / (2.0 + d * az);
    let ln_e = 2.0 * az * az / (2.0 + d * az);
    let ln_lhs_z = ln_exp_moment_above(lattice, theta - 1.0 / gamma)?;
    let ln_lhs = ln_exp_moment_above(lattice, theta)?;
    let ln_pref = -2.0 * d.ln() + 3.0 * (1.0 / az + d).ln();
    Ok(MgfCheck {
        params: p,
        gamma,
        lhs_shifted: ln_lhs_z.exp(),
        constant_shifted: (ln_lhs_z - gamma.ln() - ln_e).exp(),
        lhs: ln_lhs.exp(),
        constant: (ln_lhs - ln_pref - ln_e).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::birth_death::stationary;
    use crate::stein::all_passed;

    #[test]
    fn bar_vanishes_for_polynomials() {
        for (lam, n, alpha) in [(4.0, 5, 0.0), (480.0, 500, 0.0), (6.0, 5, 2.0), (4900.0, 5000, 0.0)] {
            let p = QueueParams::new(lam, 1.0, n, alpha).unwrap();
            let l = stationary(&p, 1e-14).unwrap();
            assert!(bar_residual(&l, |x| x).abs() < 1e-9);
            assert!(bar_residual(&l, |x| x * x).abs() < 1e-9);
            assert!(bar_residual(&l, |x| x * x * x).abs() < 1e-8);
        }
    }

    #[test]
    fn idle_identity() {
        let l = stationary(&QueueParams::erlang_c(90.0, 1.0, 100).unwrap(), 1e-14).unwrap();
        assert!(idle_identity_error(&l).unwrap() < 1e-9);
    }

    #[test]
    fn moment_bounds_hold() {
        for (lam, n, alpha) in [(4.0, 5, 0.0), (99.0, 100, 0.0), (3.0, 100, 0.0), (6.0, 5, 2.0), (4.0, 5, 0.5), (100.0, 100, 1.0)] {
            let p = QueueParams::new(lam, 1.0, n, alpha).unwrap();
            let l = stationary(&p, 1e-14).unwrap();
            let recs = moment_bounds(&l);
            assert!(!recs.is_empty());
            for r in &recs {
                assert!(r.passed, "{r:?}");
            }
        }
    }

    #[test]
    fn density_bound_suite() {
        for (lam, n, alpha) in [(1.0, 2, 0.0), (4.0, 5, 0.0), (6.0, 5, 2.0), (6.0, 5, 0.3), (99.0, 100, 0.0)] {
            let p = QueueParams::new(lam, 1.0, n, alpha).unwrap();
            let recs = density_bounds(&p).unwrap();
            assert!(all_passed(&recs), "{recs:?}");
        }
    }

    #[test]
    fn order_of_magnitude_limit() {
        let n = 1_000_000u64;
        let sq = (n as f64).sqrt();
        // zeta = (R - n)/sqrt(R) close to -1e-3
        let r = n as f64 - 1e-3 * sq;
        let p = QueueParams::erlang_c(r, 1.0, n).unwrap();
        let v = order_of_magnitude(&p, 1).unwrap();
        assert!((v - 1.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn mgf_constant_is_finite() {
        let l = stationary(&QueueParams::erlang_c(90.0, 1.0, 100).unwrap(), 1e-14).unwrap();
        let p = l.params();
        let g = 2.0 * (2.0 + p.delta() * p.zeta().abs()) / (2.0 * p.zeta().abs());
        let c = mgf_check(&l, g).unwrap();
        assert!(c.constant_shifted.is_finite() && c.constant.is_finite());
        assert!(c.lhs_shifted < c.lhs);
        assert!(matches!(mgf_check(&l, 0.5 * g), Err(Error::Precondition(_))));
    }
}
