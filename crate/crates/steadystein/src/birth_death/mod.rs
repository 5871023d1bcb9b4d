//! Exact stationary distribution of the Erlang-A/C customer-count chain.

mod c2;

pub use c2::{c2_stationary, C2Dist, Coxian2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::QueueParams;
use crate::numeric::{ksum, KahanSum};

pub const DEFAULT_TAIL_EPS: f64 = 1e-14;
pub const K_MAX_CAP: usize = 10_000_000;

/// Centering used when scaling the customer count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// `delta (X - x_fluid)`
    Fluid,
    /// `delta (X - R)`
    OfferedLoad,
}

/// Stationary pmf of the customer count on `0..=k_max`.
#[derive(Clone, Debug)]
pub struct LatticeDist {
    params: QueueParams,
    probs: Vec<f64>,
    /// `sf[k] = P(X >= k)`, built from the top so small tails keep precision.
    sf: Vec<f64>,
    tail_mass_bound: f64,
    /// Geometric ratio bounding `pi_{k+1} / pi_k` beyond `k_max`.
    tail_ratio: f64,
}

/// Stationary distribution with truncation when the analytic tail bound drops below `tail_eps`.
pub fn stationary(params: &QueueParams, tail_eps: f64) -> Result<LatticeDist> {
    if !(tail_eps > 0.0 && tail_eps <= 1e-6) {
        return Err(Error::InvalidParam(format!("tail_eps must lie in (0, 1e-6], got {tail_eps}")));
    }
    let lam = params.lambda();
    let n = params.n() as usize;
    let ln_lam = lam.ln();
    let ln_eps = tail_eps.ln();

    let mut lp: Vec<f64> = vec![0.0];
    // Running log of the unnormalized partial sum.
    let mut ln_sum = 0.0f64;
    let mut k = 0usize;
    let tail_ratio;
    loop {
        k += 1;
        if k > K_MAX_CAP {
            return Err(Error::Truncation(format!(
                "tail bound above {tail_eps:e} at the cap k_max = {K_MAX_CAP}"
            )));
        }
        let d = params.departure_rate(k as f64);
        let v = lp[k - 1] + ln_lam - d.ln();
        lp.push(v);
        ln_sum = crate::numeric::ln_add_exp(ln_sum, v);
        if k > n {
            // Ratio of successive terms is non-increasing beyond n.
            let q = lam / params.departure_rate((k + 1) as f64);
            if q < 1.0 {
                let ln_bound = v + q.ln() - (-q).ln_1p();
                if ln_bound - ln_sum < ln_eps {
                    tail_ratio = q;
                    break;
                }
            }
        }
    }
    let m = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lp.iter().map(|v| (v - m).exp()).collect();
    let z = ksum(w.iter().copied());
    let probs: Vec<f64> = w.iter().map(|v| v / z).collect();
    let last = *probs.last().unwrap();
    let tail_mass_bound = last * tail_ratio / (1.0 - tail_ratio);
    Ok(LatticeDist::from_parts(*params, probs, tail_mass_bound, tail_ratio))
}

impl LatticeDist {
    fn from_parts(params: QueueParams, probs: Vec<f64>, tail_mass_bound: f64, tail_ratio: f64) -> Self {
        let mut sf = vec![0.0; probs.len() + 1];
        let mut acc = KahanSum::new();
        for k in (0..probs.len()).rev() {
            acc.add(probs[k]);
            sf[k] = acc.value();
        }
        LatticeDist { params, probs, sf, tail_mass_bound, tail_ratio }
    }

    pub fn params(&self) -> &QueueParams {
        &self.params
    }

    pub fn k_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail_mass_bound(&self) -> f64 {
        self.tail_mass_bound
    }

    /// Ratio bounding `pi_{k+1} / pi_k` beyond `k_max`.
    pub fn tail_ratio(&self) -> f64 {
        self.tail_ratio
    }

    pub fn pmf_at(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn lattice_point(&self, k: usize) -> f64 {
        self.params.lattice_point(k as u64)
    }

    /// Largest `k` with `x_k <= x`, snapping to a lattice point within rounding distance.
    fn floor_index(&self, x: f64) -> Option<usize> {
        let t = self.params.lattice_index(x);
        let r = t.round();
        let k = if (t - r).abs() < 1e-9 * r.abs().max(1.0) { r } else { t.floor() };
        if k < 0.0 {
            None
        } else {
            Some(k as usize)
        }
    }

    /// Smallest `k` with `x_k >= z`.
    pub fn ceil_index(&self, z: f64) -> usize {
        let t = self.params.lattice_index(z);
        let r = t.round();
        let k = if (t - r).abs() < 1e-9 * r.abs().max(1.0) { r } else { t.ceil() };
        k.max(0.0) as usize
    }

    /// Largest lattice index with `x_k <= z`, or 0 below the lattice.
    pub fn lattice_floor(&self, z: f64) -> usize {
        self.floor_index(z).unwrap_or(0)
    }

    /// `P(X~ <= x)`, a right-continuous step function.
    pub fn cdf(&self, x: f64) -> f64 {
        match self.floor_index(x) {
            None => 0.0,
            Some(k) if k >= self.k_max() => 1.0,
            Some(k) => 1.0 - self.sf[k + 1],
        }
    }

    /// `P(X~ >= z)`.
    pub fn tail_prob(&self, z: f64) -> f64 {
        let k = self.ceil_index(z);
        self.sf.get(k).copied().unwrap_or(0.0)
    }

    /// `P(X >= k)` on the unscaled count.
    pub fn tail_from(&self, k: usize) -> f64 {
        self.sf.get(k).copied().unwrap_or(0.0)
    }

    /// `E[X~^m]` with the requested centering, refusing when the truncated tail
    /// could contribute more than `1e-9 * max(1, |moment|)`.
    pub fn scaled_moment(&self, m: u32, centering: Centering) -> Result<f64> {
        if m > 20 {
            return Err(Error::InvalidParam(format!("moment order {m} above 20")));
        }
        if m == 0 {
            return Ok(1.0);
        }
        let p = &self.params;
        let c = match centering {
            Centering::Fluid => p.fluid_equilibrium(),
            Centering::OfferedLoad => p.offered_load(),
        };
        let d = p.delta();
        let value = ksum(
            self.probs
                .iter()
                .enumerate()
                .map(|(k, &pk)| pk * (d * (k as f64 - c)).powi(m as i32)),
        );
        let bound = self.moment_tail_bound(m, c);
        if !(bound <= 1e-9 * value.abs().max(1.0)) {
            return Err(Error::Truncation(format!(
                "moment {m} tail contribution up to {bound:e}; use a smaller tail_eps"
            )));
        }
        Ok(value)
    }

    /// Bound on `sum_{k > k_max} pi_k |x_k|^m` via the geometric ratio.
    fn moment_tail_bound(&self, m: u32, c: f64) -> f64 {
        let d = self.params.delta();
        let km = self.k_max() as f64;
        let last = *self.probs.last().unwrap();
        let q = self.tail_ratio;
        let mut acc = 0.0;
        let mut w = last;
        for j in 1..1_000_000u64 {
            w *= q;
            let term = w * (d * (km + j as f64 - c)).abs().powi(m as i32);
            acc += term;
            if term < 1e-18 * acc.max(f64::MIN_POSITIVE) && j > 10 {
                break;
            }
            if w == 0.0 {
                break;
            }
        }
        acc
    }

    /// `E[g(X~)]` over the retained lattice.
    pub fn expect<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        ksum(
            self.probs
                .iter()
                .enumerate()
                .map(|(k, &pk)| if pk == 0.0 { 0.0 } else { pk * g(self.lattice_point(k)) }),
        )
    }

    /// `E[X]` on the unscaled count.
    pub fn mean_count(&self) -> f64 {
        ksum(self.probs.iter().enumerate().map(|(k, &pk)| pk * k as f64))
    }

    /// Largest relative violation of `lambda pi_{k-1} = d(k) pi_k` over retained states.
    pub fn detailed_balance_error(&self) -> f64 {
        let p = &self.params;
        let mut worst: f64 = 0.0;
        for k in 1..self.probs.len() {
            let lhs = p.lambda() * self.probs[k - 1];
            let rhs = p.departure_rate(k as f64) * self.probs[k];
            let scale = lhs.abs().max(rhs.abs());
            if scale > 1e-250 {
                worst = worst.max((lhs - rhs).abs() / scale);
            }
        }
        worst
    }
}

/// Stationary distribution truncated far enough to certify the `m`-th scaled moment.
pub fn stationary_for_moment(params: &QueueParams, m: u32) -> Result<LatticeDist> {
    let mut eps = DEFAULT_TAIL_EPS;
    loop {
        let dist = stationary(params, eps)?;
        match dist.scaled_moment(m, Centering::Fluid) {
            Ok(_) => return Ok(dist),
            Err(Error::Truncation(_)) if eps > 1e-290 => eps *= 1e-10,
            Err(e) => return Err(e),
        }
    }
}
