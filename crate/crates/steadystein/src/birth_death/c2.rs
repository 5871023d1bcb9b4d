//! Two-dimensional chain for the many-server queue with two-phase Coxian service.

use statrs::distribution::{Discrete, Poisson};

use crate::error::{Error, Result};
use crate::numeric::ksum;

/// Coxian service: phase 1 at rate `nu1`, then phase 2 at rate `nu2` with probability `p12`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coxian2 {
    pub nu1: f64,
    pub p12: f64,
    pub nu2: f64,
}

impl Coxian2 {
    pub fn new(nu1: f64, p12: f64, nu2: f64) -> Result<Self> {
        if !(nu1 > 0.0 && nu1.is_finite()) || !(nu2 > 0.0 && nu2.is_finite()) {
            return Err(Error::InvalidPhaseType("phase rates must be positive".into()));
        }
        if !(0.0..=1.0).contains(&p12) {
            return Err(Error::InvalidPhaseType(format!("p12 = {p12} is not a probability")));
        }
        Ok(Coxian2 { nu1, p12, nu2 })
    }

    /// Unit-mean Coxian with squared coefficient of variation `cs2 >= 1/2`.
    pub fn unit_mean(cs2: f64) -> Result<Self> {
        if !(cs2 >= 0.5) {
            return Err(Error::InvalidPhaseType(format!("cs2 = {cs2} below 1/2")));
        }
        let p12 = 1.0 / (2.0 * cs2);
        Self::new(2.0, p12, 2.0 * p12)
    }

    pub fn mean(&self) -> f64 {
        1.0 / self.nu1 + self.p12 / self.nu2
    }

    pub fn scv(&self) -> f64 {
        let m1 = self.mean();
        let m2 = 2.0 / (self.nu1 * self.nu1)
            + self.p12 * (2.0 / (self.nu1 * self.nu2) + 2.0 / (self.nu2 * self.nu2));
        m2 / (m1 * m1) - 1.0
    }
}

/// Stationary distribution over a window of `(x1, x2)` states.
#[derive(Clone, Debug)]
pub struct C2Dist {
    n: u64,
    lambda: f64,
    window: Window,
    states: Vec<(u64, u64)>,
    probs: Vec<f64>,
    residual: f64,
    sweeps: usize,
}

/// Retained states: `t_lo <= x1 + x2 <= t_hi` and `x2_lo <= x2 <= x2_hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Window {
    t_lo: u64,
    t_hi: u64,
    x2_lo: u64,
    x2_hi: u64,
}

impl Window {
    fn around(n: u64, lambda: f64, phase2_mean: f64, width: f64) -> Self {
        let wt = width * lambda.sqrt().max(1.0);
        let w2 = width * phase2_mean.sqrt().max(1.0);
        let n_f = n as f64;
        Window {
            t_lo: (n_f - wt).floor().max(0.0) as u64,
            t_hi: (n_f + wt).ceil() as u64,
            x2_lo: (phase2_mean.min(n_f) - w2).floor().max(0.0) as u64,
            x2_hi: ((phase2_mean + w2).ceil() as u64).min(n),
        }
    }

    /// Whether `(x1, x2)` sits on an edge that truncates the chain.
    fn on_cut(&self, n: u64, x1: u64, x2: u64) -> bool {
        let t = x1 + x2;
        (t == self.t_lo && self.t_lo > 0) || t == self.t_hi || (x2 == self.x2_lo && self.x2_lo > 0) || (x2 == self.x2_hi && self.x2_hi < n)
    }
}

impl C2Dist {
    pub fn states(&self) -> &[(u64, u64)] {
        &self.states
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Largest retained total count.
    pub fn cap(&self) -> u64 {
        self.window.t_hi
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Distribution of the total count `x1 + x2`.
    pub fn total_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cap() as usize + 1];
        for (&(a, b), &p) in self.states.iter().zip(&self.probs) {
            out[(a + b) as usize] += p;
        }
        out
    }

    /// `E|T~|` with `T~ = (X1 + X2 - n) / sqrt(lambda)`.
    pub fn mean_abs_scaled(&self) -> f64 {
        let d = 1.0 / self.lambda.sqrt();
        let n = self.n as f64;
        ksum(
            self.states
                .iter()
                .zip(&self.probs)
                .map(|(&(a, b), &p)| p * (d * ((a + b) as f64 - n)).abs()),
        )
    }

    /// Probability mass on the edges where the state space is cut.
    pub fn boundary_mass(&self) -> f64 {
        ksum(
            self.states
                .iter()
                .zip(&self.probs)
                .filter(|(&(a, b), _)| self.window.on_cut(self.n, a, b))
                .map(|(_, &p)| p),
        )
    }
}

const MAX_SWEEPS: usize = 2_000_000;
const TOLERANCE: f64 = 1e-10;
/// Initial half-width of the window in units of `sqrt(lambda)`.
const INITIAL_WIDTH: f64 = 10.0;

/// Incoming transitions in compressed rows.
struct Incoming {
    start: Vec<usize>,
    src: Vec<u32>,
    rate: Vec<f64>,
}

impl Incoming {
    fn row(&self, s: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.start[s]..self.start[s + 1]).map(move |i| (self.src[i] as usize, self.rate[i]))
    }

    fn inflow(&self, pi: &[f64], s: usize) -> f64 {
        let mut acc = 0.0;
        for i in self.start[s]..self.start[s + 1] {
            acc += pi[self.src[i] as usize] * self.rate[i];
        }
        acc
    }
}

/// Solve the global balance equations on a window around `(n, ...)` that is
/// widened until the mass on its cut edges drops below `tail_eps`.
pub fn c2_stationary(svc: &Coxian2, lambda: f64, n: u64, alpha: f64, tail_eps: f64) -> Result<C2Dist> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParam(format!("lambda must be positive, got {lambda}")));
    }
    if n == 0 {
        return Err(Error::InvalidParam("n must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParam("the two-phase chain needs alpha > 0".into()));
    }
    if !(tail_eps > 0.0 && tail_eps < 1.0) {
        return Err(Error::InvalidParam(format!("tail_eps must lie in (0, 1), got {tail_eps}")));
    }
    let phase2_mean = lambda * svc.p12 / svc.nu2;
    let mut width = INITIAL_WIDTH;
    loop {
        let w = Window::around(n, lambda, phase2_mean, width);
        let d = solve_window(svc, lambda, n, alpha, w)?;
        if d.boundary_mass() < tail_eps {
            return Ok(d);
        }
        if width > 1e3 {
            return Err(Error::Truncation(format!("boundary mass {:e} after widening", d.boundary_mass())));
        }
        width *= 1.5;
    }
}

fn solve_window(svc: &Coxian2, lambda: f64, n: u64, alpha: f64, w: Window) -> Result<C2Dist> {
    let mut states = Vec::new();
    // offset[x2 - x2_lo] is the index of (t_lo' - x2, x2), the first state of the level.
    let mut offset = Vec::new();
    for x2 in w.x2_lo..=w.x2_hi {
        offset.push(states.len());
        for t in w.t_lo.max(x2)..=w.t_hi {
            states.push((t - x2, x2));
        }
    }
    if states.len() >= u32::MAX as usize {
        return Err(Error::Truncation("state space too large".into()));
    }
    let id = |x1: u64, x2: u64| -> Option<usize> {
        let t = x1 + x2;
        if x2 < w.x2_lo || x2 > w.x2_hi || t < w.t_lo.max(x2) || t > w.t_hi {
            return None;
        }
        Some(offset[(x2 - w.x2_lo) as usize] + (t - w.t_lo.max(x2)) as usize)
    };

    let ns = states.len();
    let mut out_rate = vec![0.0; ns];
    let mut edges: Vec<(u32, u32, f64)> = Vec::with_capacity(5 * ns);
    for (s, &(x1, x2)) in states.iter().enumerate() {
        let z1 = x1.min(n - x2) as f64;
        let q = (x1 + x2).saturating_sub(n) as f64;
        let mut push = |t: Option<usize>, r: f64| {
            if let Some(t) = t {
                if r > 0.0 {
                    out_rate[s] += r;
                    edges.push((t as u32, s as u32, r));
                }
            }
        };
        push(id(x1 + 1, x2), lambda);
        if z1 > 0.0 {
            if x2 < n {
                push(id(x1 - 1, x2 + 1), svc.nu1 * z1 * svc.p12);
                push(id(x1 - 1, x2), svc.nu1 * z1 * (1.0 - svc.p12));
            } else {
                push(id(x1 - 1, x2), svc.nu1 * z1);
            }
        }
        if x2 > 0 {
            push(id(x1, x2 - 1), svc.nu2 * x2 as f64);
        }
        if q > 0.0 {
            push(id(x1 - 1, x2), alpha * q);
        }
    }
    edges.sort_unstable_by_key(|e| (e.0, e.1));
    let mut start = vec![0usize; ns + 1];
    for e in &edges {
        start[e.0 as usize + 1] += 1;
    }
    for s in 0..ns {
        start[s + 1] += start[s];
    }
    let incoming = Incoming {
        start,
        src: edges.iter().map(|e| e.1).collect(),
        rate: edges.iter().map(|e| e.2).collect(),
    };

    // Product of Poisson marginals as the starting point.
    let m1 = Poisson::new(lambda / svc.nu1).map_err(|e| Error::Numeric(e.to_string()))?;
    let m2 = Poisson::new((lambda * svc.p12 / svc.nu2).max(1e-12)).map_err(|e| Error::Numeric(e.to_string()))?;
    let mut pi: Vec<f64> = states.iter().map(|&(a, b)| m1.pmf(a) * m2.pmf(b) + 1e-300).collect();
    normalize(&mut pi);

    // Both the phase-2 count and the total move by at most one per transition,
    // so each aggregates to a birth-death chain that is solved exactly between sweeps.
    let key_phase2: Vec<usize> = states.iter().map(|&(_, b)| (b - w.x2_lo) as usize).collect();
    let key_total: Vec<usize> = states.iter().map(|&(a, b)| (a + b - w.t_lo) as usize).collect();

    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        // Symmetric sweeps: forward then backward.
        for s in (0..ns).chain((0..ns).rev()) {
            pi[s] = incoming.inflow(&pi, s) / out_rate[s];
        }
        normalize(&mut pi);
        aggregate_rescale(&mut pi, &incoming, &key_phase2);
        aggregate_rescale(&mut pi, &incoming, &key_total);
        sweeps += 1;
        if sweeps % 10 == 0 {
            residual = balance_residual(&pi, &out_rate, &incoming);
            if residual < TOLERANCE {
                break;
            }
        }
    }
    if residual >= TOLERANCE {
        return Err(Error::Numeric(format!(
            "Gauss-Seidel stopped after {sweeps} sweeps with residual {residual:e}"
        )));
    }
    Ok(C2Dist { n, lambda, window: w, states, probs: pi, residual, sweeps })
}

fn normalize(pi: &mut [f64]) {
    let z = ksum(pi.iter().copied());
    for v in pi.iter_mut() {
        *v /= z;
    }
}

/// Rescale `pi` so its marginal over `key` is the exact stationary law of the
/// aggregated birth-death chain, keeping the conditional law within each level.
fn aggregate_rescale(pi: &mut [f64], incoming: &Incoming, key: &[usize]) {
    let levels = key.iter().max().map_or(0, |m| m + 1);
    let mut mass = vec![0.0; levels];
    let mut up = vec![0.0; levels];
    let mut down = vec![0.0; levels];
    for (s, &v) in pi.iter().enumerate() {
        mass[key[s]] += v;
    }
    for (s, &ks) in key.iter().enumerate() {
        for (t, r) in incoming.row(s) {
            let kt = key[t];
            if ks == kt + 1 {
                up[kt] += pi[t] * r;
            } else if kt == ks + 1 {
                down[kt] += pi[t] * r;
            }
        }
    }
    // Log weights of the birth-death chain with the aggregated rates.
    let mut lw = vec![f64::NEG_INFINITY; levels];
    lw[0] = 0.0;
    for j in 1..levels {
        let (u, d) = (up[j - 1] / mass[j - 1], down[j] / mass[j]);
        if !(u > 0.0 && d > 0.0 && u.is_finite() && d.is_finite()) {
            return;
        }
        lw[j] = lw[j - 1] + u.ln() - d.ln();
    }
    let top = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = lw.iter().map(|l| (l - top).exp()).sum();
    let target: Vec<f64> = lw.iter().map(|l| (l - top).exp() / z).collect();
    for (s, v) in pi.iter_mut().enumerate() {
        let j = key[s];
        if mass[j] > 0.0 {
            *v *= target[j] / mass[j];
        }
    }
}

/// `sum_s |(pi Q)_s|` relative to the total flow.
fn balance_residual(pi: &[f64], out_rate: &[f64], incoming: &Incoming) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for s in 0..pi.len() {
        let inflow = incoming.inflow(pi, s);
        let out = pi[s] * out_rate[s];
        num += (inflow - out).abs();
        den += out;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::birth_death::stationary;
    use crate::models::QueueParams;

    #[test]
    fn unit_mean_coxian() {
        let c = Coxian2::unit_mean(24.0).unwrap();
        assert!((c.mean() - 1.0).abs() < 1e-14);
        assert!((c.scv() - 24.0).abs() < 1e-10);
        assert!(Coxian2::unit_mean(0.3).is_err());
    }

    #[test]
    fn exponential_reduces_to_birth_death() {
        let svc = Coxian2::new(1.0, 0.0, 1.0).unwrap();
        let d = c2_stationary(&svc, 6.0, 5, 2.0, 1e-14).unwrap();
        let marg = d.total_marginal();
        let bd = stationary(&QueueParams::new(6.0, 1.0, 5, 2.0).unwrap(), 1e-14).unwrap();
        for (k, &p) in marg.iter().enumerate().take(20) {
            assert!((p - bd.pmf_at(k)).abs() < 1e-9, "k={k}: {p} vs {}", bd.pmf_at(k));
        }
    }

    #[test]
    fn high_variability_flow_balance() {
        let svc = Coxian2::unit_mean(24.0).unwrap();
        let (lam, n, alpha) = (15.0, 15u64, 1.0);
        let d = c2_stationary(&svc, lam, n, alpha, 1e-14).unwrap();
        assert!(d.boundary_mass() < 1e-12);
        let (mut out, mut into2, mut out2) = (0.0, 0.0, 0.0);
        for (&(x1, x2), &p) in d.states().iter().zip(d.probs()) {
            let t = x1 + x2;
            let s1 = (t.min(n) - x2) as f64;
            out += p * (svc.nu1 * (1.0 - svc.p12) * s1 + svc.nu2 * x2 as f64 + alpha * t.saturating_sub(n) as f64);
            into2 += p * svc.nu1 * svc.p12 * s1;
            out2 += p * svc.nu2 * x2 as f64;
        }
        assert!((out - lam).abs() < 1e-9 * lam, "{out}");
        assert!((into2 - out2).abs() < 1e-9 * lam);
        let coarse = c2_stationary(&svc, lam, n, alpha, 1e-8).unwrap();
        assert!((coarse.mean_abs_scaled() - d.mean_abs_scaled()).abs() < 1e-6);
    }
}
