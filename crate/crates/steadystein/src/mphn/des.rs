//! Event-driven simulation of the many-server queue with phase-type service and
//! exponential patience.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

use super::phasetype::PhaseType;
use super::SimEstimate;

#[derive(Clone, Debug, Serialize)]
pub struct DesConfig {
    /// Simulated time per replication after burn-in.
    pub horizon: f64,
    pub burnin: f64,
    pub reps: usize,
    pub seed: u64,
    /// Spacing of the queue-composition samples; 0 disables sampling.
    pub ssc_interval: f64,
}

impl Default for DesConfig {
    fn default() -> Self {
        DesConfig { horizon: 1e4, burnin: 1e2, reps: 16, seed: 0, ssc_interval: 0.0 }
    }
}

/// Queue length and the number of waiting customers per initial phase.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SscSample {
    pub queue_len: u32,
    pub composition: Vec<u32>,
}

/// Event counts of one replication, started from an empty system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FlowCounts {
    pub arrivals: u64,
    pub departures: u64,
    pub abandonments: u64,
    pub in_system: u64,
}

impl FlowCounts {
    pub fn balanced(&self) -> bool {
        self.arrivals == self.departures + self.abandonments + self.in_system
    }

    pub fn events(&self) -> u64 {
        self.arrivals + self.departures + self.abandonments
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DesResult {
    /// `E|T~|` with `T~ = (T - n) / sqrt(lambda)`.
    pub mean_abs_total: SimEstimate,
    /// `E[T~^m]` for `m = 1, 2`.
    pub total_moments: Vec<SimEstimate>,
    /// Per phase, the mean of `delta Q_i - p_i delta (queue length)` over the samples.
    pub ssc_residual: Vec<SimEstimate>,
    pub flows: Vec<FlowCounts>,
    #[serde(skip)]
    pub ssc_samples: Vec<SscSample>,
}

impl DesResult {
    pub fn events(&self) -> u64 {
        self.flows.iter().map(FlowCounts::events).sum()
    }

    pub fn flow_balanced(&self) -> bool {
        self.flows.iter().all(FlowCounts::balanced)
    }
}

struct Sim<'a> {
    pt: &'a PhaseType,
    lambda: f64,
    n: u64,
    alpha: f64,
    p_cum: Vec<f64>,
    route_cum: Vec<Vec<f64>>,
    busy: Vec<u64>,
    queue: VecDeque<u8>,
    queue_by_phase: Vec<u32>,
    flows: FlowCounts,
}

fn pick(cum: &[f64], u: f64) -> usize {
    cum.iter().position(|&c| u < c).unwrap_or(cum.len())
}

impl<'a> Sim<'a> {
    fn new(pt: &'a PhaseType, lambda: f64, n: u64, alpha: f64) -> Self {
        let d = pt.dim();
        let cum = |v: Vec<f64>| -> Vec<f64> {
            v.iter()
                .scan(0.0, |s, x| {
                    *s += x;
                    Some(*s)
                })
                .collect()
        };
        let mut p_cum = cum(pt.p().to_vec());
        // Guard the last phase against rounding in the cumulative sum.
        *p_cum.last_mut().unwrap() = f64::INFINITY;
        let route_cum = (0..d).map(|i| cum((0..d).map(|j| pt.routing(i, j)).collect())).collect();
        Sim {
            pt,
            lambda,
            n,
            alpha,
            p_cum,
            route_cum,
            busy: vec![0; d],
            queue: VecDeque::new(),
            queue_by_phase: vec![0; d],
            flows: FlowCounts { arrivals: 0, departures: 0, abandonments: 0, in_system: 0 },
        }
    }

    fn total(&self) -> u64 {
        self.busy.iter().sum::<u64>() + self.queue.len() as u64
    }

    fn start_service(&mut self, phase: usize) {
        self.busy[phase] += 1;
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let d = self.pt.dim();
        let nu = self.pt.nu();
        let service: f64 = (0..d).map(|i| nu[i] * self.busy[i] as f64).sum();
        let abandon = self.alpha * self.queue.len() as f64;
        let total = self.lambda + service + abandon;
        let e: f64 = Exp1.sample(rng);
        let dt = e / total;
        let u = rng.random::<f64>() * total;
        if u < self.lambda {
            self.flows.arrivals += 1;
            let phase = pick(&self.p_cum, rng.random::<f64>());
            if self.busy.iter().sum::<u64>() < self.n {
                self.start_service(phase);
            } else {
                self.queue.push_back(phase as u8);
                self.queue_by_phase[phase] += 1;
            }
        } else if u < self.lambda + service {
            let mut v = u - self.lambda;
            let mut i = 0;
            while i + 1 < d && v >= nu[i] * self.busy[i] as f64 {
                v -= nu[i] * self.busy[i] as f64;
                i += 1;
            }
            // Rounding can land on an idle phase; fall back to the last busy one.
            if self.busy[i] == 0 {
                i = (0..d).rev().find(|&j| self.busy[j] > 0).expect("a busy server");
            }
            self.busy[i] -= 1;
            let next = pick(&self.route_cum[i], rng.random::<f64>());
            if next < d {
                self.busy[next] += 1;
            } else {
                self.flows.departures += 1;
                if let Some(ph) = self.queue.pop_front() {
                    self.queue_by_phase[ph as usize] -= 1;
                    self.start_service(ph as usize);
                }
            }
        } else {
            self.flows.abandonments += 1;
            let idx = rng.random_range(0..self.queue.len());
            let ph = self.queue.remove(idx).expect("index in range");
            self.queue_by_phase[ph as usize] -= 1;
        }
        dt
    }
}

struct RepOut {
    abs_total: f64,
    moments: [f64; 2],
    residual: Vec<f64>,
    samples: Vec<SscSample>,
    flows: FlowCounts,
}

fn run_rep(pt: &PhaseType, lambda: f64, n: u64, alpha: f64, cfg: &DesConfig, rep: usize) -> RepOut {
    let d = pt.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep as u64);
    let mut sim = Sim::new(pt, lambda, n, alpha);
    let delta = 1.0 / lambda.sqrt();
    let end = cfg.burnin + cfg.horizon;
    let mut t = 0.0;
    let mut abs_acc = 0.0;
    let mut m_acc = [0.0; 2];
    let mut next_sample = if cfg.ssc_interval > 0.0 { cfg.burnin } else { f64::INFINITY };
    let mut samples = Vec::new();
    let mut residual = vec![0.0; d];
    let mut comp = vec![0u32; d];
    while t < end {
        let x = delta * (sim.total() as f64 - n as f64);
        let ell = sim.queue.len() as u32;
        comp.copy_from_slice(&sim.queue_by_phase);
        let dt = sim.step(&mut rng);
        let t_next = t + dt;
        // The state is constant on [t, t_next).
        let lo = t.max(cfg.burnin);
        let hi = t_next.min(end);
        if hi > lo {
            let w = hi - lo;
            abs_acc += w * x.abs();
            m_acc[0] += w * x;
            m_acc[1] += w * x * x;
        }
        while next_sample < t_next && next_sample < end {
            for i in 0..d {
                residual[i] += delta * comp[i] as f64 - pt.p()[i] * delta * ell as f64;
            }
            samples.push(SscSample { queue_len: ell, composition: comp.clone() });
            next_sample += cfg.ssc_interval;
        }
        t = t_next;
    }
    let h = cfg.horizon;
    let ns = samples.len().max(1) as f64;
    sim.flows.in_system = sim.total();
    RepOut {
        abs_total: abs_acc / h,
        moments: [m_acc[0] / h, m_acc[1] / h],
        residual: residual.iter().map(|r| r / ns).collect(),
        samples,
        flows: sim.flows,
    }
}

/// Simulate independent replications from an empty system.
pub fn des_simulate(pt: &PhaseType, lambda: f64, n: u64, alpha: f64, cfg: &DesConfig) -> Result<DesResult> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParam("the simulation needs alpha > 0".into()));
    }
    if !(lambda > 0.0 && lambda.is_finite()) || n == 0 {
        return Err(Error::InvalidParam(format!("need lambda > 0 and n >= 1, got {lambda}, {n}")));
    }
    if !(cfg.horizon > 0.0 && cfg.burnin >= 0.0 && cfg.ssc_interval >= 0.0) || cfg.reps < 2 || pt.dim() > 255 {
        return Err(Error::InvalidParam(format!("invalid simulation config {cfg:?}")));
    }
    let reps: Vec<RepOut> = (0..cfg.reps).into_par_iter().map(|r| run_rep(pt, lambda, n, alpha, cfg, r)).collect();
    let est = |f: &dyn Fn(&RepOut) -> f64| SimEstimate::from_reps(reps.iter().map(f).collect(), cfg.burnin, cfg.seed);
    let mean_abs_total = est(&|r| r.abs_total);
    let total_moments = (0..2).map(|m| est(&|r| r.moments[m])).collect();
    let ssc_residual = (0..pt.dim()).map(|i| est(&|r| r.residual[i])).collect();
    let flows = reps.iter().map(|r| r.flows).collect();
    let ssc_samples = reps.into_iter().flat_map(|r| r.samples).collect();
    Ok(DesResult { mean_abs_total, total_moments, ssc_residual, flows, ssc_samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::birth_death::stationary;
    use crate::models::QueueParams;

    #[test]
    fn single_phase_matches_birth_death() {
        let (lam, n, alpha) = (12.0, 10u64, 0.5);
        let pt = PhaseType::exponential(1.0).unwrap();
        let cfg = DesConfig { horizon: 2e4, burnin: 50.0, reps: 8, seed: 11, ssc_interval: 0.0 };
        let r = des_simulate(&pt, lam, n, alpha, &cfg).unwrap();
        assert!(r.flow_balanced());
        let l = stationary(&QueueParams::new(lam, 1.0, n, alpha).unwrap(), 1e-14).unwrap();
        let d = 1.0 / lam.sqrt();
        let scaled = |k: usize| d * (k as f64 - n as f64);
        let exact_abs: f64 = l.probs().iter().enumerate().map(|(k, p)| p * scaled(k).abs()).sum();
        let exact_m1: f64 = l.probs().iter().enumerate().map(|(k, p)| p * scaled(k)).sum();
        let e = &r.mean_abs_total;
        assert!((e.estimate - exact_abs).abs() < 3.0 * e.stderr, "{} +- {} vs {exact_abs}", e.estimate, e.stderr);
        let e = &r.total_moments[0];
        assert!((e.estimate - exact_m1).abs() < 3.0 * e.stderr, "{} +- {} vs {exact_m1}", e.estimate, e.stderr);
    }

    #[test]
    fn deterministic_given_seed() {
        let pt = PhaseType::h2_preset();
        let cfg = DesConfig { horizon: 200.0, burnin: 10.0, reps: 3, seed: 5, ssc_interval: 1.0 };
        let a = des_simulate(&pt, 22.0, 20, 1.0, &cfg).unwrap();
        let b = des_simulate(&pt, 22.0, 20, 1.0, &cfg).unwrap();
        assert_eq!(a.mean_abs_total.rep_means, b.mean_abs_total.rep_means);
        assert_eq!(a.ssc_samples, b.ssc_samples);
        assert_eq!(a.flows, b.flows);
    }

    #[test]
    fn degenerate_initial_phase_queue() {
        let pt = PhaseType::c2_preset();
        let cfg = DesConfig { horizon: 500.0, burnin: 10.0, reps: 2, seed: 1, ssc_interval: 0.5 };
        let r = des_simulate(&pt, 18.0, 15, 1.0, &cfg).unwrap();
        assert!(r.ssc_samples.iter().all(|s| s.composition[1] == 0 && s.composition[0] == s.queue_len));
        assert!(r.ssc_samples.iter().any(|s| s.queue_len > 0));
    }

    #[test]
    fn rejects_zero_patience() {
        let pt = PhaseType::exponential(1.0).unwrap();
        assert!(des_simulate(&pt, 1.0, 2, 0.0, &DesConfig::default()).is_err());
    }
}
