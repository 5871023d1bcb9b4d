//! Many-server queues with phase-type service: phase-type algebra, event
//! simulation, state-space-collapse tests and diffusion simulation.

mod des;
mod ou;
mod phasetype;
mod ssc;

pub use des::{des_simulate, DesConfig, DesResult, FlowCounts, SscSample};
pub use ou::{ou_simulate, OuConfig, OuFunctional, OuRun, OuSpec};
pub use phasetype::PhaseType;
pub use ssc::{ssc_binomial_test, SscReport, SscStatus, StratumTest, MIN_TOTAL_SAMPLES};

use serde::Serialize;

/// Mean over independent replications with its standard error.
#[derive(Clone, Debug, Serialize)]
pub struct SimEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub reps: usize,
    pub burnin: f64,
    pub seed: u64,
    pub rep_means: Vec<f64>,
}

impl SimEstimate {
    pub fn from_reps(rep_means: Vec<f64>, burnin: f64, seed: u64) -> Self {
        let r = rep_means.len();
        let mean = rep_means.iter().sum::<f64>() / r as f64;
        let var = if r > 1 {
            rep_means.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1) as f64
        } else {
            f64::NAN
        };
        SimEstimate { estimate: mean, stderr: (var / r as f64).sqrt(), reps: r, burnin, seed, rep_means }
    }
}

/// Standard error of the mean per-replication difference of two coupled estimates.
pub fn paired_stderr(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    SimEstimate::from_reps(d, 0.0, 0).stderr
}
