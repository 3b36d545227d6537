//! Online early estimation of the multi-cluster iteration bound from Ritz
//! values during PCG, gated on stabilization of the cluster edge values
//! between consecutive checks.

use crate::bounds::{cluster_degrees, m1, ClusterPartition, Spectrum};
use crate::error::{Error, Result};
use crate::krylov::{ritz_values_at, CGTrace};
use crate::partition::greedy_partition;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// check period eta
    pub eta: usize,
    /// stabilization tolerance tau
    pub tau: f64,
    /// hard iteration cap for checks
    pub i_max: usize,
    /// run-fraction cap r; only effective when the total iteration count is
    /// known up front (re-running a solved problem)
    pub run_fraction: f64,
    pub eps: f64,
    /// total iterations of a previous run of the same problem, if any
    pub known_m: Option<usize>,
}

impl EstimatorConfig {
    pub fn new(eta: usize, tau: f64, i_max: usize, run_fraction: f64, eps: f64) -> Result<Self> {
        if eta < 1 {
            return Err(Error::InvalidArgument("eta must be >= 1".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument("tau must be > 0".into()));
        }
        if i_max < eta {
            return Err(Error::InvalidArgument("i_max must be >= eta".into()));
        }
        if !(run_fraction > 0.0 && run_fraction <= 1.0) {
            return Err(Error::InvalidArgument("run fraction must be in (0, 1]".into()));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidArgument("eps must be in (0, 1)".into()));
        }
        Ok(Self { eta, tau, i_max, run_fraction, eps, known_m: None })
    }

    pub fn with_known_m(mut self, m: usize) -> Self {
        self.known_m = Some(m);
        self
    }

    /// Last iteration at which a check may run.
    pub fn check_cap(&self) -> usize {
        match self.known_m {
            Some(m) => self
                .i_max
                .min((self.run_fraction * m as f64).ceil() as usize),
            None => self.i_max,
        }
    }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { eta: 5, tau: 0.1, i_max: 300, run_fraction: 0.5, eps: 1e-8, known_m: None }
    }
}

/// A fired early estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EarlyEstimate {
    pub iteration: usize,
    pub ms: usize,
    pub s: usize,
    pub degrees: Vec<usize>,
    /// fired iteration relative to the check cap; low values mean the Ritz
    /// spectrum had little time to develop
    pub confidence: f64,
}

/// One check record for the JSON-lines event log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckEvent {
    pub iteration: usize,
    pub ritz_count: usize,
    pub s: usize,
    pub partition_indices: Vec<usize>,
    pub edges: Vec<f64>,
    /// edge ratios vs the previous check, when comparable
    pub ratios: Option<Vec<f64>>,
    pub fired: bool,
}

struct CheckSnapshot {
    s: usize,
    edges: Vec<f64>,
}

pub struct EstimatorState {
    cfg: EstimatorConfig,
    last: Option<CheckSnapshot>,
    pub estimate: Option<EarlyEstimate>,
    pub events: Vec<CheckEvent>,
    done: bool,
}

/// All interval endpoints of a partition: lower and upper edge of every
/// cluster, deduplicated, ascending.
fn edge_values(spec: &Spectrum, partition: &ClusterPartition) -> Vec<f64> {
    let mut edges = Vec::with_capacity(2 * partition.s());
    for i in 0..partition.s() {
        let (lo, hi) = partition.interval(spec, i);
        edges.push(lo);
        if hi != lo {
            edges.push(hi);
        }
    }
    edges
}

impl EstimatorState {
    pub fn new(cfg: EstimatorConfig) -> Self {
        Self { cfg, last: None, estimate: None, events: Vec::new(), done: false }
    }

    pub fn fired(&self) -> bool {
        self.estimate.is_some()
    }

    /// Called once per PCG iteration (observer hook). Every eta iterations
    /// it extracts Ritz values from the running trace, partitions them, and
    /// fires once all edge ratios between two consecutive comparable checks
    /// stay below 1 + tau. Returns true while checking should continue.
    pub fn on_iteration(&mut self, i: usize, trace: &CGTrace) -> bool {
        if self.done || self.fired() {
            return false;
        }
        if i > self.cfg.check_cap() {
            self.done = true;
            return false;
        }
        if i == 0 || i % self.cfg.eta != 0 {
            return true;
        }
        let Ok(ritz) = ritz_values_at(trace, i) else {
            return true;
        };
        let Ok(partition) = greedy_partition(&ritz, self.cfg.eps) else {
            return true;
        };
        let edges = edge_values(&ritz, &partition);
        let mut ratios = None;
        let mut fired = false;
        if let Some(prev) = &self.last {
            if prev.s == partition.s() && prev.edges.len() == edges.len() {
                let r: Vec<f64> = edges
                    .iter()
                    .zip(&prev.edges)
                    .map(|(now, before)| now / before)
                    .collect();
                fired = r.iter().all(|&q| q < 1.0 + self.cfg.tau);
                ratios = Some(r);
            }
        }
        if fired {
            if let Ok(poly) = cluster_degrees(&ritz, &partition, self.cfg.eps) {
                let cap = self.cfg.check_cap().max(1);
                self.estimate = Some(EarlyEstimate {
                    iteration: i,
                    ms: poly.total_degree(),
                    s: partition.s(),
                    degrees: poly.degrees.clone(),
                    confidence: (i as f64 / cap as f64).min(1.0),
                });
            } else {
                fired = false;
            }
        }
        self.events.push(CheckEvent {
            iteration: i,
            ritz_count: ritz.len(),
            s: partition.s(),
            partition_indices: partition.indices().to_vec(),
            edges: edges.clone(),
            ratios,
            fired,
        });
        self.last = Some(CheckSnapshot { s: partition.s(), edges });
        !self.fired()
    }

    pub fn write_events_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        for ev in &self.events {
            serde_json::to_writer(&mut w, ev)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// End-of-run comparison of the actual iteration count with the classical
/// and multi-cluster bounds, recomputed from the converged-trace Ritz
/// values, alongside the early estimate if one fired.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalReport {
    pub m: usize,
    pub m1: usize,
    pub ms_convergence: usize,
    pub s_convergence: usize,
    pub kappa_ritz: f64,
    pub ms_early: Option<usize>,
    pub i_early: Option<usize>,
    pub stabilized: bool,
}

pub fn final_report(state: &EstimatorState, trace: &CGTrace) -> Result<FinalReport> {
    let m = trace.iterations();
    let ritz = crate::krylov::ritz_values(trace)?;
    let partition = greedy_partition(&ritz, state.cfg.eps)?;
    let poly = cluster_degrees(&ritz, &partition, state.cfg.eps)?;
    Ok(FinalReport {
        m,
        m1: m1(ritz.kappa(), state.cfg.eps),
        ms_convergence: poly.total_degree(),
        s_convergence: partition.s(),
        kappa_ritz: ritz.kappa(),
        ms_early: state.estimate.as_ref().map(|e| e.ms),
        i_early: state.estimate.as_ref().map(|e| e.iteration),
        stabilized: state.fired(),
    })
}
