//! Spectral-gap detection: largest-relative-gap split candidates, the
//! Lambert-W acceptance threshold, and greedy recursive partitioning.

use crate::bounds::{self, ClusterPartition, Spectrum};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Candidate two-cluster split of a (sub)spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitCandidate {
    /// 1-based partition index k* into the (sub)spectrum: the split puts
    /// eigenvalues 1..k* in the lower cluster.
    pub k_star: usize,
    pub gap: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

/// Intermediate terms of the explicit threshold expansion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdTerms {
    pub x: f64,
    pub w: f64,
    pub big_l: f64,
    pub small_l: f64,
    /// 4 k1 k2 (L - l + l/L)^2, the printed expansion
    pub threshold_expansion: f64,
    /// 4 k1 k2 W_{-1}(x)^2, the exact form the expansion approximates
    pub threshold_exact: f64,
}

/// Outcome of testing a candidate split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitDecision {
    pub candidate: SplitCandidate,
    pub kappa: f64,
    pub terms: ThresholdTerms,
    /// kappa exceeds the exact W-based threshold (the accepting mode)
    pub accept: bool,
    /// kappa exceeds the printed expansion threshold
    pub accept_expansion: bool,
    /// direct m2 < m1 comparison at the default tolerance
    pub accept_m2_lt_m1: bool,
}

/// W_{-1}(x), the negative real branch of the inverse of y e^y, for
/// x in [-1/e, 0). Near the branch point a series in sqrt(2(1 + e x))
/// is used; elsewhere the log-log asymptotic seed is polished by Newton
/// iteration on w + ln(-w) = ln(-x), which is monotone on w < -1.
/// Guarantees |w e^w - x| <= 1e-12 |x|.
pub fn lambert_w_minus1(x: f64) -> Result<f64> {
    let branch_point = -1.0 / std::f64::consts::E;
    if !(x >= branch_point && x < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambert_w_minus1: {x} outside [-1/e, 0)"
        )));
    }
    if x == branch_point {
        return Ok(-1.0);
    }
    let q = 1.0 + std::f64::consts::E * x;
    let mut w = if q <= 0.02 {
        // branch-point series, p = -sqrt(2(1 + e x)) for the lower branch
        let p = -(2.0 * q).sqrt();
        let p2 = p * p;
        let mut w = -1.0 + p - p2 / 3.0 + 11.0 / 72.0 * p2 * p
            - 43.0 / 540.0 * p2 * p2
            + 769.0 / 17280.0 * p2 * p2 * p;
        // a few Newton steps on w e^w - x sharpen the series tail
        for _ in 0..4 {
            let ew = w.exp();
            let fp = ew * (w + 1.0);
            if fp == 0.0 {
                break;
            }
            w -= (w * ew - x) / fp;
        }
        w
    } else {
        // Newton on h(w) = w + ln(-w) - ln(-x); h is increasing and
        // concave on w < -1, so iterates started right of the root
        // descend to it without crossing -1
        let big_l = (-x).ln();
        let mut w = asymptotic_seed(x);
        for _ in 0..100 {
            let h = w + (-w).ln() - big_l;
            let hp = 1.0 + 1.0 / w;
            let step = h / hp;
            w -= step;
            if step.abs() <= 1e-16 * w.abs() {
                break;
            }
        }
        w
    };
    if w > -1.0 {
        w = -1.0;
    }
    let residual = (w * w.exp() - x).abs();
    if residual > 1e-12 * x.abs() {
        return Err(Error::InvalidArgument(format!(
            "lambert_w_minus1 failed to converge at x = {x} (residual {residual:.3e})"
        )));
    }
    Ok(w)
}

/// L - l + l/L with L = ln(-x), l = ln(-L).
pub fn asymptotic_seed(x: f64) -> f64 {
    let big_l = (-x).ln();
    let small_l = (-big_l).ln();
    big_l - small_l + small_l / big_l
}

/// Largest-relative-gap split candidate; ties break to the smallest index.
pub fn find_candidate(spec: &Spectrum) -> Result<SplitCandidate> {
    let v = spec.values();
    let n = v.len();
    if n < 2 {
        return Err(Error::InvalidArgument("spectrum too small to split".into()));
    }
    let mut best_idx = 0usize;
    let mut best_gap = v[1] / v[0];
    for i in 1..n - 1 {
        let g = v[i + 1] / v[i];
        if g > best_gap {
            best_gap = g;
            best_idx = i;
        }
    }
    let k_star = best_idx + 1; // 1-based count of lower-cluster eigenvalues
    Ok(SplitCandidate {
        k_star,
        gap: best_gap,
        kappa1: v[k_star - 1] / v[0],
        kappa2: v[n - 1] / v[k_star],
    })
}

/// Tests a candidate split against the condition-number threshold.
pub fn accept_split(spec: &Spectrum, cand: &SplitCandidate, eps: f64) -> Result<SplitDecision> {
    let kappa = spec.kappa();
    let x = -1.0 / (2.0 * cand.kappa2.sqrt() * (1.0 / cand.kappa2.sqrt()).exp());
    let w = lambert_w_minus1(x)?;
    let big_l = (-x).ln();
    let small_l = (-big_l).ln();
    let expansion = big_l - small_l + small_l / big_l;
    let terms = ThresholdTerms {
        x,
        w,
        big_l,
        small_l,
        threshold_expansion: 4.0 * cand.kappa1 * cand.kappa2 * expansion * expansion,
        threshold_exact: 4.0 * cand.kappa1 * cand.kappa2 * w * w,
    };
    let accept = kappa > terms.threshold_exact;
    let accept_expansion = kappa > terms.threshold_expansion;
    let accept_m2_lt_m1 =
        bounds::m2(kappa, cand.kappa1, cand.kappa2, eps) < bounds::m1(kappa, eps);
    Ok(SplitDecision {
        candidate: cand.clone(),
        kappa,
        terms,
        accept,
        accept_expansion,
        accept_m2_lt_m1,
    })
}

/// Greedy recursive partitioning: split at the largest relative gap while
/// the subcluster-local threshold accepts, down to singletons. Returns the
/// partition and the per-split decision log (depth-first, lower half
/// first).
pub fn greedy_partition_with_log(
    spec: &Spectrum,
    eps: f64,
) -> Result<(ClusterPartition, Vec<SplitDecision>)> {
    let mut inner: Vec<usize> = Vec::new();
    let mut log = Vec::new();
    recurse(spec, 0, spec.len(), eps, &mut inner, &mut log)?;
    inner.sort_unstable();
    Ok((ClusterPartition::new(spec.len(), &inner)?, log))
}

pub fn greedy_partition(spec: &Spectrum, eps: f64) -> Result<ClusterPartition> {
    greedy_partition_with_log(spec, eps).map(|(p, _)| p)
}

/// Full bound summary for a spectrum: greedy partition, per-cluster
/// degrees, classical and multi-cluster bounds, and the two-cluster bound
/// of the first accepted split if any.
pub fn bound_report(spec: &Spectrum, eps: f64) -> Result<bounds::BoundReport> {
    let (partition, log) = greedy_partition_with_log(spec, eps)?;
    let poly = bounds::cluster_degrees(spec, &partition, eps)?;
    let kappa = spec.kappa();
    let m2 = log.iter().find(|d| d.accept).map(|d| {
        bounds::m2(d.kappa, d.candidate.kappa1, d.candidate.kappa2, eps)
    });
    let cluster_kappas = (0..partition.s()).map(|i| partition.kappa_i(spec, i)).collect();
    Ok(bounds::BoundReport {
        eps,
        n: spec.len(),
        kappa,
        m1: bounds::m1(kappa, eps),
        m2,
        ms: poly.total_degree(),
        s: partition.s(),
        partition_indices: partition.indices().to_vec(),
        degrees: poly.degrees,
        cluster_kappas,
    })
}

fn recurse(
    spec: &Spectrum,
    lo: usize,
    hi: usize,
    eps: f64,
    inner: &mut Vec<usize>,
    log: &mut Vec<SplitDecision>,
) -> Result<()> {
    if hi - lo < 2 {
        return Ok(());
    }
    let sub = Spectrum::new(spec.values()[lo..hi].to_vec())?;
    let cand = find_candidate(&sub)?;
    // a duplicated eigenvalue (ratio exactly 1) can never be a split point
    if cand.gap <= 1.0 {
        return Ok(());
    }
    let decision = accept_split(&sub, &cand, eps)?;
    let accept = decision.accept;
    let split_at = lo + cand.k_star;
    log.push(decision);
    if accept {
        inner.push(split_at);
        recurse(spec, lo, split_at, eps, inner, log)?;
        recurse(spec, split_at, hi, eps, inner, log)?;
    }
    Ok(())
}
