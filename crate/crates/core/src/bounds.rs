//! Chebyshev-polynomial iteration bounds for PCG on clustered spectra:
//! the classical bound `m1`, the two-cluster bound `m2`, and the
//! multi-cluster bound `ms` with per-cluster degrees.
//!
//! All Chebyshev magnitudes are computed in the log domain; the degree
//! formulas involve ratios that overflow f64 for condition numbers near
//! the coefficient contrast (1e8).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Ascending, strictly positive eigenvalue list (exact or Ritz).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty spectrum".into()));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if values[0] <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "non-positive eigenvalue {}",
                values[0]
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lambda_min(&self) -> f64 {
        self.values[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn kappa(&self) -> f64 {
        self.lambda_max() / self.lambda_min()
    }
}

/// Partition of a spectrum into `s` contiguous clusters. `bounds` holds
/// k_0 = 0 < k_1 < ... < k_s = n; cluster i (1-based) covers eigenvalue
/// indices k_{i-1}..k_i (0-based, half-open).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPartition {
    bounds: Vec<usize>,
}

impl ClusterPartition {
    pub fn new(n: usize, inner: &[usize]) -> Result<Self> {
        let mut bounds = Vec::with_capacity(inner.len() + 2);
        bounds.push(0);
        bounds.extend_from_slice(inner);
        bounds.push(n);
        for w in bounds.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidArgument(format!(
                    "partition indices not strictly increasing: {:?}",
                    bounds
                )));
            }
        }
        Ok(Self { bounds })
    }

    pub fn single(n: usize) -> Self {
        Self::new(n, &[]).unwrap()
    }

    /// Number of clusters s.
    pub fn s(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn n(&self) -> usize {
        *self.bounds.last().unwrap()
    }

    /// The k_0..k_s index list.
    pub fn indices(&self) -> &[usize] {
        &self.bounds
    }

    /// Cluster interval [lambda_{k_{i-1}+1}, lambda_{k_i}] for 0-based
    /// cluster index i.
    pub fn interval(&self, spec: &Spectrum, i: usize) -> (f64, f64) {
        let lo = self.bounds[i];
        let hi = self.bounds[i + 1];
        (spec.values()[lo], spec.values()[hi - 1])
    }

    /// Cluster condition number kappa_i.
    pub fn kappa_i(&self, spec: &Spectrum, i: usize) -> f64 {
        let (lo, hi) = self.interval(spec, i);
        hi / lo
    }

    pub fn is_singleton(&self, spec: &Spectrum, i: usize) -> bool {
        let (lo, hi) = self.interval(spec, i);
        lo == hi
    }

    pub fn validate(&self, spec: &Spectrum) -> Result<()> {
        if self.n() != spec.len() {
            return Err(Error::DimensionMismatch(format!(
                "partition over {} eigenvalues applied to spectrum of {}",
                self.n(),
                spec.len()
            )));
        }
        // intervals must be disjoint: lambda_{k_i} < lambda_{k_i + 1}
        for i in 1..self.s() {
            let prev_hi = spec.values()[self.bounds[i] - 1];
            let next_lo = spec.values()[self.bounds[i]];
            if prev_hi >= next_lo {
                return Err(Error::InvalidArgument(format!(
                    "clusters {i} and {} overlap: {prev_hi} >= {next_lo}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Product of per-cluster scaled Chebyshev factors (singleton clusters
/// contribute a degree-1 linear factor with its root at the eigenvalue).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterPolynomial {
    pub partition: ClusterPartition,
    pub degrees: Vec<usize>,
    pub eps: f64,
}

impl ClusterPolynomial {
    /// Total degree, i.e. the multi-cluster iteration bound ms.
    pub fn total_degree(&self) -> usize {
        self.degrees.iter().sum()
    }

    /// log |r_s(lambda)|; -inf at any factor root.
    pub fn log_abs(&self, spec: &Spectrum, lambda: f64) -> f64 {
        (0..self.partition.s())
            .map(|i| self.factor_log_abs(spec, i, lambda))
            .sum()
    }

    /// log |C-hat factor for cluster i| at lambda.
    pub fn factor_log_abs(&self, spec: &Spectrum, i: usize, lambda: f64) -> f64 {
        let (lo, hi) = self.partition.interval(spec, i);
        if lo == hi {
            // linear factor (1 - lambda/lo), degree 1
            debug_assert_eq!(self.degrees[i], 1);
            (1.0 - lambda / lo).abs().ln()
        } else {
            log_abs_scaled_cheb((lo, hi), self.degrees[i], lambda)
        }
    }
}

/// Bound summary emitted by the experiment pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub eps: f64,
    pub n: usize,
    pub kappa: f64,
    pub m1: usize,
    /// Two-cluster bound of the first accepted split, when s >= 2.
    pub m2: Option<usize>,
    pub ms: usize,
    pub s: usize,
    pub partition_indices: Vec<usize>,
    pub degrees: Vec<usize>,
    pub cluster_kappas: Vec<f64>,
}

/// Affine map of a cluster interval onto [-1, 1]: lower edge to
/// -1, upper edge to +1; 0 maps strictly below -1.
pub fn affine_map(interval: (f64, f64), lambda: f64) -> f64 {
    let (a, b) = interval;
    (2.0 * lambda - (a + b)) / (b - a)
}

/// log |C_q(x)| for the first-kind Chebyshev polynomial, valid on all of R.
/// Inside [-1, 1] via cos(q acos x); outside via log-cosh of q acosh|x|,
/// which stays finite up to q*acosh|x| of order 1e5 and beyond.
fn log_abs_cheb(q: usize, x: f64) -> f64 {
    if q == 0 {
        return 0.0;
    }
    let qf = q as f64;
    if x.abs() <= 1.0 {
        (qf * x.acos()).cos().abs().ln()
    } else {
        let t = qf * x.abs().acosh();
        // log cosh t without overflow
        t + (0.5 * (1.0 + (-2.0 * t).exp())).ln()
    }
}

/// acosh(1 + u) for u >= 0 without the cancellation of forming 1 + u first.
fn acosh_1p(u: f64) -> f64 {
    (u + (u * (2.0 + u)).sqrt()).ln_1p()
}

/// log cosh t for t >= 0 without overflow.
fn log_cosh(t: f64) -> f64 {
    t + (0.5 * (1.0 + (-2.0 * t).exp())).ln()
}

/// q acosh|x| at distance `outside` beyond the interval edge, i.e.
/// |x| - 1 = 2 outside / (b - a), fed in directly so that tight intervals
/// far from lambda keep full relative accuracy (the affine map would lose
/// |x| - 1 to cancellation, and large q amplifies that loss).
fn log_abs_cheb_outside(q: usize, outside: f64, width: f64) -> f64 {
    log_cosh(q as f64 * acosh_1p(2.0 * outside / width))
}

/// Natural log of |C-hat_q| on the given cluster interval at lambda,
/// normalized so the value at lambda = 0 is exactly 0.
pub fn log_abs_scaled_cheb(interval: (f64, f64), q: usize, lambda: f64) -> f64 {
    if q == 0 {
        return 0.0;
    }
    let (a, b) = interval;
    let width = b - a;
    let num = if lambda < a {
        log_abs_cheb_outside(q, a - lambda, width)
    } else if lambda > b {
        log_abs_cheb_outside(q, lambda - b, width)
    } else {
        // the affine map can land an ulp outside [-1, 1] at the edges; a
        // large q would amplify that into spurious growth
        log_abs_cheb(q, affine_map(interval, lambda).clamp(-1.0, 1.0))
    };
    num - log_abs_cheb_outside(q, a, width)
}

/// Classical PCG iteration bound from the condition number.
pub fn m1(kappa: f64, eps: f64) -> usize {
    let v = kappa.sqrt() / 2.0 * (2.0 / eps).ln() + 1.0;
    v.floor().max(1.0) as usize
}

/// Two-cluster PCG iteration bound.
pub fn m2(kappa: f64, kappa1: f64, kappa2: f64, eps: f64) -> usize {
    let log_term = (4.0 * kappa / kappa1).ln();
    let v = 1.0
        + kappa2.sqrt() / 2.0 * log_term
        + 0.5
            * (2.0 / eps).ln()
            * (kappa1.sqrt() + kappa2.sqrt() + (kappa1 * kappa2).sqrt() / 2.0 * log_term);
    v.floor().max(1.0) as usize
}

/// Per-cluster Chebyshev degrees. Clusters are processed in ascending
/// order; each degree compensates the growth of all lower-cluster factors
/// at the cluster's upper edge so that the running product stays below
/// eps there. Singleton clusters get a single exact root.
pub fn cluster_degrees(
    spec: &Spectrum,
    partition: &ClusterPartition,
    eps: f64,
) -> Result<ClusterPolynomial> {
    partition.validate(spec)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps {eps} outside (0,1)")));
    }
    let s = partition.s();
    let mut degrees: Vec<usize> = Vec::with_capacity(s);
    for i in 0..s {
        let (lo, hi) = partition.interval(spec, i);
        if lo == hi {
            degrees.push(1);
            continue;
        }
        let edge = hi; // lambda_{k_i}
        // sum of log-magnitudes of the already-fixed lower factors at the edge
        let mut cross = 0.0;
        for j in 0..i {
            let (lj, hj) = partition.interval(spec, j);
            if lj == hj {
                cross += (edge / lj - 1.0).abs().ln();
            } else {
                debug_assert!(edge > hj, "edge of cluster {i} inside cluster {j}");
                let w = hj - lj;
                cross += degrees[j] as f64
                    * (acosh_1p(2.0 * (edge - hj) / w) - acosh_1p(2.0 * lj / w));
            }
        }
        let kappa_i = hi / lo;
        let gamma = (kappa_i.sqrt() - 1.0) / (kappa_i.sqrt() + 1.0);
        let ln_gamma = gamma.ln();
        let p = ((eps / 2.0).ln() - cross) / ln_gamma;
        degrees.push(p.ceil().max(0.0) as usize);
    }
    Ok(ClusterPolynomial { partition: partition.clone(), degrees, eps })
}

/// Total degree of the cluster polynomial: the multi-cluster bound ms.
pub fn ms(poly: &ClusterPolynomial) -> usize {
    poly.total_degree()
}

/// Result of checking a cluster polynomial against a spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    /// max over eigenvalues of log |r_s|
    pub max_log: f64,
    /// per-cluster running-product value at the cluster's
    /// upper edge
    pub edge_logs: Vec<f64>,
    pub pass: bool,
}

/// Evaluates log |r_s| at every eigenvalue and the running product at each
/// cluster's upper edge; passes iff everything stays below ln(eps) with
/// 1e-10 slack.
pub fn verify_polynomial(
    spec: &Spectrum,
    poly: &ClusterPolynomial,
    eps: f64,
) -> Result<VerifyReport> {
    poly.partition.validate(spec)?;
    let ln_eps = eps.ln();
    let mut max_log = f64::NEG_INFINITY;
    for &lambda in spec.values() {
        let v = poly.log_abs(spec, lambda);
        if v > max_log {
            max_log = v;
        }
    }
    let mut edge_logs = Vec::with_capacity(poly.partition.s());
    let mut pass = max_log < ln_eps + 1e-10;
    for i in 0..poly.partition.s() {
        let (_, edge) = poly.partition.interval(spec, i);
        let running: f64 = (0..=i).map(|j| poly.factor_log_abs(spec, j, edge)).sum();
        if running >= ln_eps + 1e-10 {
            pass = false;
        }
        edge_logs.push(running);
    }
    Ok(VerifyReport { max_log, edge_logs, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_map_values() {
        assert_eq!(affine_map((1.0, 3.0), 2.0), 0.0);
        assert_eq!(affine_map((1.0, 3.0), 0.0), -2.0);
        assert_eq!(affine_map((1.0, 3.0), 3.0), 1.0);
        assert_eq!(affine_map((1.0, 3.0), 1.0), -1.0);
    }

    #[test]
    fn scaled_cheb_normalization() {
        // |C-hat_q(0)| = 1 by construction
        for q in [1, 2, 3, 7, 50] {
            assert_eq!(log_abs_scaled_cheb((1.0, 3.0), q, 0.0), 0.0);
        }
        // q = 0 is identically 1
        assert_eq!(log_abs_scaled_cheb((1.0, 3.0), 0, 2.7), 0.0);
    }

    #[test]
    fn scaled_cheb_degree_three_hand_values() {
        // C_3(x) = 4x^3 - 3x; on [1,3]: T(2) = 0 so C_3 vanishes there (up
        // to the rounding of acos, i.e. |C_3| ~ 1e-16)
        let v = log_abs_scaled_cheb((1.0, 3.0), 3, 2.0);
        assert!(v < -30.0, "log at an interior root should be ~ -inf, got {v}");
        // C_3(T(0)) = C_3(-2) = -26; check against the direct recurrence
        let x: f64 = 2.0;
        let c3 = 4.0 * x.powi(3) - 3.0 * x; // |C_3(-2)| = 26
        let at_edge = log_abs_scaled_cheb((1.0, 3.0), 3, 3.0); // C_3(1) = 1
        assert!((at_edge - (1.0f64 / c3).ln()).abs() < 1e-12);
    }

    #[test]
    fn cheb_log_no_overflow() {
        // q * acosh|x| around 1e5 must stay finite
        let v = log_abs_cheb(100_000, -3.0);
        assert!(v.is_finite());
        assert!(v > 1e5);
    }

    #[test]
    fn m1_reference_values() {
        assert_eq!(m1(100.0, 2.0), 1);
        assert_eq!(m1(100.0, 1e-8), 96);
        assert_eq!(m1(1e8, 1e-8), 95_570);
    }

    #[test]
    fn m2_degenerate_and_clustered() {
        // kappa1 = kappa2 = 1, kappa = 4:
        // 1 + 0.5 ln 16 + 0.5 ln(2/eps) (2 + 0.5 ln 16)
        let eps = 1e-8f64;
        let expected = (1.0
            + 0.5 * 16.0f64.ln()
            + 0.5 * (2.0 / eps).ln() * (2.0 + 0.5 * 16.0f64.ln()))
        .floor() as usize;
        assert_eq!(m2(4.0, 1.0, 1.0, eps), expected);

        // single-cluster degenerate: kappa = kappa1, kappa2 = 1
        let k = 50.0f64;
        let expected = (1.0
            + 0.5 * 4.0f64.ln()
            + 0.5 * (2.0 / eps).ln() * (k.sqrt() + 1.0 + k.sqrt() / 2.0 * 4.0f64.ln()))
        .floor() as usize;
        assert_eq!(m2(k, k, 1.0, eps), expected);

        // two tight clusters at contrast scale: far below m1
        let tight = m2(1e8, 4.0, 4.0, 1e-8);
        assert!(tight < 1000, "m2 = {tight}");
        assert!(tight < m1(1e8, 1e-8) / 100);
    }

    #[test]
    fn single_cluster_degree_matches_m1() {
        // s = 1, kappa = 100: p1 = ceil(log_gamma(eps/2)) = 96
        let spec = Spectrum::new(vec![1.0, 50.0, 100.0]).unwrap();
        let part = ClusterPartition::single(3);
        let poly = cluster_degrees(&spec, &part, 1e-8).unwrap();
        assert_eq!(poly.degrees, vec![96]);
        assert_eq!(ms(&poly), m1(100.0, 1e-8));
    }

    #[test]
    fn singleton_cluster_contributes_degree_one() {
        let spec = Spectrum::new(vec![1.0, 1e8]).unwrap();
        let part = ClusterPartition::new(2, &[1]).unwrap();
        let poly = cluster_degrees(&spec, &part, 1e-8).unwrap();
        assert_eq!(poly.degrees, vec![1, 1]);
        // both factors annihilate their eigenvalue exactly
        let rep = verify_polynomial(&spec, &poly, 1e-8).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.max_log, f64::NEG_INFINITY);
    }

    #[test]
    fn two_cluster_degrees_verified() {
        let mut vals = Vec::new();
        for i in 0..10 {
            vals.push(1.0 + 0.1 * i as f64);
        }
        for i in 0..10 {
            vals.push(1e6 * (1.0 + 0.1 * i as f64));
        }
        let spec = Spectrum::new(vals).unwrap();
        let part = ClusterPartition::new(20, &[10]).unwrap();
        let poly = cluster_degrees(&spec, &part, 1e-8).unwrap();
        let rep = verify_polynomial(&spec, &poly, 1e-8).unwrap();
        assert!(rep.pass, "max_log = {}", rep.max_log);
        assert!(ms(&poly) < m1(spec.kappa(), 1e-8));
    }

    #[test]
    fn verify_detects_undershoot() {
        let mut vals = Vec::new();
        for i in 0..10 {
            vals.push(1.0 + 0.1 * i as f64);
        }
        for i in 0..10 {
            vals.push(1e6 * (1.0 + 0.1 * i as f64));
        }
        let spec = Spectrum::new(vals).unwrap();
        let part = ClusterPartition::new(20, &[10]).unwrap();
        let mut poly = cluster_degrees(&spec, &part, 1e-8).unwrap();
        // halve the compensating degree; the bound condition must now fail
        poly.degrees[1] /= 2;
        let rep = verify_polynomial(&spec, &poly, 1e-8).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn all_singletons_finite_termination() {
        let spec = Spectrum::new(vec![1.0, 10.0, 100.0, 1000.0]).unwrap();
        let part = ClusterPartition::new(4, &[1, 2, 3]).unwrap();
        let poly = cluster_degrees(&spec, &part, 1e-8).unwrap();
        assert_eq!(ms(&poly), 4);
        let rep = verify_polynomial(&spec, &poly, 1e-8).unwrap();
        assert!(rep.pass);
    }

    #[test]
    fn no_amplification_on_lower_clusters() {
        let mut vals = Vec::new();
        for i in 0..5 {
            vals.push(1.0 + 0.2 * i as f64);
        }
        for i in 0..5 {
            vals.push(1e4 * (1.0 + 0.2 * i as f64));
        }
        for i in 0..5 {
            vals.push(1e8 * (1.0 + 0.2 * i as f64));
        }
        let spec = Spectrum::new(vals).unwrap();
        let part = ClusterPartition::new(15, &[5, 10]).unwrap();
        let poly = cluster_degrees(&spec, &part, 1e-8).unwrap();
        for i in 1..3 {
            let (lo_i, hi_i) = poly.partition.interval(&spec, i);
            for j in 0..i {
                let (lo_j, hi_j) = poly.partition.interval(&spec, j);
                for t in 0..100 {
                    let lambda = lo_j + (hi_j - lo_j) * t as f64 / 99.0;
                    let v = log_abs_scaled_cheb((lo_i, hi_i), poly.degrees[i], lambda);
                    assert!(v < 0.0, "amplified at {lambda} by cluster {i}");
                }
            }
        }
    }

    #[test]
    fn partition_validation() {
        let spec = Spectrum::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(ClusterPartition::new(3, &[0]).is_err());
        assert!(ClusterPartition::new(3, &[2, 1]).is_err());
        // overlap: splitting between equal eigenvalues is invalid
        let spec_dup = Spectrum::new(vec![1.0, 1.0, 3.0]).unwrap();
        let p = ClusterPartition::new(3, &[1]).unwrap();
        assert!(p.validate(&spec_dup).is_err());
        assert!(p.validate(&spec).is_ok());
    }
}
