//! Instrumented preconditioned conjugate gradient with capture of the CG
//! recurrence coefficients, from which the Lanczos tridiagonal and Ritz
//! values of the preconditioned operator are recovered.

use crate::bounds::Spectrum;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, SparseMatrix, SymTridiagonal};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Preconditioner application M^{-1} r.
pub trait Preconditioner: Sync {
    fn apply(&self, r: &[f64]) -> Vec<f64>;
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        r.to_vec()
    }
}

/// Stopping mode: relative preconditioned residual, or relative A-norm
/// error against a known reference solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopMode {
    Residual,
    ANormError,
}

#[derive(Debug, Clone)]
pub struct StopRule {
    pub mode: StopMode,
    pub eps: f64,
    pub max_iters: usize,
}

impl StopRule {
    pub fn new(mode: StopMode, eps: f64, max_iters: usize) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidArgument(format!("tolerance {eps} outside (0,1)")));
        }
        if max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        Ok(Self { mode, eps, max_iters })
    }
}

/// Per-iteration record of a PCG run.
#[derive(Debug, Clone, Default)]
pub struct CGTrace {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// preconditioned residual norms sqrt(r^T z) after each iteration
    pub resnorms: Vec<f64>,
    /// relative A-norm error history, when a reference solution is given
    pub anorm_errs: Option<Vec<f64>>,
    pub converged: bool,
    pub stopped_by_observer: bool,
}

impl CGTrace {
    pub fn iterations(&self) -> usize {
        self.alphas.len()
    }
}

/// Observer invoked once per iteration with the running trace; returning
/// `false` stops the solve early.
pub type Observer<'a> = &'a mut dyn FnMut(usize, &CGTrace) -> bool;

/// Preconditioned conjugate gradient. Returns the (possibly partial)
/// solution and the trace; `trace.converged` distinguishes success from
/// hitting the iteration cap.
pub fn pcg(
    a: &SparseMatrix,
    b: &[f64],
    m: &dyn Preconditioner,
    stop: &StopRule,
    x0: &[f64],
    reference: Option<&[f64]>,
    mut observer: Option<Observer<'_>>,
) -> Result<(Vec<f64>, CGTrace)> {
    let n = a.n_rows();
    if a.n_cols() != n || b.len() != n || x0.len() != n {
        return Err(Error::DimensionMismatch("pcg: inconsistent dimensions".into()));
    }
    if stop.mode == StopMode::ANormError && reference.is_none() {
        return Err(Error::InvalidArgument(
            "A-norm error stopping requires a reference solution".into(),
        ));
    }

    let mut trace = CGTrace::default();
    if reference.is_some() {
        trace.anorm_errs = Some(Vec::new());
    }

    let mut x = x0.to_vec();
    let ax = a.spmv(&x)?;
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
    let mut z = m.apply(&r);
    let mut rz = dot(&r, &z);
    if rz < 0.0 {
        return Err(Error::Breakdown(format!("negative r^T z = {rz} at start")));
    }
    let resnorm0 = rz.sqrt();
    if resnorm0 == 0.0 {
        trace.converged = true;
        return Ok((x, trace));
    }
    let err0 = reference.map(|xr| a_norm_diff(a, xr, &x)).transpose()?;

    let mut p = z.clone();
    for iter in 0..stop.max_iters {
        let q = a.spmv(&p)?;
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return Err(Error::Breakdown(format!(
                "non-positive curvature p^T A p = {pq} at iteration {iter}"
            )));
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        z = m.apply(&r);
        let rz_new = dot(&r, &z);
        if rz_new < 0.0 {
            if rz_new.abs() < f64::MIN_POSITIVE * 1e16 {
                // the residual has underflowed into noise; nothing further
                // can change, so stop instead of reporting a breakdown
                break;
            }
            return Err(Error::Breakdown(format!(
                "negative r^T z = {rz_new} at iteration {iter}"
            )));
        }
        let beta = rz_new / rz;
        trace.alphas.push(alpha);
        trace.betas.push(beta);
        trace.resnorms.push(rz_new.sqrt());
        if let (Some(xr), Some(e0)) = (reference, err0) {
            let e = a_norm_diff(a, xr, &x)?;
            trace
                .anorm_errs
                .as_mut()
                .unwrap()
                .push(if e0 > 0.0 { e / e0 } else { 0.0 });
        }

        if let Some(obs) = observer.as_mut() {
            if !obs(iter, &trace) {
                trace.stopped_by_observer = true;
                return Ok((x, trace));
            }
        }

        let quantity = match stop.mode {
            StopMode::Residual => rz_new.sqrt() / resnorm0,
            StopMode::ANormError => *trace.anorm_errs.as_ref().unwrap().last().unwrap(),
        };
        if quantity <= stop.eps {
            trace.converged = true;
            return Ok((x, trace));
        }

        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        rz = rz_new;
    }
    Ok((x, trace))
}

fn a_norm_diff(a: &SparseMatrix, x: &[f64], y: &[f64]) -> Result<f64> {
    let e: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| xi - yi).collect();
    let ae = a.spmv(&e)?;
    Ok(dot(&e, &ae).max(0.0).sqrt())
}

/// Lanczos tridiagonal of the first `k` iterations of a trace. Its
/// eigenvalues are the Ritz values of the preconditioned operator.
pub fn lanczos_tridiagonal_prefix(trace: &CGTrace, k: usize) -> Result<SymTridiagonal> {
    if k == 0 || k > trace.iterations() {
        return Err(Error::InvalidArgument(format!(
            "lanczos prefix {k} outside 1..={}",
            trace.iterations()
        )));
    }
    let mut d = Vec::with_capacity(k);
    let mut e = Vec::with_capacity(k.saturating_sub(1));
    for j in 0..k {
        let mut dj = 1.0 / trace.alphas[j];
        if j > 0 {
            dj += trace.betas[j - 1] / trace.alphas[j - 1];
        }
        d.push(dj);
        if j + 1 < k {
            e.push(trace.betas[j].sqrt() / trace.alphas[j]);
        }
    }
    SymTridiagonal::new(d, e)
}

pub fn lanczos_tridiagonal(trace: &CGTrace) -> Result<SymTridiagonal> {
    lanczos_tridiagonal_prefix(trace, trace.iterations())
}

/// Ritz values (ascending) from the full trace.
pub fn ritz_values(trace: &CGTrace) -> Result<Spectrum> {
    ritz_values_at(trace, trace.iterations())
}

/// Ritz values from the first `k` iterations.
pub fn ritz_values_at(trace: &CGTrace, k: usize) -> Result<Spectrum> {
    let t = lanczos_tridiagonal_prefix(trace, k)?;
    Spectrum::new(t.eigenvalues()?)
}

/// Trace CSV: iter, alpha, beta, resnorm and, when tracked, anorm_err,
/// all with 17 significant digits.
pub fn write_trace_csv(path: &Path, trace: &CGTrace) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let with_err = trace.anorm_errs.is_some();
    if with_err {
        writeln!(w, "iter,alpha,beta,resnorm,anorm_err")?;
    } else {
        writeln!(w, "iter,alpha,beta,resnorm")?;
    }
    for j in 0..trace.iterations() {
        if with_err {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                j,
                trace.alphas[j],
                trace.betas[j],
                trace.resnorms[j],
                trace.anorm_errs.as_ref().unwrap()[j]
            )?;
        } else {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e}",
                j, trace.alphas[j], trace.betas[j], trace.resnorms[j]
            )?;
        }
    }
    Ok(())
}

/// Builds the diagonal system with the given spectrum; handy for synthetic
/// soundness suites where the exact spectrum is prescribed.
pub fn diagonal_system(spectrum: &Spectrum) -> SparseMatrix {
    let triplets: Vec<_> = spectrum
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| (i, i, v))
        .collect();
    let mut m = SparseMatrix::from_triplets(spectrum.len(), spectrum.len(), &triplets).unwrap();
    m.set_symmetric().unwrap();
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense_sym_eigenvalues;

    fn stop_res(eps: f64, max: usize) -> StopRule {
        StopRule::new(StopMode::Residual, eps, max).unwrap()
    }

    #[test]
    fn identity_system_one_iteration() {
        let a = SparseMatrix::identity(5);
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let (x, trace) =
            pcg(&a, &b, &IdentityPreconditioner, &stop_res(1e-12, 10), &[0.0; 5], None, None)
                .unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations(), 1);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_rhs_returns_immediately() {
        let a = SparseMatrix::identity(4);
        let (x, trace) =
            pcg(&a, &[0.0; 4], &IdentityPreconditioner, &stop_res(1e-10, 10), &[0.0; 4], None, None)
                .unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations(), 0);
        assert_eq!(x, vec![0.0; 4]);
    }

    #[test]
    fn finite_termination_k_distinct_eigenvalues() {
        // diagonal with 4 distinct eigenvalues: convergence in <= 4 (+2) steps
        let spec = Spectrum::new(vec![1.0, 3.0, 7.0, 20.0]).unwrap();
        let a = diagonal_system(&spec);
        let b = vec![1.0, 1.0, 1.0, 1.0];
        let (_, trace) =
            pcg(&a, &b, &IdentityPreconditioner, &stop_res(1e-10, 20), &[0.0; 4], None, None)
                .unwrap();
        assert!(trace.converged);
        assert!(trace.iterations() <= 6, "m = {}", trace.iterations());
    }

    #[test]
    fn alphas_betas_positive() {
        let spec = Spectrum::new(vec![1.0, 2.0, 5.0, 10.0, 100.0]).unwrap();
        let a = diagonal_system(&spec);
        let b = vec![1.0, -1.0, 2.0, 0.5, 1.0];
        let (_, trace) =
            pcg(&a, &b, &IdentityPreconditioner, &stop_res(1e-12, 50), &[0.0; 5], None, None)
                .unwrap();
        assert!(trace.alphas.iter().all(|&a| a > 0.0));
        assert!(trace.betas.iter().all(|&b| b > 0.0));
    }

    #[test]
    fn breakdown_on_indefinite_matrix() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, -1.0)]).unwrap();
        let res = pcg(
            &a,
            &[0.0, 1.0],
            &IdentityPreconditioner,
            &stop_res(1e-10, 10),
            &[0.0; 2],
            None,
            None,
        );
        assert!(matches!(res, Err(Error::Breakdown(_))));
    }

    #[test]
    fn max_iterations_partial_trace() {
        let spec = Spectrum::new((1..=50).map(|i| i as f64).collect()).unwrap();
        let a = diagonal_system(&spec);
        let b = vec![1.0; 50];
        let (_, trace) =
            pcg(&a, &b, &IdentityPreconditioner, &stop_res(1e-14, 3), &[0.0; 50], None, None)
                .unwrap();
        assert!(!trace.converged);
        assert_eq!(trace.iterations(), 3);
    }

    #[test]
    fn lanczos_one_iteration() {
        let a = diagonal_system(&Spectrum::new(vec![5.0, 5.0]).unwrap());
        let (_, trace) =
            pcg(&a, &[1.0, 2.0], &IdentityPreconditioner, &stop_res(1e-12, 5), &[0.0; 2], None, None)
                .unwrap();
        let t = lanczos_tridiagonal_prefix(&trace, 1).unwrap();
        assert_eq!(t.dim(), 1);
        assert!((t.d[0] - 1.0 / trace.alphas[0]).abs() < 1e-15);
        let ritz = ritz_values_at(&trace, 1).unwrap();
        assert!((ritz.values()[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn ritz_exact_after_finite_termination() {
        let spec = Spectrum::new(vec![1.0, 2.0]).unwrap();
        let a = diagonal_system(&spec);
        let (_, trace) =
            pcg(&a, &[1.0, 1.0], &IdentityPreconditioner, &stop_res(1e-13, 10), &[0.0; 2], None, None)
                .unwrap();
        let ritz = ritz_values_at(&trace, 2).unwrap();
        assert!((ritz.values()[0] - 1.0).abs() < 1e-10);
        assert!((ritz.values()[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn ritz_three_decades() {
        let spec = Spectrum::new(vec![1.0, 10.0, 100.0]).unwrap();
        let a = diagonal_system(&spec);
        let (_, trace) = pcg(
            &a,
            &[1.0, 1.0, 1.0],
            &IdentityPreconditioner,
            &stop_res(1e-13, 10),
            &[0.0; 3],
            None,
            None,
        )
        .unwrap();
        let ritz = ritz_values_at(&trace, 3).unwrap();
        for (r, e) in ritz.values().iter().zip([1.0, 10.0, 100.0]) {
            assert!((r - e).abs() < 1e-8 * e, "ritz {r} vs {e}");
        }
    }

    #[test]
    fn ritz_interlacing_and_containment() {
        let n = 20;
        let vals: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) * 0.73).collect();
        let spec = Spectrum::new(vals.clone()).unwrap();
        let a = diagonal_system(&spec);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 13 % 7) as f64)).collect();
        let (_, trace) =
            pcg(&a, &b, &IdentityPreconditioner, &stop_res(1e-13, 40), &vec![0.0; n], None, None)
                .unwrap();
        let m = trace.iterations();
        let (lo, hi) = (vals[0], vals[n - 1]);
        let mut prev: Option<Vec<f64>> = None;
        for k in 1..=m {
            let ritz = ritz_values_at(&trace, k).unwrap().values().to_vec();
            // containment in the operator's spectral interval
            for &r in &ritz {
                assert!(r >= lo - 1e-8 * hi && r <= hi + 1e-8 * hi);
            }
            // Cauchy interlacing against the previous prefix
            if let Some(p) = prev {
                for i in 0..p.len() {
                    assert!(ritz[i] <= p[i] + 1e-9 * hi);
                    assert!(p[i] <= ritz[i + 1] + 1e-9 * hi);
                }
            }
            prev = Some(ritz);
        }
    }

    #[test]
    fn anorm_error_monotone_decreasing() {
        let n = 30;
        let vals: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).powi(2)).collect();
        let a = diagonal_system(&Spectrum::new(vals).unwrap());
        let b = vec![1.0; n];
        // reference by direct diagonal solve
        let xref: Vec<f64> = (0..n).map(|i| b[i] / a.get(i, i)).collect();
        let rule = StopRule::new(StopMode::ANormError, 1e-10, 100).unwrap();
        let (_, trace) = pcg(
            &a,
            &b,
            &IdentityPreconditioner,
            &rule,
            &vec![0.0; n],
            Some(&xref),
            None,
        )
        .unwrap();
        assert!(trace.converged);
        let errs = trace.anorm_errs.as_ref().unwrap();
        for w in errs.windows(2) {
            assert!(w[1] < w[0] + 1e-15, "A-norm error not decreasing: {w:?}");
        }
    }

    #[test]
    fn ritz_extremes_match_oracle() {
        // random SPD 20x20 with isolated extreme eigenvalues (Lanczos
        // resolves isolated extremes to high accuracy within the run)
        let n = 20;
        let mut state = 99u64;
        let mut rng = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = rng();
                dense[i * n + j] = v;
                dense[j * n + i] = v;
            }
            dense[i * n + i] += 10.0;
        }
        // detach one eigenvalue near 60 and one near 1
        dense[0] += 50.0;
        dense[n + 1] -= 9.0;
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                triplets.push((i, j, dense[i * n + j]));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &triplets).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng() + 2.0).collect();
        let (_, trace) =
            pcg(&a, &b, &IdentityPreconditioner, &stop_res(1e-14, 60), &vec![0.0; n], None, None)
                .unwrap();
        let ritz = ritz_values(&trace).unwrap();
        let oracle = dense_sym_eigenvalues(n, &dense, 2500).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        assert!(rel(ritz.lambda_min(), oracle[0]) < 1e-6);
        assert!(rel(ritz.lambda_max(), oracle[n - 1]) < 1e-6);
    }

    #[test]
    fn observer_can_stop_early() {
        let spec = Spectrum::new((1..=40).map(|i| i as f64).collect()).unwrap();
        let a = diagonal_system(&spec);
        let b = vec![1.0; 40];
        let mut calls = 0usize;
        let mut obs = |iter: usize, _t: &CGTrace| {
            calls += 1;
            iter < 4
        };
        let (_, trace) = pcg(
            &a,
            &b,
            &IdentityPreconditioner,
            &stop_res(1e-14, 100),
            &vec![0.0; 40],
            None,
            Some(&mut obs),
        )
        .unwrap();
        assert!(trace.stopped_by_observer);
        assert_eq!(trace.iterations(), 5);
        assert_eq!(calls, 5);
    }
}
