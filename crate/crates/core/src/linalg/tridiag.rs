use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix: diagonal `d` and off-diagonal `e`,
/// with `e.len() == d.len() - 1`.
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(d: Vec<f64>, e: Vec<f64>) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::InvalidArgument("empty tridiagonal".into()));
        }
        if e.len() + 1 != d.len() {
            return Err(Error::DimensionMismatch(format!(
                "tridiagonal: |e| = {} but |d| - 1 = {}",
                e.len(),
                d.len() - 1
            )));
        }
        Ok(Self { d, e })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn trace(&self) -> f64 {
        self.d.iter().sum()
    }

    /// All eigenvalues in ascending order, by implicit-shift QL with
    /// Wilkinson shifts. Iteration cap 50 per eigenvalue.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut d = self.d.clone();
        let mut e = self.e.clone();
        e.push(0.0);

        for l in 0..n {
            let mut iter = 0usize;
            loop {
                // locate a negligible off-diagonal element
                let mut m = l;
                while m + 1 < n {
                    let dd = d[m].abs() + d[m + 1].abs();
                    if e[m].abs() <= f64::EPSILON * dd {
                        break;
                    }
                    m += 1;
                }
                if m == l {
                    break;
                }
                iter += 1;
                if iter > 50 * n {
                    return Err(Error::EigenNoConvergence(iter));
                }
                // Wilkinson shift from the leading 2x2
                let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                let mut r = g.hypot(1.0);
                g = d[m] - d[l] + e[l] / (g + r.abs().copysign(g));
                let mut s = 1.0;
                let mut c = 1.0;
                let mut p = 0.0;
                let mut underflow = false;
                for i in (l..m).rev() {
                    let f = s * e[i];
                    let b = c * e[i];
                    r = f.hypot(g);
                    e[i + 1] = r;
                    if r == 0.0 {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        underflow = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                }
                if underflow {
                    continue;
                }
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        }
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry() {
        let t = SymTridiagonal::new(vec![5.0], vec![]).unwrap();
        assert_eq!(t.eigenvalues().unwrap(), vec![5.0]);
    }

    #[test]
    fn two_by_two() {
        // d = (2,2), e = (1): (2-l)^2 - 1 = 0 -> {1, 3}
        let t = SymTridiagonal::new(vec![2.0, 2.0], vec![1.0]).unwrap();
        let ev = t.eigenvalues().unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-13);
        assert!((ev[1] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn three_by_three_zero_diagonal() {
        let t = SymTridiagonal::new(vec![0.0, 0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let ev = t.eigenvalues().unwrap();
        let s2 = 2.0f64.sqrt();
        assert!((ev[0] + s2).abs() < 1e-13);
        assert!(ev[1].abs() < 1e-13);
        assert!((ev[2] - s2).abs() < 1e-13);
    }

    #[test]
    fn bad_lengths_rejected() {
        assert!(SymTridiagonal::new(vec![1.0, 2.0], vec![1.0, 1.0]).is_err());
        assert!(SymTridiagonal::new(vec![], vec![]).is_err());
    }

    #[test]
    fn trace_matches_eigenvalue_sum() {
        let n = 60;
        let d: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) * 0.37).collect();
        let e: Vec<f64> = (0..n - 1).map(|i| 0.5 + 0.1 * ((i * 7 % 13) as f64)).collect();
        let t = SymTridiagonal::new(d, e).unwrap();
        let sum: f64 = t.eigenvalues().unwrap().iter().sum();
        let tr = t.trace();
        assert!((sum - tr).abs() <= 1e-10 * tr.abs());
    }
}
