use crate::error::{Error, Result};

/// Default size cap for the dense eigensolver; it is a desk-scale oracle.
pub const DEFAULT_ORACLE_CAP: usize = 2500;

/// Full symmetric eigendecomposition of a dense row-major matrix.
/// Returns eigenvalues ascending and the matching eigenvectors as columns
/// of a row-major n x n buffer.
pub fn dense_sym_eigen(n: usize, m: &[f64], cap: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n > cap {
        return Err(Error::OracleCapExceeded { n, cap });
    }
    assert_eq!(m.len(), n * n, "dense_sym_eigen: bad buffer size");
    let mut v = m.to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e);
    tql2(n, &mut v, &mut d, &mut e)?;

    // sort ascending, permuting eigenvector columns along
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&k| d[k]).collect();
    let mut vecs = vec![0.0; n * n];
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..n {
            vecs[row * n + new_col] = v[row * n + old_col];
        }
    }
    Ok((vals, vecs))
}

/// Eigenvalues only, ascending.
pub fn dense_sym_eigenvalues(n: usize, m: &[f64], cap: usize) -> Result<Vec<f64>> {
    dense_sym_eigen(n, m, cap).map(|(vals, _)| vals)
}

// Householder reduction to tridiagonal form with accumulation of the
// orthogonal transformation in v.
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        let mut scale = 0.0;
        if l > 0 {
            for k in 0..=l {
                scale += v[i * n + k].abs();
            }
            if scale == 0.0 {
                e[i] = v[i * n + l];
            } else {
                for k in 0..=l {
                    v[i * n + k] /= scale;
                    h += v[i * n + k] * v[i * n + k];
                }
                let mut f = v[i * n + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                v[i * n + l] = f - g;
                for j in 0..=l {
                    e[j] = 0.0;
                }
                for j in 0..=l {
                    f = v[i * n + j];
                    v[j * n + i] = f;
                    let mut g = e[j] + v[j * n + j] * f;
                    for k in (j + 1)..=l {
                        g += v[k * n + j] * v[i * n + k];
                        e[k] += v[k * n + j] * f;
                    }
                    e[j] = g;
                }
                f = 0.0;
                for j in 0..=l {
                    e[j] /= h;
                    f += e[j] * v[i * n + j];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    e[j] -= hh * v[i * n + j];
                }
                for j in 0..=l {
                    f = v[i * n + j];
                    let g = e[j];
                    for k in j..=l {
                        v[k * n + j] -= f * e[k] + g * v[i * n + k];
                    }
                }
            }
        } else {
            e[i] = v[i * n + l];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        let l = i;
        if d[i] != 0.0 {
            // d[i] still holds h = u^T u / 2 for this reflector
            for j in 0..l {
                let mut g = 0.0;
                for k in 0..l {
                    g += v[i * n + k] * v[k * n + j];
                }
                g /= d[i];
                for k in 0..l {
                    v[k * n + j] -= g * v[k * n + i];
                }
            }
        }
        d[i] = v[i * n + i];
        v[i * n + i] = 1.0;
        for j in 0..i {
            v[j * n + i] = 0.0;
            v[i * n + j] = 0.0;
        }
    }
}

// Implicit-shift QL on the tridiagonal (d, e) with eigenvector update in v.
fn tql2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    for l in 0..n {
        let mut iter = 0usize;
        loop {
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
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let f2 = v[k * n + i + 1];
                    v[k * n + i + 1] = s * v[k * n + i] + c * f2;
                    v[k * n + i] = c * v[k * n + i] - s * f2;
                }
            }
            if r == 0.0 {
                // underflow break inside the sweep: retry from the deflated
                // problem without touching d[l]/e[l]
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}
