//! 2D high-contrast elliptic model problem on the unit square: periodic
//! inclusion pattern along subdomain interfaces, Q1 bilinear finite
//! elements on a uniform quad grid, homogeneous (or constant) Dirichlet
//! boundary eliminated.

use crate::error::{Error, Result};
use crate::linalg::{DenseFactor, SparseMatrix};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Structured grid: `subdomains_per_side` = 1/H boxes per side, each of
/// `elements_per_subdomain` = H/h elements per side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub subdomains_per_side: usize,
    pub elements_per_subdomain: usize,
}

impl GridSpec {
    pub fn new(subdomains_per_side: usize, elements_per_subdomain: usize) -> Result<Self> {
        if subdomains_per_side == 0 || elements_per_subdomain == 0 {
            return Err(Error::InvalidArgument("grid sizes must be positive".into()));
        }
        Ok(Self { subdomains_per_side, elements_per_subdomain })
    }

    pub fn elements_per_side(&self) -> usize {
        self.subdomains_per_side * self.elements_per_subdomain
    }

    pub fn h(&self) -> f64 {
        1.0 / self.elements_per_side() as f64
    }

    /// Interior (non-Dirichlet) unknown count.
    pub fn n_interior(&self) -> usize {
        let m = self.elements_per_side() - 1;
        m * m
    }

    pub fn is_interior(&self, gx: usize, gy: usize) -> bool {
        let e = self.elements_per_side();
        gx >= 1 && gx < e && gy >= 1 && gy < e
    }

    /// Interior unknown index of grid node (gx, gy), if any.
    pub fn interior_index(&self, gx: usize, gy: usize) -> Option<usize> {
        if self.is_interior(gx, gy) {
            let m = self.elements_per_side() - 1;
            Some((gy - 1) * m + (gx - 1))
        } else {
            None
        }
    }

    pub fn node_of_index(&self, idx: usize) -> (usize, usize) {
        let m = self.elements_per_side() - 1;
        (idx % m + 1, idx / m + 1)
    }
}

/// Contrast channels crossing the subdomain interfaces perpendicular to
/// them, evenly spaced along each interior interface segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionPattern {
    pub inclusions_per_edge: usize,
    /// channel extent on each side of the interface, in elements
    pub channel_half_len: usize,
    /// channel width in elements
    pub channel_width: usize,
}

impl Default for InclusionPattern {
    fn default() -> Self {
        Self { inclusions_per_edge: 3, channel_half_len: 2, channel_width: 2 }
    }
}

/// Per-element coefficient values.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub grid: GridSpec,
    pub background: f64,
    pub contrast: f64,
    /// row-major per element: values[ey * E + ex]
    pub values: Vec<f64>,
}

impl CoefficientField {
    pub fn constant(grid: GridSpec, value: f64) -> Self {
        let e = grid.elements_per_side();
        Self { grid, background: value, contrast: value, values: vec![value; e * e] }
    }

    pub fn at(&self, ex: usize, ey: usize) -> f64 {
        self.values[ey * self.grid.elements_per_side() + ex]
    }

    pub fn contrast_element_count(&self) -> usize {
        self.values.iter().filter(|&&v| v == self.contrast && v != self.background).count()
    }

    /// CSV raster, one grid row of elements per line, bottom row first.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        let e = self.grid.elements_per_side();
        for ey in 0..e {
            let row: Vec<String> =
                (0..e).map(|ex| format!("{}", self.at(ex, ey))).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Builds the periodic high-contrast field: background everywhere, with
/// `inclusions_per_edge` channels of `contrast` crossing every interior
/// subdomain interface.
pub fn build_coefficient_field(
    grid: GridSpec,
    pattern: InclusionPattern,
    background: f64,
    contrast: f64,
) -> Result<CoefficientField> {
    if background <= 0.0 || contrast <= 0.0 {
        return Err(Error::InvalidArgument("coefficients must be positive".into()));
    }
    let hh = grid.elements_per_subdomain;
    let s = grid.subdomains_per_side;
    let e = grid.elements_per_side();
    let inc = pattern.inclusions_per_edge;
    if inc > 0 {
        if 2 * pattern.channel_half_len > hh {
            return Err(Error::InvalidArgument(
                "channel half-length exceeds half a subdomain; channels would merge".into(),
            ));
        }
        if pattern.channel_width * (inc + 1) > hh {
            return Err(Error::InvalidArgument(
                "channels too wide to space evenly along an interface segment".into(),
            ));
        }
        if pattern.channel_half_len == 0 || pattern.channel_width == 0 {
            return Err(Error::InvalidArgument("degenerate channel dimensions".into()));
        }
    }
    let mut values = vec![background; e * e];
    if inc == 0 || s < 2 {
        return Ok(CoefficientField { grid, background, contrast, values });
    }

    let mut paint = |ex0: usize, ex1: usize, ey0: usize, ey1: usize| {
        for ey in ey0..ey1 {
            for ex in ex0..ex1 {
                values[ey * e + ex] = contrast;
            }
        }
    };

    for line in 1..s {
        let pos = line * hh;
        for seg in 0..s {
            for c in 0..inc {
                let center = seg * hh + (c + 1) * hh / (inc + 1);
                let w0 = center.saturating_sub(pattern.channel_width / 2);
                let w1 = (w0 + pattern.channel_width).min(e);
                // vertical interface x = pos: channel runs horizontally
                paint(pos - pattern.channel_half_len, pos + pattern.channel_half_len, w0, w1);
                // horizontal interface y = pos: channel runs vertically
                paint(w0, w1, pos - pattern.channel_half_len, pos + pattern.channel_half_len);
            }
        }
    }
    Ok(CoefficientField { grid, background, contrast, values })
}

/// Right-hand side and boundary data (constants; the model study uses
/// f = 1 and u_D = 0).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProblemData {
    pub f: f64,
    pub u_dirichlet: f64,
}

impl Default for ProblemData {
    fn default() -> Self {
        Self { f: 1.0, u_dirichlet: 0.0 }
    }
}

/// Assembled linear system on the interior unknowns.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    pub grid: GridSpec,
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub field: CoefficientField,
}

// Q1 element stiffness for -div(c grad u) on a square element, local node
// order (0,0), (1,0), (1,1), (0,1); independent of h in 2D.
const Q1_STIFFNESS: [[f64; 4]; 4] = [
    [4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0],
    [-2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0],
];

/// Assembles the Q1 stiffness matrix and load vector, eliminating the
/// Dirichlet boundary.
pub fn assemble(grid: GridSpec, field: &CoefficientField, data: ProblemData) -> Result<DiscreteProblem> {
    if field.grid != grid {
        return Err(Error::DimensionMismatch("coefficient field does not match grid".into()));
    }
    let e = grid.elements_per_side();
    let h = grid.h();
    let n = grid.n_interior();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(9 * n);
    let mut b = vec![0.0; n];

    for ey in 0..e {
        for ex in 0..e {
            let c = field.at(ex, ey);
            let nodes = [(ex, ey), (ex + 1, ey), (ex + 1, ey + 1), (ex, ey + 1)];
            let load = data.f * h * h / 4.0;
            for (li, &(gx, gy)) in nodes.iter().enumerate() {
                let Some(row) = grid.interior_index(gx, gy) else { continue };
                b[row] += load;
                for (lj, &(hx, hy)) in nodes.iter().enumerate() {
                    let k = c * Q1_STIFFNESS[li][lj];
                    match grid.interior_index(hx, hy) {
                        Some(col) => triplets.push((row, col, k)),
                        // lift of the Dirichlet value
                        None => b[row] -= k * data.u_dirichlet,
                    }
                }
            }
        }
    }
    let mut a = SparseMatrix::from_triplets(n, n, &triplets)?;
    a.set_symmetric()?;
    Ok(DiscreteProblem { grid, a, b, field: field.clone() })
}

impl DiscreteProblem {
    /// Reference solution by dense Cholesky; desk-scale sizes only.
    pub fn direct_solve(&self) -> Result<Vec<f64>> {
        let factor = DenseFactor::factor_sparse(&self.a)?;
        let mut x = factor.solve(&self.b)?;
        // refinement with a compensated residual: at contrast 1e8 the plain
        // solve's forward error (~ u * kappa(A)) sits above tight A-norm
        // stopping thresholds, which would poison reference-based stopping
        for _ in 0..3 {
            let r = self.a.residual_compensated(&x, &self.b)?;
            let dx = factor.solve(&r)?;
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dense_sym_eigenvalues, norm2};

    fn grid(s: usize, hh: usize) -> GridSpec {
        GridSpec::new(s, hh).unwrap()
    }

    #[test]
    fn zero_inclusions_constant_field() {
        let g = grid(4, 16);
        let f = build_coefficient_field(
            g,
            InclusionPattern { inclusions_per_edge: 0, channel_half_len: 0, channel_width: 0 },
            1.0,
            1e8,
        )
        .unwrap();
        assert!(f.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn default_pattern_contrast_count_locked() {
        let g = grid(4, 16);
        let f = build_coefficient_field(g, InclusionPattern::default(), 1.0, 1e8).unwrap();
        // golden count for H = 1/4, H/h = 16 with default channels
        assert_eq!(f.contrast_element_count(), 576);
        // binary field
        assert!(f.values.iter().all(|&v| v == 1.0 || v == 1e8));
    }

    #[test]
    fn interior_subdomain_patterns_periodic() {
        // two grids differing only in 1/H share interior local patterns
        let fa = build_coefficient_field(grid(4, 8), InclusionPattern::default(), 1.0, 1e8)
            .unwrap();
        let fb = build_coefficient_field(grid(6, 8), InclusionPattern::default(), 1.0, 1e8)
            .unwrap();
        // compare the interior subdomain (1,1) of the 4x4 grid with
        // subdomain (2,2) of the 6x6 grid
        let hh = 8;
        for ly in 0..hh {
            for lx in 0..hh {
                let va = fa.at(hh + lx, hh + ly);
                let vb = fb.at(2 * hh + lx, 2 * hh + ly);
                assert_eq!(va, vb, "mismatch at local element ({lx},{ly})");
            }
        }
        // and periodicity inside one grid: interior subdomains (1,1) vs (2,2)
        let fc = build_coefficient_field(grid(4, 8), InclusionPattern::default(), 1.0, 1e8)
            .unwrap();
        for ly in 0..hh {
            for lx in 0..hh {
                assert_eq!(fc.at(hh + lx, hh + ly), fc.at(2 * hh + lx, 2 * hh + ly));
            }
        }
    }

    #[test]
    fn oversized_pattern_rejected() {
        let g = grid(2, 4);
        let p = InclusionPattern { inclusions_per_edge: 3, channel_half_len: 3, channel_width: 1 };
        assert!(build_coefficient_field(g, p, 1.0, 1e8).is_err());
    }

    #[test]
    fn single_interior_node_stencil() {
        // 2 elements per side = 3x3 node grid with a single interior node;
        // its diagonal entry is the four-element Q1 Laplacian patch value
        let g = grid(2, 1);
        let f = CoefficientField::constant(g, 1.0);
        let p = assemble(g, &f, ProblemData::default()).unwrap();
        assert_eq!(p.a.n_rows(), 1);
        assert!((p.a.get(0, 0) - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn stiffness_scales_linearly_in_coefficient() {
        let g = grid(2, 3);
        let f1 = CoefficientField::constant(g, 1.0);
        let f7 = CoefficientField::constant(g, 7.0);
        let p1 = assemble(g, &f1, ProblemData::default()).unwrap();
        let p7 = assemble(g, &f7, ProblemData::default()).unwrap();
        for (t1, t7) in p1.a.triplets().iter().zip(p7.a.triplets()) {
            assert_eq!(t1.0, t7.0);
            assert_eq!(t1.1, t7.1);
            assert_eq!(7.0 * t1.2, t7.2);
        }
    }

    #[test]
    fn interior_row_sums_vanish_for_constant_coefficient() {
        // Laplacian stencil property: rows of fully interior nodes sum to 0
        // (counting the eliminated boundary couplings, which are zero only
        // for nodes not adjacent to the boundary)
        let g = grid(2, 3); // 6 elements per side
        let f = CoefficientField::constant(g, 1.0);
        let p = assemble(g, &f, ProblemData::default()).unwrap();
        let (gx, gy) = (3, 3);
        let row = g.interior_index(gx, gy).unwrap();
        let sum: f64 = p.a.row(row).map(|(_, v)| v).sum();
        assert!(sum.abs() < 1e-13, "row sum {sum}");
    }

    #[test]
    fn assembled_matrix_spd_on_small_grid() {
        let g = grid(2, 2);
        let f = build_coefficient_field(
            g,
            InclusionPattern { inclusions_per_edge: 1, channel_half_len: 1, channel_width: 1 },
            1.0,
            1e6,
        )
        .unwrap();
        let p = assemble(g, &f, ProblemData::default()).unwrap();
        let n = p.a.n_rows();
        let ev = dense_sym_eigenvalues(n, &p.a.to_dense(), 2500).unwrap();
        assert!(ev[0] > 0.0, "lambda_min = {}", ev[0]);
    }

    #[test]
    fn contrast_monotonicity_of_largest_eigenvalue() {
        let g = grid(2, 4);
        let p = InclusionPattern { inclusions_per_edge: 1, channel_half_len: 2, channel_width: 1 };
        let mut last = 0.0;
        for contrast in [1.0, 1e2, 1e4, 1e6] {
            let f = build_coefficient_field(g, p, 1.0, contrast).unwrap();
            let d = assemble(g, &f, ProblemData::default()).unwrap();
            let ev = dense_sym_eigenvalues(d.a.n_rows(), &d.a.to_dense(), 2500).unwrap();
            let max = *ev.last().unwrap();
            assert!(max >= last, "largest eigenvalue decreased: {max} < {last}");
            last = max;
        }
    }

    #[test]
    fn assembly_deterministic() {
        let g = grid(3, 4);
        let f = build_coefficient_field(g, InclusionPattern::default(), 1.0, 1e8);
        // default half-len 2 fits: 2*2 <= 4; width 2*(3+1)=8 > 4 -> must error
        assert!(f.is_err());
        let p = InclusionPattern { inclusions_per_edge: 1, channel_half_len: 2, channel_width: 1 };
        let f1 = build_coefficient_field(g, p, 1.0, 1e8).unwrap();
        let f2 = build_coefficient_field(g, p, 1.0, 1e8).unwrap();
        assert_eq!(f1, f2);
        let a1 = assemble(g, &f1, ProblemData::default()).unwrap();
        let a2 = assemble(g, &f2, ProblemData::default()).unwrap();
        assert_eq!(a1.a, a2.a);
        assert_eq!(a1.b, a2.b);
    }

    #[test]
    fn direct_solve_consistency() {
        let g = grid(2, 4);
        let f = CoefficientField::constant(g, 1.0);
        let p = assemble(g, &f, ProblemData::default()).unwrap();
        // b = 0 -> u = 0
        let zero = DiscreteProblem { b: vec![0.0; p.b.len()], ..p.clone() };
        assert!(norm2(&zero.direct_solve().unwrap()) == 0.0);
        // b = A 1 -> u = 1
        let ones = vec![1.0; p.b.len()];
        let b1 = p.a.spmv(&ones).unwrap();
        let consistent = DiscreteProblem { b: b1, ..p.clone() };
        let u = consistent.direct_solve().unwrap();
        for ui in &u {
            assert!((ui - 1.0).abs() < 1e-10);
        }
        // random-ish b: residual bound
        let b: Vec<f64> = (0..p.b.len()).map(|i| ((i * 31 % 17) as f64) - 8.0).collect();
        let prob = DiscreteProblem { b: b.clone(), ..p.clone() };
        let u = prob.direct_solve().unwrap();
        let au = prob.a.spmv(&u).unwrap();
        let res: Vec<f64> = au.iter().zip(&b).map(|(x, y)| x - y).collect();
        assert!(norm2(&res) <= 1e-12 * norm2(&b));
    }

    #[test]
    fn solution_respects_square_symmetry() {
        // f = 1, C = 1: solution invariant under the square's symmetries
        let g = grid(2, 3);
        let f = CoefficientField::constant(g, 1.0);
        let p = assemble(g, &f, ProblemData::default()).unwrap();
        let u = p.direct_solve().unwrap();
        let m = g.elements_per_side() - 1;
        let get = |gx: usize, gy: usize| u[g.interior_index(gx, gy).unwrap()];
        for gy in 1..=m {
            for gx in 1..=m {
                let v = get(gx, gy);
                for (sx, sy) in [
                    (m + 1 - gx, gy),
                    (gx, m + 1 - gy),
                    (gy, gx),
                    (m + 1 - gy, m + 1 - gx),
                ] {
                    assert!((get(sx, sy) - v).abs() < 1e-10);
                }
            }
        }
    }
}
