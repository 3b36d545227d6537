//! Two-level overlapping additive Schwarz preconditioner with GDSW and
//! RGDSW coarse spaces (plus a one-level variant): local subdomain
//! Dirichlet solves on overlapped boxes and a Galerkin coarse solve on
//! energy-minimizing interface basis functions.

use crate::error::{Error, Result};
use crate::krylov::Preconditioner;
use crate::linalg::{DenseFactor, SparseMatrix};
use crate::problem::GridSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoarseKind {
    None,
    Gdsw,
    Rgdsw,
}

impl std::fmt::Display for CoarseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoarseKind::None => write!(f, "one-level"),
            CoarseKind::Gdsw => write!(f, "gdsw"),
            CoarseKind::Rgdsw => write!(f, "rgdsw"),
        }
    }
}

/// An interface component: a single subdomain vertex node, or the open
/// edge between two subdomains.
#[derive(Debug, Clone)]
pub enum InterfaceComponent {
    Vertex { node: usize },
    Edge { subdomains: (usize, usize), nodes: Vec<usize> },
}

impl InterfaceComponent {
    pub fn nodes(&self) -> &[usize] {
        match self {
            InterfaceComponent::Vertex { node } => std::slice::from_ref(node),
            InterfaceComponent::Edge { nodes, .. } => nodes,
        }
    }
}

/// Structured box decomposition of the interior unknowns.
#[derive(Debug, Clone)]
pub struct DomainDecomposition {
    pub grid: GridSpec,
    pub delta_layers: usize,
    /// disjoint node sets partitioning the interior unknowns
    pub nonoverlapping: Vec<Vec<usize>>,
    /// interior nodes of each overlapped subdomain box
    pub overlapping: Vec<Vec<usize>>,
    /// interface components: all vertices first, then edges
    pub components: Vec<InterfaceComponent>,
    pub n_vertices: usize,
}

impl DomainDecomposition {
    pub fn n_subdomains(&self) -> usize {
        self.nonoverlapping.len()
    }

    /// node -> owning subdomain CSV (node, gx, gy, subdomain)
    pub fn write_partition_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "node,gx,gy,subdomain")?;
        let mut owner = vec![0usize; self.grid.n_interior()];
        for (s, nodes) in self.nonoverlapping.iter().enumerate() {
            for &n in nodes {
                owner[n] = s;
            }
        }
        for (n, s) in owner.iter().enumerate() {
            let (gx, gy) = self.grid.node_of_index(n);
            writeln!(w, "{n},{gx},{gy},{s}")?;
        }
        Ok(())
    }
}

/// Builds the box decomposition with `delta_layers` element layers of
/// overlap (overlap delta = delta_layers * h).
pub fn decompose(grid: GridSpec, delta_layers: usize) -> Result<DomainDecomposition> {
    let s = grid.subdomains_per_side;
    let hh = grid.elements_per_subdomain;
    if s < 2 {
        return Err(Error::InvalidArgument("need at least 2 subdomains per side".into()));
    }
    if delta_layers >= hh {
        return Err(Error::InvalidArgument(format!(
            "overlap {delta_layers} layers >= subdomain size {hh}"
        )));
    }
    let e = grid.elements_per_side();
    let n_sub = s * s;

    let mut nonoverlapping = vec![Vec::new(); n_sub];
    for gy in 1..e {
        for gx in 1..e {
            let sx = ((gx - 1) / hh).min(s - 1);
            let sy = ((gy - 1) / hh).min(s - 1);
            nonoverlapping[sy * s + sx].push(grid.interior_index(gx, gy).unwrap());
        }
    }

    let mut overlapping = vec![Vec::new(); n_sub];
    for sy in 0..s {
        for sx in 0..s {
            // interior nodes of the overlapped element box (local Dirichlet
            // boundary on the box edge)
            let x0 = (sx * hh).saturating_sub(delta_layers) + 1;
            let x1 = ((sx + 1) * hh + delta_layers - 1).min(e - 1);
            let y0 = (sy * hh).saturating_sub(delta_layers) + 1;
            let y1 = ((sy + 1) * hh + delta_layers - 1).min(e - 1);
            let set = &mut overlapping[sy * s + sx];
            for gy in y0..=y1 {
                for gx in x0..=x1 {
                    set.push(grid.interior_index(gx, gy).unwrap());
                }
            }
            set.sort_unstable();
        }
    }

    // interface classification: vertices are nodes shared by 4 subdomain
    // closures; the remaining shared nodes group into edges keyed by the
    // unordered subdomain pair
    let mut components = Vec::new();
    for vy in 1..s {
        for vx in 1..s {
            let node = grid.interior_index(vx * hh, vy * hh).unwrap();
            components.push(InterfaceComponent::Vertex { node });
        }
    }
    let n_vertices = components.len();
    let mut edges: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    // vertical interface lines x = vx*hh between horizontally adjacent boxes
    for vx in 1..s {
        for sy in 0..s {
            let left = sy * s + (vx - 1);
            let right = sy * s + vx;
            for gy in (sy * hh + 1)..((sy + 1) * hh).min(e) {
                if gy % hh == 0 {
                    continue;
                }
                if let Some(idx) = grid.interior_index(vx * hh, gy) {
                    edges.entry((left, right)).or_default().push(idx);
                }
            }
        }
    }
    // horizontal interface lines y = vy*hh between vertically adjacent boxes
    for vy in 1..s {
        for sx in 0..s {
            let bottom = (vy - 1) * s + sx;
            let top = vy * s + sx;
            for gx in (sx * hh + 1)..((sx + 1) * hh).min(e) {
                if gx % hh == 0 {
                    continue;
                }
                if let Some(idx) = grid.interior_index(gx, vy * hh) {
                    edges.entry((bottom, top)).or_default().push(idx);
                }
            }
        }
    }
    for ((a, b), mut nodes) in edges {
        nodes.sort_unstable();
        components.push(InterfaceComponent::Edge { subdomains: (a, b), nodes });
    }

    Ok(DomainDecomposition {
        grid,
        delta_layers,
        nonoverlapping,
        overlapping,
        components,
        n_vertices,
    })
}

/// Coarse space: prolongation columns (sparse) and the Galerkin factor.
pub struct CoarseSpace {
    pub kind: CoarseKind,
    /// columns of the n x n_coarse prolongation
    pub phi_cols: Vec<Vec<(usize, f64)>>,
    pub a0_factor: DenseFactor,
    pub n: usize,
}

impl CoarseSpace {
    pub fn dim(&self) -> usize {
        self.phi_cols.len()
    }

    /// Prolongation as a sparse matrix (for Matrix Market export).
    pub fn phi_matrix(&self) -> SparseMatrix {
        let mut triplets = Vec::new();
        for (c, col) in self.phi_cols.iter().enumerate() {
            for &(r, v) in col {
                triplets.push((r, c, v));
            }
        }
        SparseMatrix::from_triplets(self.n, self.phi_cols.len(), &triplets).unwrap()
    }
}

// Interior (non-interface, non-boundary) nodes of each non-overlapping
// subdomain box.
fn subdomain_interiors(grid: &GridSpec) -> Vec<Vec<usize>> {
    let s = grid.subdomains_per_side;
    let hh = grid.elements_per_subdomain;
    let mut out = vec![Vec::new(); s * s];
    for sy in 0..s {
        for sx in 0..s {
            let set = &mut out[sy * s + sx];
            for gy in (sy * hh + 1)..((sy + 1) * hh) {
                for gx in (sx * hh + 1)..((sx + 1) * hh) {
                    if let Some(idx) = grid.interior_index(gx, gy) {
                        set.push(idx);
                    }
                }
            }
            set.sort_unstable();
        }
    }
    out
}

/// Builds a coarse space from interface value assignments: one map of
/// interface-node values per coarse column, extended discrete-harmonically
/// into every subdomain interior.
fn build_coarse_from_interface_values(
    a: &SparseMatrix,
    dd: &DomainDecomposition,
    kind: CoarseKind,
    interface_values: Vec<BTreeMap<usize, f64>>,
) -> Result<CoarseSpace> {
    let n = a.n_rows();
    let n_coarse = interface_values.len();
    let mut cols: Vec<BTreeMap<usize, f64>> =
        interface_values.iter().map(|m| m.clone()).collect();

    let interiors = subdomain_interiors(&dd.grid);
    // harmonic extensions, one subdomain at a time
    let extensions: Vec<Vec<(usize, usize, f64)>> = interiors
        .par_iter()
        .map(|interior| {
            let mut local = Vec::new();
            if interior.is_empty() {
                return Ok(local);
            }
            let factor = DenseFactor::factor_submatrix(a, interior)?;
            for (c, vals) in interface_values.iter().enumerate() {
                // w = A[interior, gamma] * g restricted to this column
                let mut w = vec![0.0; interior.len()];
                let mut coupled = false;
                for (li, &gi) in interior.iter().enumerate() {
                    for (gj, av) in a.row(gi) {
                        if let Some(g) = vals.get(&gj) {
                            w[li] += av * g;
                            coupled = true;
                        }
                    }
                }
                if !coupled {
                    continue;
                }
                factor.solve_in_place(&mut w);
                for (li, &gi) in interior.iter().enumerate() {
                    if w[li] != 0.0 {
                        local.push((gi, c, -w[li]));
                    }
                }
            }
            Ok(local)
        })
        .collect::<Result<Vec<_>>>()?;
    for local in extensions {
        for (row, c, v) in local {
            *cols[c].entry(row).or_insert(0.0) += v;
        }
    }

    let phi_cols: Vec<Vec<(usize, f64)>> = cols
        .into_iter()
        .map(|m| m.into_iter().filter(|&(_, v)| v != 0.0).collect())
        .collect();
    for (c, col) in phi_cols.iter().enumerate() {
        if col.is_empty() {
            return Err(Error::InvalidArgument(format!("coarse column {c} is zero")));
        }
    }

    // Galerkin matrix A0 = Phi^T A Phi
    let mut a0 = vec![0.0; n_coarse * n_coarse];
    for (c, col) in phi_cols.iter().enumerate() {
        let mut dense = vec![0.0; n];
        for &(r, v) in col {
            dense[r] = v;
        }
        let y = a.spmv(&dense)?;
        for (d, other) in phi_cols.iter().enumerate() {
            let mut acc = 0.0;
            for &(r, v) in other {
                acc += v * y[r];
            }
            a0[c * n_coarse + d] = acc;
        }
    }
    // symmetrize roundoff
    for c in 0..n_coarse {
        for d in 0..c {
            let avg = 0.5 * (a0[c * n_coarse + d] + a0[d * n_coarse + c]);
            a0[c * n_coarse + d] = avg;
            a0[d * n_coarse + c] = avg;
        }
    }
    let a0_factor = DenseFactor::factor_dense(n_coarse, &a0)?;
    Ok(CoarseSpace { kind, phi_cols, a0_factor, n })
}

/// GDSW coarse space: one basis function per interface component, value 1
/// on the component and 0 on the rest of the interface.
pub fn build_gdsw(a: &SparseMatrix, dd: &DomainDecomposition) -> Result<CoarseSpace> {
    let interface_values: Vec<BTreeMap<usize, f64>> = dd
        .components
        .iter()
        .map(|comp| comp.nodes().iter().map(|&n| (n, 1.0)).collect())
        .collect();
    build_coarse_from_interface_values(a, dd, CoarseKind::Gdsw, interface_values)
}

/// RGDSW coarse space: one basis function per interior subdomain vertex;
/// each edge node's unit value splits equally among the interior vertices
/// at its edge's endpoints (inverse-multiplicity partition of unity).
pub fn build_rgdsw(a: &SparseMatrix, dd: &DomainDecomposition) -> Result<CoarseSpace> {
    let grid = &dd.grid;
    let s = grid.subdomains_per_side;
    let hh = grid.elements_per_subdomain;
    // map vertex node -> coarse column
    let mut vertex_col: BTreeMap<usize, usize> = BTreeMap::new();
    let mut interface_values: Vec<BTreeMap<usize, f64>> = Vec::new();
    for comp in dd.components.iter().take(dd.n_vertices) {
        if let InterfaceComponent::Vertex { node } = comp {
            vertex_col.insert(*node, interface_values.len());
            interface_values.push(BTreeMap::from([(*node, 1.0)]));
        }
    }
    if interface_values.is_empty() {
        return Err(Error::InvalidArgument(
            "RGDSW needs at least one interior subdomain vertex".into(),
        ));
    }
    for comp in dd.components.iter().skip(dd.n_vertices) {
        let InterfaceComponent::Edge { nodes, .. } = comp else { continue };
        // endpoint vertices of this edge segment
        let (gx0, gy0) = grid.node_of_index(nodes[0]);
        let mut ancestors: Vec<usize> = Vec::new();
        if gx0 % hh == 0 {
            // vertical edge at x = gx0, segment sy = gy0 / hh
            let sy = (gy0 - 1) / hh;
            for vy in [sy, sy + 1] {
                if vy >= 1 && vy < s {
                    let node = grid.interior_index(gx0, vy * hh).unwrap();
                    if let Some(&c) = vertex_col.get(&node) {
                        ancestors.push(c);
                    }
                }
            }
        } else {
            let sx = (gx0 - 1) / hh;
            for vx in [sx, sx + 1] {
                if vx >= 1 && vx < s {
                    let node = grid.interior_index(vx * hh, gy0).unwrap();
                    if let Some(&c) = vertex_col.get(&node) {
                        ancestors.push(c);
                    }
                }
            }
        }
        if ancestors.is_empty() {
            return Err(Error::InvalidArgument(
                "edge with no interior vertex ancestor".into(),
            ));
        }
        let w = 1.0 / ancestors.len() as f64;
        for c in ancestors {
            for &node in nodes {
                interface_values[c].insert(node, w);
            }
        }
    }
    build_coarse_from_interface_values(a, dd, CoarseKind::Rgdsw, interface_values)
}

/// Assembled two-level (or one-level) additive Schwarz preconditioner.
pub struct SchwarzPreconditioner {
    pub kind: CoarseKind,
    local_indices: Vec<Vec<usize>>,
    local_factors: Vec<DenseFactor>,
    pub coarse: Option<CoarseSpace>,
    n: usize,
}

impl SchwarzPreconditioner {
    /// Factors all local overlapped blocks and, unless `kind` is `None`,
    /// builds the requested coarse space.
    pub fn assemble(
        a: &SparseMatrix,
        dd: &DomainDecomposition,
        kind: CoarseKind,
    ) -> Result<Self> {
        let n = a.n_rows();
        if n != dd.grid.n_interior() {
            return Err(Error::DimensionMismatch(
                "matrix does not match the decomposition grid".into(),
            ));
        }
        // the overlapped sets must cover every unknown, or the additive sum
        // is singular
        let mut covered = vec![false; n];
        for set in &dd.overlapping {
            for &i in set {
                covered[i] = true;
            }
        }
        if covered.iter().any(|&c| !c) {
            return Err(Error::InvalidArgument(
                "overlapped subdomains do not cover all unknowns (overlap too small)".into(),
            ));
        }
        let local_factors: Vec<DenseFactor> = dd
            .overlapping
            .par_iter()
            .map(|set| DenseFactor::factor_submatrix(a, set))
            .collect::<Result<Vec<_>>>()?;
        let coarse = match kind {
            CoarseKind::None => None,
            CoarseKind::Gdsw => Some(build_gdsw(a, dd)?),
            CoarseKind::Rgdsw => Some(build_rgdsw(a, dd)?),
        };
        Ok(Self {
            kind,
            local_indices: dd.overlapping.clone(),
            local_factors,
            coarse,
            n,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

impl Preconditioner for SchwarzPreconditioner {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        assert_eq!(r.len(), self.n, "preconditioner applied to wrong dimension");
        let mut y = vec![0.0; self.n];
        if let Some(coarse) = &self.coarse {
            let nc = coarse.dim();
            let mut rc = vec![0.0; nc];
            for (c, col) in coarse.phi_cols.iter().enumerate() {
                rc[c] = col.iter().map(|&(row, v)| v * r[row]).sum();
            }
            coarse.a0_factor.solve_in_place(&mut rc);
            for (c, col) in coarse.phi_cols.iter().enumerate() {
                for &(row, v) in col {
                    y[row] += v * rc[c];
                }
            }
        }
        // local solves in parallel, summed in subdomain order for
        // reproducibility
        let locals: Vec<Vec<f64>> = self
            .local_indices
            .par_iter()
            .zip(&self.local_factors)
            .map(|(set, factor)| {
                let mut rl: Vec<f64> = set.iter().map(|&i| r[i]).collect();
                factor.solve_in_place(&mut rl);
                rl
            })
            .collect();
        for (set, rl) in self.local_indices.iter().zip(locals) {
            for (&i, v) in set.iter().zip(rl) {
                y[i] += v;
            }
        }
        y
    }
}
