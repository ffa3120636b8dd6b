//! One-level overlapping additive Schwarz preconditioner
//! `B = Σ_j I_j A_j^{-1} I_jᵀ` for the weak Galerkin operator.

use std::fmt::Write as _;

use crate::cholesky::SparseCholesky;
use crate::error::{Error, Result};
use crate::krylov::Preconditioner;
use crate::mesh::Point;
use crate::space::P2Space;
use crate::sparse::SparseOperator;
use crate::weak_ops::{jump_gram, WeakOperators};

#[derive(Clone, Debug)]
pub struct Subdomain {
    /// Enlarged coarse cell clipped to the domain.
    pub rect: [Point; 2],
    /// Elements whose barycenter lies in `rect`, ascending.
    pub elements: Vec<usize>,
    /// Free DOFs whose basis function is supported inside the subdomain,
    /// ascending global indices.
    pub dofs: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SubdomainPartition {
    pub grid: (usize, usize),
    pub delta: f64,
    /// Nominal subdomain diameter (coarse cell width).
    pub h_coarse: f64,
    pub subdomains: Vec<Subdomain>,
    /// Per element, the subdomains containing it.
    pub element_subdomains: Vec<Vec<usize>>,
    /// Largest number of subdomains sharing an element.
    pub n_c: usize,
}

impl SubdomainPartition {
    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn report(&self) -> String {
        format!(
            "J={}, delta={}, H={}, N_c={}",
            self.n_subdomains(),
            self.delta,
            self.h_coarse,
            self.n_c
        )
    }

    /// CSV with header `element_index,subdomain_ids`; the ids are spread
    /// over the remaining columns.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("element_index,subdomain_ids\n");
        for (t, ids) in self.element_subdomains.iter().enumerate() {
            write!(s, "{t}").unwrap();
            for j in ids {
                write!(s, ",{j}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Coarse `jx × jy` partition of the (rectangular) domain, each cell
/// enlarged by `delta` and clipped to the domain.
pub fn build_partition(space: &P2Space, jx: usize, jy: usize, delta: f64) -> Result<SubdomainPartition> {
    let mesh = space.mesh();
    if jx == 0 || jy == 0 {
        return Err(Error::InvalidPartition(format!("{jx}x{jy} grid")));
    }
    let h = mesh.h();
    let ratio = delta / h;
    if !(ratio >= 1.0 - 1e-9) || (ratio - ratio.round()).abs() > 1e-9 {
        return Err(Error::OverlapNotAligned { delta, h });
    }
    let [lo, hi] = mesh.bounding_box();
    let cell = [(hi[0] - lo[0]) / jx as f64, (hi[1] - lo[1]) / jy as f64];
    for c in cell {
        let r = c / h;
        if (r - r.round()).abs() > 1e-9 {
            return Err(Error::InvalidPartition(format!(
                "coarse cell width {c} is not a multiple of h = {h}"
            )));
        }
    }
    let tol = 1e-9 * h;
    let mut subdomains = Vec::with_capacity(jx * jy);
    let mut element_subdomains = vec![Vec::new(); mesh.n_elements()];
    for b in 0..jy {
        for a in 0..jx {
            let rect = [
                [
                    (lo[0] + a as f64 * cell[0] - delta).max(lo[0]),
                    (lo[1] + b as f64 * cell[1] - delta).max(lo[1]),
                ],
                [
                    (lo[0] + (a + 1) as f64 * cell[0] + delta).min(hi[0]),
                    (lo[1] + (b + 1) as f64 * cell[1] + delta).min(hi[1]),
                ],
            ];
            let j = subdomains.len();
            let elements: Vec<usize> = (0..mesh.n_elements())
                .filter(|&t| {
                    let c = mesh.element_geometry(t).barycenter;
                    c[0] > rect[0][0] - tol && c[0] < rect[1][0] + tol && c[1] > rect[0][1] - tol && c[1] < rect[1][1] + tol
                })
                .collect();
            for &t in &elements {
                element_subdomains[t].push(j);
            }
            subdomains.push(Subdomain {
                rect,
                elements,
                dofs: Vec::new(),
            });
        }
    }
    // a DOF belongs to V_j iff every element touching it lies in Ω_j
    let mut incident = vec![0u32; space.n_dofs()];
    for t in 0..mesh.n_elements() {
        for &d in space.element_dofs(t) {
            incident[d] += 1;
        }
    }
    let mut inside = vec![0u32; space.n_dofs()];
    for sd in &mut subdomains {
        inside.iter_mut().for_each(|c| *c = 0);
        for &t in &sd.elements {
            for &d in space.element_dofs(t) {
                inside[d] += 1;
            }
        }
        sd.dofs = (0..space.n_dofs())
            .filter(|&d| inside[d] > 0 && inside[d] == incident[d] && !space.is_dirichlet(d))
            .collect();
    }
    let n_c = element_subdomains.iter().map(Vec::len).max().unwrap_or(0);
    if element_subdomains.iter().any(Vec::is_empty) {
        return Err(Error::InvalidPartition("some element is not covered".into()));
    }
    Ok(SubdomainPartition {
        grid: (jx, jy),
        delta,
        h_coarse: cell[0].max(cell[1]),
        subdomains,
        element_subdomains,
        n_c,
    })
}

pub struct LocalSolver {
    /// Positions of the local DOFs in the free-DOF numbering.
    pub free_index: Vec<usize>,
    pub matrix: SparseOperator,
    factor: SparseCholesky,
}

impl LocalSolver {
    pub fn dim(&self) -> usize {
        self.free_index.len()
    }

    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        self.factor.solve(r)
    }
}

/// Local operator `A_j` assembled from `a_{w,j}` over the subdomain's
/// elements and the interior edges touching it.
pub fn assemble_local_matrix(space: &P2Space, ops: &WeakOperators, sd: &Subdomain) -> SparseOperator {
    let mesh = space.mesh();
    let mut local = vec![u32::MAX; space.n_dofs()];
    for (k, &d) in sd.dofs.iter().enumerate() {
        local[d] = k as u32;
    }
    let mut in_sd = vec![false; mesh.n_elements()];
    for &t in &sd.elements {
        in_sd[t] = true;
    }
    let edges: Vec<usize> = ops
        .jumps
        .edges()
        .iter()
        .copied()
        .filter(|&e| {
            let (m, p) = mesh.edge_elements(e);
            in_sd[m] || p.is_some_and(|p| in_sd[p])
        })
        .collect();

    // restrict a stencil row to local DOFs
    let restrict = |dofs: &[usize]| -> (Vec<usize>, Vec<usize>) {
        let mut ld = Vec::new();
        let mut pos = Vec::new();
        for (k, &d) in dofs.iter().enumerate() {
            if local[d] != u32::MAX {
                ld.push(local[d] as usize);
                pos.push(k);
            }
        }
        (ld, pos)
    };
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for &t in &sd.elements {
        blocks.push(restrict(ops.laplacian.row(t).0).0);
    }
    for &e in &edges {
        blocks.push(restrict(ops.jumps.row(e).unwrap().0).0);
    }
    let mut a = SparseOperator::from_blocks(sd.dofs.len(), blocks.iter().map(|b| &b[..]));
    for &t in &sd.elements {
        let (dofs, c) = ops.laplacian.row(t);
        let (ld, pos) = restrict(dofs);
        let lc: Vec<f64> = pos.iter().map(|&k| c[k]).collect();
        a.add_outer(&ld, &lc, mesh.element_geometry(t).area);
    }
    for &e in &edges {
        let (dofs, c) = ops.jumps.row(e).unwrap();
        let (ld, pos) = restrict(dofs);
        let lc: Vec<[f64; 2]> = pos.iter().map(|&k| c[k]).collect();
        let g = mesh.edge_geometry(e);
        a.add_block(&ld, &jump_gram(&lc, ops.jumps.weights(), 0.25 * g.length / g.h()));
    }
    a
}

/// Factorized local problems of a partition.
pub fn assemble_local(partition: &SubdomainPartition, space: &P2Space, ops: &WeakOperators) -> Result<Vec<LocalSolver>> {
    let mut free_pos = vec![usize::MAX; space.n_dofs()];
    for (k, d) in space.free_dofs().into_iter().enumerate() {
        free_pos[d] = k;
    }
    partition
        .subdomains
        .iter()
        .enumerate()
        .map(|(j, sd)| {
            let matrix = assemble_local_matrix(space, ops, sd);
            let factor = SparseCholesky::factor(&matrix).map_err(|e| match e {
                Error::NotPositiveDefinite { pivot } => Error::LocalNotPositiveDefinite { subdomain: j, pivot },
                other => other,
            })?;
            Ok(LocalSolver {
                free_index: sd.dofs.iter().map(|&d| free_pos[d]).collect(),
                matrix,
                factor,
            })
        })
        .collect()
}

/// `B r = Σ_j I_j A_j^{-1} I_jᵀ r` on the free-DOF space.
pub struct SchwarzPreconditioner {
    pub locals: Vec<LocalSolver>,
    n_free: usize,
}

impl SchwarzPreconditioner {
    pub fn new(partition: &SubdomainPartition, space: &P2Space, ops: &WeakOperators) -> Result<Self> {
        Ok(Self {
            locals: assemble_local(partition, space, ops)?,
            n_free: space.free_dofs().len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n_free
    }
}

impl Preconditioner for SchwarzPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        debug_assert_eq!(r.len(), self.n_free);
        z.iter_mut().for_each(|v| *v = 0.0);
        let mut buf = Vec::new();
        for loc in &self.locals {
            buf.clear();
            buf.extend(loc.free_index.iter().map(|&i| r[i]));
            let x = loc.solve(&buf);
            for (&i, v) in loc.free_index.iter().zip(x) {
                z[i] += v;
            }
        }
    }
}
