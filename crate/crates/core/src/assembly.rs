//! Sparse assembly of the weak Galerkin form `a_w`, the C0 interior penalty
//! form `a_h`, the tracking operator of `χ`, and L2 load vectors.

use crate::error::Result;
use crate::measure::TrackingMeasure;
use crate::mesh::Point;
use crate::quadrature::TriangleRule;
use crate::space::{ElementBasis, P2Space};
use crate::sparse::{dot, SparseOperator};
use crate::weak_ops::{jump_gram, WeakOperators};

/// `a_w(v, w) = (Δ_w v, Δ_w w) + s(v, w)`, before Dirichlet elimination.
pub fn assemble_aw(space: &P2Space, ops: &WeakOperators) -> SparseOperator {
    let mesh = space.mesh();
    let n_el = mesh.n_elements();
    let blocks = (0..n_el)
        .map(|t| ops.laplacian.row(t).0)
        .chain(ops.jumps.edges().iter().map(|&e| ops.jumps.row(e).unwrap().0));
    let mut a = SparseOperator::from_blocks(space.n_dofs(), blocks);
    for t in 0..n_el {
        let (dofs, c) = ops.laplacian.row(t);
        a.add_outer(dofs, c, mesh.element_geometry(t).area);
    }
    for &e in ops.jumps.edges() {
        let (dofs, c) = ops.jumps.row(e).unwrap();
        let g = mesh.edge_geometry(e);
        a.add_block(dofs, &jump_gram(c, ops.jumps.weights(), 0.25 * g.length / g.h()));
    }
    a
}

/// Symmetric C0 interior penalty form
/// `(D²v, D²w) + <{n·D²v·n}, [[∇w]]·n> + <{n·D²w·n}, [[∇v]]·n> + ρ <h_e^{-1} [[∇v]]·n, [[∇w]]·n>`.
pub fn assemble_c0ip(space: &P2Space, ops: &WeakOperators, rho: f64) -> SparseOperator {
    let mesh = space.mesh();
    let blocks = (0..mesh.n_elements())
        .map(|t| &space.element_dofs(t)[..])
        .chain(ops.jumps.edges().iter().map(|&e| ops.jumps.row(e).unwrap().0));
    let mut a = SparseOperator::from_blocks(space.n_dofs(), blocks);
    let hess: Vec<[[f64; 3]; 6]> = (0..mesh.n_elements()).map(|t| space.basis(t).hessians()).collect();
    let mut local = [0.0; 36];
    for t in 0..mesh.n_elements() {
        let h = &hess[t];
        let area = mesh.element_geometry(t).area;
        for i in 0..6 {
            for j in 0..6 {
                local[i * 6 + j] = area * (h[i][0] * h[j][0] + 2.0 * h[i][1] * h[j][1] + h[i][2] * h[j][2]);
            }
        }
        a.add_block(space.element_dofs(t), &local);
    }
    let w = ops.jumps.weights();
    for &e in ops.jumps.edges() {
        let (dofs, c) = ops.jumps.row(e).unwrap();
        let g = mesh.edge_geometry(e);
        let n = g.normal;
        let (minus, plus) = mesh.edge_elements(e);
        let k = dofs.len();
        let mut avg = vec![0.0; k];
        for t in [minus, plus.expect("interior edge")] {
            for (i, hi) in hess[t].iter().enumerate() {
                let nn = hi[0] * n[0] * n[0] + 2.0 * hi[1] * n[0] * n[1] + hi[2] * n[1] * n[1];
                let slot = dofs.binary_search(&space.element_dofs(t)[i]).unwrap();
                avg[slot] += 0.5 * nn;
            }
        }
        let jint: Vec<f64> = c.iter().map(|c| g.length * (w[0] * c[0] + w[1] * c[1])).collect();
        let mut m = jump_gram(c, w, rho * g.length / g.h());
        for a_ in 0..k {
            for b in 0..k {
                m[a_ * k + b] += avg[a_] * jint[b] + jint[a_] * avg[b];
            }
        }
        a.add_block(dofs, &m);
    }
    a
}

/// Tracking operator `M_χ`, data vector `b_i = ∫ y_d φ_i dχ`, and `∫ y_d² dχ`.
#[derive(Clone, Debug)]
pub struct TrackingSystem {
    pub mass: SparseOperator,
    pub rhs: Vec<f64>,
    pub data_sq: f64,
}

pub fn assemble_tracking(space: &P2Space, measure: &TrackingMeasure) -> Result<TrackingSystem> {
    let mesh = space.mesh();
    let mut touched = vec![false; mesh.n_elements()];
    measure.for_each_node(mesh, |n| touched[n.element] = true)?;
    let blocks = (0..mesh.n_elements())
        .filter(|&t| touched[t])
        .map(|t| &space.element_dofs(t)[..]);
    let mut mass = SparseOperator::from_blocks(space.n_dofs(), blocks);
    let mut rhs = vec![0.0; space.n_dofs()];
    let mut data_sq = 0.0;
    measure.for_each_node(mesh, |n| {
        let phi = ElementBasis::values(n.lambda);
        let dofs = space.element_dofs(n.element);
        mass.add_outer(dofs, &phi, n.weight);
        for (d, p) in dofs.iter().zip(&phi) {
            rhs[*d] += n.weight * n.target * p;
        }
        data_sq += n.weight * n.target * n.target;
    })?;
    Ok(TrackingSystem { mass, rhs, data_sq })
}

/// `b_i = ∫ f φ_i dx` with a symmetric triangle rule of the given degree.
pub fn assemble_load_l2(space: &P2Space, f: impl Fn(Point) -> f64, degree: usize) -> Vec<f64> {
    let mesh = space.mesh();
    let rule = TriangleRule::of_degree(degree);
    let mut b = vec![0.0; space.n_dofs()];
    for t in 0..mesh.n_elements() {
        let [p0, p1, p2] = mesh.element_points(t);
        let area = mesh.element_geometry(t).area;
        let dofs = space.element_dofs(t);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let x = [
                l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0],
                l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1],
            ];
            let fw = area * w * f(x);
            for (d, phi) in dofs.iter().zip(ElementBasis::values(*l)) {
                b[*d] += fw * phi;
            }
        }
    }
    b
}

/// `A = β A_w + M_χ` (or `β A_h + M_χ`) together with the data of the reduced objective
/// `J(y) = ½ yᵀ A y - bᵀ y + ½ ∫ y_d² dχ`.
#[derive(Clone, Debug)]
pub struct OcpOperator {
    pub beta: f64,
    pub matrix: SparseOperator,
    pub rhs: Vec<f64>,
    pub data_sq: f64,
}

impl OcpOperator {
    pub fn new(beta: f64, biharmonic: &SparseOperator, tracking: &TrackingSystem) -> Result<Self> {
        Ok(Self {
            beta,
            matrix: biharmonic.linear_combination(beta, &tracking.mass, 1.0)?,
            rhs: tracking.rhs.clone(),
            data_sq: tracking.data_sq,
        })
    }

    pub fn objective(&self, y: &[f64]) -> f64 {
        0.5 * self.matrix.quad_form(y) - dot(&self.rhs, y) + 0.5 * self.data_sq
    }
}
