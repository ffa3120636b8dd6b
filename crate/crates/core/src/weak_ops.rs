//! Discrete weak Laplacian, gradient-jump traces, the parameter-free
//! stabilizer, and the mesh-dependent norms built from them.
//!
//! For `v` in the P2 space the piecewise-constant weak Laplacian is
//!
//! ```text
//! Δ_w v|_T = 1/|T| Σ_{e ⊂ ∂T} |e|/2 (∇v^T(m_e) + ∇v^{T'}(m_e)) · n_T
//! ```
//!
//! with `T'` the neighbour across `e` (on boundary edges the average is
//! replaced by the one-sided gradient). The integrand is linear along each
//! edge, so the midpoint rule is exact and `Δ_w` is a fixed linear stencil
//! over the DOFs of `T` and its edge neighbours.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::gauss_legendre;
use crate::space::{ElementBasis, P2Space};

/// Per-element rows `Δ_w v|_T = Σ c_i v_i`.
#[derive(Clone, Debug)]
pub struct WeakLaplacianStencil {
    offsets: Vec<usize>,
    dofs: Vec<usize>,
    coeffs: Vec<f64>,
}

impl WeakLaplacianStencil {
    pub fn build(space: &P2Space) -> Self {
        let mesh = space.mesh();
        let mut offsets = Vec::with_capacity(mesh.n_elements() + 1);
        offsets.push(0);
        let mut dofs = Vec::with_capacity(15 * mesh.n_elements());
        let mut coeffs = Vec::with_capacity(15 * mesh.n_elements());
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(15);
        for t in 0..mesh.n_elements() {
            row.clear();
            let geo = mesh.element_geometry(t);
            let basis = space.basis(t);
            for k in 0..3 {
                let e = mesh.element_edges(t)[k];
                let eg = mesh.edge_geometry(e);
                let n = geo.normals[k];
                let (minus, plus) = mesh.edge_elements(e);
                let own_weight = if plus.is_some() { 0.5 } else { 1.0 } * eg.length / geo.area;
                let grads = basis.gradients(midpoint_barycentric(k));
                for (i, g) in grads.iter().enumerate() {
                    accumulate(&mut row, space.element_dofs(t)[i], own_weight * (g[0] * n[0] + g[1] * n[1]));
                }
                if let Some(plus) = plus {
                    let other = if minus == t { plus } else { minus };
                    let ko = local_edge(mesh, other, e);
                    let grads = space.basis(other).gradients(midpoint_barycentric(ko));
                    let w = 0.5 * eg.length / geo.area;
                    for (i, g) in grads.iter().enumerate() {
                        accumulate(&mut row, space.element_dofs(other)[i], w * (g[0] * n[0] + g[1] * n[1]));
                    }
                }
            }
            row.sort_by_key(|&(d, _)| d);
            for &(d, c) in &row {
                dofs.push(d);
                coeffs.push(c);
            }
            offsets.push(dofs.len());
        }
        Self {
            offsets,
            dofs,
            coeffs,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, t: usize) -> (&[usize], &[f64]) {
        let a = self.offsets[t];
        let b = self.offsets[t + 1];
        (&self.dofs[a..b], &self.coeffs[a..b])
    }

    pub fn apply_element(&self, t: usize, v: &[f64]) -> f64 {
        let (d, c) = self.row(t);
        d.iter().zip(c).map(|(&i, c)| c * v[i]).sum()
    }

    /// Elementwise values of `Δ_w v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n_elements()).map(|t| self.apply_element(t, v)).collect()
    }
}

/// Per interior edge, the values of `[[∇v]]·n_e = (∇v^+ - ∇v^-)·n_e` at the
/// two Gauss points of the edge as linear functionals of the DOFs.
#[derive(Clone, Debug)]
pub struct EdgeJumpStencil {
    edges: Vec<usize>,
    slot: Vec<usize>,
    offsets: Vec<usize>,
    dofs: Vec<usize>,
    coeffs: Vec<[f64; 2]>,
    weights: [f64; 2],
}

impl EdgeJumpStencil {
    pub fn build(space: &P2Space) -> Self {
        let mesh = space.mesh();
        let (gp, gw) = gauss_legendre(2);
        let mut edges = Vec::new();
        let mut slot = vec![usize::MAX; mesh.n_edges()];
        let mut offsets = vec![0];
        let mut dofs = Vec::new();
        let mut coeffs = Vec::new();
        let mut row: Vec<(usize, [f64; 2])> = Vec::with_capacity(9);
        for e in mesh.interior_edges() {
            row.clear();
            let (minus, plus) = mesh.edge_elements(e);
            let plus = plus.expect("interior edge");
            let n = mesh.edge_geometry(e).normal;
            for (t, sign) in [(minus, -1.0), (plus, 1.0)] {
                let basis = space.basis(t);
                for (q, &s) in gp.iter().enumerate() {
                    let g = basis.gradients(edge_barycentric(mesh, t, e, s));
                    for (i, gi) in g.iter().enumerate() {
                        let d = space.element_dofs(t)[i];
                        let c = sign * (gi[0] * n[0] + gi[1] * n[1]);
                        match row.iter_mut().find(|(x, _)| *x == d) {
                            Some((_, v)) => v[q] += c,
                            None => {
                                let mut v = [0.0; 2];
                                v[q] = c;
                                row.push((d, v));
                            }
                        }
                    }
                }
            }
            row.sort_by_key(|&(d, _)| d);
            slot[e] = edges.len();
            edges.push(e);
            for &(d, c) in &row {
                dofs.push(d);
                coeffs.push(c);
            }
            offsets.push(dofs.len());
        }
        Self {
            edges,
            slot,
            offsets,
            dofs,
            coeffs,
            weights: [gw[0], gw[1]],
        }
    }

    /// Interior edge indices, in ascending order.
    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    /// Gauss weights on the unit interval.
    pub fn weights(&self) -> [f64; 2] {
        self.weights
    }

    pub fn row(&self, e: usize) -> Result<(&[usize], &[[f64; 2]])> {
        let s = *self.slot.get(e).ok_or(Error::BoundaryEdge(e))?;
        if s == usize::MAX {
            return Err(Error::BoundaryEdge(e));
        }
        let a = self.offsets[s];
        let b = self.offsets[s + 1];
        Ok((&self.dofs[a..b], &self.coeffs[a..b]))
    }

    /// Jump values at the two Gauss points.
    pub fn jump(&self, e: usize, v: &[f64]) -> Result<[f64; 2]> {
        let (d, c) = self.row(e)?;
        let mut out = [0.0; 2];
        for (&i, c) in d.iter().zip(c) {
            out[0] += c[0] * v[i];
            out[1] += c[1] * v[i];
        }
        Ok(out)
    }

    /// `∫_e ([[∇v]]·n_e)^2 ds`, exact for P2 (quadratic integrand).
    pub fn jump_sq_integral(&self, mesh: &Mesh, e: usize, v: &[f64]) -> Result<f64> {
        let j = self.jump(e, v)?;
        let len = mesh.edge_geometry(e).length;
        Ok(len * (self.weights[0] * j[0] * j[0] + self.weights[1] * j[1] * j[1]))
    }
}

/// Local stabilizer matrix `1/4 h_e^{-1} ∫_e ([[∇φ_i]]·n_e)([[∇φ_j]]·n_e) ds`
/// over the DOFs returned alongside it (row-major, symmetric PSD).
pub fn stabilizer_edge_matrix(mesh: &Mesh, jumps: &EdgeJumpStencil, e: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let (dofs, c) = jumps.row(e)?;
    let g = mesh.edge_geometry(e);
    let scale = 0.25 * g.length / g.h();
    Ok((dofs.to_vec(), jump_gram(c, jumps.weights, scale)))
}

pub(crate) fn jump_gram(c: &[[f64; 2]], w: [f64; 2], scale: f64) -> Vec<f64> {
    let k = c.len();
    let mut m = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            m[a * k + b] = scale * (w[0] * (c[a][0] * c[b][0]) + w[1] * (c[a][1] * c[b][1]));
        }
    }
    m
}

/// Stencils shared by assembly, norms and control recovery.
#[derive(Clone, Debug)]
pub struct WeakOperators {
    pub laplacian: WeakLaplacianStencil,
    pub jumps: EdgeJumpStencil,
}

impl WeakOperators {
    pub fn new(space: &P2Space) -> Self {
        Self {
            laplacian: WeakLaplacianStencil::build(space),
            jumps: EdgeJumpStencil::build(space),
        }
    }

    /// `s(v, v) = 1/4 Σ_e h_e^{-1} ∫_e ([[∇v]]·n_e)^2`.
    pub fn stabilizer(&self, mesh: &Mesh, v: &[f64]) -> f64 {
        0.25 * self.jump_energy(mesh, v)
    }

    /// `Σ_e h_e^{-1} ∫_e ([[∇v]]·n_e)^2` over interior edges.
    pub fn jump_energy(&self, mesh: &Mesh, v: &[f64]) -> f64 {
        self.jumps
            .edges()
            .iter()
            .map(|&e| self.jumps.jump_sq_integral(mesh, e, v).unwrap() / mesh.edge_geometry(e).h())
            .sum()
    }

    /// `‖v‖_w = a_w(v, v)^{1/2}`.
    pub fn norm_w(&self, mesh: &Mesh, v: &[f64]) -> f64 {
        let lap: f64 = (0..mesh.n_elements())
            .map(|t| {
                let d = self.laplacian.apply_element(t, v);
                mesh.element_geometry(t).area * d * d
            })
            .sum();
        (lap + self.stabilizer(mesh, v)).sqrt()
    }

    /// Broken `‖D^2 v‖` plus the full (unweighted) jump term.
    pub fn norm_h(&self, space: &P2Space, v: &[f64]) -> f64 {
        let mesh = space.mesh();
        let f = space.function(v.to_vec()).expect("coefficient vector sized to the space");
        let hess: f64 = (0..mesh.n_elements())
            .map(|t| {
                let h = f.hessian_in(t);
                mesh.element_geometry(t).area * (h[0] * h[0] + 2.0 * h[1] * h[1] + h[2] * h[2])
            })
            .sum();
        (hess + self.jump_energy(mesh, v)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ControlRecovery {
    /// `-Δ_w y` per element.
    #[default]
    WeakLaplacian,
    /// `-Δ(y|_T)` per element.
    ElementLaplacian,
}

/// Piecewise-constant control `u_h = -Δ_h y_h`.
pub fn recover_control(space: &P2Space, ops: &WeakOperators, y: &[f64], mode: ControlRecovery) -> Vec<f64> {
    match mode {
        ControlRecovery::WeakLaplacian => ops.laplacian.apply(y).into_iter().map(|v| -v).collect(),
        ControlRecovery::ElementLaplacian => {
            let f = space.function(y.to_vec()).expect("coefficient vector sized to the space");
            (0..space.mesh().n_elements())
                .map(|t| {
                    let h = f.hessian_in(t);
                    -(h[0] + h[2])
                })
                .collect()
        }
    }
}

/// CSV with header `element_index,barycenter_x,barycenter_y,value`.
pub fn element_field_csv(mesh: &Mesh, values: &[f64]) -> String {
    let mut s = String::from("element_index,barycenter_x,barycenter_y,value\n");
    for (t, v) in values.iter().enumerate() {
        let b = mesh.element_geometry(t).barycenter;
        writeln!(s, "{},{:?},{:?},{:?}", t, b[0], b[1], v).unwrap();
    }
    s
}

fn accumulate(row: &mut Vec<(usize, f64)>, dof: usize, c: f64) {
    match row.iter_mut().find(|(d, _)| *d == dof) {
        Some((_, v)) => *v += c,
        None => row.push((dof, c)),
    }
}

fn midpoint_barycentric(k: usize) -> [f64; 3] {
    let mut l = [0.5; 3];
    l[k] = 0.0;
    l
}

pub(crate) fn local_edge(mesh: &Mesh, t: usize, e: usize) -> usize {
    mesh.element_edges(t)
        .iter()
        .position(|&x| x == e)
        .expect("edge belongs to element")
}

/// Barycentric coordinates in element `t` of the point `a + s (b - a)` on
/// edge `e = [a, b]`.
pub(crate) fn edge_barycentric(mesh: &Mesh, t: usize, e: usize, s: f64) -> [f64; 3] {
    let [a, b] = mesh.edges()[e];
    let tri = mesh.elements()[t];
    let mut l = [0.0; 3];
    for k in 0..3 {
        if tri[k] == a {
            l[k] = 1.0 - s;
        } else if tri[k] == b {
            l[k] = s;
        }
    }
    l
}

#[allow(dead_code)]
pub(crate) fn basis_at_edge(space: &P2Space, t: usize, e: usize, s: f64) -> ([f64; 6], [[f64; 2]; 6]) {
    let l = edge_barycentric(space.mesh(), t, e, s);
    (ElementBasis::values(l), space.basis(t).gradients(l))
}
