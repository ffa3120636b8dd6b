//! Continuous piecewise quadratic Lagrange space with homogeneous Dirichlet
//! flags.
//!
//! Global numbering puts the vertex DOFs first (DOF `v` is vertex `v`) and the
//! edge-midpoint DOFs after them (DOF `n_vertices + e` is edge `e`). Local DOFs
//! of an element are its three vertices followed by the midpoints of local
//! edges 0, 1, 2 (edge `k` is opposite vertex `k`).

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

/// Magnitude used to encode an absent bound.
pub const UNBOUNDED: f64 = f64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofKind {
    Vertex,
    Midpoint,
}

impl DofKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DofKind::Vertex => "vertex",
            DofKind::Midpoint => "midpoint",
        }
    }
}

/// Barycentric-coordinate gradients of one triangle; everything about the P2
/// basis on that triangle follows from them.
#[derive(Clone, Copy, Debug)]
pub struct ElementBasis {
    pub grad_lambda: [[f64; 2]; 3],
}

impl ElementBasis {
    pub fn new(p: &[Point; 3]) -> Self {
        let two_area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let mut grad_lambda = [[0.0; 2]; 3];
        for k in 0..3 {
            let a = p[(k + 1) % 3];
            let b = p[(k + 2) % 3];
            grad_lambda[k] = [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area];
        }
        Self { grad_lambda }
    }

    pub fn values(l: [f64; 3]) -> [f64; 6] {
        [
            l[0] * (2.0 * l[0] - 1.0),
            l[1] * (2.0 * l[1] - 1.0),
            l[2] * (2.0 * l[2] - 1.0),
            4.0 * l[1] * l[2],
            4.0 * l[2] * l[0],
            4.0 * l[0] * l[1],
        ]
    }

    pub fn gradients(&self, l: [f64; 3]) -> [[f64; 2]; 6] {
        let g = &self.grad_lambda;
        let mut out = [[0.0; 2]; 6];
        for i in 0..3 {
            let s = 4.0 * l[i] - 1.0;
            out[i] = [s * g[i][0], s * g[i][1]];
        }
        for k in 0..3 {
            let i = (k + 1) % 3;
            let j = (k + 2) % 3;
            out[3 + k] = [
                4.0 * (l[i] * g[j][0] + l[j] * g[i][0]),
                4.0 * (l[i] * g[j][1] + l[j] * g[i][1]),
            ];
        }
        out
    }

    /// Constant Hessians of the six basis functions as `[xx, xy, yy]`.
    pub fn hessians(&self) -> [[f64; 3]; 6] {
        let g = &self.grad_lambda;
        let outer = |a: [f64; 2], b: [f64; 2]| -> [f64; 3] {
            [
                4.0 * (a[0] * b[0] + b[0] * a[0]) * 0.5,
                4.0 * (a[0] * b[1] + b[0] * a[1]) * 0.5,
                4.0 * (a[1] * b[1] + b[1] * a[1]) * 0.5,
            ]
        };
        let mut out = [[0.0; 3]; 6];
        for i in 0..3 {
            out[i] = outer(g[i], g[i]);
        }
        for k in 0..3 {
            let i = (k + 1) % 3;
            let j = (k + 2) % 3;
            let h = outer(g[i], g[j]);
            out[3 + k] = [2.0 * h[0], 2.0 * h[1], 2.0 * h[2]];
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct P2Space {
    mesh: Arc<Mesh>,
    element_dofs: Vec<[usize; 6]>,
    nodes: Vec<Point>,
    dirichlet: Vec<bool>,
}

impl P2Space {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let nv = mesh.n_vertices();
        let element_dofs = (0..mesh.n_elements())
            .map(|t| {
                let v = mesh.elements()[t];
                let e = mesh.element_edges(t);
                [v[0], v[1], v[2], nv + e[0], nv + e[1], nv + e[2]]
            })
            .collect();
        let mut nodes = mesh.vertices().to_vec();
        nodes.extend((0..mesh.n_edges()).map(|e| mesh.edge_geometry(e).midpoint));
        let mut dirichlet: Vec<bool> = (0..nv).map(|v| mesh.is_boundary_vertex(v)).collect();
        dirichlet.extend((0..mesh.n_edges()).map(|e| mesh.is_boundary_edge(e)));
        Self {
            mesh,
            element_dofs,
            nodes,
            dirichlet,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }
    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn n_dofs(&self) -> usize {
        self.nodes.len()
    }
    pub fn n_vertex_dofs(&self) -> usize {
        self.mesh.n_vertices()
    }
    pub fn element_dofs(&self, t: usize) -> &[usize; 6] {
        &self.element_dofs[t]
    }
    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }
    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }
    pub fn is_dirichlet(&self, i: usize) -> bool {
        self.dirichlet[i]
    }
    pub fn dirichlet_flags(&self) -> &[bool] {
        &self.dirichlet
    }
    pub fn kind(&self, i: usize) -> DofKind {
        if i < self.mesh.n_vertices() {
            DofKind::Vertex
        } else {
            DofKind::Midpoint
        }
    }

    /// Indices of the DOFs not on the Dirichlet boundary, ascending.
    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs()).filter(|&i| !self.dirichlet[i]).collect()
    }

    pub fn basis(&self, t: usize) -> ElementBasis {
        ElementBasis::new(&self.mesh.element_points(t))
    }

    pub fn zeros(&self) -> FeFunction<'_> {
        FeFunction {
            space: self,
            coeffs: vec![0.0; self.n_dofs()],
        }
    }

    /// Nodal interpolant. Boundary coefficients take the value of `f`; zero
    /// them (see [`FeFunction::zero_dirichlet`]) for membership in `V_h`.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> FeFunction<'_> {
        FeFunction {
            space: self,
            coeffs: self.nodes.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn function(&self, coeffs: Vec<f64>) -> Result<FeFunction<'_>> {
        if coeffs.len() != self.n_dofs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_dofs(),
                got: coeffs.len(),
            });
        }
        Ok(FeFunction { space: self, coeffs })
    }
}

/// Vertex values of the P1 interpolants of a lower and an upper obstacle.
/// Infinite values are stored as the `UNBOUNDED` sentinel.
pub fn interpolate_p1_bounds(
    mesh: &Mesh,
    lower: impl Fn(Point) -> f64,
    upper: impl Fn(Point) -> f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let encode = |v: f64| v.clamp(-UNBOUNDED, UNBOUNDED);
    let mut lo = Vec::with_capacity(mesh.n_vertices());
    let mut hi = Vec::with_capacity(mesh.n_vertices());
    for (v, &p) in mesh.vertices().iter().enumerate() {
        let a = encode(lower(p));
        let b = encode(upper(p));
        if !(a < b) {
            return Err(Error::CrossingBounds {
                vertex: v,
                lower: a,
                upper: b,
            });
        }
        lo.push(a);
        hi.push(b);
    }
    Ok((lo, hi))
}

#[derive(Clone, Debug)]
pub struct FeFunction<'a> {
    space: &'a P2Space,
    coeffs: Vec<f64>,
}

impl<'a> FeFunction<'a> {
    pub fn space(&self) -> &'a P2Space {
        self.space
    }
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }
    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn zero_dirichlet(mut self) -> Self {
        for (c, &d) in self.coeffs.iter_mut().zip(&self.space.dirichlet) {
            if d {
                *c = 0.0;
            }
        }
        self
    }

    pub fn local_coeffs(&self, t: usize) -> [f64; 6] {
        self.space.element_dofs[t].map(|i| self.coeffs[i])
    }

    pub fn value_in(&self, t: usize, l: [f64; 3]) -> f64 {
        let c = self.local_coeffs(t);
        ElementBasis::values(l).iter().zip(&c).map(|(p, c)| p * c).sum()
    }

    pub fn grad_in(&self, t: usize, l: [f64; 3]) -> [f64; 2] {
        let c = self.local_coeffs(t);
        let g = self.space.basis(t).gradients(l);
        let mut out = [0.0; 2];
        for i in 0..6 {
            out[0] += c[i] * g[i][0];
            out[1] += c[i] * g[i][1];
        }
        out
    }

    /// Elementwise Hessian `[xx, xy, yy]`.
    pub fn hessian_in(&self, t: usize) -> [f64; 3] {
        let c = self.local_coeffs(t);
        let h = self.space.basis(t).hessians();
        let mut out = [0.0; 3];
        for i in 0..6 {
            for d in 0..3 {
                out[d] += c[i] * h[i][d];
            }
        }
        out
    }

    pub fn eval(&self, p: Point) -> Result<f64> {
        let (t, l) = self.space.mesh.locate_point(p)?;
        Ok(self.value_in(t, l))
    }

    /// One-sided on element boundaries: the element chosen by
    /// [`Mesh::locate_point`] supplies the gradient.
    pub fn eval_grad(&self, p: Point) -> Result<[f64; 2]> {
        let (t, l) = self.space.mesh.locate_point(p)?;
        Ok(self.grad_in(t, l))
    }

    /// CSV with header `dof_index,x,y,kind,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("dof_index,x,y,kind,value\n");
        for (i, c) in self.coeffs.iter().enumerate() {
            let p = self.space.nodes[i];
            writeln!(s, "{},{:?},{:?},{},{:?}", i, p[0], p[1], self.space.kind(i).as_str(), c).unwrap();
        }
        s
    }
}
