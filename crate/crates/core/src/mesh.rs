//! Conforming triangulations of rectangular domains.
//!
//! Elements are counterclockwise vertex triples. Local edge `k` of an element
//! is the edge opposite local vertex `k`. Every edge stores the two incident
//! elements as `(minus, plus)`, where `minus` is the lower element index; the
//! edge normal points from the minus element into the plus element (outward
//! on the boundary).

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const LOCATE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeGeometry {
    pub normal: Point,
    pub midpoint: Point,
    pub length: f64,
}

impl EdgeGeometry {
    /// `h_e = |e|^{1/(d-1)}`, which is the edge length in two dimensions.
    pub fn h(&self) -> f64 {
        self.length
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    pub diameter: f64,
    /// Outward unit normal on local edge `k`.
    pub normals: [Point; 3],
    pub barycenter: Point,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    edge_elements: Vec<(usize, Option<usize>)>,
    element_edges: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
    edge_geometry: Vec<EdgeGeometry>,
    element_geometry: Vec<ElementGeometry>,
    grid_spacing: Option<f64>,
    bins: Bins,
}

#[derive(Clone, Debug)]
struct Bins {
    origin: Point,
    cell: Point,
    dims: [usize; 2],
    offsets: Vec<usize>,
    items: Vec<usize>,
}

impl Mesh {
    /// Builds a mesh from raw vertices and elements. Clockwise elements are
    /// reoriented; degenerate elements are rejected.
    pub fn from_parts(vertices: Vec<Point>, mut elements: Vec<[usize; 3]>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidMesh("mesh has no elements".into()));
        }
        for (t, tri) in elements.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("element {t} references a missing vertex")));
            }
            let a = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if a == 0.0 {
                return Err(Error::InvalidMesh(format!("element {t} is degenerate")));
            }
            if a < 0.0 {
                tri.swap(1, 2);
            }
        }

        let mut keyed: Vec<([usize; 2], usize, usize)> = Vec::with_capacity(3 * elements.len());
        for (t, tri) in elements.iter().enumerate() {
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                keyed.push(([a.min(b), a.max(b)], t, k));
            }
        }
        keyed.sort_unstable();

        let mut edges = Vec::new();
        let mut edge_elements = Vec::new();
        let mut element_edges = vec![[usize::MAX; 3]; elements.len()];
        let mut i = 0;
        while i < keyed.len() {
            let mut j = i + 1;
            while j < keyed.len() && keyed[j].0 == keyed[i].0 {
                j += 1;
            }
            if j - i > 2 {
                return Err(Error::InvalidMesh(format!(
                    "edge {:?} is shared by more than two elements",
                    keyed[i].0
                )));
            }
            let e = edges.len();
            edges.push(keyed[i].0);
            // keyed entries are sorted by element index within a key
            let minus = keyed[i].1;
            let plus = if j - i == 2 { Some(keyed[i + 1].1) } else { None };
            edge_elements.push((minus, plus));
            for entry in &keyed[i..j] {
                element_edges[entry.1][entry.2] = e;
            }
            i = j;
        }

        let mut boundary_vertex = vec![false; vertices.len()];
        for (e, &(_, plus)) in edge_elements.iter().enumerate() {
            if plus.is_none() {
                boundary_vertex[edges[e][0]] = true;
                boundary_vertex[edges[e][1]] = true;
            }
        }

        let element_geometry: Vec<ElementGeometry> = elements
            .iter()
            .map(|tri| element_geometry(&vertices, tri))
            .collect();
        let edge_geometry: Vec<EdgeGeometry> = edges
            .iter()
            .zip(&edge_elements)
            .enumerate()
            .map(|(e, (&[a, b], &(minus, _)))| {
                let pa = vertices[a];
                let pb = vertices[b];
                let length = dist(pa, pb);
                let k = element_edges[minus].iter().position(|&x| x == e).unwrap();
                EdgeGeometry {
                    normal: element_geometry[minus].normals[k],
                    midpoint: [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])],
                    length,
                }
            })
            .collect();

        let bins = Bins::build(&vertices, &elements);
        Ok(Self {
            vertices,
            elements,
            edges,
            edge_elements,
            element_edges,
            boundary_vertex,
            edge_geometry,
            element_geometry,
            grid_spacing: None,
            bins,
        })
    }

    /// `n x n` grid of squares on `[origin, origin + side]^2`, each square split
    /// along its lower-left to upper-right diagonal.
    pub fn uniform_square(origin: Point, side: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMesh("number of divisions must be at least 1".into()));
        }
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::InvalidMesh(format!("side length must be positive, got {side}")));
        }
        let h = side / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                let x = if i == n { origin[0] + side } else { origin[0] + i as f64 * h };
                let y = if j == n { origin[1] + side } else { origin[1] + j as f64 * h };
                vertices.push([x, y]);
            }
        }
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = j * (n + 1) + i;
                let v10 = v00 + 1;
                let v01 = v00 + n + 1;
                let v11 = v01 + 1;
                elements.push([v00, v10, v11]);
                elements.push([v00, v11, v01]);
            }
        }
        let mut mesh = Self::from_parts(vertices, elements)?;
        mesh.grid_spacing = Some(h);
        Ok(mesh)
    }

    /// Red refinement: every triangle is split into four congruent children
    /// through its edge midpoints.
    pub fn refine_uniform(&self) -> Self {
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend(self.edge_geometry.iter().map(|g| g.midpoint));
        let mut elements = Vec::with_capacity(4 * self.elements.len());
        for (tri, edges) in self.elements.iter().zip(&self.element_edges) {
            let [a, b, c] = *tri;
            // local edge k is opposite vertex k
            let m_bc = nv + edges[0];
            let m_ca = nv + edges[1];
            let m_ab = nv + edges[2];
            elements.push([a, m_ab, m_ca]);
            elements.push([m_ab, b, m_bc]);
            elements.push([m_ca, m_bc, c]);
            elements.push([m_ab, m_bc, m_ca]);
        }
        let mut mesh = Self::from_parts(vertices, elements).expect("refinement of a valid mesh is valid");
        mesh.grid_spacing = self.grid_spacing.map(|h| 0.5 * h);
        mesh
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }
    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
    /// `(minus, plus)` elements of an edge; `plus` is `None` on the boundary.
    pub fn edge_elements(&self, e: usize) -> (usize, Option<usize>) {
        self.edge_elements[e]
    }
    pub fn element_edges(&self, t: usize) -> [usize; 3] {
        self.element_edges[t]
    }
    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_elements[e].1.is_none()
    }
    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }
    pub fn edge_geometry(&self, e: usize) -> &EdgeGeometry {
        &self.edge_geometry[e]
    }
    pub fn element_geometry(&self, t: usize) -> &ElementGeometry {
        &self.element_geometry[t]
    }
    pub fn element_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.elements[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }
    pub fn interior_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.edges.len()).filter(move |&e| !self.is_boundary_edge(e))
    }

    /// `+1` if element `t` is the minus side of its local edge `k`
    /// (so `n_T = n_e` there), `-1` otherwise.
    pub fn edge_sign(&self, t: usize, k: usize) -> f64 {
        if self.edge_elements[self.element_edges[t][k]].0 == t {
            1.0
        } else {
            -1.0
        }
    }

    /// Mesh size: the grid spacing for structured meshes, the largest
    /// element diameter otherwise.
    pub fn h(&self) -> f64 {
        self.grid_spacing.unwrap_or_else(|| {
            self.element_geometry
                .iter()
                .map(|g| g.diameter)
                .fold(0.0, f64::max)
        })
    }

    pub fn grid_spacing(&self) -> Option<f64> {
        self.grid_spacing
    }

    pub fn bounding_box(&self) -> [Point; 2] {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        [lo, hi]
    }

    pub fn total_area(&self) -> f64 {
        self.element_geometry.iter().map(|g| g.area).sum()
    }

    /// Barycentric coordinates of `p` with respect to element `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.element_points(t);
        let area = self.element_geometry[t].area;
        let l0 = signed_area(p, b, c) / area;
        let l1 = signed_area(a, p, c) / area;
        [l0, l1, 1.0 - l0 - l1]
    }

    /// Element containing `p` and its barycentric coordinates. On shared
    /// edges and vertices the lowest-indexed incident element is returned.
    pub fn locate_point(&self, p: Point) -> Result<(usize, [f64; 3])> {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(Error::PointOutsideDomain { x: p[0], y: p[1] });
        }
        let candidates = self
            .bins
            .candidates(p)
            .ok_or(Error::PointOutsideDomain { x: p[0], y: p[1] })?;
        for &t in candidates {
            let lambda = self.barycentric(t, p);
            if lambda.iter().all(|&l| l >= -LOCATE_TOL) {
                let mut clamped = lambda.map(|l| l.clamp(0.0, 1.0));
                let s: f64 = clamped.iter().sum();
                clamped.iter_mut().for_each(|l| *l /= s);
                return Ok((t, clamped));
            }
        }
        Err(Error::PointOutsideDomain { x: p[0], y: p[1] })
    }

    /// Plain-text mesh format: a `vertices N elements M` header, `N` lines of
    /// `x y`, then `M` lines of 0-based `i j k`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "vertices {} elements {}", self.vertices.len(), self.elements.len()).unwrap();
        for p in &self.vertices {
            writeln!(s, "{:?} {:?}", p[0], p[1]).unwrap();
        }
        for t in &self.elements {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(f)
    }

    fn read_from(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty mesh file".into()))??;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 4 || tok[0] != "vertices" || tok[2] != "elements" {
            return Err(Error::Parse(format!("bad mesh header: {header:?}")));
        }
        let nv: usize = tok[1].parse().map_err(|_| Error::Parse(format!("bad vertex count {:?}", tok[1])))?;
        let ne: usize = tok[3].parse().map_err(|_| Error::Parse(format!("bad element count {:?}", tok[3])))?;
        let mut vertices = Vec::with_capacity(nv);
        for i in 0..nv {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("missing vertex line {i}")))??;
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad coordinate {s:?}"))))
                .collect::<Result<_>>()?;
            if v.len() != 2 {
                return Err(Error::Parse(format!("vertex line {i} needs two coordinates")));
            }
            vertices.push([v[0], v[1]]);
        }
        let mut elements = Vec::with_capacity(ne);
        for i in 0..ne {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("missing element line {i}")))??;
            let v: Vec<usize> = line
                .split_whitespace()
                .map(|s| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad vertex index {s:?}"))))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(Error::Parse(format!("element line {i} needs three indices")));
            }
            elements.push([v[0], v[1], v[2]]);
        }
        Self::from_parts(vertices, elements)
    }

    /// Smallest interior angle over all elements, in degrees.
    pub fn min_angle_degrees(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.elements.len() {
            let p = self.element_points(t);
            for k in 0..3 {
                let a = p[k];
                let b = p[(k + 1) % 3];
                let c = p[(k + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (norm(u) * norm(v));
                min = min.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        min
    }
}

fn element_geometry(vertices: &[Point], tri: &[usize; 3]) -> ElementGeometry {
    let p = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
    let area = signed_area(p[0], p[1], p[2]);
    let mut diameter: f64 = 0.0;
    let mut normals = [[0.0; 2]; 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        let len = dist(a, b);
        diameter = diameter.max(len);
        // counterclockwise traversal: outward normal is the tangent rotated clockwise
        normals[k] = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
    }
    ElementGeometry {
        area,
        diameter,
        normals,
        barycenter: [
            (p[0][0] + p[1][0] + p[2][0]) / 3.0,
            (p[0][1] + p[1][1] + p[2][1]) / 3.0,
        ],
    }
}

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: Point, b: Point) -> f64 {
    norm([b[0] - a[0], b[1] - a[1]])
}

fn norm(v: Point) -> f64 {
    v[0].hypot(v[1])
}

impl Bins {
    fn build(vertices: &[Point], elements: &[[usize; 3]]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let per_side = ((elements.len() as f64 / 2.0).sqrt().ceil() as usize).max(1);
        let dims = [per_side, per_side];
        let cell = [
            ((hi[0] - lo[0]) / per_side as f64).max(f64::MIN_POSITIVE),
            ((hi[1] - lo[1]) / per_side as f64).max(f64::MIN_POSITIVE),
        ];
        let slack = 1e-10;
        let range = |t: &[usize; 3], d: usize| -> (usize, usize) {
            let mut a = f64::INFINITY;
            let mut b = f64::NEG_INFINITY;
            for &v in t {
                a = a.min(vertices[v][d]);
                b = b.max(vertices[v][d]);
            }
            let i0 = (((a - lo[d]) / cell[d]) - slack).floor().max(0.0) as usize;
            let i1 = ((((b - lo[d]) / cell[d]) + slack).floor() as usize).min(dims[d] - 1);
            (i0.min(dims[d] - 1), i1)
        };
        let mut counts = vec![0usize; dims[0] * dims[1] + 1];
        for t in elements {
            let (x0, x1) = range(t, 0);
            let (y0, y1) = range(t, 1);
            for j in y0..=y1 {
                for i in x0..=x1 {
                    counts[j * dims[0] + i + 1] += 1;
                }
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0; *counts.last().unwrap()];
        for (idx, t) in elements.iter().enumerate() {
            let (x0, x1) = range(t, 0);
            let (y0, y1) = range(t, 1);
            for j in y0..=y1 {
                for i in x0..=x1 {
                    let b = j * dims[0] + i;
                    items[fill[b]] = idx;
                    fill[b] += 1;
                }
            }
        }
        Self {
            origin: lo,
            cell,
            dims,
            offsets: counts,
            items,
        }
    }

    fn candidates(&self, p: Point) -> Option<&[usize]> {
        let mut ij = [0usize; 2];
        for d in 0..2 {
            let s = (p[d] - self.origin[d]) / self.cell[d];
            if s < -1e-9 || s > self.dims[d] as f64 + 1e-9 {
                return None;
            }
            ij[d] = (s.floor().max(0.0) as usize).min(self.dims[d] - 1);
        }
        let b = ij[1] * self.dims[0] + ij[0];
        Some(&self.items[self.offsets[b]..self.offsets[b + 1]])
    }
}
