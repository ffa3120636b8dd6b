//! The tracking measure `χ` (weighted points, polyline curves and
//! subregions with target data) and the problem config file format.
//!
//! Config lines (`#` starts a comment):
//!
//! ```text
//! domain xmin ymin xmax ymax
//! beta 1
//! upper x^2 + y^2 - 1        # or `none`
//! lower none
//! point x y weight target
//! region all weight_expr target_expr
//! region xmin ymin xmax ymax weight_expr target_expr
//! curve x1 y1 x2 y2 ... weight_expr target_expr
//! ```
//!
//! Expressions on `point`, `region` and `curve` lines are single
//! whitespace-free tokens; `upper` and `lower` take the rest of the line.

use std::path::Path;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::mesh::{Mesh, Point};
use crate::quadrature::{gauss_legendre, TriangleRule};

#[derive(Clone, Debug)]
pub struct PointTerm {
    pub point: Point,
    pub weight: f64,
    pub target: f64,
}

#[derive(Clone, Debug)]
pub struct CurveTerm {
    pub vertices: Vec<Point>,
    pub weight: Expr,
    pub target: Expr,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Region {
    Whole,
    Rect { min: Point, max: Point },
}

#[derive(Clone, Debug)]
pub struct RegionTerm {
    pub region: Region,
    pub weight: Expr,
    pub target: Expr,
}

#[derive(Clone, Debug, Default)]
pub struct TrackingMeasure {
    pub points: Vec<PointTerm>,
    pub curves: Vec<CurveTerm>,
    pub regions: Vec<RegionTerm>,
}

/// One quadrature node of `χ`: element, barycentric coordinates, weight
/// (quadrature weight times measure density) and target value.
#[derive(Clone, Copy, Debug)]
pub struct MeasureNode {
    pub element: usize,
    pub lambda: [f64; 3],
    pub weight: f64,
    pub target: f64,
}

impl TrackingMeasure {
    pub fn lebesgue(weight: f64, target: f64) -> Self {
        Self {
            regions: vec![RegionTerm {
                region: Region::Whole,
                weight: Expr::constant(weight),
                target: Expr::constant(target),
            }],
            ..Self::default()
        }
    }

    /// Visits every quadrature node of the measure in a fixed order: points,
    /// then curves, then regions, each by ascending element index.
    pub fn for_each_node(&self, mesh: &Mesh, mut f: impl FnMut(MeasureNode)) -> Result<()> {
        let [lo, hi] = mesh.bounding_box();
        for p in &self.points {
            let [x, y] = p.point;
            if !(x > lo[0] && x < hi[0] && y > lo[1] && y < hi[1]) {
                return Err(Error::PointOutsideDomain { x, y });
            }
            check_weight(p.point, p.weight)?;
            let (element, lambda) = mesh.locate_point(p.point)?;
            f(MeasureNode {
                element,
                lambda,
                weight: p.weight,
                target: p.target,
            });
        }
        for c in &self.curves {
            curve_nodes(mesh, c, &mut f)?;
        }
        let rule = TriangleRule::of_degree(4);
        for r in &self.regions {
            region_nodes(mesh, r, &rule, &mut f)?;
        }
        Ok(())
    }

    /// `χ(Ω)` as seen by the quadrature.
    pub fn total_mass(&self, mesh: &Mesh) -> Result<f64> {
        let mut s = 0.0;
        self.for_each_node(mesh, |n| s += n.weight)?;
        Ok(s)
    }
}

fn check_weight(p: Point, w: f64) -> Result<()> {
    if w < 0.0 || !w.is_finite() {
        return Err(Error::NegativeWeight {
            x: p[0],
            y: p[1],
            value: w,
        });
    }
    Ok(())
}

fn physical(mesh: &Mesh, t: usize, l: [f64; 3]) -> Point {
    let [a, b, c] = mesh.element_points(t);
    [
        l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
        l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
    ]
}

fn curve_nodes(mesh: &Mesh, c: &CurveTerm, f: &mut impl FnMut(MeasureNode)) -> Result<()> {
    if c.vertices.len() < 2 {
        return Err(Error::MalformedPolyline(format!(
            "{} vertices, need at least 2",
            c.vertices.len()
        )));
    }
    let [lo, hi] = mesh.bounding_box();
    for p in &c.vertices {
        if p[0] < lo[0] || p[0] > hi[0] || p[1] < lo[1] || p[1] > hi[1] || !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::PointOutsideDomain { x: p[0], y: p[1] });
        }
    }
    let (gp, gw) = gauss_legendre(3);
    for (s, seg) in c.vertices.windows(2).enumerate() {
        let (a, b) = (seg[0], seg[1]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        if len == 0.0 {
            return Err(Error::MalformedPolyline(format!("segment {s} has zero length")));
        }
        let bb_lo = [a[0].min(b[0]), a[1].min(b[1])];
        let bb_hi = [a[0].max(b[0]), a[1].max(b[1])];
        for t in 0..mesh.n_elements() {
            let pts = mesh.element_points(t);
            let tol = 1e-12 * mesh.element_geometry(t).diameter;
            if pts.iter().all(|p| p[0] < bb_lo[0] - tol)
                || pts.iter().all(|p| p[0] > bb_hi[0] + tol)
                || pts.iter().all(|p| p[1] < bb_lo[1] - tol)
                || pts.iter().all(|p| p[1] > bb_hi[1] + tol)
            {
                continue;
            }
            let la = mesh.barycentric(t, a);
            let lb = mesh.barycentric(t, b);
            let (mut s0, mut s1) = (0.0f64, 1.0f64);
            for k in 0..3 {
                let d = lb[k] - la[k];
                if d.abs() < 1e-14 {
                    if la[k] < -1e-12 {
                        s1 = -1.0;
                    }
                } else {
                    let root = -la[k] / d;
                    if d > 0.0 {
                        s0 = s0.max(root);
                    } else {
                        s1 = s1.min(root);
                    }
                }
            }
            if s1 - s0 <= 1e-12 {
                continue;
            }
            // pieces on a shared edge belong to the lowest-indexed element
            let mid = 0.5 * (s0 + s1);
            let pm = [a[0] + mid * (b[0] - a[0]), a[1] + mid * (b[1] - a[1])];
            if mesh.locate_point(pm)?.0 != t {
                continue;
            }
            let piece = (s1 - s0) * len;
            for (q, w) in gp.iter().zip(&gw) {
                let s = s0 + q * (s1 - s0);
                let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                let weight = c.weight.eval(p);
                check_weight(p, weight)?;
                let lambda = [
                    la[0] + s * (lb[0] - la[0]),
                    la[1] + s * (lb[1] - la[1]),
                    la[2] + s * (lb[2] - la[2]),
                ];
                f(MeasureNode {
                    element: t,
                    lambda,
                    weight: w * piece * weight,
                    target: c.target.eval(p),
                });
            }
        }
    }
    Ok(())
}

fn region_nodes(mesh: &Mesh, r: &RegionTerm, rule: &TriangleRule, f: &mut impl FnMut(MeasureNode)) -> Result<()> {
    for t in 0..mesh.n_elements() {
        let pts = mesh.element_points(t);
        let polygon = match r.region {
            Region::Whole => pts.to_vec(),
            Region::Rect { min, max } => {
                let inside = pts
                    .iter()
                    .all(|p| p[0] >= min[0] && p[0] <= max[0] && p[1] >= min[1] && p[1] <= max[1]);
                if inside {
                    pts.to_vec()
                } else {
                    clip_to_rect(&pts, min, max)
                }
            }
        };
        if polygon.len() < 3 {
            continue;
        }
        for i in 1..polygon.len() - 1 {
            let (a, b, c) = (polygon[0], polygon[i], polygon[i + 1]);
            let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
            if area <= 1e-15 * mesh.element_geometry(t).area {
                continue;
            }
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                let p = [
                    l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
                    l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
                ];
                let weight = r.weight.eval(p);
                check_weight(p, weight)?;
                let lambda = if r.region == Region::Whole {
                    *l
                } else {
                    mesh.barycentric(t, p)
                };
                debug_assert!({
                    let q = physical(mesh, t, lambda);
                    (q[0] - p[0]).abs() + (q[1] - p[1]).abs() < 1e-9
                });
                f(MeasureNode {
                    element: t,
                    lambda,
                    weight: w * area * weight,
                    target: r.target.eval(p),
                });
            }
        }
    }
    Ok(())
}

// Sutherland-Hodgman against the four sides of an axis-aligned rectangle.
fn clip_to_rect(tri: &[Point; 3], min: Point, max: Point) -> Vec<Point> {
    let mut poly = tri.to_vec();
    let planes: [(usize, f64, f64); 4] = [(0, min[0], 1.0), (0, max[0], -1.0), (1, min[1], 1.0), (1, max[1], -1.0)];
    for (axis, bound, sign) in planes {
        if poly.is_empty() {
            break;
        }
        let inside = |p: &Point| sign * (p[axis] - bound) >= 0.0;
        let mut out = Vec::with_capacity(poly.len() + 2);
        for i in 0..poly.len() {
            let cur = poly[i];
            let prev = poly[(i + poly.len() - 1) % poly.len()];
            let (ci, pi) = (inside(&cur), inside(&prev));
            if ci != pi {
                let s = (bound - prev[axis]) / (cur[axis] - prev[axis]);
                out.push([prev[0] + s * (cur[0] - prev[0]), prev[1] + s * (cur[1] - prev[1])]);
            }
            if ci {
                out.push(cur);
            }
        }
        poly = out;
    }
    poly
}

/// Problem description read from a config file.
#[derive(Clone, Debug)]
pub struct ProblemConfig {
    pub domain: [Point; 2],
    pub beta: f64,
    pub upper: Option<Expr>,
    pub lower: Option<Expr>,
    pub measure: TrackingMeasure,
}

/// The shipped point-tracking problem on `[-4, 4]^2`.
pub const DEFAULT_PROBLEM: &str = include_str!("../problem.cfg");

impl ProblemConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut domain = None;
        let mut beta = 1.0;
        let mut upper = None;
        let mut lower = None;
        let mut measure = TrackingMeasure::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config {
                line: line_no,
                message,
            };
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let toks: Vec<&str> = rest.split_whitespace().collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("not a number: {s:?}")));
            let expr = |s: &str| Expr::parse(s).map_err(|e| err(e.to_string()));
            match key {
                "domain" => {
                    if toks.len() != 4 {
                        return Err(err("domain needs xmin ymin xmax ymax".into()));
                    }
                    let v = toks.iter().map(|t| num(t)).collect::<Result<Vec<_>>>()?;
                    if !(v[2] > v[0] && v[3] > v[1]) {
                        return Err(err("empty domain".into()));
                    }
                    domain = Some([[v[0], v[1]], [v[2], v[3]]]);
                }
                "beta" => {
                    if toks.len() != 1 {
                        return Err(err("beta takes one value".into()));
                    }
                    beta = num(toks[0])?;
                    if beta <= 0.0 {
                        return Err(err("beta must be positive".into()));
                    }
                }
                "upper" | "lower" => {
                    let bound = if rest == "none" || rest.is_empty() {
                        None
                    } else {
                        Some(expr(rest)?)
                    };
                    if key == "upper" {
                        upper = bound;
                    } else {
                        lower = bound;
                    }
                }
                "point" => {
                    if toks.len() != 4 {
                        return Err(err("point needs x y weight target".into()));
                    }
                    measure.points.push(PointTerm {
                        point: [num(toks[0])?, num(toks[1])?],
                        weight: num(toks[2])?,
                        target: num(toks[3])?,
                    });
                }
                "region" => {
                    let region = match toks.len() {
                        3 if toks[0] == "all" => Region::Whole,
                        6 => Region::Rect {
                            min: [num(toks[0])?, num(toks[1])?],
                            max: [num(toks[2])?, num(toks[3])?],
                        },
                        _ => return Err(err("region needs `all` or xmin ymin xmax ymax, then weight and target".into())),
                    };
                    let n = toks.len();
                    measure.regions.push(RegionTerm {
                        region,
                        weight: expr(toks[n - 2])?,
                        target: expr(toks[n - 1])?,
                    });
                }
                "curve" => {
                    let n = toks.len();
                    if n < 6 || (n - 2) % 2 != 0 {
                        return Err(err("curve needs at least two x y pairs, then weight and target".into()));
                    }
                    let coords = toks[..n - 2].iter().map(|t| num(t)).collect::<Result<Vec<_>>>()?;
                    measure.curves.push(CurveTerm {
                        vertices: coords.chunks(2).map(|c| [c[0], c[1]]).collect(),
                        weight: expr(toks[n - 2])?,
                        target: expr(toks[n - 1])?,
                    });
                }
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        let domain = domain.ok_or(Error::Config {
            line: 0,
            message: "missing `domain`".into(),
        })?;
        Ok(Self {
            domain,
            beta,
            upper,
            lower,
            measure,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn default_problem() -> Self {
        Self::parse(DEFAULT_PROBLEM).expect("shipped config parses")
    }

    /// Side length of the square domain.
    pub fn side(&self) -> Result<f64> {
        let [lo, hi] = self.domain;
        let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
        if (w - h).abs() > 1e-12 * w {
            return Err(Error::Config {
                line: 0,
                message: "only square domains are meshed".into(),
            });
        }
        Ok(w)
    }
}
