//! Experiment drivers: the biharmonic refinement study, the
//! state-constrained optimal control comparison, and the condition number
//! study, plus the error norms they report.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::assembly::{assemble_aw, assemble_c0ip, assemble_load_l2, assemble_tracking, OcpOperator};
use crate::error::{Error, Result};
use crate::krylov::{estimate_condition, ConditionConfig, ConditionEstimate};
use crate::measure::ProblemConfig;
use crate::mesh::{Mesh, Point};
use crate::quadrature::TriangleRule;
use crate::schwarz::{build_partition, SchwarzPreconditioner};
use crate::space::{interpolate_p1_bounds, FeFunction, P2Space, UNBOUNDED};
use crate::vi::{solve_linear, solve_vi_pdas, BoxConstraints, SolverConfig, VISolution};
use crate::weak_ops::{recover_control, ControlRecovery, WeakOperators};

/// `log2(e_coarse / e_fine)`; `None` if either value is not positive.
pub fn order(coarse: f64, fine: f64) -> Option<f64> {
    (coarse > 0.0 && fine > 0.0).then(|| (coarse / fine).log2())
}

fn fmt_order(o: Option<f64>) -> String {
    o.map_or_else(|| "-".to_string(), |o| format!("{o:.2}"))
}

fn fmt_sci(v: f64) -> String {
    format!("{v:.2e}")
}

/// Uniform mesh of the square `[lo, lo + side]²` with spacing `2^-k`.
fn level_mesh(lo: Point, side: f64, k: u32) -> Result<Mesh> {
    let n = side * 2f64.powi(k as i32);
    if (n - n.round()).abs() > 1e-9 || n < 1.0 {
        return Err(Error::InvalidMesh(format!("side {side} is not a multiple of h = 2^-{k}")));
    }
    Mesh::uniform_square(lo, side, n.round() as usize)
}

// ---------------------------------------------------------------------------
// biharmonic study

/// Manufactured solution `u = 10 sin(π(x + ½)) sin(π(y + ½))` on `(-½, ½)²`.
pub fn biharmonic_exact(p: Point) -> f64 {
    10.0 * (PI * (p[0] + 0.5)).sin() * (PI * (p[1] + 0.5)).sin()
}

pub fn biharmonic_exact_grad(p: Point) -> [f64; 2] {
    let (sx, cx) = (PI * (p[0] + 0.5)).sin_cos();
    let (sy, cy) = (PI * (p[1] + 0.5)).sin_cos();
    [10.0 * PI * cx * sy, 10.0 * PI * sx * cy]
}

/// `Δ²u = 4π⁴ u`.
pub fn biharmonic_load(p: Point) -> f64 {
    4.0 * PI.powi(4) * biharmonic_exact(p)
}

#[derive(Clone, Debug)]
pub struct BiharmonicLevel {
    pub h: f64,
    pub err_w: f64,
    pub n_dofs: usize,
}

#[derive(Clone, Debug, Default)]
pub struct BiharmonicReport {
    pub levels: Vec<BiharmonicLevel>,
}

impl BiharmonicReport {
    pub fn orders(&self) -> Vec<Option<f64>> {
        orders_of(self.levels.iter().map(|l| l.err_w))
    }

    /// CSV `h,err_w,order`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,err_w,order\n");
        for (l, o) in self.levels.iter().zip(self.orders()) {
            writeln!(s, "{},{},{}", l.h, fmt_sci(l.err_w), fmt_order(o)).unwrap();
        }
        s
    }
}

fn orders_of(v: impl Iterator<Item = f64>) -> Vec<Option<f64>> {
    let v: Vec<f64> = v.collect();
    (0..v.len())
        .map(|i| if i == 0 { None } else { order(v[i - 1], v[i]) })
        .collect()
}

/// Solves the biharmonic problem on one mesh and returns `(space, u_h)`.
pub fn solve_biharmonic(mesh: Mesh, load: impl Fn(Point) -> f64, cfg: &SolverConfig) -> Result<(P2Space, Vec<f64>)> {
    let space = P2Space::new(Arc::new(mesh));
    let ops = WeakOperators::new(&space);
    let a = assemble_aw(&space, &ops);
    let b = assemble_load_l2(&space, load, 6);
    let u = solve_linear(&a, &b, space.dirichlet_flags(), cfg)?;
    Ok((space, u))
}

/// `‖u_I - u_h‖_w` for `h = 2^-k`, `k` in `levels`.
pub fn run_biharmonic(levels: &[u32], cfg: &SolverConfig) -> Result<BiharmonicReport> {
    let mut report = BiharmonicReport::default();
    for &k in levels {
        let mesh = level_mesh([-0.5, -0.5], 1.0, k)?;
        let h = mesh.h();
        let (space, u) = solve_biharmonic(mesh, biharmonic_load, cfg)?;
        let ops = WeakOperators::new(&space);
        let ui = space.interpolate(biharmonic_exact).zero_dirichlet();
        let d: Vec<f64> = ui.coeffs().iter().zip(&u).map(|(a, b)| a - b).collect();
        report.levels.push(BiharmonicLevel {
            h,
            err_w: ops.norm_w(space.mesh(), &d),
            n_dofs: space.n_dofs(),
        });
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// error norms

/// Reference against which discrete solutions are measured.
pub enum ReferenceSolution<'a> {
    Analytic {
        value: &'a dyn Fn(Point) -> f64,
        grad: &'a dyn Fn(Point) -> [f64; 2],
    },
    /// A finite element function on a finer mesh of the same domain.
    Fine(FeFunction<'a>),
}

impl ReferenceSolution<'_> {
    fn value_grad(&self, p: Point) -> Result<(f64, [f64; 2])> {
        match self {
            Self::Analytic { value, grad } => Ok((value(p), grad(p))),
            Self::Fine(f) => {
                let (t, l) = f.space().mesh().locate_point(p)?;
                Ok((f.value_in(t, l), f.grad_in(t, l)))
            }
        }
    }

    /// Nodal P2 interpolant on `space`, zero on the Dirichlet boundary.
    pub fn interpolate(&self, space: &P2Space) -> Result<Vec<f64>> {
        (0..space.n_dofs())
            .map(|i| {
                if space.is_dirichlet(i) {
                    Ok(0.0)
                } else {
                    self.value_grad(space.node(i)).map(|v| v.0)
                }
            })
            .collect()
    }
}

/// Absolute and relative errors of one discrete solution.
#[derive(Clone, Copy, Debug, Default)]
pub struct ErrorTuple {
    pub abs_inf: f64,
    pub abs_l2: f64,
    pub abs_h1: f64,
    pub abs_w: f64,
    pub abs_h: f64,
    pub rel_inf: f64,
    pub rel_l2: f64,
    pub rel_h1: f64,
    pub rel_w: f64,
    pub rel_h: f64,
}

fn rel(err: f64, norm: f64) -> f64 {
    if norm > 0.0 {
        err / norm
    } else if err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Sampling lattice for the maximum norm: the six interior points of the
/// degree-5 barycentric lattice (the element's nodes are sampled too).
const LINF_SAMPLES: [[f64; 3]; 6] = [
    [0.2, 0.2, 0.6],
    [0.2, 0.6, 0.2],
    [0.6, 0.2, 0.2],
    [0.2, 0.4, 0.4],
    [0.4, 0.2, 0.4],
    [0.4, 0.4, 0.2],
];

pub fn compute_errors(v: &FeFunction, reference: &ReferenceSolution, ops: &WeakOperators) -> Result<ErrorTuple> {
    let space = v.space();
    let mesh = space.mesh();
    let mut e = ErrorTuple::default();
    let (mut ref_inf, mut ref_l2, mut ref_h1) = (0.0f64, 0.0, 0.0);

    for i in 0..space.n_dofs() {
        let (r, _) = reference.value_grad(space.node(i))?;
        e.abs_inf = e.abs_inf.max((v.coeffs()[i] - r).abs());
        ref_inf = ref_inf.max(r.abs());
    }
    let rule = TriangleRule::of_degree(6);
    for t in 0..mesh.n_elements() {
        let [a, b, c] = mesh.element_points(t);
        let at = |l: &[f64; 3]| -> Point {
            [
                l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
                l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
            ]
        };
        for l in &LINF_SAMPLES {
            let (r, _) = reference.value_grad(at(l))?;
            e.abs_inf = e.abs_inf.max((v.value_in(t, *l) - r).abs());
            ref_inf = ref_inf.max(r.abs());
        }
        let area = mesh.element_geometry(t).area;
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let (r, rg) = reference.value_grad(at(l))?;
            let vv = v.value_in(t, *l);
            let vg = v.grad_in(t, *l);
            let wa = w * area;
            let d = vv - r;
            let dg = [vg[0] - rg[0], vg[1] - rg[1]];
            e.abs_l2 += wa * d * d;
            e.abs_h1 += wa * (d * d + dg[0] * dg[0] + dg[1] * dg[1]);
            ref_l2 += wa * r * r;
            ref_h1 += wa * (r * r + rg[0] * rg[0] + rg[1] * rg[1]);
        }
    }
    e.abs_l2 = e.abs_l2.sqrt();
    e.abs_h1 = e.abs_h1.sqrt();
    let (ref_l2, ref_h1) = (ref_l2.sqrt(), ref_h1.sqrt());

    let pi_ref = reference.interpolate(space)?;
    let d: Vec<f64> = pi_ref.iter().zip(v.coeffs()).map(|(a, b)| a - b).collect();
    e.abs_w = ops.norm_w(mesh, &d);
    e.abs_h = ops.norm_h(space, &d);
    let ref_w = ops.norm_w(mesh, &pi_ref);
    let ref_h = ops.norm_h(space, &pi_ref);

    e.rel_inf = rel(e.abs_inf, ref_inf);
    e.rel_l2 = rel(e.abs_l2, ref_l2);
    e.rel_h1 = rel(e.abs_h1, ref_h1);
    e.rel_w = rel(e.abs_w, ref_w);
    e.rel_h = rel(e.abs_h, ref_h);
    Ok(e)
}

// ---------------------------------------------------------------------------
// optimal control study

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    WeakGalerkin,
    InteriorPenalty { rho: f64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Self::WeakGalerkin => "wg",
            Self::InteriorPenalty { .. } => "c0ip",
        }
    }
}

/// Discrete OCP on one mesh together with its solution.
pub struct OcpSolution {
    pub space: P2Space,
    pub ops: WeakOperators,
    pub solution: VISolution,
    pub control: Vec<f64>,
}

pub fn solve_ocp(
    problem: &ProblemConfig,
    k: u32,
    method: Method,
    recovery: ControlRecovery,
    cfg: &SolverConfig,
) -> Result<OcpSolution> {
    let side = problem.side()?;
    let mesh = level_mesh(problem.domain[0], side, k)?;
    let space = P2Space::new(Arc::new(mesh));
    let ops = WeakOperators::new(&space);
    let a = match method {
        Method::WeakGalerkin => assemble_aw(&space, &ops),
        Method::InteriorPenalty { rho } => assemble_c0ip(&space, &ops, rho),
    };
    let tracking = assemble_tracking(&space, &problem.measure)?;
    let op = OcpOperator::new(problem.beta, &a, &tracking)?;
    let (lower, upper) = interpolate_p1_bounds(
        space.mesh(),
        |p| problem.lower.as_ref().map_or(-UNBOUNDED, |e| e.eval(p)),
        |p| problem.upper.as_ref().map_or(UNBOUNDED, |e| e.eval(p)),
    )?;
    let solution = solve_vi_pdas(&space, &op, &BoxConstraints { lower, upper }, cfg)?;
    let control = recover_control(&space, &ops, &solution.y, recovery);
    Ok(OcpSolution {
        space,
        ops,
        solution,
        control,
    })
}

#[derive(Clone, Debug)]
pub struct OcpLevel {
    pub h: f64,
    pub errors: ErrorTuple,
    pub pdas_iterations: usize,
    pub active_upper: usize,
    pub active_lower: usize,
}

#[derive(Clone, Debug)]
pub struct OcpReport {
    pub method: Method,
    pub reference_h: f64,
    pub levels: Vec<OcpLevel>,
}

impl OcpReport {
    /// Relative error in the method's energy norm (`‖·‖_w` or `‖·‖_h`).
    pub fn energy(&self, l: &OcpLevel) -> f64 {
        match self.method {
            Method::WeakGalerkin => l.errors.rel_w,
            Method::InteriorPenalty { .. } => l.errors.rel_h,
        }
    }

    pub fn column(&self, f: impl Fn(&OcpLevel) -> f64) -> (Vec<f64>, Vec<Option<f64>>) {
        let v: Vec<f64> = self.levels.iter().map(f).collect();
        let o = orders_of(v.iter().copied());
        (v, o)
    }

    /// CSV `h,e_inf,ord,e_l2,ord,e_h1,ord,e_energy,ord` of relative errors.
    pub fn to_csv(&self) -> String {
        let cols = [
            self.column(|l| l.errors.rel_inf),
            self.column(|l| l.errors.rel_l2),
            self.column(|l| l.errors.rel_h1),
            self.column(|l| self.energy(l)),
        ];
        let mut s = String::from("h,e_inf,ord,e_l2,ord,e_h1,ord,e_energy,ord\n");
        for (i, l) in self.levels.iter().enumerate() {
            write!(s, "{}", l.h).unwrap();
            for (v, o) in &cols {
                write!(s, ",{},{}", fmt_sci(v[i]), fmt_order(o[i])).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Solves the OCP at `h = 2^-k` for each level and measures relative errors
/// against the same method on a mesh `reference_offset` levels finer than
/// the finest requested level. Returns the report and the finest solve.
pub fn run_ocp(
    problem: &ProblemConfig,
    levels: &[u32],
    method: Method,
    reference_offset: u32,
    recovery: ControlRecovery,
    cfg: &SolverConfig,
) -> Result<(OcpReport, OcpSolution)> {
    let finest = *levels.iter().max().ok_or(Error::InvalidMesh("no levels".into()))?;
    let ref_cfg = SolverConfig { tol: 1e-12, ..*cfg };
    let reference = solve_ocp(problem, finest + reference_offset, method, recovery, &ref_cfg)?;
    let ref_fn = reference.space.function(reference.solution.y.clone())?;
    let ref_sol = ReferenceSolution::Fine(ref_fn);
    let mut report = OcpReport {
        method,
        reference_h: reference.space.mesh().h(),
        levels: Vec::new(),
    };
    let mut last = None;
    for &k in levels {
        let sol = solve_ocp(problem, k, method, recovery, cfg)?;
        let v = sol.space.function(sol.solution.y.clone())?;
        let errors = compute_errors(&v, &ref_sol, &sol.ops)?;
        report.levels.push(OcpLevel {
            h: sol.space.mesh().h(),
            errors,
            pdas_iterations: sol.solution.iterations,
            active_upper: sol.solution.active_upper.len(),
            active_lower: sol.solution.active_lower.len(),
        });
        last = Some(sol);
    }
    Ok((report, last.expect("at least one level")))
}

// ---------------------------------------------------------------------------
// condition numbers

/// Coarse grid and overlap (in multiples of h) of a Schwarz partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PartitionSpec {
    pub jx: usize,
    pub jy: usize,
    pub delta_h: usize,
}

impl std::str::FromStr for PartitionSpec {
    type Err = Error;
    /// `JXxJY:delta=Mh`, e.g. `2x2:delta=1h`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("partition {s:?}, expected e.g. 2x2:delta=1h"));
        let (grid, delta) = s.split_once(':').ok_or_else(bad)?;
        let (jx, jy) = grid.split_once('x').ok_or_else(bad)?;
        let m = delta
            .strip_prefix("delta=")
            .and_then(|d| d.strip_suffix('h'))
            .ok_or_else(bad)?;
        Ok(Self {
            jx: jx.parse().map_err(|_| bad())?,
            jy: jy.parse().map_err(|_| bad())?,
            delta_h: m.parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ConditionLevel {
    pub h: f64,
    pub n_free: usize,
    pub kappa_a: ConditionEstimate,
    /// `None` where the overlap reaches across a whole coarse cell.
    pub kappa_ba: Vec<Option<ConditionEstimate>>,
}

#[derive(Clone, Debug)]
pub struct ConditionReport {
    pub partitions: Vec<PartitionSpec>,
    pub levels: Vec<ConditionLevel>,
    /// Partition report lines, one per (level, partition).
    pub partition_reports: Vec<String>,
}

impl ConditionReport {
    pub fn kappa_a(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.kappa_a.kappa).collect()
    }

    pub fn kappa_ba(&self, p: usize) -> Vec<Option<f64>> {
        self.levels.iter().map(|l| l.kappa_ba[p].as_ref().map(|e| e.kappa)).collect()
    }

    /// CSV `h,kappa_A,order,kappa_BA_d1,order,...`; condition numbers grow,
    /// so orders are `log2(κ(h/2) / κ(h))`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,kappa_A,order");
        for p in &self.partitions {
            write!(s, ",kappa_BA_d{},order", p.delta_h).unwrap();
        }
        s.push('\n');
        let growth = |v: Vec<Option<f64>>| -> Vec<Option<f64>> {
            (0..v.len())
                .map(|i| if i == 0 { None } else { order(v[i]?, v[i - 1]?) })
                .collect()
        };
        let a = growth(self.kappa_a().into_iter().map(Some).collect());
        let ba: Vec<_> = (0..self.partitions.len()).map(|p| growth(self.kappa_ba(p))).collect();
        for (i, l) in self.levels.iter().enumerate() {
            write!(s, "{},{},{}", l.h, fmt_sci(l.kappa_a.kappa), fmt_order(a[i])).unwrap();
            for (p, o) in ba.iter().enumerate() {
                let k = l.kappa_ba[p].as_ref().map_or_else(|| "-".to_string(), |e| fmt_sci(e.kappa));
                write!(s, ",{k},{}", fmt_order(o[i])).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// κ(A_h) and κ(B_h A_h) on the free DOFs of the biharmonic operator on
/// `(-½, ½)²` for `h = 2^-k`.
pub fn run_condition(levels: &[u32], partitions: &[PartitionSpec], cfg: &ConditionConfig) -> Result<ConditionReport> {
    let mut report = ConditionReport {
        partitions: partitions.to_vec(),
        levels: Vec::new(),
        partition_reports: Vec::new(),
    };
    for &k in levels {
        let mesh = level_mesh([-0.5, -0.5], 1.0, k)?;
        let h = mesh.h();
        let space = P2Space::new(Arc::new(mesh));
        let ops = WeakOperators::new(&space);
        let a = assemble_aw(&space, &ops).submatrix(&space.free_dofs());
        let kappa_a = estimate_condition(&a, None, cfg)?;
        let mut kappa_ba = Vec::new();
        for p in partitions {
            let part = build_partition(&space, p.jx, p.jy, p.delta_h as f64 * h)?;
            report.partition_reports.push(format!("h={h}: {}", part.report()));
            if part.grid.0 * part.grid.1 > 1 && part.delta >= part.h_coarse {
                kappa_ba.push(None);
                continue;
            }
            let b = SchwarzPreconditioner::new(&part, &space, &ops)?;
            kappa_ba.push(Some(estimate_condition(&a, Some(&b), cfg)?));
        }
        report.levels.push(ConditionLevel {
            h,
            n_free: a.dim(),
            kappa_a,
            kappa_ba,
        });
    }
    Ok(report)
}
