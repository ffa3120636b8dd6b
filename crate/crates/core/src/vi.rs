//! Linear solves on the free DOFs and a primal-dual active-set method for
//! the box-constrained quadratic program behind the discrete variational
//! inequality.

use std::collections::{HashMap, HashSet};

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use std::fmt::Write as _;

use crate::assembly::OcpOperator;
use crate::cholesky::SparseCholesky;
use crate::error::{Error, Result};
use crate::krylov::{pcg, CgConfig, Preconditioner};
use crate::space::{P2Space, UNBOUNDED};
use crate::sparse::{norm2, norm_inf, SparseOperator};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InnerSolver {
    #[default]
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    Pcg,
}

impl std::str::FromStr for InnerSolver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Self::Direct),
            "pcg" => Ok(Self::Pcg),
            _ => Err(Error::Parse(format!("unknown inner solver {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Active-set scaling constant; `None` means `β h^{-4}`.
    pub pdas_c: Option<f64>,
    pub inner_solver: InnerSolver,
    pub cg_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            pdas_c: None,
            inner_solver: InnerSolver::Direct,
            cg_max_iter: 100_000,
        }
    }
}

struct Jacobi(Vec<f64>);

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((z, r), d) in z.iter_mut().zip(r).zip(&self.0) {
            *z = r / d;
        }
    }
}

/// Solves `A x = b` on the DOFs not flagged in `fixed`; fixed DOFs are 0.
pub fn solve_linear(a: &SparseOperator, b: &[f64], fixed: &[bool], cfg: &SolverConfig) -> Result<Vec<f64>> {
    let n = a.dim();
    for len in [b.len(), fixed.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    let sub = a.submatrix(&free);
    let rhs: Vec<f64> = free.iter().map(|&i| b[i]).collect();
    let xf = solve_reduced(&sub, &rhs, cfg)?;
    let mut x = vec![0.0; n];
    for (k, &i) in free.iter().enumerate() {
        x[i] = xf[k];
    }
    Ok(x)
}

/// Solves an SPD system over its full index range.
pub fn solve_reduced(a: &SparseOperator, b: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    if a.dim() == 0 {
        return Ok(Vec::new());
    }
    match cfg.inner_solver {
        InnerSolver::Direct => {
            let chol = SparseCholesky::factor(a)?;
            let mut x = chol.solve(b);
            // one step of iterative refinement if the residual is loose
            let bn = norm2(b);
            let r: Vec<f64> = a.mul(&x).iter().zip(b).map(|(ax, b)| b - ax).collect();
            if norm2(&r) > cfg.tol * bn {
                let d = chol.solve(&r);
                x.iter_mut().zip(d).for_each(|(x, d)| *x += d);
            }
            Ok(x)
        }
        InnerSolver::Pcg => {
            let jac = Jacobi(a.diagonal());
            let res = pcg(
                a,
                b,
                Some(&jac),
                &CgConfig {
                    tol: cfg.tol,
                    max_iter: cfg.cg_max_iter,
                },
            )?;
            Ok(res.x)
        }
    }
}

/// Bounds on the vertex DOFs (`±UNBOUNDED` for no bound).
#[derive(Clone, Debug)]
pub struct BoxConstraints {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxConstraints {
    pub fn unbounded(n_vertices: usize) -> Self {
        Self {
            lower: vec![-UNBOUNDED; n_vertices],
            upper: vec![UNBOUNDED; n_vertices],
        }
    }

    fn validate(&self, space: &P2Space) -> Result<()> {
        let nv = space.n_vertex_dofs();
        if self.lower.len() != nv || self.upper.len() != nv {
            return Err(Error::DimensionMismatch {
                expected: nv,
                got: self.lower.len().min(self.upper.len()),
            });
        }
        for i in 0..nv {
            let (l, u) = (self.lower[i], self.upper[i]);
            if !(l < u) {
                return Err(Error::InfeasibleBox(format!("vertex {i}: lower {l} >= upper {u}")));
            }
            if space.is_dirichlet(i) && !(l <= 0.0 && 0.0 <= u) {
                return Err(Error::InfeasibleBox(format!(
                    "boundary vertex {i} must take the value 0 but the box is [{l}, {u}]"
                )));
            }
        }
        Ok(())
    }
}

/// Post-hoc KKT residuals of a VI solution.
#[derive(Clone, Copy, Debug, Default)]
pub struct KktResiduals {
    /// `‖(Ay - b)_I‖∞ / ‖b‖∞` over inactive free DOFs.
    pub stationarity: f64,
    /// Largest bound violation on vertex DOFs.
    pub feasibility: f64,
    /// `max |λ_i| |y_i - bound_i|` over constrained DOFs.
    pub complementarity: f64,
    /// Largest multiplier of the wrong sign.
    pub sign: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.feasibility)
            .max(self.complementarity)
            .max(self.sign)
    }
}

#[derive(Clone, Debug)]
pub struct VISolution {
    pub y: Vec<f64>,
    /// `λ = A y - b` on active DOFs, 0 elsewhere: `λ ≤ 0` on the upper
    /// active set and `λ ≥ 0` on the lower one.
    pub multiplier: Vec<f64>,
    pub active_lower: Vec<usize>,
    pub active_upper: Vec<usize>,
    pub iterations: usize,
    /// False if the cycling guard fired.
    pub stationary: bool,
    pub residuals: KktResiduals,
    /// Active-set sizes `(lower, upper)` per iteration.
    pub history: Vec<(usize, usize)>,
}

impl VISolution {
    /// CSV with header `dof_index,y,multiplier,active`; `active` is
    /// `lower`, `upper` or empty.
    pub fn to_csv(&self) -> String {
        let mut flag = vec![""; self.y.len()];
        for &i in &self.active_lower {
            flag[i] = "lower";
        }
        for &i in &self.active_upper {
            flag[i] = "upper";
        }
        let mut s = String::from("dof_index,y,multiplier,active\n");
        for i in 0..self.y.len() {
            writeln!(s, "{},{:?},{:?},{}", i, self.y[i], self.multiplier[i], flag[i]).unwrap();
        }
        s
    }
}

pub fn kkt_residuals(
    space: &P2Space,
    a: &SparseOperator,
    b: &[f64],
    bounds: &BoxConstraints,
    y: &[f64],
    active_lower: &[usize],
    active_upper: &[usize],
) -> (KktResiduals, Vec<f64>) {
    let n = space.n_dofs();
    let ay = a.mul(y);
    let mut active = vec![false; n];
    for &i in active_lower.iter().chain(active_upper) {
        active[i] = true;
    }
    let mut lambda = vec![0.0; n];
    let mut res = KktResiduals::default();
    let bscale = norm_inf(b).max(f64::MIN_POSITIVE);
    for i in 0..n {
        if space.is_dirichlet(i) {
            continue;
        }
        let g = ay[i] - b[i];
        if active[i] {
            lambda[i] = g;
        } else {
            res.stationarity = res.stationarity.max(g.abs() / bscale);
        }
    }
    for &i in active_upper {
        res.sign = res.sign.max(lambda[i]);
        res.complementarity = res.complementarity.max(lambda[i].abs() * (y[i] - bounds.upper[i]).abs());
    }
    for &i in active_lower {
        res.sign = res.sign.max(-lambda[i]);
        res.complementarity = res.complementarity.max(lambda[i].abs() * (y[i] - bounds.lower[i]).abs());
    }
    for i in 0..space.n_vertex_dofs() {
        res.feasibility = res
            .feasibility
            .max(y[i] - bounds.upper[i])
            .max(bounds.lower[i] - y[i]);
    }
    res.sign /= bscale;
    (res, lambda)
}

/// Primal-dual active-set iteration for
/// `min ½ yᵀ A y - bᵀ y` subject to the box on free vertex DOFs.
pub fn solve_vi_pdas(space: &P2Space, op: &OcpOperator, bounds: &BoxConstraints, cfg: &SolverConfig) -> Result<VISolution> {
    bounds.validate(space)?;
    let a = &op.matrix;
    let b = &op.rhs;
    let n = space.n_dofs();
    let nv = space.n_vertex_dofs();
    let h = space.mesh().h();
    let c = cfg.pdas_c.unwrap_or(op.beta / h.powi(4));
    let fixed = space.dirichlet_flags();

    let mut constrained = match cfg.inner_solver {
        InnerSolver::Direct => Some(ConstrainedSolver::new(a, fixed, nv)?),
        InnerSolver::Pcg => None,
    };
    let mut y = match &mut constrained {
        Some(solver) => solver.solve(b, &[])?,
        None => solve_linear(a, b, fixed, cfg)?,
    };
    for i in 0..nv {
        if !fixed[i] {
            y[i] = y[i].clamp(bounds.lower[i], bounds.upper[i]);
        }
    }
    let mut mu = vec![0.0; n];
    let mut seen: HashSet<(Vec<usize>, Vec<usize>)> = HashSet::new();
    let mut history = Vec::new();
    let mut prev: Option<(Vec<usize>, Vec<usize>)> = None;
    let mut best: Option<(f64, Vec<f64>, Vec<usize>, Vec<usize>)> = None;

    for it in 0..cfg.max_iter {
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        for i in 0..nv {
            if fixed[i] {
                continue;
            }
            if mu[i] + c * (y[i] - bounds.upper[i]) > 0.0 {
                upper.push(i);
            } else if mu[i] + c * (y[i] - bounds.lower[i]) < 0.0 {
                lower.push(i);
            }
        }
        let sets = (lower, upper);
        if prev.as_ref() == Some(&sets) {
            let (lower, upper) = sets;
            return Ok(finish(space, op, bounds, y, lower, upper, it, true, history));
        }
        if seen.contains(&sets) {
            // cycling: fall back to the best iterate so far
            let (_, y, lower, upper) = best.expect("an iterate precedes any repeat");
            history.push((sets.0.len(), sets.1.len()));
            return Ok(finish(space, op, bounds, y, lower, upper, it, false, history));
        }
        history.push((sets.0.len(), sets.1.len()));
        if let Some(p) = prev.take() {
            seen.insert(p);
        }

        // equality-constrained solve with y fixed on the active sets
        let prescribed: Vec<(usize, f64)> = sets
            .0
            .iter()
            .map(|&i| (i, bounds.lower[i]))
            .chain(sets.1.iter().map(|&i| (i, bounds.upper[i])))
            .collect();
        let x = match &mut constrained {
            Some(solver) => solver.solve(b, &prescribed)?,
            None => {
                let mut is_fixed = fixed.to_vec();
                let mut x = vec![0.0; n];
                for &(i, g) in &prescribed {
                    is_fixed[i] = true;
                    x[i] = g;
                }
                let ax = a.mul(&x);
                let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
                let inner = solve_linear(a, &r, &is_fixed, cfg)?;
                for i in 0..n {
                    if !is_fixed[i] {
                        x[i] = inner[i];
                    }
                }
                x
            }
        };
        y = x;
        let ay = a.mul(&y);
        mu.iter_mut().for_each(|m| *m = 0.0);
        for &i in sets.0.iter().chain(&sets.1) {
            mu[i] = b[i] - ay[i];
        }
        let (res, _) = kkt_residuals(space, a, b, bounds, &y, &sets.0, &sets.1);
        let score = res.feasibility.max(res.sign);
        if best.as_ref().is_none_or(|(s, ..)| score < *s) {
            best = Some((score, y.clone(), sets.0.clone(), sets.1.clone()));
        }
        prev = Some(sets);
    }
    Err(Error::ActiveSetMaxIter {
        max_iter: cfg.max_iter,
        history,
    })
}

/// Above this many prescribed DOFs a fresh factorization beats the Schur
/// complement columns.
const MAX_SCHUR: usize = 64;

/// Solves `A x = b` on the free DOFs with `x` prescribed on a small,
/// changing subset of them. `A_F` is factorized once; each solve adds a dense
/// Schur complement `Eᵀ A_F⁻¹ E` over the prescribed subset, whose columns are
/// cached (restricted to the vertex DOFs, the only candidates).
struct ConstrainedSolver<'a> {
    a: &'a SparseOperator,
    free: Vec<usize>,
    slot: Vec<usize>,
    n_vertices: usize,
    chol: SparseCholesky,
    columns: HashMap<usize, Vec<f64>>,
}

impl<'a> ConstrainedSolver<'a> {
    fn new(a: &'a SparseOperator, fixed: &[bool], n_vertices: usize) -> Result<Self> {
        let free: Vec<usize> = (0..a.dim()).filter(|&i| !fixed[i]).collect();
        let mut slot = vec![usize::MAX; a.dim()];
        for (k, &i) in free.iter().enumerate() {
            slot[i] = k;
        }
        let chol = SparseCholesky::factor(&a.submatrix(&free))?;
        Ok(Self {
            a,
            free,
            slot,
            n_vertices,
            chol,
            columns: HashMap::new(),
        })
    }

    fn column(&mut self, i: usize) -> &[f64] {
        let (chol, free, slot, nv) = (&self.chol, &self.free, &self.slot, self.n_vertices);
        self.columns.entry(i).or_insert_with(|| {
            let mut e = vec![0.0; free.len()];
            e[slot[i]] = 1.0;
            chol.solve_in_place(&mut e);
            (0..nv).map(|v| if slot[v] == usize::MAX { 0.0 } else { e[slot[v]] }).collect()
        })
    }

    /// Free-space solution of `A_F x = r` with `x_i = g_i` for `(i, g_i)`.
    fn solve_free(&mut self, r: &[f64], prescribed: &[(usize, f64)]) -> Result<Vec<f64>> {
        let mut x = self.chol.solve(r);
        let m = prescribed.len();
        if m == 0 {
            return Ok(x);
        }
        for &(i, _) in prescribed {
            self.column(i);
        }
        let s = Mat::from_fn(m, m, |p, q| {
            let (ip, iq) = (prescribed[p].0, prescribed[q].0);
            0.5 * (self.columns[&iq][ip] + self.columns[&ip][iq])
        });
        let d = Mat::from_fn(m, 1, |p, _| {
            let (i, g) = prescribed[p];
            x[self.slot[i]] - g
        });
        let llt = s.llt(Side::Lower).map_err(|_| Error::NotPositiveDefinite { pivot: 0 })?;
        let lambda = llt.solve(&d);
        let mut rhs = r.to_vec();
        for (p, &(i, _)) in prescribed.iter().enumerate() {
            rhs[self.slot[i]] -= lambda[(p, 0)];
        }
        x = self.chol.solve(&rhs);
        for &(i, g) in prescribed {
            x[self.slot[i]] = g;
        }
        Ok(x)
    }

    fn solve(&mut self, b: &[f64], prescribed: &[(usize, f64)]) -> Result<Vec<f64>> {
        if prescribed.len() > MAX_SCHUR {
            return self.refactor_solve(b, prescribed);
        }
        let r: Vec<f64> = self.free.iter().map(|&i| b[i]).collect();
        let mut xf = self.solve_free(&r, prescribed)?;
        // one step of iterative refinement on the unconstrained rows
        let mut x = self.scatter(&xf);
        let ax = self.a.mul(&x);
        let mut res: Vec<f64> = self.free.iter().map(|&i| b[i] - ax[i]).collect();
        for &(i, _) in prescribed {
            res[self.slot[i]] = 0.0;
        }
        let zero: Vec<(usize, f64)> = prescribed.iter().map(|&(i, _)| (i, 0.0)).collect();
        let d = self.solve_free(&res, &zero)?;
        xf.iter_mut().zip(&d).for_each(|(x, d)| *x += d);
        x = self.scatter(&xf);
        Ok(x)
    }

    fn refactor_solve(&self, b: &[f64], prescribed: &[(usize, f64)]) -> Result<Vec<f64>> {
        let mut is_fixed = vec![true; self.a.dim()];
        for &i in &self.free {
            is_fixed[i] = false;
        }
        let mut x = vec![0.0; self.a.dim()];
        for &(i, g) in prescribed {
            is_fixed[i] = true;
            x[i] = g;
        }
        let ax = self.a.mul(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
        let inner = solve_linear(self.a, &r, &is_fixed, &SolverConfig::default())?;
        for (i, v) in inner.into_iter().enumerate() {
            if !is_fixed[i] {
                x[i] = v;
            }
        }
        Ok(x)
    }

    fn scatter(&self, xf: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.a.dim()];
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = xf[k];
        }
        x
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    space: &P2Space,
    op: &OcpOperator,
    bounds: &BoxConstraints,
    y: Vec<f64>,
    active_lower: Vec<usize>,
    active_upper: Vec<usize>,
    iterations: usize,
    stationary: bool,
    history: Vec<(usize, usize)>,
) -> VISolution {
    let (residuals, multiplier) = kkt_residuals(space, &op.matrix, &op.rhs, bounds, &y, &active_lower, &active_upper);
    VISolution {
        y,
        multiplier,
        active_lower,
        active_upper,
        iterations,
        stationary,
        residuals,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_aw, assemble_tracking};
    use crate::measure::TrackingMeasure;
    use crate::mesh::Mesh;
    use crate::weak_ops::WeakOperators;
    use std::sync::Arc;

    fn setup(n: usize) -> (P2Space, OcpOperator) {
        let s = P2Space::new(Arc::new(Mesh::uniform_square([-0.5, -0.5], 1.0, n).unwrap()));
        let ops = WeakOperators::new(&s);
        let aw = assemble_aw(&s, &ops);
        let t = assemble_tracking(&s, &TrackingMeasure::lebesgue(1.0, 1.0)).unwrap();
        let op = OcpOperator::new(1e-3, &aw, &t).unwrap();
        (s, op)
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let (s, op) = setup(4);
        let x = solve_linear(&op.matrix, &vec![0.0; s.n_dofs()], s.dirichlet_flags(), &SolverConfig::default()).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn direct_and_cg_agree() {
        let (s, op) = setup(8);
        let fixed = s.dirichlet_flags();
        let d = solve_linear(&op.matrix, &op.rhs, fixed, &SolverConfig::default()).unwrap();
        let cfg = SolverConfig {
            inner_solver: InnerSolver::Pcg,
            tol: 1e-13,
            ..Default::default()
        };
        let c = solve_linear(&op.matrix, &op.rhs, fixed, &cfg).unwrap();
        let diff: Vec<f64> = d.iter().zip(&c).map(|(a, b)| a - b).collect();
        assert!(norm2(&diff) < 1e-8 * norm2(&d));
    }

    #[test]
    fn unbounded_box_reduces_to_linear_solve() {
        let (s, op) = setup(6);
        let sol = solve_vi_pdas(&s, &op, &BoxConstraints::unbounded(s.n_vertex_dofs()), &SolverConfig::default()).unwrap();
        let lin = solve_linear(&op.matrix, &op.rhs, s.dirichlet_flags(), &SolverConfig::default()).unwrap();
        assert!(sol.active_lower.is_empty() && sol.active_upper.is_empty());
        for (a, b) in sol.y.iter().zip(&lin) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(sol.multiplier.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn binding_upper_bound() {
        let (s, op) = setup(8);
        let nv = s.n_vertex_dofs();
        let bounds = BoxConstraints {
            lower: vec![-UNBOUNDED; nv],
            upper: vec![0.5; nv],
        };
        let sol = solve_vi_pdas(&s, &op, &bounds, &SolverConfig::default()).unwrap();
        assert!(!sol.active_upper.is_empty());
        assert!(sol.stationary);
        assert!(sol.residuals.max() < 1e-10, "{:?}", sol.residuals);
        for &i in &sol.active_upper {
            assert!(sol.multiplier[i] <= 0.0);
        }
        assert!(sol.to_csv().starts_with("dof_index,y,multiplier,active\n"));
    }

    #[test]
    fn infeasible_box_is_rejected() {
        let (s, op) = setup(2);
        let nv = s.n_vertex_dofs();
        let bounds = BoxConstraints {
            lower: vec![1.0; nv],
            upper: vec![2.0; nv],
        };
        assert!(matches!(
            solve_vi_pdas(&s, &op, &bounds, &SolverConfig::default()),
            Err(Error::InfeasibleBox(_))
        ));
    }
}
