//! Preconditioned conjugate gradients with the Lanczos tridiagonal recovered
//! from the CG coefficients, and extreme-eigenvalue estimation.

use faer::{Mat, Side};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, SparseOperator};

/// Symmetric positive definite preconditioner `z = B r`.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CgConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Symmetric tridiagonal matrix (diagonal and first off-diagonal).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    // Number of eigenvalues strictly below x (Sturm count via LDLᵀ pivots).
    fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..self.diag.len() {
            let o2 = if i == 0 { 0.0 } else { self.off[i - 1] * self.off[i - 1] };
            d = self.diag[i] - x - if i == 0 { 0.0 } else { o2 / d };
            if d == 0.0 {
                d = -f64::EPSILON * (x.abs() + 1.0);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The k-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let n = self.diag.len();
        assert!(k < n);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || (hi - lo) <= 1e-15 * hi.abs().max(lo.abs()) {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn extreme_eigenvalues(&self) -> (f64, f64) {
        (self.eigenvalue(0), self.eigenvalue(self.len() - 1))
    }
}

#[derive(Clone, Debug)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖b - Ax‖ / ‖b‖` at exit.
    pub relative_residual: f64,
    pub lanczos: Tridiagonal,
}

/// Lanczos matrix bookkeeping from CG step sizes `α_k` and `β_k`.
struct LanczosBuilder {
    t: Tridiagonal,
    prev: Option<(f64, f64)>,
}

impl LanczosBuilder {
    fn new() -> Self {
        Self {
            t: Tridiagonal::default(),
            prev: None,
        }
    }

    fn push(&mut self, alpha: f64, beta: f64) {
        let d = 1.0 / alpha + self.prev.map_or(0.0, |(a, b)| b / a);
        if let Some((a, b)) = self.prev {
            self.t.off.push(b.sqrt() / a);
        }
        self.t.diag.push(d);
        self.prev = Some((alpha, beta));
    }
}

/// Conjugate gradients for `A x = b` preconditioned by `B`, from `x = 0`.
/// `on_step` sees the Lanczos matrix after every iteration and may stop the
/// iteration early by returning `true`.
pub fn pcg_with(
    a: &SparseOperator,
    b: &[f64],
    precond: Option<&dyn Preconditioner>,
    cfg: &CgConfig,
    mut on_step: impl FnMut(&Tridiagonal) -> bool,
) -> Result<CgResult> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let identity = IdentityPreconditioner;
    let precond = precond.unwrap_or(&identity);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = norm2(b);
    let mut lanczos = LanczosBuilder::new();
    if bnorm == 0.0 {
        return Ok(CgResult {
            x,
            iterations: 0,
            converged: true,
            relative_residual: 0.0,
            lanczos: lanczos.t,
        });
    }
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = 1.0;
    for it in 0..cfg.max_iter {
        a.apply(&p, &mut ap);
        let curv = dot(&p, &ap);
        if !(curv > 0.0) {
            return Err(Error::CgBreakdown {
                iteration: it,
                curvature: curv,
            });
        }
        let alpha = rz / curv;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm2(&r) / bnorm;
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        lanczos.push(alpha, beta);
        let stop = on_step(&lanczos.t);
        if rel <= cfg.tol || stop || rz_new <= 0.0 {
            return Ok(CgResult {
                x,
                iterations: it + 1,
                converged: rel <= cfg.tol,
                relative_residual: rel,
                lanczos: lanczos.t,
            });
        }
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(CgResult {
        x,
        iterations: cfg.max_iter,
        converged: false,
        relative_residual: rel,
        lanczos: lanczos.t,
    })
}

pub fn pcg(a: &SparseOperator, b: &[f64], precond: Option<&dyn Preconditioner>, cfg: &CgConfig) -> Result<CgResult> {
    pcg_with(a, b, precond, cfg, |_| false)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigenMethod {
    Dense,
    Lanczos,
}

#[derive(Clone, Copy, Debug)]
pub struct ConditionConfig {
    /// Largest dimension handled by the dense eigensolver.
    pub dense_limit: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Relative change of the extreme Ritz values regarded as stagnation.
    pub stagnation_tol: f64,
    pub stagnation_window: usize,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        Self {
            dense_limit: 3000,
            seed: 7,
            max_iter: 50_000,
            stagnation_tol: 1e-6,
            stagnation_window: 10,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConditionEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    pub method: EigenMethod,
    /// False if the Ritz values had not stagnated when the iteration stopped.
    pub accurate: bool,
    pub iterations: usize,
}

impl ConditionEstimate {
    fn new(lambda_min: f64, lambda_max: f64, method: EigenMethod, accurate: bool, iterations: usize) -> Self {
        Self {
            lambda_min,
            lambda_max,
            kappa: lambda_max / lambda_min,
            method,
            accurate,
            iterations,
        }
    }
}

/// Extreme eigenvalues of `A` or `BA` (an SPD operator on its full index
/// range; pass the free-DOF block).
pub fn estimate_condition(
    a: &SparseOperator,
    precond: Option<&dyn Preconditioner>,
    cfg: &ConditionConfig,
) -> Result<ConditionEstimate> {
    if a.dim() <= cfg.dense_limit {
        dense_condition(a, precond)
    } else {
        lanczos_condition(a, precond, cfg)
    }
}

/// Dense path: eigenvalues of `A`, or of `Lᵀ B L` with `A = L Lᵀ`, which is
/// similar to `BA`.
pub fn dense_condition(a: &SparseOperator, precond: Option<&dyn Preconditioner>) -> Result<ConditionEstimate> {
    let n = a.dim();
    if n == 0 {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    let dense = a.to_dense();
    let am = Mat::<f64>::from_fn(n, n, |i, j| dense[i * n + j]);
    let m = match precond {
        None => am,
        Some(b) => {
            let llt = am.llt(Side::Lower).map_err(|_| Error::NotPositiveDefinite { pivot: 0 })?;
            let l = llt.L();
            let mut bl = Mat::<f64>::zeros(n, n);
            let mut col = vec![0.0; n];
            let mut out = vec![0.0; n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = l[(i, j)];
                }
                b.apply(&col, &mut out);
                for i in 0..n {
                    bl[(i, j)] = out[i];
                }
            }
            let mut m = l.transpose() * &bl;
            // symmetrize away roundoff
            for i in 0..n {
                for j in 0..i {
                    let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            m
        }
    };
    let ev = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    Ok(ConditionEstimate::new(ev[0], ev[n - 1], EigenMethod::Dense, true, 0))
}

/// Lanczos path: extreme Ritz values from a PCG run on a seeded random
/// right-hand side, stopped once both have stagnated.
pub fn lanczos_condition(
    a: &SparseOperator,
    precond: Option<&dyn Preconditioner>,
    cfg: &ConditionConfig,
) -> Result<ConditionEstimate> {
    let n = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut history: Vec<(f64, f64)> = Vec::new();
    let mut stagnated = false;
    let cg_cfg = CgConfig {
        tol: 0.0,
        max_iter: cfg.max_iter.min(n.max(1) * 4),
    };
    let res = pcg_with(a, &b, precond, &cg_cfg, |t| {
        history.push(t.extreme_eigenvalues());
        let k = history.len();
        let w = cfg.stagnation_window;
        if k > w {
            let (lo0, hi0) = history[k - 1 - w];
            let (lo1, hi1) = history[k - 1];
            if (lo1 - lo0).abs() <= cfg.stagnation_tol * lo1.abs()
                && (hi1 - hi0).abs() <= cfg.stagnation_tol * hi1.abs()
            {
                stagnated = true;
            }
        }
        stagnated
    })?;
    let (lo, hi) = *history.last().ok_or(Error::DimensionMismatch { expected: 1, got: 0 })?;
    let exhausted = res.lanczos.len() >= n;
    Ok(ConditionEstimate::new(
        lo,
        hi,
        EigenMethod::Lanczos,
        stagnated || exhausted,
        res.iterations,
    ))
}
