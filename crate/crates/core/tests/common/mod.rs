//! Problem setup and the projected-gradient oracle shared by test targets.
#![allow(dead_code)]

use std::sync::Arc;

use c0wg::assembly::{assemble_aw, assemble_tracking, OcpOperator};
use c0wg::measure::ProblemConfig;
use c0wg::mesh::Mesh;
use c0wg::space::{interpolate_p1_bounds, P2Space, UNBOUNDED};
use c0wg::sparse::{dot, norm2};
use c0wg::vi::{solve_linear, BoxConstraints, SolverConfig};
use c0wg::weak_ops::WeakOperators;

pub struct Ocp {
    pub space: P2Space,
    pub op: OcpOperator,
    pub bounds: BoxConstraints,
}

pub fn control_problem(n: usize) -> Ocp {
    let problem = ProblemConfig::default_problem();
    let mesh = Mesh::uniform_square([-4.0, -4.0], 8.0, n).unwrap();
    let space = P2Space::new(Arc::new(mesh));
    let ops = WeakOperators::new(&space);
    let a = assemble_aw(&space, &ops);
    let tracking = assemble_tracking(&space, &problem.measure).unwrap();
    let op = OcpOperator::new(problem.beta, &a, &tracking).unwrap();
    let upper = problem.upper.clone().unwrap();
    let (lower, upper) = interpolate_p1_bounds(space.mesh(), |_| -UNBOUNDED, |p| upper.eval(p)).unwrap();
    Ocp {
        space,
        op,
        bounds: BoxConstraints { lower, upper },
    }
}

/// Accelerated projected gradient in the Jacobi metric on the free DOFs,
/// with gradient restarts. Starts from the clipped unconstrained minimizer.
pub fn projected_gradient(p: &Ocp, iterations: usize) -> Vec<f64> {
    let free = p.space.free_dofs();
    let a = p.op.matrix.submatrix(&free);
    let b: Vec<f64> = free.iter().map(|&i| p.op.rhs[i]).collect();
    let nv = p.space.n_vertex_dofs();
    let (lo, hi): (Vec<f64>, Vec<f64>) = free
        .iter()
        .map(|&i| if i < nv { (p.bounds.lower[i], p.bounds.upper[i]) } else { (-UNBOUNDED, UNBOUNDED) })
        .unzip();
    let clip = |y: &mut [f64]| {
        for i in 0..y.len() {
            y[i] = y[i].clamp(lo[i], hi[i]);
        }
    };
    let d = a.diagonal();
    // largest eigenvalue of D^{-1} A by power iteration
    let mut v = vec![1.0; b.len()];
    let mut l = 0.0;
    for _ in 0..200 {
        let w: Vec<f64> = a.mul(&v).iter().zip(&d).map(|(x, d)| x / d).collect();
        l = norm2(&w) / norm2(&v);
        let s = norm2(&w);
        v = w.iter().map(|x| x / s).collect();
    }
    let step = 1.0 / (1.05 * l);
    let mut y = solve_linear(&a, &b, &vec![false; b.len()], &SolverConfig::default()).unwrap();
    clip(&mut y);
    let mut z = y.clone();
    let mut t = 1.0f64;
    for _ in 0..iterations {
        let g: Vec<f64> = a.mul(&z).iter().zip(&b).map(|(az, b)| az - b).collect();
        let mut next: Vec<f64> = z.iter().zip(&g).zip(&d).map(|((z, g), d)| z - step * g / d).collect();
        clip(&mut next);
        let diff: Vec<f64> = next.iter().zip(&y).map(|(a, b)| a - b).collect();
        let restart = dot(&g, &diff) > 0.0;
        let tn = if restart { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
        let mom = if restart { 0.0 } else { (t - 1.0) / tn };
        z = next.iter().zip(&diff).map(|(n, d)| n + mom * d).collect();
        y = next;
        t = tn;
    }
    let mut full = vec![0.0; p.space.n_dofs()];
    for (k, &i) in free.iter().enumerate() {
        full[i] = y[k];
    }
    full
}
