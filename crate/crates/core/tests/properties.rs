//! Randomized invariants of the mesh, space, operators and solvers.

use std::sync::Arc;

use c0wg::assembly::{assemble_aw, assemble_c0ip, assemble_tracking, OcpOperator};
use c0wg::krylov::{pcg_with, CgConfig};
use c0wg::expr::Expr;
use c0wg::measure::TrackingMeasure;
use c0wg::mesh::Mesh;
use c0wg::space::{P2Space, UNBOUNDED};
use c0wg::sparse::norm_inf;
use c0wg::vi::{solve_linear, solve_vi_pdas, BoxConstraints, SolverConfig};
use c0wg::weak_ops::WeakOperators;
use proptest::prelude::*;

fn space(n: usize) -> P2Space {
    P2Space::new(Arc::new(Mesh::uniform_square([-0.5, -0.5], 1.0, n).unwrap()))
}

fn quadratic(c: [f64; 6]) -> impl Fn([f64; 2]) -> f64 {
    move |[x, y]| c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
}

fn coeffs() -> impl Strategy<Value = [f64; 6]> {
    prop::array::uniform6(-3.0..3.0f64)
}

fn random_vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn euler_formula_and_counts(n in 1usize..24) {
        let m = Mesh::uniform_square([0.0, 0.0], 1.0, n).unwrap();
        let (v, e, f) = (m.n_vertices() as i64, m.n_edges() as i64, m.n_elements() as i64);
        prop_assert_eq!(v - e + f, 1);
        prop_assert_eq!(e as usize, 3 * n * n + 2 * n);
        prop_assert!(m.min_angle_degrees() >= 44.0);
    }

    #[test]
    fn interior_normals_point_from_minus_to_plus(n in 1usize..12) {
        let m = Mesh::uniform_square([-1.0, 2.0], 3.0, n).unwrap();
        for e in m.interior_edges() {
            let (minus, plus) = m.edge_elements(e);
            let plus = plus.unwrap();
            let g = m.edge_geometry(e);
            let cm = m.element_geometry(minus).barycenter;
            let cp = m.element_geometry(plus).barycenter;
            let d = [cp[0] - cm[0], cp[1] - cm[1]];
            prop_assert!(d[0] * g.normal[0] + d[1] * g.normal[1] > 0.0);
        }
    }

    #[test]
    fn partition_of_unity_and_quadratic_reproduction(
        c in coeffs(),
        pts in prop::collection::vec((-0.5..0.5f64, -0.5..0.5f64), 20),
    ) {
        let s = space(5);
        let one = s.interpolate(|_| 1.0);
        let f = quadratic(c);
        let q = s.interpolate(&f);
        for (x, y) in pts {
            prop_assert!((one.eval([x, y]).unwrap() - 1.0).abs() <= 1e-12);
            let want = f([x, y]);
            prop_assert!((q.eval([x, y]).unwrap() - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn weak_laplacian_is_exact_on_quadratics(c in coeffs(), n in 1usize..8) {
        let s = space(n);
        let ops = WeakOperators::new(&s);
        let v = s.interpolate(quadratic(c));
        let want = 2.0 * (c[3] + c[5]);
        for d in ops.laplacian.apply(v.coeffs()) {
            prop_assert!((d - want).abs() <= 1e-12 * (1.0 + want.abs()) * 10.0, "{} vs {}", d, want);
        }
        // zero-jump collapse: s(v, v) = 0 and norm_w = ||Δv||
        let stab = ops.stabilizer(s.mesh(), v.coeffs());
        let scale = c.iter().map(|x| x * x).sum::<f64>();
        prop_assert!(stab.abs() <= 1e-20 * (1.0 + scale));
        let nw = ops.norm_w(s.mesh(), v.coeffs());
        prop_assert!((nw - want.abs()).abs() <= 1e-10 * (1.0 + want.abs()));
    }

    #[test]
    fn norm_w_is_homogeneous(v in random_vector(81), c in prop::sample::select(vec![-2.0, 0.5, 3.0])) {
        // n = 4 has 81 DOFs
        let s = space(4);
        let ops = WeakOperators::new(&s);
        let cv: Vec<f64> = v.iter().map(|x| c * x).collect();
        let (a, b) = (ops.norm_w(s.mesh(), &cv), ops.norm_w(s.mesh(), &v));
        prop_assert!((a - c.abs() * b).abs() <= 1e-12 * a.max(1e-300));
    }

    #[test]
    fn aw_quadratic_form_is_norm_w_squared(v in random_vector(81)) {
        let s = space(4);
        let ops = WeakOperators::new(&s);
        let a = assemble_aw(&s, &ops);
        prop_assert_eq!(a.symmetry_defect(), 0.0);
        let q = a.quad_form(&v);
        let nw = ops.norm_w(s.mesh(), &v);
        prop_assert!(q >= -1e-10 * a.frobenius_norm());
        prop_assert!((q - nw * nw).abs() <= 1e-10 * q.max(1.0));
    }

    #[test]
    fn weak_minus_strong_laplacian_is_edge_jump_average(v in random_vector(81), p in random_vector(32)) {
        // ∫ (Δ_w v - Δv) p = Σ_e ∫_e [[∇v]]·n_e {p}
        let s = space(4);
        let ops = WeakOperators::new(&s);
        let m = s.mesh();
        let f = s.function(v.clone()).unwrap();
        let lw = ops.laplacian.apply(&v);
        let lhs: f64 = (0..m.n_elements())
            .map(|t| {
                let h = f.hessian_in(t);
                m.element_geometry(t).area * (lw[t] - (h[0] + h[2])) * p[t]
            })
            .sum();
        let rhs: f64 = ops
            .jumps
            .edges()
            .iter()
            .map(|&e| {
                let (a, b) = m.edge_elements(e);
                let avg = 0.5 * (p[a] + p[b.unwrap()]);
                let j = ops.jumps.jump(e, &v).unwrap();
                let w = ops.jumps.weights();
                m.edge_geometry(e).length * (w[0] * j[0] + w[1] * j[1]) * avg
            })
            .sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()) * 100.0, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn c0ip_is_consistent_on_quadratics(c in coeffs(), rho in 1.0..200.0f64) {
        let s = space(3);
        let ops = WeakOperators::new(&s);
        let a = assemble_c0ip(&s, &ops, rho);
        let v = s.interpolate(quadratic(c));
        let d2 = (2.0 * c[3]).powi(2) + 2.0 * c[4].powi(2) + (2.0 * c[5]).powi(2);
        let q = a.quad_form(v.coeffs());
        // round-off scales with the penalty entries, not with the energy
        let vv: f64 = v.coeffs().iter().map(|x| x * x).sum();
        let tol = 1e-10 * (1.0 + d2) + 1e-13 * a.frobenius_norm() * vv;
        prop_assert!((q - d2).abs() <= tol, "{} vs {}", q, d2);
    }

    #[test]
    fn norm_ratio_stays_in_level_independent_band(seed in any::<u64>()) {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for n in [2usize, 4, 8, 16] {
            let s = space(n);
            let ops = WeakOperators::new(&s);
            let mut v: Vec<f64> = (0..s.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
            for i in 0..v.len() {
                if s.is_dirichlet(i) {
                    v[i] = 0.0;
                }
            }
            let r = ops.norm_w(s.mesh(), &v) / ops.norm_h(&s, &v);
            prop_assert!((0.1..=10.0).contains(&r), "n={} ratio {}", n, r);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn pdas_solution_is_feasible_and_complementary(
        level in -0.2..0.3f64,
        tilt in -1.0..1.0f64,
        load in 1.0..50.0f64,
    ) {
        let s = space(6);
        let ops = WeakOperators::new(&s);
        let a = assemble_aw(&s, &ops);
        let mut measure = TrackingMeasure::lebesgue(1.0, 0.0);
        measure.regions[0].target = Expr::parse(&format!("{load} * cos(pi * x) * cos(pi * y)")).unwrap();
        let tracking = assemble_tracking(&s, &measure).unwrap();
        let op = OcpOperator::new(1e-3, &a, &tracking).unwrap();
        let nv = s.n_vertex_dofs();
        let upper: Vec<f64> = (0..nv)
            .map(|i| {
                let p = s.node(i);
                if s.is_dirichlet(i) { UNBOUNDED } else { level + tilt * p[0] }
            })
            .collect();
        let bounds = BoxConstraints { lower: vec![-UNBOUNDED; nv], upper };
        let sol = solve_vi_pdas(&s, &op, &bounds, &SolverConfig::default()).unwrap();
        prop_assert!(sol.stationary);
        let r = &sol.residuals;
        prop_assert!(r.feasibility <= 1e-10 && r.complementarity <= 1e-10 && r.sign <= 1e-10, "{:?}", r);
        prop_assert!(r.stationarity <= 1e-8, "{:?}", r);
        prop_assert!(sol.iterations <= 100);
    }

    #[test]
    fn unbounded_pdas_is_the_linear_solve(load in 1.0..50.0f64) {
        let s = space(5);
        let ops = WeakOperators::new(&s);
        let a = assemble_aw(&s, &ops);
        let mut measure = TrackingMeasure::lebesgue(1.0, 0.0);
        measure.regions[0].target = Expr::parse(&format!("{load} * (x + 0.25)")).unwrap();
        let tracking = assemble_tracking(&s, &measure).unwrap();
        let op = OcpOperator::new(1.0, &a, &tracking).unwrap();
        let sol = solve_vi_pdas(&s, &op, &BoxConstraints::unbounded(s.n_vertex_dofs()), &SolverConfig::default()).unwrap();
        let lin = solve_linear(&op.matrix, &op.rhs, s.dirichlet_flags(), &SolverConfig::default()).unwrap();
        let d: Vec<f64> = sol.y.iter().zip(&lin).map(|(a, b)| a - b).collect();
        prop_assert!(norm_inf(&d) <= 1e-8 * norm_inf(&lin));
    }

    #[test]
    fn lanczos_ritz_values_stay_inside_spectrum(diag in prop::collection::vec(0.5..100.0f64, 10..60)) {
        let n = diag.len();
        let a = c0wg::sparse::SparseOperator::from_triplets(
            n,
            &diag.iter().enumerate().map(|(i, &d)| (i, i, d)).collect::<Vec<_>>(),
        );
        let b = vec![1.0; n];
        let res = pcg_with(&a, &b, None, &CgConfig { tol: 0.0, max_iter: n }, |_| false).unwrap();
        let (lo, hi) = res.lanczos.extreme_eigenvalues();
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = diag.iter().cloned().fold(0.0, f64::max);
        prop_assert!(lo >= min * (1.0 - 1e-9) && hi <= max * (1.0 + 1e-9), "{} {} vs {} {}", lo, hi, min, max);
    }
}
