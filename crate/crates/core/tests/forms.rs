use dpg_nondiv::forms::{
    cordes_epsilon, mesh_sample_points, project_to_matrix_basis, trace_pairing_element, verify_fortin_moments,
    CoefficientField, LocalSystem,
};
use dpg_nondiv::mesh::Mesh;
use dpg_nondiv::polyspace::{dim, Poly2, SymMatPoly};
use dpg_nondiv::problems::{problem_61, problem_63};
use dpg_nondiv::quadrature::{default_triangle_rule, gauss_unit, integrate_triangle};
use dpg_nondiv::spaces::{
    interpolate_trace, local_trace_dofs, monomials, ElementGeometry, TraceSpace, TrialSpace, N_MATRIX_TEST,
};
use nalgebra::{DVector, Matrix2};
use proptest::prelude::*;

mod common;
use common::{random_poly, random_sym, random_triangle, vertex_dofs, volume_side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Edge integral with the exact traces of `u`, independent of the rHCT trace.
fn boundary_side_exact(u: &Poly2, q: &SymMatPoly, v: &[[f64; 2]; 3]) -> f64 {
    let (nodes, weights) = gauss_unit(8);
    let div = q.div();
    let (ux, uy) = (u.dx(), u.dy());
    let mut acc = 0.0;
    for k in 0..3 {
        let (a, b) = (v[k], v[(k + 1) % 3]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let n = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
        for (&s, &w) in nodes.iter().zip(&weights) {
            let (x, y) = (a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]));
            let qn = q.eval([x, y]) * nalgebra::Vector2::new(n[0], n[1]);
            let n_div = n[0] * div[0].eval(x, y) + n[1] * div[1].eval(x, y);
            let grad = [ux.eval(x, y), uy.eval(x, y)];
            // (n·Qn) ∂n u + (t·Qn) ∂t u = Qn · ∇u
            acc += w * len * (n_div * u.eval(x, y) - (qn[0] * grad[0] + qn[1] * grad[1]));
        }
    }
    acc
}

#[test]
fn integration_by_parts_identity_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..100 {
        let v = random_triangle(&mut rng);
        let q = random_sym(&mut rng, 4);
        let u3 = random_poly(&mut rng, 3);
        let (vol, scale) = volume_side(&u3, &q, &v);
        let bnd = boundary_side_exact(&u3, &q, &v);
        assert!((vol - bnd).abs() <= 1e-12 * scale.max(1.0), "pair {i}: {vol} vs {bnd}");

        // the rHCT trace is exact for quadratics
        let u2 = random_poly(&mut rng, 2);
        let (vol, scale) = volume_side(&u2, &q, &v);
        let bnd = trace_pairing_element(&vertex_dofs(&u2, &v), &q, &v).unwrap();
        assert!((vol - bnd).abs() <= 1e-12 * scale.max(1.0), "pair {i}: {vol} vs {bnd}");
    }
}

#[test]
fn global_pairing_annihilates_conforming_field() {
    let b = Poly2::from_terms(&[(0, 0, 1.0), (2, 0, -1.0), (0, 2, -1.0), (2, 2, 1.0)]);
    let q = SymMatPoly::scalar_identity(&b);
    for mesh in [
        Mesh::initial_square_mesh(),
        Mesh::initial_square_mesh().refine_nvb(&[0, 5, 9]).unwrap(),
    ] {
        let traces = TraceSpace::new(&mesh).unwrap();
        let fixed = vec![[0.0; 3]; mesh.n_vertices()];
        let mut scale = 0.0f64;
        let mut worst = 0.0f64;
        for j in 0..traces.n_free() {
            let mut free = vec![0.0; traces.n_free()];
            free[j] = 1.0;
            let data = traces.expand(&free, &fixed);
            let mut total = 0.0;
            for t in 0..mesh.n_triangles() {
                let val =
                    trace_pairing_element(&local_trace_dofs(&mesh, t, &data), &q, &mesh.triangle_coords(t)).unwrap();
                scale = scale.max(val.abs());
                total += val;
            }
            worst = worst.max(total.abs());
        }
        assert!(scale > 1e-3);
        assert!(worst <= 1e-11 * scale.max(1.0), "{worst}");
    }
}

#[test]
fn matrix_rows_annihilate_the_exact_triple() {
    // quadratic u, constant A, f = A:D²u: every test function sees zero residual
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = Matrix2::new(2.0, 0.5, 0.5, 1.5);
    for _ in 0..10 {
        let v = random_triangle(&mut rng);
        let u = random_poly(&mut rng, 2);
        let h = u.hessian().eval([0.0, 0.0]);
        let f = a.component_mul(&h).sum();
        let geom = ElementGeometry::new(v).unwrap();
        let sys = LocalSystem::new(
            geom.clone(),
            TrialSpace::Standard,
            2,
            &CoefficientField::constant(a),
            &move |_| f,
        )
        .unwrap();
        let sdim = sys.scalar_dim();
        let mut x = DVector::zeros(sys.trial_dim());
        x[1] = h[(0, 0)];
        x[2] = h[(0, 1)];
        x[3] = h[(1, 1)];
        for (j, d) in vertex_dofs(&u, &v).iter().enumerate() {
            x[4 + j] = *d;
        }
        let mut r = &sys.b * &x - &sys.load;
        // u-term by quadrature against the physical div Div of each test
        let rule = default_triangle_rule();
        for k in 0..N_MATRIX_TEST {
            let ut = integrate_triangle(
                |p| {
                    let mut m = [0.0; 6];
                    monomials(2, geom.to_local(p), &mut m);
                    let dd: f64 = (0..6).map(|s| sys.basis.divdiv[(s, k)] * m[s]).sum();
                    u.eval(p[0], p[1]) * dd
                },
                &v,
                rule,
            )
            .unwrap();
            r[sdim + k] -= ut;
        }
        assert!(r.amax() < 1e-11, "{}", r.amax());
    }
}

#[test]
fn coupling_rows_do_not_depend_on_the_coefficient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in [TrialSpace::Standard, TrialSpace::Augmented] {
        let v = random_triangle(&mut rng);
        let geom = ElementGeometry::new(v).unwrap();
        let a = CoefficientField::constant(Matrix2::new(2.0, -1.0, -1.0, 2.0));
        let sys = LocalSystem::new(geom.clone(), trial, 1, &a, &|p| p[0]).unwrap();
        let c = sys.c();
        assert_eq!(c.nrows(), N_MATRIX_TEST);
        assert_eq!(c, sys.b.rows(sys.scalar_dim(), N_MATRIX_TEST));
        let c0 = LocalSystem::c_without_coefficient(geom, trial).unwrap();
        assert!((c - c0).amax() < 1e-14);
    }
}

#[test]
fn gram_is_spd_with_level_independent_conditioning() {
    let mut mesh = Mesh::initial_square_mesh();
    let a = CoefficientField::constant(Matrix2::identity());
    let mut conds = Vec::new();
    for _ in 0..5 {
        let mut worst = 0.0f64;
        for t in [0, mesh.n_triangles() / 2, mesh.n_triangles() - 1] {
            let sys = LocalSystem::new(
                ElementGeometry::from_mesh(&mesh, t).unwrap(),
                TrialSpace::Standard,
                0,
                &a,
                &|_| 1.0,
            )
            .unwrap();
            let ev = sys.gram().symmetric_eigenvalues();
            assert!(ev.min() > 0.0);
            worst = worst.max(ev.max() / ev.min());
        }
        conds.push(worst);
        mesh = mesh.uniform_refine();
    }
    let (lo, hi) = conds
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &c| (l.min(c), h.max(c)));
    assert!(hi / lo <= 10.0, "{conds:?}");
}

#[test]
fn projection_reproduces_p4_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v = random_triangle(&mut rng);
    let geom = ElementGeometry::new(v).unwrap();
    let sys = LocalSystem::new(
        geom,
        TrialSpace::Standard,
        0,
        &CoefficientField::constant(Matrix2::identity()),
        &|_| 0.0,
    )
    .unwrap();
    let q = random_sym(&mut rng, 4);
    let c = project_to_matrix_basis(&sys.basis, &q).unwrap();
    for (p, _) in default_triangle_rule().mapped(&v).unwrap() {
        let (vals, _) = sys.basis.matrix_values(p);
        let mut s = [0.0; 3];
        for k in 0..N_MATRIX_TEST {
            for i in 0..3 {
                s[i] += c[k] * vals[k][i];
            }
        }
        let qm = q.eval(p);
        assert!((s[0] - qm[(0, 0)]).abs() < 1e-10);
        assert!((s[1] - qm[(0, 1)]).abs() < 1e-10);
        assert!((s[2] - qm[(1, 1)]).abs() < 1e-10);
    }
}

#[test]
fn cordes_constants_of_the_benchmarks() {
    let samples = mesh_sample_points(&Mesh::initial_square_mesh().uniform_refine()).unwrap();
    let e61 = cordes_epsilon(&problem_61().coefficient, &samples).unwrap();
    assert!((e61.epsilon - 0.6).abs() < 1e-12);
    assert!((e61.lambda_min - 1.0).abs() < 1e-12 && (e61.lambda_max - 3.0).abs() < 1e-12);
    let e63 = cordes_epsilon(&problem_63().coefficient, &samples).unwrap();
    assert!((e63.epsilon - 0.6).abs() < 1e-12);
    let id = cordes_epsilon(&CoefficientField::constant(Matrix2::identity()), &samples).unwrap();
    assert_eq!(id.epsilon, 1.0);
}

#[test]
fn fortin_moments_on_random_sextics() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let v = random_triangle(&mut rng);
        for _ in 0..5 {
            let chk = verify_fortin_moments(&v, &random_sym(&mut rng, 6)).unwrap();
            assert!(chk.residuals.iter().all(|&r| r <= 1e-10), "{:?}", chk.residuals);
            assert!(chk.bound_ratio.is_finite() && chk.bound_ratio > 0.0);
            assert_eq!(chk.constraint_rank, 12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn divdiv_of_scalar_identity_is_laplacian(
        degree in 0usize..=6,
        coeffs in proptest::collection::vec(-2.0f64..2.0, dim(6)),
    ) {
        let v = Poly2::from_coeffs(degree, coeffs[..dim(degree)].to_vec());
        let dd = SymMatPoly::scalar_identity(&v).divdiv();
        prop_assert!(dd.max_coeff_diff(&v.laplacian()) < 1e-12);
    }

    #[test]
    fn cordes_is_scale_invariant(a11 in 0.5f64..4.0, a22 in 0.5f64..4.0, off in -0.4f64..0.4, scale in 0.01f64..100.0) {
        let off = off * (a11 * a22).sqrt();
        let a = Matrix2::new(a11, off, off, a22);
        let e1 = cordes_epsilon(&CoefficientField::constant(a), &[[0.0, 0.0]]).unwrap();
        let e2 = cordes_epsilon(&CoefficientField::constant(a * scale), &[[0.0, 0.0]]).unwrap();
        prop_assert!((e1.epsilon - e2.epsilon).abs() < 1e-12);
        prop_assert!(e1.epsilon > 0.0 && e1.epsilon <= 1.0);
    }
}

#[test]
fn interpolated_trace_matches_vertex_data() {
    let mesh = Mesh::initial_square_mesh();
    let data = interpolate_trace(|p| p[0] * p[1], |p| [p[1], p[0]], &mesh);
    for (v, d) in data.iter().enumerate() {
        let [x, y] = mesh.coords(v);
        assert_eq!(*d, [x * y, y, x]);
    }
}
