use dpg_nondiv::forms::{cordes_epsilon, mesh_sample_points};
use dpg_nondiv::mesh::Mesh;
use dpg_nondiv::problems::{problem_61, problem_62, problem_63, problem_64, problem_by_name, ring_profile, sign};
use dpg_nondiv::quadrature::default_triangle_rule;

#[test]
fn manufactured_data_is_consistent() {
    // ∫ (A:D²u − f)² vanishes for the problems with a known solution
    let mesh = Mesh::initial_square_mesh().uniform_refine();
    let rule = default_triangle_rule();
    for problem in [problem_61(), problem_62(), problem_64()] {
        let exact = problem.exact.as_ref().unwrap();
        let mut misfit = 0.0;
        let mut norm = 0.0;
        for t in 0..mesh.n_triangles() {
            for (p, w) in rule.mapped(&mesh.triangle_coords(t)).unwrap() {
                let r = problem.coefficient.eval(p).component_mul(&(exact.hessian)(p)).sum() - (problem.f)(p);
                misfit += w * r * r;
                norm += w * (problem.f)(p).powi(2);
            }
        }
        assert!(misfit <= 1e-24 * norm.max(1.0), "{}: {misfit}", problem.name);
    }
}

#[test]
fn exact_solutions_satisfy_boundary_conditions() {
    let p61 = problem_61();
    let u = &p61.exact.as_ref().unwrap().u;
    for s in [-1.0, -0.3, 0.0, 0.7, 1.0] {
        for p in [[1.0, s], [-1.0, s], [s, 1.0], [s, -1.0]] {
            assert!(u(p).abs() < 1e-15);
        }
    }
    let p62 = problem_62();
    let e = p62.exact.as_ref().unwrap();
    assert_eq!((e.u)([0.0, 0.0]), 0.0);
    assert!(((e.u)([1.0, 1.0]) - 2f64.powf(5.0 / 6.0)).abs() < 1e-15);
    let g = (e.grad)([0.6, 0.8]);
    assert!((g[0] - 5.0 / 3.0 * 0.6).abs() < 1e-14 && (g[1] - 5.0 / 3.0 * 0.8).abs() < 1e-14);
}

#[test]
fn all_benchmarks_are_elliptic_and_cordes() {
    let samples = mesh_sample_points(&Mesh::initial_square_mesh().uniform_refine().uniform_refine()).unwrap();
    for name in ["61", "62", "63", "64"] {
        let p = problem_by_name(name).unwrap();
        let r = cordes_epsilon(&p.coefficient, &samples).unwrap();
        assert!(r.ellipticity_ok && r.epsilon > 0.0, "{name}");
    }
    assert!(problem_by_name("65").is_none());
}

#[test]
fn coefficient_values() {
    let a = problem_61().coefficient.eval([0.5, 0.5]);
    assert_eq!((a[(0, 0)], a[(0, 1)], a[(1, 1)]), (2.0, 1.0, 2.0));
    let a = problem_61().coefficient.eval([-0.5, 0.5]);
    assert_eq!(a[(0, 1)], -1.0);
    assert_eq!(sign(0.0), 0.0);
    assert_eq!(ring_profile(0.2), 1.0);
    assert_eq!(ring_profile(1.0 / 3.0), -1.0);
    assert_eq!(ring_profile(2.0 / 3.0), 0.0);
    let c = problem_63().coefficient;
    assert_eq!(c.eval([0.1, 0.1])[(0, 1)], 1.0);
    assert_eq!(c.eval([0.3, -0.3])[(0, 1)], 1.0);
    assert_eq!(c.eval([0.8, 0.8])[(0, 1)], 0.0);
    assert!(problem_63().exact.is_none());
}
