use dpg_nondiv::adapt::{adaptive_solve, doerfler_mark, estimate, lift_boundary_data, AdaptiveConfig};
use dpg_nondiv::forms::LocalSystem;
use dpg_nondiv::mesh::Mesh;
use dpg_nondiv::problems::{problem_61, problem_62};
use dpg_nondiv::solver::{element_residual, solve, Method, Solution, SolveConfig};
use dpg_nondiv::spaces::{hermite, local_trace_dofs, ElementGeometry, TraceSpace, TrialSpace};
use nalgebra::DVector;
use proptest::prelude::*;

#[test]
fn theta_one_reproduces_uniform_refinement() {
    let problem = problem_61();
    let cfg = SolveConfig::new(Method::Dpg, TrialSpace::Standard);
    let adaptive = AdaptiveConfig {
        theta: 1.0,
        max_levels: Some(2),
        ..AdaptiveConfig::default()
    };
    let mut sizes = Vec::new();
    let last = adaptive_solve(&problem, Mesh::initial_square_mesh(), &cfg, &adaptive, |lr| {
        sizes.push(lr.mesh.n_triangles());
        if lr.level < 2 {
            assert_eq!(lr.marked.len(), lr.mesh.n_triangles());
        }
        Ok(())
    })
    .unwrap();
    assert_eq!(sizes, vec![16, 64, 256]);
    let uniform = Mesh::initial_square_mesh().uniform_refine().uniform_refine();
    assert_eq!(last.to_text(), uniform.to_text());
}

#[test]
fn budget_stops_before_oversized_mesh() {
    let problem = problem_61();
    let cfg = SolveConfig::new(Method::DpgLsq, TrialSpace::Standard);
    let adaptive = AdaptiveConfig {
        theta: 0.5,
        max_elements: 200,
        ..AdaptiveConfig::default()
    };
    let mut levels = Vec::new();
    let last = adaptive_solve(&problem, Mesh::initial_square_mesh(), &cfg, &adaptive, |lr| {
        levels.push((lr.mesh.n_triangles(), lr.marked.len()));
        Ok(())
    })
    .unwrap();
    assert!(last.n_triangles() <= 200);
    assert_eq!(levels.last().unwrap().1, 0);
    assert!(levels.windows(2).all(|w| w[1].0 > w[0].0));
}

#[test]
fn invalid_theta_is_rejected() {
    let cfg = SolveConfig::new(Method::Dpg, TrialSpace::Standard);
    for theta in [0.0, -0.1, 1.5, f64::NAN] {
        let adaptive = AdaptiveConfig {
            theta,
            ..AdaptiveConfig::default()
        };
        assert!(adaptive_solve(&problem_61(), Mesh::initial_square_mesh(), &cfg, &adaptive, |_| Ok(())).is_err());
    }
}

fn local_vector(sol: &Solution, mesh: &Mesh, t: usize) -> DVector<f64> {
    let mut x: Vec<f64> = sol.u_coeffs(t).to_vec();
    x.extend_from_slice(&sol.m(t));
    x.extend_from_slice(&local_trace_dofs(mesh, t, &sol.vertex_traces));
    DVector::from_vec(x)
}

#[test]
fn full_residual_is_bounded_by_coupling_residual_plus_data() {
    // ‖F − B u_h‖ ≤ ‖C u_h‖ + ‖f − A:M_h‖ for any discrete u_h
    for problem in [problem_61(), problem_62()] {
        let mut mesh = Mesh::initial_square_mesh();
        for _ in 0..3 {
            for method in [Method::Dpg, Method::DpgLsq] {
                let sol = solve(&problem, &mesh, &SolveConfig::new(method, TrialSpace::Standard)).unwrap();
                let data = estimate(&sol, &problem, &mesh).unwrap().eta_data();
                let (mut full, mut coupling) = (0.0, 0.0);
                for t in 0..mesh.n_triangles() {
                    let geom = ElementGeometry::from_mesh(&mesh, t).unwrap();
                    let f = problem.f.clone();
                    let sys = LocalSystem::new(geom, TrialSpace::Standard, 0, &problem.coefficient, &|p| f(p)).unwrap();
                    let x = local_vector(&sol, &mesh, t);
                    full += element_residual(&sys, Method::Dpg, &x).unwrap().1;
                    coupling += element_residual(&sys, Method::DpgLsq, &x).unwrap().1;
                }
                let stored: f64 = sol.residual_sq.iter().sum();
                let own = if method == Method::Dpg { full } else { coupling };
                assert!((stored - own).abs() <= 1e-10 * own.max(1e-300) + 1e-20);
                assert!(
                    full.sqrt() <= coupling.sqrt() + data + 1e-10,
                    "{} {} {}",
                    full.sqrt(),
                    coupling.sqrt(),
                    data
                );
            }
            mesh = mesh.uniform_refine();
        }
    }
}

#[test]
fn lift_is_zero_for_homogeneous_data_and_hermite_exact_on_the_boundary() {
    let mesh = Mesh::initial_square_mesh();
    let traces = TraceSpace::new(&mesh).unwrap();
    let p61 = problem_61();
    let lift = lift_boundary_data(p61.exact.as_ref().unwrap(), &mesh, &traces).unwrap();
    for (v, vt) in traces.vertices.iter().enumerate() {
        if vt.class.is_boundary() {
            // u and its tangential derivative vanish on the boundary of (−1, 1)²
            assert!(lift[v][0].abs() < 1e-15 && lift[v][1].abs() < 1e-15);
        }
    }

    let p62 = problem_62();
    let exact = p62.exact.as_ref().unwrap();
    let lift = lift_boundary_data(exact, &mesh, &traces).unwrap();
    let vertex = |x: [f64; 2]| (0..mesh.n_vertices()).find(|&v| mesh.coords(v) == x).unwrap();
    let (a, b) = (vertex([1.0, 0.0]), vertex([1.0, 1.0]));
    let ca = traces.vertices[a].to_cartesian(lift[a]);
    let cb = traces.vertices[b].to_cartesian(lift[b]);
    // cubic Hermite along x = 1 from the lifted data reproduces the endpoints
    let value = |sigma: f64| {
        let (h, _) = hermite(sigma);
        h[0] * ca[0] + h[1] * ca[2] + h[2] * cb[0] + h[3] * cb[2]
    };
    assert!((value(0.0) - 1.0).abs() < 1e-14);
    assert!((value(1.0) - 2f64.powf(5.0 / 6.0)).abs() < 1e-14);
    let mid = value(0.5);
    let exact_mid = (exact.u)([1.0, 0.5]);
    assert!((mid - exact_mid).abs() < 1e-2, "{mid} {exact_mid}");
}

#[test]
fn marking_examples() {
    assert_eq!(doerfler_mark(&[1.0; 16], 0.5).len(), 8);
    assert_eq!(doerfler_mark(&[0.1, 5.0, 0.2], 0.5), vec![1]);
    assert_eq!(doerfler_mark(&[0.1, 5.0, 0.2], 1.0), vec![0, 1, 2]);
    assert!(Mesh::initial_square_mesh().refine_nvb(&[]).unwrap().n_triangles() == 16);
}

proptest! {
    #[test]
    fn marked_set_is_minimal_and_sufficient(
        local in proptest::collection::vec(0.0f64..10.0, 1..60),
        theta in 0.05f64..0.99,
    ) {
        let marked = doerfler_mark(&local, theta);
        let total: f64 = local.iter().sum();
        let sum: f64 = marked.iter().map(|&i| local[i]).sum();
        prop_assert!(sum >= theta * total - 1e-12 * total);
        prop_assert!(marked.windows(2).all(|w| w[0] < w[1]));
        if let Some(&smallest) = marked.iter().min_by(|&&a, &&b| local[a].total_cmp(&local[b])) {
            // dropping the weakest marked element loses the bulk property
            prop_assert!(sum - local[smallest] < theta * total + 1e-12 * total);
        }
        let mut sorted = local.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut acc = 0.0;
        let mut k = 0;
        while acc < theta * total {
            acc += sorted[k];
            k += 1;
        }
        prop_assert_eq!(marked.len(), k);
    }
}
