#![allow(dead_code)]

use dpg_nondiv::polyspace::{dim, Poly2, SymMatPoly};
use dpg_nondiv::quadrature::{default_triangle_rule, integrate_triangle};
use rand::Rng;

pub fn random_poly(rng: &mut impl Rng, degree: usize) -> Poly2 {
    Poly2::from_coeffs(degree, (0..dim(degree)).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

pub fn random_sym(rng: &mut impl Rng, degree: usize) -> SymMatPoly {
    SymMatPoly::new(
        random_poly(rng, degree),
        random_poly(rng, degree),
        random_poly(rng, degree),
    )
}

pub fn min_angle(v: &[[f64; 2]; 3]) -> f64 {
    (0..3)
        .map(|i| {
            let (a, b, c) = (v[i], v[(i + 1) % 3], v[(i + 2) % 3]);
            let (u, w) = ([b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]]);
            let cos = (u[0] * w[0] + u[1] * w[1]) / ((u[0] * u[0] + u[1] * u[1]) * (w[0] * w[0] + w[1] * w[1])).sqrt();
            cos.clamp(-1.0, 1.0).acos()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Counter-clockwise triangle in `[-1, 1]²` with all angles above 25°.
pub fn random_triangle(rng: &mut impl Rng) -> [[f64; 2]; 3] {
    loop {
        let mut v = [[0.0; 2]; 3];
        for p in &mut v {
            *p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        }
        let area: f64 = 0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]));
        if area < 0.0 {
            v.swap(1, 2);
        }
        if area.abs() > 0.05 && min_angle(&v) > 25f64.to_radians() {
            return v;
        }
    }
}

pub fn vertex_dofs(u: &Poly2, v: &[[f64; 2]; 3]) -> [f64; 9] {
    let (ux, uy) = (u.dx(), u.dy());
    let mut d = [0.0; 9];
    for k in 0..3 {
        let [x, y] = v[k];
        d[3 * k..3 * k + 3].copy_from_slice(&[u.eval(x, y), ux.eval(x, y), uy.eval(x, y)]);
    }
    d
}

/// `⟨div Div Q, u⟩_T − ⟨Q, D²u⟩_T` and the sum of the magnitudes of both terms.
pub fn volume_side(u: &Poly2, q: &SymMatPoly, v: &[[f64; 2]; 3]) -> (f64, f64) {
    let dd = q.divdiv();
    let h = u.hessian();
    let rule = default_triangle_rule();
    let a = integrate_triangle(|p| dd.eval(p[0], p[1]) * u.eval(p[0], p[1]), v, rule).unwrap();
    let b = integrate_triangle(
        |p| {
            let (qm, hm) = (q.eval(p), h.eval(p));
            qm.component_mul(&hm).sum()
        },
        v,
        rule,
    )
    .unwrap();
    (a - b, a.abs() + b.abs())
}
