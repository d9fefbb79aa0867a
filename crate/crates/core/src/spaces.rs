//! Discrete trial and test spaces.
//!
//! * Field variables `u` and `M` are element-local: `u` is piecewise
//!   constant (or affine for the augmented space), `M` is a piecewise
//!   constant symmetric matrix with components `(M11, M12, M22)`.
//! * The trace variable lives on vertex data `(v, ∂x v, ∂y v)`. On an edge
//!   the value trace is the cubic Hermite interpolant of endpoint values and
//!   tangential derivatives, the normal-derivative trace is linear. Only
//!   these edge traces are ever used.
//! * The broken test space pairs `P^p` scalars with `P⁴` symmetric matrices.

use nalgebra::{DMatrix, Matrix3};

use crate::error::{Error, Result};
use crate::mesh::{BoundaryClass, Mesh};
use crate::polyspace::{dim, monomial_exponents, monomial_index};
use crate::quadrature::signed_area;

/// Polynomial degree of the matrix test block.
pub const MATRIX_TEST_DEGREE: usize = 4;
/// Number of monomials of degree ≤ 4.
pub const N_MONO4: usize = dim(MATRIX_TEST_DEGREE);
/// Dimension of the symmetric `P⁴` matrix test space.
pub const N_MATRIX_TEST: usize = 3 * N_MONO4;
/// Local trace degrees of freedom per element.
pub const N_TRACE_LOCAL: usize = 9;

/// Weight of each symmetric component in the Frobenius product.
pub const COMPONENT_WEIGHT: [f64; 3] = [1.0, 2.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrialSpace {
    /// `P⁰ × P⁰_sym × traces`
    Standard,
    /// `P¹ × P⁰_sym × traces`
    Augmented,
}

impl TrialSpace {
    /// Degree of the scalar field `u`.
    pub fn u_degree(self) -> usize {
        match self {
            TrialSpace::Standard => 0,
            TrialSpace::Augmented => 1,
        }
    }

    pub fn u_dim(self) -> usize {
        dim(self.u_degree())
    }

    /// Field DOFs per element (`u` plus three `M` components).
    pub fn field_dim(self) -> usize {
        self.u_dim() + 3
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrialSpace::Standard => "std",
            TrialSpace::Augmented => "augmented",
        }
    }
}

/// Geometry of one triangle plus the scaled local frame
/// `ξ = (x − centroid) / diameter` in which all element bases live.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub vertices: [[f64; 2]; 3],
    pub area: f64,
    pub diameter: f64,
    pub centroid: [f64; 2],
}

impl ElementGeometry {
    pub fn new(vertices: [[f64; 2]; 3]) -> Result<Self> {
        let area = signed_area(&vertices);
        if !(area > 0.0) {
            return Err(Error::DegenerateTriangle);
        }
        let diameter = (0..3)
            .map(|k| {
                let (a, b) = (vertices[k], vertices[(k + 1) % 3]);
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
            })
            .fold(0.0, f64::max);
        let centroid = [
            (vertices[0][0] + vertices[1][0] + vertices[2][0]) / 3.0,
            (vertices[0][1] + vertices[1][1] + vertices[2][1]) / 3.0,
        ];
        Ok(Self {
            vertices,
            area,
            diameter,
            centroid,
        })
    }

    pub fn from_mesh(mesh: &Mesh, t: usize) -> Result<Self> {
        Self::new(mesh.triangle_coords(t))
    }

    pub fn to_local(&self, p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] - self.centroid[0]) / self.diameter,
            (p[1] - self.centroid[1]) / self.diameter,
        ]
    }

    /// Edge `k` (from vertex `k` to `k+1`): start, end, length, unit tangent
    /// and outward unit normal.
    pub fn edge(&self, k: usize) -> EdgeFrame {
        let a = self.vertices[k % 3];
        let b = self.vertices[(k + 1) % 3];
        let d = [b[0] - a[0], b[1] - a[1]];
        let length = (d[0] * d[0] + d[1] * d[1]).sqrt();
        let t = [d[0] / length, d[1] / length];
        EdgeFrame {
            start: a,
            end: b,
            length,
            tangent: t,
            normal: [t[1], -t[0]],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EdgeFrame {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub length: f64,
    pub tangent: [f64; 2],
    pub normal: [f64; 2],
}

impl EdgeFrame {
    pub fn point(&self, sigma: f64) -> [f64; 2] {
        [
            self.start[0] + sigma * (self.end[0] - self.start[0]),
            self.start[1] + sigma * (self.end[1] - self.start[1]),
        ]
    }
}

/// All monomials `ξ^i η^j` of degree ≤ `degree` at a local point, graded order.
pub fn monomials(degree: usize, p: [f64; 2], out: &mut [f64]) {
    let n = degree + 1;
    let mut xp = [1.0; 16];
    let mut yp = [1.0; 16];
    for k in 1..n {
        xp[k] = xp[k - 1] * p[0];
        yp[k] = yp[k - 1] * p[1];
    }
    let mut idx = 0;
    for k in 0..n {
        for j in 0..=k {
            out[idx] = xp[k - j] * yp[j];
            idx += 1;
        }
    }
}

/// Local-coordinate gradients of all monomials of degree ≤ `degree`.
pub fn monomial_gradients(degree: usize, p: [f64; 2], dx: &mut [f64], dy: &mut [f64]) {
    let n = degree + 1;
    let mut xp = [1.0; 16];
    let mut yp = [1.0; 16];
    for k in 1..n {
        xp[k] = xp[k - 1] * p[0];
        yp[k] = yp[k - 1] * p[1];
    }
    let mut idx = 0;
    for k in 0..n {
        for j in 0..=k {
            let i = k - j;
            dx[idx] = if i > 0 { i as f64 * xp[i - 1] * yp[j] } else { 0.0 };
            dy[idx] = if j > 0 { j as f64 * xp[i] * yp[j - 1] } else { 0.0 };
            idx += 1;
        }
    }
}

/// Raw matrix basis function `ξ^i η^j E_c` is indexed `c * 15 + m`.
fn raw_index(component: usize, mono: usize) -> usize {
    component * N_MONO4 + mono
}

/// Local `div Div` of a raw matrix monomial: `(coefficient, target monomial)`.
fn raw_local_divdiv(r: usize) -> Option<(f64, usize)> {
    let (c, m) = (r / N_MONO4, r % N_MONO4);
    let (i, j) = monomial_exponents(m);
    match c {
        0 if i >= 2 => Some(((i * (i - 1)) as f64, monomial_index(i - 2, j))),
        1 if i >= 1 && j >= 1 => Some(((2 * i * j) as f64, monomial_index(i - 1, j - 1))),
        2 if j >= 2 => Some(((j * (j - 1)) as f64, monomial_index(i, j - 2))),
        _ => None,
    }
}

/// Local test basis of one element.
///
/// The matrix block is the monomial basis of `P⁴_sym` rearranged so that 39
/// members span `ker(div Div)` and the remaining 6 (`ξ^(a+2) η^b E11`,
/// `a + b ≤ 2`) are scaled to have `div Div` equal to `ξ^a η^b` in physical
/// coordinates. With this split the V-norm Gram stays uniformly conditioned
/// as the mesh is refined.
#[derive(Debug, Clone)]
pub struct TestBasis {
    pub geometry: ElementGeometry,
    pub scalar_degree: usize,
    /// Columns express the adapted matrix basis in the raw monomial basis.
    pub transform: DMatrix<f64>,
    /// Physical `div Div` of each adapted basis member as `P²` coefficients.
    pub divdiv: DMatrix<f64>,
}

impl TestBasis {
    pub fn new(geometry: ElementGeometry, scalar_degree: usize) -> Self {
        let h2 = geometry.diameter * geometry.diameter;
        let n = N_MATRIX_TEST;
        let mut transform = DMatrix::zeros(n, n);
        let mut divdiv = DMatrix::zeros(dim(2), n);
        for r in 0..n {
            transform[(r, r)] = 1.0;
            let Some((coef, target)) = raw_local_divdiv(r) else {
                continue;
            };
            let (a, b) = monomial_exponents(target);
            let canonical = raw_index(0, monomial_index(a + 2, b));
            let canonical_coef = ((a + 2) * (a + 1)) as f64;
            if r == canonical {
                transform[(r, r)] = h2 / canonical_coef;
                divdiv[(target, r)] = 1.0;
            } else {
                transform[(canonical, r)] = -coef / canonical_coef;
            }
        }
        Self {
            geometry,
            scalar_degree,
            transform,
            divdiv,
        }
    }

    pub fn scalar_dim(&self) -> usize {
        dim(self.scalar_degree)
    }

    pub fn matrix_dim(&self) -> usize {
        N_MATRIX_TEST
    }

    pub fn dim(&self) -> usize {
        self.scalar_dim() + N_MATRIX_TEST
    }

    /// Raw monomial matrix basis `ξ^i η^j E_c` at a physical point, with
    /// physical `Div`.
    pub fn raw_matrix_values(&self, p: [f64; 2]) -> ([[f64; 3]; N_MATRIX_TEST], [[f64; 2]; N_MATRIX_TEST]) {
        let local = self.geometry.to_local(p);
        let inv_h = 1.0 / self.geometry.diameter;
        let mut mono = [0.0; N_MONO4];
        let mut gx = [0.0; N_MONO4];
        let mut gy = [0.0; N_MONO4];
        monomials(MATRIX_TEST_DEGREE, local, &mut mono);
        monomial_gradients(MATRIX_TEST_DEGREE, local, &mut gx, &mut gy);
        let mut raw_q = [[0.0; 3]; N_MATRIX_TEST];
        let mut raw_div = [[0.0; 2]; N_MATRIX_TEST];
        for m in 0..N_MONO4 {
            let (dx, dy) = (gx[m] * inv_h, gy[m] * inv_h);
            raw_q[raw_index(0, m)] = [mono[m], 0.0, 0.0];
            raw_div[raw_index(0, m)] = [dx, 0.0];
            raw_q[raw_index(1, m)] = [0.0, mono[m], 0.0];
            raw_div[raw_index(1, m)] = [dy, dx];
            raw_q[raw_index(2, m)] = [0.0, 0.0, mono[m]];
            raw_div[raw_index(2, m)] = [0.0, dy];
        }
        (raw_q, raw_div)
    }

    /// Values of the adapted matrix basis at a physical point: each entry is
    /// `[Q11, Q12, Q22]`, together with the physical `Div Q`.
    pub fn matrix_values(&self, p: [f64; 2]) -> (Vec<[f64; 3]>, Vec<[f64; 2]>) {
        let (raw_q, raw_div) = self.raw_matrix_values(p);
        let mut q = vec![[0.0; 3]; N_MATRIX_TEST];
        let mut div = vec![[0.0; 2]; N_MATRIX_TEST];
        for k in 0..N_MATRIX_TEST {
            let col = self.transform.column(k);
            for (r, &t) in col.iter().enumerate() {
                if t != 0.0 {
                    for c in 0..3 {
                        q[k][c] += t * raw_q[r][c];
                    }
                    div[k][0] += t * raw_div[r][0];
                    div[k][1] += t * raw_div[r][1];
                }
            }
        }
        (q, div)
    }

    /// Scalar test functions (local monomials of degree ≤ p) at a physical point.
    pub fn scalar_values(&self, p: [f64; 2], out: &mut [f64]) {
        monomials(self.scalar_degree, self.geometry.to_local(p), out);
    }
}

/// Cubic Hermite shape functions on `[0, 1]` and their derivatives.
pub fn hermite(sigma: f64) -> ([f64; 4], [f64; 4]) {
    let s = sigma;
    let s2 = s * s;
    let s3 = s2 * s;
    (
        [
            1.0 - 3.0 * s2 + 2.0 * s3,
            s - 2.0 * s2 + s3,
            3.0 * s2 - 2.0 * s3,
            s3 - s2,
        ],
        [
            -6.0 * s + 6.0 * s2,
            1.0 - 4.0 * s + 3.0 * s2,
            6.0 * s - 6.0 * s2,
            3.0 * s2 - 2.0 * s,
        ],
    )
}

/// Edge traces `(value, ∂n, ∂t)` of the six vertex DOFs of an edge,
/// ordered `[start: v, ∂x, ∂y, end: v, ∂x, ∂y]`, at parameter `sigma ∈ [0,1]`.
pub fn edge_trace_basis(edge: &EdgeFrame, sigma: f64) -> [[f64; 3]; 6] {
    let (h, dh) = hermite(sigma);
    let l = edge.length;
    let [tx, ty] = edge.tangent;
    let [nx, ny] = edge.normal;
    [
        [h[0], 0.0, dh[0] / l],
        [h[1] * l * tx, (1.0 - sigma) * nx, dh[1] * tx],
        [h[1] * l * ty, (1.0 - sigma) * ny, dh[1] * ty],
        [h[2], 0.0, dh[2] / l],
        [h[3] * l * tx, sigma * nx, dh[3] * tx],
        [h[3] * l * ty, sigma * ny, dh[3] * ty],
    ]
}

/// Local positions (in the 9-vector) of the DOFs of edge `k`.
pub fn edge_dof_positions(k: usize) -> [usize; 6] {
    let a = 3 * (k % 3);
    let b = 3 * ((k + 1) % 3);
    [a, a + 1, a + 2, b, b + 1, b + 2]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeTrace {
    pub value: f64,
    pub normal_derivative: f64,
    pub tangential_derivative: f64,
}

/// Evaluate the trace given by 9 local DOFs on edge `k` of a triangle at
/// arclength `s` measured from the edge's start vertex.
pub fn trace_edge_values(local_dofs: &[f64; 9], vertices: &[[f64; 2]; 3], k: usize, s: f64) -> Result<EdgeTrace> {
    let geom = ElementGeometry::new(*vertices)?;
    let edge = geom.edge(k);
    let tol = 1e-12 * edge.length;
    if !(s >= -tol && s <= edge.length + tol) {
        return Err(Error::ParameterOutsideEdge { s, len: edge.length });
    }
    let sigma = (s / edge.length).clamp(0.0, 1.0);
    let basis = edge_trace_basis(&edge, sigma);
    let pos = edge_dof_positions(k);
    let mut out = [0.0; 3];
    for (b, &p) in basis.iter().zip(&pos) {
        for c in 0..3 {
            out[c] += b[c] * local_dofs[p];
        }
    }
    Ok(EdgeTrace {
        value: out[0],
        normal_derivative: out[1],
        tangential_derivative: out[2],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofSlot {
    Free(usize),
    Fixed,
}

/// Trace DOFs of one vertex. Coordinates relate to Cartesian data
/// `(v, ∂x v, ∂y v)` through `frame`; at straight boundary vertices the
/// coordinates are `(v, ∂t v, ∂n v)`.
#[derive(Debug, Clone)]
pub struct VertexTrace {
    pub class: BoundaryClass,
    pub frame: Matrix3<f64>,
    pub slots: [DofSlot; 3],
}

impl VertexTrace {
    pub fn to_cartesian(&self, coords: [f64; 3]) -> [f64; 3] {
        let c = self.frame * nalgebra::Vector3::from(coords);
        [c[0], c[1], c[2]]
    }

    /// Frames are orthogonal, so the inverse is the transpose.
    pub fn from_cartesian(&self, cart: [f64; 3]) -> [f64; 3] {
        let c = self.frame.transpose() * nalgebra::Vector3::from(cart);
        [c[0], c[1], c[2]]
    }
}

#[derive(Debug, Clone)]
pub struct TraceSpace {
    pub vertices: Vec<VertexTrace>,
    n_free: usize,
}

impl TraceSpace {
    /// All vertex DOFs free, Cartesian frames.
    pub fn unconstrained(mesh: &Mesh) -> Self {
        let vertices = mesh
            .vertices
            .iter()
            .enumerate()
            .map(|(v, vert)| VertexTrace {
                class: vert.boundary_class,
                frame: Matrix3::identity(),
                slots: [DofSlot::Free(3 * v), DofSlot::Free(3 * v + 1), DofSlot::Free(3 * v + 2)],
            })
            .collect();
        Self {
            vertices,
            n_free: 3 * mesh.n_vertices(),
        }
    }

    /// Impose `v(z) = 0` on boundary vertices, `t·∇v(z) = 0` on straight
    /// ones and `∇v(z) = 0` on corners. Straight vertices keep the normal
    /// derivative as their only free coordinate.
    pub fn apply_boundary_conditions(mut self, mesh: &Mesh) -> Result<Self> {
        let mut next = 0;
        for (v, vt) in self.vertices.iter_mut().enumerate() {
            vt.class = mesh.vertices[v].boundary_class;
            match vt.class {
                BoundaryClass::Interior => {
                    vt.frame = Matrix3::identity();
                    vt.slots = [DofSlot::Free(next), DofSlot::Free(next + 1), DofSlot::Free(next + 2)];
                    next += 3;
                }
                BoundaryClass::Straight => {
                    let [tx, ty] = mesh.boundary_tangent(v).ok_or(Error::MissingClassification(v))?;
                    let (nx, ny) = (ty, -tx);
                    vt.frame = Matrix3::new(1.0, 0.0, 0.0, 0.0, tx, nx, 0.0, ty, ny);
                    vt.slots = [DofSlot::Fixed, DofSlot::Fixed, DofSlot::Free(next)];
                    next += 1;
                }
                BoundaryClass::Corner => {
                    vt.frame = Matrix3::identity();
                    vt.slots = [DofSlot::Fixed; 3];
                }
            }
        }
        self.n_free = next;
        Ok(self)
    }

    /// Constrained trace space of a mesh.
    pub fn new(mesh: &Mesh) -> Result<Self> {
        Self::unconstrained(mesh).apply_boundary_conditions(mesh)
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    /// Cartesian vertex data from free coordinates plus fixed coordinates.
    pub fn expand(&self, free: &[f64], fixed: &[[f64; 3]]) -> Vec<[f64; 3]> {
        self.vertices
            .iter()
            .enumerate()
            .map(|(v, vt)| {
                let mut c = [0.0; 3];
                for k in 0..3 {
                    c[k] = match vt.slots[k] {
                        DofSlot::Free(i) => free[i],
                        DofSlot::Fixed => fixed[v][k],
                    };
                }
                vt.to_cartesian(c)
            })
            .collect()
    }
}

/// Vertex data `(u(z), ∂x u(z), ∂y u(z))` for every mesh vertex.
pub fn interpolate_trace(
    u: impl Fn([f64; 2]) -> f64,
    grad: impl Fn([f64; 2]) -> [f64; 2],
    mesh: &Mesh,
) -> Vec<[f64; 3]> {
    mesh.vertices
        .iter()
        .map(|v| {
            let g = grad(v.coords);
            [u(v.coords), g[0], g[1]]
        })
        .collect()
}

/// The 9 local trace DOFs of triangle `t` from global Cartesian vertex data.
pub fn local_trace_dofs(mesh: &Mesh, t: usize, vertex_data: &[[f64; 3]]) -> [f64; 9] {
    let mut out = [0.0; 9];
    for (k, &v) in mesh.triangles[t].vertices.iter().enumerate() {
        out[3 * k..3 * k + 3].copy_from_slice(&vertex_data[v]);
    }
    out
}
