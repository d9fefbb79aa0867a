//! Conforming triangulations of polygons with newest-vertex bisection.
//!
//! Local edge `k` of a triangle joins `vertices[k]` and `vertices[(k + 1) % 3]`.
//! Children produced by bisection are stored with their refinement edge at
//! local index 0, so the newest vertex is always `vertices[2]`.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::quadrature::signed_area;

/// Relative tolerance for deciding that two boundary edges are collinear.
pub const COLLINEAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryClass {
    Interior,
    /// Boundary vertex with interior angle strictly below π.
    Corner,
    /// Boundary vertex on a straight boundary segment.
    Straight,
}

impl BoundaryClass {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryClass::Interior => "interior",
            BoundaryClass::Corner => "corner",
            BoundaryClass::Straight => "straight",
        }
    }

    pub fn is_boundary(self) -> bool {
        self != BoundaryClass::Interior
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: usize,
    pub coords: [f64; 2],
    pub boundary_class: BoundaryClass,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triangle {
    pub id: usize,
    pub vertices: [usize; 3],
    pub refinement_edge: u8,
    pub generation: u32,
}

impl Triangle {
    pub fn local_edge(&self, k: usize) -> [usize; 2] {
        [self.vertices[k % 3], self.vertices[(k + 1) % 3]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Sorted vertex ids.
    pub endpoints: [usize; 2],
    pub triangles: Vec<usize>,
    pub boundary: bool,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Vertex>,
    pub triangles: Vec<Triangle>,
    pub edges: Vec<Edge>,
    edge_index: HashMap<[usize; 2], usize>,
    tangents: Vec<Option<[f64; 2]>>,
    perimeter: f64,
}

fn edge_key(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Mesh {
    /// Build a mesh from coordinates and vertex triples. Triangles are
    /// reoriented counter-clockwise and their refinement edge is set to the
    /// longest edge (lowest local index on ties).
    pub fn from_triangles(coords: Vec<[f64; 2]>, tris: Vec<[usize; 3]>) -> Result<Self> {
        let triangles = tris
            .into_iter()
            .enumerate()
            .map(|(id, mut v)| {
                for &k in &v {
                    if k >= coords.len() {
                        return Err(Error::Invariant(format!("triangle {id} references vertex {k}")));
                    }
                }
                let area = signed_area(&[coords[v[0]], coords[v[1]], coords[v[2]]]);
                if area == 0.0 {
                    return Err(Error::DegenerateTriangle);
                }
                if area < 0.0 {
                    v.swap(1, 2);
                }
                let mut refinement_edge = 0;
                let mut longest = 0.0;
                for k in 0..3 {
                    let l = dist(coords[v[k]], coords[v[(k + 1) % 3]]);
                    if l > longest * (1.0 + 1e-12) {
                        longest = l;
                        refinement_edge = k as u8;
                    }
                }
                Ok(Triangle {
                    id,
                    vertices: v,
                    refinement_edge,
                    generation: 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut mesh = Self::assemble(coords, triangles, 0.0);
        mesh.perimeter = mesh.boundary_length();
        Ok(mesh)
    }

    fn assemble(coords: Vec<[f64; 2]>, triangles: Vec<Triangle>, perimeter: f64) -> Self {
        let mut edges: Vec<Edge> = Vec::new();
        let mut edge_index = HashMap::new();
        for t in &triangles {
            for k in 0..3 {
                let [a, b] = t.local_edge(k);
                let key = edge_key(a, b);
                let idx = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        endpoints: key,
                        triangles: Vec::with_capacity(2),
                        boundary: false,
                    });
                    edges.len() - 1
                });
                edges[idx].triangles.push(t.id);
            }
        }
        for e in &mut edges {
            e.boundary = e.triangles.len() == 1;
        }

        // classify boundary vertices from the directions of their boundary edges
        let mut boundary_dirs: Vec<Vec<[f64; 2]>> = vec![Vec::new(); coords.len()];
        for e in edges.iter().filter(|e| e.boundary) {
            let [a, b] = e.endpoints;
            let d = [coords[b][0] - coords[a][0], coords[b][1] - coords[a][1]];
            boundary_dirs[a].push(d);
            boundary_dirs[b].push([-d[0], -d[1]]);
        }
        let mut tangents = vec![None; coords.len()];
        let vertices = coords
            .into_iter()
            .enumerate()
            .map(|(id, c)| {
                let dirs = &boundary_dirs[id];
                let boundary_class = match dirs.len() {
                    0 => BoundaryClass::Interior,
                    2 => {
                        let (d1, d2) = (dirs[0], dirs[1]);
                        let l1 = (d1[0] * d1[0] + d1[1] * d1[1]).sqrt();
                        let l2 = (d2[0] * d2[0] + d2[1] * d2[1]).sqrt();
                        let cross = d1[0] * d2[1] - d1[1] * d2[0];
                        let dot = d1[0] * d2[0] + d1[1] * d2[1];
                        // the two directions point away from the vertex: straight iff opposite
                        if cross.abs() <= COLLINEAR_TOL * l1 * l2 && dot < 0.0 {
                            tangents[id] = Some([d2[0] / l2, d2[1] / l2]);
                            BoundaryClass::Straight
                        } else {
                            BoundaryClass::Corner
                        }
                    }
                    // non-manifold boundary vertex: treat as a corner (all constraints)
                    _ => BoundaryClass::Corner,
                };
                Vertex {
                    id,
                    coords: c,
                    boundary_class,
                }
            })
            .collect();

        Self {
            vertices,
            triangles,
            edges,
            edge_index,
            tangents,
            perimeter,
        }
    }

    /// `(−1,1)²` split into 2×2 unit squares, each cut by both diagonals.
    pub fn initial_square_mesh() -> Self {
        let mut coords = Vec::with_capacity(13);
        for j in 0..3 {
            for i in 0..3 {
                coords.push([i as f64 - 1.0, j as f64 - 1.0]);
            }
        }
        let grid = |i: usize, j: usize| j * 3 + i;
        let mut tris = Vec::with_capacity(16);
        for sj in 0..2 {
            for si in 0..2 {
                let c = coords.len();
                coords.push([si as f64 - 0.5, sj as f64 - 0.5]);
                let (p00, p10, p11, p01) = (grid(si, sj), grid(si + 1, sj), grid(si + 1, sj + 1), grid(si, sj + 1));
                tris.push([p00, p10, c]);
                tris.push([p10, p11, c]);
                tris.push([p11, p01, c]);
                tris.push([p01, p00, c]);
            }
        }
        Self::from_triangles(coords, tris).expect("valid initial mesh")
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn coords(&self, v: usize) -> [f64; 2] {
        self.vertices[v].coords
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let v = self.triangles[t].vertices;
        [self.coords(v[0]), self.coords(v[1]), self.coords(v[2])]
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.triangle_coords(t))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    /// Longest edge of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let c = self.triangle_coords(t);
        (0..3).map(|k| dist(c[k], c[(k + 1) % 3])).fold(0.0, f64::max)
    }

    pub fn h_max(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.diameter(t)).fold(0.0, f64::max)
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let c = self.triangle_coords(t);
        [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0]
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&edge_key(a, b)).copied()
    }

    /// Unit tangent of the boundary at a straight boundary vertex.
    pub fn boundary_tangent(&self, v: usize) -> Option<[f64; 2]> {
        self.tangents[v]
    }

    pub fn count_class(&self, class: BoundaryClass) -> usize {
        self.vertices.iter().filter(|v| v.boundary_class == class).count()
    }

    pub fn boundary_length(&self) -> f64 {
        self.edges
            .iter()
            .filter(|e| e.boundary)
            .map(|e| dist(self.coords(e.endpoints[0]), self.coords(e.endpoints[1])))
            .sum()
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.n_triangles() {
            let c = self.triangle_coords(t);
            for k in 0..3 {
                let p = c[k];
                let a = [c[(k + 1) % 3][0] - p[0], c[(k + 1) % 3][1] - p[1]];
                let b = [c[(k + 2) % 3][0] - p[0], c[(k + 2) % 3][1] - p[1]];
                let cos = (a[0] * b[0] + a[1] * b[1]) / (dist(a, [0.0, 0.0]) * dist(b, [0.0, 0.0]));
                min = min.min(cos.clamp(-1.0, 1.0).acos());
            }
        }
        min
    }

    /// Edge-incidence audit: orientation, edge multiplicity, Euler
    /// characteristic of a simply connected polygon and preserved perimeter
    /// (a hanging node shows up as extra boundary length).
    pub fn check_conformity(&self) -> std::result::Result<(), String> {
        for t in &self.triangles {
            if self.area(t.id) <= 0.0 {
                return Err(format!("triangle {} is not counter-clockwise", t.id));
            }
        }
        if let Some(e) = self.edges.iter().find(|e| e.triangles.len() > 2) {
            return Err(format!(
                "edge {:?} shared by {} triangles",
                e.endpoints,
                e.triangles.len()
            ));
        }
        let euler = self.n_vertices() as i64 - self.edges.len() as i64 + self.n_triangles() as i64;
        if euler != 1 {
            return Err(format!("Euler characteristic {euler} != 1"));
        }
        let bl = self.boundary_length();
        if (bl - self.perimeter).abs() > 1e-10 * self.perimeter {
            return Err(format!(
                "boundary length {bl} differs from perimeter {}",
                self.perimeter
            ));
        }
        Ok(())
    }

    /// Newest-vertex bisection. All three edges of every marked triangle
    /// are bisected; the closure then bisects refinement edges until the
    /// mesh is conforming.
    pub fn refine_nvb(&self, marked: &[usize]) -> Result<Mesh> {
        if let Some(&bad) = marked.iter().find(|&&t| t >= self.n_triangles()) {
            return Err(Error::UnknownTriangle(bad));
        }
        if marked.is_empty() {
            return Ok(self.clone());
        }
        let ref_edge = |t: &Triangle| {
            let [a, b] = t.local_edge(t.refinement_edge as usize);
            edge_key(a, b)
        };

        let mut marked_edges: HashSet<[usize; 2]> = HashSet::new();
        for &t in marked {
            let tri = &self.triangles[t];
            for k in 0..3 {
                let [a, b] = tri.local_edge(k);
                marked_edges.insert(edge_key(a, b));
            }
        }
        loop {
            let mut changed = false;
            for t in &self.triangles {
                let r = ref_edge(t);
                if marked_edges.contains(&r) {
                    continue;
                }
                let any = (0..3).any(|k| {
                    let [a, b] = t.local_edge(k);
                    marked_edges.contains(&edge_key(a, b))
                });
                if any {
                    marked_edges.insert(r);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut coords: Vec<[f64; 2]> = self.vertices.iter().map(|v| v.coords).collect();
        let mut midpoint: HashMap<[usize; 2], usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let [a, b] = t.local_edge(k);
                let key = edge_key(a, b);
                if marked_edges.contains(&key) && !midpoint.contains_key(&key) {
                    let (pa, pb) = (coords[a], coords[b]);
                    coords.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                    midpoint.insert(key, coords.len() - 1);
                }
            }
        }

        let mut out: Vec<Triangle> = Vec::with_capacity(self.n_triangles() * 2);
        for t in &self.triangles {
            let r = t.refinement_edge as usize;
            let v = [t.vertices[r], t.vertices[(r + 1) % 3], t.vertices[(r + 2) % 3]];
            split(v, t.generation, &midpoint, &mut out);
        }
        for (id, t) in out.iter_mut().enumerate() {
            t.id = id;
        }
        Ok(Self::assemble(coords, out, self.perimeter))
    }

    /// Every triangle is split into four descendants.
    pub fn uniform_refine(&self) -> Mesh {
        let all: Vec<usize> = (0..self.n_triangles()).collect();
        self.refine_nvb(&all).expect("all ids are valid")
    }

    /// `v x y class` lines followed by `t i j k refedge` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(
                s,
                "v {:.17e} {:.17e} {}",
                v.coords[0],
                v.coords[1],
                v.boundary_class.as_str()
            );
        }
        for t in &self.triangles {
            let [i, j, k] = t.vertices;
            let _ = writeln!(s, "t {i} {j} {k} {}", t.refinement_edge);
        }
        s
    }
}

/// Bisect `v = [a, b, c]` (refinement edge `ab`) recursively along marked edges.
fn split(v: [usize; 3], generation: u32, midpoint: &HashMap<[usize; 2], usize>, out: &mut Vec<Triangle>) {
    let [a, b, c] = v;
    match midpoint.get(&edge_key(a, b)) {
        Some(&m) => {
            split([c, a, m], generation + 1, midpoint, out);
            split([b, c, m], generation + 1, midpoint, out);
        }
        None => out.push(Triangle {
            id: 0,
            vertices: v,
            refinement_edge: 0,
            generation,
        }),
    }
}
