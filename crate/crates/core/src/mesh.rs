//! Conforming 2D triangle meshes: construction with derived edge topology
//! and boundary markers, element geometry relative to a unit-area
//! equilateral reference element, and shape statistics.

use std::collections::BTreeMap;

use crate::la::{self, cross, norm, sub, Mat2, Point};
use crate::{Error, Result};

/// An edge of the triangulation. Vertex indices are stored sorted; `left`
/// is always present, `right` only for interior edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub left: usize,
    pub right: Option<usize>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
}

/// Conforming triangulation of a polygonal domain. Immutable after
/// construction; mutation happens only by building a new mesh.
#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    tri_edges: Vec<[usize; 3]>,
    vertex_on_boundary: Vec<bool>,
    vertex_triangles: Vec<Vec<usize>>,
}

/// Affine geometry of one element: the map from the unit-area equilateral
/// reference triangle, side vectors and outward unit normals.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub area: f64,
    /// Jacobian F' of the affine map from the reference element;
    /// det F' = |K|.
    pub jacobian: Mat2,
    /// Side i runs from vertex i to vertex i+1 (mod 3).
    pub edge_vectors: [Point; 3],
    pub normals: [Point; 3],
}

/// Vertices of the unit-area equilateral reference triangle, centroid at
/// the origin, counter-clockwise.
pub fn reference_vertices() -> [Point; 3] {
    let a = 1.0 / 3.0_f64.sqrt().sqrt(); // 3^(-1/4), half the side length
    let h = 3.0_f64.sqrt().sqrt(); // 3^(1/4), the height
    [[-a, -h / 3.0], [a, -h / 3.0], [0.0, 2.0 * h / 3.0]]
}

// Inverse of [r1-r0 | r2-r0] for the reference vertices above (det = 2).
fn reference_inverse() -> Mat2 {
    let a = 1.0 / 3.0_f64.sqrt().sqrt();
    let h = 3.0_f64.sqrt().sqrt();
    Mat2::new(h / 2.0, -a / 2.0, 0.0, a)
}

impl TriMesh {
    /// Builds a conforming mesh from raw vertex and connectivity lists.
    /// Triangles are reoriented counter-clockwise; edges, adjacency and
    /// boundary markers are derived.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        let nv = vertices.len();
        let mut tris = triangles;
        let mut seen = std::collections::HashSet::new();
        for (k, t) in tris.iter_mut().enumerate() {
            for &v in t.iter() {
                if v >= nv {
                    return Err(Error::InvalidMesh(format!(
                        "triangle {k} references vertex {v} out of range ({nv} vertices)"
                    )));
                }
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidMesh(format!(
                    "triangle {k} has repeated vertices"
                )));
            }
            let c = cross(
                sub(vertices[t[1]], vertices[t[0]]),
                sub(vertices[t[2]], vertices[t[0]]),
            );
            if c == 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {k} has zero area")));
            }
            if c < 0.0 {
                t.swap(1, 2);
            }
            let mut key = *t;
            key.sort_unstable();
            if !seen.insert(key) {
                return Err(Error::InvalidMesh(format!("duplicate triangle {k}")));
            }
        }

        // edges in lexicographic order of their sorted vertex pair
        let mut incident: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (k, t) in tris.iter().enumerate() {
            for s in 0..3 {
                let (a, b) = (t[s], t[(s + 1) % 3]);
                let key = (a.min(b), a.max(b));
                incident.entry(key).or_default().push(k);
            }
        }
        let mut edges = Vec::with_capacity(incident.len());
        let mut edge_index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (key, ts) in &incident {
            if ts.len() > 2 {
                return Err(Error::InvalidMesh(format!(
                    "non-manifold edge ({}, {}) with {} incident triangles",
                    key.0,
                    key.1,
                    ts.len()
                )));
            }
            edge_index.insert(*key, edges.len());
            edges.push(Edge {
                vertices: [key.0, key.1],
                left: ts[0],
                right: ts.get(1).copied(),
            });
        }

        let tri_edges: Vec<[usize; 3]> = tris
            .iter()
            .map(|t| {
                let mut e = [0usize; 3];
                for s in 0..3 {
                    let (a, b) = (t[s], t[(s + 1) % 3]);
                    e[s] = edge_index[&(a.min(b), a.max(b))];
                }
                e
            })
            .collect();

        let mut vertex_on_boundary = vec![false; nv];
        for e in &edges {
            if e.is_boundary() {
                vertex_on_boundary[e.vertices[0]] = true;
                vertex_on_boundary[e.vertices[1]] = true;
            }
        }

        let mut vertex_triangles = vec![Vec::new(); nv];
        for (k, t) in tris.iter().enumerate() {
            for &v in t {
                vertex_triangles[v].push(k);
            }
        }

        Ok(Self {
            vertices,
            triangles: tris,
            edges,
            tri_edges,
            vertex_on_boundary,
            vertex_triangles,
        })
    }

    /// Uniform mesh of the unit square: nx x ny cells, each split into two
    /// right triangles along the same diagonal.
    pub fn uniform_grid(nx: usize, ny: usize) -> Self {
        assert!(nx >= 1 && ny >= 1);
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([i as f64 / nx as f64, j as f64 / ny as f64]);
            }
        }
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        Self::new(vertices, triangles).expect("uniform grid is valid")
    }

    /// Criss-cross mesh of the unit square: n x n cells, each split into
    /// four triangles through the cell centre (4 n^2 elements).
    pub fn criss_cross(n: usize) -> Self {
        assert!(n >= 1);
        let h = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1) + n * n);
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 * h, j as f64 * h]);
            }
        }
        let grid = |i: usize, j: usize| j * (n + 1) + i;
        let centre0 = (n + 1) * (n + 1);
        for j in 0..n {
            for i in 0..n {
                vertices.push([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
            }
        }
        let mut triangles = Vec::with_capacity(4 * n * n);
        for j in 0..n {
            for i in 0..n {
                let c = centre0 + j * n + i;
                let (v00, v10, v11, v01) = (
                    grid(i, j),
                    grid(i + 1, j),
                    grid(i + 1, j + 1),
                    grid(i, j + 1),
                );
                triangles.push([v00, v10, c]);
                triangles.push([v10, v11, c]);
                triangles.push([v11, v01, c]);
                triangles.push([v01, v00, c]);
            }
        }
        Self::new(vertices, triangles).expect("criss-cross grid is valid")
    }

    /// Criss-cross mesh of the unit square sized so the element count is
    /// close to `target` (elements come in multiples of four).
    pub fn criss_cross_for_target(target: usize) -> Self {
        let n = ((target as f64 / 4.0).sqrt().round() as usize).max(1);
        Self::criss_cross(n)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangle(&self, k: usize) -> [usize; 3] {
        self.triangles[k]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> Edge {
        self.edges[e]
    }

    /// Edge indices of the three sides of triangle `k`; side `s` joins the
    /// local vertices `s` and `s+1`.
    pub fn triangle_edges(&self, k: usize) -> [usize; 3] {
        self.tri_edges[k]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.vertex_on_boundary[v]
    }

    pub fn triangles_of_vertex(&self, v: usize) -> &[usize] {
        &self.vertex_triangles[v]
    }

    pub fn triangle_points(&self, k: usize) -> [Point; 3] {
        let t = self.triangles[k];
        [
            self.vertices[t[0]],
            self.vertices[t[1]],
            self.vertices[t[2]],
        ]
    }

    pub fn area(&self, k: usize) -> f64 {
        let [p0, p1, p2] = self.triangle_points(k);
        0.5 * cross(sub(p1, p0), sub(p2, p0))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|k| self.area(k)).sum()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].vertices;
        norm(sub(self.vertices[b], self.vertices[a]))
    }

    /// Gradients of the three barycentric coordinate functions on element k.
    pub fn barycentric_gradients(&self, k: usize) -> [Point; 3] {
        let [p0, p1, p2] = self.triangle_points(k);
        let inv_two_area = 1.0 / (2.0 * self.area(k));
        [
            la::scale([p1[1] - p2[1], p2[0] - p1[0]], inv_two_area),
            la::scale([p2[1] - p0[1], p0[0] - p2[0]], inv_two_area),
            la::scale([p0[1] - p1[1], p1[0] - p0[0]], inv_two_area),
        ]
    }

    /// Maps barycentric coordinates on element k to physical coordinates.
    pub fn point_at(&self, k: usize, bary: [f64; 3]) -> Point {
        let [p0, p1, p2] = self.triangle_points(k);
        [
            bary[0] * p0[0] + bary[1] * p1[0] + bary[2] * p2[0],
            bary[0] * p0[1] + bary[1] * p1[1] + bary[2] * p2[1],
        ]
    }

    pub fn element_geometry(&self, k: usize) -> ElementGeometry {
        let [p0, p1, p2] = self.triangle_points(k);
        let area = self.area(k);
        let p = Mat2::from_columns(sub(p1, p0), sub(p2, p0));
        let jacobian = p.mul(&reference_inverse());
        let edge_vectors = [sub(p1, p0), sub(p2, p1), sub(p0, p2)];
        let normals = edge_vectors.map(|e| {
            let len = norm(e);
            [e[1] / len, -e[0] / len]
        });
        ElementGeometry {
            area,
            jacobian,
            edge_vectors,
            normals,
        }
    }

    /// Ratio of the extreme singular values of the affine map from the
    /// unit-area equilateral reference element.
    pub fn aspect_ratio(&self, k: usize) -> Result<f64> {
        let g = self.element_geometry(k);
        let (smax, smin) = g.jacobian.singular_values();
        if !smin.is_finite() || !smax.is_finite() || smin <= 0.0 {
            return Err(Error::DegenerateElement(k));
        }
        Ok(smax / smin)
    }

    pub fn max_aspect_ratio(&self) -> Result<f64> {
        let mut m = 1.0_f64;
        for k in 0..self.n_triangles() {
            m = m.max(self.aspect_ratio(k)?);
        }
        Ok(m)
    }

    pub fn median_aspect_ratio(&self) -> Result<f64> {
        let mut ratios = (0..self.n_triangles())
            .map(|k| self.aspect_ratio(k))
            .collect::<Result<Vec<_>>>()?;
        ratios.sort_by(|a, b| a.total_cmp(b));
        Ok(ratios[ratios.len() / 2])
    }

    /// Outward unit normal of triangle `t` across edge `e`; `t` must be
    /// incident to `e`.
    pub fn outward_normal(&self, t: usize, e: usize) -> Point {
        let sides = self.tri_edges[t];
        let s = sides
            .iter()
            .position(|&se| se == e)
            .expect("edge not incident to triangle");
        self.element_geometry(t).normals[s]
    }
}
