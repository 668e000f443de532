//! A posteriori error machinery: the strong-form residual, inter-element
//! flux jumps, and a hierarchical basis error estimate sought in the span
//! of quadratic edge bubbles.
//!
//! The estimate z solves the linearized global error problem
//! `B[u; z, w] = -δI[u, w]` for all bubble test functions w and is
//! approximated by a few sweeps of the symmetric Gauss-Seidel iteration;
//! a loose tolerance suffices because only the directional content of z
//! feeds the metric.

use crate::fem::{NodalField, SparseSymSystem, SystemBuilder};
use crate::functional::Functional;
use crate::la::{add, dot, scale, Point};
use crate::mesh::TriMesh;
use crate::quadrature::{edge_gauss3, triangle_degree4};
use crate::{Error, Result};

/// Coefficients of quadratic edge bubbles `4 λ_a λ_b` on interior edges.
/// Boundary edges carry no unknown (the error vanishes on the boundary),
/// and the field is zero at every mesh vertex by construction.
#[derive(Clone, Debug)]
pub struct BubbleField {
    /// Maps edge index to bubble unknown; `None` on boundary edges.
    dof_of_edge: Vec<Option<usize>>,
    pub values: Vec<f64>,
}

impl BubbleField {
    pub fn zeros(mesh: &TriMesh) -> Self {
        let mut dof_of_edge = vec![None; mesh.n_edges()];
        let mut n = 0;
        for (e, edge) in mesh.edges().iter().enumerate() {
            if !edge.is_boundary() {
                dof_of_edge[e] = Some(n);
                n += 1;
            }
        }
        Self {
            dof_of_edge,
            values: vec![0.0; n],
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.values.len()
    }

    pub fn dof(&self, edge: usize) -> Option<usize> {
        self.dof_of_edge[edge]
    }

    /// Coefficient of the bubble on `edge`; zero on boundary edges.
    pub fn coefficient(&self, edge: usize) -> f64 {
        self.dof_of_edge[edge].map_or(0.0, |d| self.values[d])
    }

    /// Evaluates the field on element `k` at barycentric coordinates.
    pub fn value_on(&self, mesh: &TriMesh, k: usize, bary: [f64; 3]) -> f64 {
        let sides = mesh.triangle_edges(k);
        let mut v = 0.0;
        for s in 0..3 {
            let c = self.coefficient(sides[s]);
            if c != 0.0 {
                v += c * 4.0 * bary[s] * bary[(s + 1) % 3];
            }
        }
        v
    }

    /// Gradient of the field on element `k` at barycentric coordinates.
    pub fn gradient_on(&self, mesh: &TriMesh, k: usize, bary: [f64; 3]) -> Point {
        let sides = mesh.triangle_edges(k);
        let grads = mesh.barycentric_gradients(k);
        let mut g = [0.0, 0.0];
        for s in 0..3 {
            let c = self.coefficient(sides[s]);
            if c != 0.0 {
                let a = s;
                let b = (s + 1) % 3;
                g = add(
                    g,
                    scale(
                        add(scale(grads[b], bary[a]), scale(grads[a], bary[b])),
                        4.0 * c,
                    ),
                );
            }
        }
        g
    }

    /// Scaled element norm `(1/|K| ∫_K z²)^(1/2)`.
    pub fn scaled_norm_on_element(&self, mesh: &TriMesh, k: usize) -> f64 {
        let rule = triangle_degree4();
        let mut s = 0.0;
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let v = self.value_on(mesh, k, *bary);
            s += w * v * v;
        }
        s.max(0.0).sqrt()
    }

    /// Scaled edge norm `(1/|γ| ∫_γ z²)^(1/2)`; only the edge's own bubble
    /// is nonzero on the edge, so the trace is single valued and the edge
    /// length cancels.
    pub fn scaled_norm_on_edge(&self, _mesh: &TriMesh, e: usize) -> f64 {
        let c = self.coefficient(e);
        if c == 0.0 {
            return 0.0;
        }
        let rule = edge_gauss3();
        let mut s = 0.0;
        for (t, w) in rule.points.iter().zip(&rule.weights) {
            let v = c * 4.0 * t * (1.0 - t);
            s += w * v * v;
        }
        s.sqrt()
    }
}

/// Per-element scaled residual norms and per-edge scaled jump norms.
#[derive(Clone, Debug)]
pub struct Indicators {
    pub element_residual: Vec<f64>,
    pub edge_jump: Vec<f64>,
}

// On linear elements the divergence chain rule reduces to the mixed
// derivative term: ∇·F_∇u = (∂²F/∂u∂∇u)·∇u_h; the ∇∇u_h term vanishes and
// the built-ins have no explicit x dependence in F_∇u.
fn residual_at(f: &dyn Functional, x: Point, u: f64, grad: Point) -> f64 {
    f.d_u(x, u, grad) - dot(f.d2_u_grad(x, u, grad), grad)
}

/// Scaled residual norm `(1/|K| ∫_K r²)^(1/2)` on element k.
pub fn element_residual(mesh: &TriMesh, f: &dyn Functional, u: &NodalField, k: usize) -> f64 {
    let rule = triangle_degree4();
    let grad = u.gradient_on(mesh, k);
    let mut s = 0.0;
    for (bary, w) in rule.points.iter().zip(&rule.weights) {
        let x = mesh.point_at(k, *bary);
        let r = residual_at(f, x, u.value_on(mesh, k, *bary), grad);
        s += w * r * r;
    }
    s.sqrt()
}

/// Scaled norm of the two-sided flux jump across edge `e`; zero on
/// boundary edges. Each side contributes with its own outward normal and
/// its own one-sided gradient.
pub fn edge_jump(mesh: &TriMesh, f: &dyn Functional, u: &NodalField, e: usize) -> f64 {
    let edge = mesh.edge(e);
    let Some(right) = edge.right else {
        return 0.0;
    };
    let left = edge.left;
    let [a, b] = edge.vertices;
    let pa = mesh.vertex(a);
    let pb = mesh.vertex(b);
    let ua = u.values[a];
    let ub = u.values[b];
    let gl = u.gradient_on(mesh, left);
    let gr = u.gradient_on(mesh, right);
    let nl = mesh.outward_normal(left, e);
    let nr = mesh.outward_normal(right, e);
    let rule = edge_gauss3();
    let mut s = 0.0;
    for (t, w) in rule.points.iter().zip(&rule.weights) {
        let x = add(scale(pa, 1.0 - t), scale(pb, *t));
        let uv = (1.0 - t) * ua + t * ub;
        let jump = dot(f.d_grad(x, uv, gl), nl) + dot(f.d_grad(x, uv, gr), nr);
        s += w * jump * jump;
    }
    s.sqrt()
}

pub fn indicators(mesh: &TriMesh, f: &dyn Functional, u: &NodalField) -> Indicators {
    Indicators {
        element_residual: (0..mesh.n_triangles())
            .map(|k| element_residual(mesh, f, u, k))
            .collect(),
        edge_jump: (0..mesh.n_edges())
            .map(|e| edge_jump(mesh, f, u, e))
            .collect(),
    }
}

// bubble value and gradient for local side s at a barycentric point
fn bubble_shape(grads: &[Point; 3], bary: [f64; 3], s: usize) -> (f64, Point) {
    let a = s;
    let b = (s + 1) % 3;
    let v = 4.0 * bary[a] * bary[b];
    let g = scale(add(scale(grads[b], bary[a]), scale(grads[a], bary[b])), 4.0);
    (v, g)
}

/// Assembles the linearized error problem on the interior-edge bubble
/// space: matrix entries `B[u; φ_e, φ_e']` and right-hand side
/// `-δI[u, φ_e]`.
pub fn assemble_error_problem(
    mesh: &TriMesh,
    f: &dyn Functional,
    u: &NodalField,
) -> Result<SparseSymSystem> {
    let layout = BubbleField::zeros(mesh);
    let n = layout.n_dofs();
    let mut builder = SystemBuilder::new(n);
    let rule = triangle_degree4();
    for k in 0..mesh.n_triangles() {
        let sides = mesh.triangle_edges(k);
        let dofs: [Option<usize>; 3] = [
            layout.dof(sides[0]),
            layout.dof(sides[1]),
            layout.dof(sides[2]),
        ];
        if dofs.iter().all(Option::is_none) {
            continue;
        }
        let area = mesh.area(k);
        let grads = mesh.barycentric_gradients(k);
        let grad_u = u.gradient_on(mesh, k);
        let mut local = [[0.0; 3]; 3];
        let mut local_rhs = [0.0; 3];
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let x = mesh.point_at(k, *bary);
            let uv = u.value_on(mesh, k, *bary);
            let fu = f.d_u(x, uv, grad_u);
            let fg = f.d_grad(x, uv, grad_u);
            let fuu = f.d2_uu(x, uv, grad_u);
            let fug = f.d2_u_grad(x, uv, grad_u);
            let fgg = f.d2_grad_grad(x, uv, grad_u);
            let shapes: [(f64, Point); 3] = [0, 1, 2].map(|s| bubble_shape(&grads, *bary, s));
            for i in 0..3 {
                if dofs[i].is_none() {
                    continue;
                }
                let (vi, gi) = shapes[i];
                local_rhs[i] -= area * w * (fu * vi + dot(fg, gi));
                for j in i..3 {
                    if dofs[j].is_none() {
                        continue;
                    }
                    let (vj, gj) = shapes[j];
                    let val = vi * fuu * vj
                        + vi * dot(fug, gj)
                        + vj * dot(fug, gi)
                        + dot(fgg.mul_vec(gj), gi);
                    local[i][j] += area * w * val;
                }
            }
        }
        for i in 0..3 {
            let Some(di) = dofs[i] else { continue };
            if !local_rhs[i].is_finite() {
                return Err(Error::NonFinite(format!("error problem rhs, element {k}")));
            }
            builder.add_rhs(di, local_rhs[i]);
            for j in i..3 {
                let Some(dj) = dofs[j] else { continue };
                if !local[i][j].is_finite() {
                    return Err(Error::NonFinite(format!("error problem, element {k}")));
                }
                builder.add(di, dj, local[i][j]);
                if di != dj {
                    builder.add(dj, di, local[i][j]);
                }
            }
        }
    }
    Ok(builder.finish(vec![false; n], &vec![0.0; n]))
}

/// Symmetric Gauss-Seidel: a forward then a backward sweep in ascending /
/// descending unknown order. Stops when the infinity-norm of the update
/// relative to the iterate drops below `rtol`, or after `max_sweeps`.
/// Returns the iterate and the number of symmetric sweeps performed.
pub fn sym_gauss_seidel(
    system: &SparseSymSystem,
    x0: &[f64],
    rtol: f64,
    max_sweeps: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = system.n();
    assert_eq!(x0.len(), n);
    let diag = system.diagonal();
    if let Some(i) = diag.iter().position(|&d| d == 0.0) {
        return Err(Error::ZeroDiagonal(i));
    }
    let mut x = x0.to_vec();
    let update = |x: &mut Vec<f64>, i: usize| {
        let (cols, vals) = system.row(i);
        let mut s = system.rhs[i];
        for (&j, &v) in cols.iter().zip(vals) {
            if j != i {
                s -= v * x[j];
            }
        }
        x[i] = s / diag[i];
    };
    for sweep in 1..=max_sweeps {
        let prev = x.clone();
        for i in 0..n {
            update(&mut x, i);
        }
        for i in (0..n).rev() {
            update(&mut x, i);
        }
        let dx = x
            .iter()
            .zip(&prev)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let xn = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if (xn > 0.0 && dx / xn < rtol) || (xn == 0.0 && dx == 0.0) {
            return Ok((x, sweep));
        }
    }
    Ok((x, max_sweeps))
}

/// Hierarchical basis error estimate: assembles the bubble-space error
/// problem and runs symmetric Gauss-Seidel from zero.
pub fn hbee(
    mesh: &TriMesh,
    f: &dyn Functional,
    u: &NodalField,
    rtol: f64,
    max_sweeps: usize,
) -> Result<(BubbleField, usize)> {
    let system = assemble_error_problem(mesh, f, u)?;
    let mut field = BubbleField::zeros(mesh);
    let x0 = vec![0.0; system.n()];
    let (x, sweeps) = sym_gauss_seidel(&system, &x0, rtol, max_sweeps)?;
    field.values = x;
    Ok((field, sweeps))
}

/// Estimated bound on the first variation: per element
/// `‖r‖_K ‖z‖_K + ½ Σ_γ ‖R‖_γ ‖z‖_γ` with unscaled L² norms.
pub fn error_bound_value(
    mesh: &TriMesh,
    f: &dyn Functional,
    u: &NodalField,
    z: &BubbleField,
) -> f64 {
    let mut total = 0.0;
    for k in 0..mesh.n_triangles() {
        let area = mesh.area(k);
        let r = element_residual(mesh, f, u, k) * area.sqrt();
        let zk = z.scaled_norm_on_element(mesh, k) * area.sqrt();
        let mut edge_part = 0.0;
        for &e in &mesh.triangle_edges(k) {
            let len = mesh.edge_length(e);
            let jump = edge_jump(mesh, f, u, e) * len.sqrt();
            let ze = z.scaled_norm_on_edge(mesh, e) * len.sqrt();
            edge_part += jump * ze;
        }
        total += r * zk + 0.5 * edge_part;
    }
    total
}
