//! Linear finite elements for variational problems: assembly of the first
//! variation and its linearization, Newton iteration with backtracking on
//! the functional value, and error norms.

use crate::functional::Functional;
use crate::la::{add, dot, scale, Point};
use crate::mesh::TriMesh;
use crate::quadrature::{triangle_degree4, triangle_degree5};
use crate::{Error, Result};

/// Coefficients of a piecewise-linear field, one value per mesh vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalField {
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Nodal interpolant of a function.
    pub fn interpolate(mesh: &TriMesh, f: impl Fn(Point) -> f64) -> Self {
        Self {
            values: mesh.vertices().iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn value_on(&self, mesh: &TriMesh, k: usize, bary: [f64; 3]) -> f64 {
        let t = mesh.triangle(k);
        bary[0] * self.values[t[0]] + bary[1] * self.values[t[1]] + bary[2] * self.values[t[2]]
    }

    /// Constant gradient of the field on element k.
    pub fn gradient_on(&self, mesh: &TriMesh, k: usize) -> Point {
        let t = mesh.triangle(k);
        let grads = mesh.barycentric_gradients(k);
        let mut g = [0.0, 0.0];
        for i in 0..3 {
            g = add(g, scale(grads[i], self.values[t[i]]));
        }
        g
    }
}

/// Symmetric sparse system in compressed-row storage. Both triangles are
/// stored; symmetry holds exactly by construction. Constrained (Dirichlet)
/// rows and columns are reduced to the identity with matching right-hand
/// side.
#[derive(Clone, Debug)]
pub struct SparseSymSystem {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    pub rhs: Vec<f64>,
    pub constrained: Vec<bool>,
}

/// Triplet accumulator; duplicate entries are summed in insertion order so
/// assembly is deterministic.
pub struct SystemBuilder {
    n: usize,
    entries: Vec<(u32, u32, f64)>,
    rhs: Vec<f64>,
}

impl SystemBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
            rhs: vec![0.0; n],
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.entries.push((i as u32, j as u32, v));
    }

    pub fn add_rhs(&mut self, i: usize, v: f64) {
        self.rhs[i] += v;
    }

    /// Compresses to CSR, eliminating constrained unknowns: their rows and
    /// columns become identity, off-diagonal couplings move to the right-hand
    /// side with the prescribed values.
    pub fn finish(mut self, constrained: Vec<bool>, constrained_values: &[f64]) -> SparseSymSystem {
        assert_eq!(constrained.len(), self.n);
        let mut rhs = std::mem::take(&mut self.rhs);
        let mut kept: Vec<(u32, u32, f64)> = Vec::with_capacity(self.entries.len());
        for &(i, j, v) in &self.entries {
            let (iu, ju) = (i as usize, j as usize);
            if constrained[iu] {
                continue;
            }
            if constrained[ju] {
                rhs[iu] -= v * constrained_values[ju];
                continue;
            }
            kept.push((i, j, v));
        }
        for (i, &c) in constrained.iter().enumerate() {
            if c {
                kept.push((i as u32, i as u32, 1.0));
                rhs[i] = constrained_values[i];
            }
        }
        kept.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut col_idx = Vec::with_capacity(kept.len());
        let mut values: Vec<f64> = Vec::with_capacity(kept.len());
        let mut prev: Option<(u32, u32)> = None;
        for &(i, j, v) in &kept {
            if prev == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j as usize);
                values.push(v);
                prev = Some((i, j));
            }
            row_ptr[i as usize + 1] = col_idx.len();
        }
        for i in 0..self.n {
            // rows without entries inherit the previous offset
            row_ptr[i + 1] = row_ptr[i + 1].max(row_ptr[i]);
        }
        SparseSymSystem {
            n: self.n,
            row_ptr,
            col_idx,
            values,
            rhs,
            constrained,
        }
    }
}

impl SparseSymSystem {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn from_dense(a: &[f64], n: usize, rhs: Vec<f64>) -> Self {
        let mut b = SystemBuilder::new(n);
        for i in 0..n {
            for j in 0..n {
                if a[i * n + j] != 0.0 {
                    b.add(i, j, a[i * n + j]);
                }
            }
        }
        let mut sys = b.finish(vec![false; n], &vec![0.0; n]);
        sys.rhs = rhs;
        sys
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            y[i] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[p] == i {
                    d[i] = self.values[p];
                }
            }
        }
        d
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        for p in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[p] == j {
                return self.values[p];
            }
        }
        0.0
    }

    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[p];
                if self.entry(j, i) != self.values[p] {
                    return false;
                }
            }
        }
        true
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                a[i * self.n + self.col_idx[p]] = self.values[p];
            }
        }
        a
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Forward/backward row access for Gauss-Seidel style sweeps.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Solves the system: dense Cholesky below `DENSE_THRESHOLD` unknowns,
    /// Jacobi-preconditioned conjugate gradients otherwise.
    pub fn solve(&self) -> Result<Vec<f64>> {
        if self.n < DENSE_THRESHOLD {
            self.solve_dense()
        } else {
            self.solve_pcg(CG_RTOL)
        }
    }

    pub fn solve_dense(&self) -> Result<Vec<f64>> {
        crate::la::cholesky_solve(&self.to_dense(), self.n, &self.rhs)
            .ok_or_else(|| Error::Solver("dense Cholesky failed: matrix not SPD".into()))
    }

    pub fn solve_pcg(&self, rtol: f64) -> Result<Vec<f64>> {
        let n = self.n;
        let b = &self.rhs;
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let diag = self.diagonal();
        if diag.iter().any(|&d| d <= 0.0) {
            return Err(Error::Solver("non-positive diagonal in CG".into()));
        }
        let mut x = vec![0.0; n];
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; n];
        let max_iter = 20 * n + 100;
        for _ in 0..max_iter {
            self.matvec(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 || !pap.is_finite() {
                return Err(Error::Solver(format!("CG breakdown: pAp = {pap}")));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rnorm <= rtol * bnorm {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::Solver(format!(
            "CG did not reach rtol {rtol} within {max_iter} iterations"
        )))
    }
}

const DENSE_THRESHOLD: usize = 500;
const CG_RTOL: f64 = 1e-12;

/// The value of the functional `I[u_h] = Σ_K ∫_K F`.
pub fn energy(mesh: &TriMesh, f: &dyn Functional, u: &NodalField) -> f64 {
    let rule = triangle_degree4();
    let mut total = 0.0;
    for k in 0..mesh.n_triangles() {
        let area = mesh.area(k);
        let grad = u.gradient_on(mesh, k);
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let x = mesh.point_at(k, *bary);
            let uv = u.value_on(mesh, k, *bary);
            total += area * w * f.value(x, uv, grad);
        }
    }
    total
}

/// Gradient of the functional in the nodal basis: component i is
/// `∫ (F_u φ_i + F_∇u · ∇φ_i)`. Boundary-constrained components are zeroed.
pub fn assemble_first_variation(
    mesh: &TriMesh,
    f: &dyn Functional,
    u: &NodalField,
) -> Result<Vec<f64>> {
    let rule = triangle_degree4();
    let mut out = vec![0.0; mesh.n_vertices()];
    for k in 0..mesh.n_triangles() {
        let t = mesh.triangle(k);
        let area = mesh.area(k);
        let grads = mesh.barycentric_gradients(k);
        let grad_u = u.gradient_on(mesh, k);
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let x = mesh.point_at(k, *bary);
            let uv = u.value_on(mesh, k, *bary);
            let fu = f.d_u(x, uv, grad_u);
            let fg = f.d_grad(x, uv, grad_u);
            for i in 0..3 {
                out[t[i]] += area * w * (fu * bary[i] + dot(fg, grads[i]));
            }
        }
    }
    for (i, v) in out.iter_mut().enumerate() {
        if mesh.is_boundary_vertex(i) {
            *v = 0.0;
        } else if !v.is_finite() {
            return Err(Error::NonFinite(format!("first variation component {i}")));
        }
    }
    Ok(out)
}

/// Element contribution to the linearization: the symmetric 3x3 matrix of
/// `B[u; φ_j, φ_i]` restricted to element k.
pub fn element_linearization(
    mesh: &TriMesh,
    f: &dyn Functional,
    u: &NodalField,
    k: usize,
) -> [[f64; 3]; 3] {
    let rule = triangle_degree4();
    let area = mesh.area(k);
    let grads = mesh.barycentric_gradients(k);
    let grad_u = u.gradient_on(mesh, k);
    let mut local = [[0.0; 3]; 3];
    for (bary, w) in rule.points.iter().zip(&rule.weights) {
        let x = mesh.point_at(k, *bary);
        let uv = u.value_on(mesh, k, *bary);
        let fuu = f.d2_uu(x, uv, grad_u);
        let fug = f.d2_u_grad(x, uv, grad_u);
        let fgg = f.d2_grad_grad(x, uv, grad_u);
        for i in 0..3 {
            // upper triangle, mirrored below for exact symmetry
            for j in i..3 {
                let v = bary[i] * fuu * bary[j]
                    + bary[i] * dot(fug, grads[j])
                    + bary[j] * dot(fug, grads[i])
                    + dot(fgg.mul_vec(grads[j]), grads[i]);
                local[i][j] += area * w * v;
            }
        }
    }
    for i in 0..3 {
        for j in 0..i {
            local[i][j] = local[j][i];
        }
    }
    local
}

/// Assembles the linearized system `B[u; ·, ·]` with right-hand side equal
/// to minus the first variation; Dirichlet rows are identity with zero
/// right-hand side (the Newton increment vanishes on the boundary).
pub fn assemble_linearization(
    mesh: &TriMesh,
    f: &dyn Functional,
    u: &NodalField,
) -> Result<SparseSymSystem> {
    let n = mesh.n_vertices();
    let mut builder = SystemBuilder::new(n);
    for k in 0..mesh.n_triangles() {
        let t = mesh.triangle(k);
        let local = element_linearization(mesh, f, u, k);
        for i in 0..3 {
            for j in 0..3 {
                if !local[i][j].is_finite() {
                    return Err(Error::NonFinite(format!("linearization on element {k}")));
                }
                builder.add(t[i], t[j], local[i][j]);
            }
        }
    }
    let residual = assemble_first_variation(mesh, f, u)?;
    for (i, r) in residual.iter().enumerate() {
        builder.add_rhs(i, -r);
    }
    let constrained: Vec<bool> = (0..n).map(|i| mesh.is_boundary_vertex(i)).collect();
    let zeros = vec![0.0; n];
    Ok(builder.finish(constrained, &zeros))
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonConfig {
    /// Infinity-norm tolerance on the interior first variation.
    pub tol: f64,
    pub max_iter: usize,
    /// Backtracking halvings of the step before giving up.
    pub max_halvings: u32,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 25,
            max_halvings: 20,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct NewtonInfo {
    pub iterations: usize,
    pub residual_norms: Vec<f64>,
    pub energies: Vec<f64>,
}

/// Minimizes the functional over the linear finite element space by a
/// damped Newton iteration; boundary values are fixed to the problem data.
pub fn newton_solve(
    mesh: &TriMesh,
    f: &dyn Functional,
    config: &NewtonConfig,
) -> Result<(NodalField, NewtonInfo)> {
    let n = mesh.n_vertices();
    let mut u = NodalField::zeros(n);
    for i in 0..n {
        if mesh.is_boundary_vertex(i) {
            u.values[i] = f.boundary_value(mesh.vertex(i));
        }
    }
    let mut info = NewtonInfo::default();
    info.energies.push(energy(mesh, f, &u));
    loop {
        let residual = assemble_first_variation(mesh, f, &u)?;
        let rnorm = residual.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        info.residual_norms.push(rnorm);
        if rnorm <= config.tol {
            return Ok((u, info));
        }
        if info.iterations >= config.max_iter {
            return Err(Error::NoConvergence {
                iterations: info.iterations,
                last: rnorm,
                residuals: info.residual_norms,
            });
        }
        let system = assemble_linearization(mesh, f, &u)?;
        let step = system.solve()?;
        let i0 = *info.energies.last().unwrap();
        let slack = 1e-12 * (1.0 + i0.abs());
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let trial = NodalField {
                values: u
                    .values
                    .iter()
                    .zip(&step)
                    .map(|(ui, si)| ui + t * si)
                    .collect(),
            };
            let it = energy(mesh, f, &trial);
            if it.is_finite() && it <= i0 + slack {
                accepted = Some((trial, it));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, it)) => {
                u = trial;
                info.energies.push(it);
                info.iterations += 1;
            }
            None => {
                return Err(Error::Solver(format!(
                    "line search failed after {} halvings (residual {rnorm:e})",
                    config.max_halvings
                )))
            }
        }
    }
}

/// H¹ seminorm of the error against a known exact gradient, integrated with
/// the degree-5 rule.
pub fn h1_seminorm_error(
    mesh: &TriMesh,
    u: &NodalField,
    exact_gradient: &dyn Fn(Point) -> Point,
) -> f64 {
    let rule = triangle_degree5();
    let mut total = 0.0;
    for k in 0..mesh.n_triangles() {
        let area = mesh.area(k);
        let gh = u.gradient_on(mesh, k);
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let x = mesh.point_at(k, *bary);
            let ge = exact_gradient(x);
            let d = [ge[0] - gh[0], ge[1] - gh[1]];
            total += area * w * dot(d, d);
        }
    }
    total.sqrt()
}
