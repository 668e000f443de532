//! Metric tensor construction. Per element the tensor is
//!
//! ```text
//! M_K = ρ_K^(2/d) det(I + |H_K|/α)^(-1/d) [I + |H_K|/α]
//! ρ_K = [1 + (‖r‖'_K + (1/|K|) Σ_γ |γ| ‖R‖'_γ)/α]^(d/(d+2)) det(I + |H_K|/α)^(1/(d+2))
//! ```
//!
//! where H_K is the constant element Hessian of the hierarchical error
//! estimate (or a recovered Hessian of the solution), |H| the matrix
//! absolute value, and the regularization α is fixed by the normalization
//! `Σ ρ_K |K| = 2 |Ω|`, solved by bisection. Four variants are supported:
//! the full a posteriori anisotropic tensor, the Hessian-recovery variant,
//! the isotropic specialization (|H| = 0) and the estimate-only variant
//! (residual and jump terms dropped).

use std::fmt;
use std::str::FromStr;

use crate::estimator::{self, BubbleField};
use crate::fem::NodalField;
use crate::functional::Functional;
use crate::la::{cholesky_solve, sub, SymMat2};
use crate::mesh::TriMesh;
use crate::{Error, Result};

/// Spatial dimension; formulas are written in terms of it but only d = 2
/// is exercised.
pub const DIMENSION: f64 = 2.0;

/// Below this level the indicator and Hessian data are treated as zero and
/// the normalization equation has no root: the uniform fallback engages.
const DEGENERATE_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricVariant {
    /// Residual, edge jumps and the Hessian of the hierarchical estimate.
    HbeeAniso,
    /// Residual, edge jumps and a recovered Hessian of the solution.
    HessianAniso,
    /// Residual and edge jumps only; |H| = 0 gives scalar tensors.
    Isotropic,
    /// Hessian of the hierarchical estimate only (bracket term = 1).
    HbeeOnly,
}

impl MetricVariant {
    pub fn needs_estimate(self) -> bool {
        matches!(self, Self::HbeeAniso | Self::HbeeOnly)
    }

    pub const ALL: [MetricVariant; 4] = [
        Self::HbeeAniso,
        Self::HessianAniso,
        Self::Isotropic,
        Self::HbeeOnly,
    ];
}

impl fmt::Display for MetricVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::HbeeAniso => "hbee-aniso",
            Self::HessianAniso => "hessian-aniso",
            Self::Isotropic => "isotropic",
            Self::HbeeOnly => "hbee-only",
        };
        f.write_str(s)
    }
}

impl FromStr for MetricVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hbee-aniso" => Ok(Self::HbeeAniso),
            "hessian-aniso" => Ok(Self::HessianAniso),
            "isotropic" => Ok(Self::Isotropic),
            "hbee-only" => Ok(Self::HbeeOnly),
            other => Err(Error::Invalid(format!(
                "unknown metric variant '{other}' (expected hbee-aniso, hessian-aniso, isotropic or hbee-only)"
            ))),
        }
    }
}

/// Per-element metric tensors with the normalization data they were built
/// from. When `degenerate` is set all tensors are the identity and `alpha`
/// is infinite.
#[derive(Clone, Debug)]
pub struct MetricField {
    pub tensors: Vec<SymMat2>,
    pub rho: Vec<f64>,
    pub alpha: f64,
    pub sigma: f64,
    pub degenerate: bool,
}

/// Constant Hessian of the bubble field on element k:
/// `Σ_γ c_γ 4 (∇λ_a ∇λ_bᵀ + ∇λ_b ∇λ_aᵀ)` over the element's interior
/// edges.
pub fn bubble_hessian(mesh: &TriMesh, z: &BubbleField, k: usize) -> SymMat2 {
    let grads = mesh.barycentric_gradients(k);
    let sides = mesh.triangle_edges(k);
    let mut h = SymMat2::zero();
    for s in 0..3 {
        let c = z.coefficient(sides[s]);
        if c != 0.0 {
            h = h.add(&SymMat2::sym_outer(grads[s], grads[(s + 1) % 3]).scale(4.0 * c));
        }
    }
    h
}

pub fn bubble_hessians(mesh: &TriMesh, z: &BubbleField) -> Vec<SymMat2> {
    (0..mesh.n_triangles())
        .map(|k| bubble_hessian(mesh, z, k))
        .collect()
}

#[derive(Clone, Debug)]
pub struct HessianRecovery {
    pub element_hessians: Vec<SymMat2>,
    /// Vertices whose patch stayed rank deficient even after extension;
    /// they contribute a zero Hessian.
    pub rank_deficient_vertices: usize,
}

fn vertex_neighbors(mesh: &TriMesh) -> Vec<Vec<usize>> {
    let mut nbrs = vec![Vec::new(); mesh.n_vertices()];
    for e in mesh.edges() {
        let [a, b] = e.vertices;
        nbrs[a].push(b);
        nbrs[b].push(a);
    }
    nbrs
}

fn fit_vertex_hessian(
    mesh: &TriMesh,
    u: &NodalField,
    v: usize,
    patch: &[usize],
) -> Option<SymMat2> {
    // quadratic fit in coordinates centred at v and scaled by the patch
    // radius, for conditioning
    let pv = mesh.vertex(v);
    let radius = patch
        .iter()
        .map(|&w| crate::la::norm(sub(mesh.vertex(w), pv)))
        .fold(0.0_f64, f64::max);
    if radius == 0.0 {
        return None;
    }
    let mut ata = [0.0; 36];
    let mut atb = [0.0; 6];
    for &w in patch {
        let p = sub(mesh.vertex(w), pv);
        let (x, y) = (p[0] / radius, p[1] / radius);
        let row = [1.0, x, y, x * x, x * y, y * y];
        for i in 0..6 {
            atb[i] += row[i] * u.values[w];
            for j in 0..6 {
                ata[i * 6 + j] += row[i] * row[j];
            }
        }
    }
    let c = cholesky_solve(&ata, 6, &atb)?;
    let r2 = radius * radius;
    Some(SymMat2::new(2.0 * c[3] / r2, c[4] / r2, 2.0 * c[5] / r2))
}

/// Recovered element Hessians of a nodal field: a quadratic least-squares
/// fit over each vertex's edge-neighbour patch (extended by a second ring
/// when it holds fewer than six points), averaged over the three vertices
/// of each element.
pub fn recover_hessian_qls(mesh: &TriMesh, u: &NodalField) -> HessianRecovery {
    let nbrs = vertex_neighbors(mesh);
    let mut vertex_hessians = vec![SymMat2::zero(); mesh.n_vertices()];
    let mut rank_deficient = 0;
    for v in 0..mesh.n_vertices() {
        let mut patch: Vec<usize> = vec![v];
        patch.extend_from_slice(&nbrs[v]);
        patch.sort_unstable();
        patch.dedup();
        let mut fitted = None;
        if patch.len() >= 6 {
            fitted = fit_vertex_hessian(mesh, u, v, &patch);
        }
        if fitted.is_none() {
            let mut extended = patch.clone();
            for &w in &patch {
                extended.extend_from_slice(&nbrs[w]);
            }
            extended.sort_unstable();
            extended.dedup();
            if extended.len() >= 6 {
                fitted = fit_vertex_hessian(mesh, u, v, &extended);
            }
        }
        match fitted {
            Some(h) => vertex_hessians[v] = h,
            None => rank_deficient += 1,
        }
    }
    let element_hessians = (0..mesh.n_triangles())
        .map(|k| {
            let t = mesh.triangle(k);
            vertex_hessians[t[0]]
                .add(&vertex_hessians[t[1]])
                .add(&vertex_hessians[t[2]])
                .scale(1.0 / 3.0)
        })
        .collect();
    HessianRecovery {
        element_hessians,
        rank_deficient_vertices: rank_deficient,
    }
}

/// Left-hand side of the normalization equation at a given α:
/// `Σ_K |K| [1 + c_K/α]^(d/(d+2)) det(I + |H_K|/α)^(1/(d+2))` where `c_K`
/// combines the scaled residual and jump terms.
pub fn alpha_equation_lhs(
    areas: &[f64],
    indicator: &[f64],
    abs_hessians: &[SymMat2],
    alpha: f64,
) -> f64 {
    let p_bracket = DIMENSION / (DIMENSION + 2.0);
    let p_det = 1.0 / (DIMENSION + 2.0);
    let mut s = 0.0;
    for ((&area, &c), h) in areas.iter().zip(indicator).zip(abs_hessians) {
        let bracket = 1.0 + c / alpha;
        let h_alpha = SymMat2::identity().add(&h.scale(1.0 / alpha));
        s += area * bracket.powf(p_bracket) * h_alpha.det().powf(p_det);
    }
    s
}

#[derive(Clone, Copy, Debug)]
pub struct AlphaSolve {
    pub alpha: f64,
    pub degenerate: bool,
}

/// Solves the normalization equation `LHS(α) = 2 |Ω|` by bisection on a
/// geometrically grown bracket. The left-hand side decreases monotonically
/// from +∞ (α → 0) to |Ω| (α → ∞) whenever some indicator or Hessian is
/// nonzero; with all data below the degenerate floor no root exists and
/// the uniform fallback is reported instead.
pub fn solve_alpha(areas: &[f64], indicator: &[f64], abs_hessians: &[SymMat2]) -> AlphaSolve {
    let domain_area: f64 = areas.iter().sum();
    let target = 2.0 * domain_area;
    let max_data = indicator
        .iter()
        .copied()
        .chain(abs_hessians.iter().map(SymMat2::trace))
        .fold(0.0_f64, f64::max);
    if max_data <= DEGENERATE_FLOOR {
        return AlphaSolve {
            alpha: f64::INFINITY,
            degenerate: true,
        };
    }
    let lhs = |a: f64| alpha_equation_lhs(areas, indicator, abs_hessians, a);
    let mut lo = 1e-8;
    let mut hi = 1.0;
    while lhs(hi) > target && hi < 1e12 {
        hi *= 2.0;
    }
    while lhs(lo) < target && lo > 1e-300 {
        lo *= 0.5;
    }
    if lhs(lo) < target {
        // data barely above the floor; no usable root
        return AlphaSolve {
            alpha: f64::INFINITY,
            degenerate: true,
        };
    }
    let rtol = 1e-9;
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let v = lhs(mid);
        if ((v - target) / target).abs() <= rtol {
            break;
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= f64::EPSILON * hi {
            break;
        }
    }
    AlphaSolve {
        alpha: mid,
        degenerate: false,
    }
}

/// Adaptation density `ρ = (1 + c/α)^(d/(d+2)) det(I + |H|/α)^(1/(d+2))`.
pub fn rho(indicator: f64, alpha: f64, abs_hessian: &SymMat2) -> f64 {
    let p_bracket = DIMENSION / (DIMENSION + 2.0);
    let p_det = 1.0 / (DIMENSION + 2.0);
    let bracket = 1.0 + indicator / alpha;
    let h_alpha = SymMat2::identity().add(&abs_hessian.scale(1.0 / alpha));
    bracket.powf(p_bracket) * h_alpha.det().powf(p_det)
}

/// Element tensor `M = ρ^(2/d) det(I + |H|/α)^(-1/d) [I + |H|/α]`; its
/// determinant equals ρ² and its eigenvectors are those of |H|.
pub fn element_metric(rho_k: f64, alpha: f64, abs_hessian: &SymMat2) -> SymMat2 {
    let h_alpha = SymMat2::identity().add(&abs_hessian.scale(1.0 / alpha));
    let factor = rho_k.powf(2.0 / DIMENSION) * h_alpha.det().powf(-1.0 / DIMENSION);
    h_alpha.scale(factor)
}

/// Builds the metric field for the chosen variant. The estimate `z` is
/// required for the variants that use the bubble Hessian.
pub fn metric_tensor(
    mesh: &TriMesh,
    f: &dyn Functional,
    u: &NodalField,
    z: Option<&BubbleField>,
    variant: MetricVariant,
) -> Result<MetricField> {
    let n = mesh.n_triangles();
    let areas: Vec<f64> = (0..n).map(|k| mesh.area(k)).collect();
    let domain_area: f64 = areas.iter().sum();

    // combined residual + jump term per element; dropped entirely for the
    // estimate-only variant
    let mut indicator: Vec<f64> = if variant == MetricVariant::HbeeOnly {
        vec![0.0; n]
    } else {
        let ind = estimator::indicators(mesh, f, u);
        (0..n)
            .map(|k| {
                let mut jumps = 0.0;
                for &e in &mesh.triangle_edges(k) {
                    jumps += mesh.edge_length(e) * ind.edge_jump[e];
                }
                ind.element_residual[k] + jumps / areas[k]
            })
            .collect()
    };
    let raw_indicator_max = indicator.iter().copied().fold(0.0_f64, f64::max);
    // nondimensionalize the indicator data by its area-weighted mean so the
    // regularization balances it against the curvature information instead
    // of the problem's raw forcing scale; indicator data at the noise floor
    // is dropped rather than amplified
    if raw_indicator_max <= DEGENERATE_FLOOR {
        indicator.iter_mut().for_each(|c| *c = 0.0);
    } else {
        let indicator_mean = indicator
            .iter()
            .zip(&areas)
            .map(|(c, a)| c * a)
            .sum::<f64>()
            / domain_area;
        if indicator_mean > 0.0 {
            for c in indicator.iter_mut() {
                *c /= indicator_mean;
            }
        }
    }

    let hessians: Vec<SymMat2> = match variant {
        MetricVariant::HbeeAniso | MetricVariant::HbeeOnly => {
            let z = z.ok_or_else(|| {
                Error::Invalid(format!("variant {variant} requires the error estimate"))
            })?;
            bubble_hessians(mesh, z)
        }
        MetricVariant::HessianAniso => recover_hessian_qls(mesh, u).element_hessians,
        MetricVariant::Isotropic => vec![SymMat2::zero(); n],
    };
    let abs_hessians: Vec<SymMat2> = hessians.iter().map(SymMat2::abs_spd).collect();

    // the degenerate test works on the raw data, before nondimensionalization
    let hessian_max = abs_hessians
        .iter()
        .map(SymMat2::trace)
        .fold(0.0_f64, f64::max);
    let solve = if raw_indicator_max.max(hessian_max) <= DEGENERATE_FLOOR {
        AlphaSolve {
            alpha: f64::INFINITY,
            degenerate: true,
        }
    } else {
        solve_alpha(&areas, &indicator, &abs_hessians)
    };
    if solve.degenerate {
        return Ok(MetricField {
            tensors: vec![SymMat2::identity(); n],
            rho: vec![1.0; n],
            alpha: f64::INFINITY,
            sigma: areas.iter().sum(),
            degenerate: true,
        });
    }
    let alpha = solve.alpha;
    let rho_k: Vec<f64> = (0..n)
        .map(|k| rho(indicator[k], alpha, &abs_hessians[k]))
        .collect();
    let tensors: Vec<SymMat2> = (0..n)
        .map(|k| element_metric(rho_k[k], alpha, &abs_hessians[k]))
        .collect();
    let sigma = rho_k.iter().zip(&areas).map(|(r, a)| r * a).sum();
    Ok(MetricField {
        tensors,
        rho: rho_k,
        alpha,
        sigma,
        degenerate: false,
    })
}

/// Nodal metric for the remesher: area-weighted arithmetic mean of the
/// incident element tensors.
pub fn nodal_metrics(mesh: &TriMesh, field: &MetricField) -> Vec<SymMat2> {
    (0..mesh.n_vertices())
        .map(|v| {
            let mut m = SymMat2::zero();
            let mut total = 0.0;
            for &k in mesh.triangles_of_vertex(v) {
                let a = mesh.area(k);
                m = m.add(&field.tensors[k].scale(a));
                total += a;
            }
            m.scale(1.0 / total)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{newton_solve, NewtonConfig};
    use crate::functional::tanh_problem;
    use crate::la::{add, dot, Mat2, Point};
    use crate::test_util::TestRng;

    #[test]
    fn bubble_hessian_zero_field() {
        let mesh = TriMesh::criss_cross(2);
        let z = BubbleField::zeros(&mesh);
        for k in 0..mesh.n_triangles() {
            assert_eq!(bubble_hessian(&mesh, &z, k), SymMat2::zero());
        }
    }

    #[test]
    fn bubble_hessian_unit_right_triangle() {
        // make the bottom edge of the unit right triangle interior by
        // attaching a second triangle below it
        let mesh = TriMesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, -1.0]],
            vec![[0, 1, 2], [0, 3, 1]],
        )
        .unwrap();
        let mut z = BubbleField::zeros(&mesh);
        assert_eq!(z.n_dofs(), 1);
        z.values[0] = 1.0;
        let h = bubble_hessian(&mesh, &z, 0);
        assert!((h.xx + 8.0).abs() < 1e-13, "{h:?}");
        assert!((h.xy + 4.0).abs() < 1e-13);
        assert!(h.yy.abs() < 1e-13);
    }

    #[test]
    fn bubble_hessian_matches_finite_differences() {
        let mesh = TriMesh::criss_cross(3);
        let mut z = BubbleField::zeros(&mesh);
        let mut rng = TestRng::new(17);
        for v in z.values.iter_mut() {
            *v = rng.in_range(-1.0, 1.0);
        }
        // evaluate z as a function of cartesian coordinates on one element;
        // the restriction is quadratic so central differences are exact up
        // to roundoff
        let k = 7;
        let grads = mesh.barycentric_gradients(k);
        let centroid = mesh.point_at(k, [1.0 / 3.0; 3]);
        let eval = |x: Point| {
            let mut bary = [0.0; 3];
            for i in 0..3 {
                bary[i] = 1.0 / 3.0 + dot(grads[i], sub(x, centroid));
            }
            z.value_on(&mesh, k, bary)
        };
        let h = 1e-4;
        let fd_xx = (eval(add(centroid, [h, 0.0])) - 2.0 * eval(centroid)
            + eval(add(centroid, [-h, 0.0])))
            / (h * h);
        let fd_yy = (eval(add(centroid, [0.0, h])) - 2.0 * eval(centroid)
            + eval(add(centroid, [0.0, -h])))
            / (h * h);
        let fd_xy = (eval(add(centroid, [h, h]))
            - eval(add(centroid, [h, -h]))
            - eval(add(centroid, [-h, h]))
            + eval(add(centroid, [-h, -h])))
            / (4.0 * h * h);
        let hess = bubble_hessian(&mesh, &z, k);
        let scale_ref = hess.as_mat2().frobenius_sq().sqrt().max(1.0);
        assert!(
            (hess.xx - fd_xx).abs() < 1e-6 * scale_ref,
            "{fd_xx} vs {hess:?}"
        );
        assert!((hess.yy - fd_yy).abs() < 1e-6 * scale_ref);
        assert!((hess.xy - fd_xy).abs() < 1e-6 * scale_ref);
    }

    #[test]
    fn abs_spd_examples() {
        assert_eq!(SymMat2::diag(2.0, -3.0).abs_spd(), SymMat2::diag(2.0, 3.0));
        assert_eq!(SymMat2::zero().abs_spd(), SymMat2::zero());
        let s = SymMat2::new(0.0, 1.0, 0.0).abs_spd();
        assert!((s.xx - 1.0).abs() < 1e-14 && (s.yy - 1.0).abs() < 1e-14);
    }

    #[test]
    fn alpha_analytic_single_element() {
        // one unit-area element with indicator 3 and no Hessian:
        // (1 + 3/α)^(1/2) = 2 gives α = 1
        let solve = solve_alpha(&[1.0], &[3.0], &[SymMat2::zero()]);
        assert!(!solve.degenerate);
        assert!((solve.alpha - 1.0).abs() < 1e-6, "alpha {}", solve.alpha);
        let resid = alpha_equation_lhs(&[1.0], &[3.0], &[SymMat2::zero()], solve.alpha) - 2.0;
        assert!(resid.abs() <= 1e-8 * 2.0);
    }

    #[test]
    fn alpha_degenerate_on_zero_data() {
        let solve = solve_alpha(
            &[0.5, 0.5],
            &[0.0, 0.0],
            &[SymMat2::zero(), SymMat2::zero()],
        );
        assert!(solve.degenerate);
        assert!(solve.alpha.is_infinite());
    }

    #[test]
    fn alpha_residual_small_on_tanh_mesh() {
        let problem = tanh_problem();
        let mesh = TriMesh::criss_cross(8);
        let (u, _) =
            newton_solve(&mesh, problem.functional.as_ref(), &NewtonConfig::default()).unwrap();
        let (z, _) = estimator::hbee(&mesh, problem.functional.as_ref(), &u, 0.01, 20).unwrap();
        let field = metric_tensor(
            &mesh,
            problem.functional.as_ref(),
            &u,
            Some(&z),
            MetricVariant::HbeeAniso,
        )
        .unwrap();
        let target = 2.0 * mesh.total_area();
        assert!(
            (field.sigma - target).abs() <= 1e-8 * target,
            "sigma {} vs {target}",
            field.sigma
        );
    }

    #[test]
    fn alpha_lhs_strictly_decreasing() {
        let areas = [0.25, 0.5, 0.25];
        let ind = [1.0, 3.0, 0.5];
        let habs = [
            SymMat2::diag(2.0, 0.5),
            SymMat2::identity(),
            SymMat2::diag(10.0, 1.0),
        ];
        let mut last = f64::INFINITY;
        for i in 0..10 {
            let alpha = 1e-4 * 10.0_f64.powi(i);
            let v = alpha_equation_lhs(&areas, &ind, &habs, alpha);
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn rho_examples() {
        assert_eq!(rho(0.0, 7.3, &SymMat2::zero()), 1.0);
        assert!((rho(3.0, 1.0, &SymMat2::zero()) - 2.0).abs() < 1e-14);
        let r = rho(0.0, 1.0, &SymMat2::identity());
        assert!((r - 2.0_f64.sqrt()).abs() < 1e-14, "rho {r}");
    }

    #[test]
    fn metric_formula_example() {
        // α = 1, bracket = 1, |H| = I: M = √2 I and det M = ρ²
        let r = rho(0.0, 1.0, &SymMat2::identity());
        let m = element_metric(r, 1.0, &SymMat2::identity());
        assert!((m.xx - 2.0_f64.sqrt()).abs() < 1e-14);
        assert!((m.yy - 2.0_f64.sqrt()).abs() < 1e-14);
        assert!(m.xy.abs() < 1e-15);
        assert!((m.det() - r * r).abs() < 1e-13);
    }

    #[test]
    fn metric_determinant_identity_all_variants() {
        let problem = tanh_problem();
        let mesh = TriMesh::criss_cross(6);
        let (u, _) =
            newton_solve(&mesh, problem.functional.as_ref(), &NewtonConfig::default()).unwrap();
        let (z, _) = estimator::hbee(&mesh, problem.functional.as_ref(), &u, 0.01, 20).unwrap();
        for variant in MetricVariant::ALL {
            let field =
                metric_tensor(&mesh, problem.functional.as_ref(), &u, Some(&z), variant).unwrap();
            assert!(!field.degenerate);
            for (m, r) in field.tensors.iter().zip(&field.rho) {
                let (l1, l2, _) = m.eigen();
                assert!(l2 > 0.0, "not SPD for {variant}");
                assert!(
                    (m.det() - r * r).abs() <= 1e-10 * (r * r),
                    "det {} vs rho² {} for {variant}",
                    m.det(),
                    r * r
                );
                if variant == MetricVariant::Isotropic {
                    assert!((l1 - l2).abs() <= 1e-12 * l1);
                }
            }
        }
    }

    #[test]
    fn noise_level_indicators_drop_out_of_the_bracket() {
        // residual and jumps at rounding noise with a meaningful estimate:
        // the full variant reduces to the estimate-only one
        let mesh = TriMesh::criss_cross(4);
        let f = crate::functional::dirichlet_energy(
            Box::new(|_| 0.0),
            Box::new(|x| x[0] + x[1]),
            None,
            None,
        );
        let u = crate::fem::newton_solve(&mesh, &f, &NewtonConfig::default())
            .unwrap()
            .0;
        let mut z = BubbleField::zeros(&mesh);
        let mut rng = TestRng::new(9);
        for v in z.values.iter_mut() {
            *v = rng.in_range(-0.1, 0.1);
        }
        let full = metric_tensor(&mesh, &f, &u, Some(&z), MetricVariant::HbeeAniso).unwrap();
        let only = metric_tensor(&mesh, &f, &u, Some(&z), MetricVariant::HbeeOnly).unwrap();
        assert!(!full.degenerate);
        for (a, b) in full.tensors.iter().zip(&only.tensors) {
            assert!((a.xx - b.xx).abs() <= 1e-9 * a.xx.abs().max(1.0));
            assert!((a.xy - b.xy).abs() <= 1e-9 * a.xx.abs().max(1.0));
            assert!((a.yy - b.yy).abs() <= 1e-9 * a.yy.abs().max(1.0));
        }
    }

    #[test]
    fn isotropic_shape_when_estimate_vanishes() {
        // nonzero residual but z = 0 gives scalar tensors
        let mesh = TriMesh::criss_cross(3);
        let problem = tanh_problem();
        let (u, _) =
            newton_solve(&mesh, problem.functional.as_ref(), &NewtonConfig::default()).unwrap();
        let z = BubbleField::zeros(&mesh);
        let field = metric_tensor(
            &mesh,
            problem.functional.as_ref(),
            &u,
            Some(&z),
            MetricVariant::HbeeAniso,
        )
        .unwrap();
        assert!(!field.degenerate);
        for m in &field.tensors {
            let (l1, l2, _) = m.eigen();
            assert!((l1 - l2).abs() <= 1e-12 * l1);
        }
    }

    #[test]
    fn metric_eigenvectors_match_hessian() {
        let mut rng = TestRng::new(5);
        for _ in 0..50 {
            let h = SymMat2::new(
                rng.in_range(-4.0, 4.0),
                rng.in_range(-4.0, 4.0),
                rng.in_range(-4.0, 4.0),
            );
            let habs = h.abs_spd();
            let (h1, h2, hv) = habs.eigen();
            if (h1 - h2).abs() < 1e-6 {
                continue;
            }
            let alpha = rng.in_range(0.1, 10.0);
            let r = rho(rng.in_range(0.0, 5.0), alpha, &habs);
            let m = element_metric(r, alpha, &habs);
            let (_, _, mv) = m.eigen();
            // sine of the angle between the axes; asin is accurate for the
            // tiny angles asserted here, unlike acos near one
            let angle = crate::la::cross(hv, mv).abs().min(1.0).asin();
            assert!(angle < 1e-8, "angle {angle}");
        }
    }

    #[test]
    fn alignment_equality_for_matched_element_shape() {
        // with F' = c H^(-1/2) U the trace and determinant sides agree
        let mut rng = TestRng::new(23);
        for _ in 0..50 {
            let a = rng.in_range(0.2, 5.0);
            let b = rng.in_range(-1.0, 1.0);
            let c = rng.in_range(0.2, 5.0);
            let h = SymMat2::new(a, b, c).abs_spd().add(&SymMat2::identity());
            let theta = rng.in_range(0.0, std::f64::consts::TAU);
            let rot = Mat2::new(theta.cos(), -theta.sin(), theta.sin(), theta.cos());
            let s = rng.in_range(0.5, 2.0);
            let fp = h.inv_sqrt_spd(1e-300).as_mat2().mul(&rot);
            let fp = Mat2::new(
                fp.m[0][0] * s,
                fp.m[0][1] * s,
                fp.m[1][0] * s,
                fp.m[1][1] * s,
            );
            let prod = fp.transpose().mul(&h.as_mat2()).mul(&fp);
            let tr = prod.m[0][0] + prod.m[1][1];
            let det = prod.det();
            let lhs = tr / DIMENSION;
            let rhs = det.powf(1.0 / DIMENSION);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0),
                "{lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn qls_recovers_quadratics() {
        let mesh = TriMesh::criss_cross(5);
        let u = NodalField::interpolate(&mesh, |p| p[0] * p[0] + p[1] * p[1]);
        let rec = recover_hessian_qls(&mesh, &u);
        assert_eq!(rec.rank_deficient_vertices, 0);
        for k in 0..mesh.n_triangles() {
            let h = rec.element_hessians[k];
            assert!((h.xx - 2.0).abs() < 2e-8, "{h:?}");
            assert!((h.yy - 2.0).abs() < 2e-8);
            assert!(h.xy.abs() < 1e-8);
        }
        let u = NodalField::interpolate(&mesh, |p| p[0] * p[1]);
        let rec = recover_hessian_qls(&mesh, &u);
        for h in &rec.element_hessians {
            assert!(h.xx.abs() < 1e-8);
            assert!(h.yy.abs() < 1e-8);
            assert!((h.xy - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn qls_rank_deficient_patch_yields_zero_with_warning() {
        // a single triangle has only three points even after extension
        let mesh = TriMesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let u = NodalField::interpolate(&mesh, |p| p[0] * p[0]);
        let rec = recover_hessian_qls(&mesh, &u);
        assert_eq!(rec.rank_deficient_vertices, 3);
        assert_eq!(rec.element_hessians[0], SymMat2::zero());
    }

    #[test]
    fn qls_of_linear_field_is_zero() {
        let mesh = TriMesh::criss_cross(4);
        let u = NodalField::interpolate(&mesh, |p| 3.0 * p[0] - 0.5 * p[1] + 2.0);
        let rec = recover_hessian_qls(&mesh, &u);
        for h in &rec.element_hessians {
            assert!(h.xx.abs() < 1e-9 && h.xy.abs() < 1e-9 && h.yy.abs() < 1e-9);
        }
    }

    #[test]
    fn nodal_metrics_average_is_spd() {
        let mesh = TriMesh::criss_cross(4);
        let problem = tanh_problem();
        let (u, _) =
            newton_solve(&mesh, problem.functional.as_ref(), &NewtonConfig::default()).unwrap();
        let (z, _) = estimator::hbee(&mesh, problem.functional.as_ref(), &u, 0.01, 20).unwrap();
        let field = metric_tensor(
            &mesh,
            problem.functional.as_ref(),
            &u,
            Some(&z),
            MetricVariant::HbeeAniso,
        )
        .unwrap();
        for m in nodal_metrics(&mesh, &field) {
            assert!(m.is_spd());
        }
    }
}
