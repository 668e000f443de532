//! Acceptance suite: every criterion runs at its stated tolerance and
//! prints one PASS/FAIL line (run with `--nocapture` to see them live).

use std::sync::OnceLock;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use anisoadapt::driver::{adaptive_loop, convergence_study, RunConfig, RunResult};
use anisoadapt::estimator::{self, BubbleField};
use anisoadapt::fem::{self, NewtonConfig, NodalField};
use anisoadapt::functional::{
    aniso_problem, dirichlet_energy, gradient_penalty_34, image_energy, image_problem,
    tanh_problem, Functional, ProblemInstance,
};
use anisoadapt::la::{Mat2, SymMat2};
use anisoadapt::mesh::TriMesh;
use anisoadapt::metric::{self, MetricVariant, DIMENSION};

fn verdict(criterion: usize, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

struct TanhRuns {
    hbee: RunResult,
    isotropic: RunResult,
    hessian: RunResult,
}

fn tanh_config() -> RunConfig {
    RunConfig {
        target_elements: 1250,
        ..RunConfig::default()
    }
}

fn tanh_runs() -> &'static TanhRuns {
    static RUNS: OnceLock<TanhRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let problem = tanh_problem();
        TanhRuns {
            hbee: adaptive_loop(&problem, MetricVariant::HbeeAniso, &tanh_config()).unwrap(),
            isotropic: adaptive_loop(&problem, MetricVariant::Isotropic, &tanh_config()).unwrap(),
            hessian: adaptive_loop(&problem, MetricVariant::HessianAniso, &tanh_config()).unwrap(),
        }
    })
}

fn final_stats(run: &RunResult) -> (usize, f64, f64) {
    let rec = run.report.records.last().unwrap();
    (
        rec.elements,
        rec.h1_error.unwrap_or(f64::NAN),
        rec.aspect_max,
    )
}

#[test]
fn criterion_1_tanh_anisotropic_hbee() {
    let (elements, error, aspect) = final_stats(&tanh_runs().hbee);
    let pass = (1000..=1600).contains(&elements) && (0.3..=1.2).contains(&error) && aspect >= 10.0;
    verdict(
        1,
        pass,
        &format!("hbee-aniso: {elements} elements, error {error:.3}, max aspect ratio {aspect:.1}"),
    );
}

#[test]
fn criterion_2_tanh_isotropic_and_advantage() {
    let runs = tanh_runs();
    let (elements, error, aspect) = final_stats(&runs.isotropic);
    let (_, hbee_error, _) = final_stats(&runs.hbee);
    let pass = (1000..=1600).contains(&elements)
        && (1.4..=5.6).contains(&error)
        && aspect <= 5.0
        && hbee_error < 0.5 * error;
    verdict(
        2,
        pass,
        &format!(
            "isotropic: {elements} elements, error {error:.3}, max aspect ratio {aspect:.1}; anisotropic/isotropic error ratio {:.3}",
            hbee_error / error
        ),
    );
}

#[test]
fn criterion_3_hessian_recovery_comparable() {
    let runs = tanh_runs();
    let (_, hbee_error, _) = final_stats(&runs.hbee);
    let (_, hessian_error, _) = final_stats(&runs.hessian);
    let ratio = hessian_error / hbee_error;
    let pass = (0.5..=2.0).contains(&ratio);
    verdict(
        3,
        pass,
        &format!("hessian-aniso error {hessian_error:.3} vs hbee-aniso {hbee_error:.3} (ratio {ratio:.2})"),
    );
}

#[test]
fn criterion_4_convergence_trend() {
    let problem = tanh_problem();
    let rows = convergence_study(
        &problem,
        MetricVariant::HbeeAniso,
        &[400, 800, 1600, 3200],
        &RunConfig::default(),
    )
    .unwrap();
    let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1);
    let err800 = rows.iter().find(|r| r.0 == 800).unwrap().1;
    let err3200 = rows.iter().find(|r| r.0 == 3200).unwrap().1;
    let ratio = err3200 / err800;
    let pass = decreasing && ratio <= 0.6;
    verdict(
        4,
        pass,
        &format!(
            "errors {:?}, err(3200)/err(800) = {ratio:.3}",
            rows.iter()
                .map(|r| (r.0, (r.1 * 1e3).round() / 1e3))
                .collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_5_nonquadratic_experiments() {
    let config = RunConfig {
        target_elements: 1200,
        ..RunConfig::default()
    };
    let aniso_hbee = adaptive_loop(&aniso_problem(), MetricVariant::HbeeAniso, &config).unwrap();
    let image_hbee = adaptive_loop(&image_problem(), MetricVariant::HbeeAniso, &config).unwrap();
    let aniso_iso = adaptive_loop(&aniso_problem(), MetricVariant::Isotropic, &config).unwrap();
    let image_iso = adaptive_loop(&image_problem(), MetricVariant::Isotropic, &config).unwrap();

    let aniso_ar = aniso_hbee.report.records.last().unwrap().aspect_max;
    // high-aspect elements of the 4.2 run concentrate in the boundary strips
    let mesh = &aniso_hbee.mesh;
    let mut high = 0usize;
    let mut high_in_strips = 0usize;
    for k in 0..mesh.n_triangles() {
        if mesh.aspect_ratio(k).unwrap() > 10.0 {
            high += 1;
            if mesh
                .triangle_points(k)
                .iter()
                .any(|p| p[0] < 0.1 || p[0] > 0.9)
            {
                high_in_strips += 1;
            }
        }
    }
    let concentrated = high > 0 && high_in_strips as f64 >= 0.9 * high as f64;
    let image_ar = image_hbee.report.records.last().unwrap().aspect_max;
    let iso_ars = [
        aniso_iso.report.records.last().unwrap().aspect_max,
        image_iso.report.records.last().unwrap().aspect_max,
    ];
    let pass = aniso_ar >= 10.0
        && concentrated
        && (2.0..=10.0).contains(&image_ar)
        && iso_ars.iter().all(|&a| a <= 5.0)
        && aniso_hbee.report.records.last().unwrap().elements > 0
        && image_hbee.report.records.last().unwrap().elements > 0;
    verdict(
        5,
        pass,
        &format!(
            "gradient-penalty aspect {aniso_ar:.1} ({high_in_strips}/{high} high-aspect in strips), image aspect {image_ar:.1}, isotropic aspects {:.1}/{:.1}",
            iso_ars[0], iso_ars[1]
        ),
    );
}

// independent central-difference oracle for the derivative suite
fn fd_check(f: &dyn Functional, rng: &mut StdRng, states: usize) -> (f64, usize) {
    let h = 1e-5;
    let mut worst = 0.0_f64;
    let mut checked = 0usize;
    let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(1.0);
    for _ in 0..states {
        let x = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
        let u = rng.gen_range(-2.0..2.0);
        let g = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        worst = worst.max(rel(
            f.d_u(x, u, g),
            (f.value(x, u + h, g) - f.value(x, u - h, g)) / (2.0 * h),
        ));
        worst = worst.max(rel(
            f.d2_uu(x, u, g),
            (f.d_u(x, u + h, g) - f.d_u(x, u - h, g)) / (2.0 * h),
        ));
        for i in 0..2 {
            let mut gp = g;
            let mut gm = g;
            gp[i] += h;
            gm[i] -= h;
            worst = worst.max(rel(
                f.d_grad(x, u, g)[i],
                (f.value(x, u, gp) - f.value(x, u, gm)) / (2.0 * h),
            ));
            worst = worst.max(rel(
                f.d2_u_grad(x, u, g)[i],
                (f.d_u(x, u, gp) - f.d_u(x, u, gm)) / (2.0 * h),
            ));
            for j in 0..2 {
                let m = f.d2_grad_grad(x, u, g);
                let entry = match (i, j) {
                    (0, 0) => m.xx,
                    (1, 1) => m.yy,
                    _ => m.xy,
                };
                worst = worst.max(rel(
                    entry,
                    (f.d_grad(x, u, gp)[j] - f.d_grad(x, u, gm)[j]) / (2.0 * h),
                ));
            }
        }
        checked += 1;
    }
    (worst, checked)
}

#[test]
fn criterion_6_derivative_consistency() {
    let mut rng = StdRng::seed_from_u64(20260808);
    let functionals: Vec<(&str, Box<dyn Functional>)> = vec![
        ("tanh", tanh_problem().functional),
        ("gradient-penalty", Box::new(gradient_penalty_34())),
        ("image", Box::new(image_energy())),
    ];
    let mut worst = 0.0_f64;
    for (_, f) in &functionals {
        let (w, n) = fd_check(f.as_ref(), &mut rng, 100);
        assert_eq!(n, 100);
        worst = worst.max(w);
    }

    // the linearization matches the directional derivative of the first
    // variation
    let mesh = TriMesh::criss_cross(4);
    let f = image_energy();
    let n = mesh.n_vertices();
    let rand_field = |rng: &mut StdRng| NodalField {
        values: (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    };
    let u = rand_field(&mut rng);
    let v = rand_field(&mut rng);
    let w = rand_field(&mut rng);
    let eps = 1e-5;
    let delta_dot_w = |field: &NodalField| -> f64 {
        let mut s = 0.0;
        for k in 0..mesh.n_triangles() {
            let area = mesh.area(k);
            let gu = field.gradient_on(&mesh, k);
            let gw = w.gradient_on(&mesh, k);
            let rule = anisoadapt::quadrature::triangle_degree4();
            for (bary, wt) in rule.points.iter().zip(&rule.weights) {
                let x = mesh.point_at(k, *bary);
                let uv = field.value_on(&mesh, k, *bary);
                let wv = w.value_on(&mesh, k, *bary);
                s += area
                    * wt
                    * (f.d_u(x, uv, gu) * wv + anisoadapt::la::dot(f.d_grad(x, uv, gu), gw));
            }
        }
        s
    };
    let shift = |sign: f64| NodalField {
        values: u
            .values
            .iter()
            .zip(&v.values)
            .map(|(a, b)| a + sign * eps * b)
            .collect(),
    };
    let fd = (delta_dot_w(&shift(1.0)) - delta_dot_w(&shift(-1.0))) / (2.0 * eps);
    let mut bvw = 0.0;
    for k in 0..mesh.n_triangles() {
        let t = mesh.triangle(k);
        let local = fem::element_linearization(&mesh, &f, &u, k);
        for i in 0..3 {
            for j in 0..3 {
                bvw += w.values[t[i]] * local[i][j] * v.values[t[j]];
            }
        }
    }
    let b_rel = (fd - bvw).abs() / bvw.abs().max(1.0);
    let pass = worst < 1e-6 && b_rel < 1e-5;
    verdict(
        6,
        pass,
        &format!("worst derivative mismatch {worst:.2e} (tol 1e-6), linearization vs directional derivative {b_rel:.2e} (tol 1e-5)"),
    );
}

#[test]
fn criterion_7_metric_identities() {
    // determinant identity and normalization residual on every produced
    // field: the three tanh runs plus all four variants on a fresh solve
    let mut fields: Vec<(String, f64, metric::MetricField)> = Vec::new();
    {
        let runs = tanh_runs();
        for (name, run) in [
            ("run hbee-aniso", &runs.hbee),
            ("run isotropic", &runs.isotropic),
            ("run hessian-aniso", &runs.hessian),
        ] {
            fields.push((name.to_string(), run.mesh.total_area(), run.metric.clone()));
        }
    }
    let problem = tanh_problem();
    let mesh = TriMesh::uniform_grid(16, 16);
    let (u, _) =
        fem::newton_solve(&mesh, problem.functional.as_ref(), &NewtonConfig::default()).unwrap();
    let (z, _) = estimator::hbee(&mesh, problem.functional.as_ref(), &u, 0.01, 20).unwrap();
    for variant in MetricVariant::ALL {
        let field =
            metric::metric_tensor(&mesh, problem.functional.as_ref(), &u, Some(&z), variant)
                .unwrap();
        fields.push((format!("variant {variant}"), mesh.total_area(), field));
    }
    let mut worst_det = 0.0_f64;
    let mut worst_alpha = 0.0_f64;
    for (name, domain_area, field) in &fields {
        assert!(!field.degenerate, "{name} unexpectedly degenerate");
        for (m, r) in field.tensors.iter().zip(&field.rho) {
            worst_det = worst_det.max((m.det() - r * r).abs() / (r * r));
        }
        let target = 2.0 * domain_area;
        worst_alpha = worst_alpha.max((field.sigma - target).abs() / target);
    }

    // alignment equality for synthetically matched element shapes
    let mut rng = StdRng::seed_from_u64(77);
    let mut worst_align = 0.0_f64;
    for _ in 0..100 {
        let h = SymMat2::new(
            rng.gen_range(-4.0..4.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-4.0..4.0),
        )
        .abs_spd()
        .add(&SymMat2::identity());
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let s: f64 = rng.gen_range(0.5..2.0);
        let rot = Mat2::new(theta.cos(), -theta.sin(), theta.sin(), theta.cos());
        let base = h.inv_sqrt_spd(1e-300).as_mat2().mul(&rot);
        let fp = Mat2::new(
            base.m[0][0] * s,
            base.m[0][1] * s,
            base.m[1][0] * s,
            base.m[1][1] * s,
        );
        let prod = fp.transpose().mul(&h.as_mat2()).mul(&fp);
        let tr = prod.m[0][0] + prod.m[1][1];
        let lhs = tr / DIMENSION;
        let rhs = prod.det().powf(1.0 / DIMENSION);
        worst_align = worst_align.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    let pass = worst_det <= 1e-10 && worst_alpha <= 1e-8 && worst_align <= 1e-10;
    verdict(
        7,
        pass,
        &format!("worst det(M)-ρ² deviation {worst_det:.2e} (tol 1e-10), worst normalization residual {worst_alpha:.2e} (tol 1e-8), alignment equality deviation {worst_align:.2e} (tol 1e-10)"),
    );
}

fn principal_angle(a: &SymMat2, b: &SymMat2) -> Option<f64> {
    let iso = |m: &SymMat2| {
        let (l1, l2, _) = m.eigen();
        l1 / l2 < 1.01
    };
    match (iso(a), iso(b)) {
        (true, true) => None, // no directional information to disagree on
        _ => {
            let (_, _, va) = a.eigen();
            let (_, _, vb) = b.eigen();
            Some(anisoadapt::la::cross(va, vb).abs().min(1.0).asin())
        }
    }
}

#[test]
fn criterion_8_gauss_seidel_estimate_suffices() {
    let problem = tanh_problem();
    let f = problem.functional.as_ref();
    let mesh = TriMesh::uniform_grid(16, 16);
    let (u, _) = fem::newton_solve(&mesh, f, &NewtonConfig::default()).unwrap();
    let system = estimator::assemble_error_problem(&mesh, f, &u).unwrap();
    let (z_gs, sweeps) = estimator::hbee(&mesh, f, &u, 0.01, 20).unwrap();
    // oracle: direct solve of the same system
    let mut z_exact = BubbleField::zeros(&mesh);
    z_exact.values = system.solve_dense().unwrap();
    let field_gs =
        metric::metric_tensor(&mesh, f, &u, Some(&z_gs), MetricVariant::HbeeAniso).unwrap();
    let field_exact =
        metric::metric_tensor(&mesh, f, &u, Some(&z_exact), MetricVariant::HbeeAniso).unwrap();
    let mut agree = 0usize;
    for k in 0..mesh.n_triangles() {
        match principal_angle(&field_gs.tensors[k], &field_exact.tensors[k]) {
            None => agree += 1,
            Some(angle) => {
                if angle < 15.0_f64.to_radians() {
                    agree += 1;
                }
            }
        }
    }
    let fraction = agree as f64 / mesh.n_triangles() as f64;
    let pass = fraction >= 0.9;
    verdict(
        8,
        pass,
        &format!(
            "metric direction agreement {:.1}% over {} elements ({sweeps} sweeps at rtol 0.01)",
            100.0 * fraction,
            mesh.n_triangles()
        ),
    );
}

#[test]
fn criterion_9_patch_test() {
    let problem = ProblemInstance {
        functional: Box::new(dirichlet_energy(
            Box::new(|_| 0.0),
            Box::new(|x| x[0] + x[1]),
            Some(Box::new(|x| x[0] + x[1])),
            Some(Box::new(|_| [1.0, 1.0])),
        )),
        name: "patch",
        has_exact: true,
    };
    let f = problem.functional.as_ref();
    let mesh = TriMesh::criss_cross(8);
    let (u, _) = fem::newton_solve(&mesh, f, &NewtonConfig::default()).unwrap();
    let mut worst_u = 0.0_f64;
    for (i, &value) in u.values.iter().enumerate() {
        let p = mesh.vertex(i);
        worst_u = worst_u.max((value - (p[0] + p[1])).abs());
    }
    let ind = estimator::indicators(&mesh, f, &u);
    let worst_r = ind.element_residual.iter().copied().fold(0.0_f64, f64::max);
    let worst_jump = ind.edge_jump.iter().copied().fold(0.0_f64, f64::max);
    let (z, _) = estimator::hbee(&mesh, f, &u, 0.01, 20).unwrap();
    let worst_z = z
        .values
        .iter()
        .copied()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let field = metric::metric_tensor(&mesh, f, &u, Some(&z), MetricVariant::HbeeAniso).unwrap();
    let pass = worst_u <= 1e-10
        && worst_r <= 1e-10
        && worst_jump <= 1e-10
        && worst_z <= 1e-10
        && field.degenerate
        && field.alpha.is_infinite();
    verdict(
        9,
        pass,
        &format!("solution error {worst_u:.2e}, residual {worst_r:.2e}, jump {worst_jump:.2e}, estimate {worst_z:.2e}, degenerate fallback {}",
            field.degenerate),
    );
}
