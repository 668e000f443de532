//! Variational integrands F(x, u, ∇u) with the first and second partial
//! derivatives needed for linearized assembly, and the built-in problems
//! on the unit square.

use crate::la::{dot, Point, SymMat2};

/// A variational integrand together with its partial derivatives.
///
/// Implementations must be pure and reentrant; `d2_grad_grad` must be
/// symmetric and all derivatives consistent with finite differences of
/// `value`.
pub trait Functional: Send + Sync {
    /// F(x, u, ∇u)
    fn value(&self, x: Point, u: f64, grad: Point) -> f64;
    /// ∂F/∂u
    fn d_u(&self, x: Point, u: f64, grad: Point) -> f64;
    /// ∂F/∂∇u
    fn d_grad(&self, x: Point, u: f64, grad: Point) -> Point;
    /// ∂²F/∂u²
    fn d2_uu(&self, x: Point, u: f64, grad: Point) -> f64;
    /// ∂²F/∂u∂∇u
    fn d2_u_grad(&self, x: Point, u: f64, grad: Point) -> Point;
    /// ∂²F/∂∇u∂∇u
    fn d2_grad_grad(&self, x: Point, u: f64, grad: Point) -> SymMat2;
    /// Dirichlet boundary value.
    fn boundary_value(&self, x: Point) -> f64;
    fn exact_solution(&self, _x: Point) -> Option<f64> {
        None
    }
    fn exact_gradient(&self, _x: Point) -> Option<Point> {
        None
    }
}

/// A named problem on the unit square.
pub struct ProblemInstance {
    pub functional: Box<dyn Functional>,
    pub name: &'static str,
    pub has_exact: bool,
}

type ScalarFn = Box<dyn Fn(Point) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(Point) -> Point + Send + Sync>;

/// F = ½|∇u|² − u f with Dirichlet data g and optional exact solution.
pub struct DirichletEnergy {
    source: ScalarFn,
    boundary: ScalarFn,
    exact: Option<ScalarFn>,
    exact_grad: Option<VectorFn>,
}

pub fn dirichlet_energy(
    source: ScalarFn,
    boundary: ScalarFn,
    exact: Option<ScalarFn>,
    exact_grad: Option<VectorFn>,
) -> DirichletEnergy {
    DirichletEnergy {
        source,
        boundary,
        exact,
        exact_grad,
    }
}

impl Functional for DirichletEnergy {
    fn value(&self, x: Point, u: f64, grad: Point) -> f64 {
        0.5 * dot(grad, grad) - u * (self.source)(x)
    }
    fn d_u(&self, x: Point, _u: f64, _grad: Point) -> f64 {
        -(self.source)(x)
    }
    fn d_grad(&self, _x: Point, _u: f64, grad: Point) -> Point {
        grad
    }
    fn d2_uu(&self, _x: Point, _u: f64, _grad: Point) -> f64 {
        0.0
    }
    fn d2_u_grad(&self, _x: Point, _u: f64, _grad: Point) -> Point {
        [0.0, 0.0]
    }
    fn d2_grad_grad(&self, _x: Point, _u: f64, _grad: Point) -> SymMat2 {
        SymMat2::identity()
    }
    fn boundary_value(&self, x: Point) -> f64 {
        (self.boundary)(x)
    }
    fn exact_solution(&self, x: Point) -> Option<f64> {
        self.exact.as_ref().map(|f| f(x))
    }
    fn exact_gradient(&self, x: Point) -> Option<Point> {
        self.exact_grad.as_ref().map(|f| f(x))
    }
}

/// F = (1 + |∇u|²)^(3/4) + 1000 u_y², boundary 1 on the x-sides and 2 on
/// the y-sides (corners take the x-side value).
pub struct GradientPenalty34;

impl Functional for GradientPenalty34 {
    fn value(&self, _x: Point, _u: f64, g: Point) -> f64 {
        (1.0 + dot(g, g)).powf(0.75) + 1000.0 * g[1] * g[1]
    }
    fn d_u(&self, _x: Point, _u: f64, _g: Point) -> f64 {
        0.0
    }
    fn d_grad(&self, _x: Point, _u: f64, g: Point) -> Point {
        let c = 1.5 * (1.0 + dot(g, g)).powf(-0.25);
        [c * g[0], c * g[1] + 2000.0 * g[1]]
    }
    fn d2_uu(&self, _x: Point, _u: f64, _g: Point) -> f64 {
        0.0
    }
    fn d2_u_grad(&self, _x: Point, _u: f64, _g: Point) -> Point {
        [0.0, 0.0]
    }
    fn d2_grad_grad(&self, _x: Point, _u: f64, g: Point) -> SymMat2 {
        let q = 1.0 + dot(g, g);
        let c1 = 1.5 * q.powf(-0.25);
        let c2 = -0.75 * q.powf(-1.25);
        SymMat2::identity()
            .scale(c1)
            .add(&SymMat2::outer(g).scale(c2))
            .add(&SymMat2::diag(0.0, 2000.0))
    }
    fn boundary_value(&self, x: Point) -> f64 {
        let eps = 1e-12;
        if x[0] < eps || x[0] > 1.0 - eps {
            1.0
        } else {
            2.0
        }
    }
}

pub fn gradient_penalty_34() -> GradientPenalty34 {
    GradientPenalty34
}

/// F = (p − u)² + (1 + |∇u|²)^(1/2) with the observed image
/// p = 1 / (1 + exp(1000 (x + y − 1.25))) and boundary data u = p.
pub struct ImageEnergy;

/// Numerically stable logistic; p stays in (0, 1) without overflow.
pub fn observed_image(x: Point) -> f64 {
    let z = -1000.0 * (x[0] + x[1] - 1.25);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Functional for ImageEnergy {
    fn value(&self, x: Point, u: f64, g: Point) -> f64 {
        let d = observed_image(x) - u;
        d * d + (1.0 + dot(g, g)).sqrt()
    }
    fn d_u(&self, x: Point, u: f64, _g: Point) -> f64 {
        -2.0 * (observed_image(x) - u)
    }
    fn d_grad(&self, _x: Point, _u: f64, g: Point) -> Point {
        let c = 1.0 / (1.0 + dot(g, g)).sqrt();
        [c * g[0], c * g[1]]
    }
    fn d2_uu(&self, _x: Point, _u: f64, _g: Point) -> f64 {
        2.0
    }
    fn d2_u_grad(&self, _x: Point, _u: f64, _g: Point) -> Point {
        [0.0, 0.0]
    }
    fn d2_grad_grad(&self, _x: Point, _u: f64, g: Point) -> SymMat2 {
        let q = 1.0 + dot(g, g);
        let c1 = q.powf(-0.5);
        let c2 = -q.powf(-1.5);
        SymMat2::identity()
            .scale(c1)
            .add(&SymMat2::outer(g).scale(c2))
    }
    fn boundary_value(&self, x: Point) -> f64 {
        observed_image(x)
    }
}

pub fn image_energy() -> ImageEnergy {
    ImageEnergy
}

fn sech(t: f64) -> f64 {
    // 2 e^-|t| / (1 + e^-2|t|) avoids overflow of cosh for large |t|
    let e = (-t.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

/// Exact solution of the first built-in problem: the interaction of a
/// boundary layer along x = 0 with an interior front along y = x - 0.5.
pub fn tanh_exact(x: Point) -> f64 {
    let w = 60.0 * (x[0] - x[1]) - 30.0;
    (60.0 * x[0]).tanh() - w.tanh()
}

pub fn tanh_exact_gradient(x: Point) -> Point {
    let s0 = sech(60.0 * x[0]);
    let w = 60.0 * (x[0] - x[1]) - 30.0;
    let sw = sech(w);
    [60.0 * s0 * s0 - 60.0 * sw * sw, 60.0 * sw * sw]
}

/// Source term f = -Δ of the exact solution, derived analytically.
pub fn tanh_source(x: Point) -> f64 {
    let t0 = (60.0 * x[0]).tanh();
    let s0 = sech(60.0 * x[0]);
    let w = 60.0 * (x[0] - x[1]) - 30.0;
    let tw = w.tanh();
    let sw = sech(w);
    7200.0 * t0 * s0 * s0 - 14400.0 * tw * sw * sw
}

/// Quadratic model problem whose minimizer is `tanh_exact`.
pub fn tanh_problem() -> ProblemInstance {
    ProblemInstance {
        functional: Box::new(dirichlet_energy(
            Box::new(tanh_source),
            Box::new(tanh_exact),
            Some(Box::new(tanh_exact)),
            Some(Box::new(tanh_exact_gradient)),
        )),
        name: "tanh",
        has_exact: true,
    }
}

/// Non-quadratic problem with steep layers at x = 0 and x = 1.
pub fn aniso_problem() -> ProblemInstance {
    ProblemInstance {
        functional: Box::new(gradient_penalty_34()),
        name: "aniso",
        has_exact: false,
    }
}

/// Image reconstruction energy with a steep front along x + y = 1.25.
pub fn image_problem() -> ProblemInstance {
    ProblemInstance {
        functional: Box::new(image_energy()),
        name: "image",
        has_exact: false,
    }
}

/// Looks up a built-in problem by CLI name.
pub fn problem_by_name(name: &str) -> Option<ProblemInstance> {
    match name {
        "tanh" => Some(tanh_problem()),
        "aniso" => Some(aniso_problem()),
        "image" => Some(image_problem()),
        _ => None,
    }
}
