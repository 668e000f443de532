//! Quadrature rules: symmetric rules on the reference triangle expressed in
//! barycentric coordinates (weights sum to one, integrals scale by |K|) and
//! Gauss rules on the unit interval for edge integrals.

/// A rule on the reference triangle. `points` are barycentric, `weights`
/// sum to one so that `∫_K f = |K| Σ w_q f(x_q)`.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

/// Symmetric 6-point rule, exact for polynomials of total degree 4.
pub fn triangle_degree4() -> TriangleRule {
    let a1 = 0.445_948_490_915_964_9;
    let w1 = 0.223_381_589_678_011_47;
    let a2 = 0.091_576_213_509_770_74;
    let w2 = 0.109_951_743_655_321_87;
    let b1 = 1.0 - 2.0 * a1;
    let b2 = 1.0 - 2.0 * a2;
    TriangleRule {
        points: vec![
            [b1, a1, a1],
            [a1, b1, a1],
            [a1, a1, b1],
            [b2, a2, a2],
            [a2, b2, a2],
            [a2, a2, b2],
        ],
        weights: vec![w1, w1, w1, w2, w2, w2],
    }
}

/// Symmetric 7-point rule, exact for polynomials of total degree 5.
pub fn triangle_degree5() -> TriangleRule {
    let s15 = 15.0_f64.sqrt();
    let a1 = (6.0 + s15) / 21.0;
    let w1 = (155.0 + s15) / 1200.0;
    let a2 = (6.0 - s15) / 21.0;
    let w2 = (155.0 - s15) / 1200.0;
    let b1 = 1.0 - 2.0 * a1;
    let b2 = 1.0 - 2.0 * a2;
    let third = 1.0 / 3.0;
    TriangleRule {
        points: vec![
            [third, third, third],
            [b1, a1, a1],
            [a1, b1, a1],
            [a1, a1, b1],
            [b2, a2, a2],
            [a2, b2, a2],
            [a2, a2, b2],
        ],
        weights: vec![9.0 / 40.0, w1, w1, w1, w2, w2, w2],
    }
}

/// 3-point Gauss rule on the unit interval; weights sum to one, exact to
/// degree 5.
#[derive(Clone, Copy, Debug)]
pub struct EdgeRule {
    pub points: [f64; 3],
    pub weights: [f64; 3],
}

pub fn edge_gauss3() -> EdgeRule {
    let r = 0.5 * 0.6_f64.sqrt();
    EdgeRule {
        points: [0.5 - r, 0.5, 0.5 + r],
        weights: [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0],
    }
}
