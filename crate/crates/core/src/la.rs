//! Small fixed-size linear algebra for the 2D toolkit: points, 2x2
//! matrices, symmetric 2x2 tensors and a dense Cholesky solve used by the
//! least-squares fits and the direct solver fallback.

/// A point or vector in the plane.
pub type Point = [f64; 2];

pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s]
}

pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

/// z-component of the cross product a x b.
pub fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// General 2x2 matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self {
            m: [[a, b], [c, d]],
        }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 1.0)
    }

    pub fn from_columns(c0: Point, c1: Point) -> Self {
        Self::new(c0[0], c1[0], c0[1], c1[1])
    }

    pub fn column(&self, j: usize) -> Point {
        [self.m[0][j], self.m[1][j]]
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    pub fn mul_vec(&self, v: Point) -> Point {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    pub fn mul(&self, other: &Mat2) -> Mat2 {
        let a = &self.m;
        let b = &other.m;
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Mat2::new(
            self.m[1][1] / d,
            -self.m[0][1] / d,
            -self.m[1][0] / d,
            self.m[0][0] / d,
        ))
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.m.iter().flatten().map(|v| v * v).sum()
    }

    /// Singular values (largest, smallest), computed from the eigenvalues of
    /// AᵀA. The smaller value is recovered from |det| to avoid cancellation.
    pub fn singular_values(&self) -> (f64, f64) {
        let t = self.frobenius_sq();
        let d = self.det().abs();
        let disc = (t * t - 4.0 * d * d).max(0.0).sqrt();
        let smax = (0.5 * (t + disc)).sqrt();
        let smin = if smax > 0.0 { d / smax } else { 0.0 };
        (smax, smin)
    }
}

/// Symmetric 2x2 tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMat2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymMat2 {
    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn identity() -> Self {
        Self::new(1.0, 0.0, 1.0)
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Self::new(a, 0.0, b)
    }

    /// v vᵀ
    pub fn outer(v: Point) -> Self {
        Self::new(v[0] * v[0], v[0] * v[1], v[1] * v[1])
    }

    /// a bᵀ + b aᵀ
    pub fn sym_outer(a: Point, b: Point) -> Self {
        Self::new(
            2.0 * a[0] * b[0],
            a[0] * b[1] + a[1] * b[0],
            2.0 * a[1] * b[1],
        )
    }

    pub fn add(&self, other: &SymMat2) -> SymMat2 {
        SymMat2::new(self.xx + other.xx, self.xy + other.xy, self.yy + other.yy)
    }

    pub fn scale(&self, s: f64) -> SymMat2 {
        SymMat2::new(self.xx * s, self.xy * s, self.yy * s)
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn mul_vec(&self, v: Point) -> Point {
        [
            self.xx * v[0] + self.xy * v[1],
            self.xy * v[0] + self.yy * v[1],
        ]
    }

    /// eᵀ M e
    pub fn quad_form(&self, e: Point) -> f64 {
        self.xx * e[0] * e[0] + 2.0 * self.xy * e[0] * e[1] + self.yy * e[1] * e[1]
    }

    pub fn as_mat2(&self) -> Mat2 {
        Mat2::new(self.xx, self.xy, self.xy, self.yy)
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }

    /// Eigenvalues ordered `l1 >= l2` together with the unit eigenvector of
    /// `l1`; the second eigenvector is its perpendicular.
    pub fn eigen(&self) -> (f64, f64, Point) {
        if self.xy == 0.0 {
            return if self.xx >= self.yy {
                (self.xx, self.yy, [1.0, 0.0])
            } else {
                (self.yy, self.xx, [0.0, 1.0])
            };
        }
        let half_tr = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let disc = (half_diff * half_diff + self.xy * self.xy).sqrt();
        let l1 = half_tr + disc;
        let l2 = half_tr - disc;
        // (M - l2 I) v = 0 row space gives the l1 eigenvector
        let v = [self.xy, l1 - self.xx];
        let n = norm(v);
        let v = if n > 0.0 {
            scale(v, 1.0 / n)
        } else {
            [1.0, 0.0]
        };
        (l1, l2, v)
    }

    fn recompose(l1: f64, l2: f64, v1: Point) -> SymMat2 {
        let v2 = [-v1[1], v1[0]];
        SymMat2::new(
            l1 * v1[0] * v1[0] + l2 * v2[0] * v2[0],
            l1 * v1[0] * v1[1] + l2 * v2[0] * v2[1],
            l1 * v1[1] * v1[1] + l2 * v2[1] * v2[1],
        )
    }

    /// Matrix absolute value sqrt(M²): same eigenvectors, absolute eigenvalues.
    pub fn abs_spd(&self) -> SymMat2 {
        let (l1, l2, v1) = self.eigen();
        Self::recompose(l1.abs(), l2.abs(), v1)
    }

    /// Principal square root; requires a positive semi-definite input.
    pub fn sqrt_spd(&self) -> SymMat2 {
        let (l1, l2, v1) = self.eigen();
        Self::recompose(l1.max(0.0).sqrt(), l2.max(0.0).sqrt(), v1)
    }

    /// Inverse square root; eigenvalues are floored to keep it finite.
    pub fn inv_sqrt_spd(&self, floor: f64) -> SymMat2 {
        let (l1, l2, v1) = self.eigen();
        Self::recompose(1.0 / l1.max(floor).sqrt(), 1.0 / l2.max(floor).sqrt(), v1)
    }

    /// Re-project onto the SPD cone by flooring both eigenvalues.
    pub fn floor_eigenvalues(&self, floor: f64) -> SymMat2 {
        let (l1, l2, v1) = self.eigen();
        if l2 >= floor {
            return *self;
        }
        Self::recompose(l1.max(floor), l2.max(floor), v1)
    }

    pub fn is_spd(&self) -> bool {
        self.xx > 0.0 && self.det() > 0.0
    }
}

/// Solves `A x = b` for a symmetric positive definite matrix stored row-major
/// in `a` (length n*n). Returns `None` when a pivot falls below a small
/// multiple of the largest diagonal entry, i.e. the matrix is not numerically
/// SPD.
pub fn cholesky_solve(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    let mut l = a.to_vec();
    let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(0.0_f64, f64::max);
    let tol = 1e-14 * max_diag.max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = l[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= tol {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = l[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    // forward then backward substitution
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= l[i * n + k] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            x[i] -= l[k * n + i] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    Some(x)
}
