//! Plain `f64` 2-vector and 2×2 matrix helpers.
//!
//! Everything downstream works in ℝ² with hand-written arithmetic; the
//! quarter-turn rotation J = [[0,−1],[1,0]] shows up everywhere (the dual
//! velocity is U = J(y − ∇P*(y))), so it gets its own helper.

pub type Vec2 = [f64; 2];

#[inline]
pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn scale(s: f64, a: Vec2) -> Vec2 {
    [s * a[0], s * a[1]]
}

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// z-component of the 3-D cross product of planar vectors.
#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn norm2(a: Vec2) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: Vec2) -> f64 {
    norm2(a).sqrt()
}

/// Counter-clockwise quarter turn J v = (−v₂, v₁).
#[inline]
pub fn rot90(a: Vec2) -> Vec2 {
    [-a[1], a[0]]
}

/// Outer product a bᵀ.
#[inline]
pub fn outer(a: Vec2, b: Vec2) -> Mat2 {
    Mat2([[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]])
}

/// Row-major 2×2 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[0.0, 0.0], [0.0, 0.0]]);
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    #[inline]
    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    #[inline]
    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &o.0;
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }

    #[inline]
    pub fn add(&self, o: &Mat2) -> Mat2 {
        Mat2([
            [self.0[0][0] + o.0[0][0], self.0[0][1] + o.0[0][1]],
            [self.0[1][0] + o.0[1][0], self.0[1][1] + o.0[1][1]],
        ])
    }

    #[inline]
    pub fn sub(&self, o: &Mat2) -> Mat2 {
        Mat2([
            [self.0[0][0] - o.0[0][0], self.0[0][1] - o.0[0][1]],
            [self.0[1][0] - o.0[1][0], self.0[1][1] - o.0[1][1]],
        ])
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2([
            [s * self.0[0][0], s * self.0[0][1]],
            [s * self.0[1][0], s * self.0[1][1]],
        ])
    }

    #[inline]
    pub fn transpose(&self) -> Mat2 {
        Mat2([
            [self.0[0][0], self.0[1][0]],
            [self.0[0][1], self.0[1][1]],
        ])
    }

    #[inline]
    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    #[inline]
    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    /// Cofactor (adjugate) matrix M(A) with M(A)·A = det(A)·Id.
    #[inline]
    pub fn cofactor(&self) -> Mat2 {
        Mat2([
            [self.0[1][1], -self.0[0][1]],
            [-self.0[1][0], self.0[0][0]],
        ])
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(self.cofactor().scale(1.0 / d))
    }

    /// Eigenvalues of a symmetric matrix, descending; the caller guarantees
    /// symmetry (only the upper triangle is read).
    pub fn sym_eigenvalues(&self) -> [f64; 2] {
        let a = self.0[0][0];
        let b = self.0[0][1];
        let c = self.0[1][1];
        let mid = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        [mid + rad, mid - rad]
    }

    /// Symmetrize and clamp negative eigenvalues to zero; returns the matrix
    /// together with a flag telling whether clamping changed anything.
    pub fn psd_projection(&self) -> (Mat2, bool) {
        let sym = self.add(&self.transpose()).scale(0.5);
        let [lo_hi, lo_lo] = sym.sym_eigenvalues();
        if lo_lo >= 0.0 {
            return (sym, false);
        }
        if lo_hi <= 0.0 {
            return (Mat2::ZERO, true);
        }
        // eigenvector for lo_hi, then rank-one reconstruction lo_hi·v vᵀ
        let a = sym.0[0][0];
        let b = sym.0[0][1];
        let c = sym.0[1][1];
        let mut v = if (a - lo_hi).abs() >= (c - lo_hi).abs() {
            [b, lo_hi - a]
        } else {
            [lo_hi - c, b]
        };
        let n = norm(v);
        if n == 0.0 {
            v = [1.0, 0.0];
        } else {
            v = scale(1.0 / n, v);
        }
        (
            Mat2([
                [lo_hi * v[0] * v[0], lo_hi * v[0] * v[1]],
                [lo_hi * v[0] * v[1], lo_hi * v[1] * v[1]],
            ]),
            true,
        )
    }

    /// Operator norm of a symmetric matrix: largest |eigenvalue|.
    pub fn sym_op_norm(&self) -> f64 {
        let [hi, lo] = self.sym_eigenvalues();
        hi.abs().max(lo.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rot90_is_quarter_turn() {
        assert_eq!(rot90([1.0, 0.0]), [0.0, 1.0]);
        assert_eq!(rot90([0.0, 1.0]), [-1.0, 0.0]);
    }

    #[test]
    fn cofactor_times_matrix_is_det() {
        let a = Mat2([[2.0, 1.0], [-0.5, 3.0]]);
        let m = a.cofactor();
        let p = m.mul(&a);
        let d = a.det();
        assert!((p.0[0][0] - d).abs() < 1e-15);
        assert!((p.0[1][1] - d).abs() < 1e-15);
        assert!(p.0[0][1].abs() < 1e-15);
        assert!(p.0[1][0].abs() < 1e-15);
    }

    #[test]
    fn psd_projection_clamps_negative_part() {
        let a = Mat2([[1.0, 0.0], [0.0, -2.0]]);
        let (p, clamped) = a.psd_projection();
        assert!(clamped);
        assert_eq!(p.0, [[1.0, 0.0], [0.0, 0.0]]);

        let spd = Mat2([[2.0, 0.3], [0.3, 1.0]]);
        let (q, clamped) = spd.psd_projection();
        assert!(!clamped);
        assert_eq!(q.0, spd.0);
    }

    #[test]
    fn sym_eigenvalues_of_rotated_diagonal() {
        let (c, s) = (0.6, 0.8);
        let q = Mat2([[c, -s], [s, c]]);
        let d = Mat2([[3.0, 0.0], [0.0, 0.5]]);
        let a = q.mul(&d).mul(&q.transpose());
        let [hi, lo] = a.sym_eigenvalues();
        assert!((hi - 3.0).abs() < 1e-12);
        assert!((lo - 0.5).abs() < 1e-12);
    }
}
