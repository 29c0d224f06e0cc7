//! Canonical coordinates on the flat unit torus T² = [0,1)².
//!
//! Points are stored wrapped into [0,1)². Displacements between points are
//! *lifts*: real-plane vectors v with p + v ≡ q (mod ℤ²). The minimal lift
//! realizes the torus distance d(p,q) = |v|, is componentwise ≤ 1/2 in
//! absolute value, and is therefore bounded by the torus diameter √2/2.

use crate::vec2::{norm, sub, Vec2};
use thiserror::Error;

/// Torus diameter, the largest possible minimal-lift length.
pub const TORUS_DIAMETER: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Error, PartialEq)]
pub enum TorusError {
    #[error("non-finite coordinate {value} at component {component}")]
    NonFinite { component: usize, value: f64 },
}

/// Wrap one coordinate into [0,1). `x - floor(x)` can round up to exactly
/// 1.0 for tiny negative inputs, so that case is folded back to 0.
#[inline]
pub fn wrap_coord(x: f64) -> f64 {
    let y = x - x.floor();
    if y >= 1.0 {
        y - 1.0
    } else {
        y
    }
}

/// Componentwise wrap of a real vector into [0,1)²; rejects non-finite input.
pub fn canonicalize(x: Vec2) -> Result<TorusPoint, TorusError> {
    for (component, &value) in x.iter().enumerate() {
        if !value.is_finite() {
            return Err(TorusError::NonFinite { component, value });
        }
    }
    Ok(TorusPoint {
        c: [wrap_coord(x[0]), wrap_coord(x[1])],
    })
}

/// A point of T² held in canonical coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusPoint {
    c: Vec2,
}

impl TorusPoint {
    pub fn new(x: Vec2) -> Result<Self, TorusError> {
        canonicalize(x)
    }

    /// Wrap without the finiteness check, for hot paths where the input is
    /// already known to be finite.
    #[inline]
    pub fn wrap(x: Vec2) -> Self {
        debug_assert!(x[0].is_finite() && x[1].is_finite());
        TorusPoint {
            c: [wrap_coord(x[0]), wrap_coord(x[1])],
        }
    }

    #[inline]
    pub fn coords(&self) -> Vec2 {
        self.c
    }
}

/// A real-plane displacement identified with a torus translation.
pub type LiftVector = Vec2;

/// Representative of d mod 1 in [−1/2, 1/2); the half-integer tie goes to
/// −1/2, which makes the 2-D tie-break lexicographically smallest.
#[inline]
fn min_image_coord(d: f64) -> f64 {
    if d >= 0.5 {
        d - 1.0
    } else if d < -0.5 {
        d + 1.0
    } else {
        d
    }
}

/// Componentwise minimal image of a raw difference of canonical coordinates.
#[inline]
pub fn min_image(d: Vec2) -> LiftVector {
    [min_image_coord(d[0]), min_image_coord(d[1])]
}

/// Minimal lift from `p` to `q`: the shortest v with p + v ≡ q (mod ℤ²).
#[inline]
pub fn minimal_lift(p: TorusPoint, q: TorusPoint) -> LiftVector {
    min_image(sub(q.coords(), p.coords()))
}

/// Geodesic distance on T².
#[inline]
pub fn torus_distance(p: TorusPoint, q: TorusPoint) -> f64 {
    norm(minimal_lift(p, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonicalize_wraps_into_unit_square() {
        assert_eq!(canonicalize([1.25, -0.25]).unwrap().coords(), [0.25, 0.75]);
        assert_eq!(canonicalize([3.0, -2.0]).unwrap().coords(), [0.0, 0.0]);
    }

    #[test]
    fn canonicalize_rejects_non_finite() {
        assert!(canonicalize([f64::NAN, 0.0]).is_err());
        assert!(canonicalize([0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn tiny_negative_wraps_below_one() {
        let y = wrap_coord(-1e-18);
        assert!((0.0..1.0).contains(&y));
    }

    #[test]
    fn minimal_lift_crosses_the_seam() {
        let p = TorusPoint::new([0.875, 0.125]).unwrap();
        let q = TorusPoint::new([0.125, 0.875]).unwrap();
        assert_eq!(minimal_lift(p, q), [0.25, -0.25]);
    }

    #[test]
    fn half_integer_tie_breaks_lexicographically() {
        let p = TorusPoint::new([0.25, 0.25]).unwrap();
        let q = TorusPoint::new([0.75, 0.75]).unwrap();
        assert_eq!(minimal_lift(p, q), [-0.5, -0.5]);
    }

    proptest! {
        #[test]
        fn lift_is_componentwise_at_most_half(
            px in 0.0..1.0f64, py in 0.0..1.0f64,
            qx in 0.0..1.0f64, qy in 0.0..1.0f64,
        ) {
            let v = minimal_lift(TorusPoint::wrap([px, py]), TorusPoint::wrap([qx, qy]));
            prop_assert!(v[0] >= -0.5 && v[0] < 0.5 + 1e-16);
            prop_assert!(v[1] >= -0.5 && v[1] < 0.5 + 1e-16);
            prop_assert!(norm(v) <= TORUS_DIAMETER + 1e-15);
        }

        #[test]
        fn lift_is_antisymmetric_away_from_ties(
            px in 0.0..1.0f64, py in 0.0..1.0f64,
            qx in 0.0..1.0f64, qy in 0.0..1.0f64,
        ) {
            let p = TorusPoint::wrap([px, py]);
            let q = TorusPoint::wrap([qx, qy]);
            let v = minimal_lift(p, q);
            prop_assume!(v[0].abs() != 0.5 && v[1].abs() != 0.5);
            let w = minimal_lift(q, p);
            prop_assert_eq!(v[0], -w[0]);
            prop_assert_eq!(v[1], -w[1]);
        }

        #[test]
        fn integer_shifts_cancel(
            x in 0.0..1.0f64, y in 0.0..1.0f64,
            hx in -3i32..4, hy in -3i32..4,
        ) {
            let shifted = canonicalize([x + hx as f64, y + hy as f64]).unwrap().coords();
            prop_assert!((shifted[0] - x).abs() < 1e-14);
            prop_assert!((shifted[1] - y).abs() < 1e-14);
        }

        #[test]
        fn distance_realizes_lift(
            px in 0.0..1.0f64, py in 0.0..1.0f64,
            qx in 0.0..1.0f64, qy in 0.0..1.0f64,
        ) {
            let p = TorusPoint::wrap([px, py]);
            let q = TorusPoint::wrap([qx, qy]);
            // the minimal lift is no longer than any of the nine direct lifts
            let d = torus_distance(p, q);
            for sx in -1..=1 {
                for sy in -1..=1 {
                    let cand = [
                        qx + sx as f64 - px,
                        qy + sy as f64 - py,
                    ];
                    prop_assert!(d <= norm(cand) + 1e-15);
                }
            }
        }
    }
}
