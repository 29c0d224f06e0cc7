//! Monotone rearrangement of the uniform circle onto weighted atoms.
//!
//! For atoms θᵢ with masses mᵢ on the unit circle, the optimal quadratic
//! transport from Lebesgue assigns each atom an arc of length mᵢ, in the
//! cyclic order of the atoms, rotated by an offset θ₀ that zeroes the total
//! signed displacement G(θ₀) = Σᵢ mᵢ wrap(cᵢ(θ₀) − θᵢ), where cᵢ is the arc
//! center and wrap takes values in [−½, ½). G is periodic and increases
//! with slope one between jumps, so a coarse scan brackets its roots and
//! bisection refines them; among roots the one with the least transport
//! cost wins. Shear flows factor into this problem crossed with an idle
//! axis, which makes the rearrangement an independent oracle for the
//! two-dimensional solver.

use crate::torus::wrap_coord;

/// Signed circle distance in [−½, ½).
fn wrap_half(t: f64) -> f64 {
    let f = wrap_coord(t);
    if f >= 0.5 {
        f - 1.0
    } else {
        f
    }
}

/// ∫₀ᵉ wrap(t)² dt for e ∈ [0, 1].
fn arc_moment(e: f64) -> f64 {
    if e <= 0.5 {
        e * e * e / 3.0
    } else {
        let s = e - 1.0;
        1.0 / 12.0 + s * s * s / 3.0
    }
}

/// ∫ₐᵇ wrap(u − θ)² du for any a ≤ b.
fn segment_cost(a: f64, b: f64, theta: f64) -> f64 {
    let lo = a - theta;
    let hi = b - theta;
    let anti = |x: f64| x.floor() / 12.0 + arc_moment(x - x.floor());
    anti(hi) - anti(lo)
}

/// Arcs, offset and dual weights of the circle rearrangement.
#[derive(Clone, Debug)]
pub struct CircleRearrangement {
    /// Atom ids in cyclic order of angle.
    pub order: Vec<usize>,
    /// Arc endpoints, increasing: arc j = [boundaries[j], boundaries[j+1])
    /// belongs to atom order[j]; the last entry is the first plus one.
    pub boundaries: Vec<f64>,
    /// Potential weights per atom id, gauged to zero on order[0]; the arc
    /// of atom i is the power cell {u : wrap(u−θᵢ)²/2 − wᵢ minimal}.
    pub weights: Vec<f64>,
    /// Residual signed displacement at the chosen offset.
    pub residual: f64,
}

impl CircleRearrangement {
    /// Atom id owning the circle point x.
    pub fn transport(&self, x: f64) -> usize {
        let s0 = self.boundaries[0];
        let u = s0 + wrap_coord(x - s0);
        let j = match self
            .boundaries
            .binary_search_by(|b| b.partial_cmp(&u).expect("finite boundary"))
        {
            Ok(j) => j,
            Err(j) => j - 1,
        };
        self.order[j.min(self.order.len() - 1)]
    }

    /// Wrapped center of the atom's arc.
    pub fn arc_center(&self, id: usize) -> f64 {
        let j = self
            .order
            .iter()
            .position(|&o| o == id)
            .expect("known atom id");
        wrap_coord(0.5 * (self.boundaries[j] + self.boundaries[j + 1]))
    }
}

/// Displacement balance and transport cost for the offset θ₀.
fn balance(sorted: &[(f64, usize)], masses: &[f64], prefix: &[f64], t0: f64) -> (f64, f64) {
    let mut g = 0.0;
    let mut cost = 0.0;
    for (j, &(theta, id)) in sorted.iter().enumerate() {
        let m = masses[id];
        let center = t0 + prefix[j] + 0.5 * m;
        g += m * wrap_half(center - theta);
        cost += segment_cost(t0 + prefix[j], t0 + prefix[j + 1], theta);
    }
    (g, cost)
}

/// Rearrange the uniform circle onto the atoms. Masses must be positive
/// with unit sum; angles are wrapped to [0, 1).
pub fn rearrange_on_circle(thetas: &[f64], masses: &[f64]) -> CircleRearrangement {
    assert_eq!(thetas.len(), masses.len());
    assert!(!thetas.is_empty());
    let mut sorted: Vec<(f64, usize)> = thetas
        .iter()
        .enumerate()
        .map(|(i, &t)| (wrap_coord(t), i))
        .collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    let n = sorted.len();
    let mut prefix = vec![0.0; n + 1];
    for j in 0..n {
        prefix[j + 1] = prefix[j] + masses[sorted[j].1];
    }
    assert!((prefix[n] - 1.0).abs() <= 1e-9, "masses must sum to one");

    // bracket the roots of the displacement balance on a uniform scan
    const SCAN: usize = 4096;
    let eval = |t0: f64| balance(&sorted, masses, &prefix, t0);
    let mut best: Option<(f64, f64)> = None;
    let mut prev = eval(0.0).0;
    for k in 1..=SCAN {
        let hi = k as f64 / SCAN as f64;
        let cur = eval(hi).0;
        if prev <= 0.0 && cur >= 0.0 {
            let (mut lo_t, mut hi_t) = ((k - 1) as f64 / SCAN as f64, hi);
            for _ in 0..60 {
                let mid = 0.5 * (lo_t + hi_t);
                if eval(mid).0 <= 0.0 {
                    lo_t = mid;
                } else {
                    hi_t = mid;
                }
            }
            let root = 0.5 * (lo_t + hi_t);
            let (_, cost) = eval(root);
            if best.map_or(true, |(_, c)| cost < c) {
                best = Some((root, cost));
            }
        }
        prev = cur;
    }
    let (t0, _) = best.expect("a periodic increasing balance always crosses zero");

    let boundaries: Vec<f64> = prefix.iter().map(|p| t0 + p).collect();
    let order: Vec<usize> = sorted.iter().map(|&(_, id)| id).collect();
    let mut weights = vec![0.0; n];
    for j in 0..n.saturating_sub(1) {
        let s = boundaries[j + 1];
        let d_next = wrap_half(s - sorted[j + 1].0);
        let d_here = wrap_half(s - sorted[j].0);
        weights[sorted[j + 1].1] =
            weights[sorted[j].1] + 0.5 * (d_next * d_next - d_here * d_here);
    }
    let (residual, _) = eval(t0);
    CircleRearrangement {
        order,
        boundaries,
        weights,
        residual,
    }
}
