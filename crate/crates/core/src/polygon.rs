//! Convex polygon clipping with provenance-tagged edges.
//!
//! Polygons are counter-clockwise vertex lists; `tags[k]` records which
//! half-plane generated the edge from vertex k to vertex k+1, which is how
//! Laguerre cells remember their neighbors. Clipping is Sutherland–Hodgman
//! against one closed half-plane {x : n·x ≤ c} at a time. Signed distances
//! within `CLIP_EPS` of the boundary count as inside, so grazing planes are
//! exact byte-level no-ops and near-degenerate corner contacts do not spawn
//! sliver edges. The empty polygon is representable: an empty Laguerre cell
//! is data for the damping logic, not an error.

use crate::vec2::{add, cross, dot, scale, sub, Vec2};

/// Inside tolerance for clip predicates.
pub const CLIP_EPS: f64 = 1e-12;

/// Closed half-plane {x : n·x ≤ c}.
#[derive(Clone, Copy, Debug)]
pub struct HalfPlane {
    pub n: Vec2,
    pub c: f64,
}

/// Reused storage for `clip_halfplane`, avoiding per-call allocation.
#[derive(Clone, Debug, Default)]
pub struct ClipScratch<T: Copy> {
    verts: Vec<Vec2>,
    tags: Vec<T>,
    dist: Vec<f64>,
}

impl<T: Copy> ClipScratch<T> {
    pub fn new() -> Self {
        ClipScratch {
            verts: Vec::new(),
            tags: Vec::new(),
            dist: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ConvexPolygon<T: Copy> {
    pub verts: Vec<Vec2>,
    pub tags: Vec<T>,
}

impl<T: Copy> ConvexPolygon<T> {
    pub fn new() -> Self {
        ConvexPolygon {
            verts: Vec::new(),
            tags: Vec::new(),
        }
    }

    /// Axis-aligned unit square centered at the origin, counter-clockwise
    /// from the lower-left corner. `side_tags` label the bottom, right, top
    /// and left edges in that order.
    pub fn unit_window(side_tags: [T; 4]) -> Self {
        ConvexPolygon {
            verts: vec![[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]],
            tags: vec![side_tags[0], side_tags[1], side_tags[2], side_tags[3]],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.verts.is_empty()
    }

    /// Clip against a half-plane, tagging any new chord edge with `tag`.
    /// Returns false when the polygon was untouched (all vertices inside),
    /// in which case the vertex bytes are guaranteed unchanged.
    pub fn clip_halfplane(
        &mut self,
        hp: HalfPlane,
        tag: T,
        scratch: &mut ClipScratch<T>,
    ) -> bool {
        let m = self.verts.len();
        if m == 0 {
            return false;
        }
        let mut all_inside = true;
        let mut any_inside = false;
        scratch.dist.clear();
        for v in &self.verts {
            let d = dot(*v, hp.n) - hp.c;
            if d > CLIP_EPS {
                all_inside = false;
            } else {
                any_inside = true;
            }
            scratch.dist.push(d);
        }
        if all_inside {
            return false;
        }
        if !any_inside {
            self.verts.clear();
            self.tags.clear();
            return true;
        }

        scratch.verts.clear();
        scratch.tags.clear();
        for k in 0..m {
            let k_next = if k + 1 == m { 0 } else { k + 1 };
            let v = self.verts[k];
            let w = self.verts[k_next];
            let dv = scratch.dist[k];
            let dw = scratch.dist[k_next];
            let inside_v = dv <= CLIP_EPS;
            let inside_w = dw <= CLIP_EPS;
            if inside_v {
                scratch.verts.push(v);
                scratch.tags.push(self.tags[k]);
                if !inside_w {
                    // leaving: the chord along the clip line starts here
                    scratch.verts.push(intersect(v, w, dv, dw));
                    scratch.tags.push(tag);
                }
            } else if inside_w {
                // entering: the remainder of edge k keeps its tag
                scratch.verts.push(intersect(v, w, dv, dw));
                scratch.tags.push(self.tags[k]);
            }
        }
        if scratch.verts.len() < 3 {
            scratch.verts.clear();
            scratch.tags.clear();
        }
        std::mem::swap(&mut self.verts, &mut scratch.verts);
        std::mem::swap(&mut self.tags, &mut scratch.tags);
        true
    }

    /// Shoelace area; zero for degenerate polygons.
    pub fn area(&self) -> f64 {
        let m = self.verts.len();
        if m < 3 {
            return 0.0;
        }
        let mut s = 0.0;
        for k in 0..m {
            let k_next = if k + 1 == m { 0 } else { k + 1 };
            s += cross(self.verts[k], self.verts[k_next]);
        }
        0.5 * s
    }

    /// Area-weighted centroid; falls back to the vertex mean when the area
    /// is too small for the shoelace formula to be trustworthy.
    pub fn centroid(&self) -> Vec2 {
        let m = self.verts.len();
        if m == 0 {
            return [0.0, 0.0];
        }
        let a = self.area();
        if a.abs() < 1e-300 {
            let mut s = [0.0, 0.0];
            for v in &self.verts {
                s = add(s, *v);
            }
            return scale(1.0 / m as f64, s);
        }
        let mut s = [0.0, 0.0];
        for k in 0..m {
            let k_next = if k + 1 == m { 0 } else { k + 1 };
            let c = cross(self.verts[k], self.verts[k_next]);
            s = add(s, scale(c, add(self.verts[k], self.verts[k_next])));
        }
        scale(1.0 / (6.0 * a), s)
    }

    /// Largest squared vertex distance from the origin (the clipping frame
    /// is site-centered, so this is the cell's circumradius squared).
    pub fn max_radius2(&self) -> f64 {
        let mut r2 = 0.0f64;
        for v in &self.verts {
            r2 = r2.max(dot(*v, *v));
        }
        r2
    }
}

/// Segment/line intersection by linear interpolation of signed distances;
/// the parameter is clamped to the segment so near-graze crossings cannot
/// extrapolate.
#[inline]
fn intersect(v: Vec2, w: Vec2, dv: f64, dw: f64) -> Vec2 {
    let t = (dv / (dv - dw)).clamp(0.0, 1.0);
    add(v, scale(t, sub(w, v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn window() -> ConvexPolygon<u32> {
        ConvexPolygon::unit_window([0, 1, 2, 3])
    }

    #[test]
    fn vertical_cut_keeps_left_strip() {
        let mut p = window();
        let mut s = ClipScratch::new();
        let changed = p.clip_halfplane(HalfPlane { n: [1.0, 0.0], c: 0.2 }, 9, &mut s);
        assert!(changed);
        assert_eq!(p.verts.len(), 4);
        assert!((p.area() - 0.7).abs() < 1e-15);
        let c = p.centroid();
        assert!((c[0] - (-0.15)).abs() < 1e-15);
        assert!(c[1].abs() < 1e-15);
        // the chord edge carries the new tag, others keep theirs
        assert!(p.tags.contains(&9));
        assert!(p.tags.contains(&0) && p.tags.contains(&2) && p.tags.contains(&3));
        assert!(!p.tags.contains(&1));
    }

    #[test]
    fn grazing_plane_is_a_byte_level_noop() {
        let mut p = window();
        let before = p.verts.clone();
        let mut s = ClipScratch::new();
        let changed = p.clip_halfplane(HalfPlane { n: [1.0, 0.0], c: 0.5 }, 9, &mut s);
        assert!(!changed);
        for (a, b) in p.verts.iter().zip(before.iter()) {
            assert_eq!(a[0].to_bits(), b[0].to_bits());
            assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
        assert_eq!(p.tags, vec![0, 1, 2, 3]);
    }

    #[test]
    fn fully_outside_empties_the_polygon() {
        let mut p = window();
        let mut s = ClipScratch::new();
        let changed = p.clip_halfplane(HalfPlane { n: [1.0, 0.0], c: -0.7 }, 9, &mut s);
        assert!(changed);
        assert!(p.is_empty());
        assert_eq!(p.area(), 0.0);
    }

    #[test]
    fn corner_cut_produces_pentagon() {
        let mut p = window();
        let mut s = ClipScratch::new();
        // cut the upper-right corner beyond x+y = 0.6
        p.clip_halfplane(HalfPlane { n: [1.0, 1.0], c: 0.6 }, 9, &mut s);
        assert_eq!(p.verts.len(), 5);
        // removed triangle has legs 0.4, area 0.08
        assert!((p.area() - (1.0 - 0.08)).abs() < 1e-15);
    }

    proptest! {
        /// Monte-Carlo oracle: for random half-plane sequences the clipped
        /// area and centroid must agree with hit counting over the window.
        #[test]
        fn area_and_centroid_match_monte_carlo(seed in 0u64..200) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut p = window();
            let mut s = ClipScratch::new();
            let mut planes = Vec::new();
            for _ in 0..4 {
                let th = rng.gen_range(0.0..std::f64::consts::TAU);
                let hp = HalfPlane {
                    n: [th.cos(), th.sin()],
                    c: rng.gen_range(-0.2..0.6),
                };
                planes.push(hp);
                p.clip_halfplane(hp, 9u32, &mut s);
            }
            let n_mc = 40_000usize;
            let mut hits = 0usize;
            let mut sum = [0.0, 0.0];
            for _ in 0..n_mc {
                let x = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
                if planes.iter().all(|hp| dot(x, hp.n) <= hp.c) {
                    hits += 1;
                    sum = add(sum, x);
                }
            }
            let mc_area = hits as f64 / n_mc as f64;
            let area = p.area();
            // binomial 4 sigma bound
            let sigma = (mc_area.max(1e-3) * (1.0 - mc_area.max(1e-3)) / n_mc as f64).sqrt();
            prop_assert!((area - mc_area).abs() < 4.0 * sigma + 1e-3,
                "area {area} vs MC {mc_area}");
            if hits > 2000 && area > 0.05 {
                let mc_c = scale(1.0 / hits as f64, sum);
                let c = p.centroid();
                prop_assert!((c[0] - mc_c[0]).abs() < 0.02);
                prop_assert!((c[1] - mc_c[1]).abs() < 0.02);
            }
        }

        /// Clipping is monotone in area and never exceeds the window.
        #[test]
        fn clip_shrinks_area(th in 0.0..std::f64::consts::TAU, c in -0.8f64..0.8) {
            let mut p = window();
            let mut s = ClipScratch::new();
            let a0 = p.area();
            p.clip_halfplane(HalfPlane { n: [th.cos(), th.sin()], c }, 9u32, &mut s);
            let a1 = p.area();
            prop_assert!(a1 <= a0 + 1e-15);
            prop_assert!(a1 >= -1e-15);
            prop_assert!(p.max_radius2() <= 0.5 + 1e-12);
        }
    }
}
