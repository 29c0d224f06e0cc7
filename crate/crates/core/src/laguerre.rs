//! Periodic Laguerre (power) diagrams on T².
//!
//! For weights w the cell of atom i is {x : |x−yᵢ|²/2 − wᵢ ≤ |x−yⱼ|²/2 − wⱼ ∀j},
//! computed in a site-centered lift: the unit window [−½,½]² around yᵢ is
//! exactly the intersection of the equal-weight bisectors against the atom's
//! own axis copies, and every other constraint comes from the 3×3 block of
//! lifted copies yⱼ + h, h ∈ {−1,0,1}². Copies outside the block are dominated
//! on the window by a block copy of the same atom, so the block is sufficient
//! for any admissible weight spread.
//!
//! Both builders clip candidates in one canonical order, sorted by
//! (distance², atom id, shift). The bucketed fast path skips a candidate only
//! when its bisector provably clears the current polygon radius, which makes
//! the skipped clip an exact byte-level no-op; fast and reference diagrams are
//! therefore bit-identical. Cell areas a_i(w) and barycenters bᵢ are the
//! discrete faces of (∇P)♯𝓛 = ρ and of ∇P*(yᵢ).

use crate::measures::DiracCloud;
use crate::polygon::{ClipScratch, ConvexPolygon, HalfPlane};
use crate::torus::{min_image, TorusPoint};
use crate::vec2::{add, dot, norm, rot90, scale, sub, Vec2};
use rayon::prelude::*;
use thiserror::Error;

/// Admissible weight spread keeping every cell inside its lift window.
pub const MAX_WEIGHT_SPREAD: f64 = 0.25;

#[derive(Debug, Error)]
pub enum LaguerreError {
    #[error("got {got} weights for {want} atoms")]
    WeightCount { got: usize, want: usize },
    #[error("weight {index} is not finite")]
    NonFiniteWeight { index: usize },
    #[error("weight spread {spread} reaches the 1/4 site-centering bound")]
    WeightSpread { spread: f64 },
}

/// Which lifted copy's bisector produced an edge. Window sides carry the
/// atom's own id with the corresponding axis shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeTag {
    pub neighbor: u32,
    pub shift: [i8; 2],
}

/// One boundary edge of a cell, with the geometry the mass-map Jacobian and
/// the Hessian estimator need.
#[derive(Clone, Copy, Debug)]
pub struct CellEdge {
    pub neighbor: usize,
    pub shift: [i8; 2],
    /// Lifted neighbor position minus the site, in the site frame.
    pub rel: Vec2,
    /// Length of the shared edge.
    pub len: f64,
    /// Distance between the site and the lifted neighbor.
    pub dist: f64,
}

#[derive(Clone, Debug)]
pub struct PowerDiagram {
    /// Canonical site coordinates.
    pub sites: Vec<Vec2>,
    pub weights: Vec<f64>,
    /// Cell polygons in site-centered coordinates.
    pub cells: Vec<ConvexPolygon<EdgeTag>>,
    pub areas: Vec<f64>,
    /// Site-centered lifts of the cell barycenters (may leave [0,1)²).
    pub barycenters: Vec<Vec2>,
    pub max_radius2: Vec<f64>,
    pub edges: Vec<Vec<CellEdge>>,
    buckets: BucketGrid,
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    d2: f64,
    j: u32,
    h: [i8; 2],
    z: Vec2,
}

/// Pinned evaluation order for the lifted offset: (yⱼ − yᵢ) + h. Both builder
/// paths must produce bit-identical candidates.
#[inline]
fn candidate(sites: &[Vec2], i: usize, j: usize, h: [i8; 2]) -> Candidate {
    let z = [
        (sites[j][0] - sites[i][0]) + h[0] as f64,
        (sites[j][1] - sites[i][1]) + h[1] as f64,
    ];
    Candidate {
        d2: dot(z, z),
        j: j as u32,
        h,
        z,
    }
}

#[inline]
fn candidate_order(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    a.d2
        .partial_cmp(&b.d2)
        .expect("finite candidate distances")
        .then(a.j.cmp(&b.j))
        .then(a.h.cmp(&b.h))
}

/// Power bisector of the site (origin, wᵢ) against a lifted copy at z with
/// weight wⱼ: points x with x·(z/|z|) ≤ |z|/2 + (wᵢ−wⱼ)/|z|.
#[inline]
fn bisector(c: &Candidate, dw: f64) -> HalfPlane {
    let d = c.d2.sqrt();
    let inv = 1.0 / d;
    HalfPlane {
        n: scale(inv, c.z),
        c: 0.5 * d + dw * inv,
    }
}

fn window_tags(i: usize) -> [EdgeTag; 4] {
    let t = |shift| EdgeTag {
        neighbor: i as u32,
        shift,
    };
    [t([0, -1]), t([1, 0]), t([0, 1]), t([-1, 0])]
}

struct CellResult {
    poly: ConvexPolygon<EdgeTag>,
    area: f64,
    barycenter: Vec2,
    max_radius2: f64,
    edges: Vec<CellEdge>,
}

struct SiteScratch {
    pending: Vec<Candidate>,
    clip: ClipScratch<EdgeTag>,
}

impl SiteScratch {
    fn new() -> Self {
        SiteScratch {
            pending: Vec::new(),
            clip: ClipScratch::new(),
        }
    }
}

/// Uniform spatial hash of the canonical sites, shared by cell construction
/// and point location.
#[derive(Clone, Debug)]
struct BucketGrid {
    side: usize,
    starts: Vec<u32>,
    atoms: Vec<u32>,
}

impl BucketGrid {
    fn build(sites: &[Vec2]) -> BucketGrid {
        let side = ((sites.len() as f64 / 2.0).sqrt().ceil() as usize).max(1);
        let index = |p: &Vec2| {
            let u = ((p[0] * side as f64) as usize).min(side - 1);
            let v = ((p[1] * side as f64) as usize).min(side - 1);
            v * side + u
        };
        let mut counts = vec![0u32; side * side + 1];
        for p in sites {
            counts[index(p) + 1] += 1;
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let mut atoms = vec![0u32; sites.len()];
        let mut cursor = counts.clone();
        for (a, p) in sites.iter().enumerate() {
            let b = index(p);
            atoms[cursor[b] as usize] = a as u32;
            cursor[b] += 1;
        }
        BucketGrid {
            side,
            starts: counts,
            atoms,
        }
    }

    fn home(&self, p: &Vec2) -> (i64, i64) {
        let u = ((p[0] * self.side as f64) as usize).min(self.side - 1);
        let v = ((p[1] * self.side as f64) as usize).min(self.side - 1);
        (u as i64, v as i64)
    }

    /// Atoms in bucket copy (u, v) along with its lattice shift; copies range
    /// over bucket indices in [−side, 2·side).
    fn copy_atoms(&self, u: i64, v: i64) -> Option<(&[u32], [i8; 2])> {
        let side = self.side as i64;
        if u < -side || u >= 2 * side || v < -side || v >= 2 * side {
            return None;
        }
        let hu = u.div_euclid(side);
        let hv = v.div_euclid(side);
        let cu = u.rem_euclid(side) as usize;
        let cv = v.rem_euclid(side) as usize;
        let b = cv * self.side + cu;
        let lo = self.starts[b] as usize;
        let hi = self.starts[b + 1] as usize;
        Some((&self.atoms[lo..hi], [hu as i8, hv as i8]))
    }

    /// Visit bucket copies at exact Chebyshev ring r around (cu, cv).
    fn ring<F: FnMut(&[u32], [i8; 2])>(&self, cu: i64, cv: i64, r: i64, mut f: F) {
        if r == 0 {
            if let Some((a, h)) = self.copy_atoms(cu, cv) {
                f(a, h);
            }
            return;
        }
        for u in (cu - r)..=(cu + r) {
            if let Some((a, h)) = self.copy_atoms(u, cv - r) {
                f(a, h);
            }
            if let Some((a, h)) = self.copy_atoms(u, cv + r) {
                f(a, h);
            }
        }
        for v in (cv - r + 1)..=(cv + r - 1) {
            if let Some((a, h)) = self.copy_atoms(cu - r, v) {
                f(a, h);
            }
            if let Some((a, h)) = self.copy_atoms(cu + r, v) {
                f(a, h);
            }
        }
    }
}

fn validate_weights(cloud: &DiracCloud, weights: &[f64]) -> Result<(f64, f64), LaguerreError> {
    if weights.len() != cloud.len() {
        return Err(LaguerreError::WeightCount {
            got: weights.len(),
            want: cloud.len(),
        });
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (index, &w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(LaguerreError::NonFiniteWeight { index });
        }
        lo = lo.min(w);
        hi = hi.max(w);
    }
    let spread = hi - lo;
    if spread >= MAX_WEIGHT_SPREAD {
        return Err(LaguerreError::WeightSpread { spread });
    }
    Ok((lo, hi))
}

/// Bucketed builder with certified candidate pruning.
pub fn build_diagram(cloud: &DiracCloud, weights: &[f64]) -> Result<PowerDiagram, LaguerreError> {
    build(cloud, weights, false)
}

/// Exhaustive builder clipping every 3×3-block candidate in canonical order;
/// the correctness reference for the bucketed path.
pub fn build_diagram_reference(
    cloud: &DiracCloud,
    weights: &[f64],
) -> Result<PowerDiagram, LaguerreError> {
    build(cloud, weights, true)
}

fn build(cloud: &DiracCloud, weights: &[f64], exhaustive: bool) -> Result<PowerDiagram, LaguerreError> {
    let (_, wmax) = validate_weights(cloud, weights)?;
    let sites: Vec<Vec2> = cloud.points.iter().map(|p| p.coords()).collect();
    let buckets = BucketGrid::build(&sites);
    let n = sites.len();
    let results: Vec<CellResult> = (0..n)
        .into_par_iter()
        .map_init(SiteScratch::new, |scratch, i| {
            if exhaustive {
                build_cell_reference(i, &sites, weights, scratch)
            } else {
                build_cell_fast(i, &sites, weights, &buckets, wmax, scratch)
            }
        })
        .collect();
    let mut diagram = PowerDiagram {
        sites,
        weights: weights.to_vec(),
        cells: Vec::with_capacity(n),
        areas: Vec::with_capacity(n),
        barycenters: Vec::with_capacity(n),
        max_radius2: Vec::with_capacity(n),
        edges: Vec::with_capacity(n),
        buckets,
    };
    for r in results {
        diagram.cells.push(r.poly);
        diagram.areas.push(r.area);
        diagram.barycenters.push(r.barycenter);
        diagram.max_radius2.push(r.max_radius2);
        diagram.edges.push(r.edges);
    }
    Ok(diagram)
}

fn build_cell_reference(
    i: usize,
    sites: &[Vec2],
    weights: &[f64],
    scratch: &mut SiteScratch,
) -> CellResult {
    scratch.pending.clear();
    for j in 0..sites.len() {
        if j == i {
            continue;
        }
        for hv in -1i8..=1 {
            for hu in -1i8..=1 {
                scratch.pending.push(candidate(sites, i, j, [hu, hv]));
            }
        }
    }
    scratch.pending.sort_unstable_by(candidate_order);
    let mut poly = ConvexPolygon::unit_window(window_tags(i));
    for k in 0..scratch.pending.len() {
        let c = scratch.pending[k];
        let dw = weights[i] - weights[c.j as usize];
        poly.clip_halfplane(bisector(&c, dw), EdgeTag { neighbor: c.j, shift: c.h }, &mut scratch.clip);
        if poly.is_empty() {
            break;
        }
    }
    finish_cell(i, sites, poly)
}

fn build_cell_fast(
    i: usize,
    sites: &[Vec2],
    weights: &[f64],
    buckets: &BucketGrid,
    wmax: f64,
    scratch: &mut SiteScratch,
) -> CellResult {
    let inv_b = 1.0 / buckets.side as f64;
    let r_cap = 2 * buckets.side as i64;
    let (cu, cv) = buckets.home(&sites[i]);
    let wi = weights[i];
    let wdiff = (wmax - wi).max(0.0);

    let mut poly = ConvexPolygon::unit_window(window_tags(i));
    let mut r2max = 0.5f64;
    scratch.pending.clear();
    let mut emitted = 0usize;
    let mut next_ring = 0i64;
    // first batch sized by a two-bucket radius guess; wrong guesses only cost
    // extra batches, never correctness
    let r_est = 2.0 * inv_b;
    let mut target = ((r_est + (r_est * r_est + 2.0 * wdiff).sqrt()) / inv_b).ceil() as i64 + 1;

    'outer: loop {
        while next_ring <= target.min(r_cap) {
            buckets.ring(cu, cv, next_ring, |atoms, h| {
                for &j in atoms {
                    if j as usize != i {
                        scratch.pending.push(candidate(sites, i, j as usize, h));
                    }
                }
            });
            next_ring += 1;
        }
        // every uncollected candidate is at distance ≥ frontier
        let frontier = (next_ring - 1) as f64 * inv_b;
        let frontier2 = if next_ring > r_cap {
            f64::INFINITY
        } else {
            frontier * frontier
        };
        scratch.pending[emitted..].sort_unstable_by(candidate_order);
        while emitted < scratch.pending.len() && scratch.pending[emitted].d2 < frontier2 {
            let c = scratch.pending[emitted];
            emitted += 1;
            let dw = wi - weights[c.j as usize];
            // distance from the site to the bisector is d/2 + dw/d; when it
            // exceeds the polygon radius the clip is an exact no-op
            let lhs = 0.5 * c.d2 + dw;
            if lhs > 0.0 && lhs * lhs > r2max * c.d2 + 1e-12 {
                continue;
            }
            if poly.clip_halfplane(bisector(&c, dw), EdgeTag { neighbor: c.j, shift: c.h }, &mut scratch.clip) {
                if poly.is_empty() {
                    break 'outer;
                }
                r2max = poly.max_radius2();
            }
        }
        if next_ring > r_cap && emitted == scratch.pending.len() {
            break;
        }
        // remaining candidates all sit at distance ≥ frontier; they are
        // no-ops when the frontier bisector bound clears the polygon radius
        if frontier > 0.0 && 0.5 * frontier - wdiff / frontier > r2max.sqrt() + 1e-9 {
            break;
        }
        let r = r2max.sqrt();
        let certified = ((r + (r2max + 2.0 * wdiff).sqrt()) / inv_b).ceil() as i64 + 1;
        target = certified.max(next_ring);
    }
    finish_cell(i, sites, poly)
}

fn finish_cell(i: usize, sites: &[Vec2], poly: ConvexPolygon<EdgeTag>) -> CellResult {
    let area = poly.area().max(0.0);
    let barycenter = add(sites[i], poly.centroid());
    let max_radius2 = poly.max_radius2();
    let m = poly.verts.len();
    let mut edges = Vec::with_capacity(m);
    for k in 0..m {
        let k_next = if k + 1 == m { 0 } else { k + 1 };
        let tag = poly.tags[k];
        let len = norm(sub(poly.verts[k_next], poly.verts[k]));
        let (rel, dist) = if tag.neighbor as usize == i {
            ([tag.shift[0] as f64, tag.shift[1] as f64], 1.0)
        } else {
            let c = candidate(sites, i, tag.neighbor as usize, tag.shift);
            (c.z, c.d2.sqrt())
        };
        edges.push(CellEdge {
            neighbor: tag.neighbor as usize,
            shift: tag.shift,
            rel,
            len,
            dist,
        });
    }
    CellResult {
        poly,
        area,
        barycenter,
        max_radius2,
        edges,
    }
}

impl PowerDiagram {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Discrete dual velocity U = J(y − ∇P*(y)) at atom i, with ∇P*(yᵢ)
    /// realized by the cell barycenter.
    pub fn velocity(&self, i: usize) -> Vec2 {
        rot90(sub(self.sites[i], self.barycenters[i]))
    }

    /// Cell owning the point: argminⱼ(d²(x,yⱼ)/2 − wⱼ), ties to the lowest
    /// atom id. Returns the id and the minimal lift vector v with yⱼ ≡ x + v.
    pub fn locate(&self, p: &TorusPoint) -> (usize, Vec2) {
        self.search(p.coords(), true)
    }

    /// Nearest atom by torus distance, ignoring weights; the off-atom field
    /// evaluations use this.
    pub fn nearest_atom(&self, p: &TorusPoint) -> (usize, Vec2) {
        self.search(p.coords(), false)
    }

    fn search(&self, pc: Vec2, weighted: bool) -> (usize, Vec2) {
        let side = self.buckets.side as i64;
        let inv_b = 1.0 / side as f64;
        let (cu, cv) = self.buckets.home(&pc);
        let wmax = if weighted {
            self.weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        } else {
            0.0
        };
        let mut best = (f64::INFINITY, usize::MAX, [0.0, 0.0]);
        let mut r = 0i64;
        while r <= 2 * side {
            self.buckets.ring(cu, cv, r, |atoms, _| {
                for &j in atoms {
                    let j = j as usize;
                    let v = min_image(sub(self.sites[j], pc));
                    let pow = 0.5 * dot(v, v) - if weighted { self.weights[j] } else { 0.0 };
                    if pow < best.0 || (pow == best.0 && j < best.1) {
                        best = (pow, j, v);
                    }
                }
            });
            // uncollected atoms are at distance ≥ r/side and cannot win
            let lower = r as f64 * inv_b;
            if best.1 != usize::MAX && 0.5 * lower * lower - wmax > best.0 + 1e-12 {
                break;
            }
            r += 1;
        }
        (best.1, best.2)
    }

    /// Exhaustive twin of `locate`, for equivalence tests.
    pub fn locate_brute(&self, p: &TorusPoint) -> (usize, Vec2) {
        let pc = p.coords();
        let mut best = (f64::INFINITY, usize::MAX, [0.0, 0.0]);
        for j in 0..self.sites.len() {
            let v = min_image(sub(self.sites[j], pc));
            let pow = 0.5 * dot(v, v) - self.weights[j];
            if pow < best.0 {
                best = (pow, j, v);
            }
        }
        (best.1, best.2)
    }
}
