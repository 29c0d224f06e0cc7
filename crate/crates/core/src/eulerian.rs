//! Eulerian reconstruction of the dual fields from a discrete flow.
//!
//! A power diagram pins the conjugate gradient at the atoms, ∇P*(yᵢ) = bᵢ.
//! Fitting a Hessian per cell from the barycenter increments across its
//! edges extends that to an affine model per cell,
//!
//!   ∇P*(y) ≈ bᵢ + Hᵢ(y − yᵢ),
//!
//! which yields the dual velocity U(y) = J(y − ∇P*(y)) off the atoms, the
//! primal velocity u(x) = ∂ₜ∇P*(∇P(x)) + ∇²P*(∇P(x)) J(∇P(x) − x) on the
//! cells, and a regularized Lagrangian flow: tracers ride the reconstructed
//! U frame by frame, and the arrival conjugate model maps them back to
//! primal positions, whose histogram against Lebesgue witnesses how close
//! the flow stays to measure preserving.

use crate::dynamics::Trajectory;
use crate::laguerre::{build_diagram, LaguerreError, PowerDiagram};
use crate::measures::{histogram, DensityHistogram, DiracCloud, InitialPressure, MeasureError};
use crate::torus::TorusPoint;
use crate::vec2::{add, norm, norm2, outer, rot90, scale, sub, Mat2, Vec2};
use rayon::prelude::*;

/// How far past its own reach a cell's affine model is trusted, as a
/// multiple of the cell's circumradius.
const TRUST_FACTOR: f64 = 4.0;

/// Ridge added to the edge Gram matrix when a cell is too thin to pin the
/// fit in both directions.
const GRAM_RIDGE: f64 = 1e-10;

/// A diagram together with one affine conjugate model per cell.
#[derive(Clone, Debug)]
pub struct CellModel {
    pub diagram: PowerDiagram,
    /// Symmetric positive semidefinite Hessian estimates, one per atom.
    pub hessians: Vec<Mat2>,
    /// Cells whose edge geometry needed a ridge to invert the Gram matrix.
    pub regularized: Vec<bool>,
    /// Cells where symmetrizing the fit clipped a negative eigenvalue.
    pub projected: Vec<bool>,
}

/// Fit Hᵢ ≈ ∇²P*(yᵢ) by least squares over the cell's edges. An edge to a
/// lifted neighbor j contributes the sample Hᵢ Δy ≈ Δb with Δy the site
/// offset and Δb the barycenter offset; edges against the cell's own
/// periodic copies carry the exact samples Hᵢ h = h at integer shifts h.
pub fn fit_cell_model(diagram: PowerDiagram) -> CellModel {
    let n = diagram.len();
    let mut hessians = Vec::with_capacity(n);
    let mut regularized = vec![false; n];
    let mut projected = vec![false; n];
    for i in 0..n {
        let ci = sub(diagram.barycenters[i], diagram.sites[i]);
        let mut gram = Mat2::ZERO;
        let mut moment = Mat2::ZERO;
        for e in &diagram.edges[i] {
            let dy = e.rel;
            let db = if e.neighbor == i {
                dy
            } else {
                let cj = sub(
                    diagram.barycenters[e.neighbor],
                    diagram.sites[e.neighbor],
                );
                add(dy, sub(cj, ci))
            };
            gram = gram.add(&outer(dy, dy));
            moment = moment.add(&outer(db, dy));
        }
        let t = gram.trace();
        if !(t > 0.0) || gram.det() <= 1e-12 * t * t {
            regularized[i] = true;
            gram = gram.add(&Mat2::IDENTITY.scale(GRAM_RIDGE));
        }
        let a = moment.mul(&gram.inverse().expect("ridged Gram matrix inverts"));
        let (h, clipped) = a.psd_projection();
        projected[i] = clipped;
        hessians.push(h);
    }
    CellModel {
        diagram,
        hessians,
        regularized,
        projected,
    }
}

impl CellModel {
    /// Rebuild a stored frame's diagram and fit its cell models.
    pub fn from_frame(traj: &Trajectory, k: usize) -> Result<CellModel, LaguerreError> {
        let cloud = traj.cloud_at(k);
        let diagram = build_diagram(&cloud, &traj.frames[k].weights)?;
        Ok(fit_cell_model(diagram))
    }

    /// ∇P*_model at an unwrapped point, evaluated in the lift that puts the
    /// nearest atom next to g. Past the trust radius the affine term is
    /// clamped and the remainder rides the identity, keeping the model
    /// bounded where no cell geometry backs it.
    pub fn conjugate_at(&self, g: Vec2) -> Vec2 {
        let (j, v) = self.diagram.nearest_atom(&TorusPoint::wrap(g));
        let offset = scale(-1.0, v);
        let b = add(
            add(g, v),
            sub(self.diagram.barycenters[j], self.diagram.sites[j]),
        );
        let trust = TRUST_FACTOR * self.diagram.max_radius2[j].sqrt();
        let d = norm(offset);
        if d <= trust {
            add(b, self.hessians[j].mul_vec(offset))
        } else {
            let inside = scale(trust / d, offset);
            add(
                add(b, self.hessians[j].mul_vec(inside)),
                sub(offset, inside),
            )
        }
    }

    /// U_model(g) = J(g − ∇P*_model(g)).
    pub fn dual_velocity(&self, g: Vec2) -> Vec2 {
        rot90(sub(g, self.conjugate_at(g)))
    }

    /// u(x) on the owning cell: ḃᵢ + Hᵢ J(bᵢ − x) in the lift that puts the
    /// owning atom next to x; `rates` carries the per-atom barycenter rates.
    pub fn primal_velocity(&self, x: &TorusPoint, rates: &[Vec2]) -> Vec2 {
        let (i, v) = self.diagram.locate(x);
        let c = sub(self.diagram.barycenters[i], self.diagram.sites[i]);
        add(rates[i], self.hessians[i].mul_vec(rot90(add(v, c))))
    }
}

/// Gap between the two algebraic routes to the cell velocity: the direct
/// ḃ + H J(b − x) against the regrouped (ḃ − H U) + H J(y − x) with
/// U = J(y − b). Zero in exact arithmetic for arbitrary inputs.
pub fn velocity_identity_gap(bdot: Vec2, h: &Mat2, b: Vec2, y: Vec2, x: Vec2) -> f64 {
    let left = add(bdot, h.mul_vec(rot90(sub(b, x))));
    let u = rot90(sub(y, b));
    let right = add(sub(bdot, h.mul_vec(u)), h.mul_vec(rot90(sub(y, x))));
    let d = sub(left, right);
    d[0].abs().max(d[1].abs())
}

/// Exact conjugate data for a closed-form initial pressure: solves
/// ∇P(x) = y by Newton iteration on the monotone map x ↦ x + ∇p⁰(x) and
/// returns the primal point x* together with ∇²P*(y) = (Id + ∇²p⁰(x*))⁻¹.
pub fn exact_conjugate_point(p0: &InitialPressure, y: Vec2) -> (Vec2, Mat2) {
    let mut x = y;
    for _ in 0..60 {
        let r = sub(add(x, p0.grad(x)), y);
        if norm2(r) <= 1e-28 {
            break;
        }
        let jac = Mat2::IDENTITY.add(&p0.hessian(x));
        let step = jac.inverse().expect("convex pressure").mul_vec(r);
        x = sub(x, step);
    }
    let h = Mat2::IDENTITY.add(&p0.hessian(x));
    (x, h.inverse().expect("convex pressure"))
}

/// Tracer ensemble for the regularized Lagrangian flow.
#[derive(Clone, Debug)]
pub struct TracerFlow {
    /// Primal grid nodes z.
    pub seeds: Vec<TorusPoint>,
    /// g₀(z) = ∇P⁰(z): the atom owning z at t = 0, lifted next to z.
    pub start: Vec<Vec2>,
    /// g_T(z) after riding U_model through every stored frame.
    pub end: Vec<Vec2>,
    /// F_T(z) = ∇P*_model(g_T(z)), wrapped back to the torus.
    pub images: Vec<TorusPoint>,
}

/// March tracers through the per-frame reconstructed dual velocity with one
/// Heun step per frame interval; returns the arrival positions together
/// with the arrival frame's cell model. `backward` rides the same frames in
/// reverse.
pub fn flow_tracers(
    traj: &Trajectory,
    start: &[Vec2],
    backward: bool,
) -> Result<(Vec<Vec2>, CellModel), LaguerreError> {
    let last = traj.frames.len() - 1;
    let order: Vec<usize> = if backward {
        (0..=last).rev().collect()
    } else {
        (0..=last).collect()
    };
    let mut positions = start.to_vec();
    let mut model = CellModel::from_frame(traj, order[0])?;
    for w in order.windows(2) {
        let next = CellModel::from_frame(traj, w[1])?;
        let dt = traj.frames[w[1]].time - traj.frames[w[0]].time;
        positions.par_iter_mut().for_each(|g| {
            let u1 = model.dual_velocity(*g);
            let mid = add(*g, scale(dt, u1));
            let u2 = next.dual_velocity(mid);
            *g = add(*g, scale(0.5 * dt, add(u1, u2)));
        });
        model = next;
    }
    Ok((positions, model))
}

/// Seed a side² tracer grid at t = 0 and push it to the final frame.
pub fn regularized_flow(traj: &Trajectory, side: usize) -> Result<TracerFlow, LaguerreError> {
    let first = CellModel::from_frame(traj, 0)?;
    let mut seeds = Vec::with_capacity(side * side);
    let mut start = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            let z = TorusPoint::wrap([
                (i as f64 + 0.5) / side as f64,
                (j as f64 + 0.5) / side as f64,
            ]);
            let (_, v) = first.diagram.locate(&z);
            start.push(add(z.coords(), v));
            seeds.push(z);
        }
    }
    let (end, arrival) = flow_tracers(traj, &start, false)?;
    let images = end
        .iter()
        .map(|g| TorusPoint::wrap(arrival.conjugate_at(*g)))
        .collect();
    Ok(TracerFlow {
        seeds,
        start,
        end,
        images,
    })
}

/// Bin the primal images of the tracers; a flat result near 1 means the
/// regularized flow carried Lebesgue measure to Lebesgue measure.
pub fn flow_histogram(flow: &TracerFlow, bins: usize) -> Result<DensityHistogram, MeasureError> {
    let n = flow.images.len();
    let mut masses = vec![1.0 / n as f64; n];
    let total: f64 = masses.iter().sum();
    masses[0] += 1.0 - total;
    let cloud = DiracCloud::from_parts(flow.images.clone(), masses)?;
    histogram(&cloud, bins)
}

/// Mean unwrapped distance between the backward-integrated arrivals and the
/// original start positions: an invertibility witness for the tracer flow.
pub fn return_distance(traj: &Trajectory, flow: &TracerFlow) -> Result<f64, LaguerreError> {
    let (back, _) = flow_tracers(traj, &flow.end, true)?;
    let n = back.len().max(1);
    Ok(back
        .iter()
        .zip(&flow.start)
        .map(|(g, s)| norm(sub(*g, *s)))
        .sum::<f64>()
        / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run, RunParams, Scheme};
    use crate::measures::Scenario;
    use crate::ot::{solve_weights, SolverOptions};
    use crate::torus::canonicalize;
    use crate::vec2::dot;
    use rand::{Rng, SeedableRng};

    fn uniform_cloud(m: usize) -> DiracCloud {
        let p0 = InitialPressure::new(Scenario::Zero).unwrap();
        DiracCloud::sample_initial(&p0, m).unwrap()
    }

    #[test]
    fn uniform_grid_fits_identity_hessians() {
        let cloud = uniform_cloud(8);
        let diagram = build_diagram(&cloud, &vec![0.0; cloud.len()]).unwrap();
        let model = fit_cell_model(diagram);
        for (i, h) in model.hessians.iter().enumerate() {
            let gap = h.sub(&Mat2::IDENTITY).sym_op_norm();
            assert!(gap <= 1e-12, "cell {i} drifts from Id by {gap:.3e}");
            assert!(!model.regularized[i] && !model.projected[i]);
        }
    }

    #[test]
    fn single_atom_conjugate_is_the_identity() {
        let p = canonicalize([0.3, 0.8]).unwrap();
        let cloud = DiracCloud::from_parts(vec![p], vec![1.0]).unwrap();
        let model = fit_cell_model(build_diagram(&cloud, &[0.0]).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let g = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            assert!(norm(sub(model.conjugate_at(g), g)) <= 1e-12);
            assert!(norm(model.dual_velocity(g)) <= 1e-12);
        }
    }

    #[test]
    fn sine_hessians_match_the_inverted_forward_map() {
        let p0 = InitialPressure::new(Scenario::Sine { epsilon: 0.01 }).unwrap();
        let cloud = DiracCloud::sample_initial(&p0, 32).unwrap();
        let (diagram, _) = solve_weights(&cloud, None, &SolverOptions::default()).unwrap();
        let model = fit_cell_model(diagram);
        let mut worst = 0.0f64;
        let mut mean = 0.0f64;
        for i in 0..model.diagram.len() {
            let (_, h_exact) = exact_conjugate_point(&p0, model.diagram.sites[i]);
            let gap = model.hessians[i].sub(&h_exact).sym_op_norm();
            worst = worst.max(gap);
            mean += gap;
            assert!(!model.regularized[i] && !model.projected[i], "cell {i}");
        }
        mean /= model.diagram.len() as f64;
        assert!(worst <= 0.08, "worst Hessian gap {worst:.4}");
        assert!(mean <= 0.02, "mean Hessian gap {mean:.4}");
    }

    #[test]
    fn newton_inversion_agrees_with_a_legendre_scan() {
        let p0 = InitialPressure::new(Scenario::Sine { epsilon: 0.01 }).unwrap();
        let g = 512usize;
        let targets = [
            [0.17, 0.83],
            [0.5, 0.25],
            [0.94, 0.07],
            [0.33, 0.48],
            [0.66, 0.91],
            [0.08, 0.55],
        ];
        for y in targets {
            let (xs, _) = exact_conjugate_point(&p0, y);
            let r = sub(add(xs, p0.grad(xs)), y);
            assert!(norm(r) <= 1e-12, "forward-map residual {:.3e}", norm(r));
            let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
            for j in 0..g {
                for i in 0..g {
                    let x = [
                        y[0] - 0.5 + (i as f64 + 0.5) / g as f64,
                        y[1] - 0.5 + (j as f64 + 0.5) / g as f64,
                    ];
                    let f = dot(x, y) - 0.5 * norm2(x) - p0.value(x);
                    if f > best.0 {
                        best = (f, x);
                    }
                }
            }
            let gap = norm(sub(best.1, xs));
            assert!(gap <= 2.5 / g as f64, "scan argmax off by {gap:.3e}");
        }
    }

    #[test]
    fn velocity_identity_is_exact_to_rounding() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let span = |r: &mut rand_chacha::ChaCha8Rng| {
            [r.gen_range(-1.0..2.0), r.gen_range(-1.0..2.0)]
        };
        for _ in 0..1000 {
            let bdot = span(&mut rng);
            let b = span(&mut rng);
            let y = span(&mut rng);
            let x = span(&mut rng);
            let s = rng.gen_range(-3.0..3.0);
            let o = rng.gen_range(-3.0..3.0);
            let d = rng.gen_range(-3.0..3.0);
            let h = Mat2([[s, o], [o, d]]);
            let gap = velocity_identity_gap(bdot, &h, b, y, x);
            assert!(gap <= 1e-14, "identity gap {gap:.3e}");
        }
    }

    #[test]
    fn stationary_flow_keeps_tracers_and_density_fixed() {
        let cloud = uniform_cloud(8);
        let params = RunParams {
            scheme: Scheme::Heun,
            dt: 0.02,
            t_final: 0.1,
            solver: SolverOptions::default(),
        };
        let traj = run(&cloud, &params).unwrap();
        let flow = regularized_flow(&traj, 16).unwrap();
        for (s, e) in flow.start.iter().zip(&flow.end) {
            assert!(norm(sub(*s, *e)) <= 1e-13);
        }
        let hist = flow_histogram(&flow, 4).unwrap();
        assert!((hist.min() - 1.0).abs() <= 1e-12);
        assert!((hist.max() - 1.0).abs() <= 1e-12);
        assert!(return_distance(&traj, &flow).unwrap() <= 1e-13);
    }

    #[test]
    fn sine_tracers_stay_near_unit_density() {
        let p0 = InitialPressure::new(Scenario::Sine { epsilon: 0.01 }).unwrap();
        let cloud = DiracCloud::sample_initial(&p0, 16).unwrap();
        let params = RunParams {
            scheme: Scheme::Heun,
            dt: 0.02,
            t_final: 0.1,
            solver: SolverOptions::default(),
        };
        let traj = run(&cloud, &params).unwrap();
        let flow = regularized_flow(&traj, 32).unwrap();
        let hist = flow_histogram(&flow, 4).unwrap();
        assert!(
            hist.min() >= 0.9 && hist.max() <= 1.1,
            "density range ({:.3}, {:.3})",
            hist.min(),
            hist.max()
        );
        let back = return_distance(&traj, &flow).unwrap();
        assert!(back <= 1e-3, "return distance {back:.3e}");
    }
}
