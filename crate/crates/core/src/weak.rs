//! Weak-form residuals of the semigeostrophic system in primal variables.
//!
//! A trajectory is tested against φ(t,x) = τ(t)χ(x) with trigonometric χ
//! and piecewise-linear hats τ vanishing at the final time. The transport
//! residual assembles, component by component,
//!
//!   R₁ = ∫∫ (J∇p)·{∂ₜφ + u·∇φ} − (∇p + Ju)·φ dx dt + τ(0) ∫ (J∇p⁰)·φ dx,
//!
//! and the incompressibility residual R₂ = ∫ u·∇χ dx per snapshot, where
//! ∇p(x) = ∇P(x) − x is the lift vector of the owning atom and u comes
//! from the per-cell affine models. Both vanish for exact solutions, so
//! their decay under simultaneous space and time refinement is the
//! convergence evidence for the discrete flow.

use crate::dynamics::{run, DynamicsError, RunParams, Scheme, Trajectory};
use crate::eulerian::CellModel;
use crate::laguerre::LaguerreError;
use crate::measures::{DiracCloud, InitialPressure};
use crate::ot::{OtError, SolverOptions};
use crate::torus::TorusPoint;
use crate::vec2::{add, dot, rot90, scale, sub, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

/// Half-lattice wave vectors: one representative of each ±k pair with
/// 0 < |k|∞ ≤ 3, each used with both cosine and sine phases.
pub fn wave_vectors() -> Vec<[i32; 2]> {
    let mut ks = Vec::new();
    for kx in 0..=3 {
        for ky in -3..=3 {
            if kx > 0 || ky > 0 {
                ks.push([kx, ky]);
            }
        }
    }
    ks
}

/// Piecewise-linear hat peaked at knot a of `hats` equal subintervals of
/// [0, t_final]; a = 0 is the descending half-hat with τ(0) = 1, and every
/// member vanishes at t_final.
pub fn hat(a: usize, hats: usize, t_final: f64, t: f64) -> f64 {
    let dk = t_final / hats as f64;
    let peak = a as f64 * dk;
    (1.0 - ((t - peak) / dk).abs()).max(0.0)
}

/// Spatial functionals of one snapshot against every basis function.
struct SnapshotFunctionals {
    time: f64,
    /// ∫ (J∇p) χ_f dx, both components per trig function.
    moment: Vec<Vec2>,
    /// ∫ (J∇p)(u·∇χ_f) − (∇p + Ju) χ_f dx.
    forcing: Vec<Vec2>,
    /// ∫ u·∇χ_f dx.
    divergence: Vec<f64>,
}

fn sample_snapshot(
    model: &CellModel,
    rates: &[Vec2],
    time: f64,
    ks: &[[i32; 2]],
    samples_side: usize,
    seed: u64,
) -> SnapshotFunctionals {
    let nf = 2 * ks.len();
    let mut moment = vec![[0.0; 2]; nf];
    let mut forcing = vec![[0.0; 2]; nf];
    let mut divergence = vec![0.0; nf];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = samples_side as f64;
    for j in 0..samples_side {
        for i in 0..samples_side {
            let x = [
                (i as f64 + rng.gen::<f64>()) / s,
                (j as f64 + rng.gen::<f64>()) / s,
            ];
            let p = TorusPoint::wrap(x);
            let (cell, v) = model.diagram.locate(&p);
            let c = sub(model.diagram.barycenters[cell], model.diagram.sites[cell]);
            let u = add(rates[cell], model.hessians[cell].mul_vec(rot90(add(v, c))));
            let gp = v;
            let jgp = rot90(gp);
            let drag = add(gp, rot90(u));
            for (ki, k) in ks.iter().enumerate() {
                let kf = [k[0] as f64, k[1] as f64];
                let (sn, cs) = (TAU * dot(kf, x)).sin_cos();
                for parity in 0..2 {
                    let (chi, grad) = if parity == 0 {
                        (cs, scale(-TAU * sn, kf))
                    } else {
                        (sn, scale(TAU * cs, kf))
                    };
                    let f = 2 * ki + parity;
                    let advect = dot(u, grad);
                    moment[f] = add(moment[f], scale(chi, jgp));
                    forcing[f] = add(
                        forcing[f],
                        sub(scale(advect, jgp), scale(chi, drag)),
                    );
                    divergence[f] += advect;
                }
            }
        }
    }
    let inv = 1.0 / (s * s);
    for f in 0..nf {
        moment[f] = scale(inv, moment[f]);
        forcing[f] = scale(inv, forcing[f]);
        divergence[f] *= inv;
    }
    SnapshotFunctionals {
        time,
        moment,
        forcing,
        divergence,
    }
}

/// Residuals attached to one trig test function.
#[derive(Clone, Copy, Debug)]
pub struct FunctionResidual {
    pub k: [i32; 2],
    /// 0 for the cosine phase, 1 for the sine phase.
    pub parity: usize,
    /// RMS of the transport functionals over hats and components.
    pub transport: f64,
    /// RMS of the divergence functionals over snapshots.
    pub incompressibility: f64,
}

/// Aggregated weak residuals of a trajectory.
#[derive(Clone, Debug)]
pub struct WeakResiduals {
    /// RMS of the transport functionals over hats, basis and components.
    pub transport: f64,
    /// RMS of the divergence functionals over snapshots and basis.
    pub incompressibility: f64,
    pub per_function: Vec<FunctionResidual>,
}

/// Assemble the residuals from every stored frame: the time integrals use
/// the trapezoid rule on the snapshot grid, exact for the hats since their
/// knots land on snapshot times.
pub fn weak_residuals(
    traj: &Trajectory,
    samples_side: usize,
    hats: usize,
    seed: u64,
) -> Result<WeakResiduals, LaguerreError> {
    let ks = wave_vectors();
    let nf = 2 * ks.len();
    let frames = traj.frames.len();
    let n = traj.masses.len();
    let mut snaps = Vec::with_capacity(frames);
    for k in 0..frames {
        let model = CellModel::from_frame(traj, k)?;
        let rates: Vec<Vec2> = (0..n).map(|i| traj.barycenter_rate(k, i)).collect();
        snaps.push(sample_snapshot(
            &model,
            &rates,
            traj.frames[k].time,
            &ks,
            samples_side,
            seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        ));
    }
    let t_final = snaps.last().expect("at least one frame").time;

    let mut fn_sq = vec![0.0; nf];
    for a in 0..hats {
        let tau = |t: f64| hat(a, hats, t_final, t);
        for f in 0..nf {
            let mut r = scale(tau(0.0), snaps[0].moment[f]);
            for w in snaps.windows(2) {
                let (s0, s1) = (&w[0], &w[1]);
                let dt = s1.time - s0.time;
                let dtau = tau(s1.time) - tau(s0.time);
                r = add(r, scale(0.5 * dtau, add(s0.moment[f], s1.moment[f])));
                r = add(
                    r,
                    scale(
                        0.5 * dt,
                        add(
                            scale(tau(s0.time), s0.forcing[f]),
                            scale(tau(s1.time), s1.forcing[f]),
                        ),
                    ),
                );
            }
            fn_sq[f] += r[0] * r[0] + r[1] * r[1];
        }
    }

    let mut div_sq = vec![0.0; nf];
    for snap in &snaps {
        for f in 0..nf {
            div_sq[f] += snap.divergence[f] * snap.divergence[f];
        }
    }

    let per_function: Vec<FunctionResidual> = (0..nf)
        .map(|f| FunctionResidual {
            k: ks[f / 2],
            parity: f % 2,
            transport: (fn_sq[f] / (2 * hats) as f64).sqrt(),
            incompressibility: (div_sq[f] / frames as f64).sqrt(),
        })
        .collect();
    let transport = (fn_sq.iter().sum::<f64>() / (2 * hats * nf) as f64).sqrt();
    let incompressibility = (div_sq.iter().sum::<f64>() / (frames * nf) as f64).sqrt();

    Ok(WeakResiduals {
        transport,
        incompressibility,
        per_function,
    })
}

/// One rung of the refinement ladder.
#[derive(Clone, Copy, Debug)]
pub struct RefinementPoint {
    pub atoms: usize,
    /// Spatial scale h = 1/side.
    pub h: f64,
    pub dt: f64,
    pub transport: f64,
    pub incompressibility: f64,
}

/// March the flow at each side with dt scaled like 1/side (so dt ∝ 1/√N)
/// and collect the weak residuals per rung.
#[allow(clippy::too_many_arguments)]
pub fn refinement_study(
    p0: &InitialPressure,
    sides: &[usize],
    dt0: f64,
    t_final: f64,
    scheme: Scheme,
    samples_side: usize,
    hats: usize,
    seed: u64,
) -> Result<Vec<RefinementPoint>, DynamicsError> {
    let mut out = Vec::with_capacity(sides.len());
    for &side in sides {
        let cloud = DiracCloud::sample_initial(p0, side)
            .map_err(|_| DynamicsError::BadTimeStep)?;
        let params = RunParams {
            scheme,
            dt: dt0 * sides[0] as f64 / side as f64,
            t_final,
            solver: SolverOptions::default(),
        };
        let traj = run(&cloud, &params)?;
        let res = weak_residuals(&traj, samples_side, hats, seed)
            .map_err(|e| DynamicsError::Transport(OtError::Diagram(e)))?;
        out.push(RefinementPoint {
            atoms: side * side,
            h: 1.0 / side as f64,
            dt: params.dt,
            transport: res.transport,
            incompressibility: res.incompressibility,
        });
    }
    Ok(out)
}

/// Least-squares slope of log r against log h.
pub fn log_slope(hs: &[f64], rs: &[f64]) -> f64 {
    assert_eq!(hs.len(), rs.len());
    let n = hs.len() as f64;
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Scenario;

    #[test]
    fn wave_vectors_cover_the_half_lattice() {
        let ks = wave_vectors();
        assert_eq!(ks.len(), 24);
        for k in &ks {
            assert!(k[0] > 0 || (k[0] == 0 && k[1] > 0));
            assert!(k[0].abs() <= 3 && k[1].abs() <= 3);
            assert!(!ks.contains(&[-k[0], -k[1]]));
        }
    }

    #[test]
    fn hats_interpolate_the_knots_and_vanish_at_the_end() {
        let t_final = 0.192;
        let hats = 6;
        for a in 0..hats {
            for b in 0..=hats {
                let expected = if a == b { 1.0 } else { 0.0 };
                let t = b as f64 * t_final / hats as f64;
                assert!((hat(a, hats, t_final, t) - expected).abs() <= 1e-12);
            }
            assert_eq!(hat(a, hats, t_final, t_final), 0.0);
        }
        assert_eq!(hat(0, hats, t_final, 0.0), 1.0);
    }

    #[test]
    fn log_slope_recovers_a_power_law() {
        let hs: [f64; 3] = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
        let rs: Vec<f64> = hs.iter().map(|&h| 3.0 * h.powf(1.7)).collect();
        assert!((log_slope(&hs, &rs) - 1.7).abs() <= 1e-12);
    }

    #[test]
    fn sine_residuals_shrink_under_refinement() {
        let p0 = InitialPressure::new(Scenario::Sine { epsilon: 0.01 }).unwrap();
        let rungs = refinement_study(
            &p0,
            &[8, 16],
            0.032,
            0.096,
            Scheme::Heun,
            50,
            3,
            42,
        )
        .unwrap();
        assert_eq!(rungs.len(), 2);
        assert!(
            rungs[1].transport <= 1.1 * rungs[0].transport,
            "transport {:.3e} -> {:.3e}",
            rungs[0].transport,
            rungs[1].transport
        );
        assert!(
            rungs[1].incompressibility <= 1.1 * rungs[0].incompressibility,
            "divergence {:.3e} -> {:.3e}",
            rungs[0].incompressibility,
            rungs[1].incompressibility
        );
    }
}
