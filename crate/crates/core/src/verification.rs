//! Numerical witnesses for the estimates behind the dual-variable flow.
//!
//! Everything here is diagnostic: a log-uniform scan of the Orlicz-type
//! inequality ab log₊ᵏ(ab) ≤ 2^{k−1}[(k/e)ᵏ+1]b² + 2^{3(k−1)}a² log₊²ᵏ(a),
//! the cofactor facts M(A)A = det(A)Id and c₁²/c₂ ≤ M(A) ≤ c₂²/c₁ on SPD
//! matrices, discrete divergence-free cofactor rows, the time-linearized
//! Monge–Ampère identity ∂ₜρ = tr(M(∇²P*) ∂ₜ∇²P*) on manufactured smooth
//! families, the weak pairing ∫ρ(∇²P*)⁻¹∂ₜ∇P*·∇ψ = −∫ρU·∇ψ, the per-atom
//! Orlicz report Σmᵢ|vᵢ|log₊ᵏ|vᵢ| against its Hessian and velocity
//! majorants, and the moment identity d/dt Σmᵢφ(yᵢ) = Σmᵢ∇φ(yᵢ)·Uᵢ whose
//! finite-difference gap must shrink at the integrator's order.

use crate::dynamics::{run, DynamicsError, RunParams, Scheme, Trajectory};
use crate::eulerian::CellModel;
use crate::laguerre::LaguerreError;
use crate::measures::{histogram, DiracCloud, InitialPressure};
use crate::ot::SolverOptions;
use crate::vec2::{dot, norm, norm2, scale, sub, Mat2, Vec2};
use crate::weak::log_slope;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{E, TAU};

/// log₊(x) = max(log x, 0).
pub fn logp(x: f64) -> f64 {
    x.ln().max(0.0)
}

/// Left side ab log₊ᵏ(ab) of the two-variable logarithmic inequality.
pub fn orlicz_lhs(a: f64, b: f64, k: u32) -> f64 {
    let ab = a * b;
    ab * logp(ab).powi(k as i32)
}

/// Right side 2^{k−1}[(k/e)ᵏ + 1]b² + 2^{3(k−1)}a² log₊²ᵏ(a).
pub fn orlicz_rhs(a: f64, b: f64, k: u32) -> f64 {
    let kf = k as f64;
    let peak = (kf / E).powi(k as i32) + 1.0;
    2f64.powi(k as i32 - 1) * peak * b * b
        + 2f64.powi(3 * (k as i32 - 1)) * a * a * logp(a).powi(2 * k as i32)
}

/// Result of the inequality scan: the least margin rhs − lhs seen and the
/// sample attaining it.
#[derive(Clone, Copy, Debug)]
pub struct LemmaScan {
    pub samples: usize,
    pub min_margin: f64,
    pub worst: (f64, f64, u32),
}

/// Check the inequality on log-uniform (a, b) ∈ [10⁻⁶, 10⁶]² for every
/// k ≤ k_max.
pub fn scan_orlicz_lemma(samples: usize, k_max: u32, seed: u64) -> LemmaScan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_margin = f64::INFINITY;
    let mut worst = (0.0, 0.0, 0);
    for _ in 0..samples {
        let a = 10f64.powf(rng.gen_range(-6.0..6.0));
        let b = 10f64.powf(rng.gen_range(-6.0..6.0));
        for k in 1..=k_max {
            let margin = orlicz_rhs(a, b, k) - orlicz_lhs(a, b, k);
            if margin < min_margin {
                min_margin = margin;
                worst = (a, b, k);
            }
        }
    }
    LemmaScan {
        samples,
        min_margin,
        worst,
    }
}

/// Random symmetric positive definite matrix with spectrum inside
/// [c₁, c₂]: a rotation of a diagonal draw.
pub fn random_spd(rng: &mut ChaCha8Rng, c1: f64, c2: f64) -> Mat2 {
    let l1 = rng.gen_range(c1..=c2);
    let l2 = rng.gen_range(c1..=c2);
    let t = rng.gen_range(0.0..TAU);
    let (s, c) = t.sin_cos();
    Mat2([
        [c * c * l1 + s * s * l2, s * c * (l1 - l2)],
        [s * c * (l1 - l2), s * s * l1 + c * c * l2],
    ])
}

/// Largest entry gap of M(A)·A = A·M(A) = det(A)·Id.
pub fn cofactor_identity_gap(a: &Mat2) -> f64 {
    let d = a.det();
    let m = a.cofactor();
    let mut gap = 0.0f64;
    for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let id = if i == j { d } else { 0.0 };
        gap = gap.max((m.mul(a).0[i][j] - id).abs());
        gap = gap.max((a.mul(&m).0[i][j] - id).abs());
    }
    gap
}

/// How far the eigenvalues of M(A) escape [c₁²/c₂, c₂²/c₁]; nonpositive
/// when the ellipticity bounds hold.
pub fn cofactor_ellipticity_excess(a: &Mat2, c1: f64, c2: f64) -> f64 {
    let [hi, lo] = a.cofactor().sym_eigenvalues();
    (c1 * c1 / c2 - lo).max(hi - c2 * c2 / c1)
}

/// Periodic nodal field on an n×n grid with second-order calculus.
#[derive(Clone, Debug)]
pub struct PeriodicGrid {
    pub side: usize,
    pub values: Vec<f64>,
}

impl PeriodicGrid {
    pub fn from_fn(side: usize, f: impl Fn(Vec2) -> f64) -> Self {
        let mut values = Vec::with_capacity(side * side);
        for j in 0..side {
            for i in 0..side {
                values.push(f([i as f64 / side as f64, j as f64 / side as f64]));
            }
        }
        PeriodicGrid { side, values }
    }

    pub fn get(&self, i: isize, j: isize) -> f64 {
        let n = self.side as isize;
        let i = i.rem_euclid(n) as usize;
        let j = j.rem_euclid(n) as usize;
        self.values[j * self.side + i]
    }

    /// Central first differences.
    pub fn dx(&self, i: isize, j: isize) -> f64 {
        (self.get(i + 1, j) - self.get(i - 1, j)) * self.side as f64 / 2.0
    }

    pub fn dy(&self, i: isize, j: isize) -> f64 {
        (self.get(i, j + 1) - self.get(i, j - 1)) * self.side as f64 / 2.0
    }

    /// Central second differences, cross term by the four-corner stencil.
    pub fn hessian(&self, i: isize, j: isize) -> Mat2 {
        let n2 = (self.side * self.side) as f64;
        let p = |di: isize, dj: isize| self.get(i + di, j + dj);
        let h11 = (p(1, 0) - 2.0 * p(0, 0) + p(-1, 0)) * n2;
        let h22 = (p(0, 1) - 2.0 * p(0, 0) + p(0, -1)) * n2;
        let h12 = (p(1, 1) - p(1, -1) - p(-1, 1) + p(-1, -1)) * n2 / 4.0;
        Mat2([[h11, h12], [h12, h22]])
    }
}

/// Smooth conjugate family P*(y, t) = |y|²/2 + ε(t) q(y) with
/// q = sin(2πy₁) sin(2πy₂), carrying ε and ε′ at the evaluation time.
#[derive(Clone, Copy, Debug)]
pub struct ManufacturedFamily {
    pub epsilon: f64,
    pub epsilon_rate: f64,
}

impl ManufacturedFamily {
    pub fn q(y: Vec2) -> f64 {
        (TAU * y[0]).sin() * (TAU * y[1]).sin()
    }

    /// Closed-form ∂ₜρ = ε′ d/dε det(Id + ε∇²q).
    pub fn density_rate(&self, y: Vec2) -> f64 {
        let kappa = TAU * TAU;
        let (s1, c1) = (TAU * y[0]).sin_cos();
        let (s2, c2) = (TAU * y[1]).sin_cos();
        let diag = 1.0 - self.epsilon * kappa * s1 * s2;
        self.epsilon_rate
            * (2.0 * diag * (-kappa * s1 * s2)
                - 2.0 * self.epsilon * kappa * kappa * c1 * c1 * c2 * c2)
    }
}

/// Sup-norm residual of ∂ₜρ = tr(M(∇²P*) ∂ₜ∇²P*) with the closed-form left
/// side against grid Hessians on the right; second order in 1/n.
pub fn ma_linearization_residual(family: &ManufacturedFamily, n: usize) -> f64 {
    let q = PeriodicGrid::from_fn(n, ManufacturedFamily::q);
    let mut worst = 0.0f64;
    for j in 0..n as isize {
        for i in 0..n as isize {
            let hq = q.hessian(i, j);
            let a = Mat2::IDENTITY.add(&hq.scale(family.epsilon));
            let m = a.cofactor();
            let rhs = family.epsilon_rate
                * (m.0[0][0] * hq.0[0][0]
                    + m.0[0][1] * hq.0[1][0]
                    + m.0[1][0] * hq.0[0][1]
                    + m.0[1][1] * hq.0[1][1]);
            let y = [i as f64 / n as f64, j as f64 / n as f64];
            worst = worst.max((family.density_rate(y) - rhs).abs());
        }
    }
    worst
}

/// Sup-norm of the discrete divergence of the cofactor rows of
/// ∇²P* = Id + ε D²q; the exact rows are divergence free, so the residual
/// is pure discretization error and decays at second order.
pub fn cofactor_divergence_residual(family: &ManufacturedFamily, n: usize) -> f64 {
    let q = PeriodicGrid::from_fn(n, ManufacturedFamily::q);
    let mut m11 = PeriodicGrid {
        side: n,
        values: vec![0.0; n * n],
    };
    let mut m12 = m11.clone();
    let mut m22 = m11.clone();
    for j in 0..n as isize {
        for i in 0..n as isize {
            let a = Mat2::IDENTITY.add(&q.hessian(i, j).scale(family.epsilon));
            let m = a.cofactor();
            let idx = j as usize * n + i as usize;
            m11.values[idx] = m.0[0][0];
            m12.values[idx] = m.0[0][1];
            m22.values[idx] = m.0[1][1];
        }
    }
    let mut worst = 0.0f64;
    for j in 0..n as isize {
        for i in 0..n as isize {
            let div1 = m11.dx(i, j) + m12.dy(i, j);
            let div2 = m12.dx(i, j) + m22.dy(i, j);
            worst = worst.max(div1.abs()).max(div2.abs());
        }
    }
    worst
}

/// Quadrature gaps of the weak pairing for the one-dimensional continuity
/// ansatz ρ = 1 + ε sin(2πy₁), ∂ₜ∇P* = (ε′q′, 0) and ρU = (−ε′q′, ρ s):
/// returns (gap with the minus sign, gap with the plus sign) maximized over
/// a trig test set. Only the minus sign closes the identity.
pub fn ma_pairing_gaps(epsilon: f64, epsilon_rate: f64, n: usize) -> (f64, f64) {
    let tests: [([f64; 2], usize); 8] = [
        ([1.0, 0.0], 0),
        ([1.0, 0.0], 1),
        ([0.0, 1.0], 0),
        ([0.0, 1.0], 1),
        ([1.0, 1.0], 0),
        ([1.0, 1.0], 1),
        ([2.0, 1.0], 0),
        ([2.0, 1.0], 1),
    ];
    let mut minus = 0.0f64;
    let mut plus = 0.0f64;
    for (kf, parity) in tests {
        let mut i1 = 0.0;
        let mut i2 = 0.0;
        for j in 0..n {
            for i in 0..n {
                let y = [i as f64 / n as f64, j as f64 / n as f64];
                let (s1, c1) = (TAU * y[0]).sin_cos();
                let rho = 1.0 + epsilon * s1;
                let hess = Mat2([[1.0 + epsilon * s1, 0.0], [0.0, 1.0]]);
                let x_field = [epsilon_rate * (-c1 / TAU), 0.0];
                let lhs_vec = scale(rho, hess.inverse().expect("PD ansatz").mul_vec(x_field));
                let rho_u = [epsilon_rate * c1 / TAU, rho * s1];
                let (sn, cs) = (TAU * dot(kf, y)).sin_cos();
                let grad = if parity == 0 {
                    scale(-TAU * sn, kf)
                } else {
                    scale(TAU * cs, kf)
                };
                i1 += dot(lhs_vec, grad);
                i2 += dot(rho_u, grad);
            }
        }
        let inv = 1.0 / (n * n) as f64;
        i1 *= inv;
        i2 *= inv;
        minus = minus.max((i1 + i2).abs());
        plus = plus.max((i1 - i2).abs());
    }
    (minus, plus)
}

/// Per-snapshot Orlicz functional and its majorants.
#[derive(Clone, Copy, Debug)]
pub struct OrliczReport {
    pub k: u32,
    /// Σᵢ mᵢ|vᵢ| log₊ᵏ|vᵢ| with vᵢ = ∂ₜ∇P*(yᵢ) = ḃᵢ − HᵢUᵢ.
    pub lhs: f64,
    /// Σᵢ mᵢ‖Hᵢ‖ log₊²ᵏ‖Hᵢ‖.
    pub rhs_hessian: f64,
    /// maxᵢ(ρ̂ᵢ|Uᵢ|²) · Σᵢ (mᵢ/ρ̂ᵢ)‖Hᵢ‖ with ρ̂ the binned density.
    pub rhs_velocity: f64,
    /// lhs / (rhs_hessian + rhs_velocity); zero whenever lhs vanishes.
    pub ratio: f64,
}

/// Assemble the report at one stored frame.
pub fn orlicz_report(
    traj: &Trajectory,
    frame: usize,
    k: u32,
    bins: usize,
) -> Result<OrliczReport, LaguerreError> {
    assert!(bins >= 2, "density proxy needs at least 2 bins per side");
    assert!(k >= 1 && k <= 2, "the estimate is reported for k in {{1, 2}}");
    let model = CellModel::from_frame(traj, frame)?;
    let cloud = traj.cloud_at(frame);
    let hist = histogram(&cloud, bins).expect("bin count validated above");
    let mut lhs = 0.0;
    let mut rhs_hessian = 0.0;
    let mut sup_u = 0.0f64;
    let mut lebesgue_h = 0.0;
    for i in 0..cloud.len() {
        let m = cloud.masses[i];
        let u = model.diagram.velocity(i);
        let v = sub(traj.barycenter_rate(frame, i), model.hessians[i].mul_vec(u));
        let nv = norm(v);
        lhs += m * nv * logp(nv).powi(k as i32);
        let nh = model.hessians[i].sym_op_norm();
        rhs_hessian += m * nh * logp(nh).powi(2 * k as i32);
        let rho = hist.density_at(&cloud.points[i]);
        sup_u = sup_u.max(rho * norm2(u));
        if rho > 0.0 {
            lebesgue_h += m / rho * nh;
        }
    }
    let rhs_velocity = sup_u * lebesgue_h;
    let denom = rhs_hessian + rhs_velocity;
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / denom };
    Ok(OrliczReport {
        k,
        lhs,
        rhs_hessian,
        rhs_velocity,
        ratio,
    })
}

/// Moment-identity convergence data: per time step, the worst gap between
/// the centered difference of Σmᵢφ(yᵢ) and the flux Σmᵢ∇φ(yᵢ)·Uᵢ over the
/// nine lowest trig moments.
#[derive(Clone, Debug)]
pub struct MomentOrder {
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    pub order: f64,
}

const MOMENT_KS: [[f64; 2]; 4] = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]];

fn moment_gap(traj: &Trajectory) -> f64 {
    let frames = &traj.frames;
    let n = traj.masses.len();
    let mut worst = 0.0f64;
    // the constant moment is identically conserved: Σm has zero difference
    // and zero flux, so only the eight harmonics below can contribute
    for kf in MOMENT_KS {
        for parity in 0..2 {
            let moment = |f: usize| -> f64 {
                (0..n)
                    .map(|i| {
                        let y = frames[f].points[i].coords();
                        let ang = TAU * dot(kf, y);
                        traj.masses[i] * if parity == 0 { ang.cos() } else { ang.sin() }
                    })
                    .sum()
            };
            for f in 1..frames.len() - 1 {
                let fd =
                    (moment(f + 1) - moment(f - 1)) / (frames[f + 1].time - frames[f - 1].time);
                let mut flux = 0.0;
                for i in 0..n {
                    let y = frames[f].points[i].coords();
                    let (sn, cs) = (TAU * dot(kf, y)).sin_cos();
                    let grad = if parity == 0 {
                        scale(-TAU * sn, kf)
                    } else {
                        scale(TAU * cs, kf)
                    };
                    flux += traj.masses[i] * dot(grad, frames[f].velocities[i]);
                }
                worst = worst.max((fd - flux).abs());
            }
        }
    }
    worst
}

/// Rerun the flow at each time step and measure the moment-identity gap;
/// the fitted order in dt should reach the integrator's.
pub fn moment_identity_study(
    p0: &InitialPressure,
    side: usize,
    dts: &[f64],
    t_final: f64,
    scheme: Scheme,
) -> Result<MomentOrder, DynamicsError> {
    let cloud = DiracCloud::sample_initial(p0, side).map_err(|_| DynamicsError::BadTimeStep)?;
    let mut errors = Vec::with_capacity(dts.len());
    for &dt in dts {
        let traj = run(
            &cloud,
            &RunParams {
                scheme,
                dt,
                t_final,
                solver: SolverOptions::default(),
            },
        )?;
        errors.push(moment_gap(&traj));
    }
    let order = log_slope(dts, &errors);
    Ok(MomentOrder {
        dts: dts.to_vec(),
        errors,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Scenario;

    #[test]
    fn lemma_spot_values_are_frozen() {
        assert_eq!(orlicz_lhs(1.0, 1.0, 1), 0.0);
        let rhs11 = orlicz_rhs(1.0, 1.0, 1);
        assert!((rhs11 - (1.0 / E + 1.0)).abs() <= 1e-15);
        assert!((rhs11 - 1.367_879_441_171_442_3).abs() <= 1e-15);
        let e2 = E * E;
        assert!((orlicz_lhs(e2, 1.0, 1) - 2.0 * e2).abs() <= 1e-12);
        let rhs_e2 = orlicz_rhs(e2, 1.0, 1);
        assert!((rhs_e2 - (1.0 / E + 1.0 + 4.0 * e2 * e2)).abs() <= 1e-10);
        assert!((rhs_e2 - 219.760_479_573_748_4).abs() <= 1e-10);
        assert!(orlicz_lhs(e2, 1.0, 1) <= rhs_e2);
    }

    #[test]
    fn lemma_scan_stays_nonnegative_on_a_small_draw() {
        let scan = scan_orlicz_lemma(20_000, 5, 91);
        assert!(
            scan.min_margin >= 0.0,
            "margin {:.3e} at {:?}",
            scan.min_margin,
            scan.worst
        );
    }

    #[test]
    fn cofactor_identities_hold_on_random_spd_draws() {
        assert_eq!(Mat2::IDENTITY.cofactor().0, Mat2::IDENTITY.0);
        let d = Mat2([[0.3, 0.0], [0.0, 2.5]]).cofactor();
        assert_eq!(d.0, [[2.5, 0.0], [0.0, 0.3]]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let a = random_spd(&mut rng, 0.2, 3.0);
            assert!(cofactor_identity_gap(&a) <= 1e-12);
            assert!(cofactor_ellipticity_excess(&a, 0.2, 3.0) <= 1e-12);
        }
    }

    #[test]
    fn manufactured_residuals_decay_at_second_order() {
        let family = ManufacturedFamily {
            epsilon: 0.01,
            epsilon_rate: 1.0,
        };
        let ns = [32usize, 64, 128];
        let hs: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
        let lin: Vec<f64> = ns
            .iter()
            .map(|&n| ma_linearization_residual(&family, n))
            .collect();
        let div: Vec<f64> = ns
            .iter()
            .map(|&n| cofactor_divergence_residual(&family, n))
            .collect();
        let lin_order = log_slope(&hs, &lin);
        let div_order = log_slope(&hs, &div);
        assert!(lin_order >= 1.8, "linearization order {lin_order:.2}");
        assert!(div_order >= 1.8, "divergence order {div_order:.2}");
    }

    #[test]
    fn pairing_needs_the_minus_sign() {
        let (minus, plus) = ma_pairing_gaps(0.3, 0.7, 64);
        assert!(minus <= 1e-12, "minus-sign gap {minus:.3e}");
        assert!(plus >= 0.3, "plus-sign gap {plus:.3e} should be large");
    }

    #[test]
    fn uniform_run_reports_zero_orlicz_lhs() {
        let p0 = InitialPressure::new(Scenario::Zero).unwrap();
        let cloud = DiracCloud::sample_initial(&p0, 8).unwrap();
        let traj = run(
            &cloud,
            &RunParams {
                scheme: Scheme::Heun,
                dt: 0.05,
                t_final: 0.1,
                solver: SolverOptions::default(),
            },
        )
        .unwrap();
        for frame in 0..traj.frames.len() {
            let report = orlicz_report(&traj, frame, 1, 4).unwrap();
            assert_eq!(report.lhs, 0.0);
            assert_eq!(report.ratio, 0.0);
            assert!(report.rhs_hessian.is_finite() && report.rhs_velocity.is_finite());
        }
    }

    #[test]
    fn moment_identity_gap_shrinks_at_the_scheme_order() {
        let p0 = InitialPressure::new(Scenario::Sine { epsilon: 0.01 }).unwrap();
        let study =
            moment_identity_study(&p0, 8, &[0.08, 0.04, 0.02], 0.24, Scheme::Heun).unwrap();
        assert!(
            study.order >= 1.5,
            "order {:.2} from errors {:?}",
            study.order,
            study.errors
        );
    }
}
