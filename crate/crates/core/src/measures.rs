//! Dual measures as Dirac clouds and the initial data that seeds them.
//!
//! The evolved state is an atomic measure ρ = Σᵢ mᵢ δ_{yᵢ} on T². The
//! initial cloud discretizes the pushforward (Id + ∇p⁰)♯𝓛: cell centers
//! xⱼ of an M×M grid map to atoms at xⱼ + ∇p⁰(xⱼ) with equal masses 1/M².
//! Validity of the construction needs p⁰(x) + |x|²/2 convex, witnessed
//! numerically by an eigenvalue scan of Id + ∇²p⁰ over a 256×256 grid.
//! A coarse histogram of the cloud stands in for the L^∞ density bounds
//! λ ≤ ρ ≤ Λ that the continuum theory provides.

use crate::torus::{canonicalize, TorusPoint};
use crate::vec2::{add, Mat2, Vec2};
use std::f64::consts::TAU;
use thiserror::Error;

/// Grid side of the convexity / Jacobian-range scans.
const SCAN_SIDE: usize = 256;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("initial pressure is not (-1)-convex: min eig(Id+∇²p⁰) = {min_eig}")]
    NotConvex { min_eig: f64 },
    #[error("grid profile needs side ≥ 2, got {side}")]
    GridTooSmall { side: usize },
    #[error("grid profile expected {expected} values, got {got}")]
    GridSizeMismatch { expected: usize, got: usize },
    #[error("cloud masses must be positive, atom {index} has mass {mass}")]
    NonPositiveMass { index: usize, mass: f64 },
    #[error("cloud total mass {total} differs from 1 beyond 1e-12")]
    BadTotalMass { total: f64 },
    #[error("cloud must contain at least one atom")]
    EmptyCloud,
    #[error("sampling grid side must be ≥ 2, got {side}")]
    SamplingTooCoarse { side: usize },
    #[error("histogram needs ≥ 2 bins per side, got {bins}")]
    HistogramTooCoarse { bins: usize },
}

/// Built-in initial pressure shapes; all closed form except the grid
/// profile, which differentiates node samples by central differences.
#[derive(Clone, Debug)]
pub enum Scenario {
    /// p⁰ ≡ 0: the stationary uniform state.
    Zero,
    /// p⁰(x) = ε sin(2πx₁) sin(2πx₂).
    Sine { epsilon: f64 },
    /// p⁰(x) = f(x₁) with f′(x₁) = a sin(2πx₁): a pure shear column flow.
    Shear { amplitude: f64 },
    /// p⁰ sampled at the nodes (i/n, j/n) of an n×n grid, row-major in x₂.
    Grid { side: usize, values: Vec<f64> },
}

/// Initial pressure with a verified convexity witness.
#[derive(Clone, Debug)]
pub struct InitialPressure {
    scenario: Scenario,
    convexity_margin: f64,
    jacobian_range: (f64, f64),
}

impl InitialPressure {
    /// Validates shape parameters and runs the convexity scan; rejects
    /// profiles where p⁰(x) + |x|²/2 fails to be convex on the grid.
    pub fn new(scenario: Scenario) -> Result<Self, MeasureError> {
        if let Scenario::Grid { side, values } = &scenario {
            if *side < 2 {
                return Err(MeasureError::GridTooSmall { side: *side });
            }
            if values.len() != side * side {
                return Err(MeasureError::GridSizeMismatch {
                    expected: side * side,
                    got: values.len(),
                });
            }
        }
        let mut min_eig = f64::INFINITY;
        let mut min_det = f64::INFINITY;
        let mut max_det = f64::NEG_INFINITY;
        for j in 0..SCAN_SIDE {
            for i in 0..SCAN_SIDE {
                let x = [
                    (i as f64 + 0.5) / SCAN_SIDE as f64,
                    (j as f64 + 0.5) / SCAN_SIDE as f64,
                ];
                let g = Mat2::IDENTITY.add(&scenario_hessian(&scenario, x));
                let [_, lo] = g.sym_eigenvalues();
                min_eig = min_eig.min(lo);
                let d = g.det();
                min_det = min_det.min(d);
                max_det = max_det.max(d);
            }
        }
        if min_eig < 0.0 {
            return Err(MeasureError::NotConvex { min_eig });
        }
        Ok(InitialPressure {
            scenario,
            convexity_margin: min_eig,
            jacobian_range: (min_det, max_det),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Smallest eigenvalue of Id + ∇²p⁰ found by the load-time scan.
    pub fn convexity_margin(&self) -> f64 {
        self.convexity_margin
    }

    /// (min, max) of det(Id + ∇²p⁰) over the scan grid: the reciprocal
    /// of the initial density range, the oracle for histogram bands.
    pub fn jacobian_range(&self) -> (f64, f64) {
        self.jacobian_range
    }

    /// p⁰(x); the shear profile uses the antiderivative −a cos(2πx₁)/2π of
    /// the prescribed slope.
    pub fn value(&self, x: Vec2) -> f64 {
        match &self.scenario {
            Scenario::Zero => 0.0,
            Scenario::Sine { epsilon } => epsilon * (TAU * x[0]).sin() * (TAU * x[1]).sin(),
            Scenario::Shear { amplitude } => -amplitude / TAU * (TAU * x[0]).cos(),
            Scenario::Grid { side, values } => {
                grid_interpolate(*side, x, |i, j| [grid_value(*side, values, i, j)])[0]
            }
        }
    }

    pub fn grad(&self, x: Vec2) -> Vec2 {
        match &self.scenario {
            Scenario::Zero => [0.0, 0.0],
            Scenario::Sine { epsilon } => {
                let (s1, c1) = (TAU * x[0]).sin_cos();
                let (s2, c2) = (TAU * x[1]).sin_cos();
                [epsilon * TAU * c1 * s2, epsilon * TAU * s1 * c2]
            }
            Scenario::Shear { amplitude } => [amplitude * (TAU * x[0]).sin(), 0.0],
            Scenario::Grid { side, values } => grid_gradient(*side, values, x),
        }
    }

    pub fn hessian(&self, x: Vec2) -> Mat2 {
        scenario_hessian(&self.scenario, x)
    }
}

fn scenario_hessian(scenario: &Scenario, x: Vec2) -> Mat2 {
    match scenario {
        Scenario::Zero => Mat2::ZERO,
        Scenario::Sine { epsilon } => {
            let (s1, c1) = (TAU * x[0]).sin_cos();
            let (s2, c2) = (TAU * x[1]).sin_cos();
            let k = epsilon * TAU * TAU;
            Mat2([[-k * s1 * s2, k * c1 * c2], [k * c1 * c2, -k * s1 * s2]])
        }
        Scenario::Shear { amplitude } => {
            Mat2([[amplitude * TAU * (TAU * x[0]).cos(), 0.0], [0.0, 0.0]])
        }
        Scenario::Grid { side, values } => grid_hessian(*side, values, x),
    }
}

fn grid_value(side: usize, values: &[f64], i: isize, j: isize) -> f64 {
    let n = side as isize;
    let i = i.rem_euclid(n) as usize;
    let j = j.rem_euclid(n) as usize;
    values[j * side + i]
}

/// Node gradient by periodic central differences, bilinearly interpolated.
fn grid_gradient(side: usize, values: &[f64], x: Vec2) -> Vec2 {
    grid_interpolate(side, x, |i, j| {
        let n = side as f64;
        [
            (grid_value(side, values, i + 1, j) - grid_value(side, values, i - 1, j)) * n / 2.0,
            (grid_value(side, values, i, j + 1) - grid_value(side, values, i, j - 1)) * n / 2.0,
        ]
    })
}

fn grid_hessian(side: usize, values: &[f64], x: Vec2) -> Mat2 {
    let n2 = (side * side) as f64;
    let comps = grid_interpolate(side, x, |i, j| {
        let p = |di, dj| grid_value(side, values, i + di, j + dj);
        let h11 = (p(1, 0) - 2.0 * p(0, 0) + p(-1, 0)) * n2;
        let h22 = (p(0, 1) - 2.0 * p(0, 0) + p(0, -1)) * n2;
        let h12 = (p(1, 1) - p(1, -1) - p(-1, 1) + p(-1, -1)) * n2 / 4.0;
        [h11, h22, h12]
    });
    Mat2([[comps[0], comps[2]], [comps[2], comps[1]]])
}

/// Bilinear interpolation of a per-node quantity over the periodic grid.
fn grid_interpolate<const K: usize>(
    side: usize,
    x: Vec2,
    node: impl Fn(isize, isize) -> [f64; K],
) -> [f64; K] {
    let n = side as f64;
    let fx = x[0].rem_euclid(1.0) * n;
    let fy = x[1].rem_euclid(1.0) * n;
    let i0 = fx.floor() as isize;
    let j0 = fy.floor() as isize;
    let tx = fx - i0 as f64;
    let ty = fy - j0 as f64;
    let v00 = node(i0, j0);
    let v10 = node(i0 + 1, j0);
    let v01 = node(i0, j0 + 1);
    let v11 = node(i0 + 1, j0 + 1);
    let mut out = [0.0; K];
    for k in 0..K {
        out[k] = (1.0 - tx) * (1.0 - ty) * v00[k]
            + tx * (1.0 - ty) * v10[k]
            + (1.0 - tx) * ty * v01[k]
            + tx * ty * v11[k];
    }
    out
}

/// Weighted atoms {(yᵢ, mᵢ)} with per-atom cumulative integer lifts, so
/// trajectories remain continuous in ℝ² across torus wraps.
#[derive(Clone, Debug)]
pub struct DiracCloud {
    pub points: Vec<TorusPoint>,
    pub masses: Vec<f64>,
    pub lift_history: Vec<Vec2>,
}

impl DiracCloud {
    /// Builds a cloud from explicit atoms. Exactly coincident positions
    /// are merged with summed masses, since distinct sites are required
    /// downstream by the power diagram.
    pub fn from_parts(points: Vec<TorusPoint>, masses: Vec<f64>) -> Result<Self, MeasureError> {
        assert_eq!(points.len(), masses.len());
        if points.is_empty() {
            return Err(MeasureError::EmptyCloud);
        }
        for (index, &mass) in masses.iter().enumerate() {
            if !(mass > 0.0) {
                return Err(MeasureError::NonPositiveMass { index, mass });
            }
        }
        let bits = |p: &TorusPoint| {
            let c = p.coords();
            (c[0].to_bits(), c[1].to_bits())
        };
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by_key(|&i| bits(&points[i]));
        let mut merged_points: Vec<TorusPoint> = Vec::with_capacity(points.len());
        let mut merged_masses: Vec<f64> = Vec::with_capacity(points.len());
        for &i in &order {
            match merged_points.last() {
                Some(last) if bits(last) == bits(&points[i]) => {
                    *merged_masses.last_mut().unwrap() += masses[i];
                }
                _ => {
                    merged_points.push(points[i]);
                    merged_masses.push(masses[i]);
                }
            }
        }
        let total: f64 = merged_masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(MeasureError::BadTotalMass { total });
        }
        let n = merged_points.len();
        Ok(DiracCloud {
            points: merged_points,
            masses: merged_masses,
            lift_history: vec![[0.0, 0.0]; n],
        })
    }

    /// Pushforward sampling: atom j at xⱼ + ∇p⁰(xⱼ) over the cell-centered
    /// M×M grid, each carrying mass 1/M².
    pub fn sample_initial(p0: &InitialPressure, m_side: usize) -> Result<Self, MeasureError> {
        if m_side < 2 {
            return Err(MeasureError::SamplingTooCoarse { side: m_side });
        }
        let m = m_side as f64;
        let mass = 1.0 / (m * m);
        let mut points = Vec::with_capacity(m_side * m_side);
        let mut masses = Vec::with_capacity(m_side * m_side);
        for j in 0..m_side {
            for i in 0..m_side {
                let x = [(i as f64 + 0.5) / m, (j as f64 + 0.5) / m];
                let y = add(x, p0.grad(x));
                points.push(canonicalize(y).expect("finite pushforward position"));
                masses.push(mass);
            }
        }
        DiracCloud::from_parts(points, masses)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Continuous-trajectory position in ℝ²: canonical point plus the
    /// accumulated integer lift.
    pub fn unwrapped(&self, i: usize) -> Vec2 {
        add(self.points[i].coords(), self.lift_history[i])
    }

    /// The same atoms at new positions. Keeps masses and atom order, unlike
    /// construction from parts, so indices stay stable along a trajectory.
    pub fn advected(&self, points: Vec<TorusPoint>, lift_history: Vec<Vec2>) -> DiracCloud {
        assert_eq!(points.len(), self.len());
        assert_eq!(lift_history.len(), self.len());
        DiracCloud {
            points,
            masses: self.masses.clone(),
            lift_history,
        }
    }
}

/// Piecewise-constant density estimate: bin value = bin mass / bin area.
#[derive(Clone, Debug)]
pub struct DensityHistogram {
    pub bins_per_side: usize,
    pub values: Vec<f64>,
}

impl DensityHistogram {
    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Σ bins · bin_width², which must reproduce the total mass.
    pub fn integral(&self) -> f64 {
        let w2 = 1.0 / (self.bins_per_side * self.bins_per_side) as f64;
        self.values.iter().sum::<f64>() * w2
    }

    /// Density at the bin containing a point.
    pub fn density_at(&self, p: &TorusPoint) -> f64 {
        let n = self.bins_per_side;
        let c = p.coords();
        let bi = ((c[0] * n as f64) as usize).min(n - 1);
        let bj = ((c[1] * n as f64) as usize).min(n - 1);
        self.values[bj * n + bi]
    }
}

pub fn histogram(cloud: &DiracCloud, bins_per_side: usize) -> Result<DensityHistogram, MeasureError> {
    if bins_per_side < 2 {
        return Err(MeasureError::HistogramTooCoarse { bins: bins_per_side });
    }
    let n = bins_per_side;
    let mut values = vec![0.0f64; n * n];
    for (p, &m) in cloud.points.iter().zip(&cloud.masses) {
        let c = p.coords();
        let bi = ((c[0] * n as f64) as usize).min(n - 1);
        let bj = ((c[1] * n as f64) as usize).min(n - 1);
        values[bj * n + bi] += m;
    }
    let inv_area = (n * n) as f64;
    for v in &mut values {
        *v *= inv_area;
    }
    Ok(DensityHistogram {
        bins_per_side: n,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec2::sub;
    use proptest::prelude::*;

    #[test]
    fn zero_pressure_samples_the_grid() {
        let p0 = InitialPressure::new(Scenario::Zero).unwrap();
        let cloud = DiracCloud::sample_initial(&p0, 4).unwrap();
        assert_eq!(cloud.len(), 16);
        for m in &cloud.masses {
            assert_eq!(*m, 1.0 / 16.0);
        }
        assert_eq!(cloud.total_mass(), 1.0);
        let c = cloud.points[0].coords();
        assert_eq!(c, [0.125, 0.125]);
    }

    #[test]
    fn sine_scenario_passes_convexity_and_matches_closed_form_range() {
        let p0 = InitialPressure::new(Scenario::Sine { epsilon: 0.01 }).unwrap();
        // min eig(Id+∇²p⁰) = 1 − 4π²ε at the diagonal extremes
        let expected = 1.0 - TAU * TAU * 0.01;
        assert!((p0.convexity_margin() - expected).abs() < 1e-3);
        let (lo, hi) = p0.jacobian_range();
        // det = (1−s)² − c² with s+|c| peaking at 4π²ε ≈ 0.3948
        assert!((lo - (1.0 - 0.394_784f64).powi(2)).abs() < 1e-3, "lo = {lo}");
        assert!((hi - (1.0 + 0.394_784f64).powi(2)).abs() < 1e-3, "hi = {hi}");
    }

    #[test]
    fn too_strong_sine_is_rejected() {
        // 4π²ε > 1 destroys convexity
        let err = InitialPressure::new(Scenario::Sine { epsilon: 0.05 });
        assert!(matches!(err, Err(MeasureError::NotConvex { .. })));
    }

    #[test]
    fn shear_leaves_second_coordinates_on_the_grid() {
        // the sorted cloud is column-major: the shear moves only x₁ and is
        // monotone there, so index k % 32 recovers the row
        let p0 = InitialPressure::new(Scenario::Shear { amplitude: 0.05 }).unwrap();
        let cloud = DiracCloud::sample_initial(&p0, 32).unwrap();
        for (k, p) in cloud.points.iter().enumerate() {
            let expected = ((k % 32) as f64 + 0.5) / 32.0;
            assert_eq!(p.coords()[1], expected);
        }
    }

    #[test]
    fn shear_cloud_is_invariant_under_grid_row_shift() {
        let p0 = InitialPressure::new(Scenario::Shear { amplitude: 0.05 }).unwrap();
        let m = 16usize;
        let cloud = DiracCloud::sample_initial(&p0, m).unwrap();
        // shifting x₂ by 1/m permutes rows within each column block
        for k in 0..cloud.len() {
            let shifted = canonicalize(add(cloud.points[k].coords(), [0.0, 1.0 / m as f64]))
                .unwrap()
                .coords();
            let partner_index = (k / m) * m + (k % m + 1) % m;
            let partner = cloud.points[partner_index].coords();
            assert!((shifted[0] - partner[0]).abs() < 1e-12);
            assert!((shifted[1] - partner[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_profile_reproduces_sine_derivatives() {
        let side = 256;
        let eps = 0.01;
        let mut values = Vec::with_capacity(side * side);
        for j in 0..side {
            for i in 0..side {
                let x = [i as f64 / side as f64, j as f64 / side as f64];
                values.push(eps * (TAU * x[0]).sin() * (TAU * x[1]).sin());
            }
        }
        let grid = InitialPressure::new(Scenario::Grid { side, values }).unwrap();
        let exact = InitialPressure::new(Scenario::Sine { epsilon: eps }).unwrap();
        for &x in &[[0.3, 0.7], [0.05, 0.55], [0.9, 0.2]] {
            let dg = sub(grid.grad(x), exact.grad(x));
            assert!(dg[0].abs() < 1e-4 && dg[1].abs() < 1e-4, "grad at {x:?}");
            let dh = grid.hessian(x).sub(&exact.hessian(x));
            assert!(dh.sym_op_norm() < 5e-3, "hessian at {x:?}");
        }
    }

    #[test]
    fn duplicate_atoms_are_merged() {
        let p = canonicalize([0.25, 0.5]).unwrap();
        let q = canonicalize([0.75, 0.5]).unwrap();
        let cloud =
            DiracCloud::from_parts(vec![p, q, p], vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.total_mass(), 1.0);
        let m_at_p = cloud
            .points
            .iter()
            .zip(&cloud.masses)
            .find(|(pt, _)| pt.coords() == [0.25, 0.5])
            .unwrap()
            .1;
        assert!((m_at_p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_cloud_has_flat_histogram() {
        let p0 = InitialPressure::new(Scenario::Zero).unwrap();
        let cloud = DiracCloud::sample_initial(&p0, 16).unwrap();
        let h = histogram(&cloud, 4).unwrap();
        for v in &h.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!((h.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_atom_histogram_concentrates() {
        let p = canonicalize([0.1, 0.1]).unwrap();
        let cloud = DiracCloud::from_parts(vec![p], vec![1.0]).unwrap();
        let h = histogram(&cloud, 2).unwrap();
        let mut sorted = h.values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(sorted, vec![0.0, 0.0, 0.0, 4.0]);
    }

    proptest! {
        /// Histogram mass integral equals the cloud total for random clouds.
        #[test]
        fn histogram_integrates_to_one(seed in 0u64..100, n in 2usize..9) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let count = rng.gen_range(1..40);
            let mut points = Vec::new();
            let mut masses = Vec::new();
            for _ in 0..count {
                points.push(canonicalize([rng.gen::<f64>(), rng.gen::<f64>()]).unwrap());
                masses.push(rng.gen_range(0.1..1.0));
            }
            let total: f64 = masses.iter().sum();
            for m in &mut masses { *m /= total; }
            let extra = 1.0 - masses.iter().sum::<f64>();
            masses[0] += extra;
            let cloud = DiracCloud::from_parts(points, masses).unwrap();
            let h = histogram(&cloud, n).unwrap();
            prop_assert!((h.integral() - cloud.total_mass()).abs() < 1e-9);
        }
    }
}
