//! Semi-discrete optimal transport between Lebesgue measure and a Dirac
//! cloud, solved in the dual: find weights w with cell areas aᵢ(w) = mᵢ.
//!
//! The Kantorovich functional is concave with gradient m − a(w) and Hessian
//! given by the weighted adjacency Laplacian of the diagram, so a damped
//! Newton iteration with the Kitagawa–Mérigot–Thibert floor on the smallest
//! cell converges globally. Two slower routes act as oracles: rasterized
//! cell areas on a fine grid, and projected subgradient ascent driven only
//! by those rasterized areas.

use crate::laguerre::{build_diagram, LaguerreError, PowerDiagram, MAX_WEIGHT_SPREAD};
use crate::measures::DiracCloud;
use crate::torus::{minimal_lift, TorusPoint};
use crate::vec2::dot;
use rayon::prelude::*;
use sprs::{CsMat, TriMat};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OtError {
    #[error(transparent)]
    Diagram(#[from] LaguerreError),
    #[error("damping stalled at iteration {iteration} with residual {residual}")]
    DampingStalled { iteration: usize, residual: f64 },
    #[error("no convergence after {iterations} iterations, residual {residual}")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("linear solve failed: {0}")]
    Linear(String),
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Absolute mass tolerance; `None` resolves to 1e−9·min mᵢ.
    pub tol: Option<f64>,
    pub max_iterations: usize,
    /// Swap the direct LDLᵀ solve for Jacobi-preconditioned CG.
    pub conjugate_gradient: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: None,
            max_iterations: 60,
            conjugate_gradient: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub iterations: usize,
    pub damped_steps: usize,
    pub residual: f64,
    pub tol: f64,
}

/// Damped Newton solve for the dual weights; returns the optimal diagram.
/// An infeasible warm start (empty cell) falls back to zero weights.
pub fn solve_weights(
    cloud: &DiracCloud,
    warm_start: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<(PowerDiagram, SolveReport), OtError> {
    let n = cloud.len();
    let masses = &cloud.masses;
    let min_mass = masses.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = opts.tol.unwrap_or(1e-9 * min_mass);

    let mut weights = match warm_start {
        Some(w) if w.len() == n => gauge_fixed(w),
        _ => vec![0.0; n],
    };
    let mut diagram = match build_diagram(cloud, &weights) {
        Ok(d) => d,
        Err(LaguerreError::WeightSpread { .. }) => {
            weights = vec![0.0; n];
            build_diagram(cloud, &weights)?
        }
        Err(e) => return Err(e.into()),
    };
    if diagram.areas.iter().any(|&a| a <= 0.0) && weights.iter().any(|&w| w != 0.0) {
        weights = vec![0.0; n];
        diagram = build_diagram(cloud, &weights)?;
    }
    let min_area = diagram.areas.iter().cloned().fold(f64::INFINITY, f64::min);
    let floor = 0.5 * min_mass.min(min_area);

    let mut residual = linf_error(&diagram.areas, masses);
    let mut res2 = l2_error(&diagram.areas, masses);
    let mut damped_steps = 0;
    for iteration in 0..opts.max_iterations {
        if residual <= tol {
            return Ok((
                diagram,
                SolveReport {
                    iterations: iteration,
                    damped_steps,
                    residual,
                    tol,
                },
            ));
        }
        let direction = newton_direction(&diagram, masses, opts.conjugate_gradient)?;
        let mut alpha = 1.0f64;
        loop {
            let trial: Vec<f64> = weights
                .iter()
                .zip(&direction)
                .map(|(w, d)| w + alpha * d)
                .collect();
            let trial = gauge_fixed(&trial);
            if spread(&trial) < MAX_WEIGHT_SPREAD {
                if let Ok(td) = build_diagram(cloud, &trial) {
                    let t_min = td.areas.iter().cloned().fold(f64::INFINITY, f64::min);
                    let t2 = l2_error(&td.areas, masses);
                    if t_min >= floor && t2 <= (1.0 - 0.5 * alpha) * res2 {
                        weights = trial;
                        diagram = td;
                        residual = linf_error(&diagram.areas, masses);
                        res2 = t2;
                        break;
                    }
                }
            }
            alpha *= 0.5;
            damped_steps += 1;
            if alpha < 1e-7 {
                return Err(OtError::DampingStalled {
                    iteration,
                    residual,
                });
            }
        }
    }
    if residual <= tol {
        return Ok((
            diagram,
            SolveReport {
                iterations: opts.max_iterations,
                damped_steps,
                residual,
                tol,
            },
        ));
    }
    Err(OtError::MaxIterations {
        iterations: opts.max_iterations,
        residual,
    })
}

fn gauge_fixed(w: &[f64]) -> Vec<f64> {
    let w0 = w[0];
    w.iter().map(|v| v - w0).collect()
}

fn spread(w: &[f64]) -> f64 {
    let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

fn linf_error(areas: &[f64], masses: &[f64]) -> f64 {
    areas
        .iter()
        .zip(masses)
        .map(|(a, m)| (a - m).abs())
        .fold(0.0, f64::max)
}

fn l2_error(areas: &[f64], masses: &[f64]) -> f64 {
    areas
        .iter()
        .zip(masses)
        .map(|(a, m)| (a - m) * (a - m))
        .sum::<f64>()
        .sqrt()
}

/// Weighted adjacency Laplacian of the diagram, reduced by the gauge row 0:
/// ∂aᵢ/∂wᵢ = Σ len/dist over the cell's neighbor edges, ∂aᵢ/∂wⱼ = −len/dist.
fn reduced_laplacian(diagram: &PowerDiagram) -> CsMat<f64> {
    let n = diagram.len();
    let mut tri = TriMat::new((n - 1, n - 1));
    for i in 0..n {
        for e in &diagram.edges[i] {
            if e.neighbor == i {
                continue;
            }
            // each directed discovery carries half the conductance, so the
            // assembled matrix is symmetric by construction
            let c = 0.5 * e.len / e.dist;
            let j = e.neighbor;
            if i > 0 {
                tri.add_triplet(i - 1, i - 1, c);
            }
            if j > 0 {
                tri.add_triplet(j - 1, j - 1, c);
            }
            if i > 0 && j > 0 {
                tri.add_triplet(i - 1, j - 1, -c);
                tri.add_triplet(j - 1, i - 1, -c);
            }
        }
    }
    tri.to_csc()
}

fn newton_direction(
    diagram: &PowerDiagram,
    masses: &[f64],
    conjugate_gradient: bool,
) -> Result<Vec<f64>, OtError> {
    let n = diagram.len();
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let rhs: Vec<f64> = (1..n).map(|i| masses[i] - diagram.areas[i]).collect();
    let lap = reduced_laplacian(diagram);
    let sol = if conjugate_gradient {
        jacobi_cg(&lap, &rhs)?
    } else if n - 1 < 3 {
        // the fill-reducing ordering rejects such tiny systems
        solve_dense_small(&lap, &rhs)?
    } else {
        let ldl = sprs_ldl::Ldl::new()
            .check_symmetry(sprs::SymmetryCheck::DontCheckSymmetry)
            .fill_in_reduction(sprs::FillInReduction::ReverseCuthillMcKee)
            .numeric(lap.view())
            .map_err(|e| OtError::Linear(format!("{e:?}")))?;
        ldl.solve(&rhs)
    };
    let mut direction = Vec::with_capacity(n);
    direction.push(0.0);
    direction.extend_from_slice(&sol);
    Ok(direction)
}

fn solve_dense_small(mat: &CsMat<f64>, rhs: &[f64]) -> Result<Vec<f64>, OtError> {
    let n = rhs.len();
    let mut a = [[0.0f64; 2]; 2];
    for (col, vec) in mat.outer_iterator().enumerate() {
        for (row, &v) in vec.iter() {
            a[row][col] += v;
        }
    }
    match n {
        1 => {
            if a[0][0] <= 0.0 {
                return Err(OtError::Linear("singular 1x1 system".into()));
            }
            Ok(vec![rhs[0] / a[0][0]])
        }
        2 => {
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if det.abs() < 1e-300 {
                return Err(OtError::Linear("singular 2x2 system".into()));
            }
            Ok(vec![
                (rhs[0] * a[1][1] - rhs[1] * a[0][1]) / det,
                (rhs[1] * a[0][0] - rhs[0] * a[1][0]) / det,
            ])
        }
        _ => Err(OtError::Linear("dense path limited to n < 3".into())),
    }
}

fn mat_vec(mat: &CsMat<f64>, x: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (col, vec) in mat.outer_iterator().enumerate() {
        let xc = x[col];
        for (row, &v) in vec.iter() {
            out[row] += v * xc;
        }
    }
}

/// Jacobi-preconditioned conjugate gradient on the reduced Laplacian.
fn jacobi_cg(mat: &CsMat<f64>, rhs: &[f64]) -> Result<Vec<f64>, OtError> {
    let n = rhs.len();
    let mut diag = vec![0.0; n];
    for (col, vec) in mat.outer_iterator().enumerate() {
        for (row, &v) in vec.iter() {
            if row == col {
                diag[col] += v;
            }
        }
    }
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(OtError::Linear("non-positive Laplacian diagonal".into()));
    }
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let mut ap = vec![0.0; n];
    for _ in 0..(10 * n + 100) {
        mat_vec(mat, &p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(OtError::Linear("CG lost positive definiteness".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn <= 1e-13 * rhs_norm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(OtError::Linear("CG failed to converge".into()))
}

/// Cell areas by rasterization: each of G² cell-centered samples is charged
/// to its power-nearest atom. Independent of the polygon pipeline.
pub fn rasterized_areas(cloud: &DiracCloud, weights: &[f64], grid_side: usize) -> Vec<f64> {
    let n = cloud.len();
    let g = grid_side as f64;
    let counts = (0..grid_side)
        .into_par_iter()
        .map(|row| {
            let mut local = vec![0u32; n];
            let y = (row as f64 + 0.5) / g;
            for col in 0..grid_side {
                let p = TorusPoint::wrap([(col as f64 + 0.5) / g, y]);
                let mut best = (f64::INFINITY, usize::MAX);
                for j in 0..n {
                    let v = minimal_lift(p, cloud.points[j]);
                    let pow = 0.5 * dot(v, v) - weights[j];
                    if pow < best.0 {
                        best = (pow, j);
                    }
                }
                local[best.1] += 1;
            }
            local
        })
        .collect::<Vec<_>>();
    let mut total = vec![0u64; n];
    for local in counts {
        for (t, c) in total.iter_mut().zip(local) {
            *t += c as u64;
        }
    }
    total
        .into_iter()
        .map(|c| c as f64 / (g * g))
        .collect()
}

/// Projected subgradient ascent on the dual using only rasterized areas;
/// a slow solver oracle for small clouds.
pub fn brute_force_weights(cloud: &DiracCloud) -> Vec<f64> {
    let n = cloud.len();
    let mut w = vec![0.0; n];
    let stage = |w: &mut Vec<f64>, grid: usize, iters: usize, step0: f64, avg_tail: usize| {
        let mut tail = vec![0.0; n];
        let mut tail_count = 0usize;
        for t in 0..iters {
            let areas = rasterized_areas(cloud, w, grid);
            let eta = step0 / (1.0 + (t as f64) / 40.0).sqrt();
            for i in 0..n {
                w[i] += eta * (cloud.masses[i] - areas[i]);
            }
            let w0 = w[0];
            for v in w.iter_mut() {
                *v -= w0;
            }
            if iters - t <= avg_tail {
                for i in 0..n {
                    tail[i] += w[i];
                }
                tail_count += 1;
            }
        }
        if tail_count > 0 {
            for i in 0..n {
                w[i] = tail[i] / tail_count as f64;
            }
        }
    };
    stage(&mut w, 128, 400, 0.2, 0);
    stage(&mut w, 512, 160, 0.05, 40);
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{DiracCloud, InitialPressure, Scenario};
    use crate::torus::canonicalize;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn two_atom_cloud() -> DiracCloud {
        let p = canonicalize([0.25, 0.5]).unwrap();
        let q = canonicalize([0.75, 0.5]).unwrap();
        DiracCloud::from_parts(vec![p, q], vec![0.3, 0.7]).unwrap()
    }

    fn random_cloud(seed: u64, n: usize) -> DiracCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n)
            .map(|_| canonicalize([rng.gen::<f64>(), rng.gen::<f64>()]).unwrap())
            .collect();
        let mut masses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = masses.iter().sum();
        for m in &mut masses {
            *m /= total;
        }
        let extra = 1.0 - masses.iter().sum::<f64>();
        masses[0] += extra;
        DiracCloud::from_parts(points, masses).unwrap()
    }

    #[test]
    fn two_atom_weights_match_the_closed_form() {
        let cloud = two_atom_cloud();
        let (diagram, report) = solve_weights(&cloud, None, &SolverOptions::default()).unwrap();
        // strip bisectors at 2w and ½−2w give mass 0.3 exactly for w = 0.05
        assert!(
            (diagram.weights[1] - diagram.weights[0] - 0.05).abs() < 1e-9,
            "weights {:?}",
            diagram.weights
        );
        assert!((diagram.areas[0] - 0.3).abs() <= report.tol);
        assert!(report.residual <= report.tol);
    }

    #[test]
    fn uniform_grid_converges_instantly() {
        let p0 = InitialPressure::new(Scenario::Zero).unwrap();
        let cloud = DiracCloud::sample_initial(&p0, 8).unwrap();
        let (diagram, report) = solve_weights(&cloud, None, &SolverOptions::default()).unwrap();
        assert_eq!(report.iterations, 0);
        assert_eq!(report.residual, 0.0);
        assert!(diagram.weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn laplacian_matches_finite_differences() {
        let cloud = random_cloud(5, 7);
        let w0 = vec![0.0; 7];
        let d0 = build_diagram(&cloud, &w0).unwrap();
        let lap = reduced_laplacian(&d0);
        let dense = lap.to_dense();
        let h = 1e-6;
        for k in 1..7 {
            let mut wp = w0.clone();
            wp[k] += h;
            let mut wm = w0.clone();
            wm[k] -= h;
            let dp = build_diagram(&cloud, &wp).unwrap();
            let dm = build_diagram(&cloud, &wm).unwrap();
            for i in 1..7 {
                let fd = (dp.areas[i] - dm.areas[i]) / (2.0 * h);
                // the area Jacobian is exactly the Laplacian, off-diagonals
                // negative: growing wₖ shrinks the neighbors
                let analytic = dense[[i - 1, k - 1]];
                assert!(
                    (fd - analytic).abs() < 5e-5,
                    "entry ({i},{k}): fd {fd} vs {analytic}"
                );
            }
        }
    }

    #[test]
    fn random_masses_are_recovered_and_rasterization_agrees() {
        let cloud = random_cloud(11, 9);
        let (diagram, report) = solve_weights(&cloud, None, &SolverOptions::default()).unwrap();
        assert!(report.residual <= report.tol);
        let raster = rasterized_areas(&cloud, &diagram.weights, 512);
        for i in 0..9 {
            assert!(
                (raster[i] - diagram.areas[i]).abs() <= 2.0 / 512.0,
                "cell {i}: raster {} vs area {}",
                raster[i],
                diagram.areas[i]
            );
        }
        assert!((raster.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conjugate_gradient_route_matches_direct() {
        let cloud = random_cloud(23, 30);
        let direct = solve_weights(&cloud, None, &SolverOptions::default()).unwrap();
        let cg = solve_weights(
            &cloud,
            None,
            &SolverOptions {
                conjugate_gradient: true,
                ..SolverOptions::default()
            },
        )
        .unwrap();
        for (a, b) in direct.0.weights.iter().zip(&cg.0.weights) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn warm_start_shortens_the_solve() {
        let cloud = random_cloud(31, 40);
        let cold = solve_weights(&cloud, None, &SolverOptions::default()).unwrap();
        let warm = solve_weights(&cloud, Some(&cold.0.weights), &SolverOptions::default()).unwrap();
        assert_eq!(warm.1.iterations, 0);
        // an infeasible warm start still converges via the zero reset
        let bad = vec![0.2; 40];
        let rescued = solve_weights(&cloud, Some(&bad), &SolverOptions::default()).unwrap();
        assert!(rescued.1.residual <= rescued.1.tol);
    }

    #[test]
    fn subgradient_ascent_agrees_with_newton() {
        let cloud = two_atom_cloud();
        let w = brute_force_weights(&cloud);
        assert!((w[1] - 0.05).abs() < 2e-3, "ascent weights {w:?}");
        let cloud4 = random_cloud(3, 4);
        let ascent = brute_force_weights(&cloud4);
        let (newton, _) = solve_weights(&cloud4, None, &SolverOptions::default()).unwrap();
        for (a, b) in ascent.iter().zip(&newton.weights) {
            assert!((a - b).abs() < 5e-3, "ascent {ascent:?} vs {:?}", newton.weights);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// The solver hits the mass targets for random clouds.
        #[test]
        fn newton_converges_on_random_clouds(seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2usize..32);
            let cloud = random_cloud(seed.wrapping_add(77), n);
            let (diagram, report) = solve_weights(&cloud, None, &SolverOptions::default()).unwrap();
            prop_assert!(report.residual <= report.tol);
            prop_assert!((diagram.total_area() - 1.0).abs() < 1e-9);
        }
    }
}
