//! Dual-space semigeostrophic dynamics: the atoms of ρ move with
//! U(yᵢ) = J(yᵢ − ∇P*(yᵢ)), where ∇P*(yᵢ) is the barycenter of atom i's
//! optimal-transport cell and J is the quarter turn.
//!
//! Every stage velocity comes from a fresh Newton solve warm-started with
//! the previous weights. The minimal lift from an atom to its barycenter is
//! at most the torus diameter, so ‖U‖∞ ≤ √2/2 holds step by step without
//! any clamping. Positions advance in ℝ² and are re-wrapped, with the
//! integer part accumulated per atom; unwrapped trajectories stay exact.

use crate::laguerre::PowerDiagram;
use crate::measures::DiracCloud;
use crate::ot::{solve_weights, OtError, SolverOptions};
use crate::torus::TorusPoint;
use crate::vec2::{add, norm, scale, Vec2};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Heun,
    Rk4,
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "heun" => Ok(Scheme::Heun),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::Heun => "heun",
            Scheme::Rk4 => "rk4",
        })
    }
}

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Transport(#[from] OtError),
    #[error("step at t = {time} still fails after {halvings} halvings")]
    StepFailed {
        time: f64,
        halvings: usize,
        #[source]
        source: OtError,
    },
    #[error("time step must be nonzero and finite")]
    BadTimeStep,
}

#[derive(Clone, Copy, Debug)]
pub struct RunParams {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_final: f64,
    pub solver: SolverOptions,
}

/// State of the dual measure at one time-grid point, slim enough to retain
/// for every step of a run.
#[derive(Clone, Debug)]
pub struct FlowFrame {
    pub time: f64,
    pub points: Vec<TorusPoint>,
    pub lifts: Vec<Vec2>,
    pub weights: Vec<f64>,
    pub areas: Vec<f64>,
    /// Cell barycenters in each atom's site frame (canonical point plus a
    /// sub-diameter offset).
    pub barycenters: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub max_speed: f64,
    pub newton_iterations: usize,
    /// 1 for a plain step, larger when the step had to be subdivided.
    pub substeps: usize,
}

impl FlowFrame {
    /// Unwrapped barycenter of atom i: continuous across seam crossings.
    pub fn barycenter_unwrapped(&self, i: usize) -> Vec2 {
        add(self.lifts[i], self.barycenters[i])
    }

    pub fn point_unwrapped(&self, i: usize) -> Vec2 {
        add(self.lifts[i], self.points[i].coords())
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub frames: Vec<FlowFrame>,
    pub masses: Vec<f64>,
    pub scheme: Scheme,
    pub dt: f64,
}

impl Trajectory {
    pub fn cloud_at(&self, k: usize) -> DiracCloud {
        let f = &self.frames[k];
        DiracCloud {
            points: f.points.clone(),
            masses: self.masses.clone(),
            lift_history: f.lifts.clone(),
        }
    }

    pub fn final_cloud(&self) -> DiracCloud {
        self.cloud_at(self.frames.len() - 1)
    }

    /// ∂_t∇P*(yᵢ) at frame k by differencing unwrapped barycenters: central
    /// in the interior, one-sided at the ends.
    pub fn barycenter_rate(&self, k: usize, i: usize) -> Vec2 {
        let last = self.frames.len() - 1;
        let (a, b) = if k == 0 {
            (0, 1.min(last))
        } else if k == last {
            (last - 1, last)
        } else {
            (k - 1, k + 1)
        };
        if a == b {
            return [0.0, 0.0];
        }
        let span = self.frames[b].time - self.frames[a].time;
        scale(
            1.0 / span,
            crate::vec2::sub(
                self.frames[b].barycenter_unwrapped(i),
                self.frames[a].barycenter_unwrapped(i),
            ),
        )
    }
}

struct State {
    cloud: DiracCloud,
    weights: Vec<f64>,
}

fn frame_from(
    time: f64,
    state: &State,
    diagram: &PowerDiagram,
    newton_iterations: usize,
    substeps: usize,
) -> FlowFrame {
    let n = diagram.len();
    let velocities: Vec<Vec2> = (0..n).map(|i| diagram.velocity(i)).collect();
    let max_speed = velocities.iter().map(|v| norm(*v)).fold(0.0, f64::max);
    FlowFrame {
        time,
        points: state.cloud.points.clone(),
        lifts: state.cloud.lift_history.clone(),
        weights: diagram.weights.clone(),
        areas: diagram.areas.clone(),
        barycenters: diagram.barycenters.clone(),
        velocities,
        max_speed,
        newton_iterations,
        substeps,
    }
}

/// March the dual flow from `initial` to t = t_final.
pub fn run(initial: &DiracCloud, params: &RunParams) -> Result<Trajectory, DynamicsError> {
    if !(params.dt.is_finite() && params.dt != 0.0) || !params.t_final.is_finite() {
        return Err(DynamicsError::BadTimeStep);
    }
    let (diagram, report) = solve_weights(initial, None, &params.solver)?;
    let mut state = State {
        cloud: initial.clone(),
        weights: diagram.weights.clone(),
    };
    let mut frames = vec![frame_from(0.0, &state, &diagram, report.iterations, 1)];

    let total = params.t_final;
    let steps = (total / params.dt - 1e-9).ceil().max(0.0) as usize;
    for k in 0..steps {
        let t0 = k as f64 * params.dt;
        let t1 = (k + 1) as f64 * params.dt;
        let t1 = if params.dt > 0.0 {
            t1.min(total)
        } else {
            t1.max(total)
        };
        let dt = t1 - t0;
        let mut stats = StepStats::default();
        let next = advance(&state, dt, t0, params, 0, &mut stats)?;
        state = next;
        // diagram at the landing point, warm-started from the step's end
        let (diagram, report) = solve_weights(&state.cloud, Some(&state.weights), &params.solver)?;
        state.weights = diagram.weights.clone();
        stats.newton += report.iterations;
        let mut frame = frame_from(t1, &state, &diagram, stats.newton, stats.substeps);
        frame.max_speed = frame.max_speed.max(stats.max_stage_speed);
        frames.push(frame);
    }
    Ok(Trajectory {
        frames,
        masses: initial.masses.clone(),
        scheme: params.scheme,
        dt: params.dt,
    })
}

#[derive(Default)]
struct StepStats {
    newton: usize,
    substeps: usize,
    max_stage_speed: f64,
}

/// One step of the chosen scheme; on solver failure the interval is halved
/// recursively while the outer time grid stays fixed.
fn advance(
    state: &State,
    dt: f64,
    time: f64,
    params: &RunParams,
    depth: usize,
    stats: &mut StepStats,
) -> Result<State, DynamicsError> {
    match try_step(state, dt, params, stats) {
        Ok(next) => {
            stats.substeps += 1;
            Ok(next)
        }
        Err(err) => {
            if depth >= 8 {
                return Err(DynamicsError::StepFailed {
                    time,
                    halvings: depth,
                    source: err,
                });
            }
            let half = 0.5 * dt;
            let mid = advance(state, half, time, params, depth + 1, stats)?;
            advance(&mid, half, time + half, params, depth + 1, stats)
        }
    }
}

fn stage_velocities(
    cloud: &DiracCloud,
    warm: &[f64],
    solver: &SolverOptions,
    stats: &mut StepStats,
) -> Result<(Vec<Vec2>, Vec<f64>), OtError> {
    let (diagram, report) = solve_weights(cloud, Some(warm), solver)?;
    stats.newton += report.iterations;
    let velocities: Vec<Vec2> = (0..diagram.len()).map(|i| diagram.velocity(i)).collect();
    let speed = velocities.iter().map(|v| norm(*v)).fold(0.0, f64::max);
    stats.max_stage_speed = stats.max_stage_speed.max(speed);
    Ok((velocities, diagram.weights))
}

/// Displace every atom by its increment, re-wrap, and book the integer lift.
fn displaced(cloud: &DiracCloud, increments: &[Vec2]) -> DiracCloud {
    let n = cloud.len();
    let mut points = Vec::with_capacity(n);
    let mut lifts = Vec::with_capacity(n);
    for i in 0..n {
        let raw = add(cloud.points[i].coords(), increments[i]);
        let wrapped = TorusPoint::wrap(raw);
        let c = wrapped.coords();
        lifts.push([
            cloud.lift_history[i][0] + (raw[0] - c[0]).round(),
            cloud.lift_history[i][1] + (raw[1] - c[1]).round(),
        ]);
        points.push(wrapped);
    }
    cloud.advected(points, lifts)
}

fn try_step(
    state: &State,
    dt: f64,
    params: &RunParams,
    stats: &mut StepStats,
) -> Result<State, OtError> {
    let cloud = &state.cloud;
    let n = cloud.len();
    let (u0, w0) = stage_velocities(cloud, &state.weights, &params.solver, stats)?;
    let (increments, weights) = match params.scheme {
        Scheme::Euler => (
            u0.iter().map(|u| scale(dt, *u)).collect::<Vec<_>>(),
            w0,
        ),
        Scheme::Heun => {
            let predictor = displaced(cloud, &u0.iter().map(|u| scale(dt, *u)).collect::<Vec<_>>());
            let (u1, w1) = stage_velocities(&predictor, &w0, &params.solver, stats)?;
            (
                (0..n)
                    .map(|i| scale(0.5 * dt, add(u0[i], u1[i])))
                    .collect(),
                w1,
            )
        }
        Scheme::Rk4 => {
            let half: Vec<Vec2> = u0.iter().map(|u| scale(0.5 * dt, *u)).collect();
            let s2 = displaced(cloud, &half);
            let (u2, w2) = stage_velocities(&s2, &w0, &params.solver, stats)?;
            let s3 = displaced(cloud, &u2.iter().map(|u| scale(0.5 * dt, *u)).collect::<Vec<_>>());
            let (u3, w3) = stage_velocities(&s3, &w2, &params.solver, stats)?;
            let s4 = displaced(cloud, &u3.iter().map(|u| scale(dt, *u)).collect::<Vec<_>>());
            let (u4, w4) = stage_velocities(&s4, &w3, &params.solver, stats)?;
            (
                (0..n)
                    .map(|i| {
                        scale(
                            dt / 6.0,
                            add(
                                add(u0[i], scale(2.0, add(u2[i], u3[i]))),
                                u4[i],
                            ),
                        )
                    })
                    .collect(),
                w4,
            )
        }
    };
    Ok(State {
        cloud: displaced(cloud, &increments),
        weights,
    })
}
