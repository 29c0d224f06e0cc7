//! Command-line surface: march a configured run and write its artifacts,
//! verify closed-form facts or a finished run directory, compare small
//! instances against independent oracles, and summarize diagnostics.
//! SG_TORUS_THREADS caps the worker pool; a fixed config and seed then
//! produce byte-identical tables at any worker count.

use crate::config::RunConfig;
use crate::dynamics::{run, FlowFrame, RunParams, Trajectory};
use crate::eulerian::{flow_histogram, regularized_flow, return_distance};
use crate::io::{
    read_diagnostics, read_manifest, read_snapshot, write_diagnostics, write_diagram,
    write_manifest, write_snapshot, write_tracers, write_verify_report, write_weak_report,
    CheckResult, DiagnosticsRow, Manifest, MonitorSummary, TracerSummary,
};
use crate::laguerre::build_diagram;
use crate::measures::{histogram, DiracCloud};
use crate::ot::{brute_force_weights, rasterized_areas, solve_weights, SolverOptions};
use crate::rearrange1d::rearrange_on_circle;
use crate::torus::{TorusPoint, TORUS_DIAMETER};
use crate::vec2::norm;
use crate::verification::{
    cofactor_divergence_residual, cofactor_ellipticity_excess, cofactor_identity_gap,
    ma_linearization_residual, ma_pairing_gaps, orlicz_lhs, orlicz_report, orlicz_rhs, random_spd,
    scan_orlicz_lemma, ManufacturedFamily,
};
use crate::weak::{log_slope, weak_residuals};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::E;
use std::path::{Path, PathBuf};

const SPEED_BOUND: f64 = TORUS_DIAMETER + 1e-6;

#[derive(Parser)]
#[command(
    name = "sg-torus",
    version,
    about = "Semigeostrophic flow on the torus via semi-discrete optimal transport"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// March a configured flow and write snapshots, diagnostics and a manifest.
    Run {
        /// TOML run configuration.
        config: PathBuf,
        /// Output directory; defaults to the config's out_dir or runs/<stem>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also dump the final power-diagram geometry.
        #[arg(long)]
        dump_diagram: bool,
    },
    /// Check closed-form facts ("static") or the artifacts of a run directory.
    Verify {
        /// "static" or a run directory path.
        target: String,
        /// Draw count for the randomized static checks.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 4242)]
        seed: u64,
        /// Report path; defaults to verify_report.json beside the target.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a small instance against an independent oracle.
    Oracle {
        /// "single", "two-atom", "random" or "shear-1d".
        instance: String,
        /// Atom count for the random instance (the brute-force oracle
        /// rejects more than 4).
        #[arg(long, default_value_t = 3)]
        atoms: usize,
        #[arg(long, default_value_t = 99)]
        seed: u64,
    },
    /// Summarize a run directory's diagnostics table.
    Report {
        dir: PathBuf,
    },
}

/// Execute a parsed command; Ok(false) means the command ran but found a
/// violation or failing check, so the process should exit nonzero.
pub fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            out,
            dump_diagram,
        } => cmd_run(&config, out, dump_diagram),
        Command::Verify {
            target,
            samples,
            seed,
            out,
        } => cmd_verify(&target, samples, seed, out),
        Command::Oracle {
            instance,
            atoms,
            seed,
        } => cmd_oracle(&instance, atoms, seed),
        Command::Report { dir } => cmd_report(&dir),
    }
}

fn cmd_run(config_path: &Path, out: Option<PathBuf>, dump_diagram: bool) -> Result<bool> {
    let config = RunConfig::load(config_path)?;
    let p0 = config.pressure()?;
    let cloud = DiracCloud::sample_initial(&p0, config.atoms_per_side)?;
    let params = RunParams {
        scheme: config.scheme()?,
        dt: config.dt,
        t_final: config.t_final,
        solver: config.solver_options(),
    };
    let traj = run(&cloud, &params)?;

    let out_dir = out
        .or_else(|| config.out_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| {
            let stem = config_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".to_string());
            PathBuf::from("runs").join(stem)
        });
    std::fs::create_dir_all(out_dir.join("snapshots"))
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let last = traj.frames.len() - 1;
    let mut rows = Vec::with_capacity(traj.frames.len());
    let mut snapshots = Vec::new();
    let mut violation: Option<String> = None;
    let mut monitors = MonitorSummary {
        mass_error_max: 0.0,
        area_residual_max: 0.0,
        max_speed: 0.0,
        hist_min: f64::INFINITY,
        hist_max: f64::NEG_INFINITY,
        newton_iterations_total: 0,
    };
    for (k, frame) in traj.frames.iter().enumerate() {
        let cloud_k = traj.cloud_at(k);
        let hist = histogram(&cloud_k, config.histogram_bins)?;
        let total_mass: f64 = traj.masses.iter().sum();
        let area_residual = frame
            .areas
            .iter()
            .zip(&traj.masses)
            .map(|(a, m)| (a - m).abs())
            .fold(0.0, f64::max);
        monitors.mass_error_max = monitors.mass_error_max.max((total_mass - 1.0).abs());
        monitors.area_residual_max = monitors.area_residual_max.max(area_residual);
        monitors.max_speed = monitors.max_speed.max(frame.max_speed);
        monitors.hist_min = monitors.hist_min.min(hist.min());
        monitors.hist_max = monitors.hist_max.max(hist.max());
        monitors.newton_iterations_total += frame.newton_iterations;
        rows.push(DiagnosticsRow {
            step: k,
            time: frame.time,
            total_mass,
            area_residual,
            max_speed: frame.max_speed,
            hist_min: hist.min(),
            hist_max: hist.max(),
            newton_iterations: frame.newton_iterations,
            substeps: frame.substeps,
        });
        if k % config.snapshot_stride == 0 || k == last {
            let name = format!("snapshots/step_{k}.csv");
            write_snapshot(&out_dir.join(&name), &cloud_k, &frame.weights)?;
            if snapshots.last() != Some(&name) {
                snapshots.push(name);
            }
        }
        if config.checks && violation.is_none() {
            if (total_mass - 1.0).abs() > 1e-12 {
                violation = Some(format!(
                    "mass violation at step {k}: |Σm − 1| = {:e}",
                    (total_mass - 1.0).abs()
                ));
            } else if frame.max_speed > SPEED_BOUND {
                violation = Some(format!(
                    "speed violation at step {k}: max |U| = {} exceeds {SPEED_BOUND}",
                    frame.max_speed
                ));
            }
        }
    }
    write_diagnostics(&out_dir.join("diagnostics.csv"), &rows)?;

    let tracers = if config.tracers > 0 && violation.is_none() {
        let flow = regularized_flow(&traj, config.tracers)?;
        write_tracers(&out_dir.join("tracers.csv"), &flow)?;
        let fh = flow_histogram(&flow, config.histogram_bins)?;
        Some(TracerSummary {
            grid: config.tracers,
            flow_hist_min: fh.min(),
            flow_hist_max: fh.max(),
            return_distance: return_distance(&traj, &flow)?,
        })
    } else {
        None
    };

    if dump_diagram {
        let diagram = build_diagram(&traj.final_cloud(), &traj.frames[last].weights)?;
        write_diagram(&out_dir.join("diagram_final.csv"), &diagram)?;
    }

    write_manifest(
        &out_dir.join("manifest.json"),
        &Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            steps: last,
            snapshots,
            monitors,
            tracers,
        },
    )?;

    if let Some(label) = violation {
        eprintln!("{label}");
        return Ok(false);
    }
    println!(
        "run complete: {last} steps to t = {}, max speed {:.6}, artifacts in {}",
        traj.frames[last].time,
        monitors.max_speed,
        out_dir.display()
    );
    Ok(true)
}

fn cmd_verify(target: &str, samples: usize, seed: u64, out: Option<PathBuf>) -> Result<bool> {
    let (checks, report_path) = if target == "static" {
        (
            verify_static(samples, seed),
            out.unwrap_or_else(|| PathBuf::from("verify_report.json")),
        )
    } else {
        let dir = PathBuf::from(target);
        (
            verify_run_dir(&dir)?,
            out.unwrap_or_else(|| dir.join("verify_report.json")),
        )
    };
    let report = write_verify_report(&report_path, checks)?;
    for check in &report.checks {
        println!(
            "{:<24} {}  margin {:+.3e}  {}",
            check.name, check.status, check.margin, check.detail
        );
    }
    println!(
        "verify: {} of {} checks passed, report in {}",
        report.checks.iter().filter(|c| c.passed()).count(),
        report.checks.len(),
        report_path.display()
    );
    Ok(report.passed)
}

fn verify_static(samples: usize, seed: u64) -> Vec<CheckResult> {
    let mut checks = Vec::new();

    let e2 = E * E;
    let spot = (orlicz_rhs(1.0, 1.0, 1) - (1.0 / E + 1.0))
        .abs()
        .max((orlicz_lhs(e2, 1.0, 1) - 2.0 * e2).abs())
        .max((orlicz_rhs(e2, 1.0, 1) - (1.0 / E + 1.0 + 4.0 * e2 * e2)).abs());
    checks.push(CheckResult::new(
        "lemma_spot_values",
        spot <= 1e-10,
        1e-10 - spot,
        format!("max deviation {spot:.3e}"),
    ));

    let scan = scan_orlicz_lemma(samples, 5, seed);
    checks.push(CheckResult::new(
        "lemma_scan",
        scan.min_margin >= 0.0,
        scan.min_margin,
        format!(
            "{} samples, tightest at (a, b, k) = ({:.3e}, {:.3e}, {})",
            scan.samples, scan.worst.0, scan.worst.1, scan.worst.2
        ),
    ));

    let (c1, c2) = (0.2, 5.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FAC70);
    let mut identity_gap = 0.0f64;
    let mut excess = f64::NEG_INFINITY;
    for _ in 0..samples {
        let a = random_spd(&mut rng, c1, c2);
        identity_gap = identity_gap.max(cofactor_identity_gap(&a));
        excess = excess.max(cofactor_ellipticity_excess(&a, c1, c2));
    }
    checks.push(CheckResult::new(
        "cofactor_identities",
        identity_gap <= 1e-12,
        1e-12 - identity_gap,
        format!("{samples} draws, max |M(A)A − det(A)Id| = {identity_gap:.3e}"),
    ));
    checks.push(CheckResult::new(
        "cofactor_ellipticity",
        excess <= 1e-12,
        1e-12 - excess,
        format!("{samples} draws, max eigenvalue escape {excess:.3e}"),
    ));

    let family = ManufacturedFamily {
        epsilon: 0.01,
        epsilon_rate: 1.0,
    };
    let ns = [64usize, 128, 256];
    let hs: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
    let lin: Vec<f64> = ns
        .iter()
        .map(|&n| ma_linearization_residual(&family, n))
        .collect();
    let lin_order = log_slope(&hs, &lin);
    checks.push(CheckResult::new(
        "ma_linearization_order",
        lin_order >= 1.8,
        lin_order - 1.8,
        format!("order {lin_order:.3} from residuals {}", join_exp(&lin)),
    ));
    let div: Vec<f64> = ns
        .iter()
        .map(|&n| cofactor_divergence_residual(&family, n))
        .collect();
    let div_order = log_slope(&hs, &div);
    checks.push(CheckResult::new(
        "cofactor_divergence_order",
        div_order >= 1.8,
        div_order - 1.8,
        format!("order {div_order:.3} from residuals {}", join_exp(&div)),
    ));

    let (minus, plus) = ma_pairing_gaps(0.3, 0.7, 64);
    checks.push(CheckResult::new(
        "pairing_sign",
        minus <= 1e-12 && plus >= 0.3,
        if minus <= 1e-12 { plus - 0.3 } else { -minus },
        format!("minus-sign gap {minus:.3e}, plus-sign gap {plus:.3}"),
    ));

    checks
}

fn verify_run_dir(dir: &Path) -> Result<Vec<CheckResult>> {
    let manifest_path = dir.join("manifest.json");
    let mut missing: Vec<String> = Vec::new();
    if !manifest_path.is_file() {
        missing.push("manifest.json".to_string());
        return Ok(vec![CheckResult::new(
            "artifacts",
            false,
            -1.0,
            format!("missing: {}", missing.join(", ")),
        )]);
    }
    let manifest = read_manifest(&manifest_path)?;
    if !dir.join("diagnostics.csv").is_file() {
        missing.push("diagnostics.csv".to_string());
    }
    for name in &manifest.snapshots {
        if !dir.join(name).is_file() {
            missing.push(name.clone());
        }
    }
    if !missing.is_empty() {
        return Ok(vec![CheckResult::new(
            "artifacts",
            false,
            -(missing.len() as f64),
            format!("missing: {}", missing.join(", ")),
        )]);
    }
    let mut checks = vec![CheckResult::new(
        "artifacts",
        true,
        0.0,
        format!("{} snapshots listed and present", manifest.snapshots.len()),
    )];

    let diagnostics = read_diagnostics(&dir.join("diagnostics.csv"))?;
    let time_of_step: std::collections::HashMap<usize, f64> =
        diagnostics.iter().map(|r| (r.step, r.time)).collect();
    let config = &manifest.config;
    let p0 = config.pressure()?;
    let (det_min, det_max) = p0.jacobian_range();
    let band = (1.0 / det_max - 0.05, 1.0 / det_min + 0.05);

    let mut mass_err = 0.0f64;
    let mut speed = 0.0f64;
    let mut area_gap = 0.0f64;
    let mut band_margin = f64::INFINITY;
    let mut frames = Vec::with_capacity(manifest.snapshots.len());
    let mut masses = Vec::new();
    for name in &manifest.snapshots {
        let step: usize = name
            .trim_start_matches("snapshots/step_")
            .trim_end_matches(".csv")
            .parse()
            .with_context(|| format!("snapshot name {name:?}"))?;
        let time = *time_of_step
            .get(&step)
            .ok_or_else(|| anyhow::anyhow!("step {step} missing from diagnostics.csv"))?;
        let table = read_snapshot(&dir.join(name))?;
        let total: f64 = table.cloud.masses.iter().sum();
        mass_err = mass_err.max((total - 1.0).abs());
        let diagram = build_diagram(&table.cloud, &table.weights)?;
        let velocities: Vec<_> = (0..diagram.len()).map(|i| diagram.velocity(i)).collect();
        let max_speed = velocities.iter().map(|v| norm(*v)).fold(0.0, f64::max);
        speed = speed.max(max_speed);
        area_gap = area_gap.max(
            diagram
                .areas
                .iter()
                .zip(&table.cloud.masses)
                .map(|(a, m)| (a - m).abs())
                .fold(0.0, f64::max),
        );
        let hist = histogram(&table.cloud, config.histogram_bins)?;
        band_margin = band_margin
            .min(hist.min() - band.0)
            .min(band.1 - hist.max());
        masses = table.cloud.masses.clone();
        frames.push(FlowFrame {
            time,
            points: table.cloud.points.clone(),
            lifts: table.cloud.lift_history.clone(),
            weights: table.weights.clone(),
            areas: diagram.areas.clone(),
            barycenters: diagram.barycenters.clone(),
            velocities,
            max_speed,
            newton_iterations: 0,
            substeps: 1,
        });
    }
    checks.push(CheckResult::new(
        "mass_conservation",
        mass_err <= 1e-12,
        1e-12 - mass_err,
        format!("max |Σm − 1| = {mass_err:.3e}"),
    ));
    checks.push(CheckResult::new(
        "speed_bound",
        speed <= SPEED_BOUND,
        SPEED_BOUND - speed,
        format!("max |U| = {speed:.6}"),
    ));
    checks.push(CheckResult::new(
        "transport_consistency",
        area_gap <= 1e-8,
        1e-8 - area_gap,
        format!("max |area − mass| = {area_gap:.3e}"),
    ));
    checks.push(CheckResult::new(
        "histogram_band",
        band_margin >= 0.0,
        band_margin,
        format!("density band [{:.4}, {:.4}]", band.0, band.1),
    ));

    let ptraj = Trajectory {
        frames,
        masses,
        scheme: config.scheme()?,
        dt: config.dt * config.snapshot_stride as f64,
    };
    let mut max_ratio = 0.0f64;
    let mut all_finite = true;
    for k in 0..ptraj.frames.len() {
        let report = orlicz_report(&ptraj, k, 1, config.histogram_bins)?;
        all_finite &= report.ratio.is_finite()
            && report.lhs.is_finite()
            && report.rhs_hessian.is_finite()
            && report.rhs_velocity.is_finite();
        max_ratio = max_ratio.max(report.ratio);
    }
    checks.push(CheckResult::new(
        "orlicz_ratio",
        all_finite && max_ratio <= 50.0,
        50.0 - max_ratio,
        format!("max lhs/rhs ratio {max_ratio:.3}"),
    ));

    let residuals = weak_residuals(&ptraj, 40, 3, config.seed)?;
    write_weak_report(&dir.join("weak_report.csv"), &residuals)?;
    let worst = residuals.transport.max(residuals.incompressibility);
    checks.push(CheckResult::new(
        "weak_residuals",
        worst.is_finite() && worst <= 1.0,
        1.0 - worst,
        format!(
            "transport {:.3e}, incompressibility {:.3e}",
            residuals.transport, residuals.incompressibility
        ),
    ));

    Ok(checks)
}

fn cmd_oracle(instance: &str, atoms: usize, seed: u64) -> Result<bool> {
    match instance {
        "single" => {
            let cloud = DiracCloud::from_parts(vec![TorusPoint::wrap([0.37, 0.41])], vec![1.0])?;
            let (diagram, report) = solve_weights(&cloud, None, &SolverOptions::default())?;
            println!("single atom: expected area 1");
            print_area_table(&cloud, &diagram.areas, &cloud.masses);
            println!("newton iterations: {}", report.iterations);
            Ok((diagram.areas[0] - 1.0).abs() <= 1e-12)
        }
        "two-atom" => {
            let cloud = DiracCloud::from_parts(
                vec![TorusPoint::wrap([0.25, 0.5]), TorusPoint::wrap([0.75, 0.5])],
                vec![0.3, 0.7],
            )?;
            let (diagram, _) = solve_weights(&cloud, None, &SolverOptions::default())?;
            println!("two atoms at x₁ = 0.25, 0.75 with masses 0.3, 0.7");
            print_area_table(&cloud, &diagram.areas, &cloud.masses);
            let gap = diagram.weights[1] - diagram.weights[0];
            println!("weight gap w₁ − w₀: solver {gap:.9}, closed form 0.05, |Δ| = {:.3e}",
                (gap - 0.05).abs());
            Ok((gap - 0.05).abs() <= 1e-6)
        }
        "random" => {
            if atoms == 0 || atoms > 4 {
                bail!("instance has {atoms} atoms; the brute-force oracle accepts 1 ≤ N ≤ 4");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let points: Vec<TorusPoint> = (0..atoms)
                .map(|_| TorusPoint::wrap([rng.gen::<f64>(), rng.gen::<f64>()]))
                .collect();
            let raw: Vec<f64> = (0..atoms).map(|_| rng.gen_range(0.5..1.5)).collect();
            let total: f64 = raw.iter().sum();
            let mut masses: Vec<f64> = raw.iter().map(|m| m / total).collect();
            let head: f64 = masses[..atoms - 1].iter().sum();
            masses[atoms - 1] = 1.0 - head;
            let cloud = DiracCloud::from_parts(points, masses)?;
            let (diagram, _) = solve_weights(&cloud, None, &SolverOptions::default())?;
            let raster = rasterized_areas(&cloud, &diagram.weights, 512);
            println!("random instance with {atoms} atoms (seed {seed}), raster grid 512");
            print_area_table(&cloud, &diagram.areas, &raster);
            let brute = brute_force_weights(&cloud);
            let mut max_dw = 0.0f64;
            println!("{:>4} {:>14} {:>14} {:>10}", "atom", "solver w", "oracle w", "|Δ|");
            for i in 0..cloud.len() {
                let ours = diagram.weights[i] - diagram.weights[0];
                let theirs = brute[i] - brute[0];
                max_dw = max_dw.max((ours - theirs).abs());
                println!("{i:>4} {ours:>14.9} {theirs:>14.9} {:>10.2e}", (ours - theirs).abs());
            }
            let max_da = diagram
                .areas
                .iter()
                .zip(&raster)
                .map(|(a, r)| (a - r).abs())
                .fold(0.0, f64::max);
            println!("max area delta {max_da:.3e}, max gauged weight delta {max_dw:.3e}");
            Ok(max_da <= 2.0 / 512.0 && max_dw <= 1e-3)
        }
        "shear-1d" => {
            let config_side = 32usize;
            let p0 = crate::measures::InitialPressure::new(crate::measures::Scenario::Shear {
                amplitude: 0.05,
            })?;
            let cloud = DiracCloud::sample_initial(&p0, config_side)?;
            let (diagram, _) = solve_weights(&cloud, None, &SolverOptions::default())?;
            let mut columns: Vec<f64> = cloud.points.iter().map(|p| p.coords()[0]).collect();
            columns.sort_by(f64::total_cmp);
            columns.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
            if columns.len() != config_side {
                bail!("expected {config_side} shear columns, found {}", columns.len());
            }
            let mut w2d = vec![0.0; config_side];
            let mut spread = 0.0f64;
            for j in 0..config_side {
                let members: Vec<f64> = (0..cloud.len())
                    .filter(|&i| (cloud.points[i].coords()[0] - columns[j]).abs() <= 1e-9)
                    .map(|i| diagram.weights[i])
                    .collect();
                let mean = members.iter().sum::<f64>() / members.len() as f64;
                for w in &members {
                    spread = spread.max((w - mean).abs());
                }
                w2d[j] = mean;
            }
            let masses = vec![1.0 / config_side as f64; config_side];
            let circle = rearrange_on_circle(&columns, &masses);
            let mut max_dw = 0.0f64;
            for j in 0..config_side {
                let ours = w2d[j] - w2d[0];
                let theirs = circle.weights[j] - circle.weights[0];
                max_dw = max_dw.max((ours - theirs).abs());
            }
            println!("shear columns: {config_side}, intra-column weight spread {spread:.3e}");
            println!("max gauged weight delta vs 1-D rearrangement: {max_dw:.3e}");
            Ok(spread <= 1e-9 && max_dw <= 1e-7)
        }
        other => bail!(
            "unknown oracle instance {other:?}; use single, two-atom, random or shear-1d"
        ),
    }
}

fn join_exp(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.3e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn print_area_table(cloud: &DiracCloud, areas: &[f64], oracle: &[f64]) {
    println!("{:>4} {:>10} {:>14} {:>14} {:>10}", "atom", "mass", "area", "oracle", "|Δ|");
    for i in 0..cloud.len() {
        println!(
            "{i:>4} {:>10.6} {:>14.9} {:>14.9} {:>10.2e}",
            cloud.masses[i],
            areas[i],
            oracle[i],
            (areas[i] - oracle[i]).abs()
        );
    }
}

fn cmd_report(dir: &Path) -> Result<bool> {
    let rows = read_diagnostics(&dir.join("diagnostics.csv"))?;
    if rows.is_empty() {
        bail!("diagnostics.csv in {} has no rows", dir.display());
    }
    if let Ok(manifest) = read_manifest(&dir.join("manifest.json")) {
        println!(
            "run of scenario {:?}: N = {}, dt = {}, T = {}, scheme = {}, version {}",
            manifest.config.scenario,
            manifest.config.atoms_per_side,
            manifest.config.dt,
            manifest.config.t_final,
            manifest.config.scheme,
            manifest.version
        );
        if let Some(t) = manifest.tracers {
            println!(
                "tracers: {}x{} grid, flow histogram [{:.4}, {:.4}], return distance {:.3e}",
                t.grid, t.grid, t.flow_hist_min, t.flow_hist_max, t.return_distance
            );
        }
    }
    let last = rows.last().expect("nonempty");
    println!(
        "{} steps to t = {}, {} diagnostics rows",
        last.step,
        last.time,
        rows.len()
    );
    println!("{:<18} {:>13} {:>13} {:>13}", "monitor", "min", "max", "final");
    let columns: [(&str, fn(&DiagnosticsRow) -> f64); 7] = [
        ("total_mass", |r| r.total_mass),
        ("area_residual", |r| r.area_residual),
        ("max_speed", |r| r.max_speed),
        ("hist_min", |r| r.hist_min),
        ("hist_max", |r| r.hist_max),
        ("newton_iterations", |r| r.newton_iterations as f64),
        ("substeps", |r| r.substeps as f64),
    ];
    for (name, get) in columns {
        let min = rows.iter().map(get).fold(f64::INFINITY, f64::min);
        let max = rows.iter().map(get).fold(f64::NEG_INFINITY, f64::max);
        println!(
            "{name:<18} {:>13.6e} {:>13.6e} {:>13.6e}",
            min,
            max,
            get(last)
        );
    }
    Ok(true)
}
