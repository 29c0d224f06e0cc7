//! Run artifacts on disk. Tables are CSV with fixed headers, reports are
//! JSON; floats go through the shortest round-trip formatter, so a given
//! run writes byte-identical files on every machine.

use crate::config::RunConfig;
use crate::eulerian::TracerFlow;
use crate::laguerre::PowerDiagram;
use crate::measures::DiracCloud;
use crate::vec2::Vec2;
use crate::weak::WeakResiduals;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// One cloud snapshot as stored on disk, atoms in trajectory order.
#[derive(Clone, Debug)]
pub struct SnapshotTable {
    pub cloud: DiracCloud,
    pub weights: Vec<f64>,
}

const SNAPSHOT_HEADER: &str = "atom_id,y1,y2,lift1,lift2,mass,weight";

pub fn write_snapshot(path: &Path, cloud: &DiracCloud, weights: &[f64]) -> Result<()> {
    let mut text = String::from(SNAPSHOT_HEADER);
    text.push('\n');
    for i in 0..cloud.len() {
        let y = cloud.points[i].coords();
        let lift = cloud.lift_history[i];
        writeln!(
            text,
            "{i},{},{},{},{},{},{}",
            y[0], y[1], lift[0], lift[1], cloud.masses[i], weights[i]
        )?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<SnapshotTable> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != SNAPSHOT_HEADER {
        bail!("{}: unexpected header {header:?}", path.display());
    }
    let mut points = Vec::new();
    let mut lifts: Vec<Vec2> = Vec::new();
    let mut masses = Vec::new();
    let mut weights = Vec::new();
    for (row, line) in lines.enumerate() {
        let cols = parse_row(path, row, line, 7)?;
        points.push(crate::torus::TorusPoint::wrap([cols[1], cols[2]]));
        lifts.push([cols[3], cols[4]]);
        masses.push(cols[5]);
        weights.push(cols[6]);
    }
    Ok(SnapshotTable {
        cloud: DiracCloud {
            points,
            masses,
            lift_history: lifts,
        },
        weights,
    })
}

/// Per-step monitor values mirrored into diagnostics.csv.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub time: f64,
    pub total_mass: f64,
    /// max |area − mass| over atoms at the accepted step.
    pub area_residual: f64,
    pub max_speed: f64,
    pub hist_min: f64,
    pub hist_max: f64,
    pub newton_iterations: usize,
    pub substeps: usize,
}

const DIAGNOSTICS_HEADER: &str =
    "step,time,total_mass,area_residual,max_speed,hist_min,hist_max,newton_iterations,substeps";

pub fn write_diagnostics(path: &Path, rows: &[DiagnosticsRow]) -> Result<()> {
    let mut text = String::from(DIAGNOSTICS_HEADER);
    text.push('\n');
    for r in rows {
        writeln!(
            text,
            "{},{},{},{},{},{},{},{},{}",
            r.step,
            r.time,
            r.total_mass,
            r.area_residual,
            r.max_speed,
            r.hist_min,
            r.hist_max,
            r.newton_iterations,
            r.substeps
        )?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRow>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != DIAGNOSTICS_HEADER {
        bail!("{}: unexpected header {header:?}", path.display());
    }
    let mut rows = Vec::new();
    for (row, line) in lines.enumerate() {
        let cols = parse_row(path, row, line, 9)?;
        rows.push(DiagnosticsRow {
            step: cols[0] as usize,
            time: cols[1],
            total_mass: cols[2],
            area_residual: cols[3],
            max_speed: cols[4],
            hist_min: cols[5],
            hist_max: cols[6],
            newton_iterations: cols[7] as usize,
            substeps: cols[8] as usize,
        });
    }
    Ok(rows)
}

fn parse_row(path: &Path, row: usize, line: &str, want: usize) -> Result<Vec<f64>> {
    let cols: Result<Vec<f64>> = line
        .split(',')
        .map(|t| {
            t.parse::<f64>()
                .with_context(|| format!("{} row {}: bad value {t:?}", path.display(), row + 1))
        })
        .collect();
    let cols = cols?;
    if cols.len() != want {
        bail!(
            "{} row {}: expected {want} columns, found {}",
            path.display(),
            row + 1,
            cols.len()
        );
    }
    Ok(cols)
}

/// Tracer table of the regularized flow: seeds z, their transported images
/// F(z) on the torus and the unwrapped arrival points g.
pub fn write_tracers(path: &Path, flow: &TracerFlow) -> Result<()> {
    let mut text = String::from("tracer_id,z1,z2,F1,F2,G1,G2");
    text.push('\n');
    for i in 0..flow.seeds.len() {
        let z = flow.seeds[i].coords();
        let f = flow.images[i].coords();
        let g = flow.end[i];
        writeln!(text, "{i},{},{},{},{},{},{}", z[0], z[1], f[0], f[1], g[0], g[1])?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Weak-residual table, one row per test function and residual family.
pub fn write_weak_report(path: &Path, residuals: &WeakResiduals) -> Result<()> {
    let mut text = String::from("test_id,k1,k2,residual");
    text.push('\n');
    for f in &residuals.per_function {
        let phase = if f.parity == 0 { "cos" } else { "sin" };
        writeln!(text, "transport_{phase},{},{},{}", f.k[0], f.k[1], f.transport)?;
    }
    for f in &residuals.per_function {
        let phase = if f.parity == 0 { "cos" } else { "sin" };
        writeln!(
            text,
            "divergence_{phase},{},{},{}",
            f.k[0], f.k[1], f.incompressibility
        )?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Cell geometry dump: areas, barycenters and the neighbor list (ids
/// separated by spaces inside the last column).
pub fn write_diagram(path: &Path, diagram: &PowerDiagram) -> Result<()> {
    let mut text = String::from("atom_id,area,b1,b2,neighbor_ids");
    text.push('\n');
    for i in 0..diagram.len() {
        let b = diagram.barycenters[i];
        let mut ids: Vec<usize> = diagram.edges[i].iter().map(|e| e.neighbor).collect();
        ids.sort_unstable();
        ids.dedup();
        let ids = ids
            .iter()
            .map(|id| id.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(text, "{i},{},{},{},{ids}", diagram.areas[i], b[0], b[1])?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Extremes of the per-step monitors over a whole run.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub mass_error_max: f64,
    pub area_residual_max: f64,
    pub max_speed: f64,
    pub hist_min: f64,
    pub hist_max: f64,
    pub newton_iterations_total: usize,
}

/// Digest of a tracer pass.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TracerSummary {
    pub grid: usize,
    pub flow_hist_min: f64,
    pub flow_hist_max: f64,
    pub return_distance: f64,
}

/// manifest.json: the config echo, the crate version and the monitor
/// digest, enough to audit a run directory without re-running it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: RunConfig,
    pub steps: usize,
    pub snapshots: Vec<String>,
    pub monitors: MonitorSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracers: Option<TracerSummary>,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// One verification check in verify_report.json.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: String,
    /// Distance to the acceptance threshold, nonnegative when passing.
    pub margin: f64,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: &str, pass: bool, margin: f64, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            status: if pass { "pass" } else { "fail" }.to_string(),
            margin,
            detail,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == "pass"
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

pub fn write_verify_report(path: &Path, checks: Vec<CheckResult>) -> Result<VerifyReport> {
    let report = VerifyReport {
        passed: checks.iter().all(|c| c.passed()),
        checks,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{InitialPressure, Scenario};

    #[test]
    fn snapshots_round_trip_byte_for_byte() {
        let p0 = InitialPressure::new(Scenario::Sine { epsilon: 0.01 }).unwrap();
        let cloud = DiracCloud::sample_initial(&p0, 4).unwrap();
        let weights: Vec<f64> = (0..cloud.len()).map(|i| i as f64 * 1e-3).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("step_0.csv");
        write_snapshot(&path, &cloud, &weights).unwrap();
        let first = std::fs::read(&path).unwrap();

        let table = read_snapshot(&path).unwrap();
        assert_eq!(table.weights, weights);
        for i in 0..cloud.len() {
            assert_eq!(table.cloud.points[i].coords(), cloud.points[i].coords());
            assert_eq!(table.cloud.masses[i], cloud.masses[i]);
        }
        write_snapshot(&path, &table.cloud, &table.weights).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn diagnostics_round_trip() {
        let rows = vec![
            DiagnosticsRow {
                step: 0,
                time: 0.0,
                total_mass: 1.0,
                area_residual: 1.5e-12,
                max_speed: 0.01,
                hist_min: 0.99,
                hist_max: 1.01,
                newton_iterations: 0,
                substeps: 1,
            },
            DiagnosticsRow {
                step: 1,
                time: 0.01,
                total_mass: 1.0,
                area_residual: 2.5e-12,
                max_speed: 0.0125,
                hist_min: 0.985,
                hist_max: 1.015,
                newton_iterations: 3,
                substeps: 1,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diagnostics.csv");
        write_diagnostics(&path, &rows).unwrap();
        assert_eq!(read_diagnostics(&path).unwrap(), rows);
    }

    #[test]
    fn verify_reports_aggregate_pass_status() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("verify_report.json");
        let report = write_verify_report(
            &path,
            vec![
                CheckResult::new("alpha", true, 0.5, "ok".into()),
                CheckResult::new("beta", false, -0.1, "too big".into()),
            ],
        )
        .unwrap();
        assert!(!report.passed);
        let text = std::fs::read_to_string(&path).unwrap();
        let back: VerifyReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.checks.len(), 2);
        assert_eq!(back.checks[0].status, "pass");
    }
}
