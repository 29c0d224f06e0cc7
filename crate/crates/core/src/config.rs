//! Run configuration: a flat TOML table naming the initial pressure
//! scenario, the atom grid, the time stepping and the output cadence.
//! Unknown keys are rejected so a typo cannot silently fall back to a
//! default, and every numeric field is validated before a run starts.

use crate::dynamics::Scheme;
use crate::measures::{InitialPressure, Scenario};
use crate::ot::SolverOptions;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

fn default_checks() -> bool {
    true
}

/// Contents of a run configuration file. `N` counts atoms per side (the
/// cloud has N² atoms), `T` is the final time, `tracers` is the tracer
/// grid side for the regularized flow (0 switches tracers off), `checks`
/// keeps the per-step invariant monitors armed.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// "zero", "sine", "shear sin" or "grid-file <path>"; the sine and
    /// shear amplitudes come from `epsilon`.
    pub scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(rename = "N")]
    pub atoms_per_side: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub scheme: String,
    pub snapshot_stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    pub histogram_bins: usize,
    /// Seed for the verification samplers; the run itself is deterministic.
    pub seed: u64,
    #[serde(default)]
    pub tracers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default = "default_checks")]
    pub checks: bool,
}

impl RunConfig {
    /// Parse and validate a TOML file; parse errors keep the line and key
    /// reported by the TOML reader.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reject non-finite, non-positive or otherwise unusable fields.
    pub fn validate(&self) -> Result<()> {
        if self.atoms_per_side == 0 {
            bail!("key N: atoms per side must be at least 1");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            bail!("key dt: time step must be finite and positive");
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            bail!("key T: final time must be finite and positive");
        }
        if self.snapshot_stride == 0 {
            bail!("key snapshot_stride: stride must be at least 1");
        }
        if self.histogram_bins < 2 {
            bail!("key histogram_bins: need at least 2 bins per side");
        }
        if let Some(tol) = self.tol {
            if !(tol.is_finite() && tol > 0.0) {
                bail!("key tol: tolerance must be finite and positive");
            }
        }
        if let Some(epsilon) = self.epsilon {
            if !epsilon.is_finite() {
                bail!("key epsilon: amplitude must be finite");
            }
        }
        self.scheme()?;
        self.scenario()?;
        Ok(())
    }

    pub fn scheme(&self) -> Result<Scheme> {
        self.scheme
            .parse()
            .map_err(|e: String| anyhow::anyhow!("key scheme: {e}"))
    }

    /// Decode the scenario string plus the `epsilon` key into a scenario
    /// value, reading grid files from disk when named. The sine and shear
    /// amplitudes may ride inline ("sine 0.01") or in `epsilon`, but not
    /// both.
    pub fn scenario(&self) -> Result<Scenario> {
        let mut tokens = self.scenario.split_whitespace();
        let head = tokens.next().unwrap_or("");
        let scenario = match head {
            "zero" => {
                if self.epsilon.is_some() {
                    bail!("key epsilon: the zero scenario takes no amplitude");
                }
                Scenario::Zero
            }
            "sine" => Scenario::Sine {
                epsilon: self.amplitude(tokens.next())?,
            },
            "shear" => {
                let mut inline = tokens.next();
                if inline == Some("sin") {
                    inline = tokens.next();
                } else if inline.is_some() && inline.unwrap().parse::<f64>().is_err() {
                    bail!(
                        "key scenario: unknown shear profile {:?}, only \"sin\" is bundled",
                        inline.unwrap()
                    );
                }
                Scenario::Shear {
                    amplitude: self.amplitude(inline)?,
                }
            }
            "grid-file" => {
                if self.epsilon.is_some() {
                    bail!("key epsilon: grid scenarios take no amplitude");
                }
                let path = tokens
                    .next()
                    .ok_or_else(|| anyhow::anyhow!("key scenario: grid-file needs a path"))?;
                let (side, values) = read_grid_file(Path::new(path))?;
                Scenario::Grid { side, values }
            }
            other => bail!("key scenario: unknown scenario {other:?}"),
        };
        if tokens.next().is_some() {
            bail!("key scenario: trailing tokens in {:?}", self.scenario);
        }
        Ok(scenario)
    }

    fn amplitude(&self, inline: Option<&str>) -> Result<f64> {
        match (inline, self.epsilon) {
            (Some(text), None) => text
                .parse()
                .with_context(|| format!("key scenario: bad amplitude {text:?}")),
            (None, Some(epsilon)) => Ok(epsilon),
            (None, None) => bail!("key epsilon: this scenario needs an amplitude"),
            (Some(_), Some(_)) => {
                bail!("key epsilon: amplitude given both inline and as a key")
            }
        }
    }

    /// Build the initial pressure, running the convexity scan.
    pub fn pressure(&self) -> Result<InitialPressure> {
        Ok(InitialPressure::new(self.scenario()?)?)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            ..SolverOptions::default()
        }
    }
}

/// Read a tabulated pressure: the first line holds the grid side, the rest
/// hold side² node values in row-major order, separated by commas or
/// whitespace.
pub fn read_grid_file(path: &Path) -> Result<(usize, Vec<f64>)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading grid file {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let side: usize = lines
        .next()
        .ok_or_else(|| anyhow::anyhow!("grid file {} is empty", path.display()))?
        .trim()
        .parse()
        .with_context(|| format!("grid file {}: bad side header", path.display()))?;
    let mut values = Vec::with_capacity(side * side);
    for line in lines {
        for token in line.split(|c: char| c == ',' || c.is_whitespace()) {
            if token.is_empty() {
                continue;
            }
            values.push(
                token
                    .parse::<f64>()
                    .with_context(|| format!("grid file {}: bad value {token:?}", path.display()))?,
            );
        }
    }
    if values.len() != side * side {
        bail!(
            "grid file {}: expected {} values, found {}",
            path.display(),
            side * side,
            values.len()
        );
    }
    Ok((side, values))
}
