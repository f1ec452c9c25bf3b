//! Run configuration: a versioned JSON schema, semantic validation that
//! reports every violation at once, and a canonical serialization whose
//! SHA-256 digest identifies the effective configuration in artifact
//! metadata.

use std::fmt;
use std::path::Path;

use islandpf_core::diagnostics::GridSpec;
use islandpf_core::models::{GrowthParams, LinearParams, MobileParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Current configuration schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Time index at which error surfaces compare against the oracle when the
/// configuration does not say otherwise.
pub const DEFAULT_COMPARISON_STEP: usize = 50;

/// Bootstrap resample count for paired-comparison confidence intervals when
/// the configuration does not say otherwise.
pub const DEFAULT_BOOTSTRAP_DRAWS: usize = 10_000;

/// Benchmark model selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Scalar nonlinear growth model with an oscillating environment.
    Growth,
    /// Planar mobile target driven by a random force, with velocity jumps.
    Mobile,
    /// Scalar conditionally linear-Gaussian model with a frozen environment.
    CustomLinear,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ModelKind::Growth => "growth",
            ModelKind::Mobile => "mobile",
            ModelKind::CustomLinear => "custom-linear",
        };
        f.write_str(name)
    }
}

/// Filtering algorithm selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    /// Nested island particle filter (particles at both levels).
    Lipf,
    /// Interacting Kalman filter (islands carry exact Gaussian beliefs).
    Ikf,
    /// Plain single-ensemble bootstrap particle filter.
    Bootstrap,
    /// Deterministic dense-grid exact filter (oracle; no particles).
    GridOracle,
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AlgorithmKind::Lipf => "lipf",
            AlgorithmKind::Ikf => "ikf",
            AlgorithmKind::Bootstrap => "bootstrap",
            AlgorithmKind::GridOracle => "grid-oracle",
        };
        f.write_str(name)
    }
}

/// Artifact families a run can emit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputKind {
    /// Simulated ground truth (parameters, states, observations).
    Trajectory,
    /// Per-step filter estimates and selection health.
    Estimates,
    /// L2 error over the (island count, particle count) grid vs the oracle.
    ErrorSurface,
    /// Paired island-filter vs Kalman-variant accuracy table.
    Rmse,
    /// Periodograms of the true, observed, and filtered signals.
    Psd,
}

impl fmt::Display for OutputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            OutputKind::Trajectory => "trajectory",
            OutputKind::Estimates => "estimates",
            OutputKind::ErrorSurface => "error-surface",
            OutputKind::Rmse => "rmse",
            OutputKind::Psd => "psd",
        };
        f.write_str(name)
    }
}

/// One experiment's complete configuration.
///
/// Loaded from a JSON file; CLI flags may override the scalar fields. The
/// `params` object, when present, overrides individual model parameters (its
/// schema follows the selected `model`; omitted parameters keep their
/// defaults). Serialization order is fixed by the struct, and nested maps
/// serialize with sorted keys, so [`RunConfig::canonical_json`] is a stable
/// fingerprint input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Configuration schema version; this binary understands version 1.
    pub schema: u32,
    /// Benchmark model.
    pub model: ModelKind,
    /// Filtering algorithm.
    pub algorithm: AlgorithmKind,
    /// Island count (outer level). Required by lipf/ikf; forbidden for
    /// bootstrap and grid-oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1: Option<usize>,
    /// Within-island particle count (inner level). Required by lipf and
    /// bootstrap (its single ensemble); forbidden for ikf and grid-oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n2: Option<usize>,
    /// Number of filtering steps; the estimates table has exactly this many
    /// rows per replication (steps 0..horizon-1).
    pub horizon: usize,
    /// Root seed; every random draw in the run derives from it.
    pub seed: u64,
    /// Independent replications (fresh trajectory and filter per replication).
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Artifact families to emit.
    pub outputs: Vec<OutputKind>,
    /// (island count, particle count) cells of the error surface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_grid: Option<Vec<[usize; 2]>>,
    /// Time index at which the error surface compares against the oracle
    /// (default 50).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison_step: Option<usize>,
    /// Island count of the Kalman side of the rmse comparison (default: n1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ikf_islands: Option<usize>,
    /// Bootstrap resample count for rmse confidence intervals (default 10000).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap_draws: Option<usize>,
    /// Worker thread count. Purely a performance knob: results are
    /// bit-identical for any value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Artifact directory (overridden by the ISLANDPF_OUT environment
    /// variable, which is overridden by the --output-dir flag).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    /// Load observations from this trajectory CSV instead of co-simulating
    /// ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_file: Option<String>,
    /// Model parameter overrides (partial object; schema follows `model`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
    /// Grid geometry for the grid-oracle algorithm and the error-surface
    /// reference (default: the growth benchmark geometry).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

fn default_replications() -> usize {
    1
}

/// Scalar overrides supplied as CLI flags; `None` keeps the file's value.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub replications: Option<usize>,
    pub threads: Option<usize>,
}

impl RunConfig {
    /// Parse a configuration from JSON text.
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("configuration does not parse: {e}"))
    }

    /// Apply CLI flag overrides, returning the effective configuration.
    pub fn with_overrides(mut self, o: &Overrides) -> Self {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.horizon {
            self.horizon = v;
        }
        if let Some(v) = o.n1 {
            self.n1 = Some(v);
        }
        if let Some(v) = o.n2 {
            self.n2 = Some(v);
        }
        if let Some(v) = o.replications {
            self.replications = v;
        }
        if let Some(v) = o.threads {
            self.threads = Some(v);
        }
        self
    }

    /// The canonical serialized form: field order fixed by this struct, map
    /// keys sorted. Parsing it back yields an equal configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    /// Hex SHA-256 digest of [`RunConfig::canonical_json`]; identifies the
    /// effective configuration in artifact sidecars.
    pub fn content_hash(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }

    /// Effective comparison step of the error surface.
    pub fn comparison_step(&self) -> usize {
        self.comparison_step.unwrap_or(DEFAULT_COMPARISON_STEP)
    }

    /// Effective grid geometry.
    pub fn grid_spec(&self) -> GridSpec {
        self.grid.unwrap_or_default()
    }

    /// Typed growth-model parameters with overrides applied.
    pub fn growth_params(&self) -> Result<GrowthParams, String> {
        typed_params(self.params.as_ref(), "growth")
    }

    /// Typed mobile-model parameters with overrides applied.
    pub fn mobile_params(&self) -> Result<MobileParams, String> {
        typed_params(self.params.as_ref(), "mobile")
    }

    /// Typed linear-model parameters with overrides applied.
    pub fn linear_params(&self) -> Result<LinearParams, String> {
        typed_params(self.params.as_ref(), "custom-linear")
    }

    /// Hex SHA-256 digest (truncated to 16 characters) of the effective,
    /// fully-typed model parameters; stamped into trajectory files so loaded
    /// observations can be checked against the configuration that consumes
    /// them.
    pub fn params_hash(&self) -> Result<String, String> {
        let canonical = match self.model {
            ModelKind::Growth => serde_json::to_string(&self.growth_params()?),
            ModelKind::Mobile => serde_json::to_string(&self.mobile_params()?),
            ModelKind::CustomLinear => serde_json::to_string(&self.linear_params()?),
        }
        .map_err(|e| e.to_string())?;
        Ok(sha256_hex(canonical.as_bytes())[..16].to_string())
    }

    /// Effective model parameters as a JSON value (for artifact sidecars).
    pub fn params_value(&self) -> Result<serde_json::Value, String> {
        let v = match self.model {
            ModelKind::Growth => serde_json::to_value(self.growth_params()?),
            ModelKind::Mobile => serde_json::to_value(self.mobile_params()?),
            ModelKind::CustomLinear => serde_json::to_value(self.linear_params()?),
        };
        v.map_err(|e| e.to_string())
    }

    /// Whether the run emits the given artifact family.
    pub fn emits(&self, kind: OutputKind) -> bool {
        self.outputs.contains(&kind)
    }

    /// Check every semantic invariant, returning all violations (empty means
    /// the configuration is valid).
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut err = |msg: String| errs.push(msg);

        if self.schema != SCHEMA_VERSION {
            err(format!("unsupported schema version {} (this binary understands {SCHEMA_VERSION})", self.schema));
        }
        if self.horizon == 0 {
            err("horizon must be at least 1".into());
        }
        if self.replications == 0 {
            err("replications must be at least 1".into());
        }
        if self.n1 == Some(0) {
            err("n1 must be positive when given".into());
        }
        if self.n2 == Some(0) {
            err("n2 must be positive when given".into());
        }
        if self.threads == Some(0) {
            err("threads must be positive when given".into());
        }

        match self.algorithm {
            AlgorithmKind::Lipf => {
                if self.n1.is_none() {
                    err("algorithm lipf requires n1 (island count)".into());
                }
                if self.n2.is_none() {
                    err("algorithm lipf requires n2 (particles per island)".into());
                }
            }
            AlgorithmKind::Ikf => {
                if self.n1.is_none() {
                    err("algorithm ikf requires n1 (island count)".into());
                }
                if self.n2.is_some() {
                    err("algorithm ikf forbids n2: its inner measures are exact Gaussians, not particles".into());
                }
                if self.model == ModelKind::Growth {
                    err("algorithm ikf needs a conditionally linear-Gaussian model (mobile or custom-linear), not growth".into());
                }
            }
            AlgorithmKind::Bootstrap => {
                if self.n2.is_none() {
                    err("algorithm bootstrap requires n2 (its single ensemble size)".into());
                }
                if self.n1.is_some() {
                    err("algorithm bootstrap forbids n1: it has no island level".into());
                }
            }
            AlgorithmKind::GridOracle => {
                if self.n1.is_some() || self.n2.is_some() {
                    err("algorithm grid-oracle forbids n1 and n2: it has no particles".into());
                }
                if self.model != ModelKind::Growth {
                    err("algorithm grid-oracle supports only the growth model".into());
                }
            }
        }

        if self.outputs.is_empty() {
            err("outputs must list at least one artifact".into());
        }
        for (i, kind) in self.outputs.iter().enumerate() {
            if self.outputs[..i].contains(kind) {
                err(format!("outputs lists '{kind}' more than once"));
            }
        }

        if self.emits(OutputKind::ErrorSurface) {
            if self.algorithm != AlgorithmKind::Lipf {
                err("error-surface output studies the island particle filter; set algorithm lipf".into());
            }
            if self.model != ModelKind::Growth {
                err("error-surface output needs the grid oracle as reference, which supports only the growth model".into());
            }
            match &self.surface_grid {
                None => err("error-surface output requires surface_grid".into()),
                Some(grid) if grid.is_empty() => err("surface_grid must be nonempty".into()),
                Some(grid) => {
                    for &[i, p] in grid {
                        if i == 0 || p == 0 {
                            err(format!("surface_grid cell ({i}, {p}) has a zero count"));
                        }
                    }
                }
            }
            if self.comparison_step() > self.horizon {
                err(format!(
                    "comparison_step {} exceeds horizon {}; the surface compares at a step the run must reach",
                    self.comparison_step(),
                    self.horizon
                ));
            }
        } else {
            if self.surface_grid.is_some() {
                err("surface_grid is set but outputs does not list error-surface".into());
            }
            if self.comparison_step.is_some() {
                err("comparison_step is set but outputs does not list error-surface".into());
            }
        }

        if self.emits(OutputKind::Rmse) {
            if self.model != ModelKind::Mobile {
                err("rmse output compares filters on the mobile model; set model mobile".into());
            }
            if self.algorithm != AlgorithmKind::Lipf {
                err("rmse output runs the island filter against its Kalman variant; set algorithm lipf".into());
            }
            if self.trajectory_file.is_some() {
                err("rmse output co-simulates a fresh trajectory per replication; trajectory_file is not supported".into());
            }
            if self.replications < 2 {
                err("rmse output needs at least 2 replications for a paired comparison".into());
            }
            if let Some(d) = self.bootstrap_draws {
                if d < 100 {
                    err(format!("bootstrap_draws {d} is too small; confidence intervals need at least 100"));
                }
            }
            if self.ikf_islands == Some(0) {
                err("ikf_islands must be positive when given".into());
            }
        } else {
            if self.ikf_islands.is_some() {
                err("ikf_islands is set but outputs does not list rmse".into());
            }
            if self.bootstrap_draws.is_some() {
                err("bootstrap_draws is set but outputs does not list rmse".into());
            }
        }

        if self.emits(OutputKind::Psd) && self.horizon < 16 {
            err(format!("psd output needs horizon >= 16 for a meaningful periodogram, got {}", self.horizon));
        }

        if self.emits(OutputKind::Trajectory) && self.trajectory_file.is_some() {
            err("trajectory output re-emits simulated ground truth; drop it when loading observations from a file".into());
        }

        if self.grid.is_some() && self.algorithm != AlgorithmKind::GridOracle && !self.emits(OutputKind::ErrorSurface) {
            err("grid geometry is set but neither the grid-oracle algorithm nor an error-surface output uses it".into());
        }

        if let Some(path) = &self.trajectory_file {
            if !Path::new(path).is_file() {
                err(format!("trajectory_file '{path}' does not exist"));
            }
        }
        if let Some(dir) = &self.output_dir {
            let p = Path::new(dir);
            if p.exists() && !p.is_dir() {
                err(format!("output_dir '{dir}' exists and is not a directory"));
            }
        }

        let params_check = match self.model {
            ModelKind::Growth => self.growth_params().map(|_| ()),
            ModelKind::Mobile => self.mobile_params().map(|_| ()),
            ModelKind::CustomLinear => self.linear_params().map(|_| ()),
        };
        if let Err(e) = params_check {
            err(e);
        }

        errs
    }
}

fn typed_params<T: Default + serde::de::DeserializeOwned>(
    value: Option<&serde_json::Value>,
    model: &str,
) -> Result<T, String> {
    match value {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| format!("params does not match the {model} model: {e}")),
    }
}

/// Hex-encoded SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write;
        write!(out, "{b:02x}").expect("writing to a String cannot fail");
    }
    out
}
