//! Artifact emission: RFC-4180 CSV tables with mandatory headers plus a JSON
//! metadata sidecar per artifact.
//!
//! Determinism contract: CSV bodies are pure functions of the effective
//! configuration (numbers are formatted by shortest round-trip, rows follow
//! fixed iteration orders), so reruns produce byte-identical files.
//! Everything time-dependent (timestamps, runtimes) lives only in the
//! sidecars.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use islandpf_core::models::Trajectory;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;

/// Environment variable naming the artifact root directory.
pub const OUT_ENV: &str = "ISLANDPF_OUT";

/// Sidecar schema version.
pub const SIDECAR_SCHEMA_VERSION: u32 = 1;

/// Resolve the artifact root: CLI flag, then environment, then the
/// configuration, then `./out`.
pub fn resolve_output_root(flag: Option<PathBuf>, env: Option<String>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p;
    }
    if let Some(p) = env {
        return PathBuf::from(p);
    }
    if let Some(p) = &cfg.output_dir {
        return PathBuf::from(p);
    }
    PathBuf::from("out")
}

/// One estimates row; `None` marks a column the producing algorithm has no
/// value for (e.g. particle diagnostics of the deterministic grid filter).
#[derive(Clone, Debug)]
pub struct EstimateRow {
    pub replication: usize,
    pub step: usize,
    pub param_filtered_mean: Vec<f64>,
    pub param_filtered_var: Vec<f64>,
    pub param_predictor_mean: Vec<f64>,
    pub param_predictor_var: Vec<f64>,
    pub state_filtered_mean: Vec<f64>,
    pub state_filtered_var: Vec<f64>,
    pub state_predictor_mean: Vec<f64>,
    pub state_predictor_var: Vec<f64>,
    pub log_norm_increment: f64,
    pub island_ess: Option<f64>,
    pub inner_ess_mean: Option<f64>,
    pub island_potential_mean: Option<f64>,
    pub island_potential_min: Option<f64>,
    pub island_potential_max: Option<f64>,
}

fn dim_columns(out: &mut Vec<String>, prefix: &str, dim: usize) {
    for i in 0..dim {
        out.push(format!("{prefix}_{i}"));
    }
}

/// Column names of the estimates table for the given model dimensions.
pub fn estimates_header(param_dim: usize, state_dim: usize) -> Vec<String> {
    let mut cols = vec!["replication".to_string(), "step".to_string()];
    dim_columns(&mut cols, "param_filtered_mean", param_dim);
    dim_columns(&mut cols, "param_filtered_var", param_dim);
    dim_columns(&mut cols, "param_predictor_mean", param_dim);
    dim_columns(&mut cols, "param_predictor_var", param_dim);
    dim_columns(&mut cols, "state_filtered_mean", state_dim);
    dim_columns(&mut cols, "state_filtered_var", state_dim);
    dim_columns(&mut cols, "state_predictor_mean", state_dim);
    dim_columns(&mut cols, "state_predictor_var", state_dim);
    cols.extend(
        ["log_norm_increment", "island_ess", "inner_ess_mean", "island_potential_mean", "island_potential_min", "island_potential_max"]
            .map(String::from),
    );
    cols
}

/// Write the estimates table.
pub fn write_estimates_csv(path: &Path, param_dim: usize, state_dim: usize, rows: &[EstimateRow]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(estimates_header(param_dim, state_dim))?;
    for row in rows {
        debug_assert_eq!(row.param_filtered_mean.len(), param_dim);
        debug_assert_eq!(row.state_filtered_mean.len(), state_dim);
        let mut values: Vec<Option<f64>> = Vec::with_capacity(8 * param_dim.max(state_dim) + 6);
        for group in [
            &row.param_filtered_mean,
            &row.param_filtered_var,
            &row.param_predictor_mean,
            &row.param_predictor_var,
            &row.state_filtered_mean,
            &row.state_filtered_var,
            &row.state_predictor_mean,
            &row.state_predictor_var,
        ] {
            values.extend(group.iter().copied().map(Some));
        }
        values.push(Some(row.log_norm_increment));
        values.push(row.island_ess);
        values.push(row.inner_ess_mean);
        values.push(row.island_potential_mean);
        values.push(row.island_potential_min);
        values.push(row.island_potential_max);
        wtr.serialize((row.replication, row.step, values))?;
    }
    Ok(wtr.flush()?)
}

/// Write ground-truth trajectories (one or more replications).
///
/// Columns are `replication, step, theta_*, x_*, y_*` plus two provenance
/// columns, `seed` and `param_hash`, constant over the file, so the header
/// names them and every row carries them.
pub fn write_trajectory_csv(path: &Path, items: &[(usize, &Trajectory)], seed: u64, param_hash: &str) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    let (pd, sd, od) = items
        .first()
        .map(|(_, t)| (t.param_dim(), t.state_dim(), t.obs_dim()))
        .unwrap_or((0, 0, 0));
    let mut cols = vec!["replication".to_string(), "step".to_string()];
    dim_columns(&mut cols, "theta", pd);
    dim_columns(&mut cols, "x", sd);
    dim_columns(&mut cols, "y", od);
    cols.push("seed".to_string());
    cols.push("param_hash".to_string());
    wtr.write_record(&cols)?;
    for &(rep, traj) in items {
        for n in 0..=traj.horizon() {
            let mut values: Vec<f64> = Vec::with_capacity(pd + sd + od);
            values.extend_from_slice(traj.theta(n));
            values.extend_from_slice(traj.state(n));
            values.extend_from_slice(traj.obs(n));
            wtr.serialize((rep, n, values, seed, param_hash))?;
        }
    }
    Ok(wtr.flush()?)
}

/// A trajectory parsed back from CSV; dimensions are whatever the file holds
/// (zero when a block of columns is absent).
#[derive(Clone, Debug)]
pub struct LoadedTrajectory {
    pub horizon: usize,
    pub param_dim: usize,
    pub state_dim: usize,
    pub obs_dim: usize,
    pub thetas: Vec<f64>,
    pub states: Vec<f64>,
    pub observations: Vec<f64>,
    pub param_hash: Option<String>,
}

fn indexed_columns(headers: &csv::StringRecord, prefix: &str) -> Result<Vec<usize>, String> {
    let mut found: Vec<(usize, usize)> = Vec::new();
    for (col, name) in headers.iter().enumerate() {
        if let Some(rest) = name.strip_prefix(prefix).and_then(|r| r.strip_prefix('_')) {
            if let Ok(i) = rest.parse::<usize>() {
                found.push((i, col));
            }
        }
    }
    found.sort_unstable();
    for (expected, &(i, _)) in found.iter().enumerate() {
        if i != expected {
            return Err(format!("trajectory file: {prefix} columns are not contiguous from {prefix}_0"));
        }
    }
    Ok(found.into_iter().map(|(_, col)| col).collect())
}

/// Load a trajectory written by [`write_trajectory_csv`] (or any CSV with the
/// same column conventions; the `y_*` block is required, the others are
/// optional). The file must contain exactly one replication with steps
/// `0..=horizon` in order.
pub fn load_trajectory_csv(path: &Path) -> Result<LoadedTrajectory, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| format!("cannot read trajectory file: {e}"))?;
    let headers = rdr.headers().map_err(|e| format!("trajectory file has no header: {e}"))?.clone();
    let theta_cols = indexed_columns(&headers, "theta")?;
    let x_cols = indexed_columns(&headers, "x")?;
    let y_cols = indexed_columns(&headers, "y")?;
    if y_cols.is_empty() {
        return Err("trajectory file has no y_* observation columns".to_string());
    }
    let col_of = |name: &str| headers.iter().position(|h| h == name);
    let rep_col = col_of("replication");
    let step_col = col_of("step").ok_or("trajectory file has no step column")?;
    let hash_col = col_of("param_hash");

    let parse = |field: &str, what: &str, line: usize| -> Result<f64, String> {
        field.parse::<f64>().map_err(|_| format!("trajectory file line {line}: {what} value '{field}' is not a number"))
    };

    let mut thetas = Vec::new();
    let mut states = Vec::new();
    let mut observations = Vec::new();
    let mut param_hash: Option<String> = None;
    let mut rows = 0usize;
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| format!("trajectory file: {e}"))?;
        let line = idx + 2; // header is line 1
        if let Some(c) = rep_col {
            if record[c] != *"0" {
                return Err("trajectory file must contain exactly one replication (replication column is not all 0)".to_string());
            }
        }
        let step: usize =
            record[step_col].parse().map_err(|_| format!("trajectory file line {line}: bad step '{}'", &record[step_col]))?;
        if step != rows {
            return Err(format!("trajectory file line {line}: step {step} out of order (expected {rows})"));
        }
        for &c in &theta_cols {
            thetas.push(parse(&record[c], "theta", line)?);
        }
        for &c in &x_cols {
            states.push(parse(&record[c], "state", line)?);
        }
        for &c in &y_cols {
            observations.push(parse(&record[c], "observation", line)?);
        }
        if let Some(c) = hash_col {
            let h = record[c].to_string();
            if let Some(prev) = &param_hash {
                if *prev != h {
                    return Err("trajectory file: param_hash column is not constant".to_string());
                }
            }
            param_hash = Some(h);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err("trajectory file has no data rows".to_string());
    }
    Ok(LoadedTrajectory {
        horizon: rows - 1,
        param_dim: theta_cols.len(),
        state_dim: x_cols.len(),
        obs_dim: y_cols.len(),
        thetas,
        states,
        observations,
        param_hash,
    })
}

/// Write the paired-comparison table.
pub fn write_rmse_csv(path: &Path, comparison: &islandpf_core::RmseComparison) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["signal", "island_filter_rmse", "gaussian_filter_rmse", "mean_difference", "ci_low", "ci_high"])?;
    for s in &comparison.signals {
        wtr.serialize((
            &s.signal,
            s.island_filter_rmse,
            s.gaussian_filter_rmse,
            s.mean_difference,
            s.ci_low,
            s.ci_high,
        ))?;
    }
    Ok(wtr.flush()?)
}

/// Write the error surface (root-mean-square and mean error per cell).
pub fn write_surface_error_csv(path: &Path, cells: &[islandpf_core::diagnostics::SurfaceCell]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["islands", "particles", "replications", "rms_error", "mean_error"])?;
    for c in cells {
        wtr.serialize((c.islands, c.particles, c.replications, c.rms_error, c.mean_error))?;
    }
    Ok(wtr.flush()?)
}

/// Write the error-variance surface.
pub fn write_surface_variance_csv(path: &Path, cells: &[islandpf_core::diagnostics::SurfaceCell]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["islands", "particles", "replications", "error_variance"])?;
    for c in cells {
        wtr.serialize((c.islands, c.particles, c.replications, c.error_variance))?;
    }
    Ok(wtr.flush()?)
}

/// One periodogram row: the same frequency bin for the true, observed, and
/// filtered versions of the signal (the true column is absent when the run
/// ingested observations without ground truth).
#[derive(Clone, Debug)]
pub struct PsdRow {
    pub replication: usize,
    pub frequency: f64,
    pub power_true: Option<f64>,
    pub power_observed: f64,
    pub power_filtered: f64,
}

/// Write the periodogram table.
pub fn write_psd_csv(path: &Path, rows: &[PsdRow]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["replication", "frequency", "power_true", "power_observed", "power_filtered"])?;
    for r in rows {
        wtr.serialize((r.replication, r.frequency, r.power_true, r.power_observed, r.power_filtered))?;
    }
    Ok(wtr.flush()?)
}

/// Write the JSON metadata sidecar for `<artifact>.csv` as
/// `<artifact>.meta.json`; `extra` carries artifact-specific fields. Returns
/// the sidecar path.
pub fn write_sidecar(dir: &Path, artifact: &str, cfg: &RunConfig, extra: Map<String, Value>) -> Result<PathBuf, String> {
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_err(|e| e.to_string())?.as_secs();
    let mut doc = Map::new();
    doc.insert("schema_version".into(), json!(SIDECAR_SCHEMA_VERSION));
    doc.insert("artifact".into(), json!(artifact));
    doc.insert("seed".into(), json!(cfg.seed));
    doc.insert("config_sha256".into(), json!(cfg.content_hash()));
    doc.insert("model".into(), json!(cfg.model.to_string()));
    doc.insert("algorithm".into(), json!(cfg.algorithm.to_string()));
    doc.insert("model_params".into(), cfg.params_value()?);
    doc.insert("created_unix".into(), json!(created));
    for (k, v) in extra {
        doc.insert(k, v);
    }
    let path = dir.join(format!("{artifact}.meta.json"));
    let mut text = serde_json::to_string_pretty(&Value::Object(doc)).map_err(|e| e.to_string())?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use islandpf_core::models::{simulate, GrowthModel, GrowthParams};
    use islandpf_core::RandomStream;

    fn growth_traj(horizon: usize, seed: u64) -> Trajectory {
        let model = GrowthModel::new(GrowthParams::default()).unwrap();
        simulate(&model, horizon, &RandomStream::root(seed))
    }

    #[test]
    fn trajectory_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.csv");
        let traj = growth_traj(17, 5);
        write_trajectory_csv(&path, &[(0, &traj)], 5, "abcd1234abcd1234").unwrap();

        let loaded = load_trajectory_csv(&path).unwrap();
        assert_eq!(loaded.horizon, 17);
        assert_eq!((loaded.param_dim, loaded.state_dim, loaded.obs_dim), (1, 1, 1));
        assert_eq!(loaded.param_hash.as_deref(), Some("abcd1234abcd1234"));
        // Shortest round-trip formatting: parsed values are bit-identical.
        for n in 0..=17 {
            assert_eq!(loaded.thetas[n], traj.theta(n)[0]);
            assert_eq!(loaded.states[n], traj.state(n)[0]);
            assert_eq!(loaded.observations[n], traj.obs(n)[0]);
        }
    }

    #[test]
    fn trajectory_loader_rejects_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, text: &str| {
            let p = dir.path().join(name);
            fs::write(&p, text).unwrap();
            p
        };
        // No observation columns.
        let p = write("a.csv", "step,x_0\n0,1.0\n");
        assert!(load_trajectory_csv(&p).unwrap_err().contains("y_*"));
        // Two replications.
        let p = write("b.csv", "replication,step,y_0\n0,0,1.0\n1,0,2.0\n");
        assert!(load_trajectory_csv(&p).unwrap_err().contains("one replication"));
        // Step gap.
        let p = write("c.csv", "step,y_0\n0,1.0\n2,2.0\n");
        assert!(load_trajectory_csv(&p).unwrap_err().contains("out of order"));
        // Non-contiguous observation block.
        let p = write("d.csv", "step,y_1\n0,1.0\n");
        assert!(load_trajectory_csv(&p).unwrap_err().contains("contiguous"));
        // Non-numeric value.
        let p = write("e.csv", "step,y_0\n0,oops\n");
        assert!(load_trajectory_csv(&p).unwrap_err().contains("not a number"));
        // Empty table.
        let p = write("f.csv", "step,y_0\n");
        assert!(load_trajectory_csv(&p).unwrap_err().contains("no data rows"));
    }

    #[test]
    fn estimates_csv_has_header_and_blank_optional_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("estimates.csv");
        let row = EstimateRow {
            replication: 0,
            step: 3,
            param_filtered_mean: vec![1.5],
            param_filtered_var: vec![0.25],
            param_predictor_mean: vec![1.0],
            param_predictor_var: vec![0.5],
            state_filtered_mean: vec![2.0],
            state_filtered_var: vec![1.0],
            state_predictor_mean: vec![1.75],
            state_predictor_var: vec![1.25],
            log_norm_increment: -0.5,
            island_ess: None,
            inner_ess_mean: None,
            island_potential_mean: None,
            island_potential_min: None,
            island_potential_max: None,
        };
        write_estimates_csv(&path, 1, 1, &[row]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("replication,step,param_filtered_mean_0,"));
        assert!(header.ends_with("island_potential_max"));
        let data = lines.next().unwrap();
        assert_eq!(data, "0,3,1.5,0.25,1.0,0.5,2.0,1.0,1.75,1.25,-0.5,,,,,");
        assert!(lines.next().is_none());
    }

    #[test]
    fn output_root_precedence_is_flag_env_config_default() {
        let cfg_with = |dir: Option<&str>| {
            let mut c = RunConfig::from_json(
                r#"{"schema":1,"model":"growth","algorithm":"lipf","n1":1,"n2":1,"horizon":1,"seed":1,"outputs":["estimates"]}"#,
            )
            .unwrap();
            c.output_dir = dir.map(String::from);
            c
        };
        let flag = Some(PathBuf::from("/from/flag"));
        let env = Some("/from/env".to_string());
        let cfg = cfg_with(Some("/from/config"));
        assert_eq!(resolve_output_root(flag.clone(), env.clone(), &cfg), PathBuf::from("/from/flag"));
        assert_eq!(resolve_output_root(None, env, &cfg), PathBuf::from("/from/env"));
        assert_eq!(resolve_output_root(None, None, &cfg), PathBuf::from("/from/config"));
        assert_eq!(resolve_output_root(None, None, &cfg_with(None)), PathBuf::from("out"));
    }

    #[test]
    fn sidecar_carries_identity_and_extras() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::from_json(
            r#"{"schema":1,"model":"growth","algorithm":"lipf","n1":2,"n2":3,"horizon":4,"seed":9,"outputs":["estimates"]}"#,
        )
        .unwrap();
        let mut extra = Map::new();
        extra.insert("replications".into(), json!(1));
        let path = write_sidecar(dir.path(), "estimates", &cfg, extra).unwrap();
        assert_eq!(path.file_name().unwrap(), "estimates.meta.json");
        let doc: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(doc["schema_version"], json!(SIDECAR_SCHEMA_VERSION));
        assert_eq!(doc["seed"], json!(9));
        assert_eq!(doc["config_sha256"], json!(cfg.content_hash()));
        assert_eq!(doc["model"], json!("growth"));
        assert_eq!(doc["replications"], json!(1));
        assert!(doc["created_unix"].as_u64().unwrap() > 1_700_000_000);
        assert!(doc["model_params"].is_object());
    }
}
