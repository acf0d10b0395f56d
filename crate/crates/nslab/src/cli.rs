//! Command-line orchestration: flat INI-style run configs, the
//! forward / invert / experiment commands, and bit-exact report emission.
//!
//! Every output file starts with a header comment carrying the artifact
//! version and a hash of the config snapshot, and every JSON report embeds
//! the snapshot itself, so any run is reproducible from its own outputs.

use crate::experiments::{
    run_claim1, run_remark1, run_roundtrip, run_smoothness_probe, run_transparent_sweep,
    ExperimentError, ExperimentOutput,
};
use crate::forward::{born_phase_shift, phase_shifts, PhaseShiftSet};
use crate::ns::{
    assemble_kernel_field, fit_coefficients, reconstruct_potential, CoefficientSet, NsError,
};
use crate::potential::{catalog, Potential, Tail};
use serde_json::json;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unknown experiment: {0}")]
    UnknownExperiment(String),
    #[error("numerical failure in {operation}: {message}")]
    Numerical { operation: String, message: String },
    #[error("fit diverged: {0}")]
    FitDiverged(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::UnknownExperiment(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::FitDiverged(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

fn numerical(operation: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Numerical {
        operation: operation.to_string(),
        message: err.to_string(),
    }
}

/// Flat `key = value` run configuration. Blank lines and `#` comments are
/// ignored; unknown keys are rejected per command so a typo cannot
/// silently fall back to a default.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pairs: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut pairs = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "line {}: expected 'key = value', got {raw:?}",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", lineno + 1)));
            }
            if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("duplicate key {key:?}")));
            }
        }
        Ok(Self { pairs })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), CliError> {
        for key in self.pairs.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown key {key:?}; allowed: {}",
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.pairs.get(key).map(String::as_str)
    }

    fn get_f64(&self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| CliError::Config(format!("key {key:?}: {e}"))),
        }
    }

    fn get_u32(&self, key: &str, default: u32) -> Result<u32, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| CliError::Config(format!("key {key:?}: {e}"))),
        }
    }

    fn get_f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|e| CliError::Config(format!("key {key:?}: {e}")))
                })
                .collect(),
        }
    }

    /// Canonical snapshot: sorted `key = value` lines.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// FNV-1a hash of the canonical snapshot.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.snapshot().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    fn snapshot_json(&self) -> serde_json::Value {
        json!(self.pairs)
    }
}

fn header(config: &RunConfig) -> String {
    format!("# nslab {ARTIFACT_VERSION} config_hash={:016x}\n", config.hash())
}

fn write_file(out_dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

/// Resolve a potential spec: `prefix.kind` names a catalog entry or `file`
/// (then `prefix.file` points at a two-column CSV); `prefix.params` holds
/// comma-separated `name=value` pairs.
fn potential_from_config(config: &RunConfig, prefix: &str) -> Result<Potential, CliError> {
    let kind = config
        .get(&format!("{prefix}.kind"))
        .ok_or_else(|| CliError::Config(format!("missing key {prefix}.kind")))?;
    if kind == "file" {
        let file = config
            .get(&format!("{prefix}.file"))
            .ok_or_else(|| CliError::Config(format!("{prefix}.kind = file needs {prefix}.file")))?;
        return Potential::from_csv(Path::new(file), Tail::Zero)
            .map_err(|e| CliError::Config(e.to_string()));
    }
    let mut params = BTreeMap::new();
    if let Some(spec) = config.get(&format!("{prefix}.params")) {
        for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let Some((name, value)) = part.split_once('=') else {
                return Err(CliError::Config(format!(
                    "{prefix}.params: expected name=value, got {part:?}"
                )));
            };
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|e| CliError::Config(format!("{prefix}.params {name}: {e}")))?;
            params.insert(name.trim().to_string(), value);
        }
    }
    catalog(kind, &params).map_err(|e| CliError::Config(e.to_string()))
}

fn coefficients_from_config(config: &RunConfig, key: &str, default: &[f64]) -> Result<CoefficientSet, CliError> {
    let c = config.get_f64_list(key, default)?;
    CoefficientSet::new(c).map_err(|e| CliError::Config(e.to_string()))
}

fn radius_grid(step: f64, r_max: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0 && r_max > step) {
        return Err(CliError::Config(format!(
            "need 0 < r_grid.step < r_grid.max, got step {step}, max {r_max}"
        )));
    }
    let n = (r_max / step).round() as usize;
    Ok((1..=n).map(|i| i as f64 * step).collect())
}

/// `nslab forward`: phase shifts of a configured potential, with a Born
/// approximation column as a cross-check.
pub fn cmd_forward(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    config.check_keys(&[
        "potential.kind",
        "potential.params",
        "potential.file",
        "L",
        "match_radius",
        "r_max",
    ])?;
    let mut q = potential_from_config(config, "potential")?;
    q.truncation_radius = config.get_f64("r_max", q.truncation_radius)?;
    let l_max = config.get_u32("L", 10)?;
    let match_radius = config.get_f64("match_radius", 15.0)?;
    let shifts = phase_shifts(&q, l_max, match_radius)
        .map_err(|e| numerical("forward.phase_shifts", e))?;
    let mut csv = header(config);
    csv.push_str("l,delta,jost_magnitude,delta_born\n");
    for l in 0..=l_max {
        let born = born_phase_shift(&q, l).map_err(|e| numerical("forward.born_phase_shift", e))?;
        let _ = writeln!(
            csv,
            "{},{:.16e},{:.16e},{:.16e}",
            l,
            shifts.deltas[l as usize],
            shifts.jost_magnitudes[l as usize],
            born
        );
    }
    write_file(out_dir, "shifts.csv", &csv)?;
    let report = json!({
        "command": "forward",
        "version": ARTIFACT_VERSION,
        "config_hash": format!("{:016x}", config.hash()),
        "config": config.snapshot_json(),
        "L": l_max,
        "match_radius": match_radius,
        "deltas": shifts.deltas,
        "jost_magnitudes": shifts.jost_magnitudes,
        "verdict": "ok",
        "artifacts": ["shifts.csv"],
    });
    write_file(out_dir, "report.json", &serde_json::to_string_pretty(&report).unwrap())?;
    Ok(())
}

/// `nslab invert`: either fit coefficients to target shifts (mode = fit)
/// or take them directly from a CSV (mode = direct), then reconstruct q1.
/// A solvability breakdown is a finding: exit 0 with verdict "breakdown".
pub fn cmd_invert(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    config.check_keys(&[
        "mode",
        "target.file",
        "target.potential",
        "target.params",
        "L",
        "c.file",
        "match_radius",
        "r_grid.max",
        "r_grid.step",
        "n_nodes.policy",
    ])?;
    if let Some(policy) = config.get("n_nodes.policy") {
        if policy != "default" {
            return Err(CliError::Config(format!(
                "unsupported n_nodes.policy {policy:?}; only \"default\" is available"
            )));
        }
    }
    let mode = config.get("mode").unwrap_or("fit");
    let l_max = config.get_u32("L", 4)?;
    let match_radius = config.get_f64("match_radius", 15.0)?;
    let step = config.get_f64("r_grid.step", 0.05)?;
    let r_max = config.get_f64("r_grid.max", 40.0)?;
    let grid = radius_grid(step, r_max)?;

    let (c, fit_residual) = match mode {
        "direct" => {
            let file = config
                .get("c.file")
                .ok_or_else(|| CliError::Config("mode = direct needs c.file".into()))?;
            let c = CoefficientSet::from_csv(Path::new(file))
                .map_err(|e| CliError::Config(e.to_string()))?;
            (c, None)
        }
        "fit" => {
            let target = if let Some(file) = config.get("target.file") {
                PhaseShiftSet::from_csv(Path::new(file))
                    .map_err(|e| CliError::Config(e.to_string()))?
            } else if config.get("target.potential").is_some() {
                // Reuse the potential.* plumbing under the target.* prefix.
                let sub = RunConfig {
                    pairs: config
                        .pairs
                        .iter()
                        .filter(|(k, _)| k.starts_with("target."))
                        .map(|(k, v)| (k.replace("target.potential", "target.kind"), v.clone()))
                        .collect(),
                };
                let q = potential_from_config(&sub, "target")?;
                phase_shifts(&q, l_max, match_radius)
                    .map_err(|e| numerical("forward.phase_shifts", e))?
            } else {
                return Err(CliError::Config(
                    "mode = fit needs target.file or target.potential".into(),
                ));
            };
            let initial = CoefficientSet::zeros(l_max);
            let fit = fit_coefficients(&target, l_max, &initial, match_radius).map_err(|e| {
                match e {
                    NsError::FitStepFailed { .. } => CliError::FitDiverged(e.to_string()),
                    other => numerical("ns.fit_coefficients", other),
                }
            })?;
            (fit.coefficients, Some(fit.residual_norm))
        }
        other => return Err(CliError::Config(format!("unknown mode {other:?}"))),
    };

    let mut c_csv = header(config);
    c_csv.push_str(&c.to_csv());
    write_file(out_dir, "coefficients.csv", &c_csv)?;

    let field = assemble_kernel_field(&c, &grid).map_err(|e| numerical("ns.assemble_kernel_field", e))?;
    let mut report = json!({
        "command": "invert",
        "version": ARTIFACT_VERSION,
        "config_hash": format!("{:016x}", config.hash()),
        "config": config.snapshot_json(),
        "mode": mode,
        "L": c.l_max(),
        "sum_abs_c": c.sum_abs(),
        "fit_residual": fit_residual,
        "artifacts": ["coefficients.csv"],
    });
    if let Some(b) = field.report.first_breakdown_radius {
        report["verdict"] = json!("breakdown");
        report["breakdown_radius"] = json!(b);
    } else {
        report["verdict"] = json!("ok");
    }
    match reconstruct_potential(&c, &grid) {
        Ok(rec) => {
            let mut rec_csv = header(config);
            rec_csv.push_str(&rec.to_csv());
            write_file(out_dir, "reconstruction.csv", &rec_csv)?;
            report["moment_q1"] = json!(rec.moment_q1);
            report["partial"] = json!(rec.partial);
            report["solvability"] = serde_json::to_value(&rec.solvability).unwrap();
            report["artifacts"]
                .as_array_mut()
                .unwrap()
                .push(json!("reconstruction.csv"));
        }
        Err(NsError::ReconstructionImpossible(reason)) => {
            // Breakdown too early for any q1 samples: still a finding.
            report["verdict"] = json!("breakdown");
            report["detail"] = json!(reason);
            report["solvability"] = serde_json::to_value(&field.report).unwrap();
        }
        Err(e) => return Err(numerical("ns.reconstruct_potential", e)),
    }
    write_file(out_dir, "report.json", &serde_json::to_string_pretty(&report).unwrap())?;
    Ok(())
}

/// `nslab experiment <name>`: dispatch to the experiments module and write
/// its report plus curve CSVs.
pub fn cmd_experiment(name: &str, config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let output = match name {
        "remark1" => {
            config.check_keys(&["c", "r_max"])?;
            let c = coefficients_from_config(config, "c", &[0.3])?;
            let r_max = config.get_f64("r_max", 60.0)?;
            run_remark1(&c, r_max)
        }
        "claim1" => {
            config.check_keys(&["target.kind", "target.params", "c", "r_max"])?;
            let target = if config.get("target.kind").is_some() {
                potential_from_config(config, "target")?
            } else {
                catalog("exponential", &BTreeMap::new())
                    .map_err(|e| CliError::Config(e.to_string()))?
            };
            let c = coefficients_from_config(config, "c", &[0.3])?;
            let r_max = config.get_f64("r_max", 40.0)?;
            let grid = radius_grid(0.05, r_max)?;
            let rec = reconstruct_potential(&c, &grid)
                .map_err(|e| numerical("ns.reconstruct_potential", e))?;
            run_claim1(&target, &[rec])
        }
        "transparent" => {
            config.check_keys(&["c0_values"])?;
            let c0 = config.get_f64_list("c0_values", &[0.0, -0.5, -1.0])?;
            run_transparent_sweep(&c0)
        }
        "roundtrip" => {
            config.check_keys(&["c"])?;
            let c = coefficients_from_config(config, "c", &[0.2])?;
            run_roundtrip(&c)
        }
        "smoothness" => {
            config.check_keys(&["target.kind", "target.params", "L"])?;
            let target = if config.get("target.kind").is_some() {
                potential_from_config(config, "target")?
            } else {
                catalog("truncated-exponential", &BTreeMap::new())
                    .map_err(|e| CliError::Config(e.to_string()))?
            };
            let l_max = config.get_u32("L", 6)?;
            run_smoothness_probe(&target, l_max)
        }
        other => return Err(CliError::UnknownExperiment(other.to_string())),
    };
    let ExperimentOutput { mut report, curves } = output.map_err(|e| match e {
        ExperimentError::InapplicableTarget(msg) => CliError::Config(msg),
        other => numerical(&format!("experiments.run_{name}"), other),
    })?;
    report
        .inputs
        .insert("config_hash".into(), format!("{:016x}", config.hash()));
    report
        .inputs
        .insert("version".into(), ARTIFACT_VERSION.to_string());
    for curve in &curves {
        let mut csv = header(config);
        csv.push_str(&curve.csv);
        write_file(out_dir, &curve.file_name, &csv)?;
    }
    write_file(out_dir, "report.json", &report.to_json())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_config() {
        let cfg = RunConfig::parse("# comment\n L = 4 \n\nmatch_radius = 12.5\n").unwrap();
        assert_eq!(cfg.get("L"), Some("4"));
        assert_eq!(cfg.get_f64("match_radius", 0.0).unwrap(), 12.5);
    }

    #[test]
    fn rejects_malformed_and_duplicate_lines() {
        assert!(RunConfig::parse("no equals sign").is_err());
        assert!(RunConfig::parse("a = 1\na = 2\n").is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        let cfg = RunConfig::parse("potential.kind = zero\ntypo_key = 1\n").unwrap();
        let err = cmd_forward(&cfg, Path::new("/nonexistent")).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn hash_is_order_independent() {
        let a = RunConfig::parse("a = 1\nb = 2\n").unwrap();
        let b = RunConfig::parse("b = 2\na = 1\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), RunConfig::parse("a = 1\nb = 3\n").unwrap().hash());
    }

    #[test]
    fn unknown_experiment_is_exit_2() {
        let cfg = RunConfig::default();
        let err = cmd_experiment("frobnicate", &cfg, Path::new("/nonexistent")).unwrap_err();
        assert!(matches!(err, CliError::UnknownExperiment(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn forward_zero_potential_writes_zero_shifts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::parse("potential.kind = zero\nL = 3\n").unwrap();
        cmd_forward(&cfg, dir.path()).unwrap();
        let shifts = PhaseShiftSet::from_csv(&dir.path().join("shifts.csv")).unwrap();
        assert_eq!(shifts.deltas.len(), 4);
        assert!(shifts.deltas.iter().all(|d| d.abs() < 1e-10));
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
                .unwrap();
        assert_eq!(report["verdict"], "ok");
    }

    #[test]
    fn invert_direct_breakdown_is_exit_zero_with_verdict() {
        let dir = tempfile::tempdir().unwrap();
        let c_path = dir.path().join("c.csv");
        std::fs::write(&c_path, CoefficientSet::rank_one(-1.0).to_csv()).unwrap();
        let cfg = RunConfig::parse(&format!(
            "mode = direct\nc.file = {}\nr_grid.max = 10\n",
            c_path.display()
        ))
        .unwrap();
        cmd_invert(&cfg, dir.path()).unwrap();
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
                .unwrap();
        assert_eq!(report["verdict"], "breakdown");
        let b = report["breakdown_radius"].as_f64().unwrap();
        assert!((b - 1.1535934731831021).abs() < 1e-3);
    }

    #[test]
    fn reruns_reproduce_numeric_columns() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg = RunConfig::parse("potential.kind = exponential\npotential.params = depth=0.5\nL = 2\n").unwrap();
        cmd_forward(&cfg, dir_a.path()).unwrap();
        cmd_forward(&cfg, dir_b.path()).unwrap();
        let a = std::fs::read_to_string(dir_a.path().join("shifts.csv")).unwrap();
        let b = std::fs::read_to_string(dir_b.path().join("shifts.csv")).unwrap();
        assert_eq!(a, b);
    }
}
