//! CSV tables and the JSON run manifest.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::harness::{ExperimentOutcome, GroupResult, ReplicateReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const GIT_DESCRIBE: &str = env!("KSTEP_GIT_DESCRIBE");

fn is_coord(rest: &str) -> bool {
    rest.is_empty()
        || rest
            .strip_prefix('.')
            .is_some_and(|j| j.parse::<usize>().is_ok_and(|j| j >= 1))
}

fn is_indexed(name: &str, base: &str, coords: bool) -> bool {
    let Some(rest) = name.strip_prefix(base) else {
        return false;
    };
    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    digits > 0
        && if coords {
            is_coord(&rest[digits..])
        } else {
            digits == rest.len()
        }
}

/// Rejects table column names the harness does not produce.
pub fn check_columns(columns: &[String]) -> Result<()> {
    if columns.is_empty() {
        return Err(Error::config("`columns` must not be empty"));
    }
    for c in columns {
        let ok = matches!(
            c.as_str(),
            "n" | "successes" | "failures" | "scaled_gap" | "covered"
        ) || c.strip_prefix("theta_mle").is_some_and(is_coord)
            || is_indexed(c, "theta_", true)
            || is_indexed(c, "abs_gap_", false);
        if !ok {
            return Err(Error::config(format!(
                "unknown column `{c}` (expected n, successes, failures, theta_<k>, theta_mle, abs_gap_<k>, scaled_gap or covered)"
            )));
        }
    }
    Ok(())
}

fn coord_names(base: &str, d: usize) -> Vec<String> {
    if d == 1 {
        vec![base.to_string()]
    } else {
        (1..=d).map(|j| format!("{base}.{j}")).collect()
    }
}

/// `n, θ⁽⁰⁾ … θ⁽ᴷ⁾, θ̂_n, scaled gap`.
pub fn default_columns(d: usize, k: usize) -> Vec<String> {
    let mut cols = vec!["n".to_string()];
    for step in 0..=k {
        cols.extend(coord_names(&format!("theta_{step}"), d));
    }
    cols.extend(coord_names("theta_mle", d));
    cols.push("scaled_gap".to_string());
    cols
}

pub fn table_columns(cfg: &ExperimentConfig, k: usize) -> Vec<String> {
    cfg.columns
        .clone()
        .unwrap_or_else(|| default_columns(cfg.dim(), k))
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v}"))
}

fn cell(group: &GroupResult, column: &str) -> String {
    match column {
        "n" => group.n.to_string(),
        "successes" => group.successes.to_string(),
        "failures" => group.failures.to_string(),
        name => fmt(group.mean(name)),
    }
}

fn csv_err(path: &str, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

fn write_csv(rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row).map_err(|e| csv_err("<memory>", e))?;
    }
    w.into_inner()
        .map_err(|e| Error::io("<memory>", e.into_error()))
}

/// Mean of each column per sample size.
pub fn table_csv(outcome: &ExperimentOutcome) -> Result<Vec<u8>> {
    let k = outcome.groups.first().map_or(0, |g| g.k);
    let cols = table_columns(&outcome.config, k);
    let mut rows = vec![cols.clone()];
    for g in &outcome.groups {
        rows.push(cols.iter().map(|c| cell(g, c)).collect());
    }
    write_csv(&rows)
}

/// Mean, median and MAD of every metric per sample size.
pub fn summary_csv(outcome: &ExperimentOutcome) -> Result<Vec<u8>> {
    let mut rows = vec![vec!["n", "column", "mean", "median", "mad"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>()];
    for g in &outcome.groups {
        for s in &g.stats {
            rows.push(vec![
                g.n.to_string(),
                s.name.clone(),
                format!("{}", s.mean),
                format!("{}", s.median),
                format!("{}", s.mad),
            ]);
        }
    }
    write_csv(&rows)
}

fn replicate_row(r: &ReplicateReport, d: usize, k: usize) -> Vec<String> {
    let mut row = vec![
        r.n.to_string(),
        r.replicate.to_string(),
        r.seed.to_string(),
        r.failure
            .clone()
            .map_or_else(|| "ok".to_string(), |_| "failed".to_string()),
        r.termination
            .map_or_else(String::new, |t| match serde_json::to_value(t) {
                Ok(serde_json::Value::String(s)) => s,
                _ => String::new(),
            }),
    ];
    for step in 0..=k {
        for j in 0..d {
            row.push(fmt(r.iterates.get(step).map(|it| it[j])));
        }
    }
    for j in 0..d {
        row.push(fmt(r.mle.as_ref().map(|m| m.theta[j])));
    }
    row.push(fmt(r.scaled_gap));
    for j in 0..d {
        row.push(fmt(r.ci_lower.as_ref().map(|v| v[j])));
    }
    for j in 0..d {
        row.push(fmt(r.ci_upper.as_ref().map(|v| v[j])));
    }
    row.push(r.covered.map_or_else(String::new, |c| c.to_string()));
    row.push(fmt(r.accept_rate));
    row.push(r.icm_nonconverged.to_string());
    row.push(r.failure.clone().unwrap_or_default());
    row
}

/// One row per replicate, in replicate order. Timings are left to the
/// manifest so the file is reproducible byte for byte.
pub fn replicates_csv(outcome: &ExperimentOutcome) -> Result<Vec<u8>> {
    let d = outcome.config.dim();
    let k = outcome.groups.first().map_or(0, |g| g.k);
    let mut header: Vec<String> = ["n", "replicate", "seed", "status", "termination"]
        .into_iter()
        .map(String::from)
        .collect();
    for step in 0..=k {
        header.extend(coord_names(&format!("theta_{step}"), d));
    }
    header.extend(coord_names("theta_mle", d));
    header.push("scaled_gap".into());
    header.extend(coord_names("ci_lower", d));
    header.extend(coord_names("ci_upper", d));
    header.extend(["covered", "accept_rate", "icm_nonconverged", "failure"].map(String::from));
    let mut rows = vec![header];
    for g in &outcome.groups {
        rows.extend(g.reports.iter().map(|r| replicate_row(r, d, g.k)));
    }
    write_csv(&rows)
}

#[derive(Debug, Serialize)]
pub struct GroupManifest {
    pub n: usize,
    pub k: usize,
    pub steps: Vec<kstep_core::numdiff::StepSizes>,
    pub grid_cardinality: Option<usize>,
    pub successes: usize,
    pub failures: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub version: &'static str,
    pub git_describe: &'static str,
    pub config: &'a ExperimentConfig,
    pub calibrated_tn: f64,
    pub workers: usize,
    pub groups: Vec<GroupManifest>,
    pub wall_seconds: f64,
}

pub fn manifest(outcome: &ExperimentOutcome) -> RunManifest<'_> {
    RunManifest {
        version: VERSION,
        git_describe: GIT_DESCRIBE,
        config: &outcome.config,
        calibrated_tn: outcome.calibrated_tn,
        workers: outcome.workers,
        groups: outcome
            .groups
            .iter()
            .map(|g| GroupManifest {
                n: g.n,
                k: g.k,
                steps: (0..g.k.max(1)).map(|i| g.schedule.step(i)).collect(),
                grid_cardinality: g.grid_cardinality,
                successes: g.successes,
                failures: g.failures,
                wall_seconds: g.wall_seconds,
            })
            .collect(),
        wall_seconds: outcome.wall_seconds,
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

/// Writes the table, summary, per-replicate CSV and manifest under `dir`.
pub fn write_outputs(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let out = &outcome.config.output;
    write_file(dir, &out.table, &table_csv(outcome)?)?;
    write_file(dir, &out.summary, &summary_csv(outcome)?)?;
    write_file(dir, &out.replicates, &replicates_csv(outcome)?)?;
    let mut json =
        serde_json::to_vec_pretty(&manifest(outcome)).map_err(|e| Error::config(e.to_string()))?;
    json.push(b'\n');
    write_file(dir, &out.manifest, &json)
}
