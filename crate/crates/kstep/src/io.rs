//! Dataset CSV files, their JSON sidecar manifests and hazard dumps.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use kstep_core::data::{Dataset, Observation, Scheme};
use kstep_core::icm::StepFunction;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sidecar written next to a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub scheme: Scheme,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub theta0: Vec<f64>,
    pub tn: f64,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Parses CSV with header `y,delta,z1,…,zd` (`delta` is 0 or 1).
pub fn parse_dataset<R: Read>(input: R, scheme: Scheme, origin: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| Error::data(origin, format!("unreadable header: {e}")))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 3 || names[0] != "y" || names[1] != "delta" {
        return Err(Error::data(origin, "header must be y,delta,z1,...,zd"));
    }
    for (j, name) in names[2..].iter().enumerate() {
        if *name != format!("z{}", j + 1) {
            return Err(Error::data(
                origin,
                format!("line 1: expected column z{}, found '{name}'", j + 1),
            ));
        }
    }
    let d = names.len() - 2;
    let mut observations = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::data(origin, format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |msg: String| Error::data(origin, format!("line {line}: {msg}"));
        if record.len() != d + 2 {
            return Err(bad(format!(
                "expected {} fields, found {}",
                d + 2,
                record.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            let field = &record[i];
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    bad(format!(
                        "column {}: '{field}' is not a finite number",
                        names[i]
                    ))
                })
        };
        let y = num(0)?;
        if y < 0.0 {
            return Err(bad(format!("y must be nonnegative, found {y}")));
        }
        let delta = match &record[1] {
            "1" => true,
            "0" => false,
            other => return Err(bad(format!("delta must be 0 or 1, found '{other}'"))),
        };
        let z = (2..d + 2).map(num).collect::<Result<Vec<f64>>>()?;
        observations.push(Observation { y, delta, z });
    }
    Dataset::new(scheme, observations).map_err(|e| Error::data(origin, e.to_string()))
}

/// Reads a dataset from a path, or from stdin when the path is `-`.
pub fn read_dataset(path: &Path, scheme: Scheme) -> Result<Dataset> {
    let origin = path.display().to_string();
    if path == Path::new("-") {
        parse_dataset(io::stdin().lock(), scheme, "<stdin>")
    } else {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        parse_dataset(file, scheme, &origin)
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        Error::data(
            path.display().to_string(),
            format!("at {}: {}", e.path(), e.inner()),
        )
    })
}

pub fn format_dataset<W: Write>(out: W, data: &Dataset) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["y".to_string(), "delta".to_string()];
    header.extend((1..=data.dim()).map(|j| format!("z{j}")));
    w.write_record(&header)?;
    for o in data.observations() {
        let mut row = vec![o.y.to_string(), if o.delta { "1" } else { "0" }.to_string()];
        row.extend(o.z.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()
}

/// Writes the dataset CSV and its `.json` sidecar.
pub fn write_dataset(path: &Path, data: &Dataset, manifest: &DatasetManifest) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    format_dataset(file, data).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    write_json(&side, manifest)
}

pub fn format_hazard<W: Write>(out: W, hazard: &StepFunction) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["knot", "value"])?;
    for (k, v) in hazard.knots().iter().zip(hazard.values()) {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    w.flush()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
