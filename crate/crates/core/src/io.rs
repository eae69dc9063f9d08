//! Artifact files: JSON documents with a provenance envelope, JSON-lines
//! sample files, and tab-separated density and predictive grids.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perfect::IidSample;
use crate::stats::DensityGrid;
use crate::tmcmc::{read_chain_csv, write_chain_csv_with_comments};

/// Provenance stamped on every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub kind: String,
    #[serde(flatten)]
    pub provenance: Provenance,
    pub body: T,
}

fn data_error(path: &Path, line: usize, message: impl ToString) -> Error {
    Error::Data { path: path.display().to_string(), line, message: message.to_string() }
}

pub fn write_artifact<T: Serialize>(path: &Path, kind: &str, provenance: &Provenance, body: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Out<'a, T> {
        kind: &'a str,
        #[serde(flatten)]
        provenance: &'a Provenance,
        body: &'a T,
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &Out { kind, provenance, body })?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_artifact<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<Artifact<T>> {
    let a: Artifact<T> = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if a.kind != kind {
        return Err(data_error(path, 1, format!("expected a `{kind}` artifact, found `{}`", a.kind)));
    }
    Ok(a)
}

/// First line of a sample file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleHeader {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub labels: Vec<String>,
}

/// Header line, then one record per draw in draw-index order.
pub fn write_samples(path: &Path, header: &SampleHeader, samples: &[IidSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, header)?;
    writeln!(w)?;
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<(SampleHeader, Vec<IidSample>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut header = None;
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            header = Some(serde_json::from_str(&line).map_err(|e| data_error(path, i + 1, e))?);
        } else {
            samples.push(serde_json::from_str(&line).map_err(|e| data_error(path, i + 1, e))?);
        }
    }
    let header = header.ok_or_else(|| data_error(path, 1, "missing sample header"))?;
    Ok((header, samples))
}

/// Pilot chain CSV with a provenance comment line.
pub fn write_chain(path: &Path, provenance: &Provenance, labels: &[String], samples: &[Vec<f64>]) -> Result<()> {
    let comment = format!("config_hash={} seed={}", provenance.config_hash, provenance.seed);
    write_chain_csv_with_comments(path, &[comment], labels, samples)
}

pub fn read_chain(path: &Path) -> Result<(Option<Provenance>, Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let provenance = text.lines().find_map(|l| {
        let rest = l.strip_prefix("# ")?;
        let mut hash = None;
        let mut seed = None;
        for field in rest.split_whitespace() {
            match field.split_once('=') {
                Some(("config_hash", v)) => hash = Some(v.to_string()),
                Some(("seed", v)) => seed = v.parse().ok(),
                _ => {}
            }
        }
        Some(Provenance { config_hash: hash?, seed: seed? })
    });
    let (labels, samples) = read_chain_csv(path)?;
    Ok((provenance, labels, samples))
}

/// Columns `x` and `density`.
pub fn write_density_grid(path: &Path, grid: &DensityGrid) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# bandwidth\t{:?}", grid.bandwidth)?;
    writeln!(w, "x\tdensity")?;
    for (x, d) in grid.x.iter().zip(&grid.density) {
        writeln!(w, "{x:?}\t{d:?}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_density_grid(path: &Path) -> Result<DensityGrid> {
    let text = std::fs::read_to_string(path)?;
    let mut bandwidth = None;
    let (mut x, mut density) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix("# bandwidth\t") {
            bandwidth = Some(rest.trim().parse::<f64>().map_err(|e| data_error(path, i + 1, e))?);
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') || line.starts_with("x\t") {
            continue;
        }
        let mut cols = line.split('\t').map(|c| c.trim().parse::<f64>());
        match (cols.next(), cols.next(), cols.next()) {
            (Some(Ok(a)), Some(Ok(b)), None) => {
                x.push(a);
                density.push(b);
            }
            _ => return Err(data_error(path, i + 1, "expected two numeric columns")),
        }
    }
    let bandwidth = bandwidth.ok_or_else(|| data_error(path, 1, "missing bandwidth line"))?;
    Ok(DensityGrid { bandwidth, x, density })
}

/// Predictive curves on a grid: the pointwise mean and one curve per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveGrid {
    pub y: Vec<f64>,
    pub mean: Vec<f64>,
    pub per_draw: Vec<Vec<f64>>,
}

/// Writes `<stem>.tsv` with columns `y` and `mean`, and `<stem>_draws.tsv`
/// with one row per draw.
pub fn write_predictive(dir: &Path, stem: &str, grid: &PredictiveGrid) -> Result<()> {
    let mut w = BufWriter::new(File::create(dir.join(format!("{stem}.tsv")))?);
    writeln!(w, "y\tmean")?;
    for (y, m) in grid.y.iter().zip(&grid.mean) {
        writeln!(w, "{y:?}\t{m:?}")?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join(format!("{stem}_draws.tsv")))?);
    let head: Vec<String> = grid.y.iter().map(|y| format!("{y:?}")).collect();
    writeln!(w, "{}", head.join("\t"))?;
    for row in &grid.per_draw {
        let cols: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", cols.join("\t"))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictive(dir: &Path, stem: &str) -> Result<PredictiveGrid> {
    let parse_rows = |path: &Path| -> Result<(String, Vec<Vec<f64>>)> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        let head = lines.next().map(|(_, l)| l.to_string()).unwrap_or_default();
        let rows = lines
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.split('\t').map(|c| c.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|e| data_error(path, i + 1, e))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((head, rows))
    };
    let (_, rows) = parse_rows(&dir.join(format!("{stem}.tsv")))?;
    let y = rows.iter().map(|r| r[0]).collect();
    let mean = rows.iter().map(|r| r[1]).collect();
    let (_, per_draw) = parse_rows(&dir.join(format!("{stem}_draws.tsv")))?;
    Ok(PredictiveGrid { y, mean, per_draw })
}
