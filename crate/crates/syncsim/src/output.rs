//! `results.csv`, `energy.dat` and `missrate.dat`.

use std::fmt::Write as _;
use std::path::Path;

use syncsim_core::config::{Backend, Benchmark};
use syncsim_core::stats::{cell_means, CellMeans, RowError};
use syncsim_core::RunResult;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("no results to write")]
    Empty,
    #[error("matrix is missing the ({0}, {1}) cell")]
    IncompleteMatrix(Benchmark, Backend),
    #[error("csv header does not match the expected columns")]
    Header,
    #[error("csv line {line}: {source}")]
    Row {
        line: usize,
        #[source]
        source: RowError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn sorted(results: &[RunResult]) -> Vec<&RunResult> {
    let mut rows: Vec<&RunResult> = results.iter().collect();
    rows.sort_by_key(|r| r.sort_key());
    rows
}

/// Header plus one row per result, ordered by (benchmark, backend, seed).
pub fn csv_string(results: &[RunResult]) -> Result<String, OutputError> {
    if results.is_empty() {
        return Err(OutputError::Empty);
    }
    let mut out = RunResult::columns().join(",");
    out.push('\n');
    for r in sorted(results) {
        out.push_str(&r.fields().join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_csv(text: &str) -> Result<Vec<RunResult>, OutputError> {
    let mut lines = text.lines();
    if lines.next() != Some(RunResult::columns().join(",").as_str()) {
        return Err(OutputError::Header);
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let fields: Vec<&str> = l.split(',').collect();
            RunResult::parse_fields(&fields).map_err(|source| OutputError::Row {
                line: i + 2,
                source,
            })
        })
        .collect()
}

fn grouped(
    results: &[RunResult],
    title: &str,
    value: impl Fn(&CellMeans) -> f64,
) -> Result<String, OutputError> {
    let means = cell_means(results);
    let mut out = format!("# {title}: mean over seeds\n# benchmark");
    for b in Backend::ALL {
        let _ = write!(out, " {b}");
    }
    out.push('\n');
    for bench in Benchmark::ALL {
        out.push_str(bench.name());
        for b in Backend::ALL {
            let m = means
                .get(&(bench, b))
                .ok_or(OutputError::IncompleteMatrix(bench, b))?;
            let _ = write!(out, " {:.6}", value(m));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Grouped-bar table of mean energy: one row per benchmark, one column per
/// backend.
pub fn energy_dat(results: &[RunResult]) -> Result<String, OutputError> {
    grouped(results, "energy", |m| m.energy_total)
}

/// Same layout as [`energy_dat`] for the D1 miss rate.
pub fn missrate_dat(results: &[RunResult]) -> Result<String, OutputError> {
    grouped(results, "d1 miss rate", |m| m.d1_miss_rate)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), OutputError> {
    std::fs::write(path, contents).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn create_dir(path: &Path) -> Result<(), OutputError> {
    std::fs::create_dir_all(path).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn emit_csv(results: &[RunResult], path: &Path) -> Result<(), OutputError> {
    write_file(path, &csv_string(results)?)
}

/// Writes `energy.dat` and `missrate.dat` into `dir`.
pub fn emit_plot_data(results: &[RunResult], dir: &Path) -> Result<(), OutputError> {
    let energy = energy_dat(results)?;
    let miss = missrate_dat(results)?;
    write_file(&dir.join("energy.dat"), &energy)?;
    write_file(&dir.join("missrate.dat"), &miss)
}
