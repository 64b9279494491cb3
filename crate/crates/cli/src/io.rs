//! Plain-text files written and read by the commands.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

/// Runs `f` on a buffered writer for `path` and flushes it.
pub fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    let mut s = String::new();
    open(path)?.read_to_string(&mut s).map_err(|e| CliError::io(path, e))?;
    Ok(s)
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| CliError::format(path, e.to_string()))?;
    write_with(path, |w| w.write_all(text.as_bytes()))
}

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    toml::from_str(&read_text(path)?).map_err(|e| CliError::format(path, e.message().to_string()))
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r)
}

fn record_err(path: &Path, line: Option<u64>, message: impl std::fmt::Display) -> CliError {
    match line {
        Some(l) => CliError::format(path, format!("line {l}: {message}")),
        None => CliError::format(path, message.to_string()),
    }
}

/// `group,0,1,...` header, then one row `a,Y_a0,Y_a1,...` per group.
pub fn write_aggregate<W: Write>(mut w: W, counts: &DMatrix<u64>) -> std::io::Result<()> {
    let r = counts.nrows();
    write!(w, "group")?;
    for b in 0..r {
        write!(w, ",{b}")?;
    }
    writeln!(w)?;
    for a in 0..r {
        write!(w, "{a}")?;
        for b in 0..r {
            write!(w, ",{}", counts[(a, b)])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_aggregate(path: &Path) -> Result<DMatrix<u64>> {
    parse_aggregate(open(path)?, path)
}

pub fn parse_aggregate<R: Read>(r: R, path: &Path) -> Result<DMatrix<u64>> {
    let mut rdr = csv_reader(r);
    let header = rdr.headers().map_err(|e| record_err(path, Some(1), e))?.clone();
    let r = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("group".to_string()).chain((0..r).map(|b| b.to_string())).collect();
    if r == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(record_err(path, Some(1), "header must be group,0,1,...,r-1"));
    }
    let mut counts = DMatrix::zeros(r, r);
    let mut seen = 0;
    for (a, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| record_err(path, None, e))?;
        let line = rec.position().map(|p| p.line());
        if a >= r {
            return Err(record_err(path, line, format!("more than {r} rows")));
        }
        if rec.get(0) != Some(a.to_string().as_str()) {
            return Err(record_err(path, line, format!("expected row for group {a}")));
        }
        for b in 0..r {
            let cell = &rec[b + 1];
            counts[(a, b)] = cell
                .parse()
                .map_err(|_| record_err(path, line, format!("bad count {cell:?}")))?;
        }
        seen += 1;
    }
    if seen != r {
        return Err(record_err(path, None, format!("{seen} rows for {r} groups")));
    }
    Ok(counts)
}

/// `group,n` header, then one row per group.
pub fn write_sizes<W: Write>(mut w: W, sizes: &[usize]) -> std::io::Result<()> {
    writeln!(w, "group,n")?;
    for (g, n) in sizes.iter().enumerate() {
        writeln!(w, "{g},{n}")?;
    }
    Ok(())
}

pub fn read_sizes(path: &Path) -> Result<Vec<usize>> {
    parse_sizes(open(path)?, path)
}

pub fn parse_sizes<R: Read>(r: R, path: &Path) -> Result<Vec<usize>> {
    let mut rdr = csv_reader(r);
    let header = rdr.headers().map_err(|e| record_err(path, Some(1), e))?;
    if header.iter().ne(["group", "n"]) {
        return Err(record_err(path, Some(1), "header must be group,n"));
    }
    let mut sizes = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| record_err(path, None, e))?;
        let line = rec.position().map(|p| p.line());
        let g: usize = rec[0].parse().map_err(|_| record_err(path, line, "bad group id"))?;
        if g != sizes.len() {
            return Err(record_err(path, line, format!("expected group {}", sizes.len())));
        }
        sizes.push(rec[1].parse().map_err(|_| record_err(path, line, "bad size"))?);
    }
    if sizes.is_empty() {
        return Err(record_err(path, None, "no groups"));
    }
    Ok(sizes)
}

/// Facts about a fit that later commands need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub q: usize,
    pub directed: bool,
    pub weighted: bool,
    pub sizes: Vec<usize>,
    pub edge_density: f64,
    pub seed: u64,
    pub chains: usize,
    pub samples: usize,
    pub selected_chain: usize,
    /// Median log-density of the selected chain minus the runner-up.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_chains: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub chain: usize,
    pub median_log_density: f64,
    pub acceptance_rate: f64,
    pub selected: bool,
}

pub fn write_selection<W: Write>(w: W, rows: &[SelectionRow]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
fn read_selection(path: &Path) -> Result<Vec<SelectionRow>> {
    csv_reader(open(path)?)
        .deserialize()
        .collect::<csv::Result<Vec<SelectionRow>>>()
        .map_err(|e| record_err(path, None, e))
}
