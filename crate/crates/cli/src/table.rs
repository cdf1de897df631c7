//! Sweep records as CSV.
//!
//! The file opens with `#` comment lines carrying the configuration hash and
//! the detector thresholds, followed by one header row and one row per field
//! point. Angles are stored in radians; floats use the shortest
//! representation that reads back to the same value, so identical runs give
//! identical files.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use bellnav::geometry::{BlochAngles, MeasurementSettings, SettingPair};
use bellnav::indicators::{operator_name, Thresholds};
use bellnav::Record;

use crate::CliError;

/// Metadata written into the comment header.
#[derive(Clone, Debug, PartialEq)]
pub struct TableHeader {
    pub config_hash: String,
    pub thresholds: Thresholds,
    /// Sites per unit cell; fixes the number of angle columns.
    pub u: usize,
}

impl TableHeader {
    fn comment_lines(&self) -> Vec<String> {
        let t = &self.thresholds;
        vec![
            "# bellnav sweep records".to_string(),
            format!("# config_hash = {}", self.config_hash),
            format!(
                "# thresholds: prominence = {}, gap_depth = {}, tau_lock = {}, tau_jump = {}",
                t.prominence, t.gap_depth, t.tau_lock, t.tau_jump
            ),
            format!("# unit_cell = {}", self.u),
            "# angles in radians".to_string(),
        ]
    }
}

pub fn column_names(u: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["h", "J", "lambda1", "lambda2", "gap", "dlambda_dh"].map(String::from).to_vec();
    for k in 0..2 * u {
        let name = operator_name(k).replace('\'', "p");
        cols.push(format!("{name}_theta"));
        cols.push(format!("{name}_phi"));
    }
    cols.push("converged".into());
    cols
}

fn row(rec: &Record, u: usize) -> Vec<String> {
    let mut out: Vec<String> =
        [rec.h, rec.j, rec.lambda1, rec.lambda2, rec.gap, rec.dlambda_dh].iter().map(|v| v.to_string()).collect();
    let angles = rec.operator_angles();
    for k in 0..2 * u {
        match angles.get(k) {
            Some(a) => {
                out.push(a.theta.to_string());
                out.push(a.phi.to_string());
            }
            None => out.extend(["NaN".to_string(), "NaN".to_string()]),
        }
    }
    out.push(rec.converged.to_string());
    out
}

fn write_rows<W: Write>(out: W, records: &[Record], u: usize, with_header: bool) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    if with_header {
        w.write_record(column_names(u))?;
    }
    for rec in records {
        w.write_record(row(rec, u))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records(path: &Path, header: &TableHeader, records: &[Record]) -> Result<(), CliError> {
    let mut file = File::create(path)?;
    for line in header.comment_lines() {
        writeln!(file, "{line}")?;
    }
    write_rows(file, records, header.u, true)
}

/// Appends rows, writing the header first when the file is new or empty.
pub fn append_records(path: &Path, header: &TableHeader, records: &[Record]) -> Result<(), CliError> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    if fresh {
        return write_records(path, header, records);
    }
    let existing = read_header(path)?;
    if existing.u != header.u {
        return Err(CliError::Config(format!(
            "{} holds a unit cell of {} sites, this run has {}",
            path.display(),
            existing.u,
            header.u
        )));
    }
    let file = OpenOptions::new().append(true).open(path)?;
    write_rows(file, records, header.u, false)
}

fn header_error(path: &Path, what: &str) -> CliError {
    CliError::Config(format!("{}: {what}", path.display()))
}

/// Reads the comment header of a records file.
pub fn read_header(path: &Path) -> Result<TableHeader, CliError> {
    let file = BufReader::new(File::open(path)?);
    let mut hash = None;
    let mut u = None;
    let mut thresholds = Thresholds::default();
    for line in file.lines() {
        let line = line?;
        let Some(body) = line.strip_prefix('#') else { break };
        let body = body.trim();
        if let Some(v) = body.strip_prefix("config_hash =") {
            hash = Some(v.trim().to_string());
        } else if let Some(v) = body.strip_prefix("unit_cell =") {
            u = Some(v.trim().parse().map_err(|_| header_error(path, "bad unit_cell line"))?);
        } else if let Some(v) = body.strip_prefix("thresholds:") {
            for item in v.split(',') {
                let (k, val) = item.split_once('=').ok_or_else(|| header_error(path, "bad thresholds line"))?;
                let val: f64 = val.trim().parse().map_err(|_| header_error(path, "bad threshold value"))?;
                match k.trim() {
                    "prominence" => thresholds.prominence = val,
                    "gap_depth" => thresholds.gap_depth = val,
                    "tau_lock" => thresholds.tau_lock = val,
                    "tau_jump" => thresholds.tau_jump = val,
                    other => return Err(header_error(path, &format!("unknown threshold {other:?}"))),
                }
            }
        }
    }
    Ok(TableHeader {
        config_hash: hash.ok_or_else(|| header_error(path, "missing config_hash line"))?,
        thresholds,
        u: u.ok_or_else(|| header_error(path, "missing unit_cell line"))?,
    })
}

fn parse_field(path: &Path, line: usize, col: &str, s: &str) -> Result<f64, CliError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| header_error(path, &format!("row {line}: column {col} holds {s:?}")))
}

/// Reads records back. Settings are rebuilt from the stored angles; reduced
/// angles and the mode label are not part of the file and come back empty.
pub fn read_records(path: &Path) -> Result<(TableHeader, Vec<Record>), CliError> {
    let header = read_header(path)?;
    let cols = column_names(header.u);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_path(path)?;
    let found: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if found != cols {
        return Err(header_error(path, "unexpected column layout"));
    }
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let num = |k: usize| parse_field(path, i + 1, &cols[k], &row[k]);
        let mut angles = Vec::with_capacity(2 * header.u);
        for k in 0..2 * header.u {
            angles.push((num(6 + 2 * k)?, num(7 + 2 * k)?));
        }
        let settings = if angles.iter().all(|(t, p)| t.is_finite() && p.is_finite()) {
            let pairs = angles
                .chunks(2)
                .map(|c| SettingPair {
                    a: BlochAngles::wrapped(c[0].0, c[0].1).vector(),
                    a_prime: BlochAngles::wrapped(c[1].0, c[1].1).vector(),
                })
                .collect();
            Some(MeasurementSettings::new(pairs)?)
        } else {
            None
        };
        let converged = match row[cols.len() - 1].trim() {
            "true" => true,
            "false" => false,
            other => return Err(header_error(path, &format!("row {}: converged holds {other:?}", i + 1))),
        };
        records.push(Record {
            h: num(0)?,
            j: num(1)?,
            lambda1: num(2)?,
            lambda2: num(3)?,
            gap: num(4)?,
            dlambda_dh: num(5)?,
            reduced: Vec::new(),
            error: if settings.is_none() { Some("failed point".into()) } else { None },
            settings,
            mode: String::new(),
            converged,
        });
    }
    Ok((header, records))
}
