//! Dataset ingestion: long and wide CSV panels, validation, and time
//! normalization.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use dynpca::smooth::{PanelDataset, Subject};
use nalgebra::DMatrix;

use crate::CliError;

/// Affine map applied to raw times on ingestion: `t_norm = (t - offset) / scale`.
/// Identity (`offset = 0`, `scale = 1`) when the raw times already lie in
/// `[0, 1]`, which keeps simulate -> ingest round trips exact.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct TimeMap {
    pub offset: f64,
    pub scale: f64,
}

impl TimeMap {
    pub fn identity() -> Self {
        Self {
            offset: 0.0,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvFormat {
    Auto,
    Long,
    Wide,
}

impl std::str::FromStr for CsvFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(CsvFormat::Auto),
            "long" => Ok(CsvFormat::Long),
            "wide" => Ok(CsvFormat::Wide),
            other => Err(format!("unknown format '{other}' (expected auto|long|wide)")),
        }
    }
}

fn parse_field(field: &str, line: u64, column: usize) -> Result<f64, CliError> {
    field.trim().parse::<f64>().map_err(|_| {
        CliError::Data(format!(
            "parse error at line {line}, column {}: '{field}' is not a number",
            column + 1
        ))
    })
}

/// Read a panel from CSV, auto-detecting the layout from the header when
/// `format` is `Auto`.
pub fn ingest(path: &Path, format: CsvFormat) -> Result<(PanelDataset, TimeMap), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("bad header: {e}")))?
        .iter()
        .map(|h| h.to_string())
        .collect();

    let looks_long = headers == ["subject", "time", "variable", "value"];
    let looks_wide = headers.len() >= 3
        && headers[0] == "subject"
        && headers[1] == "time"
        && headers[2..]
            .iter()
            .enumerate()
            .all(|(i, h)| h == &format!("var_{}", i + 1));
    let resolved = match format {
        CsvFormat::Long => {
            if !looks_long {
                return Err(CliError::Data(
                    "long format requires header subject,time,variable,value".into(),
                ));
            }
            CsvFormat::Long
        }
        CsvFormat::Wide => {
            if !looks_wide {
                return Err(CliError::Data(
                    "wide format requires header subject,time,var_1..var_p".into(),
                ));
            }
            CsvFormat::Wide
        }
        CsvFormat::Auto => {
            if looks_long {
                CsvFormat::Long
            } else if looks_wide {
                CsvFormat::Wide
            } else {
                return Err(CliError::Data(format!(
                    "unrecognized header '{}'; expected long (subject,time,variable,value) or wide (subject,time,var_1..var_p)",
                    headers.join(",")
                )));
            }
        }
    };

    // (subject -> time-keyed observations)
    let mut observations: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    let mut raw_times: BTreeMap<String, BTreeMap<u64, f64>> = BTreeMap::new();
    let mut p_seen = 0usize;

    match resolved {
        CsvFormat::Auto => unreachable!("resolved above"),
        CsvFormat::Long => {
            let mut seen: HashSet<(String, u64, usize)> = HashSet::new();
            let mut triples: Vec<(String, f64, usize, f64, u64)> = Vec::new();
            for record in reader.records() {
                let record =
                    record.map_err(|e| CliError::Data(format!("CSV read error: {e}")))?;
                let line = record
                    .position()
                    .map(|p| p.line())
                    .unwrap_or_default();
                if record.len() != 4 {
                    return Err(CliError::Data(format!(
                        "line {line}: expected 4 fields, found {}",
                        record.len()
                    )));
                }
                let subject = record[0].to_string();
                let time = parse_field(&record[1], line, 1)?;
                let variable = record[2].trim().parse::<usize>().map_err(|_| {
                    CliError::Data(format!(
                        "parse error at line {line}, column 3: '{}' is not a variable index",
                        &record[2]
                    ))
                })?;
                if variable == 0 {
                    return Err(CliError::Data(format!(
                        "line {line}: variable indices are 1-based"
                    )));
                }
                let value = parse_field(&record[3], line, 3)?;
                if !time.is_finite() || !value.is_finite() {
                    return Err(CliError::Data(format!(
                        "line {line}: non-finite time or value"
                    )));
                }
                if !seen.insert((subject.clone(), time.to_bits(), variable)) {
                    return Err(CliError::Data(format!(
                        "duplicate (subject, time, variable) triple at line {line}: ({subject}, {time}, {variable})"
                    )));
                }
                p_seen = p_seen.max(variable);
                triples.push((subject, time, variable, value, line));
            }
            if triples.is_empty() {
                return Err(CliError::Data("empty dataset".into()));
            }
            for (subject, time, variable, value, _line) in &triples {
                let subj = observations.entry(subject.clone()).or_default();
                let slot = subj
                    .entry(time.to_bits())
                    .or_insert_with(|| vec![f64::NAN; p_seen]);
                if slot.len() < p_seen {
                    slot.resize(p_seen, f64::NAN);
                }
                slot[*variable - 1] = *value;
                raw_times
                    .entry(subject.clone())
                    .or_default()
                    .insert(time.to_bits(), *time);
            }
            for (subject, times) in &observations {
                for (bits, values) in times {
                    if values.iter().any(|v| v.is_nan()) {
                        let t = f64::from_bits(*bits);
                        return Err(CliError::Data(format!(
                            "inconsistent dimensions: subject {subject} at time {t} is missing some of the {p_seen} variables"
                        )));
                    }
                }
            }
        }
        CsvFormat::Wide => {
            let p = headers.len() - 2;
            p_seen = p;
            let mut seen: HashSet<(String, u64)> = HashSet::new();
            for record in reader.records() {
                let record =
                    record.map_err(|e| CliError::Data(format!("CSV read error: {e}")))?;
                let line = record
                    .position()
                    .map(|p| p.line())
                    .unwrap_or_default();
                if record.len() != p + 2 {
                    return Err(CliError::Data(format!(
                        "inconsistent dimensions at line {line}: expected {} fields, found {}",
                        p + 2,
                        record.len()
                    )));
                }
                let subject = record[0].to_string();
                let time = parse_field(&record[1], line, 1)?;
                if !time.is_finite() {
                    return Err(CliError::Data(format!("line {line}: non-finite time")));
                }
                if !seen.insert((subject.clone(), time.to_bits())) {
                    return Err(CliError::Data(format!(
                        "duplicate (subject, time) row at line {line}: ({subject}, {time})"
                    )));
                }
                let mut values = Vec::with_capacity(p);
                for j in 0..p {
                    let v = parse_field(&record[2 + j], line, 2 + j)?;
                    if !v.is_finite() {
                        return Err(CliError::Data(format!(
                            "line {line}: non-finite value in var_{}",
                            j + 1
                        )));
                    }
                    values.push(v);
                }
                observations
                    .entry(subject.clone())
                    .or_default()
                    .insert(time.to_bits(), values);
                raw_times
                    .entry(subject)
                    .or_default()
                    .insert(time.to_bits(), time);
            }
            if observations.is_empty() {
                return Err(CliError::Data("empty dataset".into()));
            }
        }
    }

    // normalize times only when they leave [0, 1]
    let mut tmin = f64::INFINITY;
    let mut tmax = f64::NEG_INFINITY;
    for times in raw_times.values() {
        for &t in times.values() {
            tmin = tmin.min(t);
            tmax = tmax.max(t);
        }
    }
    let map = if tmin < 0.0 || tmax > 1.0 {
        if tmax == tmin {
            return Err(CliError::Data(
                "all time points are identical; cannot normalize".into(),
            ));
        }
        TimeMap {
            offset: tmin,
            scale: tmax - tmin,
        }
    } else {
        TimeMap::identity()
    };

    let mut subjects = Vec::with_capacity(observations.len());
    for (id, times) in observations {
        let raw = &raw_times[&id];
        let mut pairs: Vec<(f64, Vec<f64>)> = times
            .into_iter()
            .map(|(bits, values)| {
                let t = raw[&bits];
                ((t - map.offset) / map.scale, values)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let m = pairs.len();
        let values = DMatrix::from_fn(p_seen, m, |r, c| pairs[c].1[r]);
        subjects.push(Subject {
            id,
            times: pairs.iter().map(|(t, _)| *t).collect(),
            values,
        });
    }

    let data = PanelDataset::new(subjects, None)
        .map_err(|e| CliError::Data(format!("invalid panel: {e}")))?;
    Ok((data, map))
}
