use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CellSummary, HarnessError, ResultRow, RowStatus};

pub const CSV_HEADER: [&str; 19] = [
    "scenario",
    "replication",
    "seed",
    "estimator",
    "status",
    "error",
    "n",
    "ell",
    "epsilon",
    "k_true",
    "k_hat",
    "k_spec",
    "relative_accuracy",
    "ami",
    "ami_revealed",
    "information_quantity",
    "normalized_entropy",
    "t_mix",
    "wall_time_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

/// 17 significant digits, enough to read back the same `f64`.
fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt<T>(value: Option<T>, f: impl Fn(T) -> String) -> String {
    value.map(f).unwrap_or_default()
}

fn record(row: &ResultRow) -> [String; 19] {
    [
        row.scenario.clone(),
        row.replication.to_string(),
        row.seed.to_string(),
        row.estimator.clone(),
        row.status.as_str().to_string(),
        row.error.clone().unwrap_or_default(),
        row.n.to_string(),
        row.ell.to_string(),
        float(row.epsilon),
        row.k_true.to_string(),
        opt(row.k_hat, |v| v.to_string()),
        opt(row.k_spec, |v| v.to_string()),
        opt(row.relative_accuracy, float),
        opt(row.ami, float),
        opt(row.ami_revealed, float),
        opt(row.information_quantity, float),
        opt(row.normalized_entropy, float),
        opt(row.t_mix, |v| v.to_string()),
        opt(row.wall_time_ms, float),
    ]
}

/// Fixed header, one line per row, missing values as empty fields.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(record(row))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<W: Write>(rows: &[ResultRow], mut out: W) -> Result<(), HarnessError> {
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn parse<T: FromStr>(field: &str, name: &str) -> Result<T, HarnessError> {
    field
        .parse()
        .map_err(|_| HarnessError::Parse(format!("bad {name} value {field:?}")))
}

fn parse_opt<T: FromStr>(field: &str, name: &str) -> Result<Option<T>, HarnessError> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse(field, name).map(Some)
    }
}

/// Reads a file written by [`write_csv`].
pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(HarnessError::Parse("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != CSV_HEADER.len() {
            return Err(HarnessError::Parse(format!("record with {} fields", rec.len())));
        }
        let f = |i: usize| &rec[i];
        let status = match f(4) {
            "ok" => RowStatus::Ok,
            "error" => RowStatus::Error,
            other => return Err(HarnessError::Parse(format!("bad status {other:?}"))),
        };
        rows.push(ResultRow {
            scenario: f(0).to_string(),
            replication: parse(f(1), "replication")?,
            seed: parse(f(2), "seed")?,
            estimator: f(3).to_string(),
            status,
            error: (!f(5).is_empty()).then(|| f(5).to_string()),
            n: parse(f(6), "n")?,
            ell: parse(f(7), "ell")?,
            epsilon: parse(f(8), "epsilon")?,
            k_true: parse(f(9), "k_true")?,
            k_hat: parse_opt(f(10), "k_hat")?,
            k_spec: parse_opt(f(11), "k_spec")?,
            relative_accuracy: parse_opt(f(12), "relative_accuracy")?,
            ami: parse_opt(f(13), "ami")?,
            ami_revealed: parse_opt(f(14), "ami_revealed")?,
            information_quantity: parse_opt(f(15), "information_quantity")?,
            normalized_entropy: parse_opt(f(16), "normalized_entropy")?,
            t_mix: parse_opt(f(17), "t_mix")?,
            wall_time_ms: parse_opt(f(18), "wall_time_ms")?,
        });
    }
    Ok(rows)
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<ResultRow>, HarnessError> {
    let mut rows = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            rows.push(serde_json::from_str(&line)?);
        }
    }
    Ok(rows)
}

/// One line per cell.
pub fn write_summary<W: Write>(cells: &[CellSummary], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "estimator", "count", "errors", "mean", "sd", "margin"])?;
    for c in cells {
        w.write_record([
            c.scenario.clone(),
            c.estimator.clone(),
            c.count.to_string(),
            c.errors.to_string(),
            opt(c.mean, float),
            opt(c.sd, float),
            opt(c.margin, float),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Scenario × estimator grid of `mean` and `sd` of `K̂`, scenarios and
/// estimators in order of first appearance.
pub fn write_pivot<W: Write>(cells: &[CellSummary], out: W) -> Result<(), HarnessError> {
    let mut scenarios: Vec<&str> = Vec::new();
    let mut estimators: Vec<&str> = Vec::new();
    for c in cells {
        if !scenarios.contains(&c.scenario.as_str()) {
            scenarios.push(&c.scenario);
        }
        if !estimators.contains(&c.estimator.as_str()) {
            estimators.push(&c.estimator);
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["scenario".to_string()];
    for e in &estimators {
        header.push(format!("{e}_mean"));
        header.push(format!("{e}_sd"));
    }
    w.write_record(&header)?;
    for s in &scenarios {
        let mut line = vec![s.to_string()];
        for e in &estimators {
            let cell = cells
                .iter()
                .find(|c| c.scenario == *s && c.estimator == *e);
            line.push(opt(cell.and_then(|c| c.mean), float));
            line.push(opt(cell.and_then(|c| c.sd), float));
        }
        w.write_record(&line)?;
    }
    w.flush()?;
    Ok(())
}
