use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use nalgebra::DMatrix;

use super::MetricsRecord;
use crate::clustering::cluster_means;
use crate::error::{Error, Result};
use crate::solver::Trace;

pub const MESSAGES_FILE: &str = "messages.csv";
pub const OPINIONS_FILE: &str = "opinions.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const CONFIG_FILE: &str = "config.toml";

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn indexed_header(first: &[&str], prefix: &str, d: usize) -> Vec<String> {
    first
        .iter()
        .map(|s| s.to_string())
        .chain((0..d).map(|c| format!("{prefix}{c}")))
        .collect()
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("not a number: {field:?}"),
    })
}

/// Writes messages, opinions, realized costs, cluster summaries and
/// initial/final snapshots of a trace into `dir`.
pub fn write_trace(dir: &Path, trace: &Trace) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let d = trace.initial_opinions.ncols();

    let mut w = writer(&dir.join(MESSAGES_FILE))?;
    w.write_record(indexed_header(&["t", "player"], "u_", d))?;
    for (t, m) in trace.messages.iter().enumerate() {
        for (player, u) in [("adversary", &m.adversary), ("defender", &m.defender)] {
            let mut row = vec![t.to_string(), player.to_string()];
            row.extend(u.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(dir.join(MESSAGES_FILE), e))?;

    let mut w = writer(&dir.join(OPINIONS_FILE))?;
    w.write_record(indexed_header(&["t", "id"], "x_", d))?;
    for (t, x) in trace.opinions.iter().enumerate() {
        for i in 0..x.nrows() {
            let mut row = vec![t.to_string(), i.to_string()];
            row.extend(x.row(i).iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(dir.join(OPINIONS_FILE), e))?;

    let mut w = writer(&dir.join(SUMMARY_FILE))?;
    w.write_record(["J_a", "J_d", "T", "H", "level"])?;
    w.write_record([
        trace.cost_a.to_string(),
        trace.cost_d.to_string(),
        trace.steps().to_string(),
        trace.horizon.to_string(),
        trace.max_level.to_string(),
    ])?;
    w.flush().map_err(|e| Error::io(dir.join(SUMMARY_FILE), e))?;

    let mut w = writer(&dir.join(CLUSTERS_FILE))?;
    w.write_record(indexed_header(&["t", "cluster_id", "size"], "mean_", d))?;
    for (t, a) in trace.assignments.iter().enumerate() {
        let means = cluster_means(a, &trace.opinions[t]);
        for (c, size) in a.sizes().into_iter().enumerate() {
            let mut row = vec![t.to_string(), c.to_string(), size.to_string()];
            row.extend(means.row(c).iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(dir.join(CLUSTERS_FILE), e))?;

    let final_pop = trace.final_population();
    for (name, pop) in [
        ("initial.csv", final_pop.with_opinions(trace.initial_opinions.clone())?),
        ("final.csv", final_pop),
    ] {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        pop.write_snapshot(BufWriter::new(file))?;
    }
    Ok(())
}

/// Opinion matrices per macro-step from an opinions file.
pub fn read_opinions(path: &Path) -> Result<Vec<DMatrix<f64>>> {
    let mut r = reader(path)?;
    let d = r.headers()?.len().saturating_sub(2);
    if d == 0 {
        return Err(Error::InvalidInput(format!("{}: no opinion columns", path.display())));
    }
    let mut steps: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let t = parse_f64(&rec[0], line)? as usize;
        if t == steps.len() {
            steps.push(Vec::new());
        } else if t + 1 != steps.len() {
            return Err(Error::Parse {
                line,
                message: format!("macro-step {t} out of order"),
            });
        }
        for c in 0..d {
            steps[t].push(parse_f64(&rec[2 + c], line)?);
        }
    }
    let out: Vec<DMatrix<f64>> = steps
        .into_iter()
        .map(|v| DMatrix::from_row_slice(v.len() / d, d, &v))
        .collect();
    if out.is_empty() || out.iter().any(|x| x.nrows() != out[0].nrows()) {
        return Err(Error::InvalidInput(format!(
            "{}: missing or ragged macro-steps",
            path.display()
        )));
    }
    Ok(out)
}

/// Realized costs `(J_a, J_d)` from a summary file.
pub fn read_summary(path: &Path) -> Result<(f64, f64)> {
    let mut r = reader(path)?;
    let rec = r
        .records()
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("{}: empty summary", path.display())))??;
    Ok((parse_f64(&rec[0], 2)?, parse_f64(&rec[1], 2)?))
}

pub fn write_metrics(path: &Path, rows: &[MetricsRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(MetricsRecord::HEADER)?;
    for r in rows {
        w.write_record(r.row())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Metrics rows from a metrics or sweep file. Error messages are not stored
/// there; failed rows come back with a generic message.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = reader(path)?;
    if r.headers()?.iter().ne(MetricsRecord::HEADER) {
        return Err(Error::InvalidInput(format!(
            "{}: unexpected metrics header",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let num = |i: usize| parse_f64(&rec[i], line);
        rows.push(MetricsRecord {
            sigma: num(0)?,
            seed: rec[1].parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad seed {:?}", &rec[1]),
            })?,
            mean_dist_defender_goal: num(2)?,
            mean_dist_adversary_goal: num(3)?,
            final_bimodality: num(4)?,
            j_a: num(5)?,
            j_d: num(6)?,
            error: (&rec[7] != "0").then(|| "scenario failed".to_string()),
        });
    }
    Ok(rows)
}

/// One line per failed row: `sigma,seed,message`.
pub fn write_errors(path: &Path, rows: &[MetricsRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["sigma", "seed", "message"])?;
    for r in rows {
        if let Some(msg) = &r.error {
            w.write_record([r.sigma.to_string(), r.seed.to_string(), msg.clone()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
