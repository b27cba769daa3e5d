use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use plotters::prelude::*;

use super::io::{read_metrics, read_opinions, OPINIONS_FILE, SWEEP_FILE};
use super::MetricsRecord;
use crate::error::{Error, Result};

const SIZE: (u32, u32) = (720, 540);

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

/// Padded range covering all finite values.
fn span(values: impl IntoIterator<Item = f64>) -> Range<f64> {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return 0.0..1.0;
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    lo - pad..hi + pad
}

/// Renders with `draw` into an in-memory SVG and writes it to `path`.
fn render(
    path: &Path,
    draw: impl FnOnce(&DrawingArea<SVGBackend, plotters::coord::Shift>) -> Result<()>,
) -> Result<PathBuf> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        draw(&root)?;
        root.present().map_err(plot_err)?;
    }
    fs::write(path, svg).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Initial-versus-final scatter of the first two opinion coordinates (or of
/// initial against final value when `d = 1`).
fn scatter(path: &Path, x0: &DMatrix<f64>, xt: &DMatrix<f64>) -> Result<PathBuf> {
    let (pts0, pts1): (Vec<(f64, f64)>, Vec<(f64, f64)>) = if x0.ncols() >= 2 {
        (
            (0..x0.nrows()).map(|i| (x0[(i, 0)], x0[(i, 1)])).collect(),
            (0..xt.nrows()).map(|i| (xt[(i, 0)], xt[(i, 1)])).collect(),
        )
    } else {
        let diag = (0..x0.nrows()).map(|i| (x0[(i, 0)], x0[(i, 0)])).collect();
        let moved = (0..x0.nrows()).map(|i| (x0[(i, 0)], xt[(i, 0)])).collect();
        (diag, moved)
    };
    let xr = span(pts0.iter().chain(&pts1).map(|p| p.0));
    let yr = span(pts0.iter().chain(&pts1).map(|p| p.1));
    let labels = if x0.ncols() >= 2 { ("x_0", "x_1") } else { ("initial", "final") };
    render(path, |root| {
        let mut chart = ChartBuilder::on(root)
            .caption("Initial (grey) and final (blue) opinions", ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(48)
            .build_cartesian_2d(xr, yr)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc(labels.0)
            .y_desc(labels.1)
            .draw()
            .map_err(plot_err)?;
        for (a, b) in pts0.iter().zip(&pts1) {
            chart
                .draw_series(LineSeries::new([*a, *b], BLACK.mix(0.15)))
                .map_err(plot_err)?;
        }
        chart
            .draw_series(pts0.iter().map(|&p| Circle::new(p, 2, BLACK.mix(0.35).filled())))
            .map_err(plot_err)?;
        chart
            .draw_series(pts1.iter().map(|&p| Circle::new(p, 2, BLUE.mix(0.7).filled())))
            .map_err(plot_err)?;
        Ok(())
    })
}

/// One trajectory plot of coordinate `c` over macro-time with the
/// population mean in red.
fn trajectory(path: &Path, steps: &[DMatrix<f64>], c: usize) -> Result<PathBuf> {
    let n = steps[0].nrows();
    let tr = 0.0..(steps.len().max(2) - 1) as f64;
    let yr = span(steps.iter().flat_map(|x| x.column(c).iter().copied().collect::<Vec<_>>()));
    render(path, |root| {
        let mut chart = ChartBuilder::on(root)
            .caption(format!("Opinion coordinate {c}"), ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(48)
            .build_cartesian_2d(tr, yr)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("t")
            .y_desc(format!("x_{c}"))
            .draw()
            .map_err(plot_err)?;
        for i in 0..n {
            chart
                .draw_series(LineSeries::new(
                    steps.iter().enumerate().map(|(t, x)| (t as f64, x[(i, c)])),
                    BLUE.mix(0.2),
                ))
                .map_err(plot_err)?;
        }
        chart
            .draw_series(LineSeries::new(
                steps.iter().enumerate().map(|(t, x)| (t as f64, x.column(c).mean())),
                RED.stroke_width(3),
            ))
            .map_err(plot_err)?;
        Ok(())
    })
}

/// Per-coordinate trajectory plots `trajectory_<c>.svg`.
pub fn plot_trajectories(steps: &[DMatrix<f64>], dir: &Path) -> Result<Vec<PathBuf>> {
    if steps.is_empty() || steps[0].nrows() == 0 {
        return Err(Error::EmptyInput("trace has no opinions".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..steps[0].ncols())
        .map(|c| trajectory(&dir.join(format!("trajectory_{c}.svg")), steps, c))
        .collect()
}

/// Scatter plus one trajectory plot per opinion coordinate.
pub fn plot_trace(steps: &[DMatrix<f64>], dir: &Path) -> Result<Vec<PathBuf>> {
    if steps.is_empty() || steps[0].nrows() == 0 {
        return Err(Error::EmptyInput("trace has no opinions".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = vec![scatter(
        &dir.join("scatter.svg"),
        &steps[0],
        steps.last().expect("non-empty"),
    )?];
    out.extend(plot_trajectories(steps, dir)?);
    Ok(out)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One file per metric: per-seed values against sigma (log scale) with the
/// per-sigma median as a line.
pub fn plot_sweep(rows: &[MetricsRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("sweep table has no rows".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metrics: [(&str, fn(&MetricsRecord) -> f64); 3] = [
        ("mean_dist_defender_goal", |r| r.mean_dist_defender_goal),
        ("mean_dist_adversary_goal", |r| r.mean_dist_adversary_goal),
        ("final_bimodality", |r| r.final_bimodality),
    ];
    let ok: Vec<&MetricsRecord> = rows.iter().filter(|r| !r.is_error()).collect();
    let mut sigmas: Vec<f64> = ok.iter().map(|r| r.sigma).collect();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    let (lo, hi) = match (sigmas.first(), sigmas.last()) {
        (Some(&lo), Some(&hi)) if hi > lo => (lo / 1.5, hi * 1.5),
        (Some(&s), _) => (s / 2.0, s * 2.0),
        _ => (0.1, 10.0),
    };

    metrics
        .iter()
        .map(|&(name, get)| {
            let pts: Vec<(f64, f64)> = ok
                .iter()
                .map(|r| (r.sigma, get(r)))
                .filter(|p| p.1.is_finite())
                .collect();
            let medians: Vec<(f64, f64)> = sigmas
                .iter()
                .filter_map(|&s| {
                    let vals: Vec<f64> =
                        pts.iter().filter(|p| p.0 == s).map(|p| p.1).collect();
                    (!vals.is_empty()).then(|| (s, median(vals)))
                })
                .collect();
            let yr = span(pts.iter().map(|p| p.1));
            render(&dir.join(format!("{name}.svg")), |root| {
                let mut chart = ChartBuilder::on(root)
                    .caption(name, ("sans-serif", 20))
                    .margin(12)
                    .x_label_area_size(36)
                    .y_label_area_size(56)
                    .build_cartesian_2d((lo..hi).log_scale(), yr)
                    .map_err(plot_err)?;
                chart
                    .configure_mesh()
                    .x_desc("sigma")
                    .y_desc(name)
                    .draw()
                    .map_err(plot_err)?;
                chart
                    .draw_series(pts.iter().map(|&p| Circle::new(p, 3, BLUE.mix(0.6).filled())))
                    .map_err(plot_err)?;
                chart
                    .draw_series(LineSeries::new(medians.iter().copied(), RED.stroke_width(2)))
                    .map_err(plot_err)?;
                Ok(())
            })
        })
        .collect()
}

/// Renders whatever persisted outputs `dir` holds: a sweep table, a single
/// trace, and traces in immediate subdirectories. Images go next to their
/// data.
pub fn plot_directory(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if dir.join(SWEEP_FILE).is_file() {
        out.extend(plot_sweep(&read_metrics(&dir.join(SWEEP_FILE))?, dir)?);
    }
    if dir.join(OPINIONS_FILE).is_file() {
        out.extend(plot_trace(&read_opinions(&dir.join(OPINIONS_FILE))?, dir)?);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(OPINIONS_FILE).is_file())
        .collect();
    subdirs.sort();
    for sub in subdirs {
        out.extend(plot_trace(&read_opinions(&sub.join(OPINIONS_FILE))?, &sub)?);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no sweep table or trace found in {}",
            dir.display()
        )));
    }
    Ok(out)
}
