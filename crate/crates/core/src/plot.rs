//! Static SVG plots of a saved trace: joint positions against their limits
//! and reference, control torques, and the external force when one was
//! applied. Plots depend only on the [`TraceTable`], so re-plotting a saved
//! CSV reproduces the same files.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::trace::TraceTable;

const SIZE_PER_PANEL: (u32, u32) = (900, 300);

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Io(format!("plotting failed: {e}"))
}

fn range(series: &[&[f64]]) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &x in s.iter().filter(|x| x.is_finite()) {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);
    (lo - pad, hi + pad)
}

struct Line<'a> {
    label: String,
    values: &'a [f64],
    color: RGBColor,
}

fn panels(path: &Path, title: &str, y_label: &str, t: &[f64], groups: &[Vec<Line<'_>>]) -> Result<()> {
    let height = SIZE_PER_PANEL.1 * groups.len() as u32;
    let root = SVGBackend::new(path, (SIZE_PER_PANEL.0, height)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let areas = root.split_evenly((groups.len(), 1));
    let t_end = t.last().copied().unwrap_or(1.0).max(1e-9);
    for (idx, (area, lines)) in areas.iter().zip(groups).enumerate() {
        let all: Vec<&[f64]> = lines.iter().map(|l| l.values).collect();
        let (lo, hi) = range(&all);
        let mut chart = ChartBuilder::on(area)
            .caption(format!("{title} {}", idx + 1), ("sans-serif", 16))
            .margin(8)
            .x_label_area_size(30)
            .y_label_area_size(60)
            .build_cartesian_2d(0.0..t_end, lo..hi)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("t [s]")
            .y_desc(y_label)
            .draw()
            .map_err(plot_err)?;
        for line in lines {
            let color = line.color;
            chart
                .draw_series(LineSeries::new(
                    t.iter()
                        .zip(line.values)
                        .filter(|(_, v)| v.is_finite())
                        .map(|(a, b)| (*a, *b)),
                    color.stroke_width(1),
                ))
                .map_err(plot_err)?
                .label(line.label.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}

fn column(table: &TraceTable, name: &str) -> Result<Vec<f64>> {
    table
        .column(name)
        .ok_or_else(|| Error::Io(format!("trace has no `{name}` column")))
}

/// Writes `joints.svg`, `torques.svg` and, if any force is nonzero,
/// `force.svg` into `out_dir`. Angles are plotted in degrees.
pub fn plot_trace(table: &TraceTable, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let n = table.n_joints();
    let t = column(table, "t_s")?;
    let deg = |v: Vec<f64>| v.into_iter().map(f64::to_degrees).collect::<Vec<_>>();
    let mut q = Vec::new();
    let mut q_ref = Vec::new();
    let mut tau = Vec::new();
    for i in 1..=n {
        q.push(deg(column(table, &format!("q{i}_rad"))?));
        q_ref.push(deg(column(table, &format!("q_ref{i}_rad"))?));
        tau.push(column(table, &format!("tau{i}_nm"))?);
    }
    let lower: Vec<Vec<f64>> = table.q_min.iter().map(|m| vec![m.to_degrees(); t.len()]).collect();
    let upper: Vec<Vec<f64>> = table.q_max.iter().map(|m| vec![m.to_degrees(); t.len()]).collect();

    let mut written = Vec::new();
    let joints: Vec<Vec<Line>> = (0..n)
        .map(|i| {
            vec![
                Line { label: "q".into(), values: &q[i], color: BLUE },
                Line { label: "reference".into(), values: &q_ref[i], color: GREEN },
                Line { label: "limits".into(), values: &lower[i], color: RED },
                Line { label: String::new(), values: &upper[i], color: RED },
            ]
        })
        .collect();
    let path = out_dir.join("joints.svg");
    panels(&path, &format!("{} law, joint", table.law), "q [deg]", &t, &joints)?;
    written.push(path);

    let torques: Vec<Vec<Line>> = (0..n)
        .map(|i| vec![Line { label: "tau".into(), values: &tau[i], color: BLACK }])
        .collect();
    let path = out_dir.join("torques.svg");
    panels(&path, &format!("{} law, torque", table.law), "tau [N m]", &t, &torques)?;
    written.push(path);

    let fx = column(table, "force_x_n")?;
    let fy = column(table, "force_y_n")?;
    if fx.iter().chain(&fy).any(|f| *f != 0.0) {
        let path = out_dir.join("force.svg");
        let lines = vec![vec![
            Line { label: "F_x".into(), values: &fx, color: MAGENTA },
            Line { label: "F_y".into(), values: &fy, color: CYAN },
        ]];
        panels(&path, "external force", "F [N]", &t, &lines)?;
        written.push(path);
    }
    Ok(written)
}
