use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{read_trials_file, summarize, CellSummary, HarnessError};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 120.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"];

fn label_sigma(sigma: f64) -> String {
    format!("{sigma:e}")
}

/// One static SVG: median model error against psi, one series per p. The
/// psi axis is logarithmic when every psi is positive.
pub fn render_svg(cells: &[CellSummary]) -> Result<String, HarnessError> {
    let first = cells.first().ok_or_else(|| HarnessError::Empty("cell list".into()))?;
    let points: Vec<&CellSummary> = cells.iter().filter(|c| c.median_model_error.is_finite()).collect();
    let log_x = points.iter().all(|c| c.psi > 0.0);
    let fx = |psi: f64| if log_x { psi.log10() } else { psi };
    let (mut x_lo, mut x_hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(fx(c.psi)), hi.max(fx(c.psi))));
    if !x_lo.is_finite() {
        (x_lo, x_hi) = (0.0, 1.0);
    }
    if x_hi - x_lo < 1e-12 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let y_max = points.iter().map(|c| c.median_model_error).fold(0.0f64, f64::max);
    let y_hi = if y_max > 0.0 { 1.05 * y_max } else { 1.0 };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |psi: f64| LEFT + (fx(psi) - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |e: f64| TOP + plot_h - e / y_hi * plot_h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{} (sigma = {})</text>"#,
        LEFT + plot_w / 2.0,
        first.experiment,
        label_sigma(first.sigma)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT:.2} {TOP:.2} L{LEFT:.2} {:.2} L{:.2} {:.2}" fill="none" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    for k in 0..=4 {
        let e = y_hi * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{:.3}</text>"#,
            LEFT - 6.0,
            sy(e) + 4.0,
            e
        );
    }
    for k in 0..=4 {
        let v = x_lo + (x_hi - x_lo) * k as f64 / 4.0;
        let psi = if log_x { 10f64.powf(v) } else { v };
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{:.3}</text>"#,
            LEFT + (v - x_lo) / (x_hi - x_lo) * plot_w,
            TOP + plot_h + 16.0,
            psi
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">psi{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        if log_x { " (log scale)" } else { "" }
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">median model error</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    let mut ps: Vec<usize> = points.iter().map(|c| c.p).collect();
    ps.sort_unstable();
    ps.dedup();
    for (k, p) in ps.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut series: Vec<&&CellSummary> = points.iter().filter(|c| c.p == *p).collect();
        series.sort_by(|a, b| a.psi.total_cmp(&b.psi));
        let mut d = String::new();
        for (j, c) in series.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2}", if j == 0 { "M" } else { " L" }, sx(c.psi), sy(c.median_model_error));
        }
        let _ = writeln!(s, r#"<path class="series" data-p="{p}" d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        for c in &series {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(c.psi), sy(c.median_model_error));
        }
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<path d="M{:.2} {ly:.2} L{:.2} {ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">p = {p}</text>"#,
            WIDTH - RIGHT + 12.0,
            WIDTH - RIGHT + 32.0,
            WIDTH - RIGHT + 38.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Renders one SVG per `(experiment, sigma)` of a trial CSV.
///
/// When `out` ends in `.svg` and there is one group it is written there;
/// with several groups the file stem becomes a prefix. Otherwise `out` is a
/// directory. Nothing is written if any group fails to render.
pub fn render_curves(csv_path: &Path, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let records = read_trials_file(csv_path)?;
    if records.is_empty() {
        return Err(HarnessError::Empty(csv_path.display().to_string()));
    }
    let cells = summarize(&records);
    let mut groups: Vec<Vec<CellSummary>> = Vec::new();
    for c in cells {
        match groups.last_mut() {
            Some(g) if g[0].experiment == c.experiment && g[0].sigma == c.sigma => g.push(c),
            _ => groups.push(vec![c]),
        }
    }
    let single_file = out.extension().is_some_and(|e| e == "svg");
    let mut rendered = Vec::with_capacity(groups.len());
    for g in &groups {
        let name = format!("{}_sigma_{}.svg", g[0].experiment, label_sigma(g[0].sigma));
        let path = if single_file && groups.len() == 1 {
            out.to_path_buf()
        } else if single_file {
            let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            out.with_file_name(format!("{stem}_{name}"))
        } else {
            out.join(name)
        };
        rendered.push((path, render_svg(g)?));
    }
    if !single_file {
        std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    }
    for (path, svg) in &rendered {
        std::fs::write(path, svg).map_err(|e| HarnessError::io(path, e))?;
    }
    Ok(rendered.into_iter().map(|(p, _)| p).collect())
}
