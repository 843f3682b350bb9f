//! SVG learning curves from metrics CSVs.
//!
//! CSVs are grouped into runs: a file inside `seed_<s>/` belongs to the run
//! named after the directory above it, any other file is its own run. The
//! seeds of a run are linearly interpolated onto the grid of the seed with the
//! fewest rows (the coarsest grid; ties go to the first file) and drawn as a
//! mean line with a band of ±1 sample std. Values outside a seed's own x
//! range take its nearest endpoint.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::diagnostics::{mean_and_std, read_metrics, MetricsRow};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotMode {
    VsEnvSteps,
    /// x = critic updates summed over networks plus policy updates.
    VsGradSteps,
}

impl PlotMode {
    pub const NAMES: [&'static str; 2] = ["vs_env_steps", "vs_grad_steps"];

    fn x(self, row: &MetricsRow) -> f64 {
        match self {
            PlotMode::VsEnvSteps => row.env_step as f64,
            PlotMode::VsGradSteps => (row.critic_updates_total + row.policy_updates_total) as f64,
        }
    }

    fn x_label(self) -> &'static str {
        match self {
            PlotMode::VsEnvSteps => "environment steps",
            PlotMode::VsGradSteps => "gradient steps (critics + policy)",
        }
    }
}

impl FromStr for PlotMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vs_env_steps" => Ok(PlotMode::VsEnvSteps),
            "vs_grad_steps" => Ok(PlotMode::VsGradSteps),
            other => Err(Error::config(format!(
                "unknown plot mode {other:?}; valid modes: {}",
                Self::NAMES.join(", ")
            ))),
        }
    }
}

/// One run, aggregated over its seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub n_seeds: usize,
}

pub fn run_name(path: &Path) -> String {
    let parent = path.parent();
    let in_seed_dir = parent
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with("seed_"));
    let grandparent = parent.and_then(|p| p.parent()).and_then(|g| g.file_name());
    match (in_seed_dir, grandparent) {
        (true, Some(g)) => g.to_string_lossy().into_owned(),
        _ => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
    }
}

/// Linear interpolation of the curve `(xs, ys)` at `x`; `xs` ascending.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let hi = xs.partition_point(|&v| v < x);
    if hi == 0 {
        return ys[0];
    }
    if hi == xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[hi - 1], xs[hi]);
    if x1 == x0 {
        return ys[hi];
    }
    ys[hi - 1] + (ys[hi] - ys[hi - 1]) * (x - x0) / (x1 - x0)
}

type Curve = (Vec<f64>, Vec<f64>);

fn aggregate(name: String, curves: &[Curve]) -> Series {
    let grid = curves
        .iter()
        .min_by_key(|(xs, _)| xs.len())
        .map(|(xs, _)| xs.clone())
        .unwrap_or_default();
    let mut mean = Vec::with_capacity(grid.len());
    let mut std = Vec::with_capacity(grid.len());
    for &x in &grid {
        let ys: Vec<f64> = curves.iter().map(|(xs, ys)| interpolate(xs, ys, x)).collect();
        let (m, s) = mean_and_std(&ys, 1.0);
        mean.push(m);
        std.push(s);
    }
    Series {
        name,
        x: grid,
        mean,
        std,
        n_seeds: curves.len(),
    }
}

/// Reads and groups the CSVs. Every unreadable or empty file is reported at once.
pub fn load_series(paths: &[impl AsRef<Path>], mode: PlotMode) -> Result<Vec<Series>> {
    if paths.is_empty() {
        return Err(Error::config("no metrics CSVs given"));
    }
    let mut groups: Vec<(String, Vec<Curve>)> = Vec::new();
    let mut problems = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let rows = match read_metrics(path) {
            Ok(rows) if rows.is_empty() => {
                problems.push(format!("{}: no data rows", path.display()));
                continue;
            }
            Ok(rows) => rows,
            Err(e) => {
                problems.push(e.to_string());
                continue;
            }
        };
        let curve = (
            rows.iter().map(|r| mode.x(r)).collect(),
            rows.iter().map(|r| r.eval_return_mean).collect(),
        );
        let name = run_name(path);
        match groups.iter_mut().find(|(n, _)| *n == name) {
            Some((_, curves)) => curves.push(curve),
            None => groups.push((name, vec![curve])),
        }
    }
    if !problems.is_empty() {
        return Err(Error::config(format!("unusable metrics files:\n  {}", problems.join("\n  "))));
    }
    Ok(groups.into_iter().map(|(name, curves)| aggregate(name, &curves)).collect())
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

pub fn render_svg(series: &[Series], mode: PlotMode) -> String {
    let xs = series.iter().flat_map(|s| s.x.iter().copied());
    let (x_lo, x_hi) = span(xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max));
    let lows = series.iter().flat_map(|s| s.mean.iter().zip(&s.std).map(|(m, d)| m - d));
    let highs = series.iter().flat_map(|s| s.mean.iter().zip(&s.std).map(|(m, d)| m + d));
    let (y_lo, y_hi) = span(lows.fold(f64::INFINITY, f64::min), highs.fold(f64::NEG_INFINITY, f64::max));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{LEFT} {TOP} V{} H{}" fill="none" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (x, y) = (x_lo + f * (x_hi - x_lo), y_lo + f * (y_hi - y_lo));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(x),
            TOP + plot_h + 18.0,
            tick(x)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            py(y) + 4.0,
            tick(y)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        mode.x_label()
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(20 {:.1}) rotate(-90)" text-anchor="middle">evaluation return</text>"#,
        TOP + plot_h / 2.0
    );

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let upper = s.x.iter().zip(&s.mean).zip(&s.std).map(|((&x, &m), &d)| (x, m + d));
        let lower = s.x.iter().zip(&s.mean).zip(&s.std).rev().map(|((&x, &m), &d)| (x, m - d));
        let band: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = s.x.iter().zip(&s.mean).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{} (n={})</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name),
            s.n_seeds
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 {
        format!("{:.1}k", v / 1e3)
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

pub fn emit_plots(csv_paths: &[impl AsRef<Path>], mode: PlotMode, out: &Path) -> Result<Vec<Series>> {
    let series = load_series(csv_paths, mode)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(out, render_svg(&series, mode)).map_err(|e| Error::io(out, e))?;
    Ok(series)
}
