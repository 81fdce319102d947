//! Deterministic SVG line plots and heatmaps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::WorkbenchError;
use crate::mesh::{atomic_write, read_field, Field};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [(u8, u8, u8); 6] = [
    (31, 119, 180),
    (214, 39, 40),
    (44, 160, 44),
    (255, 127, 14),
    (148, 103, 189),
    (140, 86, 75),
];

#[derive(Debug, Clone, PartialEq)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return None;
    }
    if hi - lo <= 1e-12 * lo.abs().max(hi.abs()).max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    right: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - self.right)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }

    /// Axes box, five ticks per axis and labels; `ylog` labels `10^y`.
    fn axes(&self, out: &mut String, x_label: &str, y_label: &str, ylog: bool) {
        let (l, r) = (LEFT, WIDTH - self.right);
        let (t, b) = (TOP, HEIGHT - BOTTOM);
        let _ = writeln!(
            out,
            r#"<rect x="{l:.2}" y="{t:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            r - l,
            b - t
        );
        for i in 0..=4 {
            let fx = self.x0 + (self.x1 - self.x0) * i as f64 / 4.0;
            let x = self.px(fx);
            let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{b:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, b + 5.0);
            let _ = writeln!(
                out,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                b + 18.0,
                tick_label(fx)
            );
            let fy = self.y0 + (self.y1 - self.y0) * i as f64 / 4.0;
            let y = self.py(fy);
            let label = if ylog { format!("1e{fy:.1}") } else { tick_label(fy) };
            let _ = writeln!(out, r#"<line x1="{:.2}" y1="{y:.2}" x2="{l:.2}" y2="{y:.2}" stroke="black"/>"#, l - 5.0);
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                l - 8.0,
                y + 4.0,
                label
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (l + r) / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            (t + b) / 2.0,
            (t + b) / 2.0,
            escape(y_label)
        );
    }
}

/// Line plot; with `log_y` non-positive values are dropped and the axis
/// shows decades.
pub fn line_svg(plot: &LinePlot) -> Result<String, WorkbenchError> {
    let series: Vec<(String, Vec<(f64, f64)>)> = plot
        .series
        .iter()
        .map(|(name, pts)| {
            let kept = pts
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!plot.log_y || *y > 0.0))
                .map(|&(x, y)| (x, if plot.log_y { y.log10() } else { y }))
                .collect();
            (name.clone(), kept)
        })
        .collect();
    let all = || series.iter().flat_map(|(_, p)| p.iter());
    let (x0, x1) = range(all().map(|p| p.0)).ok_or(WorkbenchError::EmptySeries)?;
    let (y0, y1) = range(all().map(|p| p.1)).ok_or(WorkbenchError::EmptySeries)?;
    let frame = Frame {
        x0,
        x1,
        y0,
        y1,
        right: 20.0,
    };
    let mut out = String::new();
    header(&mut out, &plot.title);
    frame.axes(&mut out, &plot.x_label, &plot.y_label, plot.log_y);
    for (k, (name, pts)) in series.iter().enumerate() {
        let (r, g, b) = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, frame.px(*x), frame.py(*y));
        }
        let _ = writeln!(
            out,
            r#"<path d="{d}" fill="none" stroke="rgb({r},{g},{b})" stroke-width="1.5"/>"#
        );
        if series.len() > 1 {
            let y = TOP + 16.0 * (k as f64 + 1.0);
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{y:.2}" text-anchor="end" fill="rgb({r},{g},{b})">{}</text>"#,
                WIDTH - 28.0,
                escape(name)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn viridis(s: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let s = s.clamp(0.0, 1.0) * 4.0;
    let i = (s.floor() as usize).min(3);
    let f = s - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |u: f64, v: f64| (u + f * (v - u)).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// 2D heatmap. One species uses a sequential colour map; several species
/// are blended over white, each in its own colour, with one colour bar each.
pub fn heatmap_svg(fields: &[Field], title: &str) -> Result<String, WorkbenchError> {
    let first = fields.first().ok_or(WorkbenchError::EmptySeries)?;
    let grid = first.grid();
    if grid.dims() != 2 || fields.iter().any(|f| f.grid() != grid) {
        return Err(WorkbenchError::Invalid("heatmaps need fields on one 2D grid".into()));
    }
    let (ax, ay) = (grid.axis(0), grid.axis(1));
    let bar_space = 50.0 + 45.0 * fields.len() as f64;
    let frame = Frame {
        x0: ax.lo,
        x1: ax.hi,
        y0: ay.lo,
        y1: ay.hi,
        right: bar_space,
    };
    let maxima: Vec<f64> = fields.iter().map(|f| f.max().max(f64::MIN_POSITIVE)).collect();
    let mut out = String::new();
    header(&mut out, title);
    let cw = frame.px(ax.lo + ax.dx) - frame.px(ax.lo);
    let ch = frame.py(ay.lo) - frame.py(ay.lo + ay.dx);
    for i in 0..grid.len() {
        let [i0, i1] = grid.unravel(i);
        let (r, g, b) = if fields.len() == 1 {
            viridis(fields[0].values()[i] / maxima[0])
        } else {
            let mut c = [255.0f64; 3];
            for (k, f) in fields.iter().enumerate() {
                let w = f.values()[i] / maxima[k];
                let p = PALETTE[k % PALETTE.len()];
                c[0] -= w * (255.0 - p.0 as f64);
                c[1] -= w * (255.0 - p.1 as f64);
                c[2] -= w * (255.0 - p.2 as f64);
            }
            let q = |v: f64| v.clamp(0.0, 255.0).round() as u8;
            (q(c[0]), q(c[1]), q(c[2]))
        };
        let x = frame.px(ax.lo + i0 as f64 * ax.dx);
        let y = frame.py(ay.lo + (i1 + 1) as f64 * ay.dx);
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="rgb({r},{g},{b})"/>"#,
            cw + 0.05,
            ch + 0.05
        );
    }
    frame.axes(&mut out, "x", "y", false);
    let _ = writeln!(out, "<defs>");
    for k in 0..fields.len() {
        let _ = writeln!(out, r#"<linearGradient id="bar{k}" x1="0" y1="1" x2="0" y2="0">"#);
        for s in 0..=4 {
            let v = s as f64 / 4.0;
            let (r, g, b) = if fields.len() == 1 {
                viridis(v)
            } else {
                let p = PALETTE[k % PALETTE.len()];
                let mix = |c: u8| (255.0 - v * (255.0 - c as f64)).round() as u8;
                (mix(p.0), mix(p.1), mix(p.2))
            };
            let _ = writeln!(out, r#"<stop offset="{v}" stop-color="rgb({r},{g},{b})"/>"#);
        }
        let _ = writeln!(out, "</linearGradient>");
    }
    let _ = writeln!(out, "</defs>");
    for (k, max) in maxima.iter().enumerate() {
        let x = WIDTH - bar_space + 30.0 + 45.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<rect class="colorbar" x="{x:.2}" y="{TOP:.2}" width="14" height="{:.2}" fill="url(#bar{k})" stroke="black"/>"#,
            HEIGHT - TOP - BOTTOM
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x + 7.0,
            TOP - 4.0,
            tick_label(*max)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">0</text>"#,
            x + 7.0,
            HEIGHT - BOTTOM + 14.0
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Line plot of 1D fields or heatmap of 2D fields.
pub fn field_svg(fields: &[Field], title: &str) -> Result<String, WorkbenchError> {
    let first = fields.first().ok_or(WorkbenchError::EmptySeries)?;
    if first.grid().dims() == 2 {
        return heatmap_svg(fields, title);
    }
    let grid = first.grid();
    let ax = grid.axis(0);
    let series = fields
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let pts = f.values().iter().enumerate().map(|(i, v)| (ax.center(i), *v)).collect();
            (format!("species {}", k + 1), pts)
        })
        .collect();
    line_svg(&LinePlot {
        title: title.to_string(),
        x_label: "x".into(),
        y_label: "density".into(),
        log_y: false,
        series,
    })
}

fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), WorkbenchError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or(WorkbenchError::EmptySeries)?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(WorkbenchError::Malformed(format!(
                "row {} has {} columns, header has {}",
                n + 2,
                cells.len(),
                header.len()
            )));
        }
        for (c, cell) in cells.iter().enumerate() {
            let cell = cell.trim();
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse::<f64>()
                    .map_err(|_| WorkbenchError::Malformed(format!("row {}: '{cell}' is not a number", n + 2)))?
            };
            cols[c].push(v);
        }
    }
    if cols[0].is_empty() {
        return Err(WorkbenchError::EmptySeries);
    }
    Ok((header, cols))
}

/// SVG for a CSV file. Series CSVs plot the total free energy over time
/// (`log_y` plots `E - E_last` instead); other CSVs plot every column
/// against the first.
pub fn csv_svg(text: &str, title: &str, log_y: bool) -> Result<String, WorkbenchError> {
    let (header, cols) = parse_csv(text)?;
    let col = |name: &str| header.iter().position(|h| h == name);
    if let (Some(t), Some(e)) = (col("t"), col("E_total")) {
        let last = *cols[e].last().expect("non-empty");
        let pts = cols[t]
            .iter()
            .zip(&cols[e])
            .map(|(t, e)| (*t, if log_y { e - last } else { *e }))
            .collect();
        return line_svg(&LinePlot {
            title: title.to_string(),
            x_label: "t".into(),
            y_label: if log_y { "E - E_inf".into() } else { "E".into() },
            log_y,
            series: vec![("E_total".into(), pts)],
        });
    }
    let series = (1..header.len())
        .map(|c| {
            let pts = cols[0].iter().zip(&cols[c]).map(|(x, y)| (*x, *y)).collect();
            (header[c].clone(), pts)
        })
        .collect();
    line_svg(&LinePlot {
        title: title.to_string(),
        x_label: header[0].clone(),
        y_label: String::new(),
        log_y,
        series,
    })
}

/// Reads an `.adfv` field or a CSV and writes `<stem>.svg` into `out_dir`.
pub fn plot_file(input: &Path, out_dir: &Path, log_y: bool) -> Result<PathBuf, WorkbenchError> {
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| WorkbenchError::Malformed(format!("bad file name {}", input.display())))?;
    let svg = if input.extension().is_some_and(|e| e == "adfv") {
        let f = read_field(input)?;
        field_svg(&[f], stem)?
    } else {
        let text = std::fs::read_to_string(input).map_err(|e| WorkbenchError::Malformed(e.to_string()))?;
        csv_svg(&text, stem, log_y)?
    };
    std::fs::create_dir_all(out_dir).map_err(crate::mesh::MeshError::from)?;
    let path = out_dir.join(format!("{stem}.svg"));
    atomic_write(&path, svg.as_bytes())?;
    Ok(path)
}
