//! Standalone SVG 1.1 line and heatmap plots from CSV tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlotKind {
    Line,
    Heatmap,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(PlotKind::Line),
            "heatmap" => Ok(PlotKind::Heatmap),
            other => Err(Error::Usage(format!("unknown plot kind `{other}` (line or heatmap)"))),
        }
    }
}

/// Column roles. Line plots draw one series per distinct `group` value;
/// heatmaps colour each `(x, y)` cell by `value`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AxesSpec {
    pub x: String,
    pub y: String,
    pub group: Option<String>,
    pub value: Option<String>,
    pub title: Option<String>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const NAN_FILL: &str = "#bbbbbb";

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn header(out: &mut String, axes: &AxesSpec, frame: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    if let Some(t) = &axes.title {
        let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(t));
    }
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(out, r#"<g class="axes" stroke="black" stroke-width="1">"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#);
    let _ = writeln!(out, "</g>");
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = frame.x.0 + f * (frame.x.1 - frame.x.0);
        let yv = frame.y.0 + f * (frame.y.1 - frame.y.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            frame.px(xv),
            y0 + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            frame.py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 12.0,
        esc(&axes.x)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        esc(&axes.y)
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Linear blue → yellow ramp for `t ∈ [0, 1]`.
fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(68.0, 253.0), lerp(1.0, 231.0), lerp(84.0, 37.0))
}

fn line_plot(table: &Table, axes: &AxesSpec) -> Result<String> {
    let xs = table.f64_column(&axes.x)?;
    let ys = table.f64_column(&axes.y)?;
    let groups: Vec<String> = match &axes.group {
        Some(g) => {
            let c = table.column(g)?;
            table.rows.iter().map(|r| r[c].clone()).collect()
        }
        None => vec![String::new(); table.rows.len()],
    };
    let frame = Frame {
        x: range(xs.iter().copied()),
        y: range(ys.iter().copied()),
    };
    let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for ((x, y), g) in xs.iter().zip(&ys).zip(&groups) {
        series.entry(g.as_str()).or_default().push((*x, *y));
    }
    let mut out = String::new();
    header(&mut out, axes, &frame);
    for (i, (name, mut pts)) in series.into_iter().enumerate() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let colour = PALETTE[i % PALETTE.len()];
        // NaN values split a series into separate segments
        for seg in pts.split(|p| !p.0.is_finite() || !p.1.is_finite()) {
            if seg.is_empty() {
                continue;
            }
            let coords: Vec<String> = seg.iter().map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y))).collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                coords.join(" ")
            );
        }
        if !name.is_empty() {
            let ly = TOP + 14.0 * i as f64 + 8.0;
            let lx = W - RIGHT + 12.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 16.0,
                lx + 20.0,
                ly + 4.0,
                esc(name)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn heatmap(table: &Table, axes: &AxesSpec) -> Result<String> {
    let value_col = axes
        .value
        .as_deref()
        .ok_or_else(|| Error::Schema("heatmap needs a value column".into()))?;
    let xs = table.f64_column(&axes.x)?;
    let ys = table.f64_column(&axes.y)?;
    let vs = table.f64_column(value_col)?;
    let distinct = |v: &[f64]| {
        let mut d: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
        d.sort_by(f64::total_cmp);
        d.dedup();
        d
    };
    let (dx, dy) = (distinct(&xs), distinct(&ys));
    let half = |d: &[f64]| if d.len() > 1 { (d[1] - d[0]) / 2.0 } else { 0.5 };
    let (hx, hy) = (half(&dx), half(&dy));
    let frame = Frame {
        x: if dx.is_empty() { (0.0, 1.0) } else { (dx[0] - hx, dx[dx.len() - 1] + hx) },
        y: if dy.is_empty() { (0.0, 1.0) } else { (dy[0] - hy, dy[dy.len() - 1] + hy) },
    };
    let (vlo, vhi) = range(vs.iter().copied());
    let mut out = String::new();
    header(&mut out, axes, &frame);
    for ((x, y), v) in xs.iter().zip(&ys).zip(&vs) {
        if !x.is_finite() || !y.is_finite() {
            continue;
        }
        let (x0, x1) = (frame.px(x - hx), frame.px(x + hx));
        let (y0, y1) = (frame.py(y + hy), frame.py(y - hy));
        let fill = if v.is_finite() { ramp((v - vlo) / (vhi - vlo)) } else { NAN_FILL.to_string() };
        let _ = writeln!(
            out,
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            x1 - x0,
            y1 - y0
        );
    }
    let lx = W - RIGHT + 12.0;
    let _ = writeln!(
        out,
        r#"<text x="{lx}" y="{}">{}: {} .. {}</text>"#,
        TOP + 8.0,
        esc(value_col),
        tick(vlo),
        tick(vhi)
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// Renders `table` as an SVG document.
pub fn emit_plot(table: &Table, kind: PlotKind, axes: &AxesSpec) -> Result<String> {
    match kind {
        PlotKind::Line => line_plot(table, axes),
        PlotKind::Heatmap => heatmap(table, axes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axes() -> AxesSpec {
        AxesSpec {
            x: "x".into(),
            y: "y".into(),
            ..AxesSpec::default()
        }
    }

    #[test]
    fn two_point_line() {
        let t = Table::parse("x,y\n0,1\n1,3\n").unwrap();
        let svg = emit_plot(&t, PlotKind::Line, &axes()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 2);
    }

    #[test]
    fn groups_become_series() {
        let t = Table::parse("depth,seed,score\n4,0,1\n4,1,2\n16,0,3\n16,1,5\n").unwrap();
        let a = AxesSpec {
            x: "depth".into(),
            y: "score".into(),
            group: Some("seed".into()),
            ..AxesSpec::default()
        };
        let svg = emit_plot(&t, PlotKind::Line, &a).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn heatmap_has_one_rect_per_cell_and_grey_nan() {
        let mut csv = String::from("x,y,energy\n");
        for i in 0..3 {
            for j in 0..3 {
                let v = if i == 1 && j == 1 { "NaN".to_string() } else { format!("{}", i * 3 + j) };
                csv += &format!("{i},{j},{v}\n");
            }
        }
        let t = Table::parse(&csv).unwrap();
        let a = AxesSpec {
            value: Some("energy".into()),
            ..axes()
        };
        let svg = emit_plot(&t, PlotKind::Heatmap, &a).unwrap();
        assert_eq!(svg.matches("<rect").count(), 9);
        assert_eq!(svg.matches(NAN_FILL).count(), 1);
    }

    #[test]
    fn empty_table_gives_axes_only() {
        let t = Table::parse("x,y\n").unwrap();
        let svg = emit_plot(&t, PlotKind::Line, &axes()).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("class=\"axes\""));
        assert_eq!(svg.matches("<polyline").count(), 0);
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let t = Table::parse("x,z\n1,2\n").unwrap();
        assert!(matches!(emit_plot(&t, PlotKind::Line, &axes()), Err(Error::Schema(_))));
        assert!(matches!(emit_plot(&t, PlotKind::Heatmap, &axes()), Err(Error::Schema(_))));
    }
}
