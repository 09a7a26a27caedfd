//! SVG line charts drawn straight from result rows.
//!
//! One chart per codec label. The x axis is CR when the label's rows span
//! more than one CR and DR_f otherwise; every other varying field splits
//! the rows into series. The x axis is log2 scaled since the grids are
//! geometric.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::harness::results::MetricRow;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XAxis {
    Cr,
    DrF,
}

impl XAxis {
    fn name(self) -> &'static str {
        match self {
            XAxis::Cr => "cr",
            XAxis::DrF => "dr_f",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    /// Sorted by x.
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub codec: String,
    pub x_axis: XAxis,
    pub series: Vec<Series>,
}

fn distinct(v: impl Iterator<Item = f64>) -> usize {
    let mut xs: Vec<f64> = v.collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.len()
}

/// Groups rows into charts in first-appearance order of codec labels.
pub fn charts(rows: &[MetricRow]) -> Vec<Chart> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.codec.as_str()) {
            order.push(&r.codec);
        }
    }
    order
        .into_iter()
        .map(|codec| {
            let mine: Vec<&MetricRow> = rows.iter().filter(|r| r.codec == codec).collect();
            let x_axis = if distinct(mine.iter().map(|r| r.cr)) > 1 { XAxis::Cr } else { XAxis::DrF };
            let multi_slot = mine.iter().any(|r| r.timeslot != mine[0].timeslot);
            let multi_d = mine.iter().any(|r| r.d != mine[0].d);
            let mut groups: BTreeMap<(usize, usize, u64), Series> = BTreeMap::new();
            for r in &mine {
                let (x, other) = match x_axis {
                    XAxis::Cr => (r.cr, r.dr_f),
                    XAxis::DrF => (r.dr_f, r.cr),
                };
                let mut label = Vec::new();
                if x_axis == XAxis::Cr && distinct(mine.iter().map(|r| r.dr_f)) > 1 {
                    label.push(format!("DR_f={}", ratio_label(other)));
                }
                if multi_d {
                    label.push(format!("D={}", r.d));
                }
                if multi_slot {
                    label.push(format!("t={}", r.timeslot));
                }
                let key = (r.timeslot, r.d, (-other).to_bits());
                let s = groups.entry(key).or_insert_with(|| Series {
                    label: if label.is_empty() { codec.to_string() } else { label.join(" ") },
                    points: Vec::new(),
                });
                s.points.push((x, r.nmse_db));
            }
            let series = groups
                .into_values()
                .map(|mut s| {
                    s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
                    s
                })
                .collect();
            Chart { codec: codec.to_string(), x_axis, series }
        })
        .collect()
}

/// `1/8` for reciprocal powers of two, decimal otherwise.
pub fn ratio_label(x: f64) -> String {
    if x == 1.0 {
        return "1".into();
    }
    let inv = 1.0 / x;
    if inv.fract() == 0.0 && inv <= 4096.0 {
        format!("1/{}", inv as u64)
    } else {
        format!("{x}")
    }
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    for m in [1.0, 2.0, 5.0, 10.0] {
        if raw <= m * mag {
            return m * mag;
        }
    }
    10.0 * mag
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(chart: &Chart) -> String {
    let xs: Vec<f64> = chart.series.iter().flat_map(|s| s.points.iter().map(|p| p.0.log2())).collect();
    let ys: Vec<f64> = chart.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    let (mut x0, mut x1) = (xs.iter().cloned().fold(f64::INFINITY, f64::min), xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    if x0 == x1 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let (ymin, ymax) = (ys.iter().cloned().fold(f64::INFINITY, f64::min), ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let step = nice_step((ymax - ymin).max(1.0));
    let y0 = (ymin / step).floor() * step;
    let y1 = ((ymax / step).ceil() * step).max(y0 + step);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x.log2() - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">NMSE vs {} ({})</text>"#, LEFT + pw / 2.0, chart.x_axis.name(), esc(&chart.codec));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let mut y = y0;
    while y <= y1 + 1e-9 {
        let yy = py(y);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, yy + 4.0, format_tick(y));
        y += step;
    }
    let mut ticks: Vec<f64> = chart.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for t in ticks {
        let xx = px(t);
        let _ = writeln!(s, r#"<text x="{xx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, ratio_label(t));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 10.0, chart.x_axis.name());
    let _ = writeln!(s, r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">NMSE (dB)</text>"#, TOP + ph / 2.0, TOP + ph / 2.0);
    for (i, series) in chart.series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let pts: Vec<String> = series.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        for &(x, y) in &series.points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"><title>{y:.6}</title></circle>"#, px(x), py(y));
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, esc(&series.label));
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(y: f64) -> String {
    let r = (y * 1e6).round() / 1e6;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn file_stem(codec: &str) -> String {
    codec
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Writes one SVG per chart into `dir`, returning the paths in chart order.
pub fn write_charts(rows: &[MetricRow], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for c in charts(rows) {
        let p = dir.join(format!("nmse_{}_vs_{}.svg", file_stem(&c.codec), c.x_axis.name()));
        std::fs::write(&p, render(&c))?;
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(dr_f: f64, d: usize, cr: f64, t: usize, codec: &str, nmse: f64) -> MetricRow {
        MetricRow { dr_f, d, cr, timeslot: t, codec: codec.into(), nmse_db: nmse, wall_seconds: 0.0 }
    }

    #[test]
    fn p2d_rows_chart_against_dr_f_per_d() {
        let rows = vec![
            row(0.5, 1, 1.0, 1, "p2d", -20.0),
            row(0.25, 1, 1.0, 1, "p2d", -15.0),
            row(0.5, 4, 1.0, 1, "p2d", -19.0),
            row(0.25, 4, 1.0, 1, "p2d", -14.0),
        ];
        let c = charts(&rows);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].x_axis, XAxis::DrF);
        assert_eq!(c[0].series.len(), 2);
        assert_eq!(c[0].series[0].label, "D=1");
        assert_eq!(c[0].series[0].points, vec![(0.25, -15.0), (0.5, -20.0)]);
    }

    #[test]
    fn codec_rows_chart_against_cr() {
        let rows = vec![
            row(1.0, 1, 0.25, 1, "ista", -10.0),
            row(1.0, 1, 0.5, 1, "ista", -14.0),
            row(1.0, 1, 0.25, 1, "ae", -8.0),
            row(1.0, 1, 0.5, 1, "ae", -9.0),
        ];
        let c = charts(&rows);
        assert_eq!(c.iter().map(|c| c.codec.as_str()).collect::<Vec<_>>(), ["ista", "ae"]);
        assert!(c.iter().all(|c| c.x_axis == XAxis::Cr && c.series.len() == 1));
    }

    #[test]
    fn svg_only_shows_csv_values() {
        let rows = vec![row(0.5, 1, 1.0, 1, "p2d", -20.5), row(0.125, 1, 1.0, 1, "p2d", -3.25)];
        let svg = render(&charts(&rows)[0]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<title>-20.500000</title>"));
        assert!(svg.contains("<title>-3.250000</title>"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains(">1/8<"));
    }

    #[test]
    fn labels() {
        assert_eq!(ratio_label(0.0625), "1/16");
        assert_eq!(ratio_label(1.0), "1");
        assert_eq!(ratio_label(0.3), "0.3");
        assert_eq!(file_stem("ista/n_phase=4"), "ista_n_phase_4");
    }
}
