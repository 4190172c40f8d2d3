//! Self-contained SVG line plots (inline styles, no external assets).

use std::fmt::Write as _;

use crate::sim::Trajectory;

const WIDTH: f64 = 960.0;
const PANEL_HEIGHT: f64 = 300.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 190.0;
const MARGIN_TOP: f64 = 40.0;
const PANEL_GAP: f64 = 60.0;
const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22",
];
/// Buckets per series when thinning dense records.
const BUCKETS: usize = 1500;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub y_label: String,
    pub series: Vec<Series>,
    /// Signed logarithmic y axis, `sign(y) log10(1 + |y|)`.
    pub symlog: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub panels: Vec<Panel>,
}

fn symlog(y: f64) -> f64 {
    y.signum() * y.abs().ln_1p() / std::f64::consts::LN_10
}

/// Keeps the first, smallest, largest and last point of each time bucket, so
/// spikes survive thinning.
pub fn thin(points: &[(f64, f64)], buckets: usize) -> Vec<(f64, f64)> {
    if points.len() <= 4 * buckets {
        return points.to_vec();
    }
    let (t0, t1) = (points[0].0, points[points.len() - 1].0);
    let width = (t1 - t0) / buckets as f64;
    let mut out = Vec::with_capacity(4 * buckets + 1);
    let mut start = 0;
    while start < points.len() {
        let b = (((points[start].0 - t0) / width) as usize).min(buckets - 1);
        let limit = t0 + (b + 1) as f64 * width;
        let mut end = start + 1;
        while end < points.len() && (points[end].0 < limit || b == buckets - 1) {
            end += 1;
        }
        let chunk = &points[start..end];
        let lo = chunk.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).map(|x| x.0).unwrap_or(0);
        let hi = chunk.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).map(|x| x.0).unwrap_or(0);
        let mut idx = vec![0, lo, hi, chunk.len() - 1];
        idx.sort_unstable();
        idx.dedup();
        out.extend(idx.into_iter().map(|i| chunk[i]));
        start = end;
    }
    out
}

/// State components and control of one run, thinned for plotting.
pub fn trajectory_series(label: &str, traj: &Trajectory) -> (Vec<Series>, Series) {
    let times = traj.times();
    let states = (0..traj.order())
        .map(|i| {
            let pts: Vec<_> = times.iter().enumerate().map(|(k, &t)| (t, traj.state(k)[i])).collect();
            Series {
                label: format!("{label} x{}", i + 1),
                points: thin(&pts, BUCKETS),
            }
        })
        .collect();
    let pts: Vec<_> = times.iter().copied().zip(traj.controls().iter().copied()).collect();
    let control = Series {
        label: format!("{label} u"),
        points: thin(&pts, BUCKETS),
    };
    (states, control)
}

/// Two panels: all state components, then all controls.
pub fn trajectory_figure(title: &str, runs: Vec<(Vec<Series>, Series)>, symlog: bool) -> Figure {
    let mut states = Vec::new();
    let mut controls = Vec::new();
    for (s, c) in runs {
        states.extend(s);
        controls.push(c);
    }
    Figure {
        title: title.to_string(),
        x_label: "t".into(),
        panels: vec![
            Panel {
                y_label: "x".into(),
                series: states,
                symlog,
            },
            Panel {
                y_label: "u".into(),
                series: controls,
                symlog,
            },
        ],
    }
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo, 6);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// Ticks at `0, +-10^k` expressed in transformed coordinates.
fn symlog_ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    let mut out = Vec::new();
    let top = lo.abs().max(hi.abs()).ceil() as i32 + 1;
    let stride = (top / 8).max(1);
    for k in (0..=top).step_by(stride as usize) {
        let v = 10f64.powi(k);
        for s in [-1.0, 1.0] {
            let y = symlog(s * v);
            if y >= lo && y <= hi {
                out.push((y, format!("{}1e{k}", if s < 0.0 { "-" } else { "" })));
            }
        }
    }
    if lo <= 0.0 && hi >= 0.0 {
        out.push((0.0, "0".into()));
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Figure {
    pub fn render(&self) -> String {
        let height = MARGIN_TOP + self.panels.len() as f64 * (PANEL_HEIGHT + PANEL_GAP);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let x_range = self.x_range();
        for (i, panel) in self.panels.iter().enumerate() {
            let top = MARGIN_TOP + i as f64 * (PANEL_HEIGHT + PANEL_GAP);
            self.render_panel(&mut out, panel, top, x_range);
        }
        out.push_str("</svg>\n");
        out
    }

    fn x_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in self.panels.iter().flat_map(|p| &p.series) {
            for &(x, _) in &s.points {
                if x.is_finite() {
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
            }
        }
        widen(lo, hi)
    }

    fn render_panel(&self, out: &mut String, panel: &Panel, top: f64, (x0, x1): (f64, f64)) {
        let tf = |y: f64| if panel.symlog { symlog(y) } else { y };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &panel.series {
            for &(_, y) in &s.points {
                let y = tf(y);
                if y.is_finite() {
                    lo = lo.min(y);
                    hi = hi.max(y);
                }
            }
        }
        let (y0, y1) = widen(lo, hi);
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let px = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
        let py = |y: f64| top + PANEL_HEIGHT - (y - y0) / (y1 - y0) * PANEL_HEIGHT;
        let _ = writeln!(
            out,
            r##"<rect x="{MARGIN_LEFT}" y="{top}" width="{plot_w}" height="{PANEL_HEIGHT}" fill="none" stroke="#333"/>"##
        );
        let y_ticks: Vec<(f64, String)> = if panel.symlog {
            symlog_ticks(y0, y1)
        } else {
            linear_ticks(y0, y1).into_iter().map(|v| (v, fmt_tick(v))).collect()
        };
        for (v, label) in y_ticks {
            let y = py(v);
            let _ = writeln!(
                out,
                r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
                MARGIN_LEFT + plot_w,
                MARGIN_LEFT - 6.0,
                y + 4.0
            );
        }
        for v in linear_ticks(x0, x1) {
            let x = px(v);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{:.2}" stroke="#eee"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                top + PANEL_HEIGHT,
                top + PANEL_HEIGHT + 16.0,
                fmt_tick(v)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            top + PANEL_HEIGHT + 34.0,
            escape(&self.x_label)
        );
        let label = if panel.symlog {
            format!("{} (symlog)", panel.y_label)
        } else {
            panel.y_label.clone()
        };
        let _ = writeln!(
            out,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            top + PANEL_HEIGHT / 2.0,
            top + PANEL_HEIGHT / 2.0,
            escape(&label)
        );
        for (k, s) in panel.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let mut d = String::new();
            for &(x, y) in &s.points {
                let y = tf(y);
                if x.is_finite() && y.is_finite() {
                    let _ = write!(d, "{}{:.2},{:.2}", if d.is_empty() { "M" } else { " L" }, px(x), py(y));
                }
            }
            let _ = writeln!(
                out,
                r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.3"/>"#
            );
            let ly = top + 14.0 + 16.0 * k as f64;
            let lx = MARGIN_LEFT + plot_w + 12.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                ly - 4.0,
                lx + 20.0,
                ly - 4.0,
                lx + 26.0,
                ly,
                escape(&s.label)
            );
        }
    }
}

fn widen(lo: f64, hi: f64) -> (f64, f64) {
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}
