//! Deterministic SVG rendering of the CSV artifacts.
//!
//! Coordinates are printed with fixed precision so identical tables give
//! byte-identical documents.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write;

use crate::table::Table;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub enum PlotKind {
    /// First column on x, one polyline per remaining column.
    Lines,
    /// `index, q10, q50, q90`: one line per quantile, log10 y-axis.
    Spectrum,
    /// Points `(x, y)` colored by the input position `(x_1, x_2)`.
    Scatter { x: String, y: String },
    /// Lattice over `(x_1, x_2)` with one cell per point, hue from
    /// `atan2(f2, f1)` and lightness from the radius.
    FeatureMap { f1: String, f2: String },
    /// Lattice over `(offset_1, offset_2)`, gray level from `value`.
    Heatmap { value: String },
    /// One polyline of `y` against `x` per distinct `group` value.
    Grouped { x: String, y: String, group: String, log_x: bool },
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: &[f64], ys: &[f64]) -> Self {
        let (x0, x1) = span(xs);
        let (y0, y1) = span(ys);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn span(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().filter(|x| x.is_finite()).fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn open(title: &str) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    );
    let _ = writeln!(s, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
    s
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        "<rect x=\"{l}\" y=\"{t}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        r - l,
        b - t
    );
    let label = |s: &mut String, x: f64, y: f64, anchor: &str, text: &str| {
        let _ = writeln!(
            s,
            "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            escape(text)
        );
    };
    label(s, l, b + 16.0, "start", &tick(f.x0));
    label(s, r, b + 16.0, "end", &tick(f.x1));
    label(s, l - 4.0, b, "end", &tick(f.y0));
    label(s, l - 4.0, t + 10.0, "end", &tick(f.y1));
    label(s, (l + r) / 2.0, b + 34.0, "middle", xlabel);
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(s: &mut String, f: &Frame, xs: &[f64], ys: &[f64], color: &str) {
    let pts: Vec<String> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| format!("{:.2},{:.2}", f.px(*x), f.py(*y)))
        .collect();
    let _ = writeln!(
        s,
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>",
        pts.join(" ")
    );
}

fn legend(s: &mut String, entries: &[(String, &str)]) {
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = MARGIN + 14.0 + 14.0 * i as f64;
        let x = WIDTH - MARGIN - 110.0;
        let _ = writeln!(s, "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>", y - 4.0, x + 16.0, y - 4.0);
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{y:.1}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>",
            x + 20.0,
            escape(name)
        );
    }
}

/// HSL (degrees, fractions) to `#rrggbb`.
pub fn hsl_hex(h: f64, s: f64, l: f64) -> String {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let byte = |v: f64| ((v + m).clamp(0.0, 1.0) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", byte(r), byte(g), byte(b))
}

/// Color of a 2-vector: hue = atan2(y, x), lightness rising from 15% at the
/// origin to 85% at `r_max`.
pub fn polar_color(x: f64, y: f64, r_max: f64) -> String {
    let hue = y.atan2(x) * 180.0 / PI;
    let rel = if r_max > 0.0 { (x.hypot(y) / r_max).min(1.0) } else { 0.0 };
    hsl_hex(hue, 0.8, 0.15 + 0.7 * rel)
}

fn column(t: &Table, name: &str) -> Result<Vec<f64>, String> {
    let idx = t.column_index(name).ok_or_else(|| format!("missing column `{name}`"))?;
    t.numeric(idx)
}

/// Sorted distinct values and the index of each entry among them.
fn lattice_axis(v: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut u = v.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    let idx = v.iter().map(|x| u.binary_search_by(|p| p.total_cmp(x)).unwrap()).collect();
    (u, idx)
}

fn lattice(t: &Table, xa: &str, xb: &str) -> Result<(usize, usize, Vec<usize>, Vec<usize>, Frame), String> {
    let a = column(t, xa)?;
    let b = column(t, xb)?;
    let (ua, ia) = lattice_axis(&a);
    let (ub, ib) = lattice_axis(&b);
    if ua.len() < 2 || ub.len() < 2 || ua.len() * ub.len() != t.rows.len() {
        return Err(format!(
            "expected a full lattice over ({xa}, {xb}); found {} x {} distinct values for {} rows",
            ua.len(),
            ub.len(),
            t.rows.len()
        ));
    }
    let frame = Frame::fit(&a, &b);
    Ok((ua.len(), ub.len(), ia, ib, frame))
}

fn cells(s: &mut String, na: usize, nb: usize, ia: &[usize], ib: &[usize], colors: &[String]) {
    let w = (WIDTH - 2.0 * MARGIN) / na as f64;
    let h = (HEIGHT - 2.0 * MARGIN) / nb as f64;
    for ((a, b), c) in ia.iter().zip(ib).zip(colors) {
        let _ = writeln!(
            s,
            "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"{c}\"/>",
            MARGIN + *a as f64 * w,
            HEIGHT - MARGIN - (*b + 1) as f64 * h,
            w,
            h
        );
    }
}

/// Render `csv` as a standalone SVG document of the given kind.
pub fn render_svg(csv: &str, kind: &PlotKind) -> Result<String, String> {
    let t = Table::parse(csv)?;
    if t.rows.is_empty() {
        return Err("table has no rows".into());
    }
    let title = t.meta_value("command").unwrap_or("deep-prior-lab").to_string();
    let mut s = open(&title);
    match kind {
        PlotKind::Lines => {
            if t.header.len() < 2 {
                return Err("line plot needs at least two columns".into());
            }
            let xs = t.numeric(0)?;
            let series: Vec<Vec<f64>> = (1..t.header.len()).map(|i| t.numeric(i)).collect::<Result<_, _>>()?;
            let all: Vec<f64> = series.concat();
            let f = Frame::fit(&xs, &all);
            axes(&mut s, &f, &t.header[0], "value");
            let mut entries = Vec::new();
            for (i, ys) in series.iter().enumerate() {
                let color = PALETTE[i % PALETTE.len()];
                polyline(&mut s, &f, &xs, ys, color);
                entries.push((t.header[i + 1].clone(), color));
            }
            if entries.len() <= 12 {
                legend(&mut s, &entries);
            }
        }
        PlotKind::Spectrum => {
            if t.header != ["index", "q10", "q50", "q90"] {
                return Err(format!("spectrum plot expects index,q10,q50,q90; got {}", t.header.join(",")));
            }
            let xs = t.numeric(0)?;
            let logs: Vec<Vec<f64>> = (1..4)
                .map(|i| t.numeric(i).map(|v| v.iter().map(|y| y.max(f64::MIN_POSITIVE).log10()).collect()))
                .collect::<Result<_, _>>()?;
            let f = Frame::fit(&xs, &logs.concat());
            axes(&mut s, &f, "singular value index", "log10 s_i / s_1");
            let mut entries = Vec::new();
            for (i, ys) in logs.iter().enumerate() {
                polyline(&mut s, &f, &xs, ys, PALETTE[i]);
                entries.push((t.header[i + 1].clone(), PALETTE[i]));
            }
            legend(&mut s, &entries);
        }
        PlotKind::Scatter { x, y } => {
            let xs = column(&t, x)?;
            let ys = column(&t, y)?;
            let a = column(&t, "x_1")?;
            let b = column(&t, "x_2")?;
            let r_max = a.iter().zip(&b).map(|(u, v)| u.hypot(*v)).fold(0.0, f64::max);
            let f = Frame::fit(&xs, &ys);
            axes(&mut s, &f, x, y);
            for i in 0..xs.len() {
                if !(xs[i].is_finite() && ys[i].is_finite()) {
                    continue;
                }
                let _ = writeln!(
                    s,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.8\" fill=\"{}\"/>",
                    f.px(xs[i]),
                    f.py(ys[i]),
                    polar_color(a[i], b[i], r_max)
                );
            }
        }
        PlotKind::FeatureMap { f1, f2 } => {
            let (na, nb, ia, ib, frame) = lattice(&t, "x_1", "x_2")?;
            let u = column(&t, f1)?;
            let v = column(&t, f2)?;
            let r_max = u.iter().zip(&v).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max);
            let colors: Vec<String> = u.iter().zip(&v).map(|(a, b)| polar_color(*a, *b, r_max)).collect();
            cells(&mut s, na, nb, &ia, &ib, &colors);
            axes(&mut s, &frame, "x_1", "x_2");
        }
        PlotKind::Heatmap { value } => {
            let (na, nb, ia, ib, frame) = lattice(&t, "offset_1", "offset_2")?;
            let z = column(&t, value)?;
            let (lo, hi) = span(&z);
            let colors: Vec<String> = z
                .iter()
                .map(|v| {
                    let g = (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8;
                    format!("#{g:02x}{g:02x}{g:02x}")
                })
                .collect();
            cells(&mut s, na, nb, &ia, &ib, &colors);
            axes(&mut s, &frame, "offset_1", "offset_2");
        }
        PlotKind::Grouped { x, y, group, log_x } => {
            let gi = t.column_index(group).ok_or_else(|| format!("missing column `{group}`"))?;
            let mut xs = column(&t, x)?;
            if *log_x {
                xs = xs.iter().map(|v| v.log10()).collect();
            }
            let ys = column(&t, y)?;
            // groups in order of first appearance
            let mut order: Vec<String> = Vec::new();
            let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            for (i, r) in t.rows.iter().enumerate() {
                if !members.contains_key(&r[gi]) {
                    order.push(r[gi].clone());
                }
                members.entry(r[gi].clone()).or_default().push(i);
            }
            let f = Frame::fit(&xs, &ys);
            axes(&mut s, &f, &if *log_x { format!("log10 {x}") } else { x.clone() }, y);
            let mut entries = Vec::new();
            for (k, g) in order.iter().enumerate() {
                let idx = &members[g];
                let gx: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
                let gy: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
                let color = PALETTE[k % PALETTE.len()];
                polyline(&mut s, &f, &gx, &gy, color);
                entries.push((format!("{group}={g}"), color));
            }
            legend(&mut s, &entries);
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}
