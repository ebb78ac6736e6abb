//! CSV to SVG line plots and PPM/SVG heatmaps.
//!
//! Curve files (first column the abscissa) become stacked panels, one per
//! unit, so wavelengths and Q factors of a sweep get separate axes. Map files
//! (first cell [`MAP_CORNER`]) become heatmaps with time across and
//! wavelength up. The colormap is "hot": black, red, yellow, white, with
//! luminance rising monotonically. Intensities are normalized to the map
//! maximum, optionally on a six-decade log scale. Output depends only on the
//! input text and options.

use std::fmt::Write as _;

use crate::config::HeatmapFormat;
use crate::error::{CliError, Result};
use crate::output::MAP_CORNER;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    pub heatmap: HeatmapFormat,
    pub log_scale: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { heatmap: HeatmapFormat::Both, log_scale: false }
    }
}

/// A rendered artifact: file extension and contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub extension: &'static str,
    pub bytes: Vec<u8>,
}

const LOG_DECADES: f64 = 6.0;
const WIDTH: f64 = 760.0;
const PANEL_HEIGHT: f64 = 260.0;
const MARGIN_LEFT: f64 = 90.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 56.0;
const SVG_MAX_COLS: usize = 250;
const SVG_MAX_ROWS: usize = 150;
const PALETTE: [&str; 6] = ["#1f4e9c", "#c0392b", "#2a8c4a", "#8e44ad", "#d68910", "#17202a"];

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn parse(text: &str, context: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let perr = |line: u64, msg: String| CliError::Parse { context: context.to_string(), line: line as usize, msg };
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| perr(e.position().map_or(1, |p| p.line()), e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.len() < 2 {
        return Err(perr(1, format!("need at least 2 columns, found {}", headers.len())));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| perr(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(perr(line, format!("expected {} fields, found {}", headers.len(), rec.len())));
        }
        let vals = rec
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                cell.trim()
                    .parse::<f64>()
                    .map_err(|_| perr(line, format!("column {}: '{cell}' is not a number", col + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(perr(2, "no data rows".into()));
    }
    Ok(Table { headers, rows })
}

/// Renders a curve or map CSV. `context` names the input in error messages.
pub fn render_csv(text: &str, context: &str, opts: &RenderOptions) -> Result<Vec<Rendered>> {
    let table = parse(text, context)?;
    if table.headers[0] == MAP_CORNER {
        heatmap(&table, context, opts)
    } else {
        Ok(vec![Rendered { extension: "svg", bytes: curves_svg(&table, context)?.into_bytes() }])
    }
}

/// Unit suffix of a header, "[nm]" → "nm"; empty when absent.
fn unit_of(header: &str) -> &str {
    match (header.rfind('['), header.rfind(']')) {
        (Some(a), Some(b)) if b > a => &header[a + 1..b],
        _ => "",
    }
}

/// Round tick positions covering [lo, hi].
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![lo];
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil();
    let mut out = Vec::new();
    let mut k = first;
    while k * step <= hi + 1e-9 * step {
        out.push(k * step);
        k += 1.0;
    }
    out
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" { "0".into() } else { s.to_string() }
    }
}

fn range(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        return None;
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn svg_open(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{w:.0}" height="{h:.0}" fill="white"/>"#);
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }
    fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }

    fn axes(&self, out: &mut String, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            self.x0, self.y0, self.w, self.h
        );
        for t in ticks(self.xr.0, self.xr.1) {
            let x = self.px(t);
            let yb = self.y0 + self.h;
            let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{yb:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, yb + 5.0);
            let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, yb + 18.0, tick_label(t));
        }
        for t in ticks(self.yr.0, self.yr.1) {
            let y = self.py(t);
            let _ = writeln!(out, r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/>"#, self.x0 - 5.0, self.x0);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, self.x0 - 8.0, y + 4.0, tick_label(t));
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            self.x0 + 0.5 * self.w,
            self.y0 + self.h + 38.0,
            escape(xlabel)
        );
        let (lx, ly) = (self.x0 - 68.0, self.y0 + 0.5 * self.h);
        let _ = writeln!(
            out,
            r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
            escape(ylabel)
        );
    }
}

fn curves_svg(t: &Table, context: &str) -> Result<String> {
    // one panel per unit, in order of first appearance
    let mut panels: Vec<(String, Vec<usize>)> = Vec::new();
    for (c, h) in t.headers.iter().enumerate().skip(1) {
        let u = unit_of(h).to_string();
        match panels.iter_mut().find(|(pu, _)| *pu == u) {
            Some((_, cols)) => cols.push(c),
            None => panels.push((u, vec![c])),
        }
    }
    let xr = range(t.rows.iter().map(|r| r[0])).ok_or_else(|| CliError::Parse {
        context: context.into(),
        line: 2,
        msg: "abscissa has no finite values".into(),
    })?;
    let height = panels.len() as f64 * (PANEL_HEIGHT + MARGIN_TOP + MARGIN_BOTTOM);
    let mut out = String::new();
    svg_open(&mut out, WIDTH, height);
    for (k, (unit, cols)) in panels.iter().enumerate() {
        let yr = range(cols.iter().flat_map(|&c| t.rows.iter().map(move |r| r[c]))).ok_or_else(|| CliError::Parse {
            context: context.into(),
            line: 2,
            msg: format!("columns in [{unit}] have no finite values"),
        })?;
        let f = Frame {
            x0: MARGIN_LEFT,
            y0: MARGIN_TOP + k as f64 * (PANEL_HEIGHT + MARGIN_TOP + MARGIN_BOTTOM),
            w: WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
            h: PANEL_HEIGHT,
            xr,
            yr,
        };
        let ylabel = if cols.len() == 1 { t.headers[cols[0]].clone() } else { format!("[{unit}]") };
        f.axes(&mut out, &t.headers[0], &ylabel);
        for (j, &c) in cols.iter().enumerate() {
            let color = PALETTE[j % PALETTE.len()];
            // NaN or infinite samples break the line
            let mut segs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
            for r in &t.rows {
                if r[0].is_finite() && r[c].is_finite() {
                    segs.last_mut().unwrap().push((f.px(r[0]), f.py(r[c])));
                } else if !segs.last().unwrap().is_empty() {
                    segs.push(Vec::new());
                }
            }
            for s in segs.iter().filter(|s| !s.is_empty()) {
                let pts = s.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect::<Vec<_>>().join(" ");
                let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>"#);
            }
            let ly = f.y0 + 14.0 + 16.0 * j as f64;
            let lx = f.x0 + f.w + 12.0;
            let _ = writeln!(out, r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#, ly - 4.0, lx + 18.0, ly - 4.0);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 24.0, escape(&t.headers[c]));
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// "hot" colormap on [0, 1].
pub fn hot(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let ch = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(3.0 * v), ch(3.0 * v - 1.0), ch(3.0 * v - 2.0)]
}

struct Map {
    times: Vec<f64>,
    lambdas: Vec<f64>,
    /// normalized to [0, 1]; [time][wavelength]
    level: Vec<Vec<f64>>,
}

fn to_map(t: &Table, context: &str, log_scale: bool) -> Result<Map> {
    let perr = |line: usize, msg: String| CliError::Parse { context: context.into(), line, msg };
    let lambdas = t.headers[1..]
        .iter()
        .enumerate()
        .map(|(i, h)| h.trim().parse::<f64>().map_err(|_| perr(1, format!("column {}: '{h}' is not a wavelength", i + 2))))
        .collect::<Result<Vec<f64>>>()?;
    let times: Vec<f64> = t.rows.iter().map(|r| r[0]).collect();
    for (i, r) in t.rows.iter().enumerate() {
        if let Some(c) = r.iter().position(|v| !v.is_finite()) {
            return Err(perr(i + 2, format!("column {}: non-finite value", c + 1)));
        }
        if let Some(c) = r[1..].iter().position(|v| *v < 0.0) {
            return Err(perr(i + 2, format!("column {}: negative intensity", c + 2)));
        }
    }
    let max = t.rows.iter().flat_map(|r| r[1..].iter()).fold(0.0_f64, |m, v| m.max(*v));
    if !(max > 0.0) {
        return Err(perr(2, "map has no positive intensity".into()));
    }
    let level = t
        .rows
        .iter()
        .map(|r| {
            r[1..]
                .iter()
                .map(|v| {
                    let x = v / max;
                    if log_scale {
                        1.0 + x.max(10f64.powf(-LOG_DECADES)).log10() / LOG_DECADES
                    } else {
                        x
                    }
                })
                .collect()
        })
        .collect();
    Ok(Map { times, lambdas, level })
}

fn heatmap(t: &Table, context: &str, opts: &RenderOptions) -> Result<Vec<Rendered>> {
    let m = to_map(t, context, opts.log_scale)?;
    let mut out = Vec::new();
    if matches!(opts.heatmap, HeatmapFormat::Ppm | HeatmapFormat::Both) {
        out.push(Rendered { extension: "ppm", bytes: ppm(&m) });
    }
    if matches!(opts.heatmap, HeatmapFormat::Svg | HeatmapFormat::Both) {
        out.push(Rendered { extension: "svg", bytes: heatmap_svg(&m, opts.log_scale).into_bytes() });
    }
    Ok(out)
}

/// Binary PPM, one pixel per sample; time runs left to right and the
/// longest wavelength is the top row.
fn ppm(m: &Map) -> Vec<u8> {
    let (w, h) = (m.times.len(), m.lambdas.len());
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    for j in (0..h).rev() {
        for row in &m.level {
            bytes.extend_from_slice(&hot(row[j]));
        }
    }
    bytes
}

/// Block averages of `n` samples into at most `max` bins: (start, end) index.
fn bins(n: usize, max: usize) -> Vec<(usize, usize)> {
    let k = n.min(max);
    (0..k).map(|b| (b * n / k, ((b + 1) * n / k).max(b * n / k + 1))).collect()
}

fn heatmap_svg(m: &Map, log_scale: bool) -> String {
    let plot_h = 2.0 * PANEL_HEIGHT;
    let f = Frame {
        x0: MARGIN_LEFT,
        y0: MARGIN_TOP,
        w: WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        h: plot_h,
        xr: (m.times[0], *m.times.last().unwrap()),
        yr: (m.lambdas[0], *m.lambdas.last().unwrap()),
    };
    let mut out = String::new();
    svg_open(&mut out, WIDTH, plot_h + MARGIN_TOP + MARGIN_BOTTOM);
    let tb = bins(m.times.len(), SVG_MAX_COLS);
    let lb = bins(m.lambdas.len(), SVG_MAX_ROWS);
    let cw = f.w / tb.len() as f64;
    let ch = f.h / lb.len() as f64;
    for (i, &(ta, tz)) in tb.iter().enumerate() {
        for (j, &(la, lz)) in lb.iter().enumerate() {
            let mut s = 0.0;
            for row in &m.level[ta..tz] {
                s += row[la..lz].iter().sum::<f64>();
            }
            let v = s / ((tz - ta) * (lz - la)) as f64;
            let [r, g, b] = hot(v);
            let x = f.x0 + i as f64 * cw;
            let y = f.y0 + f.h - (j + 1) as f64 * ch;
            let _ = writeln!(
                out,
                r##"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#{r:02x}{g:02x}{b:02x}"/>"##,
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    f.axes(&mut out, "time [ps]", "wavelength [nm]");
    // colorbar
    let bx = f.x0 + f.w + 20.0;
    let steps = 64;
    for k in 0..steps {
        let v = (k as f64 + 0.5) / steps as f64;
        let [r, g, b] = hot(v);
        let y = f.y0 + f.h * (1.0 - (k + 1) as f64 / steps as f64);
        let _ = writeln!(
            out,
            r##"<rect x="{bx:.2}" y="{y:.2}" width="16" height="{:.2}" fill="#{r:02x}{g:02x}{b:02x}"/>"##,
            f.h / steps as f64 + 0.05
        );
    }
    let (top, bottom, label) = if log_scale {
        ("1".to_string(), format!("1e-{LOG_DECADES:.0}"), "intensity / max [log]")
    } else {
        ("1".to_string(), "0".to_string(), "intensity / max [-]")
    };
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{top}</text>"#, bx + 22.0, f.y0 + 10.0);
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{bottom}</text>"#, bx + 22.0, f.y0 + f.h);
    let (lx, ly) = (bx + 60.0, f.y0 + 0.5 * f.h);
    let _ = writeln!(out, r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{label}</text>"#);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CURVES: &str = "control [nm],lambda1 [nm],lambda2 [nm],q1 [-],q2 [-]\n-1,1552.1,1551,5000,2000\n0,1552.2,1551.9,4000,3000\n1,1552.5,1552,6000,2500\n";

    #[test]
    fn colormap_is_monotone() {
        let lum = |c: [u8; 3]| 0.2126 * c[0] as f64 + 0.7152 * c[1] as f64 + 0.0722 * c[2] as f64;
        let mut prev = -1.0;
        for k in 0..=1000 {
            let l = lum(hot(k as f64 / 1000.0));
            assert!(l >= prev);
            prev = l;
        }
        assert_eq!(hot(0.0), [0, 0, 0]);
        assert_eq!(hot(1.0), [255, 255, 255]);
    }

    #[test]
    fn curves_group_by_unit() {
        let r = render_csv(CURVES, "sweep.csv", &RenderOptions::default()).unwrap();
        assert_eq!(r.len(), 1);
        let svg = String::from_utf8(r[0].bytes.clone()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.contains("control [nm]") && svg.contains("q2 [-]"));
        // two panels: two frame rectangles besides the background
        assert_eq!(svg.matches(r#"fill="none" stroke="black""#).count(), 2);
    }

    #[test]
    fn map_renders_both_formats() {
        let text = format!("{MAP_CORNER},1551,1552,1553\n0,0,1,0\n10,0.5,2,0.5\n");
        let r = render_csv(&text, "map.csv", &RenderOptions::default()).unwrap();
        assert_eq!(r[0].extension, "ppm");
        assert!(r[0].bytes.starts_with(b"P6\n2 3\n255\n"));
        assert_eq!(r[0].bytes.len(), 11 + 2 * 3 * 3);
        // brightest sample (t = 10, 1552 nm) is white
        assert_eq!(&r[0].bytes[11 + 3 * 3..11 + 3 * 3 + 3], &[255, 255, 255]);
        assert_eq!(r[1].extension, "svg");
        let again = render_csv(&text, "map.csv", &RenderOptions::default()).unwrap();
        assert_eq!(r, again);
        let log = render_csv(&text, "map.csv", &RenderOptions { log_scale: true, ..Default::default() }).unwrap();
        assert_ne!(log[0], r[0]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = render_csv("time [ps],y [arb.]\n0,1\n1,abc\n", "c.csv", &RenderOptions::default()).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let e = render_csv("time [ps],y [arb.]\n", "c.csv", &RenderOptions::default()).unwrap_err();
        assert!(e.to_string().contains("no data rows"), "{e}");
        let e = render_csv("time [ps],y [arb.]\n0,1\n1,2,3\n", "c.csv", &RenderOptions::default()).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let e = render_csv(&format!("{MAP_CORNER},1551,1552\n0,0,0\n"), "m.csv", &RenderOptions::default()).unwrap_err();
        assert!(e.to_string().contains("no positive"), "{e}");
    }

    #[test]
    fn tick_positions() {
        assert_eq!(ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(tick_label(1552.25), "1552.25");
        assert_eq!(tick_label(3e9), "3.00e9");
    }
}
