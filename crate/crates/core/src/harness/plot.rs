use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One rendered figure.
#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    /// File name, e.g. `rmse_vs_time.svg`.
    pub name: String,
    pub svg: String,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

type Row = BTreeMap<String, String>;

fn parse(text: &str) -> Result<(Vec<String>, Vec<Row>)> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    let headers: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        rows.push(headers.iter().cloned().zip(rec.iter().map(String::from)).collect());
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument("CSV has no data rows".into()));
    }
    Ok((headers, rows))
}

fn num(r: &Row, k: &str) -> Option<f64> {
    r.get(k)?.parse().ok().filter(|v: &f64| v.is_finite())
}

fn text(r: &Row, k: &str) -> String {
    r.get(k).cloned().unwrap_or_default()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() < 1e-3 || v.abs() >= 1e5 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// About five round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn padded(vals: impl Iterator<Item = f64>, from_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if from_zero {
        lo = lo.min(0.0);
    }
    if hi - lo < 1e-12 * hi.abs().max(1.0) {
        let d = if hi == 0.0 { 1.0 } else { 0.1 * hi.abs() };
        return (lo - if from_zero && lo == 0.0 { 0.0 } else { d }, hi + d);
    }
    let pad = 0.05 * (hi - lo);
    hi += pad;
    if !(from_zero && lo == 0.0) {
        lo -= pad;
    }
    (lo, hi)
}

/// Plot frame with linear axes.
struct Canvas {
    x: (f64, f64),
    y: (f64, f64),
    body: String,
    legend: Vec<(String, String)>,
}

impl Canvas {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Self {
            x,
            y,
            body: String::new(),
            legend: Vec::new(),
        }
    }

    fn sx(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn sy(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn line(&mut self, pts: &[(f64, f64)], color: &str) {
        if pts.len() > 1 {
            let d: Vec<String> = pts
                .iter()
                .map(|(x, y)| format!("{:.2},{:.2}", self.sx(*x), self.sy(*y)))
                .collect();
            let _ = writeln!(
                self.body,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
                d.join(" ")
            );
        }
    }

    fn markers(&mut self, pts: &[(f64, f64)], color: &str) {
        for (x, y) in pts {
            let _ = writeln!(
                self.body,
                r#"<circle class="mark" cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#,
                self.sx(*x),
                self.sy(*y)
            );
        }
    }

    fn band(&mut self, lower: &[(f64, f64)], upper: &[(f64, f64)], color: &str) {
        let mut d: Vec<String> = upper
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", self.sx(*x), self.sy(*y)))
            .collect();
        d.extend(lower.iter().rev().map(|(x, y)| format!("{:.2},{:.2}", self.sx(*x), self.sy(*y))));
        let _ = writeln!(
            self.body,
            r#"<polygon class="band" fill="{color}" fill-opacity="0.25" stroke="none" points="{}"/>"#,
            d.join(" ")
        );
    }

    fn bar(&mut self, x0: f64, x1: f64, y: f64, color: &str) {
        let (px0, px1) = (self.sx(x0), self.sx(x1));
        let (top, base) = (self.sy(y), self.sy(self.y.0.max(0.0)));
        let _ = writeln!(
            self.body,
            r#"<rect class="mark" x="{px0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
            top.min(base),
            px1 - px0,
            (base - top).abs()
        );
    }

    fn finish(self, title: &str, xlabel: &str, ylabel: &str, xticks: Option<Vec<(f64, String)>>) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            (LEFT + W - RIGHT) / 2.0,
            esc(title)
        );
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(s, r##"<g stroke="#bbb" stroke-width="0.5">"##);
        let yt = ticks(self.y.0, self.y.1);
        for v in &yt {
            let y = self.sy(*v);
            let _ = writeln!(s, r#"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}"/>"#);
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(
            s,
            r##"<path d="M{x0},{y0} V{y1} H{x1}" fill="none" stroke="#000"/>"##
        );
        for v in &yt {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                x0 - 6.0,
                self.sy(*v) + 4.0,
                fmt_num(*v)
            );
        }
        let xt = xticks.unwrap_or_else(|| {
            ticks(self.x.0, self.x.1)
                .into_iter()
                .map(|v| (v, fmt_num(v)))
                .collect()
        });
        for (v, label) in &xt {
            let x = self.sx(*v);
            let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{y1}" x2="{x:.2}" y2="{:.1}" stroke="#000"/>"##, y1 + 4.0);
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
                y1 + 18.0,
                esc(label)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            H - 14.0,
            esc(xlabel)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate(18,{:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
            (y0 + y1) / 2.0,
            esc(ylabel)
        );
        s.push_str(&self.body);
        for (k, (label, color)) in self.legend.iter().enumerate() {
            let y = TOP + 10.0 + 18.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="12" height="12" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                W - RIGHT + 14.0,
                y - 10.0,
                W - RIGHT + 32.0,
                y,
                esc(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn rmse_vs_time(rows: &[Row]) -> Result<Plot> {
    let pick = |k: &str| -> Vec<(f64, f64)> {
        rows.iter()
            .filter_map(|r| Some((num(r, "step")?, num(r, k)?)))
            .collect()
    };
    let (rmse, lo, hi) = (pick("rmse"), pick("q10"), pick("q90"));
    if rmse.is_empty() {
        return Err(Error::InvalidArgument("no numeric rows to plot".into()));
    }
    let xr = padded(rmse.iter().map(|p| p.0), false);
    let yr = padded(rmse.iter().chain(&lo).chain(&hi).map(|p| p.1), true);
    let mut c = Canvas::new(xr, yr);
    c.band(&lo, &hi, PALETTE[0]);
    c.line(&rmse, PALETTE[0]);
    if rmse.len() == 1 {
        c.markers(&rmse, PALETTE[0]);
    }
    c.legend.push(("RMSE".into(), PALETTE[0].into()));
    c.legend.push(("10-90% band".into(), "#a6c8e4".into()));
    Ok(Plot {
        name: "rmse_vs_time.svg".into(),
        svg: c.finish("Position RMSE over time", "time step", "RMSE (m)", None),
    })
}

/// Rows grouped into labelled series of (x, y) points sorted by x.
fn series(rows: &[Row], x: &str, y: &str, keys: &[&str]) -> Vec<(String, Vec<(f64, f64)>)> {
    // label only with the keys that actually vary
    let varying: Vec<&str> = keys
        .iter()
        .copied()
        .filter(|k| {
            let first = text(&rows[0], k);
            rows.iter().any(|r| text(r, k) != first)
        })
        .collect();
    let mut out: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        if r.get("status").is_some_and(|s| s != "ok") {
            continue;
        }
        let (Some(xv), Some(yv)) = (num(r, x), num(r, y)) else {
            continue;
        };
        let label = if varying.is_empty() {
            keys.first().map(|k| format!("{k}={}", text(r, k))).unwrap_or_default()
        } else {
            varying.iter().map(|k| format!("{k}={}", text(r, k))).collect::<Vec<_>>().join(" ")
        };
        out.entry(label).or_default().push((xv, yv));
    }
    out.into_iter()
        .map(|(k, mut v)| {
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            (k, v)
        })
        .collect()
}

fn line_plot(
    name: &str,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    data: Vec<(String, Vec<(f64, f64)>)>,
) -> Result<Plot> {
    if data.iter().all(|(_, v)| v.is_empty()) {
        return Err(Error::InvalidArgument(format!("nothing to plot for {name}")));
    }
    let xr = padded(data.iter().flat_map(|(_, v)| v.iter().map(|p| p.0)), false);
    let yr = padded(data.iter().flat_map(|(_, v)| v.iter().map(|p| p.1)), true);
    let mut c = Canvas::new(xr, yr);
    for (k, (label, pts)) in data.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        c.line(pts, color);
        c.markers(pts, color);
        c.legend.push((label.clone(), color.into()));
    }
    Ok(Plot {
        name: name.into(),
        svg: c.finish(title, xlabel, ylabel, None),
    })
}

fn los_vs_mpc(rows: &[Row]) -> Option<Plot> {
    // first ok row per (J, mode)
    let mut by_j: BTreeMap<i64, BTreeMap<String, f64>> = BTreeMap::new();
    for r in rows {
        if r.get("status").is_some_and(|s| s != "ok") {
            continue;
        }
        let (Some(j), Some(v)) = (num(r, "J"), num(r, "rmse")) else {
            continue;
        };
        by_j.entry(j as i64).or_default().entry(text(r, "mode")).or_insert(v);
    }
    let modes: Vec<String> = {
        let mut m: Vec<String> = by_j.values().flat_map(|v| v.keys().cloned()).collect();
        m.sort();
        m.dedup();
        m
    };
    if modes.len() < 2 {
        return None;
    }
    let n = by_j.len() as f64;
    let yr = padded(by_j.values().flat_map(|v| v.values().copied()), true);
    let mut c = Canvas::new((0.0, n), yr);
    let width = 0.8 / modes.len() as f64;
    let mut xt = Vec::new();
    for (g, (j, vals)) in by_j.iter().enumerate() {
        for (k, m) in modes.iter().enumerate() {
            if let Some(v) = vals.get(m) {
                let x0 = g as f64 + 0.1 + k as f64 * width;
                c.bar(x0, x0 + width, *v, PALETTE[k % PALETTE.len()]);
            }
        }
        xt.push((g as f64 + 0.5, j.to_string()));
    }
    for (k, m) in modes.iter().enumerate() {
        c.legend.push((m.to_uppercase(), PALETTE[k % PALETTE.len()].into()));
    }
    Some(Plot {
        name: "los_vs_mpc.svg".into(),
        svg: c.finish("Direct path only vs multipath", "panels J", "RMSE (m)", Some(xt)),
    })
}

/// Renders every figure the CSV supports. The CSV kind is recognized by
/// its columns: per-step error curves (`step,rmse,q10,q90`), latency
/// tables (`J,N_p,total_s`) or sweep tables.
pub fn render_plots(csv_text: &str) -> Result<Vec<Plot>> {
    let (headers, rows) = parse(csv_text)?;
    let has = |cols: &[&str]| cols.iter().all(|c| headers.iter().any(|h| h == c));
    if has(&["step", "rmse", "q10", "q90"]) {
        return Ok(vec![rmse_vs_time(&rows)?]);
    }
    if has(&["J", "N_p", "total_s"]) {
        return Ok(vec![line_plot(
            "latency_vs_np.svg",
            "Chain latency per time step",
            "particles N_p",
            "latency (s)",
            series(&rows, "N_p", "total_s", &["J"]),
        )?]);
    }
    if has(&["J", "N_a", "N_p", "B_w", "mode", "rmse", "mean_chain_latency_s"]) {
        let mut out = vec![line_plot(
            "rmse_vs_j.svg",
            "RMSE vs number of panels",
            "panels J",
            "RMSE (m)",
            series(&rows, "J", "rmse", &["N_p", "N_a", "B_w", "mode"]),
        )?];
        out.extend(los_vs_mpc(&rows));
        out.push(line_plot(
            "latency_vs_np.svg",
            "Mean chain latency per time step",
            "particles N_p",
            "latency (s)",
            series(&rows, "N_p", "mean_chain_latency_s", &["J", "N_a", "B_w", "mode"]),
        )?);
        return Ok(out);
    }
    Err(Error::InvalidArgument(format!(
        "unrecognized CSV columns: {}",
        headers.join(",")
    )))
}

/// Reads `csv`, renders its figures into `dir` and returns the written
/// paths.
pub fn render_plots_to_dir(csv: &Path, dir: &Path) -> Result<Vec<PathBuf>> {
    let plots = render_plots(&std::fs::read_to_string(csv)?)?;
    std::fs::create_dir_all(dir)?;
    plots
        .into_iter()
        .map(|p| {
            let path = dir.join(&p.name);
            std::fs::write(&path, p.svg)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn well_formed(svg: &str) {
        let doc = roxmltree::Document::parse(svg).expect("valid XML");
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }

    #[test]
    fn empty_csv_is_an_error() {
        assert!(render_plots("").is_err());
        assert!(render_plots("step,rmse,q10,q90\n").is_err());
        assert!(render_plots("a,b\n1,2\n").is_err());
    }

    #[test]
    fn one_row_gives_one_mark() {
        let p = render_plots("J,N_p,total_s\n4,4096,0.001\n").unwrap();
        assert_eq!(p.len(), 1);
        well_formed(&p[0].svg);
        assert_eq!(p[0].svg.matches(r#"class="mark""#).count(), 1);
        let p = render_plots("step,rmse,q10,q90\n0,0.5,0.4,0.6\n").unwrap();
        well_formed(&p[0].svg);
        assert_eq!(p[0].svg.matches(r#"class="mark""#).count(), 1);
    }

    #[test]
    fn band_spans_the_quantiles() {
        let csv = "step,rmse,q10,q90\n0,1.0,0.5,2.0\n1,1.0,0.5,2.0\n2,1.0,0.5,2.0\n";
        let p = &render_plots(csv).unwrap()[0];
        well_formed(&p.svg);
        let doc = roxmltree::Document::parse(&p.svg).unwrap();
        let poly = doc
            .descendants()
            .find(|n| n.attribute("class") == Some("band"))
            .unwrap();
        let ys: Vec<f64> = poly
            .attribute("points")
            .unwrap()
            .split_whitespace()
            .map(|xy| xy.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        let yr = padded([1.0, 0.5, 2.0].into_iter(), true);
        let c = Canvas::new((0.0, 2.0), yr);
        let (top, bottom) = (c.sy(2.0), c.sy(0.5));
        assert!(ys.iter().all(|y| (y - top).abs() < 0.01 || (y - bottom).abs() < 0.01));
        assert!(ys.iter().any(|y| (y - top).abs() < 0.01) && ys.iter().any(|y| (y - bottom).abs() < 0.01));
    }

    #[test]
    fn sweep_csv_gives_three_figures_with_units() {
        let csv = "J,N_a,N_p,B_w,mode,rmse,q10,q90,diverged_count,mean_chain_latency_s,status\n\
                   2,25,4096,400000000.0,los,0.2,0.1,0.3,0,0.001,ok\n\
                   2,25,4096,400000000.0,mpc,0.15,0.1,0.3,0,0.001,ok\n\
                   24,25,4096,400000000.0,los,0.02,0.01,0.03,0,0.01,ok\n\
                   24,25,4096,400000000.0,mpc,0.02,0.01,0.03,0,0.01,ok\n\
                   48,25,4096,400000000.0,los,,,,,,error: boom\n";
        let p = render_plots(csv).unwrap();
        let names: Vec<&str> = p.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["rmse_vs_j.svg", "los_vs_mpc.svg", "latency_vs_np.svg"]);
        for f in &p {
            well_formed(&f.svg);
        }
        assert!(p[0].svg.contains("RMSE (m)"));
        assert!(p[2].svg.contains("latency (s)"));
        assert_eq!(p[1].svg.matches(r#"<rect class="mark""#).count(), 4);
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(0.0, 1.0), [0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(ticks(0.0, 48.0), [0.0, 10.0, 20.0, 30.0, 40.0]);
        assert_eq!(fmt_num(0.25), "0.25");
        assert_eq!(fmt_num(2e-5), "2.0e-5");
    }
}
