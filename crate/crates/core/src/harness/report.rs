use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::Value;

use crate::error::{invalid, Error, Result};
use crate::spectra::{ExperimentKind, ExperimentResult, Series};

use super::fmt_float;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Svg,
    All,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "svg" => Ok(Format::Svg),
            "all" => Ok(Format::All),
            other => Err(invalid(format!("unknown format '{other}' (json, csv, svg or all)"))),
        }
    }
}

/// Pretty JSON with sorted keys and every float written as `%.12g`.
pub fn to_json(result: &ExperimentResult, config_hash: &str) -> Result<String> {
    let mut v = serde_json::to_value(result).map_err(|e| Error::Serialization(e.to_string()))?;
    if let Value::Object(m) = &mut v {
        m.insert("config_hash".into(), Value::String(config_hash.into()));
    }
    Ok(format_json(&v))
}

/// Pretty JSON with sorted keys and `%.12g` floats, newline terminated.
pub fn format_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let pad = |out: &mut String, d: usize| out.extend(std::iter::repeat_n("  ", d));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&fmt_float(n.as_f64().unwrap_or(f64::NAN)));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) => {
            if a.is_empty() {
                out.push_str("[]");
                return;
            }
            if a.iter().all(|x| !x.is_array() && !x.is_object()) {
                out.push('[');
                for (i, x) in a.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, x, depth);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                pad(out, depth + 1);
                write_value(out, x, depth + 1);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push(']');
        }
        Value::Object(m) => {
            if m.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(out, depth + 1);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(out, &m[*k], depth + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push('}');
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV tables as (file name, contents); each ends with a `# config_hash=... seed=...` line.
pub fn to_csv(result: &ExperimentResult, config_hash: &str) -> Vec<(String, String)> {
    let kind = result.kind.name();
    let trailer = format!("# config_hash={config_hash} seed={}\n", result.seed);
    let mut files = Vec::new();
    if !result.estimates.is_empty() {
        let mut s = String::from("label,x,energy,successes,trials,estimate,lo,hi\n");
        for e in &result.estimates {
            let p = &e.prob;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                csv_field(&e.label),
                fmt_float(e.x),
                opt(e.energy),
                p.successes,
                p.trials,
                fmt_float(p.estimate),
                fmt_float(p.lo),
                fmt_float(p.hi)
            );
        }
        files.push((format!("{kind}_estimates.csv"), s));
    }
    if !result.slopes.is_empty() {
        let mut s = String::from("label,slope,slope_se,intercept,points\n");
        for f in &result.slopes {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                csv_field(&f.label),
                fmt_float(f.slope),
                fmt_float(f.slope_se),
                fmt_float(f.intercept),
                f.points
            );
        }
        files.push((format!("{kind}_slopes.csv"), s));
    }
    if !result.series.is_empty() {
        let mut s = String::from("label,x,y\n");
        for ser in &result.series {
            for (x, y) in ser.x.iter().zip(&ser.y) {
                let _ = writeln!(s, "{},{},{}", csv_field(&ser.label), fmt_float(*x), fmt_float(*y));
            }
        }
        files.push((format!("{kind}_series.csv"), s));
    }
    for h in &result.histograms {
        let mut s = String::from("bin_lo,bin_hi,mass\n");
        for (i, m) in h.hist.masses().iter().enumerate() {
            let (a, b) = h.hist.edges(i);
            let _ = writeln!(s, "{},{},{}", fmt_float(a), fmt_float(b), fmt_float(*m));
        }
        let label: String = h
            .label
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        files.push((format!("{kind}_hist_{label}.csv"), s));
    }
    for (_, s) in &mut files {
        s.push_str(&trailer);
    }
    files
}

struct PlotSpec {
    data: &'static str,
    fit: Option<&'static str>,
    log_x: bool,
    log_y: bool,
    x_label: &'static str,
    y_label: &'static str,
}

fn plot_spec(result: &ExperimentResult) -> Option<PlotSpec> {
    let spec = |data, fit, log_x, log_y, x_label, y_label| PlotSpec {
        data,
        fit,
        log_x,
        log_y,
        x_label,
        y_label,
    };
    Some(match result.kind {
        ExperimentKind::Charfun if result.series("fit").is_some() => {
            spec("data", Some("fit"), true, true, "t", "-ln|phi(t)| over small-argument shells")
        }
        ExperimentKind::Charfun => spec("modulus", None, true, true, "t", "|phi(t)|"),
        ExperimentKind::Wegner => spec("data", Some("fit"), true, true, "eps", "Pr{dist(spec H, E) <= eps}"),
        ExperimentKind::EvComparison => {
            spec("data", Some("fit"), true, true, "eps", "Pr{dist(spec H', spec H'') <= eps}")
        }
        ExperimentKind::Wiener => spec("data", Some("fit"), true, true, "T", "(1/2T) int |phi(t)|^2 dt"),
        ExperimentKind::Viete => spec("data", Some("fit"), false, false, "K", "prod cos(x / 2^k)"),
        ExperimentKind::Density => spec("data", None, false, false, "x", "rho(x)"),
        ExperimentKind::Ids => spec("data", None, false, false, "E", "eigenvalue density"),
        ExperimentKind::Bernstein => spec("abs_psi", Some("envelope"), false, false, "t", "|Psi(t)|"),
        _ => return None,
    })
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".into()
    } else if !(1e-3..1e4).contains(&a) {
        let s = format!("{v:.2e}");
        let (m, e) = s.split_once('e').unwrap_or((&s, "0"));
        let m = m.trim_end_matches('0').trim_end_matches('.');
        format!("{m}e{e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Self-contained SVG line plot, or `None` when the result has nothing to draw.
pub fn to_svg(result: &ExperimentResult, config_hash: &str) -> Option<String> {
    let spec = plot_spec(result)?;
    let tx = |v: f64, log: bool| if log { v.log10() } else { v };
    let keep = |x: f64, y: f64| x.is_finite() && y.is_finite() && (!spec.log_x || x > 0.0) && (!spec.log_y || y > 0.0);
    let pts = |s: &Series| -> Vec<(f64, f64)> {
        s.x.iter()
            .zip(&s.y)
            .filter(|(x, y)| keep(**x, **y))
            .map(|(x, y)| (tx(*x, spec.log_x), tx(*y, spec.log_y)))
            .collect()
    };
    let data = pts(result.series(spec.data)?);
    if data.is_empty() {
        return None;
    }
    let fit = spec.fit.and_then(|l| result.series(l)).map(pts).unwrap_or_default();
    let all = data.iter().chain(&fit);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let widen = |a: f64, b: f64| if b - a > 1e-12 { (a, b) } else { (a - 0.5, b + 0.5) };
    let (x0, x1) = widen(x0, x1);
    let (y0, y1) = widen(y0, y1);
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;
    let poly = |p: &[(f64, f64)]| -> String {
        p.iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let axis_name = |name: &str, log: bool| if log { format!("{name} (log scale)") } else { name.to_string() };

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(s, "<!-- config_hash={config_hash} seed={} -->", result.seed);
    let _ = writeln!(s, "<title>{}</title>", result.kind.name());
    s.push_str(
        "<style>text{font-family:sans-serif;font-size:11px}.axis{stroke:#000;stroke-width:1}\
         .data{fill:none;stroke:#1f5fa8;stroke-width:1.5}.fit{fill:none;stroke:#c0392b;stroke-width:1.5;stroke-dasharray:6 3}</style>\n",
    );
    let _ = writeln!(
        s,
        "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"#fff\"/>\n<line class=\"axis\" x1=\"{LEFT}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\"/>\n<line class=\"axis\" x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{b}\"/>",
        b = TOP + ph,
        r = LEFT + pw
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let xs = if spec.log_x { 10f64.powf(xv) } else { xv };
        let ys = if spec.log_y { 10f64.powf(yv) } else { yv };
        let _ = writeln!(
            s,
            "<line class=\"axis\" x1=\"{x:.2}\" y1=\"{b}\" x2=\"{x:.2}\" y2=\"{b2}\"/><text x=\"{x:.2}\" y=\"{ty}\" text-anchor=\"middle\">{}</text>",
            tick_label(xs),
            x = px(xv),
            b = TOP + ph,
            b2 = TOP + ph + 5.0,
            ty = TOP + ph + 18.0
        );
        let _ = writeln!(
            s,
            "<line class=\"axis\" x1=\"{l2}\" y1=\"{y:.2}\" x2=\"{LEFT}\" y2=\"{y:.2}\"/><text x=\"{tx}\" y=\"{y:.2}\" text-anchor=\"end\" dominant-baseline=\"middle\">{}</text>",
            tick_label(ys),
            y = py(yv),
            l2 = LEFT - 5.0,
            tx = LEFT - 8.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        LEFT + pw / 2.0,
        H - 15.0,
        xml_escape(&axis_name(spec.x_label, spec.log_x))
    );
    let _ = writeln!(
        s,
        "<text transform=\"translate(18 {}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
        TOP + ph / 2.0,
        xml_escape(&axis_name(spec.y_label, spec.log_y))
    );
    let _ = writeln!(s, "<polyline class=\"data\" points=\"{}\"/>", poly(&data));
    if !fit.is_empty() {
        let _ = writeln!(s, "<polyline class=\"fit\" points=\"{}\"/>", poly(&fit));
    }
    s.push_str("</svg>\n");
    Some(s)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes the requested artifacts into `out_dir` and returns their paths.
pub fn emit_report(result: &ExperimentResult, format: Format, out_dir: &Path, config_hash: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let kind = result.kind.name();
    let mut files: Vec<(String, String)> = Vec::new();
    if matches!(format, Format::Json | Format::All) {
        files.push((format!("{kind}.json"), to_json(result, config_hash)?));
    }
    if matches!(format, Format::Csv | Format::All) {
        files.extend(to_csv(result, config_hash));
    }
    if matches!(format, Format::Svg | Format::All) {
        if let Some(svg) = to_svg(result, config_hash) {
            files.push((format!("{kind}.svg"), svg));
        }
    }
    let mut paths = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = out_dir.join(name);
        std::fs::write(&path, body)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::NamedHistogram;
    use crate::stats::Histogram;

    fn sample() -> ExperimentResult {
        let mut r = ExperimentResult::new(ExperimentKind::Wiener, &serde_json::json!({"b": 2}), 7, 0);
        r.series.push(Series {
            label: "data".into(),
            x: vec![10.0, 100.0, 1000.0],
            y: vec![0.1, 0.01, 0.001],
        });
        r.series.push(Series {
            label: "fit".into(),
            x: vec![10.0, 1000.0],
            y: vec![0.1, 0.001],
        });
        r.meta("third", 1.0 / 3.0);
        r.histograms.push(NamedHistogram {
            label: "pooled".into(),
            hist: Histogram::from_data(&[0.1, 0.2, 0.25, 0.9, 0.55, 0.31, 0.77], 0.0, 1.0, 7),
        });
        r
    }

    #[test]
    fn json_is_stable_and_sorted() {
        let r = sample();
        let a = to_json(&r, "abc").unwrap();
        assert_eq!(a, to_json(&r.clone(), "abc").unwrap());
        assert!(a.contains("\"third\": 0.333333333333"));
        assert!(a.find("\"config_hash\"").unwrap() < a.find("\"estimates\"").unwrap());
        let back: Value = serde_json::from_str(&a).unwrap();
        assert_eq!(back["seed"], 7);
    }

    #[test]
    fn csv_histogram_layout() {
        let files = to_csv(&sample(), "abc");
        let (name, body) = files.iter().find(|(n, _)| n.contains("hist")).unwrap();
        assert_eq!(name, "wiener_hist_pooled.csv");
        let mut lines = body.lines();
        assert_eq!(lines.next(), Some("bin_lo,bin_hi,mass"));
        let total: f64 = lines
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(body.ends_with("# config_hash=abc seed=7\n"));
    }

    #[test]
    fn svg_has_both_lines() {
        let s = to_svg(&sample(), "abc").unwrap();
        assert!(s.contains("class=\"data\" points"));
        assert!(s.contains("class=\"fit\" points"));
        assert!(s.contains("config_hash=abc seed=7"));
        assert!(s.contains("T (log scale)"));
    }
}
