//! Static SVG figure of one or more curve estimates with nested bands.

use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub level: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub median: Vec<f64>,
    pub bands: Vec<Band>,
}

fn parse_level(tag: &str) -> Option<f64> {
    tag.parse::<f64>().ok().map(|v| v / 100.0)
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::new(4, format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::new(2, format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::new(2, format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::new(2, format!("{}: row {} is not numeric", path.display(), i + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::new(2, format!("{} has no data rows", path.display())));
    }
    Ok((header, rows))
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize, CliError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::new(2, format!("{} lacks column '{name}'", path.display())))
}

/// Reads a curve CSV with columns `x, median, lo_<pct>, hi_<pct>…`.
pub fn read_series(path: &Path, label: String) -> Result<Series, CliError> {
    let (header, rows) = read_table(path)?;
    let xi = column(&header, "x", path)?;
    let mi = column(&header, "median", path)?;
    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let mut bands = Vec::new();
    for (j, h) in header.iter().enumerate() {
        if let Some(tag) = h.strip_prefix("lo_") {
            let hi = column(&header, &format!("hi_{tag}"), path)?;
            let level = parse_level(tag)
                .ok_or_else(|| CliError::new(2, format!("{}: bad band column '{h}'", path.display())))?;
            bands.push(Band {
                level,
                lower: col(j),
                upper: col(hi),
            });
        }
    }
    bands.sort_by(|a, b| b.level.total_cmp(&a.level));
    Ok(Series {
        label,
        x: col(xi),
        median: col(mi),
        bands,
    })
}

/// Reads a reference curve: column `x` plus `truth` (or the second column).
pub fn read_truth(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let (header, rows) = read_table(path)?;
    let xi = column(&header, "x", path)?;
    let ti = header
        .iter()
        .position(|h| h == "truth")
        .unwrap_or(if xi == 0 { 1 } else { 0 });
    if ti >= header.len() {
        return Err(CliError::new(2, format!("{} needs a truth column", path.display())));
    }
    Ok((rows.iter().map(|r| r[xi]).collect(), rows.iter().map(|r| r[ti]).collect()))
}

/// Linear interpolation of (xs, ys) at `at`; NaN outside the data range.
pub fn interpolate(xs: &[f64], ys: &[f64], at: f64) -> f64 {
    let n = xs.len();
    if n == 0 || at < xs[0] || at > xs[n - 1] {
        return f64::NAN;
    }
    let j = xs.partition_point(|&v| v < at);
    if j == 0 {
        return ys[0];
    }
    if j >= n {
        return ys[n - 1];
    }
    let (x0, x1) = (xs[j - 1], xs[j]);
    if x1 == x0 {
        return ys[j];
    }
    ys[j - 1] + (ys[j] - ys[j - 1]) * (at - x0) / (x1 - x0)
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    let scale = a.iter().chain(b).fold(1.0f64, |m, v| m.max(v.abs()));
    a.len() == b.len() && a.iter().zip(b).all(|(p, q)| (p - q).abs() <= 1e-9 * scale)
}

fn overlaps(a: &[f64], b: &[f64]) -> bool {
    let (a0, a1) = (a[0], a[a.len() - 1]);
    let (b0, b1) = (b[0], b[b.len() - 1]);
    a0.max(b0) <= a1.min(b1)
}

/// Puts every series on the first series' grid.
pub fn align(mut series: Vec<Series>, allow_interpolation: bool) -> Result<Vec<Series>, CliError> {
    let Some(first) = series.first() else {
        return Err(CliError::new(2, "no curve files given".into()));
    };
    let grid = first.x.clone();
    for s in series.iter_mut().skip(1) {
        if same_grid(&grid, &s.x) {
            continue;
        }
        if !overlaps(&grid, &s.x) {
            return Err(CliError::new(2, format!("curve '{}' has a grid disjoint from the first file", s.label)));
        }
        if !allow_interpolation {
            return Err(CliError::new(
                2,
                format!("curve '{}' is on a different grid; pass --interpolate", s.label),
            ));
        }
        let at = |ys: &[f64]| grid.iter().map(|&g| interpolate(&s.x, ys, g)).collect::<Vec<_>>();
        s.median = at(&s.median);
        for b in &mut s.bands {
            b.lower = at(&b.lower);
            b.upper = at(&b.upper);
        }
        s.x = grid.clone();
    }
    Ok(series)
}

struct Style {
    color: &'static str,
    dash: Option<&'static str>,
}

fn style(label: &str, index: usize) -> Style {
    const CYCLE: [&str; 5] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b"];
    match label {
        "BNP-NC" => Style { color: "#1f77b4", dash: None },
        "YX" => Style { color: "#ff7f0e", dash: Some("2,4") },
        "YXU" => Style { color: "#2ca02c", dash: Some("8,4") },
        _ => Style { color: CYCLE[index % CYCLE.len()], dash: None },
    }
}

/// Tick positions at 1, 2 or 5 × 10^k spacing.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).abs().max(1e-12);
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    // Dividing by an integer keeps decimal steps exact (0.3, not 0.30000000000000004).
    let inv = (1.0 / step).round();
    (start..=end)
        .map(|i| if step < 1.0 { i as f64 / inv } else { i as f64 * step })
        .collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// Renders the figure; axis ranges are the data extent padded 5%.
pub fn render(series: &[Series], truth: Option<(&[f64], &[f64])>, title: &str) -> String {
    const W: f64 = 760.0;
    const H: f64 = 500.0;
    const L: f64 = 70.0;
    const R: f64 = 170.0;
    const T: f64 = 40.0;
    const B: f64 = 60.0;
    let finite = |v: &&f64| v.is_finite();
    let xs = series.iter().flat_map(|s| s.x.iter()).chain(truth.iter().flat_map(|t| t.0.iter()));
    let ys = series
        .iter()
        .flat_map(|s| s.median.iter().chain(s.bands.iter().flat_map(|b| b.lower.iter().chain(&b.upper))))
        .chain(truth.iter().flat_map(|t| t.1.iter()));
    let (mut x0, mut x1) = xs.filter(finite).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (mut y0, mut y1) = ys.filter(finite).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(x0 < x1) {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if !(y0 < y1) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let (px, py) = (0.05 * (x1 - x0), 0.05 * (y1 - y0));
    let (x0, x1, y0, y1) = (x0 - px, x1 + px, y0 - py, y1 + py);
    let sx = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let sy = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, (L + W - R) / 2.0, escape(title));
    // axes and ticks
    let (ax0, ax1, ay0, ay1) = (L, W - R, H - B, T);
    let _ = writeln!(svg, r##"<path d="M{ax0},{ay1} V{ay0} H{ax1}" stroke="#333" fill="none"/>"##);
    for t in nice_ticks(x0, x1, 8) {
        let x = sx(t);
        let _ = writeln!(svg, r##"<line x1="{x:.2}" y1="{ay0}" x2="{x:.2}" y2="{}" stroke="#333"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##, ay0 + 5.0, ay0 + 19.0, fmt_tick(t));
    }
    for t in nice_ticks(y0, y1, 6) {
        let y = sy(t);
        let _ = writeln!(svg, r##"<line x1="{}" y1="{y:.2}" x2="{ax0}" y2="{y:.2}" stroke="#333"/><line x1="{ax0}" y1="{y:.2}" x2="{ax1}" y2="{y:.2}" stroke="#eee"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##, ax0 - 5.0, ax0 - 8.0, y + 4.0, fmt_tick(t));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">exposure x</text>"#, (ax0 + ax1) / 2.0, H - 18.0);
    let _ = writeln!(svg, r#"<text transform="translate(18,{}) rotate(-90)" text-anchor="middle">E[Y(x)]</text>"#, (ay0 + ay1) / 2.0);

    // Polyline pieces split at missing values.
    let path = |x: &[f64], y: &[f64]| {
        let mut d = String::new();
        let mut pen_down = false;
        for (&a, &b) in x.iter().zip(y) {
            if a.is_finite() && b.is_finite() {
                let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, sx(a), sy(b));
                pen_down = true;
            } else {
                pen_down = false;
            }
        }
        d
    };
    for (i, s) in series.iter().enumerate() {
        let st = style(&s.label, i);
        for b in &s.bands {
            let mut d = String::new();
            let pts: Vec<(f64, f64, f64)> = s
                .x
                .iter()
                .zip(b.lower.iter().zip(&b.upper))
                .filter(|(x, (l, u))| x.is_finite() && l.is_finite() && u.is_finite())
                .map(|(&x, (&l, &u))| (x, l, u))
                .collect();
            if pts.len() < 2 {
                continue;
            }
            for (j, &(x, _, u)) in pts.iter().enumerate() {
                let _ = write!(d, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, sx(x), sy(u));
            }
            for &(x, l, _) in pts.iter().rev() {
                let _ = write!(d, "L{:.2},{:.2} ", sx(x), sy(l));
            }
            let _ = writeln!(svg, r#"<path d="{}Z" fill="{}" fill-opacity="0.13" stroke="none"/>"#, d, st.color);
        }
        let dash = st.dash.map(|d| format!(r#" stroke-dasharray="{d}""#)).unwrap_or_default();
        let _ = writeln!(svg, r#"<path d="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#, path(&s.x, &s.median).trim_end(), st.color);
    }
    if let Some((tx, ty)) = truth {
        let _ = writeln!(svg, r##"<path d="{}" fill="none" stroke="#d62728" stroke-width="2"/>"##, path(tx, ty).trim_end());
    }

    // legend
    let lx = W - R + 15.0;
    let mut ly = T + 10.0;
    let mut entry = |svg: &mut String, label: &str, color: &str, dash: Option<&str>| {
        let dash = dash.map(|d| format!(r#" stroke-dasharray="{d}""#)).unwrap_or_default();
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#, lx + 30.0, lx + 38.0, ly + 4.0, escape(label));
        ly += 20.0;
    };
    for (i, s) in series.iter().enumerate() {
        let st = style(&s.label, i);
        entry(&mut svg, &s.label, st.color, st.dash);
    }
    if truth.is_some() {
        entry(&mut svg, "truth", "#d62728", None);
    }
    let _ = writeln!(svg, "</svg>");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(nice_ticks(0.0, 10.0, 5), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(nice_ticks(0.13, 0.61, 5), vec![0.2, 0.3, 0.4, 0.5, 0.6]);
    }

    #[test]
    fn interpolation() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.0, 10.0, 0.0];
        assert_eq!(interpolate(&xs, &ys, 0.5), 5.0);
        assert_eq!(interpolate(&xs, &ys, 2.0), 0.0);
        assert!(interpolate(&xs, &ys, 2.5).is_nan());
    }

    fn series(label: &str, x: Vec<f64>) -> Series {
        Series {
            label: label.into(),
            median: x.clone(),
            bands: vec![Band { level: 0.95, lower: x.iter().map(|v| v - 1.0).collect(), upper: x.iter().map(|v| v + 1.0).collect() }],
            x,
        }
    }

    #[test]
    fn grids_must_match_unless_interpolating() {
        let a = series("BNP-NC", vec![0.0, 1.0, 2.0]);
        let b = series("YX", vec![0.5, 1.5, 2.5]);
        assert!(align(vec![a.clone(), b.clone()], false).is_err());
        let out = align(vec![a.clone(), b], true).unwrap();
        assert_eq!(out[1].x, a.x);
        assert!(out[1].median[0].is_nan());
        assert_eq!(out[1].median[1], 1.0);
        let far = series("YXU", vec![10.0, 11.0]);
        assert!(align(vec![a, far], true).is_err());
    }

    #[test]
    fn svg_has_curves_and_legend() {
        let s = render(&[series("BNP-NC", vec![0.0, 1.0, 2.0])], Some((&[0.0, 2.0], &[0.0, 2.0])), "t");
        assert!(s.starts_with("<svg"));
        assert!(s.contains("BNP-NC") && s.contains("truth"));
        assert!(s.trim_end().ends_with("</svg>"));
    }
}
