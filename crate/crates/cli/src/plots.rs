//! Static SVG plots regenerated from the CSV tables.

use std::error::Error;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

type PlotResult<T> = Result<T, Box<dyn Error>>;

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 110.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = if log { (1e-3, 1.0) } else { (0.0, 1.0) };
        }
        if log {
            let (a, b) = (lo.log10().floor(), hi.log10().ceil());
            let b = if b <= a { a + 1.0 } else { b };
            Axis { lo: 10f64.powf(a), hi: 10f64.powf(b), log }
        } else {
            let pad = if hi > lo { 0.02 * (hi - lo) } else { 0.5 };
            Axis { lo: lo - pad, hi: hi + pad, log }
        }
    }

    fn unit(&self, v: f64) -> f64 {
        if self.log {
            (v.max(f64::MIN_POSITIVE).log10() - self.lo.log10()) / (self.hi.log10() - self.lo.log10())
        } else {
            (v - self.lo) / (self.hi - self.lo)
        }
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.log10() as i32, self.hi.log10() as i32);
            let stride = ((b - a) / 6).max(1);
            (a..=b).step_by(stride as usize).map(|e| 10f64.powi(e)).collect()
        } else {
            (0..=5).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 5.0).collect()
        }
    }
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.0e}")
    } else {
        format!("{}", (v * 100.0).round() / 100.0)
    }
}

struct Svg {
    x: Axis,
    y: Axis,
    body: String,
    title: String,
    xlabel: String,
    ylabel: String,
}

impl Svg {
    fn new(title: &str, xlabel: &str, ylabel: &str, x: Axis, y: Axis) -> Svg {
        Svg { x, y, body: String::new(), title: title.into(), xlabel: xlabel.into(), ylabel: ylabel.into() }
    }

    fn px(&self, v: f64) -> f64 {
        LEFT + self.x.unit(v) * (W - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        H - BOTTOM - self.y.unit(v) * (H - TOP - BOTTOM)
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, color: &str) {
        if x.is_finite() && y.is_finite() {
            let (cx, cy) = (self.px(x), self.py(y));
            let _ = writeln!(self.body, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r}" fill="{color}"/>"#);
        }
    }

    fn rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, color: &str) {
        let (a, b) = (self.px(x0), self.px(x1));
        let (c, d) = (self.py(y1), self.py(y0));
        let _ = writeln!(
            self.body,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
            a.min(b),
            c.min(d),
            (b - a).abs(),
            (d - c).abs()
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str) {
        let coords: Vec<String> = pts
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.y.log || *y > 0.0))
            .map(|(x, y)| format!("{:.2},{:.2}", self.px(*x), self.py(*y)))
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
    }

    fn legend(&mut self, entries: &[(String, String)]) {
        for (i, (name, color)) in entries.iter().enumerate() {
            let y = TOP + 16.0 * i as f64 + 8.0;
            let x = W - RIGHT + 12.0;
            let _ = writeln!(self.body, r#"<circle cx="{x}" cy="{y}" r="4" fill="{color}"/>"#);
            let _ = writeln!(self.body, r#"<text x="{}" y="{}" font-size="11">{name}</text>"#, x + 8.0, y + 4.0);
        }
    }

    fn colorbar(&mut self, lo: f64, hi: f64, map: fn(f64) -> String) {
        let x = W - RIGHT + 20.0;
        let h = H - TOP - BOTTOM;
        for i in 0..50 {
            let t = i as f64 / 49.0;
            let y = TOP + h * (1.0 - t) - h / 50.0;
            let _ = writeln!(self.body, r#"<rect x="{x}" y="{y:.2}" width="14" height="{:.2}" fill="{}"/>"#, h / 49.0, map(t));
        }
        let _ = writeln!(self.body, r#"<text x="{}" y="{}" font-size="11">{}</text>"#, x + 18.0, TOP + 8.0, label(hi));
        let _ = writeln!(self.body, r#"<text x="{}" y="{}" font-size="11">{}</text>"#, x + 18.0, TOP + h, label(lo));
    }

    fn finish(self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        s.push_str(&self.body);
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(s, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
        for t in self.x.ticks() {
            let px = self.px(t);
            let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{y1}" x2="{px:.2}" y2="{}" stroke="black"/>"#, y1 + 5.0);
            let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" font-size="11" text-anchor="middle">{}</text>"#, y1 + 18.0, label(t));
        }
        for t in self.y.ticks() {
            let py = self.py(t);
            let _ = writeln!(s, r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0);
            let _ = writeln!(s, r#"<text x="{}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#, x0 - 8.0, py + 4.0, label(t));
        }
        let _ = writeln!(s, r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, self.title);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 12.0, self.xlabel);
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            (y0 + y1) / 2.0,
            self.ylabel
        );
        s.push_str("</svg>\n");
        s
    }
}

fn lerp_color(stops: &[[f64; 3]], t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let f = t * (stops.len() - 1) as f64;
    let i = (f.floor() as usize).min(stops.len() - 2);
    let u = f - i as f64;
    let c: Vec<u8> = (0..3).map(|k| (stops[i][k] + u * (stops[i + 1][k] - stops[i][k])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn sequential(t: f64) -> String {
    lerp_color(&[[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [94.0, 201.0, 98.0], [253.0, 231.0, 37.0]], t)
}

fn diverging(t: f64) -> String {
    lerp_color(&[[33.0, 102.0, 172.0], [247.0, 247.0, 247.0], [178.0, 24.0, 43.0]], t)
}

const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

fn read_table(path: &Path) -> PlotResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

fn num(row: &[String], k: usize) -> f64 {
    row.get(k).and_then(|v| v.trim().parse().ok()).unwrap_or(f64::NAN)
}

fn col(header: &[String], name: &str, path: &Path) -> PlotResult<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| format!("{}: missing column `{name}`", path.display()).into())
}

/// Field values on mesh nodes, colored.
fn field_plot(path: &Path, value: &str, title: &str, centered: bool) -> PlotResult<String> {
    let (h, rows) = read_table(path)?;
    let (cx, cy, cv) = (col(&h, h[0].as_str(), path)?, 1, col(&h, value, path)?);
    let pts: Vec<(f64, f64, f64)> = rows.iter().map(|r| (num(r, cx), num(r, cy), num(r, cv))).collect();
    let x = Axis::fit(pts.iter().map(|p| p.0), false);
    let y = Axis::fit(pts.iter().map(|p| p.1), false);
    let (mut lo, mut hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.2), b.max(p.2)));
    if centered {
        let m = lo.abs().max(hi.abs()).max(1e-300);
        (lo, hi) = (-m, m);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let map = if centered { diverging } else { sequential };
    let mut svg = Svg::new(title, "x", "y", x, y);
    for (px, py, v) in &pts {
        svg.circle(*px, *py, 3.0, &map((v - lo) / span));
    }
    svg.colorbar(lo, hi, map);
    Ok(svg.finish())
}

/// Absolute invariant-space error as a heatmap, one file per regime.
fn rmse_maps(path: &Path) -> PlotResult<Vec<(String, String)>> {
    let (h, rows) = read_table(path)?;
    let (cr, cj, cp, ce) = (col(&h, "regime", path)?, col(&h, "j2", path)?, col(&h, "phi", path)?, col(&h, "error", path)?);
    let mut out = Vec::new();
    for regime in ["small", "large"] {
        let pts: Vec<(f64, f64, f64)> = rows
            .iter()
            .filter(|r| r[cr] == regime)
            .map(|r| (num(r, cj), num(r, cp), num(r, ce).abs()))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let mut js: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let mut ps: Vec<f64> = pts.iter().map(|p| p.1).collect();
        js.sort_by(f64::total_cmp);
        js.dedup();
        ps.sort_by(f64::total_cmp);
        ps.dedup();
        let dj = if js.len() > 1 { js[1] - js[0] } else { 1.0 };
        let dp = if ps.len() > 1 { ps[1] - ps[0] } else { 1.0 };
        let x = Axis { lo: js[0] - dj / 2.0, hi: js[js.len() - 1] + dj / 2.0, log: false };
        let y = Axis { lo: ps[0] - dp / 2.0, hi: ps[ps.len() - 1] + dp / 2.0, log: false };
        let hi = pts.iter().map(|p| p.2).fold(0.0, f64::max).max(1e-300);
        let mut svg = Svg::new(&format!("|error|, {regime} strain-rate regime"), "J2", "phi", x, y);
        for (j, p, e) in &pts {
            svg.rect(j - dj / 2.0, p - dp / 2.0, j + dj / 2.0, p + dp / 2.0, &sequential(e / hi));
        }
        svg.colorbar(0.0, hi, sequential);
        out.push((format!("rmse_map_{regime}.svg"), svg.finish()));
    }
    Ok(out)
}

fn trace_plot(path: &Path) -> PlotResult<String> {
    let (h, rows) = read_table(path)?;
    let (ci, cl) = (col(&h, "iter", path)?, col(&h, "loss", path)?);
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (num(r, ci), num(r, cl))).collect();
    let x = Axis::fit(pts.iter().map(|p| p.0), false);
    let y = Axis::fit(pts.iter().map(|p| p.1), true);
    let mut svg = Svg::new("Experimental loss per accepted iterate", "iteration", "loss", x, y);
    svg.polyline(&pts, PALETTE[0]);
    Ok(svg.finish())
}

/// Log-log scatter of two columns grouped by a label column.
fn grouped_scatter(path: &Path, group: &str, xc: &str, yc: &str, title: &str) -> PlotResult<String> {
    let (h, rows) = read_table(path)?;
    let (cg, cx, cy) = (col(&h, group, path)?, col(&h, xc, path)?, col(&h, yc, path)?);
    let x = Axis::fit(rows.iter().map(|r| num(r, cx)), true);
    let y = Axis::fit(rows.iter().map(|r| num(r, cy)), true);
    let mut groups: Vec<String> = rows.iter().map(|r| r[cg].clone()).collect();
    groups.sort();
    groups.dedup();
    let mut svg = Svg::new(title, xc, yc, x, y);
    for r in &rows {
        let (a, b) = (num(r, cx), num(r, cy));
        if a > 0.0 && b > 0.0 {
            let k = groups.iter().position(|g| *g == r[cg]).unwrap_or(0);
            svg.circle(a, b, 3.5, PALETTE[k % PALETTE.len()]);
        }
    }
    let legend: Vec<(String, String)> =
        groups.iter().enumerate().map(|(k, g)| (g.clone(), PALETTE[k % PALETTE.len()].to_string())).collect();
    svg.legend(&legend);
    Ok(svg.finish())
}

fn invariants_plot(path: &Path) -> PlotResult<String> {
    let (h, rows) = read_table(path)?;
    let (cj, cp) = (col(&h, "j2", path)?, col(&h, "phi", path)?);
    let x = Axis::fit(rows.iter().map(|r| num(r, cj)), false);
    let y = Axis::fit(rows.iter().map(|r| num(r, cp)), false);
    let mut svg = Svg::new("Invariants at quadrature points", "J2", "phi", x, y);
    for r in &rows {
        svg.circle(num(r, cj), num(r, cp), 1.5, PALETTE[2]);
    }
    Ok(svg.finish())
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> PlotResult<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            files_under(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Writes an SVG next to every recognized table; returns the count.
pub fn plot_dir(dir: &Path) -> PlotResult<usize> {
    let mut files = Vec::new();
    files_under(dir, &mut files)?;
    let mut n = 0;
    for f in files {
        let Some(name) = f.file_name().and_then(|s| s.to_str()) else { continue };
        let parent = f.parent().unwrap_or(dir);
        let outputs: Vec<(String, String)> = match name {
            "damage.csv" => vec![("damage.svg".into(), field_plot(&f, "phi", "Damage", false)?)],
            "delta_phi.csv" => vec![("delta_phi.svg".into(), field_plot(&f, "delta_phi", "Predicted minus true damage", true)?)],
            "rmse_map.csv" => rmse_maps(&f)?,
            "trace.csv" => vec![("trace.svg".into(), trace_plot(&f)?)],
            "correlation.csv" => vec![(
                "correlation.svg".into(),
                grouped_scatter(&f, "observer", "final_exp_loss", "final_inv_loss", "Experimental vs invariant loss")?,
            )],
            "invariants.csv" => vec![("invariants.svg".into(), invariants_plot(&f)?)],
            _ => vec![],
        };
        for (file, body) in outputs {
            fs::write(parent.join(file), body)?;
            n += 1;
        }
    }
    Ok(n)
}
