//! Minimal SVG figures. Each plot is drawn from rows that are also exported
//! as CSV.

use std::fmt::Write as _;

use neurowalk::analysis::IP_THRESHOLD;

use crate::export::RobustnessRow;

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 50.0;

struct Axes {
    x: (f64, f64),
    y: (f64, f64),
    ox: f64,
    oy: f64,
    w: f64,
    h: f64,
}

impl Axes {
    fn new(x: (f64, f64), y: (f64, f64), ox: f64, oy: f64, w: f64, h: f64) -> Self {
        let widen = |(a, b): (f64, f64)| if (b - a).abs() < 1e-12 { (a - 0.5, b + 0.5) } else { (a, b) };
        Self { x: widen(x), y: widen(y), ox, oy, w, h }
    }

    fn px(&self, x: f64) -> f64 {
        self.ox + (x - self.x.0) / (self.x.1 - self.x.0) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.oy + self.h - (y - self.y.0) / (self.y.1 - self.y.0) * self.h
    }

    fn frame(&self, svg: &mut String, xlabel: &str, ylabel: &str) {
        let (x0, y0, x1, y1) = (self.ox, self.oy, self.ox + self.w, self.oy + self.h);
        let _ = write!(
            svg,
            r#"<rect x="{x0:.1}" y="{y0:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            self.w, self.h
        );
        for (v, anchor_x) in [(self.x.0, x0), (self.x.1, x1)] {
            let _ = write!(svg, r#"<text x="{anchor_x:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#, y1 + 14.0, tick(v));
        }
        for (v, anchor_y) in [(self.y.0, y1), (self.y.1, y0)] {
            let _ = write!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#, x0 - 4.0, anchor_y + 3.0, tick(v));
        }
        let _ = write!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{xlabel}</text>"#, (x0 + x1) / 2.0, y1 + 32.0);
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{ylabel}</text>"#,
            x0 - 34.0,
            (y0 + y1) / 2.0,
            x0 - 34.0,
            (y0 + y1) / 2.0
        );
    }

    fn polyline(&self, svg: &mut String, pts: impl Iterator<Item = (f64, f64)>, color: &str) {
        let d: Vec<String> = pts.map(|(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let _ = write!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.2"/>"#, d.join(" "));
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e3 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn open(w: f64, h: f64) -> String {
    format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}"><rect width="100%" height="100%" fill="white"/>"#)
}

/// GRF lines of action in the CoM frame, extended to `y = 1.5 m`, with the
/// fitted IP marked. `rows` are `(grf_x, grf_y, cop_rel_x, cop_rel_y)`.
pub fn ip_lines_svg(rows: &[[f64; 4]], h_ip: f64) -> String {
    let top = 1.5;
    let ax = Axes::new((-0.6, 0.6), (-1.1, top), PAD, 20.0, W - PAD - 20.0, H - 20.0 - PAD);
    let mut svg = open(W, H);
    ax.frame(&mut svg, "x relative to CoM (m)", "y relative to CoM (m)");
    for r in rows {
        let [fx, fy, px, py] = *r;
        if fy <= 0.0 {
            continue;
        }
        let x_top = px + fx / fy * (top - py);
        ax.polyline(&mut svg, [(px, py), (x_top, top)].into_iter(), "#7a7a7a");
    }
    let _ = write!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="red"/>"#, ax.px(0.0), ax.py(0.0));
    if h_ip.is_finite() {
        let _ = write!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="none" stroke="blue" stroke-width="2"/>"#, ax.px(0.0), ax.py(h_ip));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Three stacked panels over one stance: CoP and CoM x, horizontal GRF,
/// vertical GRF. `rows` are `(t, cop_x, com_x, grf_x, grf_y)`.
pub fn stance_svg(rows: &[[f64; 5]]) -> String {
    let ph = 130.0;
    let mut svg = open(W, 3.0 * (ph + PAD) + 10.0);
    if rows.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let t = range(rows.iter().map(|r| r[0]));
    let panels: [(&str, &[(usize, &str)]); 3] = [
        ("x (m)", &[(1, "#c0392b"), (2, "#2c3e50")]),
        ("GRF x (N)", &[(3, "#2c3e50")]),
        ("GRF y (N)", &[(4, "#2c3e50")]),
    ];
    for (k, (label, series)) in panels.iter().enumerate() {
        let y = range(series.iter().flat_map(|(c, _)| rows.iter().map(move |r| r[*c])));
        let ax = Axes::new(t, y, PAD + 20.0, 10.0 + k as f64 * (ph + PAD), W - PAD - 40.0, ph);
        ax.frame(&mut svg, "t (s)", label);
        for (c, color) in series.iter() {
            ax.polyline(&mut svg, rows.iter().map(|r| (r[0], r[*c])), color);
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Signed logarithmic R² axis so that values near 1 and far below 0 share a
/// plot.
fn symlog(x: f64) -> f64 {
    x.signum() * (1.0 + x.abs()).log10()
}

/// Max step-down height and CF against R² (symlog axis); IP gaits green,
/// others blue, the default gait black, the threshold dashed.
pub fn robustness_svg(rows: &[RobustnessRow]) -> String {
    let pw = W - PAD - 20.0;
    let ph = H - 20.0 - PAD;
    let mut svg = open(W, 2.0 * (ph + PAD) + 20.0);
    let xr = range(rows.iter().map(|r| symlog(r.r2)).chain([symlog(IP_THRESHOLD), symlog(1.0)]));
    let hmax = rows.iter().filter_map(|r| r.max_h_cm).max().unwrap_or(1).max(1) as f64;
    let panels = [("max step-down (cm)", (0.0, hmax)), ("collision fraction", (0.0, 1.0))];
    for (k, (label, yr)) in panels.into_iter().enumerate() {
        let ax = Axes::new((xr.0 - 0.1, xr.1 + 0.1), yr, PAD, 20.0 + k as f64 * (ph + PAD), pw, ph);
        ax.frame(&mut svg, "R² (signed log10(1+|R²|))", label);
        let tx = ax.px(symlog(IP_THRESHOLD));
        let _ = write!(
            svg,
            r#"<line x1="{tx:.2}" y1="{:.2}" x2="{tx:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
            ax.oy,
            ax.oy + ax.h
        );
        for r in rows {
            let y = if k == 0 { r.max_h_cm.map(f64::from) } else { Some(r.cf) };
            let Some(y) = y.filter(|y| y.is_finite() && r.r2.is_finite()) else { continue };
            let color = if r.is_default {
                "black"
            } else if r.r2 > IP_THRESHOLD {
                "#27ae60"
            } else {
                "#2e86c1"
            };
            let _ = write!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#, ax.px(symlog(r.r2)), ax.py(y));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symlog_is_odd_and_monotone() {
        assert_eq!(symlog(0.0), 0.0);
        assert_eq!(symlog(-9.0), -1.0);
        assert!(symlog(0.5) < symlog(0.9));
    }

    #[test]
    fn plots_are_closed_svg() {
        for s in [ip_lines_svg(&[[10.0, 800.0, 0.1, -1.0]], 0.3), stance_svg(&[]), robustness_svg(&[])] {
            assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        }
    }
}
