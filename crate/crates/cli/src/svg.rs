//! Minimal standalone SVG figures: line plots and region heatmaps.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if lo < hi {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

/// Line plot; `log_y` plots `log10 y` and drops non-positive values.
pub fn line_plot(title: &str, x_label: &str, series: &[Series], log_y: bool) -> String {
    let ty = |y: f64| if log_y { if y > 0.0 { y.log10() } else { f64::NAN } } else { y };
    let (x0, x1) = range(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = range(series.iter().flat_map(|s| s.y.iter().map(|&y| ty(y))));
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = header(title);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}" text-anchor="middle">{x0:.3}</text>"#, H - PAD + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x1:.3}</text>"#, W - PAD, H - PAD + 16.0);
    let yl = |v: f64| if log_y { format!("1e{v:.1}") } else { format!("{v:.3}") };
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, PAD - 4.0, H - PAD, yl(y0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, PAD - 4.0, PAD + 4.0, yl(y1));
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut path = String::new();
        let mut pen_down = false;
        for (&x, &y) in ser.x.iter().zip(ser.y) {
            let y = ty(y);
            if !y.is_finite() {
                pen_down = false;
                continue;
            }
            let _ = write!(path, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, sx(x), sy(y));
            pen_down = true;
        }
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.2"/>"#, path.trim_end());
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - PAD - 80.0,
            PAD + 16.0 * (k as f64 + 1.0),
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Heatmap of integer region codes on an `nx × ny` grid, rows of constant y
/// (`codes[j * nx + i]`).
pub fn region_map(title: &str, x: (f64, f64), y: (f64, f64), nx: usize, ny: usize, codes: &[u8], legend: &[&str]) -> String {
    const FILL: [&str; 3] = ["#d9d9d9", "#9ecae1", "#fc9272"];
    let mut s = header(title);
    let cw = (W - 2.0 * PAD) / nx as f64;
    let ch = (H - 2.0 * PAD) / ny as f64;
    for i in 0..nx {
        for j in 0..ny {
            let c = codes[j * nx + i] as usize;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                PAD + i as f64 * cw,
                H - PAD - (j as f64 + 1.0) * ch,
                cw + 0.05,
                ch + 0.05,
                FILL[c % FILL.len()]
            );
        }
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">d ∈ [{}, {}]</text>"#, W / 2.0, H - 12.0, x.0, x.1);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">β ∈ [{}, {}]</text>"#,
        H / 2.0,
        H / 2.0,
        y.0,
        y.1
    );
    for (k, name) in legend.iter().enumerate() {
        let yk = PAD + 4.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{yk}" width="10" height="10" fill="{}" stroke="black"/>"#,
            W - PAD + 4.0,
            FILL[k % FILL.len()]
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="9">{}</text>"#, W - PAD + 16.0, yk + 9.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_skips_non_positive_values_on_log_axes() {
        let x = [1.0, 2.0, 3.0];
        let y = [1.0, -1.0, 10.0];
        let svg = line_plot("t", "x", &[Series { label: "a", x: &x, y: &y }], true);
        assert_eq!(svg.matches(" M").count() + svg.matches("\"M").count(), 2);
        assert!(svg.ends_with("</svg>\n"));
    }
}
