//! Static SVG of a margin heat grid with joint eigenvalues on top.

use std::fmt::Write;

use specflag_core::numcore::C64;

const SIZE: f64 = 480.0;
const PAD: f64 = 40.0;

/// Heat grid over one complex coordinate.
#[derive(Debug, Clone)]
pub struct HeatGrid {
    pub lower: C64,
    pub upper: C64,
    pub steps: usize,
    /// Values in row-major order over the imaginary axis, then the real axis.
    pub values: Vec<f64>,
}

fn colour(t: f64) -> String {
    // Dark blue at the spectrum, pale yellow far away.
    let t = t.clamp(0.0, 1.0);
    let r = (20.0 + 235.0 * t).round() as u8;
    let g = (30.0 + 200.0 * t).round() as u8;
    let b = (110.0 + 40.0 * (1.0 - t) * t * 4.0).round().min(255.0) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn fmt(x: f64) -> String {
    format!("{x:.2}")
}

/// Renders the grid on a log scale together with the eigenvalue markers.
pub fn render(grid: &HeatGrid, eigenvalues: &[C64], title: &str) -> String {
    let span_re = (grid.upper.re - grid.lower.re).max(f64::MIN_POSITIVE);
    let span_im = (grid.upper.im - grid.lower.im).max(f64::MIN_POSITIVE);
    let to_x = |re: f64| PAD + (re - grid.lower.re) / span_re * SIZE;
    let to_y = |im: f64| PAD + (grid.upper.im - im) / span_im * SIZE;
    let logs: Vec<f64> = grid.values.iter().map(|v| v.max(1e-16).log10()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = if hi > lo { hi - lo } else { 1.0 };
    let cell = SIZE / grid.steps.max(1) as f64;
    let mut s = String::new();
    let total = SIZE + 2.0 * PAD;
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{t}" height="{t}" viewBox="0 0 {t} {t}">"#,
        t = fmt(total)
    );
    let _ = writeln!(s, r#"<title>{title}</title>"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{t}" height="{t}" fill="white"/>"#, t = fmt(total));
    for (idx, v) in logs.iter().enumerate() {
        let (row, col) = (idx / grid.steps, idx % grid.steps);
        let x = PAD + col as f64 * cell;
        let y = PAD + SIZE - (row as f64 + 1.0) * cell;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
            fmt(x),
            fmt(y),
            fmt(cell + 0.05),
            fmt(cell + 0.05),
            colour((v - lo) / range)
        );
    }
    for z in eigenvalues {
        let _ = writeln!(
            s,
            r#"<circle cx="{}" cy="{}" r="4" fill="none" stroke="red" stroke-width="1.5"/>"#,
            fmt(to_x(z.re)),
            fmt(to_y(z.im))
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{p}" y="{p}" width="{w}" height="{w}" fill="none" stroke="black"/>"#,
        p = fmt(PAD),
        w = fmt(SIZE)
    );
    let label = |s: &mut String, x: f64, y: f64, text: String| {
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" font-family="sans-serif">{text}</text>"#, fmt(x), fmt(y));
    };
    label(&mut s, PAD, PAD + SIZE + 16.0, format!("Re {}", fmt(grid.lower.re)));
    label(&mut s, PAD + SIZE - 60.0, PAD + SIZE + 16.0, format!("Re {}", fmt(grid.upper.re)));
    label(&mut s, 2.0, PAD + SIZE, format!("Im {}", fmt(grid.lower.im)));
    label(&mut s, 2.0, PAD - 6.0, format!("Im {}", fmt(grid.upper.im)));
    label(&mut s, PAD + SIZE / 2.0 - 60.0, PAD - 14.0, format!("log10 margin {} .. {}", fmt(lo), fmt(hi)));
    s.push_str("</svg>\n");
    s
}
