//! Minimal figure output: 2D SVG polyline+scatter and PGM image strips.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use isoriem_core::Error;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 24.0;

/// Project points to their first two coordinates and render a polyline with
/// scatter markers.
pub fn write_path_svg(path: &Path, points: &[Vec<f64>]) -> Result<(), Error> {
    assert!(!points.is_empty());
    let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = points.iter().map(|p| *p.get(1).unwrap_or(&0.0)).collect();
    let (min_x, max_x) = bounds(&xs);
    let (min_y, max_y) = bounds(&ys);
    let span_x = (max_x - min_x).max(1e-12);
    let span_y = (max_y - min_y).max(1e-12);
    let sx = |x: f64| MARGIN + (x - min_x) / span_x * (SIZE - 2.0 * MARGIN);
    // SVG y grows downward
    let sy = |y: f64| SIZE - MARGIN - (y - min_y) / span_y * (SIZE - 2.0 * MARGIN);

    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )?;
    let pts: Vec<String> = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| format!("{:.3},{:.3}", sx(x), sy(y)))
        .collect();
    writeln!(
        w,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##,
        pts.join(" ")
    )?;
    for (&x, &y) in xs.iter().zip(&ys) {
        writeln!(
            w,
            r##"<circle cx="{:.3}" cy="{:.3}" r="3" fill="#d62728"/>"##,
            sx(x),
            sy(y)
        )?;
    }
    writeln!(w, "</svg>")?;
    Ok(())
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &x in v {
        min = min.min(x);
        max = max.max(x);
    }
    (min, max)
}

/// Write a horizontal strip of `h x w` grayscale tiles, one per point, as a
/// binary PGM (P5). Values are clamped to [0, 1] before scaling to 255.
pub fn write_strip_pgm(
    path: &Path,
    points: &[Vec<f64>],
    h: usize,
    w: usize,
) -> Result<(), Error> {
    assert!(!points.is_empty());
    for p in points {
        if p.len() != h * w {
            return Err(Error::Shape(format!(
                "PGM tile expects {} pixels, point has {}",
                h * w,
                p.len()
            )));
        }
    }
    let gap = 2usize;
    let total_w = points.len() * w + (points.len() - 1) * gap;
    let mut img = vec![0u8; h * total_w];
    for (i, p) in points.iter().enumerate() {
        let x0 = i * (w + gap);
        for r in 0..h {
            for c in 0..w {
                let v = (p[r * w + c].clamp(0.0, 1.0) * 255.0).round() as u8;
                img[r * total_w + x0 + c] = v;
            }
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{total_w} {h}\n255\n")?;
    out.write_all(&img)?;
    Ok(())
}
