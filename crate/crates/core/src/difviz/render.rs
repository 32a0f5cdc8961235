use std::fmt::Write as _;
use std::path::Path;

use crate::difviz::CoordinateSequence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SvgStyle {
    pub width: f64,
    pub height: f64,
    pub stroke_width: f64,
    pub stroke: String,
    pub background: Option<String>,
}

impl Default for SvgStyle {
    fn default() -> Self {
        SvgStyle {
            width: 256.0,
            height: 256.0,
            stroke_width: 3.0,
            stroke: "#000000".to_string(),
            background: Some("#ffffff".to_string()),
        }
    }
}

/// Renders the trajectory as a single Catmull-Rom path.
///
/// The canvas y axis grows upward, so it is flipped here. The drawing is fitted
/// into the view box with a 5% margin on every side, preserving aspect ratio.
pub fn render_svg(coords: &CoordinateSequence, style: &SvgStyle) -> Result<String> {
    if coords.len() < 2 {
        return Err(Error::domain("SVG rendering needs at least 2 points"));
    }
    let pts = coords.to_real();
    let (min, max) = bounds(&pts);
    let ext = [max[0] - min[0], max[1] - min[1]];
    let avail = [style.width * 0.9, style.height * 0.9];
    let scale = match (ext[0] > 0.0, ext[1] > 0.0) {
        (true, true) => (avail[0] / ext[0]).min(avail[1] / ext[1]),
        (true, false) => avail[0] / ext[0],
        (false, true) => avail[1] / ext[1],
        (false, false) => 1.0,
    };
    let off_x = (style.width - ext[0] * scale) / 2.0;
    let off_y = (style.height - ext[1] * scale) / 2.0;
    let view: Vec<[f64; 2]> = pts
        .iter()
        .map(|p| {
            [
                off_x + (p[0] - min[0]) * scale,
                style.height - (off_y + (p[1] - min[1]) * scale),
            ]
        })
        .collect();

    let mut d = format!("M {:.3} {:.3}", view[0][0], view[0][1]);
    for i in 0..view.len() - 1 {
        let p0 = view[i.saturating_sub(1)];
        let p1 = view[i];
        let p2 = view[i + 1];
        let p3 = view[(i + 2).min(view.len() - 1)];
        let c1 = [p1[0] + (p2[0] - p0[0]) / 6.0, p1[1] + (p2[1] - p0[1]) / 6.0];
        let c2 = [p2[0] - (p3[0] - p1[0]) / 6.0, p2[1] - (p3[1] - p1[1]) / 6.0];
        write!(
            d,
            " C {:.3} {:.3} {:.3} {:.3} {:.3} {:.3}",
            c1[0], c1[1], c2[0], c2[1], p2[0], p2[1]
        )
        .expect("write to string");
    }

    let mut svg = String::new();
    writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = style.width,
        h = style.height
    )
    .unwrap();
    if let Some(bg) = &style.background {
        writeln!(svg, r#"  <rect width="100%" height="100%" fill="{bg}"/>"#).unwrap();
    }
    writeln!(
        svg,
        r#"  <path d="{d}" fill="none" stroke="{}" stroke-width="{}" stroke-linecap="round" stroke-linejoin="round"/>"#,
        style.stroke, style.stroke_width
    )
    .unwrap();
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Square grayscale image, row-major, row 0 at the top, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub size: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.size + col]
    }
}

const STROKE_WIDTH: f64 = 2.0;
const FILL_FRACTION: f64 = 0.8;

/// Rasterizes the trajectory as an anti-aliased white stroke on black.
///
/// The longer side of the bounding box spans 80% of the canvas and the
/// drawing is centered. All normalization happens on integer extents so a
/// trajectory and any integer multiple of it produce identical images.
pub fn render_raster(coords: &CoordinateSequence, size: usize) -> Result<GrayImage> {
    if size < 16 {
        return Err(Error::domain("raster size must be at least 16"));
    }
    if coords.is_empty() {
        return Err(Error::domain("raster rendering needs at least 1 point"));
    }
    let (min_x, max_x, min_y, max_y) = coords.points.iter().fold(
        (i64::MAX, i64::MIN, i64::MAX, i64::MIN),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    let ext_x = max_x - min_x;
    let ext_y = max_y - min_y;
    let ext = ext_x.max(ext_y);
    let s = size as f64;
    let span = FILL_FRACTION * s;
    let margin = (s - span) / 2.0;

    let mut img = GrayImage {
        size,
        pixels: vec![0.0; size * size],
    };
    if ext == 0 {
        let c = s / 2.0;
        stamp_segment(&mut img, [c, c], [c, c]);
        return Ok(img);
    }
    let ext_f = ext as f64;
    let pad_x = (1.0 - ext_x as f64 / ext_f) / 2.0;
    let pad_y = (1.0 - ext_y as f64 / ext_f) / 2.0;
    let pixel: Vec<[f64; 2]> = coords
        .points
        .iter()
        .map(|&(x, y)| {
            let u = (x - min_x) as f64 / ext_f + pad_x;
            let v = (y - min_y) as f64 / ext_f + pad_y;
            [margin + u * span, margin + (1.0 - v) * span]
        })
        .collect();
    if pixel.len() == 1 {
        stamp_segment(&mut img, pixel[0], pixel[0]);
    }
    for w in pixel.windows(2) {
        stamp_segment(&mut img, w[0], w[1]);
    }
    Ok(img)
}

/// Max-blends a round-capped segment of width [`STROKE_WIDTH`] into `img`.
fn stamp_segment(img: &mut GrayImage, a: [f64; 2], b: [f64; 2]) {
    let reach = STROKE_WIDTH / 2.0 + 1.0;
    let n = img.size as isize;
    let lo_c = ((a[0].min(b[0]) - reach).floor() as isize).max(0);
    let hi_c = ((a[0].max(b[0]) + reach).ceil() as isize).min(n - 1);
    let lo_r = ((a[1].min(b[1]) - reach).floor() as isize).max(0);
    let hi_r = ((a[1].max(b[1]) + reach).ceil() as isize).min(n - 1);
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    for r in lo_r..=hi_r {
        for c in lo_c..=hi_c {
            let p = [c as f64 + 0.5, r as f64 + 0.5];
            let ap = [p[0] - a[0], p[1] - a[1]];
            let t = if len2 > 0.0 {
                ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let dx = ap[0] - t * ab[0];
            let dy = ap[1] - t * ab[1];
            let dist = (dx * dx + dy * dy).sqrt();
            let cover = (STROKE_WIDTH / 2.0 + 0.5 - dist).clamp(0.0, 1.0);
            let px = &mut img.pixels[r as usize * img.size + c as usize];
            if cover > *px {
                *px = cover;
            }
        }
    }
}

pub fn save_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = img
        .pixels
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = image::GrayImage::from_raw(img.size as u32, img.size as u32, bytes)
        .ok_or_else(|| Error::contract("pixel buffer does not match image size"))?;
    buf.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}

/// Writes an SVG or PNG rendering chosen by the file extension.
pub fn render_to_file(
    coords: &CoordinateSequence,
    path: impl AsRef<Path>,
    raster_size: usize,
) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("svg") => {
            let svg = render_svg(coords, &SvgStyle::default())?;
            std::fs::write(path, svg).map_err(|e| Error::io(path, e))
        }
        Some("png") => save_png(&render_raster(coords, raster_size)?, path),
        _ => Err(Error::domain(format!(
            "unknown output extension for {} (expected .svg or .png)",
            path.display()
        ))),
    }
}

fn bounds(pts: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for p in pts {
        for k in 0..2 {
            min[k] = min[k].min(p[k]);
            max[k] = max[k].max(p[k]);
        }
    }
    (min, max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(points: &[(i64, i64)]) -> CoordinateSequence {
        CoordinateSequence {
            points: points.to_vec(),
        }
    }

    /// Segment end points of an `M ... C ...` path.
    fn path_vertices(svg: &str) -> Vec<[f64; 2]> {
        let doc = roxmltree::Document::parse(svg).expect("well-formed XML");
        let path = doc
            .descendants()
            .find(|n| n.has_tag_name("path"))
            .expect("one path");
        let d = path.attribute("d").unwrap();
        let mut out = Vec::new();
        for cmd in d.split(['M', 'C']).filter(|s| !s.trim().is_empty()) {
            let nums: Vec<f64> = cmd
                .split_whitespace()
                .map(|t| t.parse().unwrap())
                .collect();
            let n = nums.len();
            out.push([nums[n - 2], nums[n - 1]]);
        }
        out
    }

    #[test]
    fn svg_square_visits_corners_in_order() {
        let sq = seq(&[(0, 0), (100, 0), (100, 100), (0, 100)]);
        let svg = render_svg(&sq, &SvgStyle::default()).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("path")).count(), 1);
        let v = path_vertices(&svg);
        // 5% margin of 256, y flipped
        let lo = 12.8;
        let hi = 243.2;
        let expected = [[lo, hi], [hi, hi], [hi, lo], [lo, lo]];
        assert_eq!(v.len(), 4);
        for (got, want) in v.iter().zip(expected.iter()) {
            assert!((got[0] - want[0]).abs() < 1e-3 && (got[1] - want[1]).abs() < 1e-3);
        }
    }

    #[test]
    fn svg_needs_two_points() {
        assert!(render_svg(&seq(&[(0, 0)]), &SvgStyle::default()).is_err());
        let flat = render_svg(&seq(&[(0, 0), (0, 0)]), &SvgStyle::default()).unwrap();
        roxmltree::Document::parse(&flat).unwrap();
    }

    #[test]
    fn raster_dimensions_and_band() {
        let line = seq(&[(0, 0), (10, 0), (20, 0), (30, 0)]);
        let img = render_raster(&line, 64).unwrap();
        assert_eq!(img.pixels.len(), 64 * 64);
        let lit_rows: Vec<usize> = (0..64)
            .filter(|&r| (0..64).any(|c| img.get(r, c) > 0.0))
            .collect();
        assert!(!lit_rows.is_empty() && lit_rows.len() <= 4, "{lit_rows:?}");
        assert!(lit_rows.windows(2).all(|w| w[1] == w[0] + 1));
        let lit_cols = (0..64)
            .filter(|&c| lit_rows.iter().any(|&r| img.get(r, c) > 0.0))
            .count();
        assert!(lit_cols > 45);
    }

    #[test]
    fn raster_is_scale_invariant() {
        let shape = seq(&[(0, 0), (7, 3), (12, -9), (3, -20), (-4, -8), (0, 0)]);
        let a = render_raster(&shape, 64).unwrap();
        for c in [2, 3, 17] {
            assert_eq!(a, render_raster(&shape.scaled(c), 64).unwrap());
        }
    }

    #[test]
    fn degenerate_raster_is_centered_dot() {
        let img = render_raster(&seq(&[(4, 4), (4, 4), (4, 4)]), 32).unwrap();
        let centre = img.get(16, 16);
        assert!(centre > 0.5);
        for (r, c) in [(15, 15), (15, 16), (16, 15)] {
            assert_eq!(img.get(r, c), centre);
        }
        assert_eq!(img.get(0, 0), 0.0);
        let lit = img.pixels.iter().filter(|&&v| v > 0.0).count();
        assert!(lit > 0 && lit < 30);
    }

    #[test]
    fn raster_rejects_tiny_canvas() {
        assert!(render_raster(&seq(&[(0, 0), (1, 1)]), 8).is_err());
    }

    #[test]
    fn file_output_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let s = seq(&[(0, 0), (5, 9), (9, 0)]);
        render_to_file(&s, dir.path().join("a.svg"), 64).unwrap();
        render_to_file(&s, dir.path().join("a.png"), 64).unwrap();
        assert!(std::fs::metadata(dir.path().join("a.png")).unwrap().len() > 0);
        assert!(render_to_file(&s, dir.path().join("a.bmp"), 64).is_err());
    }
}
