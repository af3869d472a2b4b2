//! 8-bit binary PGM (P5) heatmap output with min-max scaling.

use std::fs::File;
use std::io::Write;
use std::path::Path;

/// The (min, max) scale applied before 8-bit quantization; recorded in the
/// run manifest so the grayscale stays quantitatively meaningful.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct HeatmapScale {
    pub min: f64,
    pub max: f64,
}

/// Write a row-major H x W map as a min-max scaled P5 file.
pub fn pgm_write_scaled(
    plane: &[f64],
    h: usize,
    w: usize,
    path: &Path,
) -> std::io::Result<HeatmapScale> {
    assert_eq!(plane.len(), h * w);
    let min = plane.iter().copied().fold(f64::INFINITY, f64::min);
    let max = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for &v in plane {
        let scaled = if range > 0.0 { (v - min) / range } else { 0.0 };
        out.push((scaled * 255.0).round() as u8);
    }
    File::create(path)?.write_all(&out)?;
    Ok(HeatmapScale { min, max })
}
