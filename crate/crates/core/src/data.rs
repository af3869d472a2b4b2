//! Data plumbing: the `HSC1` cube format, PPM RGB I/O, a synthetic paired
//! dataset generator, and patch extraction.
//!
//! On disk a cube is band-sequential 32-bit little-endian floats behind a
//! fixed header (`HSC1`, three u32 dims, per-band wavelengths); in memory it
//! is channel-fastest f64, transposed at the I/O boundary. RGB images are
//! 8-bit binary PPM (P6). Everything is deterministic per seed.

use std::fs::File;
use std::io::{self, Read as _, Write as _};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::Tensor;

pub const CUBE_MAGIC: &[u8; 4] = b"HSC1";
/// Dimension cap: keeps H*W*C well inside usize and files desk-sized.
pub const MAX_DIM: u32 = 1 << 16;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad magic (expected \"HSC1\")")]
    BadMagic,
    #[error("truncated file: wanted {wanted} more bytes")]
    Truncated { wanted: usize },
    #[error("dimension {0} exceeds the supported maximum {MAX_DIM}")]
    DimOverflow(u32),
    #[error("wavelengths must be strictly increasing")]
    BadWavelengths,
    #[error("sample out of [0,1]: {0}")]
    OutOfRange(f64),
    #[error("not a binary PPM (P6) file")]
    BadPpm,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A hyperspectral cube: (H, W, C) samples in [0,1] with band-center
/// wavelengths in nanometers.
#[derive(Debug, Clone)]
pub struct HsiCube {
    pub wavelengths_nm: Vec<f64>,
    pub data: Tensor<f64>,
}

impl HsiCube {
    pub fn new(wavelengths_nm: Vec<f64>, data: Tensor<f64>) -> Result<Self, DataError> {
        assert_eq!(data.shape().len(), 3);
        if wavelengths_nm.len() != data.shape()[2] {
            return Err(DataError::BadWavelengths);
        }
        if !wavelengths_nm.windows(2).all(|w| w[0] < w[1]) {
            return Err(DataError::BadWavelengths);
        }
        if let Some(&bad) = data.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(DataError::OutOfRange(bad));
        }
        Ok(HsiCube { wavelengths_nm, data })
    }

    pub fn height(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn bands(&self) -> usize {
        self.data.shape()[2]
    }
}

/// Evenly spaced band centers over 400-700 nm.
pub fn default_wavelengths(bands: usize) -> Vec<f64> {
    assert!(bands >= 2);
    (0..bands)
        .map(|b| 400.0 + 300.0 * b as f64 / (bands - 1) as f64)
        .collect()
}

pub fn cube_write(cube: &HsiCube, path: &Path) -> Result<(), DataError> {
    let (h, w, c) = (cube.height(), cube.width(), cube.bands());
    for dim in [h, w, c] {
        if dim as u64 > MAX_DIM as u64 {
            return Err(DataError::DimOverflow(dim as u32));
        }
    }
    let mut out = Vec::with_capacity(16 + 4 * c + 4 * h * w * c);
    out.extend_from_slice(CUBE_MAGIC);
    for dim in [h, w, c] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &wl in &cube.wavelengths_nm {
        out.extend_from_slice(&(wl as f32).to_le_bytes());
    }
    // band-sequential planes, each row-major
    for b in 0..c {
        for y in 0..h {
            for x in 0..w {
                out.extend_from_slice(&(cube.data.at(&[y, x, b]) as f32).to_le_bytes());
            }
        }
    }
    File::create(path)?.write_all(&out)?;
    Ok(())
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.pos + n > self.bytes.len() {
            return Err(DataError::Truncated { wanted: self.pos + n - self.bytes.len() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, DataError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn cube_read(path: &Path) -> Result<HsiCube, DataError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = ByteReader { bytes: &bytes, pos: 0 };
    if r.take(4)? != CUBE_MAGIC {
        return Err(DataError::BadMagic);
    }
    let (h, w, c) = (r.u32()?, r.u32()?, r.u32()?);
    for dim in [h, w, c] {
        if dim == 0 || dim > MAX_DIM {
            return Err(DataError::DimOverflow(dim));
        }
    }
    let (h, w, c) = (h as usize, w as usize, c as usize);
    let mut wavelengths = Vec::with_capacity(c);
    for _ in 0..c {
        wavelengths.push(r.f32()? as f64);
    }
    let mut data = Tensor::zeros(vec![h, w, c]);
    for b in 0..c {
        for y in 0..h {
            for x in 0..w {
                *data.at_mut(&[y, x, b]) = r.f32()? as f64;
            }
        }
    }
    HsiCube::new(wavelengths, data)
}

// ---- PPM (P6) ----------------------------------------------------------

/// Write an (H, W, 3) image in [0,1] as an 8-bit binary PPM.
pub fn ppm_write(rgb: &Tensor<f64>, path: &Path) -> Result<(), DataError> {
    let s = rgb.shape();
    assert_eq!(s.len(), 3);
    assert_eq!(s[2], 3, "ppm output must have 3 channels");
    let (h, w) = (s[0], s[1]);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for &v in rgb.data() {
        out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    File::create(path)?.write_all(&out)?;
    Ok(())
}

/// Read an 8-bit binary PPM into an (H, W, 3) image in [0,1].
pub fn ppm_read(path: &Path) -> Result<Tensor<f64>, DataError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut token = || -> Result<String, DataError> {
        // skip whitespace and `#` comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        if start == pos {
            return Err(DataError::BadPpm);
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P6" {
        return Err(DataError::BadPpm);
    }
    let w: usize = token()?.parse().map_err(|_| DataError::BadPpm)?;
    let h: usize = token()?.parse().map_err(|_| DataError::BadPpm)?;
    let maxval: usize = token()?.parse().map_err(|_| DataError::BadPpm)?;
    if maxval != 255 || w == 0 || h == 0 {
        return Err(DataError::BadPpm);
    }
    pos += 1; // the single whitespace byte after maxval
    let need = h * w * 3;
    if bytes.len() < pos + need {
        return Err(DataError::Truncated { wanted: pos + need - bytes.len() });
    }
    let data = bytes[pos..pos + need].iter().map(|&b| b as f64 / 255.0).collect();
    Ok(Tensor::new(vec![h, w, 3], data))
}

// ---- spectral response -------------------------------------------------

/// Fixed 3 x B camera response: Gaussian rows centered at the band thirds,
/// each row normalized to sum 1 so [0,1] spectra map to [0,1] RGB.
#[derive(Debug, Clone)]
pub struct SpectralResponse {
    pub rows: Vec<Vec<f64>>, // 3 rows of length B
}

impl SpectralResponse {
    pub fn gaussian(bands: usize) -> Self {
        assert!(bands >= 2);
        let sigma = bands as f64 / 6.0;
        let centers = [
            bands as f64 * 5.0 / 6.0, // red: long wavelengths
            bands as f64 * 0.5,       // green: middle
            bands as f64 / 6.0,       // blue: short
        ];
        let rows = centers
            .iter()
            .map(|&mu| {
                let mut row: Vec<f64> = (0..bands)
                    .map(|b| (-((b as f64 - mu).powi(2)) / (2.0 * sigma * sigma)).exp())
                    .collect();
                let sum: f64 = row.iter().sum();
                for v in &mut row {
                    *v /= sum;
                }
                row
            })
            .collect();
        SpectralResponse { rows }
    }

    pub fn bands(&self) -> usize {
        self.rows[0].len()
    }

    pub fn apply_pixel(&self, spectrum: &[f64]) -> [f64; 3] {
        assert_eq!(spectrum.len(), self.bands());
        let mut rgb = [0.0; 3];
        for (c, row) in self.rows.iter().enumerate() {
            rgb[c] = row.iter().zip(spectrum).map(|(r, s)| r * s).sum();
        }
        rgb
    }

    /// Project a whole cube to its RGB image.
    pub fn apply(&self, cube: &HsiCube) -> Tensor<f64> {
        let (h, w, c) = (cube.height(), cube.width(), cube.bands());
        assert_eq!(c, self.bands());
        let mut rgb = Tensor::zeros(vec![h, w, 3]);
        let mut spectrum = vec![0.0; c];
        for y in 0..h {
            for x in 0..w {
                for b in 0..c {
                    spectrum[b] = cube.data.at(&[y, x, b]);
                }
                let px = self.apply_pixel(&spectrum);
                for ch in 0..3 {
                    *rgb.at_mut(&[y, x, ch]) = px[ch];
                }
            }
        }
        rgb
    }
}

// ---- synthetic dataset -------------------------------------------------

/// One paired sample plus the smoothness bound recorded at generation.
#[derive(Debug, Clone)]
pub struct SynthSample {
    pub cube: HsiCube,
    pub rgb: Tensor<f64>,
    /// Max |second difference| over the endmember spectra; every generated
    /// spectrum (a pixelwise convex mixture) obeys it too.
    pub curvature_bound: f64,
}

/// Abundance-weighted mixtures of 3-5 Gaussian-bump endmember spectra with
/// smooth spatial abundance fields; RGB via the fixed Gaussian response.
pub fn synth_dataset(
    count: usize,
    h: usize,
    w: usize,
    bands: usize,
    seed: u64,
) -> Vec<SynthSample> {
    assert!(h >= 1 && w >= 1 && bands >= 2, "degenerate dataset dims");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let response = SpectralResponse::gaussian(bands);
    let wavelengths = default_wavelengths(bands);

    (0..count)
        .map(|_| {
            let k = rng.gen_range(3..=5);
            // smooth endmember spectra: broad Gaussian bumps in [0,1]
            let endmembers: Vec<Vec<f64>> = (0..k)
                .map(|_| {
                    let mu = rng.gen_range(0.0..bands as f64);
                    let sigma = rng.gen_range(bands as f64 / 6.0..bands as f64 / 3.0);
                    let amp = rng.gen_range(0.4..1.0);
                    (0..bands)
                        .map(|b| amp * (-((b as f64 - mu).powi(2)) / (2.0 * sigma * sigma)).exp())
                        .collect()
                })
                .collect();
            let curvature_bound = endmembers
                .iter()
                .flat_map(|e| e.windows(3).map(|t| (t[0] - 2.0 * t[1] + t[2]).abs()))
                .fold(0.0, f64::max);

            // smooth spatial weights: one broad Gaussian blob per endmember,
            // normalized per pixel into a convex combination
            let blobs: Vec<(f64, f64, f64)> = (0..k)
                .map(|_| {
                    let cy = rng.gen_range(0.0..h as f64);
                    let cx = rng.gen_range(0.0..w as f64);
                    let s = rng.gen_range(h.min(w) as f64 / 3.0..h.min(w) as f64);
                    (cy, cx, s)
                })
                .collect();

            let mut data = Tensor::zeros(vec![h, w, bands]);
            for y in 0..h {
                for x in 0..w {
                    let weights: Vec<f64> = blobs
                        .iter()
                        .map(|&(cy, cx, s)| {
                            let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                            (-d2 / (2.0 * s * s)).exp()
                        })
                        .collect();
                    let total: f64 = weights.iter().sum();
                    for b in 0..bands {
                        let v: f64 = weights
                            .iter()
                            .zip(&endmembers)
                            .map(|(wgt, e)| wgt / total * e[b])
                            .sum();
                        *data.at_mut(&[y, x, b]) = v.clamp(0.0, 1.0);
                    }
                }
            }
            let cube = HsiCube::new(wavelengths.clone(), data).expect("synthetic cube is valid");
            let rgb = response.apply(&cube);
            SynthSample { cube, rgb, curvature_bound }
        })
        .collect()
}

// ---- patch extraction --------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchMode {
    Grid { stride: usize },
    Random { count: usize, seed: u64 },
}

/// Co-located square patches from an (RGB, cube) pair. Grid mode tiles with
/// the given stride and drops partial tiles; random mode samples uniformly.
pub fn extract_patches(
    rgb: &Tensor<f64>,
    cube: &Tensor<f64>,
    patch: usize,
    mode: PatchMode,
) -> Vec<(Tensor<f64>, Tensor<f64>)> {
    let (h, w) = (rgb.shape()[0], rgb.shape()[1]);
    assert_eq!(cube.shape()[0], h);
    assert_eq!(cube.shape()[1], w);
    assert!(patch >= 1 && patch <= h.min(w), "patch larger than image");

    let crop = |t: &Tensor<f64>, y0: usize, x0: usize| {
        let c = t.shape()[2];
        let mut out = Tensor::zeros(vec![patch, patch, c]);
        for y in 0..patch {
            for x in 0..patch {
                for ch in 0..c {
                    *out.at_mut(&[y, x, ch]) = t.at(&[y0 + y, x0 + x, ch]);
                }
            }
        }
        out
    };

    let origins: Vec<(usize, usize)> = match mode {
        PatchMode::Grid { stride } => {
            assert!(stride >= 1);
            let mut o = Vec::new();
            let mut y = 0;
            while y + patch <= h {
                let mut x = 0;
                while x + patch <= w {
                    o.push((y, x));
                    x += stride;
                }
                y += stride;
            }
            o
        }
        PatchMode::Random { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| (rng.gen_range(0..=h - patch), rng.gen_range(0..=w - patch)))
                .collect()
        }
    };

    origins
        .into_iter()
        .map(|(y, x)| (crop(rgb, y, x), crop(cube, y, x)))
        .collect()
}

// ---- dataset manifest --------------------------------------------------

/// One `rgb_path<TAB>cube_path` line per pair.
pub fn manifest_write(pairs: &[(PathBuf, PathBuf)], path: &Path) -> Result<(), DataError> {
    let mut out = String::new();
    for (rgb, cube) in pairs {
        out.push_str(&format!("{}\t{}\n", rgb.display(), cube.display()));
    }
    File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

pub fn manifest_read(path: &Path) -> Result<Vec<(PathBuf, PathBuf)>, DataError> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (rgb, cube) = l.split_once('\t').ok_or(DataError::BadMagic)?;
            Ok((PathBuf::from(rgb), PathBuf::from(cube)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cube(seed: u64) -> HsiCube {
        synth_dataset(1, 6, 5, 4, seed).remove(0).cube
    }

    #[test]
    fn cube_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.hsc");
        // quantize through f32 first so the round trip is bit-exact
        let raw = small_cube(0);
        let quantized = Tensor::new(
            raw.data.shape().to_vec(),
            raw.data.data().iter().map(|&v| v as f32 as f64).collect::<Vec<_>>(),
        );
        let cube = HsiCube::new(raw.wavelengths_nm.clone(), quantized).unwrap();
        cube_write(&cube, &path).unwrap();
        let back = cube_read(&path).unwrap();
        assert_eq!(back.data.shape(), cube.data.shape());
        assert_eq!(back.data.data(), cube.data.data());
        for (a, b) in back.wavelengths_nm.iter().zip(&cube.wavelengths_nm) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn large_roundtrip_after_f32_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("big.hsc");
        let sample = synth_dataset(1, 64, 64, 31, 9).remove(0);
        cube_write(&sample.cube, &path).unwrap();
        let back = cube_read(&path).unwrap();
        for (a, b) in back.data.data().iter().zip(sample.cube.data.data()) {
            assert!((a - b).abs() < 1e-7); // one f32 cast of [0,1] data
        }
    }

    #[test]
    fn minimal_cube_file_is_24_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("min.hsc");
        let cube = HsiCube::new(vec![550.0], Tensor::full(vec![1, 1, 1], 0.5)).unwrap();
        cube_write(&cube, &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 24);
    }

    #[test]
    fn corrupted_magic_is_typed_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.hsc");
        std::fs::write(&path, b"XXXX\x01\x00\x00\x00").unwrap();
        assert!(matches!(cube_read(&path), Err(DataError::BadMagic)));
        let short = dir.path().join("short.hsc");
        std::fs::write(&short, b"HSC1\x02\x00\x00\x00").unwrap();
        assert!(matches!(cube_read(&short), Err(DataError::Truncated { .. })));
    }

    #[test]
    fn invariants_rejected() {
        assert!(matches!(
            HsiCube::new(vec![500.0, 400.0], Tensor::zeros(vec![2, 2, 2])),
            Err(DataError::BadWavelengths)
        ));
        assert!(matches!(
            HsiCube::new(vec![400.0, 500.0], Tensor::full(vec![2, 2, 2], 1.5)),
            Err(DataError::OutOfRange(_))
        ));
    }

    #[test]
    fn ppm_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        // values on the 8-bit grid survive the round trip exactly
        let img = Tensor::new(
            vec![2, 3, 3],
            (0..18).map(|i| (i * 14) as f64 / 255.0).collect::<Vec<_>>(),
        );
        ppm_write(&img, &path).unwrap();
        let back = ppm_read(&path).unwrap();
        assert_eq!(back.shape(), &[2, 3, 3]);
        assert_eq!(back.data(), img.data());
    }

    #[test]
    fn ppm_rejects_other_formats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        std::fs::write(&path, b"P5\n2 2\n255\n\x00\x00\x00\x00").unwrap();
        assert!(matches!(ppm_read(&path), Err(DataError::BadPpm)));
    }

    #[test]
    fn response_rows_normalized_and_convex() {
        let r = SpectralResponse::gaussian(31);
        for row in &r.rows {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
        // spectrally flat spectrum maps to the flat value in all channels
        let flat = vec![0.37; 31];
        for v in r.apply_pixel(&flat) {
            assert!((v - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn synth_in_range_and_deterministic() {
        let a = synth_dataset(2, 8, 9, 6, 42);
        let b = synth_dataset(2, 8, 9, 6, 42);
        for (sa, sb) in a.iter().zip(&b) {
            assert!(sa.cube.data.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(sa.rgb.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(sa.cube.data.data(), sb.cube.data.data());
            assert_eq!(sa.rgb.data(), sb.rgb.data());
        }
        let c = synth_dataset(2, 8, 9, 6, 43);
        assert_ne!(a[0].cube.data.data(), c[0].cube.data.data());
    }

    #[test]
    fn synth_spectra_respect_curvature_bound() {
        for sample in synth_dataset(3, 7, 7, 12, 5) {
            let d = &sample.cube.data;
            let (h, w, c) = (d.shape()[0], d.shape()[1], d.shape()[2]);
            let mut sum = 0.0;
            let mut n = 0;
            for y in 0..h {
                for x in 0..w {
                    for b in 1..c - 1 {
                        sum += (d.at(&[y, x, b - 1]) - 2.0 * d.at(&[y, x, b])
                            + d.at(&[y, x, b + 1]))
                        .abs();
                        n += 1;
                    }
                }
            }
            assert!(sum / n as f64 <= sample.curvature_bound + 1e-12);
        }
    }

    #[test]
    fn synth_rgb_colocated_with_cube() {
        let sample = synth_dataset(1, 6, 6, 8, 11).remove(0);
        let redo = SpectralResponse::gaussian(8).apply(&sample.cube);
        for (a, b) in sample.rgb.data().iter().zip(redo.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn grid_patching_arithmetic() {
        let sample = synth_dataset(1, 64, 64, 4, 1).remove(0);
        let patches =
            extract_patches(&sample.rgb, &sample.cube.data, 32, PatchMode::Grid { stride: 32 });
        assert_eq!(patches.len(), 4);
        for (rgb, cube) in &patches {
            assert_eq!(rgb.shape(), &[32, 32, 3]);
            assert_eq!(cube.shape(), &[32, 32, 4]);
        }
        // patch = image size -> exactly the input back
        let one =
            extract_patches(&sample.rgb, &sample.cube.data, 64, PatchMode::Grid { stride: 64 });
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].0.data(), sample.rgb.data());
        assert_eq!(one[0].1.data(), sample.cube.data.data());
    }

    #[test]
    fn random_patching_deterministic_and_colocated() {
        let sample = synth_dataset(1, 16, 16, 4, 2).remove(0);
        let mode = PatchMode::Random { count: 5, seed: 3 };
        let a = extract_patches(&sample.rgb, &sample.cube.data, 8, mode);
        let b = extract_patches(&sample.rgb, &sample.cube.data, 8, mode);
        assert_eq!(a.len(), 5);
        let response = SpectralResponse::gaussian(4);
        for ((r1, c1), (r2, c2)) in a.iter().zip(&b) {
            assert_eq!(r1.data(), r2.data());
            assert_eq!(c1.data(), c2.data());
            // co-location: RGB patch equals response applied to the cube patch
            let cube = HsiCube::new(default_wavelengths(4), c1.clone()).unwrap();
            for (x, y) in response.apply(&cube).data().iter().zip(r1.data()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.tsv");
        let pairs = vec![
            (PathBuf::from("a.ppm"), PathBuf::from("a.hsc")),
            (PathBuf::from("dir/b.ppm"), PathBuf::from("dir/b.hsc")),
        ];
        manifest_write(&pairs, &path).unwrap();
        assert_eq!(manifest_read(&path).unwrap(), pairs);
    }
}
