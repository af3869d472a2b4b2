//! Reconstruction quality metrics: RMSE, PSNR, ASSIM, SAM.
//!
//! All four operate on (H, W, C) cubes with values in [0, 1] and report in
//! f64. ASSIM is the per-band mean of single-band SSIM with an 11x11
//! Gaussian window (sigma 1.5, K1 0.01, K2 0.03, dynamic range 1.0); the
//! window shrinks to the largest odd size that fits small images. PSNR of
//! identical inputs is +infinity, serialized as `inf` in CSV. SAM averages
//! the per-pixel spectral angle in degrees, skipping pixels where either
//! spectrum has near-zero norm.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SAM_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub rmse: f64,
    /// +infinity for identical inputs; serialize as `inf`.
    pub psnr: f64,
    pub assim: f64,
    pub sam_degrees: f64,
    /// Pixels skipped by SAM for near-zero spectral norm.
    pub sam_excluded: usize,
    pub per_band_mse: Vec<f64>,
    /// Absolute error per band, row-major H x W, for heatmap rendering.
    pub per_band_abs_error: Vec<Vec<f64>>,
    pub height: usize,
    pub width: usize,
}

impl MetricsReport {
    /// One CSV row in the `name,rmse,psnr,assim,sam` layout.
    pub fn csv_row(&self, name: &str) -> String {
        let psnr = if self.psnr.is_infinite() { "inf".to_string() } else { self.psnr.to_string() };
        format!("{},{},{},{},{}", name, self.rmse, psnr, self.assim, self.sam_degrees)
    }
}

pub fn metrics_csv_header() -> &'static str {
    "name,rmse,psnr,assim,sam"
}

fn check_pair<T: Scalar>(z: &Tensor<T>, z_ref: &Tensor<T>) -> (usize, usize, usize) {
    assert_eq!(z.shape(), z_ref.shape(), "metric inputs must share a shape");
    let s = z.shape();
    assert_eq!(s.len(), 3, "metric inputs must be (H, W, C)");
    (s[0], s[1], s[2])
}

pub fn rmse<T: Scalar>(z: &Tensor<T>, z_ref: &Tensor<T>) -> f64 {
    check_pair(z, z_ref);
    let mse = z
        .data()
        .iter()
        .zip(z_ref.data())
        .map(|(&a, &b)| {
            let d = a.into_f64() - b.into_f64();
            d * d
        })
        .sum::<f64>()
        / z.len() as f64;
    mse.sqrt()
}

pub fn psnr<T: Scalar>(z: &Tensor<T>, z_ref: &Tensor<T>, peak: f64) -> f64 {
    assert!(peak > 0.0);
    let r = rmse(z, z_ref);
    if r == 0.0 {
        f64::INFINITY
    } else {
        10.0 * ((peak * peak) / (r * r)).log10()
    }
}

/// Largest odd window side that fits both spatial extents, capped at 11.
pub fn ssim_window_for(h: usize, w: usize) -> usize {
    assert!(h >= 3 && w >= 3, "ssim needs spatial extent >= 3");
    let m = h.min(w).min(SSIM_WINDOW);
    if m % 2 == 0 { m - 1 } else { m }
}

fn gaussian_kernel(side: usize, sigma: f64) -> Vec<f64> {
    let half = (side / 2) as isize;
    let mut k: Vec<f64> = (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable valid-region Gaussian filter of an H x W plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let side = kernel.len();
    let (oh, ow) = (h - side + 1, w - side + 1);
    // rows first: (h, ow)
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                acc += k * plane[y * w + x + i];
            }
            rows[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                acc += k * rows[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Single-band SSIM via separable Gaussian filtering (the production path).
pub fn ssim_band(x: &[f64], y: &[f64], h: usize, w: usize, range: f64) -> f64 {
    let side = ssim_window_for(h, w);
    let kernel = gaussian_kernel(side, SSIM_SIGMA);
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);

    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = filter_valid(x, h, w, &kernel);
    let mu_y = filter_valid(y, h, w, &kernel);
    let e_xx = filter_valid(&xx, h, w, &kernel);
    let e_yy = filter_valid(&yy, h, w, &kernel);
    let e_xy = filter_valid(&xy, h, w, &kernel);

    let mut sum = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        sum += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
            / ((mx * mx + my * my + c1) * (var_x + var_y + c2));
    }
    sum / mu_x.len() as f64
}

/// Direct sliding-window SSIM, O(H*W*side^2) — the oracle route.
pub fn ssim_band_direct(x: &[f64], y: &[f64], h: usize, w: usize, range: f64) -> f64 {
    let side = ssim_window_for(h, w);
    let k1 = gaussian_kernel(side, SSIM_SIGMA);
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let (oh, ow) = (h - side + 1, w - side + 1);
    let mut sum = 0.0;
    for y0 in 0..oh {
        for x0 in 0..ow {
            let (mut mx, mut my, mut exx, mut eyy, mut exy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..side {
                for dx in 0..side {
                    let wgt = k1[dy] * k1[dx];
                    let a = x[(y0 + dy) * w + x0 + dx];
                    let b = y[(y0 + dy) * w + x0 + dx];
                    mx += wgt * a;
                    my += wgt * b;
                    exx += wgt * a * a;
                    eyy += wgt * b * b;
                    exy += wgt * a * b;
                }
            }
            let var_x = exx - mx * mx;
            let var_y = eyy - my * my;
            let cov = exy - mx * my;
            sum += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (var_x + var_y + c2));
        }
    }
    sum / (oh * ow) as f64
}

fn band_plane<T: Scalar>(t: &Tensor<T>, band: usize) -> Vec<f64> {
    let s = t.shape();
    let (h, w) = (s[0], s[1]);
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = t.at(&[y, x, band]).into_f64();
        }
    }
    out
}

/// Mean over bands of single-band SSIM.
pub fn assim<T: Scalar>(z: &Tensor<T>, z_ref: &Tensor<T>) -> f64 {
    let (h, w, c) = check_pair(z, z_ref);
    (0..c)
        .map(|b| ssim_band(&band_plane(z, b), &band_plane(z_ref, b), h, w, 1.0))
        .sum::<f64>()
        / c as f64
}

/// Mean spectral angle in degrees plus the count of excluded pixels.
pub fn sam<T: Scalar>(z: &Tensor<T>, z_ref: &Tensor<T>) -> (f64, usize) {
    let (h, w, c) = check_pair(z, z_ref);
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut excluded = 0usize;
    for y in 0..h {
        for x in 0..w {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for ch in 0..c {
                let a = z.at(&[y, x, ch]).into_f64();
                let b = z_ref.at(&[y, x, ch]).into_f64();
                dot += a * b;
                na += a * a;
                nb += b * b;
            }
            let (na, nb) = (na.sqrt(), nb.sqrt());
            if na < SAM_NORM_EPS || nb < SAM_NORM_EPS {
                excluded += 1;
                continue;
            }
            let cos = (dot / (na * nb)).clamp(-1.0, 1.0);
            sum += cos.acos().to_degrees();
            used += 1;
        }
    }
    let mean = if used == 0 { 0.0 } else { sum / used as f64 };
    (mean, excluded)
}

/// All four metrics plus per-band error maps.
pub fn evaluate<T: Scalar>(z: &Tensor<T>, z_ref: &Tensor<T>) -> MetricsReport {
    let (h, w, c) = check_pair(z, z_ref);
    let mut per_band_mse = Vec::with_capacity(c);
    let mut per_band_abs_error = Vec::with_capacity(c);
    for b in 0..c {
        let mut mse = 0.0;
        let mut abs_map = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let d = z.at(&[y, x, b]).into_f64() - z_ref.at(&[y, x, b]).into_f64();
                mse += d * d;
                abs_map[y * w + x] = d.abs();
            }
        }
        per_band_mse.push(mse / (h * w) as f64);
        per_band_abs_error.push(abs_map);
    }
    let (sam_degrees, sam_excluded) = sam(z, z_ref);
    MetricsReport {
        rmse: rmse(z, z_ref),
        psnr: psnr(z, z_ref, 1.0),
        assim: assim(z, z_ref),
        sam_degrees,
        sam_excluded,
        per_band_mse,
        per_band_abs_error,
        height: h,
        width: w,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cube(shape: Vec<usize>, rng: &mut impl Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen::<f64>()).collect())
    }

    #[test]
    fn identical_inputs_are_perfect() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = random_cube(vec![12, 12, 4], &mut rng);
        let r = evaluate(&z, &z);
        assert_eq!(r.rmse, 0.0);
        assert!(r.psnr.is_infinite());
        assert!((r.assim - 1.0).abs() < 1e-12);
        // acos roundoff leaves identical spectra a hair above zero degrees
        assert!(r.sam_degrees < 1e-5);
        assert_eq!(
            r.csv_row("self"),
            format!("self,0,inf,{},{}", r.assim, r.sam_degrees)
        );
    }

    #[test]
    fn constant_error_point_one_gives_twenty_db() {
        let z = Tensor::full(vec![8, 8, 3], 0.5);
        let zr = Tensor::full(vec![8, 8, 3], 0.6);
        assert!((rmse(&z, &zr) - 0.1).abs() < 1e-12);
        assert!((psnr(&z, &zr, 1.0) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn rmse_matches_direct_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = random_cube(vec![7, 9, 5], &mut rng);
        let zr = random_cube(vec![7, 9, 5], &mut rng);
        let direct = (z
            .data()
            .iter()
            .zip(zr.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / z.len() as f64)
            .sqrt();
        assert!((rmse(&z, &zr) - direct).abs() < 1e-12);
    }

    #[test]
    fn ssim_filter_route_matches_direct_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (h, w) in [(8, 8), (16, 16), (13, 19)] {
            let x: Vec<f64> = (0..h * w).map(|_| rng.gen()).collect();
            let y: Vec<f64> = (0..h * w).map(|_| rng.gen()).collect();
            let fast = ssim_band(&x, &y, h, w, 1.0);
            let slow = ssim_band_direct(&x, &y, h, w, 1.0);
            assert!((fast - slow).abs() < 1e-10, "{h}x{w}: {fast} vs {slow}");
        }
    }

    #[test]
    fn ssim_window_shrinks_on_small_images() {
        assert_eq!(ssim_window_for(32, 32), 11);
        assert_eq!(ssim_window_for(8, 8), 7);
        assert_eq!(ssim_window_for(7, 20), 7);
        assert_eq!(ssim_window_for(3, 3), 3);
    }

    #[test]
    fn inverted_structured_image_scores_below_one() {
        let mut z = Tensor::<f64>::zeros(vec![16, 16, 1]);
        for y in 0..16 {
            for x in 0..16 {
                *z.at_mut(&[y, x, 0]) = ((x + y) % 2) as f64;
            }
        }
        let inv = Tensor::new(
            vec![16, 16, 1],
            z.data().iter().map(|v| 1.0 - v).collect::<Vec<_>>(),
        );
        assert!(assim(&z, &inv) < 1.0);
    }

    #[test]
    fn assim_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random_cube(vec![12, 12, 3], &mut rng);
        let zr = random_cube(vec![12, 12, 3], &mut rng);
        assert!((assim(&z, &zr) - assim(&zr, &z)).abs() < 1e-12);
    }

    #[test]
    fn sam_orthogonal_and_scale_invariance() {
        // per-pixel spectra (1,0) vs (0,1) -> 90 degrees
        let mut a = Tensor::<f64>::zeros(vec![2, 2, 2]);
        let mut b = Tensor::<f64>::zeros(vec![2, 2, 2]);
        for y in 0..2 {
            for x in 0..2 {
                *a.at_mut(&[y, x, 0]) = 1.0;
                *b.at_mut(&[y, x, 1]) = 1.0;
            }
        }
        let (deg, excl) = sam(&a, &b);
        assert!((deg - 90.0).abs() < 1e-10);
        assert_eq!(excl, 0);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = random_cube(vec![5, 5, 6], &mut rng);
        let zr = random_cube(vec![5, 5, 6], &mut rng);
        let scaled = Tensor::new(
            vec![5, 5, 6],
            z.data().iter().map(|v| v * 2.5).collect::<Vec<_>>(),
        );
        let (d1, _) = sam(&z, &zr);
        let (d2, _) = sam(&scaled, &zr);
        assert!((d1 - d2).abs() < 1e-10);
        let (self_deg, _) = sam(&z, &z);
        assert!(self_deg < 1e-5);
    }

    #[test]
    fn sam_excludes_zero_norm_pixels() {
        let mut z = Tensor::<f64>::zeros(vec![1, 2, 3]);
        let mut zr = Tensor::<f64>::zeros(vec![1, 2, 3]);
        // pixel 0 is all-zero in z; pixel 1 is identical nonzero
        for ch in 0..3 {
            *zr.at_mut(&[0, 0, ch]) = 0.5;
            *z.at_mut(&[0, 1, ch]) = 0.3;
            *zr.at_mut(&[0, 1, ch]) = 0.3;
        }
        let (deg, excl) = sam(&z, &zr);
        assert_eq!(excl, 1);
        assert!(deg < 1e-5);
    }

    #[test]
    fn psnr_decreases_with_noise_amplitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = random_cube(vec![10, 10, 4], &mut rng);
        let noise: Vec<f64> = (0..z.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut prev = f64::INFINITY;
        for amp in [0.01, 0.05, 0.2] {
            let noisy = Tensor::new(
                z.shape().to_vec(),
                z.data().iter().zip(&noise).map(|(v, n)| v + amp * n).collect::<Vec<_>>(),
            );
            let p = psnr(&noisy, &z, 1.0);
            assert!(p < prev, "amp {amp}: {p} !< {prev}");
            prev = p;
        }
    }

    #[test]
    fn per_band_mse_aggregates_to_global_rmse() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z = random_cube(vec![9, 7, 5], &mut rng);
        let zr = random_cube(vec![9, 7, 5], &mut rng);
        let r = evaluate(&z, &zr);
        let agg = (r.per_band_mse.iter().sum::<f64>() / r.per_band_mse.len() as f64).sqrt();
        assert!((agg - r.rmse).abs() < 1e-12);
        assert_eq!(r.per_band_abs_error.len(), 5);
        assert_eq!(r.per_band_abs_error[0].len(), 63);
    }
}
