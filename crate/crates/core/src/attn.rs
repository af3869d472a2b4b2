//! Spatial and spectral gradient attention.
//!
//! Both blocks turn first-difference maps of the feature cube into a sigmoid
//! gate: the spatial gate is one H x W map broadcast over channels, the
//! spectral gate one per-channel vector broadcast over pixels. Normalization
//! is whole-map min-max to [0, 1], zeroed when the map is constant (range
//! below 1e-8).

use rand::Rng;

use crate::params::{uniform_init, BoundParams, ParamId, ParamSet};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Horizontal/vertical first differences, zero-padded at the trailing edge
/// back to H x W, plus their concatenated normalized stack.
pub struct SpatialGradientMaps<T: Scalar> {
    pub g_x: Tensor<T>,    // (H, W, C)
    pub g_y: Tensor<T>,    // (H, W, C)
    pub g_norm: Tensor<T>, // (H, W, 2C), values in [0, 1]
}

/// Along-band first difference and its channel-compensated form.
pub struct SpectralGradientMap<T: Scalar> {
    pub g_partial: Tensor<T>, // (H, W, C-1), normalized
    pub g_comp: Tensor<T>,    // (H, W, C); last channel duplicates C-2
}

/// Pure (non-tape) spatial gradient maps, for oracles and inspection.
pub fn spatial_gradient_maps<T: Scalar>(f: &Tensor<T>) -> SpatialGradientMaps<T> {
    let s = f.shape();
    assert_eq!(s.len(), 3);
    let (h, w, c) = (s[0], s[1], s[2]);
    assert!(h >= 2 && w >= 2, "spatial gradients need H, W >= 2");
    let mut g_x = Tensor::zeros(vec![h, w, c]);
    let mut g_y = Tensor::zeros(vec![h, w, c]);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                if x + 1 < w {
                    *g_x.at_mut(&[y, x, ch]) = f.at(&[y, x + 1, ch]) - f.at(&[y, x, ch]);
                }
                if y + 1 < h {
                    *g_y.at_mut(&[y, x, ch]) = f.at(&[y + 1, x, ch]) - f.at(&[y, x, ch]);
                }
            }
        }
    }
    let mut stacked = Tensor::zeros(vec![h, w, 2 * c]);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                *stacked.at_mut(&[y, x, ch]) = g_x.at(&[y, x, ch]);
                *stacked.at_mut(&[y, x, c + ch]) = g_y.at(&[y, x, ch]);
            }
        }
    }
    let g_norm = minmax_normalize_tensor(&stacked);
    SpatialGradientMaps { g_x, g_y, g_norm }
}

/// Pure (non-tape) spectral gradient map.
pub fn spectral_gradient_map<T: Scalar>(f: &Tensor<T>) -> SpectralGradientMap<T> {
    let s = f.shape();
    assert_eq!(s.len(), 3);
    let (h, w, c) = (s[0], s[1], s[2]);
    assert!(c >= 2, "spectral gradient needs C >= 2");
    let mut partial = Tensor::zeros(vec![h, w, c - 1]);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c - 1 {
                *partial.at_mut(&[y, x, ch]) = f.at(&[y, x, ch + 1]) - f.at(&[y, x, ch]);
            }
        }
    }
    let g_partial = minmax_normalize_tensor(&partial);
    let mut g_comp = Tensor::zeros(vec![h, w, c]);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c - 1 {
                *g_comp.at_mut(&[y, x, ch]) = g_partial.at(&[y, x, ch]);
            }
            *g_comp.at_mut(&[y, x, c - 1]) = g_partial.at(&[y, x, c - 2]);
        }
    }
    SpectralGradientMap { g_partial, g_comp }
}

fn minmax_normalize_tensor<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let lo = t.data().iter().copied().fold(T::infinity(), T::min);
    let hi = t.data().iter().copied().fold(T::neg_infinity(), T::max);
    let range = hi - lo;
    if range.into_f64() < 1e-8 {
        return Tensor::zeros(t.shape().to_vec());
    }
    Tensor::new(
        t.shape().to_vec(),
        t.data().iter().map(|&v| (v - lo) / range).collect(),
    )
}

/// Sigmoid gate over pooled spatial first-difference maps, broadcast over
/// channels. The pooled pair is mixed by one k x k conv down to a single map.
pub struct SpatialGradAttn {
    pub kernel: usize,
    conv_w: ParamId, // (k, k, 2, 1)
    conv_b: ParamId, // (1,)
}

impl SpatialGradAttn {
    pub fn new<T: Scalar>(
        prefix: &str,
        kernel: usize,
        params: &mut ParamSet<T>,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(kernel % 2 == 1, "attention conv kernel must be odd");
        let fan_in = kernel * kernel * 2;
        let conv_w = params.alloc(
            format!("{prefix}.conv.w"),
            uniform_init(vec![kernel, kernel, 2, 1], fan_in, rng),
        );
        let conv_b = params.alloc(format!("{prefix}.conv.b"), Tensor::zeros(vec![1]));
        SpatialGradAttn { kernel, conv_w, conv_b }
    }

    pub fn param_count(&self) -> usize {
        self.kernel * self.kernel * 2 + 1
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, pv: &BoundParams, f: Var) -> Var {
        let att = self.attention_map(tape, pv, f);
        tape.mul(f, att)
    }

    /// The (H, W, 1) gate alone, strictly inside (0, 1).
    pub fn attention_map<T: Scalar>(&self, tape: &mut Tape<T>, pv: &BoundParams, f: Var) -> Var {
        let s = tape.shape(f).to_vec();
        assert_eq!(s.len(), 3, "spatial attention input must be (H, W, C)");
        let (h, w, c) = (s[0], s[1], s[2]);
        assert!(h >= 2 && w >= 2, "spatial attention needs H, W >= 2");

        // trailing-edge zero padding keeps both maps aligned with f
        let right = tape.slice(f, 1, 1, w - 1);
        let left = tape.slice(f, 1, 0, w - 1);
        let gx_core = tape.sub(right, left);
        let col_pad = tape.constant(Tensor::zeros(vec![h, 1, c]));
        let g_x = tape.concat(&[gx_core, col_pad], 1);

        let down = tape.slice(f, 0, 1, h - 1);
        let up = tape.slice(f, 0, 0, h - 1);
        let gy_core = tape.sub(down, up);
        let row_pad = tape.constant(Tensor::zeros(vec![1, w, c]));
        let g_y = tape.concat(&[gy_core, row_pad], 0);

        let stacked = tape.concat(&[g_x, g_y], 2);
        let g_norm = tape.minmax_normalize(stacked);

        let g_max = tape.reduce_max(g_norm, &[2]);
        let g_avg = tape.reduce_mean(g_norm, &[2]);
        let pooled = tape.concat(&[g_max, g_avg], 2);
        let mixed = tape.conv2d(pooled, pv.var(self.conv_w), pv.var(self.conv_b));
        tape.sigmoid(mixed)
    }
}

/// Sigmoid gate over pooled along-band first differences, broadcast over
/// pixels. Pool-then-sum carries no learned weights.
pub struct SpectralGradAttn;

impl SpectralGradAttn {
    pub fn param_count(&self) -> usize {
        0
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, f: Var) -> Var {
        let att = self.attention_map(tape, f);
        tape.mul(f, att)
    }

    /// The (1, 1, C) gate alone.
    pub fn attention_map<T: Scalar>(&self, tape: &mut Tape<T>, f: Var) -> Var {
        let s = tape.shape(f).to_vec();
        assert_eq!(s.len(), 3, "spectral attention input must be (H, W, C)");
        let c = s[2];
        assert!(c >= 2, "spectral attention needs C >= 2");

        let hi = tape.slice(f, 2, 1, c - 1);
        let lo = tape.slice(f, 2, 0, c - 1);
        let partial = tape.sub(hi, lo);
        let g_partial = tape.minmax_normalize(partial);
        // duplicate the last gradient channel to restore C channels
        let last = tape.slice(g_partial, 2, c - 2, 1);
        let g_comp = tape.concat(&[g_partial, last], 2);

        let g_max = tape.reduce_max(g_comp, &[0, 1]);
        let g_avg = tape.reduce_mean(g_comp, &[0, 1]);
        let summed = tape.add(g_max, g_avg);
        tape.sigmoid(summed)
    }
}
