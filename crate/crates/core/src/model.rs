//! GMSR-Net: stem, stacked Gradient Mamba blocks, head.
//!
//! Each block runs three parallel branches on the same input — the VSS
//! state-space block, spatial gradient attention, and spectral gradient
//! attention — concatenates whichever are enabled, fuses back to trunk width
//! with a 1x1 conv, and adds the residual. Trunk width is constant (`C_f`),
//! the stem lifts RGB to it and the head projects to the output band count.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attn::{SpatialGradAttn, SpectralGradAttn};
use crate::params::{uniform_init, BoundParams, ParamSet};
use crate::params::ParamId;
use crate::scalar::Scalar;
use crate::scan::ScanImpl;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::vss::{VssConfig, VssLayer};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GMSR";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad checkpoint magic (expected \"GMSR\")")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint holds {found} parameters, config requires {expected}")]
    ParamCountMismatch { expected: usize, found: usize },
    #[error("checkpoint parameter {0} is not finite")]
    NonFiniteParam(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchToggles {
    pub vss: bool,
    pub g_spa: bool,
    pub g_spe: bool,
}

impl Default for BranchToggles {
    fn default() -> Self {
        BranchToggles { vss: true, g_spa: true, g_spe: true }
    }
}

impl BranchToggles {
    pub fn enabled_count(&self) -> usize {
        self.vss as usize + self.g_spa as usize + self.g_spe as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GmsrConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Trunk width C_f, constant across blocks.
    pub feature_width: usize,
    pub num_blocks: usize,
    /// SSM state size N per scan direction.
    pub state_size: usize,
    /// VSS expansion factor as a rational lambda = num/den.
    pub lambda_num: usize,
    pub lambda_den: usize,
    /// Spatial-attention mixing conv kernel (odd).
    pub spa_kernel: usize,
    pub toggles: BranchToggles,
    pub seed: u64,
}

impl Default for GmsrConfig {
    fn default() -> Self {
        GmsrConfig {
            in_channels: 3,
            out_channels: 31,
            feature_width: 16,
            num_blocks: 3,
            state_size: 16,
            lambda_num: 2,
            lambda_den: 1,
            spa_kernel: 7,
            toggles: BranchToggles::default(),
            seed: 0,
        }
    }
}

impl GmsrConfig {
    pub fn validate(&self) {
        assert!(self.num_blocks >= 1, "need at least one block");
        assert!(self.feature_width >= 1 && self.out_channels >= 1 && self.in_channels >= 1);
        assert!(self.toggles.enabled_count() >= 1, "at least one branch must be enabled");
        assert!(self.spa_kernel % 2 == 1, "spatial attention kernel must be odd");
        // delegate the lambda divisibility check
        let _ = self.vss_config();
    }

    pub fn vss_config(&self) -> VssConfig {
        VssConfig::new(self.feature_width, self.lambda_num, self.lambda_den, self.state_size)
    }
}

/// Exact learnable-scalar count, a pure function of the config.
pub fn param_count(cfg: &GmsrConfig) -> usize {
    cfg.validate();
    let c = cfg.feature_width;
    let stem = cfg.in_channels * c + c;
    let head = c * cfg.out_channels + cfg.out_channels;

    let vss = if cfg.toggles.vss {
        let e = cfg.vss_config().expanded;
        let n = cfg.state_size;
        let per_scan = e * n + e + e * e + e + e * n + e * n;
        (c * e + e) + (9 * e + e) + 2 * e + 4 * per_scan + (c * e + e) + (e * c + c)
    } else {
        0
    };
    let spa = if cfg.toggles.g_spa { cfg.spa_kernel * cfg.spa_kernel * 2 + 1 } else { 0 };
    let spe = 0; // the spectral gate carries no learned weights
    let k = cfg.toggles.enabled_count();
    let fuse = k * c * c + c;

    stem + cfg.num_blocks * (vss + spa + spe + fuse) + head
}

/// One tri-branch block; disabled branches are dropped from the concat and
/// the fuse conv is shaped k*C_f -> C_f for k enabled branches.
pub struct GmBlock {
    vss: Option<VssLayer>,
    spa: Option<SpatialGradAttn>,
    spe: Option<SpectralGradAttn>,
    fuse_w: ParamId, // (k*C_f, C_f)
    fuse_b: ParamId, // (C_f,)
}

impl GmBlock {
    fn new<T: Scalar>(
        prefix: &str,
        cfg: &GmsrConfig,
        params: &mut ParamSet<T>,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let c = cfg.feature_width;
        let vss = cfg
            .toggles
            .vss
            .then(|| VssLayer::new(&format!("{prefix}.vss"), cfg.vss_config(), params, rng));
        let spa = cfg
            .toggles
            .g_spa
            .then(|| SpatialGradAttn::new(&format!("{prefix}.spa"), cfg.spa_kernel, params, rng));
        let spe = cfg.toggles.g_spe.then_some(SpectralGradAttn);
        let k = cfg.toggles.enabled_count();
        let fuse_w =
            params.alloc(format!("{prefix}.fuse.w"), uniform_init(vec![k * c, c], k * c, rng));
        let fuse_b = params.alloc(format!("{prefix}.fuse.b"), Tensor::zeros(vec![c]));
        GmBlock { vss, spa, spe, fuse_w, fuse_b }
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        pv: &BoundParams,
        f: Var,
        which: ScanImpl,
    ) -> Var {
        let mut branches = Vec::with_capacity(3);
        if let Some(vss) = &self.vss {
            branches.push(vss.forward(tape, pv, f, which));
        }
        if let Some(spa) = &self.spa {
            branches.push(spa.forward(tape, pv, f));
        }
        if let Some(spe) = &self.spe {
            branches.push(spe.forward(tape, f));
        }
        let y = if branches.len() == 1 { branches[0] } else { tape.concat(&branches, 2) };
        let z = tape.linear_hw(y, pv.var(self.fuse_w), pv.var(self.fuse_b));
        tape.add(z, f)
    }
}

/// The full network plus its parameter store.
pub struct GmsrNet<T: Scalar> {
    pub cfg: GmsrConfig,
    pub params: ParamSet<T>,
    stem_w: ParamId,
    stem_b: ParamId,
    blocks: Vec<GmBlock>,
    head_w: ParamId,
    head_b: ParamId,
}

impl<T: Scalar> GmsrNet<T> {
    /// Deterministic construction: same config + seed, same weights.
    pub fn new(cfg: GmsrConfig) -> Self {
        cfg.validate();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = ParamSet::new();
        let c = cfg.feature_width;
        let stem_w = params
            .alloc("stem.w", uniform_init(vec![cfg.in_channels, c], cfg.in_channels, &mut rng));
        let stem_b = params.alloc("stem.b", Tensor::zeros(vec![c]));
        let blocks = (0..cfg.num_blocks)
            .map(|i| GmBlock::new(&format!("block{i}"), &cfg, &mut params, &mut rng))
            .collect();
        let head_w =
            params.alloc("head.w", uniform_init(vec![c, cfg.out_channels], c, &mut rng));
        let head_b = params.alloc("head.b", Tensor::zeros(vec![cfg.out_channels]));
        GmsrNet { cfg, params, stem_w, stem_b, blocks, head_w, head_b }
    }

    pub fn param_count(&self) -> usize {
        self.params.total_scalars()
    }

    /// Build the forward graph for an already-placed RGB variable.
    pub fn forward(&self, tape: &mut Tape<T>, pv: &BoundParams, rgb: Var, which: ScanImpl) -> Var {
        let shape = tape.shape(rgb).to_vec();
        assert_eq!(shape.len(), 3, "model input must be (H, W, C_in)");
        assert_eq!(shape[2], self.cfg.in_channels, "model input channel mismatch");
        let mut f = tape.linear_hw(rgb, pv.var(self.stem_w), pv.var(self.stem_b));
        for block in &self.blocks {
            f = block.forward(tape, pv, f, which);
        }
        tape.linear_hw(f, pv.var(self.head_w), pv.var(self.head_b))
    }

    /// Stem then head, skipping the trunk — the reference path for the
    /// residual-identity invariant (zeroed fuse convs).
    pub fn forward_stem_head_only(&self, tape: &mut Tape<T>, pv: &BoundParams, rgb: Var) -> Var {
        let f = tape.linear_hw(rgb, pv.var(self.stem_w), pv.var(self.stem_b));
        tape.linear_hw(f, pv.var(self.head_w), pv.var(self.head_b))
    }

    /// Inference convenience: fresh tape, no gradients.
    pub fn infer(&self, rgb: &Tensor<T>, which: ScanImpl) -> Tensor<T> {
        let mut tape = Tape::new();
        let pv = self.params.bind(&mut tape);
        let x = tape.leaf(rgb.clone(), false);
        let out = self.forward(&mut tape, &pv, x, which);
        Tensor::new(tape.shape(out).to_vec(), tape.data(out).to_vec())
    }

    /// Zero every fuse conv: the trunk becomes the identity on features.
    pub fn zero_fuse_convs(&mut self) {
        for block in &self.blocks {
            for id in [block.fuse_w, block.fuse_b] {
                let t = self.params.get_mut(id);
                *t = Tensor::zeros(t.shape().to_vec());
            }
        }
    }

    // ---- checkpoint I/O -------------------------------------------------

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), ModelError> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        write_config(&mut out, &self.cfg);
        let total = self.params.total_scalars();
        out.extend_from_slice(&(total as u64).to_le_bytes());
        for (_, t) in self.params.iter() {
            for &v in t.data() {
                out.extend_from_slice(&v.into_f64().to_le_bytes());
            }
        }
        File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self, ModelError> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = Reader { bytes: &bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(ModelError::BadMagic);
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::BadVersion(version));
        }
        let cfg = read_config(&mut r)?;
        let expected = param_count(&cfg);
        let found = r.u64()? as usize;
        if found != expected {
            return Err(ModelError::ParamCountMismatch { expected, found });
        }
        let mut model = GmsrNet::new(cfg);
        let mut idx = 0usize;
        for (_, t) in model.params.iter_mut() {
            for v in t.data_mut() {
                let raw = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
                if !raw.is_finite() {
                    return Err(ModelError::NonFiniteParam(idx));
                }
                *v = T::from_f64_lossy(raw);
                idx += 1;
            }
        }
        Ok(model)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelError::Io(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "truncated checkpoint",
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn write_config(out: &mut Vec<u8>, cfg: &GmsrConfig) {
    for v in [
        cfg.in_channels,
        cfg.out_channels,
        cfg.feature_width,
        cfg.num_blocks,
        cfg.state_size,
        cfg.lambda_num,
        cfg.lambda_den,
        cfg.spa_kernel,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(cfg.toggles.vss as u8);
    out.push(cfg.toggles.g_spa as u8);
    out.push(cfg.toggles.g_spe as u8);
    out.extend_from_slice(&cfg.seed.to_le_bytes());
}

fn read_config(r: &mut Reader) -> Result<GmsrConfig, ModelError> {
    let mut fields = [0usize; 8];
    for f in &mut fields {
        *f = r.u32()? as usize;
    }
    let toggles = BranchToggles {
        vss: r.take(1)?[0] != 0,
        g_spa: r.take(1)?[0] != 0,
        g_spe: r.take(1)?[0] != 0,
    };
    let seed = r.u64()?;
    Ok(GmsrConfig {
        in_channels: fields[0],
        out_channels: fields[1],
        feature_width: fields[2],
        num_blocks: fields[3],
        state_size: fields[4],
        lambda_num: fields[5],
        lambda_den: fields[6],
        spa_kernel: fields[7],
        toggles,
        seed,
    })
}
