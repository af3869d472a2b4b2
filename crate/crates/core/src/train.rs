//! Training engine: L1 loss, Adam, polynomial learning-rate decay.
//!
//! The loop is deterministic for a given seed: batch indices and crop
//! offsets are drawn up front each step, batch elements run forward/backward
//! independently (in parallel when a rayon pool is available), and gradients
//! are reduced in batch-index order before one Adam step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::GmsrNet;
use crate::params::ParamSet;
use crate::scalar::Scalar;
use crate::scan::ScanImpl;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("pair {index}: rgb {rgb:?} and cube {cube:?} disagree spatially")]
    ShapeMismatch { index: usize, rgb: Vec<usize>, cube: Vec<usize> },
    #[error("loss became NaN at step {step}")]
    NanLoss { step: usize },
    #[error("NaN gradient in parameter {param} at step {step}")]
    NanGrad { step: usize, param: String },
}

/// Mean absolute difference on the tape (Eq.-7 style objective).
pub fn l1_loss<T: Scalar>(tape: &mut Tape<T>, z: Var, z_ref: Var) -> Var {
    assert_eq!(tape.shape(z), tape.shape(z_ref), "l1 loss shape mismatch");
    let diff = tape.sub(z, z_ref);
    let mag = tape.abs(diff);
    tape.mean_all(mag)
}

/// Plain-value L1 for reporting.
pub fn l1_value<T: Scalar>(z: &Tensor<T>, z_ref: &Tensor<T>) -> T {
    assert_eq!(z.shape(), z_ref.shape());
    let sum: T = z
        .data()
        .iter()
        .zip(z_ref.data())
        .map(|(&a, &b)| (a - b).abs())
        .sum();
    sum / T::from_f64_lossy(z.len() as f64)
}

/// Adam moments, one slot per parameter tensor in registration order.
pub struct AdamState<T: Scalar> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.99;
pub const ADAM_EPS: f64 = 1e-8;

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        let m = params.iter().map(|(_, t)| vec![T::zero(); t.len()]).collect();
        let v = params.iter().map(|(_, t)| vec![T::zero(); t.len()]).collect();
        AdamState { m, v, t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update. `grads` follows registration order.
pub fn adam_step<T: Scalar>(
    params: &mut ParamSet<T>,
    grads: &[Vec<T>],
    state: &mut AdamState<T>,
    lr: T,
) -> Result<(), TrainError> {
    assert_eq!(grads.len(), params.len(), "gradient slot count mismatch");
    for (slot, (name, _)) in params.iter().enumerate() {
        if grads[slot].iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NanGrad { step: state.t as usize, param: name.to_string() });
        }
    }
    state.t += 1;
    let t = state.t as f64;
    let b1 = T::from_f64_lossy(ADAM_BETA1);
    let b2 = T::from_f64_lossy(ADAM_BETA2);
    let eps = T::from_f64_lossy(ADAM_EPS);
    let corr1 = T::from_f64_lossy(1.0 - ADAM_BETA1.powf(t));
    let corr2 = T::from_f64_lossy(1.0 - ADAM_BETA2.powf(t));
    for (slot, (_, tensor)) in params.iter_mut().enumerate() {
        let (m, v, g) = (&mut state.m[slot], &mut state.v[slot], &grads[slot]);
        assert_eq!(g.len(), tensor.len());
        for (i, p) in tensor.data_mut().iter_mut().enumerate() {
            m[i] = b1 * m[i] + (T::one() - b1) * g[i];
            v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// lr(t) = lr0 * (1 - t/T)^power, evaluated per step.
#[derive(Debug, Clone, Copy)]
pub struct LrSchedule {
    pub lr0: f64,
    pub power: f64,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn new(lr0: f64, total_steps: usize) -> Self {
        LrSchedule { lr0, power: 1.5, total_steps }
    }

    pub fn lr_at(&self, t: usize) -> f64 {
        assert!(t <= self.total_steps, "step {t} past schedule end {}", self.total_steps);
        self.lr0 * (1.0 - t as f64 / self.total_steps as f64).powf(self.power)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Square crop side; `None` trains on whole images.
    pub patch_size: Option<usize>,
    pub lr0: f64,
    pub power: f64,
    pub seed: u64,
    pub scan_impl: ScanImpl,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 200,
            batch_size: 4,
            patch_size: Some(32),
            lr0: 1e-4,
            power: 1.5,
            seed: 0,
            scan_impl: ScanImpl::Parallel,
        }
    }
}

/// One row of the loss trace (`step,lr,loss` in the CSV).
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

pub fn loss_trace_csv(trace: &[StepRecord]) -> String {
    let mut out = String::from("step,lr,loss\n");
    for r in trace {
        out.push_str(&format!("{},{},{}\n", r.step, r.lr, r.loss));
    }
    out
}

fn crop<T: Scalar>(t: &Tensor<T>, y0: usize, x0: usize, side: usize) -> Tensor<T> {
    let s = t.shape();
    let (h, w, c) = (s[0], s[1], s[2]);
    assert!(y0 + side <= h && x0 + side <= w);
    let mut out = Tensor::zeros(vec![side, side, c]);
    for y in 0..side {
        for x in 0..side {
            for ch in 0..c {
                *out.at_mut(&[y, x, ch]) = t.at(&[y0 + y, x0 + x, ch]);
            }
        }
    }
    out
}

/// Train in place; returns the per-step loss trace.
pub fn train<T: Scalar>(
    model: &mut GmsrNet<T>,
    dataset: &[(Tensor<T>, Tensor<T>)],
    cfg: &TrainConfig,
) -> Result<Vec<StepRecord>, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for (i, (rgb, cube)) in dataset.iter().enumerate() {
        let (rs, cs) = (rgb.shape(), cube.shape());
        if rs.len() != 3 || cs.len() != 3 || rs[0] != cs[0] || rs[1] != cs[1] {
            return Err(TrainError::ShapeMismatch {
                index: i,
                rgb: rs.to_vec(),
                cube: cs.to_vec(),
            });
        }
        assert_eq!(rs[2], model.cfg.in_channels, "pair {i}: rgb channel mismatch");
        assert_eq!(cs[2], model.cfg.out_channels, "pair {i}: cube band mismatch");
    }

    let schedule = LrSchedule { lr0: cfg.lr0, power: cfg.power, total_steps: cfg.steps };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&model.params);
    let mut trace = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        // draw all randomness up front so parallelism cannot perturb it
        let batch: Vec<(Tensor<T>, Tensor<T>)> = (0..cfg.batch_size)
            .map(|_| {
                let (rgb, cube) = &dataset[rng.gen_range(0..dataset.len())];
                match cfg.patch_size {
                    Some(side) if side < rgb.shape()[0] || side < rgb.shape()[1] => {
                        let side = side.min(rgb.shape()[0]).min(rgb.shape()[1]);
                        let y0 = rng.gen_range(0..=rgb.shape()[0] - side);
                        let x0 = rng.gen_range(0..=rgb.shape()[1] - side);
                        (crop(rgb, y0, x0, side), crop(cube, y0, x0, side))
                    }
                    _ => (rgb.clone(), cube.clone()),
                }
            })
            .collect();

        let per_element: Vec<(T, Vec<Vec<T>>)> = batch
            .par_iter()
            .map(|(rgb, cube)| {
                let mut tape = Tape::new();
                let pv = model.params.bind(&mut tape);
                let x = tape.leaf(rgb.clone(), false);
                let target = tape.leaf(cube.clone(), false);
                let pred = model.forward(&mut tape, &pv, x, cfg.scan_impl);
                let loss = l1_loss(&mut tape, pred, target);
                tape.backward(loss).expect("scalar loss backward");
                (tape.data(loss)[0], pv.gradients(&tape))
            })
            .collect();

        // fixed-order reduction: batch mean of losses and gradients
        let inv_b = T::from_f64_lossy(1.0 / cfg.batch_size as f64);
        let mut loss_sum = T::zero();
        let mut grads: Vec<Vec<T>> =
            model.params.iter().map(|(_, t)| vec![T::zero(); t.len()]).collect();
        for (l, g) in &per_element {
            loss_sum += *l;
            for (slot, gs) in g.iter().enumerate() {
                for (acc, &v) in grads[slot].iter_mut().zip(gs) {
                    *acc += v * inv_b;
                }
            }
        }
        let loss = (loss_sum * inv_b).into_f64();
        if loss.is_nan() {
            return Err(TrainError::NanLoss { step });
        }

        let lr = schedule.lr_at(step);
        adam_step(&mut model.params, &grads, &mut state, T::from_f64_lossy(lr))?;
        trace.push(StepRecord { step, lr, loss });
    }
    Ok(trace)
}
