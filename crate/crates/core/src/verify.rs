//! Named self-check suite backing the `verify` subcommand.
//!
//! Each check is a fast, deterministic invariant probe named by module and
//! operation; the suite passes iff every check does. The fault-injection
//! hook exists purely so the harness contract — a broken op must surface by
//! name with a nonzero exit — stays testable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attn::{spatial_gradient_maps, spectral_gradient_map, SpatialGradAttn, SpectralGradAttn};
use crate::gradcheck::{check_gradients, DEFAULT_STEP, DEFAULT_TOLERANCE};
use crate::metrics;
use crate::model::{param_count, GmsrConfig, GmsrNet};
use crate::params::ParamSet;
use crate::scan::{scan_parallel, scan_sequential, ScanImpl, ScanParams};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::vss::{VssConfig, VssLayer};

/// Deliberate breakage points for harness-contract tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct FaultInjection {
    /// Corrupt the parallel scan output inside its equivalence check.
    pub break_scan: bool,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    /// `module::operation` identifier, e.g. `scan::parallel_equivalence`.
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, outcome: Result<String, String>) -> CheckResult {
    match outcome {
        Ok(detail) => CheckResult { name: name.to_string(), passed: true, detail },
        Err(detail) => CheckResult { name: name.to_string(), passed: false, detail },
    }
}

fn random_tensor(shape: Vec<usize>, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
}

/// Run the whole suite; `faults` is `Default::default()` in production.
pub fn run_suite(faults: &FaultInjection) -> Vec<CheckResult> {
    vec![
        scan_equivalence(faults),
        scan_gradient(),
        vss_gradient(),
        attn_algebra(),
        attn_gradient(),
        model_residual_identity(),
        model_determinism(),
        model_param_count(),
        metric_oracles(),
        checkpoint_roundtrip(),
        cube_roundtrip(),
    ]
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

fn scan_equivalence(faults: &FaultInjection) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = 0.0f64;
    for &l in &[1usize, 3, 16, 100, 257, 1024] {
        let params = ScanParams::<f64>::init(4, 3, &mut rng);
        let x = random_tensor(vec![l, 4], &mut rng);
        let seq = scan_sequential(&x, &params);
        let mut par = scan_parallel(&x, &params);
        if faults.break_scan {
            par.data_mut()[0] += 1e-3;
        }
        for (a, b) in seq.data().iter().zip(par.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    check(
        "scan::parallel_equivalence",
        if worst < 1e-10 {
            Ok(format!("max |parallel - sequential| = {worst:.3e}"))
        } else {
            Err(format!("max |parallel - sequential| = {worst:.3e} exceeds 1e-10"))
        },
    )
}

fn gradcheck_outcome(
    worst: Result<f64, String>,
) -> Result<String, String> {
    match worst {
        Ok(w) => Ok(format!("max relative error {w:.3e}")),
        Err(msg) => Err(msg),
    }
}

fn scan_gradient() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let params = ScanParams::<f64>::init(3, 2, &mut rng);
    let x = random_tensor(vec![5, 3], &mut rng);
    let inputs = vec![x];
    let run = |ins: &[Tensor<f64>]| -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::new();
        let xv = tape.leaf(ins[0].clone(), true);
        let d = tape.leaf(
            Tensor::full(vec![5, 3], 0.5),
            false,
        );
        let b = tape.leaf(random_like(vec![5, 2], 102), false);
        let c = tape.leaf(random_like(vec![5, 2], 103), false);
        let a = tape.leaf(params.a_diag(), false);
        let skip = tape.leaf(Tensor::full(vec![3], 1.0), false);
        let y = tape.selective_scan(xv, d, b, c, a, skip, ScanImpl::Sequential);
        let sq = tape.mul(y, y);
        let loss = tape.mean_all(sq);
        tape.backward(loss).unwrap();
        (tape.data(loss)[0], vec![tape.grad(xv).unwrap().to_vec()])
    };
    let (_, analytic) = run(&inputs);
    let f = |ins: &[Tensor<f64>]| run(ins).0;
    check(
        "scan::gradient_check",
        gradcheck_outcome(check_gradients(f, &inputs, &analytic, DEFAULT_STEP, DEFAULT_TOLERANCE)),
    )
}

fn random_like(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen::<f64>() * 0.5 + 0.1).collect())
}

fn vss_gradient() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut pset = ParamSet::<f64>::new();
    let cfg = VssConfig::new(3, 2, 1, 2);
    let _ = VssLayer::new("vss", cfg, &mut pset, &mut rng);
    let x = random_tensor(vec![4, 4, 3], &mut rng);
    let mut inputs = vec![x];
    for (_, t) in pset.iter() {
        inputs.push(t.clone());
    }
    let run = |ins: &[Tensor<f64>]| -> (f64, Vec<Vec<f64>>) {
        let mut pset2 = ParamSet::new();
        let mut rng2 = ChaCha8Rng::seed_from_u64(104);
        let layer = VssLayer::new("vss", VssConfig::new(3, 2, 1, 2), &mut pset2, &mut rng2);
        for (i, (_, t)) in pset2.iter_mut().enumerate() {
            *t = ins[i + 1].clone();
        }
        let mut tape = Tape::new();
        let pv = pset2.bind(&mut tape);
        let xv = tape.leaf(ins[0].clone(), true);
        let y = layer.forward(&mut tape, &pv, xv, ScanImpl::Sequential);
        let sq = tape.mul(y, y);
        let loss = tape.mean_all(sq);
        tape.backward(loss).unwrap();
        let mut grads = vec![tape.grad(xv).unwrap().to_vec()];
        grads.extend(pv.gradients(&tape));
        (tape.data(loss)[0], grads)
    };
    let (_, analytic) = run(&inputs);
    let f = |ins: &[Tensor<f64>]| run(ins).0;
    check(
        "vss::gradient_check",
        gradcheck_outcome(check_gradients(f, &inputs, &analytic, DEFAULT_STEP, DEFAULT_TOLERANCE)),
    )
}

fn attn_algebra() -> CheckResult {
    // ramp image: g_x = 1 off the padded edge, g_y = 0
    let (h, w, c) = (4, 5, 2);
    let mut ramp = Tensor::<f64>::zeros(vec![h, w, c]);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                *ramp.at_mut(&[y, x, ch]) = x as f64;
            }
        }
    }
    let maps = spatial_gradient_maps(&ramp);
    for y in 0..h {
        for x in 0..w - 1 {
            for ch in 0..c {
                if maps.g_x.at(&[y, x, ch]) != 1.0 || maps.g_y.at(&[y, x, ch]) != 0.0 {
                    return check("attn::algebra", Err("ramp gradient mismatch".into()));
                }
            }
        }
    }
    // duplication invariant on a random cube
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let f = random_tensor(vec![3, 4, 5], &mut rng);
    let sm = spectral_gradient_map(&f);
    for y in 0..3 {
        for x in 0..4 {
            if sm.g_comp.at(&[y, x, 4]) != sm.g_comp.at(&[y, x, 3]) {
                return check("attn::algebra", Err("duplication invariant violated".into()));
            }
        }
    }
    // damping: |gated output| <= |input|
    let mut pset = ParamSet::<f64>::new();
    let spa = SpatialGradAttn::new("spa", 7, &mut pset, &mut rng);
    let mut tape = Tape::new();
    let pv = pset.bind(&mut tape);
    let fv = tape.leaf(f.clone(), false);
    let out_spa = spa.forward(&mut tape, &pv, fv);
    let out_spe = SpectralGradAttn.forward(&mut tape, fv);
    for (o, i) in tape.data(out_spa).iter().chain(tape.data(out_spe)).zip(f.data().iter().chain(f.data())) {
        if o.abs() > i.abs() {
            return check("attn::algebra", Err("gate amplified an element".into()));
        }
    }
    check("attn::algebra", Ok("ramp, duplication, damping all hold".into()))
}

fn attn_gradient() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut pset = ParamSet::<f64>::new();
    let _ = SpatialGradAttn::new("spa", 3, &mut pset, &mut rng);
    let x = random_tensor(vec![4, 4, 3], &mut rng);
    let mut inputs = vec![x];
    for (_, t) in pset.iter() {
        inputs.push(t.clone());
    }
    let run = |ins: &[Tensor<f64>]| -> (f64, Vec<Vec<f64>>) {
        let mut pset2 = ParamSet::new();
        let mut rng2 = ChaCha8Rng::seed_from_u64(106);
        let spa = SpatialGradAttn::new("spa", 3, &mut pset2, &mut rng2);
        for (i, (_, t)) in pset2.iter_mut().enumerate() {
            *t = ins[i + 1].clone();
        }
        let mut tape = Tape::new();
        let pv = pset2.bind(&mut tape);
        let xv = tape.leaf(ins[0].clone(), true);
        let a = spa.forward(&mut tape, &pv, xv);
        let b = SpectralGradAttn.forward(&mut tape, xv);
        let both = tape.add(a, b);
        let sq = tape.mul(both, both);
        let loss = tape.mean_all(sq);
        tape.backward(loss).unwrap();
        let mut grads = vec![tape.grad(xv).unwrap().to_vec()];
        grads.extend(pv.gradients(&tape));
        (tape.data(loss)[0], grads)
    };
    let (_, analytic) = run(&inputs);
    let f = |ins: &[Tensor<f64>]| run(ins).0;
    check(
        "attn::gradient_check",
        gradcheck_outcome(check_gradients(f, &inputs, &analytic, DEFAULT_STEP, DEFAULT_TOLERANCE)),
    )
}

fn tiny_config() -> GmsrConfig {
    GmsrConfig {
        out_channels: 8,
        feature_width: 4,
        num_blocks: 1,
        state_size: 2,
        seed: 11,
        ..GmsrConfig::default()
    }
}

fn model_residual_identity() -> CheckResult {
    let mut model = GmsrNet::<f64>::new(tiny_config());
    model.zero_fuse_convs();
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let rgb = Tensor::new(vec![5, 5, 3], (0..75).map(|_| rng.gen()).collect());
    let full = model.infer(&rgb, ScanImpl::Parallel);
    // with zeroed fuse convs the trunk is the identity on features
    let mut tape = Tape::<f64>::new();
    let pv = model.params.bind(&mut tape);
    let x = tape.leaf(rgb, false);
    let reduced = model.forward_stem_head_only(&mut tape, &pv, x);
    check(
        "model::residual_identity",
        if full.data() == tape.data(reduced) {
            Ok("zeroed fuse convs collapse to head(stem(x)) exactly".into())
        } else {
            Err("trunk is not the identity with zeroed fuse convs".into())
        },
    )
}

fn model_determinism() -> CheckResult {
    let a = GmsrNet::<f64>::new(tiny_config());
    let b = GmsrNet::<f64>::new(tiny_config());
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let rgb = Tensor::new(vec![6, 6, 3], (0..108).map(|_| rng.gen()).collect());
    check(
        "model::determinism",
        if a.infer(&rgb, ScanImpl::Parallel).data() == b.infer(&rgb, ScanImpl::Parallel).data() {
            Ok("same seed, bit-identical outputs".into())
        } else {
            Err("same-seed outputs differ".into())
        },
    )
}

fn model_param_count() -> CheckResult {
    let cfg = tiny_config();
    let expected = 931; // hand-derived symbolic count for C_f=4, n=1, N=2, lambda=2
    let pure = param_count(&cfg);
    let actual = GmsrNet::<f64>::new(cfg).param_count();
    check(
        "model::param_count",
        if pure == expected && actual == expected {
            Ok(format!("tiny config = {expected} learnable scalars"))
        } else {
            Err(format!("expected {expected}, pure fn {pure}, model {actual}"))
        },
    )
}

fn metric_oracles() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let z = Tensor::new(vec![4, 4, 3], (0..48).map(|_| rng.gen()).collect::<Vec<f64>>());
    let zr = Tensor::new(vec![4, 4, 3], (0..48).map(|_| rng.gen()).collect::<Vec<f64>>());
    let direct = (z
        .data()
        .iter()
        .zip(zr.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / 48.0)
        .sqrt();
    if (metrics::rmse(&z, &zr) - direct).abs() >= 1e-12 {
        return check("metrics::oracles", Err("rmse deviates from direct formula".into()));
    }
    let x: Vec<f64> = (0..64).map(|_| rng.gen()).collect();
    let y: Vec<f64> = (0..64).map(|_| rng.gen()).collect();
    let gap = (metrics::ssim_band(&x, &y, 8, 8, 1.0) - metrics::ssim_band_direct(&x, &y, 8, 8, 1.0))
        .abs();
    if gap >= 1e-10 {
        return check("metrics::oracles", Err(format!("ssim routes disagree by {gap:.3e}")));
    }
    let scaled = Tensor::new(
        vec![4, 4, 3],
        z.data().iter().map(|v| v * 2.5).collect::<Vec<_>>(),
    );
    let (d1, _) = metrics::sam(&z, &zr);
    let (d2, _) = metrics::sam(&scaled, &zr);
    if (d1 - d2).abs() >= 1e-10 {
        return check("metrics::oracles", Err("sam scale invariance violated".into()));
    }
    check("metrics::oracles", Ok("rmse, ssim dual-route, sam invariance hold".into()))
}

fn checkpoint_roundtrip() -> CheckResult {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return check("model::checkpoint_roundtrip", Err(e.to_string())),
    };
    let path = dir.path().join("v.gmsr");
    let model = GmsrNet::<f64>::new(tiny_config());
    if let Err(e) = model.save_checkpoint(&path) {
        return check("model::checkpoint_roundtrip", Err(e.to_string()));
    }
    match GmsrNet::<f64>::load_checkpoint(&path) {
        Ok(loaded) => {
            let same = loaded
                .params
                .iter()
                .zip(model.params.iter())
                .all(|((_, a), (_, b))| a.data() == b.data());
            check(
                "model::checkpoint_roundtrip",
                if same {
                    Ok("bit-exact parameter round trip".into())
                } else {
                    Err("parameters changed through the round trip".into())
                },
            )
        }
        Err(e) => check("model::checkpoint_roundtrip", Err(e.to_string())),
    }
}

fn cube_roundtrip() -> CheckResult {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return check("data::cube_roundtrip", Err(e.to_string())),
    };
    let path = dir.path().join("v.hsc");
    let sample = crate::data::synth_dataset(1, 8, 8, 6, 110).remove(0);
    if let Err(e) = crate::data::cube_write(&sample.cube, &path) {
        return check("data::cube_roundtrip", Err(e.to_string()));
    }
    match crate::data::cube_read(&path) {
        Ok(back) => {
            let ok = back
                .data
                .data()
                .iter()
                .zip(sample.cube.data.data())
                .all(|(a, b)| (a - b).abs() < 1e-7);
            check(
                "data::cube_roundtrip",
                if ok {
                    Ok("round trip exact to f32 quantization".into())
                } else {
                    Err("cube data changed beyond f32 quantization".into())
                },
            )
        }
        Err(e) => check("data::cube_roundtrip", Err(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_suite_passes() {
        let results = run_suite(&FaultInjection::default());
        for r in &results {
            assert!(r.passed, "{} failed: {}", r.name, r.detail);
        }
        assert!(all_passed(&results));
    }

    #[test]
    fn injected_fault_surfaces_by_name() {
        let results = run_suite(&FaultInjection { break_scan: true });
        assert!(!all_passed(&results));
        let broken: Vec<_> = results.iter().filter(|r| !r.passed).collect();
        assert_eq!(broken.len(), 1);
        assert_eq!(broken[0].name, "scan::parallel_equivalence");
    }
}
