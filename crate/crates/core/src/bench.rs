//! Wall-time measurement for the selective-scan kernel.
//!
//! Backs the `bench` subcommand and the linear-complexity check: the median
//! scan time over repeated runs should roughly double when L doubles.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scan::{scan_parallel, scan_sequential, ScanImpl, ScanParams};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub length: usize,
    pub impl_name: &'static str,
    pub median_ns: u128,
    /// median_ns relative to the previous (half-length) row, when present.
    pub ratio: Option<f64>,
}

/// Median wall time of one scan over `runs` repetitions.
pub fn median_scan_ns(
    length: usize,
    channels: usize,
    state_size: usize,
    which: ScanImpl,
    runs: usize,
    seed: u64,
) -> u128 {
    assert!(runs >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ScanParams::<f64>::init(channels, state_size, &mut rng);
    let x = Tensor::new(
        vec![length, channels],
        (0..length * channels).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect(),
    );
    let mut samples: Vec<u128> = (0..runs)
        .map(|_| {
            let t0 = Instant::now();
            let y = match which {
                ScanImpl::Sequential => scan_sequential(&x, &params),
                ScanImpl::Parallel => scan_parallel(&x, &params),
            };
            let dt = t0.elapsed().as_nanos();
            std::hint::black_box(y);
            dt
        })
        .collect();
    samples.sort_unstable();
    samples[samples.len() / 2]
}

/// One row per (length, implementation); ratios computed per implementation
/// across successive lengths.
pub fn bench_scan(
    lengths: &[usize],
    channels: usize,
    state_size: usize,
    runs: usize,
    seed: u64,
) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for (which, impl_name) in [(ScanImpl::Sequential, "sequential"), (ScanImpl::Parallel, "parallel")]
    {
        let mut prev: Option<u128> = None;
        for &l in lengths {
            let median_ns = median_scan_ns(l, channels, state_size, which, runs, seed);
            let ratio = prev.map(|p| median_ns as f64 / p as f64);
            rows.push(BenchRow { length: l, impl_name, median_ns, ratio });
            prev = Some(median_ns);
        }
    }
    rows
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("L,impl,median_ns,ratio\n");
    for r in rows {
        let ratio = r.ratio.map(|v| format!("{v:.4}")).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.length, r.impl_name, r.median_ns, ratio));
    }
    out
}
