//! Implementations of the seven subcommands.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use gmsr_core::data::{
    cube_read, cube_write, default_wavelengths, manifest_read, manifest_write, ppm_read,
    ppm_write, synth_dataset, DataError, HsiCube,
};
use gmsr_core::bench::{bench_csv, bench_scan};
use gmsr_core::metrics::{self, metrics_csv_header};
use gmsr_core::model::{param_count, BranchToggles, GmsrConfig, GmsrNet, ModelError};
use gmsr_core::scan::ScanImpl;
use gmsr_core::train::{loss_trace_csv, train, TrainConfig, TrainError};
use gmsr_core::verify::{all_passed, run_suite, FaultInjection};
use gmsr_core::Tensor;
use thiserror::Error;

use crate::manifest::ManifestBuilder;
use crate::pgm::pgm_write_scaled;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Data { path: PathBuf, source: DataError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("{failed} verification check(s) failed")]
    VerificationFailed { failed: usize },
}

impl CliError {
    /// 2 for data/format problems, 3 for verification failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::VerificationFailed { .. } => 3,
            _ => 2,
        }
    }
}

fn data_err(path: &Path) -> impl FnOnce(DataError) -> CliError + '_ {
    move |source| CliError::Data { path: path.to_path_buf(), source }
}

/// Paired samples loaded from a `rgb<TAB>cube` manifest.
pub struct Dataset {
    pub pairs: Vec<(Tensor<f64>, Tensor<f64>)>,
    pub names: Vec<String>,
    pub wavelengths_nm: Vec<f64>,
}

pub fn load_dataset(manifest: &Path) -> Result<Dataset, CliError> {
    let entries = manifest_read(manifest).map_err(data_err(manifest))?;
    if entries.is_empty() {
        return Err(CliError::Invalid(format!("{}: empty dataset manifest", manifest.display())));
    }
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let mut pairs = Vec::new();
    let mut names = Vec::new();
    let mut wavelengths = Vec::new();
    for (rgb_path, cube_path) in &entries {
        let rgb_path = resolve(rgb_path);
        let cube_path = resolve(cube_path);
        let rgb = ppm_read(&rgb_path).map_err(data_err(&rgb_path))?;
        let cube = cube_read(&cube_path).map_err(data_err(&cube_path))?;
        if wavelengths.is_empty() {
            wavelengths = cube.wavelengths_nm.clone();
        }
        names.push(
            rgb_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        );
        pairs.push((rgb, cube.data));
    }
    Ok(Dataset { pairs, names, wavelengths_nm: wavelengths })
}

// ---- synth -------------------------------------------------------------

pub fn cmd_synth(
    count: usize,
    size: usize,
    bands: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    let samples = synth_dataset(count, size, size, bands, seed);
    let mut manifest = ManifestBuilder::new(
        "synth",
        seed,
        serde_json::json!({ "count": count, "size": size, "bands": bands }),
    );
    let mut pairs = Vec::new();
    for (i, sample) in samples.iter().enumerate() {
        let rgb_path = out.join(format!("sample_{i:03}.ppm"));
        let cube_path = out.join(format!("sample_{i:03}.hsc"));
        ppm_write(&sample.rgb, &rgb_path).map_err(data_err(&rgb_path))?;
        cube_write(&sample.cube, &cube_path).map_err(data_err(&cube_path))?;
        manifest.add_output(&rgb_path);
        manifest.add_output(&cube_path);
        pairs.push((
            PathBuf::from(rgb_path.file_name().unwrap()),
            PathBuf::from(cube_path.file_name().unwrap()),
        ));
    }
    let dataset_manifest = out.join("dataset.tsv");
    manifest_write(&pairs, &dataset_manifest).map_err(data_err(&dataset_manifest))?;
    manifest.add_output(&dataset_manifest);
    manifest.write(out)?;
    println!("wrote {count} paired samples to {}", out.display());
    Ok(())
}

// ---- train -------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    pub steps: usize,
    pub batch: usize,
    pub patch: Option<usize>,
    pub lr: f64,
    pub power: f64,
    pub seed: u64,
    pub feature_width: usize,
    pub blocks: usize,
    pub state_size: usize,
    pub spa_kernel: usize,
    pub toggles: BranchToggles,
    pub scan: ScanImpl,
}

fn model_config(args: &TrainArgs, out_channels: usize) -> GmsrConfig {
    GmsrConfig {
        in_channels: 3,
        out_channels,
        feature_width: args.feature_width,
        num_blocks: args.blocks,
        state_size: args.state_size,
        lambda_num: 2,
        lambda_den: 1,
        spa_kernel: args.spa_kernel,
        toggles: args.toggles,
        seed: args.seed,
    }
}

fn config_json(cfg: &GmsrConfig, args: &TrainArgs) -> serde_json::Value {
    serde_json::json!({
        "out_channels": cfg.out_channels,
        "feature_width": cfg.feature_width,
        "num_blocks": cfg.num_blocks,
        "state_size": cfg.state_size,
        "spa_kernel": cfg.spa_kernel,
        "toggles": { "vss": cfg.toggles.vss, "g_spa": cfg.toggles.g_spa, "g_spe": cfg.toggles.g_spe },
        "steps": args.steps,
        "batch": args.batch,
        "patch": args.patch,
        "lr": args.lr,
        "power": args.power,
        "param_count": param_count(cfg),
    })
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    fs::create_dir_all(&args.out)?;
    let dataset = load_dataset(&args.data)?;
    let out_channels = dataset.pairs[0].1.shape()[2];
    let cfg = model_config(args, out_channels);
    let mut model = GmsrNet::<f64>::new(cfg);
    let train_cfg = TrainConfig {
        steps: args.steps,
        batch_size: args.batch,
        patch_size: args.patch,
        lr0: args.lr,
        power: args.power,
        seed: args.seed,
        scan_impl: args.scan,
    };
    let trace = train(&mut model, &dataset.pairs, &train_cfg)?;

    let mut manifest = ManifestBuilder::new("train", args.seed, config_json(&cfg, args));
    let ckpt = args.out.join("checkpoint.gmsr");
    model.save_checkpoint(&ckpt)?;
    manifest.add_output(&ckpt);
    let loss_csv = args.out.join("loss.csv");
    fs::write(&loss_csv, loss_trace_csv(&trace))?;
    manifest.add_output(&loss_csv);
    manifest.write(&args.out)?;
    if let Some(last) = trace.last() {
        println!("trained {} steps, final loss {:.6}", trace.len(), last.loss);
    } else {
        println!("zero-step run: checkpoint equals initialization");
    }
    println!("checkpoint: {}", ckpt.display());
    Ok(())
}

// ---- eval --------------------------------------------------------------

pub fn cmd_eval(
    data: &Path,
    ckpt: &Path,
    report: &Path,
    seed: u64,
    scan: ScanImpl,
) -> Result<(), CliError> {
    fs::create_dir_all(report)?;
    let dataset = load_dataset(data)?;
    let model = GmsrNet::<f64>::load_checkpoint(ckpt)?;
    let expected = model.cfg.out_channels;
    let found = dataset.pairs[0].1.shape()[2];
    if expected != found {
        return Err(CliError::Model(ModelError::ParamCountMismatch {
            expected: param_count(&model.cfg),
            found: param_count(&GmsrConfig { out_channels: found, ..model.cfg }),
        }));
    }

    let mut manifest = ManifestBuilder::new(
        "eval",
        seed,
        serde_json::json!({ "data": data.display().to_string(), "ckpt": ckpt.display().to_string() }),
    );
    let mut csv = String::from(metrics_csv_header());
    csv.push('\n');
    let mut first_report = None;
    for ((rgb, cube), name) in dataset.pairs.iter().zip(&dataset.names) {
        let pred = model.infer(rgb, scan);
        let r = metrics::evaluate(&pred, cube);
        csv.push_str(&r.csv_row(name));
        csv.push('\n');
        if first_report.is_none() {
            first_report = Some((r, pred, rgb.clone(), cube.clone()));
        }
    }
    let metrics_path = report.join("metrics.csv");
    fs::write(&metrics_path, csv)?;
    manifest.add_output(&metrics_path);

    // per-band error heatmaps + spectral curves, from the first pair
    let (r, pred, _rgb, cube) = first_report.expect("dataset is non-empty");
    let mut scales = Vec::new();
    for (b, plane) in r.per_band_abs_error.iter().enumerate() {
        let path = report.join(format!("error_band_{b:02}.pgm"));
        let scale = pgm_write_scaled(plane, r.height, r.width, &path)?;
        manifest.add_output(&path);
        scales.push(scale);
    }

    let mut rng = gmsr_core_rng(seed);
    let (h, w, c) = (cube.shape()[0], cube.shape()[1], cube.shape()[2]);
    let wavelengths = if dataset.wavelengths_nm.len() == c {
        dataset.wavelengths_nm.clone()
    } else {
        default_wavelengths(c)
    };
    let mut curve_pixels = Vec::new();
    for i in 0..4 {
        let y = (rng.next() as usize) % h;
        let x = (rng.next() as usize) % w;
        curve_pixels.push(serde_json::json!({ "y": y, "x": x }));
        let mut curve = String::from("band,wavelength_nm,predicted,reference\n");
        for b in 0..c {
            curve.push_str(&format!(
                "{},{},{},{}\n",
                b,
                wavelengths[b],
                pred.at(&[y, x, b]),
                cube.at(&[y, x, b])
            ));
        }
        let path = report.join(format!("curve_{i}.csv"));
        fs::write(&path, curve)?;
        manifest.add_output(&path);
    }
    manifest.set_extra(serde_json::json!({
        "heatmap_scales": scales,
        "curve_pixels": curve_pixels,
    }));
    manifest.write(report)?;
    println!("evaluated {} pairs; report in {}", dataset.pairs.len(), report.display());
    Ok(())
}

/// Tiny deterministic generator for pixel picks (keeps rand out of the CLI).
struct SplitMix(u64);

fn gmsr_core_rng(seed: u64) -> SplitMix {
    SplitMix(seed.wrapping_add(0x9e3779b97f4a7c15))
}

impl SplitMix {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
}

// ---- reconstruct -------------------------------------------------------

pub fn cmd_reconstruct(
    image: &Path,
    ckpt: &Path,
    out: &Path,
    scan: ScanImpl,
) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    let rgb = ppm_read(image).map_err(data_err(image))?;
    let model = GmsrNet::<f64>::load_checkpoint(ckpt)?;
    let pred = model.infer(&rgb, scan);
    // the network is unconstrained at the output; clamp into cube range
    let clamped = Tensor::new(
        pred.shape().to_vec(),
        pred.data().iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    );
    let cube = HsiCube::new(default_wavelengths(model.cfg.out_channels), clamped)
        .map_err(data_err(out))?;
    let cube_path = out.join("reconstruction.hsc");
    cube_write(&cube, &cube_path).map_err(data_err(&cube_path))?;
    let mut manifest = ManifestBuilder::new(
        "reconstruct",
        model.cfg.seed,
        serde_json::json!({
            "image": image.display().to_string(),
            "ckpt": ckpt.display().to_string(),
        }),
    );
    manifest.add_output(&cube_path);
    manifest.write(out)?;
    println!("reconstruction: {}", cube_path.display());
    Ok(())
}

// ---- verify ------------------------------------------------------------

pub fn cmd_verify(break_scan: bool) -> Result<(), CliError> {
    let results = run_suite(&FaultInjection { break_scan });
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status} {} — {}", r.name, r.detail);
    }
    if all_passed(&results) {
        println!("all {} checks passed", results.len());
        Ok(())
    } else {
        let failed = results.iter().filter(|r| !r.passed).count();
        Err(CliError::VerificationFailed { failed })
    }
}

// ---- bench -------------------------------------------------------------

pub fn cmd_bench(lengths: &[usize], runs: usize, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    let rows = bench_scan(lengths, 4, 4, runs, 0);
    let csv = bench_csv(&rows);
    print!("{csv}");
    let path = out.join("bench.csv");
    fs::write(&path, &csv)?;
    let mut manifest = ManifestBuilder::new(
        "bench",
        0,
        serde_json::json!({ "lengths": lengths, "runs": runs }),
    );
    manifest.add_output(&path);
    manifest.write(out)?;
    Ok(())
}

// ---- ablate ------------------------------------------------------------

pub fn cmd_ablate(data: &Path, steps: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    let dataset = load_dataset(data)?;
    let out_channels = dataset.pairs[0].1.shape()[2];

    let toggle_matrix: [(&str, BranchToggles); 5] = [
        ("full", BranchToggles { vss: true, g_spa: true, g_spe: true }),
        ("vss_only", BranchToggles { vss: true, g_spa: false, g_spe: false }),
        ("no_g_spa", BranchToggles { vss: true, g_spa: false, g_spe: true }),
        ("no_g_spe", BranchToggles { vss: true, g_spa: true, g_spe: false }),
        ("g_spa_g_spe_only", BranchToggles { vss: false, g_spa: true, g_spe: true }),
    ];
    // toy scale: small trunk, sequential scan keeps cells cheap
    let base = GmsrConfig {
        out_channels,
        feature_width: 8,
        num_blocks: 2,
        state_size: 4,
        ..GmsrConfig::default()
    };

    let mut csv = String::from("name,vss,g_spa,g_spe,n,param_count,rmse,psnr,assim,sam\n");
    let mut cell = |name: &str, cfg: GmsrConfig, cell_seed: u64| -> Result<(), CliError> {
        let mut model = GmsrNet::<f64>::new(GmsrConfig { seed: cell_seed, ..cfg });
        let train_cfg = TrainConfig {
            steps,
            batch_size: 2,
            patch_size: None,
            seed: cell_seed,
            ..TrainConfig::default()
        };
        train(&mut model, &dataset.pairs, &train_cfg)?;
        // aggregate metrics over the dataset mean
        let mut agg = [0.0f64; 4];
        for (rgb, cube) in &dataset.pairs {
            let pred = model.infer(rgb, ScanImpl::Parallel);
            let r = metrics::evaluate(&pred, cube);
            agg[0] += r.rmse;
            agg[1] += r.psnr;
            agg[2] += r.assim;
            agg[3] += r.sam_degrees;
        }
        let n = dataset.pairs.len() as f64;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            name,
            cfg.toggles.vss,
            cfg.toggles.g_spa,
            cfg.toggles.g_spe,
            cfg.num_blocks,
            param_count(&cfg),
            agg[0] / n,
            agg[1] / n,
            agg[2] / n,
            agg[3] / n
        ));
        Ok(())
    };

    for (i, (name, toggles)) in toggle_matrix.iter().enumerate() {
        cell(name, GmsrConfig { toggles: *toggles, ..base }, seed.wrapping_add(i as u64))?;
    }
    for n in 1..=5usize {
        cell(
            &format!("n_{n}"),
            GmsrConfig { num_blocks: n, ..base },
            seed.wrapping_add(100 + n as u64),
        )?;
    }

    let path = out.join("ablation.csv");
    fs::write(&path, &csv)?;
    let mut manifest = ManifestBuilder::new(
        "ablate",
        seed,
        serde_json::json!({ "data": data.display().to_string(), "steps": steps }),
    );
    manifest.add_output(&path);
    manifest.write(out)?;
    println!("ablation table: {}", path.display());
    Ok(())
}
