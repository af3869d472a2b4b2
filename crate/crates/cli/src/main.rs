//! `gmsr` — spectral reconstruction from RGB at desk scale.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error,
//! 3 verification failure. `GMSR_THREADS` bounds internal parallelism.

mod commands;
mod manifest;
mod pgm;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gmsr_core::model::BranchToggles;
use gmsr_core::scan::ScanImpl;

use commands::TrainArgs;

#[derive(Parser)]
#[command(name = "gmsr", version, about = "Gradient-guided spectral reconstruction from RGB")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScanChoice {
    Sequential,
    Parallel,
}

impl From<ScanChoice> for ScanImpl {
    fn from(c: ScanChoice) -> Self {
        match c {
            ScanChoice::Sequential => ScanImpl::Sequential,
            ScanChoice::Parallel => ScanImpl::Parallel,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired RGB/HSI dataset.
    Synth {
        #[arg(long, default_value_t = 4)]
        count: usize,
        /// Square side in pixels.
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 31)]
        bands: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset manifest.
    Train {
        /// Path to a `rgb<TAB>cube` dataset manifest.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 4)]
        batch: usize,
        /// Square training crop; omit to train on whole images.
        #[arg(long)]
        patch: Option<usize>,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 1.5)]
        power: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        feature_width: usize,
        #[arg(long, default_value_t = 3)]
        blocks: usize,
        #[arg(long, default_value_t = 16)]
        state_size: usize,
        #[arg(long, default_value_t = 7)]
        spa_kernel: usize,
        /// Disable the VSS branch.
        #[arg(long)]
        no_vss: bool,
        /// Disable spatial gradient attention.
        #[arg(long)]
        no_gspa: bool,
        /// Disable spectral gradient attention.
        #[arg(long)]
        no_gspe: bool,
        #[arg(long, value_enum, default_value_t = ScanChoice::Parallel)]
        scan: ScanChoice,
    },
    /// Evaluate a checkpoint: metrics CSV, heatmaps, spectral curves.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Report output directory.
        #[arg(long)]
        report: PathBuf,
        /// Seed for the four sampled spectral-curve pixels.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ScanChoice::Parallel)]
        scan: ScanChoice,
    },
    /// Reconstruct a hyperspectral cube from one RGB image.
    Reconstruct {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ScanChoice::Parallel)]
        scan: ScanChoice,
    },
    /// Run the named invariant suite; exit 0 iff everything passes.
    Verify {
        /// Test fixture: corrupt the parallel scan to prove failures surface.
        #[arg(long, hide = true)]
        break_scan: bool,
    },
    /// Time the scan kernel across sequence lengths.
    Bench {
        /// Comma-separated sequence lengths.
        #[arg(long, value_delimiter = ',', default_values_t = [4096usize, 8192, 16384])]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the branch-toggle matrix and block-count sweep at toy scale.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() {
    if let Ok(v) = std::env::var("GMSR_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), commands::CliError> {
    match cli.command {
        Command::Synth { count, size, bands, seed, out } => {
            commands::cmd_synth(count, size, bands, seed, &out)
        }
        Command::Train {
            data,
            out,
            steps,
            batch,
            patch,
            lr,
            power,
            seed,
            feature_width,
            blocks,
            state_size,
            spa_kernel,
            no_vss,
            no_gspa,
            no_gspe,
            scan,
        } => commands::cmd_train(&TrainArgs {
            data,
            out,
            steps,
            batch,
            patch,
            lr,
            power,
            seed,
            feature_width,
            blocks,
            state_size,
            spa_kernel,
            toggles: BranchToggles { vss: !no_vss, g_spa: !no_gspa, g_spe: !no_gspe },
            scan: scan.into(),
        }),
        Command::Eval { data, ckpt, report, seed, scan } => {
            commands::cmd_eval(&data, &ckpt, &report, seed, scan.into())
        }
        Command::Reconstruct { image, ckpt, out, scan } => {
            commands::cmd_reconstruct(&image, &ckpt, &out, scan.into())
        }
        Command::Verify { break_scan } => commands::cmd_verify(break_scan),
        Command::Bench { lengths, runs, out } => commands::cmd_bench(&lengths, runs, &out),
        Command::Ablate { data, steps, seed, out } => {
            commands::cmd_ablate(&data, steps, seed, &out)
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are successes; everything else is usage (1)
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
