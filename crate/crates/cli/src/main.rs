use clap::{Parser, Subcommand};
use hvt_cli::commands;
use std::path::PathBuf;
use std::process::ExitCode;

/// Hybrid visual token pipeline: synthetic data, staged training, hybrid
/// encoding, budget reports, and invariant verification.
#[derive(Parser)]
#[command(name = "hvt", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a deterministic toy dataset of rectangle images and masks.
    GenData {
        /// Captioned samples to generate.
        #[arg(long)]
        count: usize,
        /// Instruction samples; defaults to half of --count.
        #[arg(long)]
        instr_count: Option<usize>,
        /// Images per instruction sample are drawn from 1..=this.
        #[arg(long, default_value_t = 3)]
        max_images: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the discrete codebook and write the initial (stage 0) checkpoint.
    TrainCodebook {
        /// Dataset directory from gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Codebook size N_v.
        #[arg(long, default_value_t = 64)]
        nv: usize,
        /// Lloyd iterations.
        #[arg(long, default_value_t = 25)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one training stage from a prior checkpoint.
    Train {
        #[arg(long)]
        stage: u8,
        /// key=value file with stage, steps, lr, batch, data, seed.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        in_ckpt: PathBuf,
        #[arg(long)]
        out_ckpt: PathBuf,
    },
    /// Encode images into hybrid sequences under a trained checkpoint.
    Encode {
        /// Directory of MVT1 [H,W,3] image tensors.
        #[arg(long)]
        images: PathBuf,
        /// Keeping ratio in (0, 1].
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Must match the checkpoint's patch size when given.
        #[arg(long)]
        patch_size: Option<usize>,
        /// Also export last-layer attention and position tags per image.
        #[arg(long, default_value_t = false)]
        export_attention: bool,
    },
    /// Print token-budget lines for a comma-separated list of alphas.
    Report {
        #[arg(long, default_value = "0.1,0.25,0.5,0.75,1.0")]
        alphas: String,
        /// Continuous patch count n_c.
        #[arg(long, default_value_t = 576)]
        nc: usize,
        /// Discrete slot count n_d.
        #[arg(long, default_value_t = 32)]
        nd: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run invariant suites: grad, freeze, oracle, budget, or all.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> hvt_cli::Result<()> {
    match cli.cmd {
        Cmd::GenData { count, instr_count, max_images, seed, out } => {
            let instr = instr_count.unwrap_or(count / 2);
            commands::cmd_gen_data(count, instr, max_images, seed, &out)
        }
        Cmd::TrainCodebook { data, nv, iters, seed, out } => {
            commands::cmd_train_codebook(&data, nv, iters, seed, &out)
        }
        Cmd::Train { stage, config, in_ckpt, out_ckpt } => {
            commands::cmd_train(stage, &config, &in_ckpt, &out_ckpt)
        }
        Cmd::Encode { images, alpha, ckpt, out, patch_size, export_attention } => {
            commands::cmd_encode(&images, alpha, &ckpt, &out, patch_size, export_attention)
        }
        Cmd::Report { alphas, nc, nd, out } => {
            let lines = commands::cmd_report(&alphas, nc, nd, out.as_deref())?;
            print!("{lines}");
            Ok(())
        }
        Cmd::Verify { suite, seed, out } => {
            let summary = commands::cmd_verify(&suite, seed, out.as_deref())?;
            println!("{summary}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
