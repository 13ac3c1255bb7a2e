//! `bitshield`: model generation, encoding, fault-injection campaigns, bit
//! scans, chunk-size exploration, codec verification and plotting.

mod commands;
mod error;
mod results;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use bitshield::campaign::{CHUNK_EXPLORE_BER, DEFAULT_BERS, DEFAULT_REPETITIONS};
use bitshield::schemes::DEFAULT_CHUNK_SIZE;
use clap::{Args, Parser, Subcommand, ValueEnum};

use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "bitshield",
    version,
    about = "Memory-fault protection experiments for neural-network parameters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dtype {
    Fp16,
    Fp32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Unprotected,
    Mset,
    Both,
}

#[derive(Debug, Args)]
pub struct SchemeArgs {
    /// Protection scheme: none, secded, mset, cep, mset+secded, cep+secded.
    #[arg(long, default_value = "none")]
    pub scheme: String,
    /// Memory line width in bits (64 or 128).
    #[arg(long = "line", default_value_t = 64)]
    pub line_width: u32,
    /// CEP data bits per parity group.
    #[arg(long = "chunk", default_value_t = DEFAULT_CHUNK_SIZE)]
    pub chunk_size: u32,
    #[arg(long, value_enum, default_value = "fp16")]
    pub dtype: Dtype,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model container (.bsm) written by `gen-model`.
    #[arg(long)]
    pub model: PathBuf,
    /// Seed of the synthetic evaluation set; defaults to the one recorded in the model.
    #[arg(long)]
    pub dataset_seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the pinned classifier and write it as a model container.
    GenModel {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Hidden layer widths, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "768,768")]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
    },
    /// Pack a model's parameters into a protected memory image (.bsi).
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep bit error rates and write one CSV row per (scheme, BER).
    Campaign {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated schemes; each gets its own sweep.
        #[arg(long, alias = "image-scheme", default_value = "none")]
        scheme: String,
        #[arg(long = "line", default_value_t = 64)]
        line_width: u32,
        #[arg(long = "chunk", default_value_t = DEFAULT_CHUNK_SIZE)]
        chunk_size: u32,
        #[arg(long, value_enum, default_value = "fp16")]
        dtype: Dtype,
        /// Use this encoded image instead of encoding the model afresh.
        #[arg(long, conflicts_with = "scheme")]
        image: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BERS.to_vec())]
        bers: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100)]
        min_iterations: usize,
        #[arg(long, default_value_t = 1500)]
        max_iterations: usize,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Flip one chosen bit of one random word per repetition.
    Bitscan {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "fp16")]
        dtype: Dtype,
        #[arg(long, required_unless_present = "all_bits", conflicts_with = "all_bits")]
        bit: Option<u32>,
        #[arg(long)]
        all_bits: bool,
        #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
        reps: usize,
        #[arg(long, value_enum, default_value = "both")]
        mode: Mode,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare every feasible CEP chunk size at one BER.
    ChunkExplore {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "fp16")]
        dtype: Dtype,
        #[arg(long, default_value_t = CHUNK_EXPLORE_BER)]
        ber: f64,
        #[arg(long = "line", default_value_t = 64)]
        line_width: u32,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the exhaustive codec oracles for one scheme.
    Verify {
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Random lines to enumerate.
        #[arg(long, default_value_t = 16)]
        lines: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Plot a campaign CSV as accuracy versus BER.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        svg: PathBuf,
        #[arg(long, default_value = "Accuracy under memory bit errors")]
        title: String,
    },
}

/// Caps rayon's pool from `BITSHIELD_THREADS` (0 or unset: one per core).
fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("BITSHIELD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("BITSHIELD_THREADS must be a non-negative integer, got `{raw}`")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::GenModel {
            seed,
            out,
            hidden,
            epochs,
        } => commands::gen_model(seed, &out, hidden, epochs),
        Command::Encode { model, scheme, out } => commands::encode(&model, &scheme, &out),
        Command::Campaign {
            model,
            scheme,
            line_width,
            chunk_size,
            dtype,
            image,
            bers,
            seed,
            min_iterations,
            max_iterations,
            out,
        } => commands::campaign(commands::CampaignArgs {
            model,
            schemes: scheme,
            line_width,
            chunk_size,
            dtype,
            image,
            bers,
            seed,
            min_iterations,
            max_iterations,
            out,
        }),
        Command::Bitscan {
            model,
            dtype,
            bit,
            all_bits,
            reps,
            mode,
            seed,
            out,
        } => commands::bitscan(&model, dtype, bit, all_bits, reps, mode, seed, out.as_deref()),
        Command::ChunkExplore {
            model,
            dtype,
            ber,
            line_width,
            seed,
            out,
        } => commands::chunk_explore(&model, dtype, ber, line_width, seed, out.as_deref()),
        Command::Verify { scheme, lines, seed } => commands::verify(&scheme, lines, seed),
        Command::Report { input, svg, title } => commands::report(&input, &svg, &title),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::usage(first));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
