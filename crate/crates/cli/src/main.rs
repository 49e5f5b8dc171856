//! `scami`: build, evaluate and test shape-color affine moment invariants.
//!
//! Machine-readable results go to stdout (or `--out`), diagnostics to
//! stderr. Exit status: 0 success, 1 negative analysis outcome (oracle
//! mismatch), 2 usage or input error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "scami", version, about = "Shape-color affine moment invariants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct ImageOpts {
    /// Restrict each image's domain to pixels that are not pure black.
    #[arg(long)]
    pub mask_black: bool,
    /// Bounds on shape order and color order of the moment table.
    #[arg(long, num_args = 2, value_names = ["P", "C"], default_values_t = [4u8, 2])]
    pub orders: Vec<u8>,
}

#[derive(Subcommand)]
enum Command {
    /// Expand a core, e.g. "shape: (1,2)^2; color: V(1,2,3)^2", into a moment polynomial.
    Expand {
        core: String,
        /// Compare against a direct tuple sum on a random SIZE×SIZE raster.
        #[arg(long, value_name = "SIZE")]
        check_oracle: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the 24-invariant descriptor of an image.
    Describe {
        image: PathBuf,
        #[command(flatten)]
        image_opts: ImageOpts,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean relative error of the descriptor under sampled deformations.
    Invariance {
        /// Source image; a synthetic 256×256 image when omitted.
        image: Option<PathBuf>,
        #[arg(long, default_value = "composite")]
        kind: String,
        /// JSON list of explicit transforms, used instead of sampling `--kind`.
        #[arg(long, value_name = "PATH")]
        transforms: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        per_source: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Transform the moment table exactly instead of the pixels.
        #[arg(long)]
        moment_domain: bool,
        #[command(flatten)]
        image_opts: ImageOpts,
        /// CSV report path (one row per invariant).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Zero, linear and functional dependence analysis.
    Independence {
        /// Analyse the 24-entry catalog instead of the 100 candidates.
        #[arg(long)]
        catalog: bool,
        #[arg(long, default_value_t = 5)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nearest-neighbour classification on a labeled dataset.
    Classify {
        /// Dataset JSON from gen-dataset; a synthetic dataset when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        gen: GenOpts,
        #[arg(long, default_value_t = 0.1)]
        train_frac: f64,
        /// Number of runs; run `r` uses seed `seed + r` for generation and split.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Apply signed log compression after standardization.
        #[arg(long)]
        signed_log: bool,
        /// CSV report path (one row per class).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Precision-recall curve for one query against a labeled dataset.
    Retrieve {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        gen: GenOpts,
        /// Index of the query item; it is removed from the database.
        #[arg(long, default_value_t = 0)]
        query: usize,
        #[arg(long)]
        signed_log: bool,
        /// CSV path for (recall, precision).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a labeled dataset of deformed images.
    GenDataset {
        /// Source images; synthetic sources when omitted.
        images: Vec<PathBuf>,
        #[command(flatten)]
        gen: GenOpts,
        #[arg(long)]
        mask_black: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
pub struct GenOpts {
    #[arg(long, default_value = "composite")]
    pub kind: String,
    #[arg(long, default_value_t = 20)]
    pub per_source: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub moment_domain: bool,
    /// Number of synthetic sources.
    #[arg(long, default_value_t = 10)]
    pub sources: usize,
    /// Side length of synthetic sources.
    #[arg(long, default_value_t = 96)]
    pub size: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    ExitCode::from(exit_code(run(Cli::parse())))
}

fn exit_code(outcome: anyhow::Result<commands::Status>) -> u8 {
    match outcome {
        Ok(commands::Status::Pass) => 0,
        Ok(commands::Status::Negative) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<commands::Status> {
    match cli.command {
        Command::Expand {
            core,
            check_oracle,
            seed,
            out,
        } => commands::expand(&core, check_oracle, seed, out.as_deref()),
        Command::Describe { image, image_opts, out } => commands::describe(&image, &image_opts, out.as_deref()),
        Command::Invariance {
            image,
            kind,
            transforms,
            per_source,
            seed,
            moment_domain,
            image_opts,
            out,
        } => commands::invariance(
            image.as_deref(),
            &kind,
            transforms.as_deref(),
            per_source,
            seed,
            moment_domain,
            &image_opts,
            out.as_deref(),
        ),
        Command::Independence {
            catalog,
            samples,
            seed,
            out,
        } => commands::independence(catalog, samples, seed, out.as_deref()),
        Command::Classify {
            dataset,
            gen,
            train_frac,
            repeats,
            signed_log,
            out,
        } => commands::classify(
            dataset.as_deref(),
            &gen,
            train_frac,
            repeats,
            signed_log,
            out.as_deref(),
        ),
        Command::Retrieve {
            dataset,
            gen,
            query,
            signed_log,
            out,
        } => commands::retrieve(dataset.as_deref(), &gen, query, signed_log, out.as_deref()),
        Command::GenDataset {
            images,
            gen,
            mask_black,
            out,
        } => commands::gen_dataset(&images, &gen, mask_black, out.as_deref()),
    }
}
