use clap::{Args, Parser, Subcommand};
use expcli::{
    cmd_generate, cmd_ingest, cmd_measure, cmd_montecarlo, cmd_recover, exit_code, preset, Algo,
    IngestFormat, ModelParams,
};
use std::path::PathBuf;
use std::process::ExitCode;

/// Compressive sampling and recovery of pulse streams.
///
/// Seeds fully determine every output; trial t of a Monte Carlo run uses
/// the derived seed `seed ^ t`.
#[derive(Parser)]
#[command(name = "pulsecs", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Signal length (side length of the square grid when --dims 2)
    #[arg(long)]
    n: Option<usize>,
    /// Number of spikes
    #[arg(long)]
    s: Option<usize>,
    /// Pulse length (total patch size; a perfect square when --dims 2)
    #[arg(long)]
    f: Option<usize>,
    /// Minimum circular spike separation per axis
    #[arg(long)]
    delta: Option<usize>,
    /// Domain dimensionality
    #[arg(long, default_value_t = 1)]
    dims: usize,
    /// Named parameter set (fig1_caption, fig1_text, fig4_noisy, fig5_2d,
    /// neuronal_like, astro_like); explicit flags override its fields
    #[arg(long)]
    preset: Option<String>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<ModelParams, String> {
        let base = match &self.preset {
            Some(name) => Some(preset(name).ok_or_else(|| format!("unknown preset {name:?}"))?),
            None => None,
        };
        let pick = |v: Option<usize>, b: Option<usize>, flag: &str| {
            v.or(b).ok_or_else(|| format!("missing --{flag} (and no preset supplies it)"))
        };
        Ok(ModelParams {
            n: pick(self.n, base.map(|b| b.n), "n")?,
            s: pick(self.s, base.map(|b| b.s), "s")?,
            f: pick(self.f, base.map(|b| b.f), "f")?,
            delta: pick(self.delta, base.map(|b| b.delta), "delta")?,
            dims: if self.preset.is_some() && self.dims == 1 {
                base.map(|b| b.dims).unwrap_or(1)
            } else {
                self.dims
            },
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a ground-truth pulse stream instance
    Generate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure the generated signal with a seeded Gaussian matrix
    Measure {
        /// Number of measurements
        #[arg(long)]
        m: usize,
        /// Add noise at this exact measurement-domain SNR (dB)
        #[arg(long)]
        snr_db: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover the signal from the measurements in the output directory
    Recover {
        /// alg1 | alg2 | cosamp | block | oracle
        #[arg(long)]
        algo: Algo,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo sweep over M/K ratios
    Montecarlo {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated M/K ratios
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 1.5, 2.0, 3.0])]
        ratios: Vec<f64>,
        /// Comma-separated algorithms
        #[arg(long, value_delimiter = ',', default_values_t = vec![Algo::Alg2, Algo::Cosamp])]
        algos: Vec<Algo>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        snr_db: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ingest an external signal file, measure, and recover
    Ingest {
        /// Input file (dense: one float per line; sparse: index,value CSV)
        #[arg(long)]
        input: PathBuf,
        /// csv_dense | csv_sparse
        #[arg(long, default_value = "csv_dense")]
        format: IngestFormat,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        snr_db: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "alg2")]
        algo: Algo,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run() -> Result<(), (String, i32)> {
    let cli = Cli::try_parse().map_err(|e| {
        // clap already formats help/version as non-errors
        if e.use_stderr() {
            (e.to_string(), 1)
        } else {
            print!("{e}");
            (String::new(), 0)
        }
    })?;
    let fail = |e: pulsecs::Error| (e.to_string(), exit_code(&e));
    match cli.command {
        Command::Generate { model, seed, out } => {
            let params = model.resolve().map_err(|m| (m, 1))?;
            cmd_generate(&params, seed, &out).map_err(fail)
        }
        Command::Measure {
            m,
            snr_db,
            seed,
            out,
        } => cmd_measure(&out, m, snr_db, seed).map_err(fail),
        Command::Recover { algo, out } => {
            let record = cmd_recover(&out, algo).map_err(fail)?;
            println!(
                "algorithm={} normalized_mse={:e} residual={:e} iterations={}",
                record.algorithm, record.normalized_mse, record.residual_final, record.iterations
            );
            Ok(())
        }
        Command::Montecarlo {
            model,
            ratios,
            algos,
            trials,
            seed,
            snr_db,
            out,
        } => {
            let params = model.resolve().map_err(|m| (m, 1))?;
            cmd_montecarlo(&params, &ratios, &algos, trials, seed, snr_db, &out).map_err(fail)
        }
        Command::Ingest {
            input,
            format,
            model,
            m,
            snr_db,
            seed,
            algo,
            out,
        } => {
            let params = model.resolve().map_err(|msg| (msg, 1))?;
            let record =
                cmd_ingest(&input, format, &params, m, snr_db, seed, algo, &out).map_err(fail)?;
            println!(
                "algorithm={} normalized_mse={:e} residual={:e}",
                record.algorithm, record.normalized_mse, record.residual_final
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err((msg, code)) => {
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(code as u8)
        }
    }
}
