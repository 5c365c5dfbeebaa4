use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gowerfed::data::FeatureSchema;
use gowerfed::experiment::{self, DataSource, MatrixMode, TrainMode};
use gowerfed::gower::{GowerEngine, DEFAULT_MEMORY_CAP};
use gowerfed::{synth, Error};

#[derive(Parser)]
#[command(name = "gowerfed", version, about = "Gower-matrix intrusion detection, centralized and federated")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixArg {
    Cnl,
    Fl,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainArg {
    Gc,
    Gf,
    GfAm,
}

#[derive(Subcommand)]
enum Command {
    /// Precompute Gower matrices from a CSV (or the synthetic generator).
    CreateMatrices {
        #[arg(long, value_enum)]
        mode: MatrixArg,
        #[arg(long, required_unless_present = "synthetic")]
        data: Option<PathBuf>,
        #[arg(long, required_unless_present = "synthetic")]
        schema: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Refuse to allocate more than this many bytes of matrices.
        #[arg(long, default_value_t = DEFAULT_MEMORY_CAP)]
        memory_cap: u64,
        /// Generate N planted-rule rows instead of reading --data.
        #[arg(long, value_name = "N", conflicts_with_all = ["data", "schema"])]
        synthetic: Option<usize>,
        /// Seed for --synthetic rows.
        #[arg(long, default_value_t = 0, requires = "synthetic")]
        synthetic_seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Train and evaluate on precomputed matrices.
    Train {
        #[arg(long, value_enum)]
        mode: TrainArg,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        matrices: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Write plot-ready CSVs into a finished run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Write a planted-rule CSV and its schema next to it.
    SynthData {
        #[arg(long)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Error>
where
    T: Send,
{
    match threads {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}"))),
    }
}

fn run(cli: Cli) -> Result<serde_json::Value, Error> {
    match cli.command {
        Command::CreateMatrices {
            mode,
            data,
            schema,
            config,
            out,
            memory_cap,
            synthetic,
            synthetic_seed,
            threads,
        } => {
            let cfg = experiment::parse_config(&config)?;
            let source = match (synthetic, data, schema) {
                (Some(rows), _, _) => DataSource::Synthetic {
                    rows,
                    seed: synthetic_seed,
                },
                (None, Some(data), Some(schema)) => DataSource::Csv { data, schema },
                _ => return Err(Error::InvalidArgument("--data and --schema are required".into())),
            };
            let mode = match mode {
                MatrixArg::Cnl => MatrixMode::Cnl,
                MatrixArg::Fl => MatrixMode::Fl,
            };
            let engine = GowerEngine::with_memory_cap(memory_cap);
            let manifest = with_threads(threads, || {
                experiment::create_matrices(mode, &source, &cfg, &out, &engine)
            })??;
            Ok(serde_json::json!({ "out": out, "width": manifest.width, "files": manifest.matrices.len() }))
        }
        Command::Train {
            mode,
            config,
            matrices,
            out,
            threads,
        } => {
            let cfg = experiment::parse_config(&config)?;
            let mode = match mode {
                TrainArg::Gc => TrainMode::Gc,
                TrainArg::Gf => TrainMode::Gf,
                TrainArg::GfAm => TrainMode::GfAm,
            };
            with_threads(threads, || experiment::run_experiment(mode, &cfg, &matrices, &out))??;
            let summary = std::fs::read_to_string(out.join("summary.json"))
                .map_err(|e| Error::io(out.join("summary.json"), e))?;
            let summary: serde_json::Value =
                serde_json::from_str(&summary).map_err(|e| Error::Format(e.to_string()))?;
            Ok(serde_json::json!({ "out": out, "headline": summary["headline"] }))
        }
        Command::Report { run } => {
            let files = experiment::emit_plot_data(&run)?;
            Ok(serde_json::json!({ "files": files }))
        }
        Command::SynthData { rows, seed, out } => {
            std::fs::write(&out, synth::synth_csv(rows, seed)).map_err(|e| Error::io(&out, e))?;
            let schema_path = out.with_extension("schema.json");
            let schema: FeatureSchema = synth::schema();
            let text = serde_json::to_string_pretty(&schema.to_file()).map_err(|e| Error::Format(e.to_string()))?;
            std::fs::write(&schema_path, text + "\n").map_err(|e| Error::io(&schema_path, e))?;
            Ok(serde_json::json!({ "data": out, "schema": schema_path, "rows": rows }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}
