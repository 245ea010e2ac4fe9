use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ghostgrid_cli::{config, error_class, exit_code, stages};
use ghostgrid_core::error::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ghostgrid",
    version,
    about = "Housing-vacancy and mobility analytics over anonymized positioning logs"
)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one config key, e.g. --set vacancy.upper_threshold=250.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Output directory root (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    outdir: Option<PathBuf>,

    /// Worker thread count (overrides the config).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Abort on the first malformed input row.
    #[arg(long, global = true)]
    strict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world (points, POIs, regions, ground truth).
    Gen {
        /// World spec in TOML.
        spec: PathBuf,
        /// Replace the spec's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Infer home and work anchors per user.
    Locus,
    /// Assess residential sites for vacancy and rank regions.
    Vacancy,
    /// Split vacant sites into tourism and non-tourism.
    Classify,
    /// Daily population series and hourly profiles per region.
    Series,
    /// Home/work region crosstab.
    Crosstab,
    /// Inter-region migration edges, flows, and top partners.
    Migrate,
    /// Dot-density map and vacant-cell outlines.
    Render,
    /// All analysis stages in order.
    Pipeline,
    /// Compare artifacts against a ground-truth file.
    Score,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = config::load_config(cli.config.as_deref(), &cli.sets)?;
    if let Some(outdir) = cli.outdir {
        cfg.outdir = outdir;
    }
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(Error::parameter("workers must be >= 1"));
        }
        cfg.workers = workers;
    }
    if cli.strict {
        cfg.strict = true;
    }
    match cli.command {
        Command::Gen { spec, seed } => stages::cmd_gen(&cfg, &spec, seed),
        Command::Locus => stages::cmd_locus(&cfg),
        Command::Vacancy => stages::cmd_vacancy(&cfg),
        Command::Classify => stages::cmd_classify(&cfg),
        Command::Series => stages::cmd_series(&cfg),
        Command::Crosstab => stages::cmd_crosstab(&cfg),
        Command::Migrate => stages::cmd_migrate(&cfg),
        Command::Render => stages::cmd_render(&cfg),
        Command::Pipeline => stages::cmd_pipeline(&cfg),
        Command::Score => stages::cmd_score(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let line = serde_json::json!({
                "error": error_class(&err),
                "message": err.to_string(),
            });
            eprintln!("{line}");
            ExitCode::from(exit_code(&err))
        }
    }
}
