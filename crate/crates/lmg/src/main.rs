use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use lmg::output::{metadata, render, write_artifact};
use lmg::{parse_with_overrides, run, CliError, Subcommand};

/// Dissipative LMG model with delayed feedback.
///
/// Settings come from the TOML file, then `--set` overrides, then
/// `--seed`. The output directory is `--output-dir`, else `LMG_OUTPUT_DIR`,
/// else `output.dir`. Thread count is `--threads`, else `LMG_THREADS`,
/// else one per core.
#[derive(Debug, Parser)]
#[command(name = "lmg", version)]
struct Cli {
    #[arg(value_enum)]
    subcommand: Subcommand,

    /// TOML run configuration; all keys are optional.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Override one key, e.g. `--set model.kappa_h=0`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,

    /// Seed for the root-search seed jitter.
    #[arg(long)]
    seed: Option<u64>,

    #[arg(short, long, env = "LMG_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,

    #[arg(long, env = "LMG_THREADS")]
    threads: Option<usize>,

    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn execute(cli: Cli) -> Result<serde_json::Value, CliError> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?,
        None => String::new(),
    };
    let mut sets = cli.sets.clone();
    if let Some(seed) = cli.seed {
        sets.push(format!("stability.seed={seed}"));
    }
    let mut cfg = parse_with_overrides(&text, &sets)?;
    if let Some(dir) = cli.output_dir {
        cfg.output.dir = dir;
    }
    if cli.print_config {
        print!("{}", toml::to_string(&cfg).expect("config serializes"));
        return Ok(json!(null));
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("thread count must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Usage(e.to_string()))?;
    let (table, summary) = pool.install(|| run(cli.subcommand, &cfg))?;

    let name = cli.subcommand.name();
    let meta = metadata(name, &cfg, table.columns, &summary);
    let file = cfg.output.file.clone().unwrap_or_else(|| cli.subcommand.default_file());
    let path = write_artifact(&cfg.output.dir, &file, &render(&meta, &table))?;
    Ok(json!({
        "status": "ok",
        "subcommand": name,
        "file": path.display().to_string(),
        "rows": table.rows.len(),
        "summary": summary,
    }))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            let err = CliError::Usage(first.to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code());
        }
    };
    match execute(cli) {
        Ok(v) if v.is_null() => ExitCode::SUCCESS,
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
