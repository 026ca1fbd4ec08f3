//! `thickstab <scenario> --config <path> [--set key=value]... --out <dir>`
//! and `thickstab list [--json]`.

mod catalog;
mod config;
mod error;
mod output;
mod scenarios;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use error::CliError;
use output::{content_hash, Artifacts};

#[derive(Debug, Parser)]
#[command(name = "thickstab", version, about = "Run thickstab experiment scenarios")]
struct Cli {
    /// Scenario name, or `list` for the catalog.
    scenario: String,
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set run.T=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// With `list`: emit the catalog as JSON.
    #[arg(long)]
    json: bool,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("THICKSTAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("THICKSTAB_THREADS: expected a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("THICKSTAB_THREADS: {e}")))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let info = catalog::find(&cli.scenario).ok_or_else(|| {
        CliError::Config(format!(
            "unknown scenario `{}`; available: list, {}",
            cli.scenario,
            catalog::names().join(", ")
        ))
    })?;
    let config_path = cli.config.as_ref().ok_or_else(|| CliError::Config("missing --config <path>".into()))?;
    let out_dir = cli.out.as_ref().ok_or_else(|| CliError::Config("missing --out <dir>".into()))?;
    configure_threads()?;

    let (table, text) = config::load(config_path, &cli.set)?;
    let cfg = config::parse(&table)?;
    let base_dir = config_path.parent().unwrap_or(Path::new("."));
    let resolved = config::resolve(&cfg, &table, info, base_dir)?;

    let mut artifacts = Artifacts::create(out_dir)?;
    let outcome = scenarios::run(info.name, &resolved, &cfg.run, &mut artifacts)?;

    let mut inputs = serde_json::Map::new();
    inputs.insert("config".into(), json!(content_hash(text.as_bytes())));
    if let Some(m) = &resolved.mask {
        inputs.insert("mask".into(), json!(content_hash(&thickstab_core::io::encode_mask(m))));
    }
    if let Some(f) = &resolved.init {
        inputs.insert("init".into(), json!(content_hash(&thickstab_core::io::encode_field(f))));
    }
    for p in &resolved.input_files {
        let bytes = std::fs::read(p).map_err(|e| CliError::io(p, e))?;
        inputs.insert(p.display().to_string(), json!(content_hash(&bytes)));
    }
    let manifest = json!({
        "tool": "thickstab",
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": info.name,
        "overrides": cli.set,
        "config": cfg,
        "parameters": outcome.parameters,
        "inputs": inputs,
        "outputs": artifacts.hashes(),
        "results": outcome.results,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    artifacts.write("manifest.json", text.as_bytes())?;
    println!("{}: wrote {} files to {}", info.name, artifacts.hashes().len(), out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.scenario == "list" {
        if cli.json {
            println!("{}", catalog::render_json());
        } else {
            print!("{}", catalog::render_text());
        }
        return ExitCode::SUCCESS;
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
