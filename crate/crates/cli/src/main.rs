//! shrinklab: config-driven, seeded, reproducible experiments on
//! shrinking-target hitting sets.
//!
//! Usage:
//!   shrinklab run <config.json> [--seed S] [--out DIR] [--work-bits W] [--guard-bits G]
//!   shrinklab replay <manifest.json> [--work-bits W] [--guard-bits G]
//!
//! The SHRINKLAB_OUT environment variable sets the default output directory.
//! Exit codes: 0 success, 1 config/schema error, 2 precision failure,
//! 3 budget failure.

mod config;
mod manifest;
mod presets;
mod replay;
mod runner;

use config::ExperimentConfig;
use replay::ReplayStatus;
use runner::RunError;
use std::path::PathBuf;
use std::process::ExitCode;

const USAGE: &str = "\
shrinklab — shrinking-target hitting-set laboratory

USAGE:
  shrinklab run <config.json> [--seed S] [--out DIR] [--work-bits W] [--guard-bits G]
  shrinklab replay <manifest.json> [--work-bits W] [--guard-bits G]
  shrinklab presets

The config's \"experiment\" field selects the lab:
  hit | lln | corr | fourfold | bounds | dim | weighted | transverse |
  ergodic | vprime | preset:NAME

Flags override the config's seed, output directory, and precision.
SHRINKLAB_OUT sets the default output directory (default: runs/<experiment>).

EXIT CODES: 0 ok, 1 config error, 2 precision failure, 3 budget failure.
";

struct Flags {
    seed: Option<u64>,
    out: Option<PathBuf>,
    work_bits: Option<u32>,
    guard_bits: Option<u32>,
}

fn parse_flags(args: &[String]) -> Result<Flags, String> {
    let mut flags = Flags {
        seed: None,
        out: None,
        work_bits: None,
        guard_bits: None,
    };
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let mut take = |name: &str| {
            it.next()
                .map(|s| s.to_string())
                .ok_or_else(|| format!("missing value for {name}"))
        };
        match arg.as_str() {
            "--seed" => flags.seed = Some(take("--seed")?.parse().map_err(|e| format!("--seed: {e}"))?),
            "--out" => flags.out = Some(PathBuf::from(take("--out")?)),
            "--work-bits" => {
                flags.work_bits =
                    Some(take("--work-bits")?.parse().map_err(|e| format!("--work-bits: {e}"))?)
            }
            "--guard-bits" => {
                flags.guard_bits =
                    Some(take("--guard-bits")?.parse().map_err(|e| format!("--guard-bits: {e}"))?)
            }
            other => return Err(format!("unknown flag {other:?}")),
        }
    }
    Ok(flags)
}

fn load_config(path: &str) -> Result<ExperimentConfig, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Config(format!("cannot read {path}: {e}")))?;
    let mut de = serde_json::de::Deserializer::from_str(&text);
    let mut config: ExperimentConfig = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| RunError::Config(format!("{} at {}", e.inner(), e.path())))?;
    if let Some(name) = config.experiment.strip_prefix("preset:") {
        let (experiment, params) = presets::expand(name).ok_or_else(|| {
            RunError::Config(format!(
                "unknown preset {name:?}; available: {}",
                presets::PRESET_NAMES.join(", ")
            ))
        })?;
        if !config.params.is_null() && config.params != serde_json::Value::Null {
            if let serde_json::Value::Object(m) = &config.params {
                if !m.is_empty() {
                    return Err(RunError::Config(
                        "preset configs must not carry params (the preset provides them)".into(),
                    ));
                }
            }
        }
        eprintln!("preset {name:?} expands to experiment {experiment:?}");
        config.experiment = experiment;
        config.params = params;
    }
    Ok(config)
}

fn cmd_run(args: &[String]) -> Result<(), RunError> {
    let path = args
        .first()
        .ok_or_else(|| RunError::Config("run requires a config path".into()))?;
    let flags = parse_flags(&args[1..]).map_err(RunError::Config)?;
    let mut config = load_config(path)?;
    if let Some(s) = flags.seed {
        config.seed = s;
    }
    if let Some(w) = flags.work_bits {
        config.precision.work_bits = w;
    }
    if let Some(g) = flags.guard_bits {
        config.precision.guard_bits = g;
    }
    let out_dir = flags
        .out
        .or_else(|| config.output.clone().map(PathBuf::from))
        .or_else(|| std::env::var("SHRINKLAB_OUT").ok().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs").join(&config.experiment));
    config.output = Some(out_dir.to_string_lossy().into_owned());
    let out = runner::run(&config, &out_dir)?;
    eprintln!(
        "wrote {} artifacts to {} in {:.2}s",
        out.manifest.files.len(),
        out_dir.display(),
        out.manifest.wall_seconds
    );
    println!("{}", out.manifest_path.display());
    Ok(())
}

fn cmd_replay(args: &[String]) -> Result<(), RunError> {
    let path = args
        .first()
        .ok_or_else(|| RunError::Config("replay requires a manifest path".into()))?;
    let flags = parse_flags(&args[1..]).map_err(RunError::Config)?;
    match replay::replay(PathBuf::from(path).as_path(), flags.work_bits, flags.guard_bits)? {
        ReplayStatus::ExactMatch => {
            println!("exact-match");
            Ok(())
        }
        ReplayStatus::TolerantMatch => {
            println!("tolerant-match");
            Ok(())
        }
        ReplayStatus::Mismatch(msg) => Err(RunError::Config(format!("replay mismatch: {msg}"))),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let result = match args.first().map(String::as_str) {
        Some("run") => cmd_run(&args[1..]),
        Some("replay") => cmd_replay(&args[1..]),
        Some("presets") => {
            for p in presets::PRESET_NAMES {
                println!("{p}");
            }
            Ok(())
        }
        Some("--help") | Some("-h") | None => {
            eprint!("{USAGE}");
            return ExitCode::from(if args.is_empty() { 1 } else { 0 });
        }
        Some(other) => Err(RunError::Config(format!("unknown command {other:?}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
