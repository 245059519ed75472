//! `comask` batch runner.
//!
//! Each subcommand resolves a JSON config (defaults, then `--config`, then
//! flags, then `--set key=value` in order), runs one experiment, and writes
//! its CSV/JSON outputs plus `manifest.json` into `--out`.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 runtime failure,
//! 4 a `--check` run whose acceptance target was missed.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use commands::{
    AblateCommand, EvalCommand, Experiment, FceCommand, GapCommand, IpCommand, MultiviewCommand, RecoveryCommand,
    TrainCommand,
};
use error::CliError;
use output::{Manifest, OutDir};

#[derive(Debug, Parser)]
#[command(name = "comask", version, about = "Complementary-mask experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file; keys it sets override the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Repetition count (trials, repetitions or seeds, depending on the experiment).
    #[arg(long)]
    reps: Option<u64>,
    /// Config override `key=value`, dot paths for nested keys. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Evaluate the acceptance target and exit with 4 if it is missed.
    #[arg(long)]
    check: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Information preservation of complementary and random pairs.
    TheoryIp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// K-way partitions and their multi-view metric.
    TheoryMultiview {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        dim: Option<usize>,
        /// View counts, comma separated.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
    },
    /// Feature consistency of masked views against the bound expressions.
    TheoryFce {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Generalization gap against sample size.
    TheoryGap {
        #[command(flatten)]
        common: Common,
    },
    /// Masked compressed-sensing recovery over a (sigma, k) grid.
    RecoverySweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// One training run on the synthetic domain shift.
    Train {
        #[command(flatten)]
        common: Common,
        /// source_only, random_mask or complementary.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// All variants over several seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Evaluates saved parameters on one split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// `params.json` from a train run.
        #[arg(long)]
        params: Option<PathBuf>,
        /// source_train, target_train, source_val or target_val.
        #[arg(long)]
        split: Option<String>,
    },
}

/// Flag overrides, applied before `--set` so that `--set` wins.
type Flags = Vec<(String, Value)>;

fn flag<T: Into<Value>>(flags: &mut Flags, key: &str, v: Option<T>) {
    if let Some(v) = v {
        flags.push((key.to_string(), v.into()));
    }
}

fn execute<E: Experiment>(name: &str, common: Common, mut flags: Flags) -> Result<Manifest, CliError> {
    if common.check && !E::CHECKED {
        return Err(CliError::Usage(format!("{name} has no acceptance check")));
    }
    let mut overrides = Vec::new();
    if let Some(s) = common.seed {
        overrides.push(("seed".to_string(), Value::from(s)));
    }
    if let Some(r) = common.reps {
        let key = E::REPS_KEY.ok_or_else(|| CliError::Usage(format!("{name} does not take --reps")))?;
        overrides.push((key.to_string(), Value::from(r)));
    }
    overrides.append(&mut flags);
    for raw in &common.set {
        overrides.push(config::parse_override(raw)?);
    }
    let mut cfg: E = config::resolve(common.config.as_deref(), &overrides)?;
    let mut out = OutDir::create(&common.out)?;
    let started = Instant::now();
    let outcome = cfg.run(&mut out)?;
    let wall = started.elapsed().as_secs_f64();
    let config = serde_json::to_value(&cfg)?;
    let mut outputs = out.written().to_vec();
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        schema_version: output::MANIFEST_SCHEMA,
        artifact: "comask",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: name.to_string(),
        master_seed: config.get("seed").and_then(Value::as_u64).unwrap_or_default(),
        seed_rule: output::SEED_RULE,
        derived_seeds: outcome.derived_seeds,
        config_sha256: output::config_hash(&config),
        config,
        outputs,
        check: outcome.check,
        wall_time_secs: wall,
    };
    out.json("manifest.json", &manifest)?;
    if common.check {
        if let Some(c) = manifest.check.as_ref().filter(|c| !c.passed) {
            return Err(CliError::Check(c.detail.clone()));
        }
    }
    Ok(manifest)
}

fn dispatch(cli: Cli) -> Result<Manifest, CliError> {
    let mut f = Flags::new();
    match cli.command {
        Command::TheoryIp { common, trials, dim } => {
            flag(&mut f, "trials", trials);
            flag(&mut f, "dim", dim);
            execute::<IpCommand>("theory-ip", common, f)
        }
        Command::TheoryMultiview { common, trials, dim, k } => {
            flag(&mut f, "trials", trials);
            flag(&mut f, "dim", dim);
            flag(&mut f, "ks", k);
            execute::<MultiviewCommand>("theory-multiview", common, f)
        }
        Command::TheoryFce { common, trials } => {
            flag(&mut f, "trials", trials);
            execute::<FceCommand>("theory-fce", common, f)
        }
        Command::TheoryGap { common } => execute::<GapCommand>("theory-gap", common, f),
        Command::RecoverySweep { common, trials } => {
            flag(&mut f, "trials", trials);
            execute::<RecoveryCommand>("recovery-sweep", common, f)
        }
        Command::Train {
            common,
            variant,
            iterations,
        } => {
            flag(&mut f, "train.variant", variant);
            flag(&mut f, "train.iterations", iterations);
            execute::<TrainCommand>("train", common, f)
        }
        Command::Ablate {
            common,
            seeds,
            iterations,
        } => {
            flag(&mut f, "seeds", seeds);
            flag(&mut f, "train.iterations", iterations);
            execute::<AblateCommand>("ablate", common, f)
        }
        Command::Eval { common, params, split } => {
            flag(&mut f, "params", params.map(|p| p.to_string_lossy().into_owned()));
            flag(&mut f, "split", split);
            execute::<EvalCommand>("eval", common, f)
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(m) => {
            if let Some(c) = &m.check {
                eprintln!("{}: {}", if c.passed { "check passed" } else { "check missed" }, c.detail);
            }
            eprintln!("{} done in {:.2}s", m.subcommand, m.wall_time_secs);
            0
        }
        Err(e) => {
            eprintln!("comask: {e}");
            e.exit_code()
        }
    }
}
