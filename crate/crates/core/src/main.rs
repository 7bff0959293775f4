use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use lrd::cli::commands::{
    run_analyze, run_embed, run_evaluate, run_prepare, run_sweep, run_train, run_train_seeds, AnalyzeOptions, AnalyzeWhat,
    StageStatus,
};
use lrd::cli::config::{load_config, Config};
use lrd::corpus::SplitKind;
use lrd::trainer::Variant;

#[derive(Parser, Debug)]
#[command(name = "lrd", version, about = "Relation-aware sequential recommendation with latent relation discovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat `key = value` config file
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override any config key (repeatable), e.g. `--set kcore=10`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run name; outputs go to `<run_dir>/<name>/`
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    run_dir: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<String>,
    /// full, no_llm, no_kge or no_lrd
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    max_epochs: Option<String>,
    #[arg(long)]
    num_latent: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// Log per-epoch progress
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load, filter and split interactions; build triplets and evaluation negatives
    Prepare(Common),
    /// Compute item text embeddings (fallback encoder, file or API)
    Embed(Common),
    /// Train one variant (runs prepare and embed if their outputs are stale)
    Train {
        #[command(flatten)]
        common: Common,
        /// Train every seed in `seeds` and write a mean/std report
        #[arg(long)]
        all_seeds: bool,
    },
    /// Score a checkpoint on the validation or test split
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test", value_parser = ["valid", "test"])]
        split: String,
    },
    /// Relation similarity, exemplar pairs, case traces or a sweep
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_parser = ["sim", "pairs", "case", "sweep"])]
        what: String,
        /// Restrict `pairs` to one relation ID
        #[arg(long)]
        relation: Option<usize>,
        /// Pairs per relation, or test users traced when no `--user` is given
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Raw user ID to trace (repeatable)
        #[arg(long)]
        user: Vec<String>,
        /// Score every item pair instead of pairs seen in training windows
        #[arg(long)]
        full_pool: bool,
    },
    /// Train the full variant over the num_latent x lambda grid
    Sweep(Common),
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| lrd::Error::Config { key: kv.clone(), msg: "expected KEY=VALUE".into() })?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let named = [
            ("name", self.name.clone()),
            ("run_dir", self.run_dir.clone()),
            ("seed", self.seed.map(|s| s.to_string())),
            ("lr", self.lr.clone()),
            ("variant", self.variant.clone()),
            ("max_epochs", self.max_epochs.clone()),
            ("num_latent", self.num_latent.clone()),
            ("lambda", self.lambda.clone()),
        ];
        out.extend(named.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        Ok(out)
    }

    fn load(&self) -> Result<Config> {
        let cfg = load_config(self.config.as_deref(), &self.overrides()?)?;
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn status_str(s: StageStatus) -> &'static str {
    match s {
        StageStatus::Ran => "written",
        StageStatus::UpToDate => "up to date",
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(c) => {
            let cfg = c.load()?;
            let p = run_prepare(&cfg)?;
            println!("prepare: {} ({})", cfg.run_path().join("prepare").display(), status_str(p.status));
            print_json(&p.data.stats)?;
        }
        Command::Embed(c) => {
            let cfg = c.load()?;
            let p = run_prepare(&cfg)?;
            let e = run_embed(&cfg, &p)?;
            println!(
                "embed: {} items x {} dims ({})",
                e.table.len(),
                e.table.dim(),
                status_str(e.status)
            );
        }
        Command::Train { common, all_seeds } => {
            let cfg = common.load()?;
            let variant: Variant = cfg.variant()?;
            if all_seeds {
                let report = run_train_seeds(&cfg, variant, &cfg.seed_list()?)?;
                print_json(&report)?;
            } else {
                let m = run_train(&cfg, variant, cfg.seed)
                    .with_context(|| format!("training {} with seed {}", variant.as_str(), cfg.seed))?;
                print_json(&m)?;
            }
        }
        Command::Evaluate { common, checkpoint, split } => {
            let cfg = common.load()?;
            let kind = if split == "valid" { SplitKind::Valid } else { SplitKind::Test };
            let m = run_evaluate(&cfg, &checkpoint, kind)?;
            print_json(&m)?;
        }
        Command::Analyze {
            common,
            checkpoint,
            what,
            relation,
            top,
            user,
            full_pool,
        } => {
            let cfg = common.load()?;
            let what: AnalyzeWhat = what.parse()?;
            let checkpoint = match (what, checkpoint) {
                (AnalyzeWhat::Sweep, c) => c.unwrap_or_default(),
                (_, Some(c)) => c,
                (_, None) => {
                    return Err(lrd::Error::Config {
                        key: "checkpoint".into(),
                        msg: "required unless --what sweep".into(),
                    }
                    .into())
                }
            };
            let opts = AnalyzeOptions {
                relation,
                top,
                users: user,
                full_pool,
            };
            for p in run_analyze(&cfg, &checkpoint, what, &opts)? {
                println!("{}", p.display());
            }
        }
        Command::Sweep(c) => {
            let cfg = c.load()?;
            let r = run_sweep(&cfg)?;
            print!("{}", r.marginals_csv());
        }
    }
    Ok(())
}

fn verbose(cli: &Cli) -> bool {
    match &cli.command {
        Command::Prepare(c) | Command::Embed(c) | Command::Sweep(c) => c.verbose,
        Command::Train { common, .. } | Command::Evaluate { common, .. } | Command::Analyze { common, .. } => common.verbose,
    }
}

/// Parses `argv`, runs the command and returns the process exit code:
/// 0 on success, 1 on runtime failure, 2 on usage or configuration errors.
fn dispatch<I, T>(argv: I) -> u8
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
    let level = if verbose(&cli) { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            let lib = err.chain().find_map(|e| e.downcast_ref::<lrd::Error>());
            let category = lib.map_or("runtime", lrd::Error::category);
            let msg = format!("{err:#}").replace('\n', " ");
            eprintln!("error[{category}]: {msg}");
            if matches!(lib, Some(lrd::Error::Config { .. })) {
                2
            } else {
                1
            }
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(dispatch(std::env::args_os()))
}
