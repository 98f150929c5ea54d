//! Argument handling and dispatch for the `exprmol` binary.
//!
//! Errors are reported as a single line, `error[CODE]: message`. Bad input
//! exits with status 2 and internal failures with status 1.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use exprmol_chem::Exec;
use exprmol_core::config::RunConfig;
use exprmol_core::error::CoreError;
use exprmol_core::pipeline::{
    evaluate_cmd, generate_cmd, train_gen_cmd, train_vae_cmd, transform, EvaluateArgs, GenerateArgs, TrainGenArgs,
    TrainVaeArgs, TransformArgs,
};

#[derive(Debug, Parser)]
#[command(name = "exprmol", version, about = "Expression-conditioned molecule generation")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration file.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for generation and scoring.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Average replicate profiles and/or reverse them.
    Transform(TransformOpts),
    /// Train the profile VAE.
    TrainVae(TrainVaeOpts),
    /// Train the conditional SMILES generator.
    TrainGen(TrainGenOpts),
    /// Sample molecules for one profile.
    Generate(GenerateOpts),
    /// Score generated molecules.
    Evaluate(EvaluateOpts),
}

#[derive(Debug, Args)]
pub struct TransformOpts {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// `sample_id,group` file; each group becomes one averaged profile.
    #[arg(long, value_name = "PATH")]
    pub average_by: Option<PathBuf>,
    /// Negate every expression value.
    #[arg(long)]
    pub reverse: bool,
}

#[derive(Debug, Args)]
pub struct TrainVaeOpts {
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// Directory for outputs without an explicit path.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainGenOpts {
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long)]
    pub vae: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub validity_log: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateOpts {
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// Profile row to condition on; optional for single-row files.
    #[arg(long)]
    pub sample_id: Option<String>,
    #[arg(long)]
    pub vae: Option<PathBuf>,
    #[arg(long)]
    pub generator: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateOpts {
    #[arg(long)]
    pub generated: PathBuf,
    /// Training pairs; defines novelty and the SA fragment statistics.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Known ligands, one SMILES per line.
    #[arg(long)]
    pub ligands: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(CoreError),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "E_USAGE",
            CliError::Core(e) => e.code(),
        }
    }

    pub fn exit_status(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_user_error() => 2,
            CliError::Core(_) => 1,
        }
    }

    /// The message flattened onto one line.
    pub fn line(&self) -> String {
        let msg = match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        };
        let flat = msg.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error[{}]: {flat}", self.code())
    }
}

fn need(value: Option<PathBuf>, fallback: &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    value
        .or_else(|| fallback.clone())
        .ok_or_else(|| CliError::Usage(format!("missing --{flag} (not set in the config file either)")))
}

fn out_path(explicit: Option<PathBuf>, dir: &Path, name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| dir.join(name))
}

fn exec_for(threads: Option<usize>) -> Result<Exec, CliError> {
    match threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(1) => Ok(Exec::Sequential),
        Some(_n) => {
            #[cfg(feature = "parallel")]
            {
                // the global pool can be set once per process; later calls keep the first size
                let _ = rayon::ThreadPoolBuilder::new().num_threads(_n).build_global();
            }
            Ok(Exec::default())
        }
        None => Ok(Exec::default()),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Human-readable summaries and reports go to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return Err(CliError::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let exec = exec_for(cli.threads)?;
    let dir = cfg.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let io = |e: std::io::Error| CliError::Core(CoreError::io("<stdout>", e));

    match cli.command {
        Command::Transform(o) => {
            let rows = transform(&TransformArgs {
                input: o.input,
                output: o.output.clone(),
                average_by: o.average_by,
                reverse: o.reverse,
            })?;
            writeln!(out, "wrote {rows} profiles to {}", o.output.display()).map_err(io)?;
        }
        Command::TrainVae(o) => {
            if let Some(e) = o.epochs {
                cfg.vae.epochs = e;
            }
            let dir = o.out_dir.unwrap_or(dir);
            let args = TrainVaeArgs {
                profiles: need(o.profiles, &cfg.paths.profiles, "profiles")?,
                checkpoint: out_path(o.checkpoint, &dir, "vae.ckpt"),
                log: out_path(o.log, &dir, "vae_training.log"),
            };
            let s = train_vae_cmd(&args, &cfg)?;
            writeln!(
                out,
                "trained on {} profiles ({} validation, {} test); kept epoch {}; checkpoint {}",
                s.train,
                s.valid,
                s.test,
                s.best_epoch,
                args.checkpoint.display()
            )
            .map_err(io)?;
        }
        Command::TrainGen(o) => {
            if let Some(e) = o.epochs {
                cfg.generator.epochs = e;
            }
            let dir = o.out_dir.unwrap_or(dir);
            let args = TrainGenArgs {
                pairs: need(o.pairs, &cfg.paths.pairs, "pairs")?,
                profiles: need(o.profiles, &cfg.paths.profiles, "profiles")?,
                vae: need(o.vae, &cfg.paths.vae, "vae")?,
                checkpoint: out_path(o.checkpoint, &dir, "gen.ckpt"),
                log: out_path(o.log, &dir, "gen_training.log"),
                validity_log: out_path(o.validity_log, &dir, "validity.log"),
            };
            let s = train_gen_cmd(&args, &cfg)?;
            writeln!(
                out,
                "trained on {} pairs ({} validation, {} test), vocabulary {}; kept epoch {}; final validity {:.3}; checkpoint {}",
                s.train,
                s.valid,
                s.test,
                s.vocab,
                s.best_epoch,
                s.final_validity,
                args.checkpoint.display()
            )
            .map_err(io)?;
        }
        Command::Generate(o) => {
            let dir = o.out_dir.unwrap_or(dir);
            let args = GenerateArgs {
                profiles: need(o.profiles, &cfg.paths.profiles, "profiles")?,
                sample_id: o.sample_id,
                vae: need(o.vae, &cfg.paths.vae, "vae")?,
                generator: need(o.generator, &cfg.paths.generator, "generator")?,
                output: out_path(o.output, &dir, "generated.tsv"),
                count: o.count,
                temperature: o.temperature,
            };
            let b = generate_cmd(&args, &cfg, exec)?;
            writeln!(
                out,
                "generated {} strings, {} valid; wrote {}",
                b.molecules.len(),
                b.valid,
                args.output.display()
            )
            .map_err(io)?;
        }
        Command::Evaluate(o) => {
            let args = EvaluateArgs {
                generated: o.generated,
                pairs: need(o.pairs, &cfg.paths.pairs, "pairs")?,
                ligands: o.ligands,
                output: o.output,
            };
            let report = evaluate_cmd(&args, exec)?;
            match &args.output {
                Some(p) => writeln!(out, "wrote report to {}", p.display()),
                None => write!(out, "{}", report.render()),
            }
            .map_err(io)?;
        }
    }
    Ok(())
}
