//! Stage-per-subcommand pipeline driver.
//!
//! Each stage reads the artifacts of the previous one from the output
//! directory and writes its own. Configuration comes from a JSON file
//! (see `RunConfig`); command-line flags override the file, so sweeps
//! over the attack budget are scriptable without editing configs.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/artifact error,
//! 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use advmri::attack::EpsilonMode;
use advmri::pipeline::{
    cmd_attack, cmd_detect, cmd_eval, cmd_phantom_gen, cmd_report, cmd_train, RunConfig,
};
use advmri::Result;

#[derive(Parser)]
#[command(
    name = "advmri",
    about = "Adversarial hallucination experiments for undersampled MRI reconstruction",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory holding all stage artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Overwrite existing stage output.
    #[arg(long)]
    force: bool,

    /// Attack budget, interpreted per the configured epsilon mode
    /// (relative by default).
    #[arg(long)]
    epsilon: Option<f64>,

    /// Attack budget as an absolute bound on the k-space perturbation;
    /// switches the epsilon mode to absolute.
    #[arg(long)]
    epsilon_abs: Option<f64>,

    /// Signed-gradient step size.
    #[arg(long)]
    alpha: Option<f64>,

    /// Attack iteration count.
    #[arg(long)]
    iters: Option<usize>,

    /// Attack seed (per-sample seeds derive from it).
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    /// Resolve the run configuration: file (or defaults), then flag
    /// overrides. Flags win.
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(e) = self.epsilon {
            cfg.attack.epsilon = e;
        }
        if let Some(e) = self.epsilon_abs {
            cfg.attack.epsilon = e;
            cfg.attack.epsilon_mode = EpsilonMode::Absolute;
        }
        if let Some(a) = self.alpha {
            cfg.attack.alpha = a;
        }
        if let Some(t) = self.iters {
            cfg.attack.iters = t;
        }
        if let Some(s) = self.seed {
            cfg.attack.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset (KSC samples under data/).
    PhantomGen(Common),
    /// Train the configured reconstruction model; write a checkpoint.
    Train(Common),
    /// Attack every sample; write perturbed k-space and attack records.
    Attack(Common),
    /// Metrics on clean/perturbed input and reconstruction pairs.
    Eval(Common),
    /// Reference-free detection against the attack artifacts.
    Detect(Common),
    /// Merge evaluation and detection outputs into one report.
    Report(Common),
}

fn run(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::PhantomGen(c)
        | Command::Train(c)
        | Command::Attack(c)
        | Command::Eval(c)
        | Command::Detect(c)
        | Command::Report(c) => c,
    };
    let cfg = common.resolve()?;
    let out = &common.out;
    let force = common.force;
    match cli.command {
        Command::PhantomGen(_) => cmd_phantom_gen(&cfg, out, force),
        Command::Train(_) => cmd_train(&cfg, out, force),
        Command::Attack(_) => cmd_attack(&cfg, out, force),
        Command::Eval(_) => cmd_eval(&cfg, out, force).map(|_| ()),
        Command::Detect(_) => {
            let result = cmd_detect(&cfg, out, force)?;
            for w in &result.warnings {
                eprintln!("warning: {}", w);
            }
            Ok(())
        }
        Command::Report(_) => cmd_report(&cfg, out, force),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprint!("{}", e);
                return ExitCode::from(1);
            }
            print!("{}", e);
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err);
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
