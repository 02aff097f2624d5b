use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dualstyle::commands::{self, parse_direction};
use dualstyle::config::RunConfig;
use dualstyle::run::RunDir;
use dualstyle::{log, Error, Result};
use dualstyle_core::corpus::{Split, Style};
use dualstyle_core::dualrl::Ablation;

#[derive(Parser)]
#[command(name = "dualstyle", version, about = "Dual reinforcement learning for text style transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Default)]
struct ConfigArgs {
    /// JSON config file; only read when the run directory is new.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus directory (sets the `data` key).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any config key, e.g. `--set dual_lr=1e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<String> {
        let mut o = Vec::new();
        if let Some(d) = &self.data {
            o.push(format!("data={}", serde_json::Value::String(d.display().to_string())));
        }
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        o.extend(self.set.iter().cloned());
        o
    }

    fn open(&self, run: &RunDir) -> Result<RunConfig> {
        commands::open_run(run, self.config.as_deref(), &self.overrides())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    RlOnly,
    MleOnly,
    RlPlusMle,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Pretrained,
    Best,
    Last,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Pretrained => "pretrained",
            Stage::Best => "best",
            Stage::Last => "last",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Dev,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-style corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = ["lexicon_swap", "casing", "marker"])]
        kind: Option<String>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Build the vocabulary and train the style classifier.
    PretrainClassifier {
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write template-based pseudo-parallel pairs.
    MakePseudo {
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// MLE pre-training of both transfer models on the pseudo pairs.
    Pretrain {
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Dual reinforcement learning; resumes from the last checkpoint.
    Train {
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Transfer a file line by line.
    Transfer {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        direction: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "best")]
        stage: Stage,
    },
    /// Score transfers. Without --outputs, transfers a corpus split in both
    /// directions first.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, value_enum, default_value = "best")]
        stage: Stage,
        /// Source sentences of an external outputs file.
        #[arg(long, requires_all = ["outputs", "refs", "target"])]
        inputs: Option<PathBuf>,
        #[arg(long)]
        outputs: Option<PathBuf>,
        #[arg(long, num_args = 1..)]
        refs: Vec<PathBuf>,
        /// Target style of the outputs: x or y.
        #[arg(long)]
        target: Option<String>,
    },
    /// Train an ablation from the run's pre-trained models.
    Ablate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn dispatch(cli: Cli) -> Result<()> {
    let threads = dualstyle::thread_cap()?;
    log("start", &[("threads", threads.to_string())]);
    match cli.command {
        Command::Synth { out, kind, cfg } => {
            let mut o = cfg.overrides();
            if let Some(k) = kind {
                o.push(format!("synth_kind={k}"));
            }
            if let Some(s) = cfg.seed {
                o.push(format!("synth_seed={s}"));
            }
            let base = match &cfg.config {
                Some(f) => RunConfig::from_file(f)?,
                None => RunConfig::default(),
            };
            commands::synth(&out, &base.with_overrides(&o)?)?;
        }
        Command::PretrainClassifier { run, cfg } => {
            let run = RunDir::new(run);
            let c = cfg.open(&run)?;
            commands::pretrain_classifier(&run, &c)?;
        }
        Command::MakePseudo { run, cfg } => {
            let run = RunDir::new(run);
            let c = cfg.open(&run)?;
            commands::make_pseudo(&run, &c)?;
        }
        Command::Pretrain { run, cfg } => {
            let run = RunDir::new(run);
            let c = cfg.open(&run)?;
            commands::pretrain_models(&run, &c)?;
        }
        Command::Train { run, cfg } => {
            let run = RunDir::new(run);
            let c = cfg.open(&run)?;
            commands::train_run(&run, &run, &c, false)?;
        }
        Command::Transfer {
            run,
            direction,
            input,
            output,
            stage,
        } => {
            commands::transfer_file(&RunDir::new(run), stage.name(), parse_direction(&direction)?, &input, &output)?;
        }
        Command::Evaluate {
            run,
            split,
            stage,
            inputs,
            outputs,
            refs,
            target,
        } => {
            let run = RunDir::new(run);
            match (inputs, outputs) {
                (Some(i), Some(o)) => {
                    let target = match target.as_deref() {
                        Some("x") => Style::Source,
                        Some("y") => Style::Target,
                        _ => return Err(Error::Usage("--target must be x or y".into())),
                    };
                    let rep = commands::evaluate_files(&run, &i, &o, &refs, target, "external")?;
                    log(
                        "evaluate",
                        &[
                            ("acc", format!("{:.2}", rep.acc)),
                            ("bleu", format!("{:.2}", rep.bleu)),
                            ("g2", format!("{:.2}", rep.g2)),
                            ("h2", format!("{:.2}", rep.h2)),
                        ],
                    );
                }
                _ => {
                    let split = match split {
                        SplitArg::Dev => Split::Dev,
                        SplitArg::Test => Split::Test,
                    };
                    commands::evaluate_split(&run, stage.name(), split)?;
                }
            }
        }
        Command::Ablate { run, mode, cfg } => {
            let run = RunDir::new(run);
            let c = cfg.open(&run)?;
            let mode = match mode {
                Mode::RlOnly => Ablation::RlOnly,
                Mode::MleOnly => Ablation::MleOnly,
                Mode::RlPlusMle => Ablation::RlPlusMle,
            };
            commands::ablate(&run, &c, mode, false)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log("error", &[("message", e.to_string())]);
            ExitCode::FAILURE
        }
    }
}
