//! Run directory layout and resumable training sessions.
//!
//! ```text
//! RUN/config.json            resolved configuration
//! RUN/vocab.txt              shared vocabulary, one token per line
//! RUN/pseudo.f.tsv           pre-training pairs for f (and pseudo.g.tsv)
//! RUN/history.csv            one row per evaluated epoch
//! RUN/checkpoints/cls.ckpt
//! RUN/checkpoints/pretrained/{f,g}.ckpt
//! RUN/checkpoints/best/{f,g}.ckpt
//! RUN/checkpoints/last/{f,g,adam.f,adam.g}.ckpt + state.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use dualstyle_core::corpus::{Direction, Vocabulary};
use dualstyle_core::dualrl::{DualModels, Session, TrainObserver, TrainState, HISTORY_HEADER};
use dualstyle_core::numerics::{AdamState, Array, ParamSet};

use crate::checkpoint::{self, load, save, CheckpointMeta};
use crate::config::RunConfig;
use crate::error::{Error, IoContext, Result};
use crate::io::write_atomic;

#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn vocab(&self) -> PathBuf {
        self.root.join("vocab.txt")
    }

    pub fn history(&self) -> PathBuf {
        self.root.join("history.csv")
    }

    pub fn pseudo(&self, d: Direction) -> PathBuf {
        self.root.join(format!("pseudo.{}.tsv", d.tag()))
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn classifier(&self) -> PathBuf {
        self.checkpoints().join("cls.ckpt")
    }

    /// `stage` is `pretrained`, `best` or `last`.
    pub fn model(&self, stage: &str, d: Direction) -> PathBuf {
        self.checkpoints().join(stage).join(format!("{}.ckpt", d.tag()))
    }

    fn adam(&self, d: Direction) -> PathBuf {
        self.checkpoints().join("last").join(format!("adam.{}.ckpt", d.tag()))
    }

    fn state(&self) -> PathBuf {
        self.checkpoints().join("last").join("state.json")
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    /// Writes the resolved config unless one exists; an existing config
    /// must match.
    pub fn init_config(&self, cfg: &RunConfig) -> Result<()> {
        let path = self.config();
        if path.exists() {
            let old = RunConfig::from_file(&path)?;
            if &old != cfg {
                return Err(Error::Usage(format!(
                    "{} already holds a different config; use a new run directory",
                    path.display()
                )));
            }
            return Ok(());
        }
        write_atomic(&path, cfg.to_json()?.as_bytes())
    }

    pub fn load_config(&self) -> Result<RunConfig> {
        RunConfig::from_file(&self.config())
    }

    pub fn save_vocab(&self, v: &Vocabulary) -> Result<()> {
        crate::io::write_lines(&self.vocab(), v.tokens())
    }

    pub fn load_vocab(&self) -> Result<Vocabulary> {
        let path = self.vocab();
        let text = fs::read_to_string(&path).at(&path)?;
        Ok(Vocabulary::from_tokens(text.lines().map(String::from).collect())?)
    }

    pub fn save_models(&self, stage: &str, m: &DualModels, vocab_hash: &str) -> Result<()> {
        for d in Direction::BOTH {
            checkpoint::save_model(&self.model(stage, d), m.get(d), vocab_hash)?;
        }
        Ok(())
    }

    pub fn load_models(&self, stage: &str, vocab_hash: &str) -> Result<DualModels> {
        Ok(DualModels {
            f: checkpoint::load_model(&self.model(stage, Direction::XToY), Direction::XToY, vocab_hash)?,
            g: checkpoint::load_model(&self.model(stage, Direction::YToX), Direction::YToX, vocab_hash)?,
        })
    }

    pub fn has_session(&self) -> bool {
        self.state().exists()
    }

    /// Persists the current and best models, optimizer moments and loop
    /// state, then the history CSV.
    pub fn save_session(&self, s: &Session, vocab_hash: &str) -> Result<()> {
        self.save_models("best", &s.best, vocab_hash)?;
        self.save_models("last", &s.models, vocab_hash)?;
        for d in Direction::BOTH {
            let opt = &s.state.opt[d.index()];
            let mut p = ParamSet::new();
            for (i, (_, name, _)) in s.models.get(d).params.iter().enumerate() {
                p.add(&format!("m.{name}"), opt.first[i].clone());
                p.add(&format!("v.{name}"), opt.second[i].clone());
            }
            let meta = CheckpointMeta {
                tag: format!("adam.{}", d.tag()),
                vocab_hash: vocab_hash.into(),
                vocab_size: s.models.get(d).config.vocab_size,
                embed_dim: None,
                hidden_dim: None,
                extra: serde_json::json!({ "step": opt.step, "config": opt.config }),
            };
            save(&self.adam(d), &meta, &p)?;
        }
        let mut state = s.state.clone();
        for o in &mut state.opt {
            o.first.clear();
            o.second.clear();
        }
        write_atomic(&self.state(), serde_json::to_string(&state)?.as_bytes())?;
        write_atomic(&self.history(), history_csv(&s.state).as_bytes())
    }

    pub fn load_session(&self, vocab_hash: &str) -> Result<Session> {
        let path = self.state();
        let text = fs::read_to_string(&path).at(&path)?;
        let mut state: TrainState = serde_json::from_str(&text)?;
        let models = self.load_models("last", vocab_hash)?;
        let best = self.load_models("best", vocab_hash)?;
        for d in Direction::BOTH {
            let (meta, p) = load(&self.adam(d))?;
            let n = models.get(d).params.len();
            let arrays: Vec<Array> = p.iter().map(|(_, _, a)| a.clone()).collect();
            if arrays.len() != 2 * n {
                return Err(Error::Checkpoint {
                    path: self.adam(d),
                    message: "optimizer state does not match the model".into(),
                });
            }
            let opt: &mut AdamState = &mut state.opt[d.index()];
            opt.first = arrays.iter().step_by(2).cloned().collect();
            opt.second = arrays.iter().skip(1).step_by(2).cloned().collect();
            opt.step = meta.extra["step"].as_u64().unwrap_or(0);
        }
        Ok(Session { models, best, state })
    }
}

pub fn history_csv(state: &TrainState) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for row in &state.history {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    out
}

/// Saves the session after every epoch and logs a summary line.
pub struct Checkpointer<'a> {
    pub run: &'a RunDir,
    pub vocab_hash: String,
    pub quiet: bool,
}

impl TrainObserver for Checkpointer<'_> {
    fn on_epoch(&mut self, s: &Session) -> dualstyle_core::Result<()> {
        self.run
            .save_session(s, &self.vocab_hash)
            .map_err(|e| dualstyle_core::Error::InvalidConfig(e.to_string()))?;
        if !self.quiet {
            if let Some(r) = s.state.history.last() {
                crate::log(
                    "epoch",
                    &[
                        ("epoch", r.epoch.to_string()),
                        ("iteration", r.iteration.to_string()),
                        ("mean_r", format!("{:.4}", r.mean_r)),
                        ("dev_acc", format!("{:.2}", r.dev_acc)),
                        ("dev_bleu", format!("{:.2}", r.dev_bleu)),
                        ("dev_score", format!("{:.2}", r.dev_score)),
                        ("gold_bleu", r.gold_bleu.map(|b| format!("{b:.2}")).unwrap_or_default()),
                        ("best_epoch", s.state.best_epoch.to_string()),
                    ],
                );
            }
        }
        Ok(())
    }
}

pub fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).at(p)
}
