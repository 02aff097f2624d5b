//! Flat run configuration: every key has a default, a JSON file may set any
//! subset, and `--set key=value` flags override both.

use std::path::Path;

use dualstyle_core::classifier::{ClassifierConfig, ClassifierTrainConfig};
use dualstyle_core::corpus::{SyntheticKind, SyntheticTaskSpec};
use dualstyle_core::dualrl::{Ablation, BaselineMode, Schedule, TrainConfig};
use dualstyle_core::pseudo::LexiconConfig;
use dualstyle_core::rewards::{ContentVariant, RewardConfig};
use dualstyle_core::seq2seq::{DecodeConfig, DecodeMode, MaxLen, Seq2SeqConfig};
use serde::{Deserialize, Serialize};

use crate::checkpoint::sha256_hex;
use crate::error::{Error, IoContext, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Corpus directory.
    pub data: Option<String>,
    pub seed: u64,
    pub min_count: usize,

    pub synth_kind: SyntheticKind,
    pub synth_vocab_size: usize,
    pub synth_max_len: usize,
    pub synth_pair_count: usize,
    pub synth_train_size: usize,
    pub synth_dev_size: usize,
    pub synth_test_size: usize,
    pub synth_seed: u64,

    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub init_scale: f64,
    pub embed_std: f64,

    pub cls_embed_dim: usize,
    pub cls_channels: usize,
    pub cls_widths: Vec<usize>,
    pub cls_epochs: usize,
    pub cls_batch: usize,
    pub cls_lr: f64,

    pub lexicon_lambda: f64,
    pub lexicon_gamma: f64,
    pub lexicon_max_n: usize,
    pub lexicon_window: usize,

    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub pretrain_batch: usize,
    pub max_dual_epochs: usize,
    pub max_iterations: Option<u64>,
    pub iterations_per_epoch: Option<usize>,
    pub dual_lr: f64,
    pub dual_batch: usize,
    pub clip_norm: f64,
    pub patience: usize,
    pub ablation: Ablation,

    pub beta: f64,
    pub k: usize,
    pub length_normalize_content: bool,
    pub content_variant: ContentVariant,
    pub baseline_mode: BaselineMode,
    pub sample_temperature: f64,

    pub p0: f64,
    pub p_max: f64,
    pub r: f64,
    pub d: f64,

    pub max_len_extra: usize,
    pub max_len_cap: usize,
    pub beam_width: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SyntheticTaskSpec::default();
        let s2s = Seq2SeqConfig::new(0);
        let cls = ClassifierConfig::new(0);
        let ctc = ClassifierTrainConfig::default();
        let lex = LexiconConfig::default();
        let tc = TrainConfig::default();
        let (extra, cap) = match tc.decode.max_len {
            MaxLen::SourcePlus { extra, cap } => (extra, cap),
            MaxLen::Fixed(n) => (0, n),
        };
        Self {
            data: None,
            seed: tc.seed,
            min_count: 1,
            synth_kind: synth.kind,
            synth_vocab_size: synth.vocab_size,
            synth_max_len: synth.max_len,
            synth_pair_count: synth.pair_count,
            synth_train_size: synth.train_size,
            synth_dev_size: synth.dev_size,
            synth_test_size: synth.test_size,
            synth_seed: synth.seed,
            embed_dim: s2s.embed_dim,
            hidden_dim: s2s.hidden_dim,
            init_scale: s2s.init_scale,
            embed_std: s2s.embed_std,
            cls_embed_dim: cls.embed_dim,
            cls_channels: cls.channels,
            cls_widths: cls.widths,
            cls_epochs: ctc.epochs,
            cls_batch: ctc.batch_size,
            cls_lr: ctc.lr,
            lexicon_lambda: lex.lambda,
            lexicon_gamma: lex.gamma,
            lexicon_max_n: lex.max_n,
            lexicon_window: lex.window,
            pretrain_epochs: tc.pretrain_epochs,
            pretrain_lr: tc.pretrain_lr,
            pretrain_batch: tc.pretrain_batch,
            max_dual_epochs: tc.max_dual_epochs,
            max_iterations: tc.max_iterations,
            iterations_per_epoch: tc.iterations_per_epoch,
            dual_lr: tc.dual_lr,
            dual_batch: tc.dual_batch,
            clip_norm: tc.clip_norm,
            patience: tc.patience,
            ablation: tc.ablation,
            beta: tc.reward.beta,
            k: tc.reward.k,
            length_normalize_content: tc.reward.length_normalize_content,
            content_variant: tc.reward.content_variant,
            baseline_mode: tc.baseline_mode,
            sample_temperature: tc.sample_temperature,
            p0: tc.schedule.p0,
            p_max: tc.schedule.p_max,
            r: tc.schedule.r,
            d: tc.schedule.d,
            max_len_extra: extra,
            max_len_cap: cap,
            beam_width: tc.decode.beam_width,
        }
    }
}

impl RunConfig {
    /// Reads a (possibly partial) JSON config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Applies `key=value` overrides. Values are parsed as JSON first and
    /// fall back to plain strings, so `seed=3` and `ablation=rl_only` both work.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        let map = v.as_object_mut().expect("config serializes to an object");
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("override `{o}` is not key=value")))?;
            if !map.contains_key(key) {
                return Err(Error::Usage(format!("unknown config key `{key}`")));
            }
            let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            map.insert(key.to_string(), value);
        }
        let out: Self = serde_json::from_value(v).map_err(|e| Error::Usage(format!("bad override: {e}")))?;
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }

    pub fn synthetic_spec(&self) -> SyntheticTaskSpec {
        SyntheticTaskSpec {
            kind: self.synth_kind,
            vocab_size: self.synth_vocab_size,
            max_len: self.synth_max_len,
            pair_count: self.synth_pair_count,
            train_size: self.synth_train_size,
            dev_size: self.synth_dev_size,
            test_size: self.synth_test_size,
            seed: self.synth_seed,
        }
    }

    pub fn seq2seq(&self, vocab_size: usize) -> Seq2SeqConfig {
        Seq2SeqConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            init_scale: self.init_scale,
            embed_std: self.embed_std,
        }
    }

    pub fn classifier(&self, vocab_size: usize) -> ClassifierConfig {
        ClassifierConfig {
            vocab_size,
            embed_dim: self.cls_embed_dim,
            widths: self.cls_widths.clone(),
            channels: self.cls_channels,
        }
    }

    pub fn classifier_training(&self) -> ClassifierTrainConfig {
        ClassifierTrainConfig {
            epochs: self.cls_epochs,
            batch_size: self.cls_batch,
            lr: self.cls_lr,
            seed: self.seed.wrapping_add(10),
        }
    }

    pub fn lexicon(&self) -> LexiconConfig {
        LexiconConfig {
            lambda: self.lexicon_lambda,
            gamma: self.lexicon_gamma,
            max_n: self.lexicon_max_n,
            window: self.lexicon_window,
        }
    }

    pub fn decode(&self) -> DecodeConfig {
        DecodeConfig {
            max_len: MaxLen::SourcePlus {
                extra: self.max_len_extra,
                cap: self.max_len_cap,
            },
            mode: DecodeMode::Greedy,
            beam_width: self.beam_width,
            ..DecodeConfig::default()
        }
    }

    pub fn training(&self) -> Result<TrainConfig> {
        let tc = TrainConfig {
            pretrain_epochs: self.pretrain_epochs,
            max_dual_epochs: self.max_dual_epochs,
            max_iterations: self.max_iterations,
            iterations_per_epoch: self.iterations_per_epoch,
            pretrain_lr: self.pretrain_lr,
            dual_lr: self.dual_lr,
            pretrain_batch: self.pretrain_batch,
            dual_batch: self.dual_batch,
            clip_norm: self.clip_norm,
            reward: RewardConfig {
                beta: self.beta,
                k: self.k,
                length_normalize_content: self.length_normalize_content,
                content_variant: self.content_variant,
            },
            schedule: Schedule {
                p0: self.p0,
                p_max: self.p_max,
                r: self.r,
                d: self.d,
            },
            baseline_mode: self.baseline_mode,
            ablation: self.ablation,
            patience: self.patience,
            sample_temperature: self.sample_temperature,
            decode: self.decode(),
            seed: self.seed,
        };
        tc.validate()?;
        Ok(tc)
    }

    pub fn validate(&self) -> Result<()> {
        self.training()?;
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Usage("embed_dim and hidden_dim must be positive".into()));
        }
        if self.cls_widths.is_empty() || self.cls_channels == 0 || self.cls_batch == 0 {
            return Err(Error::Usage("classifier needs widths, channels and a batch size".into()));
        }
        Ok(())
    }
}
