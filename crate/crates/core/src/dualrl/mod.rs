//! Pre-training, the dual reinforcement-learning loop with annealed pseudo
//! teacher forcing, and early stopping.
//!
//! Per iteration: `f` gets a policy-gradient step on a `D_X` batch and, when
//! the spacing rule fires, an MLE step on back-translated pairs
//! `(g(y), y)` from `D_Y`; then `g` gets the mirrored pair of updates.
//! Rewards are scored against snapshots of the opposite model taken at the
//! start of the iteration.

mod policy;
mod schedule;

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use policy::{advantages, policy_gradient, BaselineMode, PolicyGradient};
pub use schedule::{anneal_interval, spacing_trigger, Schedule};

use crate::classifier::{style_accuracy, Classifier};
use crate::corpus::{Direction, Sequence, Style, TokenId};
use crate::error::{Error, Result};
use crate::eval::{corpus_bleu_ids, g2h2};
use crate::numerics::{adam_step, AdamConfig, AdamState};
use crate::pseudo::back_translate_ids;
use crate::rewards::{bleu_content_rewards, content_rewards, style_rewards, ContentVariant, RewardBreakdown, RewardConfig};
use crate::seq2seq::{DecodeConfig, DecodeMode, Seq2Seq};

pub type IdPair = (Vec<TokenId>, Vec<TokenId>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    RlPlusMle,
    RlOnly,
    MleOnly,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::RlPlusMle => "rl_plus_mle",
            Ablation::RlOnly => "rl_only",
            Ablation::MleOnly => "mle_only",
        }
    }

    fn uses_rl(self) -> bool {
        self != Ablation::MleOnly
    }

    fn uses_mle(self) -> bool {
        self != Ablation::RlOnly
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub pretrain_epochs: usize,
    pub max_dual_epochs: usize,
    /// Cap on dual iterations over the whole run.
    pub max_iterations: Option<u64>,
    /// Iterations per dual epoch; by default one pass over the larger corpus.
    pub iterations_per_epoch: Option<usize>,
    pub pretrain_lr: f64,
    pub dual_lr: f64,
    pub pretrain_batch: usize,
    pub dual_batch: usize,
    pub clip_norm: f64,
    pub reward: RewardConfig,
    pub schedule: Schedule,
    pub baseline_mode: BaselineMode,
    pub ablation: Ablation,
    pub patience: usize,
    pub sample_temperature: f64,
    pub decode: DecodeConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pretrain_epochs: 5,
            max_dual_epochs: 20,
            max_iterations: None,
            iterations_per_epoch: None,
            pretrain_lr: 1e-3,
            dual_lr: 1e-5,
            pretrain_batch: 32,
            dual_batch: 128,
            clip_norm: 5.0,
            reward: RewardConfig::default(),
            schedule: Schedule::default(),
            baseline_mode: BaselineMode::LeaveOneOut,
            ablation: Ablation::RlPlusMle,
            patience: 1,
            sample_temperature: 1.0,
            decode: DecodeConfig::default(),
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.schedule.r > 1.0) {
            return bad("schedule r must exceed 1");
        }
        if !(self.schedule.p0 <= self.schedule.p_max) || !(self.schedule.p0 > 0.0) || !(self.schedule.d > 0.0) {
            return bad("schedule needs 0 < p0 <= p_max and d > 0");
        }
        if !(self.pretrain_lr > 0.0) || !(self.dual_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.pretrain_batch == 0 || self.dual_batch == 0 {
            return bad("batch sizes must be positive");
        }
        if !(self.sample_temperature > 0.0) {
            return bad("sample_temperature must be positive");
        }
        if self.iterations_per_epoch == Some(0) {
            return bad("iterations_per_epoch must be positive");
        }
        self.reward.validate()?;
        self.decode.validate()
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            clip_norm: Some(self.clip_norm),
            ..AdamConfig::default()
        }
    }

    fn sampling(&self, seed: u64) -> DecodeConfig {
        DecodeConfig {
            mode: DecodeMode::Sample,
            temperature: self.sample_temperature,
            seed,
            ..self.decode
        }
    }
}

/// Mixes run seed and counters into an independent stream seed.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for p in parts {
        h = splitmix(h ^ splitmix(*p));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The forward model `f` and the backward model `g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualModels {
    pub f: Seq2Seq,
    pub g: Seq2Seq,
}

impl DualModels {
    pub fn get(&self, d: Direction) -> &Seq2Seq {
        match d {
            Direction::XToY => &self.f,
            Direction::YToX => &self.g,
        }
    }

    pub fn get_mut(&mut self, d: Direction) -> &mut Seq2Seq {
        match d {
            Direction::XToY => &mut self.f,
            Direction::YToX => &mut self.g,
        }
    }
}

/// Id-level data for dual training; index by style.
#[derive(Clone, Debug, PartialEq)]
pub struct DualData {
    pub train: [Vec<Sequence>; 2],
    pub dev: [Vec<Sequence>; 2],
    /// Gold transfers of the dev sentences, when known; reported only.
    pub dev_gold: Option<[Vec<Sequence>; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    /// Mean training loss per epoch, per direction.
    pub epoch_losses: [Vec<f64>; 2],
    /// Mean per-token dev NLL before and after, per direction.
    pub dev_nll: Option<[(f64, f64); 2]>,
}

/// Mean per-token negative log-likelihood of raw pairs.
pub fn mean_nll(model: &Seq2Seq, pairs: &[IdPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyList);
    }
    let lps = model.log_prob_batch(pairs)?;
    let tokens: usize = pairs.iter().map(|p| p.1.len()).sum();
    Ok(-lps.iter().sum::<f64>() / tokens as f64)
}

/// MLE pre-training of both models on their pseudo-pair sets.
pub fn pretrain(
    models: &mut DualModels,
    pairs: &[Vec<IdPair>; 2],
    dev_pairs: Option<&[Vec<IdPair>; 2]>,
    cfg: &TrainConfig,
) -> Result<PretrainReport> {
    cfg.validate()?;
    let mut losses: [Vec<f64>; 2] = Default::default();
    let mut dev_nll = [(0.0, 0.0); 2];
    for dir in Direction::BOTH {
        let model = models.get_mut(dir);
        let data = &pairs[dir.index()];
        if let Some(dev) = dev_pairs {
            dev_nll[dir.index()].0 = mean_nll(model, &dev[dir.index()])?;
        }
        if data.is_empty() {
            return Err(Error::EmptyList);
        }
        let mut opt = AdamState::new(&model.params, cfg.adam(cfg.pretrain_lr));
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 0..cfg.pretrain_epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1, dir.index() as u64, epoch as u64]));
            order.shuffle(&mut rng);
            let mut sum = 0.0;
            let mut n = 0;
            for idx in order.chunks(cfg.pretrain_batch) {
                let batch: Vec<IdPair> = idx.iter().map(|&i| data[i].clone()).collect();
                sum += model.mle_step(&batch, &mut opt)?;
                n += 1;
            }
            losses[dir.index()].push(sum / n as f64);
        }
        if let Some(dev) = dev_pairs {
            dev_nll[dir.index()].1 = mean_nll(model, &dev[dir.index()])?;
        }
    }
    Ok(PretrainReport {
        epoch_losses: losses,
        dev_nll: dev_pairs.map(|_| dev_nll),
    })
}

/// Rewards of `(x, y')` pairs for a model transferring into `target`.
pub fn score_samples(
    opposite: &Seq2Seq,
    clf: &Classifier,
    target: Style,
    pairs: &[(&Sequence, Sequence)],
    cfg: &TrainConfig,
) -> Result<Vec<RewardBreakdown>> {
    let ys: Vec<Sequence> = pairs.iter().map(|p| p.1.clone()).collect();
    let rs = style_rewards(clf, &ys, target)?;
    let back: Vec<(Sequence, Sequence)> = pairs.iter().map(|(x, y)| (y.clone(), (*x).clone())).collect();
    let rc = match cfg.reward.content_variant {
        ContentVariant::ReconstructionProb => content_rewards(opposite, &back, &cfg.reward)?,
        ContentVariant::BleuXDoublePrime => bleu_content_rewards(opposite, &back, &cfg.decode)?,
    };
    Ok(rs
        .iter()
        .zip(&rc)
        .map(|(s, c)| RewardBreakdown::new(*s, *c, cfg.reward.beta))
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RlStats {
    pub reward: RewardBreakdown,
    pub degenerate: usize,
    pub samples: usize,
    pub grad_norm: f64,
}

/// One policy-gradient update of `policy` on a batch of its inputs.
pub fn rl_step(
    policy: &mut Seq2Seq,
    opposite: &Seq2Seq,
    clf: &Classifier,
    inputs: &[Sequence],
    opt: &mut AdamState,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RlStats> {
    if !clf.is_frozen() {
        return Err(Error::InvalidConfig("rewards need a frozen classifier".into()));
    }
    let target = policy.direction.output_style();
    let decode = cfg.sampling(0);
    let pg = policy_gradient(policy, inputs, cfg.reward.k, &decode, cfg.baseline_mode, rng, |pairs| {
        score_samples(opposite, clf, target, pairs, cfg)
    })?;
    let grad_norm = adam_step(&mut policy.params, &pg.grads, opt)?;
    Ok(RlStats {
        reward: pg.mean_reward,
        degenerate: pg.degenerate,
        samples: pg.samples,
        grad_norm,
    })
}

/// MLE step of `model` on back-translated pairs `(opposite(s), s)`.
pub fn teacher_forcing_step(
    model: &mut Seq2Seq,
    opposite: &Seq2Seq,
    batch: &[Sequence],
    opt: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<f64> {
    let pairs = back_translate_ids(opposite, batch, &cfg.decode)?;
    model.mle_step(&pairs, opt)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DevMetrics {
    /// Per direction (`f`, `g`), percentages.
    pub acc: [f64; 2],
    pub self_bleu: [f64; 2],
    pub gold_bleu: Option<[f64; 2]>,
}

impl DevMetrics {
    pub fn mean_acc(&self) -> f64 {
        (self.acc[0] + self.acc[1]) / 2.0
    }

    pub fn mean_self_bleu(&self) -> f64 {
        (self.self_bleu[0] + self.self_bleu[1]) / 2.0
    }

    /// Early-stopping score: harmonic mean of ACC and BLEU against the inputs.
    pub fn score(&self) -> f64 {
        g2h2(self.mean_acc(), self.mean_self_bleu()).1
    }

    pub fn gold_h2(&self) -> Option<f64> {
        self.gold_bleu
            .map(|b| g2h2(self.mean_acc(), (b[0] + b[1]) / 2.0).1)
    }
}

/// Greedy transfer of both dev sets, scored with the classifier and BLEU.
pub fn evaluate_dev(models: &DualModels, clf: &Classifier, data: &DualData, decode: &DecodeConfig) -> Result<DevMetrics> {
    let mut m = DevMetrics::default();
    let mut gold = [0.0; 2];
    for dir in Direction::BOTH {
        let inputs = &data.dev[dir.input_style().index()];
        let outs = models.get(dir).decode_batch(inputs, decode)?;
        let nonempty: Vec<Sequence> = outs.iter().filter(|o| !o.is_empty()).cloned().collect();
        let hits = if nonempty.is_empty() {
            0.0
        } else {
            style_accuracy(clf, &nonempty, dir.output_style())? * nonempty.len() as f64
        };
        m.acc[dir.index()] = 100.0 * hits / outs.len().max(1) as f64;
        m.self_bleu[dir.index()] = corpus_bleu_ids(&outs, inputs)?;
        if let Some(g) = &data.dev_gold {
            gold[dir.index()] = corpus_bleu_ids(&outs, &g[dir.input_style().index()])?;
        }
    }
    if data.dev_gold.is_some() {
        m.gold_bleu = Some(gold);
    }
    Ok(m)
}

/// One history row per epoch; epoch 0 is the pre-trained starting point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: u64,
    pub epoch: usize,
    pub mean_rs: f64,
    pub mean_rc: f64,
    pub mean_r: f64,
    pub dev_acc: f64,
    pub dev_bleu: f64,
    pub dev_score: f64,
    pub gold_bleu: Option<f64>,
    pub gold_h2: Option<f64>,
    pub tf_loss: f64,
    pub tf_steps: u64,
    pub degenerate: u64,
    pub dev: DevMetrics,
}

pub const HISTORY_HEADER: &str =
    "iteration,epoch,mean_rs,mean_rc,mean_r,dev_acc,dev_bleu,dev_score,gold_bleu,gold_h2,tf_loss,tf_steps,degenerate";

impl HistoryRow {
    /// CSV line matching [`HISTORY_HEADER`]; floats use shortest round-trip form.
    pub fn csv_line(&self) -> alloc::string::String {
        let opt = |v: Option<f64>| v.map(|x| alloc::format!("{x}")).unwrap_or_default();
        alloc::format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.epoch,
            self.mean_rs,
            self.mean_rc,
            self.mean_r,
            self.dev_acc,
            self.dev_bleu,
            self.dev_score,
            opt(self.gold_bleu),
            opt(self.gold_h2),
            self.tf_loss,
            self.tf_steps,
            self.degenerate
        )
    }
}

/// Everything needed to continue a run exactly at an epoch boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub iteration: u64,
    pub epoch: usize,
    pub p: f64,
    pub last_trigger: [Option<u64>; 2],
    pub opt: [AdamState; 2],
    pub history: Vec<HistoryRow>,
    pub best_epoch: usize,
    pub best_score: f64,
    pub epochs_without_improvement: usize,
    /// Set by early stopping.
    pub finished: bool,
}

impl TrainState {
    pub fn new(models: &DualModels, cfg: &TrainConfig) -> Self {
        Self {
            iteration: 0,
            epoch: 0,
            p: anneal_interval(0, &cfg.schedule),
            last_trigger: [None, None],
            opt: [
                AdamState::new(&models.f.params, cfg.adam(cfg.dual_lr)),
                AdamState::new(&models.g.params, cfg.adam(cfg.dual_lr)),
            ],
            history: Vec::new(),
            best_epoch: 0,
            best_score: f64::NEG_INFINITY,
            epochs_without_improvement: 0,
            finished: false,
        }
    }

    /// Spacing-rule teacher-forcing decision for `dir` at the current
    /// iteration; records the trigger.
    pub fn should_teacher_force(&mut self, dir: Direction, schedule: &Schedule) -> bool {
        self.p = anneal_interval(self.iteration, schedule);
        spacing_trigger(self.iteration, self.p, &mut self.last_trigger[dir.index()])
    }
}

/// A run in progress: current and best-dev models plus the loop state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub models: DualModels,
    pub best: DualModels,
    pub state: TrainState,
}

impl Session {
    pub fn new(models: DualModels, cfg: &TrainConfig) -> Self {
        let state = TrainState::new(&models, cfg);
        Self {
            best: models.clone(),
            models,
            state,
        }
    }
}

/// Per-iteration trace for observers.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IterationStats {
    pub iteration: u64,
    pub epoch: usize,
    pub p: f64,
    pub rl: [Option<RlStats>; 2],
    pub tf_loss: [Option<f64>; 2],
}

pub trait TrainObserver {
    fn on_iteration(&mut self, _stats: &IterationStats) {}

    /// Called after every evaluated epoch, including the starting point.
    fn on_epoch(&mut self, _session: &Session) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

fn batch_of(order: &[usize], data: &[Sequence], b: usize, size: usize) -> Vec<Sequence> {
    (0..size.min(data.len()))
        .map(|j| data[order[(b * size + j) % order.len()]].clone())
        .collect()
}

/// Runs (or resumes) dual training until the epoch budget, the iteration
/// cap or early stopping ends it. `session.best` holds the best-dev models.
pub fn train(
    session: &mut Session,
    clf: &Classifier,
    data: &DualData,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<()> {
    cfg.validate()?;
    if !clf.is_frozen() {
        return Err(Error::InvalidConfig("dual training needs a frozen classifier".into()));
    }
    if data.train.iter().any(Vec::is_empty) || data.dev.iter().any(Vec::is_empty) {
        return Err(Error::EmptyList);
    }
    if session.state.history.is_empty() {
        let dev = evaluate_dev(&session.models, clf, data, &cfg.decode)?;
        record_epoch(session, dev, [0.0; 3], 0.0, 0, 0);
        observer.on_epoch(session)?;
    }
    let per_epoch = cfg.iterations_per_epoch.unwrap_or_else(|| {
        let n = data.train[0].len().max(data.train[1].len());
        n.div_ceil(cfg.dual_batch)
    });
    while !session.state.finished {
        // limits are not sticky, so a later call with larger limits continues
        if session.state.epoch >= cfg.max_dual_epochs || cap_reached(&session.state, cfg) {
            break;
        }
        let epoch = session.state.epoch + 1;
        let orders: [Vec<usize>; 2] = core::array::from_fn(|s| {
            let mut o: Vec<usize> = (0..data.train[s].len()).collect();
            o.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[2, epoch as u64, s as u64])));
            o
        });
        let mut sums = [0.0f64; 3];
        let mut rl_count = 0usize;
        let (mut tf_sum, mut tf_steps, mut degenerate) = (0.0, 0u64, 0u64);
        for b in 0..per_epoch {
            if cap_reached(&session.state, cfg) {
                break;
            }
            let stats = iteration(session, clf, data, cfg, &orders, b, epoch)?;
            for r in stats.rl.iter().flatten() {
                sums[0] += r.reward.r_style;
                sums[1] += r.reward.r_content;
                sums[2] += r.reward.r_total;
                rl_count += 1;
                degenerate += r.degenerate as u64;
            }
            for l in stats.tf_loss.iter().flatten() {
                tf_sum += l;
                tf_steps += 1;
            }
            observer.on_iteration(&stats);
        }
        session.state.epoch = epoch;
        let n = rl_count.max(1) as f64;
        let dev = evaluate_dev(&session.models, clf, data, &cfg.decode)?;
        let tf_mean = if tf_steps == 0 { 0.0 } else { tf_sum / tf_steps as f64 };
        let improved = record_epoch(
            session,
            dev,
            [sums[0] / n, sums[1] / n, sums[2] / n],
            tf_mean,
            tf_steps,
            degenerate,
        );
        if !improved && session.state.epochs_without_improvement >= cfg.patience {
            session.state.finished = true;
        }
        observer.on_epoch(session)?;
    }
    Ok(())
}

fn cap_reached(state: &TrainState, cfg: &TrainConfig) -> bool {
    cfg.max_iterations.is_some_and(|m| state.iteration >= m)
}

/// Appends a history row and updates the best snapshot; true on improvement.
fn record_epoch(
    session: &mut Session,
    dev: DevMetrics,
    rewards: [f64; 3],
    tf_loss: f64,
    tf_steps: u64,
    degenerate: u64,
) -> bool {
    let st = &mut session.state;
    let score = dev.score();
    st.history.push(HistoryRow {
        iteration: st.iteration,
        epoch: st.epoch,
        mean_rs: rewards[0],
        mean_rc: rewards[1],
        mean_r: rewards[2],
        dev_acc: dev.mean_acc(),
        dev_bleu: dev.mean_self_bleu(),
        dev_score: score,
        gold_bleu: dev.gold_bleu.map(|b| (b[0] + b[1]) / 2.0),
        gold_h2: dev.gold_h2(),
        tf_loss,
        tf_steps,
        degenerate,
        dev,
    });
    if score > st.best_score {
        st.best_score = score;
        st.best_epoch = st.epoch;
        st.epochs_without_improvement = 0;
        session.best = session.models.clone();
        true
    } else {
        st.epochs_without_improvement += 1;
        false
    }
}

fn iteration(
    session: &mut Session,
    clf: &Classifier,
    data: &DualData,
    cfg: &TrainConfig,
    orders: &[Vec<usize>; 2],
    b: usize,
    epoch: usize,
) -> Result<IterationStats> {
    let i = session.state.iteration;
    let snapshot = session.models.clone();
    let mut stats = IterationStats {
        iteration: i,
        epoch,
        ..IterationStats::default()
    };
    for dir in Direction::BOTH {
        let own = dir.input_style().index();
        let other = dir.output_style().index();
        let inputs = batch_of(&orders[own], &data.train[own], b, cfg.dual_batch);
        if cfg.ablation.uses_rl() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[3, i, dir.index() as u64]));
            let opposite = snapshot.get(dir.reverse());
            let st = &mut session.state;
            let model = session.models.get_mut(dir);
            stats.rl[dir.index()] = Some(rl_step(model, opposite, clf, &inputs, &mut st.opt[dir.index()], cfg, &mut rng)?);
        }
        if cfg.ablation.uses_mle() && session.state.should_teacher_force(dir, &cfg.schedule) {
            let real = batch_of(&orders[other], &data.train[other], b, cfg.dual_batch);
            // latest parameters of the opposite model
            let opposite = session.models.get(dir.reverse()).clone();
            let st = &mut session.state;
            let model = session.models.get_mut(dir);
            stats.tf_loss[dir.index()] = Some(teacher_forcing_step(model, &opposite, &real, &mut st.opt[dir.index()], cfg)?);
        }
    }
    session.state.p = anneal_interval(i, &cfg.schedule);
    stats.p = session.state.p;
    session.state.iteration += 1;
    Ok(stats)
}
