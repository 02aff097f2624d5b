//! The pipeline steps behind each subcommand. Every step reads and writes
//! a run directory so the steps can run in separate processes.

use std::fs;
use std::path::{Path, PathBuf};

use dualstyle_core::classifier::{train_classifier, Classifier};
use dualstyle_core::corpus::{generate_synthetic, Direction, Sentence, Sequence, Split, Style, StyleCorpus, Vocabulary};
use dualstyle_core::dualrl::{self, pretrain, Ablation, DualData, DualModels, IdPair, Session};
use dualstyle_core::eval::{evaluate as eval_outputs, EvalReport};
use dualstyle_core::pseudo::{build_style_lexicon, make_pretrain_pairs, template_transfer, PseudoPair};
use dualstyle_core::seq2seq::Seq2Seq;
use serde::Serialize;

use crate::checkpoint::{file_sha256, load_classifier, save_classifier, vocab_hash};
use crate::config::RunConfig;
use crate::error::{Error, IoContext, Result};
use crate::io::{self, load_corpus, read_manifest, read_sentences, write_atomic, write_corpus, write_lines};
use crate::log;
use crate::run::{Checkpointer, RunDir};

/// Generates a synthetic corpus into `out`.
pub fn synth(out: &Path, cfg: &RunConfig) -> Result<StyleCorpus> {
    let task = generate_synthetic(&cfg.synthetic_spec())?;
    write_corpus(out, &task.corpus)?;
    write_atomic(&out.join("spec.json"), serde_json::to_string_pretty(&cfg.synthetic_spec())?.as_bytes())?;
    log(
        "synth",
        &[
            ("out", out.display().to_string()),
            ("kind", format!("{:?}", cfg.synth_kind)),
            ("train", task.corpus.side(Style::Source).train.len().to_string()),
        ],
    );
    Ok(task.corpus)
}

/// Loads `RUN/config.json`, or resolves a new config from an optional file
/// plus overrides and records it.
pub fn open_run(run: &RunDir, file: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    if run.config().exists() {
        let cfg = run.load_config()?;
        if file.is_some() || !overrides.is_empty() {
            let asked = match file {
                Some(f) => RunConfig::from_file(f)?,
                None => cfg.clone(),
            }
            .with_overrides(overrides)?;
            if asked != cfg {
                return Err(Error::Usage(format!(
                    "{} was created with a different config",
                    run.root.display()
                )));
            }
        }
        return Ok(cfg);
    }
    let base = match file {
        Some(f) => RunConfig::from_file(f)?,
        None => RunConfig::default(),
    };
    let cfg = base.with_overrides(overrides)?;
    cfg.validate()?;
    run.init_config(&cfg)?;
    Ok(cfg)
}

pub fn corpus(cfg: &RunConfig) -> Result<StyleCorpus> {
    let dir = PathBuf::from(
        cfg.data
            .as_deref()
            .ok_or_else(|| Error::Usage("no corpus directory; set `data`".into()))?,
    );
    load_corpus(&dir, &read_manifest(&dir)?)
}

fn ids(vocab: &Vocabulary, s: &[Sentence]) -> Vec<Sequence> {
    s.iter().map(|x| vocab.to_ids(x)).collect()
}

fn split_ids(vocab: &Vocabulary, c: &StyleCorpus, split: Split) -> [Vec<Sequence>; 2] {
    [
        ids(vocab, c.side(Style::Source).split(split)),
        ids(vocab, c.side(Style::Target).split(split)),
    ]
}

/// Builds the vocabulary and trains the frozen style classifier.
pub fn pretrain_classifier(run: &RunDir, cfg: &RunConfig) -> Result<f64> {
    let c = corpus(cfg)?;
    let vocab = Vocabulary::from_corpus(&c, cfg.min_count);
    run.save_vocab(&vocab)?;
    let train = split_ids(&vocab, &c, Split::Train);
    let dev = split_ids(&vocab, &c, Split::Dev);
    let (clf, acc) = train_classifier(
        cfg.classifier(vocab.len()),
        [&train[0], &train[1]],
        [&dev[0], &dev[1]],
        &cfg.classifier_training(),
    )?;
    save_classifier(&run.classifier(), &clf, &vocab_hash(&vocab))?;
    log(
        "pretrain_classifier",
        &[("vocab", vocab.len().to_string()), ("dev_acc", format!("{:.4}", acc))],
    );
    Ok(acc)
}

fn parse_pair(path: &Path, line: usize, l: &str) -> Result<(Sentence, Sentence)> {
    let mut it = l.split('\t');
    let (Some(s), Some(t)) = (it.next(), it.next()) else {
        return Err(Error::Parse {
            path: path.into(),
            line,
            message: "expected source TAB target".into(),
        });
    };
    let sent = |x: &str| Sentence::new(x.split_whitespace().map(String::from).collect());
    Ok((sent(s), sent(t)))
}

/// Template-based pseudo pairs for pre-training, written as TSV.
pub fn make_pseudo(run: &RunDir, cfg: &RunConfig) -> Result<[Vec<PseudoPair>; 2]> {
    let c = corpus(cfg)?;
    let lex = build_style_lexicon(&c, &cfg.lexicon())?;
    let pairs = make_pretrain_pairs(&c, &lex);
    for d in Direction::BOTH {
        let p = &pairs[d.index()];
        write_lines(&run.pseudo(d), p.iter().map(PseudoPair::to_tsv_line))?;
        let changed = p.iter().filter(|x| x.source != x.target).count();
        log(
            "make_pseudo",
            &[
                ("model", d.tag().into()),
                ("pairs", p.len().to_string()),
                ("changed", changed.to_string()),
                ("lexicon", lex.len(d.input_style()).to_string()),
            ],
        );
    }
    Ok(pairs)
}

fn read_pairs(path: &Path, vocab: &Vocabulary) -> Result<Vec<IdPair>> {
    let text = fs::read_to_string(path).at(path)?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            let (s, t) = parse_pair(path, i + 1, l)?;
            Ok((vocab.to_ids(&s).with_eos(), vocab.to_ids(&t).with_eos()))
        })
        .collect()
}

pub fn fresh_models(cfg: &RunConfig, vocab_size: usize) -> DualModels {
    let c = cfg.seq2seq(vocab_size);
    DualModels {
        f: Seq2Seq::new(c, Direction::XToY, dualrl::derive_seed(cfg.seed, &[0, 0])),
        g: Seq2Seq::new(c, Direction::YToX, dualrl::derive_seed(cfg.seed, &[0, 1])),
    }
}

/// MLE pre-training of `f` and `g` on the pseudo pairs.
pub fn pretrain_models(run: &RunDir, cfg: &RunConfig) -> Result<DualModels> {
    let vocab = run.load_vocab()?;
    let pairs = [
        read_pairs(&run.pseudo(Direction::XToY), &vocab)?,
        read_pairs(&run.pseudo(Direction::YToX), &vocab)?,
    ];
    // dev pseudo pairs measure the perplexity change
    let c = corpus(cfg)?;
    let lex = build_style_lexicon(&c, &cfg.lexicon())?;
    let dev: [Vec<IdPair>; 2] = std::array::from_fn(|i| {
        let style = Style::BOTH[i];
        c.side(style)
            .dev
            .iter()
            .map(|s| {
                let t = template_transfer(s, &lex, style.other()).0;
                (vocab.to_ids(s).with_eos(), vocab.to_ids(&t).with_eos())
            })
            .collect()
    });
    let has_dev = dev.iter().all(|d| !d.is_empty());
    let mut models = fresh_models(cfg, vocab.len());
    let rep = pretrain(&mut models, &pairs, has_dev.then_some(&dev), &cfg.training()?)?;
    run.save_models("pretrained", &models, &vocab_hash(&vocab))?;
    for d in Direction::BOTH {
        let mut fields = vec![
            ("model", d.tag().to_string()),
            (
                "final_loss",
                rep.epoch_losses[d.index()].last().map(|l| format!("{l:.4}")).unwrap_or_default(),
            ),
        ];
        if let Some(n) = rep.dev_nll {
            fields.push(("dev_nll_before", format!("{:.4}", n[d.index()].0)));
            fields.push(("dev_nll_after", format!("{:.4}", n[d.index()].1)));
        }
        log("pretrain", &fields);
    }
    Ok(models)
}

/// Id-level train/dev data; the first dev reference is kept as gold.
pub fn dual_data(c: &StyleCorpus, vocab: &Vocabulary) -> DualData {
    let gold_ok = Style::BOTH.iter().all(|s| {
        let side = c.side(*s);
        !side.dev.is_empty() && side.dev_refs.len() == side.dev.len() && side.dev_refs.iter().all(|r| !r.is_empty())
    });
    DualData {
        train: split_ids(vocab, c, Split::Train),
        dev: split_ids(vocab, c, Split::Dev),
        dev_gold: gold_ok.then(|| {
            std::array::from_fn(|i| {
                c.side(Style::BOTH[i]).dev_refs.iter().map(|r| vocab.to_ids(&r[0])).collect()
            })
        }),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainOutcome {
    pub best_epoch: usize,
    pub best_score: f64,
    pub epochs: usize,
    pub iterations: u64,
    pub classifier_hash: String,
}

/// Dual training in `run`, starting from the pre-trained models of `base`
/// (usually the same directory) or resuming from `run`'s last checkpoint.
pub fn train_run(run: &RunDir, base: &RunDir, cfg: &RunConfig, quiet: bool) -> Result<TrainOutcome> {
    let vocab = base.load_vocab()?;
    let vh = vocab_hash(&vocab);
    let cls_path = base.classifier();
    let before = file_sha256(&cls_path)?;
    let clf: Classifier = load_classifier(&cls_path, &vh)?;
    let tc = cfg.training()?;
    let c = corpus(cfg)?;
    let data = dual_data(&c, &vocab);
    let mut session = if run.has_session() {
        let s = run.load_session(&vh)?;
        log("resume", &[("epoch", s.state.epoch.to_string()), ("iteration", s.state.iteration.to_string())]);
        s
    } else {
        Session::new(base.load_models("pretrained", &vh)?, &tc)
    };
    let mut obs = Checkpointer {
        run,
        vocab_hash: vh.clone(),
        quiet,
    };
    dualrl::train(&mut session, &clf, &data, &tc, &mut obs)?;
    run.save_session(&session, &vh)?;
    let after = file_sha256(&cls_path)?;
    if before != after {
        return Err(Error::Usage("classifier checkpoint changed during training".into()));
    }
    let out = TrainOutcome {
        best_epoch: session.state.best_epoch,
        best_score: session.state.best_score,
        epochs: session.state.epoch,
        iterations: session.state.iteration,
        classifier_hash: after,
    };
    log(
        "train_done",
        &[
            ("ablation", cfg.ablation.name().into()),
            ("best_epoch", out.best_epoch.to_string()),
            ("best_score", format!("{:.3}", out.best_score)),
            ("iterations", out.iterations.to_string()),
        ],
    );
    Ok(out)
}

/// Run directory of an ablation below its parent run.
pub fn ablation_dir(run: &RunDir, mode: Ablation) -> RunDir {
    RunDir::new(run.root.join("ablations").join(mode.name()))
}

/// Trains one ablation from the parent's pre-trained models. The child
/// directory gets copies of the parent's vocabulary, classifier and
/// pre-trained models so it can be evaluated like any run.
pub fn ablate(run: &RunDir, cfg: &RunConfig, mode: Ablation, quiet: bool) -> Result<(RunDir, TrainOutcome)> {
    let child = ablation_dir(run, mode);
    let mut ccfg = cfg.clone();
    ccfg.ablation = mode;
    child.init_config(&ccfg)?;
    let mut files = vec![(run.vocab(), child.vocab()), (run.classifier(), child.classifier())];
    for d in Direction::BOTH {
        files.push((run.model("pretrained", d), child.model("pretrained", d)));
    }
    for (from, to) in files {
        if !to.exists() {
            write_atomic(&to, &fs::read(&from).at(&from)?)?;
        }
    }
    let out = train_run(&child, &child, &ccfg, quiet)?;
    Ok((child, out))
}

pub fn parse_direction(s: &str) -> Result<Direction> {
    match s {
        "x2y" | "f" => Ok(Direction::XToY),
        "y2x" | "g" => Ok(Direction::YToX),
        _ => Err(Error::Usage(format!("direction must be x2y or y2x, got `{s}`"))),
    }
}

/// Greedy transfer of sentences; empty outputs stay empty.
pub fn transfer_sentences(model: &Seq2Seq, vocab: &Vocabulary, cfg: &RunConfig, input: &[Sentence]) -> Result<Vec<Sentence>> {
    let outs = model.decode_batch(&ids(vocab, input), &cfg.decode())?;
    Ok(outs.iter().map(|o| vocab.from_ids(o.ids())).collect())
}

/// Transfers a file line by line; blank lines map to blank lines.
pub fn transfer_file(run: &RunDir, stage: &str, d: Direction, input: &Path, output: &Path) -> Result<usize> {
    let cfg = run.load_config()?;
    let vocab = run.load_vocab()?;
    let model = crate::checkpoint::load_model(&run.model(stage, d), d, &vocab_hash(&vocab))?;
    let lines = io::read_lines_keep_blank(input)?;
    let present: Vec<Sentence> = lines.iter().flatten().cloned().collect();
    let mut outs = transfer_sentences(&model, &vocab, &cfg, &present)?.into_iter();
    let text: Vec<String> = lines
        .iter()
        .map(|l| match l {
            Some(_) => outs.next().map(|s| s.to_string()).unwrap_or_default(),
            None => String::new(),
        })
        .collect();
    write_lines(output, &text)?;
    log(
        "transfer",
        &[("direction", d.tag().into()), ("lines", text.len().to_string()), ("out", output.display().to_string())],
    );
    Ok(text.len())
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportJson {
    pub acc: f64,
    pub bleu: f64,
    pub g2: f64,
    pub h2: f64,
    pub n_sentences: usize,
    pub config_hash: String,
}

fn write_report(run: &RunDir, name: &str, rep: &EvalReport, config_hash: &str) -> Result<()> {
    let j = ReportJson {
        acc: rep.acc,
        bleu: rep.bleu,
        g2: rep.g2,
        h2: rep.h2,
        n_sentences: rep.n_sentences,
        config_hash: config_hash.into(),
    };
    write_atomic(&run.report(&format!("{name}.json")), serde_json::to_string_pretty(&j)?.as_bytes())?;
    write_lines(
        &run.report(&format!("{name}.tsv")),
        rep.records
            .iter()
            .map(|r| format!("{}\t{}\t{}\t{}", r.input, r.output, r.p_target, r.best_ref_bleu)),
    )
}

/// Scores line-aligned outputs against reference files with the run's
/// classifier.
pub fn evaluate_files(
    run: &RunDir,
    inputs: &Path,
    outputs: &Path,
    references: &[PathBuf],
    target: Style,
    name: &str,
) -> Result<EvalReport> {
    let cfg = run.load_config()?;
    let vocab = run.load_vocab()?;
    let clf = load_classifier(&run.classifier(), &vocab_hash(&vocab))?;
    let ins = read_sentences(inputs)?;
    let outs: Vec<Sentence> = io::read_lines_keep_blank(outputs)?
        .into_iter()
        .map(Option::unwrap_or_default)
        .collect();
    let mut refs: Vec<Vec<Sentence>> = vec![Vec::new(); ins.len()];
    for p in references {
        let r = read_sentences(p)?;
        if r.len() != ins.len() {
            return Err(dualstyle_core::Error::LengthMismatch { left: ins.len(), right: r.len() }.into());
        }
        for (slot, s) in refs.iter_mut().zip(r) {
            slot.push(s);
        }
    }
    let rep = eval_outputs(&clf, target, &ins, &outs, &ids(&vocab, &outs), &refs)?;
    write_report(run, name, &rep, &cfg.hash()?)?;
    Ok(rep)
}

/// Transfers a corpus split in both directions with the `stage` models and
/// writes one report per direction.
pub fn evaluate_split(run: &RunDir, stage: &str, split: Split) -> Result<[EvalReport; 2]> {
    let cfg = run.load_config()?;
    let vocab = run.load_vocab()?;
    let vh = vocab_hash(&vocab);
    let clf = load_classifier(&run.classifier(), &vh)?;
    let models = run.load_models(stage, &vh)?;
    let c = corpus(&cfg)?;
    let hash = cfg.hash()?;
    let mut reports = Vec::new();
    for d in Direction::BOTH {
        let side = c.side(d.input_style());
        let inputs = side.split(split);
        let outs = transfer_sentences(models.get(d), &vocab, &cfg, inputs)?;
        let rep = eval_outputs(&clf, d.output_style(), inputs, &outs, &ids(&vocab, &outs), side.refs(split))?;
        let name = format!("{}.{}.{}", split.name(), stage, if d == Direction::XToY { "x2y" } else { "y2x" });
        write_report(run, &name, &rep, &hash)?;
        write_lines(&run.report(&format!("{name}.out.txt")), &outs)?;
        log(
            "evaluate",
            &[
                ("direction", d.tag().into()),
                ("split", split.name().into()),
                ("acc", format!("{:.2}", rep.acc)),
                ("bleu", format!("{:.2}", rep.bleu)),
                ("g2", format!("{:.2}", rep.g2)),
                ("h2", format!("{:.2}", rep.h2)),
            ],
        );
        reports.push(rep);
    }
    let [a, b]: [EvalReport; 2] = reports.try_into().expect("two directions");
    Ok([a, b])
}
