use std::fs;
use std::path::Path;

use dualstyle::checkpoint::file_sha256;
use dualstyle::commands;
use dualstyle::config::RunConfig;
use dualstyle::run::RunDir;
use dualstyle_core::corpus::{Direction, Split};
use dualstyle_core::dualrl::Ablation;

fn tiny(data: &Path) -> Vec<String> {
    [
        format!("data={:?}", data.display().to_string()),
        "synth_vocab_size=60".into(),
        "synth_max_len=8".into(),
        "synth_pair_count=8".into(),
        "synth_train_size=48".into(),
        "synth_dev_size=12".into(),
        "synth_test_size=6".into(),
        "embed_dim=8".into(),
        "hidden_dim=8".into(),
        "cls_embed_dim=8".into(),
        "cls_channels=4".into(),
        "cls_epochs=2".into(),
        "pretrain_epochs=2".into(),
        "pretrain_batch=16".into(),
        "pretrain_lr=0.01".into(),
        "max_dual_epochs=2".into(),
        "dual_batch=16".into(),
        "dual_lr=0.01".into(),
        "patience=5".into(),
    ]
    .into()
}

fn prepare(root: &Path) -> (RunDir, RunConfig) {
    let data = root.join("data");
    let overrides = tiny(&data);
    let cfg = RunConfig::default().with_overrides(&overrides).unwrap();
    commands::synth(&data, &cfg).unwrap();
    let run = RunDir::new(root.join("run"));
    let cfg = commands::open_run(&run, None, &overrides).unwrap();
    commands::pretrain_classifier(&run, &cfg).unwrap();
    commands::make_pseudo(&run, &cfg).unwrap();
    commands::pretrain_models(&run, &cfg).unwrap();
    (run, cfg)
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn full_pipeline_writes_a_complete_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (run, cfg) = prepare(tmp.path());
    for d in Direction::BOTH {
        assert_eq!(fs::read_to_string(run.pseudo(d)).unwrap().lines().count(), 48);
    }
    let cls = file_sha256(&run.classifier()).unwrap();
    let out = commands::train_run(&run, &run, &cfg, true).unwrap();
    assert_eq!(out.classifier_hash, cls);
    assert_eq!(out.epochs, 2);
    let history = fs::read_to_string(run.history()).unwrap();
    assert_eq!(history.lines().count(), 1 + 3);
    for stage in ["pretrained", "best", "last"] {
        for d in Direction::BOTH {
            assert!(run.model(stage, d).exists(), "{stage} {d:?}");
        }
    }
    let reps = commands::evaluate_split(&run, "best", Split::Test).unwrap();
    for r in &reps {
        assert_eq!(r.n_sentences, 6);
        assert!((0.0..=100.0).contains(&r.acc) && (0.0..=100.0).contains(&r.bleu));
    }
    assert!(run.report("test.best.x2y.json").exists());

    // reopening with a different config is refused
    let mut other = tiny(&tmp.path().join("data"));
    other.push("seed=99".into());
    assert!(commands::open_run(&run, None, &other).is_err());
}

#[test]
fn transfer_keeps_line_count_and_blank_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let (run, _) = prepare(tmp.path());
    let input = tmp.path().join("in.txt");
    fs::write(&input, "the food was great\n\nnever heard of these words\n").unwrap();
    let output = tmp.path().join("out.txt");
    let n = commands::transfer_file(&run, "pretrained", Direction::XToY, &input, &output).unwrap();
    assert_eq!(n, 3);
    let lines: Vec<String> = fs::read_to_string(&output).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].is_empty());
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (run, cfg) = prepare(tmp.path());
    let whole = commands::ablate(&run, &cfg, Ablation::RlPlusMle, true).unwrap().0;

    let mut first = cfg.clone();
    first.max_dual_epochs = 1;
    let split = RunDir::new(tmp.path().join("split"));
    split.init_config(&cfg).unwrap();
    commands::train_run(&split, &run, &first, true).unwrap();
    commands::train_run(&split, &run, &cfg, true).unwrap();

    for stage in ["best", "last"] {
        let a = tree_bytes(&whole.checkpoints().join(stage));
        let b = tree_bytes(&split.checkpoints().join(stage));
        assert!(!a.is_empty());
        assert_eq!(a, b, "{stage}");
    }
    assert_eq!(fs::read(whole.history()).unwrap(), fs::read(split.history()).unwrap());
}
