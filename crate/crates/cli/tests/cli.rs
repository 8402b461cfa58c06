use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn vgs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vgs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = vgs(args);
    assert!(
        out.status.success(),
        "vgs {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn tiny_spec(dir: &Path) -> PathBuf {
    let path = dir.join("spec.json");
    let spec = json!({
        "n_concepts": 4,
        "n_images": 24,
        "captions_per_image": 2,
        "image_dim": 6,
        "val_images": 6,
        "test_images": 6,
        "seed": 5
    });
    std::fs::write(&path, spec.to_string()).unwrap();
    path
}

fn tiny_run_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.json");
    let config = json!({
        "seed": 3,
        "model": {
            "image_dim": 6,
            "embed_dim": 8,
            "gru_hidden": 8,
            "gru_layers": 2,
            "attention_after_layers": [1, 2],
            "conv_channels": 8
        },
        "train": { "epochs": 2, "batch_size": 4, "learning_rate": 0.002 },
        "xlingual": { "n_trials": 3, "pool": 4, "max_pivots": 6 }
    });
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

struct Corpus {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Corpus {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("corpus");
        let spec = tiny_spec(dir.path());
        ok(&["synth", "--spec", s(&spec), "--out", s(&root)]);
        let config = tiny_run_config(dir.path());
        Corpus {
            root,
            config,
            _dir: dir,
        }
    }

    fn manifest(&self, lang: &str, split: &str) -> PathBuf {
        self.root.join(lang).join(format!("{split}.jsonl"))
    }

    fn train(&self, lang: &str, out: &Path, extra: &[&str]) {
        let manifest = self.manifest(lang, "train");
        let mut args = vec![
            "train",
            "--config",
            s(&self.config),
            "--manifest",
            s(&manifest),
            "--out",
            s(out),
        ];
        args.extend_from_slice(extra);
        ok(&args);
    }
}

#[test]
fn synth_writes_both_languages_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["synth", "--spec", s(&spec), "--out", s(&a)]);
    ok(&[
        "synth",
        "--spec",
        s(&spec),
        "--out",
        s(&b),
        "--threads",
        "1",
    ]);
    for lang in ["en", "jp"] {
        for split in ["train", "val", "test"] {
            assert!(a.join(lang).join(format!("{split}.jsonl")).exists());
            assert!(a.join(lang).join(format!("{split}.images.json")).exists());
        }
    }
    let (mut fa, mut fb) = (files(&a), files(&b));
    let ra: Value =
        serde_json::from_slice(&fa.remove(Path::new("resolved_config.json")).unwrap()).unwrap();
    fb.remove(Path::new("resolved_config.json"));
    assert_eq!(fa, fb);
    assert_eq!(ra["seed"], 5);
    assert_eq!(ra["command"], "synth");
}

#[test]
fn invalid_spec_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    std::fs::write(&spec, r#"{"n_concepts": 1}"#).unwrap();
    let out = vgs(&[
        "synth",
        "--spec",
        s(&spec),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_concepts"));
}

#[test]
fn usage_and_missing_inputs() {
    let out = vgs(&["train", "--out", "/tmp/never-used-vgs"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest"));
    assert_eq!(vgs(&["no-such-command"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = vgs(&[
        "eval",
        "--checkpoint",
        s(&dir.path().join("missing.vgsc")),
        "--manifest",
        s(&dir.path().join("missing.jsonl")),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_eval_and_reproduce_from_resolved_config() {
    let c = Corpus::new();
    let run = c.root.parent().unwrap().join("run_en");
    let val = c.manifest("en", "val");
    c.train("en", &run, &["--val-manifest", s(&val), "--threads", "1"]);
    for f in [
        "model.vgsc",
        "optimizer.vgsc",
        "train_log.jsonl",
        "resolved_config.json",
        "train_images.json",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let log = std::fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert!(first["val_r_at_10"].is_number());

    let eval_out = run.join("eval");
    let test = c.manifest("en", "test");
    ok(&[
        "eval",
        "--checkpoint",
        s(&run.join("model.vgsc")),
        "--manifest",
        s(&test),
        "--out",
        s(&eval_out),
    ]);
    let csv = std::fs::read_to_string(eval_out.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("direction,R@1,R@5,R@10,median_rank\nspeech->image,"));
    let metrics: Value =
        serde_json::from_str(&std::fs::read_to_string(eval_out.join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["ranks"].as_array().unwrap().len(), 12);

    let again = c.root.parent().unwrap().join("run_again");
    ok(&[
        "train",
        "--config",
        s(&run.join("resolved_config.json")),
        "--out",
        s(&again),
    ]);
    assert_eq!(
        std::fs::read(run.join("model.vgsc")).unwrap(),
        std::fs::read(again.join("model.vgsc")).unwrap()
    );
}

#[test]
fn resume_matches_uninterrupted_run() {
    let c = Corpus::new();
    let parent = c.root.parent().unwrap();
    let (full, part) = (parent.join("full"), parent.join("part"));
    c.train("en", &full, &["--epochs", "3", "--threads", "1"]);
    c.train("en", &part, &["--epochs", "1", "--threads", "1"]);
    c.train(
        "en",
        &part,
        &["--epochs", "3", "--threads", "1", "--resume"],
    );
    for f in ["model.vgsc", "optimizer.vgsc"] {
        assert_eq!(
            std::fs::read(full.join(f)).unwrap(),
            std::fs::read(part.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(
        std::fs::read_to_string(part.join("train_log.jsonl"))
            .unwrap()
            .lines()
            .count(),
        3
    );
}

#[test]
fn analyze_and_export_attention_schemas() {
    let c = Corpus::new();
    let run = c.root.parent().unwrap().join("run");
    c.train("jp", &run, &[]);
    let ckpt = run.join("model.vgsc");
    let (test, train) = (c.manifest("jp", "test"), c.manifest("jp", "train"));
    let out = run.join("analysis");
    let args = [
        "analyze",
        "--checkpoint",
        s(&ckpt),
        "--manifest",
        s(&test),
        "--reference-manifest",
        s(&train),
        "--out",
        s(&out),
        "--rel-threshold",
        "0.3",
    ];
    ok(&args);
    let fig3 = std::fs::read_to_string(out.join("fig3.csv")).unwrap();
    assert!(fig3.starts_with("upos,observed_pct,baseline_pct\n"));
    assert_eq!(fig3.lines().count(), 13);
    let t2 = std::fs::read_to_string(out.join("table2.csv")).unwrap();
    assert!(t2.starts_with("word,gloss,peak_freq_pct,ref_freq_pct\n"));
    let t3 = std::fs::read_to_string(out.join("table3.csv")).unwrap();
    assert!(t3.starts_with("Beginning,MiddleBeg,MiddleEnd,End\n"));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["observed"]["percentages"]["NOUN"].is_number());
    assert!(out.join("resolved_config.json").exists());

    let exp = run.join("export");
    ok(&[
        "export-attention",
        "--checkpoint",
        s(&ckpt),
        "--manifest",
        s(&test),
        "--out",
        s(&exp),
    ]);
    let att: Value =
        serde_json::from_str(&std::fs::read_to_string(exp.join("attention.json")).unwrap())
            .unwrap();
    let items = att.as_array().unwrap();
    assert_eq!(items.len(), 12);
    assert!(items[0]["alpha"].is_array() && items[0]["peaks"].is_array());
    assert_eq!(items[0]["layer"], 2);
}

#[test]
fn xlingual_reports_both_directions() {
    let c = Corpus::new();
    let parent = c.root.parent().unwrap();
    let (en, jp) = (parent.join("en"), parent.join("jp"));
    c.train("en", &en, &["--half", "first"]);
    c.train("jp", &jp, &["--half", "second"]);
    let en_imgs: Vec<String> =
        serde_json::from_slice(&std::fs::read(en.join("train_images.json")).unwrap()).unwrap();
    let jp_imgs: Vec<String> =
        serde_json::from_slice(&std::fs::read(jp.join("train_images.json")).unwrap()).unwrap();
    assert_eq!(en_imgs.len() + jp_imgs.len(), 12);
    assert!(en_imgs.iter().all(|i| !jp_imgs.contains(i)));

    let run = |out: &Path, pivots: &Path| {
        vgs(&[
            "xlingual",
            "--config",
            s(&c.config),
            "--src-checkpoint",
            s(&en.join("model.vgsc")),
            "--tgt-checkpoint",
            s(&jp.join("model.vgsc")),
            "--src-manifest",
            s(&c.manifest("en", "test")),
            "--tgt-manifest",
            s(&c.manifest("jp", "test")),
            "--pivot-manifest",
            s(pivots),
            "--out",
            s(out),
            "--dump-matrices",
        ])
    };
    let (a, b) = (parent.join("x1"), parent.join("x2"));
    let val = c.manifest("en", "val");
    assert!(run(&a, &val).status.success());
    assert!(run(&b, &val).status.success());
    let csv = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("en->jp,") && lines[2].starts_with("jp->en,"));
    assert_eq!(csv, std::fs::read_to_string(b.join("metrics.csv")).unwrap());
    assert!(a
        .join("trials")
        .join("en_to_jp")
        .join("trial_2.vgsf")
        .exists());

    // Pivots drawn from a model's training images are rejected.
    let bad = run(&parent.join("x3"), &c.manifest("en", "train"));
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("seen in training"));
}
