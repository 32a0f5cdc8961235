use std::path::Path;

use airscript::cli;
use airscript::datastore;
use airscript::fusion::borda_fuse;
use airscript::neuralnet::Checkpoint;
use airscript::Error;

fn run(args: &[&str]) -> Result<String, Error> {
    let mut out = Vec::new();
    let mut full = vec!["airscript"];
    full.extend_from_slice(args);
    cli::run(full, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn synth(dir: &Path) -> String {
    let ds = path(dir, "ds.jsonl");
    run(&["synth", "--participants", "3", "--per-digit", "2", "--seed", "7", "--out", &ds]).unwrap();
    ds
}

/// Parses the `rank label score` table printed by `predict`.
fn parse_ranking(text: &str) -> Vec<(usize, f64)> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("rank"))
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            (f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn synth_writes_every_recording() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path());
    let loaded = datastore::load_jsonl(&ds).unwrap();
    assert_eq!(loaded.len(), 3 * 10 * 2);
    assert_eq!(std::fs::read_to_string(&ds).unwrap().lines().count(), 60);
}

#[test]
fn viz_writes_svg_and_png() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path());
    let svg = path(dir.path(), "d.svg");
    let png = path(dir.path(), "d.png");
    run(&["viz", "--in", &ds, "--index", "3", "--out", &svg]).unwrap();
    run(&["viz", "--in", &ds, "--index", "3", "--out", &png, "--size", "64", "--rounding", "per-step"]).unwrap();
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<svg"));
    assert!(std::fs::read(&png).unwrap().starts_with(b"\x89PNG"));
}

#[test]
fn zero_epoch_checkpoint_is_usable() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path());
    let ckpt = path(dir.path(), "g.ckpt");
    run(&["train", "--model", "gru1", "--data", &ds, "--seed", "1", "--epochs", "0", "--out", &ckpt]).unwrap();
    let loaded = Checkpoint::load(&ckpt).unwrap();
    assert!(loaded.loss_history.is_empty());

    let text = run(&["predict", "--ckpt", &ckpt, "--in", &ds, "--index", "0"]).unwrap();
    let ranking = parse_ranking(&text);
    let mut labels: Vec<usize> = ranking.iter().map(|r| r.0).collect();
    labels.sort();
    assert_eq!(labels, (0..10).collect::<Vec<_>>());
}

#[test]
fn predict_with_three_checkpoints_matches_fusion() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path());
    let mut ckpts = Vec::new();
    for model in ["gru1", "gru2", "cnn"] {
        let c = path(dir.path(), &format!("{model}.ckpt"));
        run(&["train", "--model", model, "--data", &ds, "--seed", "2", "--epochs", "1", "--out", &c]).unwrap();
        ckpts.push(c);
    }
    let text = run(&[
        "predict", "--ckpt", &ckpts[0], "--ckpt", &ckpts[1], "--ckpt", &ckpts[2], "--in", &ds, "--index", "5",
    ])
    .unwrap();
    assert!(text.starts_with("# models: gru1,gru2,cnn"));

    let data = datastore::load_jsonl(&ds).unwrap();
    let preds: Vec<_> = ckpts
        .iter()
        .map(|c| Checkpoint::load(c).unwrap().predict_ranked(&data.recordings[5]).unwrap())
        .collect();
    let fused = borda_fuse(&preds).unwrap();
    let got: Vec<usize> = parse_ranking(&text).iter().map(|r| r.0).collect();
    assert_eq!(got, fused.labels);
}

#[test]
fn errors_carry_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path());
    let out = path(dir.path(), "x.ckpt");
    let code = |args: &[&str]| run(args).unwrap_err().code();

    assert_eq!(code(&["train", "--model", "lstm", "--data", &ds, "--seed", "1", "--out", &out]), "E_USAGE");
    assert_eq!(code(&["viz", "--in", &ds, "--index", "999", "--out", &path(dir.path(), "a.svg")]), "E_DOMAIN");
    assert_eq!(
        code(&["viz", "--in", &path(dir.path(), "missing.jsonl"), "--index", "0", "--out", &out]),
        "E_IO"
    );
    assert_eq!(code(&["eval", "--mode", "dependent", "--data", &ds, "--seed", "1", "--report", &out, "--models", "fusion"]), "E_DOMAIN");

    std::fs::write(&out, b"not a checkpoint").unwrap();
    assert_ne!(code(&["predict", "--ckpt", &out, "--in", &ds, "--index", "0"]), "E_IO");
}
