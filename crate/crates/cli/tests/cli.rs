use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dmguide_cli::pipeline::{prepare, rl_train_examples, VARIANTS};
use dmguide_cli::RunConfig;
use dmguide_core::dmpolicy::{train_ppo, Policy, PpoConfig};

const SMALL: [&str; 4] = [
    "synth.n_episodes=800",
    "ppo.iterations=6",
    "features.dim=16384",
    "player.train.epochs=5",
];

fn dmguide(dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dmguide"));
    cmd.arg("--work-dir").arg(dir);
    for s in SMALL {
        cmd.args(["--set", s]);
    }
    cmd.args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = dmguide(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

const STAGES: [&[&str]; 15] = [
    &["synth-gen"],
    &["parse"],
    &["build-episodes"],
    &["train-idm"],
    &["pseudo-label"],
    &["mine-intents"],
    &["train-intent-gen"],
    &["train-player"],
    &["train-dm", "--variant", "random"],
    &["train-dm", "--variant", "human"],
    &["train-dm", "--variant", "idm"],
    &["train-dm", "--variant", "mined"],
    &["train-dm", "--variant", "gen"],
    &["train-dm-rl", "--variant", "mined"],
    &["train-dm-rl", "--variant", "gen"],
];

fn run_all(dir: &Path) {
    for stage in STAGES {
        ok(dir, stage);
    }
    ok(dir, &["evaluate"]);
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn missing_artifact_names_producer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dmguide(dir.path(), &["train-dm-rl", "--variant", "mined"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train-player"), "{err}");

    let out = dmguide(dir.path(), &["build-episodes"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse"));
}

#[test]
fn bad_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for bad in ["features.dim=1000", "no_such.key=1", "seed"] {
        let out = dmguide(dir.path(), &["--set", bad, "synth-gen"]);
        assert_eq!(out.status.code(), Some(1), "{bad}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn stages_are_reproducible_and_report_every_variant() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_all(a.path());
    run_all(b.path());
    let fa = files(a.path());
    let fb = files(b.path());
    assert_eq!(fa.iter().map(|f| &f.0).collect::<Vec<_>>(), fb.iter().map(|f| &f.0).collect::<Vec<_>>());
    for ((name, x), (_, y)) in fa.iter().zip(&fb) {
        assert!(x == y, "{name} differs between runs");
    }

    let report = fs::read_to_string(a.path().join("report.csv")).unwrap();
    assert!(report.starts_with('#'));
    let rows: Vec<&str> = report.lines().skip(2).collect();
    assert_eq!(rows.len(), VARIANTS.len());
    for v in VARIANTS {
        assert!(rows.iter().any(|r| r.starts_with(&format!("{v},"))), "{v} missing");
    }

    // A rerun of one stage rewrites the same bytes.
    let before = fs::read(a.path().join("idm.model")).unwrap();
    ok(a.path(), &["train-idm"]);
    assert_eq!(before, fs::read(a.path().join("idm.model")).unwrap());

    // A different seed changes the corpus.
    let c = tempfile::tempdir().unwrap();
    ok(c.path(), &["--seed", "1", "synth-gen"]);
    assert_ne!(
        fs::read(a.path().join("posts.jsonl")).unwrap(),
        fs::read(c.path().join("posts.jsonl")).unwrap()
    );
}

#[test]
fn matrix_writes_one_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["matrix", "--seeds", "2"]);
    let csv = fs::read_to_string(dir.path().join("matrix.csv")).unwrap();
    assert_eq!(csv.lines().skip(2).count(), VARIANTS.len());
    let runs = fs::read_to_string(dir.path().join("matrix_runs.csv")).unwrap();
    assert_eq!(runs.lines().skip(2).count(), 2 * VARIANTS.len());
    assert!(fs::read_to_string(dir.path().join("matrix.txt")).unwrap().contains("rl-gen-intent"));
}

fn moving_average(xs: &[f64], w: usize) -> Vec<f64> {
    xs.windows(w).map(|s| s.iter().sum::<f64>() / w as f64).collect()
}

/// Starts from an untrained policy so the batch mean tracks learning rather
/// than sampling noise around a plateau.
#[test]
fn training_reward_rises_without_noise() {
    let mut cfg = RunConfig::default();
    cfg.synth.n_episodes = 1500;
    cfg.synth.eta = 0.0;
    let prep = prepare(&cfg).unwrap();
    let ppo = PpoConfig {
        iterations: 15,
        batch_size: 256,
        ..cfg.ppo.clone()
    };
    for mined in [true, false] {
        let fresh = Policy::new(cfg.features.dim, true, cfg.policy.temperature).unwrap();
        let (_, log) = train_ppo(fresh, &rl_train_examples(&prep, mined), &prep.space, &prep.pm_reward, &prep.i2a, &ppo).unwrap();
        let rewards: Vec<f64> = log.iter().map(|r| r.mean_reward).collect();
        assert!(rewards.iter().all(|r| (0.0..=1.0).contains(r)));
        let ma = moving_average(&rewards, 5);
        for w in ma.windows(2) {
            assert!(w[1] >= w[0], "mined={mined}: moving average fell {w:?} in {rewards:?}");
        }
        assert!(rewards.last() > rewards.first());
    }
}
