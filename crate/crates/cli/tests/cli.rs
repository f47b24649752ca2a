use std::fs;
use std::path::Path;
use std::sync::Arc;

use posecpr_cli::{run, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION};
use posecpr_core::data::load_manifest;
use posecpr_core::gateway::{MockScript, MockServer, ScriptEntry};

fn cpr(args: &[&str]) -> i32 {
    run(std::iter::once("cpr").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_synth(dir: &Path) {
    let code = cpr(&[
        "synth", "--out", p(dir), "--gallery-size", "64", "--train-pairs", "48", "--test-pairs", "20", "--dim", "16",
        "--raw-dim", "256",
    ]);
    assert_eq!(code, EXIT_OK);
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(cpr(&["--help"]), EXIT_OK);
    assert_eq!(cpr(&["train", "--help"]), EXIT_OK);
    assert_eq!(cpr(&["--version"]), EXIT_OK);
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(cpr(&["eval", "--frobnicate"]), EXIT_USAGE);
    assert_eq!(cpr(&["no-such-command"]), EXIT_USAGE);
    assert_eq!(cpr(&[]), EXIT_USAGE);
}

#[test]
fn missing_inputs_and_bad_config_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    assert_eq!(cpr(&["train", "--manifest", p(&missing), "--store", p(&missing)]), EXIT_VALIDATION);
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[train]\nlamda = 3.0\n").unwrap();
    assert_eq!(cpr(&["--config", p(&cfg), "stats", "--corpus", "a=b"]), EXIT_VALIDATION);
    small_synth(&dir.path().join("s"));
    let s = dir.path().join("s");
    let code = cpr(&[
        "train", "--manifest", p(&s.join("manifest.jsonl")), "--store", p(&s.join("store.cpre")), "--omega", "1.5",
        "--out", p(&dir.path().join("t")),
    ]);
    assert_eq!(code, EXIT_VALIDATION);
}

#[test]
fn eval_on_the_oracle_checkpoint_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    small_synth(&s);
    let out = dir.path().join("eval");
    let code = cpr(&[
        "eval", "--manifest", p(&s.join("manifest.jsonl")), "--store", p(&s.join("store.cpre")), "--checkpoint",
        p(&s.join("oracle.ckpt")), "--gallery", p(&s.join("gallery.txt")), "--ks", "1,5,10", "--out", p(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let table = fs::read_to_string(out.join("report.txt")).unwrap();
    for k in ["R@1", "R@5", "R@10"] {
        let line = table.lines().find(|l| l.starts_with(&format!("{k} "))).unwrap();
        assert!(line.ends_with("100.00"), "{line}");
    }
    assert!(fs::read_to_string(out.join("report.jsonl")).unwrap().lines().count() > 20);
    assert!(out.join("config.snapshot.toml").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    small_synth(&s);
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "manifest = {:?}\nstore = {:?}\n[train]\nepochs = 2\nbatch_size = 16\nlearning_rate = 0.01\nraw_dim = 256\n",
            s.join("manifest.jsonl"),
            s.join("store.cpre")
        ),
    )
    .unwrap();
    let curve = |out: &Path| fs::read_to_string(out.join("loss_curve.tsv")).unwrap().lines().count();
    let a = dir.path().join("a");
    assert_eq!(cpr(&["--config", p(&cfg), "train", "--out", p(&a)]), EXIT_OK);
    assert_eq!(curve(&a), 2);
    let b = dir.path().join("b");
    assert_eq!(cpr(&["--config", p(&cfg), "train", "--epochs", "3", "--out", p(&b)]), EXIT_OK);
    assert_eq!(curve(&b), 3);
    assert!(b.join("model.ckpt").exists());
}

fn annotate_run(fixture: &Path, out: &Path) -> i32 {
    let script = Arc::new(MockScript::from_file(&fixture.join("script.jsonl")).unwrap());
    let server = MockServer::start(script, "127.0.0.1:0").unwrap();
    cpr(&[
        "annotate", "--pairs", p(&fixture.join("pairs.tsv")), "--images", p(&fixture.join("images.tsv")),
        "--endpoint", &server.url(), "--out", p(out),
    ])
}

#[test]
fn annotate_against_the_mock_writes_120_descriptions() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fixture");
    assert_eq!(cpr(&["fixture", "--out", p(&fx)]), EXIT_OK);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(annotate_run(&fx, &a), EXIT_OK);
    let manifest = load_manifest(&a.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.records.len(), 10);
    assert_eq!(manifest.records.iter().map(|r| r.description_count()).sum::<usize>(), 120);
    assert!(fs::read_to_string(a.join("drops.tsv")).unwrap().starts_with("# dropped 0 of 10 pairs"));

    // identical inputs give identical outputs
    assert_eq!(annotate_run(&fx, &b), EXIT_OK);
    for name in ["manifest.jsonl", "manifest.images.tsv", "drops.tsv", "requests.jsonl"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn annotate_without_an_endpoint_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fixture");
    assert_eq!(cpr(&["fixture", "--out", p(&fx), "--pairs", "1"]), EXIT_OK);
    if std::env::var_os(posecpr_core::gateway::ENV_URL).is_none() {
        let code = cpr(&["annotate", "--pairs", p(&fx.join("pairs.tsv")), "--images", p(&fx.join("images.tsv"))]);
        assert_eq!(code, EXIT_VALIDATION);
    }
}

#[test]
fn filter_env_partitions_and_audits() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.tsv");
    fs::write(&corpus, "a\traise your arm toward the lamp.\nb\traise your left arm.\n").unwrap();
    let script = Arc::new(MockScript::new(vec![
        ScriptEntry::reply("Yes.").matching("Instruction: raise your arm toward"),
        ScriptEntry::reply("No."),
    ]));
    let server = MockServer::start(script, "127.0.0.1:0").unwrap();
    let out = dir.path().join("out");
    let code = cpr(&["filter-env", "--corpus", p(&corpus), "--endpoint", &server.url(), "--out", p(&out)]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(fs::read_to_string(out.join("kept.tsv")).unwrap(), "b\traise your left arm.\n");
    assert_eq!(fs::read_to_string(out.join("removed.tsv")).unwrap(), "a\traise your arm toward the lamp.\n");
    assert_eq!(fs::read_to_string(out.join("audit.jsonl")).unwrap().lines().count(), 2);
}

#[test]
fn pairs_applies_stride_and_distance_gate() {
    let dir = tempfile::tempdir().unwrap();
    let kp = dir.path().join("kp.jsonl");
    let mut lines = String::new();
    for i in 0..31u64 {
        let mut joints: Vec<[f64; 3]> = (0..17).map(|j| [j as f64, 2.0 * j as f64, 1.0]).collect();
        joints[5] = [0.0, 0.0, 1.0];
        joints[6] = [2.0, 0.0, 1.0];
        joints[11] = [0.0, 4.0, 1.0];
        joints[12] = [2.0, 4.0, 1.0];
        // frame 15 moves one wrist by 8.5 torso lengths: distance 0.5
        if i >= 15 {
            joints[9][0] += 4.0 * 8.5;
        }
        lines.push_str(&format!("{{\"sequence\":\"s1\",\"frame_index\":{i},\"joints\":{joints:?}}}\n"));
    }
    fs::write(&kp, lines).unwrap();
    let out = dir.path().join("out");
    assert_eq!(cpr(&["pairs", "--keypoints", p(&kp), "--stride", "15", "--range", "0.1:2.0", "--out", p(&out)]), EXIT_OK);
    let cands = fs::read_to_string(out.join("candidates.jsonl")).unwrap();
    assert_eq!(cands.lines().count(), 1, "{cands}");
    assert!(cands.starts_with("{\"sequence\":\"s1\",\"frame_i\":0,\"frame_j\":15,"));
    assert_eq!(fs::read_to_string(out.join("pairs.tsv")).unwrap().lines().filter(|l| !l.starts_with('#')).count(), 1);
    assert_eq!(cpr(&["pairs", "--keypoints", p(&kp), "--range", "2:1", "--out", p(&out)]), EXIT_VALIDATION);
}

#[test]
fn embed_and_stats_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let text = dir.path().join("t.txt");
    fs::write(&text, "raise your arm\nbend the knee\n").unwrap();
    let out = dir.path().join("embed");
    assert_eq!(cpr(&["embed", "--input", p(&text), "--raw-dim", "32", "--out", p(&out)]), EXIT_OK);
    let vectors = fs::read_to_string(out.join("vectors.tsv")).unwrap();
    assert_eq!(vectors.lines().count(), 2);
    assert!(vectors.lines().all(|l| l.split('\t').count() == 32));

    let corpus = dir.path().join("c.tsv");
    fs::write(&corpus, "1\traise the arm\n2\traise the knee\n").unwrap();
    let out = dir.path().join("stats");
    let arg = format!("mine={}", p(&corpus));
    assert_eq!(cpr(&["stats", "--corpus", &arg, "--top", "2", "--out", p(&out)]), EXIT_OK);
    let table = fs::read_to_string(out.join("stats.txt")).unwrap();
    assert!(table.contains("raise 2 (50.0%)"), "{table}");
}
