use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use corpus_eta::corpus::{write_times, Corpus};
use corpus_eta::harness::{synth_corpus, SynthSpec};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_corpus-eta"));
    cmd.env_remove("CORPUS_ETA_CONFIG");
    cmd
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().unwrap();
    (
        status.code().unwrap_or(-1),
        String::from_utf8_lossy(&stdout).into_owned(),
        String::from_utf8_lossy(&stderr).into_owned(),
    )
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    corpus: Corpus,
}

impl Fixture {
    fn new(clips: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let corpus = synth_corpus(
            &SynthSpec {
                num_clips: clips,
                ..SynthSpec::default()
            },
            5,
        )
        .unwrap();
        corpus.save_features(&root.join("features.csv")).unwrap();
        corpus.save_tasks(&root.join("tasks.csv")).unwrap();
        corpus.save_times(&root.join("times.csv")).unwrap();
        Self { _dir: dir, root, corpus }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Times CSV holding the first `n` tasks' measurements.
    fn partial(&self, n: usize) -> PathBuf {
        let path = self.path(&format!("partial{n}.csv"));
        let mut f = fs::File::create(&path).unwrap();
        write_times(&mut f, &self.corpus.times().unwrap()[..n]).unwrap();
        path
    }
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bp_at_zero_completion_is_a_validation_error() {
    let fx = Fixture::new(12);
    let (code, _, err) = run(bin().args([
        "predict",
        "--system",
        "BP",
        "--features",
        arg(&fx.path("features.csv")),
        "--tasks",
        arg(&fx.path("tasks.csv")),
        "--times",
        arg(&fx.partial(0)),
    ]));
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("BP undefined at c=0"), "{err}");
}

#[test]
fn cascade_uses_cxp_at_four_percent() {
    let fx = Fixture::new(25);
    assert_eq!(fx.corpus.len(), 300);
    let out = fx.path("pred.csv");
    let (code, stdout, err) = run(bin().args([
        "predict",
        "--cascade",
        "--features",
        arg(&fx.path("features.csv")),
        "--tasks",
        arg(&fx.path("tasks.csv")),
        "--times",
        arg(&fx.partial(12)),
        "--out",
        arg(&out),
    ]));
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("system: CXP"), "{stdout}");
    let rows = fs::read_to_string(&out).unwrap();
    assert_eq!(rows.lines().count(), 1 + 300 - 12);
    assert!(rows.starts_with("task_id,predicted_seconds\n"));
}

#[test]
fn cascade_at_zero_needs_a_saved_model() {
    let fx = Fixture::new(25);
    let (features, tasks) = (fx.path("features.csv"), fx.path("tasks.csv"));
    let base = ["predict", "--features", arg(&features), "--tasks", arg(&tasks)];
    let empty = fx.partial(0);
    let (code, _, err) = run(bin().args(base).args(["--cascade", "--times", arg(&empty)]));
    assert_eq!(code, 1);
    assert!(err.contains("GXP"), "{err}");

    let model = fx.path("model.json");
    let (code, stdout, err) = run(bin().args(base).args([
        "--system",
        "xp",
        "--times",
        arg(&fx.partial(150)),
        "--save-model",
        arg(&model),
    ]));
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("system: XP"));
    let (code, stdout, err) = run(bin().args(base).args(["--cascade", "--times", arg(&empty), "--model", arg(&model)]));
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("system: GXP"), "{stdout}");
}

#[test]
fn simulate_writes_one_row_per_system_and_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");
    let long = dir.path().join("long.csv");
    let (code, stdout, err) = run(bin().args([
        "--jobs",
        "1",
        "simulate",
        "--synthetic",
        "--synthetic-clips",
        "30",
        "--systems",
        "BP,CP,XP,CXP",
        "--realisations",
        "2",
        "--c-step",
        "0.25",
        "--k",
        "3",
        "--out",
        arg(&out),
        "--long-out",
        arg(&long),
    ]));
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("SAPE"));
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 3);
    assert_eq!(fs::read_to_string(&long).unwrap().lines().count(), 1 + 4 * 2 * 3);

    let (code, table, _) = run(bin().args(["report", "--input", arg(&out), "--at", "0.5"]));
    assert_eq!(code, 0);
    assert!(table.contains("@50%") && !table.contains("@25%"), "{table}");

    let json = dir.path().join("report.json");
    let (code, _, err) = run(bin().args([
        "simulate",
        "--synthetic",
        "--synthetic-clips",
        "30",
        "--systems",
        "BP",
        "--realisations",
        "1",
        "--c-step",
        "0.5",
        "--k",
        "3",
        "--format",
        "json",
        "--out",
        arg(&json),
    ]));
    assert_eq!(code, 0, "{err}");
    assert!(fs::read_to_string(&json).unwrap().contains("\"rows\""));
}

#[test]
fn usage_errors_exit_64_and_help_exits_0() {
    assert_eq!(run(bin().arg("frobnicate")).0, 64);
    assert_eq!(run(bin().args(["simulate", "--no-such-flag"])).0, 64);
    assert_eq!(run(bin().arg("predict")).0, 64);
    for sub in ["ingest", "analyze", "cluster", "encode", "simulate", "predict", "report"] {
        let (code, stdout, _) = run(bin().args([sub, "--help"]));
        assert_eq!(code, 0);
        assert!(stdout.contains("Usage"), "{sub}");
    }
}

#[test]
fn config_keys_are_checked_and_env_fallback_applies() {
    let fx = Fixture::new(12);
    let bad = fx.path("bad.toml");
    fs::write(&bad, "[clustering]\nkay = 3\n").unwrap();
    let (code, _, err) = run(bin().args(["--config", arg(&bad), "cluster", "--features", arg(&fx.path("features.csv"))]));
    assert_eq!(code, 1);
    assert!(err.contains("kay"), "{err}");

    let good = fx.path("good.toml");
    fs::write(
        &good,
        format!("[clustering]\nk = 3\n\n[paths]\nfeatures = {:?}\n", arg(&fx.path("features.csv"))),
    )
    .unwrap();
    let (code, stdout, err) = run(bin().env("CORPUS_ETA_CONFIG", &good).arg("cluster"));
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("clusters: 3"), "{stdout}");
}

#[test]
fn ingest_and_cluster_write_normalised_files() {
    let fx = Fixture::new(12);
    let norm = fx.path("norm");
    let (code, stdout, err) = run(bin().args([
        "ingest",
        "--features",
        arg(&fx.path("features.csv")),
        "--times",
        arg(&fx.partial(7)),
        "--out",
        arg(&norm),
    ]));
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("tasks: 144") && stdout.contains("timed tasks: 7"), "{stdout}");
    assert_eq!(fs::read_to_string(norm.join("tasks.csv")).unwrap().lines().count(), 145);

    let clusters = fx.path("clusters.csv");
    let (code, _, err) = run(bin().args([
        "cluster",
        "--features",
        arg(&fx.path("features.csv")),
        "--k",
        "4",
        "--out",
        arg(&clusters),
    ]));
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(&clusters).unwrap();
    assert!(text.starts_with("clip_id,cluster\n"));
    assert_eq!(text.lines().count(), 13);

    let missing = fx.path("nope.csv");
    let (code, _, _) = run(bin().args(["ingest", "--features", arg(&missing)]));
    assert_eq!(code, 2);
}

#[test]
fn analyze_appends_a_feature_row() {
    let dir = tempfile::tempdir().unwrap();
    let yuv = dir.path().join("gray.yuv");
    fs::write(&yuv, vec![128u8; 64 * 32 * 3 / 2 * 2]).unwrap();
    let features = dir.path().join("features.csv");
    let args = |id: &str| {
        [
            "analyze",
            "--input",
            arg(&yuv),
            "--width",
            "64",
            "--height",
            "32",
            "--frames",
            "2",
            "--clip-id",
            id,
            "--out",
            arg(&features),
        ]
        .map(str::to_owned)
    };
    let (code, stdout, err) = run(bin().args(args("a")));
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("E=0 h=0 luma=128"), "{stdout}");
    assert_eq!(run(bin().args(args("b"))).0, 0);
    assert_eq!(run(bin().args(args("b"))).0, 1);
    let text = fs::read_to_string(&features).unwrap();
    assert_eq!(text.lines().count(), 3);

    let (code, _, _) = run(bin().args([
        "analyze", "--input", arg(&yuv), "--width", "64", "--height", "32", "--frames", "3",
    ]));
    assert_eq!(code, 1);
}

#[test]
fn encode_records_times_and_resumes() {
    let fx = Fixture::new(1);
    let inputs = fx.path("in");
    fs::create_dir_all(&inputs).unwrap();
    fs::write(inputs.join(format!("{}.yuv", fx.corpus.clips()[0].clip_id)), b"x").unwrap();
    let out = fx.path("measured.csv");
    let (features, scratch) = (fx.path("features.csv"), fx.path("scratch"));
    let base = [
        "encode",
        "--features",
        arg(&features),
        "--template",
        "sleep 0.01",
        "--input-dir",
        arg(&inputs),
        "--scratch-dir",
        arg(&scratch),
        "--out",
        arg(&out),
    ];
    let (code, stdout, err) = run(bin().args(base));
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("recorded: 12"), "{stdout}");
    let (code, stdout, _) = run(bin().args(base).arg("--resume"));
    assert_eq!(code, 0);
    assert!(stdout.contains("recorded: 0") && stdout.contains("skipped: 12"), "{stdout}");
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 13);

    let (code, _, err) = run(bin().args([
        "encode",
        "--features",
        arg(&fx.path("features.csv")),
        "--template",
        "false",
        "--input-dir",
        arg(&inputs),
        "--scratch-dir",
        arg(&fx.path("scratch")),
        "--out",
        arg(&fx.path("failed.csv")),
        "--fail-fast",
    ]));
    assert_eq!(code, 2);
    assert!(err.contains("failed"), "{err}");
}
