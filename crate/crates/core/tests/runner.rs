use std::collections::HashSet;
use std::fs;
use std::path::Path;

use corpus_eta::corpus::{read_times, Corpus, Preset, TaskGrid};
use corpus_eta::harness::{synth_corpus, SynthSpec};
use corpus_eta::runner::{batch_encode, run_encode, BatchOptions, CommandTemplate, RunError};

fn corpus(clips: usize, presets: Vec<Preset>) -> Corpus {
    let spec = SynthSpec {
        num_clips: clips,
        grid: TaskGrid {
            encoders: vec!["x264".into()],
            presets,
            cqps: vec![22],
        },
        ..SynthSpec::default()
    };
    let c = synth_corpus(&spec, 0).unwrap();
    c.with_times(None).unwrap()
}

fn inputs(dir: &Path, corpus: &Corpus) {
    for clip in corpus.clips() {
        fs::write(dir.join(format!("{}.yuv", clip.clip_id)), b"raw").unwrap();
    }
}

fn options(dir: &Path) -> BatchOptions {
    BatchOptions {
        input_dir: dir.to_path_buf(),
        input_extension: "yuv".into(),
        scratch_dir: dir.join("scratch"),
        out: dir.join("times.csv"),
        concurrency: 1,
        fail_fast: false,
        resume: false,
        keep_output: false,
    }
}

#[test]
fn half_second_sleep_is_timed() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(1, vec![Preset::Medium]);
    inputs(dir.path(), &c);
    let template = CommandTemplate::new("sleep 0.5", "x264");
    let input = dir.path().join(format!("{}.yuv", c.clips()[0].clip_id));
    let rec = run_encode(&c.tasks()[0], None, &template, &input, &dir.path().join("s"), false).unwrap();
    assert!((0.4..=0.7).contains(&rec.seconds), "{}", rec.seconds);
    assert_eq!(rec.task_id, c.tasks()[0].task_id);
}

#[test]
fn failures_carry_task_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(1, vec![Preset::Medium]);
    inputs(dir.path(), &c);
    let input = dir.path().join(format!("{}.yuv", c.clips()[0].clip_id));
    let scratch = dir.path().join("s");
    let template = CommandTemplate::new("sh -c 'echo broken >&2; exit 3'", "x264");
    match run_encode(&c.tasks()[0], None, &template, &input, &scratch, false) {
        Err(RunError::NonZeroExit {
            task_id,
            code,
            diagnostic,
        }) => {
            assert_eq!(task_id, c.tasks()[0].task_id);
            assert_eq!(code, Some(3));
            assert!(diagnostic.contains("broken"));
        }
        other => panic!("unexpected {other:?}"),
    }
    let missing = CommandTemplate::new("no-such-encoder-binary {input}", "x264");
    assert!(matches!(
        run_encode(&c.tasks()[0], None, &missing, &input, &scratch, false),
        Err(RunError::MissingBinary(_))
    ));
    let absent = dir.path().join("absent.yuv");
    assert!(matches!(
        run_encode(&c.tasks()[0], None, &template, &absent, &scratch, false),
        Err(RunError::MissingInput(_))
    ));
}

#[test]
fn outputs_are_removed_and_logs_kept() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(1, vec![Preset::Medium]);
    inputs(dir.path(), &c);
    let input = dir.path().join(format!("{}.yuv", c.clips()[0].clip_id));
    let scratch = dir.path().join("s");
    let template = CommandTemplate::new("sh -c 'sleep 0.01; cp \"$0\" \"$1\"; echo done' {input} {output}", "x264");
    run_encode(&c.tasks()[0], None, &template, &input, &scratch, false).unwrap();
    let names: Vec<String> = fs::read_dir(&scratch)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 1, "{names:?}");
    assert!(names[0].ends_with(".log"));
    let log = fs::read_to_string(scratch.join(&names[0])).unwrap();
    assert_eq!(log.trim(), "done");
}

#[test]
fn sequential_batch_runs_in_task_order() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(1, Preset::ALL.to_vec());
    inputs(dir.path(), &c);
    let template = CommandTemplate::new("sleep 0.01", "x264");
    let summary = batch_encode(&c, &template, &options(dir.path())).unwrap();
    let expected: Vec<String> = c.tasks().iter().map(|t| t.task_id.clone()).collect();
    assert_eq!(summary.started, expected);
    let times = read_times(&dir.path().join("times.csv")).unwrap();
    assert_eq!(times.len(), 3);
    assert!(times.iter().all(|t| t.seconds > 0.0));
}

#[test]
fn resume_only_runs_missing_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(1, Preset::ALL.to_vec());
    inputs(dir.path(), &c);
    let marker = dir.path().join("fail-marker");
    fs::write(&marker, b"").unwrap();
    // The veryslow task fails while the marker exists, simulating an interruption.
    let template = CommandTemplate::new(
        format!(
            "sh -c 'if [ {{preset}} = veryslow ] && [ -e {} ]; then exit 1; fi; sleep 0.01'",
            marker.display()
        ),
        "x264",
    );
    let mut opts = options(dir.path());
    let first = batch_encode(&c, &template, &opts).unwrap();
    assert_eq!(first.recorded, 2);
    assert_eq!(first.failures.len(), 1);
    assert!(opts.failure_manifest().exists());

    fs::remove_file(&marker).unwrap();
    opts.resume = true;
    let second = batch_encode(&c, &template, &opts).unwrap();
    assert_eq!(second.started, vec![c.tasks()[2].task_id.clone()]);
    assert_eq!(second.skipped, 2);
    assert!(!opts.failure_manifest().exists());

    let third = batch_encode(&c, &template, &opts).unwrap();
    assert!(third.started.is_empty());

    let times = read_times(&opts.out).unwrap();
    let ids: HashSet<&str> = times.iter().map(|t| t.task_id.as_str()).collect();
    assert_eq!(times.len(), 3);
    assert_eq!(ids.len(), 3);
}

#[test]
fn total_failure_leaves_header_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(2, vec![Preset::Medium]);
    inputs(dir.path(), &c);
    let opts = options(dir.path());
    let summary = batch_encode(&c, &CommandTemplate::new("false", "x264"), &opts).unwrap();
    assert_eq!(summary.failures.len(), 2);
    assert!(read_times(&opts.out).unwrap().is_empty());
    let manifest = fs::read_to_string(opts.failure_manifest()).unwrap();
    assert_eq!(manifest.lines().count(), 3);
    assert!(manifest.starts_with("task_id,exit_code,message\n"));
}

#[test]
fn fail_fast_stops_after_first_failure() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(3, vec![Preset::Medium]);
    inputs(dir.path(), &c);
    let mut opts = options(dir.path());
    opts.fail_fast = true;
    let summary = batch_encode(&c, &CommandTemplate::new("false", "x264"), &opts).unwrap();
    assert_eq!(summary.started.len(), 1);
}
