use std::fs;

use corpus_eta::corpus::{
    load_corpus, load_corpus_with_tasks, read_features, read_times, Corpus, CorpusError, TaskGrid, TimeRecord,
    FEATURES_HEADER,
};
use corpus_eta::harness::{synth_corpus, SynthSpec};

#[test]
fn six_hundred_clips_expand_to_paper_sample_counts() {
    let corpus = synth_corpus(&SynthSpec::default(), 1).unwrap();
    assert_eq!(corpus.len(), 7200);
    let dir = tempfile::tempdir().unwrap();
    let features = dir.path().join("features.csv");
    corpus.save_features(&features).unwrap();
    let grid = TaskGrid {
        encoders: vec!["x264".into(), "x265".into()],
        ..TaskGrid::default()
    };
    assert_eq!(load_corpus(&features, None, &grid).unwrap().len(), 14_400);
}

#[test]
fn save_then_load_is_identity() {
    let spec = SynthSpec {
        num_clips: 25,
        ..SynthSpec::default()
    };
    let corpus = synth_corpus(&spec, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (f, t, s) = (dir.path().join("f.csv"), dir.path().join("t.csv"), dir.path().join("s.csv"));
    corpus.save_features(&f).unwrap();
    corpus.save_tasks(&t).unwrap();
    corpus.save_times(&s).unwrap();
    let back = load_corpus_with_tasks(&f, &t, Some(&s)).unwrap();
    assert_eq!(back.clips(), corpus.clips());
    assert_eq!(back.tasks(), corpus.tasks());
    assert_eq!(back.times(), corpus.times());
    let header = fs::read_to_string(&f).unwrap();
    assert_eq!(header.lines().next().unwrap(), FEATURES_HEADER.join(","));
}

#[test]
fn empty_feature_file_is_an_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.csv");
    fs::write(&f, format!("{}\n", FEATURES_HEADER.join(","))).unwrap();
    let err = load_corpus(&f, None, &TaskGrid::default()).unwrap_err();
    assert_eq!(err.to_string(), "empty corpus");
}

#[test]
fn malformed_rows_report_their_position() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.csv");
    fs::write(
        &f,
        format!(
            "{}\na,1920,1080,30,1,60,1.0,1.0,100,g\nb,1920,oops,30,1,60,1.0,1.0,100,g\n",
            FEATURES_HEADER.join(",")
        ),
    )
    .unwrap();
    match read_features(&f).unwrap_err() {
        CorpusError::Parse { row, .. } => assert_eq!(row, 3),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn duplicates_and_bad_times_are_rejected() {
    let corpus = synth_corpus(
        &SynthSpec {
            num_clips: 2,
            ..SynthSpec::default()
        },
        0,
    )
    .unwrap();
    let mut clips = corpus.clips().to_vec();
    clips.push(clips[0].clone());
    assert!(matches!(
        Corpus::from_grid(clips, &TaskGrid::default(), None),
        Err(CorpusError::Duplicate { .. })
    ));

    let id = corpus.tasks()[0].task_id.clone();
    assert!(TimeRecord::new(id.clone(), 0.0).is_err());
    let twice = vec![TimeRecord::new(id.clone(), 1.0).unwrap(), TimeRecord::new(id, 2.0).unwrap()];
    assert!(corpus.clone().with_times(Some(twice)).is_err());
    let stranger = vec![TimeRecord::new("nope:x264:medium:22", 1.0).unwrap()];
    assert!(corpus.with_times(Some(stranger)).is_err());
}

#[test]
fn partial_times_load() {
    let corpus = synth_corpus(
        &SynthSpec {
            num_clips: 3,
            ..SynthSpec::default()
        },
        0,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (f, s) = (dir.path().join("f.csv"), dir.path().join("s.csv"));
    corpus.save_features(&f).unwrap();
    let mut partial = corpus.times().unwrap()[..5].to_vec();
    partial.reverse();
    let mut w = fs::File::create(&s).unwrap();
    corpus_eta::corpus::write_times(&mut w, &partial).unwrap();
    drop(w);
    assert_eq!(read_times(&s).unwrap(), partial);
    let loaded = load_corpus(&f, Some(&s), &TaskGrid::default()).unwrap();
    assert!(!loaded.is_fully_timed());
    assert_eq!((0..loaded.len()).filter(|&p| loaded.seconds_at(p).is_some()).count(), 5);
}
