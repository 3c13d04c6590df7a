//! Corpus domain types, CSV ingestion and the log-time transform.
//!
//! A corpus is a set of clips plus the encode tasks derived from them. Every
//! prediction in this crate happens at task granularity: `N` is always the
//! number of tasks, never the number of clips.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub const FEATURES_HEADER: [&str; 10] = [
    "clip_id",
    "width",
    "height",
    "framerate_num",
    "framerate_den",
    "num_frames",
    "E",
    "h",
    "luma",
    "source_group",
];
pub const TIMES_HEADER: [&str; 2] = ["task_id", "seconds"];
pub const TASKS_HEADER: [&str; 5] = ["task_id", "clip_id", "encoder", "preset", "cqp"];

/// Quantiser values recommended for rate-distortion sweeps.
pub const DEFAULT_CQPS: [u8; 4] = [22, 27, 32, 37];
pub const MAX_CQP: u8 = 51;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: u64,
        message: String,
    },
    #[error("invalid {field}: {message}")]
    Validation { field: &'static str, message: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("duplicate {kind} `{id}`")]
    Duplicate { kind: &'static str, id: String },
    #[error("empty task axis: {0}")]
    EmptyAxis(&'static str),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CorpusError {
    fn validation(field: &'static str, message: impl Into<String>) -> Self {
        Self::Validation {
            field,
            message: message.into(),
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Frames per second as an exact ratio, e.g. `30000/1001`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Framerate {
    pub num: u32,
    pub den: u32,
}

impl Framerate {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(CorpusError::validation(
                "framerate",
                format!("{num}/{den} must be positive"),
            ));
        }
        Ok(Self { num, den })
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }
}

impl fmt::Display for Framerate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Framerate {
    type Err = CorpusError;

    /// Accepts `num/den` or a bare integer.
    fn from_str(s: &str) -> Result<Self> {
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|e| CorpusError::validation("framerate", format!("`{s}`: {e}")))
        };
        match s.split_once('/') {
            Some((n, d)) => Self::new(parse(n)?, parse(d)?),
            None => Self::new(parse(s)?, 1),
        }
    }
}

/// One video segment with its format properties and complexity features.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub clip_id: String,
    pub width: u32,
    pub height: u32,
    pub framerate: Framerate,
    pub num_frames: u32,
    /// Average per-frame spatial DCT energy.
    pub spatial_energy: f64,
    /// Average per-frame temporal DCT energy difference.
    pub temporal_energy: f64,
    /// Average luma sample value.
    pub luma: f64,
    /// Dataset the clip came from; used for held-out splits.
    pub source_group: String,
}

impl Clip {
    pub fn num_pixels(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clip_id.is_empty() {
            return Err(CorpusError::validation("clip_id", "must not be empty"));
        }
        if self.clip_id.contains(':') {
            return Err(CorpusError::validation(
                "clip_id",
                format!("`{}` must not contain ':'", self.clip_id),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CorpusError::validation(
                "width",
                format!("{}x{} must be at least 1x1", self.width, self.height),
            ));
        }
        if self.framerate.num == 0 || self.framerate.den == 0 {
            return Err(CorpusError::validation("framerate", "must be positive"));
        }
        if self.num_frames == 0 {
            return Err(CorpusError::validation("num_frames", "must be at least 1"));
        }
        if !(self.spatial_energy.is_finite() && self.spatial_energy >= 0.0) {
            return Err(CorpusError::validation(
                "E",
                format!("{} must be finite and non-negative", self.spatial_energy),
            ));
        }
        if !(self.temporal_energy.is_finite() && self.temporal_energy >= 0.0) {
            return Err(CorpusError::validation(
                "h",
                format!("{} must be finite and non-negative", self.temporal_energy),
            ));
        }
        if !(0.0..=255.0).contains(&self.luma) {
            return Err(CorpusError::validation(
                "luma",
                format!("{} outside [0, 255]", self.luma),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Ultrafast,
    Medium,
    Veryslow,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Ultrafast, Preset::Medium, Preset::Veryslow];

    /// Ordinal used as a model feature: 0 is the fastest preset.
    pub fn ordinal(self) -> u8 {
        match self {
            Preset::Ultrafast => 0,
            Preset::Medium => 1,
            Preset::Veryslow => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Ultrafast => "ultrafast",
            Preset::Medium => "medium",
            Preset::Veryslow => "veryslow",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ultrafast" => Ok(Preset::Ultrafast),
            "medium" => Ok(Preset::Medium),
            "veryslow" => Ok(Preset::Veryslow),
            other => Err(CorpusError::validation(
                "preset",
                format!("`{other}` is not one of ultrafast, medium, veryslow"),
            )),
        }
    }
}

/// A (clip, encoder, preset, quantiser) tuple whose wall-clock time is measured.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodeTask {
    pub task_id: String,
    pub clip_id: String,
    pub encoder: String,
    pub preset: Preset,
    pub cqp: u8,
}

impl EncodeTask {
    pub fn new(clip_id: &str, encoder: &str, preset: Preset, cqp: u8) -> Self {
        Self {
            task_id: task_id(clip_id, encoder, preset, cqp),
            clip_id: clip_id.to_owned(),
            encoder: encoder.to_owned(),
            preset,
            cqp,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.encoder.is_empty() || self.encoder.contains(':') {
            return Err(CorpusError::validation(
                "encoder",
                format!("`{}` must be non-empty and contain no ':'", self.encoder),
            ));
        }
        if self.cqp > MAX_CQP {
            return Err(CorpusError::validation(
                "cqp",
                format!("{} exceeds {MAX_CQP}", self.cqp),
            ));
        }
        if self.task_id.is_empty() {
            return Err(CorpusError::validation("task_id", "must not be empty"));
        }
        Ok(())
    }
}

/// Composite task identifier `clip_id:encoder:preset:cqp`.
pub fn task_id(clip_id: &str, encoder: &str, preset: Preset, cqp: u8) -> String {
    format!("{clip_id}:{encoder}:{preset}:{cqp}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeRecord {
    pub task_id: String,
    pub seconds: f64,
}

impl TimeRecord {
    pub fn new(task_id: impl Into<String>, seconds: f64) -> Result<Self> {
        let task_id = task_id.into();
        if !(seconds.is_finite() && seconds > 0.0) {
            return Err(CorpusError::validation(
                "seconds",
                format!("{seconds} for task `{task_id}` must be positive"),
            ));
        }
        Ok(Self { task_id, seconds })
    }
}

/// Encoder parameter axes crossed with every clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGrid {
    pub encoders: Vec<String>,
    pub presets: Vec<Preset>,
    pub cqps: Vec<u8>,
}

impl Default for TaskGrid {
    fn default() -> Self {
        Self {
            encoders: vec!["x264".to_owned()],
            presets: Preset::ALL.to_vec(),
            cqps: DEFAULT_CQPS.to_vec(),
        }
    }
}

impl TaskGrid {
    pub fn combos_per_clip(&self) -> usize {
        self.encoders.len() * self.presets.len() * self.cqps.len()
    }
}

/// Cartesian product `clips × encoders × presets × cqps` in that nesting order.
pub fn expand_tasks(
    clips: &[Clip],
    encoders: &[String],
    presets: &[Preset],
    cqps: &[u8],
) -> Result<Vec<EncodeTask>> {
    if clips.is_empty() {
        return Err(CorpusError::EmptyAxis("clips"));
    }
    if encoders.is_empty() {
        return Err(CorpusError::EmptyAxis("encoders"));
    }
    if presets.is_empty() {
        return Err(CorpusError::EmptyAxis("presets"));
    }
    if cqps.is_empty() {
        return Err(CorpusError::EmptyAxis("cqps"));
    }
    let mut tasks = Vec::with_capacity(clips.len() * encoders.len() * presets.len() * cqps.len());
    for clip in clips {
        for encoder in encoders {
            for &preset in presets {
                for &cqp in cqps {
                    tasks.push(EncodeTask::new(&clip.clip_id, encoder, preset, cqp));
                }
            }
        }
    }
    Ok(tasks)
}

/// Natural log of a positive duration.
pub fn to_log_time<T: Scalar>(seconds: T) -> Result<T> {
    if !(seconds.is_finite() && seconds > T::zero()) {
        return Err(CorpusError::Domain(format!(
            "log time undefined for {seconds} seconds"
        )));
    }
    Ok(seconds.ln())
}

pub fn from_log_time<T: Scalar>(y: T) -> T {
    y.exp()
}

/// Validated, immutable set of clips, tasks and (optionally) measured times.
#[derive(Debug, Clone)]
pub struct Corpus {
    clips: Vec<Clip>,
    tasks: Vec<EncodeTask>,
    times: Option<Vec<TimeRecord>>,
    clip_index: HashMap<String, usize>,
    task_index: HashMap<String, usize>,
    // Parallel to `tasks`.
    task_clip: Vec<usize>,
    task_seconds: Vec<Option<f64>>,
}

impl Corpus {
    pub fn new(
        clips: Vec<Clip>,
        tasks: Vec<EncodeTask>,
        times: Option<Vec<TimeRecord>>,
    ) -> Result<Self> {
        if clips.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut clip_index = HashMap::with_capacity(clips.len());
        for (i, clip) in clips.iter().enumerate() {
            clip.validate()?;
            if clip_index.insert(clip.clip_id.clone(), i).is_some() {
                return Err(CorpusError::Duplicate {
                    kind: "clip_id",
                    id: clip.clip_id.clone(),
                });
            }
        }
        if tasks.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut task_index = HashMap::with_capacity(tasks.len());
        let mut combos = HashSet::with_capacity(tasks.len());
        let mut task_clip = Vec::with_capacity(tasks.len());
        for (i, task) in tasks.iter().enumerate() {
            task.validate()?;
            let clip = *clip_index.get(&task.clip_id).ok_or_else(|| {
                CorpusError::validation(
                    "clip_id",
                    format!(
                        "task `{}` references unknown clip `{}`",
                        task.task_id, task.clip_id
                    ),
                )
            })?;
            task_clip.push(clip);
            if task_index.insert(task.task_id.clone(), i).is_some() {
                return Err(CorpusError::Duplicate {
                    kind: "task_id",
                    id: task.task_id.clone(),
                });
            }
            if !combos.insert((&task.clip_id, &task.encoder, task.preset, task.cqp)) {
                return Err(CorpusError::Duplicate {
                    kind: "task parameters",
                    id: task.task_id.clone(),
                });
            }
        }
        let mut task_seconds = vec![None; tasks.len()];
        if let Some(times) = &times {
            for rec in times {
                if !(rec.seconds.is_finite() && rec.seconds > 0.0) {
                    return Err(CorpusError::validation(
                        "seconds",
                        format!("{} for task `{}` must be positive", rec.seconds, rec.task_id),
                    ));
                }
                let i = *task_index.get(&rec.task_id).ok_or_else(|| {
                    CorpusError::validation(
                        "task_id",
                        format!("time recorded for unknown task `{}`", rec.task_id),
                    )
                })?;
                if task_seconds[i].replace(rec.seconds).is_some() {
                    return Err(CorpusError::Duplicate {
                        kind: "task_id",
                        id: rec.task_id.clone(),
                    });
                }
            }
        }
        Ok(Self {
            clips,
            tasks,
            times,
            clip_index,
            task_index,
            task_clip,
            task_seconds,
        })
    }

    /// Expands every clip over `grid` and attaches optional times.
    pub fn from_grid(
        clips: Vec<Clip>,
        grid: &TaskGrid,
        times: Option<Vec<TimeRecord>>,
    ) -> Result<Self> {
        if clips.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let tasks = expand_tasks(&clips, &grid.encoders, &grid.presets, &grid.cqps)?;
        Self::new(clips, tasks, times)
    }

    pub fn clips(&self) -> &[Clip] {
        &self.clips
    }

    pub fn tasks(&self) -> &[EncodeTask] {
        &self.tasks
    }

    pub fn times(&self) -> Option<&[TimeRecord]> {
        self.times.as_deref()
    }

    /// Task count `N`.
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn clip(&self, clip_id: &str) -> Option<&Clip> {
        self.clip_index.get(clip_id).map(|&i| &self.clips[i])
    }

    pub fn task_position(&self, task_id: &str) -> Option<usize> {
        self.task_index.get(task_id).copied()
    }

    /// Clip index (into [`Corpus::clips`]) of the task at `task_pos`.
    pub fn clip_of(&self, task_pos: usize) -> usize {
        self.task_clip[task_pos]
    }

    pub fn seconds_at(&self, task_pos: usize) -> Option<f64> {
        self.task_seconds[task_pos]
    }

    pub fn seconds(&self, task_id: &str) -> Option<f64> {
        self.task_position(task_id).and_then(|i| self.task_seconds[i])
    }

    /// True when every task has a measured time.
    pub fn is_fully_timed(&self) -> bool {
        self.task_seconds.iter().all(Option::is_some)
    }

    /// Ground-truth seconds for every task in task order, or the id of the
    /// first task without a measurement.
    pub fn ground_truth(&self) -> std::result::Result<Vec<f64>, String> {
        self.task_seconds
            .iter()
            .zip(&self.tasks)
            .map(|(s, t)| s.ok_or_else(|| t.task_id.clone()))
            .collect()
    }

    /// Replaces the attached times, revalidating against the task set.
    pub fn with_times(self, times: Option<Vec<TimeRecord>>) -> Result<Self> {
        Self::new(self.clips, self.tasks, times)
    }

    pub fn save_features(&self, path: &Path) -> Result<()> {
        write_file(path, |w| write_features(w, &self.clips))
    }

    pub fn save_tasks(&self, path: &Path) -> Result<()> {
        write_file(path, |w| write_tasks(w, &self.tasks))
    }

    /// Writes measured times; an absent time set produces a header-only file.
    pub fn save_times(&self, path: &Path) -> Result<()> {
        write_file(path, |w| write_times(w, self.times.as_deref().unwrap_or(&[])))
    }
}

/// Progress through a corpus: the ordered list of finished tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionState {
    completed: Vec<String>,
    seen: HashSet<String>,
    total: usize,
}

impl CompletionState {
    pub fn new(total: usize) -> Self {
        Self {
            completed: Vec::new(),
            seen: HashSet::new(),
            total,
        }
    }

    pub fn mark(&mut self, task_id: &str) -> Result<()> {
        if self.completed.len() >= self.total {
            return Err(CorpusError::validation(
                "completed",
                "all tasks already complete",
            ));
        }
        if !self.seen.insert(task_id.to_owned()) {
            return Err(CorpusError::Duplicate {
                kind: "completed task_id",
                id: task_id.to_owned(),
            });
        }
        self.completed.push(task_id.to_owned());
        Ok(())
    }

    pub fn completed(&self) -> &[String] {
        &self.completed
    }

    pub fn contains(&self, task_id: &str) -> bool {
        self.seen.contains(task_id)
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Completion ratio `|completed| / N`.
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.completed.len() as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureRecord {
    clip_id: String,
    width: u32,
    height: u32,
    framerate_num: u32,
    framerate_den: u32,
    num_frames: u32,
    #[serde(rename = "E")]
    e: f64,
    h: f64,
    luma: f64,
    source_group: String,
}

impl From<&Clip> for FeatureRecord {
    fn from(c: &Clip) -> Self {
        Self {
            clip_id: c.clip_id.clone(),
            width: c.width,
            height: c.height,
            framerate_num: c.framerate.num,
            framerate_den: c.framerate.den,
            num_frames: c.num_frames,
            e: c.spatial_energy,
            h: c.temporal_energy,
            luma: c.luma,
            source_group: c.source_group.clone(),
        }
    }
}

impl From<FeatureRecord> for Clip {
    fn from(r: FeatureRecord) -> Self {
        Self {
            clip_id: r.clip_id,
            width: r.width,
            height: r.height,
            framerate: Framerate {
                num: r.framerate_num,
                den: r.framerate_den,
            },
            num_frames: r.num_frames,
            spatial_energy: r.e,
            temporal_energy: r.h,
            luma: r.luma,
            source_group: r.source_group,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskRecord {
    task_id: String,
    clip_id: String,
    encoder: String,
    preset: Preset,
    cqp: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct SecondsRecord {
    task_id: String,
    seconds: f64,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CorpusError::io(path, e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut file = io::BufWriter::new(File::create(path).map_err(|e| CorpusError::io(path, e))?);
    f(&mut file)?;
    file.flush().map_err(|e| CorpusError::io(path, e))
}

/// Reads rows of `R` after checking the header matches `header` exactly.
fn read_records<R, Rd>(path: &Path, reader: Rd, header: &[&str]) -> Result<Vec<(u64, R)>>
where
    R: for<'de> Deserialize<'de>,
    Rd: Read,
{
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let found = rdr.headers().map_err(|e| CorpusError::Parse {
        path: path.to_path_buf(),
        row: 1,
        message: e.to_string(),
    })?;
    if found.iter().ne(header.iter().copied()) {
        return Err(CorpusError::Parse {
            path: path.to_path_buf(),
            row: 1,
            message: format!(
                "header `{}` does not match expected `{}`",
                found.iter().collect::<Vec<_>>().join(","),
                header.join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<R>().enumerate() {
        // Row numbers count the header as row 1.
        let row = i as u64 + 2;
        let rec = rec.map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        })?;
        out.push((row, rec));
    }
    Ok(out)
}

fn at_row(path: &Path, row: u64, err: CorpusError) -> CorpusError {
    match err {
        CorpusError::Validation { field, message } => CorpusError::Validation {
            field,
            message: format!("{}: row {row}: {message}", path.display()),
        },
        other => other,
    }
}

pub fn read_features(path: &Path) -> Result<Vec<Clip>> {
    read_features_from(path, open(path)?)
}

fn read_features_from(path: &Path, reader: impl Read) -> Result<Vec<Clip>> {
    let rows = read_records::<FeatureRecord, _>(path, reader, &FEATURES_HEADER)?;
    let mut seen = HashSet::with_capacity(rows.len());
    let mut clips = Vec::with_capacity(rows.len());
    for (row, rec) in rows {
        let clip = Clip::from(rec);
        clip.validate().map_err(|e| at_row(path, row, e))?;
        if !seen.insert(clip.clip_id.clone()) {
            return Err(CorpusError::Duplicate {
                kind: "clip_id",
                id: clip.clip_id,
            });
        }
        clips.push(clip);
    }
    Ok(clips)
}

pub fn read_tasks(path: &Path) -> Result<Vec<EncodeTask>> {
    let rows = read_records::<TaskRecord, _>(path, open(path)?, &TASKS_HEADER)?;
    let mut tasks = Vec::with_capacity(rows.len());
    for (row, r) in rows {
        let task = EncodeTask {
            task_id: r.task_id,
            clip_id: r.clip_id,
            encoder: r.encoder,
            preset: r.preset,
            cqp: r.cqp,
        };
        task.validate().map_err(|e| at_row(path, row, e))?;
        tasks.push(task);
    }
    Ok(tasks)
}

pub fn read_times(path: &Path) -> Result<Vec<TimeRecord>> {
    let rows = read_records::<SecondsRecord, _>(path, open(path)?, &TIMES_HEADER)?;
    let mut seen = HashSet::with_capacity(rows.len());
    let mut out = Vec::with_capacity(rows.len());
    for (row, r) in rows {
        let rec = TimeRecord::new(r.task_id, r.seconds).map_err(|e| at_row(path, row, e))?;
        if !seen.insert(rec.task_id.clone()) {
            return Err(CorpusError::Duplicate {
                kind: "task_id",
                id: rec.task_id,
            });
        }
        out.push(rec);
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> CorpusError {
    CorpusError::Domain(format!("csv write: {e}"))
}

pub fn write_features(w: &mut dyn Write, clips: &[Clip]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for c in clips {
        wtr.serialize(FeatureRecord::from(c)).map_err(csv_err)?;
    }
    if clips.is_empty() {
        wtr.write_record(FEATURES_HEADER).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| CorpusError::Domain(e.to_string()))
}

pub fn write_tasks(w: &mut dyn Write, tasks: &[EncodeTask]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TASKS_HEADER).map_err(csv_err)?;
    for t in tasks {
        let cqp = t.cqp.to_string();
        wtr.write_record([
            t.task_id.as_str(),
            t.clip_id.as_str(),
            t.encoder.as_str(),
            t.preset.as_str(),
            cqp.as_str(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| CorpusError::Domain(e.to_string()))
}

pub fn write_times(w: &mut dyn Write, times: &[TimeRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for t in times {
        wtr.serialize(SecondsRecord {
            task_id: t.task_id.clone(),
            seconds: t.seconds,
        })
        .map_err(csv_err)?;
    }
    if times.is_empty() {
        wtr.write_record(TIMES_HEADER).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| CorpusError::Domain(e.to_string()))
}

/// Loads a corpus from a features CSV, expanding tasks over `grid`.
pub fn load_corpus(
    features_path: &Path,
    times_path: Option<&Path>,
    grid: &TaskGrid,
) -> Result<Corpus> {
    let clips = read_features(features_path)?;
    let times = times_path.map(read_times).transpose()?;
    Corpus::from_grid(clips, grid, times)
}

/// Loads a corpus whose task set comes from an explicit tasks CSV.
pub fn load_corpus_with_tasks(
    features_path: &Path,
    tasks_path: &Path,
    times_path: Option<&Path>,
) -> Result<Corpus> {
    let clips = read_features(features_path)?;
    let tasks = read_tasks(tasks_path)?;
    let times = times_path.map(read_times).transpose()?;
    Corpus::new(clips, tasks, times)
}
