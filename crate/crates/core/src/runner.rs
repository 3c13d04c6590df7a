//! Runs external encode commands and records their wall-clock duration.
//!
//! Durations come from [`Instant`], a monotonic clock, sampled immediately
//! before spawn and after the child exits. Results are appended to the times
//! CSV one complete line at a time, so an interrupted batch leaves a valid
//! file that `--resume` can pick up.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::corpus::{read_times, Clip, Corpus, EncodeTask, TimeRecord, TIMES_HEADER};

/// Runs shorter than this are reported as suspect rather than recorded.
pub const MIN_PLAUSIBLE: Duration = Duration::from_millis(1);
const DIAGNOSTIC_TAIL: u64 = 2048;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("template: {0}")]
    Template(String),
    #[error("input `{0}` does not exist")]
    MissingInput(PathBuf),
    #[error("encoder binary `{0}` not found")]
    MissingBinary(String),
    #[error("task `{task_id}` exited with {}: {diagnostic}", code.map_or("a signal".to_owned(), |c| format!("code {c}")))]
    NonZeroExit {
        task_id: String,
        code: Option<i32>,
        diagnostic: String,
    },
    #[error("task `{task_id}` finished in {seconds}s, below the plausible minimum")]
    SuspectDuration { task_id: String, seconds: f64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("times file: {0}")]
    Times(String),
}

impl RunError {
    fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Exit code of the child, when it ran and failed.
    pub fn exit_code(&self) -> Option<i32> {
        match self {
            RunError::NonZeroExit { code, .. } => *code,
            _ => None,
        }
    }
}

/// Encode command with `{placeholder}` fields.
///
/// Recognised placeholders: `{input}`, `{output}`, `{preset}`, `{cqp}`,
/// `{encoder}`, `{threads}`, `{task_id}`, `{clip_id}`, and, when the clip is
/// known, `{width}`, `{height}`, `{fps}` (as `num/den`) and `{frames}`.
/// The template is split into arguments with shell quoting rules and run
/// directly, without a shell.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandTemplate {
    pub template: String,
    pub encoder: String,
    /// `{threads}` resolves to `1` when set, else `0` (encoder default).
    pub single_thread: bool,
    pub output_extension: String,
}

impl CommandTemplate {
    pub fn new(template: impl Into<String>, encoder: impl Into<String>) -> Self {
        Self {
            template: template.into(),
            encoder: encoder.into(),
            single_thread: true,
            output_extension: "mkv".into(),
        }
    }

    /// Argument vector for one task.
    pub fn resolve(
        &self,
        task: &EncodeTask,
        clip: Option<&Clip>,
        input: &Path,
        output: &Path,
    ) -> Result<Vec<String>, RunError> {
        let words = shell_words::split(&self.template).map_err(|e| RunError::Template(e.to_string()))?;
        if words.is_empty() {
            return Err(RunError::Template("empty command".into()));
        }
        let lookup = |name: &str| -> Result<String, RunError> {
            let need_clip = || {
                clip.ok_or_else(|| RunError::Template(format!("`{{{name}}}` needs clip metadata")))
            };
            Ok(match name {
                "input" => input.display().to_string(),
                "output" => output.display().to_string(),
                "preset" => task.preset.to_string(),
                "cqp" => task.cqp.to_string(),
                "encoder" => task.encoder.clone(),
                "threads" => if self.single_thread { "1" } else { "0" }.to_owned(),
                "task_id" => task.task_id.clone(),
                "clip_id" => task.clip_id.clone(),
                "width" => need_clip()?.width.to_string(),
                "height" => need_clip()?.height.to_string(),
                "fps" => need_clip()?.framerate.to_string(),
                "frames" => need_clip()?.num_frames.to_string(),
                other => return Err(RunError::Template(format!("unknown placeholder `{{{other}}}`"))),
            })
        };
        words.iter().map(|w| substitute(w, &lookup)).collect()
    }
}

fn substitute(word: &str, lookup: &impl Fn(&str) -> Result<String, RunError>) -> Result<String, RunError> {
    let mut out = String::with_capacity(word.len());
    let mut rest = word;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| RunError::Template(format!("unterminated placeholder in `{word}`")))?;
        out.push_str(&lookup(&after[..close])?);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn file_stem(task_id: &str) -> String {
    task_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// Runs one encode and measures its elapsed wall-clock time. Encoder output
/// goes to `<scratch>/<task>.log`; the encoded file is deleted on success
/// unless `keep_output` is set.
pub fn run_encode(
    task: &EncodeTask,
    clip: Option<&Clip>,
    template: &CommandTemplate,
    input: &Path,
    scratch_dir: &Path,
    keep_output: bool,
) -> Result<TimeRecord, RunError> {
    if !input.exists() {
        return Err(RunError::MissingInput(input.to_path_buf()));
    }
    fs::create_dir_all(scratch_dir).map_err(|e| RunError::io(scratch_dir, e))?;
    let stem = file_stem(&task.task_id);
    let output = scratch_dir.join(format!("{stem}.{}", template.output_extension));
    let log_path = scratch_dir.join(format!("{stem}.log"));
    let argv = template.resolve(task, clip, input, &output)?;

    let log = File::create(&log_path).map_err(|e| RunError::io(&log_path, e))?;
    let log_err = log.try_clone().map_err(|e| RunError::io(&log_path, e))?;
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::from(log))
        .stderr(Stdio::from(log_err));

    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => RunError::MissingBinary(argv[0].clone()),
        _ => RunError::io(Path::new(&argv[0]), e),
    })?;
    let status = child.wait().map_err(|e| RunError::io(Path::new(&argv[0]), e))?;
    let elapsed = start.elapsed();

    if !status.success() {
        return Err(RunError::NonZeroExit {
            task_id: task.task_id.clone(),
            code: status.code(),
            diagnostic: log_tail(&log_path),
        });
    }
    if elapsed < MIN_PLAUSIBLE {
        return Err(RunError::SuspectDuration {
            task_id: task.task_id.clone(),
            seconds: elapsed.as_secs_f64(),
        });
    }
    if !keep_output && output.exists() {
        fs::remove_file(&output).map_err(|e| RunError::io(&output, e))?;
    }
    TimeRecord::new(task.task_id.clone(), elapsed.as_secs_f64()).map_err(|e| RunError::Times(e.to_string()))
}

fn log_tail(path: &Path) -> String {
    let Ok(mut f) = File::open(path) else {
        return String::new();
    };
    let len = f.metadata().map(|m| m.len()).unwrap_or(0);
    let _ = f.seek(SeekFrom::Start(len.saturating_sub(DIAGNOSTIC_TAIL)));
    let mut buf = Vec::new();
    let _ = f.read_to_end(&mut buf);
    String::from_utf8_lossy(&buf).trim().to_owned()
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub input_dir: PathBuf,
    /// Inputs are looked up as `<input_dir>/<clip_id>.<input_extension>`.
    pub input_extension: String,
    pub scratch_dir: PathBuf,
    pub out: PathBuf,
    /// Maximum simultaneous encodes. Values above 1 distort measurements
    /// through CPU contention.
    pub concurrency: usize,
    pub fail_fast: bool,
    pub resume: bool,
    pub keep_output: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskFailure {
    pub task_id: String,
    pub exit_code: Option<i32>,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct BatchSummary {
    /// Task ids in the order their encodes started.
    pub started: Vec<String>,
    pub recorded: usize,
    pub skipped: usize,
    pub failures: Vec<TaskFailure>,
}

impl BatchOptions {
    /// Manifest of failed tasks, written next to the times CSV.
    pub fn failure_manifest(&self) -> PathBuf {
        let mut name = self.out.file_name().unwrap_or_default().to_os_string();
        name.push(".failures.csv");
        self.out.with_file_name(name)
    }
}

fn csv_line(fields: &[&str]) -> Vec<u8> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(fields).expect("in-memory csv write");
    wtr.into_inner().expect("in-memory csv flush")
}

/// Runs every task of `corpus`, appending a times row after each success.
pub fn batch_encode(corpus: &Corpus, template: &CommandTemplate, opts: &BatchOptions) -> Result<BatchSummary, RunError> {
    let done: HashSet<String> = if opts.resume && opts.out.exists() {
        read_times(&opts.out)
            .map_err(|e| RunError::Times(e.to_string()))?
            .into_iter()
            .map(|r| r.task_id)
            .collect()
    } else {
        HashSet::new()
    };
    let mut out = if opts.resume && opts.out.exists() {
        OpenOptions::new().append(true).open(&opts.out)
    } else {
        File::create(&opts.out)
    }
    .map_err(|e| RunError::io(&opts.out, e))?;
    if done.is_empty() && out.metadata().map(|m| m.len()).unwrap_or(0) == 0 {
        out.write_all(&csv_line(&TIMES_HEADER))
            .and_then(|_| out.flush())
            .map_err(|e| RunError::io(&opts.out, e))?;
    }

    let pending: Vec<usize> = (0..corpus.len())
        .filter(|&p| !done.contains(&corpus.tasks()[p].task_id))
        .collect();
    let summary = Mutex::new(BatchSummary {
        skipped: corpus.len() - pending.len(),
        ..BatchSummary::default()
    });
    let writer = Mutex::new(out);
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = opts.concurrency.max(1).min(pending.len().max(1));
    let write_error: Mutex<Option<RunError>> = Mutex::new(None);

    let work = || loop {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(&pos) = pending.get(i) else { break };
        let task = &corpus.tasks()[pos];
        let clip = &corpus.clips()[corpus.clip_of(pos)];
        let input = opts
            .input_dir
            .join(format!("{}.{}", task.clip_id, opts.input_extension));
        summary.lock().unwrap().started.push(task.task_id.clone());
        match run_encode(task, Some(clip), template, &input, &opts.scratch_dir, opts.keep_output) {
            Ok(rec) => {
                let line = csv_line(&[&rec.task_id, &rec.seconds.to_string()]);
                let mut w = writer.lock().unwrap();
                if let Err(e) = w.write_all(&line).and_then(|_| w.flush()) {
                    *write_error.lock().unwrap() = Some(RunError::io(&opts.out, e));
                    stop.store(true, Ordering::SeqCst);
                    break;
                }
                summary.lock().unwrap().recorded += 1;
            }
            Err(e) => {
                summary.lock().unwrap().failures.push(TaskFailure {
                    task_id: task.task_id.clone(),
                    exit_code: e.exit_code(),
                    message: e.to_string(),
                });
                if opts.fail_fast {
                    stop.store(true, Ordering::SeqCst);
                }
            }
        }
    };
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(work);
        }
    });
    if let Some(e) = write_error.into_inner().unwrap() {
        return Err(e);
    }

    let summary = summary.into_inner().unwrap();
    let manifest = opts.failure_manifest();
    if summary.failures.is_empty() {
        if manifest.exists() {
            fs::remove_file(&manifest).map_err(|e| RunError::io(&manifest, e))?;
        }
    } else {
        let mut wtr = csv::Writer::from_path(&manifest).map_err(|e| RunError::Times(e.to_string()))?;
        let err = |e: csv::Error| RunError::Times(e.to_string());
        wtr.write_record(["task_id", "exit_code", "message"]).map_err(err)?;
        for f in &summary.failures {
            let code = f.exit_code.map(|c| c.to_string()).unwrap_or_default();
            wtr.write_record([f.task_id.as_str(), code.as_str(), f.message.as_str()])
                .map_err(err)?;
        }
        wtr.flush().map_err(|e| RunError::io(&manifest, e))?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Preset;

    #[test]
    fn template_substitutes_placeholders() {
        let t = CommandTemplate::new("x264 --preset {preset} --qp {cqp} -o '{output}' {input} --threads {threads}", "x264");
        let task = EncodeTask::new("c1", "x264", Preset::Veryslow, 27);
        let argv = t
            .resolve(&task, None, Path::new("/in/c1.y4m"), Path::new("/tmp/a b.mkv"))
            .unwrap();
        assert_eq!(
            argv,
            ["x264", "--preset", "veryslow", "--qp", "27", "-o", "/tmp/a b.mkv", "/in/c1.y4m", "--threads", "1"]
        );
    }

    #[test]
    fn unknown_placeholder_is_rejected() {
        let t = CommandTemplate::new("enc {bitrate}", "x264");
        let task = EncodeTask::new("c1", "x264", Preset::Medium, 22);
        let err = t.resolve(&task, None, Path::new("i"), Path::new("o")).unwrap_err();
        assert!(matches!(err, RunError::Template(_)));
        let t = CommandTemplate::new("enc {width}", "x264");
        assert!(t.resolve(&task, None, Path::new("i"), Path::new("o")).is_err());
    }

    #[test]
    fn file_stems_are_filesystem_safe() {
        assert_eq!(file_stem("clip 1:x264:medium:22"), "clip_1_x264_medium_22");
    }
}
