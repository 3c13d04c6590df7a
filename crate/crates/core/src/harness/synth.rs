//! Seeded synthetic corpora with a known encoding-time law.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::corpus::{Clip, Corpus, Framerate, TaskGrid, TimeRecord};
use crate::gbrt::{FeatureRow, NUM_FEATURES};

const HEIGHTS: [u32; 5] = [540, 720, 1080, 1440, 2160];
const FRAMERATES: [(u32, u32); 6] = [(24, 1), (25, 1), (30000, 1001), (30, 1), (50, 1), (60, 1)];

/// Deterministic log-time law `g(x)`; observed times are `exp(g(x) + ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeLaw {
    /// `intercept + a·ln(pixels) + b·ln(frames) + c·ln(1+E) + d·ln(1+h) + e·preset + f·cqp`
    Affine {
        intercept: f64,
        log_pixels: f64,
        log_frames: f64,
        log1p_spatial: f64,
        log1p_temporal: f64,
        preset: f64,
        cqp: f64,
    },
    /// `low` below `threshold` on one model feature, `high` at or above it.
    Step {
        feature: usize,
        threshold: f64,
        low: f64,
        high: f64,
    },
}

impl Default for TimeLaw {
    fn default() -> Self {
        TimeLaw::Affine {
            intercept: -16.0,
            log_pixels: 1.0,
            log_frames: 1.0,
            log1p_spatial: 0.2,
            log1p_temporal: 0.1,
            preset: 1.8,
            cqp: -0.06,
        }
    }
}

impl TimeLaw {
    pub fn log_seconds(&self, row: &FeatureRow) -> f64 {
        match *self {
            TimeLaw::Affine {
                intercept,
                log_pixels,
                log_frames,
                log1p_spatial,
                log1p_temporal,
                preset,
                cqp,
            } => {
                intercept
                    + log_pixels * row.num_pixels.ln()
                    + log_frames * row.num_frames.ln()
                    + log1p_spatial * row.spatial_energy.ln_1p()
                    + log1p_temporal * row.temporal_energy.ln_1p()
                    + preset * f64::from(row.preset_ord)
                    + cqp * f64::from(row.cqp)
            }
            TimeLaw::Step {
                feature,
                threshold,
                low,
                high,
            } => {
                if row.to_array::<f64>()[feature] < threshold {
                    low
                } else {
                    high
                }
            }
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let finite = match *self {
            TimeLaw::Affine {
                intercept,
                log_pixels,
                log_frames,
                log1p_spatial,
                log1p_temporal,
                preset,
                cqp,
            } => [intercept, log_pixels, log_frames, log1p_spatial, log1p_temporal, preset, cqp]
                .iter()
                .all(|v| v.is_finite()),
            TimeLaw::Step {
                feature,
                threshold,
                low,
                high,
            } => {
                if feature >= NUM_FEATURES {
                    return Err(HarnessError::Spec(format!(
                        "step feature {feature} out of range"
                    )));
                }
                [threshold, low, high].iter().all(|v| v.is_finite())
            }
        };
        if finite {
            Ok(())
        } else {
            Err(HarnessError::Spec("time law coefficients must be finite".into()))
        }
    }
}

/// Generator parameters for [`synth_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_clips: usize,
    pub grid: TaskGrid,
    /// Standard deviation of the log-normal noise on each task time.
    pub sigma: f64,
    /// Source-group labels, assigned uniformly at random to clips.
    pub groups: Vec<String>,
    pub law: TimeLaw,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_clips: 600,
            grid: TaskGrid::default(),
            sigma: 0.3,
            groups: (0..8).map(|g| format!("g{g}")).collect(),
            law: TimeLaw::default(),
        }
    }
}

/// Source groups held out for the generalised predictor on default corpora.
pub fn default_test_groups() -> Vec<String> {
    vec!["g3".to_owned(), "g5".to_owned()]
}

/// Draws clips and ground-truth times. Identical `(spec, seed)` yield
/// identical corpora.
pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<Corpus, HarnessError> {
    if spec.num_clips == 0 {
        return Err(HarnessError::Spec("num_clips must be at least 1".into()));
    }
    if !(spec.sigma.is_finite() && spec.sigma >= 0.0) {
        return Err(HarnessError::Spec(format!("sigma {} must be >= 0", spec.sigma)));
    }
    if spec.groups.is_empty() {
        return Err(HarnessError::Spec("at least one source group is required".into()));
    }
    spec.law.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spatial = LogNormal::new(40f64.ln(), 0.6).expect("valid parameters");
    let temporal = LogNormal::new(8f64.ln(), 0.9).expect("valid parameters");
    let clips: Vec<Clip> = (0..spec.num_clips)
        .map(|i| {
            let height = HEIGHTS[rng.random_range(0..HEIGHTS.len())];
            let (num, den) = FRAMERATES[rng.random_range(0..FRAMERATES.len())];
            let seconds = if rng.random_bool(0.5) { 2.0 } else { 4.0 };
            let num_frames = (seconds * f64::from(num) / f64::from(den)).round() as u32;
            Clip {
                clip_id: format!("clip{i:04}"),
                width: height * 16 / 9,
                height,
                framerate: Framerate { num, den },
                num_frames,
                spatial_energy: spatial.sample(&mut rng),
                temporal_energy: temporal.sample(&mut rng),
                luma: rng.random_range(16.0..235.0),
                source_group: spec.groups[rng.random_range(0..spec.groups.len())].clone(),
            }
        })
        .collect();

    let corpus = Corpus::from_grid(clips, &spec.grid, None)?;
    let noise = Normal::new(0.0, spec.sigma).expect("sigma validated");
    let times = corpus
        .tasks()
        .iter()
        .enumerate()
        .map(|(p, task)| {
            let row = FeatureRow::new(&corpus.clips()[corpus.clip_of(p)], task);
            let eps = if spec.sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            TimeRecord::new(task.task_id.clone(), (spec.law.log_seconds(&row) + eps).exp())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(corpus.with_times(Some(times))?)
}
