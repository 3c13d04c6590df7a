//! Monte-Carlo evaluation of predictors over seeded processing orders.
//!
//! A realisation fixes one processing order of the corpus. At each grid
//! point `c` the first `⌊c·N⌋` tasks of the order count as completed, the
//! predictor is refit on them, and metrics are computed on the rest against
//! ground truth. Averages over realisations are order-independent.

mod synth;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use synth::{default_test_groups, synth_corpus, SynthSpec, TimeLaw};

use crate::clustering::ClusterAssignment;
use crate::corpus::{Corpus, CorpusError};
use crate::gbrt::{GbrtModel, Hyperparams};
use crate::metrics::{MetricError, MetricReport};
use crate::predictors::{
    gxp_train_split, shuffled_order, stratified_order, PredictError, PredictionContext, System,
};
use crate::scalar::compensated_sum;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("task `{0}` has no ground-truth time")]
    MissingTruth(String),
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error("invalid sweep config: {0}")]
    Config(String),
    #[error("realisation seed {seed} ({system}) at c={c}: {source}")]
    Realisation {
        seed: u64,
        system: System,
        c: f64,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// `steps` evenly spaced ratios `step, 2·step, …` strictly inside `(0, 1)`.
pub fn uniform_grid(step: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    let mut k = 1u32;
    loop {
        // Round through decimal so grid values print as typed.
        let c: f64 = format!("{:.10}", f64::from(k) * step)
            .parse()
            .expect("formatted float parses");
        if c >= 1.0 - 1e-12 {
            break;
        }
        grid.push(c);
        k += 1;
    }
    grid
}

/// Completed task count at ratio `c`: `⌊c·N⌋`, tolerant of representation
/// error in `c`.
pub fn completed_count(c: f64, n: usize) -> usize {
    ((c * n as f64) + 1e-9).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub num_realisations: usize,
    pub c_grid: Vec<f64>,
    pub systems: Vec<System>,
    pub base_seed: u64,
    /// Source groups held out for GXP.
    pub gxp_test_groups: BTreeSet<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            num_realisations: 100,
            c_grid: uniform_grid(0.02),
            systems: vec![System::Bp, System::Cp, System::Xp, System::Cxp],
            base_seed: 0,
            gxp_test_groups: default_test_groups().into_iter().collect(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.num_realisations == 0 {
            return Err(HarnessError::Config("num_realisations must be at least 1".into()));
        }
        if self.c_grid.is_empty() {
            return Err(HarnessError::Config("c grid is empty".into()));
        }
        validate_grid(&self.c_grid)?;
        if self.systems.is_empty() {
            return Err(HarnessError::Config("no systems selected".into()));
        }
        Ok(())
    }
}

fn validate_grid(grid: &[f64]) -> Result<(), HarnessError> {
    if grid.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
        return Err(HarnessError::Config("c grid must lie strictly inside (0, 1)".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::Config("c grid must increase strictly".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    /// Tasks the predictor learned from (zero for GXP).
    pub n_train: usize,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationResult {
    pub seed: u64,
    pub system: System,
    pub per_c: Vec<GridPoint>,
}

/// Ground truth, predictor context and the lazily trained GXP model.
pub struct Evaluator<'a> {
    ctx: PredictionContext<'a>,
    truth: Vec<f64>,
    gxp_test_groups: BTreeSet<String>,
    gxp: OnceLock<Result<(GbrtModel<f64>, Vec<usize>), String>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        corpus: &'a Corpus,
        assignment: &'a ClusterAssignment,
        params: Hyperparams,
        gxp_test_groups: BTreeSet<String>,
    ) -> Result<Self, HarnessError> {
        let truth = corpus.ground_truth().map_err(HarnessError::MissingTruth)?;
        Ok(Self {
            ctx: PredictionContext::new(corpus, assignment, params)?,
            truth,
            gxp_test_groups,
            gxp: OnceLock::new(),
        })
    }

    pub fn context(&self) -> &PredictionContext<'a> {
        &self.ctx
    }

    /// GXP model trained on every group outside the held-out set, with the
    /// held-out task positions.
    pub fn gxp_model(&self) -> Result<(&GbrtModel<f64>, &[usize]), HarnessError> {
        let cell = self.gxp.get_or_init(|| {
            gxp_train_split(self.ctx.corpus, &self.gxp_test_groups)
                .and_then(|split| {
                    let model = split.train_model(&self.ctx.params)?;
                    Ok((model, split.test_tasks))
                })
                .map_err(|e| e.to_string())
        });
        match cell {
            Ok((m, t)) => Ok((m, t)),
            Err(e) => Err(HarnessError::Config(format!("GXP: {e}"))),
        }
    }

    fn order(&self, system: System, seed: u64) -> Result<Vec<usize>, HarnessError> {
        Ok(match system {
            System::Cxp => stratified_order(&self.ctx.labels, self.ctx.assignment.k, seed),
            System::Gxp => {
                let (_, test) = self.gxp_model()?;
                shuffled_order(test.len(), seed)
                    .into_iter()
                    .map(|i| test[i])
                    .collect()
            }
            _ => shuffled_order(self.ctx.corpus.len(), seed),
        })
    }

    /// One processing order, evaluated at every grid point.
    pub fn run_realization(&self, system: System, seed: u64, c_grid: &[f64]) -> Result<RealizationResult, HarnessError> {
        validate_grid(c_grid)?;
        let order = self.order(system, seed)?;
        let model = if system == System::Gxp {
            Some(self.gxp_model()?.0)
        } else {
            None
        };
        let mut per_c = Vec::with_capacity(c_grid.len());
        for &c in c_grid {
            let point = (|| {
                let n = completed_count(c, order.len());
                let (done, rest) = order.split_at(n);
                let seconds: Vec<f64> = done.iter().map(|&p| self.truth[p]).collect();
                let prediction = if system == System::Gxp {
                    // The generalised model never sees completed tasks.
                    self.ctx.predict(system, &[], &[], rest, model)?
                } else {
                    self.ctx.predict(system, done, &seconds, rest, None)?
                };
                let actual: Vec<f64> = rest.iter().map(|&p| self.truth[p]).collect();
                let report = MetricReport::evaluate(&actual, &prediction.t_hat, Some(prediction.total))?;
                Ok(GridPoint {
                    c,
                    n_train: if system == System::Gxp { 0 } else { n },
                    report,
                })
            })()
            .map_err(|e: HarnessError| HarnessError::Realisation {
                seed,
                system,
                c,
                source: Box::new(e),
            })?;
            per_c.push(point);
        }
        Ok(RealizationResult { seed, system, per_c })
    }

    /// Runs every (system, realisation) pair and averages the metrics. Seeds
    /// are `base_seed + index`; the result does not depend on scheduling.
    pub fn monte_carlo(&self, config: &SweepConfig) -> Result<SweepReport, HarnessError> {
        config.validate()?;
        let jobs: Vec<(System, u64)> = config
            .systems
            .iter()
            .flat_map(|&s| (0..config.num_realisations as u64).map(move |i| (s, config.base_seed + i)))
            .collect();
        let realisations = jobs
            .par_iter()
            .map(|&(system, seed)| self.run_realization(system, seed, &config.c_grid))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SweepReport::from_realisations(&config.systems, &config.c_grid, realisations))
    }
}

/// Free-function form of [`Evaluator::run_realization`].
pub fn run_realization(
    corpus: &Corpus,
    assignment: &ClusterAssignment,
    params: Hyperparams,
    gxp_test_groups: BTreeSet<String>,
    system: System,
    seed: u64,
    c_grid: &[f64],
) -> Result<RealizationResult, HarnessError> {
    Evaluator::new(corpus, assignment, params, gxp_test_groups)?.run_realization(system, seed, c_grid)
}

/// Free-function form of [`Evaluator::monte_carlo`].
pub fn monte_carlo(
    corpus: &Corpus,
    assignment: &ClusterAssignment,
    params: Hyperparams,
    config: &SweepConfig,
) -> Result<SweepReport, HarnessError> {
    Evaluator::new(corpus, assignment, params, config.gxp_test_groups.clone())?.monte_carlo(config)
}

/// Metrics averaged over realisations for one (system, c) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedRow {
    pub system: System,
    pub c: f64,
    pub mape: f64,
    /// Mean over realisations where R² was defined.
    pub r2: Option<f64>,
    pub sape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<AveragedRow>,
    pub realisations: Vec<RealizationResult>,
}

impl SweepReport {
    pub fn from_realisations(systems: &[System], grid: &[f64], realisations: Vec<RealizationResult>) -> Self {
        let mut rows = Vec::with_capacity(systems.len() * grid.len());
        for &system in systems {
            let runs: Vec<&RealizationResult> = realisations.iter().filter(|r| r.system == system).collect();
            for (k, &c) in grid.iter().enumerate() {
                let cell = || runs.iter().map(move |r| r.per_c[k].report);
                let count = runs.len() as f64;
                let r2s: Vec<f64> = cell().filter_map(|m| m.r2).collect();
                rows.push(AveragedRow {
                    system,
                    c,
                    mape: compensated_sum(cell().map(|m| m.mape)) / count,
                    r2: (!r2s.is_empty()).then(|| compensated_sum(r2s.iter().copied()) / r2s.len() as f64),
                    sape: compensated_sum(cell().map(|m| m.sape)) / count,
                });
            }
        }
        Self { rows, realisations }
    }

    pub fn row(&self, system: System, c: f64) -> Option<&AveragedRow> {
        self.rows
            .iter()
            .find(|r| r.system == system && (r.c - c).abs() < 1e-12)
    }

    /// Averaged table `system,c,mape,r2,sape`.
    pub fn write_csv(&self, w: impl Write) -> Result<(), HarnessError> {
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| HarnessError::Report(e.to_string());
        wtr.write_record(["system", "c", "mape", "r2", "sape"]).map_err(err)?;
        for r in &self.rows {
            wtr.write_record([
                r.system.to_string(),
                r.c.to_string(),
                r.mape.to_string(),
                fmt_opt(r.r2),
                r.sape.to_string(),
            ])
            .map_err(err)?;
        }
        wtr.flush().map_err(|e| HarnessError::Report(e.to_string()))
    }

    /// One row per (realisation, c): `seed,system,c,n_train,mape,r2,sape`.
    pub fn write_long_csv(&self, w: impl Write) -> Result<(), HarnessError> {
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| HarnessError::Report(e.to_string());
        wtr.write_record(["seed", "system", "c", "n_train", "mape", "r2", "sape"])
            .map_err(err)?;
        for r in &self.realisations {
            for p in &r.per_c {
                wtr.write_record([
                    r.seed.to_string(),
                    r.system.to_string(),
                    p.c.to_string(),
                    p.n_train.to_string(),
                    p.report.mape.to_string(),
                    fmt_opt(p.report.r2),
                    p.report.sape.to_string(),
                ])
                .map_err(err)?;
            }
        }
        wtr.flush().map_err(|e| HarnessError::Report(e.to_string()))
    }

    /// JSON document of the averaged rows, optionally with every realisation.
    pub fn to_json(&self, include_realisations: bool) -> Result<String, HarnessError> {
        let value = if include_realisations {
            serde_json::to_value(self)
        } else {
            serde_json::to_value(serde_json::json!({ "rows": &self.rows }))
        }
        .map_err(|e| HarnessError::Report(e.to_string()))?;
        serde_json::to_string_pretty(&value).map_err(|e| HarnessError::Report(e.to_string()))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_owned(), |x| x.to_string())
}

/// Reads an averaged report CSV as written by [`SweepReport::write_csv`].
pub fn read_report_csv(r: impl Read) -> Result<Vec<AveragedRow>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(r);
    let err = |e: csv::Error| HarnessError::Report(e.to_string());
    let header = rdr.headers().map_err(err)?.clone();
    if header.iter().ne(["system", "c", "mape", "r2", "sape"]) {
        return Err(HarnessError::Report(format!(
            "unexpected header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(err)?;
        let bad = |what: &str| HarnessError::Report(format!("row {}: bad {what}", i + 2));
        let num = |j: usize, what: &str| rec[j].parse::<f64>().map_err(|_| bad(what));
        let r2 = num(3, "r2")?;
        rows.push(AveragedRow {
            system: rec[0].parse().map_err(|_| bad("system"))?,
            c: num(1, "c")?,
            mape: num(2, "mape")?,
            r2: (!r2.is_nan()).then_some(r2),
            sape: num(4, "sape")?,
        });
    }
    Ok(rows)
}

/// Human-readable table: one block per system, one column per ratio in `at`
/// (all ratios when empty).
pub fn render_summary(rows: &[AveragedRow], at: &[f64]) -> String {
    let mut systems: Vec<System> = Vec::new();
    for r in rows {
        if !systems.contains(&r.system) {
            systems.push(r.system);
        }
    }
    let mut cols: Vec<f64> = Vec::new();
    for r in rows {
        let wanted = at.is_empty() || at.iter().any(|&c| (c - r.c).abs() < 1e-9);
        if wanted && !cols.iter().any(|&c| (c - r.c).abs() < 1e-9) {
            cols.push(r.c);
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:<8}{:<8}", "system", "metric");
    for c in &cols {
        let _ = write!(out, "{:>10}", format!("@{:.0}%", c * 100.0));
    }
    out.push('\n');
    for s in systems {
        for (name, pick) in [
            ("MAPE", (|r: &AveragedRow| Some(r.mape)) as fn(&AveragedRow) -> Option<f64>),
            ("R2", |r: &AveragedRow| r.r2),
            ("SAPE", |r: &AveragedRow| Some(r.sape)),
        ] {
            let _ = write!(out, "{:<8}{:<8}", s.as_str(), name);
            for &c in &cols {
                let v = rows
                    .iter()
                    .find(|r| r.system == s && (r.c - c).abs() < 1e-9)
                    .and_then(pick);
                match v {
                    Some(v) => {
                        let _ = write!(out, "{v:>10.2}");
                    }
                    None => {
                        let _ = write!(out, "{:>10}", "-");
                    }
                }
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_spans_two_to_ninety_eight_percent() {
        let g = uniform_grid(0.02);
        assert_eq!(g.len(), 49);
        assert_eq!(g[0], 0.02);
        assert_eq!(g[2], 0.06);
        assert_eq!(*g.last().unwrap(), 0.98);
    }

    #[test]
    fn completed_count_floors() {
        assert_eq!(completed_count(0.2, 10), 2);
        assert_eq!(completed_count(0.29, 100), 29);
        assert_eq!(completed_count(0.02, 7200), 144);
        assert_eq!(completed_count(0.25, 10), 2);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SweepConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.c_grid = vec![0.2, 0.1];
        assert!(cfg.validate().is_err());
        cfg.c_grid = vec![0.5, 1.0];
        assert!(cfg.validate().is_err());
        cfg.c_grid = vec![0.5];
        cfg.num_realisations = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn summary_renders_selected_columns() {
        let rows = vec![
            AveragedRow { system: System::Bp, c: 0.02, mape: 10.0, r2: None, sape: 3.0 },
            AveragedRow { system: System::Bp, c: 0.04, mape: 9.0, r2: Some(0.5), sape: 2.0 },
        ];
        let s = render_summary(&rows, &[0.04]);
        assert!(s.contains("@4%"));
        assert!(!s.contains("@2%"));
        assert!(s.contains("0.50"));
    }
}
