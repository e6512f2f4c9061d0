//! Cross-validated comparison of methods.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{make_folds, FoldPlan};
use super::metrics::{f1_scores, mean_std};
use super::trainer::{derive_seed, train_fold, FoldResult, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{naive_match, Variant};

pub const BENCH_SCHEMA_VERSION: u32 = 1;

/// A benchmark row: the untrained baseline or a trained variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    Naive,
    Model(Variant),
}

impl Method {
    /// Table order: baselines first, full model last.
    pub const ALL: [Method; 6] = [
        Method::Naive,
        Method::Model(Variant::LitmatchOnly),
        Method::Model(Variant::Mlp),
        Method::Model(Variant::GatOnly),
        Method::Model(Variant::ToxnetSequential),
        Method::Model(Variant::Toxnet),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Model(v) => v.name(),
        }
    }

    fn rank(self) -> usize {
        Method::ALL.iter().position(|m| *m == self).expect("listed")
    }

    /// Parses a comma-separated list, deduplicated and put in table order.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out: Vec<Method> = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        out.sort_by_key(|m| m.rank());
        out.dedup();
        if out.is_empty() {
            return Err(Error::UnknownVariant(s.to_string()));
        }
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "naive" {
            Ok(Method::Naive)
        } else {
            s.parse().map(Method::Model)
        }
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub folds: usize,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub micro_mean: f64,
    pub micro_std: f64,
    pub macro_mean: f64,
    pub macro_std: f64,
    pub runs: Vec<FoldResult>,
}

/// Deterministic benchmark output. Wall-clock times live in [`BenchTimings`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub dataset_hash: String,
    pub cases: usize,
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BenchTimings {
    pub schema_version: u32,
    pub total_seconds: f64,
    /// Summed fold seconds per method.
    pub methods: Vec<(Method, f64)>,
}

impl BenchReport {
    pub fn row(&self, method: Method) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} cases, {}-fold CV, seeds {:?}",
            self.cases, self.config.folds, self.config.seeds
        );
        let _ = writeln!(out, "{:<20} {:>17} {:>17}", "method", "F1 micro", "F1 macro");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<20} {:>8.3} ± {:<6.3} {:>8.3} ± {:<6.3}",
                r.method.name(),
                r.micro_mean,
                r.micro_std,
                r.macro_mean,
                r.macro_std
            );
        }
        out
    }
}

fn naive_fold(dataset: &Dataset, plan: &FoldPlan, fold: usize) -> Result<FoldResult> {
    let lit = dataset.literature_matrix();
    let test = plan.test(fold);
    let preds = test
        .iter()
        .map(|&i| naive_match(&dataset.cases[i].symptom_vector, &lit))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = test.iter().map(|&i| dataset.cases[i].label.expect("labelled")).collect();
    let s = f1_scores(&preds, &labels, dataset.class_count())?;
    Ok(FoldResult {
        fold,
        seed: plan.seed,
        micro: s.micro,
        macro_f1: s.macro_f1,
        best_epoch: None,
        epochs_run: 0,
        curve: Vec::new(),
    })
}

/// Runs every method on every (seed, fold). Folds are trained in parallel when
/// several threads are available; results are merged by index, so output does
/// not depend on scheduling.
pub fn run_benchmark(dataset: &Dataset, config: &BenchConfig) -> Result<(BenchReport, BenchTimings)> {
    config.train.validate()?;
    if config.seeds.is_empty() || config.methods.is_empty() {
        return Err(Error::Contract("benchmark needs at least one seed and one method".into()));
    }
    let labels = dataset.labels()?;
    let plans: Vec<FoldPlan> = config
        .seeds
        .iter()
        .map(|&s| make_folds(&labels, config.folds, s))
        .collect::<Result<_>>()?;
    let mut methods = config.methods.clone();
    methods.sort_by_key(|m| m.rank());
    methods.dedup();

    let jobs: Vec<(Method, usize, usize)> = methods
        .iter()
        .flat_map(|&m| (0..plans.len()).flat_map(move |p| (0..config.folds).map(move |f| (m, p, f))))
        .collect();
    let started = Instant::now();
    let results: Vec<(FoldResult, f64)> = jobs
        .par_iter()
        .map(|&(method, p, fold)| {
            let t0 = Instant::now();
            let plan = &plans[p];
            let result = match method {
                Method::Naive => naive_fold(dataset, plan, fold)?,
                Method::Model(variant) => {
                    let mut train = config.train.clone();
                    train.model.variant = variant;
                    let seed = derive_seed(plan.seed, fold as u64);
                    let (fitted, scores) =
                        train_fold(dataset, &plan.train(fold), plan.test(fold), &train, seed)?;
                    FoldResult {
                        fold,
                        seed: plan.seed,
                        micro: scores.micro,
                        macro_f1: scores.macro_f1,
                        best_epoch: Some(fitted.best_epoch),
                        epochs_run: fitted.curve.len(),
                        curve: fitted.curve,
                    }
                }
            };
            let secs = t0.elapsed().as_secs_f64();
            log::info!(
                "{method} seed {} fold {fold}: micro {:.4} macro {:.4} ({} epochs, {secs:.1}s)",
                plan.seed,
                result.micro,
                result.macro_f1,
                result.epochs_run
            );
            Ok((result, secs))
        })
        .collect::<Result<_>>()?;

    let per_method = plans.len() * config.folds;
    let mut rows = Vec::new();
    let mut timings = BenchTimings {
        schema_version: BENCH_SCHEMA_VERSION,
        total_seconds: started.elapsed().as_secs_f64(),
        methods: Vec::new(),
    };
    for (m, chunk) in methods.iter().zip(results.chunks(per_method)) {
        let micro: Vec<f64> = chunk.iter().map(|(r, _)| r.micro).collect();
        let macro_: Vec<f64> = chunk.iter().map(|(r, _)| r.macro_f1).collect();
        let (micro_mean, micro_std) = mean_std(&micro);
        let (macro_mean, macro_std) = mean_std(&macro_);
        rows.push(BenchRow {
            method: *m,
            micro_mean,
            micro_std,
            macro_mean,
            macro_std,
            runs: chunk.iter().map(|(r, _)| r.clone()).collect(),
        });
        timings.methods.push((*m, chunk.iter().map(|(_, s)| s).sum()));
    }
    Ok((
        BenchReport {
            schema_version: BENCH_SCHEMA_VERSION,
            dataset_hash: dataset.content_hash()?,
            cases: dataset.cases.len(),
            config: BenchConfig {
                methods,
                ..config.clone()
            },
            rows,
        },
        timings,
    ))
}
