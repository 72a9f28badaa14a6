use super::config::{Cell, ExperimentConfig};
use super::eval::evaluate;
use super::train::{run_training, TrainedRun};
use crate::datagen::ClassGroup;
use crate::error::Result;
use crate::gating::{check_prop2, check_prop_b1, ModelVariant};
use crate::rng::RngSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Environment variable holding the worker count; defaults to the available parallelism.
pub const WORKERS_ENV: &str = "ICLAB_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(rename = "N")]
    pub n: u64,
    pub seed: u64,
    pub model: ModelVariant,
    pub split: String,
    pub context: String,
    pub class_group: String,
    pub err01: f64,
    pub ce: f64,
    pub n_samples: usize,
    pub error: String,
}

/// Visit-weighted mean of the final gate over the gate keys of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    #[serde(rename = "N")]
    pub n: u64,
    pub seed: u64,
    pub class_group: String,
    /// `relevant`, `irrelevant`, or `all`.
    pub context: String,
    pub mean_alpha: f64,
    pub keys: usize,
    pub visits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    #[serde(rename = "N")]
    pub n: u64,
    pub seed: u64,
    pub model: ModelVariant,
    pub steps: usize,
    pub prop2_lhs: f64,
    pub prop2_rhs: f64,
    pub prop2_holds: bool,
    pub b1_lhs: f64,
    pub b1_rhs: f64,
    pub b1_holds: bool,
    pub fallbacks: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepOutput {
    pub results: Vec<ResultRow>,
    pub alpha: Vec<AlphaRow>,
    pub checks: Vec<CheckRow>,
}

struct JobOutput {
    results: Vec<ResultRow>,
    alpha: Vec<AlphaRow>,
    checks: Vec<CheckRow>,
}

fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn result_rows(n: u64, seed: u64, model: ModelVariant, cells: &[Cell], outcome: std::result::Result<Vec<(f64, f64, usize)>, String>) -> Vec<ResultRow> {
    cells
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let (err01, ce, n_samples, error) = match &outcome {
                Ok(v) => (v[i].0, v[i].1, v[i].2, String::new()),
                Err(e) => (f64::NAN, f64::NAN, 0, e.clone()),
            };
            ResultRow {
                n,
                seed,
                model,
                split: cell.split.as_str().into(),
                context: cell.context.as_str().into(),
                class_group: cell.class_group.as_str().into(),
                err01,
                ce,
                n_samples,
                error,
            }
        })
        .collect()
}

/// Gate summaries by query class group and by whether any context input shares the query key.
pub fn alpha_summary(run: &TrainedRun) -> Vec<AlphaRow> {
    let mut acc: BTreeMap<(ClassGroup, &'static str), (f64, u64, usize)> = BTreeMap::new();
    for (key, entry) in run.learner.alpha.entries() {
        let Some(class) = key.query.class() else { continue };
        let Ok(group) = run.base.group_of(class) else { continue };
        let ctx = match key.relevant_count {
            Some(0) => "irrelevant",
            Some(_) => "relevant",
            None => "all",
        };
        for label in if ctx == "all" { vec!["all"] } else { vec![ctx, "all"] } {
            let e = acc.entry((group, label)).or_insert((0.0, 0, 0));
            e.0 += entry.alpha * entry.steps as f64;
            e.1 += entry.steps;
            e.2 += 1;
        }
    }
    let mut rows = Vec::new();
    for group in [ClassGroup::High, ClassGroup::Low] {
        for ctx in ["relevant", "irrelevant", "all"] {
            let (sum, visits, keys) = acc.get(&(group, ctx)).copied().unwrap_or((0.0, 0, 0));
            rows.push(AlphaRow {
                n: run.summary.n,
                seed: run.summary.seed,
                class_group: group.as_str().into(),
                context: ctx.into(),
                mean_alpha: if visits > 0 { sum / visits as f64 } else { f64::NAN },
                keys,
                visits,
            });
        }
    }
    rows
}

fn run_job(config: &ExperimentConfig, n: u64, seed: u64, model: ModelVariant) -> JobOutput {
    let cells = &config.eval.conditions;
    let gated = model == ModelVariant::Gated;
    let trained = run_training(config, model, n, seed, gated);
    let run = match trained {
        Ok(run) => run,
        Err(e) => {
            let msg = e.to_string();
            let checks = if gated {
                vec![CheckRow {
                    n,
                    seed,
                    model,
                    steps: 0,
                    prop2_lhs: f64::NAN,
                    prop2_rhs: f64::NAN,
                    prop2_holds: false,
                    b1_lhs: f64::NAN,
                    b1_rhs: f64::NAN,
                    b1_holds: false,
                    fallbacks: 0,
                    error: msg.clone(),
                }]
            } else {
                Vec::new()
            };
            return JobOutput { results: result_rows(n, seed, model, cells, Err(msg)), alpha: Vec::new(), checks };
        }
    };
    let report = evaluate(&run.learner, &run.base, &config.ctx, cells, config.eval.samples_per_cell, RngSpec::new(seed, 0))
        .map(|r| r.cells.iter().map(|c| (c.err01, c.ce, c.n)).collect())
        .map_err(|e| e.to_string());
    let results = result_rows(n, seed, model, cells, report);

    let mut checks = Vec::new();
    let mut alpha = Vec::new();
    if gated {
        alpha = alpha_summary(&run);
        let ledger = run.learner.ledger.as_ref().expect("gated runs keep a ledger");
        let row = match (check_prop2(ledger), check_prop_b1(ledger)) {
            (Ok(p2), Ok(b1)) => CheckRow {
                n,
                seed,
                model,
                steps: ledger.len(),
                prop2_lhs: p2.lhs,
                prop2_rhs: p2.rhs,
                prop2_holds: p2.holds,
                b1_lhs: b1.lhs,
                b1_rhs: b1.rhs,
                b1_holds: b1.holds,
                fallbacks: run.summary.fallbacks,
                error: String::new(),
            },
            (Err(e), _) | (_, Err(e)) => CheckRow {
                n,
                seed,
                model,
                steps: ledger.len(),
                prop2_lhs: f64::NAN,
                prop2_rhs: f64::NAN,
                prop2_holds: false,
                b1_lhs: f64::NAN,
                b1_rhs: f64::NAN,
                b1_holds: false,
                fallbacks: run.summary.fallbacks,
                error: e.to_string(),
            },
        };
        checks.push(row);
    }
    JobOutput { results, alpha, checks }
}

/// Trains and evaluates every `(N, seed, model)` job on a bounded pool. Output order
/// follows the config's N list, then seeds, then variants, regardless of scheduling.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    config.validate()?;
    let mut jobs = Vec::new();
    for &n in &config.sweep.n_values {
        for &seed in &config.sweep.seeds {
            for &model in &config.model.variants {
                jobs.push((n, seed, model));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| crate::error::Error::Malformed(format!("worker pool: {e}")))?;
    let outputs: Vec<JobOutput> = pool.install(|| jobs.par_iter().map(|&(n, seed, model)| run_job(config, n, seed, model)).collect());
    let mut out = SweepOutput::default();
    for job in outputs {
        out.results.extend(job.results);
        out.alpha.extend(job.alpha);
        out.checks.extend(job.checks);
    }
    Ok(out)
}

/// Header order of the results CSV.
pub const RESULT_COLUMNS: [&str; 10] = ["N", "seed", "model", "split", "context", "class_group", "err01", "ce", "n", "error"];

pub fn write_results_csv<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULT_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.seed.to_string(),
            r.model.as_str().to_string(),
            r.split.clone(),
            r.context.clone(),
            r.class_group.clone(),
            r.err01.to_string(),
            r.ce.to_string(),
            r.n_samples.to_string(),
            r.error.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv<R: std::io::Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != RESULT_COLUMNS {
        return Err(crate::error::Error::Malformed(format!("unexpected results header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let bad = |what: &str| crate::error::Error::Malformed(format!("bad {what} in results row {:?}", rec));
        let model: ModelVariant = serde_json::from_value(serde_json::Value::String(field(2).into())).map_err(|_| bad("model"))?;
        rows.push(ResultRow {
            n: field(0).parse().map_err(|_| bad("N"))?,
            seed: field(1).parse().map_err(|_| bad("seed"))?,
            model,
            split: field(3).into(),
            context: field(4).into(),
            class_group: field(5).into(),
            err01: field(6).parse().map_err(|_| bad("err01"))?,
            ce: field(7).parse().map_err(|_| bad("ce"))?,
            n_samples: field(8).parse().map_err(|_| bad("n"))?,
            error: field(9).into(),
        });
    }
    Ok(rows)
}

fn write_serde_csv<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_alpha_csv<W: Write>(rows: &[AlphaRow], writer: W) -> Result<()> {
    write_serde_csv(rows, writer)
}

pub fn write_checks_csv<W: Write>(rows: &[CheckRow], writer: W) -> Result<()> {
    write_serde_csv(rows, writer)
}

pub fn read_alpha_csv<R: std::io::Read>(reader: R) -> Result<Vec<AlphaRow>> {
    Ok(csv::Reader::from_reader(reader).deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn read_checks_csv<R: std::io::Read>(reader: R) -> Result<Vec<CheckRow>> {
    Ok(csv::Reader::from_reader(reader).deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Sibling paths for the gate summary and regret checks: `x.csv` → `x.alpha.csv`, `x.checks.csv`.
pub fn sibling_paths(results: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let stem = results.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    let dir = results.parent().unwrap_or_else(|| Path::new(""));
    (dir.join(format!("{stem}.alpha.csv")), dir.join(format!("{stem}.checks.csv")))
}

/// Writes the results CSV at `path` plus the gate and check CSVs next to it, creating
/// the directory if needed.
pub fn write_sweep(out: &SweepOutput, path: &Path) -> Result<()> {
    let (alpha_path, checks_path) = sibling_paths(path);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_results_csv(&out.results, std::fs::File::create(path)?)?;
    write_alpha_csv(&out.alpha, std::fs::File::create(alpha_path)?)?;
    write_checks_csv(&out.checks, std::fs::File::create(checks_path)?)?;
    Ok(())
}
