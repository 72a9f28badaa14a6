use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use iclab::bounds::{bound_curves, noise_tradeoff};
use iclab::datagen::BaseDistributionSpec;
use iclab::example::DatasetRecord;
use iclab::gating::{check_prop2, check_prop_b1, online_to_batch_check, online_to_batch_check_with, ModelVariant, RegretLedger};
use iclab::harness::{emit_plots, run_sweep, run_training, training_context, training_example, write_sweep, ExperimentConfig};
use iclab::predictors::InputKey;
use iclab::SimplexVector;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "iclab", version, about = "Gated in-context / in-weight learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump a training stream as JSON lines
    GenData(GenData),
    /// Run one training job and write its regret ledger
    Train(Train),
    /// Run the full (N, seed, model) grid
    Sweep(Sweep),
    /// Write the in-context / in-weight bound curves
    Bounds(Bounds),
    /// Verify the regret decompositions on a ledger CSV
    Check(Check),
    /// Render SVG panels from a results CSV
    Plot(Plot),
    /// Print the label-flip error table
    NoiseTradeoff(NoiseTradeoff),
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    IcOnly,
    IwOnly,
    Gated,
}

impl From<Variant> for ModelVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::IcOnly => ModelVariant::IcOnly,
            Variant::IwOnly => ModelVariant::IwOnly,
            Variant::Gated => ModelVariant::Gated,
        }
    }
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (JSON); the built-in preset when omitted
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(p) => ExperimentConfig::from_path(p).with_context(|| format!("reading config {}", p.display())),
            None => Ok(ExperimentConfig::default_preset()),
        }
    }
}

#[derive(Args)]
struct GenData {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, short)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "gated")]
    model: Variant,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Train {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, short)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "gated")]
    model: Variant,
    /// Ledger CSV destination
    #[arg(long)]
    ledger: PathBuf,
    /// Optional in-weight table snapshot (JSON)
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

#[derive(Args)]
struct Sweep {
    #[command(flatten)]
    config: ConfigArg,
    /// Results CSV; gate summaries and checks are written next to it
    #[arg(long)]
    out: PathBuf,
    /// Also render plots into this directory
    #[arg(long)]
    plots: Option<PathBuf>,
}

#[derive(Args)]
struct Bounds {
    #[arg(long = "L", default_value_t = 8)]
    context_len: usize,
    #[arg(long, default_value_t = 0.001)]
    epsilon: f64,
    #[arg(long = "B", default_value_t = 1.0)]
    bound: f64,
    #[arg(long = "C", default_value_t = 10)]
    num_classes: usize,
    /// Mass of the majority class in y*; the rest is spread evenly
    #[arg(long, default_value_t = 0.999)]
    y_major: f64,
    /// Largest N_x on the in-weight curve
    #[arg(long, default_value_t = 10_000)]
    n_max: u64,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct Check {
    #[arg(long)]
    ledger: PathBuf,
    #[arg(long = "C", default_value_t = 10)]
    num_classes: usize,
    /// In-weight key for the online-to-batch check, e.g. `c3`
    #[arg(long)]
    key: Option<String>,
    /// Label distribution of the key (comma-separated); otherwise taken from --config and --seed
    #[arg(long, value_delimiter = ',')]
    y_star: Option<Vec<f64>>,
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Plot {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NoiseTradeoff {
    /// Flip probabilities
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.05, 0.1, 0.2, 0.25, 0.3, 0.4])]
    p: Vec<f64>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
        Command::Bounds(a) => bounds(a),
        Command::Check(a) => check(a),
        Command::Plot(a) => {
            for p in emit_plots(&a.results, &a.out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::NoiseTradeoff(a) => {
            println!("p,iwl_err,icl_independent,icl_anticorrelated,icl_correlated");
            for p in a.p {
                let t = noise_tradeoff(p)?;
                println!("{},{},{},{},{}", t.p, t.iwl_err, t.icl_independent, t.icl_anticorrelated, t.icl_correlated);
            }
            Ok(())
        }
    }
}

fn gen_data(a: GenData) -> Result<()> {
    let config = a.config.load()?;
    let base = BaseDistributionSpec::from_seed(config.base.clone(), a.seed)?;
    let ctx = training_context(&config, a.model.into());
    let mut w = BufWriter::new(File::create(&a.out)?);
    for t in 0..a.n {
        let (ex, _) = training_example(&base, &ctx, a.seed, t)?;
        serde_json::to_writer(&mut w, &DatasetRecord::from_example(t, &ex))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn train(a: Train) -> Result<()> {
    let config = a.config.load()?;
    let run = run_training(&config, a.model.into(), a.n, a.seed, true)?;
    let ledger = run.learner.ledger.as_ref().expect("ledger requested");
    ledger.write_csv(BufWriter::new(File::create(&a.ledger)?))?;
    if let Some(path) = &a.snapshot {
        std::fs::write(path, run.learner.iw.to_snapshot_json()?)?;
    }
    let mut report = serde_json::json!({ "summary": run.summary });
    if !ledger.is_empty() {
        report["prop2"] = serde_json::to_value(check_prop2(ledger)?)?;
        report["prop_b1"] = serde_json::to_value(check_prop_b1(ledger)?)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn sweep(a: Sweep) -> Result<()> {
    let config = a.config.load()?;
    let out = run_sweep(&config)?;
    write_sweep(&out, &a.out)?;
    let failed = out.checks.iter().filter(|c| !(c.prop2_holds && c.b1_holds)).count();
    eprintln!("{} result rows, {} gated ledgers checked, {} failed", out.results.len(), out.checks.len(), failed);
    if let Some(dir) = &a.plots {
        emit_plots(&a.out, dir)?;
    }
    Ok(())
}

fn bounds(a: Bounds) -> Result<()> {
    if a.num_classes < 2 {
        bail!("need at least two classes");
    }
    let rest = (1.0 - a.y_major) / (a.num_classes - 1) as f64;
    let mut y = vec![rest; a.num_classes];
    y[0] = a.y_major;
    let y_star = SimplexVector::new(y)?;
    let ks: Vec<usize> = (0..=a.context_len).collect();
    let steps = 40;
    let mut ns: Vec<u64> = (0..=steps).map(|i| (a.n_max as f64).powf(i as f64 / steps as f64).round().max(1.0) as u64).collect();
    ns.dedup();
    let table = bound_curves(a.context_len, a.epsilon, a.bound, a.num_classes, &y_star, &ks, &ns)?;
    table.write_csv(File::create(&a.csv)?)?;
    if let Some(svg) = &a.svg {
        table.write_svg(svg)?;
    }
    Ok(())
}

fn check(a: Check) -> Result<()> {
    let ledger = RegretLedger::read_csv(File::open(&a.ledger)?, a.num_classes)?;
    let mut report = serde_json::json!({
        "steps": ledger.len(),
        "prop2": check_prop2(&ledger)?,
        "prop_b1": check_prop_b1(&ledger)?,
    });
    if let Some(key) = &a.key {
        let key: InputKey = key.parse()?;
        let o2b = match &a.y_star {
            Some(y) => online_to_batch_check_with(&ledger, &key, &SimplexVector::new(y.clone())?)?,
            None => {
                let config = a.config.load()?;
                let base = BaseDistributionSpec::from_seed(config.base, a.seed)?;
                online_to_batch_check(&ledger, &key, &base)?
            }
        };
        report["online_to_batch"] = serde_json::to_value(o2b)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
