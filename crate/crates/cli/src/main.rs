use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;
use njode_core::harness::{
    compare_losses, eval_grid, load_or_generate, sweep, train_on, write_metrics_csv, write_oracle_csv,
    write_report_json, write_sweep_csv, write_trajectories_csv, write_trajectory_csv, Evaluator, ExperimentConfig,
    Profile,
};
use njode_core::oracles::oracle_trajectory;
use njode_core::Dataset;
use njode_core::{Error, GeneratorKind, LossKind, NjodeModel};
use serde_json::Value;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "njode", version, about = "Train and evaluate path-dependent neural jump ODEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Generate(Common),
    /// Train a model and write its report, metrics and plot data.
    Train(Common),
    /// Evaluate saved weights on the test split of a dataset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Weights written by `train`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Train one model per loss variant on the same dataset.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "standard,noise")]
        variants: Vec<String>,
    },
    /// Compare loss variants over a range of relative noise levels.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        zetas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "standard,noise")]
        variants: Vec<String>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Preset: bm_noisy, gbm_dependent, poisson_dependent or highdim_noisy.
    #[arg(long, default_value = "bm_noisy")]
    experiment: String,
    /// JSON file whose fields override the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value = "desk")]
    profile: String,
    #[arg(long)]
    threads: Option<usize>,
    /// standard, noise, bias or dtweighted.
    #[arg(long)]
    loss: Option<String>,
    /// Dataset file to use instead of generating one.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Error::config(msg).into()
}

fn resolve(c: &Common) -> anyhow::Result<ExperimentConfig> {
    let kind: GeneratorKind = c.experiment.parse()?;
    let profile: Profile = c.profile.parse()?;
    let mut cfg = ExperimentConfig::preset(kind, profile);
    if let Some(path) = &c.config {
        let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let patch: Value = serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let mut base = serde_json::to_value(&cfg)?;
        merge(&mut base, patch);
        cfg = serde_json::from_value(base).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    }
    if let Some(s) = c.seed {
        cfg = cfg.with_seed(s);
    }
    if let Some(t) = c.threads {
        cfg.threads = t.max(1);
    }
    if let Some(l) = &c.loss {
        cfg.loss.kind = l.parse()?;
    }
    if let Some(d) = &c.dataset {
        cfg.dataset = Some(d.clone());
    }
    if let Some(e) = c.epochs {
        cfg.training.epochs = e;
    }
    if let Some(n) = c.paths {
        cfg.generator.n_paths = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn parse_variants(v: &[String]) -> anyhow::Result<Vec<LossKind>> {
    Ok(v.iter().map(|s| s.trim().parse()).collect::<Result<_, _>>()?)
}

/// Test-set paths shown in `trajectories.csv`.
fn plot_ids(n_paths: usize, train_frac: f64) -> Vec<usize> {
    let start = ((n_paths as f64) * train_frac).round() as usize;
    (start..n_paths).take(5).collect()
}

/// Full model trajectories (`model_paths.csv`) and oracle left limits
/// (`oracle_paths.csv`) for the plotted paths.
fn write_path_exports(dir: &Path, ds: &Dataset, model: &NjodeModel, ids: &[usize], points: usize) -> anyhow::Result<()> {
    let grid = eval_grid(ds.header.horizon, points);
    let mut trs = Vec::new();
    let mut ors = Vec::new();
    for &i in ids {
        trs.push((i, model.forward_pass_at(&ds.paths[i].framework, &grid)?));
        ors.push((i, oracle_trajectory(&ds.header, &ds.paths[i], &grid)?));
    }
    let mut w = create(dir, "model_paths.csv")?;
    write_trajectory_csv(&trs.iter().map(|(i, t)| (*i, t)).collect::<Vec<_>>(), &mut w)?;
    w.flush()?;
    let mut w = create(dir, "oracle_paths.csv")?;
    let refs: Vec<_> = ors.iter().map(|(i, o)| (*i, o)).collect();
    write_oracle_csv(&refs, |i| ds.paths[i].framework.times().to_vec(), &mut w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = resolve(&c)?;
            std::fs::create_dir_all(&c.out)?;
            let ds = njode_core::generate(&cfg.generator)?;
            let path = c.out.join("dataset.jsonl");
            ds.write_jsonl(&path)?;
            println!("wrote {} paths to {}", ds.len(), path.display());
        }
        Command::Train(c) => {
            let cfg = resolve(&c)?;
            std::fs::create_dir_all(&c.out)?;
            let ds = load_or_generate(&cfg)?;
            let out = train_on(&cfg, &ds)?;
            write_report_json(&out.report, &c.out.join("report.json"))?;
            let mut w = create(&c.out, "metrics.csv")?;
            write_metrics_csv(&out.report, &mut w)?;
            w.flush()?;
            let mut w = create(&c.out, "trajectories.csv")?;
            let ids = plot_ids(ds.len(), cfg.training.train_frac);
            write_trajectories_csv(&ds, &out.model, &ids, cfg.eval_points, &mut w)?;
            w.flush()?;
            write_path_exports(&c.out, &ds, &out.model, &ids, cfg.eval_points)?;
            std::fs::write(c.out.join("model.json"), serde_json::to_string(&out.model)?)?;
            println!(
                "min eval metric {:.4e} at epoch {} ({:.1} s)",
                out.report.min_eval, out.report.min_eval_epoch, out.report.wall_clock_secs
            );
        }
        Command::Evaluate { common, model } => {
            let cfg = resolve(&common)?;
            std::fs::create_dir_all(&common.out)?;
            let text = std::fs::read_to_string(&model).with_context(|| format!("reading {}", model.display()))?;
            let model: NjodeModel =
                serde_json::from_str(&text).map_err(|e| config_error(format!("invalid model file: {e}")))?;
            let ds = load_or_generate(&cfg)?;
            let (_, test) = ds.split(cfg.training.train_frac);
            let ev = Evaluator::new(&model, &ds, test, cfg.eval_points, &cfg.loss, cfg.threads)?;
            let (test_loss, eval) = ev.evaluate(&model)?;
            let summary = serde_json::json!({ "test_loss": test_loss, "eval_metric": eval, "test_paths": ev.prepared.len() });
            std::fs::write(common.out.join("report.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
            let mut w = create(&common.out, "trajectories.csv")?;
            write_trajectories_csv(&ds, &model, &plot_ids(ds.len(), cfg.training.train_frac), cfg.eval_points, &mut w)?;
            w.flush()?;
            println!("eval metric {eval:.4e}, test loss {test_loss:.4e}");
        }
        Command::Compare { common, variants } => {
            let cfg = resolve(&common)?;
            let variants = parse_variants(&variants)?;
            std::fs::create_dir_all(&common.out)?;
            let ds = load_or_generate(&cfg)?;
            let rows = compare_losses(&cfg, &ds, &variants)?;
            std::fs::write(common.out.join("report.json"), serde_json::to_string_pretty(&rows)? + "\n")?;
            let mut w = create(&common.out, "compare.csv")?;
            writeln!(w, "variant,min_eval,min_eval_epoch")?;
            for r in &rows {
                writeln!(w, "{},{},{}", r.variant.name(), r.min_eval, r.report.min_eval_epoch)?;
                println!("{:>22}: min eval {:.4e}", r.variant.name(), r.min_eval);
            }
            w.flush()?;
        }
        Command::Sweep { common, zetas, variants } => {
            let cfg = resolve(&common)?;
            let variants = parse_variants(&variants)?;
            std::fs::create_dir_all(&common.out)?;
            let rows = sweep(&cfg, &zetas, &variants)?;
            let mut w = create(&common.out, "sweep.csv")?;
            write_sweep_csv(&rows, &mut w)?;
            w.flush()?;
            for r in &rows {
                println!("zeta {:<5} {:>22}: {:.4e}", r.zeta, r.variant.name(), r.min_eval);
            }
        }
    }
    info!("done");
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Numerical { .. }) => 3,
        Some(Error::Config(_) | Error::Usage(_) | Error::Format(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
