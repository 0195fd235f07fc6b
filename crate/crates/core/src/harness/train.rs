use super::adam::{adam_step, AdamState};
use super::config::ExperimentConfig;
use crate::autodiff::Tape;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::generators::generate;
use crate::model::{NjodeModel, PreparedPath};
use crate::objectives::{eval_metric, loss_on_tape, LossConfig, LossKind, NoiseBias};
use crate::oracles::oracle_trajectory;
use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::time::Instant;

/// Rows per forward pass during evaluation.
const EVAL_CHUNK: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub eval_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub epochs: Vec<EpochRecord>,
    /// Metric of the untrained model.
    pub initial_eval: f64,
    pub min_eval: f64,
    pub min_eval_epoch: usize,
    pub wall_clock_secs: f64,
    pub config: ExperimentConfig,
    pub config_hash: String,
}

pub struct TrainOutcome {
    pub report: RunReport,
    pub model: NjodeModel,
}

/// Hex SHA-256 of the canonical JSON form of `cfg`.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_string(cfg).expect("configuration serialises");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_or_generate(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.dataset {
        Some(p) => Dataset::read_jsonl(p),
        None => generate(&cfg.generator),
    }
}

/// Equidistant grid with `points + 1` nodes on `[0, horizon]`.
pub fn eval_grid(horizon: f64, points: usize) -> Vec<f64> {
    (0..=points).map(|i| horizon * i as f64 / points as f64).collect()
}

/// Test split prepared for repeated evaluation.
pub struct Evaluator {
    pub grid: Vec<f64>,
    pub prepared: Vec<PreparedPath>,
    pub oracle: Vec<Vec<Vec<f64>>>,
    pub loss: LossConfig,
    pub threads: usize,
}

impl Evaluator {
    pub fn new(
        model: &NjodeModel,
        dataset: &Dataset,
        range: std::ops::Range<usize>,
        eval_points: usize,
        loss: &LossConfig,
        threads: usize,
    ) -> Result<Self> {
        let grid = eval_grid(dataset.header.horizon, eval_points);
        let bias = loss.noise_bias();
        let bias = bias.as_ref().map(|b| b as &dyn NoiseBias);
        let mut prepared = Vec::with_capacity(range.len());
        let mut oracle = Vec::with_capacity(range.len());
        for p in &dataset.paths[range] {
            prepared.push(model.prepare(&p.framework, bias)?);
            oracle.push(oracle_trajectory(&dataset.header, p, &grid)?.values);
        }
        if prepared.is_empty() {
            return Err(Error::config("the test split is empty"));
        }
        Ok(Evaluator { grid, prepared, oracle, loss: loss.clone(), threads: threads.max(1) })
    }

    fn chunk(&self, model: &NjodeModel, paths: &[PreparedPath]) -> Result<(f64, Vec<Vec<Vec<f64>>>)> {
        let refs: Vec<&PreparedPath> = paths.iter().collect();
        let mut tape = Tape::new();
        let fwd = model.forward_batch(&mut tape, &refs, &self.grid, None)?;
        let loss = loss_on_tape(&mut tape, &self.loss, &refs, &fwd, 1)?;
        let mut preds = vec![Vec::with_capacity(self.grid.len()); refs.len()];
        for ob in &fwd.outputs {
            let m = tape.value(ob.left);
            for (r, row) in preds.iter_mut().enumerate() {
                row.push(m.row(r).to_vec());
            }
        }
        Ok((tape.scalar_value(loss), preds))
    }

    /// Test loss and evaluation metric of `model`.
    pub fn evaluate(&self, model: &NjodeModel) -> Result<(f64, f64)> {
        let chunks: Vec<&[PreparedPath]> = self.prepared.chunks(EVAL_CHUNK).collect();
        let results: Vec<Result<(f64, Vec<Vec<Vec<f64>>>)>> = if self.threads > 1 && chunks.len() > 1 {
            let per = chunks.len().div_ceil(self.threads);
            std::thread::scope(|s| {
                let handles: Vec<_> = chunks
                    .chunks(per)
                    .map(|group| s.spawn(move || group.iter().map(|c| self.chunk(model, c)).collect::<Vec<_>>()))
                    .collect();
                handles.into_iter().flat_map(|h| h.join().expect("evaluation worker panicked")).collect()
            })
        } else {
            chunks.iter().map(|c| self.chunk(model, c)).collect()
        };
        let mut loss = 0.0;
        let mut preds = Vec::with_capacity(self.prepared.len());
        for r in results {
            let (l, p) = r?;
            loss += l;
            preds.extend(p);
        }
        let n = self.prepared.len() as f64;
        Ok((loss / n, eval_metric(&self.oracle, &preds)?))
    }
}

pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dataset = load_or_generate(cfg)?;
    train_on(cfg, &dataset)
}

/// Trains on `dataset` (the first `train_frac` of its paths) and evaluates
/// on the rest after every epoch.
pub fn train_on(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut model = NjodeModel::new(cfg.model.clone(), dataset.header.dim, cfg.seed)?;
    let (train_range, test_range) = dataset.split(cfg.training.train_frac);
    if train_range.is_empty() {
        return Err(Error::config("the training split is empty"));
    }
    let bias = cfg.loss.noise_bias();
    let bias = bias.as_ref().map(|b| b as &dyn NoiseBias);
    let train_paths: Vec<PreparedPath> = dataset.paths[train_range]
        .iter()
        .map(|p| model.prepare(&p.framework, bias))
        .collect::<Result<_>>()?;
    let evaluator = Evaluator::new(&model, dataset, test_range, cfg.eval_points, &cfg.loss, cfg.threads)?;

    let (_, initial_eval) = evaluator.evaluate(&model)?;
    info!("untrained eval metric {initial_eval:.6e}");

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);
    let mut adam = AdamState::new(&model.params);
    let mut order: Vec<usize> = (0..train_paths.len()).collect();
    let mut records = Vec::with_capacity(cfg.training.epochs);

    for epoch in 1..=cfg.training.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.training.batch_size).enumerate() {
            let batch: Vec<&PreparedPath> = idx.iter().map(|&i| &train_paths[i]).collect();
            let mut tape = Tape::new();
            let fwd = model
                .forward_batch(&mut tape, &batch, &[], Some(&mut dropout_rng))
                .map_err(|e| at_batch(e, epoch, b))?;
            let loss = loss_on_tape(&mut tape, &cfg.loss, &batch, &fwd, batch.len())?;
            let value = tape.scalar_value(loss);
            if !value.is_finite() {
                return Err(Error::numerical(format!("non-finite loss in epoch {epoch}, batch {b}"), b));
            }
            loss_sum += value * batch.len() as f64;
            let grads = tape.backward(loss)?.param_grads(&model.params);
            adam_step(&mut model.params, &grads, &mut adam, &cfg.training.adam).map_err(|e| at_batch(e, epoch, b))?;
        }
        let train_loss = loss_sum / train_paths.len() as f64;
        let (test_loss, eval) = evaluator.evaluate(&model)?;
        info!("epoch {epoch}: train {train_loss:.6e} test {test_loss:.6e} eval {eval:.6e}");
        records.push(EpochRecord { epoch, train_loss, test_loss, eval_metric: eval });
    }

    let (min_eval_epoch, min_eval) = records
        .iter()
        .map(|r| (r.epoch, r.eval_metric))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    let report = RunReport {
        epochs: records,
        initial_eval,
        min_eval,
        min_eval_epoch,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
        config_hash: config_hash(cfg),
    };
    Ok(TrainOutcome { report, model })
}

fn at_batch(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Numerical { what, step } => {
            Error::Numerical { what: format!("{what} (epoch {epoch}, batch {batch})"), step }
        }
        other => other,
    }
}

/// One row of a loss comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: LossKind,
    pub min_eval: f64,
    pub report: RunReport,
}

/// Trains one model per loss variant on the same dataset with the same
/// seed.
pub fn compare_losses(cfg: &ExperimentConfig, dataset: &Dataset, variants: &[LossKind]) -> Result<Vec<ComparisonRow>> {
    variants
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            c.loss.kind = v;
            let out = train_on(&c, dataset)?;
            Ok(ComparisonRow { variant: v, min_eval: out.report.min_eval, report: out.report })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub zeta: f64,
    pub variant: LossKind,
    pub min_eval: f64,
}

/// Regenerates the dataset at every relative noise level and compares the
/// variants on it.
pub fn sweep(cfg: &ExperimentConfig, zetas: &[f64], variants: &[LossKind]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &z in zetas {
        let mut c = cfg.clone();
        c.generator.noise_scale = z;
        c.dataset = None;
        c.validate()?;
        let ds = generate(&c.generator)?;
        for r in compare_losses(&c, &ds, variants)? {
            info!("zeta {z}: {} min eval {:.6e}", r.variant.name(), r.min_eval);
            rows.push(SweepRow { zeta: z, variant: r.variant, min_eval: r.min_eval });
        }
    }
    Ok(rows)
}
