//! Training objectives and evaluation metrics.
//!
//! Every loss exists twice: as a plain reduction over finished
//! trajectories and as a graph on the autodiff tape built from a batched
//! forward pass. Both follow the same formulas term by term.

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::model::{BatchForward, PreparedPath, Trajectory};
use crate::observation::ObservationFramework;
use log::warn;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

pub const DEFAULT_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Distances after and before each jump, square-rooted norms.
    Standard,
    /// Squared distance between the noisy observation and the left limit.
    NoiseAdapted,
    /// Noise-adapted with targets shifted by a known noise bias.
    BiasAdjusted,
    /// Standard terms weighted by the time since the previous observation.
    DtWeightedStandard,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Standard => "standard",
            LossKind::NoiseAdapted => "noise_adapted",
            LossKind::BiasAdjusted => "bias_adjusted",
            LossKind::DtWeightedStandard => "dt_weighted_standard",
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(LossKind::Standard),
            "noise" | "noise_adapted" => Ok(LossKind::NoiseAdapted),
            "bias" | "bias_adjusted" => Ok(LossKind::BiasAdjusted),
            "dtweighted" | "dt_weighted" | "dt_weighted_standard" => Ok(LossKind::DtWeightedStandard),
            other => Err(Error::config(format!("unknown loss variant `{other}`"))),
        }
    }
}

/// Bias of the observation noise given the information before an
/// observation.
pub trait NoiseBias: Send + Sync {
    /// Bias vector for observation `i` of `fw`; may only look at
    /// observations before index `i`.
    fn bias(&self, fw: &ObservationFramework, i: usize) -> Vec<f64>;
}

/// The same bias at every observation.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantBias(pub Vec<f64>);

impl NoiseBias for ConstantBias {
    fn bias(&self, fw: &ObservationFramework, _i: usize) -> Vec<f64> {
        if self.0.len() == 1 {
            vec![self.0[0]; fw.dim()]
        } else {
            self.0.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Added to every residual component inside the norms of the standard
    /// loss.
    pub eps: f64,
    /// Constant noise bias used by the bias-adjusted variant (one value per
    /// coordinate, or a single value for all).
    pub bias: Vec<f64>,
    /// Moment order the targets refer to (1: the mean).
    pub moment: u32,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { kind: LossKind::NoiseAdapted, eps: DEFAULT_EPS, bias: vec![], moment: 1 }
    }
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        LossConfig { kind, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps < 0.0 || !self.eps.is_finite() {
            return Err(Error::config("loss eps must be finite and non-negative"));
        }
        if matches!(self.kind, LossKind::Standard | LossKind::DtWeightedStandard) && self.eps == 0.0 {
            return Err(Error::config("the standard loss needs eps > 0"));
        }
        if self.moment == 0 {
            return Err(Error::config("moment order must be at least 1"));
        }
        Ok(())
    }

    /// Bias applied to training targets, if any.
    pub fn noise_bias(&self) -> Option<ConstantBias> {
        (self.kind == LossKind::BiasAdjusted && !self.bias.is_empty()).then(|| ConstantBias(self.bias.clone()))
    }
}

/// Observed indices after time 0 paired with their event position in the
/// trajectory.
fn observed(fw: &ObservationFramework, traj: &Trajectory) -> Result<Vec<usize>> {
    let idx: Vec<usize> = (1..fw.times().len()).filter(|&i| fw.is_observed(i)).collect();
    if traj.obs_times.len() != idx.len() + 1 || traj.pre_jump.len() != traj.obs_times.len() {
        return Err(Error::usage("trajectory does not align with its observation framework"));
    }
    Ok(idx)
}

fn masked_residual(fw: &ObservationFramework, i: usize, y: &[f64], shift: &[f64], eps: f64) -> Vec<f64> {
    fw.values()[i]
        .iter()
        .zip(&fw.masks()[i])
        .zip(y)
        .enumerate()
        .map(|(j, ((&x, &m), &yv))| {
            let r = if m { x - shift.get(j).copied().unwrap_or(0.0) - yv } else { 0.0 };
            r + eps
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

enum Weighting {
    PerObservation,
    TimeStep,
}

fn reduce<F>(batch: &[(&ObservationFramework, &Trajectory)], weighting: Weighting, term: F) -> Result<f64>
where
    F: Fn(&ObservationFramework, &Trajectory, usize, usize) -> f64,
{
    if batch.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    let mut total = 0.0;
    for (j, (fw, traj)) in batch.iter().enumerate() {
        let idx = observed(fw, traj)?;
        if idx.is_empty() {
            warn!("path {j} has no observations after time 0; it contributes 0 to the loss");
            continue;
        }
        let n = idx.len() as f64;
        let mut s = 0.0;
        for (k, &i) in idx.iter().enumerate() {
            let t = term(fw, traj, i, k + 1);
            s += match weighting {
                Weighting::PerObservation => t / n,
                Weighting::TimeStep => (fw.times()[i] - fw.times()[i - 1]) * t,
            };
        }
        total += s;
    }
    Ok(total / batch.len() as f64)
}

fn standard_term(fw: &ObservationFramework, traj: &Trajectory, i: usize, k: usize, eps: f64) -> f64 {
    let post = norm(&masked_residual(fw, i, &traj.post_jump[k], &[], eps));
    let pre = norm(&masked_residual(fw, i, &traj.pre_jump[k], &[], eps));
    (post + pre).powi(2)
}

pub fn standard_loss(batch: &[(&ObservationFramework, &Trajectory)], eps: f64) -> Result<f64> {
    reduce(batch, Weighting::PerObservation, |fw, tr, i, k| standard_term(fw, tr, i, k, eps))
}

pub fn noise_adapted_loss(batch: &[(&ObservationFramework, &Trajectory)]) -> Result<f64> {
    reduce(batch, Weighting::PerObservation, |fw, tr, i, k| {
        sq_norm(&masked_residual(fw, i, &tr.pre_jump[k], &[], 0.0))
    })
}

pub fn bias_adjusted_loss(batch: &[(&ObservationFramework, &Trajectory)], beta: &dyn NoiseBias) -> Result<f64> {
    reduce(batch, Weighting::PerObservation, |fw, tr, i, k| {
        let b = beta.bias(fw, i);
        sq_norm(&masked_residual(fw, i, &tr.pre_jump[k], &b, 0.0))
    })
}

pub fn dt_weighted_standard_loss(batch: &[(&ObservationFramework, &Trajectory)], eps: f64) -> Result<f64> {
    reduce(batch, Weighting::TimeStep, |fw, tr, i, k| standard_term(fw, tr, i, k, eps))
}

/// Loss of `cfg` on finished trajectories.
pub fn loss_value(cfg: &LossConfig, batch: &[(&ObservationFramework, &Trajectory)]) -> Result<f64> {
    match cfg.kind {
        LossKind::Standard => standard_loss(batch, cfg.eps),
        LossKind::NoiseAdapted => noise_adapted_loss(batch),
        LossKind::BiasAdjusted => match cfg.noise_bias() {
            Some(b) => bias_adjusted_loss(batch, &b),
            None => noise_adapted_loss(batch),
        },
        LossKind::DtWeightedStandard => dt_weighted_standard_loss(batch, cfg.eps),
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Bias of `O^q` as an estimate of `X^q` for additive noise independent of
/// the process: `sum_{j=1}^q C(q, j) E[X^{q-j} | A] E[eps^j]`.
///
/// `noise_moments[j - 1]` is `E[eps^j]`; `lower_moments[p]` is
/// `E[X^p | A]` for `p < q` (`lower_moments[0]` is 1).
pub fn moment_bias(q: u32, noise_moments: &[f64], lower_moments: &[f64]) -> Result<f64> {
    if q == 0 {
        return Err(Error::usage("moment order must be at least 1"));
    }
    if noise_moments.len() < q as usize {
        return Err(Error::usage(format!("need {q} noise moments, got {}", noise_moments.len())));
    }
    if lower_moments.len() < q as usize {
        return Err(Error::usage(format!(
            "need conditional moments of order 0..{}, got {}",
            q - 1,
            lower_moments.len()
        )));
    }
    Ok((1..=q)
        .map(|j| binomial(q, j) * lower_moments[(q - j) as usize] * noise_moments[(j - 1) as usize])
        .sum())
}

/// Monte Carlo estimate of the pseudo metric at the `k`-th observation.
///
/// Entry `p` of both slices is the left limit at the `k`-th observation of
/// path `p`, or `None` when that path has fewer than `k` observations. The
/// normalising constant is the inverse empirical frequency of paths with at
/// least `k` observations; `Ok(None)` if there is no such path.
pub fn empirical_dk(oracle: &[Option<Vec<f64>>], model: &[Option<Vec<f64>>]) -> Result<Option<f64>> {
    if oracle.len() != model.len() {
        return Err(Error::usage("oracle and model cover different numbers of paths"));
    }
    let n = oracle.len() as f64;
    let mut sum = 0.0;
    let mut hits = 0usize;
    for (o, m) in oracle.iter().zip(model) {
        match (o, m) {
            (Some(o), Some(m)) => {
                let d: Vec<f64> = o.iter().zip(m).map(|(a, b)| a - b).collect();
                sum += norm(&d);
                hits += 1;
            }
            (None, None) => {}
            _ => return Err(Error::usage("oracle and model disagree on the observation count")),
        }
    }
    if hits == 0 {
        return Ok(None);
    }
    let c0 = n / hits as f64;
    Ok(Some(c0 * sum / n))
}

/// Mean over paths and grid points of the squared distance between oracle
/// and model left limits. `oracle[p][g]` and `model[p][g]` are vectors.
pub fn eval_metric(oracle: &[Vec<Vec<f64>>], model: &[Vec<Vec<f64>>]) -> Result<f64> {
    if oracle.len() != model.len() || oracle.is_empty() {
        return Err(Error::usage("oracle and model cover different (or no) paths"));
    }
    let mut total = 0.0;
    for (o, m) in oracle.iter().zip(model) {
        if o.len() != m.len() || o.is_empty() {
            return Err(Error::usage("oracle and model grids differ"));
        }
        let mut s = 0.0;
        for (a, b) in o.iter().zip(m) {
            if a.len() != b.len() {
                return Err(Error::usage("oracle and model dimensions differ"));
            }
            s += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
        total += s / o.len() as f64;
    }
    Ok(total / oracle.len() as f64)
}

/// Builds the loss of `cfg` on `tape` from a batched forward pass.
///
/// Paths are weighted `1 / n_paths`; pass the batch size for a batch mean.
pub fn loss_on_tape(
    tape: &mut Tape,
    cfg: &LossConfig,
    paths: &[&PreparedPath],
    fwd: &BatchForward,
    n_paths: usize,
) -> Result<Var> {
    let d = paths.first().map_or(0, |p| p.dim());
    let mut total: Option<Var> = None;
    for eb in &fwd.events {
        let k = eb.rows.len();
        let mut target = Matrix::zeros(k, d);
        let mut mask = Matrix::zeros(k, d);
        let mut weight = vec![0.0; k];
        for (q, (&r, &e)) in eb.rows.iter().zip(&eb.events).enumerate() {
            let p = paths[r];
            let ev = &p.events[e];
            target.row_mut(q).copy_from_slice(&ev.target);
            mask.row_mut(q).copy_from_slice(&ev.mask);
            weight[q] = match cfg.kind {
                LossKind::DtWeightedStandard => ev.dt_prev,
                _ => 1.0 / p.n_obs() as f64,
            } / n_paths as f64;
        }
        let tgt = tape.constant(target);
        let term = match cfg.kind {
            LossKind::NoiseAdapted | LossKind::BiasAdjusted => {
                let r = tape.sub(tgt, eb.pre)?;
                let r = tape.mul_const(r, mask)?;
                let sq = tape.square(r);
                let w = Matrix::from_vec(k, d, weight.iter().flat_map(|&w| std::iter::repeat_n(w, d)).collect());
                tape.weighted_sum(sq, w)?
            }
            LossKind::Standard | LossKind::DtWeightedStandard => {
                let norm_of = |tape: &mut Tape, y: Var| -> Result<Var> {
                    let r = tape.sub(tgt, y)?;
                    let r = tape.mul_const(r, mask.clone())?;
                    let r = tape.add_scalar(r, cfg.eps);
                    Ok(tape.row_norm(r))
                };
                let a = norm_of(tape, eb.post)?;
                let b = norm_of(tape, eb.pre)?;
                let s = tape.add(a, b)?;
                let sq = tape.square(s);
                tape.weighted_sum(sq, Matrix::from_vec(k, 1, weight))?
            }
        };
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    Ok(match total {
        Some(t) => t,
        None => tape.constant(Matrix::scalar(0.0)),
    })
}
