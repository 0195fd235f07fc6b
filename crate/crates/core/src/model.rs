//! The path-dependent neural jump ODE.
//!
//! A latent state `H` starts at `rho(0, 0, sig(0), X_0)`, follows explicit
//! Euler steps of the bounded vector field `f(H, s, tau(s), sig, X_0)`
//! between observations and is replaced by the bounded jump network
//! `rho(H_-, t_i, sig_i, X_0, x_i, M_i)` at every observation. The output
//! is `Y = g(H)`. Signatures are taken of the interpolated observation
//! process (minus `X_0`) up to the last observation and only change at
//! observation times, so they are precomputed once per path.
//!
//! A batch of paths is integrated in lock-step on the union of their time
//! points; rows without a point at the current time take a zero-length
//! step.

use crate::autodiff::{Activation, DenseNetwork, Matrix, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::objectives::NoiseBias;
use crate::observation::{ObservationFramework, TIME_EPS};
use crate::signature::{signature_len, TruncatedSignature};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Dimension of the latent state `H`.
    pub latent_dim: usize,
    /// Hidden widths of the vector field and jump networks.
    pub hidden: Vec<usize>,
    /// Hidden widths of the readout (empty: linear readout).
    pub readout_hidden: Vec<usize>,
    pub activation: Activation,
    pub sig_level: usize,
    /// Euler step size.
    pub step: f64,
    /// Output bound of the vector field network.
    pub ode_bound: f64,
    /// Output bound of the jump network.
    pub jump_bound: f64,
    /// Feed the pre-jump latent state to the jump network.
    pub recurrent: bool,
    /// Add the first `d_X` latent coordinates to the readout output.
    pub residual_readout: bool,
    /// Keep the observation-count coordinates in the signature input.
    pub include_counts: bool,
    /// Dropout rate on hidden activations during training.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent_dim: 100,
            hidden: vec![100],
            readout_hidden: vec![],
            activation: Activation::Relu,
            sig_level: 3,
            step: 0.01,
            ode_bound: 100.0,
            jump_bound: 100.0,
            recurrent: true,
            residual_readout: true,
            include_counts: false,
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    /// Dimension of the path whose signature is fed to the networks.
    pub fn signature_dim(&self, data_dim: usize) -> usize {
        data_dim * if self.include_counts { 2 } else { 1 } + 1
    }

    pub fn signature_width(&self, data_dim: usize) -> usize {
        signature_len(self.signature_dim(data_dim), self.sig_level)
    }

    pub fn validate(&self, data_dim: usize) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::config("latent dimension must be positive"));
        }
        if !(self.step > 0.0) {
            return Err(Error::config("Euler step must be positive"));
        }
        if !(self.ode_bound > 0.0) || !(self.jump_bound > 0.0) {
            return Err(Error::config("output bounds must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout rate must lie in [0, 1)"));
        }
        if self.residual_readout && data_dim > self.latent_dim {
            return Err(Error::config("residual readout needs d_X <= latent dimension"));
        }
        TruncatedSignature::trivial(self.signature_dim(data_dim), self.sig_level)?;
        Ok(())
    }
}

/// Data-only features of one observation event.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedEvent {
    /// Index into the framework.
    pub index: usize,
    pub time: f64,
    pub signature: Vec<f64>,
    /// Last observed value per coordinate.
    pub filled: Vec<f64>,
    pub mask: Vec<f64>,
    /// Loss target `O - beta` (0 where unobserved).
    pub target: Vec<f64>,
    /// Distance to the previous observation time of the framework.
    pub dt_prev: f64,
}

/// A path reduced to what the forward pass and the losses need.
///
/// Only observation times at which something is observed become events;
/// times with an all-zero mask still shape the interpolated process and
/// hence the signatures.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedPath {
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub events: Vec<PreparedEvent>,
}

impl PreparedPath {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// Number of loss terms (events after time 0).
    pub fn n_obs(&self) -> usize {
        self.events.len() - 1
    }
}

/// Signatures of the interpolated process cut at every observation time,
/// built by extending one running signature segment by segment.
pub fn running_signatures(fw: &ObservationFramework, cfg: &ModelConfig) -> Result<Vec<Vec<f64>>> {
    let path = fw.vertex_list(fw.times()[fw.n()]);
    let pts = path.signature_input(fw.initial_value(), cfg.include_counts);
    let mut sig = TruncatedSignature::trivial(pts[0].len(), cfg.sig_level)?;
    let mut out = Vec::with_capacity(fw.times().len());
    out.push(sig.coeffs().to_vec());
    for w in pts.windows(2) {
        let inc: Vec<f64> = w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect();
        sig.extend_linear(&inc)?;
        out.push(sig.coeffs().to_vec());
    }
    Ok(out)
}

pub fn prepare_path(
    fw: &ObservationFramework,
    cfg: &ModelConfig,
    bias: Option<&dyn NoiseBias>,
) -> Result<PreparedPath> {
    let sigs = running_signatures(fw, cfg)?;
    let mut events = Vec::new();
    for i in 0..fw.times().len() {
        if i > 0 && !fw.is_observed(i) {
            continue;
        }
        let mask: Vec<f64> = fw.masks()[i].iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let mut target = fw.values()[i].clone();
        if let (Some(b), true) = (bias, i > 0) {
            let beta = b.bias(fw, i);
            for ((t, bv), m) in target.iter_mut().zip(beta).zip(&mask) {
                *t = (*t - bv) * m;
            }
        }
        events.push(PreparedEvent {
            index: i,
            time: fw.times()[i],
            signature: sigs[i].clone(),
            filled: fw.filled_values(i),
            mask,
            target,
            dt_prev: if i == 0 { 0.0 } else { fw.times()[i] - fw.times()[i - 1] },
        });
    }
    Ok(PreparedPath { horizon: fw.horizon(), x0: fw.initial_value().to_vec(), events })
}

/// Model output along one path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// All time points visited by the solver.
    pub times: Vec<f64>,
    /// `Y_t` (post-jump at observation times).
    pub values: Vec<Vec<f64>>,
    /// Observation times at which the latent state jumped (time 0 included).
    pub obs_times: Vec<f64>,
    /// `Y_{t_i-}`; at time 0 this is `Y_0`.
    pub pre_jump: Vec<Vec<f64>>,
    /// `Y_{t_i}`.
    pub post_jump: Vec<Vec<f64>>,
}

impl Trajectory {
    /// The pre-jump value at observation time `t`.
    pub fn left_limit_at(&self, t: f64) -> Result<&[f64]> {
        let tol = TIME_EPS * self.times.last().copied().unwrap_or(1.0).max(1.0);
        self.obs_times
            .iter()
            .position(|&o| (o - t).abs() <= tol)
            .map(|k| self.pre_jump[k].as_slice())
            .ok_or_else(|| Error::usage(format!("{t} is not an observation time of the path")))
    }

    /// Left limits at arbitrary times on the solver grid.
    pub fn left_limits_on(&self, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
        let tol = TIME_EPS * self.times.last().copied().unwrap_or(1.0).max(1.0);
        grid.iter()
            .map(|&t| {
                if t > tol {
                    if let Ok(v) = self.left_limit_at(t) {
                        return Ok(v.to_vec());
                    }
                }
                let k = self
                    .times
                    .iter()
                    .position(|&s| (s - t).abs() <= tol)
                    .ok_or_else(|| Error::usage(format!("{t} is not on the solver grid")))?;
                Ok(self.values[k].clone())
            })
            .collect()
    }
}

/// Outputs of the observation events at one time point.
#[derive(Debug)]
pub struct EventBatch {
    pub time: f64,
    /// Batch rows (paths) observed at this time.
    pub rows: Vec<usize>,
    /// Event index within each row's [`PreparedPath::events`].
    pub events: Vec<usize>,
    /// `Y_{t-}` for those rows.
    pub pre: Var,
    /// `Y_t` for those rows.
    pub post: Var,
}

/// Left limits requested at one output time, for all rows.
#[derive(Debug)]
pub struct OutputBatch {
    pub time: f64,
    pub left: Var,
}

#[derive(Debug)]
pub struct BatchForward {
    /// `Y_0` for every row.
    pub initial: Var,
    pub events: Vec<EventBatch>,
    pub outputs: Vec<OutputBatch>,
    /// Time points of each row, with the value node and row holding `Y`
    /// there (post-jump at events).
    pub visited: Vec<Vec<(f64, Var, usize)>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum PointKind {
    Step,
    Event(usize),
}

/// Solver time points of one path: every event time, Euler steps of size
/// `step` restarted at each event, and the requested output times.
fn path_points(path: &PreparedPath, step: f64, outputs: &[f64]) -> Vec<(f64, PointKind)> {
    let tol = TIME_EPS * path.horizon;
    let mut pts: Vec<(f64, PointKind)> = Vec::new();
    let ev = &path.events;
    for (k, e) in ev.iter().enumerate() {
        pts.push((e.time, PointKind::Event(k)));
        let next = ev.get(k + 1).map_or(path.horizon, |n| n.time);
        let mut j = 1usize;
        loop {
            let s = e.time + j as f64 * step;
            if s >= next - tol {
                break;
            }
            pts.push((s, PointKind::Step));
            j += 1;
        }
        if k + 1 == ev.len() && next > e.time + tol {
            pts.push((next, PointKind::Step));
        }
    }
    for &o in outputs {
        if o < -tol || o > path.horizon + tol {
            continue;
        }
        if !pts.iter().any(|(s, _)| (s - o).abs() <= tol) {
            pts.push((o, PointKind::Step));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts
}

fn union_points(per_row: &[Vec<(f64, PointKind)>], tol: f64) -> Vec<f64> {
    let mut all: Vec<f64> = per_row.iter().flatten().map(|(s, _)| *s).collect();
    all.sort_by(|a, b| a.total_cmp(b));
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for s in all {
        if out.last().is_none_or(|l| s - l > tol) {
            out.push(s);
        }
    }
    out
}

/// Weights and architecture of a PD-NJ-ODE.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NjodeModel {
    pub config: ModelConfig,
    pub data_dim: usize,
    pub params: ParamSet,
    pub ode_net: DenseNetwork,
    pub jump_net: DenseNetwork,
    pub readout: DenseNetwork,
}

impl NjodeModel {
    pub fn new(config: ModelConfig, data_dim: usize, seed: u64) -> Result<Self> {
        config.validate(data_dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let l = config.signature_width(data_dim);
        let dh = config.latent_dim;
        let ode_in = dh + 2 + l + data_dim;
        let jump_in = if config.recurrent { dh } else { 0 } + 1 + l + 3 * data_dim;
        let widths = |inp: usize, hidden: &[usize], out: usize| {
            let mut w = vec![inp];
            w.extend_from_slice(hidden);
            w.push(out);
            w
        };
        let act = config.activation;
        let ode_net = DenseNetwork::new(&mut params, "ode", &widths(ode_in, &config.hidden, dh), act, false, &mut rng)?;
        let jump_net =
            DenseNetwork::new(&mut params, "jump", &widths(jump_in, &config.hidden, dh), act, false, &mut rng)?;
        let readout = DenseNetwork::new(
            &mut params,
            "readout",
            &widths(dh, &config.readout_hidden, data_dim),
            act,
            config.residual_readout,
            &mut rng,
        )?;
        Ok(NjodeModel { config, data_dim, params, ode_net, jump_net, readout })
    }

    pub fn prepare(&self, fw: &ObservationFramework, bias: Option<&dyn NoiseBias>) -> Result<PreparedPath> {
        if fw.dim() != self.data_dim {
            return Err(Error::config(format!(
                "path has dimension {}, model expects {}",
                fw.dim(),
                self.data_dim
            )));
        }
        prepare_path(fw, &self.config, bias)
    }

    fn jump_input(&self, tape: &mut Tape, paths: &[&PreparedPath], h: Var, rows: &[usize], evs: &[usize]) -> Result<Var> {
        let d = self.data_dim;
        let l = self.config.signature_width(d);
        let width = 1 + l + 3 * d;
        let mut feat = Matrix::zeros(rows.len(), width);
        for (k, (&r, &e)) in rows.iter().zip(evs).enumerate() {
            let p = paths[r];
            let ev = &p.events[e];
            let row = feat.row_mut(k);
            row[0] = ev.time;
            row[1..1 + l].copy_from_slice(&ev.signature);
            row[1 + l..1 + l + d].copy_from_slice(&p.x0);
            row[1 + l + d..1 + l + 2 * d].copy_from_slice(&ev.filled);
            row[1 + l + 2 * d..].copy_from_slice(&ev.mask);
        }
        let feat = tape.constant(feat);
        if self.config.recurrent {
            let hs = tape.gather_rows(h, rows.to_vec())?;
            tape.concat(&[hs, feat])
        } else {
            Ok(feat)
        }
    }

    /// Records the forward pass of a batch of paths on `tape`.
    ///
    /// `outputs` lists times at which left limits are wanted for every
    /// row. With `dropout_rng` set, dropout is active.
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        paths: &[&PreparedPath],
        outputs: &[f64],
        mut dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<BatchForward> {
        let b = paths.len();
        if b == 0 {
            return Err(Error::usage("empty batch"));
        }
        let d = self.data_dim;
        let dh = self.config.latent_dim;
        let l = self.config.signature_width(d);
        for p in paths {
            if p.dim() != d || p.events.is_empty() || p.events[0].time != 0.0 {
                return Err(Error::usage("prepared path does not match the model"));
            }
            if p.events.iter().any(|e| e.signature.len() != l) {
                return Err(Error::usage("prepared path was built for another signature level"));
            }
        }
        let horizon = paths.iter().map(|p| p.horizon).fold(0.0, f64::max);
        let tol = TIME_EPS * horizon;
        let per_row: Vec<Vec<(f64, PointKind)>> =
            paths.iter().map(|p| path_points(p, self.config.step, outputs)).collect();
        let global = union_points(&per_row, tol);
        let rate = self.config.dropout;
        macro_rules! net {
            ($net:expr, $x:expr) => {
                match dropout_rng.as_mut() {
                    Some(rng) if rate > 0.0 => $net.forward(tape, &self.params, $x, Some((rate, &mut **rng))),
                    _ => $net.forward(tape, &self.params, $x, None),
                }
            };
        }

        // time 0: jump from H_{0-} = 0 for every row
        let all_rows: Vec<usize> = (0..b).collect();
        let zero_evs = vec![0usize; b];
        let h0 = tape.constant(Matrix::zeros(b, dh));
        let jin = self.jump_input(tape, paths, h0, &all_rows, &zero_evs)?;
        let raw = net!(self.jump_net, jin)?;
        let mut h = tape.bounded_rows(raw, self.config.jump_bound)?;
        let initial = net!(self.readout, h)?;
        let mut visited: Vec<Vec<(f64, Var, usize)>> = (0..b).map(|r| vec![(0.0, initial, r)]).collect();
        let mut outs = Vec::new();
        if outputs.iter().any(|o| o.abs() <= tol) {
            outs.push(OutputBatch { time: 0.0, left: initial });
        }

        let mut cursor = vec![1usize; b];
        let mut last_time = vec![0.0f64; b];
        let mut cur_event = vec![0usize; b];
        let mut events_out = Vec::new();
        let mut feat = Matrix::zeros(b, 2 + l + d);

        for (step_idx, &g) in global.iter().enumerate() {
            if g <= tol {
                continue;
            }
            let mut dt = vec![0.0; b];
            let mut at_event: Vec<(usize, usize)> = Vec::new();
            let mut active = vec![false; b];
            for r in 0..b {
                if let Some(&(s, kind)) = per_row[r].get(cursor[r]) {
                    if (s - g).abs() <= tol {
                        active[r] = true;
                        dt[r] = g - last_time[r];
                        if let PointKind::Event(e) = kind {
                            at_event.push((r, e));
                        }
                    }
                }
            }
            if !active.iter().any(|a| *a) {
                continue;
            }
            for r in 0..b {
                let p = paths[r];
                let ev = &p.events[cur_event[r]];
                let row = feat.row_mut(r);
                row[0] = last_time[r];
                row[1] = ev.time;
                row[2..2 + l].copy_from_slice(&ev.signature);
                row[2 + l..].copy_from_slice(&p.x0);
            }
            let fc = tape.constant(feat.clone());
            let fin = tape.concat(&[h, fc])?;
            let raw = net!(self.ode_net, fin)?;
            let field = tape.bounded_rows(raw, self.config.ode_bound)?;
            let incr = tape.scale_rows(field, dt)?;
            h = tape.add(h, incr)?;
            if !tape.value(h).is_finite() {
                return Err(Error::numerical(format!("non-finite latent state at t = {g}"), step_idx));
            }

            let wants_output = outputs.iter().any(|o| (o - g).abs() <= tol);
            let pre_all = if wants_output {
                let y = net!(self.readout, h)?;
                outs.push(OutputBatch { time: g, left: y });
                Some(y)
            } else {
                None
            };

            if !at_event.is_empty() {
                let rows: Vec<usize> = at_event.iter().map(|x| x.0).collect();
                let evs: Vec<usize> = at_event.iter().map(|x| x.1).collect();
                let pre = match pre_all {
                    Some(y) => tape.gather_rows(y, rows.clone())?,
                    None => {
                        let hs = tape.gather_rows(h, rows.clone())?;
                        net!(self.readout, hs)?
                    }
                };
                let jin = self.jump_input(tape, paths, h, &rows, &evs)?;
                let raw = net!(self.jump_net, jin)?;
                let hj = tape.bounded_rows(raw, self.config.jump_bound)?;
                h = tape.scatter_rows(h, rows.clone(), hj)?;
                let post = net!(self.readout, hj)?;
                for (k, &(r, e)) in at_event.iter().enumerate() {
                    cur_event[r] = e;
                    visited[r].push((g, post, k));
                }
                events_out.push(EventBatch { time: g, rows, events: evs, pre, post });
            }
            for r in 0..b {
                if active[r] {
                    if let Some(y) = pre_all {
                        if !at_event.iter().any(|x| x.0 == r) {
                            visited[r].push((g, y, r));
                        }
                    }
                    last_time[r] = g;
                    cursor[r] += 1;
                }
            }
        }
        Ok(BatchForward { initial, events: events_out, outputs: outs, visited })
    }

    /// Left limits of `Y` at every grid time for every path, without
    /// gradients. Paths are processed in chunks of `chunk` rows.
    pub fn predict_left_limits(
        &self,
        paths: &[&PreparedPath],
        grid: &[f64],
        chunk: usize,
    ) -> Result<Vec<Vec<Vec<f64>>>> {
        let mut out = Vec::with_capacity(paths.len());
        for part in paths.chunks(chunk.max(1)) {
            let mut tape = Tape::new();
            let fwd = self.forward_batch(&mut tape, part, grid, None)?;
            let mut per_row: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(grid.len()); part.len()];
            for ob in &fwd.outputs {
                let m = tape.value(ob.left);
                for (r, row) in per_row.iter_mut().enumerate() {
                    row.push(m.row(r).to_vec());
                }
            }
            if fwd.outputs.len() != grid.len() {
                return Err(Error::usage("evaluation grid points outside the horizon"));
            }
            out.extend(per_row);
        }
        Ok(out)
    }

    /// Full trajectory of one path on its own solver grid.
    pub fn forward_pass(&self, fw: &ObservationFramework) -> Result<Trajectory> {
        self.forward_pass_at(fw, &[])
    }

    /// Like [`forward_pass`](Self::forward_pass) with `extra` times added to
    /// the solver grid, so that they can be read back with
    /// [`Trajectory::left_limits_on`].
    pub fn forward_pass_at(&self, fw: &ObservationFramework, extra: &[f64]) -> Result<Trajectory> {
        let prepared = self.prepare(fw, None)?;
        let times: Vec<f64> = path_points(&prepared, self.config.step, extra).into_iter().map(|p| p.0).collect();
        let mut tape = Tape::new();
        let fwd = self.forward_batch(&mut tape, &[&prepared], &times, None)?;
        Ok(trajectory_from(&tape, &fwd, 0))
    }
}

/// Extracts the plain trajectory of batch row `row`.
pub fn trajectory_from(tape: &Tape, fwd: &BatchForward, row: usize) -> Trajectory {
    let y0 = tape.value(fwd.initial).row(row).to_vec();
    let mut obs_times = vec![0.0];
    let mut pre_jump = vec![y0.clone()];
    let mut post_jump = vec![y0];
    for eb in &fwd.events {
        if let Some(k) = eb.rows.iter().position(|&r| r == row) {
            obs_times.push(eb.time);
            pre_jump.push(tape.value(eb.pre).row(k).to_vec());
            post_jump.push(tape.value(eb.post).row(k).to_vec());
        }
    }
    let (times, values) = fwd.visited[row]
        .iter()
        .map(|&(t, v, r)| (t, tape.value(v).row(r).to_vec()))
        .unzip();
    Trajectory { times, values, obs_times, pre_jump, post_jump }
}
