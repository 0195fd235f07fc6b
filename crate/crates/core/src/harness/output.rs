//! Files written by a run.

use super::train::{eval_grid, RunReport, SweepRow};
use crate::dataset::Dataset;
use crate::error::Result;
use crate::model::{NjodeModel, Trajectory};
use crate::observation::TIME_EPS;
use crate::oracles::{oracle_trajectory, OraclePath};
use std::io::Write;
use std::path::Path;

/// `epoch,train_loss,test_loss,eval_metric`, one row per epoch. Epoch 0 is
/// the untrained model (losses not recorded).
pub fn write_metrics_csv<W: Write>(report: &RunReport, w: &mut W) -> Result<()> {
    writeln!(w, "epoch,train_loss,test_loss,eval_metric")?;
    writeln!(w, "0,,,{}", report.initial_eval)?;
    for r in &report.epochs {
        writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.test_loss, r.eval_metric)?;
    }
    Ok(())
}

pub fn write_report_json(report: &RunReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: &mut W) -> Result<()> {
    writeln!(w, "zeta,variant,min_eval")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.zeta, r.variant.name(), r.min_eval)?;
    }
    Ok(())
}

/// Per-path output in long format: `path_id,t,coord,Y,is_observation,pre_or_post`.
///
/// Observation times get a `pre` row (left limit) and a `post` row; other
/// solver points get one row with an empty last column.
pub fn write_trajectory_csv<W: Write>(paths: &[(usize, &Trajectory)], w: &mut W) -> Result<()> {
    writeln!(w, "path_id,t,coord,Y,is_observation,pre_or_post")?;
    for &(id, tr) in paths {
        let tol = TIME_EPS * tr.times.last().copied().unwrap_or(1.0).max(1.0);
        for (t, y) in tr.times.iter().zip(&tr.values) {
            let obs = tr.obs_times.iter().position(|o| (o - t).abs() <= tol);
            for c in 0..y.len() {
                match obs {
                    Some(j) => {
                        writeln!(w, "{id},{t},{c},{},1,pre", tr.pre_jump[j][c])?;
                        writeln!(w, "{id},{t},{c},{},1,post", y[c])?;
                    }
                    None => writeln!(w, "{id},{t},{c},{},0,", y[c])?,
                }
            }
        }
    }
    Ok(())
}

/// Oracle paths in the same schema as [`write_trajectory_csv`]. Oracle
/// values are left limits, so every row is a `pre` row; `is_observation`
/// marks grid times that are observation times of `obs_times(id)`.
pub fn write_oracle_csv<W: Write>(
    paths: &[(usize, &OraclePath)],
    obs_times: impl Fn(usize) -> Vec<f64>,
    w: &mut W,
) -> Result<()> {
    writeln!(w, "path_id,t,coord,Y,is_observation,pre_or_post")?;
    for &(id, op) in paths {
        let obs = obs_times(id);
        let tol = TIME_EPS * op.times.last().copied().unwrap_or(1.0).max(1.0);
        for (t, y) in op.times.iter().zip(&op.values) {
            let is_obs = u8::from(obs.iter().any(|o| (o - t).abs() <= tol));
            for (c, v) in y.iter().enumerate() {
                writeln!(w, "{id},{t},{c},{v},{is_obs},pre")?;
            }
        }
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Plot data for the given paths on the evaluation grid:
/// `path_id,t,coord,X,O,oracle,model` where `X` is the noise-free process,
/// `O` the observation (empty if none at `t`), `oracle` and `model` left
/// limits.
pub fn write_trajectories_csv<W: Write>(
    dataset: &Dataset,
    model: &NjodeModel,
    ids: &[usize],
    eval_points: usize,
    w: &mut W,
) -> Result<()> {
    let h = &dataset.header;
    let grid = eval_grid(h.horizon, eval_points);
    let tol = TIME_EPS * h.horizon;
    let prepared = ids
        .iter()
        .map(|&i| model.prepare(&dataset.paths[i].framework, None))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = prepared.iter().collect();
    let preds = model.predict_left_limits(&refs, &grid, 200)?;
    writeln!(w, "path_id,t,coord,X,O,oracle,model")?;
    for (q, &i) in ids.iter().enumerate() {
        let path = &dataset.paths[i];
        let fw = &path.framework;
        let oracle = oracle_trajectory(h, path, &grid)?;
        for (g, &t) in grid.iter().enumerate() {
            let k = (t / h.grid_step).round() as usize;
            let on_grid = (k as f64 * h.grid_step - t).abs() <= tol;
            let obs = fw.times().iter().position(|&s| (s - t).abs() <= tol);
            for c in 0..fw.dim() {
                let x = path.latent.as_ref().filter(|_| on_grid).and_then(|l| l.get(k)).map(|v| v[c]);
                let o = obs.filter(|&j| fw.masks()[j][c]).map(|j| fw.values()[j][c]);
                writeln!(
                    w,
                    "{i},{t},{c},{},{},{},{}",
                    opt(x),
                    opt(o),
                    oracle.values[g][c],
                    preds[q][g][c]
                )?;
            }
        }
    }
    Ok(())
}
