//! Reference implementations shared by the integration tests. None of
//! them reuses the production code path they are compared against.

#![allow(dead_code)]

use njode_core::autodiff::{Activation, Tape};
use njode_core::model::{ModelConfig, NjodeModel, PreparedPath};
use njode_core::objectives::{loss_on_tape, LossConfig, NoiseBias};
use njode_core::ObservationFramework;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Iterated integrals of a piecewise-linear path computed from their
/// definition: on every segment each integral is a polynomial in the local
/// parameter and the next level is its exact antiderivative. Layout as in
/// `TruncatedSignature::coeffs`.
pub fn iterated_integrals(vertices: &[Vec<f64>], level: usize) -> Vec<f64> {
    let d = vertices[0].len();
    let mut vals: Vec<Vec<f64>> = (0..=level).map(|k| vec![0.0; d.pow(k as u32)]).collect();
    vals[0][0] = 1.0;
    for w in vertices.windows(2) {
        let inc: Vec<f64> = (0..d).map(|i| w[1][i] - w[0][i]).collect();
        // polys[k][word] = coefficients in u of the integral over the segment prefix
        let mut polys: Vec<Vec<Vec<f64>>> = vec![vec![vec![1.0]]];
        for k in 1..=level {
            let mut lvl = Vec::with_capacity(d.pow(k as u32));
            for prev in 0..d.pow((k - 1) as u32) {
                for (i, &di) in inc.iter().enumerate() {
                    let idx = prev * d + i;
                    let base = &polys[k - 1][prev];
                    let mut p = vec![vals[k][idx]];
                    for (j, c) in base.iter().enumerate() {
                        p.push(c * di / (j + 1) as f64);
                    }
                    // the constant term of the antiderivative is the start value
                    lvl.push(p);
                }
            }
            polys.push(lvl);
        }
        for k in 1..=level {
            for (idx, p) in polys[k].iter().enumerate() {
                vals[k][idx] = p.iter().sum();
            }
        }
    }
    vals.concat()
}

pub fn random_path(rng: &mut impl Rng, d: usize, segments: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>()];
    for _ in 0..segments {
        let last = pts.last().unwrap().clone();
        pts.push(last.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect());
    }
    pts
}

/// Loss of `model` on `paths` recorded on a fresh tape.
pub fn tape_loss(model: &NjodeModel, paths: &[&PreparedPath], cfg: &LossConfig) -> f64 {
    let mut tape = Tape::new();
    let fwd = model.forward_batch(&mut tape, paths, &[], None).unwrap();
    let l = loss_on_tape(&mut tape, cfg, paths, &fwd, paths.len()).unwrap();
    tape.scalar_value(l)
}

/// Sample mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Solves a 3x3 system by Cramer's rule.
pub fn cramer3(a: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    let mut x = [0.0; 3];
    for (c, xc) in x.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        *xc = det(m) / d;
    }
    x
}

/// Least-squares fit of W_t on (1, O_1, O_2) over simulated pairs.
pub fn regression_oracle(times: [f64; 2], t: f64, sigma: f64, samples: usize, query: [f64; 2]) -> f64 {
    let mut rng = rng(2024);
    let mut xtx = [[0.0; 3]; 3];
    let mut xty = [0.0; 3];
    for _ in 0..samples {
        let mut w = 0.0;
        let mut last = 0.0;
        let mut obs = [0.0; 2];
        for (k, &tk) in times.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            w += (tk - last).sqrt() * z;
            last = tk;
            let e: f64 = rng.sample(StandardNormal);
            obs[k] = w + sigma * e;
        }
        let z: f64 = rng.sample(StandardNormal);
        let wt = w + (t - last).sqrt() * z;
        let x = [1.0, obs[0], obs[1]];
        for i in 0..3 {
            for j in 0..3 {
                xtx[i][j] += x[i] * x[j];
            }
            xty[i] += x[i] * wt;
        }
    }
    let beta = cramer3(xtx, xty);
    beta[0] + beta[1] * query[0] + beta[2] * query[1]
}

/// A two-dimensional path with three observations after time 0 and
/// partial masks.
pub fn toy_framework() -> ObservationFramework {
    ObservationFramework::new(
        vec![0.0, 0.23, 0.5, 0.81],
        vec![vec![0.3, -0.2], vec![0.7, 0.0], vec![0.1, -0.6], vec![0.0, 0.4]],
        vec![vec![true, true], vec![true, false], vec![true, true], vec![false, true]],
        1.0,
    )
    .unwrap()
}

pub fn toy_model(recurrent: bool, residual: bool, bound: f64) -> NjodeModel {
    let cfg = ModelConfig {
        latent_dim: 4,
        hidden: vec![5],
        readout_hidden: vec![3],
        activation: Activation::Tanh,
        sig_level: 2,
        step: 0.1,
        ode_bound: bound,
        jump_bound: bound,
        recurrent,
        residual_readout: residual,
        include_counts: true,
        dropout: 0.0,
    };
    NjodeModel::new(cfg, 2, 5).unwrap()
}

/// Worst relative error between reverse-mode and central-difference
/// gradients over every weight (differences below 1e-7 count as exact).
/// Summary of a finite-difference comparison over every weight.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradCheck {
    /// Largest `|numeric - analytic| / max(|numeric|, |analytic|)`; entries
    /// where both are exactly zero are skipped.
    pub worst_rel: f64,
    pub max_abs_err: f64,
    pub max_grad: f64,
    pub checked: usize,
}

impl GradCheck {
    pub fn merge(self, o: GradCheck) -> GradCheck {
        GradCheck {
            worst_rel: self.worst_rel.max(o.worst_rel),
            max_abs_err: self.max_abs_err.max(o.max_abs_err),
            max_grad: self.max_grad.max(o.max_grad),
            checked: self.checked + o.checked,
        }
    }
}

/// Finite differences against the tape on the toy path, every weight.
pub fn gradient_check(model: &mut NjodeModel, loss: &LossConfig) -> GradCheck {
    let bias = loss.noise_bias();
    let path = model.prepare(&toy_framework(), bias.as_ref().map(|b| b as &dyn NoiseBias)).unwrap();
    let paths: Vec<&PreparedPath> = vec![&path];
    let mut tape = Tape::new();
    let fwd = model.forward_batch(&mut tape, &paths, &[], None).unwrap();
    let l = loss_on_tape(&mut tape, loss, &paths, &fwd, 1).unwrap();
    let grads = tape.backward(l).unwrap().param_grads(&model.params);

    let h = 1e-3;
    let ids: Vec<_> = model.params.iter().map(|(id, _)| id).collect();
    let mut out = GradCheck::default();
    for (k, id) in ids.into_iter().enumerate() {
        let n = model.params.value(id).len();
        for e in 0..n {
            let orig = model.params.value(id).as_slice()[e];
            let mut at = |x: f64| {
                model.params.value_mut(id).as_mut_slice()[e] = x;
                tape_loss(model, &paths, loss)
            };
            // five-point stencil: O(h^4) truncation, rounding ~ eps / h
            let numeric = (at(orig - 2.0 * h) - 8.0 * at(orig - h) + 8.0 * at(orig + h) - at(orig + 2.0 * h)) / (12.0 * h);
            model.params.value_mut(id).as_mut_slice()[e] = orig;
            let analytic = grads[k].as_slice()[e];
            let err = (numeric - analytic).abs();
            let scale = numeric.abs().max(analytic.abs());
            out.max_abs_err = out.max_abs_err.max(err);
            out.max_grad = out.max_grad.max(analytic.abs());
            out.checked += 1;
            if scale > 0.0 {
                out.worst_rel = out.worst_rel.max(err / scale);
            }
        }
    }
    out
}
