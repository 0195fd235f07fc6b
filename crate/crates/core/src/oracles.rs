//! Closed-form conditional expectations of the synthetic processes.

use crate::dataset::{DatasetHeader, SamplePath};
use crate::error::{Error, Result};
use crate::generators::GeneratorKind;
use crate::observation::ObservationFramework;
use log::warn;
use nalgebra::{DMatrix, DVector};

const JITTER: f64 = 1e-12;

fn cholesky_solve(mut sigma: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = sigma.clone().cholesky() {
        return Ok(ch.solve(rhs));
    }
    warn!("covariance factorisation failed; retrying with jitter {JITTER:e}");
    for i in 0..sigma.nrows() {
        sigma[(i, i)] += JITTER;
    }
    sigma
        .cholesky()
        .map(|ch| ch.solve(rhs))
        .ok_or_else(|| Error::numerical("singular observation covariance", 0))
}

/// `E[W_t | O_1..O_k]` for a standard Brownian motion observed with
/// independent `N(0, sigma^2)` noise at times `t_1 < .. < t_k` (all
/// positive), for any `t >= t_k`. With no observations the answer is 0.
pub fn bm_noisy_oracle(times: &[f64], values: &[f64], sigma: f64, t: f64) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::usage("observation times and values differ in length"));
    }
    let k = times.len();
    if k == 0 {
        return Ok(0.0);
    }
    if times.iter().any(|&ti| ti > t + 1e-12) {
        return Err(Error::usage("prediction time precedes an observation"));
    }
    let cov = DMatrix::from_fn(k, k, |i, j| times[i].min(times[j]) + if i == j { sigma * sigma } else { 0.0 });
    let obs = DVector::from_column_slice(values);
    let weights = cholesky_solve(cov, &obs)?;
    // Sigma_21 = (t_1, .., t_k)
    Ok(times.iter().zip(weights.iter()).map(|(ti, w)| ti * w).sum())
}

/// One noisy scalar observation of coordinate `coord` of a correlated
/// Brownian motion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianObservation {
    pub time: f64,
    pub coord: usize,
    pub value: f64,
}

/// `E[W_t | observations]` for a Brownian motion with covariance `cov`
/// per unit time, started at 0, observed coordinate-wise with independent
/// noise of standard deviation `noise_std[coord]`, for `t` at or after the
/// last observation.
pub fn correlated_bm_oracle(
    cov: &[Vec<f64>],
    noise_std: &[f64],
    obs: &[GaussianObservation],
) -> Result<Vec<f64>> {
    let d = cov.len();
    if obs.is_empty() {
        return Ok(vec![0.0; d]);
    }
    let k = obs.len();
    let sigma = DMatrix::from_fn(k, k, |a, b| {
        let (oa, ob) = (&obs[a], &obs[b]);
        let mut v = oa.time.min(ob.time) * cov[oa.coord][ob.coord];
        if a == b {
            v += noise_std[oa.coord].powi(2);
        }
        v
    });
    let values = DVector::from_iterator(k, obs.iter().map(|o| o.value));
    let weights = cholesky_solve(sigma, &values)?;
    Ok((0..d)
        .map(|i| obs.iter().zip(weights.iter()).map(|(o, w)| o.time * cov[i][o.coord] * w).sum())
        .collect())
}

/// `x * exp(mu (t - tau))`.
pub fn gbm_oracle(last_value: f64, last_time: f64, drift: f64, t: f64) -> f64 {
    last_value * (drift * (t - last_time)).exp()
}

/// `x + lambda (t - tau)`.
pub fn poisson_oracle(last_count: f64, last_time: f64, intensity: f64, t: f64) -> f64 {
    last_count + intensity * (t - last_time)
}

/// Conditional expectation left limits on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OraclePath {
    pub times: Vec<f64>,
    /// `values[i]` is the left limit at `times[i]` (at time 0: the value).
    pub values: Vec<Vec<f64>>,
}

fn observations_before(fw: &ObservationFramework, t: f64, include_zero: bool) -> Vec<GaussianObservation> {
    let last = if t <= 0.0 { 0 } else { fw.last_observed_index_before(t) };
    let start = if include_zero { 0 } else { 1 };
    let mut out = Vec::new();
    for i in start..last + 1 {
        for (c, (&m, &v)) in fw.masks()[i].iter().zip(&fw.values()[i]).enumerate() {
            if m {
                out.push(GaussianObservation { time: fw.times()[i], coord: c, value: v });
            }
        }
    }
    out
}

/// Oracle left limits for one path on `grid`.
///
/// For every grid point `t > 0` only observations strictly before `t`
/// enter; at `t = 0` the fully observed initial value is used.
pub fn oracle_trajectory(header: &DatasetHeader, path: &SamplePath, grid: &[f64]) -> Result<OraclePath> {
    let kind: GeneratorKind = header.generator.parse()?;
    let fw = &path.framework;
    let d = fw.dim();
    let mut values = Vec::with_capacity(grid.len());
    // the Gaussian oracles only change when a new observation enters
    let mut cache: Option<(usize, Vec<f64>)> = None;
    for &t in grid {
        let last = if t <= 0.0 { 0 } else { fw.last_observed_index_before(t) };
        let v = match kind {
            GeneratorKind::BmNoisy | GeneratorKind::HighdimNoisy => {
                if let Some((idx, v)) = &cache {
                    if *idx == last {
                        values.push(v.clone());
                        continue;
                    }
                }
                let cov = header
                    .process_cov
                    .clone()
                    .ok_or_else(|| Error::config("dataset header lacks the process covariance"))?;
                let obs = observations_before(fw, t, false);
                let v = if kind == GeneratorKind::BmNoisy && d == 1 {
                    let times: Vec<f64> = obs.iter().map(|o| o.time).collect();
                    let vals: Vec<f64> = obs.iter().map(|o| o.value).collect();
                    let tt = times.last().copied().unwrap_or(0.0);
                    vec![bm_noisy_oracle(&times, &vals, header.noise_std[0], tt)?]
                } else {
                    correlated_bm_oracle(&cov, &header.noise_std, &obs)?
                };
                cache = Some((last, v.clone()));
                v
            }
            GeneratorKind::GbmDependent => {
                let (tau, x) = (fw.times()[last], fw.values()[last][0]);
                vec![gbm_oracle(x, tau, header.config.drift, t.max(tau))]
            }
            GeneratorKind::PoissonDependent => {
                let (tau, x) = (fw.times()[last], fw.values()[last][0]);
                vec![poisson_oracle(x, tau, header.config.intensity, t.max(tau))]
            }
        };
        values.push(v);
    }
    Ok(OraclePath { times: grid.to_vec(), values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_noisy_observation() {
        let v = bm_noisy_oracle(&[0.5], &[1.2], 0.5, 0.5).unwrap();
        assert!((v - 0.8).abs() < 1e-14);
    }

    #[test]
    fn noiseless_is_last_observation() {
        let v = bm_noisy_oracle(&[0.2, 0.5, 0.9], &[0.3, -0.1, 0.7], 0.0, 1.0).unwrap();
        assert!((v - 0.7).abs() < 1e-12);
    }

    #[test]
    fn no_observations_predicts_start() {
        assert_eq!(bm_noisy_oracle(&[], &[], 0.5, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_flows() {
        assert_eq!(gbm_oracle(1.7, 0.3, 2.0, 0.3), 1.7);
        assert_eq!(gbm_oracle(1.7, 0.3, 0.0, 0.9), 1.7);
        assert!((gbm_oracle(1.0, 0.0, 2.0, 0.1) - 0.2f64.exp()).abs() < 1e-15);
        assert_eq!(poisson_oracle(3.0, 0.2, 2.0, 0.2), 3.0);
        assert_eq!(poisson_oracle(3.0, 0.2, 0.0, 0.9), 3.0);
        assert!((poisson_oracle(3.0, 0.2, 2.0, 0.7) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn correlated_oracle_reduces_to_scalar_case() {
        let obs = [
            GaussianObservation { time: 0.2, coord: 0, value: 0.4 },
            GaussianObservation { time: 0.6, coord: 0, value: -0.3 },
        ];
        let a = correlated_bm_oracle(&[vec![1.0]], &[0.5], &obs).unwrap()[0];
        let b = bm_noisy_oracle(&[0.2, 0.6], &[0.4, -0.3], 0.5, 0.6).unwrap();
        assert!((a - b).abs() < 1e-14);
    }
}
