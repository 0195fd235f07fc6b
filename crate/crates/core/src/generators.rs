//! Seeded synthetic datasets.
//!
//! Randomness comes from ChaCha20 with one independent stream per path and
//! purpose: the process increments, the observation noise and the
//! observation masks never share a stream, so a mask draw cannot depend on
//! future increments of the process. Stream id = `4 * path + purpose`.

use crate::dataset::{Dataset, DatasetHeader, SamplePath};
use crate::error::{Error, Result};
use crate::observation::ObservationFramework;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    BmNoisy,
    GbmDependent,
    PoissonDependent,
    HighdimNoisy,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::BmNoisy => "bm_noisy",
            GeneratorKind::GbmDependent => "gbm_dependent",
            GeneratorKind::PoissonDependent => "poisson_dependent",
            GeneratorKind::HighdimNoisy => "highdim_noisy",
        }
    }
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bm_noisy" => Ok(GeneratorKind::BmNoisy),
            "gbm_dependent" => Ok(GeneratorKind::GbmDependent),
            "poisson_dependent" => Ok(GeneratorKind::PoissonDependent),
            "highdim_noisy" => Ok(GeneratorKind::HighdimNoisy),
            other => Err(Error::config(format!("unknown generator '{other}'"))),
        }
    }
}

/// Parameters of every generator; each generator reads the fields it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub horizon: f64,
    pub grid_step: f64,
    pub n_paths: usize,
    pub dim: usize,
    /// Drift of the geometric Brownian motion.
    pub drift: f64,
    /// Volatility of the geometric Brownian motion.
    pub volatility: f64,
    /// Poisson intensity.
    pub intensity: f64,
    pub x0: f64,
    /// Observation probability per grid point (or fallback probability for
    /// the dependent mask schemes).
    pub obs_prob: f64,
    /// Observation noise standard deviation (Brownian motion).
    pub noise_std: f64,
    /// Noise relative to the per-coordinate data standard deviation
    /// (high-dimensional generator).
    pub noise_scale: f64,
    /// Std of the Gaussian perturbation in the GBM mask rule.
    pub eta: f64,
    /// Std of the Gaussian perturbation in the Poisson mask rule.
    pub mask_std: f64,
    /// Correlation `rho^{|i-j|}` between coordinates (high-dimensional).
    pub correlation: f64,
    /// Fraction of paths used to estimate the data standard deviation.
    pub train_frac: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            kind: GeneratorKind::BmNoisy,
            horizon: 1.0,
            grid_step: 0.01,
            n_paths: 20_000,
            dim: 1,
            drift: 2.0,
            volatility: 0.3,
            intensity: 2.0,
            x0: 1.0,
            obs_prob: 0.1,
            noise_std: 0.5,
            noise_scale: 0.0,
            eta: 3.0,
            mask_std: 1.0,
            correlation: 0.5,
            train_frac: 0.8,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn bm_noisy() -> Self {
        GeneratorConfig::default()
    }

    pub fn gbm_dependent() -> Self {
        GeneratorConfig { kind: GeneratorKind::GbmDependent, noise_std: 0.0, ..Default::default() }
    }

    pub fn poisson_dependent() -> Self {
        GeneratorConfig {
            kind: GeneratorKind::PoissonDependent,
            noise_std: 0.0,
            x0: 0.0,
            ..Default::default()
        }
    }

    pub fn highdim_noisy() -> Self {
        GeneratorConfig {
            kind: GeneratorKind::HighdimNoisy,
            dim: 3,
            noise_std: 0.0,
            obs_prob: 0.1,
            ..Default::default()
        }
    }

    /// Number of grid intervals; fails unless the step divides the horizon.
    pub fn steps(&self) -> Result<usize> {
        if !(self.grid_step > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::config("grid step and horizon must be positive"));
        }
        let n = (self.horizon / self.grid_step).round();
        if (n * self.grid_step - self.horizon).abs() > 1e-9 * self.horizon || n < 1.0 {
            return Err(Error::config(format!(
                "grid step {} does not divide horizon {}",
                self.grid_step, self.horizon
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.steps()?;
        if self.n_paths == 0 {
            return Err(Error::config("n_paths must be positive"));
        }
        if self.dim == 0 {
            return Err(Error::config("dim must be positive"));
        }
        if !(self.obs_prob > 0.0 && self.obs_prob <= 1.0) {
            return Err(Error::config(format!("observation probability {} not in (0, 1]", self.obs_prob)));
        }
        if self.noise_std < 0.0 || self.noise_scale < 0.0 {
            return Err(Error::config("noise levels must be non-negative"));
        }
        match self.kind {
            GeneratorKind::GbmDependent | GeneratorKind::PoissonDependent if self.dim != 1 => {
                Err(Error::config(format!("{} is one-dimensional", self.kind.name())))
            }
            GeneratorKind::PoissonDependent if !(self.intensity > 0.0) => {
                Err(Error::config("Poisson intensity must be positive"))
            }
            GeneratorKind::HighdimNoisy if self.dim < 2 => {
                Err(Error::config("highdim_noisy needs at least two coordinates"))
            }
            GeneratorKind::HighdimNoisy if !(self.correlation.abs() < 1.0) => {
                Err(Error::config("correlation must lie in (-1, 1)"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy)]
enum Stream {
    Process = 0,
    Noise = 1,
    Mask = 2,
}

fn stream_rng(seed: u64, path: usize, stream: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(4 * path as u64 + stream as u64);
    rng
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn grid_time(k: usize, step: f64) -> f64 {
    k as f64 * step
}

/// Dispatches on `cfg.kind`.
pub fn generate(cfg: &GeneratorConfig) -> Result<Dataset> {
    match cfg.kind {
        GeneratorKind::BmNoisy => gen_bm_noisy(cfg),
        GeneratorKind::GbmDependent => gen_gbm_dependent(cfg),
        GeneratorKind::PoissonDependent => gen_poisson_dependent(cfg),
        GeneratorKind::HighdimNoisy => gen_highdim_noisy(cfg),
    }
}

fn header(cfg: &GeneratorConfig, noise_std: Vec<f64>, process_cov: Option<Vec<Vec<f64>>>) -> DatasetHeader {
    DatasetHeader {
        dim: cfg.dim,
        horizon: cfg.horizon,
        grid_step: cfg.grid_step,
        generator: cfg.kind.name().to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        noise_std,
        process_cov,
    }
}

/// Brownian motion observed at Bernoulli(p) grid points with additive
/// centred Gaussian noise; the observation at 0 is exact.
pub fn gen_bm_noisy(cfg: &GeneratorConfig) -> Result<Dataset> {
    let mut cfg = cfg.clone();
    cfg.kind = GeneratorKind::BmNoisy;
    cfg.validate()?;
    let steps = cfg.steps()?;
    let d = cfg.dim;
    let sq = cfg.grid_step.sqrt();
    let mut paths = Vec::with_capacity(cfg.n_paths);
    for j in 0..cfg.n_paths {
        let mut proc_rng = stream_rng(cfg.seed, j, Stream::Process);
        let mut noise_rng = stream_rng(cfg.seed, j, Stream::Noise);
        let mut mask_rng = stream_rng(cfg.seed, j, Stream::Mask);
        let mut latent = vec![vec![0.0; d]];
        for k in 1..=steps {
            let prev = &latent[k - 1];
            let next: Vec<f64> = prev.iter().map(|w| w + sq * normal(&mut proc_rng)).collect();
            latent.push(next);
        }
        let mut times = vec![0.0];
        let mut values = vec![latent[0].clone()];
        let mut masks = vec![vec![true; d]];
        let mut noise = vec![vec![0.0; d]];
        for (k, w) in latent.iter().enumerate().skip(1) {
            let observed = mask_rng.random::<f64>() < cfg.obs_prob;
            let eps: Vec<f64> = (0..d).map(|_| cfg.noise_std * normal(&mut noise_rng)).collect();
            if observed {
                times.push(grid_time(k, cfg.grid_step));
                values.push(w.iter().zip(&eps).map(|(a, b)| a + b).collect());
                masks.push(vec![true; d]);
                noise.push(eps);
            }
        }
        let framework = ObservationFramework::new(times, values, masks, cfg.horizon)?;
        paths.push(SamplePath { framework, latent: Some(latent), noise: Some(noise) });
    }
    let cov = (0..d).map(|a| (0..d).map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect();
    Ok(Dataset { header: header(&cfg, vec![cfg.noise_std; d], Some(cov)), paths })
}

/// Geometric Brownian motion whose observation mask depends on the last
/// observed value and the time since it was observed.
///
/// Every grid point is an observation time; at `t_i` the process is seen
/// with mask `V1 * 1{X_tau + V2 >= x0 e^{mu t_i}} + (1 - V1) V3` where
/// `V1 ~ Bernoulli((t_i - t_{i-1}) / (t_i - tau))`, `V2 ~ N(0, eta^2)`,
/// `V3 ~ Bernoulli(p)` and `tau` is the last time the process was seen.
/// Paths are simulated with the Euler scheme on the log-price, which is
/// exact in distribution on the grid.
pub fn gen_gbm_dependent(cfg: &GeneratorConfig) -> Result<Dataset> {
    let mut cfg = cfg.clone();
    cfg.kind = GeneratorKind::GbmDependent;
    cfg.validate()?;
    let steps = cfg.steps()?;
    let dt = cfg.grid_step;
    let (mu, sigma) = (cfg.drift, cfg.volatility);
    let mut paths = Vec::with_capacity(cfg.n_paths);
    for j in 0..cfg.n_paths {
        let mut proc_rng = stream_rng(cfg.seed, j, Stream::Process);
        let mut mask_rng = stream_rng(cfg.seed, j, Stream::Mask);
        let mut latent = vec![cfg.x0];
        for k in 1..=steps {
            let z = normal(&mut proc_rng);
            let x = latent[k - 1] * ((mu - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * z).exp();
            latent.push(x);
        }
        let mut masks = vec![true];
        let mut last_obs = 0usize;
        for k in 1..=steps {
            let t = grid_time(k, dt);
            let q = 1.0 / (k - last_obs) as f64;
            let v1 = mask_rng.random::<f64>() < q;
            let v2 = cfg.eta * normal(&mut mask_rng);
            let v3 = mask_rng.random::<f64>() < cfg.obs_prob;
            let observed = if v1 { latent[last_obs] + v2 >= cfg.x0 * (mu * t).exp() } else { v3 };
            if observed {
                last_obs = k;
            }
            masks.push(observed);
        }
        let times: Vec<f64> = (0..=steps).map(|k| grid_time(k, dt)).collect();
        let values: Vec<Vec<f64>> = latent.iter().map(|x| vec![*x]).collect();
        let masks: Vec<Vec<bool>> = masks.into_iter().map(|m| vec![m]).collect();
        let framework = ObservationFramework::new(times, values, masks, cfg.horizon)?;
        let latent = latent.into_iter().map(|x| vec![x]).collect();
        paths.push(SamplePath { framework, latent: Some(latent), noise: None });
    }
    Ok(Dataset { header: header(&cfg, vec![0.0], None), paths })
}

/// Homogeneous Poisson process on the grid with the two-branch dependent
/// mask rule: after an observed step the next one is observed iff a
/// `N(N_{t_{i-1}}, s^2)` draw is at least `lambda t_{i-1}`, otherwise with
/// probability `p`.
pub fn gen_poisson_dependent(cfg: &GeneratorConfig) -> Result<Dataset> {
    let mut cfg = cfg.clone();
    cfg.kind = GeneratorKind::PoissonDependent;
    cfg.validate()?;
    let steps = cfg.steps()?;
    let dt = cfg.grid_step;
    let incr = Poisson::new(cfg.intensity * dt).map_err(|e| Error::config(e.to_string()))?;
    let mut paths = Vec::with_capacity(cfg.n_paths);
    for j in 0..cfg.n_paths {
        let mut proc_rng = stream_rng(cfg.seed, j, Stream::Process);
        let mut mask_rng = stream_rng(cfg.seed, j, Stream::Mask);
        let mut latent = vec![cfg.x0];
        for k in 1..=steps {
            let jumps: f64 = incr.sample(&mut proc_rng);
            latent.push(latent[k - 1] + jumps);
        }
        let mut masks = vec![true];
        for k in 1..=steps {
            let prev_time = grid_time(k - 1, dt);
            // both variables are drawn every step to keep the stream aligned
            let x = latent[k - 1] - cfg.x0 + cfg.mask_std * normal(&mut mask_rng);
            let u = mask_rng.random::<f64>() < cfg.obs_prob;
            let observed = if masks[k - 1] { x >= cfg.intensity * prev_time } else { u };
            masks.push(observed);
        }
        let times: Vec<f64> = (0..=steps).map(|k| grid_time(k, dt)).collect();
        let values: Vec<Vec<f64>> = latent.iter().map(|x| vec![*x]).collect();
        let masks: Vec<Vec<bool>> = masks.into_iter().map(|m| vec![m]).collect();
        let framework = ObservationFramework::new(times, values, masks, cfg.horizon)?;
        let latent = latent.into_iter().map(|x| vec![x]).collect();
        paths.push(SamplePath { framework, latent: Some(latent), noise: None });
    }
    Ok(Dataset { header: header(&cfg, vec![0.0], None), paths })
}

/// Correlation matrix `rho^{|i-j|}`.
pub fn correlation_matrix(dim: usize, rho: f64) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|a| (0..dim).map(|b| rho.powi((a as i32 - b as i32).abs())).collect())
        .collect()
}

/// Correlated `d`-dimensional Brownian motion with independent
/// per-coordinate Bernoulli(p) masks; observations after 0 carry noise
/// with standard deviation `zeta * sd_j`, where `sd_j` is the standard
/// deviation of the clean observed values of coordinate `j` on the
/// training part of the dataset.
pub fn gen_highdim_noisy(cfg: &GeneratorConfig) -> Result<Dataset> {
    let mut cfg = cfg.clone();
    cfg.kind = GeneratorKind::HighdimNoisy;
    cfg.validate()?;
    let steps = cfg.steps()?;
    let d = cfg.dim;
    let dt = cfg.grid_step;
    let cov = correlation_matrix(d, cfg.correlation);
    let chol = DMatrix::from_fn(d, d, |a, b| cov[a][b])
        .cholesky()
        .ok_or_else(|| Error::config("correlation matrix is not positive definite"))?
        .l();

    struct Raw {
        latent: Vec<Vec<f64>>,
        grid_masks: Vec<Vec<bool>>,
        z_noise: Vec<Vec<f64>>,
    }
    let mut raws = Vec::with_capacity(cfg.n_paths);
    for j in 0..cfg.n_paths {
        let mut proc_rng = stream_rng(cfg.seed, j, Stream::Process);
        let mut noise_rng = stream_rng(cfg.seed, j, Stream::Noise);
        let mut mask_rng = stream_rng(cfg.seed, j, Stream::Mask);
        let mut latent = vec![vec![0.0; d]];
        let mut grid_masks = vec![vec![true; d]];
        let mut z_noise = vec![vec![0.0; d]];
        for k in 1..=steps {
            let z: Vec<f64> = (0..d).map(|_| normal(&mut proc_rng)).collect();
            let prev = &latent[k - 1];
            let next: Vec<f64> = (0..d)
                .map(|a| prev[a] + dt.sqrt() * (0..=a).map(|b| chol[(a, b)] * z[b]).sum::<f64>())
                .collect();
            latent.push(next);
            grid_masks.push((0..d).map(|_| mask_rng.random::<f64>() < cfg.obs_prob).collect());
            z_noise.push((0..d).map(|_| normal(&mut noise_rng)).collect());
        }
        raws.push(Raw { latent, grid_masks, z_noise });
    }

    // per-coordinate std of clean observed values (after time 0) on the train part
    let n_train = ((cfg.n_paths as f64) * cfg.train_frac).round().max(1.0) as usize;
    let mut data_sd = vec![0.0; d];
    for (jcoord, sd) in data_sd.iter_mut().enumerate() {
        let obs: Vec<f64> = raws[..n_train.min(raws.len())]
            .iter()
            .flat_map(|r| {
                (1..=steps).filter(move |&k| r.grid_masks[k][jcoord]).map(move |k| r.latent[k][jcoord])
            })
            .collect();
        if obs.len() > 1 {
            let mean = obs.iter().sum::<f64>() / obs.len() as f64;
            *sd = (obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (obs.len() - 1) as f64).sqrt();
        }
    }
    let noise_std: Vec<f64> = data_sd.iter().map(|s| cfg.noise_scale * s).collect();

    let mut paths = Vec::with_capacity(cfg.n_paths);
    for raw in raws {
        let mut times = vec![0.0];
        let mut values = vec![raw.latent[0].clone()];
        let mut masks = vec![vec![true; d]];
        let mut noise = vec![vec![0.0; d]];
        for k in 1..=steps {
            if !raw.grid_masks[k].iter().any(|m| *m) {
                continue;
            }
            let eps: Vec<f64> = (0..d)
                .map(|a| if raw.grid_masks[k][a] { noise_std[a] * raw.z_noise[k][a] } else { 0.0 })
                .collect();
            times.push(grid_time(k, dt));
            values.push((0..d).map(|a| raw.latent[k][a] + eps[a]).collect());
            masks.push(raw.grid_masks[k].clone());
            noise.push(eps);
        }
        let framework = ObservationFramework::new(times, values, masks, cfg.horizon)?;
        paths.push(SamplePath { framework, latent: Some(raw.latent), noise: Some(noise) });
    }
    Ok(Dataset { header: header(&cfg, noise_std, Some(cov)), paths })
}
