use super::adam::AdamConfig;
use crate::autodiff::Activation;
use crate::error::{Error, Result};
use crate::generators::{GeneratorConfig, GeneratorKind};
use crate::model::ModelConfig;
use crate::objectives::{LossConfig, LossKind};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Full-size runs.
    Paper,
    /// Reduced runs that fit a single CPU in minutes.
    Desk,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::config(format!("unknown profile `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Fraction of the paths used for training; the rest is the test set.
    pub train_frac: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig { epochs: 200, batch_size: 200, adam: AdamConfig::default(), train_frac: 0.8 }
    }
}

/// Everything needed to reproduce one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Generator for the dataset; ignored when `dataset` is set.
    pub generator: GeneratorConfig,
    /// Dataset file to load instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub training: TrainingConfig,
    /// Number of intervals of the equidistant evaluation grid.
    pub eval_points: usize,
    /// Seed for initialisation, shuffling and dropout.
    pub seed: u64,
    /// Worker threads for evaluation; results do not depend on it.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::preset(GeneratorKind::BmNoisy, Profile::Paper)
    }
}

impl ExperimentConfig {
    pub fn preset(kind: GeneratorKind, profile: Profile) -> Self {
        let mut generator = match kind {
            GeneratorKind::BmNoisy => GeneratorConfig::bm_noisy(),
            GeneratorKind::GbmDependent => GeneratorConfig::gbm_dependent(),
            GeneratorKind::PoissonDependent => GeneratorConfig::poisson_dependent(),
            GeneratorKind::HighdimNoisy => GeneratorConfig::highdim_noisy(),
        };
        let mut model = ModelConfig::default();
        let mut training = TrainingConfig::default();
        let mut loss = LossConfig::new(LossKind::NoiseAdapted);
        match kind {
            GeneratorKind::BmNoisy | GeneratorKind::HighdimNoisy => {
                model.dropout = 0.1;
            }
            GeneratorKind::GbmDependent | GeneratorKind::PoissonDependent => {
                model.latent_dim = 50;
                model.hidden = vec![50, 50];
                model.readout_hidden = vec![50, 50];
                model.activation = Activation::Tanh;
                model.residual_readout = false;
                model.dropout = 0.1;
                loss = LossConfig::new(LossKind::Standard);
            }
        }
        if kind == GeneratorKind::HighdimNoisy {
            model.latent_dim = 50;
            model.hidden = vec![50];
            model.activation = Activation::Tanh;
            model.sig_level = 2;
            training.batch_size = 50;
            training.epochs = 100;
        }
        if profile == Profile::Desk {
            generator.n_paths = 4000;
            training.epochs = 100;
            model.dropout = 0.0;
            if kind == GeneratorKind::GbmDependent {
                // more optimiser steps make up for the smaller dataset
                training.batch_size = 50;
            }
            if kind == GeneratorKind::HighdimNoisy {
                generator.n_paths = 2000;
                training.epochs = 30;
                training.batch_size = 100;
            }
        }
        ExperimentConfig {
            generator,
            dataset: None,
            model,
            loss,
            training,
            eval_points: 100,
            seed: 0,
            threads: 1,
        }
    }

    /// Sets the run seed and the generator seed together.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.generator.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.training.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.training.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(self.training.train_frac > 0.0 && self.training.train_frac < 1.0) {
            return Err(Error::config("train fraction must lie in (0, 1)"));
        }
        if self.eval_points == 0 {
            return Err(Error::config("evaluation grid needs at least one interval"));
        }
        let a = &self.training.adam;
        if !(a.lr >= 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::config("invalid optimizer settings"));
        }
        if a.weight_decay < 0.0 {
            return Err(Error::config("weight decay must be non-negative"));
        }
        self.loss.validate()?;
        if self.dataset.is_none() {
            self.generator.validate()?;
            self.model.validate(self.generator.dim)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("invalid configuration: {e}")))
    }
}
