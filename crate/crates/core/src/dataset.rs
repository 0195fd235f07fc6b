//! Datasets of sample paths and their JSON-lines storage.
//!
//! The first line holds the header, every following line one path.
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces every value bit for bit.

use crate::error::{Error, Result};
use crate::generators::GeneratorConfig;
use crate::observation::ObservationFramework;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub dim: usize,
    pub horizon: f64,
    pub grid_step: f64,
    pub generator: String,
    pub seed: u64,
    pub config: GeneratorConfig,
    /// Standard deviation of the additive observation noise per coordinate.
    pub noise_std: Vec<f64>,
    /// Covariance of the driving Brownian motion per unit time, when the
    /// process is Gaussian.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process_cov: Option<Vec<Vec<f64>>>,
}

/// One generated path: what the model sees plus generator-side records.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    pub framework: ObservationFramework,
    /// Noise-free process on the full grid (evaluation and plotting only).
    pub latent: Option<Vec<Vec<f64>>>,
    /// Noise added at each observation time.
    pub noise: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct PathRecord {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    masks: Vec<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    latent: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct HeaderRecord {
    header: DatasetHeader,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub paths: Vec<SamplePath>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Index ranges of the training and test split (first `train_frac` of
    /// the paths train).
    pub fn split(&self, train_frac: f64) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let n_train = ((self.paths.len() as f64) * train_frac).round() as usize;
        let n_train = n_train.min(self.paths.len());
        (0..n_train, n_train..self.paths.len())
    }

    /// Number of grid intervals on `[0, T]`.
    pub fn grid_len(&self) -> usize {
        (self.header.horizon / self.header.grid_step).round() as usize
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        serde_json::to_writer(&mut *w, &HeaderRecord { header: self.header.clone() })?;
        w.write_all(b"\n")?;
        for p in &self.paths {
            let fw = &p.framework;
            let rec = PathRecord {
                times: fw.times().to_vec(),
                values: fw.values().to_vec(),
                masks: fw.masks().iter().map(|m| m.iter().map(|&b| b as u8).collect()).collect(),
                latent: p.latent.clone(),
                noise: p.noise.clone(),
            };
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(BufReader::new(f))
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| Error::Format("empty dataset file".into()))??;
        let header = serde_json::from_str::<HeaderRecord>(&first)?.header;
        let mut paths = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PathRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("path record {k}: {e}")))?;
            let masks = rec.masks.iter().map(|m| m.iter().map(|&b| b != 0).collect()).collect();
            let framework = ObservationFramework::new(rec.times, rec.values, masks, header.horizon)?;
            paths.push(SamplePath { framework, latent: rec.latent, noise: rec.noise });
        }
        Ok(Dataset { header, paths })
    }
}
