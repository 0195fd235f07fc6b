//! Observation frameworks and the interpolated observation process.
//!
//! For a cut-off time `t`, the interpolated process is a continuous
//! piecewise-linear path in `R^{2d+1}`: the value coordinates hold the last
//! observed value of each coordinate and move linearly towards a new
//! observation only across the last inter-observation interval before it,
//! the count coordinates do the same for the number of observations, and
//! the final coordinate is time itself. Nothing observed after `t` affects
//! the path, and cutting at a later time never changes it before `tau(t)`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Relative tolerance used when comparing times.
pub const TIME_EPS: f64 = 1e-9;

/// Irregular, masked observations of one sample path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationFramework {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    masks: Vec<Vec<bool>>,
    horizon: f64,
}

impl ObservationFramework {
    /// Validates and normalises: unobserved coordinates are stored as 0.
    pub fn new(
        times: Vec<f64>,
        mut values: Vec<Vec<f64>>,
        masks: Vec<Vec<bool>>,
        horizon: f64,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::config("observation framework needs the observation at time 0"));
        }
        if times.len() != values.len() || times.len() != masks.len() {
            return Err(Error::config("times, values and masks must have the same length"));
        }
        if times[0] != 0.0 {
            return Err(Error::config(format!("first observation time must be 0, got {}", times[0])));
        }
        if !(horizon > 0.0) {
            return Err(Error::config("horizon must be positive"));
        }
        let d = values[0].len();
        if d == 0 {
            return Err(Error::config("observations must have at least one coordinate"));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::config(format!(
                    "observation times must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if *times.last().unwrap() > horizon * (1.0 + TIME_EPS) {
            return Err(Error::config("observation time beyond the horizon"));
        }
        if values.iter().any(|v| v.len() != d) || masks.iter().any(|m| m.len() != d) {
            return Err(Error::config("inconsistent observation dimensions"));
        }
        if !masks[0].iter().all(|m| *m) {
            return Err(Error::config("every coordinate must be observed at time 0"));
        }
        for (v, m) in values.iter_mut().zip(&masks) {
            for (x, &observed) in v.iter_mut().zip(m) {
                if !observed {
                    *x = 0.0;
                } else if !x.is_finite() {
                    return Err(Error::config("non-finite observation value"));
                }
            }
        }
        Ok(ObservationFramework { times, values, masks, horizon })
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Number of observation times after 0 (pseudo times included).
    pub fn n(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn masks(&self) -> &[Vec<bool>] {
        &self.masks
    }

    pub fn initial_value(&self) -> &[f64] {
        &self.values[0]
    }

    /// True if at least one coordinate is observed at index `i`.
    pub fn is_observed(&self, i: usize) -> bool {
        self.masks[i].iter().any(|m| *m)
    }

    /// Number of indices `i >= 1` at which something is observed.
    pub fn observed_count(&self) -> usize {
        (1..self.times.len()).filter(|&i| self.is_observed(i)).count()
    }

    fn index_at_or_before(&self, t: f64) -> usize {
        let tol = TIME_EPS * self.horizon;
        self.times.partition_point(|&ti| ti <= t + tol).saturating_sub(1)
    }

    /// Last observation time `<= t`.
    pub fn tau(&self, t: f64) -> f64 {
        self.times[self.index_at_or_before(t)]
    }

    /// Last time `<= t` at which coordinate `coord` was observed.
    pub fn tau_masked(&self, t: f64, coord: usize) -> f64 {
        let i = self.last_index_observing(self.index_at_or_before(t), coord);
        self.times[i]
    }

    /// Index of the last observation strictly before `t` at which any
    /// coordinate was observed (0 when `t <= 0`).
    pub fn last_observed_index_before(&self, t: f64) -> usize {
        let tol = TIME_EPS * self.horizon;
        let mut i = self.times.partition_point(|&ti| ti < t - tol).saturating_sub(1);
        while i > 0 && !self.is_observed(i) {
            i -= 1;
        }
        i
    }

    fn last_index_observing(&self, upto: usize, coord: usize) -> usize {
        (0..=upto).rev().find(|&i| self.masks[i][coord]).unwrap_or(0)
    }

    /// Last observed value of every coordinate up to and including index
    /// `i`; coordinates unobserved at `i` carry their previous value.
    pub fn filled_values(&self, i: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.values[self.last_index_observing(i, j)][j])
            .collect()
    }

    /// Per-coordinate observation counts up to and including index `i`.
    pub fn counts(&self, i: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|j| (0..=i).filter(|&k| self.masks[k][j]).count() as f64)
            .collect()
    }

    /// The interpolated observation process cut at `t`, evaluated at `s`.
    ///
    /// Returns `2d + 1` coordinates: values, observation counts, time.
    /// Evaluated straight from the case definition; [`Self::vertex_list`]
    /// is the exact piecewise-linear representation of the same path.
    pub fn interpolate(&self, t: f64, s: f64) -> Vec<f64> {
        let d = self.dim();
        let tol = TIME_EPS * self.horizon;
        let mut out = vec![0.0; 2 * d + 1];
        for j in 0..d {
            // a: last j-observation at or before min(s, t)
            let upto = self.index_at_or_before(s.min(t));
            let a = self.last_index_observing(upto, j);
            // b: first j-observation with s <= t_b <= t (b >= 1)
            let b = (1..self.times.len())
                .find(|&k| self.masks[k][j] && self.times[k] >= s - tol && self.times[k] <= t + tol);
            let count_a = (0..=a).filter(|&k| self.masks[k][j]).count() as f64;
            match b {
                Some(b) if self.times[b - 1] < s => {
                    let (lo, hi) = (self.times[b - 1], self.times[b]);
                    let w = ((s - lo) / (hi - lo)).clamp(0.0, 1.0);
                    out[j] = self.values[a][j] * (1.0 - w) + self.values[b][j] * w;
                    out[d + j] = count_a + w;
                }
                _ => {
                    out[j] = self.values[a][j];
                    out[d + j] = count_a;
                }
            }
        }
        out[2 * d] = s;
        out
    }

    /// Vertices of the interpolated process cut at `t`, on `[0, t]`.
    pub fn vertex_list(&self, t: f64) -> InterpolatedPath {
        let d = self.dim();
        let last = self.index_at_or_before(t);
        let mut params = Vec::with_capacity(last + 2);
        let mut points = Vec::with_capacity(last + 2);
        let mut current = self.values[0].clone();
        let mut counts = vec![1.0; d];
        for i in 0..=last {
            if i > 0 {
                for j in 0..d {
                    if self.masks[i][j] {
                        current[j] = self.values[i][j];
                        counts[j] += 1.0;
                    }
                }
            }
            let mut p = current.clone();
            p.extend_from_slice(&counts);
            p.push(self.times[i]);
            params.push(self.times[i]);
            points.push(p);
        }
        let tail = t > self.times[last] + TIME_EPS * self.horizon;
        if tail {
            let mut p = points.last().unwrap().clone();
            p[2 * d] = t;
            params.push(t);
            points.push(p);
        }
        InterpolatedPath { dim: d, params, points, tail }
    }
}

/// Piecewise-linear realisation of the interpolated observation process.
#[derive(Clone, Debug, PartialEq)]
pub struct InterpolatedPath {
    dim: usize,
    params: Vec<f64>,
    points: Vec<Vec<f64>>,
    tail: bool,
}

impl InterpolatedPath {
    /// Parameter values `s` of the vertices.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Vertices as `(values, counts, time)`.
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Whether the last vertex only extends the time coordinate to the
    /// cut-off (it is not an observation time).
    pub fn has_tail(&self) -> bool {
        self.tail
    }

    /// Linear interpolation between the vertices.
    pub fn at(&self, s: f64) -> Vec<f64> {
        let k = self.params.partition_point(|&p| p < s);
        if k == 0 {
            let mut p = self.points[0].clone();
            *p.last_mut().unwrap() = s;
            return p;
        }
        if k == self.params.len() {
            let mut p = self.points[k - 1].clone();
            *p.last_mut().unwrap() = s;
            return p;
        }
        let (s0, s1) = (self.params[k - 1], self.params[k]);
        let w = (s - s0) / (s1 - s0);
        self.points[k - 1]
            .iter()
            .zip(&self.points[k])
            .map(|(a, b)| a * (1.0 - w) + b * w)
            .collect()
    }

    /// Vertices projected onto the coordinates fed to the signature:
    /// values shifted by `origin`, optionally the counts, and time.
    pub fn signature_input(&self, origin: &[f64], include_counts: bool) -> Vec<Vec<f64>> {
        let d = self.dim;
        self.points
            .iter()
            .map(|p| {
                let mut v: Vec<f64> = p[..d].iter().zip(origin).map(|(x, o)| x - o).collect();
                if include_counts {
                    v.extend_from_slice(&p[d..2 * d]);
                }
                v.push(p[2 * d]);
                v
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fw_1d(times: &[f64], values: &[f64], masks: &[bool]) -> ObservationFramework {
        ObservationFramework::new(
            times.to_vec(),
            values.iter().map(|v| vec![*v]).collect(),
            masks.iter().map(|m| vec![*m]).collect(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn tau_examples() {
        let fw = fw_1d(&[0.0, 0.3, 0.7], &[0.0, 1.0, 2.0], &[true, false, true]);
        assert_eq!(fw.tau(0.5), 0.3);
        assert_eq!(fw.tau(0.3), 0.3);
        assert_eq!(fw.tau_masked(0.8, 0), 0.7);
        assert_eq!(fw.tau_masked(0.5, 0), 0.0);
    }

    #[test]
    fn interpolation_examples() {
        let fw = fw_1d(&[0.0, 1.0], &[0.0, 2.0], &[true, true]);
        let v = fw.interpolate(1.0, 0.5);
        assert!((v[0] - 1.0).abs() < 1e-15);
        assert!((v[1] - 1.5).abs() < 1e-15);
        assert_eq!(v[2], 0.5);
        // cut before the second observation: held, no leakage
        let v = fw.interpolate(0.5, 0.5);
        assert_eq!(v, vec![0.0, 1.0, 0.5]);
        // s at time 0
        let v = fw.interpolate(1.0, 0.0);
        assert_eq!(v, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn constant_path_without_later_observations() {
        let fw = fw_1d(&[0.0], &[0.7], &[true]);
        let p = fw.vertex_list(1.0);
        assert_eq!(p.params(), &[0.0, 1.0]);
        assert_eq!(p.points()[0][0], 0.7);
        assert_eq!(p.points()[1][0], 0.7);
        assert!(p.has_tail());
    }

    #[test]
    fn invalid_frameworks_are_rejected() {
        let bad_start = ObservationFramework::new(vec![0.1], vec![vec![0.0]], vec![vec![true]], 1.0);
        assert!(bad_start.is_err());
        let not_increasing = ObservationFramework::new(
            vec![0.0, 0.5, 0.5],
            vec![vec![0.0]; 3],
            vec![vec![true]; 3],
            1.0,
        );
        assert!(not_increasing.is_err());
        let unobserved_start = ObservationFramework::new(vec![0.0], vec![vec![0.0]], vec![vec![false]], 1.0);
        assert!(unobserved_start.is_err());
    }

    #[test]
    fn unobserved_values_are_zeroed_and_filled() {
        let fw = ObservationFramework::new(
            vec![0.0, 0.5],
            vec![vec![1.0, 2.0], vec![9.0, 3.0]],
            vec![vec![true, true], vec![false, true]],
            1.0,
        )
        .unwrap();
        assert_eq!(fw.values()[1], vec![0.0, 3.0]);
        assert_eq!(fw.filled_values(1), vec![1.0, 3.0]);
        assert_eq!(fw.counts(1), vec![1.0, 2.0]);
    }
}
