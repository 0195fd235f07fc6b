//! Truncated signatures of piecewise-linear paths.
//!
//! Coefficients are flattened level by level; inside level `k` the
//! multi-index `(i_1, .., i_k)` is ordered lexicographically, so that the
//! coefficient of `dX^{i_1} .. dX^{i_k}` sits at
//! `offset(k) + sum_j i_j d^{k-j}`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MAX_LEVEL: usize = 5;
pub const MAX_TERMS: usize = 10_000;

/// Number of coefficients of a level-`m` signature of a `d`-dimensional
/// path, including the constant term.
pub fn signature_len(d: usize, m: usize) -> usize {
    if d == 1 {
        m + 1
    } else {
        (0..=m).map(|k| d.pow(k as u32)).sum()
    }
}

fn check_limits(d: usize, m: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::config("signature of a zero-dimensional path"));
    }
    if m > MAX_LEVEL {
        return Err(Error::config(format!("signature level {m} exceeds the maximum {MAX_LEVEL}")));
    }
    let terms = signature_len(d, m);
    if terms > MAX_TERMS {
        return Err(Error::config(format!(
            "signature of dimension {d} at level {m} has {terms} terms (limit {MAX_TERMS})"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSignature {
    dim: usize,
    level: usize,
    coeffs: Vec<f64>,
}

impl TruncatedSignature {
    /// Signature of a constant path: `(1, 0, ..., 0)`.
    pub fn trivial(dim: usize, level: usize) -> Result<Self> {
        check_limits(dim, level)?;
        let mut coeffs = vec![0.0; signature_len(dim, level)];
        coeffs[0] = 1.0;
        Ok(TruncatedSignature { dim, level, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    fn offset(&self, k: usize) -> usize {
        (0..k).map(|j| self.dim.pow(j as u32)).sum()
    }

    /// Coefficients of level `k` (`d^k` entries).
    pub fn level_block(&self, k: usize) -> &[f64] {
        let start = self.offset(k);
        &self.coeffs[start..start + self.dim.pow(k as u32)]
    }

    /// Coefficient for one multi-index.
    pub fn get(&self, word: &[usize]) -> f64 {
        let idx = word.iter().fold(0, |acc, &i| acc * self.dim + i);
        self.coeffs[self.offset(word.len()) + idx]
    }

    /// Appends a linear segment with the given increment (Chen's identity).
    pub fn extend_linear(&mut self, increment: &[f64]) -> Result<()> {
        if increment.len() != self.dim {
            return Err(Error::usage(format!(
                "increment has dimension {}, signature has {}",
                increment.len(),
                self.dim
            )));
        }
        if increment.iter().all(|v| *v == 0.0) {
            return Ok(());
        }
        let seg = linear_segment_signature(increment, self.level)?;
        *self = chen_concatenate(self, &seg)?;
        Ok(())
    }
}

/// Signature of the straight line with the given increment: level `k` is
/// `increment^{(x)k} / k!`.
pub fn linear_segment_signature(increment: &[f64], level: usize) -> Result<TruncatedSignature> {
    let d = increment.len();
    let mut sig = TruncatedSignature::trivial(d, level)?;
    let mut prev = vec![1.0];
    let mut off = 1;
    for k in 1..=level {
        let mut cur = Vec::with_capacity(prev.len() * d);
        for p in &prev {
            for x in increment {
                cur.push(p * x / k as f64);
            }
        }
        sig.coeffs[off..off + cur.len()].copy_from_slice(&cur);
        off += cur.len();
        prev = cur;
    }
    Ok(sig)
}

/// Truncated tensor-algebra product: level `k` of the result is
/// `sum_{i+j=k} a_i (x) b_j`.
pub fn chen_concatenate(a: &TruncatedSignature, b: &TruncatedSignature) -> Result<TruncatedSignature> {
    if a.dim != b.dim || a.level != b.level {
        return Err(Error::usage(format!(
            "cannot concatenate signatures of shape (d={}, m={}) and (d={}, m={})",
            a.dim, a.level, b.dim, b.level
        )));
    }
    let mut out = TruncatedSignature::trivial(a.dim, a.level)?;
    for k in 1..=a.level {
        let start = out.offset(k);
        let block_len = a.dim.pow(k as u32);
        let mut block = vec![0.0; block_len];
        for i in 0..=k {
            let ai = a.level_block(i);
            let bj = b.level_block(k - i);
            // (a_i (x) b_j)[u * |b_j| + v] = a_i[u] * b_j[v]
            for (u, av) in ai.iter().enumerate() {
                if *av == 0.0 {
                    continue;
                }
                let row = &mut block[u * bj.len()..(u + 1) * bj.len()];
                for (r, bv) in row.iter_mut().zip(bj) {
                    *r += av * bv;
                }
            }
        }
        out.coeffs[start..start + block_len].copy_from_slice(&block);
    }
    Ok(out)
}

/// Signature of the piecewise-linear path through `vertices`.
pub fn path_signature(vertices: &[Vec<f64>], level: usize) -> Result<TruncatedSignature> {
    let first = vertices.first().ok_or_else(|| Error::usage("signature of an empty path"))?;
    let d = first.len();
    let mut sig = TruncatedSignature::trivial(d, level)?;
    for pair in vertices.windows(2) {
        if pair[1].len() != d {
            return Err(Error::usage("path vertices have inconsistent dimensions"));
        }
        let inc: Vec<f64> = pair[1].iter().zip(&pair[0]).map(|(b, a)| b - a).collect();
        sig.extend_linear(&inc)?;
    }
    Ok(sig)
}
