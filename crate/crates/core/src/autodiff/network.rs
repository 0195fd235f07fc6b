use super::tape::{ParamId, ParamSet, Tape, Var};
use super::tensor::Matrix;
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::config(format!("unknown activation '{other}'"))),
        }
    }
}

/// Feed-forward network with a linear last layer.
///
/// With `residual` set the first `out` input columns are added to the
/// output (`out <= in` is required). Weights live in a shared
/// [`ParamSet`]; the network only remembers their ids.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DenseNetwork {
    widths: Vec<usize>,
    layers: Vec<(ParamId, ParamId)>,
    activation: Activation,
    residual: bool,
}

impl DenseNetwork {
    /// `widths = [in, hidden..., out]`. Weights are drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, as are biases.
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        widths: &[usize],
        activation: Activation,
        residual: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::config(format!("{name}: invalid layer widths {widths:?}")));
        }
        let (inp, out) = (widths[0], widths[widths.len() - 1]);
        if residual && out > inp {
            return Err(Error::config(format!(
                "{name}: residual connection needs output width {out} <= input width {inp}"
            )));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            let b: Vec<f64> = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            let wid = params.add(format!("{name}.{l}.weight"), Matrix::from_vec(fan_out, fan_in, w), true);
            let bid = params.add(format!("{name}.{l}.bias"), Matrix::row_vector(b), false);
            layers.push((wid, bid));
        }
        Ok(DenseNetwork { widths: widths.to_vec(), layers, activation, residual })
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        self.widths[self.widths.len() - 1]
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> &[(ParamId, ParamId)] {
        &self.layers
    }

    /// Records the forward pass of a batch (`rows x in`) on `tape`.
    ///
    /// `dropout` is `(rate, rng)`; when given, every hidden activation is
    /// zeroed with probability `rate` and the survivors rescaled.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        x: Var,
        mut dropout: Option<(f64, &mut dyn rand::RngCore)>,
    ) -> Result<Var> {
        let (rows, cols) = tape.value(x).shape();
        if cols != self.input_width() {
            return Err(Error::config(format!(
                "network input has width {cols}, expected {}",
                self.input_width()
            )));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let wv = tape.param(params, w);
            let bv = tape.param(params, b);
            h = tape.affine(h, wv, Some(bv))?;
            if l < last {
                h = match self.activation {
                    Activation::Tanh => tape.tanh(h),
                    Activation::Relu => tape.relu(h),
                };
                if let Some((rate, rng)) = dropout.as_mut() {
                    if *rate > 0.0 {
                        let keep = 1.0 - *rate;
                        let width = self.widths[l + 1];
                        let mask: Vec<f64> = (0..rows * width)
                            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        h = tape.mul_const(h, Matrix::from_vec(rows, width, mask))?;
                    }
                }
            }
        }
        if self.residual {
            let skip = tape.slice_cols(x, 0, self.output_width())?;
            h = tape.add(h, skip)?;
        }
        Ok(h)
    }

    /// Plain evaluation of a single input vector without a tape.
    pub fn eval(&self, params: &ParamSet, x: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let xv = tape.constant(Matrix::row_vector(x.to_vec()));
        let y = self.forward(&mut tape, params, xv, None)?;
        Ok(tape.value(y).as_slice().to_vec())
    }
}

/// Radial clipping `x * min(1, gamma / |x|_2)` of a plain vector.
pub fn bounded_output(x: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0) {
        return Err(Error::config(format!("output bound must be positive, got {gamma}")));
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let f = if norm > gamma { gamma / norm } else { 1.0 };
    Ok(x.iter().map(|v| v * f).collect())
}
