use serde::{Deserialize, Serialize};

use super::param::{ParamId, ParamStore};
use super::rng::Rng;
use super::scalar::Scalar;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Layer widths of a ReLU multilayer perceptron.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        Self {
            input,
            hidden: hidden.to_vec(),
            output,
        }
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input];
        w.extend(&self.hidden);
        w.push(self.output);
        w
    }

    pub fn num_params(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Affine layer `x W + b` with `W: [inputs, outputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Linear>,
}

impl Mlp {
    /// Registers freshly initialised parameters (Glorot-uniform weights, zero
    /// biases) under `prefix` and returns the network.
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, prefix: &str, spec: MlpSpec, rng: &mut Rng) -> Result<Self> {
        let widths = spec.widths();
        if widths.contains(&0) {
            return Err(Error::Config(format!("MLP widths must be positive: {widths:?}")));
        }
        let mut layers = Vec::new();
        for (i, w) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let values = (0..fan_in * fan_out)
                .map(|_| S::of((2.0 * rng.uniform() - 1.0) * limit))
                .collect();
            let weight = store.add(format!("{prefix}.{i}.weight"), Tensor::new(vec![fan_in, fan_out], values)?, true)?;
            let bias = store.add(format!("{prefix}.{i}.bias"), Tensor::zeros(&[1, fan_out]), true)?;
            layers.push(Linear {
                weight,
                bias,
                inputs: fan_in,
                outputs: fan_out,
            });
        }
        Ok(Self { spec, layers })
    }

    /// Re-attaches to parameters already present in `store` (e.g. after loading).
    pub fn bind<S: Scalar>(store: &ParamStore<S>, prefix: &str, spec: MlpSpec) -> Result<Self> {
        let widths = spec.widths();
        let mut layers = Vec::new();
        for (i, w) in widths.windows(2).enumerate() {
            let find = |suffix: &str, shape: &[usize]| -> Result<ParamId> {
                let name = format!("{prefix}.{i}.{suffix}");
                let id = store
                    .id_of(&name)
                    .ok_or_else(|| Error::Format(format!("missing parameter {name}")))?;
                if store.get(id).shape() != shape {
                    return Err(Error::Format(format!(
                        "parameter {name} has shape {:?}, expected {shape:?}",
                        store.get(id).shape()
                    )));
                }
                Ok(id)
            };
            layers.push(Linear {
                weight: find("weight", &[w[0], w[1]])?,
                bias: find("bias", &[1, w[1]])?,
                inputs: w[0],
                outputs: w[1],
            });
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    /// Batched forward pass on the tape; `x` is `[batch, input]`, returns
    /// `[batch, output]` pre-activation outputs.
    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, store: &ParamStore<S>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = tape.param(store, layer.weight);
            let b = tape.param(store, layer.bias);
            h = tape.matmul(h, w)?;
            h = tape.add(h, b)?;
            if i + 1 < self.layers.len() {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    /// Tape-free forward pass for one input row.
    pub fn forward_row<S: Scalar>(&self, store: &ParamStore<S>, x: &[S]) -> Vec<S> {
        debug_assert_eq!(x.len(), self.spec.input);
        self.forward_row_impl(store, |j| x[j])
    }

    /// [`Mlp::forward_row`] on the columns `columns` of `x`.
    pub fn forward_columns<S: Scalar>(&self, store: &ParamStore<S>, x: &[S], columns: &[usize]) -> Vec<S> {
        debug_assert_eq!(columns.len(), self.spec.input);
        self.forward_row_impl(store, |j| x[columns[j]])
    }

    fn forward_row_impl<S: Scalar>(&self, store: &ParamStore<S>, input: impl Fn(usize) -> S) -> Vec<S> {
        let width = self.layers.iter().map(|l| l.outputs).max().unwrap_or(0);
        let last = self.layers.len().saturating_sub(1);
        // Layers alternate between the two halves; the last one writes the front.
        let mut buf = vec![S::zero(); 2 * width];
        for (i, layer) in self.layers.iter().enumerate() {
            let (front, back) = buf.split_at_mut(width);
            let (src, dst) = if (last - i).is_multiple_of(2) { (&*back, front) } else { (&*front, back) };
            let dst = &mut dst[..layer.outputs];
            dst.copy_from_slice(store.get(layer.bias).values());
            let w = store.get(layer.weight).values();
            for (j, row) in w.chunks_exact(layer.outputs).enumerate() {
                let hv = if i == 0 { input(j) } else { src[j] };
                for (o, &wv) in dst.iter_mut().zip(row) {
                    *o = *o + hv * wv;
                }
            }
            if i < last {
                dst.iter_mut().for_each(|v| *v = v.max(S::zero()));
            }
        }
        buf.truncate(self.spec.output);
        buf
    }
}
