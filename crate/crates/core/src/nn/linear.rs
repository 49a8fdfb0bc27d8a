use rand::Rng;

use crate::error::Result;
use crate::tensor::{ParamId, ParamStore, Tape, Var};

/// Affine map `x W + b` with `W: in × out`, initialised `U(±1/√in)` (the
/// PyTorch default for both weight and bias).
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let weight = store.add_uniform(format!("{name}.weight"), &[in_dim, out_dim], bound, rng);
        let bias = bias.then(|| store.add_uniform(format!("{name}.bias"), &[out_dim], bound, rng));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    /// Applies the map to every row of `x` (`n × in`).
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let y = tape.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = tape.param(b);
                tape.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Layer normalisation over the last axis with learnable gain and shift.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), crate::tensor::Tensor::full(&[dim], 1.0)),
            beta: store.add(format!("{name}.beta"), crate::tensor::Tensor::zeros(&[dim])),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let g = tape.param(self.gamma);
        let b = tape.param(self.beta);
        tape.layer_norm(x, g, b, self.eps)
    }
}
