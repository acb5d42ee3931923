use rand::Rng;

use crate::error::Result;
use crate::nn::{kaiming_uniform, ParamSet, Real, Tape, Tensor, Var};

/// Fully connected ReLU network; `depth` counts linear layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    params: ParamSet<T>,
    depth: usize,
}

impl<T: Real> Mlp<T> {
    pub fn new(input: usize, hidden: usize, output: usize, depth: usize, rng: &mut impl Rng) -> Self {
        assert!(depth >= 1, "an MLP needs at least one layer");
        let mut params = ParamSet::new();
        for l in 0..depth {
            let fan_in = if l == 0 { input } else { hidden };
            let fan_out = if l + 1 == depth { output } else { hidden };
            let mut w = kaiming_uniform::<T>(&[fan_out, fan_in], fan_in, rng);
            if l + 1 == depth {
                // output layer at 1/sqrt(fan_in) so initial logits stay small
                let s = T::from_f64(1.0 / 6f64.sqrt());
                w = w.map(|v| v * s);
            }
            params.add(format!("fc{l}.weight"), w).expect("unique");
            params.add(format!("fc{l}.bias"), Tensor::zeros(&[fan_out])).expect("unique");
        }
        Self { params, depth }
    }

    pub fn from_params(params: ParamSet<T>) -> Self {
        let depth = params.len() / 2;
        Self { params, depth }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn output_len(&self) -> usize {
        self.params.value(2 * self.depth - 1).len()
    }

    pub fn input_len(&self) -> usize {
        self.params.value(0).shape()[1]
    }

    pub fn forward_on_tape(&self, tape: &mut Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        for l in 0..self.depth {
            h = tape.linear(h, vars[2 * l], vars[2 * l + 1])?;
            if l + 1 < self.depth {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// `[B, in] -> [B, out]` without recording.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for l in 0..self.depth {
            let (w, b) = (self.params.value(2 * l), self.params.value(2 * l + 1));
            if h.shape().len() != 2 || h.shape()[1] != w.shape()[1] {
                return Err(crate::Error::LengthMismatch {
                    expected: w.shape()[1],
                    found: h.shape().last().copied().unwrap_or(0),
                });
            }
            let mut y = h.as_matrix().dot(&w.as_matrix().t());
            let relu = l + 1 < self.depth;
            for mut row in y.outer_iter_mut() {
                for (v, &c) in row.iter_mut().zip(b.data()) {
                    *v += c;
                    if relu {
                        *v = v.max(T::ZERO);
                    }
                }
            }
            let rows = y.nrows();
            let cols = y.ncols();
            h = Tensor::new(&[rows, cols], y.into_raw_vec_and_offset().0)?;
        }
        Ok(h)
    }
}
