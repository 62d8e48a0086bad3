use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Layout, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

/// Two-layer perceptron `in -> hidden (activation) -> out` with a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    inputs: usize,
    hidden: usize,
    outputs: usize,
    activation: Activation,
    params: ParamVector<T>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    input: Vec<T>,
    hidden: Vec<T>,
}

impl<T: Scalar> Mlp<T> {
    pub fn layout(inputs: usize, hidden: usize, outputs: usize) -> Layout {
        Layout::from_blocks([
            ("fc1.weight", vec![hidden, inputs]),
            ("fc1.bias", vec![hidden]),
            ("fc2.weight", vec![outputs, hidden]),
            ("fc2.bias", vec![outputs]),
        ])
    }

    /// All parameters zero.
    pub fn zeros(inputs: usize, hidden: usize, outputs: usize, activation: Activation) -> Self {
        let layout = Arc::new(Self::layout(inputs, hidden, outputs));
        Self {
            inputs,
            hidden,
            outputs,
            activation,
            params: ParamVector::zeros(layout),
        }
    }

    /// Weights uniform in `[-a, a]`, `a = sqrt(1 / fan_in)`, biases zero.
    /// With `zero_head` the output layer starts at zero, so the initial
    /// output is exactly zero for every input.
    pub fn init<R: Rng + ?Sized>(
        rng: &mut R,
        inputs: usize,
        hidden: usize,
        outputs: usize,
        activation: Activation,
        zero_head: bool,
    ) -> Self {
        let mut m = Self::zeros(inputs, hidden, outputs, activation);
        let a1 = (1.0 / inputs as f64).sqrt();
        for v in m.params.segment_mut("fc1.weight").expect("fixed layout") {
            *v = T::lit(rng.random_range(-a1..=a1));
        }
        if !zero_head {
            let a2 = (1.0 / hidden as f64).sqrt();
            for v in m.params.segment_mut("fc2.weight").expect("fixed layout") {
                *v = T::lit(rng.random_range(-a2..=a2));
            }
        }
        m
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn params(&self) -> &ParamVector<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector<T> {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParamVector<T>) -> Result<()> {
        self.params.ensure_same_layout(&params)?;
        self.params = params;
        Ok(())
    }

    fn split<'a>(&self, p: &'a [T]) -> (&'a [T], &'a [T], &'a [T], &'a [T]) {
        let (w1, rest) = p.split_at(self.hidden * self.inputs);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(self.outputs * self.hidden);
        (w1, b1, w2, b2)
    }

    fn act(&self, x: T) -> T {
        match self.activation {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
        }
    }

    /// Derivative of the activation expressed through its output.
    fn act_grad(&self, out: T) -> T {
        match self.activation {
            Activation::Tanh => T::one() - out * out,
            Activation::Relu => {
                if out > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.forward_with(self.params.as_slice(), x).map(|(y, _)| y)
    }

    pub fn forward_cached(&self, x: &[T]) -> Result<(Vec<T>, MlpCache<T>)> {
        self.forward_with(self.params.as_slice(), x)
    }

    /// Forward pass using an explicit parameter slice with this network's layout.
    pub fn forward_with(&self, params: &[T], x: &[T]) -> Result<(Vec<T>, MlpCache<T>)> {
        if x.len() != self.inputs || params.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "mlp expects {} inputs and {} params, got {} and {}",
                self.inputs,
                self.params.len(),
                x.len(),
                params.len()
            )));
        }
        let (w1, b1, w2, b2) = self.split(params);
        let hidden: Vec<T> = (0..self.hidden)
            .map(|j| {
                let row = &w1[j * self.inputs..(j + 1) * self.inputs];
                let z = b1[j] + row.iter().zip(x).map(|(&w, &v)| w * v).sum::<T>();
                self.act(z)
            })
            .collect();
        let out = (0..self.outputs)
            .map(|o| {
                let row = &w2[o * self.hidden..(o + 1) * self.hidden];
                b2[o] + row.iter().zip(&hidden).map(|(&w, &h)| w * h).sum::<T>()
            })
            .collect();
        Ok((
            out,
            MlpCache {
                input: x.to_vec(),
                hidden,
            },
        ))
    }

    /// Accumulates parameter gradients into `grad_params` and returns the
    /// gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache<T>, grad_out: &[T], grad_params: &mut [T]) -> Result<Vec<T>> {
        self.backward_with(self.params.as_slice(), cache, grad_out, grad_params)
    }

    pub fn backward_with(
        &self,
        params: &[T],
        cache: &MlpCache<T>,
        grad_out: &[T],
        grad_params: &mut [T],
    ) -> Result<Vec<T>> {
        if grad_out.len() != self.outputs || grad_params.len() != self.params.len() {
            return Err(Error::ShapeMismatch("mlp backward buffers".into()));
        }
        let (_, _, w2, _) = self.split(params);
        let (w1, _, _, _) = self.split(params);
        let n_w1 = self.hidden * self.inputs;
        let n_w2 = self.outputs * self.hidden;
        let mut grad_hidden = vec![T::zero(); self.hidden];
        {
            let (_, rest) = grad_params.split_at_mut(n_w1 + self.hidden);
            let (gw2, gb2) = rest.split_at_mut(n_w2);
            for o in 0..self.outputs {
                let g = grad_out[o];
                gb2[o] = gb2[o] + g;
                for j in 0..self.hidden {
                    gw2[o * self.hidden + j] = gw2[o * self.hidden + j] + g * cache.hidden[j];
                    grad_hidden[j] = grad_hidden[j] + g * w2[o * self.hidden + j];
                }
            }
        }
        let mut grad_input = vec![T::zero(); self.inputs];
        let (gw1, rest) = grad_params.split_at_mut(n_w1);
        let gb1 = &mut rest[..self.hidden];
        for j in 0..self.hidden {
            let gz = grad_hidden[j] * self.act_grad(cache.hidden[j]);
            gb1[j] = gb1[j] + gz;
            for i in 0..self.inputs {
                gw1[j * self.inputs + i] = gw1[j * self.inputs + i] + gz * cache.input[i];
                grad_input[i] = grad_input[i] + gz * w1[j * self.inputs + i];
            }
        }
        Ok(grad_input)
    }
}
