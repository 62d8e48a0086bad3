use std::marker::PhantomData;
use std::ops::Range;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gradcore::{
    conv2d_backward_raw, conv2d_forward_raw, mse_loss_raw, relu_backward_in_place, relu_in_place, ConvShape, Layout,
    ParamVector, Tensor,
};
use crate::scalar::Scalar;

pub const STAGE1_IN_CHANNELS: usize = 2;
pub const STAGE2_IN_CHANNELS: usize = 3;
/// Index of the transmitter raster among the input channels of both stages.
pub const TX_CHANNEL: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub hidden_channels: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { hidden_channels: 8 }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_channels == 0 {
            return Err(Error::Config("model.hidden_channels must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which output the loss is taken on and which parameters receive gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Loss on the coarse output; only stage-1 parameters move.
    Stage1,
    /// Loss on the refined output with the coarse estimate held constant;
    /// only stage-2 parameters move.
    Stage2,
    /// Loss on the refined output, differentiated through both stages.
    Composed,
}

#[derive(Debug, Clone)]
struct ConvDef {
    weight: Range<usize>,
    bias: Range<usize>,
    c_in: usize,
    c_out: usize,
}

#[derive(Debug, Clone)]
struct StageDef {
    convs: [ConvDef; 3],
}

/// Activations of one stage kept for the backward pass.
struct StageCache<T> {
    input: Vec<T>,
    hidden1: Vec<T>,
    hidden2: Vec<T>,
    output: Vec<T>,
}

/// The network architecture. Parameters live in a separate [`ParamVector`]
/// so that the same architecture serves the server and every client.
#[derive(Debug, Clone)]
pub struct TwoStageNet<T> {
    config: NetConfig,
    layout: Arc<Layout>,
    stages: [StageDef; 2],
    _scalar: PhantomData<T>,
}

const CONV_NAMES: [[&str; 3]; 2] = [["conv1a", "conv1b", "conv1c"], ["conv2a", "conv2b", "conv2c"]];

impl<T: Scalar> TwoStageNet<T> {
    pub fn new(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_channels;
        let channels = [
            [(STAGE1_IN_CHANNELS, h), (h, h), (h, 1)],
            [(STAGE2_IN_CHANNELS, h), (h, h), (h, 1)],
        ];
        let mut blocks = Vec::new();
        for (names, chans) in CONV_NAMES.iter().zip(&channels) {
            for (name, &(ci, co)) in names.iter().zip(chans) {
                blocks.push((format!("{name}.weight"), vec![co, ci, 3, 3]));
                blocks.push((format!("{name}.bias"), vec![co]));
            }
        }
        let layout = Arc::new(Layout::from_blocks(blocks));
        let def = |s: usize, i: usize| -> Result<ConvDef> {
            let name = CONV_NAMES[s][i];
            let (c_in, c_out) = channels[s][i];
            Ok(ConvDef {
                weight: layout.range(&format!("{name}.weight"))?,
                bias: layout.range(&format!("{name}.bias"))?,
                c_in,
                c_out,
            })
        };
        let stages = [
            StageDef {
                convs: [def(0, 0)?, def(0, 1)?, def(0, 2)?],
            },
            StageDef {
                convs: [def(1, 0)?, def(1, 1)?, def(1, 2)?],
            },
        ];
        Ok(Self {
            config,
            layout,
            stages,
            _scalar: PhantomData,
        })
    }

    pub fn config(&self) -> NetConfig {
        self.config
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    /// Total parameter count `d`.
    pub fn param_count(&self) -> usize {
        self.layout.total()
    }

    /// Index range of stage `s` (0 or 1) inside the flat parameter vector.
    pub fn stage_range(&self, s: usize) -> Range<usize> {
        let first = &self.stages[s].convs[0];
        let last = &self.stages[s].convs[2];
        first.weight.start..last.bias.end
    }

    /// Weights uniform in `[-a, a]` with `a = sqrt(1 / fan_in)`, biases zero.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector<T> {
        let mut p = ParamVector::zeros(self.layout.clone());
        let data = p.as_mut_slice();
        for stage in &self.stages {
            for conv in &stage.convs {
                let a = (1.0 / (conv.c_in * 9) as f64).sqrt();
                for v in &mut data[conv.weight.clone()] {
                    *v = T::lit(rng.random_range(-a..=a));
                }
            }
        }
        p
    }

    fn check_params(&self, params: &ParamVector<T>) -> Result<()> {
        if params.len() != self.layout.total() || **params.layout() != *self.layout {
            return Err(Error::LayoutMismatch);
        }
        Ok(())
    }

    fn check_input(input: &Tensor<T>, channels: usize) -> Result<(usize, usize)> {
        let (c, h, w) = input.chw()?;
        if c != channels {
            return Err(Error::ShapeMismatch(format!(
                "expected {channels} input channels, got {c}"
            )));
        }
        Ok((h, w))
    }

    fn stage_forward(&self, params: &[T], s: usize, input: Vec<T>, h: usize, w: usize) -> Result<StageCache<T>> {
        let [c0, c1, c2] = &self.stages[s].convs;
        let run = |conv: &ConvDef, x: &[T]| -> Result<Vec<T>> {
            let shape = ConvShape {
                c_in: conv.c_in,
                c_out: conv.c_out,
                height: h,
                width: w,
            };
            let mut out = vec![T::zero(); shape.output_len()];
            conv2d_forward_raw(
                shape,
                x,
                &params[conv.weight.clone()],
                &params[conv.bias.clone()],
                &mut out,
            )?;
            Ok(out)
        };
        let mut hidden1 = run(c0, &input)?;
        relu_in_place(&mut hidden1);
        let mut hidden2 = run(c1, &hidden1)?;
        relu_in_place(&mut hidden2);
        let output = run(c2, &hidden2)?;
        Ok(StageCache {
            input,
            hidden1,
            hidden2,
            output,
        })
    }

    /// Accumulates stage parameter gradients; returns the input gradient
    /// when requested.
    #[allow(clippy::too_many_arguments)]
    fn stage_backward(
        &self,
        params: &[T],
        s: usize,
        cache: &StageCache<T>,
        grad_out: &[T],
        grads: &mut [T],
        h: usize,
        w: usize,
        want_input_grad: bool,
    ) -> Result<Option<Vec<T>>> {
        let [c0, c1, c2] = &self.stages[s].convs;
        let back = |conv: &ConvDef, x: &[T], g: &[T], grads: &mut [T], want: bool| -> Result<Option<Vec<T>>> {
            let shape = ConvShape {
                c_in: conv.c_in,
                c_out: conv.c_out,
                height: h,
                width: w,
            };
            let mut gi = if want {
                Some(vec![T::zero(); shape.input_len()])
            } else {
                None
            };
            let (gw, gb) = split_two(grads, &conv.weight, &conv.bias);
            conv2d_backward_raw(shape, g, x, &params[conv.weight.clone()], gi.as_deref_mut(), gw, gb)?;
            Ok(gi)
        };
        let mut g2 = back(c2, &cache.hidden2, grad_out, grads, true)?.expect("requested");
        relu_backward_in_place(&mut g2, &cache.hidden2);
        let mut g1 = back(c1, &cache.hidden1, &g2, grads, true)?.expect("requested");
        relu_backward_in_place(&mut g1, &cache.hidden1);
        back(c0, &cache.input, &g1, grads, want_input_grad)
    }

    /// Coarse estimate, `1 x H x W`.
    pub fn forward_stage1(&self, params: &ParamVector<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_params(params)?;
        let (h, w) = Self::check_input(input, STAGE1_IN_CHANNELS)?;
        let c = self.stage_forward(params.as_slice(), 0, input.data().to_vec(), h, w)?;
        Tensor::new(vec![1, h, w], c.output)
    }

    /// Refined estimate from the input channels and a coarse estimate.
    pub fn forward_stage2(
        &self,
        params: &ParamVector<T>,
        input: &Tensor<T>,
        stage1_out: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        self.check_params(params)?;
        let (h, w) = Self::check_input(input, STAGE1_IN_CHANNELS)?;
        if stage1_out.shape() != [1, h, w] {
            return Err(Error::ShapeMismatch(format!(
                "stage-1 output {:?} does not match input {h}x{w}",
                stage1_out.shape()
            )));
        }
        let x = Tensor::concat_channels(&[input, stage1_out])?;
        let c = self.stage_forward(params.as_slice(), 1, x.into_data(), h, w)?;
        Tensor::new(vec![1, h, w], c.output)
    }

    /// Output the given objective is scored on.
    pub fn predict(&self, params: &ParamVector<T>, input: &Tensor<T>, objective: Objective) -> Result<Tensor<T>> {
        let y1 = self.forward_stage1(params, input)?;
        match objective {
            Objective::Stage1 => Ok(y1),
            Objective::Stage2 | Objective::Composed => self.forward_stage2(params, input, &y1),
        }
    }

    pub fn predict_batch(
        &self,
        params: &ParamVector<T>,
        inputs: &[Tensor<T>],
        objective: Objective,
    ) -> Result<Vec<Tensor<T>>> {
        inputs.iter().map(|x| self.predict(params, x, objective)).collect()
    }

    pub fn loss(
        &self,
        params: &ParamVector<T>,
        input: &Tensor<T>,
        target: &Tensor<T>,
        objective: Objective,
    ) -> Result<T> {
        let y = self.predict(params, input, objective)?;
        mse_loss_raw(y.data(), target.data(), None)
    }

    /// Per-sample MSE; gradients are accumulated into `grads` (same layout).
    pub fn loss_and_grad(
        &self,
        params: &ParamVector<T>,
        input: &Tensor<T>,
        target: &Tensor<T>,
        objective: Objective,
        grads: &mut ParamVector<T>,
    ) -> Result<T> {
        self.loss_and_grad_scaled(params, input, target, objective, T::one(), grads)
    }

    /// As [`Self::loss_and_grad`] but the accumulated gradient is multiplied by `scale`.
    pub fn loss_and_grad_scaled(
        &self,
        params: &ParamVector<T>,
        input: &Tensor<T>,
        target: &Tensor<T>,
        objective: Objective,
        scale: T,
        grads: &mut ParamVector<T>,
    ) -> Result<T> {
        self.check_params(params)?;
        self.check_params(grads)?;
        let (h, w) = Self::check_input(input, STAGE1_IN_CHANNELS)?;
        if target.shape() != [1, h, w] {
            return Err(Error::ShapeMismatch(format!(
                "target {:?} for a {h}x{w} input",
                target.shape()
            )));
        }
        let p = params.as_slice();
        let g = grads.as_mut_slice();
        let s1 = self.stage_forward(p, 0, input.data().to_vec(), h, w)?;
        if objective == Objective::Stage1 {
            let mut gy = vec![T::zero(); h * w];
            let loss = mse_loss_raw(&s1.output, target.data(), Some(&mut gy))?;
            scale_all(&mut gy, scale);
            self.stage_backward(p, 0, &s1, &gy, g, h, w, false)?;
            return Ok(loss);
        }
        let mut x2 = input.data().to_vec();
        x2.extend_from_slice(&s1.output);
        let s2 = self.stage_forward(p, 1, x2, h, w)?;
        let mut gy = vec![T::zero(); h * w];
        let loss = mse_loss_raw(&s2.output, target.data(), Some(&mut gy))?;
        scale_all(&mut gy, scale);
        let composed = objective == Objective::Composed;
        let gx2 = self.stage_backward(p, 1, &s2, &gy, g, h, w, composed)?;
        if let Some(gx2) = gx2 {
            let gy1 = &gx2[STAGE1_IN_CHANNELS * h * w..];
            self.stage_backward(p, 0, &s1, gy1, g, h, w, false)?;
        }
        Ok(loss)
    }

    /// Group 1 = stage-1 first-layer weights on the transmitter channel,
    /// group 2 = the same slice in stage 2, group 3 = everything else.
    pub fn build_group_masks(&self) -> super::GroupMaskSet {
        let slice = |s: usize| -> Vec<usize> {
            let conv = &self.stages[s].convs[0];
            (0..conv.c_out)
                .flat_map(|o| {
                    let base = conv.weight.start + (o * conv.c_in + TX_CHANNEL) * 9;
                    base..base + 9
                })
                .collect()
        };
        let g1 = slice(0);
        let g2 = slice(1);
        let d = self.param_count();
        let mut taken = vec![false; d];
        for &i in g1.iter().chain(&g2) {
            taken[i] = true;
        }
        let rest = (0..d).filter(|&i| !taken[i]).collect();
        super::GroupMaskSet::from_groups(d, vec![g1, g2, rest]).expect("architecture groups form a partition")
    }
}

fn scale_all<T: Scalar>(xs: &mut [T], a: T) {
    if a != T::one() {
        for x in xs {
            *x = *x * a;
        }
    }
}

/// Two disjoint mutable sub-slices; `a` must precede `b`.
fn split_two<'a, T>(xs: &'a mut [T], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [T], &'a mut [T]) {
    debug_assert!(a.end <= b.start);
    let (left, right) = xs.split_at_mut(b.start);
    (&mut left[a.clone()], &mut right[..b.end - b.start])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::grad_check;
    use crate::rng::{stream, Purpose};
    use crate::synthdata::{generate_dataset, MapSpec};

    fn net() -> TwoStageNet<f64> {
        TwoStageNet::new(NetConfig::default()).unwrap()
    }

    fn sample_io(seed: u64) -> (Tensor<f64>, Tensor<f64>) {
        let spec = MapSpec {
            height: 8,
            width: 8,
            n_buildings: 2,
            ..MapSpec::default()
        };
        let s = &generate_dataset(seed, &spec, 1, 1).unwrap()[0];
        (s.input_tensor(), s.target_tensor())
    }

    #[test]
    fn parameter_count_default() {
        // 8*2*9+8 + 8*8*9+8 + 8*9+1 + 8*3*9+8 + 8*8*9+8 + 8*9+1
        assert_eq!(net().param_count(), 1690);
        assert_eq!(net().stage_range(0), 0..809);
        assert_eq!(net().stage_range(1), 809..1690);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let n = net();
        let p = ParamVector::zeros(n.layout().clone());
        let (x, _) = sample_io(1);
        let y1 = n.forward_stage1(&p, &x).unwrap();
        assert_eq!(y1.shape(), &[1, 8, 8]);
        assert!(y1.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_stage2_ignores_coarse_estimate() {
        let n = net();
        let mut p = n.init_params(&mut stream(1, Purpose::Test));
        for v in &mut p.as_mut_slice()[n.stage_range(1)] {
            *v = 0.0;
        }
        let (x, _) = sample_io(2);
        let noise = Tensor::filled(vec![1, 8, 8], 3.7);
        let y = n.forward_stage2(&p, &x, &noise).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_permutation_commutes() {
        let n = net();
        let p = n.init_params(&mut stream(3, Purpose::Test));
        let inputs: Vec<_> = (0..4).map(|s| sample_io(s).0).collect();
        let out = n.predict_batch(&p, &inputs, Objective::Composed).unwrap();
        let perm = [2, 0, 3, 1];
        let permuted: Vec<_> = perm.iter().map(|&i| inputs[i].clone()).collect();
        let out_p = n.predict_batch(&p, &permuted, Objective::Composed).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(out_p[k], out[i]);
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let n = net();
        let a = n.init_params(&mut stream(4, Purpose::Test));
        let b = n.init_params(&mut stream(4, Purpose::Test));
        assert_eq!(a, b);
        for seg in n.layout().segments() {
            if seg.name.ends_with(".bias") {
                assert!(a.segment(&seg.name).unwrap().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn init_variance_matches_uniform_law() {
        // conv1b has fan_in 72: a^2/3 = 1/216; pool many draws for 10^4+ samples
        let n = net();
        let mut vals = Vec::new();
        let mut rng = stream(5, Purpose::Test);
        while vals.len() < 10_000 {
            vals.extend_from_slice(n.init_params(&mut rng).segment("conv1b.weight").unwrap());
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        let expected = 1.0 / 72.0 / 3.0;
        assert!((var / expected - 1.0).abs() < 0.1, "var {var} vs {expected}");
    }

    #[test]
    fn frozen_stage_receives_no_gradient() {
        let n = net();
        let p = n.init_params(&mut stream(6, Purpose::Test));
        let (x, t) = sample_io(6);
        let mut g = ParamVector::zeros(n.layout().clone());
        n.loss_and_grad(&p, &x, &t, Objective::Stage1, &mut g).unwrap();
        assert!(g.as_slice()[n.stage_range(1)].iter().all(|&v| v == 0.0));
        assert!(g.as_slice()[n.stage_range(0)].iter().any(|&v| v != 0.0));
        let mut g = ParamVector::zeros(n.layout().clone());
        n.loss_and_grad(&p, &x, &t, Objective::Stage2, &mut g).unwrap();
        assert!(g.as_slice()[n.stage_range(0)].iter().all(|&v| v == 0.0));
    }

    /// Random point with non-zero biases, so no pre-activation sits exactly
    /// on the ReLU kink (zero biases and binary inputs put many there).
    fn generic_params(n: &TwoStageNet<f64>, seed: u64) -> ParamVector<f64> {
        let mut p = n.init_params(&mut stream(seed, Purpose::Test));
        let mut rng = stream(seed + 1, Purpose::Test);
        for seg in n.layout().segments() {
            if seg.name.ends_with(".bias") {
                for v in &mut p.as_mut_slice()[seg.range()] {
                    *v = rng.random_range(-0.2..0.2);
                }
            }
        }
        p
    }

    /// Finite-difference check over the coordinates the objective trains
    /// (stage 2 alone for `Stage2`, whose coarse input is held constant).
    fn check_objective(objective: Objective, seed: u64) -> f64 {
        let n = net();
        let p = generic_params(&n, seed);
        let (x, t) = sample_io(seed);
        let active = match objective {
            Objective::Stage2 => n.stage_range(1),
            _ => 0..n.param_count(),
        };
        let eval = |q: &[f64]| {
            let mut full = p.clone();
            full.as_mut_slice()[active.clone()].copy_from_slice(q);
            let mut g = ParamVector::zeros(n.layout().clone());
            let l = n.loss_and_grad(&full, &x, &t, objective, &mut g).unwrap();
            (l, g.as_slice()[active.clone()].to_vec())
        };
        grad_check(
            eval,
            &p.as_slice()[active.clone()],
            1e-5,
            60,
            &mut stream(seed + 100, Purpose::Test),
        )
        .unwrap()
        .max_relative_error
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (objective, seed) in [(Objective::Stage1, 7), (Objective::Stage2, 8), (Objective::Composed, 9)] {
            let err = check_objective(objective, seed);
            assert!(err < 1e-4, "{objective:?}: {err}");
        }
    }

    #[test]
    fn output_depends_on_transmitter_location() {
        let n = net();
        let spec = MapSpec {
            n_buildings: 3,
            ..MapSpec::default()
        };
        let base = &generate_dataset(11, &spec, 1, 1).unwrap()[0];
        let free: Vec<usize> = (0..base.building.len()).filter(|&i| base.building[i] == 0.0).collect();
        let mut rng = stream(12, Purpose::Test);
        for draw in 0..10 {
            let p = n.init_params(&mut stream(200 + draw, Purpose::Test));
            for _ in 0..10 {
                let a = free[rng.random_range(0..free.len())];
                let mut b = a;
                while b == a {
                    b = free[rng.random_range(0..free.len())];
                }
                let with_tx = |i: usize| {
                    let mut x = base.input_tensor::<f64>();
                    let plane = base.height * base.width;
                    x.data_mut()[plane..].fill(0.0);
                    x.data_mut()[plane + i] = 1.0;
                    n.forward_stage1(&p, &x).unwrap()
                };
                let diff: f64 = with_tx(a)
                    .data()
                    .iter()
                    .zip(with_tx(b).data())
                    .map(|(u, v)| (u - v).powi(2))
                    .sum();
                assert!(diff > 0.0);
            }
        }
    }

    #[test]
    fn single_precision_tracks_double() {
        let n64 = net();
        let n32 = TwoStageNet::<f32>::new(NetConfig::default()).unwrap();
        let p64 = n64.init_params(&mut stream(13, Purpose::Test));
        let p32 =
            ParamVector::from_vec(n32.layout().clone(), p64.as_slice().iter().map(|&v| v as f32).collect()).unwrap();
        let (x, _) = sample_io(13);
        let y64 = n64.predict(&p64, &x, Objective::Composed).unwrap();
        let y32 = n32.predict(&p32, &x.cast(), Objective::Composed).unwrap();
        for (a, b) in y64.data().iter().zip(y32.data()) {
            assert!((a - *b as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn golden_stage1_output() {
        let n = net();
        let p = n.init_params(&mut stream(2024, Purpose::Init));
        let s = &generate_dataset(2024, &MapSpec::default(), 1, 1).unwrap()[0];
        let y = n.forward_stage1(&p, &s.input_tensor()).unwrap();
        // FNV-1a over the output bit patterns
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in y.data() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        let golden = include_str!("../../tests/golden/stage1_output_fnv.txt").trim();
        assert_eq!(format!("{h:016x}"), golden);
    }
}
