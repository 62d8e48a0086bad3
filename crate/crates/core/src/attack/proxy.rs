use rand::Rng;

use crate::error::{Error, Result};
use crate::gradcore::{Activation, Mlp};
use crate::scalar::Scalar;

/// Localization head: fingerprint -> (x, y) meters.
///
/// Inputs are standardized with a stored per-feature mean and scale, the
/// perceptron output is mapped to meters as `offset + scale * out`. The
/// head starts at zero, so an untrained attacker predicts `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyAttacker<T> {
    mlp: Mlp<T>,
    feat_mean: Vec<T>,
    feat_scale: Vec<T>,
    offset: [T; 2],
    scale: T,
}

impl<T: Scalar> ProxyAttacker<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, inputs: usize, hidden: usize, offset: [T; 2], scale: T) -> Self {
        Self {
            mlp: Mlp::init(rng, inputs, hidden, 2, Activation::Tanh, true),
            feat_mean: vec![T::zero(); inputs],
            feat_scale: vec![T::one(); inputs],
            offset,
            scale,
        }
    }

    pub fn inputs(&self) -> usize {
        self.mlp.inputs()
    }

    pub fn mlp(&self) -> &Mlp<T> {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp<T> {
        &mut self.mlp
    }

    pub fn offset(&self) -> [T; 2] {
        self.offset
    }

    /// Sets the input standardization from a set of fingerprints.
    /// Constant features keep scale 1.
    pub fn fit_normalizer(&mut self, features: &[Vec<T>]) -> Result<()> {
        if features.is_empty() {
            return Err(Error::InvalidArgument("no features to normalize".into()));
        }
        let n = T::from_usize_lossy(features.len());
        for j in 0..self.inputs() {
            let mean = features.iter().map(|f| f[j]).sum::<T>() / n;
            let var = features.iter().map(|f| (f[j] - mean) * (f[j] - mean)).sum::<T>() / n;
            let sd = var.sqrt();
            self.feat_mean[j] = mean;
            self.feat_scale[j] = if sd > T::lit(1e-12) && sd.is_finite() {
                sd
            } else {
                T::one()
            };
        }
        Ok(())
    }

    fn normalized(&self, fp: &[T]) -> Result<Vec<T>> {
        if fp.len() != self.inputs() {
            return Err(Error::ShapeMismatch(format!(
                "attacker expects {} features, got {}",
                self.inputs(),
                fp.len()
            )));
        }
        Ok(fp
            .iter()
            .zip(self.feat_mean.iter().zip(&self.feat_scale))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect())
    }

    pub fn predict(&self, fp: &[T]) -> Result<[T; 2]> {
        self.predict_with(self.mlp.params().as_slice(), fp)
    }

    pub fn predict_with(&self, params: &[T], fp: &[T]) -> Result<[T; 2]> {
        let (o, _) = self.mlp.forward_with(params, &self.normalized(fp)?)?;
        Ok([self.offset[0] + self.scale * o[0], self.offset[1] + self.scale * o[1]])
    }

    /// Mean over the batch of the squared coordinate error, summed over
    /// both axes. Accumulates the parameter gradient into `grad` when given
    /// and returns the loss together with the gradient with respect to each
    /// input fingerprint.
    pub fn loss_with(
        &self,
        params: &[T],
        batch: &[(&[T], [T; 2])],
        mut grad: Option<&mut [T]>,
    ) -> Result<(T, Vec<Vec<T>>)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty attacker batch".into()));
        }
        let n = T::from_usize_lossy(batch.len());
        let mut loss = T::zero();
        let mut input_grads = Vec::with_capacity(batch.len());
        let mut scratch = vec![T::zero(); params.len()];
        for (fp, c) in batch {
            let (o, cache) = self.mlp.forward_with(params, &self.normalized(fp)?)?;
            let e = [
                self.offset[0] + self.scale * o[0] - c[0],
                self.offset[1] + self.scale * o[1] - c[1],
            ];
            loss = loss + (e[0] * e[0] + e[1] * e[1]) / n;
            let two = T::lit(2.0);
            let g_out = [two * e[0] * self.scale / n, two * e[1] * self.scale / n];
            let gp: &mut [T] = match grad.as_deref_mut() {
                Some(g) => g,
                None => &mut scratch,
            };
            let gx = self.mlp.backward_with(params, &cache, &g_out, gp)?;
            input_grads.push(gx.iter().zip(&self.feat_scale).map(|(&g, &s)| g / s).collect());
        }
        Ok((loss, input_grads))
    }

    pub fn loss(&self, batch: &[(&[T], [T; 2])]) -> Result<T> {
        self.loss_with(self.mlp.params().as_slice(), batch, None)
            .map(|(l, _)| l)
    }

    /// One SGD step on the batch; returns the loss before the step. The
    /// step is taken on the loss measured in units of the output scale, so
    /// `lr` does not depend on the size of the area.
    pub fn train_step(&mut self, batch: &[(&[T], [T; 2])], lr: T) -> Result<T> {
        let mut g = vec![T::zero(); self.mlp.params().len()];
        let (loss, _) = self.loss_with(self.mlp.params().as_slice(), batch, Some(&mut g))?;
        if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("attacker gradient".into()));
        }
        let step = lr / (self.scale * self.scale);
        for (p, gi) in self.mlp.params_mut().as_mut_slice().iter_mut().zip(&g) {
            *p = *p - step * *gi;
        }
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::grad_check;
    use crate::rng::{stream, Purpose};

    fn data(n: usize, seed: u64) -> Vec<(Vec<f64>, [f64; 2])> {
        let mut rng = stream(seed, Purpose::Test);
        (0..n)
            .map(|_| {
                let f: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                let c = [32.0 + 10.0 * f[0] - 5.0 * f[1], 32.0 + 8.0 * f[2]];
                (f, c)
            })
            .collect()
    }

    fn refs(d: &[(Vec<f64>, [f64; 2])]) -> Vec<(&[f64], [f64; 2])> {
        d.iter().map(|(f, c)| (f.as_slice(), *c)).collect()
    }

    fn attacker() -> ProxyAttacker<f64> {
        let mut a = ProxyAttacker::new(&mut stream(3, Purpose::AttackInit), 6, 16, [32.0, 32.0], 32.0);
        let mut rng = stream(4, Purpose::Test);
        for v in a.mlp_mut().params_mut().as_mut_slice() {
            *v += rng.random_range(-0.3..0.3);
        }
        a
    }

    #[test]
    fn untrained_predicts_offset() {
        let a = ProxyAttacker::<f64>::new(&mut stream(1, Purpose::Test), 6, 8, [10.0, 20.0], 5.0);
        assert_eq!(a.predict(&[1.0; 6]).unwrap(), [10.0, 20.0]);
    }

    #[test]
    fn zero_lr_is_noop() {
        let d = data(8, 1);
        let mut a = attacker();
        let before = a.clone();
        a.train_step(&refs(&d), 0.0).unwrap();
        assert_eq!(a, before);
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let d = data(5, 2);
        let a = attacker();
        let b = refs(&d);
        let report = grad_check(
            |p: &[f64]| {
                let mut g = vec![0.0; p.len()];
                let (l, _) = a.loss_with(p, &b, Some(&mut g)).unwrap();
                (l, g)
            },
            a.mlp().params().as_slice(),
            1e-6,
            200,
            &mut stream(5, Purpose::Test),
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut d = data(3, 3);
        let mut a = attacker();
        let feats: Vec<Vec<f64>> = d.iter().map(|(f, _)| f.clone()).collect();
        a.fit_normalizer(&feats).unwrap();
        let (_, gx) = a.loss_with(a.mlp().params().as_slice(), &refs(&d), None).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            for j in 0..6 {
                let orig = d[k].0[j];
                d[k].0[j] = orig + h;
                let lp = a.loss(&refs(&d)).unwrap();
                d[k].0[j] = orig - h;
                let lm = a.loss(&refs(&d)).unwrap();
                d[k].0[j] = orig;
                let num = (lp - lm) / (2.0 * h);
                assert!((gx[k][j] - num).abs() <= 1e-5 * num.abs().max(1e-3), "{k},{j}");
            }
        }
    }

    #[test]
    fn loss_decreases_on_linear_target() {
        let d = data(64, 6);
        let mut a = ProxyAttacker::new(&mut stream(7, Purpose::AttackInit), 6, 16, [32.0, 32.0], 32.0);
        let b = refs(&d);
        let mut last = f64::INFINITY;
        for _ in 0..10 {
            let l = a.train_step(&b, 0.05).unwrap();
            assert!(l < last, "{l} >= {last}");
            last = l;
        }
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(attacker().loss(&[]).is_err());
    }
}
