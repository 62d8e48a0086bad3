use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

/// Mean squared error and its gradient with respect to `pred`.
///
/// Uses the mean-over-elements convention: `sum((p - t)^2) / N`.
pub fn mse_loss_raw<T: Scalar>(pred: &[T], target: &[T], grad: Option<&mut [T]>) -> Result<T> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "mse of {} predictions against {} targets",
            pred.len(),
            target.len()
        )));
    }
    let n = T::from_usize_lossy(pred.len());
    let loss = pred.iter().zip(target).map(|(&p, &t)| (p - t) * (p - t)).sum::<T>() / n;
    if let Some(g) = grad {
        let two_over_n = T::lit(2.0) / n;
        for ((gv, &p), &t) in g.iter_mut().zip(pred).zip(target) {
            *gv = two_over_n * (p - t);
        }
    }
    Ok(loss)
}

pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "mse: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let mut grad = Tensor::zeros(pred.shape().to_vec());
    let loss = mse_loss_raw(pred.data(), target.data(), Some(grad.data_mut()))?;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_inputs_give_zero() {
        let t = Tensor::new(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(mse_loss(&t, &t).unwrap().0, 0.0);
    }

    #[test]
    fn constant_residual() {
        let t = Tensor::<f64>::zeros(vec![100]);
        let p = Tensor::filled(vec![100], 0.1);
        let (l, _) = mse_loss(&p, &t).unwrap();
        assert!((l - 0.01).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = Tensor::<f64>::new(vec![5], vec![0.3, -1.2, 0.7, 2.0, 0.0]).unwrap();
        let t = Tensor::new(vec![5], vec![0.1, 0.4, -0.5, 1.0, 0.2]).unwrap();
        let (_, g) = mse_loss(&p, &t).unwrap();
        let h = 1e-6;
        for i in 0..5 {
            let (mut a, mut b) = (p.clone(), p.clone());
            a.data_mut()[i] += h;
            b.data_mut()[i] -= h;
            let fd = (mse_loss(&a, &t).unwrap().0 - mse_loss(&b, &t).unwrap().0) / (2.0 * h);
            assert!((fd - g.data()[i]).abs() < 1e-8);
            assert!((g.data()[i] - 2.0 * (p.data()[i] - t.data()[i]) / 5.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::<f64>::zeros(vec![3]);
        let b = Tensor::<f64>::zeros(vec![4]);
        assert!(mse_loss(&a, &b).is_err());
    }
}
