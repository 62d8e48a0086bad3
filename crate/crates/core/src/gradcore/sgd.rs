use crate::error::Result;
use crate::scalar::Scalar;

use super::ParamVector;

/// `params - lr * grads`.
pub fn sgd_step<T: Scalar>(params: &ParamVector<T>, grads: &ParamVector<T>, lr: T) -> Result<ParamVector<T>> {
    let mut out = params.clone();
    sgd_step_in_place(&mut out, grads, lr)?;
    Ok(out)
}

pub fn sgd_step_in_place<T: Scalar>(params: &mut ParamVector<T>, grads: &ParamVector<T>, lr: T) -> Result<()> {
    params.axpy(-lr, grads)
}
