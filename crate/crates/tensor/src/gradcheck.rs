use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::{c, Scalar, TensorError};

/// Central-difference step used by the test suites.
pub const DEFAULT_GRAD_CHECK_STEP: f64 = 1e-5;

/// Compares tape gradients of a scalar-valued function against central
/// finite differences at `point`, returning the maximum relative error
/// over all coordinates. The relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-8).
pub fn grad_check<T, F>(f: &F, point: &[Tensor<T>], h: T) -> Result<T, TensorError>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var, TensorError>,
{
    if h <= T::zero() {
        return Err(TensorError::NonPositiveStep);
    }

    let eval = |tensors: &[Tensor<T>]| -> Result<T, TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        if tape.value(loss).numel() != 1 {
            return Err(TensorError::NonScalarLoss(
                tape.value(loss).shape().to_vec(),
            ));
        }
        Ok(tape.scalar_value(loss))
    };

    // Analytic gradients from one tape.
    let mut tape = Tape::new();
    let vars: Vec<Var> = point
        .iter()
        .map(|t| tape.leaf(t.clone().requires_grad(true)))
        .collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let floor = c::<T>(1e-8);
    let two_h = h + h;
    let mut max_rel = T::zero();
    for (pi, tensor) in point.iter().enumerate() {
        let analytic = grads.get(vars[pi]);
        for i in 0..tensor.numel() {
            let mut plus = point.to_vec();
            plus[pi].data_mut()[i] += h;
            let mut minus = point.to_vec();
            minus[pi].data_mut()[i] -= h;
            let numeric = (eval(&plus)? - eval(&minus)?) / two_h;
            let a = analytic[i];
            let denom = a.abs().max(numeric.abs()).max(floor);
            let rel = (a - numeric).abs() / denom;
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
