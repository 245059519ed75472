//! Central finite differences, used as the reference for reverse-mode
//! gradients. Only forward evaluations are involved.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Entries whose magnitude is below this are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Numerical gradient of `f` with respect to every entry of every tensor in
/// `inputs`, by `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference<T: Scalar>(
    inputs: &[Tensor<T>],
    step: T,
    mut f: impl FnMut(&[Tensor<T>]) -> Result<T>,
) -> Result<Vec<Tensor<T>>> {
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    let two_h = step + step;
    for t in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[t].shape());
        for i in 0..inputs[t].numel() {
            let orig = work[t].data()[i];
            work[t].data_mut()[i] = orig + step;
            let plus = f(&work)?;
            work[t].data_mut()[i] = orig - step;
            let minus = f(&work)?;
            work[t].data_mut()[i] = orig;
            g.data_mut()[i] = (plus - minus) / two_h;
        }
        out.push(g);
    }
    Ok(out)
}

/// `max |a - b| / max(|a|, |b|, floor)` over all entries.
pub fn max_relative_error<T: Scalar>(analytic: &[Tensor<T>], numeric: &[Tensor<T>], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| {
            assert_eq!(a.shape(), n.shape());
            a.data().iter().zip(n.data()).map(|(&x, &y)| {
                let (x, y) = (x.as_f64(), y.as_f64());
                (x - y).abs() / x.abs().max(y.abs()).max(floor)
            })
        })
        .fold(0.0, f64::max)
}
