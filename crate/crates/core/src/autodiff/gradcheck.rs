use super::Tensor;

/// Central finite differences `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_difference_gradient<E>(
    mut f: impl FnMut(&Tensor) -> Result<f64, E>,
    x: &Tensor,
    h: f64,
) -> Result<Tensor, E> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Norm-wise relative error `|a - b| / max(|a|, |b|)`, with an absolute
/// floor so two vanishing gradients compare as equal.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::kernels::log_sigmoid;
    use std::convert::Infallible;

    #[test]
    fn sum_of_squares() {
        let x = Tensor::vector(&[1.0, 2.0]);
        let g = finite_difference_gradient(
            |t| Ok::<_, Infallible>(t.data().iter().map(|v| v * v).sum()),
            &x,
            1e-5,
        )
        .unwrap();
        assert!((g.data()[0] - 2.0).abs() < 1e-8);
        assert!((g.data()[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn log_sigmoid_at_zero() {
        let x = Tensor::vector(&[0.0]);
        let g = finite_difference_gradient(
            |t| Ok::<_, Infallible>(log_sigmoid(t.data()[0])),
            &x,
            1e-5,
        )
        .unwrap();
        assert!((g.data()[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0, 0.0], &[1.1, 0.0]) - 0.1 / 1.1).abs() < 1e-15);
    }
}
