//! Training losses over `D x M` output matrices, each returning its value and
//! exact gradients.

use super::params::ParameterStore;
use crate::error::{Error, Result};
use crate::types::{Matrix, ResidualTarget};

/// `sum (yhat - y)^2` and its gradient `2 (yhat - y)`.
pub fn loss_frobenius(yhat: &Matrix, y: &Matrix) -> Result<(f64, Matrix)> {
    yhat.check_same_shape(y, "loss_frobenius")?;
    let mut grad = Matrix::zeros(y.rows(), y.cols());
    let mut value = 0.0;
    for ((g, a), b) in grad.as_mut_slice().iter_mut().zip(yhat.as_slice()).zip(y.as_slice()) {
        let r = a - b;
        value += r * r;
        *g = 2.0 * r;
    }
    Ok((value, grad))
}

/// Meta-model target `z = |yhat - y|` with the signed residual.
pub fn residual_target(yhat: &Matrix, y: &Matrix) -> Result<ResidualTarget> {
    let delta = yhat.zip_map(y, |a, b| a - b)?;
    Ok(ResidualTarget { z: delta.map(f64::abs), delta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointLoss {
    pub value: f64,
    pub base: f64,
    pub meta: f64,
    pub d_yhat: Matrix,
    pub d_zhat: Matrix,
}

/// `beta * |yhat - y|_F^2 + (1 - beta) * |zhat - |yhat - y||_F^2`.
///
/// The meta term depends on `yhat` through its target; the subgradient of
/// `|delta|` at zero is taken as zero.
pub fn loss_joint(yhat: &Matrix, y: &Matrix, zhat: &Matrix, beta: f64) -> Result<JointLoss> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::BetaOutOfRange(beta));
    }
    yhat.check_same_shape(y, "loss_joint")?;
    zhat.check_same_shape(y, "loss_joint meta")?;
    let (base, d_base) = loss_frobenius(yhat, y)?;
    let mut d_yhat = d_base.map(|g| beta * g);
    let mut d_zhat = Matrix::zeros(y.rows(), y.cols());
    let mut meta = 0.0;
    let n = y.as_slice().len();
    for k in 0..n {
        let delta = yhat.as_slice()[k] - y.as_slice()[k];
        let e = zhat.as_slice()[k] - delta.abs();
        meta += e * e;
        d_zhat.as_mut_slice()[k] = (1.0 - beta) * 2.0 * e;
        let sign = if delta > 0.0 {
            1.0
        } else if delta < 0.0 {
            -1.0
        } else {
            0.0
        };
        d_yhat.as_mut_slice()[k] += (1.0 - beta) * 2.0 * e * -sign;
    }
    Ok(JointLoss { value: beta * base + (1.0 - beta) * meta, base, meta, d_yhat, d_zhat })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetricLoss {
    pub value: f64,
    pub d_zl: Matrix,
    pub d_zu: Matrix,
    pub d_delta: Matrix,
}

/// `|zl - max(delta, 0)|_F^2 + |zu - max(-delta, 0)|_F^2` with `delta = yhat - y`.
pub fn loss_asymmetric(zl_hat: &Matrix, zu_hat: &Matrix, delta: &Matrix) -> Result<AsymmetricLoss> {
    zl_hat.check_same_shape(delta, "loss_asymmetric lower")?;
    zu_hat.check_same_shape(delta, "loss_asymmetric upper")?;
    let (rows, cols) = delta.shape();
    let mut d_zl = Matrix::zeros(rows, cols);
    let mut d_zu = Matrix::zeros(rows, cols);
    let mut d_delta = Matrix::zeros(rows, cols);
    let mut value = 0.0;
    for k in 0..rows * cols {
        let d = delta.as_slice()[k];
        let el = zl_hat.as_slice()[k] - d.max(0.0);
        let eu = zu_hat.as_slice()[k] - (-d).max(0.0);
        value += el * el + eu * eu;
        d_zl.as_mut_slice()[k] = 2.0 * el;
        d_zu.as_mut_slice()[k] = 2.0 * eu;
        d_delta.as_mut_slice()[k] = if d > 0.0 {
            -2.0 * el
        } else if d < 0.0 {
            2.0 * eu
        } else {
            0.0
        };
    }
    Ok(AsymmetricLoss { value, d_zl, d_zu, d_delta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NllLoss {
    pub value: f64,
    pub d_yhat: Matrix,
    pub d_log_var: Matrix,
}

/// Gaussian negative log-likelihood without constants:
/// `sum (yhat - y)^2 / sigma^2 + log sigma^2`, parameterized by `log sigma^2`.
pub fn loss_gaussian_nll(yhat: &Matrix, y: &Matrix, log_var: &Matrix) -> Result<NllLoss> {
    yhat.check_same_shape(y, "loss_gaussian_nll")?;
    log_var.check_same_shape(y, "loss_gaussian_nll variance")?;
    let (rows, cols) = y.shape();
    let mut d_yhat = Matrix::zeros(rows, cols);
    let mut d_log_var = Matrix::zeros(rows, cols);
    let mut value = 0.0;
    for k in 0..rows * cols {
        let r = yhat.as_slice()[k] - y.as_slice()[k];
        let s = log_var.as_slice()[k];
        let inv = (-s).exp();
        value += r * r * inv + s;
        d_yhat.as_mut_slice()[k] = 2.0 * r * inv;
        d_log_var.as_mut_slice()[k] = 1.0 - r * r * inv;
    }
    Ok(NllLoss { value, d_yhat, d_log_var })
}

/// `coefficient * sum w^2` over the selected parameters; adds `2 c w` to
/// their gradient buffers.
pub fn l2_penalty(store: &mut ParameterStore, coefficient: f64, trainable: Option<&[bool]>) -> Result<f64> {
    if !(coefficient >= 0.0) {
        return Err(Error::InvalidArgument(format!("L2 coefficient must be >= 0, got {coefficient}")));
    }
    if coefficient == 0.0 {
        return Ok(0.0);
    }
    let ids: Vec<_> = store.ids().collect();
    let mut total = 0.0;
    for id in ids {
        if trainable.is_some_and(|t| !t[id.0]) {
            continue;
        }
        let (value, grad) = store.value_and_grad_mut(id);
        for (w, g) in value.iter().zip(grad.iter_mut()) {
            total += w * w;
            *g += 2.0 * coefficient * w;
        }
    }
    Ok(coefficient * total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(v: &[f64]) -> Matrix {
        Matrix::row_vector(v)
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(loss_frobenius(&m(&[1.0, 2.0]), &m(&[1.0, 2.0])).unwrap().0, 0.0);
        let (v, g) = loss_frobenius(&m(&[1.0, 2.0]), &m(&[0.0, 0.0])).unwrap();
        assert_eq!(v, 5.0);
        assert_eq!(g.as_slice(), &[2.0, 4.0]);
        assert!(loss_frobenius(&m(&[1.0]), &m(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn residual_examples() {
        let r = residual_target(&m(&[1.0, -2.0]), &m(&[1.0, 1.0])).unwrap();
        assert_eq!(r.z.as_slice(), &[0.0, 3.0]);
        assert_eq!(r.delta.as_slice(), &[0.0, -3.0]);
    }

    #[test]
    fn joint_examples() {
        let yhat = m(&[1.0, 3.0]);
        let y = m(&[0.5, 1.0]);
        let z = m(&[0.2, 0.1]);
        let (base, _) = loss_frobenius(&yhat, &y).unwrap();
        let j = loss_joint(&yhat, &y, &z, 1.0).unwrap();
        assert_eq!(j.value.to_bits(), base.to_bits());
        let exact = m(&[0.5, 2.0]);
        assert_eq!(loss_joint(&yhat, &y, &exact, 0.0).unwrap().value, 0.0);
        // l_b = 4, l_m = 2 at beta = 0.5
        let j = loss_joint(&m(&[2.0]), &m(&[0.0]), &m(&[2.0 + 2f64.sqrt()]), 0.5).unwrap();
        assert!((j.value - 3.0).abs() < 1e-12);
        assert!(matches!(loss_joint(&yhat, &y, &z, 1.5), Err(Error::BetaOutOfRange(_))));
    }

    #[test]
    fn asymmetric_examples() {
        assert_eq!(loss_asymmetric(&m(&[2.0]), &m(&[0.0]), &m(&[2.0])).unwrap().value, 0.0);
        assert_eq!(loss_asymmetric(&m(&[0.0]), &m(&[0.0]), &m(&[2.0])).unwrap().value, 4.0);
        assert_eq!(loss_asymmetric(&m(&[0.5]), &m(&[1.5]), &m(&[0.0])).unwrap().value, 0.25 + 2.25);
    }

    #[test]
    fn nll_examples() {
        assert_eq!(loss_gaussian_nll(&m(&[1.0]), &m(&[1.0]), &m(&[0.0])).unwrap().value, 0.0);
        assert_eq!(loss_gaussian_nll(&m(&[1.0]), &m(&[0.0]), &m(&[0.0])).unwrap().value, 1.0);
        for r in [0.1f64, 1.0, 10.0] {
            let l = loss_gaussian_nll(&m(&[r]), &m(&[0.0]), &m(&[(r * r).ln()])).unwrap();
            assert!(l.d_log_var.get(0, 0).abs() < 1e-10);
        }
    }

    #[test]
    fn l2_examples() {
        let mut s = ParameterStore::new();
        let id = s.add("w", &[1], vec![3.0]).unwrap();
        assert_eq!(l2_penalty(&mut s, 0.0, None).unwrap(), 0.0);
        let v = l2_penalty(&mut s, 0.0001, None).unwrap();
        assert!((v - 0.0009).abs() < 1e-15);
        assert!((s.grad(id)[0] - 0.0006).abs() < 1e-15);
        s.zero_grads();
        assert_eq!(l2_penalty(&mut s, 0.5, Some(&[false])).unwrap(), 0.0);
        assert_eq!(s.grad(id)[0], 0.0);
    }
}
