use crate::error::ExactError;
use crate::linalg::Matrix;

pub const DENSE_CAP: usize = 500;

/// `e^{tM}` by scaling and squaring with a Taylor core. Test oracle only.
pub fn dense_expm(m: &Matrix, t: f64) -> Result<Matrix, ExactError> {
    let n = m.rows();
    if n > DENSE_CAP {
        return Err(ExactError::DenseCap { max: DENSE_CAP, got: n });
    }
    if !(t >= 0.0) {
        return Err(ExactError::NegativeTime(t));
    }
    let a = m.scale(t);
    let norm = a.norm_inf();
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = a.scale(scale);
    let mut sum = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..40 {
        term = term.matmul(&a).scale(1.0 / k as f64);
        sum = sum.add(&term);
        if term.max_abs() <= 1e-18 * sum.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum);
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn two_state() {
        let q = Matrix::from_rows(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap();
        let e = dense_expm(&q, 1.0).unwrap();
        let expect = (1.0 / 3.0) * (1.0 - libm::exp(-3.0));
        assert!((e[(0, 1)] - expect).abs() < 1e-14);
        assert!((e[(0, 0)] + e[(0, 1)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal() {
        let e = dense_expm(&Matrix::diag(&[1.0, -2.0]), 0.5).unwrap();
        assert!((e[(0, 0)] - libm::exp(0.5)).abs() < 1e-14);
        assert!((e[(1, 1)] - libm::exp(-1.0)).abs() < 1e-15);
    }
}
