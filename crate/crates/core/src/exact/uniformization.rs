use alloc::vec;
use alloc::vec::Vec;

use super::GeneratorMatrix;
use crate::error::ExactError;
use crate::num::CompensatedSum;

/// Truncated Poisson weights `P(N = k)`, `N ~ Poisson(λ)`, for
/// `k ∈ [left, left + weights.len())`, with dropped mass at most `tail`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonWeights {
    pub left: usize,
    pub weights: Vec<f64>,
    pub dropped: f64,
}

/// Weights grown outward from the mode, so no term underflows before it is
/// negligible.
pub fn poisson_weights(lambda: f64, tail: f64) -> PoissonWeights {
    if lambda <= 0.0 {
        return PoissonWeights { left: 0, weights: vec![1.0], dropped: 0.0 };
    }
    let mode = libm::floor(lambda) as usize;
    let log_mode = -lambda + mode as f64 * libm::log(lambda) - libm::lgamma(mode as f64 + 1.0);
    let wm = libm::exp(log_mode);
    let cutoff = tail * 1e-3;
    let mut right = vec![wm];
    let mut k = mode;
    let mut w = wm;
    let right_tail = loop {
        w *= lambda / (k + 1) as f64;
        k += 1;
        if w < cutoff && k as f64 > lambda + 1.0 {
            break w / (1.0 - lambda / (k + 1) as f64);
        }
        right.push(w);
    };
    let mut left_part = Vec::new();
    let mut k = mode;
    let mut w = wm;
    let mut left_tail = 0.0;
    while k > 0 {
        w *= k as f64 / lambda;
        k -= 1;
        if w < cutoff {
            left_tail = w / (1.0 - k as f64 / lambda);
            break;
        }
        left_part.push(w);
    }
    let left = mode - left_part.len();
    left_part.reverse();
    left_part.extend(right);
    let mut s = CompensatedSum::new();
    s.extend(left_part.iter().copied());
    let kept = s.value();
    let dropped = (left_tail + right_tail) / (kept + left_tail + right_tail);
    let scale = (1.0 - dropped) / kept;
    left_part.iter_mut().for_each(|w| *w *= scale);
    PoissonWeights { left, weights: left_part, dropped }
}

/// Default Poisson tail mass.
pub const TAIL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Action {
    Row,
    Column,
}

/// `e^{tM}` applied to a vector for a matrix with nonnegative off-diagonals.
///
/// With `c = max_x Σ_y M_xy`, `M − cI` has nonpositive row sums and
/// `I + (M − cI)/Λ` is a substochastic kernel; the series error is at most
/// `e^{ct}` times the dropped Poisson mass in the sup norm.
fn apply(m: &GeneratorMatrix, v: &[f64], t: f64, action: Action, tail: f64) -> Result<Vec<f64>, ExactError> {
    let n = m.num_states();
    if v.len() != n {
        return Err(ExactError::Length { expected: n, got: v.len() });
    }
    if !(t >= 0.0) {
        return Err(ExactError::NegativeTime(t));
    }
    if t == 0.0 || n == 0 {
        return Ok(v.to_vec());
    }
    let shift = m.row_sums().into_iter().fold(f64::NEG_INFINITY, f64::max);
    let lambda = m.diagonal().iter().map(|d| shift - d).fold(0.0, f64::max);
    let growth = libm::exp(shift * t);
    if lambda == 0.0 {
        return Ok(v.iter().map(|x| x * growth).collect());
    }
    let pw = poisson_weights(lambda * t, tail);
    // P = I + (M − cI)/Λ
    let step = |x: &[f64]| -> Vec<f64> {
        let mx = match action {
            Action::Row => m.row_action(x),
            Action::Column => m.col_action(x),
        };
        x.iter().zip(mx).map(|(a, b)| a + (b - shift * a) / lambda).collect()
    };
    let mut acc = vec![CompensatedSum::new(); n];
    let mut cur = v.to_vec();
    for _ in 0..pw.left {
        cur = step(&cur);
    }
    for (i, w) in pw.weights.iter().enumerate() {
        if i > 0 {
            cur = step(&cur);
        }
        for (a, c) in acc.iter_mut().zip(&cur) {
            a.add(w * c);
        }
    }
    Ok(acc.iter().map(|a| a.value() * growth).collect())
}

/// `μ·e^{tQ}`.
pub fn transient(q: &GeneratorMatrix, mu0: &[f64], t: f64) -> Result<Vec<f64>, ExactError> {
    apply(q, mu0, t, Action::Row, TAIL)
}

/// `e^{tQ}·f`, i.e. `x ↦ E^x[f(Y(t))]`.
pub fn expectation(q: &GeneratorMatrix, f: &[f64], t: f64) -> Result<Vec<f64>, ExactError> {
    apply(q, f, t, Action::Column, TAIL)
}

/// `e^{tQᵀ}·g`, i.e. `x ↦ Σ_y (e^{tQ})_{y,x} g(y)`, computed on the
/// explicitly transposed matrix.
pub fn fk_semigroup_apply(q: &GeneratorMatrix, g: &[f64], t: f64) -> Result<Vec<f64>, ExactError> {
    apply(&q.transpose(), g, t, Action::Column, TAIL)
}

/// `x ↦ E^x[exp(∫₀ᵗ φ(Y(s))ds)·g(Y(t))]`.
pub fn fk_potential_apply(q: &GeneratorMatrix, phi: &[f64], g: &[f64], t: f64) -> Result<Vec<f64>, ExactError> {
    apply(&q.with_potential(phi)?, g, t, Action::Column, TAIL)
}

/// `e^{tM}·f` for any matrix with nonnegative off-diagonals.
pub fn metzler_apply(m: &GeneratorMatrix, f: &[f64], t: f64) -> Result<Vec<f64>, ExactError> {
    apply(m, f, t, Action::Column, TAIL)
}

/// `|Σ_x f(x)(e^{tQᵀ}g)(x) − Σ_x (e^{tQ}f)(x) g(x)|`.
pub fn duality_check_exact(q: &GeneratorMatrix, f: &[f64], g: &[f64], t: f64) -> Result<f64, ExactError> {
    let lhs_vec = fk_semigroup_apply(q, g, t)?;
    let rhs_vec = expectation(q, f, t)?;
    let mut lhs = CompensatedSum::new();
    let mut rhs = CompensatedSum::new();
    for x in 0..q.num_states() {
        lhs.add(f[x] * lhs_vec[x]);
        rhs.add(rhs_vec[x] * g[x]);
    }
    Ok((lhs.value() - rhs.value()).abs())
}
