use alloc::vec;
use alloc::vec::Vec;

use super::GeneratorMatrix;
use crate::error::ExactError;
use crate::num::CompensatedSum;

/// Residual target for `‖πQ‖∞`, relative to `max(1, max exit rate)`.
pub const STATIONARY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    pub probs: Vec<f64>,
    /// `‖πQ‖∞` of the returned vector.
    pub residual: f64,
}

impl Distribution {
    pub fn mass(&self) -> f64 {
        let mut s = CompensatedSum::new();
        s.extend(self.probs.iter().copied());
        s.value()
    }
}

/// Dense band of a square matrix, `lo` diagonals below and `hi` above.
struct Band {
    n: usize,
    lo: usize,
    hi: usize,
    data: Vec<f64>,
}

impl Band {
    fn new(n: usize, lo: usize, hi: usize) -> Self {
        Self { n, lo, hi, data: vec![0.0; n * (lo + hi + 1)] }
    }

    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        debug_assert!(j + self.lo >= i && j <= i + self.hi);
        &mut self.data[i * (self.lo + self.hi + 1) + (j + self.lo - i)]
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.lo + self.hi + 1) + (j + self.lo - i)]
    }

    /// In-place LU without pivoting; `false` on a vanishing pivot.
    fn factor(&mut self) -> bool {
        let n = self.n;
        for k in 0..n {
            let piv = self.get(k, k);
            if !(piv.abs() > 0.0) || !piv.is_finite() {
                return false;
            }
            for i in (k + 1)..n.min(k + self.lo + 1) {
                let f = self.get(i, k) / piv;
                if f == 0.0 {
                    continue;
                }
                *self.at(i, k) = f;
                for j in (k + 1)..n.min(k + self.hi + 1) {
                    let u = self.get(k, j);
                    *self.at(i, j) -= f * u;
                }
            }
        }
        true
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = rhs.to_vec();
        for i in 0..n {
            let start = i.saturating_sub(self.lo);
            let s: f64 = (start..i).map(|j| self.get(i, j) * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let end = n.min(i + self.hi + 1);
            let s: f64 = ((i + 1)..end).map(|j| self.get(i, j) * x[j]).sum();
            x[i] = (x[i] - s) / self.get(i, i);
        }
        x
    }
}

/// Solves `πQ = 0`, `Σπ = 1` for an irreducible generator.
///
/// Fixes `π_0 = 1` and solves the remaining rows of `Qᵀπ = 0` by banded LU
/// (the reduced system is column diagonally dominant, so no pivoting), then
/// refines iteratively and normalises. Falls back to Gauss–Seidel if a
/// pivot vanishes.
pub fn stationary_solve(q: &GeneratorMatrix) -> Result<Distribution, ExactError> {
    q.check_irreducible()?;
    let n = q.num_states();
    if n == 1 {
        return Ok(Distribution { probs: vec![1.0], residual: 0.0 });
    }
    let qt = q.transpose();
    let m = n - 1;
    let rhs: Vec<f64> = (1..n).map(|x| -q.get(0, x)).collect();
    let reduced = |v: &[f64]| -> Vec<f64> {
        (1..n)
            .map(|x| {
                let mut s = CompensatedSum::new();
                s.add(qt.diagonal()[x] * v[x - 1]);
                for (y, val) in qt.row(x) {
                    if y > 0 {
                        s.add(val * v[y - 1]);
                    }
                }
                s.value()
            })
            .collect()
    };

    let (lo, hi) = qt.bandwidth();
    let mut band = Band::new(m, lo, hi);
    for x in 1..n {
        *band.at(x - 1, x - 1) = qt.diagonal()[x];
        for (y, val) in qt.row(x) {
            if y > 0 {
                *band.at(x - 1, y - 1) += val;
            }
        }
    }
    let mut sol = if band.factor() {
        let mut sol = band.solve(&rhs);
        for _ in 0..3 {
            let r: Vec<f64> = rhs.iter().zip(reduced(&sol)).map(|(b, a)| b - a).collect();
            let corr = band.solve(&r);
            sol.iter_mut().zip(corr).for_each(|(s, c)| *s += c);
        }
        sol
    } else {
        gauss_seidel(&qt, &rhs, vec![1.0; m], 100_000)
    };

    let scale = q.max_exit_rate().max(1.0);
    let mut dist = normalise(q, &sol)?;
    if dist.residual > STATIONARY_TOL * scale {
        sol = gauss_seidel(&qt, &rhs, sol, 2_000);
        dist = normalise(q, &sol)?;
    }
    if dist.residual > STATIONARY_TOL * scale {
        return Err(ExactError::NotConverged(dist.residual));
    }
    Ok(dist)
}

fn normalise(q: &GeneratorMatrix, reduced: &[f64]) -> Result<Distribution, ExactError> {
    let mut probs = Vec::with_capacity(reduced.len() + 1);
    probs.push(1.0);
    probs.extend_from_slice(reduced);
    if let Some(i) = probs.iter().position(|p| !(*p > 0.0)) {
        return Err(ExactError::NonPositiveStationary(i));
    }
    let mut s = CompensatedSum::new();
    s.extend(probs.iter().copied());
    let total = s.value();
    probs.iter_mut().for_each(|p| *p /= total);
    let residual = q.row_action(&probs).iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(Distribution { probs, residual })
}

fn gauss_seidel(qt: &GeneratorMatrix, rhs: &[f64], mut x: Vec<f64>, sweeps: usize) -> Vec<f64> {
    let n = qt.num_states();
    for _ in 0..sweeps {
        let mut change = 0.0f64;
        for row in 1..n {
            let mut s = CompensatedSum::new();
            s.add(rhs[row - 1]);
            for (y, val) in qt.row(row) {
                if y > 0 {
                    s.add(-val * x[y - 1]);
                }
            }
            let new = s.value() / qt.diagonal()[row];
            change = change.max((new - x[row - 1]).abs() / new.abs().max(1e-300));
            x[row - 1] = new;
        }
        if change < 1e-15 {
            break;
        }
    }
    x
}

/// `q*_{x,y} = π_y q_{y,x} / π_x`.
pub fn reversal_generator(q: &GeneratorMatrix, pi: &[f64]) -> Result<GeneratorMatrix, ExactError> {
    let n = q.num_states();
    if pi.len() != n {
        return Err(ExactError::Length { expected: n, got: pi.len() });
    }
    if let Some(i) = pi.iter().position(|p| !(*p > 0.0)) {
        return Err(ExactError::NonPositiveStationary(i));
    }
    let qt = q.transpose();
    let rows: Vec<Vec<(usize, f64)>> =
        (0..n).map(|x| qt.row(x).map(|(y, v)| (y, pi[y] * v / pi[x])).collect()).collect();
    let mut r = GeneratorMatrix::from_rows(&rows);
    if let Some(l) = q.lattice() {
        r = r.with_lattice(l);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn birth_death_closed_form() {
        let q = GeneratorMatrix::from_rows(&[vec![(1, 1.0)], vec![(0, 1.5), (2, 0.5)], vec![(1, 1.5)]]);
        let pi = stationary_solve(&q).unwrap();
        let expect = [9.0 / 17.0, 6.0 / 17.0, 2.0 / 17.0];
        for (a, b) in pi.probs.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(pi.residual <= 1e-12);
        let rev = reversal_generator(&q, &pi.probs).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert!((rev.get(x, y) - q.get(x, y)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn symmetric_walk_is_uniform() {
        let q = GeneratorMatrix::from_rows(&[vec![(1, 1.0)], vec![(0, 1.0), (2, 1.0)], vec![(1, 1.0)]]);
        let pi = stationary_solve(&q).unwrap();
        assert!(pi.probs.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn cycle_reversal_is_the_reverse_cycle() {
        let q = GeneratorMatrix::from_rows(&[vec![(1, 2.0)], vec![(2, 2.0)], vec![(0, 2.0)]]);
        let pi = stationary_solve(&q).unwrap();
        let rev = reversal_generator(&q, &pi.probs).unwrap();
        assert!((rev.get(1, 0) - 2.0).abs() < 1e-14);
        assert_eq!(rev.get(0, 1), 0.0);
        let back = reversal_generator(&rev, &pi.probs).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert!((back.get(x, y) - q.get(x, y)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_component_rejected() {
        let q = GeneratorMatrix::from_rows(&[vec![(1, 1.0)], vec![(0, 1.0)]]);
        assert!(matches!(reversal_generator(&q, &[1.0, 0.0]), Err(ExactError::NonPositiveStationary(1))));
    }
}
