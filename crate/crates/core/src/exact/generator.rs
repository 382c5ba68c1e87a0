use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::ExactError;
use crate::lattice::{ChainSpec, CompiledChain, Lattice, DEFAULT_STATE_CAP};
use crate::linalg::Matrix;
use crate::num::CompensatedSum;

/// Sparse square matrix with nonnegative off-diagonal entries, stored as CSR
/// off-diagonals plus a separate diagonal. A generator has zero row sums;
/// transposes and Feynman–Kac operators need not.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMatrix {
    lattice: Option<Lattice>,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

/// Enumerates the chain's lattice and assembles its generator, refusing
/// above `cap` states and rejecting reducible chains.
pub fn assemble_generator(chain: &ChainSpec, cap: u64) -> Result<GeneratorMatrix, ExactError> {
    let compiled = CompiledChain::with_cap(chain, cap)?;
    let q = GeneratorMatrix::from_compiled(&compiled);
    q.check_irreducible()?;
    Ok(q)
}

/// [`assemble_generator`] with the default cap.
pub fn assemble_default(chain: &ChainSpec) -> Result<GeneratorMatrix, ExactError> {
    assemble_generator(chain, DEFAULT_STATE_CAP)
}

impl GeneratorMatrix {
    pub fn from_compiled(c: &CompiledChain) -> Self {
        let n = c.num_states();
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        for x in 0..n {
            rows.push(c.slots(x).map(|s| (c.target(s), c.rate(s))).collect());
        }
        let mut q = Self::from_rows(&rows);
        q.lattice = Some(c.lattice());
        q
    }

    /// Generator from off-diagonal rates `rows[x] = [(y, q_xy), ...]`.
    pub fn from_rows(rows: &[Vec<(usize, f64)>]) -> Self {
        let mut q = Self::metzler(rows, &vec![0.0; rows.len()]);
        for x in 0..rows.len() {
            let mut s = CompensatedSum::new();
            for k in q.offsets[x]..q.offsets[x + 1] {
                s.add(q.vals[k]);
            }
            q.diag[x] = -s.value();
        }
        q
    }

    /// General matrix with the given off-diagonals and diagonal.
    pub fn metzler(rows: &[Vec<(usize, f64)>], diag: &[f64]) -> Self {
        let n = rows.len();
        assert_eq!(diag.len(), n);
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for (x, row) in rows.iter().enumerate() {
            let mut row: Vec<(usize, f64)> = row.iter().copied().filter(|&(y, v)| y != x && v != 0.0).collect();
            row.sort_by_key(|e| e.0);
            for (y, v) in row {
                assert!(v >= 0.0 && y < n, "off-diagonal entry ({x},{y}) = {v}");
                if cols.len() > offsets[x] && *cols.last().unwrap() == y {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(y);
                    vals.push(v);
                }
            }
            offsets.push(cols.len());
        }
        Self { lattice: None, offsets, cols, vals, diag: diag.to_vec() }
    }

    pub fn from_dense(m: &Matrix) -> Self {
        let n = m.rows();
        let rows: Vec<Vec<(usize, f64)>> =
            (0..n).map(|i| (0..n).filter(|&j| j != i && m[(i, j)] != 0.0).map(|j| (j, m[(i, j)])).collect()).collect();
        Self::metzler(&rows, &m.diagonal())
    }

    pub fn lattice(&self) -> Option<Lattice> {
        self.lattice
    }

    pub fn with_lattice(mut self, lattice: Lattice) -> Self {
        self.lattice = Some(lattice);
        self
    }

    pub fn num_states(&self) -> usize {
        self.diag.len()
    }

    pub fn nnz_offdiag(&self) -> usize {
        self.vals.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Off-diagonal `(column, value)` pairs of row `x`.
    pub fn row(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.offsets[x]..self.offsets[x + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return self.diag[x];
        }
        self.row(x).find(|e| e.0 == y).map_or(0.0, |e| e.1)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.num_states())
            .map(|x| {
                let mut s = CompensatedSum::new();
                s.add(self.diag[x]);
                self.row(x).for_each(|(_, v)| s.add(v));
                s.value()
            })
            .collect()
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, d| m.max(-d))
    }

    pub fn transpose(&self) -> Self {
        let n = self.num_states();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for x in 0..n {
            for (y, v) in self.row(x) {
                rows[y].push((x, v));
            }
        }
        let mut t = Self::metzler(&rows, &self.diag);
        t.lattice = self.lattice;
        t
    }

    /// `self + diag(phi)`.
    pub fn with_potential(&self, phi: &[f64]) -> Result<Self, ExactError> {
        if phi.len() != self.num_states() {
            return Err(ExactError::Length { expected: self.num_states(), got: phi.len() });
        }
        let mut m = self.clone();
        m.diag.iter_mut().zip(phi).for_each(|(d, p)| *d += p);
        Ok(m)
    }

    /// `v·M`.
    pub fn row_action(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().zip(&self.diag).map(|(a, d)| a * d).collect();
        for x in 0..self.num_states() {
            if v[x] == 0.0 {
                continue;
            }
            for (y, q) in self.row(x) {
                out[y] += v[x] * q;
            }
        }
        out
    }

    /// `M·f`.
    pub fn col_action(&self, f: &[f64]) -> Vec<f64> {
        (0..self.num_states()).map(|x| self.row(x).fold(self.diag[x] * f[x], |acc, (y, q)| acc + q * f[y])).collect()
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.num_states();
        let mut m = Matrix::zeros(n, n);
        for x in 0..n {
            m[(x, x)] = self.diag[x];
            for (y, v) in self.row(x) {
                m[(x, y)] = v;
            }
        }
        m
    }

    /// Every state reaches every other. The error names a pair that fails.
    pub fn check_irreducible(&self) -> Result<(), ExactError> {
        let n = self.num_states();
        if n == 0 {
            return Ok(());
        }
        let forward = reach(n, |x, push| self.row(x).for_each(|(y, _)| push(y)));
        if let Some(to) = forward.iter().position(|r| !r) {
            return Err(ExactError::Reducible { from: 0, to });
        }
        let t = self.transpose();
        let backward = reach(n, |x, push| t.row(x).for_each(|(y, _)| push(y)));
        if let Some(from) = backward.iter().position(|r| !r) {
            return Err(ExactError::Reducible { from, to: 0 });
        }
        Ok(())
    }

    /// Bandwidths `(below, above)` of the off-diagonal pattern.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut lo = 0;
        let mut hi = 0;
        for x in 0..self.num_states() {
            for (y, _) in self.row(x) {
                if y < x {
                    lo = lo.max(x - y);
                } else {
                    hi = hi.max(y - x);
                }
            }
        }
        (lo, hi)
    }
}

fn reach(n: usize, mut edges: impl FnMut(usize, &mut dyn FnMut(usize))) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    seen[0] = true;
    queue.push_back(0);
    while let Some(x) = queue.pop_front() {
        edges(x, &mut |y| {
            if !seen[y] {
                seen[y] = true;
                queue.push_back(y);
            }
        });
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_chain, BoundaryConstants, LatticeParams};
    use crate::model::spec_from_rows;
    use alloc::vec;

    #[test]
    fn one_dimensional_unit_scale() {
        let spec = spec_from_rows(&[-1.0], &[vec![1.0]], &[vec![1.0]]).unwrap();
        let chain = build_chain(&spec, LatticeParams::new(1, 2.0).unwrap(), BoundaryConstants::default()).unwrap();
        let q = assemble_default(&chain).unwrap();
        assert_eq!(q.num_states(), 3);
        assert_eq!(q.get(0, 1), 1.0);
        assert_eq!(q.get(1, 2), 0.5);
        assert_eq!(q.get(1, 0), 1.5);
        assert_eq!(q.get(2, 1), 1.5);
        assert!(q.row_sums().iter().all(|s| *s == 0.0));
    }

    #[test]
    fn nine_states() {
        let spec = spec_from_rows(&[-1.0, -1.0], &[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![1.0, 0.0], vec![0.0, 1.0]])
            .unwrap();
        let chain = build_chain(&spec, LatticeParams::new(4, 1.0).unwrap(), BoundaryConstants::default()).unwrap();
        let q = assemble_default(&chain).unwrap();
        assert_eq!(q.num_states(), 9);
        assert!(matches!(assemble_generator(&chain, 8), Err(ExactError::Lattice(_))));
    }

    #[test]
    fn reducible_chain_names_a_witness() {
        let q = GeneratorMatrix::from_rows(&[vec![(1, 1.0)], vec![(0, 1.0)], vec![(0, 1.0)]]);
        assert_eq!(q.check_irreducible(), Err(ExactError::Reducible { from: 0, to: 2 }));
        let q = GeneratorMatrix::from_rows(&[vec![(1, 1.0), (2, 1.0)], vec![(0, 1.0)], vec![]]);
        assert_eq!(q.check_irreducible(), Err(ExactError::Reducible { from: 2, to: 0 }));
    }

    #[test]
    fn actions_agree_with_dense() {
        let q = GeneratorMatrix::from_rows(&[vec![(1, 1.0), (2, 0.5)], vec![(0, 2.0)], vec![(1, 3.0)]]);
        let d = q.to_dense();
        let v = [0.2, -0.7, 1.3];
        let dv: Vec<f64> = (0..3).map(|j| (0..3).map(|i| v[i] * d[(i, j)]).sum()).collect();
        let dq = d.matvec(&v);
        for (a, b) in q.row_action(&v).iter().zip(&dv).chain(q.col_action(&v).iter().zip(&dq)) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(q.transpose().to_dense(), d.transpose());
    }
}
