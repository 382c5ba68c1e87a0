//! Jump-rate tables, written once over [`RateScalar`] so the same code runs
//! in `f64` and in exact rational arithmetic.

use alloc::format;
use alloc::vec::Vec;

use crate::error::LatticeError;
use crate::num::RateScalar;
use crate::MAX_DIM;

/// Jump direction in lattice units; entries past the dimension are zero.
pub type Direction = [i8; MAX_DIM];

pub fn unit(i: usize, sign: i8) -> Direction {
    let mut d = [0; MAX_DIM];
    d[i] = sign;
    d
}

pub fn pair(i: usize, si: i8, j: usize, sj: i8) -> Direction {
    let mut d = [0; MAX_DIM];
    d[i] = si;
    d[j] = sj;
    d
}

pub fn negate(dir: &Direction) -> Direction {
    let mut d = *dir;
    d.iter_mut().for_each(|x| *x = -*x);
    d
}

/// Which reflection matrix a boundary table is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Primal,
    Dual,
}

/// Positive jump rates by direction. Zero rates are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct RateTable<S> {
    jumps: Vec<(Direction, S)>,
}

impl<S: RateScalar> Default for RateTable<S> {
    fn default() -> Self {
        Self { jumps: Vec::new() }
    }
}

impl<S: RateScalar> RateTable<S> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `rate` to the jump in direction `dir`.
    pub fn add(&mut self, dir: Direction, rate: S) {
        if rate.is_zero() {
            return;
        }
        if let Some(slot) = self.jumps.iter_mut().find(|(d, _)| *d == dir) {
            slot.1 = slot.1.clone() + rate;
        } else {
            self.jumps.push((dir, rate));
        }
    }

    pub fn jumps(&self) -> &[(Direction, S)] {
        &self.jumps
    }

    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn rate(&self, dir: &Direction) -> S {
        self.jumps.iter().find(|(d, _)| d == dir).map_or_else(S::zero, |(_, r)| r.clone())
    }

    pub fn total(&self) -> S {
        self.jumps.iter().fold(S::zero(), |acc, (_, r)| acc + r.clone())
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&Direction) -> bool) {
        self.jumps.retain(|(d, _)| keep(d));
    }

    /// Sorts jumps lexicographically by direction.
    pub fn sort(&mut self) {
        self.jumps.sort_by_key(|a| a.0);
    }

    pub fn negated(&self) -> Self {
        Self { jumps: self.jumps.iter().map(|(d, r)| (negate(d), r.clone())).collect() }
    }

    pub fn map<T: RateScalar>(&self, f: impl Fn(&S) -> T) -> RateTable<T> {
        RateTable { jumps: self.jumps.iter().map(|(d, r)| (*d, f(r))).collect() }
    }

    /// `Σ rate·direction` in lattice units (multiply by `h` for continuum units).
    pub fn first_moment(&self, d: usize) -> Vec<S> {
        let mut m = alloc::vec![S::zero(); d];
        for (dir, r) in &self.jumps {
            for (k, mk) in m.iter_mut().enumerate() {
                if dir[k] != 0 {
                    *mk = mk.clone() + r.clone() * S::from_i64(dir[k] as i64);
                }
            }
        }
        m
    }

    /// `Σ rate·dir·dirᵀ` in lattice units, row-major.
    pub fn second_moment(&self, d: usize) -> Vec<S> {
        let mut m = alloc::vec![S::zero(); d * d];
        for (dir, r) in &self.jumps {
            for i in 0..d {
                for j in 0..d {
                    let p = dir[i] as i64 * dir[j] as i64;
                    if p != 0 {
                        m[i * d + j] = m[i * d + j].clone() + r.clone() * S::from_i64(p);
                    }
                }
            }
        }
        m
    }
}

/// Model data and scale in a chosen scalar type, with the rate formulas.
#[derive(Clone, Debug)]
pub struct RateContext<S> {
    d: usize,
    n: u64,
    n_s: S,
    sqrt_n: S,
    b: Vec<S>,
    a: Vec<S>,
    r: Vec<S>,
    rstar: Vec<S>,
    c0: S,
}

impl<S: RateScalar> RateContext<S> {
    /// `a` and `r` are row-major `d×d`; `sqrt_n` must square to `n`.
    pub fn new(b: Vec<S>, a: Vec<S>, r: Vec<S>, n: u64, sqrt_n: S, c0: S) -> Result<Self, LatticeError> {
        let d = b.len();
        if d == 0 || d > MAX_DIM || a.len() != d * d || r.len() != d * d {
            return Err(LatticeError::Params(format!("inconsistent model data for d = {d}")));
        }
        if n == 0 {
            return Err(LatticeError::Params("scale n must be positive".into()));
        }
        if c0 <= S::zero() {
            return Err(LatticeError::Constants(format!("c0 = {:?} must be positive", c0)));
        }
        let mut rstar = r.clone();
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    rstar[i * d + j] = -r[i * d + j].clone();
                }
            }
        }
        let ctx = Self { d, n, n_s: S::from_i64(n as i64), sqrt_n, b, a, r, rstar, c0 };
        for i in 0..d {
            if ctx.a(i, i) <= ctx.off_abs(i) {
                return Err(LatticeError::AssumptionViolation(format!(
                    "row {i} of A is not strictly diagonally dominant"
                )));
            }
            if ctx.r(i, i) <= S::zero() {
                return Err(LatticeError::AssumptionViolation(format!("r_{i}{i} is not positive")));
            }
        }
        let min = ctx.min_scale();
        for i in 0..d {
            let down = ctx.down_rate(i);
            if down < S::zero() {
                return Err(LatticeError::ScaleTooSmall {
                    n,
                    min,
                    what: format!("interior -e_{i}"),
                    rate: down.to_f64(),
                });
            }
        }
        Ok(ctx)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn a(&self, i: usize, j: usize) -> S {
        self.a[i * self.d + j].clone()
    }

    pub fn r(&self, i: usize, j: usize) -> S {
        self.r[i * self.d + j].clone()
    }

    pub fn rstar(&self, i: usize, j: usize) -> S {
        self.rstar[i * self.d + j].clone()
    }

    pub fn drift(&self, i: usize) -> S {
        self.b[i].clone()
    }

    fn refl(&self, side: Side, i: usize, j: usize) -> S {
        match side {
            Side::Primal => self.r(i, j),
            Side::Dual => self.rstar(i, j),
        }
    }

    fn off_abs(&self, i: usize) -> S {
        (0..self.d).filter(|&j| j != i).fold(S::zero(), |acc, j| acc + self.a(i, j).abs())
    }

    fn two() -> S {
        S::from_i64(2)
    }

    /// `n·a_ii/ζ_i = n(a_ii − Σ_{j≠i}|a_ij|)/2`, the interior `+e_i` rate.
    pub fn up_rate(&self, i: usize) -> S {
        self.n_s.clone() * (self.a(i, i) - self.off_abs(i)) / Self::two()
    }

    /// `n·a_ii/ζ_i − √n·b_i`, the interior `−e_i` rate.
    pub fn down_rate(&self, i: usize) -> S {
        self.up_rate(i) - self.sqrt_n.clone() * self.drift(i)
    }

    /// Smallest scale at which every interior rate is nonnegative.
    pub fn min_scale(&self) -> u64 {
        let needed = (0..self.d)
            .map(|i| {
                let half = ((self.a(i, i) - self.off_abs(i)) / Self::two()).to_f64();
                let bi = self.drift(i).to_f64();
                if bi <= 0.0 {
                    1.0
                } else {
                    (bi / half) * (bi / half)
                }
            })
            .fold(1.0, f64::max);
        let mut n = libm::floor(needed).max(1.0) as u64;
        let ok = |n: u64| {
            (0..self.d).all(|i| {
                let half = ((self.a(i, i) - self.off_abs(i)) / Self::two()).to_f64();
                n as f64 * half - libm::sqrt(n as f64) * self.drift(i).to_f64() >= 0.0
            })
        };
        while n > 1 && ok(n - 1) {
            n -= 1;
        }
        while !ok(n) {
            n += 1;
        }
        n
    }

    /// Rates at sites with all coordinates positive.
    pub fn interior(&self) -> RateTable<S> {
        let mut t = RateTable::new();
        let half_n = self.n_s.clone() / Self::two();
        for i in 0..self.d {
            t.add(unit(i, 1), self.up_rate(i));
            t.add(unit(i, -1), self.down_rate(i));
            for j in (i + 1)..self.d {
                let aij = self.a(i, j);
                let plus = half_n.clone() * aij.pos_part();
                let minus = half_n.clone() * aij.neg_part();
                t.add(pair(i, 1, j, 1), plus.clone());
                t.add(pair(i, -1, j, -1), plus);
                t.add(pair(i, 1, j, -1), minus.clone());
                t.add(pair(i, -1, j, 1), minus);
            }
        }
        t
    }

    /// Tangential constants `(c₊, c₋) = (c0 + m₊, c0 + m₋)` with
    /// `m = −r_ii a_ij / a_ii`, so `c₊ − c₋ = m`.
    pub fn face_constants(&self, i: usize, j: usize) -> (S, S) {
        let m = -(self.r(i, i) * self.a(i, j) / self.a(i, i));
        (self.c0.clone() + m.pos_part(), self.c0.clone() + m.neg_part())
    }

    fn tangential(&self, t: &mut RateTable<S>, i: usize, side: Side) {
        for j in (0..self.d).filter(|&j| j != i) {
            let (cp, cm) = self.face_constants(i, j);
            let rji = self.refl(side, j, i);
            t.add(unit(j, 1), self.n_s.clone() * (rji.pos_part() + cp));
            t.add(unit(j, -1), self.n_s.clone() * (rji.neg_part() + cm));
        }
    }

    /// Primal rates on the face `x_i = 0` (all other coordinates positive).
    pub fn face(&self, i: usize) -> RateTable<S> {
        let mut t = RateTable::new();
        let nr = self.n_s.clone() * self.r(i, i);
        for j in (0..self.d).filter(|&j| j != i) {
            let aij = self.a(i, j);
            if aij.is_zero() {
                continue;
            }
            let s = if aij < S::zero() { -1 } else { 1 };
            t.add(pair(i, 1, j, s), nr.clone() * aij.abs() / self.a(i, i));
        }
        // n r_ii 2/ζ_i
        t.add(unit(i, 1), nr * (self.a(i, i) - self.off_abs(i)) / self.a(i, i));
        self.tangential(&mut t, i, Side::Primal);
        t
    }

    /// Coordinate-raising rates of the dual chain on the face `x_i = 0`:
    /// proportional to the primal rates into the face, summing to `n r_ii`.
    pub fn dual_raising(&self, i: usize) -> Vec<(Direction, S)> {
        let nr = self.n_s.clone() * self.r(i, i);
        let half_n = self.n_s.clone() / Self::two();
        let down = self.down_rate(i);
        let den =
            (0..self.d).filter(|&j| j != i).fold(down.clone(), |acc, j| acc + half_n.clone() * self.a(i, j).abs());
        if den.is_zero() {
            return alloc::vec![(unit(i, 1), nr)];
        }
        let mut out = alloc::vec![(unit(i, 1), nr.clone() * down / den.clone())];
        for j in (0..self.d).filter(|&j| j != i) {
            let aij = self.a(i, j);
            if aij.is_zero() {
                continue;
            }
            let s = if aij < S::zero() { -1 } else { 1 };
            out.push((pair(i, 1, j, s), nr.clone() * half_n.clone() * aij.abs() / den.clone()));
        }
        out
    }

    /// Dual rates on the face `x_i = 0`.
    pub fn dual_face(&self, i: usize) -> RateTable<S> {
        let mut t = RateTable::new();
        for (dir, rate) in self.dual_raising(i) {
            t.add(dir, rate);
        }
        self.tangential(&mut t, i, Side::Dual);
        t
    }

    /// `Σ_{ℓ∈I} m_iℓ` for the chosen reflection matrix.
    pub fn corner_row_sum(&self, side: Side, i: usize, set: &[usize]) -> S {
        set.iter().fold(S::zero(), |acc, &l| acc + self.refl(side, i, l))
    }

    /// Rates at a site whose zero set `set` has at least two elements.
    ///
    /// For `|I| = 2` with `a_ij > 0` the diagonal jump `e_i + e_j` carries
    /// `γ = n·min(S_i, S_j)/2` and is shared by both coordinates, the axis
    /// jumps carrying `n·S_i − γ`; this keeps the mean at `√n Σ_{ℓ∈I} r̄_ℓ`.
    pub fn corner(&self, set: &[usize], side: Side) -> Result<RateTable<S>, LatticeError> {
        let mut t = RateTable::new();
        let mut sums = Vec::with_capacity(set.len());
        for &i in set {
            let s = self.corner_row_sum(side, i, set);
            if s <= S::zero() {
                return Err(LatticeError::AssumptionViolation(format!(
                    "row sum of {} on {set:?} at row {i} is {:?}",
                    match side {
                        Side::Primal => "R",
                        Side::Dual => "R*",
                    },
                    s
                )));
            }
            sums.push(s);
        }
        let mut axis: Vec<S> = sums.iter().map(|s| self.n_s.clone() * s.clone()).collect();
        if set.len() == 2 && self.a(set[0], set[1]) > S::zero() {
            let gamma = self.n_s.clone() * sums[0].clone().min(sums[1].clone()) / Self::two();
            axis[0] = axis[0].clone() - gamma.clone();
            axis[1] = axis[1].clone() - gamma.clone();
            t.add(pair(set[0], 1, set[1], 1), gamma);
        }
        for (&i, rate) in set.iter().zip(axis) {
            t.add(unit(i, 1), rate);
        }
        for j in (0..self.d).filter(|j| !set.contains(j)) {
            let (pos, neg) = set.iter().fold((S::zero(), S::zero()), |(p, q), &l| {
                let v = self.refl(side, j, l);
                (p + v.pos_part(), q + v.neg_part())
            });
            t.add(unit(j, 1), self.n_s.clone() * (pos + self.c0.clone()));
            t.add(unit(j, -1), self.n_s.clone() * (neg + self.c0.clone()));
        }
        Ok(t)
    }

    /// Table for the zero set encoded by `mask` (bit `i` set iff `x_i = 0`).
    pub fn boundary(&self, mask: u32, side: Side) -> Result<RateTable<S>, LatticeError> {
        let set: Vec<usize> = (0..self.d).filter(|i| mask & (1 << i) != 0).collect();
        match (set.len(), side) {
            (0, Side::Primal) => Ok(self.interior()),
            (0, Side::Dual) => Ok(self.interior().negated()),
            (1, Side::Primal) => Ok(self.face(set[0])),
            (1, Side::Dual) => Ok(self.dual_face(set[0])),
            _ => self.corner(&set, side),
        }
    }

    /// Continuum-unit target of the boundary mean: `√n Σ_{ℓ∈I} m̄_ℓ` expressed
    /// in lattice units, i.e. `n Σ_{ℓ∈I} m̄_ℓ`.
    pub fn boundary_mean_target(&self, mask: u32, side: Side) -> Vec<S> {
        (0..self.d)
            .map(|k| {
                (0..self.d)
                    .filter(|l| mask & (1 << l) != 0)
                    .fold(S::zero(), |acc, l| acc + self.n_s.clone() * self.refl(side, k, l))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn gen(n: u64) -> RateContext<f64> {
        RateContext::new(
            vec![-1.0, -1.0],
            vec![1.0, 0.2, 0.2, 1.0],
            vec![1.0, 0.5, -0.3, 1.0],
            n,
            libm::sqrt(n as f64),
            1.0,
        )
        .unwrap()
    }

    fn skew(n: u64) -> RateContext<f64> {
        RateContext::new(
            vec![-1.0, -1.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
            n,
            libm::sqrt(n as f64),
            1.0,
        )
        .unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn interior_examples() {
        let t = gen(100).interior();
        assert!(close(t.rate(&unit(0, 1)), 40.0));
        assert!(close(t.rate(&unit(0, -1)), 50.0));
        assert!(close(t.rate(&pair(0, 1, 1, 1)), 10.0));
        assert!(close(t.rate(&pair(0, -1, 1, -1)), 10.0));
        assert_eq!(t.rate(&pair(0, 1, 1, -1)), 0.0);
        let m = t.first_moment(2);
        assert!(close(m[0] / 10.0, -1.0) && close(m[1] / 10.0, -1.0));

        let t = skew(4).interior();
        assert_eq!(t.rate(&unit(0, 1)), 2.0);
        assert_eq!(t.rate(&unit(0, -1)), 4.0);
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn face_examples() {
        let t = gen(100).face(0);
        assert!(close(t.rate(&pair(0, 1, 1, 1)), 20.0));
        assert!(close(t.rate(&unit(0, 1)), 80.0));
        assert!(close(t.rate(&unit(1, 1)), 100.0));
        assert!(close(t.rate(&unit(1, -1)), 150.0));
        let m = t.first_moment(2);
        assert!(close(m[0] / 10.0, 10.0) && close(m[1] / 10.0, -3.0));

        let t = skew(4).face(0);
        assert_eq!(t.rate(&unit(0, 1)), 4.0);
        assert_eq!(t.rate(&unit(1, 1)), 4.0);
        assert_eq!(t.rate(&unit(1, -1)), 4.0);
    }

    #[test]
    fn corner_shares_the_diagonal() {
        let t = gen(100).corner(&[0, 1], Side::Primal).unwrap();
        assert!(close(t.rate(&pair(0, 1, 1, 1)), 35.0));
        assert!(close(t.rate(&unit(0, 1)), 115.0));
        assert!(close(t.rate(&unit(1, 1)), 35.0));
        let m = t.first_moment(2);
        assert!(close(m[0] / 10.0, 15.0) && close(m[1] / 10.0, 7.0));
    }

    #[test]
    fn dual_face_z_system() {
        let c = gen(100);
        let z = c.dual_raising(0);
        assert!(close(z[0].1, 100.0 * 50.0 / 60.0));
        assert!(close(z[1].1, 100.0 * 10.0 / 60.0));
        let t = c.dual_face(0);
        assert!(close(t.total(), 350.0));
        assert!(close(c.face(0).total(), 350.0));
    }

    #[test]
    fn skew_dual_is_reversed_interior() {
        let c = skew(4);
        let d = c.boundary(0, Side::Dual).unwrap();
        assert_eq!(d.rate(&unit(0, 1)), 4.0);
        assert_eq!(d.rate(&unit(0, -1)), 2.0);
        assert_eq!(c.dual_face(1), c.face(1));
    }

    #[test]
    fn scale_checks() {
        let c = RateContext::new(vec![3.0], vec![1.0], vec![1.0], 36, 6.0, 1.0).unwrap();
        assert_eq!(c.min_scale(), 36);
        let e = RateContext::new(vec![3.0], vec![1.0], vec![1.0], 35, libm::sqrt(35.0), 1.0).unwrap_err();
        assert!(matches!(e, LatticeError::ScaleTooSmall { min: 36, .. }));
        assert_eq!(gen(1).min_scale(), 1);
        assert_eq!(skew(1).min_scale(), 1);
    }

    #[test]
    fn bad_constants() {
        let e = RateContext::new(vec![-1.0], vec![1.0], vec![1.0], 4, 2.0, 0.0).unwrap_err();
        assert!(matches!(e, LatticeError::Constants(_)));
    }
}
