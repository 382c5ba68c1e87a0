use alloc::vec;
use alloc::vec::Vec;

use super::{ChainKind, ChainSpec, Direction, Lattice};
use crate::error::LatticeError;
use crate::num::CompensatedSum;
use crate::MAX_DIM;

pub const DEFAULT_STATE_CAP: u64 = 200_000;

/// A chain with every site's jumps flattened into index arrays.
#[derive(Clone, Debug)]
pub struct CompiledChain {
    kind: ChainKind,
    lattice: Lattice,
    sqrt_n: f64,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    rates: Vec<f64>,
    dirs: Vec<Direction>,
    totals: Vec<f64>,
    zero: Vec<u32>,
    upper: Vec<u32>,
    layer: Vec<bool>,
}

impl CompiledChain {
    pub fn new(chain: &ChainSpec) -> Result<Self, LatticeError> {
        Self::with_cap(chain, DEFAULT_STATE_CAP)
    }

    pub fn with_cap(chain: &ChainSpec, cap: u64) -> Result<Self, LatticeError> {
        let lattice = chain.lattice();
        let states = lattice.num_states().unwrap_or(u64::MAX);
        if states > cap {
            return Err(LatticeError::StateCap { states, cap });
        }
        let states = states as usize;
        let d = chain.dim();
        let mut out = Self {
            kind: chain.kind(),
            lattice,
            sqrt_n: chain.params().sqrt_n(),
            offsets: Vec::with_capacity(states + 1),
            targets: Vec::new(),
            rates: Vec::new(),
            dirs: Vec::new(),
            totals: Vec::with_capacity(states),
            zero: Vec::with_capacity(states),
            upper: Vec::with_capacity(states),
            layer: Vec::with_capacity(states),
        };
        out.offsets.push(0);
        for idx in 0..states {
            let s = lattice.site_of(idx);
            let site = &s[..d];
            let table = chain.rates_at(site)?;
            let mut total = CompensatedSum::new();
            for (dir, rate) in table.jumps() {
                let t = lattice.step(site, dir).expect("truncated table leaves the lattice");
                out.targets.push(lattice.index_of(&t[..d]).expect("target on lattice") as u32);
                out.rates.push(*rate);
                out.dirs.push(*dir);
                total.add(*rate);
            }
            out.offsets.push(out.targets.len());
            out.totals.push(total.value());
            let class = lattice.classify(site);
            out.zero.push(class.zero);
            out.upper.push(class.upper);
            out.layer.push(class.layer);
        }
        Ok(out)
    }

    pub fn kind(&self) -> ChainKind {
        self.kind
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn num_states(&self) -> usize {
        self.totals.len()
    }

    pub fn sqrt_n(&self) -> f64 {
        self.sqrt_n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.sqrt_n
    }

    /// Range of jump slots leaving `state`.
    pub fn slots(&self, state: usize) -> core::ops::Range<usize> {
        self.offsets[state]..self.offsets[state + 1]
    }

    pub fn target(&self, slot: usize) -> usize {
        self.targets[slot] as usize
    }

    pub fn rate(&self, slot: usize) -> f64 {
        self.rates[slot]
    }

    pub fn direction(&self, slot: usize) -> &Direction {
        &self.dirs[slot]
    }

    pub fn total_rate(&self, state: usize) -> f64 {
        self.totals[state]
    }

    pub fn zero_mask(&self, state: usize) -> u32 {
        self.zero[state]
    }

    pub fn upper_mask(&self, state: usize) -> u32 {
        self.upper[state]
    }

    pub fn in_layer(&self, state: usize) -> bool {
        self.layer[state]
    }

    /// Rate of the jump `from → to`, zero if absent.
    pub fn rate_between(&self, from: usize, to: usize) -> f64 {
        self.slots(from).find(|&s| self.target(s) == to).map_or(0.0, |s| self.rate(s))
    }

    pub fn index_of(&self, site: &[i64]) -> Option<usize> {
        self.lattice.index_of(site)
    }

    pub fn site(&self, state: usize) -> [i64; MAX_DIM] {
        self.lattice.site_of(state)
    }

    /// Continuum coordinates of `state`.
    pub fn coords(&self, state: usize) -> Vec<f64> {
        let s = self.site(state);
        s[..self.dim()].iter().map(|&k| k as f64 * self.h()).collect()
    }

    /// `Σ_y q_{y,x}` for every `x`.
    pub fn incoming_totals(&self) -> Vec<f64> {
        let mut acc = vec![CompensatedSum::new(); self.num_states()];
        for x in 0..self.num_states() {
            for s in self.slots(x) {
                acc[self.target(s)].add(self.rate(s));
            }
        }
        acc.iter().map(CompensatedSum::value).collect()
    }
}

/// `V(x) = Σ_y q_{y,x} − Σ_y q_{x,y}` for a primal chain.
pub fn potential(primal: &CompiledChain) -> Vec<f64> {
    let incoming = primal.incoming_totals();
    incoming
        .iter()
        .zip(&primal.totals)
        .map(|(i, o)| {
            let mut s = CompensatedSum::new();
            s.add(*i);
            s.add(-*o);
            s.value()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_chain, build_dual_chain, BoundaryConstants, LatticeParams};
    use crate::model::spec_from_rows;
    use alloc::vec;

    #[test]
    fn potential_vanishes_in_the_bulk() {
        let spec = spec_from_rows(&[-1.0, -1.0], &[vec![1.0, 0.2], vec![0.2, 1.0]], &[vec![1.0, 0.5], vec![-0.3, 1.0]])
            .unwrap();
        let chain = build_chain(&spec, LatticeParams::new(16, 2.0).unwrap(), BoundaryConstants::default()).unwrap();
        let c = CompiledChain::new(&chain).unwrap();
        let v = potential(&c);
        let m = c.lattice().steps() as i64;
        for x in 0..c.num_states() {
            let s = c.site(x);
            if s[..2].iter().all(|&k| k >= 2 && k <= m - 2) {
                assert!(v[x].abs() < 1e-12, "V = {} at {:?}", v[x], &s[..2]);
            }
        }
        let dual = CompiledChain::new(&build_dual_chain(&chain)).unwrap();
        assert_eq!(dual.num_states(), 81);
    }

    #[test]
    fn cap_is_enforced() {
        let spec = spec_from_rows(&[-1.0], &[vec![1.0]], &[vec![1.0]]).unwrap();
        let chain = build_chain(&spec, LatticeParams::new(4, 10.0).unwrap(), BoundaryConstants::default()).unwrap();
        assert!(matches!(CompiledChain::with_cap(&chain, 10), Err(LatticeError::StateCap { states: 21, cap: 10 })));
    }
}
