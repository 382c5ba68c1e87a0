use alloc::vec::Vec;

use super::{PathObserver, TrajectoryRecord};
use crate::error::SimError;
use crate::lattice::{potential, ChainKind, CompiledChain};
use crate::num::CompensatedSum;

/// Per-state and per-jump pieces of the log-weight turning dual paths into
/// the transposed primal semigroup.
///
/// While the dual chain sits at `x` the log-weight grows at
/// `V(x) − 𝟙{x ∈ ∂₁}·Σ_y (q̂_{x,y} − q̃_{x,y})`; a jump `x → y` from the
/// boundary layer adds `log(q̂_{x,y} / q̃_{x,y})`, with `q̂_{x,y} = q_{y,x}`.
#[derive(Clone, Debug)]
pub struct WeightTable {
    sojourn_rate: Vec<f64>,
    jump_log: Vec<f64>,
    potential: Vec<f64>,
}

impl WeightTable {
    /// Also checks that the dual is the exact transpose off the boundary
    /// layer and that on the layer it can make every jump the transpose can.
    pub fn new(primal: &CompiledChain, dual: &CompiledChain) -> Result<Self, SimError> {
        if primal.lattice() != dual.lattice()
            || primal.kind() != ChainKind::Primal
            || dual.kind() != ChainKind::Dual
            || primal.sqrt_n() != dual.sqrt_n()
        {
            return Err(SimError::GeometryMismatch);
        }
        let states = primal.num_states();
        let v = potential(primal);
        let incoming = primal.incoming_totals();

        for y in 0..states {
            for s in primal.slots(y) {
                let x = primal.target(s);
                let q = primal.rate(s);
                let back = dual.rate_between(x, y);
                if back > 0.0 {
                    continue;
                }
                return Err(if dual.in_layer(x) {
                    SimError::SupportMismatch { site: x, from: y, rate: q }
                } else {
                    SimError::NotTransposed { site: x, dual: back, primal: q }
                });
            }
        }

        let mut sojourn_rate = Vec::with_capacity(states);
        let mut jump_log = Vec::with_capacity(dual.slots(states.saturating_sub(1)).end);
        for x in 0..states {
            let layer = dual.in_layer(x);
            let mut rate = CompensatedSum::new();
            rate.add(v[x]);
            if layer {
                rate.add(-incoming[x]);
                rate.add(dual.total_rate(x));
            }
            sojourn_rate.push(rate.value());
            for s in dual.slots(x) {
                let y = dual.target(s);
                let qt = dual.rate(s);
                let qhat = primal.rate_between(y, x);
                if layer {
                    jump_log.push(if qhat > 0.0 { libm::log(qhat / qt) } else { f64::NEG_INFINITY });
                } else {
                    if (qhat - qt).abs() > 1e-12 * qt.abs().max(qhat.abs()) {
                        return Err(SimError::NotTransposed { site: x, dual: qt, primal: qhat });
                    }
                    jump_log.push(0.0);
                }
            }
        }
        Ok(Self { sojourn_rate, jump_log, potential: v })
    }

    pub fn sojourn_rate(&self, state: usize) -> f64 {
        self.sojourn_rate[state]
    }

    pub fn jump_log(&self, slot: usize) -> f64 {
        self.jump_log[slot]
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }
}

/// Accumulates the log-weight along a dual path.
#[derive(Clone, Debug)]
pub struct WeightObserver<'a> {
    table: &'a WeightTable,
    log: CompensatedSum,
    killed: bool,
}

impl<'a> WeightObserver<'a> {
    pub fn new(table: &'a WeightTable) -> Self {
        Self { table, log: CompensatedSum::new(), killed: false }
    }

    pub fn log_weight(&self) -> f64 {
        if self.killed {
            f64::NEG_INFINITY
        } else {
            self.log.value()
        }
    }

    pub fn weight(&self) -> f64 {
        libm::exp(self.log_weight())
    }

    pub fn reset(&mut self) {
        self.log = CompensatedSum::new();
        self.killed = false;
    }
}

impl PathObserver for WeightObserver<'_> {
    fn sojourn(&mut self, _chain: &CompiledChain, state: usize, _start: f64, duration: f64) {
        let r = self.table.sojourn_rate(state);
        if r != 0.0 {
            self.log.add(r * duration);
        }
    }

    fn jump(&mut self, _chain: &CompiledChain, _from: usize, slot: usize, _to: usize, _time: f64) {
        let l = self.table.jump_log(slot);
        if l == f64::NEG_INFINITY {
            self.killed = true;
        } else if l != 0.0 {
            self.log.add(l);
        }
    }
}

/// Weight of a stored dual path on `[0, t]`.
pub fn fk_weight(
    record: &TrajectoryRecord,
    dual: &CompiledChain,
    table: &WeightTable,
    t: f64,
) -> Result<f64, SimError> {
    if !(t >= 0.0) || t > record.horizon {
        return Err(SimError::Invalid(alloc::format!("t = {t} outside [0, {}]", record.horizon)));
    }
    let mut w = WeightObserver::new(table);
    record.replay(dual, t, &mut w);
    Ok(w.weight())
}

/// `exp(Σ_i κ_i·√n·∫𝟙{x_i = 0})`, the continuum boundary weight.
#[derive(Clone, Debug)]
pub struct ContinuumWeight {
    kappa: Vec<f64>,
    log: CompensatedSum,
}

impl ContinuumWeight {
    pub fn new(kappa: Vec<f64>) -> Self {
        Self { kappa, log: CompensatedSum::new() }
    }

    pub fn log_weight(&self) -> f64 {
        self.log.value()
    }

    pub fn weight(&self) -> f64 {
        libm::exp(self.log.value())
    }
}

impl PathObserver for ContinuumWeight {
    fn sojourn(&mut self, chain: &CompiledChain, state: usize, _start: f64, duration: f64) {
        let zero = chain.zero_mask(state);
        if zero == 0 {
            return;
        }
        let lt = chain.sqrt_n() * duration;
        for (i, k) in self.kappa.iter().enumerate() {
            if zero & (1 << i) != 0 {
                self.log.add(k * lt);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_chain, build_dual_chain, BoundaryConstants, LatticeParams};
    use crate::model::spec_from_rows;
    use crate::simulate::{path_rng, sample_path};
    use alloc::vec;

    fn pair(spec: &crate::model::RbmSpec, n: u64, k: f64) -> (CompiledChain, CompiledChain) {
        let c = build_chain(spec, LatticeParams::new(n, k).unwrap(), BoundaryConstants::default()).unwrap();
        (CompiledChain::new(&c).unwrap(), CompiledChain::new(&build_dual_chain(&c)).unwrap())
    }

    fn general() -> crate::model::RbmSpec {
        spec_from_rows(&[-1.0, -1.0], &[vec![1.0, 0.2], vec![0.2, 1.0]], &[vec![1.0, 0.5], vec![-0.3, 1.0]]).unwrap()
    }

    #[test]
    fn bulk_paths_have_unit_weight() {
        let skew = spec_from_rows(&[-1.0, -1.0], &[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![1.0, 0.0], vec![0.0, 1.0]])
            .unwrap();
        let (p, d) = pair(&skew, 16, 4.0);
        let table = WeightTable::new(&p, &d).unwrap();
        let x0 = d.index_of(&[8, 8]).unwrap();
        let rec = TrajectoryRecord::sample(&d, x0, 0.01, 3, 0).unwrap();
        let o = rec.observables(&d);
        assert_eq!(o.local_time, vec![0.0, 0.0]);
        let min = rec.events.iter().map(|e| d.site(e.to)).flat_map(|s| [s[0], s[1]]).min().unwrap_or(8);
        if (2..=14).contains(&min) {
            assert_eq!(fk_weight(&rec, &d, &table, 0.01).unwrap(), 1.0);
        }
        assert_eq!(fk_weight(&rec, &d, &table, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn zero_sum_on_faces() {
        let (p, d) = pair(&general(), 100, 1.0);
        let x = p.index_of(&[0, 5]).unwrap();
        assert!((p.total_rate(x) - 350.0).abs() < 1e-9);
        assert!((d.total_rate(x) - 350.0).abs() < 1e-9);
    }

    #[test]
    fn single_sojourn_collapse() {
        let (p, d) = pair(&general(), 100, 1.0);
        let table = WeightTable::new(&p, &d).unwrap();
        let x = d.index_of(&[0, 5]).unwrap();
        let y = d.index_of(&[1, 5]).unwrap();
        let slot = d.slots(x).find(|&s| d.target(s) == y).unwrap();
        let mut w = WeightObserver::new(&table);
        w.sojourn(&d, x, 0.0, 0.37);
        w.jump(&d, x, slot, y, 0.37);
        let expect = p.rate_between(y, x) / d.rate_between(x, y);
        // q_{y,x} / q̃_{x,y} = 50 / (100·50/60)
        assert!((expect - 0.6).abs() < 1e-12);
        assert!((w.weight() - expect).abs() < 1e-12, "{} vs {expect}", w.weight());
    }

    #[test]
    fn mismatched_lattices_are_rejected() {
        let (p, _) = pair(&general(), 4, 1.0);
        let (_, d) = pair(&general(), 4, 2.0);
        assert!(matches!(WeightTable::new(&p, &d), Err(SimError::GeometryMismatch)));
    }

    #[test]
    fn continuum_weight_counts_local_time() {
        let (_, d) = pair(&general(), 4, 1.0);
        let mut c = ContinuumWeight::new(vec![2.0, 0.5]);
        let x = d.index_of(&[0, 1]).unwrap();
        c.sojourn(&d, x, 0.0, 0.25);
        assert!((c.log_weight() - 2.0 * 2.0 * 0.25).abs() < 1e-15);
        let mut w = ContinuumWeight::new(vec![1.0, 1.0]);
        sample_path(&d, x, 0.0, &mut path_rng(0, 0), &mut w).unwrap();
        assert_eq!(w.weight(), 1.0);
    }
}
