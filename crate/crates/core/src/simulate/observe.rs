use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::{Event, PathObserver};
use crate::lattice::CompiledChain;

/// Clocks and local times of one path.
///
/// `local_time[i] = √n·∫𝟙{x_i = 0}`, `pair_occupation` holds
/// `√n·∫𝟙{x_i = x_j = 0}` for `i < j` in lexicographic pair order. Per-site
/// occupation and per-edge jump counts on the boundary layer are kept only
/// when enabled with [`Observables::with_layer_tracking`].
#[derive(Clone, Debug, PartialEq)]
pub struct Observables {
    pub interior_clock: f64,
    pub local_time: Vec<f64>,
    pub pair_occupation: Vec<f64>,
    pub upper_time: f64,
    pub upper_hits: u64,
    pub jumps: u64,
    pub elapsed: f64,
    pub final_state: Option<usize>,
    pub layer_occupation: Option<BTreeMap<usize, f64>>,
    pub layer_jumps: Option<BTreeMap<(usize, usize), u64>>,
}

impl Observables {
    pub fn new(d: usize) -> Self {
        Self {
            interior_clock: 0.0,
            local_time: vec![0.0; d],
            pair_occupation: vec![0.0; d * d.saturating_sub(1) / 2],
            upper_time: 0.0,
            upper_hits: 0,
            jumps: 0,
            elapsed: 0.0,
            final_state: None,
            layer_occupation: None,
            layer_jumps: None,
        }
    }

    pub fn with_layer_tracking(mut self) -> Self {
        self.layer_occupation = Some(BTreeMap::new());
        self.layer_jumps = Some(BTreeMap::new());
        self
    }

    pub fn pair_index(d: usize, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < d);
        i * (2 * d - i - 1) / 2 + (j - i - 1)
    }

    /// Time spent with at least one coordinate at zero.
    pub fn boundary_time(&self) -> f64 {
        self.elapsed - self.interior_clock
    }
}

impl PathObserver for Observables {
    fn sojourn(&mut self, chain: &CompiledChain, state: usize, _start: f64, duration: f64) {
        self.elapsed += duration;
        let zero = chain.zero_mask(state);
        if zero == 0 {
            self.interior_clock += duration;
        } else {
            let d = self.local_time.len();
            let lt = chain.sqrt_n() * duration;
            for i in 0..d {
                if zero & (1 << i) == 0 {
                    continue;
                }
                self.local_time[i] += lt;
                for j in (i + 1)..d {
                    if zero & (1 << j) != 0 {
                        self.pair_occupation[Self::pair_index(d, i, j)] += lt;
                    }
                }
            }
        }
        if chain.upper_mask(state) != 0 {
            self.upper_time += duration;
        }
        if chain.in_layer(state) {
            if let Some(map) = self.layer_occupation.as_mut() {
                *map.entry(state).or_insert(0.0) += duration;
            }
        }
    }

    fn jump(&mut self, chain: &CompiledChain, from: usize, _slot: usize, to: usize, _time: f64) {
        self.jumps += 1;
        if chain.upper_mask(to) != 0 {
            self.upper_hits += 1;
        }
        if chain.in_layer(from) {
            if let Some(map) = self.layer_jumps.as_mut() {
                *map.entry((from, to)).or_insert(0) += 1;
            }
        }
    }

    fn finish(&mut self, _chain: &CompiledChain, state: usize, _time: f64) {
        self.final_state = Some(state);
    }
}

/// Stores every jump.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl PathObserver for EventLog {
    fn jump(&mut self, _chain: &CompiledChain, from: usize, slot: usize, to: usize, time: f64) {
        self.events.push(Event { time, from, to, slot });
    }
}

/// States at fixed times (sorted ascending, within the horizon).
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshots {
    times: Vec<f64>,
    states: Vec<usize>,
}

impl Snapshots {
    pub fn new(times: &[f64]) -> Self {
        debug_assert!(times.windows(2).all(|w| w[0] <= w[1]));
        Self { times: times.to_vec(), states: Vec::with_capacity(times.len()) }
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn clear(&mut self) {
        self.states.clear();
    }
}

impl PathObserver for Snapshots {
    fn sojourn(&mut self, _chain: &CompiledChain, state: usize, start: f64, duration: f64) {
        let end = start + duration;
        while let Some(&t) = self.times.get(self.states.len()) {
            if t < end {
                self.states.push(state);
            } else {
                break;
            }
        }
    }

    fn finish(&mut self, _chain: &CompiledChain, state: usize, time: f64) {
        while let Some(&t) = self.times.get(self.states.len()) {
            if t <= time {
                self.states.push(state);
            } else {
                break;
            }
        }
    }
}
