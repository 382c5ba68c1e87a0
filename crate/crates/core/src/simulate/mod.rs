//! Path sampling with streaming observers, observables, the Feynman–Kac
//! weight of the dual chain and occupation-time histograms.

mod histogram;
mod observe;
mod stats;
mod weight;

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub use histogram::{histogram_from_occupation, stationary_histogram, HistogramGridSpec, StationaryDiagnostics};
pub use observe::{EventLog, Observables, Snapshots};
pub use stats::{estimate, DiscreteSampler, Estimate};
pub use weight::{fk_weight, ContinuumWeight, WeightObserver, WeightTable};

use crate::error::SimError;
use crate::lattice::CompiledChain;

/// Generator for path `path` of an ensemble with root seed `root`. Streams
/// are independent of the order in which paths are drawn.
pub fn path_rng(root: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(path);
    rng
}

/// Uniform on `(0, 1]`.
pub fn uniform_open0<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on `[0, 1)`.
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Callbacks driven by [`sample_path`]. Every path is a sequence of
/// sojourns separated by jumps, closed by one `finish` call.
pub trait PathObserver {
    /// The chain sat at `state` during `[start, start + duration)`.
    fn sojourn(&mut self, _chain: &CompiledChain, _state: usize, _start: f64, _duration: f64) {}
    /// Jump through `slot` from `from` to `to` at `time`.
    fn jump(&mut self, _chain: &CompiledChain, _from: usize, _slot: usize, _to: usize, _time: f64) {}
    /// The path ends at `state` at the horizon `time`.
    fn finish(&mut self, _chain: &CompiledChain, _state: usize, _time: f64) {}
}

impl PathObserver for () {}

impl<O: PathObserver + ?Sized> PathObserver for &mut O {
    fn sojourn(&mut self, chain: &CompiledChain, state: usize, start: f64, duration: f64) {
        (**self).sojourn(chain, state, start, duration);
    }
    fn jump(&mut self, chain: &CompiledChain, from: usize, slot: usize, to: usize, time: f64) {
        (**self).jump(chain, from, slot, to, time);
    }
    fn finish(&mut self, chain: &CompiledChain, state: usize, time: f64) {
        (**self).finish(chain, state, time);
    }
}

macro_rules! tuple_observer {
    ($($name:ident $idx:tt),+) => {
        impl<$($name: PathObserver),+> PathObserver for ($($name,)+) {
            fn sojourn(&mut self, chain: &CompiledChain, state: usize, start: f64, duration: f64) {
                $(self.$idx.sojourn(chain, state, start, duration);)+
            }
            fn jump(&mut self, chain: &CompiledChain, from: usize, slot: usize, to: usize, time: f64) {
                $(self.$idx.jump(chain, from, slot, to, time);)+
            }
            fn finish(&mut self, chain: &CompiledChain, state: usize, time: f64) {
                $(self.$idx.finish(chain, state, time);)+
            }
        }
    };
}

tuple_observer!(A 0);
tuple_observer!(A 0, B 1);
tuple_observer!(A 0, B 1, C 2);
tuple_observer!(A 0, B 1, C 2, D 3);

/// Runs the chain from `x0` on `[0, horizon]`, reporting to `obs`. Returns
/// the state at the horizon.
pub fn sample_path<R: RngCore + ?Sized, O: PathObserver + ?Sized>(
    chain: &CompiledChain,
    x0: usize,
    horizon: f64,
    rng: &mut R,
    obs: &mut O,
) -> Result<usize, SimError> {
    if x0 >= chain.num_states() {
        return Err(SimError::Invalid(alloc::format!("initial state {x0} is not on the lattice")));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(SimError::Invalid(alloc::format!("horizon {horizon} must be finite and nonnegative")));
    }
    let mut state = x0;
    let mut now = 0.0;
    while now < horizon {
        let total = chain.total_rate(state);
        if !(total > 0.0) {
            return Err(SimError::Absorbing(state));
        }
        let next = now + -libm::log(uniform_open0(rng)) / total;
        if next >= horizon {
            obs.sojourn(chain, state, now, horizon - now);
            break;
        }
        obs.sojourn(chain, state, now, next - now);
        now = next;
        let slot = choose_slot(chain, state, total, rng);
        let to = chain.target(slot);
        obs.jump(chain, state, slot, to, now);
        state = to;
    }
    obs.finish(chain, state, horizon);
    Ok(state)
}

fn choose_slot<R: RngCore + ?Sized>(chain: &CompiledChain, state: usize, total: f64, rng: &mut R) -> usize {
    let slots = chain.slots(state);
    let mut u = uniform(rng) * total;
    let last = slots.end - 1;
    for s in slots {
        let r = chain.rate(s);
        if u < r {
            return s;
        }
        u -= r;
    }
    last
}

/// One jump of a recorded path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub from: usize,
    pub to: usize,
    pub slot: usize,
}

/// A fully stored path.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub stream: u64,
    pub x0: usize,
    pub horizon: f64,
    pub events: Vec<Event>,
}

impl TrajectoryRecord {
    /// Samples and stores a path using the stream `(seed, stream)`.
    pub fn sample(chain: &CompiledChain, x0: usize, horizon: f64, seed: u64, stream: u64) -> Result<Self, SimError> {
        let mut log = EventLog::default();
        sample_path(chain, x0, horizon, &mut path_rng(seed, stream), &mut log)?;
        Ok(Self { seed, stream, x0, horizon, events: log.events })
    }

    pub fn final_state(&self) -> usize {
        self.events.last().map_or(self.x0, |e| e.to)
    }

    /// Feeds the stored path, cut at `until`, to `obs`.
    pub fn replay<O: PathObserver + ?Sized>(&self, chain: &CompiledChain, until: f64, obs: &mut O) -> usize {
        let until = until.min(self.horizon);
        let mut state = self.x0;
        let mut now = 0.0;
        for e in &self.events {
            if e.time >= until {
                break;
            }
            obs.sojourn(chain, state, now, e.time - now);
            obs.jump(chain, e.from, e.slot, e.to, e.time);
            now = e.time;
            state = e.to;
        }
        if until > now {
            obs.sojourn(chain, state, now, until - now);
        }
        obs.finish(chain, state, until);
        state
    }

    pub fn observables(&self, chain: &CompiledChain) -> Observables {
        let mut o = Observables::new(chain.dim());
        self.replay(chain, self.horizon, &mut o);
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_chain, BoundaryConstants, LatticeParams};
    use crate::model::spec_from_rows;
    use alloc::vec;

    fn one_dim(n: u64, k: f64) -> CompiledChain {
        let spec = spec_from_rows(&[-1.0], &[vec![1.0]], &[vec![1.0]]).unwrap();
        CompiledChain::new(
            &build_chain(&spec, LatticeParams::new(n, k).unwrap(), BoundaryConstants::default()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn holding_rate_and_up_probability() {
        let c = one_dim(1, 4.0);
        assert_eq!(c.total_rate(1), 2.0);
        assert_eq!(c.rate_between(1, 2), 0.5);
        let mut ups = 0u32;
        let trials = 40_000;
        for p in 0..trials {
            let mut log = EventLog::default();
            sample_path(&c, 1, 100.0, &mut path_rng(9, p), &mut (&mut log, ())).unwrap();
            if log.events[0].to == 2 {
                ups += 1;
            }
        }
        let f = ups as f64 / trials as f64;
        assert!((f - 0.25).abs() < 4.0 * libm::sqrt(0.25 * 0.75 / trials as f64), "{f}");
    }

    #[test]
    fn empty_horizon_and_determinism() {
        let c = one_dim(4, 2.0);
        let r = TrajectoryRecord::sample(&c, 2, 0.0, 1, 0).unwrap();
        assert!(r.events.is_empty());
        let o = r.observables(&c);
        assert_eq!(o.interior_clock, 0.0);
        assert_eq!(o.local_time, vec![0.0]);
        let a = TrajectoryRecord::sample(&c, 2, 5.0, 7, 3).unwrap();
        let b = TrajectoryRecord::sample(&c, 2, 5.0, 7, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.events.windows(2).all(|w| w[0].time < w[1].time));
    }

    #[test]
    fn streams_are_order_independent() {
        let mut a = path_rng(5, 11);
        let _ = path_rng(5, 10).next_u64();
        let mut b = path_rng(5, 11);
        assert_eq!(a.next_u64(), b.next_u64());
        assert_ne!(path_rng(5, 1).next_u64(), path_rng(5, 2).next_u64());
    }

    #[test]
    fn replay_matches_streaming() {
        let c = one_dim(16, 2.0);
        let rec = TrajectoryRecord::sample(&c, 3, 7.0, 2, 4).unwrap();
        let mut live = Observables::new(1);
        sample_path(&c, 3, 7.0, &mut path_rng(2, 4), &mut live).unwrap();
        assert_eq!(rec.observables(&c), live);
    }
}
