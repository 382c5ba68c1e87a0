use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use super::{sample_path, PathObserver};
use crate::error::SimError;
use crate::lattice::CompiledChain;
use crate::model::{AxisGrid, HistogramDensity};
use crate::num::CompensatedSum;

/// Histogram cells in units of the lattice step: cell `j` on every axis
/// covers sites `j·width .. (j+1)·width`, centred so site `k` sits at the
/// middle of its own cell when `width = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistogramGridSpec {
    pub width_steps: u32,
}

impl Default for HistogramGridSpec {
    fn default() -> Self {
        Self { width_steps: 1 }
    }
}

impl HistogramGridSpec {
    pub fn grid(&self, chain: &CompiledChain) -> AxisGrid {
        let h = chain.h();
        let w = self.width_steps.max(1);
        let m = chain.lattice().steps();
        let cells = (m / w + 1) as usize;
        AxisGrid { lo: -0.5 * h, width: w as f64 * h, cells, hi: m as f64 * h }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryDiagnostics {
    /// Fraction of recorded time spent with some coordinate at `K`.
    pub clamped_mass: f64,
    /// Cells with no occupation whose centre lies strictly inside the support.
    pub empty_cells: usize,
    pub recorded_time: f64,
}

struct Occupation {
    burn: f64,
    time: Vec<CompensatedSum>,
}

impl PathObserver for Occupation {
    fn sojourn(&mut self, _chain: &CompiledChain, state: usize, start: f64, duration: f64) {
        let end = start + duration;
        if end <= self.burn {
            return;
        }
        self.time[state].add(end - start.max(self.burn));
    }
}

/// Occupation-time estimate of the invariant density: run for
/// `t_burn + t_run`, record after `t_burn`, aggregate to the grid and
/// normalise by recorded time and clipped cell volume.
pub fn stationary_histogram<R: RngCore + ?Sized>(
    chain: &CompiledChain,
    x0: usize,
    t_burn: f64,
    t_run: f64,
    grid: HistogramGridSpec,
    rng: &mut R,
) -> Result<(HistogramDensity, StationaryDiagnostics), SimError> {
    if !(t_run > 0.0) || !(t_burn >= 0.0) {
        return Err(SimError::Invalid(format!("need t_run > 0 and t_burn >= 0, got {t_run}, {t_burn}")));
    }
    let mut occ = Occupation { burn: t_burn, time: vec![CompensatedSum::new(); chain.num_states()] };
    sample_path(chain, x0, t_burn + t_run, rng, &mut occ)?;
    let times: Vec<f64> = occ.time.iter().map(CompensatedSum::value).collect();
    Ok(histogram_from_occupation(chain, &times, grid))
}

/// Aggregates per-state occupation (any nonnegative weights) to a density.
pub fn histogram_from_occupation(
    chain: &CompiledChain,
    weights: &[f64],
    grid: HistogramGridSpec,
) -> (HistogramDensity, StationaryDiagnostics) {
    let d = chain.dim();
    let axis = grid.grid(chain);
    let cells = axis.cells.pow(d as u32);
    let mut h = HistogramDensity { dim: d, grid: axis, values: vec![0.0; cells], occupation: vec![0.0; cells] };
    let mut total = CompensatedSum::new();
    let mut clamped = CompensatedSum::new();
    for (state, &w) in weights.iter().enumerate() {
        total.add(w);
        if chain.upper_mask(state) != 0 {
            clamped.add(w);
        }
        if let Some(c) = h.cell_index(&chain.coords(state)) {
            h.occupation[c] += w;
        }
    }
    let total = total.value();
    for c in 0..cells {
        let vol = h.cell_volume(c);
        h.values[c] = if vol > 0.0 && total > 0.0 { h.occupation[c] / (total * vol) } else { 0.0 };
    }
    let hi = h.grid.hi;
    let empty_cells = (0..cells)
        .filter(|&c| {
            let mut rest = c;
            let mut inside = true;
            for _ in 0..d {
                let (a, b) = h.grid.cell_bounds(rest % h.grid.cells);
                let mid = 0.5 * (a + b);
                inside &= mid > 0.0 && mid < hi;
                rest /= h.grid.cells;
            }
            inside && h.occupation[c] == 0.0
        })
        .count();
    let diag = StationaryDiagnostics {
        clamped_mass: if total > 0.0 { clamped.value() / total } else { 0.0 },
        empty_cells,
        recorded_time: total,
    };
    (h, diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_chain, BoundaryConstants, LatticeParams};
    use crate::model::spec_from_rows;
    use alloc::vec;

    #[test]
    fn point_masses_become_cell_densities() {
        let spec = spec_from_rows(&[-1.0], &[vec![1.0]], &[vec![1.0]]).unwrap();
        let c = CompiledChain::new(
            &build_chain(&spec, LatticeParams::new(4, 1.0).unwrap(), BoundaryConstants::default()).unwrap(),
        )
        .unwrap();
        let (h, diag) = histogram_from_occupation(&c, &[1.0, 2.0, 1.0], HistogramGridSpec::default());
        // cells [0, .25], [.25, .75], [.75, 1]
        assert!((h.values[0] - 0.25 / 0.25).abs() < 1e-15);
        assert!((h.values[1] - 0.5 / 0.5).abs() < 1e-15);
        assert!((h.values[2] - 0.25 / 0.25).abs() < 1e-15);
        assert!((diag.clamped_mass - 0.25).abs() < 1e-15);
        let integral: f64 = (0..3).map(|i| h.values[i] * h.cell_volume(i)).sum();
        assert!((integral - 1.0).abs() < 1e-15);
    }
}
