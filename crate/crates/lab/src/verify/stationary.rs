use rbm_core::exact::{stationary_solve, GeneratorMatrix};
use rbm_core::lattice::{build_chain, CompiledChain, LatticeParams};
use rbm_core::model::{spec_from_rows, InvariantDensity};
use rbm_core::simulate::{
    path_rng, sample_path, stationary_histogram, DiscreteSampler, HistogramGridSpec, Observables,
};

use super::{density_weights, nearest_site, Context};
use crate::config::TestConfig;
use crate::ensemble::{column, reduce};
use crate::error::Result;
use crate::report::{Check, Quantity, Table, VerificationReport};

/// Average of the `Exp(η)` density over `[a, b]`.
fn exp_cell_average(eta: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    ((-eta * a).exp() - (-eta * b).exp()) / (b - a)
}

/// Product-exponential density averaged over histogram cell `c`.
fn reference_cell_average(eta: &[f64], grid: &rbm_core::model::AxisGrid, cell: usize) -> f64 {
    let mut rest = cell;
    let mut v = 1.0;
    for e in eta {
        let (a, b) = grid.cell_bounds(rest % grid.cells);
        v *= exp_cell_average(*e, a.max(0.0), b);
        rest /= grid.cells;
    }
    v
}

/// Per-axis cell indices of flat cell `c`.
fn cell_axes(cells: usize, d: usize, mut c: usize) -> Vec<usize> {
    (0..d)
        .map(|_| {
            let j = c % cells;
            c /= cells;
            j
        })
        .collect()
}

/// Long-run occupation histogram against the product-form density.
pub fn stationary_law(ctx: &Context<'_>, test: &TestConfig) -> Result<VerificationReport> {
    let TestConfig::StationaryLaw { n, k, t_run, burn_fraction, sup_range, sup_tol, mean_tol, clamp_tol } = test else {
        unreachable!("dispatched by name")
    };
    let name = "stationary_law";
    let Some(InvariantDensity::ProductExponential { eta, .. }) = ctx.density()? else {
        return Ok(VerificationReport::skipped(name, "no closed-form invariant density: skew-symmetry fails"));
    };
    let n = ctx.n(*n);
    let c = ctx.chains(n, ctx.k(*k))?;
    let chain = &c.primal;
    let d = chain.dim();
    let seed = ctx.seed(0);
    let start = nearest_site(chain, &eta.iter().map(|e| 1.0 / e).collect::<Vec<_>>());
    let burn = burn_fraction * t_run;
    let (hist, diag) =
        stationary_histogram(chain, start, burn, *t_run, HistogramGridSpec::default(), &mut path_rng(seed, 0))?;
    let grid = hist.grid;
    let cells = hist.values.len();

    // Exact lattice law at the same scale.
    let q = GeneratorMatrix::from_compiled(chain);
    let pi = stationary_solve(&q)?;
    let (lattice_hist, _) =
        rbm_core::simulate::histogram_from_occupation(chain, &pi.probs, HistogramGridSpec::default());

    let mut report = VerificationReport::new(name);
    report.seeds.push(seed);
    let mut table = Table { columns: Vec::new(), rows: Vec::new() };
    table.columns.extend((0..d).map(|i| format!("x{i}")));
    table.columns.extend(["histogram", "reference", "lattice_exact"].map(String::from));

    let mut sup = 0.0f64;
    let mut lattice_sup = 0.0f64;
    for cell in 0..cells {
        let axes = cell_axes(grid.cells, d, cell);
        let reference = reference_cell_average(&eta, &grid, cell);
        let in_range = axes.iter().all(|j| grid.cell_bounds(*j).0 < *sup_range);
        if in_range {
            sup = sup.max((hist.values[cell] - reference).abs());
            lattice_sup = lattice_sup.max((lattice_hist.values[cell] - reference).abs());
        }
        let mut row: Vec<f64> = axes.iter().map(|j| *j as f64 * chain.h()).collect();
        row.extend([hist.values[cell], reference, lattice_hist.values[cell]]);
        table.rows.push(row);
    }

    let marginal_means = |occ: &[f64]| -> Vec<f64> {
        let total: f64 = occ.iter().sum();
        (0..d)
            .map(|i| {
                occ.iter()
                    .enumerate()
                    .map(|(cell, w)| cell_axes(grid.cells, d, cell)[i] as f64 * chain.h() * w)
                    .sum::<f64>()
                    / total
            })
            .collect()
    };
    let means = marginal_means(&hist.occupation);
    let lattice_means = marginal_means(&lattice_hist.occupation);

    report.quantity(Quantity::new("recorded_time", diag.recorded_time, 0.0, "monte_carlo"));
    report.quantity(Quantity::new("empty_cells", diag.empty_cells as f64, 0.0, "monte_carlo"));
    report.quantity(Quantity::new("sup_distance", sup, 0.0, "monte_carlo"));
    report.quantity(Quantity::exact("lattice_exact_sup_distance", lattice_sup));
    let sup_check = Check::at_most(
        "sup_distance",
        sup,
        *sup_tol,
        format!("sup over cells in [0, {sup_range}] of |histogram − cell average of p| ≤ {sup_tol}"),
    );
    report.check(if d == 1 { sup_check } else { sup_check.diagnostic() });
    report.check(
        Check::at_most("lattice_exact_sup_distance", lattice_sup, *sup_tol, "same distance for the exact lattice law")
            .diagnostic(),
    );
    for i in 0..d {
        let target = 1.0 / eta[i];
        report.quantity(Quantity::new(format!("mean x{i}"), means[i], 0.0, "monte_carlo"));
        report.quantity(Quantity::new(format!("target mean x{i}"), target, 0.0, "closed_form"));
        report.quantity(Quantity::exact(format!("lattice_exact mean x{i}"), lattice_means[i]));
        report.check(Check::at_most(
            format!("mean x{i}"),
            (means[i] - target).abs(),
            mean_tol * target,
            format!("|mean − 1/η| ≤ {mean_tol}/η"),
        ));
        report.check(
            Check::at_most(
                format!("lattice_exact mean x{i}"),
                (lattice_means[i] - target).abs(),
                mean_tol * target,
                "same rule for the exact lattice law",
            )
            .diagnostic(),
        );
    }
    report.quantity(Quantity::new("clamped_mass", diag.clamped_mass, 0.0, "monte_carlo"));
    report.check(Check::at_most(
        "clamped_mass",
        diag.clamped_mass,
        *clamp_tol,
        format!("time fraction on the clamped faces < {clamp_tol}"),
    ));
    report.table = table;
    Ok(report.finalize())
}

/// `√n·∫₀ᵀ𝟙{x_i = x_j = 0}` along the n-list.
pub fn boundary_pair_decay(
    ctx: &Context<'_>,
    n_over: &Option<Vec<u64>>,
    k: Option<f64>,
    horizon: Option<f64>,
    m: Option<u64>,
) -> Result<VerificationReport> {
    let name = "boundary_pair_decay";
    let d = ctx.spec.dim();
    if d < 2 {
        return Ok(VerificationReport::skipped(name, "needs d ≥ 2: there are no coordinate pairs"));
    }
    let density = ctx.density()?;
    let k = ctx.k(k);
    let t = ctx.horizon(horizon);
    let m = ctx.paths(m);
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| ((i + 1)..d).map(move |j| (i, j))).collect();
    let independent = is_diagonal(ctx.spec.covariance()) && is_diagonal(ctx.spec.reflection());

    let mut report = VerificationReport::new(name);
    let mut table = Table { columns: vec!["n".into()], rows: Vec::new() };
    for (i, j) in &pairs {
        table.columns.extend([format!("pair_{i}{j}"), format!("stderr_{i}{j}")]);
    }
    let mut means: Vec<Vec<f64>> = vec![Vec::new(); pairs.len()];
    let ns = ctx.n_list(n_over);
    for (idx, &n) in ns.iter().enumerate() {
        let c = ctx.chains(n, k)?;
        let start = match &density {
            Some(p) => Start::Density(DiscreteSampler::new(&density_weights(&c.primal, |x| p.density(x)))?),
            None => Start::Site(nearest_site(&c.primal, &vec![0.5; d])),
        };
        let seed = ctx.seed(idx as u64);
        report.seeds.push(seed);
        let rows = ctx.ensemble.map(m, |path| {
            let mut rng = path_rng(seed, path);
            let x0 = start.draw(&mut rng);
            let mut obs = Observables::new(d);
            sample_path(&c.primal, x0, t, &mut rng, &mut obs)?;
            Ok(obs.pair_occupation)
        })?;
        let mut row = vec![n as f64];
        for (p, (i, j)) in pairs.iter().enumerate() {
            let est = reduce(&column(&rows, p))?;
            means[p].push(est.mean);
            row.extend([est.mean, est.stderr]);
            report.quantity(Quantity::new(format!("pair_{i}{j} n={n}"), est.mean, est.stderr, "monte_carlo"));
            if independent && density.is_some() {
                let pred = independent_prediction(ctx, n, k, *i, *j)? * t;
                report.quantity(Quantity::exact(format!("independent_prediction_{i}{j} n={n}"), pred));
            }
        }
        table.rows.push(row);
    }
    for (p, (i, j)) in pairs.iter().enumerate() {
        let v = &means[p];
        let decreasing = v.windows(2).all(|w| w[1] < w[0]);
        report.check(Check::flag(format!("decreasing_{i}{j}"), decreasing, "strictly decreasing along the n-list"));
        if v.len() > 1 {
            report.check(Check::at_most(
                format!("halved_{i}{j}"),
                v[v.len() - 1],
                0.5 * v[0],
                "largest-n value ≤ half the smallest-n value",
            ));
        }
    }
    report.table = table;
    Ok(report.finalize())
}

enum Start {
    Density(DiscreteSampler),
    Site(usize),
}

impl Start {
    fn draw<R: rand_core::RngCore>(&self, rng: &mut R) -> usize {
        match self {
            Self::Density(s) => s.sample(rng),
            Self::Site(x) => *x,
        }
    }
}

fn is_diagonal(m: &rbm_core::Matrix) -> bool {
    (0..m.rows()).all(|i| (0..m.cols()).all(|j| i == j || m[(i, j)] == 0.0))
}

/// `√n·π_i(0)·π_j(0)` from exact one-dimensional lattice laws, valid when
/// the coordinates are independent.
fn independent_prediction(ctx: &Context<'_>, n: u64, k: f64, i: usize, j: usize) -> Result<f64> {
    let at_zero = |l: usize| -> Result<f64> {
        let a = ctx.spec.covariance()[(l, l)];
        let r = ctx.spec.reflection()[(l, l)];
        let spec = spec_from_rows(&[ctx.spec.drift()[l]], &[vec![a]], &[vec![r]])?;
        let chain = build_chain(&spec, LatticeParams::new(n, k)?, ctx.constants)?;
        let pi = stationary_solve(&GeneratorMatrix::from_compiled(&CompiledChain::new(&chain)?))?;
        Ok(pi.probs[0])
    };
    Ok((n as f64).sqrt() * at_zero(i)? * at_zero(j)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_cell_average_integrates() {
        let eta = 2.0;
        let total: f64 = (0..400).map(|j| exp_cell_average(eta, j as f64 * 0.05, (j + 1) as f64 * 0.05) * 0.05).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn axes_decompose_flat_index() {
        assert_eq!(cell_axes(5, 2, 7), vec![2, 1]);
    }
}
