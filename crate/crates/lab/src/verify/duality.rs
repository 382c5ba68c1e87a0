use rbm_core::exact::{duality_check_exact, expectation, fk_potential_apply, fk_semigroup_apply, GeneratorMatrix};
use rbm_core::model::local_time_exponents;
use rbm_core::simulate::{
    path_rng, sample_path, uniform, ContinuumWeight, DiscreteSampler, WeightObserver, WeightTable,
};

use super::{bump_on_sites, Context};
use crate::config::Bump;
use crate::ensemble::{column, reduce};
use crate::error::{LabError, Result};
use crate::report::{Check, Quantity, Table, VerificationReport};

/// Exact transpose identity `fᵀe^{tQᵀ}g = (e^{tQ}f)ᵀg` for random `f, g`
/// vanishing on the clamped faces.
pub fn duality_exact(
    ctx: &Context<'_>,
    n: Option<u64>,
    k: Option<f64>,
    times: &[f64],
    trials: usize,
    tol: f64,
) -> Result<VerificationReport> {
    let n = ctx.n(n);
    let c = ctx.chains(n, ctx.k(k))?;
    let q = GeneratorMatrix::from_compiled(&c.primal);
    q.check_irreducible()?;
    let states = c.primal.num_states();
    let seed = ctx.seed(0);

    let mut report = VerificationReport::new("duality_exact");
    report.seeds.push(seed);
    let mut table =
        Table { columns: ["trial", "t", "lhs", "rhs", "residual"].map(String::from).to_vec(), rows: Vec::new() };
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut rng = path_rng(seed, trial as u64);
        let mut random = || -> Vec<f64> {
            (0..states).map(|x| if c.primal.upper_mask(x) != 0 { 0.0 } else { 2.0 * uniform(&mut rng) - 1.0 }).collect()
        };
        let f = random();
        let g = random();
        for &t in times {
            let lhs_vec = fk_semigroup_apply(&q, &g, t)?;
            let rhs_vec = expectation(&q, &f, t)?;
            let lhs: f64 = f.iter().zip(&lhs_vec).map(|(a, b)| a * b).sum();
            let rhs: f64 = rhs_vec.iter().zip(&g).map(|(a, b)| a * b).sum();
            let residual = duality_check_exact(&q, &f, &g, t)?;
            worst = worst.max(residual);
            table.rows.push(vec![trial as f64, t, lhs, rhs, residual]);
        }
    }
    report.quantity(Quantity::exact("states", states as f64));
    report.quantity(Quantity::exact("max_residual", worst));
    report.check(Check::at_most("max_residual", worst, tol, "max |fᵀe^{tQᵀ}g − (e^{tQ}f)ᵀg| ≤ tol"));
    report.table = table;
    Ok(report.finalize())
}

/// Dual-chain Monte Carlo with the Feynman–Kac weight against the transposed
/// primal semigroup.
#[allow(clippy::too_many_arguments)]
pub fn fk_vs_exact(
    ctx: &Context<'_>,
    n: Option<u64>,
    k: Option<f64>,
    x0: &[i64],
    g_sites: Option<&[Vec<i64>]>,
    t: f64,
    m: Option<u64>,
    z: f64,
    rel_stderr: f64,
) -> Result<VerificationReport> {
    let n = ctx.n(n);
    let c = ctx.chains(n, ctx.k(k))?;
    let site = |s: &[i64], field: &str| {
        c.primal.index_of(s).ok_or_else(|| LabError::config(field, format!("site {s:?} is not on the lattice")))
    };
    let start = site(x0, "x0")?;
    let mut g = vec![0.0; c.primal.num_states()];
    match g_sites {
        Some(list) => {
            for s in list {
                g[site(s, "g_sites")?] = 1.0;
            }
        }
        None => g[start] = 1.0,
    }
    let q = GeneratorMatrix::from_compiled(&c.primal);
    let exact = fk_semigroup_apply(&q, &g, t)?[start];
    let exact_mass = fk_semigroup_apply(&q, &vec![1.0; g.len()], t)?[start];

    let table = WeightTable::new(&c.primal, &c.dual)?;
    let seed = ctx.seed(0);
    let m = ctx.paths(m);
    let rows = ctx.ensemble.map(m, |i| {
        let mut w = WeightObserver::new(&table);
        let end = sample_path(&c.dual, start, t, &mut path_rng(seed, i), &mut w)?;
        let weight = w.weight();
        Ok(vec![weight * g[end], weight])
    })?;
    let est = reduce(&column(&rows, 0))?;
    let mass = reduce(&column(&rows, 1))?;
    let diff = (est.mean - exact).abs();

    let mut report = VerificationReport::new("fk_vs_exact");
    report.seeds.push(seed);
    report.quantity(Quantity::exact("exact", exact));
    report.quantity(Quantity::new("estimate", est.mean, est.stderr, "monte_carlo"));
    report.quantity(Quantity::exact("exact_weight_mass", exact_mass));
    report.quantity(Quantity::new("mean_weight", mass.mean, mass.stderr, "monte_carlo"));
    report.check(Check::at_most("difference", diff, z * est.stderr, format!("|estimate − exact| ≤ {z}·stderr")));
    report.check(Check::at_most(
        "relative_stderr",
        est.stderr,
        rel_stderr * exact.abs(),
        format!("stderr ≤ {rel_stderr}·|exact|"),
    ));
    report.check(
        Check::at_most(
            "weight_mass",
            (mass.mean - exact_mass).abs(),
            z * mass.stderr,
            format!("|mean weight − Σ_y e^{{tQ}}_{{y,x}}| ≤ {z}·stderr"),
        )
        .diagnostic(),
    );
    report.table = Table {
        columns: ["n", "t", "paths", "exact", "estimate", "stderr", "exact_mass", "mean_weight", "weight_stderr"]
            .map(String::from)
            .to_vec(),
        rows: vec![vec![n as f64, t, m as f64, exact, est.mean, est.stderr, exact_mass, mass.mean, mass.stderr]],
    };
    Ok(report.finalize())
}

/// Weighted dual against primal for the continuum duality, at every scale
/// of the n-list, with exact lattice values as the bias allowance.
#[allow(clippy::too_many_arguments)]
pub fn continuum_duality(
    ctx: &Context<'_>,
    n_over: &Option<Vec<u64>>,
    k: Option<f64>,
    f: &Bump,
    g: &Bump,
    t: f64,
    m: Option<u64>,
    z: f64,
) -> Result<VerificationReport> {
    let kappa = local_time_exponents(&ctx.spec);
    let k = ctx.k(k);
    let m = ctx.paths(m);
    let mut report = VerificationReport::new("continuum_duality");
    let mut table = Table {
        columns: [
            "n",
            "lhs",
            "lhs_stderr",
            "rhs",
            "rhs_stderr",
            "gap",
            "combined_stderr",
            "lhs_exact",
            "rhs_exact",
            "bias",
        ]
        .map(String::from)
        .to_vec(),
        rows: Vec::new(),
    };
    let mut biases = Vec::new();
    for (idx, n) in ctx.n_list(n_over).into_iter().enumerate() {
        let c = ctx.chains(n, k)?;
        let vol = c.primal.h().powi(c.primal.dim() as i32);
        let fv = bump_on_sites(&c.primal, f);
        let gv = bump_on_sites(&c.primal, g);
        let f_mass: f64 = fv.iter().sum::<f64>() * vol;
        let g_mass: f64 = gv.iter().sum::<f64>() * vol;
        let from_f = DiscreteSampler::new(&fv)?;
        let from_g = DiscreteSampler::new(&gv)?;

        let seed_l = ctx.seed(2 * idx as u64);
        let seed_r = ctx.seed(2 * idx as u64 + 1);
        report.seeds.extend([seed_l, seed_r]);
        let lhs = ctx.ensemble.estimate(m, |i| {
            let mut rng = path_rng(seed_l, i);
            let x = from_f.sample(&mut rng);
            let mut w = ContinuumWeight::new(kappa.clone());
            let end = sample_path(&c.dual, x, t, &mut rng, &mut w)?;
            Ok(f_mass * w.weight() * gv[end])
        })?;
        let rhs = ctx.ensemble.estimate(m, |i| {
            let mut rng = path_rng(seed_r, i);
            let x = from_g.sample(&mut rng);
            let end = sample_path(&c.primal, x, t, &mut rng, &mut ())?;
            Ok(g_mass * fv[end])
        })?;

        let phi: Vec<f64> = (0..c.dual.num_states())
            .map(|x| {
                let zero = c.dual.zero_mask(x);
                kappa.iter().enumerate().filter(|(i, _)| zero & (1 << i) != 0).map(|(_, k)| k * c.dual.sqrt_n()).sum()
            })
            .collect();
        let dual_q = GeneratorMatrix::from_compiled(&c.dual);
        let primal_q = GeneratorMatrix::from_compiled(&c.primal);
        let dual_side = fk_potential_apply(&dual_q, &phi, &gv, t)?;
        let primal_side = expectation(&primal_q, &fv, t)?;
        let lhs_exact: f64 = fv.iter().zip(&dual_side).map(|(a, b)| a * b).sum::<f64>() * vol;
        let rhs_exact: f64 = gv.iter().zip(&primal_side).map(|(a, b)| a * b).sum::<f64>() * vol;
        let bias = (lhs_exact - rhs_exact).abs();
        biases.push(bias);

        let gap = (lhs.mean - rhs.mean).abs();
        let se = lhs.stderr.hypot(rhs.stderr);
        report.quantity(Quantity::new(format!("lhs n={n}"), lhs.mean, lhs.stderr, "monte_carlo"));
        report.quantity(Quantity::new(format!("rhs n={n}"), rhs.mean, rhs.stderr, "monte_carlo"));
        report.quantity(Quantity::exact(format!("lhs_exact n={n}"), lhs_exact));
        report.quantity(Quantity::exact(format!("rhs_exact n={n}"), rhs_exact));
        report.check(Check::at_most(
            format!("gap n={n}"),
            gap,
            z * se + bias,
            format!("|lhs − rhs| ≤ {z}·combined stderr + b(n), b(n) = exact lattice gap"),
        ));
        table
            .rows
            .push(vec![n as f64, lhs.mean, lhs.stderr, rhs.mean, rhs.stderr, gap, se, lhs_exact, rhs_exact, bias]);
    }
    if biases.len() > 1 {
        let shrinking = biases.windows(2).all(|w| w[1] < w[0]);
        report.check(Check::flag("gap_shrinks", shrinking, "exact lattice gap strictly decreasing along the n-list"));
    }
    report.table = table;
    Ok(report.finalize())
}
