use std::collections::BTreeMap;

use rbm_core::exact::{
    expectation, fk_potential_apply, reversal_generator, stationary_solve, transient, GeneratorMatrix,
};
use rbm_core::lattice::CompiledChain;
use rbm_core::model::{dual_reflection, local_time_exponents, reversed_drift_candidates, InvariantDensity};
use rbm_core::simulate::{
    path_rng, sample_path, stationary_histogram, ContinuumWeight, DiscreteSampler, HistogramGridSpec, PathObserver,
    Snapshots,
};

use super::{bump_on_sites, chains_for, density_weights, site_volume, Chains, Context};
use crate::config::{DensitySource, TestConfig};
use crate::ensemble::{column, reduce};
use crate::error::Result;
use crate::report::{Check, Quantity, Table, VerificationReport};

/// Relative floor applied to estimated densities before forming ratios.
pub const DENSITY_FLOOR: f64 = 1e-12;
/// Largest admissible share of weight mass from floored cells.
pub const FLOORED_MASS_LIMIT: f64 = 1e-3;

/// The invariant density at every site, with a flag for floored values.
struct SiteDensity {
    values: Vec<f64>,
    floored: Vec<bool>,
}

impl SiteDensity {
    fn exact(chain: &CompiledChain, p: &InvariantDensity) -> Self {
        let values: Vec<f64> = (0..chain.num_states()).map(|x| p.density(&chain.coords(x))).collect();
        let floored = vec![false; values.len()];
        Self { values, floored }
    }

    fn floored(chain: &CompiledChain, p: &InvariantDensity) -> Self {
        let raw: Vec<f64> = (0..chain.num_states()).map(|x| p.density(&chain.coords(x))).collect();
        let floor = DENSITY_FLOOR * raw.iter().copied().fold(0.0, f64::max);
        let floored = raw.iter().map(|v| *v < floor).collect();
        Self { values: raw.iter().map(|v| v.max(floor)).collect(), floored }
    }
}

/// Stationary primal expectations of products of bumps at reversed times
/// against the reweighted dual chain started from `p`.
pub fn time_reversal_fdd(ctx: &Context<'_>, test: &TestConfig) -> Result<VerificationReport> {
    let TestConfig::TimeReversalFdd { n, k, horizon, times, bumps, m, density, histogram_t_run, bias_allowance, z } =
        test
    else {
        unreachable!("dispatched by name")
    };
    let name = "time_reversal_fdd";
    let n = ctx.n(*n);
    let t = ctx.horizon(*horizon);
    let m = ctx.paths(*m);
    let c = ctx.chains(n, ctx.k(*k))?;
    let mut report = VerificationReport::new(name);

    let p = match density {
        DensitySource::Exact => match ctx.density()? {
            Some(p) => SiteDensity::exact(&c.primal, &p),
            None => {
                return Ok(VerificationReport::skipped(
                    name,
                    "exact density requested but skew-symmetry fails; select density = \"histogram\"",
                ))
            }
        },
        DensitySource::Histogram => {
            let seed = ctx.seed(100);
            report.seeds.push(seed);
            let (hist, diag) = stationary_histogram(
                &c.primal,
                0,
                0.2 * histogram_t_run,
                *histogram_t_run,
                HistogramGridSpec::default(),
                &mut path_rng(seed, 0),
            )?;
            report.quantity(Quantity::new("histogram_empty_cells", diag.empty_cells as f64, 0.0, "monte_carlo"));
            report.quantity(Quantity::new("histogram_clamped_mass", diag.clamped_mass, 0.0, "monte_carlo"));
            SiteDensity::floored(&c.primal, &InvariantDensity::Histogram(hist))
        }
    };
    let start_weights: Vec<f64> = (0..c.primal.num_states()).map(|x| p.values[x] * site_volume(&c.primal, x)).collect();
    let start = DiscreteSampler::new(&start_weights)?;
    let fs: Vec<Vec<f64>> = bumps.iter().map(|b| bump_on_sites(&c.primal, b)).collect();
    let kappa = local_time_exponents(&ctx.spec);
    let burn = ctx.cfg.run.burn_in;

    // Primal snapshots at burn + T − t_j, in increasing time.
    let primal_times: Vec<f64> = times.iter().rev().map(|tj| burn + (t - tj)).collect();
    let seed_p = ctx.seed(0);
    let seed_d = ctx.seed(1);
    report.seeds.extend([seed_p, seed_d]);
    let lhs = ctx.ensemble.estimate(m, |i| {
        let mut rng = path_rng(seed_p, i);
        let x0 = start.sample(&mut rng);
        let mut snaps = Snapshots::new(&primal_times);
        sample_path(&c.primal, x0, burn + t, &mut rng, &mut snaps)?;
        // snapshot j of the reversed list is time T − t_{ℓ−j}
        Ok(snaps.states().iter().rev().zip(&fs).map(|(x, f)| f[*x]).product())
    })?;
    let rows = ctx.ensemble.map(m, |i| {
        let mut rng = path_rng(seed_d, i);
        let x0 = start.sample(&mut rng);
        let mut obs = (Snapshots::new(times), ContinuumWeight::new(kappa.clone()));
        let end = sample_path(&c.dual, x0, t, &mut rng, &mut obs)?;
        let norm = obs.1.weight() * p.values[end] / p.values[x0];
        let value = norm * obs.0.states().iter().zip(&fs).map(|(x, f)| f[*x]).product::<f64>();
        let floored = if p.floored[end] || p.floored[x0] { norm.abs() } else { 0.0 };
        Ok(vec![value, norm, floored])
    })?;
    let rhs = reduce(&column(&rows, 0))?;
    let norm = reduce(&column(&rows, 1))?;
    let norm_mass: f64 = column(&rows, 1).iter().map(|v| v.abs()).sum();
    let floored_share = if norm_mass > 0.0 { column(&rows, 2).iter().sum::<f64>() / norm_mass } else { 0.0 };

    let (lhs_exact, rhs_exact, norm_exact) = exact_companions(&c, &p, &fs, times, t, burn, &kappa)?;

    let se = lhs.stderr.hypot(rhs.stderr);
    let gap = (lhs.mean - rhs.mean).abs();
    report.quantity(Quantity::new("primal_reversed", lhs.mean, lhs.stderr, "monte_carlo"));
    report.quantity(Quantity::new("weighted_dual", rhs.mean, rhs.stderr, "monte_carlo"));
    report.quantity(Quantity::new("normalization", norm.mean, norm.stderr, "monte_carlo"));
    report.quantity(Quantity::exact("primal_reversed_lattice_exact", lhs_exact));
    report.quantity(Quantity::exact("weighted_dual_lattice_exact", rhs_exact));
    report.quantity(Quantity::exact("normalization_lattice_exact", norm_exact));
    report.quantity(Quantity::new("floored_weight_share", floored_share, 0.0, "monte_carlo"));
    report.check(Check::at_most(
        "agreement",
        gap,
        z * se + bias_allowance * lhs.mean.abs(),
        format!("|primal − dual| ≤ {z}·combined stderr + {bias_allowance}·|primal|"),
    ));
    report.check(Check::at_most(
        "normalization",
        (norm.mean - 1.0).abs(),
        z * norm.stderr,
        format!("|E[weight·p ratio] − 1| ≤ {z}·stderr"),
    ));
    report.check(
        Check::at_most(
            "lattice_exact_agreement",
            (lhs_exact - rhs_exact).abs(),
            bias_allowance * lhs_exact.abs(),
            "exact lattice values of both sides",
        )
        .diagnostic(),
    );
    report.table = Table {
        columns: [
            "n",
            "primal",
            "primal_stderr",
            "dual",
            "dual_stderr",
            "normalization",
            "normalization_stderr",
            "primal_exact",
            "dual_exact",
            "normalization_exact",
        ]
        .map(String::from)
        .to_vec(),
        rows: vec![vec![
            n as f64,
            lhs.mean,
            lhs.stderr,
            rhs.mean,
            rhs.stderr,
            norm.mean,
            norm.stderr,
            lhs_exact,
            rhs_exact,
            norm_exact,
        ]],
    };
    let report = report.finalize();
    if floored_share > FLOORED_MASS_LIMIT {
        return Ok(report.inconclusive(format!(
            "{floored_share:.3e} of the weight mass comes from floored density cells (limit {FLOORED_MASS_LIMIT})"
        )));
    }
    Ok(report)
}

/// Exact lattice values of the primal side, the weighted dual side and the
/// normalisation, by backward recursion through the observation times.
fn exact_companions(
    c: &Chains,
    p: &SiteDensity,
    fs: &[Vec<f64>],
    times: &[f64],
    t: f64,
    burn: f64,
    kappa: &[f64],
) -> Result<(f64, f64, f64)> {
    let states = c.primal.num_states();
    let z: f64 = (0..states).map(|x| p.values[x] * site_volume(&c.primal, x)).sum();
    let mu0: Vec<f64> = (0..states).map(|x| p.values[x] * site_volume(&c.primal, x) / z).collect();

    let primal_q = GeneratorMatrix::from_compiled(&c.primal);
    let mu = transient(&primal_q, &mu0, burn)?;
    // forward times s_j = T − t_j decrease in j
    let mut u = fs[0].clone();
    for j in 1..times.len() {
        u = expectation(&primal_q, &u, times[j] - times[j - 1])?;
        u.iter_mut().zip(&fs[j]).for_each(|(a, f)| *a *= f);
    }
    u = expectation(&primal_q, &u, t - times[times.len() - 1])?;
    let lhs: f64 = mu.iter().zip(&u).map(|(a, b)| a * b).sum();

    let dual_q = GeneratorMatrix::from_compiled(&c.dual);
    let phi: Vec<f64> = (0..states)
        .map(|x| {
            let zero = c.dual.zero_mask(x);
            kappa.iter().enumerate().filter(|(i, _)| zero & (1 << i) != 0).map(|(_, k)| k * c.dual.sqrt_n()).sum()
        })
        .collect();
    let dual_side = |with_f: bool| -> Result<f64> {
        let mut u = p.values.clone();
        let mut next = t;
        for j in (0..times.len()).rev() {
            u = fk_potential_apply(&dual_q, &phi, &u, next - times[j])?;
            if with_f {
                u.iter_mut().zip(&fs[j]).for_each(|(a, f)| *a *= f);
            }
            next = times[j];
        }
        Ok((0..states).map(|x| mu0[x] * u[x] / p.values[x]).sum())
    };
    Ok((lhs, dual_side(true)?, dual_side(false)?))
}

/// Counts the origins of jumps into one site.
struct JumpsInto {
    target: usize,
    limit: u64,
    total: u64,
    origins: BTreeMap<usize, u64>,
}

impl PathObserver for JumpsInto {
    fn jump(&mut self, _chain: &CompiledChain, from: usize, _slot: usize, to: usize, _time: f64) {
        if to == self.target && self.total < self.limit {
            self.total += 1;
            *self.origins.entry(from).or_insert(0) += 1;
        }
    }
}

/// Largest gap between the empirical distribution functions of two samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup = 0.0f64;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    sup
}

/// Reversed stationary paths against fresh chains for both candidate drifts
/// with the dual reflection matrix, plus a lattice reversal oracle.
pub fn reversed_rbm(ctx: &Context<'_>, test: &TestConfig) -> Result<VerificationReport> {
    let TestConfig::ReversedRbm { n, k, horizon, m, ks_tol, oracle_n, oracle_k, oracle_jumps, tv_tol } = test else {
        unreachable!("dispatched by name")
    };
    let name = "reversed_rbm";
    let Some(p) = ctx.density()? else {
        return Ok(VerificationReport::skipped(name, "needs a skew-symmetric model"));
    };
    let n = ctx.n(*n);
    let k = ctx.k(*k);
    let t = ctx.horizon(*horizon);
    let m = ctx.paths(*m);
    let burn = ctx.cfg.run.burn_in;
    let d = ctx.spec.dim();
    let c = ctx.chains(n, k)?;
    let start = DiscreteSampler::new(&density_weights(&c.primal, |x| p.density(x)))?;

    let mut report = VerificationReport::new(name);
    let seed_fwd = ctx.seed(0);
    report.seeds.push(seed_fwd);
    // Y(s) = X(T − s): states at reversed times 0, T/2, T
    let reversed = ctx.ensemble.map(m, |i| {
        let mut rng = path_rng(seed_fwd, i);
        let x0 = start.sample(&mut rng);
        let mut snaps = Snapshots::new(&[burn, burn + 0.5 * t, burn + t]);
        sample_path(&c.primal, x0, burn + t, &mut rng, &mut snaps)?;
        let s = snaps.states();
        Ok([s[2], s[1], s[0]])
    })?;

    let (plus, minus) = reversed_drift_candidates(&ctx.spec)?;
    let rstar = dual_reflection(ctx.spec.reflection());
    let mut distances = [1.0f64; 2];
    let mut notes = Vec::new();
    for (ci, drift) in [&plus, &minus].into_iter().enumerate() {
        let label = if ci == 0 { "plus" } else { "minus" };
        let candidate = ctx
            .spec
            .with_drift_and_reflection(drift.clone(), rstar.clone())
            .map_err(crate::error::LabError::from)
            .and_then(|s| chains_for(&s, n, k, ctx.constants));
        let cand = match candidate {
            Ok(cand) => cand,
            Err(e) => {
                notes.push(format!("{label} candidate cannot be built: {e}"));
                continue;
            }
        };
        let seed = ctx.seed(1 + ci as u64);
        report.seeds.push(seed);
        let fresh = ctx.ensemble.map(m, |i| {
            let y0 = reversed[i as usize][0];
            let mut snaps = Snapshots::new(&[0.5 * t, t]);
            sample_path(&cand.primal, y0, t, &mut path_rng(seed, i), &mut snaps)?;
            Ok([y0, snaps.states()[0], snaps.states()[1]])
        })?;
        let mut worst = 0.0f64;
        for coord in 0..d {
            let x = |chain: &CompiledChain, s: usize| chain.coords(s)[coord];
            let stats = |paths: &[[usize; 3]], chain: &CompiledChain| -> [Vec<f64>; 4] {
                [
                    paths.iter().map(|p| x(chain, p[1]) - x(chain, p[0])).collect(),
                    paths.iter().map(|p| x(chain, p[2]) - x(chain, p[1])).collect(),
                    paths.iter().map(|p| x(chain, p[1])).collect(),
                    paths.iter().map(|p| x(chain, p[2])).collect(),
                ]
            };
            let a = stats(&reversed, &c.primal);
            let b = stats(&fresh, &cand.primal);
            for (sa, sb) in a.iter().zip(&b) {
                worst = worst.max(ks_two_sample(sa, sb));
            }
        }
        distances[ci] = worst;
    }
    for (ci, drift) in [&plus, &minus].into_iter().enumerate() {
        let label = if ci == 0 { "plus" } else { "minus" };
        for (i, v) in drift.iter().enumerate() {
            report.quantity(Quantity::new(format!("{label}_drift_{i}"), *v, 0.0, "closed_form"));
        }
        report.quantity(Quantity::new(format!("{label}_distance"), distances[ci], 0.0, "monte_carlo"));
    }
    let matches: Vec<usize> = (0..2).filter(|&ci| distances[ci] <= *ks_tol).collect();
    let matched = if matches.len() == 1 { Some(matches[0]) } else { None };
    report.quantity(Quantity::new(
        "matched_sign",
        match matched {
            Some(0) => 1.0,
            Some(_) => -1.0,
            None => 0.0,
        },
        0.0,
        "monte_carlo",
    ));
    report.check(Check::flag(
        "exactly_one_match",
        matched.is_some(),
        format!("exactly one candidate within sup-CDF distance {ks_tol}"),
    ));

    // Oracle on a small lattice.
    let oc = ctx.chains(*oracle_n, *oracle_k)?;
    let q = GeneratorMatrix::from_compiled(&oc.primal);
    let pi = stationary_solve(&q)?;
    let qstar = reversal_generator(&q, &pi.probs)?;
    let bulk_drift = bulk_drift(&oc.primal, &qstar, &pi.probs);
    let dist = |cand: &[f64]| cand.iter().zip(&bulk_drift).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let oracle_pick = if dist(&plus) <= dist(&minus) { 0 } else { 1 };
    for (i, v) in bulk_drift.iter().enumerate() {
        report.quantity(Quantity::exact(format!("oracle_bulk_drift_{i}"), *v));
    }
    report.quantity(Quantity::exact("oracle_sign", if oracle_pick == 0 { 1.0 } else { -1.0 }));
    report.check(Check::flag(
        "oracle_agreement",
        matched == Some(oracle_pick),
        "matched candidate is the one closer to the π-weighted bulk drift of q*",
    ));

    let tv_seed = ctx.seed(3);
    report.seeds.push(tv_seed);
    let (target, tv, jumps) = reversal_frequencies(&oc.primal, &qstar, &pi.probs, *oracle_jumps, tv_seed)?;
    report.quantity(Quantity::exact("oracle_site", target as f64));
    report.quantity(Quantity::new("oracle_jumps", jumps as f64, 0.0, "monte_carlo"));
    report.quantity(Quantity::new("oracle_tv", tv, 0.0, "monte_carlo"));
    report.check(Check::at_most(
        "oracle_tv",
        tv,
        *tv_tol,
        format!("TV between reversed-jump frequencies and q*(x*,·) ≤ {tv_tol}"),
    ));
    if !notes.is_empty() {
        report.reason = notes.join("; ");
    }
    report.table = Table {
        columns: ["candidate", "distance"].map(String::from).to_vec(),
        rows: vec![vec![1.0, distances[0]], vec![-1.0, distances[1]]],
    };
    let mut report = report.finalize();
    if report.status == crate::report::Status::Pass || matched.is_some() {
        let sign = if matched == Some(0) { "plus" } else { "minus" };
        let msg =
            format!("matching candidate: {sign} (−b {} 2·A^{{1/2}}(RD)⁻¹b)", if sign == "plus" { "+" } else { "−" });
        report.reason = if report.reason.is_empty() { msg } else { format!("{msg}; {}", report.reason) };
    }
    Ok(report)
}

/// π-weighted mean drift of `qstar` over sites at least two steps from every
/// face, in continuum units.
fn bulk_drift(chain: &CompiledChain, qstar: &GeneratorMatrix, pi: &[f64]) -> Vec<f64> {
    let d = chain.dim();
    let m = chain.lattice().steps() as i64;
    let mut drift = vec![0.0; d];
    let mut mass = 0.0;
    for x in 0..chain.num_states() {
        let sx = chain.site(x);
        if !sx[..d].iter().all(|&v| v >= 2 && v <= m - 2) {
            continue;
        }
        mass += pi[x];
        for (y, rate) in qstar.row(x) {
            let sy = chain.site(y);
            for i in 0..d {
                drift[i] += pi[x] * rate * (sy[i] - sx[i]) as f64 * chain.h();
            }
        }
    }
    drift.iter().map(|v| v / mass).collect()
}

/// Runs the stationary primal chain until `jumps` jumps into the boundary
/// site with the largest reversed flux have been seen, and returns that site
/// with the total-variation distance between the origins of those jumps and
/// `q*(x*, ·)` normalised.
fn reversal_frequencies(
    chain: &CompiledChain,
    qstar: &GeneratorMatrix,
    pi: &[f64],
    jumps: u64,
    seed: u64,
) -> Result<(usize, f64, u64)> {
    let flux = |x: usize| pi[x] * -qstar.diagonal()[x];
    let target = (0..chain.num_states())
        .filter(|&x| chain.zero_mask(x) != 0)
        .max_by(|&a, &b| flux(a).total_cmp(&flux(b)))
        .expect("the lattice has boundary sites");
    let mut obs = JumpsInto { target, limit: jumps, total: 0, origins: BTreeMap::new() };
    let mut rng = path_rng(seed, 0);
    let mut state = DiscreteSampler::new(pi)?.sample(&mut rng);
    let chunk = 1.1 * jumps as f64 / flux(target);
    let mut stream = 1;
    while obs.total < jumps {
        state = sample_path(chain, state, chunk, &mut path_rng(seed, stream), &mut obs)?;
        stream += 1;
    }
    let total_rate = -qstar.diagonal()[target];
    let mut tv = 0.0;
    for (y, rate) in qstar.row(target) {
        let empirical = obs.origins.get(&y).copied().unwrap_or(0) as f64 / obs.total as f64;
        tv += (empirical - rate / total_rate).abs();
    }
    for (y, count) in &obs.origins {
        if qstar.get(target, *y) == 0.0 {
            tv += *count as f64 / obs.total as f64;
        }
    }
    Ok((target, 0.5 * tv, obs.total))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_identical_and_disjoint_samples() {
        let a = [0.0, 1.0, 1.0, 2.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 0.0], &[1.0, 1.0]), 1.0);
        assert!((ks_two_sample(&[0.0, 1.0], &[1.0, 1.0]) - 0.5).abs() < 1e-15);
    }
}
