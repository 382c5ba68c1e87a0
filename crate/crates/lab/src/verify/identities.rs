use num_rational::Ratio;
use rbm_core::lattice::{RateContext, Side};

use super::Context;
use crate::error::{LabError, Result};
use crate::report::{Check, Quantity, Table, VerificationReport};

type Q = Ratio<i128>;

/// The exact rational value of a decimal as written in its shortest
/// round-trip form, so `0.2` becomes `1/5`.
pub fn decimal_ratio(v: f64) -> Option<Q> {
    if !v.is_finite() {
        return None;
    }
    let text = format!("{v}");
    let (neg, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.as_str()),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if frac.len() > 30 {
        return None;
    }
    let mut num: i128 = 0;
    for c in int.chars().chain(frac.chars()) {
        num = num.checked_mul(10)?.checked_add(c.to_digit(10)? as i128)?;
    }
    let den = 10i128.checked_pow(frac.len() as u32)?;
    Some(Ratio::new(if neg { -num } else { num }, den))
}

fn exact_sqrt(n: u64) -> Option<i128> {
    let r = (n as f64).sqrt().round() as i128;
    (r - 1..=r + 1).find(|k| *k >= 0 && k * k == n as i128)
}

fn ratios(field: &str, v: &[f64]) -> Result<Vec<Q>> {
    v.iter()
        .map(|x| decimal_ratio(*x).ok_or_else(|| LabError::config(field, format!("{x} has no exact decimal form"))))
        .collect()
}

/// Checks the interior mean and covariance, the boundary means and the dual
/// raising totals in exact rational arithmetic.
pub fn rate_identities(ctx: &Context<'_>, n_over: &Option<Vec<u64>>) -> Result<VerificationReport> {
    let name = "rate_identities";
    let spec = &ctx.cfg.spec;
    let d = spec.d;
    let b = ratios("spec.b", &spec.b)?;
    let a = ratios("spec.A", &spec.a.concat())?;
    let r = ratios("spec.R", &spec.r.concat())?;
    let c0 = decimal_ratio(ctx.cfg.lattice.c0).ok_or_else(|| LabError::config("lattice.c0", "not a decimal"))?;
    let zero = Q::from_integer(0);

    let mut report = VerificationReport::new(name);
    let mut table = Table {
        columns: ["n", "mask", "interior_mean", "covariance", "boundary_mean", "nonnegative", "dual_raising"]
            .map(String::from)
            .to_vec(),
        rows: Vec::new(),
    };
    let mut tested = 0;
    for n in ctx.n_list(n_over) {
        let Some(root) = exact_sqrt(n) else {
            report.quantity(Quantity::new(format!("n={n} skipped (not a perfect square)"), n as f64, 0.0, "derived"));
            continue;
        };
        tested += 1;
        let root = Q::from_integer(root);
        let nq = Q::from_integer(n as i128);
        let with_drift = RateContext::new(b.clone(), a.clone(), r.clone(), n, root, c0)?;
        let drift_free = RateContext::new(vec![zero; d], a.clone(), r.clone(), n, root, c0)?;

        let mean = with_drift.interior().first_moment(d);
        let mean_ok = mean.iter().zip(&b).all(|(m, bi)| *m == *bi * root);
        report.check(Check::flag(format!("interior_mean n={n}"), mean_ok, "Σ rate·e = √n·b exactly"));

        let second = drift_free.interior().second_moment(d);
        let cov_ok = second.iter().zip(&a).all(|(s, aij)| *s / nq == *aij);
        let first_ok = drift_free.interior().first_moment(d).iter().all(|m| *m == zero);
        report.check(Check::flag(format!("covariance n={n}"), cov_ok && first_ok, "Σ rate·e·eᵀ / n = A exactly"));

        let mut raising_ok = true;
        for i in 0..d {
            let total = with_drift.dual_raising(i).iter().fold(zero, |acc, (_, q)| acc + *q);
            raising_ok &= total == nq * r[i * d + i];
        }
        report.check(Check::flag(format!("dual_raising n={n}"), raising_ok, "raising rates sum to n·r_ii"));

        for mask in 1u32..(1 << d) {
            let table_i = with_drift.boundary(mask, Side::Primal)?;
            let nonneg = table_i.jumps().iter().all(|(_, q)| *q >= zero);
            let got = table_i.first_moment(d);
            let mean_ok = (0..d).all(|k| {
                let want = (0..d).filter(|l| mask & (1 << l) != 0).fold(zero, |acc, l| acc + nq * r[k * d + l]);
                got[k] == want
            });
            report.check(Check::flag(
                format!("boundary_mean n={n} I={mask:b}"),
                mean_ok && nonneg,
                "Σ rate·e = n·Σ_{ℓ∈I} r_ℓ exactly with nonnegative rates",
            ));
            table.rows.push(vec![
                n as f64,
                mask as f64,
                flag(mean == b.iter().map(|bi| *bi * root).collect::<Vec<_>>()),
                flag(cov_ok && first_ok),
                flag(mean_ok),
                flag(nonneg),
                flag(raising_ok),
            ]);
        }
    }
    if tested == 0 {
        return Ok(VerificationReport::skipped(name, "no scale in the n-list is a perfect square"));
    }
    report.table = table;
    Ok(report.finalize())
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}
