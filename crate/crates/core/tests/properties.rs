#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use rand_core::RngCore;
use rbm_core::exact::{
    dense_expm, duality_check_exact, expectation, fk_semigroup_apply, reversal_generator, stationary_solve, transient,
    GeneratorMatrix,
};
use rbm_core::lattice::{build_chain, build_dual_chain, potential, BoundaryConstants, CompiledChain, LatticeParams};
use rbm_core::model::{dual_reflection, nonempty_subsets, sym_sqrt, validate_assumption, RbmSpec};
use rbm_core::simulate::{path_rng, WeightTable};
use rbm_core::Matrix;

/// Specs satisfying the assumption by construction: A diagonally dominant,
/// R with small off-diagonals, and b = −R·u for some u > 0.
fn valid_spec(d: usize) -> impl Strategy<Value = RbmSpec> {
    let off = d * (d - 1) / 2;
    (
        prop::collection::vec(1.0f64..2.0, d),
        prop::collection::vec(-0.9f64..0.9, off),
        prop::collection::vec(-0.9f64..0.9, d * d),
        prop::collection::vec(0.3f64..2.0, d),
    )
        .prop_map(move |(diag, a_off, r_off, u)| {
            let mut a = Matrix::zeros(d, d);
            let mut k = 0;
            for i in 0..d {
                a[(i, i)] = diag[i];
            }
            let scale = 1.0 / (d as f64);
            for i in 0..d {
                for j in (i + 1)..d {
                    let v = a_off[k] * scale * diag[i].min(diag[j]);
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                    k += 1;
                }
            }
            let mut r = Matrix::identity(d);
            for i in 0..d {
                for j in 0..d {
                    if i != j {
                        r[(i, j)] = r_off[i * d + j] * scale;
                    }
                }
            }
            let b: Vec<f64> = r.matvec(&u).iter().map(|v| -v).collect();
            RbmSpec::new(b, a, r).unwrap()
        })
}

fn any_spec() -> impl Strategy<Value = RbmSpec> {
    prop_oneof![valid_spec(1), valid_spec(2), valid_spec(3)]
}

fn small_lattice(spec: &RbmSpec, n: u64, steps: u32) -> (CompiledChain, CompiledChain) {
    let h = 1.0 / (n as f64).sqrt();
    let params = LatticeParams::new(n, steps as f64 * h).unwrap();
    let chain = build_chain(spec, params, BoundaryConstants::default()).unwrap();
    let dual = build_dual_chain(&chain);
    (CompiledChain::new(&chain).unwrap(), CompiledChain::new(&dual).unwrap())
}

fn random_vec(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = path_rng(seed, 0);
    (0..len).map(|_| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dual_reflection_is_an_involution(d in 1usize..6, vals in prop::collection::vec(-3.0f64..3.0, 36)) {
        let r = Matrix::from_row_major(d, d, vals[..d * d].to_vec()).unwrap();
        let star = dual_reflection(&r);
        prop_assert_eq!(dual_reflection(&star), r.clone());
        for i in 0..d {
            prop_assert_eq!(star[(i, i)], r[(i, i)]);
            for j in 0..d {
                if i != j {
                    prop_assert_eq!(star[(i, j)], -r[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn principal_row_sums_are_positive(spec in any_spec()) {
        prop_assert!(validate_assumption(&spec).passed());
        let d = spec.dim();
        let r = spec.reflection();
        for set in nonempty_subsets(d) {
            for &i in &set {
                let plain: f64 = set.iter().map(|&j| r[(i, j)]).sum();
                let star: f64 = set.iter().map(|&j| if i == j { r[(i, j)] } else { -r[(i, j)] }).sum();
                prop_assert!(plain > 0.0 && star > 0.0);
            }
        }
    }

    #[test]
    fn square_root_reproduces_a(spec in any_spec()) {
        let a = spec.covariance();
        let m = sym_sqrt(a).unwrap();
        prop_assert!(m.is_symmetric(1e-12));
        let err = m.matmul(&m).sub(a).norm_frobenius() / a.norm_frobenius();
        prop_assert!(err <= 1e-10, "relative error {}", err);
    }

    #[test]
    fn rates_are_nonnegative_and_transposed_in_the_bulk(spec in valid_spec(2), n in prop::sample::select(vec![4u64, 9, 16])) {
        let (p, dual) = small_lattice(&spec, n, 6);
        let v = potential(&p);
        for x in 0..p.num_states() {
            for s in p.slots(x) {
                prop_assert!(p.rate(s) > 0.0);
            }
            for s in dual.slots(x) {
                prop_assert!(dual.rate(s) > 0.0);
            }
            let site = p.site(x);
            let deep = site[..2].iter().all(|&k| (2..=4).contains(&k));
            if deep {
                prop_assert!(v[x].abs() <= 1e-9 * p.total_rate(x), "V = {} at {:?}", v[x], &site[..2]);
            }
            let off_layer = !p.in_layer(x) && p.upper_mask(x) == 0;
            if off_layer {
                for s in dual.slots(x) {
                    let y = dual.target(s);
                    if !p.in_layer(y) && p.upper_mask(y) == 0 {
                        prop_assert_eq!(dual.rate(s), p.rate_between(y, x));
                    }
                }
            }
        }
    }

    #[test]
    fn tilted_dual_generator_is_the_transpose(spec in prop_oneof![valid_spec(2), valid_spec(3)]) {
        let steps = if spec.dim() == 3 { 3 } else { 5 };
        let (p, dual) = small_lattice(&spec, 4, steps);
        let table = WeightTable::new(&p, &dual).unwrap();
        let q = GeneratorMatrix::from_compiled(&p).transpose();
        for x in 0..p.num_states() {
            let diag = -dual.total_rate(x) + table.sojourn_rate(x);
            let scale = p.total_rate(x).max(1.0);
            prop_assert!((diag - q.diagonal()[x]).abs() <= 1e-10 * scale, "diag {} vs {}", diag, q.diagonal()[x]);
            for s in dual.slots(x) {
                let y = dual.target(s);
                let tilted = dual.rate(s) * table.jump_log(s).exp();
                prop_assert!((tilted - q.get(x, y)).abs() <= 1e-10 * scale);
            }
            for (y, v) in q.row(x) {
                prop_assert!(dual.rate_between(x, y) > 0.0 || v == 0.0);
            }
        }
    }

    #[test]
    fn uniformization_matches_dense(spec in valid_spec(2), t in 0.01f64..1.5, seed in any::<u64>()) {
        let (p, _) = small_lattice(&spec, 4, 6);
        let q = GeneratorMatrix::from_compiled(&p);
        prop_assert!(q.num_states() <= 200);
        let e = dense_expm(&q.to_dense(), t).unwrap();
        let f = random_vec(seed, q.num_states());
        let dense_col = e.matvec(&f);
        let dense_row = e.transpose().matvec(&f);
        let col = expectation(&q, &f, t).unwrap();
        let row = transient(&q, &f, t).unwrap();
        let fk = fk_semigroup_apply(&q, &f, t).unwrap();
        for i in 0..f.len() {
            prop_assert!((col[i] - dense_col[i]).abs() <= 1e-10);
            prop_assert!((row[i] - dense_row[i]).abs() <= 1e-10);
            prop_assert!((fk[i] - dense_row[i]).abs() <= 1e-10);
        }
    }

    #[test]
    fn duality_residual_is_tiny(spec in valid_spec(2), t in 0.0f64..2.0, seed in any::<u64>()) {
        let (p, _) = small_lattice(&spec, 4, 4);
        let q = GeneratorMatrix::from_compiled(&p);
        let f = random_vec(seed, q.num_states());
        let g = random_vec(seed ^ 0x9e37, q.num_states());
        prop_assert!(duality_check_exact(&q, &f, &g, t).unwrap() <= 1e-10);
    }

    #[test]
    fn reversal_is_an_involution(spec in valid_spec(2)) {
        let (p, _) = small_lattice(&spec, 4, 4);
        let q = GeneratorMatrix::from_compiled(&p);
        let pi = stationary_solve(&q).unwrap();
        prop_assert!((pi.mass() - 1.0).abs() <= 1e-12);
        let rev = reversal_generator(&q, &pi.probs).unwrap();
        let scale = q.max_exit_rate();
        prop_assert!(rev.row_sums().iter().all(|s| s.abs() <= 1e-12 * scale));
        prop_assert!(rev.row_action(&pi.probs).iter().all(|s| s.abs() <= 1e-11 * scale));
        let back = reversal_generator(&rev, &pi.probs).unwrap();
        for x in 0..q.num_states() {
            for (y, v) in q.row(x) {
                prop_assert!((back.get(x, y) - v).abs() <= 1e-12 * v.max(1.0));
            }
        }
    }
}

#[test]
fn decomposition_residual_has_mean_zero() {
    use rbm_core::model::spec_from_rows;
    use rbm_core::simulate::{estimate, sample_path, Observables};
    let spec =
        spec_from_rows(&[-1.0, -1.0], &[vec![1.0, 0.2], vec![0.2, 1.0]], &[vec![1.0, 0.5], vec![-0.3, 1.0]]).unwrap();
    let chain = build_chain(&spec, LatticeParams::new(16, 6.0).unwrap(), BoundaryConstants::default()).unwrap();
    let c = CompiledChain::new(&chain).unwrap();
    let x0 = c.index_of(&[2, 2]).unwrap();
    let start = c.coords(x0);
    for t in [0.25, 1.0] {
        let mut res = [Vec::new(), Vec::new()];
        for path in 0..20_000u64 {
            let mut obs = Observables::new(2);
            let end = sample_path(&c, x0, t, &mut path_rng(7, path), &mut obs).unwrap();
            assert_eq!(obs.upper_time, 0.0);
            let x = c.coords(end);
            for i in 0..2 {
                let push: f64 = (0..2).map(|l| spec.reflection()[(i, l)] * obs.local_time[l]).sum();
                res[i].push(x[i] - start[i] - spec.drift()[i] * obs.interior_clock - push);
            }
        }
        for r in &res {
            let e = estimate(r).unwrap();
            assert!(e.mean.abs() <= 4.0 * e.stderr, "t = {t}: {} ± {}", e.mean, e.stderr);
        }
    }
}
