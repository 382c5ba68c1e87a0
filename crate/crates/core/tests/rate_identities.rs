use num_rational::Ratio;
use rbm_core::lattice::{RateContext, RateTable, Side};
use rbm_core::num::RateScalar;

type Q = Ratio<i128>;

fn q(num: i128, den: i128) -> Q {
    Ratio::new(num, den)
}

struct Model {
    b: Vec<Q>,
    a: Vec<Q>,
    r: Vec<Q>,
}

fn skew() -> Model {
    Model {
        b: vec![q(-1, 1), q(-1, 1)],
        a: vec![q(1, 1), q(0, 1), q(0, 1), q(1, 1)],
        r: vec![q(1, 1), q(0, 1), q(0, 1), q(1, 1)],
    }
}

fn general() -> Model {
    Model {
        b: vec![q(-1, 1), q(-1, 1)],
        a: vec![q(1, 1), q(1, 5), q(1, 5), q(1, 1)],
        r: vec![q(1, 1), q(1, 2), q(-3, 10), q(1, 1)],
    }
}

fn context(m: &Model, b: Vec<Q>, n: u64) -> RateContext<Q> {
    let root = (1..=n as i128).find(|k| k * k == n as i128).expect("perfect square");
    RateContext::new(b, m.a.clone(), m.r.clone(), n, q(root, 1), q(1, 1)).unwrap()
}

fn first(t: &RateTable<Q>, d: usize) -> Vec<Q> {
    let mut out = vec![q(0, 1); d];
    for (dir, rate) in t.jumps() {
        for k in 0..d {
            out[k] += *rate * q(dir[k] as i128, 1);
        }
    }
    out
}

fn second(t: &RateTable<Q>, d: usize) -> Vec<Q> {
    let mut out = vec![q(0, 1); d * d];
    for (dir, rate) in t.jumps() {
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] += *rate * q((dir[i] * dir[j]) as i128, 1);
            }
        }
    }
    out
}

const SCALES: [u64; 3] = [4, 16, 100];

#[test]
fn interior_mean_is_the_drift() {
    for m in [skew(), general()] {
        for n in SCALES {
            let ctx = context(&m, m.b.clone(), n);
            let root = q((n as f64).sqrt() as i128, 1);
            let mean = first(&ctx.interior(), 2);
            // h·Σ rate·dir = b, i.e. Σ rate·dir = √n·b in lattice units
            let want: Vec<Q> = m.b.iter().map(|bi| *bi * root).collect();
            assert_eq!(mean, want, "n = {n}");
        }
    }
}

#[test]
fn drift_free_covariance_is_a() {
    for m in [skew(), general()] {
        for n in SCALES {
            let ctx = context(&m, vec![q(0, 1); 2], n);
            let cov: Vec<Q> = second(&ctx.interior(), 2).into_iter().map(|v| v / q(n as i128, 1)).collect();
            assert_eq!(cov, m.a, "n = {n}");
            assert_eq!(first(&ctx.interior(), 2), vec![q(0, 1); 2]);
        }
    }
}

#[test]
fn drift_shifts_only_the_diagonal_second_moment() {
    let m = general();
    let n = 16;
    let ctx = context(&m, m.b.clone(), n);
    let cov = second(&ctx.interior(), 2);
    // the extra -√n·b_i on the down rate adds |b_i|·√n to entry (i, i)
    assert_eq!(cov[0], q(16, 1) + q(4, 1));
    assert_eq!(cov[1], q(16, 5));
}

#[test]
fn boundary_mean_is_the_reflection_column_sum() {
    for m in [skew(), general()] {
        for n in SCALES {
            let ctx = context(&m, m.b.clone(), n);
            for mask in 1u32..4 {
                let table = ctx.boundary(mask, Side::Primal).unwrap();
                assert!(table.jumps().iter().all(|(_, r)| *r >= q(0, 1)));
                let mean = first(&table, 2);
                // √n·Σ_{ℓ∈I} r̄_ℓ in continuum units
                let want: Vec<Q> = (0..2)
                    .map(|k| {
                        (0..2)
                            .filter(|l| mask & (1 << l) != 0)
                            .fold(q(0, 1), |acc, l| acc + q(n as i128, 1) * m.r[k * 2 + l])
                    })
                    .collect();
                assert_eq!(mean, want, "n = {n}, mask = {mask:b}");
            }
        }
    }
}

#[test]
fn dual_raising_rates_sum_to_the_reflection_diagonal() {
    for m in [skew(), general()] {
        for n in SCALES {
            let ctx = context(&m, m.b.clone(), n);
            for i in 0..2 {
                let total = ctx.dual_raising(i).iter().fold(q(0, 1), |acc, (_, r)| acc + *r);
                assert_eq!(total, q(n as i128, 1) * m.r[i * 3]);
            }
        }
    }
}

#[test]
fn published_face_and_corner_rates() {
    let m = general();
    let ctx = context(&m, m.b.clone(), 100);
    let face = ctx.face(0);
    let e = |k: usize, s: i8| rbm_core::lattice::rates::unit(k, s);
    assert_eq!(face.rate(&rbm_core::lattice::rates::pair(0, 1, 1, 1)), q(20, 1));
    assert_eq!(face.rate(&e(0, 1)), q(80, 1));
    assert_eq!(face.rate(&e(1, 1)), q(100, 1));
    assert_eq!(face.rate(&e(1, -1)), q(150, 1));
    assert_eq!(first(&face, 2), vec![q(100, 1), q(-30, 1)]);

    let raising = ctx.dual_raising(0);
    let z1 = raising.iter().find(|(d, _)| *d == e(0, 1)).unwrap().1;
    assert_eq!(z1, q(250, 3));
    let dual = ctx.dual_face(0);
    assert_eq!(dual.total(), face.total());
    assert_eq!(dual.total(), q(350, 1));

    let corner = ctx.boundary(0b11, Side::Primal).unwrap();
    assert_eq!(first(&corner, 2), vec![q(150, 1), q(70, 1)]);
}

#[test]
fn rational_and_float_tables_agree() {
    let m = general();
    let exact = context(&m, m.b.clone(), 16);
    let float =
        RateContext::new(vec![-1.0, -1.0], vec![1.0, 0.2, 0.2, 1.0], vec![1.0, 0.5, -0.3, 1.0], 16, 4.0, 1.0).unwrap();
    for mask in 0u32..4 {
        for side in [Side::Primal, Side::Dual] {
            let a = exact.boundary(mask, side).unwrap();
            let b = float.boundary(mask, side).unwrap();
            assert_eq!(a.len(), b.len());
            for (dir, r) in a.jumps() {
                assert!((r.to_f64() - b.rate(dir)).abs() <= 1e-12 * r.to_f64().abs().max(1.0));
            }
        }
    }
}
