mod common;

use std::sync::Arc;

use common::{mean_se, within};
use propchaos_core::chaos::*;
use propchaos_core::combinatorics::*;
use propchaos_core::forward::*;
use propchaos_core::functionals::{capped_jumps, cos_at, poisson_capped_mean};
use propchaos_core::model::*;
use propchaos_core::rng::{replica_seed, stream};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn kac() -> ModelSpec {
    ModelSpec::kac(1.0, JumpMode::Bird).unwrap()
}

fn centered_jumps(cap: usize) -> Functional {
    capped_jumps(1.0, cap).shifted(poisson_capped_mean(1.0, cap))
}

#[test]
fn pair_partition_counts() {
    assert_eq!(
        [
            pair_count(2).unwrap(),
            pair_count(4).unwrap(),
            pair_count(6).unwrap()
        ],
        [1, 3, 15]
    );
    assert_eq!(pair_count(0).unwrap(), 1);
    assert!(pair_count(5).is_err());
    assert!(alternating_sum(7).is_err());
    for k in (2..=20u32).step_by(2) {
        let closed = falling_factorial_exact(u128::from(k), k)
            / (1u128 << (k / 2))
            / falling_factorial_exact(u128::from(k / 2), k / 2);
        assert_eq!(pair_count(k).unwrap(), closed);
    }
}

#[test]
fn alternating_sum_matches_closed_form() {
    for q in (2..=12u32).step_by(2) {
        let sign = if (q / 2 + 1) % 2 == 0 { 1 } else { -1 };
        assert_eq!(
            alternating_sum(q).unwrap(),
            sign * pair_count(q).unwrap() as i128,
            "q={q}"
        );
    }
}

#[test]
fn refinement_sum_identity() {
    for m in (2..=10u32).step_by(2) {
        let sign = if (m / 2) % 2 == 0 { 1 } else { -1 };
        assert_eq!(
            refinement_sum(m).unwrap(),
            sign * pair_count(m).unwrap() as i128,
            "m={m}"
        );
    }
    let c = pair_constants(12).unwrap();
    assert_eq!(c.pair_counts.len(), 7);
    assert_eq!(c.alternating[0], (2, 1));
    assert!(pair_constants(22).is_err());
}

#[test]
fn stirling_generating_identity() {
    let table = StirlingTable::new(10);
    for p in 0..=10 {
        for x in 0..12i128 {
            let falling: i128 = (0..p as i128).map(|i| x - i).product();
            let poly: i128 = (0..=p).map(|m| table.get(p, m) * x.pow(m as u32)).sum();
            assert_eq!(falling, poly, "p={p} x={x}");
        }
    }
    assert_eq!(
        (table.get(3, 1), table.get(3, 2), table.get(3, 3)),
        (2, -3, 1)
    );
}

#[test]
fn stirling_expansion_small_cases() {
    let pts = [0.4, -1.0, 2.5];
    let f = |x: &[&f64]| x[0].sin() + 3.0;
    assert!(
        (stirling_expand(&pts, 1, &f).unwrap() - tensor_brute(&pts, 1, &f).unwrap()).abs() < 1e-14
    );
    assert!(stirling_expand(&pts, 4, &|_: &[&f64]| 1.0).is_err());
    let g = |x: &[&f64]| x[0] * x[1].cos() + x[2] * x[0] * x[0] - x[1] * x[2];
    let five = [0.1, 0.5, -0.7, 1.3, -2.0];
    let lhs = tensor_brute(&five, 3, &g).unwrap();
    let rhs = stirling_expand(&five, 3, &g).unwrap();
    assert!((lhs - rhs).abs() < 1e-10, "{lhs} {rhs}");
}

#[test]
fn symmetrization() {
    let sys = simulate_forward(&kac(), 7, 1.0, 0, &mut stream(1)).unwrap();
    let sym: Arc<dyn PathFunctional> = Arc::new(Functional::constant(2, 3.0));
    assert!(Arc::ptr_eq(&symmetrize(sym.clone()), &sym));

    let x = |p: &PathView<'_>| p.state_at(1.0).get(0);
    let fg = Functional {
        name: "fg".into(),
        arity: 2,
        bound: f64::INFINITY,
        query: Query::Times(vec![1.0]),
        symmetric: false,
        mean: None,
        f: Arc::new(move |p| x(&p[0]).cos() * (x(&p[1]) + 1.0)),
    };
    let s = symmetrize(Arc::new(fg.clone()));
    assert!(s.is_symmetric());
    let (a, b) = (sys.view(2), sys.view(5));
    let want = 0.5 * (x(&a).cos() * (x(&b) + 1.0) + x(&b).cos() * (x(&a) + 1.0));
    assert!((s.eval(&[a, b]) - want).abs() < 1e-14);
    let u1 = u_statistic(&sys, &fg).unwrap();
    let u2 = u_statistic(&sys, s.as_ref()).unwrap();
    assert!((u1 - u2).abs() < 1e-13, "{u1} {u2}");
}

#[test]
fn hoeffding_cases() {
    let mut rng = stream(2);
    let m = 2_000;
    let sample: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mean = sample.iter().sum::<f64>() / m as f64;

    let h1 = hoeffding_decompose(1, &sample, |x: &[&f64]| x[0].tanh()).unwrap();
    let theta = sample.iter().map(|x| x.tanh()).sum::<f64>() / m as f64;
    assert!((h1.theta() - theta).abs() < 1e-14);
    assert!((h1.h(&[&0.3]) - (0.3f64.tanh() - theta)).abs() < 1e-14);

    let h2 = hoeffding_decompose(2, &sample, |x: &[&f64]| x[0] * x[1]).unwrap();
    assert!(!h2.small_sample);
    assert!(h2.theta().abs() < 9.0 / m as f64);
    for x in [-1.5, 0.2, 2.0] {
        let h = h2.h(&[&x]);
        assert!(
            h.abs() < 3.0 * x.abs() / (m as f64).sqrt() + 9.0 / m as f64,
            "h1({x}) = {h}"
        );
        let hxy = h2.h(&[&x, &0.7]);
        let want = x * 0.7 - x * mean - 0.7 * mean + h2.theta();
        assert!((hxy - want).abs() < 1e-12);
    }
    let sum: f64 = sample.iter().map(|y| h2.h(&[y])).sum();
    assert!(sum.abs() < 1e-9);
    assert!(
        hoeffding_decompose(3, &sample[..10], |_: &[&f64]| 0.0)
            .unwrap()
            .small_sample
    );
    assert!(hoeffding_decompose(3, &sample[..2], |_: &[&f64]| 0.0).is_err());
}

#[test]
fn delta_report_structure() {
    let model = kac();
    let one = Functional::constant(2, 1.0);
    let rep = estimate_delta(&model, 2, 6, 1.0, &one, 2, 4_000, &|i| {
        replica_seed(3, "delta", i)
    })
    .unwrap();
    let p0 = rep.estimates[0].count as f64 / rep.replicas as f64;
    assert!((rep.estimates[0].value - p0).abs() < 1e-14);
    assert!(rep.reconstruction_error().abs() < 1e-12);
    assert!((rep.loop_probability() - (1.0 - p0)).abs() < 1e-14);

    let pos = Functional {
        name: "pos".into(),
        arity: 2,
        bound: 1.0,
        query: Query::Times(vec![1.0]),
        symmetric: true,
        mean: None,
        f: Arc::new(|p| {
            (p[0].state_at(1.0).get(0) * p[1].state_at(1.0).get(0))
                .cos()
                .powi(2)
        }),
    };
    let rep = estimate_delta(&model, 2, 6, 1.0, &pos, 3, 4_000, &|i| {
        replica_seed(4, "delta", i)
    })
    .unwrap();
    assert!(rep.reconstruction_error().abs() < 1e-12);
    assert!(rep
        .estimates
        .iter()
        .all(|e| e.value >= 0.0 && e.bound > 0.0));
    assert!(rep.remainder >= 0.0);
    assert!(ExpansionReport::from_samples(&[], 6, 2, 1.0, 1.0, 2, 1.0).is_err());
}

#[test]
fn wick_direct_trivial_cases() {
    let model = kac();
    let f = cos_at(1.0);
    let zero = Functional::constant(1, 0.0);
    for seed in 0..50 {
        assert_eq!(
            wick_direct_replica(&model, &f, &zero, 1.0, WickScheme::Compensated, seed).unwrap(),
            0.0
        );
        let fg = wick_direct_replica(
            &model,
            &f,
            &centered_jumps(2),
            1.0,
            WickScheme::Compensated,
            seed,
        )
        .unwrap();
        let gf = wick_direct_replica(
            &model,
            &centered_jumps(2),
            &f,
            1.0,
            WickScheme::Compensated,
            seed,
        )
        .unwrap();
        assert!((fg - gf).abs() < 1e-14);
    }
    let two = Functional::constant(2, 1.0);
    assert!(wick_direct_replicas(&model, &[&two], 1.0, WickScheme::Compensated, 0).is_err());
    assert!(wick_direct_replicas(&model, &[], 1.0, WickScheme::Compensated, 0).is_err());
    assert_eq!(pair_index(3, 0, 0), 0);
    assert_eq!(pair_index(3, 1, 0), 1);
    assert_eq!(pair_index(3, 1, 1), 3);
    assert_eq!(pair_index(3, 2, 2), 5);
}

#[test]
fn wick_direct_jump_counts_match_exact_value() {
    let model = kac();
    let (j1, j2) = (centered_jumps(1), centered_jumps(2));
    let fs: [&dyn PathFunctional; 2] = [&j1, &j2];
    let mut cols = vec![Vec::new(); 3];
    for i in 0..20_000 {
        let v = wick_direct_replicas(
            &model,
            &fs,
            1.0,
            WickScheme::Compensated,
            replica_seed(5, "wick", i),
        )
        .unwrap();
        for (c, x) in cols.iter_mut().zip(v) {
            c.push(x);
        }
    }
    let e2 = (-2.0f64).exp();
    for (c, want) in cols.iter().zip([e2, 2.0 * e2, 4.0 * e2]) {
        let (m, se) = mean_se(c);
        within("V(j, j)", m, se, want, 4.0);
        assert!(m.abs() <= wick_bound(2.0, 2.0, 1.0, 1.0));
    }
}

#[test]
fn wick_limit_vanishes_without_interaction() {
    let model = ModelSpec::non_interacting(
        1.0,
        FreeMotion::Still,
        InitialLaw::Normal {
            mean: State::scalar(0.0),
            sd: 1.0,
        },
    )
    .unwrap();
    let f = cos_at(1.0).shifted((-0.5f64).exp());
    let zero = Functional::constant(1, 0.0);
    assert_eq!(
        wick_limit_replica(&model, &zero, &f, 50, 1.0, 1).unwrap(),
        0.0
    );
    let xs: Vec<f64> = (0..2_000)
        .map(|i| wick_limit_replica(&model, &f, &f, 200, 1.0, i).unwrap())
        .collect();
    let (m, se) = mean_se(&xs);
    within("independent particles", m, se, 0.0, 3.0);
}

#[test]
fn covariance_assembly() {
    let p = vec![vec![1.0, 0.2], vec![0.4, 2.0]];
    let v = vec![vec![0.1, -0.3], vec![0.5, 0.0]];
    let k = clt_covariance(&p, &v).unwrap();
    assert_eq!(k[0][1], k[1][0]);
    assert!((k[0][1] - 0.4).abs() < 1e-15 && (k[0][0] - 1.1).abs() < 1e-15);
    assert!(clt_covariance(&p, &v[..1]).is_err());
    assert!((wick_bound(1.0, 2.0, 0.5, 2.0) - 4.0 * 2.0f64.exp()).abs() < 1e-12);
    assert!((chaos_bound(2, 11, 1.0, 1.0, 1.0) - 0.8).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn stirling_expansion_equals_tensor(seed in any::<u64>(), n in 1usize..=6, q in 1usize..=4) {
        prop_assume!(q <= n);
        let mut rng = stream(seed);
        let pts: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let coef: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = move |x: &[&f64]| {
            let lin: f64 = x.iter().zip(&coef).map(|(v, c)| *v * c).sum();
            lin.sin() + x[0] * x[x.len() - 1]
        };
        let lhs = tensor_brute(&pts, q, &f).unwrap();
        let rhs = stirling_expand(&pts, q, &f).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn diagonal_free_brute_matches_u_statistic(seed in any::<u64>(), n in 3usize..=6) {
        let sys = simulate_forward(&kac(), n, 1.0, 0, &mut stream(seed)).unwrap();
        let pts: Vec<f64> = (0..n).map(|i| sys.state_at(i, 1.0).get(0)).collect();
        let f = Functional {
            name: "xyz".into(),
            arity: 3,
            bound: f64::INFINITY,
            query: Query::Times(vec![1.0]),
            symmetric: false,
            mean: None,
            f: Arc::new(|p| p[0].state_at(1.0).get(0) - 2.0 * p[1].state_at(1.0).get(0) * p[2].state_at(1.0).get(0)),
        };
        let brute = diagonal_free_brute(&pts, 3, &|x: &[&f64]| x[0] - 2.0 * x[1] * x[2]).unwrap();
        prop_assert!((u_statistic(&sys, &f).unwrap() - brute).abs() < 1e-12);
    }
}
