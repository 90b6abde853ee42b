mod common;

use common::{chi2_pvalue, ks_pvalue, ks_statistic, mean_se, proportion, within};
use propchaos_core::clocks::*;
use propchaos_core::rng::stream;
use propchaos_core::Error;
use proptest::prelude::*;

#[test]
fn degenerate_race_has_one_winner() {
    let mut rng = stream(1);
    let mut holds = Vec::new();
    for _ in 0..20_000 {
        let out = exp_race(&[2.5, 0.0, 0.0], &mut rng).unwrap().unwrap();
        assert_eq!(out.winner, 0);
        holds.push(out.holding);
    }
    let (m, se) = mean_se(&holds);
    within("holding mean", m, se, 1.0 / 2.5, 4.0);
}

#[test]
fn race_winner_frequencies() {
    let mut rng = stream(2);
    let n = 100_000;
    let even = (0..n)
        .filter(|_| exp_race(&[1.0, 1.0], &mut rng).unwrap().unwrap().winner == 0)
        .count();
    proportion("symmetric race", even as u64, n, 0.5, 3.0);
    let odd = (0..n)
        .filter(|_| exp_race(&[1.0, 3.0], &mut rng).unwrap().unwrap().winner == 1)
        .count();
    proportion("1 vs 3 race", odd as u64, n, 0.75, 3.0);
}

#[test]
fn race_rejects_bad_rates() {
    let mut rng = stream(3);
    assert!(matches!(
        exp_race(&[1.0, -1.0], &mut rng),
        Err(Error::InvalidArgument(_))
    ));
    assert!(matches!(
        exp_race(&[f64::NAN], &mut rng),
        Err(Error::InvalidArgument(_))
    ));
    assert!(exp_race(&[], &mut rng).is_err());
    assert_eq!(exp_race(&[0.0, 0.0], &mut rng).unwrap(), None);
}

#[test]
fn inhomogeneous_counts() {
    let mut rng = stream(4);
    assert!(sample_inhom_poisson(&RatePath::constant(0.0), 3.0, &mut rng).is_empty());
    let flat: Vec<f64> = (0..20_000)
        .map(|_| sample_inhom_poisson(&RatePath::constant(1.5), 2.0, &mut rng).len() as f64)
        .collect();
    let (m, se) = mean_se(&flat);
    within("constant rate count", m, se, 3.0, 4.0);

    let rate = RatePath::two_step(1.0, 1.0, 3.0).unwrap();
    let counts: Vec<f64> = (0..100_000)
        .map(|_| sample_inhom_poisson(&rate, 2.0, &mut rng).len() as f64)
        .collect();
    let (m, se) = mean_se(&counts);
    within("two-step mean", m, se, 4.0, 3.0);
    let var = counts.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / (counts.len() - 1) as f64;
    // Var of the sample variance of a Poisson(μ) is about (μ + 2μ²)/n.
    let var_se = ((4.0 + 2.0 * 16.0) / counts.len() as f64).sqrt();
    within("two-step variance", var, var_se, 4.0, 3.0);
}

#[test]
fn conditional_times_laws() {
    let mut rng = stream(5);
    let flat = RatePath::constant(2.0);
    let mut xs: Vec<f64> = (0..100_000)
        .map(|_| {
            conditional_jump_times(&flat, 3.0, 1, &mut rng)
                .unwrap()
                .times()[0]
        })
        .collect();
    let d = ks_statistic(&mut xs, |x| (x / 3.0).clamp(0.0, 1.0));
    assert!(ks_pvalue(d, xs.len()) > 0.01, "uniform KS d={d}");

    let early = RatePath::two_step(2.0, 1.0, 0.0).unwrap();
    for _ in 0..1000 {
        assert!(
            conditional_jump_times(&early, 2.0, 1, &mut rng)
                .unwrap()
                .times()[0]
                <= 1.0
        );
    }

    let step = RatePath::two_step(1.0, 1.0, 3.0).unwrap();
    let n = 100_000;
    let below = (0..n)
        .filter(|_| {
            conditional_jump_times(&step, 2.0, 1, &mut rng)
                .unwrap()
                .times()[0]
                <= 1.0
        })
        .count();
    proportion("two-step first half", below as u64, n, 0.25, 3.0);

    assert!(conditional_jump_times(&RatePath::constant(0.0), 1.0, 1, &mut rng).is_err());
    assert!(conditional_jump_times(&flat, 1.0, 0, &mut rng).is_err());
}

#[test]
fn order_statistics_are_sorted_uniforms() {
    let mut rng = stream(6);
    let k = 4;
    let mut ranked: Vec<Vec<f64>> = vec![Vec::new(); k];
    for _ in 0..20_000 {
        let t = conditional_jump_times(&RatePath::constant(1.0), 1.0, k, &mut rng).unwrap();
        assert!(t.times().windows(2).all(|w| w[0] < w[1]));
        for (i, &x) in t.times().iter().enumerate() {
            ranked[i].push(x);
        }
    }
    // The i-th of k uniform order statistics is Beta(i, k + 1 - i).
    for (i, col) in ranked.iter_mut().enumerate() {
        let beta = statrs::distribution::Beta::new((i + 1) as f64, (k - i) as f64).unwrap();
        let d = ks_statistic(col, |x| statrs::distribution::ContinuousCDF::cdf(&beta, x));
        assert!(
            ks_pvalue(d, col.len()) > 0.001,
            "order statistic {i}: d={d}"
        );
    }
}

#[test]
fn thinning_cases() {
    let mut rng = stream(7);
    let input = sample_inhom_poisson(&RatePath::constant(2.0), 5.0, &mut rng);
    let parts = thin(
        &input,
        &[RatePath::constant(1.0), RatePath::constant(0.0)],
        &mut rng,
    )
    .unwrap();
    assert_eq!(parts[0], input);
    assert!(parts[1].is_empty());
    let none = thin(&input, &[RatePath::constant(0.0)], &mut rng).unwrap();
    assert!(none[0].is_empty());

    let counts: Vec<f64> = (0..50_000)
        .map(|_| {
            let s = sample_inhom_poisson(&RatePath::constant(2.0), 1.0, &mut rng);
            thin(&s, &[RatePath::constant(0.5)], &mut rng).unwrap()[0].len() as f64
        })
        .collect();
    let (m, se) = mean_se(&counts);
    within("half-thinned count", m, se, 1.0, 3.0);

    assert!(thin(&input, &[RatePath::constant(1.5)], &mut rng).is_err());
    assert!(thin(
        &input,
        &[RatePath::constant(0.7), RatePath::constant(0.6)],
        &mut rng
    )
    .is_err());
}

#[test]
fn superposition_labels() {
    let mut rng = stream(8);
    let one = sample_inhom_poisson(&RatePath::constant(1.0), 4.0, &mut rng);
    assert_eq!(superpose(std::slice::from_ref(&one)).unwrap().times(), one);
    assert!(superpose(&[EventTimes::empty(), EventTimes::empty()])
        .unwrap()
        .events
        .is_empty());

    let (mut from_second, mut total) = (0u64, 0u64);
    for _ in 0..20_000 {
        let a = sample_inhom_poisson(&RatePath::constant(1.0), 1.0, &mut rng);
        let b = sample_inhom_poisson(&RatePath::constant(3.0), 1.0, &mut rng);
        let merged = superpose(&[a, b]).unwrap();
        assert!(merged.events.windows(2).all(|w| w[0].0 < w[1].0));
        total += merged.events.len() as u64;
        from_second += merged.events.iter().filter(|e| e.1 == 1).count() as u64;
    }
    proportion("second-stream share", from_second, total, 0.75, 3.0);

    let tie = EventTimes::new(vec![0.5]).unwrap();
    assert_eq!(
        superpose(&[tie.clone(), tie]),
        Err(Error::DuplicateTime(0.5))
    );
}

#[test]
fn thin_then_superpose_is_poisson() {
    let mut rng = stream(9);
    let cells = 10;
    let mut counts = vec![0u64; cells + 1];
    let replicas = 100_000;
    for _ in 0..replicas {
        let s = sample_inhom_poisson(&RatePath::constant(3.0), 1.0, &mut rng);
        let parts = thin(
            &s,
            &[RatePath::constant(0.4), RatePath::constant(0.6)],
            &mut rng,
        )
        .unwrap();
        let merged = superpose(&parts).unwrap();
        let c = merged.events.iter().filter(|e| e.0 < 0.5).count();
        counts[c.min(cells)] += 1;
    }
    let mu: f64 = 1.5;
    let mut probs: Vec<f64> = (0..cells)
        .map(|k| (-mu).exp() * mu.powi(k as i32) / (1..=k).map(|i| i as f64).product::<f64>())
        .collect();
    probs.push(1.0 - probs.iter().sum::<f64>());
    assert!(chi2_pvalue(&counts, &probs) > 0.001);
}

#[test]
fn yule_marginal_is_geometric() {
    let mut rng = stream(10);
    let n = 100_000;
    let mut hist = vec![0u64; 40];
    for _ in 0..n {
        let k = sample_yule(1, 1.0, 1.0, &mut rng).unwrap().final_size(0);
        hist[k.min(39)] += 1;
    }
    proportion("P(K=1)", hist[1], n, (-1.0f64).exp(), 3.0);
    let emp: Vec<f64> = hist.iter().map(|&c| c as f64 / n as f64).collect();
    let exact: Vec<f64> = (0..40).map(|k| yule_pmf(k, 1.0)).collect();
    let tv = propchaos_core::stats::total_variation(&emp, &exact);
    assert!(tv < 0.01, "tv {tv}");
}

#[test]
fn yule_sum_tail_bound() {
    let mut rng = stream(11);
    let (q, n) = (3, 50_000u64);
    let mut hist = vec![0u64; 31];
    for _ in 0..n {
        let k = sample_yule(q, 0.8, 1.0, &mut rng).unwrap().final_total();
        if k <= 30 {
            hist[k] += 1;
        }
    }
    for (k, &c) in hist.iter().enumerate().skip(q) {
        let p = c as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt().max(1.0 / n as f64);
        assert!(p <= yule_sum_bound(k, q, 0.8) + 3.0 * se, "k={k}");
    }
}

#[test]
fn yule_moments_match_negative_binomial() {
    assert!((yule_sum_moment(1, 1.0, 1) - 1.0f64.exp()).abs() < 1e-10);
    // E[K^2] for a geometric with p = e^{-1} is (2 - p)/p^2.
    let p = (-1.0f64).exp();
    assert!((yule_sum_moment(1, 1.0, 2) - (2.0 - p) / (p * p)).abs() < 1e-9);
    assert!((yule_sum_moment(2, 0.5, 0) - 1.0).abs() < 1e-12);
}

#[test]
fn product_integral_constant_clusters() {
    assert!((product_integral(&[], &[], 2.0) - 2.0).abs() < 1e-15);
    // K^a = 1 then 2 after 0.5; K^b = 1 then 2 after 1.0: 0.5 + 2*0.5 + 4*1.
    assert!((product_integral(&[0.5], &[1.0], 2.0) - 5.5).abs() < 1e-12);
}

#[test]
fn samplers_are_seed_deterministic() {
    let rate = RatePath::two_step(1.0, 0.7, 2.0).unwrap();
    let a = sample_inhom_poisson(&rate, 3.0, &mut stream(42));
    let b = sample_inhom_poisson(&rate, 3.0, &mut stream(42));
    assert_eq!(a, b);
    assert_eq!(
        sample_yule(3, 1.0, 2.0, &mut stream(5)).unwrap(),
        sample_yule(3, 1.0, 2.0, &mut stream(5)).unwrap()
    );
}

proptest! {
    #[test]
    fn rate_path_integral_is_additive(
        vals in prop::collection::vec(0.0f64..5.0, 1..6),
        a in 0.0f64..3.0,
        mid in 0.0f64..3.0,
        b in 0.0f64..3.0,
    ) {
        let bps: Vec<f64> = (0..vals.len()).map(|i| i as f64 * 0.5).collect();
        let r = RatePath::new(bps, vals).unwrap();
        let mut xs = [a, mid, b];
        xs.sort_by(f64::total_cmp);
        let whole = r.integral(xs[0], xs[2]);
        let split = r.integral(xs[0], xs[1]) + r.integral(xs[1], xs[2]);
        prop_assert!((whole - split).abs() < 1e-9);
        prop_assert!(whole >= 0.0);
    }

    #[test]
    fn event_times_are_sorted_and_in_range(seed in any::<u64>(), rate in 0.0f64..20.0, horizon in 0.01f64..3.0) {
        let ev = sample_inhom_poisson(&RatePath::constant(rate), horizon, &mut stream(seed));
        prop_assert!(ev.times().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(ev.times().iter().all(|&t| (0.0..horizon).contains(&t)));
    }

    #[test]
    fn yule_total_is_cluster_sum(seed in any::<u64>(), q in 1usize..5, s in 0.0f64..1.5) {
        let paths = sample_yule(q, 1.2, 1.5, &mut stream(seed)).unwrap();
        let sum: usize = (0..q).map(|i| paths.size(i, s)).sum();
        prop_assert_eq!(paths.total(s), sum);
        for i in 0..q {
            prop_assert_eq!(paths.size(i, 0.0), 1);
            prop_assert!(paths.births(i).windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn thinning_partitions_events(seed in any::<u64>(), a in 0.0f64..0.5, b in 0.0f64..0.5) {
        let mut rng = stream(seed);
        let s = sample_inhom_poisson(&RatePath::constant(5.0), 2.0, &mut rng);
        let parts = thin(&s, &[RatePath::constant(a), RatePath::constant(b)], &mut rng).unwrap();
        let total: usize = parts.iter().map(EventTimes::len).sum();
        prop_assert!(total <= s.len());
        for p in &parts {
            prop_assert!(p.times().iter().all(|t| s.times().contains(t)));
        }
    }
}
