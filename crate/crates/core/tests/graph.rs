mod common;

use common::{ks_pvalue, ks_statistic, mean_se, proportion, within};
use propchaos_core::clocks::{product_integral, yule_pmf};
use propchaos_core::graph::*;
use propchaos_core::model::*;
use propchaos_core::rng::{stream, tag, tagged_stream};
use propchaos_core::stats::total_variation;
use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{Discrete, DiscreteCDF, Poisson};

fn kac() -> ModelSpec {
    ModelSpec::kac(1.0, JumpMode::Bird).unwrap()
}

/// `∫_0^T rate(K_s) ds` for a size path that jumps at the given times.
fn integrate_steps(jumps: &[f64], k0: usize, horizon: f64, rate: impl Fn(f64) -> f64) -> f64 {
    let mut acc = 0.0;
    let (mut t, mut k) = (0.0, k0 as f64);
    for &s in jumps {
        acc += rate(k) * (s - t);
        t = s;
        k += 1.0;
    }
    acc + rate(k) * (horizon - t)
}

/// Randomized probability integral transform of a Poisson count.
fn poisson_pit(count: usize, mean: f64, u: f64) -> f64 {
    if mean <= 0.0 {
        assert_eq!(count, 0);
        return u;
    }
    let law = Poisson::new(mean).unwrap();
    let below = if count == 0 {
        0.0
    } else {
        law.cdf(count as u64 - 1)
    };
    below + u * law.pmf(count as u64)
}

#[test]
fn empty_graph_probability() {
    let (lambda, t, reps) = (0.4, 1.0, 100_000u64);
    let mut rng = stream(1);
    let empty = (0..reps)
        .filter(|_| {
            build_graph(2, 10, lambda, t, &mut rng)
                .unwrap()
                .events()
                .is_empty()
        })
        .count();
    proportion(
        "P(no event)",
        empty as u64,
        reps,
        (-lambda * t * 17.0 / 9.0).exp(),
        3.0,
    );
}

#[test]
fn full_population_only_loops() {
    let mut rng = stream(2);
    for _ in 0..200 {
        let g = build_graph(4, 4, 2.0, 1.0, &mut rng).unwrap();
        assert!(g.events().iter().all(|e| e.kind == EventKind::Loop));
        assert_eq!(g.k_at(1.0), 4);
    }
    assert!(build_graph(5, 4, 1.0, 1.0, &mut rng).is_err());
}

#[test]
fn worked_example_sizes_and_loops() {
    let t = 2.0;
    let g = InteractionGraph::from_events(
        2,
        10,
        1.0,
        t,
        &[
            (t / 2.0, EventKind::Loop, 1, 2),
            (3.0 * t / 4.0, EventKind::Branch, 2, 3),
        ],
    )
    .unwrap();
    for s in [0.0, 0.3, 0.99] {
        assert_eq!(
            (
                g.k_at(s),
                g.loops_until(s),
                g.cluster_size(0, s),
                g.cluster_size(1, s)
            ),
            (2, 0, 1, 1)
        );
    }
    for s in [1.0, 1.2, 1.49] {
        assert_eq!(
            (
                g.k_at(s),
                g.loops_until(s),
                g.cluster_size(0, s),
                g.cluster_size(1, s)
            ),
            (2, 1, 1, 1)
        );
    }
    for s in [1.5, 1.8, 2.0] {
        assert_eq!(
            (
                g.k_at(s),
                g.loops_until(s),
                g.cluster_size(0, s),
                g.cluster_size(1, s)
            ),
            (3, 1, 1, 2)
        );
    }
    assert_eq!(g.cluster(1), vec![2, 3]);
    assert!(
        InteractionGraph::from_events(2, 10, 1.0, t, &[(0.5, EventKind::Branch, 1, 2)]).is_err()
    );
    assert!(InteractionGraph::from_events(2, 10, 1.0, t, &[(0.5, EventKind::Loop, 1, 1)]).is_err());
    assert!(InteractionGraph::from_events(2, 10, 1.0, t, &[(0.5, EventKind::Loop, 1, 3)]).is_err());
}

#[test]
fn no_extension_means_identical_sizes() {
    let mut rng = stream(3);
    let mut seen = 0;
    for _ in 0..2_000 {
        let c = build_coupled(2, 1_000, 1.0, 0.5, &mut rng).unwrap();
        if c.extension_count() == 0 {
            seen += 1;
            assert_eq!(c.events(), c.graph().events());
            for s in [0.1, 0.25, 0.5] {
                assert_eq!(c.k_tilde_at(s), c.graph().k_at(s));
            }
        }
    }
    assert!(seen > 1_000);
}

#[test]
fn extended_cluster_is_yule() {
    let (reps, lt) = (100_000, 1.0);
    let mut rng = stream(4);
    let mut counts = vec![0u64; 40];
    for _ in 0..reps {
        let c = build_coupled(2, 10, lt, 1.0, &mut rng).unwrap();
        let k = c.sizes().final_size(0).min(39);
        counts[k] += 1;
    }
    let emp: Vec<f64> = counts.iter().map(|&c| c as f64 / reps as f64).collect();
    let mut law: Vec<f64> = (0..40).map(|k| yule_pmf(k, lt)).collect();
    law[39] = 1.0 - law[..39].iter().sum::<f64>();
    let tv = total_variation(&emp, &law);
    assert!(tv < 0.01, "TV {tv}");
}

#[test]
fn loop_tail_is_below_factorial_moment_bound() {
    let (n, reps) = (20usize, 50_000);
    let mut rng = stream(5);
    let mut loops = Vec::with_capacity(reps);
    let mut bases = Vec::with_capacity(reps);
    for _ in 0..reps {
        let c = build_coupled(2, n, 1.0, 1.0, &mut rng).unwrap();
        loops.push(c.loops_tilde_until(1.0));
        let kt = c.k_tilde_at(1.0) as f64;
        bases.push(kt * (kt - 1.0) / (n as f64 - 1.0));
    }
    let mut fact = 1.0;
    for l in 1..=3 {
        fact *= l as f64;
        let tail = loops.iter().filter(|&&x| x >= l).count() as f64 / reps as f64;
        let bound = bases.iter().map(|b| b.powi(l as i32)).sum::<f64>() / reps as f64 / fact;
        assert!(tail <= bound, "l={l}: {tail} > {bound}");
    }
}

#[test]
fn finite_loops_are_conditionally_poisson() {
    let (n, lambda, t) = (6usize, 1.5, 1.0);
    let mut rng = stream(6);
    let mut pits = Vec::new();
    for _ in 0..40_000 {
        let g = build_graph(2, n, lambda, t, &mut rng).unwrap();
        let branches: Vec<f64> = g
            .events()
            .iter()
            .filter(|e| e.kind == EventKind::Branch)
            .map(|e| e.s)
            .collect();
        let mean = integrate_steps(&branches, 2, t, |k| {
            lambda * k * (k - 1.0) / (2.0 * (n as f64 - 1.0))
        });
        pits.push(poisson_pit(g.loops_until(t), mean, rng.random()));
    }
    let n = pits.len();
    let d = ks_statistic(&mut pits, |x| x.clamp(0.0, 1.0));
    assert!(ks_pvalue(d, n) > 0.001, "D {d}");
}

#[test]
fn cross_loops_are_conditionally_poisson() {
    let (n, lambda, t) = (8usize, 1.0, 1.0);
    let mut rng = stream(7);
    let mut pits = Vec::new();
    for _ in 0..40_000 {
        let c = build_coupled(2, n, lambda, t, &mut rng).unwrap();
        let flags = detect_events(&c);
        let mean = c.sizes().product_integral(0, 1, lambda / (n as f64 - 1.0));
        pits.push(poisson_pit(flags.block_cross_loops[0], mean, rng.random()));
    }
    let n = pits.len();
    let d = ks_statistic(&mut pits, |x| x.clamp(0.0, 1.0));
    assert!(ks_pvalue(d, n) > 0.001, "D {d}");
}

#[test]
fn event_flags_on_hand_built_graphs() {
    let mut rng = stream(8);
    let big = 1_000_000_000;
    let g =
        InteractionGraph::from_events(2, big, 1.0, 1.0, &[(0.5, EventKind::Branch, 2, 7)]).unwrap();
    let c = extend(g, &mut rng).unwrap();
    assert_eq!(c.extension_count(), 0);
    let f = detect_events(&c);
    assert!(f.a.iter().all(|&x| x) && f.a_tilde.iter().all(|&x| x));
    assert!(!f.l_tilde_1q && !f.b[&(0, 1)]);

    let g =
        InteractionGraph::from_events(2, big, 1.0, 1.0, &[(0.5, EventKind::Loop, 1, 2)]).unwrap();
    let c = extend(g, &mut rng).unwrap();
    assert_eq!(c.extension_count(), 0);
    let f = detect_events(&c);
    assert!(f.l_tilde_1q);
    assert_eq!(f.block_cross_loops, vec![1]);
    assert!(f.b[&(0, 1)] && f.b_tilde[&(0, 1)] && !f.b_prime[&(0, 1)]);
    assert!(f.a.iter().all(|&x| !x));

    let g = InteractionGraph::from_events(
        3,
        big,
        1.0,
        1.0,
        &[(0.2, EventKind::Branch, 1, 9), (0.4, EventKind::Loop, 9, 3)],
    )
    .unwrap();
    let c = extend(g, &mut rng).unwrap();
    let f = detect_events(&c);
    assert_eq!(f.a, vec![false, true, false]);
    assert_eq!(f.a_range[&(0, 1)], vec![true, true]);
    assert_eq!(f.a_range[&(0, 2)], vec![false, true, false]);
    assert_eq!(f.loops_in_range[&(1, 2)], 0);
    assert_eq!(f.loops_in_range[&(0, 2)], 1);
    assert!(!f.l_tilde_1q);
}

#[test]
fn isolated_cluster_keeps_initial_law() {
    let model = kac();
    let mut rng = stream(9);
    let mut xs = Vec::new();
    for rep in 0..60_000u64 {
        let g = build_graph(2, 4, 1.0, 1.0, &mut rng).unwrap();
        if g.events().iter().any(|e| e.touches(0)) {
            continue;
        }
        xs.push(realize_z(&g, &model, rep).state_at(0, 1.0).get(0));
    }
    let n = xs.len();
    assert!(n > 5_000);
    let a = 3f64.sqrt();
    let d = ks_statistic(&mut xs, |x| ((x + a) / (2.0 * a)).clamp(0.0, 1.0));
    assert!(ks_pvalue(d, n) > 0.001, "D {d}");
}

#[test]
fn realizations_agree_when_nothing_is_removed() {
    let model = kac();
    let mut plain = 0;
    for rep in 0..3_000u64 {
        let c = build_coupled(2, 30, 1.0, 1.0, &mut tagged_stream(rep, tag::GRAPH)).unwrap();
        let z = realize_z(c.graph(), &model, rep);
        let full = realize_zcheck(&c, &model, 2, rep).unwrap();
        assert_eq!((z.path(0), z.path(1)), (full.path(0), full.path(1)));
        if !c.graph().events().iter().any(|e| e.touches(1)) {
            let head = realize_zcheck(&c, &model, 1, rep).unwrap();
            assert_eq!(head.path(0), z.path(0));
        }
        if c.extension_count() == 0 && c.graph().loops_until(1.0) == 0 {
            plain += 1;
            let ztt = realize_ztt(&c, &model, rep);
            let zt = realize_ztilde(&c, &model, rep);
            assert_eq!((ztt.path(0), ztt.path(1)), (z.path(0), z.path(1)));
            assert_eq!((zt.path(0), zt.path(1)), (z.path(0), z.path(1)));
        }
    }
    assert!(plain > 1_000);
}

#[test]
fn empty_graph_gives_independent_free_motions() {
    let model = kac().with_motion(FreeMotion::OrnsteinUhlenbeck {
        theta: 1.0,
        sigma: 0.5,
        step: 0.05,
    });
    let g = InteractionGraph::from_events(3, 5, 1.0, 1.0, &[]).unwrap();
    let z = realize_z(&g, &model, 11);
    for i in 0..3 {
        assert!(z.path(i).jumps().is_empty());
        let direct = model
            .motion()
            .advance(z.path(i).initial(), 0.0, 1.0, 11, i as u64 + 1);
        assert_eq!(z.state_at(i, 1.0), direct);
    }
}

#[test]
fn loop_free_roots_are_uncorrelated() {
    let model = kac();
    let reps = 30_000u64;
    let mut prods = Vec::with_capacity(reps as usize);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for rep in 0..reps {
        let c = build_coupled(2, 6, 1.0, 1.0, &mut tagged_stream(rep, tag::GRAPH)).unwrap();
        let z = realize_ztt(&c, &model, rep);
        let (x, y) = (z.state_at(0, 1.0).get(0), z.state_at(1, 1.0).get(0));
        a.push(x.cos());
        b.push((2.0 * y).sin() + y.cos());
    }
    let (ma, _) = mean_se(&a);
    let (mb, _) = mean_se(&b);
    for (x, y) in a.iter().zip(&b) {
        prods.push((x - ma) * (y - mb));
    }
    let (cov, se) = mean_se(&prods);
    within("Z̃̃ covariance", cov, se, 0.0, 3.0);
}

#[test]
fn loop_free_linear_toy_mean() {
    let (rate, t, z0) = (1.2, 1.0, -0.5);
    let jump = JumpLaw::Normal { mean: 0.7, sd: 0.5 };
    let model = ModelSpec::linear_toy(rate, jump, z0, JumpMode::Bird).unwrap();
    let xs: Vec<f64> = (0..20_000u64)
        .map(|rep| {
            let c = build_coupled(2, 5, model.lambda(), t, &mut tagged_stream(rep, tag::GRAPH))
                .unwrap();
            realize_ztt(&c, &model, rep).state_at(0, t).get(0)
        })
        .collect();
    let (m, se) = mean_se(&xs);
    within("toy mean", m, se, z0 + rate * t * jump.mean(), 3.0);
}

#[test]
fn limit_sample_structure() {
    let (lambda, t) = (1.0, 1.0);
    let mut rng = stream(12);
    let mut pits = Vec::new();
    for _ in 0..20_000 {
        let ls = sample_limit(4, lambda, t, &mut rng).unwrap();
        let mut w = 1.0;
        for blk in 0..2 {
            let (bx, by) = (ls.sizes.births(2 * blk), ls.sizes.births(2 * blk + 1));
            let total = product_integral(bx, by, t);
            w *= lambda * total;
            let lp = ls.loops[blk];
            assert_eq!(lp.kind, EventKind::Loop);
            let mut ends = [lp.cluster_r, lp.cluster_j];
            ends.sort_unstable();
            assert_eq!(ends, [2 * blk, 2 * blk + 1]);
            let cut = |b: &[f64]| b.iter().copied().filter(|&x| x < lp.s).collect::<Vec<_>>();
            if blk == 0 {
                pits.push(product_integral(&cut(bx), &cut(by), lp.s) / total);
            }
            for (g, end) in [(&ls.grafts[2 * blk], lp.r), (&ls.grafts[2 * blk + 1], lp.j)] {
                assert_eq!((g[0].kind, g[0].r, g[0].s), (EventKind::Branch, end, lp.s));
                assert!(g
                    .iter()
                    .all(|e| e.kind == EventKind::Branch && e.s >= lp.s && e.s <= t));
            }
        }
        assert!((ls.weight - w).abs() < 1e-12 * w);
        let mut fresh: Vec<u64> = ls
            .births
            .iter()
            .chain(ls.grafts.iter().flatten())
            .map(|e| e.j)
            .collect();
        let total = fresh.len();
        fresh.sort_unstable();
        fresh.dedup();
        assert_eq!(fresh.len(), total);
        assert!(fresh[0] > 4);
        let ev = ls.all_events();
        assert!(ev.windows(2).all(|w| w[0].s <= w[1].s));
        assert_eq!(ev.len(), ls.births.len() + 2);
    }
    let n = pits.len();
    let d = ks_statistic(&mut pits, |x| x.clamp(0.0, 1.0));
    assert!(ks_pvalue(d, n) > 0.001, "loop time D {d}");
    assert!(sample_limit(3, 1.0, 1.0, &mut rng).is_err());
}

#[test]
fn limit_terms_select_the_right_events() {
    let model = kac();
    let ls = sample_limit(2, 1.0, 1.0, &mut stream(13)).unwrap();
    let forest = realize_limit(&ls, &model, &[BlockTerm::Forest], 5);
    let only_births = realize_events(&ls.births, 2, 1.0, &model, 5);
    assert_eq!(forest, only_births);
    assert_eq!(
        ls.events_for(&[BlockTerm::GraftR]).len(),
        ls.births.len() + ls.grafts[0].len()
    );
    assert_eq!(
        ls.events_for(&[BlockTerm::GraftJ]).len(),
        ls.births.len() + ls.grafts[1].len()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn coupled_graph_invariants(seed in any::<u64>(), q in 1usize..5, extra in 0usize..8, lt in 0.1f64..2.0) {
        let n = q + extra.max(1);
        let c = build_coupled(q, n, lt, 1.0, &mut stream(seed)).unwrap();
        prop_assert!(c.check_invariants().is_ok());
        prop_assert!(c.graph().k_at(1.0) <= n);
        let fresh: Vec<u64> = c
            .events()
            .iter()
            .filter(|e| e.kind == EventKind::Branch && e.tier == Tier::Extension)
            .map(|e| e.j)
            .collect();
        let expect: Vec<u64> = (0..fresh.len() as u64).map(|i| n as u64 + 1 + i).collect();
        prop_assert_eq!(&fresh, &expect);
        for e in c.graph().events() {
            prop_assert_eq!(e.tier, Tier::Finite);
            if e.kind == EventKind::Branch {
                prop_assert!(e.j >= 1 && e.j as usize <= n);
            }
        }
        let total: usize = (0..q).map(|i| c.graph().cluster_size(i, 1.0)).sum();
        prop_assert_eq!(total, c.graph().k_at(1.0));
    }

    #[test]
    fn detection_is_a_pure_function(seed in any::<u64>()) {
        let c = build_coupled(4, 9, 1.0, 1.0, &mut stream(seed)).unwrap();
        let f = detect_events(&c);
        prop_assert_eq!(&f, &detect_events(&c.clone()));
        prop_assert_eq!(f.total_loops, c.loops_tilde_until(1.0));
        for l in 0..4 {
            prop_assert!(!f.a[l] || f.a_tilde[l]);
        }
    }
}
