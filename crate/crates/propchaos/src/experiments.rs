//! The experiment commands, each producing report tables.

use std::fmt;

use propchaos_core::chaos::{
    delta_replica, pair_index, wick_bound, wick_direct_replicas, wick_limit_replicas, Estimate,
    ExpansionReport, WickScheme,
};
use propchaos_core::clocks::yule_pmf;
use propchaos_core::forward::{
    eta_empirical, simulate_forward, Functional, PathFunctional, PathSet,
};
use propchaos_core::graph::{build_coupled, detect_events, realize_marginal};
use propchaos_core::model::ModelSpec;
use propchaos_core::rng::{tag, tagged_stream};

use crate::config::{integer_valued, ConfigError, ExperimentConfig};
use crate::output::{Cell, Table};
use crate::runner::Runner;
use crate::stats::{
    jitter, ks_one_sample, smoothed_normal_cdf, total_variation, weighted_log_slope, Accumulator,
};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Core(propchaos_core::Error),
    Io(std::io::Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "configuration error: {e}"),
            RunError::Core(e) => write!(f, "simulation error: {e}"),
            RunError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<propchaos_core::Error> for RunError {
    fn from(e: propchaos_core::Error) -> Self {
        RunError::Core(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

pub type Tables = Result<Vec<Table>, RunError>;

fn energy(model: &ModelSpec, z: &propchaos_core::model::State) -> f64 {
    let range = if model.dim() == 6 {
        3..6
    } else {
        0..model.dim()
    };
    range.map(|k| z.get(k) * z.get(k)).sum()
}

/// `η^N(f)` for each functional on one forward run.
pub fn forward_etas(
    model: &ModelSpec,
    fs: &[&dyn PathFunctional],
    n: usize,
    horizon: f64,
    seed: u64,
) -> Result<Vec<f64>, propchaos_core::Error> {
    let sys = simulate_forward(
        model,
        n,
        horizon,
        seed,
        &mut tagged_stream(seed, tag::FORWARD),
    )?;
    Ok(fs.iter().map(|f| eta_empirical(&sys, *f)).collect())
}

struct ForwardReplica {
    etas: Vec<f64>,
    /// Per grid time: mean energy, mean first coordinate, mean jumps.
    grid: Vec<(f64, f64, f64)>,
    candidates: usize,
    accepted: usize,
}

pub fn simulate_forward_cmd(cfg: &ExperimentConfig, runner: &Runner) -> Tables {
    let model = cfg.model_spec()?;
    let fs = cfg.functionals();
    let refs: Vec<&dyn PathFunctional> = fs.iter().map(|f| f as &dyn PathFunctional).collect();
    let t = cfg.run.horizon;
    let steps = cfg.run.time_grid;
    let grid: Vec<f64> = (0..=steps).map(|k| t * k as f64 / steps as f64).collect();
    let mut ftab = Table::new(
        "forward_functionals",
        &["n", "functional", "mean", "std_error", "replicas"],
    );
    let mut ttab = Table::new(
        "forward_trajectory",
        &[
            "n",
            "t",
            "energy",
            "energy_se",
            "first_coordinate",
            "first_coordinate_se",
            "jumps_per_particle",
        ],
    );
    let mut etab = Table::new(
        "forward_events",
        &[
            "n",
            "candidates_per_time",
            "candidates_per_time_se",
            "expected_candidates_per_time",
            "acceptance",
        ],
    );
    for &n in &cfg.run.n_ladder {
        let reps = runner.try_map(&format!("forward/{n}"), cfg.run.replicas, |seed| {
            let sys = simulate_forward(&model, n, t, seed, &mut tagged_stream(seed, tag::FORWARD))?;
            let etas = refs.iter().map(|f| eta_empirical(&sys, *f)).collect();
            let grid = grid
                .iter()
                .map(|&s| {
                    let (mut e, mut x, mut j) = (0.0, 0.0, 0.0);
                    for i in 0..n {
                        let z = sys.state_at(i, s);
                        e += energy(&model, &z);
                        x += z.get(0);
                        j += sys.view(i).jumps_until(s) as f64;
                    }
                    (e / n as f64, x / n as f64, j / n as f64)
                })
                .collect();
            let accepted = sys.log().iter().filter(|r| r.accepted).count();
            Ok::<_, propchaos_core::Error>(ForwardReplica {
                etas,
                grid,
                candidates: sys.log().len(),
                accepted,
            })
        })?;
        for (a, f) in fs.iter().enumerate() {
            let acc: Accumulator = reps.iter().map(|r| r.etas[a]).collect();
            ftab.push(vec![
                n.into(),
                f.name.clone().into(),
                acc.mean().into(),
                acc.std_error().into(),
                acc.count().into(),
            ]);
        }
        for (k, &s) in grid.iter().enumerate() {
            let e: Accumulator = reps.iter().map(|r| r.grid[k].0).collect();
            let x: Accumulator = reps.iter().map(|r| r.grid[k].1).collect();
            let j: Accumulator = reps.iter().map(|r| r.grid[k].2).collect();
            ttab.push(vec![
                n.into(),
                s.into(),
                e.mean().into(),
                e.std_error().into(),
                x.mean().into(),
                x.std_error().into(),
                j.mean().into(),
            ]);
        }
        let cand: Accumulator = reps.iter().map(|r| r.candidates as f64 / t).collect();
        let total: usize = reps.iter().map(|r| r.candidates).sum();
        let accepted: usize = reps.iter().map(|r| r.accepted).sum();
        etab.push(vec![
            n.into(),
            cand.mean().into(),
            cand.std_error().into(),
            (n as f64 * model.lambda() / 2.0).into(),
            (if total == 0 {
                0.0
            } else {
                accepted as f64 / total as f64
            })
            .into(),
        ]);
    }
    Ok(vec![ftab, ttab, etab])
}

struct GraphReplica {
    loops: usize,
    loops_tilde: usize,
    k: usize,
    k_tilde: usize,
    k1_tilde: usize,
    extensions: usize,
}

/// Loop and cluster statistics along the `N` ladder.
pub fn graph_stats_cmd(cfg: &ExperimentConfig, runner: &Runner) -> Tables {
    let model = cfg.model_spec()?;
    let (q, t, lambda, l_max) = (cfg.run.q, cfg.run.horizon, model.lambda(), cfg.run.l_max);
    let mut loops_tab = Table::new("graph_loops", &["n", "l", "probability", "std_error"]);
    let mut summary = Table::new(
        "graph_summary",
        &[
            "n",
            "replicas",
            "p_no_loop",
            "n_p_loop",
            "n_p_loop_se",
            "p_loop_extended",
            "mean_k",
            "mean_k_extended",
            "mean_extension_events",
            "yule_tv",
        ],
    );
    let mut yule = Table::new("graph_yule", &["n", "k", "empirical", "geometric"]);
    let mut slope_pts = (Vec::new(), Vec::new(), Vec::new());
    for &n in &cfg.run.n_ladder {
        let reps = runner.try_map(&format!("graph/{n}"), cfg.run.replicas, |seed| {
            let c = build_coupled(q, n, lambda, t, &mut tagged_stream(seed, tag::GRAPH))?;
            Ok::<_, propchaos_core::Error>(GraphReplica {
                loops: c.graph().loops_until(t),
                loops_tilde: c.loops_tilde_until(t),
                k: c.graph().k_at(t),
                k_tilde: c.k_tilde_at(t),
                k1_tilde: c.sizes().final_size(0),
                extensions: c.extension_count(),
            })
        })?;
        let r = reps.len() as f64;
        for l in 0..=l_max + 1 {
            let hits = reps
                .iter()
                .filter(|x| {
                    if l > l_max {
                        x.loops > l_max
                    } else {
                        x.loops == l
                    }
                })
                .count() as f64;
            let p = hits / r;
            let label = if l > l_max {
                format!(">{l_max}")
            } else {
                l.to_string()
            };
            loops_tab.push(vec![
                n.into(),
                label.into(),
                p.into(),
                (p * (1.0 - p) / r).sqrt().into(),
            ]);
        }
        let p_loop = reps.iter().filter(|x| x.loops >= 1).count() as f64 / r;
        let np = n as f64 * p_loop;
        let np_se = n as f64 * (p_loop * (1.0 - p_loop) / r).sqrt();
        slope_pts.0.push(n as f64);
        slope_pts.1.push(np);
        slope_pts.2.push(np_se);
        let kmax = reps.iter().map(|x| x.k1_tilde).max().unwrap_or(1);
        let mut counts = vec![0u64; kmax + 1];
        for x in &reps {
            counts[x.k1_tilde] += 1;
        }
        let emp: Vec<f64> = counts.iter().map(|&c| c as f64 / r).collect();
        let mut law: Vec<f64> = (0..=kmax).map(|k| yule_pmf(k, lambda * t)).collect();
        law[kmax] += 1.0 - law.iter().sum::<f64>();
        for k in 1..=kmax {
            yule.push(vec![n.into(), k.into(), emp[k].into(), law[k].into()]);
        }
        let mean = |f: &dyn Fn(&GraphReplica) -> f64| reps.iter().map(f).sum::<f64>() / r;
        summary.push(vec![
            n.into(),
            reps.len().into(),
            (1.0 - p_loop).into(),
            np.into(),
            np_se.into(),
            mean(&|x| f64::from(u8::from(x.loops_tilde >= 1))).into(),
            mean(&|x| x.k as f64).into(),
            mean(&|x| x.k_tilde as f64).into(),
            mean(&|x| x.extensions as f64).into(),
            total_variation(&emp, &law).into(),
        ]);
    }
    let mut slope = Table::new("graph_tail_slope", &["slope", "slope_se", "flat"]);
    if slope_pts.0.len() >= 2 && slope_pts.1.iter().all(|&y| y > 0.0) {
        let fit = weighted_log_slope(&slope_pts.0, &slope_pts.1, &slope_pts.2);
        slope.push(vec![
            fit.slope.into(),
            fit.slope_se.into(),
            (fit.slope.abs() <= 0.1).into(),
        ]);
    }
    let n0 = cfg.run.n_ladder[0];
    let c = build_coupled(
        q,
        n0,
        lambda,
        t,
        &mut tagged_stream(runner.seed(&format!("graph/{n0}"), 0), tag::GRAPH),
    )?;
    let flags = detect_events(&c);
    let mut events = Table::new(
        "graph_events",
        &[
            "s",
            "t",
            "kind",
            "tier",
            "r",
            "j",
            "cluster_r",
            "cluster_j",
            "subcase",
        ],
    );
    for e in c.events() {
        events.push(vec![
            e.s.into(),
            e.t.into(),
            format!("{:?}", e.kind).into(),
            format!("{:?}", e.tier).into(),
            e.r.into(),
            e.j.into(),
            e.cluster_r.into(),
            e.cluster_j.into(),
            format!("{:?}", e.subcase).into(),
        ]);
    }
    let mut flag_tab = Table::new("graph_flags", &["flag", "value"]);
    for (i, a) in flags.a.iter().enumerate() {
        flag_tab.push(vec![format!("A_{}", i + 1).into(), (*a).into()]);
    }
    for (i, a) in flags.a_tilde.iter().enumerate() {
        flag_tab.push(vec![format!("A~_{}", i + 1).into(), (*a).into()]);
    }
    flag_tab.push(vec!["L~_1q".into(), flags.l_tilde_1q.into()]);
    flag_tab.push(vec!["total_loops".into(), flags.total_loops.into()]);
    Ok(vec![loops_tab, summary, yule, slope, events, flag_tab])
}

/// `f_1 ⊗ … ⊗ f_q` with the configured functionals taken cyclically.
#[must_use]
pub fn tensor_of(fs: &[Functional], q: usize) -> Functional {
    let factors: Vec<Functional> = (0..q).map(|i| fs[i % fs.len()].clone()).collect();
    Functional::tensor(&factors)
}

pub fn expansion_cmd(cfg: &ExperimentConfig, runner: &Runner) -> Tables {
    let model = cfg.model_spec()?;
    let (q, t, l_max) = (cfg.run.q, cfg.run.horizon, cfg.run.l_max);
    let f = tensor_of(&cfg.functionals(), q);
    let mut deltas = Table::new(
        "expansion_delta",
        &["n", "l", "delta", "std_error", "count", "bound"],
    );
    let mut summary = Table::new(
        "expansion_summary",
        &[
            "n",
            "replicas",
            "mean",
            "mean_se",
            "reconstructed",
            "reconstruction_error",
            "remainder",
            "remainder_se",
            "loop_probability",
        ],
    );
    for &n in &cfg.run.n_ladder {
        let samples = runner.try_map(&format!("expansion/{n}"), cfg.run.replicas, |seed| {
            delta_replica(&model, q, n, t, &f, seed)
        })?;
        let rep = ExpansionReport::from_samples(&samples, n, q, t, model.lambda(), l_max, f.bound)?;
        for e in &rep.estimates {
            deltas.push(vec![
                n.into(),
                e.l.into(),
                e.value.into(),
                e.std_error.into(),
                e.count.into(),
                e.bound.into(),
            ]);
        }
        summary.push(vec![
            n.into(),
            rep.replicas.into(),
            rep.mean.into(),
            rep.mean_se.into(),
            (rep.mean + rep.reconstruction_error()).into(),
            rep.reconstruction_error().into(),
            rep.remainder.into(),
            rep.remainder_se.into(),
            rep.loop_probability().into(),
        ]);
    }
    Ok(vec![deltas, summary])
}

/// Functionals centered against the nonlinear law, with their empirical
/// second moments.
#[derive(Debug, Clone)]
pub struct Centered {
    pub fs: Vec<Functional>,
    pub shifts: Vec<f64>,
    /// Whether each shift is the functional's known mean.
    pub known: Vec<bool>,
    /// Sample mean of the centered functional.
    pub residuals: Vec<Estimate>,
    /// `P̃(f̄_a f̄_b)` from the marginal sample.
    pub second: Vec<Vec<f64>>,
}

impl Centered {
    #[must_use]
    pub fn refs(&self) -> Vec<&dyn PathFunctional> {
        self.fs.iter().map(|f| f as &dyn PathFunctional).collect()
    }
}

/// Centers `fs` with their known means when available and with the mean of
/// `draws` marginal draws otherwise.
pub fn center(
    model: &ModelSpec,
    fs: &[Functional],
    horizon: f64,
    draws: u64,
    runner: &Runner,
) -> Result<Centered, RunError> {
    let vals = runner.try_map("marginal", draws, |seed| {
        let sys = realize_marginal(model, horizon, seed)?;
        Ok::<_, propchaos_core::Error>(
            fs.iter()
                .map(|f| f.eval(&[sys.view(0)]))
                .collect::<Vec<f64>>(),
        )
    })?;
    let m = fs.len();
    let mut shifts = Vec::with_capacity(m);
    let mut known = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    for (a, f) in fs.iter().enumerate() {
        let acc: Accumulator = vals.iter().map(|v| v[a]).collect();
        let shift = f.mean.unwrap_or_else(|| acc.mean());
        known.push(f.mean.is_some());
        residuals.push(Estimate {
            value: acc.mean() - shift,
            std_error: acc.std_error(),
            replicas: acc.count(),
        });
        shifts.push(shift);
    }
    let second = (0..m)
        .map(|a| {
            (0..m)
                .map(|b| {
                    vals.iter()
                        .map(|v| (v[a] - shifts[a]) * (v[b] - shifts[b]))
                        .sum::<f64>()
                        / vals.len() as f64
                })
                .collect()
        })
        .collect();
    let centered = fs
        .iter()
        .zip(&shifts)
        .map(|(f, &c)| Functional {
            name: f.name.clone(),
            ..f.shifted(c).with_mean(0.0)
        })
        .collect();
    Ok(Centered {
        fs: centered,
        shifts,
        known,
        residuals,
        second,
    })
}

/// Per-pair estimates in the upper-triangle layout of [`pair_index`].
fn pair_estimates(rows: &[Vec<f64>], pairs: usize) -> Vec<Estimate> {
    (0..pairs)
        .map(|p| Estimate::from(rows.iter().map(|r| r[p]).collect::<Accumulator>()))
        .collect()
}

pub fn wick_direct(
    model: &ModelSpec,
    c: &Centered,
    horizon: f64,
    replicas: u64,
    scheme: WickScheme,
    runner: &Runner,
) -> Result<Vec<Estimate>, RunError> {
    let refs = c.refs();
    let name = match scheme {
        WickScheme::Compensated => "wick/direct",
        WickScheme::LoopOnly => "wick/direct-loop-only",
    };
    let rows = runner.try_map(name, replicas, |seed| {
        wick_direct_replicas(model, &refs, horizon, scheme, seed)
    })?;
    let m = refs.len();
    Ok(pair_estimates(&rows, m * (m + 1) / 2))
}

pub fn wick_limit(
    model: &ModelSpec,
    c: &Centered,
    n: usize,
    horizon: f64,
    replicas: u64,
    runner: &Runner,
) -> Result<Vec<Estimate>, RunError> {
    let refs = c.refs();
    let rows = runner.try_map(&format!("wick/limit/{n}"), replicas, |seed| {
        wick_limit_replicas(model, &refs, n, horizon, seed)
    })?;
    let m = refs.len();
    Ok(pair_estimates(&rows, m * (m + 1) / 2))
}

fn centering_table(c: &Centered) -> Table {
    let mut tab = Table::new(
        "centering",
        &[
            "functional",
            "shift",
            "source",
            "residual",
            "residual_se",
            "draws",
        ],
    );
    for (a, f) in c.fs.iter().enumerate() {
        tab.push(vec![
            f.name.clone().into(),
            c.shifts[a].into(),
            (if c.known[a] { "known" } else { "sample" }).into(),
            c.residuals[a].value.into(),
            c.residuals[a].std_error.into(),
            c.residuals[a].replicas.into(),
        ]);
    }
    tab
}

pub fn wick_cmd(cfg: &ExperimentConfig, runner: &Runner) -> Tables {
    let model = cfg.model_spec()?;
    let t = cfg.run.horizon;
    let c = center(
        &model,
        &cfg.functionals(),
        t,
        cfg.run.marginal_replicas,
        runner,
    )?;
    let m = c.fs.len();
    let direct = wick_direct(
        &model,
        &c,
        t,
        cfg.run.replicas,
        WickScheme::Compensated,
        runner,
    )?;
    let loop_only = wick_direct(
        &model,
        &c,
        t,
        cfg.run.replicas,
        WickScheme::LoopOnly,
        runner,
    )?;
    let mut limits = Vec::new();
    for &n in &cfg.run.n_ladder {
        limits.push((n, wick_limit(&model, &c, n, t, cfg.run.replicas, runner)?));
    }
    let mut vtab = Table::new(
        "wick_v",
        &[
            "f",
            "g",
            "estimator",
            "n",
            "value",
            "std_error",
            "replicas",
            "bound",
        ],
    );
    let mut ktab = Table::new("wick_k", &["f", "g", "second_moment", "v_direct", "k"]);
    for a in 0..m {
        for b in a..m {
            let p = pair_index(m, a, b);
            let (fa, fb) = (c.fs[a].name.clone(), c.fs[b].name.clone());
            let bound = wick_bound(c.fs[a].bound, c.fs[b].bound, model.lambda(), t);
            let mut row = |est: &str, n: Option<usize>, e: &Estimate| {
                vtab.push(vec![
                    fa.clone().into(),
                    fb.clone().into(),
                    est.into(),
                    n.into(),
                    e.value.into(),
                    e.std_error.into(),
                    e.replicas.into(),
                    bound.into(),
                ]);
            };
            row("direct", None, &direct[p]);
            row("direct_loop_only", None, &loop_only[p]);
            for (n, l) in &limits {
                row("limit", Some(*n), &l[p]);
            }
            let second = 0.5 * (c.second[a][b] + c.second[b][a]);
            ktab.push(vec![
                fa.into(),
                fb.into(),
                second.into(),
                direct[p].value.into(),
                (second + direct[p].value).into(),
            ]);
        }
    }
    Ok(vec![vtab, ktab, centering_table(&c)])
}

pub fn clt_cmd(cfg: &ExperimentConfig, runner: &Runner) -> Tables {
    let model = cfg.model_spec()?;
    let t = cfg.run.horizon;
    let c = center(
        &model,
        &cfg.functionals(),
        t,
        cfg.run.marginal_replicas,
        runner,
    )?;
    let m = c.fs.len();
    let direct = wick_direct(
        &model,
        &c,
        t,
        cfg.run.replicas,
        WickScheme::Compensated,
        runner,
    )?;
    let k_hat: Vec<f64> = (0..m)
        .map(|a| c.second[a][a] + direct[pair_index(m, a, a)].value)
        .collect();
    let refs = c.refs();
    let mut ks_tab = Table::new(
        "clt_ks",
        &[
            "n",
            "functional",
            "k_hat",
            "mean",
            "variance",
            "ks_d",
            "ks_critical_1pct",
            "p_value",
            "pass",
        ],
    );
    let mut mom = Table::new(
        "clt_moments",
        &[
            "functional",
            "n",
            "fourth_moment",
            "std_error",
            "n2_fourth_moment",
            "gaussian_reference",
        ],
    );
    let mut fourth: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> =
        vec![(Vec::new(), Vec::new(), Vec::new()); m];
    for &n in &cfg.run.n_ladder {
        let etas = runner.try_map(&format!("clt/{n}"), cfg.run.replicas, |seed| {
            forward_etas(&model, &refs, n, t, seed)
        })?;
        for a in 0..m {
            let mut scaled: Vec<f64> = etas.iter().map(|e| (n as f64).sqrt() * e[a]).collect();
            let acc: Accumulator = scaled.iter().copied().collect();
            let (mean, var) = (acc.mean(), acc.variance());
            let ks = if k_hat[a] > 0.0 {
                let sd = k_hat[a].sqrt();
                let h = if integer_valued(&c.fs[a].name) {
                    1.0 / (n as f64).sqrt()
                } else {
                    0.0
                };
                jitter(
                    &mut scaled,
                    h,
                    runner.seed(&format!("clt/{n}/jitter"), a as u64),
                );
                Some(ks_one_sample(&mut scaled, |x| {
                    smoothed_normal_cdf(x, sd, h)
                }))
            } else {
                None
            };
            ks_tab.push(vec![
                n.into(),
                c.fs[a].name.clone().into(),
                k_hat[a].into(),
                mean.into(),
                var.into(),
                ks.map(|k| k.d).into(),
                ks.map(|k| k.critical_1pct).into(),
                ks.map(|k| k.p_value).into(),
                ks.map(|k| k.passes_1pct()).into(),
            ]);
            let m4: Accumulator = etas.iter().map(|e| e[a].powi(4)).collect();
            let nn = (n as f64).powi(2);
            mom.push(vec![
                c.fs[a].name.clone().into(),
                n.into(),
                m4.mean().into(),
                m4.std_error().into(),
                (nn * m4.mean()).into(),
                (3.0 * k_hat[a] * k_hat[a]).into(),
            ]);
            fourth[a].0.push(n as f64);
            fourth[a].1.push(m4.mean());
            fourth[a].2.push(m4.std_error());
        }
    }
    let mut slope = Table::new("clt_slope", &["functional", "slope", "slope_se", "pass"]);
    for (a, (xs, ys, ses)) in fourth.iter().enumerate() {
        if xs.len() >= 2 && ys.iter().all(|&y| y > 0.0) {
            let fit = weighted_log_slope(xs, ys, ses);
            slope.push(vec![
                c.fs[a].name.clone().into(),
                fit.slope.into(),
                fit.slope_se.into(),
                ((fit.slope + 2.0).abs() <= 0.3).into(),
            ]);
        }
    }
    let mut ktab = Table::new("clt_k", &["f", "g", "k"]);
    for a in 0..m {
        for b in a..m {
            let second = 0.5 * (c.second[a][b] + c.second[b][a]);
            ktab.push(vec![
                c.fs[a].name.clone().into(),
                c.fs[b].name.clone().into(),
                Cell::from(second + direct[pair_index(m, a, b)].value),
            ]);
        }
    }
    Ok(vec![ks_tab, mom, slope, ktab, centering_table(&c)])
}
