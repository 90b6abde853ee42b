//! Forward N-particle simulation, path storage and path functionals.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::combinatorics::{falling_factorial, set_partition_blocks};
use crate::error::{invalid, Result};
use crate::model::{FreeMotion, ModelSpec, State};

/// One particle path: initial state, post-jump states at jump times, and
/// the interval on which the path is meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySkeleton {
    /// Key of the particle for diffusion noise.
    pub key: u64,
    initial: State,
    jumps: Vec<(f64, State)>,
    end: f64,
}

impl TrajectorySkeleton {
    #[must_use]
    pub fn new(key: u64, initial: State, end: f64) -> Self {
        Self {
            key,
            initial,
            jumps: Vec::new(),
            end,
        }
    }

    /// Appends a jump. Times must be strictly increasing.
    pub fn push_jump(&mut self, t: f64, post: State) {
        debug_assert!(
            self.jumps.last().is_none_or(|&(s, _)| s < t),
            "jump times must increase"
        );
        self.jumps.push((t, post));
    }

    #[must_use]
    pub fn initial(&self) -> &State {
        &self.initial
    }

    #[must_use]
    pub fn jumps(&self) -> &[(f64, State)] {
        &self.jumps
    }

    #[must_use]
    pub fn end(&self) -> f64 {
        self.end
    }

    /// Last stored `(time, state)` at or before `t`.
    #[must_use]
    pub fn anchor(&self, t: f64) -> (f64, State) {
        let idx = self.jumps.partition_point(|&(s, _)| s <= t);
        if idx == 0 {
            (0.0, self.initial)
        } else {
            self.jumps[idx - 1]
        }
    }

    #[must_use]
    pub fn state_at(&self, t: f64, motion: &FreeMotion, noise_seed: u64) -> State {
        let (s, z) = self.anchor(t);
        motion.advance(&z, s, t, noise_seed, self.key)
    }
}

/// Read access to one path, as handed to a [`PathFunctional`].
#[derive(Clone, Copy)]
pub enum PathView<'a> {
    Skeleton {
        skeleton: &'a TrajectorySkeleton,
        motion: &'a FreeMotion,
        noise_seed: u64,
    },
    Sampled {
        times: &'a [f64],
        states: &'a [State],
    },
}

impl PathView<'_> {
    /// State at time `t`. Sampled views only answer declared query times.
    ///
    /// # Panics
    /// Panics when a sampled view is queried at an undeclared time.
    #[must_use]
    pub fn state_at(&self, t: f64) -> State {
        match *self {
            PathView::Skeleton {
                skeleton,
                motion,
                noise_seed,
            } => skeleton.state_at(t, motion, noise_seed),
            PathView::Sampled { times, states } => {
                let idx = times
                    .iter()
                    .position(|&s| s == t)
                    .expect("query time not declared by the functional");
                states[idx]
            }
        }
    }

    /// Number of stored jumps on `[0, t]`; zero for sampled views.
    #[must_use]
    pub fn jumps_until(&self, t: f64) -> usize {
        match *self {
            PathView::Skeleton { skeleton, .. } => skeleton.jumps.partition_point(|&(s, _)| s <= t),
            PathView::Sampled { .. } => 0,
        }
    }
}

/// What a functional needs from a path.
#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Times(Vec<f64>),
    FullPath,
}

/// Bounded functional of `q` paths.
pub trait PathFunctional: Send + Sync {
    fn arity(&self) -> usize;

    /// Sup-norm bound.
    fn bound(&self) -> f64;

    fn query(&self) -> Query;

    fn eval(&self, paths: &[PathView<'_>]) -> f64;

    /// Declared invariance under permutations of the arguments.
    fn is_symmetric(&self) -> bool {
        self.arity() <= 1
    }

    /// Exact mean under `P̃_{0:T}^{⊗q}` when known in closed form.
    fn known_mean(&self) -> Option<f64> {
        None
    }

    fn name(&self) -> &str {
        "functional"
    }
}

pub type PathFn = Arc<dyn Fn(&[PathView<'_>]) -> f64 + Send + Sync>;

/// Closure-backed functional.
#[derive(Clone)]
pub struct Functional {
    pub name: String,
    pub arity: usize,
    pub bound: f64,
    pub query: Query,
    pub symmetric: bool,
    pub mean: Option<f64>,
    pub f: PathFn,
}

impl core::fmt::Debug for Functional {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Functional")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("bound", &self.bound)
            .field("query", &self.query)
            .field("symmetric", &self.symmetric)
            .field("mean", &self.mean)
            .finish_non_exhaustive()
    }
}

impl PathFunctional for Functional {
    fn arity(&self) -> usize {
        self.arity
    }

    fn bound(&self) -> f64 {
        self.bound
    }

    fn query(&self) -> Query {
        self.query.clone()
    }

    fn eval(&self, paths: &[PathView<'_>]) -> f64 {
        (self.f)(paths)
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric || self.arity <= 1
    }

    fn known_mean(&self) -> Option<f64> {
        self.mean
    }

    fn name(&self) -> &str {
        &self.name
    }
}

impl Functional {
    /// `z ↦ g(z_t)` for a single path.
    pub fn at_time(
        name: &str,
        t: f64,
        bound: f64,
        g: impl Fn(&State) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            arity: 1,
            bound,
            query: Query::Times(vec![t]),
            symmetric: true,
            mean: None,
            f: Arc::new(move |p| g(&p[0].state_at(t))),
        }
    }

    /// Constant functional of any arity.
    #[must_use]
    pub fn constant(arity: usize, c: f64) -> Self {
        Self {
            name: "constant".into(),
            arity,
            bound: c.abs(),
            query: Query::Times(Vec::new()),
            symmetric: true,
            mean: Some(c),
            f: Arc::new(move |_| c),
        }
    }

    #[must_use]
    pub fn with_mean(mut self, mean: f64) -> Self {
        self.mean = Some(mean);
        self
    }

    /// `f - c`.
    #[must_use]
    pub fn shifted(&self, c: f64) -> Self {
        let f = self.f.clone();
        Self {
            name: self.name.clone(),
            arity: self.arity,
            bound: self.bound + c.abs(),
            query: self.query.clone(),
            symmetric: self.symmetric,
            mean: self.mean.map(|m| m - c),
            f: Arc::new(move |p| f(p) - c),
        }
    }

    /// `f_1 ⊗ … ⊗ f_q` for arity-one factors.
    #[must_use]
    pub fn tensor(factors: &[Functional]) -> Self {
        let fs: Vec<PathFn> = factors.iter().map(|f| f.f.clone()).collect();
        let bound = factors.iter().map(|f| f.bound).product();
        let mean = factors
            .iter()
            .map(|f| f.mean)
            .try_fold(1.0, |acc, m| m.map(|m| acc * m));
        let mut times = Vec::new();
        let mut full = false;
        for f in factors {
            match &f.query {
                Query::Times(ts) => times.extend_from_slice(ts),
                Query::FullPath => full = true,
            }
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        let name = factors
            .iter()
            .map(|f| f.name.as_str())
            .collect::<Vec<_>>()
            .join("*");
        Self {
            name,
            arity: factors.len(),
            bound,
            query: if full {
                Query::FullPath
            } else {
                Query::Times(times)
            },
            symmetric: factors.len() <= 1,
            mean,
            f: Arc::new(move |p| fs.iter().enumerate().map(|(k, f)| f(&p[k..=k])).product()),
        }
    }
}

/// One entry of the collision log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionRecord {
    pub t: f64,
    pub i: u32,
    pub j: u32,
    pub accepted: bool,
}

/// Paths of all `N` particles and the log of candidate interactions.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemTrajectory {
    horizon: f64,
    motion: FreeMotion,
    noise_seed: u64,
    paths: Vec<TrajectorySkeleton>,
    log: Vec<CollisionRecord>,
}

impl SystemTrajectory {
    #[must_use]
    pub fn n(&self) -> usize {
        self.paths.len()
    }

    #[must_use]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[must_use]
    pub fn paths(&self) -> &[TrajectorySkeleton] {
        &self.paths
    }

    #[must_use]
    pub fn log(&self) -> &[CollisionRecord] {
        &self.log
    }

    #[must_use]
    pub fn view(&self, i: usize) -> PathView<'_> {
        PathView::Skeleton {
            skeleton: &self.paths[i],
            motion: &self.motion,
            noise_seed: self.noise_seed,
        }
    }

    #[must_use]
    pub fn state_at(&self, i: usize, t: f64) -> State {
        self.paths[i].state_at(t, &self.motion, self.noise_seed)
    }

    /// States of every particle at the given times, for functionals with a
    /// [`Query::Times`] declaration.
    #[must_use]
    pub fn pruned(&self, times: &[f64]) -> PrunedPaths {
        let states = (0..self.n())
            .map(|i| times.iter().map(|&t| self.state_at(i, t)).collect())
            .collect();
        PrunedPaths {
            times: times.to_vec(),
            states,
        }
    }
}

/// Per-particle states at a fixed list of times.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedPaths {
    times: Vec<f64>,
    states: Vec<Vec<State>>,
}

impl PrunedPaths {
    #[must_use]
    pub fn n(&self) -> usize {
        self.states.len()
    }

    #[must_use]
    pub fn view(&self, i: usize) -> PathView<'_> {
        PathView::Sampled {
            times: &self.times,
            states: &self.states[i],
        }
    }
}

/// Anything that exposes `N` paths.
pub trait PathSet {
    fn len(&self) -> usize;
    fn view(&self, i: usize) -> PathView<'_>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PathSet for SystemTrajectory {
    fn len(&self) -> usize {
        self.n()
    }

    fn view(&self, i: usize) -> PathView<'_> {
        SystemTrajectory::view(self, i)
    }
}

impl PathSet for PrunedPaths {
    fn len(&self) -> usize {
        self.n()
    }

    fn view(&self, i: usize) -> PathView<'_> {
        PrunedPaths::view(self, i)
    }
}

/// Forward simulation on `[0, T]` with one aggregate clock of rate `NΛ/2`,
/// a uniformly chosen unordered pair per candidate, acceptance with
/// probability `mass / Λ` and the model's jump rule.
///
/// Initial states are drawn from `rng`; diffusion noise is keyed by
/// `noise_seed` and the particle index.
pub fn simulate_forward<R: Rng>(
    model: &ModelSpec,
    n: usize,
    horizon: f64,
    noise_seed: u64,
    rng: &mut R,
) -> Result<SystemTrajectory> {
    if n < 2 {
        return invalid("forward simulation needs N >= 2");
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return invalid("horizon must be positive");
    }
    let motion = *model.motion();
    let mut paths: Vec<TrajectorySkeleton> = (0..n)
        .map(|i| TrajectorySkeleton::new(i as u64, model.initial().sample(rng), horizon))
        .collect();
    let mut current: Vec<(f64, State)> = paths.iter().map(|p| (0.0, *p.initial())).collect();
    let mut log = Vec::new();
    let total_rate = n as f64 * model.lambda() / 2.0;
    let mut t = 0.0;
    loop {
        let e: f64 = Exp1.sample(rng);
        t += e / total_rate;
        if t > horizon {
            break;
        }
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let zi = motion.advance(&current[i].1, current[i].0, t, noise_seed, i as u64);
        let zj = motion.advance(&current[j].1, current[j].0, t, noise_seed, j as u64);
        let outcome = model.collide(&zi, &zj, rng);
        let accepted = outcome.is_some();
        if let Some((ni, nj)) = outcome {
            for (k, old, new) in [(i, zi, ni), (j, zj, nj)] {
                if new != old {
                    paths[k].push_jump(t, new);
                    current[k] = (t, new);
                }
            }
        }
        log.push(CollisionRecord {
            t,
            i: i as u32,
            j: j as u32,
            accepted,
        });
    }
    Ok(SystemTrajectory {
        horizon,
        motion,
        noise_seed,
        paths,
        log,
    })
}

/// `(1/N) Σ_i f(Z^i)`.
///
/// # Panics
/// Panics when `f` is not of arity one.
#[must_use]
pub fn eta_empirical<P: PathSet + ?Sized>(paths: &P, f: &dyn PathFunctional) -> f64 {
    assert_eq!(f.arity(), 1, "eta_empirical needs an arity-one functional");
    let n = paths.len();
    (0..n).map(|i| f.eval(&[paths.view(i)])).sum::<f64>() / n as f64
}

/// `(1/(N)_q) Σ_{injections a} F(Z^{a(1)}, …, Z^{a(q)})`. Symmetric `F`
/// is summed over `q`-subsets only.
pub fn u_statistic<P: PathSet + ?Sized>(paths: &P, f: &dyn PathFunctional) -> Result<f64> {
    let q = f.arity();
    let n = paths.len();
    if q > n {
        return invalid("U-statistic order above the number of particles");
    }
    if q == 0 {
        return Ok(f.eval(&[]));
    }
    if !f.is_symmetric() {
        return u_statistic_brute(paths, f);
    }
    let mut idx: Vec<usize> = (0..q).collect();
    let mut views: Vec<PathView<'_>> = idx.iter().map(|&i| paths.view(i)).collect();
    let mut acc = 0.0;
    let mut count = 0u64;
    loop {
        for (slot, &i) in views.iter_mut().zip(&idx) {
            *slot = paths.view(i);
        }
        acc += f.eval(&views);
        count += 1;
        let Some(pos) = (0..q).rev().find(|&k| idx[k] < n - q + k) else {
            break;
        };
        idx[pos] += 1;
        for k in pos + 1..q {
            idx[k] = idx[k - 1] + 1;
        }
    }
    Ok(acc / count as f64)
}

/// Injection-sum oracle; cost `(N)_q` evaluations.
pub fn u_statistic_brute<P: PathSet + ?Sized>(paths: &P, f: &dyn PathFunctional) -> Result<f64> {
    let q = f.arity();
    let n = paths.len();
    if q > n {
        return invalid("U-statistic order above the number of particles");
    }
    let mut acc = 0.0;
    let mut a = vec![0usize; q];
    let mut used = vec![false; n];
    fn rec<P: PathSet + ?Sized>(
        k: usize,
        a: &mut Vec<usize>,
        used: &mut Vec<bool>,
        paths: &P,
        f: &dyn PathFunctional,
        acc: &mut f64,
    ) {
        if k == a.len() {
            let views: Vec<PathView<'_>> = a.iter().map(|&i| paths.view(i)).collect();
            *acc += f.eval(&views);
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                a[k] = i;
                rec(k + 1, a, used, paths, f, acc);
                used[i] = false;
            }
        }
    }
    rec(0, &mut a, &mut used, paths, f, &mut acc);
    Ok(acc / falling_factorial(n, q))
}

/// U-statistic of `f_1 ⊗ … ⊗ f_q` (equivalently of its symmetrization)
/// from the per-particle values `columns[k][i] = f_k(Z^i)`, by Möbius
/// inversion over set partitions of `[q]`. Cost `O(Bell(q) · N · q)`.
pub fn u_statistic_product(columns: &[&[f64]]) -> Result<f64> {
    let q = columns.len();
    if q == 0 {
        return Ok(1.0);
    }
    let n = columns[0].len();
    if columns.iter().any(|c| c.len() != n) {
        return invalid("columns must have equal length");
    }
    if q > n {
        return invalid("U-statistic order above the number of particles");
    }
    let mut acc = 0.0;
    for blocks in set_partition_blocks(q) {
        let mut weight = 1.0;
        let mut prod = 1.0;
        for b in &blocks {
            let m = b.len();
            let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
            weight *= sign * (1..m).product::<usize>() as f64;
            prod *= (0..n)
                .map(|i| b.iter().map(|&k| columns[k][i]).product::<f64>())
                .sum::<f64>();
        }
        acc += weight * prod;
    }
    Ok(acc / falling_factorial(n, q))
}
