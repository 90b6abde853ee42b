//! Backward interaction graphs and the particle systems realized on them.
//!
//! Graphs are generated in graph time `s ∈ [0, T]` starting from `q` root
//! particles labelled `1..=q`. Each event stores both its graph time `s`
//! and the particle time `t = T - s` at which it is realized.
//!
//! Particle labels are 1-based. Labels `1..=N` belong to the finite system;
//! labels above `N` are fresh particles created by extension branches.
//!
//! Realizations share randomness through keyed streams: the initial state
//! of a particle is keyed by its label, the draws of an interaction by the
//! identity of its event, and diffusion noise by label and mesh step. Two
//! systems that keep the same event therefore apply the same jump to it.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::clocks::{exp_race, product_integral, sample_yule, ClusterSizePaths};
use crate::error::{invalid, Error, Result};
use crate::forward::{PathSet, PathView, TrajectorySkeleton};
use crate::model::{FreeMotion, ModelSpec, State};
use crate::rng::{tag, KeyedRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Branch,
    Loop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tier {
    Finite,
    Extension,
}

/// Which draw produced an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubCase {
    /// Finite-tier event.
    Plain,
    /// Extension branch with source in the finite clusters.
    BranchFromFinite,
    /// Extension branch with source among the extension particles.
    BranchFromExtension,
    /// Extension loop, source among the extension particles, partner
    /// anywhere else in the extended clusters.
    LoopAnyPartner,
    /// Extension loop, source among the extension particles, partner in
    /// the finite clusters.
    LoopFinitePartner,
}

/// One event of a backward graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEvent {
    /// Graph time.
    pub s: f64,
    /// Particle time `T - s`.
    pub t: f64,
    pub kind: EventKind,
    pub tier: Tier,
    pub r: u64,
    pub j: u64,
    /// Cluster (0-based) of `r` just before the event.
    pub cluster_r: usize,
    /// Cluster of `j`: the cluster it joins for a branch, its current
    /// cluster for a loop.
    pub cluster_j: usize,
    pub subcase: SubCase,
    /// Position of the event within its tier.
    pub index: u32,
}

impl GraphEvent {
    fn draw_rng(&self, seed: u64) -> KeyedRng {
        let t = match self.tier {
            Tier::Finite => tag::FINITE_EVENT,
            Tier::Extension => tag::EXTENSION_EVENT,
        };
        KeyedRng::new(seed, t, u64::from(self.index))
    }

    /// Whether the event touches a cluster in `lo..=hi` (0-based): a branch
    /// through its source, a loop through both ends.
    #[must_use]
    pub fn in_range(&self, lo: usize, hi: usize) -> bool {
        let inr = |c: usize| lo <= c && c <= hi;
        match self.kind {
            EventKind::Branch => inr(self.cluster_r),
            EventKind::Loop => inr(self.cluster_r) && inr(self.cluster_j),
        }
    }

    #[must_use]
    pub fn touches(&self, cluster: usize) -> bool {
        self.cluster_r == cluster || (self.kind == EventKind::Loop && self.cluster_j == cluster)
    }
}

#[derive(Debug, Clone, Default)]
struct Membership {
    finite: Vec<(u64, usize)>,
    extension: Vec<(u64, usize)>,
}

impl Membership {
    fn roots(q: usize) -> Self {
        Self {
            finite: (0..q).map(|i| (i as u64 + 1, i)).collect(),
            extension: Vec::new(),
        }
    }

    fn k(&self) -> usize {
        self.finite.len()
    }

    fn k_tilde(&self) -> usize {
        self.finite.len() + self.extension.len()
    }

    fn nth(&self, idx: usize) -> (u64, usize) {
        if idx < self.finite.len() {
            self.finite[idx]
        } else {
            self.extension[idx - self.finite.len()]
        }
    }

    fn cluster_of(&self, label: u64) -> Option<usize> {
        self.finite
            .iter()
            .chain(&self.extension)
            .find(|m| m.0 == label)
            .map(|m| m.1)
    }

    fn contains_finite(&self, label: u64) -> bool {
        self.finite.iter().any(|m| m.0 == label)
    }
}

fn validate_dims(q: usize, n: usize, lambda: f64, horizon: f64) -> Result<()> {
    if q == 0 {
        return invalid("q must be at least 1");
    }
    if q > n {
        return invalid("q must not exceed N");
    }
    if n < 2 {
        return invalid("N must be at least 2");
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return invalid("Λ must be positive");
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return invalid("horizon must be positive");
    }
    Ok(())
}

fn finite_rates(k: usize, n: usize, lambda: f64) -> (f64, f64) {
    let (k, nf) = (k as f64, n as f64);
    let branch = lambda * k * (nf - k).max(0.0) / (nf - 1.0);
    let looped = lambda * k * (k - 1.0) / (2.0 * (nf - 1.0));
    (branch, looped)
}

/// Finite-tier backward graph `(C^i, K^i, L)` on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    q: usize,
    n: usize,
    lambda: f64,
    horizon: f64,
    events: Vec<GraphEvent>,
}

impl InteractionGraph {
    #[must_use]
    pub fn q(&self) -> usize {
        self.q
    }

    #[must_use]
    pub fn n(&self) -> usize {
        self.n
    }

    #[must_use]
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[must_use]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[must_use]
    pub fn events(&self) -> &[GraphEvent] {
        &self.events
    }

    /// `K_s`.
    #[must_use]
    pub fn k_at(&self, s: f64) -> usize {
        self.q
            + self
                .events
                .iter()
                .filter(|e| e.s <= s && e.kind == EventKind::Branch)
                .count()
    }

    /// `K^i_s`.
    #[must_use]
    pub fn cluster_size(&self, i: usize, s: f64) -> usize {
        1 + self
            .events
            .iter()
            .filter(|e| e.s <= s && e.kind == EventKind::Branch && e.cluster_r == i)
            .count()
    }

    /// `L_s`, the number of loops on `[0, s]`.
    #[must_use]
    pub fn loops_until(&self, s: f64) -> usize {
        self.events
            .iter()
            .filter(|e| e.s <= s && e.kind == EventKind::Loop)
            .count()
    }

    /// Members of cluster `i` at time `horizon`, in order of arrival.
    #[must_use]
    pub fn cluster(&self, i: usize) -> Vec<u64> {
        let mut out = vec![i as u64 + 1];
        out.extend(
            self.events
                .iter()
                .filter(|e| e.kind == EventKind::Branch && e.cluster_r == i)
                .map(|e| e.j),
        );
        out
    }

    #[must_use]
    pub fn sizes(&self) -> ClusterSizePaths {
        let mut births = vec![Vec::new(); self.q];
        for e in self.events.iter().filter(|e| e.kind == EventKind::Branch) {
            births[e.cluster_r].push(e.s);
        }
        ClusterSizePaths::from_births(self.horizon, births)
    }

    /// Builds a graph from an explicit list of `(s, kind, r, j)` events,
    /// checking that every branch brings in a particle outside the current
    /// clusters and every loop joins two distinct members.
    pub fn from_events(
        q: usize,
        n: usize,
        lambda: f64,
        horizon: f64,
        events: &[(f64, EventKind, u64, u64)],
    ) -> Result<Self> {
        validate_dims(q, n, lambda, horizon)?;
        let mut members = Membership::roots(q);
        let mut out = Vec::with_capacity(events.len());
        let mut last = 0.0;
        for (index, &(s, kind, r, j)) in events.iter().enumerate() {
            if !(s > 0.0 && s <= horizon) || s < last {
                return invalid("event times must be nondecreasing in (0, T]");
            }
            last = s;
            let Some(cluster_r) = members.cluster_of(r) else {
                return invalid("event source is not in the clusters");
            };
            let cluster_j = match kind {
                EventKind::Branch => {
                    if j == 0 || j as usize > n || members.contains_finite(j) {
                        return invalid(
                            "branch partner must be a particle of [N] outside the clusters",
                        );
                    }
                    members.finite.push((j, cluster_r));
                    cluster_r
                }
                EventKind::Loop => match members.cluster_of(j) {
                    Some(c) if j != r => c,
                    _ => return invalid("loop partner must be another member of the clusters"),
                },
            };
            out.push(GraphEvent {
                s,
                t: horizon - s,
                kind,
                tier: Tier::Finite,
                r,
                j,
                cluster_r,
                cluster_j,
                subcase: SubCase::Plain,
                index: index as u32,
            });
        }
        Ok(Self {
            q,
            n,
            lambda,
            horizon,
            events: out,
        })
    }
}

/// Samples the finite-tier graph: an exponential race between the branch
/// clock of rate `ΛK(N-K)_+/(N-1)` and the loop clock of rate
/// `ΛK(K-1)/(2(N-1))`, with `r` uniform in the cluster union, a branch
/// partner uniform in `[N]` outside the union and a loop partner uniform in
/// the union minus `r`.
pub fn build_graph<R: Rng + ?Sized>(
    q: usize,
    n: usize,
    lambda: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<InteractionGraph> {
    validate_dims(q, n, lambda, horizon)?;
    let mut members = Membership::roots(q);
    let mut events = Vec::new();
    let mut s = 0.0;
    loop {
        let k = members.k();
        let (rb, rl) = finite_rates(k, n, lambda);
        let Some(race) = exp_race(&[rb, rl], rng)? else {
            break;
        };
        s += race.holding;
        if s > horizon {
            break;
        }
        let (r, cluster_r) = members.finite[rng.random_range(0..k)];
        let index = events.len() as u32;
        let (kind, j, cluster_j) = if race.winner == 0 {
            assert!(k < n, "branch fired with K >= N");
            let j = loop {
                let cand = rng.random_range(1..=n as u64);
                if !members.contains_finite(cand) {
                    break cand;
                }
            };
            members.finite.push((j, cluster_r));
            (EventKind::Branch, j, cluster_r)
        } else {
            let pos = members.finite.iter().position(|m| m.0 == r).unwrap_or(0);
            let mut idx = rng.random_range(0..k - 1);
            if idx >= pos {
                idx += 1;
            }
            let (j, cj) = members.finite[idx];
            (EventKind::Loop, j, cj)
        };
        events.push(GraphEvent {
            s,
            t: horizon - s,
            kind,
            tier: Tier::Finite,
            r,
            j,
            cluster_r,
            cluster_j,
            subcase: SubCase::Plain,
            index,
        });
    }
    Ok(InteractionGraph {
        q,
        n,
        lambda,
        horizon,
        events,
    })
}

/// Finite graph together with its infinite-population extension.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledGraphs {
    graph: InteractionGraph,
    events: Vec<GraphEvent>,
}

impl CoupledGraphs {
    #[must_use]
    pub fn graph(&self) -> &InteractionGraph {
        &self.graph
    }

    /// All events of both tiers in graph-time order.
    #[must_use]
    pub fn events(&self) -> &[GraphEvent] {
        &self.events
    }

    #[must_use]
    pub fn q(&self) -> usize {
        self.graph.q
    }

    #[must_use]
    pub fn horizon(&self) -> f64 {
        self.graph.horizon
    }

    /// `K̃_s`.
    #[must_use]
    pub fn k_tilde_at(&self, s: f64) -> usize {
        self.graph.q
            + self
                .events
                .iter()
                .filter(|e| e.s <= s && e.kind == EventKind::Branch)
                .count()
    }

    /// `L̃_s`.
    #[must_use]
    pub fn loops_tilde_until(&self, s: f64) -> usize {
        self.events
            .iter()
            .filter(|e| e.s <= s && e.kind == EventKind::Loop)
            .count()
    }

    /// Extended cluster size paths `K̃^i`.
    #[must_use]
    pub fn sizes(&self) -> ClusterSizePaths {
        let mut births = vec![Vec::new(); self.graph.q];
        for e in self.events.iter().filter(|e| e.kind == EventKind::Branch) {
            births[e.cluster_r].push(e.s);
        }
        ClusterSizePaths::from_births(self.graph.horizon, births)
    }

    #[must_use]
    pub fn extension_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.tier == Tier::Extension)
            .count()
    }

    /// Checks the pathwise properties of the coupling: `K̃ ≥ K` and
    /// `L̃ ≥ L` at every event, the finite tier embedded unchanged, and
    /// disjoint clusters whose sizes add up.
    pub fn check_invariants(&self) -> Result<()> {
        let finite: Vec<&GraphEvent> = self
            .events
            .iter()
            .filter(|e| e.tier == Tier::Finite)
            .collect();
        if finite.len() != self.graph.events.len()
            || finite.iter().zip(&self.graph.events).any(|(a, b)| *a != b)
        {
            return invalid("finite tier is not embedded in the coupled log");
        }
        let mut seen: BTreeMap<u64, usize> = (0..self.graph.q).map(|i| (i as u64 + 1, i)).collect();
        for e in &self.events {
            if self.k_tilde_at(e.s) < self.graph.k_at(e.s)
                || self.loops_tilde_until(e.s) < self.graph.loops_until(e.s)
            {
                return invalid("extension does not dominate the finite tier");
            }
            if seen.get(&e.r) != Some(&e.cluster_r) {
                return invalid("event source outside its recorded cluster");
            }
            match e.kind {
                EventKind::Branch => {
                    if seen.insert(e.j, e.cluster_r).is_some() {
                        return invalid("branch partner already in a cluster");
                    }
                }
                EventKind::Loop => {
                    if e.r == e.j || seen.get(&e.j) != Some(&e.cluster_j) {
                        return invalid("loop partner outside its recorded cluster");
                    }
                }
            }
        }
        let sizes = self.sizes();
        if sizes.final_total() != seen.len() {
            return invalid("cluster sizes do not add up");
        }
        Ok(())
    }
}

/// Samples the finite graph from `rng` exactly as [`build_graph`] does,
/// then adds the extension tier: between finite events, an extension branch
/// clock of rate `ΛK̃ - ΛK(N-K)_+/(N-1)` races an extension loop clock of
/// rate `(ΛK̃(K̃-1) - ΛK(K-1))/(2(N-1))`.
pub fn build_coupled<R: Rng + ?Sized>(
    q: usize,
    n: usize,
    lambda: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<CoupledGraphs> {
    let graph = build_graph(q, n, lambda, horizon, rng)?;
    extend(graph, rng)
}

/// Adds the extension tier to an existing finite graph.
pub fn extend<R: Rng + ?Sized>(graph: InteractionGraph, rng: &mut R) -> Result<CoupledGraphs> {
    let (n, lambda, horizon) = (graph.n, graph.lambda, graph.horizon);
    let nf = n as f64;
    let mut members = Membership::roots(graph.q);
    let mut events = Vec::with_capacity(graph.events.len());
    let mut next_fresh = n as u64 + 1;
    let mut ext_index = 0u32;
    let mut s = 0.0;
    let mut finite_iter = graph.events.iter().peekable();
    loop {
        let next_finite = finite_iter.peek().map_or(f64::INFINITY, |e| e.s);
        let (k, kt) = (members.k() as f64, members.k_tilde() as f64);
        let (rb, _) = finite_rates(members.k(), n, lambda);
        let eb = lambda * kt - rb;
        let el = (lambda * kt * (kt - 1.0) - lambda * k * (k - 1.0)) / (2.0 * (nf - 1.0));
        assert!(
            eb >= -1e-9 * lambda * kt && el >= -1e-9 * lambda * kt * kt,
            "negative extension rate"
        );
        let rates = [eb.max(0.0), el.max(0.0)];
        let race = exp_race(&rates, rng)?;
        let candidate = race.map_or(f64::INFINITY, |r| s + r.holding);
        if candidate >= next_finite || candidate > horizon {
            let Some(fe) = finite_iter.next() else {
                break;
            };
            s = fe.s;
            if fe.kind == EventKind::Branch {
                members.finite.push((fe.j, fe.cluster_r));
            }
            events.push(*fe);
            continue;
        }
        let race = race.ok_or_else(|| Error::InvalidCall("extension race without rates".into()))?;
        s = candidate;
        let kk = members.k();
        let ext = members.extension.len();
        let event = if race.winner == 0 {
            let kp = k - k * (nf - k).max(0.0) / (nf - 1.0);
            let denom = kt - k * (nf - k).max(0.0) / (nf - 1.0);
            let from_finite = rng.random::<f64>() * denom < kp;
            let ((r, cluster_r), subcase) = if from_finite {
                (
                    members.finite[rng.random_range(0..kk)],
                    SubCase::BranchFromFinite,
                )
            } else {
                assert!(ext > 0, "extension branch from an empty extension set");
                (
                    members.extension[rng.random_range(0..ext)],
                    SubCase::BranchFromExtension,
                )
            };
            let j = next_fresh;
            next_fresh += 1;
            members.extension.push((j, cluster_r));
            GraphEvent {
                s,
                t: horizon - s,
                kind: EventKind::Branch,
                tier: Tier::Extension,
                r,
                j,
                cluster_r,
                cluster_j: cluster_r,
                subcase,
                index: ext_index,
            }
        } else {
            assert!(ext > 0, "extension loop without extension particles");
            let denom = kt * (kt - 1.0) - k * (k - 1.0);
            let p_any = (kt - k) * (kt - 1.0) / denom;
            let any = rng.random::<f64>() < p_any;
            let ridx = rng.random_range(0..ext);
            let (r, cluster_r) = members.extension[ridx];
            let ((j, cluster_j), subcase) = if any {
                let mut idx = rng.random_range(0..members.k_tilde() - 1);
                if idx >= kk + ridx {
                    idx += 1;
                }
                (members.nth(idx), SubCase::LoopAnyPartner)
            } else {
                (
                    members.finite[rng.random_range(0..kk)],
                    SubCase::LoopFinitePartner,
                )
            };
            GraphEvent {
                s,
                t: horizon - s,
                kind: EventKind::Loop,
                tier: Tier::Extension,
                r,
                j,
                cluster_r,
                cluster_j,
                subcase,
                index: ext_index,
            }
        };
        ext_index += 1;
        events.push(event);
    }
    Ok(CoupledGraphs { graph, events })
}

/// Event indicators of a coupled graph. Clusters are 0-based; a pair
/// `(i, j)` stands for the cluster range `i..=j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFlags {
    pub q: usize,
    /// `A_i`: every event touching cluster `i` is a finite branch.
    pub a: Vec<bool>,
    /// `Ã_i`: every event touching cluster `i` is a branch.
    pub a_tilde: Vec<bool>,
    /// `A^{i,j}_l` for `i < j`, keyed by `(i, j)`, indexed by `l - i`.
    pub a_range: BTreeMap<(usize, usize), Vec<bool>>,
    /// `B_{i,j}`: for every `l ∈ i..=j`, some event of the range touching
    /// `l` is not a finite branch.
    pub b: BTreeMap<(usize, usize), bool>,
    /// `B̃_{i,j}`: same with "not a branch".
    pub b_tilde: BTreeMap<(usize, usize), bool>,
    /// `B'_{i,j}`: the range contains an extension branch.
    pub b_prime: BTreeMap<(usize, usize), bool>,
    /// Loops of either tier inside the range.
    pub loops_in_range: BTreeMap<(usize, usize), usize>,
    /// Cross loops between clusters `2i` and `2i+1`, for each pair block.
    pub block_cross_loops: Vec<usize>,
    /// Total loops of both tiers on `[0, T]`.
    pub total_loops: usize,
    /// Exactly one cross loop in every pair block and `q/2` loops in total.
    /// Always false for odd `q`.
    pub l_tilde_1q: bool,
}

/// Pure function of the event log.
#[must_use]
pub fn detect_events(coupled: &CoupledGraphs) -> EventFlags {
    let q = coupled.q();
    let ev = coupled.events();
    let is_finite_branch = |e: &GraphEvent| e.kind == EventKind::Branch && e.tier == Tier::Finite;
    let is_branch = |e: &GraphEvent| e.kind == EventKind::Branch;
    let all_ok = |l: usize, range: Option<(usize, usize)>, ok: &dyn Fn(&GraphEvent) -> bool| {
        ev.iter()
            .filter(|e| range.is_none_or(|(i, j)| e.in_range(i, j)))
            .filter(|e| e.touches(l))
            .all(ok)
    };
    let a = (0..q).map(|l| all_ok(l, None, &is_finite_branch)).collect();
    let a_tilde = (0..q).map(|l| all_ok(l, None, &is_branch)).collect();
    let mut a_range = BTreeMap::new();
    let mut b = BTreeMap::new();
    let mut b_tilde = BTreeMap::new();
    let mut b_prime = BTreeMap::new();
    let mut loops_in_range = BTreeMap::new();
    for i in 0..q {
        for j in i + 1..q {
            let flags: Vec<bool> = (i..=j)
                .map(|l| all_ok(l, Some((i, j)), &is_finite_branch))
                .collect();
            b.insert((i, j), flags.iter().all(|f| !f));
            a_range.insert((i, j), flags);
            b_tilde.insert(
                (i, j),
                (i..=j).all(|l| !all_ok(l, Some((i, j)), &is_branch)),
            );
            b_prime.insert(
                (i, j),
                ev.iter().any(|e| {
                    e.in_range(i, j) && e.kind == EventKind::Branch && e.tier == Tier::Extension
                }),
            );
            loops_in_range.insert(
                (i, j),
                ev.iter()
                    .filter(|e| e.in_range(i, j) && e.kind == EventKind::Loop)
                    .count(),
            );
        }
    }
    let block_cross_loops: Vec<usize> = (0..q / 2)
        .map(|blk| {
            let (x, y) = (2 * blk, 2 * blk + 1);
            ev.iter()
                .filter(|e| {
                    e.kind == EventKind::Loop
                        && ((e.cluster_r == x && e.cluster_j == y)
                            || (e.cluster_r == y && e.cluster_j == x))
                })
                .count()
        })
        .collect();
    let total_loops = ev.iter().filter(|e| e.kind == EventKind::Loop).count();
    let l_tilde_1q =
        q % 2 == 0 && block_cross_loops.iter().all(|&c| c == 1) && total_loops == q / 2;
    EventFlags {
        q,
        a,
        a_tilde,
        a_range,
        b,
        b_tilde,
        b_prime,
        loops_in_range,
        block_cross_loops,
        total_loops,
        l_tilde_1q,
    }
}

/// Paths of the root particles of a realized system, plus the ancestor
/// paths that fed into them.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedSystem {
    horizon: f64,
    motion: FreeMotion,
    noise_seed: u64,
    roots: usize,
    labels: Vec<u64>,
    paths: Vec<TrajectorySkeleton>,
}

impl RealizedSystem {
    #[must_use]
    pub fn roots(&self) -> usize {
        self.roots
    }

    #[must_use]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Path of root `i` (0-based).
    #[must_use]
    pub fn path(&self, i: usize) -> &TrajectorySkeleton {
        &self.paths[i]
    }

    /// Every simulated particle with its label, roots first.
    pub fn particles(&self) -> impl Iterator<Item = (u64, &TrajectorySkeleton)> {
        self.labels.iter().copied().zip(&self.paths)
    }

    #[must_use]
    pub fn state_at(&self, i: usize, t: f64) -> State {
        self.paths[i].state_at(t, &self.motion, self.noise_seed)
    }
}

impl PathSet for RealizedSystem {
    fn len(&self) -> usize {
        self.roots
    }

    fn view(&self, i: usize) -> PathView<'_> {
        PathView::Skeleton {
            skeleton: &self.paths[i],
            motion: &self.motion,
            noise_seed: self.noise_seed,
        }
    }
}

/// Realizes the system with roots `1..=roots` driven by `events` (in graph
/// time order). A particle brought in by a branch at graph time `s` lives
/// on `[0, T - s]`; events whose source is not reached from the roots are
/// ignored.
pub fn realize_events<'a, I>(
    events: I,
    roots: usize,
    horizon: f64,
    model: &ModelSpec,
    seed: u64,
) -> RealizedSystem
where
    I: IntoIterator<Item = &'a GraphEvent>,
{
    let mut labels: Vec<u64> = (1..=roots as u64).collect();
    let mut ends: Vec<f64> = vec![horizon; roots];
    let mut slot: BTreeMap<u64, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let mut kept: Vec<&GraphEvent> = Vec::new();
    for e in events {
        if !slot.contains_key(&e.r) {
            continue;
        }
        match e.kind {
            EventKind::Branch => {
                if slot.contains_key(&e.j) {
                    continue;
                }
                slot.insert(e.j, labels.len());
                labels.push(e.j);
                ends.push(e.t);
            }
            EventKind::Loop => {
                if !slot.contains_key(&e.j) {
                    continue;
                }
            }
        }
        kept.push(e);
    }
    let motion = *model.motion();
    let mut paths: Vec<TrajectorySkeleton> = labels
        .iter()
        .zip(&ends)
        .map(|(&label, &end)| {
            let mut rng = KeyedRng::new(seed, tag::INITIAL, label);
            TrajectorySkeleton::new(label, model.initial().sample(&mut rng), end)
        })
        .collect();
    let mut current: Vec<(f64, State)> = paths.iter().map(|p| (0.0, *p.initial())).collect();
    for e in kept.iter().rev() {
        let (a, b) = (slot[&e.r], slot[&e.j]);
        let za = motion.advance(&current[a].1, current[a].0, e.t, seed, e.r);
        let zb = motion.advance(&current[b].1, current[b].0, e.t, seed, e.j);
        let mut rng = e.draw_rng(seed);
        if let Some((na, nb)) = model.collide(&za, &zb, &mut rng) {
            for (k, old, new) in [(a, za, na), (b, zb, nb)] {
                if new != old {
                    paths[k].push_jump(e.t, new);
                    current[k] = (e.t, new);
                }
            }
        }
    }
    RealizedSystem {
        horizon,
        motion,
        noise_seed: seed,
        roots,
        labels,
        paths,
    }
}

/// `Z`: the finite tier realized on its own.
#[must_use]
pub fn realize_z(graph: &InteractionGraph, model: &ModelSpec, seed: u64) -> RealizedSystem {
    realize_events(&graph.events, graph.q, graph.horizon, model, seed)
}

/// `Z̃`: every event of both tiers.
#[must_use]
pub fn realize_ztilde(coupled: &CoupledGraphs, model: &ModelSpec, seed: u64) -> RealizedSystem {
    realize_events(&coupled.events, coupled.q(), coupled.horizon(), model, seed)
}

/// `Z̃̃`: every event except loops of either tier.
#[must_use]
pub fn realize_ztt(coupled: &CoupledGraphs, model: &ModelSpec, seed: u64) -> RealizedSystem {
    realize_events(
        coupled
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Branch),
        coupled.q(),
        coupled.horizon(),
        model,
        seed,
    )
}

/// `Ž^{1,k}`: finite events inside the cluster range `1..=k`, realized
/// for roots `1..=k`.
pub fn realize_zcheck(
    coupled: &CoupledGraphs,
    model: &ModelSpec,
    k: usize,
    seed: u64,
) -> Result<RealizedSystem> {
    if k == 0 || k > coupled.q() {
        return invalid("range end must lie in 1..=q");
    }
    Ok(realize_events(
        coupled.graph.events.iter().filter(|e| e.in_range(0, k - 1)),
        k,
        coupled.horizon(),
        model,
        seed,
    ))
}

/// `Ž̃`: events of both tiers inside some pair block `(2i-1, 2i)`.
pub fn realize_zcheck_tilde(
    coupled: &CoupledGraphs,
    model: &ModelSpec,
    seed: u64,
) -> Result<RealizedSystem> {
    let q = coupled.q();
    if q % 2 == 1 {
        return invalid("pair blocks need an even q");
    }
    Ok(realize_events(
        coupled
            .events
            .iter()
            .filter(|e| (0..q / 2).any(|b| e.in_range(2 * b, 2 * b + 1))),
        q,
        coupled.horizon(),
        model,
        seed,
    ))
}

/// Limit configuration for pair blocks: `q` independent Yule genealogies
/// of rate `Λ` and one cross loop per block `(2i-1, 2i)`, placed at a time
/// with density proportional to `K̃^{2i-1}_s K̃^{2i}_s` on a uniform pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSample {
    pub q: usize,
    pub horizon: f64,
    pub sizes: ClusterSizePaths,
    /// Tree births, in graph-time order.
    pub births: Vec<GraphEvent>,
    /// One loop per pair block.
    pub loops: Vec<GraphEvent>,
    /// Two grafts per block, for the loop's `r` end then its `j` end: a
    /// branch from that end at the loop time onto a fresh particle, plus
    /// the fresh particle's own Yule genealogy.
    pub grafts: Vec<Vec<GraphEvent>>,
    /// `∏_i ∫_0^T Λ K̃^{2i-1}_s K̃^{2i}_s ds`.
    pub weight: f64,
}

/// What a pair block contributes on top of the shared forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockTerm {
    Forest,
    Loop,
    /// Graft on the loop's `r` end.
    GraftR,
    /// Graft on the loop's `j` end.
    GraftJ,
}

impl LimitSample {
    /// Tree births and block loops merged in graph-time order.
    #[must_use]
    pub fn all_events(&self) -> Vec<GraphEvent> {
        self.events_for(&vec![BlockTerm::Loop; self.q / 2])
    }

    /// Tree births plus, for each block, the events selected by `terms`,
    /// merged in graph-time order.
    ///
    /// # Panics
    /// If `terms` does not hold one entry per block.
    #[must_use]
    pub fn events_for(&self, terms: &[BlockTerm]) -> Vec<GraphEvent> {
        assert_eq!(terms.len(), self.q / 2, "one term per pair block");
        let mut ev: Vec<GraphEvent> = self.births.clone();
        for (blk, term) in terms.iter().enumerate() {
            match term {
                BlockTerm::Forest => {}
                BlockTerm::Loop => ev.push(self.loops[blk]),
                BlockTerm::GraftR => ev.extend_from_slice(&self.grafts[2 * blk]),
                BlockTerm::GraftJ => ev.extend_from_slice(&self.grafts[2 * blk + 1]),
            }
        }
        ev.sort_by(|a, b| a.s.total_cmp(&b.s));
        ev
    }
}

/// `q` independent Yule genealogies of rate `Λ` rooted at labels `1..=q`:
/// each birth attaches a fresh label (above `q`) to a uniformly chosen
/// current member of its cluster.
pub fn sample_forest<R: Rng + ?Sized>(
    q: usize,
    lambda: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<(ClusterSizePaths, Vec<GraphEvent>, Vec<Vec<u64>>)> {
    let sizes = sample_yule(q, lambda, horizon, rng)?;
    let mut merged: Vec<(f64, usize)> = (0..q)
        .flat_map(|i| sizes.births(i).iter().map(move |&s| (s, i)))
        .collect();
    merged.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut members: Vec<Vec<u64>> = (0..q).map(|i| vec![i as u64 + 1]).collect();
    let mut births = Vec::with_capacity(merged.len());
    for (index, &(s, c)) in merged.iter().enumerate() {
        let next = q as u64 + 1 + index as u64;
        let r = members[c][rng.random_range(0..members[c].len())];
        members[c].push(next);
        births.push(GraphEvent {
            s,
            t: horizon - s,
            kind: EventKind::Branch,
            tier: Tier::Extension,
            r,
            j: next,
            cluster_r: c,
            cluster_j: c,
            subcase: SubCase::BranchFromExtension,
            index: index as u32,
        });
    }
    Ok((sizes, births, members))
}

/// One draw from the nonlinear path law: a single Yule genealogy realized
/// without loops.
pub fn realize_marginal(model: &ModelSpec, horizon: f64, seed: u64) -> Result<RealizedSystem> {
    let mut rng = crate::rng::tagged_stream(seed, tag::LIMIT_TREE);
    let (_, births, _) = sample_forest(1, model.lambda(), horizon, &mut rng)?;
    Ok(realize_events(&births, 1, horizon, model, seed))
}

/// Samples a [`LimitSample`]. Fresh labels start above `q`.
pub fn sample_limit<R: Rng + ?Sized>(
    q: usize,
    lambda: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<LimitSample> {
    if q == 0 || q % 2 == 1 {
        return invalid("limit sample needs an even q");
    }
    let (sizes, births, members) = sample_forest(q, lambda, horizon, rng)?;
    let mut weight = 1.0;
    let mut loops = Vec::with_capacity(q / 2);
    for blk in 0..q / 2 {
        let (x, y) = (2 * blk, 2 * blk + 1);
        let (bx, by) = (sizes.births(x), sizes.births(y));
        let total = product_integral(bx, by, horizon);
        weight *= lambda * total;
        let target = rng.random::<f64>() * total;
        let s = invert_product_integral(bx, by, horizon, target);
        let kx = 1 + bx.partition_point(|&b| b <= s);
        let ky = 1 + by.partition_point(|&b| b <= s);
        let a = members[x][rng.random_range(0..kx)];
        let b = members[y][rng.random_range(0..ky)];
        let (r, j, cr, cj) = if rng.random::<bool>() {
            (a, b, x, y)
        } else {
            (b, a, y, x)
        };
        loops.push(GraphEvent {
            s,
            t: horizon - s,
            kind: EventKind::Loop,
            tier: Tier::Extension,
            r,
            j,
            cluster_r: cr,
            cluster_j: cj,
            subcase: SubCase::LoopAnyPartner,
            index: (births.len() + blk) as u32,
        });
    }
    let mut next = q as u64 + births.len() as u64 + 1;
    let mut index = (births.len() + q / 2) as u32;
    let mut grafts = Vec::with_capacity(q);
    for lp in &loops {
        for (end, cluster) in [(lp.r, lp.cluster_r), (lp.j, lp.cluster_j)] {
            let (_, sub, _) = sample_forest(1, lambda, horizon - lp.s, rng)?;
            let fresh = next;
            let relabel = |l: u64| if l == 1 { fresh } else { fresh + l - 1 };
            next += sub.len() as u64 + 1;
            let mut graft = Vec::with_capacity(sub.len() + 1);
            graft.push(GraphEvent {
                r: end,
                j: fresh,
                kind: EventKind::Branch,
                cluster_r: cluster,
                cluster_j: cluster,
                subcase: SubCase::BranchFromExtension,
                index,
                ..*lp
            });
            index += 1;
            for e in sub {
                let s = lp.s + e.s;
                graft.push(GraphEvent {
                    s,
                    t: horizon - s,
                    r: relabel(e.r),
                    j: relabel(e.j),
                    cluster_r: cluster,
                    cluster_j: cluster,
                    index,
                    ..e
                });
                index += 1;
            }
            grafts.push(graft);
        }
    }
    Ok(LimitSample {
        q,
        horizon,
        sizes,
        births,
        loops,
        grafts,
        weight,
    })
}

/// Smallest `s` with `∫_0^s K^a K^b = target`.
fn invert_product_integral(a: &[f64], b: &[f64], horizon: f64, target: f64) -> f64 {
    let (mut ia, mut ib) = (0, 0);
    let (mut ka, mut kb) = (1.0, 1.0);
    let mut t = 0.0;
    let mut acc = 0.0;
    loop {
        let na = a.get(ia).copied().unwrap_or(f64::INFINITY);
        let nb = b.get(ib).copied().unwrap_or(f64::INFINITY);
        let next = na.min(nb).min(horizon);
        let piece = ka * kb * (next - t);
        if acc + piece >= target || next >= horizon {
            return (t + (target - acc) / (ka * kb)).min(horizon);
        }
        acc += piece;
        t = next;
        if na <= nb {
            ia += 1;
            ka += 1.0;
        } else {
            ib += 1;
            kb += 1.0;
        }
    }
}

/// Limit system with each block's contribution chosen by `terms`, sharing
/// every other draw. All `Loop` gives `Ž̃` in the limit, all `Forest`
/// gives `Z̃̃`.
#[must_use]
pub fn realize_limit(
    sample: &LimitSample,
    model: &ModelSpec,
    terms: &[BlockTerm],
    seed: u64,
) -> RealizedSystem {
    realize_events(
        &sample.events_for(terms),
        sample.q,
        sample.horizon,
        model,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn invert_matches_integral() {
        let a = [0.2, 0.5];
        let b = [0.7];
        let total = product_integral(&a, &b, 1.0);
        for frac in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let s = invert_product_integral(&a, &b, 1.0, frac * total);
            let back = product_integral(
                &a.iter().copied().filter(|&x| x <= s).collect::<Vec<_>>(),
                &b.iter().copied().filter(|&x| x <= s).collect::<Vec<_>>(),
                s,
            );
            assert!((back - frac * total).abs() < 1e-12, "{frac}");
        }
    }

    #[test]
    fn coupled_invariants_hold() {
        let mut rng = stream(11);
        for _ in 0..500 {
            let c = build_coupled(3, 6, 1.0, 1.5, &mut rng).unwrap();
            c.check_invariants().unwrap();
        }
    }

    #[test]
    fn full_occupancy_has_no_branch() {
        let mut rng = stream(3);
        for _ in 0..200 {
            let g = build_graph(4, 4, 1.0, 1.0, &mut rng).unwrap();
            assert!(g.events().iter().all(|e| e.kind == EventKind::Loop));
        }
    }
}
