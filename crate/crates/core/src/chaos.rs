//! Estimators built on the particle systems: symmetrization, the Stirling
//! expansion of tensor powers of an empirical measure, Hoeffding
//! components, loop-expansion coefficients, Wick covariances and the CLT
//! covariance.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::clocks::yule_sum_moment;
use crate::combinatorics::{
    alternating_sum, falling_factorial, maps_by_image_size, pair_count, permutations, StirlingTable,
};
use crate::error::{invalid, Result};
use crate::forward::{
    simulate_forward, u_statistic_product, PathFunctional, PathSet, PathView, Query,
};
use crate::graph::{
    build_graph, realize_limit, realize_marginal, realize_z, sample_limit, BlockTerm,
};
use crate::model::ModelSpec;
use crate::rng::{tag, tagged_stream};
use crate::stats::Accumulator;

/// `F_sym = (1/q!) Σ_σ F ∘ σ`.
pub struct Symmetrized {
    inner: Arc<dyn PathFunctional>,
    perms: Vec<Vec<usize>>,
    name: String,
}

impl PathFunctional for Symmetrized {
    fn arity(&self) -> usize {
        self.inner.arity()
    }

    fn bound(&self) -> f64 {
        self.inner.bound()
    }

    fn query(&self) -> Query {
        self.inner.query()
    }

    fn eval(&self, paths: &[PathView<'_>]) -> f64 {
        let mut buf: Vec<PathView<'_>> = paths.to_vec();
        let mut acc = 0.0;
        for p in &self.perms {
            for (slot, &k) in buf.iter_mut().zip(p) {
                *slot = paths[k];
            }
            acc += self.inner.eval(&buf);
        }
        acc / self.perms.len() as f64
    }

    fn is_symmetric(&self) -> bool {
        true
    }

    fn known_mean(&self) -> Option<f64> {
        self.inner.known_mean()
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Symmetrized functional; symmetric input is returned unchanged.
#[must_use]
pub fn symmetrize(f: Arc<dyn PathFunctional>) -> Arc<dyn PathFunctional> {
    if f.is_symmetric() {
        return f;
    }
    let name = format!("sym({})", f.name());
    let perms = permutations(f.arity());
    Arc::new(Symmetrized {
        inner: f,
        perms,
        name,
    })
}

/// `m^{⊗q}(F) = N^{-q} Σ_{b: [q] → [N]} F(x_{b(1)}, …, x_{b(q)})`, by
/// enumeration.
pub fn tensor_brute<T>(points: &[T], q: usize, f: &dyn Fn(&[&T]) -> f64) -> Result<f64> {
    let n = points.len();
    if n == 0 {
        return invalid("empty point set");
    }
    let total = n
        .checked_pow(q as u32)
        .ok_or_else(|| crate::Error::InvalidArgument("tensor too large".into()))?;
    let mut acc = 0.0;
    let mut args: Vec<&T> = vec![&points[0]; q];
    for mut code in 0..total {
        for slot in args.iter_mut() {
            *slot = &points[code % n];
            code /= n;
        }
        acc += f(&args);
    }
    Ok(acc / total as f64)
}

/// `m^{⊙q}(F) = (1/(N)_q) Σ_{injections a} F(x_{a(1)}, …, x_{a(q)})`, by
/// enumeration.
pub fn diagonal_free_brute<T>(points: &[T], q: usize, f: &dyn Fn(&[&T]) -> f64) -> Result<f64> {
    let n = points.len();
    if q > n {
        return invalid("order above the number of points");
    }
    let mut acc = 0.0;
    let mut idx = vec![0usize; q];
    let mut used = vec![false; n];
    fn rec<T>(
        k: usize,
        idx: &mut Vec<usize>,
        used: &mut Vec<bool>,
        points: &[T],
        f: &dyn Fn(&[&T]) -> f64,
        acc: &mut f64,
    ) {
        if k == idx.len() {
            let args: Vec<&T> = idx.iter().map(|&i| &points[i]).collect();
            *acc += f(&args);
            return;
        }
        for i in 0..points.len() {
            if !used[i] {
                used[i] = true;
                idx[k] = i;
                rec(k + 1, idx, used, points, f, acc);
                used[i] = false;
            }
        }
    }
    rec(0, &mut idx, &mut used, points, f, &mut acc);
    Ok(acc / falling_factorial(n, q))
}

/// Right-hand side of
/// `m^{⊗q}(F) = m^{⊙q}( Σ_{k<q} N^{-k} Σ_{p=q-k}^{q} s(p, q-k)/(q)_p Σ_{#Im a = p} D_a F )`
/// with `D_a F(x_1, …, x_q) = F(x_{a(1)}, …, x_{a(q)})`.
pub fn stirling_expand<T>(points: &[T], q: usize, f: &dyn Fn(&[&T]) -> f64) -> Result<f64> {
    let n = points.len();
    if q == 0 {
        return invalid("order must be positive");
    }
    if q > n {
        return invalid("order above the number of points");
    }
    let table = StirlingTable::new(q);
    let maps = maps_by_image_size(q);
    let mut coeff = vec![0.0f64; q + 1];
    for k in 0..q {
        let nk = libm::pow(n as f64, -(k as f64));
        for (p, c) in coeff.iter_mut().enumerate().skip(q - k) {
            *c += nk * table.get(p, q - k) as f64 / falling_factorial(q, p);
        }
    }
    let g = |xs: &[&T]| -> f64 {
        let mut args: Vec<&T> = xs.to_vec();
        let mut acc = 0.0;
        for (a, p) in &maps {
            if coeff[*p] == 0.0 {
                continue;
            }
            for (slot, &ai) in args.iter_mut().zip(a) {
                *slot = xs[ai];
            }
            acc += coeff[*p] * f(&args);
        }
        acc
    };
    diagonal_free_brute(points, q, &g)
}

/// Exact pair-partition constants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPartitionConstants {
    pub max: u32,
    /// `(k, I_k)` for even `k ≤ max`.
    pub pair_counts: Vec<(u32, u128)>,
    /// `(q, N_q)` for even `2 ≤ q ≤ max`.
    pub alternating: Vec<(u32, i128)>,
}

pub fn pair_constants(max: u32) -> Result<PairPartitionConstants> {
    if max > 20 {
        return invalid("pair constants are exact up to 20");
    }
    let pair_counts = (0..=max)
        .step_by(2)
        .map(|k| pair_count(k).map(|v| (k, v)))
        .collect::<Result<_>>()?;
    let alternating = (2..=max)
        .step_by(2)
        .map(|q| alternating_sum(q).map(|v| (q, v)))
        .collect::<Result<_>>()?;
    Ok(PairPartitionConstants {
        max,
        pair_counts,
        alternating,
    })
}

type Kernel<'a, T> = Box<dyn Fn(&[&T]) -> f64 + 'a>;

/// Monte Carlo Hoeffding decomposition of a symmetric kernel of arity `q`
/// against the empirical law of `sample`.
///
/// `G^{(j)}(x_1..x_j)` averages `F(x_1..x_j, y_{i}, …, y_{i+q-j-1})` over
/// the `m` cyclic windows of the sample; `θ` is the sample mean of
/// `G^{(1)}`, so `h^{(1)}` is centered exactly on the sample.
pub struct Hoeffding<'a, T> {
    q: usize,
    sample: &'a [T],
    f: Kernel<'a, T>,
    theta: f64,
    /// Fewer sample points than `10 q`.
    pub small_sample: bool,
}

impl<T> core::fmt::Debug for Hoeffding<'_, T> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Hoeffding")
            .field("q", &self.q)
            .field("m", &self.sample.len())
            .field("theta", &self.theta)
            .field("small_sample", &self.small_sample)
            .finish()
    }
}

pub fn hoeffding_decompose<'a, T>(
    q: usize,
    sample: &'a [T],
    f: impl Fn(&[&T]) -> f64 + 'a,
) -> Result<Hoeffding<'a, T>> {
    if q == 0 {
        return invalid("arity must be positive");
    }
    if sample.len() < q {
        return invalid("integration sample smaller than the arity");
    }
    let mut h = Hoeffding {
        q,
        sample,
        f: Box::new(f),
        theta: 0.0,
        small_sample: sample.len() < 10 * q,
    };
    let theta = sample.iter().map(|y| h.g(&[y])).sum::<f64>() / sample.len() as f64;
    h.theta = theta;
    Ok(h)
}

impl<T> Hoeffding<'_, T> {
    #[must_use]
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `Ĝ^{(j)}` at `xs` (`j = xs.len()`).
    ///
    /// # Panics
    /// Panics when more than `q` arguments are given.
    #[must_use]
    pub fn g(&self, xs: &[&T]) -> f64 {
        let j = xs.len();
        assert!(j <= self.q, "too many arguments");
        if j == 0 {
            return self.theta;
        }
        if j == self.q {
            return (self.f)(xs);
        }
        let m = self.sample.len();
        let mut args: Vec<&T> = xs.to_vec();
        args.extend(core::iter::repeat_n(&self.sample[0], self.q - j));
        let mut acc = 0.0;
        for i in 0..m {
            for l in 0..self.q - j {
                args[j + l] = &self.sample[(i + l) % m];
            }
            acc += (self.f)(&args);
        }
        acc / m as f64
    }

    /// `ĥ^{(j)}(x_1..x_j) = Σ_{B ⊆ [j]} (-1)^{j-|B|} Ĝ^{(|B|)}(x_B)`.
    #[must_use]
    pub fn h(&self, xs: &[&T]) -> f64 {
        let j = xs.len();
        let mut acc = 0.0;
        let mut sub: Vec<&T> = Vec::with_capacity(j);
        for mask in 0u32..(1 << j) {
            sub.clear();
            for (i, x) in xs.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    sub.push(*x);
                }
            }
            let sign = if (j - sub.len()) % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * self.g(&sub);
        }
        acc
    }
}

/// Functional value and loop count of one backward-graph replica.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaSample {
    pub value: f64,
    pub loops: usize,
}

/// One replica of `F(Z^1, …, Z^q)` with the loop count `L_T` of its graph.
pub fn delta_replica(
    model: &ModelSpec,
    q: usize,
    n: usize,
    horizon: f64,
    f: &dyn PathFunctional,
    seed: u64,
) -> Result<DeltaSample> {
    if f.arity() != q {
        return invalid("functional arity differs from q");
    }
    let mut rng = tagged_stream(seed, tag::GRAPH);
    let graph = build_graph(q, n, model.lambda(), horizon, &mut rng)?;
    let sys = realize_z(&graph, model, seed);
    let views: Vec<PathView<'_>> = (0..q).map(|i| sys.view(i)).collect();
    Ok(DeltaSample {
        value: f.eval(&views),
        loops: graph.loops_until(horizon),
    })
}

/// Estimate of one coefficient `Δ^{N,l}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaEstimate {
    pub l: usize,
    /// `mean(F · 1{L_T = l}) · (N-1)^l`.
    pub value: f64,
    pub std_error: f64,
    /// Replicas with `L_T = l`.
    pub count: u64,
    /// `(Λ^l / l!) · E[K̃_T^{2l}] · ‖F‖`.
    pub bound: f64,
}

/// Loop expansion of `E[F(Z^1, …, Z^q)]` in powers of `1/(N-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionReport {
    pub n: usize,
    pub q: usize,
    pub horizon: f64,
    pub lambda: f64,
    pub replicas: u64,
    pub l_max: usize,
    pub estimates: Vec<DeltaEstimate>,
    /// `mean(F · 1{L_T > l_max}) · (N-1)^{l_max+1}`.
    pub remainder: f64,
    pub remainder_se: f64,
    pub mean: f64,
    pub mean_se: f64,
    /// Replicas with `L_T ≥ 1`.
    pub looped: u64,
}

impl ExpansionReport {
    pub fn from_samples(
        samples: &[DeltaSample],
        n: usize,
        q: usize,
        horizon: f64,
        lambda: f64,
        l_max: usize,
        f_bound: f64,
    ) -> Result<Self> {
        if samples.is_empty() {
            return invalid("no replicas");
        }
        if n < 2 {
            return invalid("N must be at least 2");
        }
        let scale = (n - 1) as f64;
        let mut estimates = Vec::with_capacity(l_max + 1);
        let mut fact = 1.0;
        for l in 0..=l_max {
            if l > 0 {
                fact *= l as f64;
            }
            let acc: Accumulator = samples
                .iter()
                .map(|s| if s.loops == l { s.value } else { 0.0 })
                .collect();
            let count = samples.iter().filter(|s| s.loops == l).count() as u64;
            let pow = libm::pow(scale, l as f64);
            let bound = libm::pow(lambda, l as f64) / fact
                * yule_sum_moment(q, lambda * horizon, 2 * l as u32)
                * f_bound;
            estimates.push(DeltaEstimate {
                l,
                value: acc.mean() * pow,
                std_error: acc.std_error() * pow,
                count,
                bound,
            });
        }
        let tail: Accumulator = samples
            .iter()
            .map(|s| if s.loops > l_max { s.value } else { 0.0 })
            .collect();
        let pow = libm::pow(scale, (l_max + 1) as f64);
        let all: Accumulator = samples.iter().map(|s| s.value).collect();
        Ok(Self {
            n,
            q,
            horizon,
            lambda,
            replicas: samples.len() as u64,
            l_max,
            estimates,
            remainder: tail.mean() * pow,
            remainder_se: tail.std_error() * pow,
            mean: all.mean(),
            mean_se: all.std_error(),
            looped: samples.iter().filter(|s| s.loops >= 1).count() as u64,
        })
    }

    /// `Σ_l (N-1)^{-l} Δ̂^{N,l} + (N-1)^{-(l_max+1)} Δ̄̂ - mean(F)`.
    #[must_use]
    pub fn reconstruction_error(&self) -> f64 {
        let scale = (self.n - 1) as f64;
        let sum: f64 = self
            .estimates
            .iter()
            .map(|e| e.value / libm::pow(scale, e.l as f64))
            .sum::<f64>()
            + self.remainder / libm::pow(scale, (self.l_max + 1) as f64);
        sum - self.mean
    }

    /// Empirical `P(L_T ≥ 1)`.
    #[must_use]
    pub fn loop_probability(&self) -> f64 {
        self.looped as f64 / self.replicas as f64
    }
}

/// Serial driver for [`ExpansionReport`]; replica `i` uses seed
/// `seeds(i)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_delta(
    model: &ModelSpec,
    q: usize,
    n: usize,
    horizon: f64,
    f: &dyn PathFunctional,
    l_max: usize,
    replicas: u64,
    seeds: &dyn Fn(u64) -> u64,
) -> Result<ExpansionReport> {
    let samples = (0..replicas)
        .map(|i| delta_replica(model, q, n, horizon, f, seeds(i)))
        .collect::<Result<Vec<_>>>()?;
    ExpansionReport::from_samples(&samples, n, q, horizon, model.lambda(), l_max, f.bound())
}

/// Which pair-block construction a direct Wick replica evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum WickScheme {
    /// `w · [F(forest + loop) - F(forest + graft on r) - F(forest + graft
    /// on j) + F(forest)]`: the cross loop also removes one branch from
    /// each of its ends, and the grafts account for those two branches.
    #[default]
    Compensated,
    /// `w · [F(forest + loop) - F(forest)]` with nothing removed.
    LoopOnly,
}

fn check_unary(fs: &[&dyn PathFunctional]) -> Result<()> {
    if fs.is_empty() || fs.iter().any(|f| f.arity() != 1) {
        return invalid("Wick estimators take a non-empty list of arity-one functionals");
    }
    Ok(())
}

/// `(f_a⊗f_b)_sym` for every pair `a ≤ b`, row-major over the upper
/// triangle, from per-root values `vals[root][functional]`.
fn pair_products(vals: &[Vec<f64>]) -> Vec<f64> {
    let m = vals[0].len();
    let mut out = Vec::with_capacity(m * (m + 1) / 2);
    for a in 0..m {
        for b in a..m {
            out.push(0.5 * (vals[0][a] * vals[1][b] + vals[0][b] * vals[1][a]));
        }
    }
    out
}

/// Index of the pair `(a, b)`, `a ≤ b`, in the upper-triangle layout used
/// by the Wick estimators.
#[must_use]
pub fn pair_index(m: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * m - a * (a + 1) / 2 + b
}

/// One replica of the limit covariance estimator for every pair of `fs`,
/// with `F = (f_a⊗f_b)_sym`, `w = ∫_0^T Λ K̃^1_s K̃^2_s ds` and one cross
/// loop at a time of density proportional to `K̃^1_s K̃^2_s`. Every system
/// in the replica shares the forest and all its draws. Output layout as in
/// [`pair_index`].
pub fn wick_direct_replicas(
    model: &ModelSpec,
    fs: &[&dyn PathFunctional],
    horizon: f64,
    scheme: WickScheme,
    seed: u64,
) -> Result<Vec<f64>> {
    check_unary(fs)?;
    let mut rng = tagged_stream(seed, tag::LIMIT_TREE);
    let sample = sample_limit(2, model.lambda(), horizon, &mut rng)?;
    let eval = |term: BlockTerm| {
        let sys = realize_limit(&sample, model, &[term], seed);
        let vals: Vec<Vec<f64>> = (0..2)
            .map(|r| fs.iter().map(|f| f.eval(&[sys.view(r)])).collect())
            .collect();
        pair_products(&vals)
    };
    let terms: &[(BlockTerm, f64)] = match scheme {
        WickScheme::LoopOnly => &[(BlockTerm::Loop, 1.0), (BlockTerm::Forest, -1.0)],
        WickScheme::Compensated => &[
            (BlockTerm::Loop, 1.0),
            (BlockTerm::GraftR, -1.0),
            (BlockTerm::GraftJ, -1.0),
            (BlockTerm::Forest, 1.0),
        ],
    };
    let mut out = vec![0.0; fs.len() * (fs.len() + 1) / 2];
    for &(term, sign) in terms {
        for (o, v) in out.iter_mut().zip(eval(term)) {
            *o += sign * v;
        }
    }
    for o in &mut out {
        *o *= sample.weight;
    }
    Ok(out)
}

/// Single-pair form of [`wick_direct_replicas`].
pub fn wick_direct_replica(
    model: &ModelSpec,
    f: &dyn PathFunctional,
    g: &dyn PathFunctional,
    horizon: f64,
    scheme: WickScheme,
    seed: u64,
) -> Result<f64> {
    Ok(wick_direct_replicas(model, &[f, g], horizon, scheme, seed)?[1])
}

/// One replica of `N · (η^N)^{⊙2}((f_a⊗f_b)_sym)` for every pair of `fs`
/// from a single forward simulation. Output layout as in [`pair_index`].
pub fn wick_limit_replicas(
    model: &ModelSpec,
    fs: &[&dyn PathFunctional],
    n: usize,
    horizon: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    check_unary(fs)?;
    let mut rng = tagged_stream(seed, tag::FORWARD);
    let sys = simulate_forward(model, n, horizon, seed, &mut rng)?;
    let cols: Vec<Vec<f64>> = fs
        .iter()
        .map(|f| (0..n).map(|i| f.eval(&[sys.view(i)])).collect())
        .collect();
    let mut out = Vec::with_capacity(fs.len() * (fs.len() + 1) / 2);
    for a in 0..fs.len() {
        for b in a..fs.len() {
            out.push(n as f64 * u_statistic_product(&[&cols[a], &cols[b]])?);
        }
    }
    Ok(out)
}

/// Single-pair form of [`wick_limit_replicas`].
pub fn wick_limit_replica(
    model: &ModelSpec,
    f: &dyn PathFunctional,
    g: &dyn PathFunctional,
    n: usize,
    horizon: f64,
    seed: u64,
) -> Result<f64> {
    Ok(wick_limit_replicas(model, &[f, g], n, horizon, seed)?[1])
}

/// `f` evaluated on one draw of the nonlinear path law.
pub fn marginal_value(
    model: &ModelSpec,
    f: &dyn PathFunctional,
    horizon: f64,
    seed: u64,
) -> Result<f64> {
    if f.arity() != 1 {
        return invalid("marginal values take arity-one functionals");
    }
    let sys = realize_marginal(model, horizon, seed)?;
    Ok(f.eval(&[sys.view(0)]))
}

/// Mean estimate with standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub replicas: u64,
}

impl From<Accumulator> for Estimate {
    fn from(a: Accumulator) -> Self {
        Self {
            value: a.mean(),
            std_error: a.std_error(),
            replicas: a.count(),
        }
    }
}

/// Wick covariance estimates for a list of functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct WickReport {
    pub names: Vec<String>,
    /// `V̂_direct(f_i, f_j)`, symmetric.
    pub direct: Vec<Vec<Estimate>>,
    /// `N · Ê[(η^N)^{⊙2}((f_i⊗f_j)_sym)]` when a forward check was run.
    pub limit: Option<(usize, Vec<Vec<Estimate>>)>,
    /// `K̂(i, j) = P̃(f_i f_j) + V̂(f_i, f_j)`.
    pub k: Vec<Vec<f64>>,
    /// Residual means of the centered functionals.
    pub centering_residuals: Vec<Estimate>,
}

/// `K(i, j) = P̃(f_i f_j) + V(f_i, f_j)`, symmetrized.
pub fn clt_covariance(second_moments: &[Vec<f64>], v: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let m = second_moments.len();
    if v.len() != m || second_moments.iter().chain(v).any(|row| row.len() != m) {
        return invalid("covariance inputs must be square and of equal size");
    }
    Ok((0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    0.5 * (second_moments[i][j] + second_moments[j][i]) + 0.5 * (v[i][j] + v[j][i])
                })
                .collect()
        })
        .collect())
}

/// `2 ‖f‖ ‖g‖ T Λ e^{2TΛ}`.
#[must_use]
pub fn wick_bound(f_bound: f64, g_bound: f64, lambda: f64, horizon: f64) -> f64 {
    2.0 * f_bound * g_bound * horizon * lambda * libm::exp(2.0 * horizon * lambda)
}

/// `2q(q-1)(Λt + Λ²t²)/(N-1) · ‖F‖`.
#[must_use]
pub fn chaos_bound(q: usize, n: usize, lambda: f64, horizon: f64, f_bound: f64) -> f64 {
    let lt = lambda * horizon;
    2.0 * (q * (q - 1)) as f64 * (lt + lt * lt) / (n - 1) as f64 * f_bound
}
