//! Exponential races, piecewise-constant Poisson streams and Yule clusters.
//!
//! Every rate in the backward construction is constant between two graph
//! events, so inhomogeneous streams are sampled segment by segment with
//! exponential gaps instead of thinning against a majorant.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{invalid, Error, Result};

/// A right-continuous, piecewise-constant, nonnegative rate on `[0, ∞)`.
///
/// `values[i]` holds on `[breakpoints[i], breakpoints[i + 1])`, the last
/// value extends to infinity. The first breakpoint is always `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePath {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl RatePath {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return invalid("rate path needs one value per breakpoint");
        }
        if breakpoints[0] != 0.0 {
            return invalid("rate path must start at 0");
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1]))
            || breakpoints.iter().any(|b| !b.is_finite())
        {
            return invalid("breakpoints must be finite and strictly increasing");
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return invalid("rates must be finite and nonnegative");
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    #[must_use]
    pub fn constant(rate: f64) -> Self {
        assert!(
            rate.is_finite() && rate >= 0.0,
            "rate must be finite and nonnegative"
        );
        Self {
            breakpoints: vec![0.0],
            values: vec![rate],
        }
    }

    /// Two-step rate: `a` on `[0, switch)`, `b` afterwards.
    pub fn two_step(a: f64, switch: f64, b: f64) -> Result<Self> {
        Self::new(vec![0.0, switch], vec![a, b])
    }

    #[must_use]
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    #[must_use]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[must_use]
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        self.values[idx.saturating_sub(1)]
    }

    /// `∫_a^b λ_s ds` for `0 ≤ a ≤ b`.
    #[must_use]
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut acc = 0.0;
        for (i, &v) in self.values.iter().enumerate() {
            let lo = self.breakpoints[i].max(a);
            let hi = self
                .breakpoints
                .get(i + 1)
                .copied()
                .unwrap_or(f64::INFINITY)
                .min(b);
            if hi > lo {
                acc += v * (hi - lo);
            }
        }
        acc
    }

    /// Segments clipped to `[0, horizon]` as `(start, end, rate)`.
    pub fn segments(&self, horizon: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.values.iter().enumerate().filter_map(move |(i, &v)| {
            let lo = self.breakpoints[i];
            let hi = self
                .breakpoints
                .get(i + 1)
                .copied()
                .unwrap_or(f64::INFINITY)
                .min(horizon);
            (lo < horizon && hi > lo).then_some((lo, hi, v))
        })
    }
}

/// Strictly increasing event times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventTimes {
    times: Vec<f64>,
}

impl EventTimes {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return invalid("event times must be strictly increasing");
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return invalid("event times must be finite and nonnegative");
        }
        Ok(Self { times })
    }

    #[must_use]
    pub fn empty() -> Self {
        Self::default()
    }

    #[must_use]
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.times.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of events in `[a, b]`.
    #[must_use]
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        let lo = self.times.partition_point(|&t| t < a);
        let hi = self.times.partition_point(|&t| t <= b);
        hi.saturating_sub(lo)
    }
}

/// Outcome of an exponential race with at least one positive rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaceOutcome {
    pub winner: usize,
    pub holding: f64,
}

/// Race of independent exponential clocks. Returns `None` when every rate
/// is zero.
pub fn exp_race<R: Rng + ?Sized>(rates: &[f64], rng: &mut R) -> Result<Option<RaceOutcome>> {
    if rates.is_empty() {
        return invalid("exp_race needs at least one rate");
    }
    if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return invalid("rates must be finite and nonnegative");
    }
    let total: f64 = rates.iter().sum();
    if total <= 0.0 {
        return Ok(None);
    }
    let e: f64 = Exp1.sample(rng);
    let holding = e / total;
    let winner = pick_weighted(rates, total, rng);
    Ok(Some(RaceOutcome { winner, holding }))
}

/// Index `i` with probability `weights[i] / total`.
pub(crate) fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Inhomogeneous Poisson stream on `[0, horizon]`.
pub fn sample_inhom_poisson<R: Rng + ?Sized>(
    rate: &RatePath,
    horizon: f64,
    rng: &mut R,
) -> EventTimes {
    let mut times = Vec::new();
    for (lo, hi, v) in rate.segments(horizon) {
        if v <= 0.0 {
            continue;
        }
        let mut t = lo;
        loop {
            let e: f64 = Exp1.sample(rng);
            t += e / v;
            if t >= hi {
                break;
            }
            times.push(t);
        }
    }
    EventTimes { times }
}

/// Order statistics of `k` i.i.d. draws with density `λ_t / ∫_0^T λ`.
pub fn conditional_jump_times<R: Rng + ?Sized>(
    rate: &RatePath,
    horizon: f64,
    k: usize,
    rng: &mut R,
) -> Result<EventTimes> {
    if k == 0 {
        return invalid("conditional_jump_times needs k >= 1");
    }
    let total = rate.integral(0.0, horizon);
    if !(total > 0.0) {
        return invalid("zero total rate on the horizon");
    }
    let mut times: Vec<f64> = (0..k)
        .map(|_| inverse_cumulative(rate, horizon, rng.random::<f64>() * total))
        .collect();
    times.sort_by(f64::total_cmp);
    if times.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DuplicateTime(times[0]));
    }
    Ok(EventTimes { times })
}

fn inverse_cumulative(rate: &RatePath, horizon: f64, target: f64) -> f64 {
    let mut acc = 0.0;
    let mut last = 0.0;
    for (lo, hi, v) in rate.segments(horizon) {
        let mass = v * (hi - lo);
        if v > 0.0 {
            last = hi;
            if acc + mass > target {
                return lo + (target - acc) / v;
            }
        }
        acc += mass;
    }
    last
}

/// Splits a stream into `fractions.len()` exclusive sub-streams; an event at
/// time `t` lands in stream `i` with probability `α^i_t`.
pub fn thin<R: Rng + ?Sized>(
    events: &EventTimes,
    fractions: &[RatePath],
    rng: &mut R,
) -> Result<Vec<EventTimes>> {
    validate_fractions(fractions)?;
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); fractions.len()];
    for &t in events.times() {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, f) in fractions.iter().enumerate() {
            acc += f.value_at(t);
            if u < acc {
                out[i].push(t);
                break;
            }
        }
    }
    Ok(out.into_iter().map(|times| EventTimes { times }).collect())
}

fn validate_fractions(fractions: &[RatePath]) -> Result<()> {
    let mut points: Vec<f64> = fractions
        .iter()
        .flat_map(|f| f.breakpoints().iter().copied())
        .collect();
    points.sort_by(f64::total_cmp);
    for &t in &points {
        let mut acc = 0.0;
        for f in fractions {
            let v = f.value_at(t);
            if v > 1.0 {
                return invalid("thinning fraction above 1");
            }
            acc += v;
        }
        if acc > 1.0 + 1e-12 {
            return invalid("thinning fractions sum above 1");
        }
    }
    Ok(())
}

/// Merged stream; each event carries the index of its source stream.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledEvents {
    pub events: Vec<(f64, usize)>,
}

impl LabeledEvents {
    #[must_use]
    pub fn times(&self) -> EventTimes {
        EventTimes {
            times: self.events.iter().map(|e| e.0).collect(),
        }
    }
}

/// Merges sorted streams. An exact tie between two streams is reported as
/// [`Error::DuplicateTime`].
pub fn superpose(streams: &[EventTimes]) -> Result<LabeledEvents> {
    let mut events: Vec<(f64, usize)> = streams
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.times().iter().map(move |&t| (t, i)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if let Some(w) = events.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateTime(w[0].0));
    }
    Ok(LabeledEvents { events })
}

/// Per-cluster birth times of `q` Yule processes on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSizePaths {
    horizon: f64,
    births: Vec<Vec<f64>>,
}

impl ClusterSizePaths {
    #[must_use]
    pub fn from_births(horizon: f64, births: Vec<Vec<f64>>) -> Self {
        Self { horizon, births }
    }

    #[must_use]
    pub fn clusters(&self) -> usize {
        self.births.len()
    }

    #[must_use]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[must_use]
    pub fn births(&self, i: usize) -> &[f64] {
        &self.births[i]
    }

    /// `K̃^i_s`.
    #[must_use]
    pub fn size(&self, i: usize, s: f64) -> usize {
        1 + self.births[i].partition_point(|&b| b <= s)
    }

    /// `K̃_s = Σ_i K̃^i_s`.
    #[must_use]
    pub fn total(&self, s: f64) -> usize {
        (0..self.births.len()).map(|i| self.size(i, s)).sum()
    }

    #[must_use]
    pub fn final_size(&self, i: usize) -> usize {
        1 + self.births[i].len()
    }

    #[must_use]
    pub fn final_total(&self) -> usize {
        self.births.iter().map(|b| 1 + b.len()).sum()
    }

    /// `∫_0^T c · K̃^i_s K̃^j_s ds`.
    #[must_use]
    pub fn product_integral(&self, i: usize, j: usize, c: f64) -> f64 {
        product_integral(&self.births[i], &self.births[j], self.horizon) * c
    }
}

/// `∫_0^T (1 + #{b ≤ s}) (1 + #{b' ≤ s}) ds` for two sorted birth lists.
#[must_use]
pub fn product_integral(a: &[f64], b: &[f64], horizon: f64) -> f64 {
    let (mut ia, mut ib) = (0, 0);
    let (mut ka, mut kb) = (1.0, 1.0);
    let mut t = 0.0;
    let mut acc = 0.0;
    loop {
        let na = a.get(ia).copied().unwrap_or(f64::INFINITY);
        let nb = b.get(ib).copied().unwrap_or(f64::INFINITY);
        let next = na.min(nb).min(horizon);
        acc += ka * kb * (next - t);
        t = next;
        if t >= horizon {
            return acc;
        }
        if na <= nb {
            ia += 1;
            ka += 1.0;
        } else {
            ib += 1;
            kb += 1.0;
        }
    }
}

/// `q` independent Yule processes of individual birth rate `lambda`.
pub fn sample_yule<R: Rng + ?Sized>(
    q: usize,
    lambda: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<ClusterSizePaths> {
    if q == 0 {
        return invalid("sample_yule needs q >= 1");
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return invalid("Yule rate must be positive");
    }
    let births = (0..q)
        .map(|_| {
            let mut b = Vec::new();
            let mut t = 0.0;
            let mut k = 1.0;
            loop {
                let e: f64 = Exp1.sample(rng);
                t += e / (lambda * k);
                if t > horizon {
                    break b;
                }
                b.push(t);
                k += 1.0;
            }
        })
        .collect();
    Ok(ClusterSizePaths { horizon, births })
}

/// `P(K̃^1_T = k) = e^{-ΛT}(1 - e^{-ΛT})^{k-1}`.
#[must_use]
pub fn yule_pmf(k: usize, lambda_t: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let p = libm::exp(-lambda_t);
    p * libm::pow(1.0 - p, (k - 1) as f64)
}

/// Tail bound `P(K̃_T = k) ≤ q (1 - e^{-ΛT})^{k/q - 1}`.
#[must_use]
pub fn yule_sum_bound(k: usize, q: usize, lambda_t: f64) -> f64 {
    q as f64 * libm::pow(1.0 - libm::exp(-lambda_t), k as f64 / q as f64 - 1.0)
}

/// `E[K̃_T^m]` for the sum of `q` independent Yule processes. `K̃_T` is
/// negative binomial: `P(K̃_T = k) = C(k-1, q-1) p^q (1-p)^{k-q}` with
/// `p = e^{-ΛT}`; the series is summed until the terms vanish.
#[must_use]
pub fn yule_sum_moment(q: usize, lambda_t: f64, m: u32) -> f64 {
    let p = libm::exp(-lambda_t);
    let qf = q as f64;
    let mut log_pmf = qf * libm::log(p);
    let mut acc = 0.0;
    let mut k = q;
    loop {
        let term = libm::exp(log_pmf + f64::from(m) * libm::log(k as f64));
        acc += term;
        if k > q + 50 && term < acc * 1e-17 {
            return acc;
        }
        log_pmf += libm::log(k as f64) - libm::log((k + 1 - q) as f64) + libm::log1p(-p);
        k += 1;
    }
}
