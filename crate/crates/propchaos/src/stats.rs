//! Goodness-of-fit tests and small estimators used by the reports.

use propchaos_core::rng::{derive_seed, open01};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};

pub use propchaos_core::stats::{fit_line, log_log_slope, total_variation, Accumulator, LineFit};

/// Asymptotic Kolmogorov scale at the 1% level, `Q(λ) = 0.01`.
pub const KOLMOGOROV_1PCT: f64 = 1.627_6;

/// `P(X ≤ x)` for `X ~ N(mean, sd²)`.
#[must_use]
pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("sd > 0").cdf(x)
}

/// `P(X + U ≤ x)` for `X ~ N(0, sd²)` and independent `U` uniform on
/// `[-h/2, h/2]`; equals [`normal_cdf`] at `h = 0`.
#[must_use]
pub fn smoothed_normal_cdf(x: f64, sd: f64, h: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    if h == 0.0 {
        return n.cdf(x / sd);
    }
    let antiderivative = |y: f64| y * n.cdf(y / sd) + sd * n.pdf(y / sd);
    (antiderivative(x + h / 2.0) - antiderivative(x - h / 2.0)) / h
}

/// Spreads lattice-valued draws with spacing `h` uniformly over their
/// cells, using the keyed uniforms `open01(derive_seed([seed, k]))`.
pub fn jitter(sample: &mut [f64], h: f64, seed: u64) {
    for (k, x) in sample.iter_mut().enumerate() {
        *x += h * (open01(derive_seed(&[seed, k as u64])) - 0.5);
    }
}

/// One-sample Kolmogorov-Smirnov outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    pub d: f64,
    pub n: usize,
    pub p_value: f64,
    /// Rejection threshold for `d` at the 1% level.
    pub critical_1pct: f64,
}

impl KsOutcome {
    #[must_use]
    pub fn passes_1pct(&self) -> bool {
        self.d < self.critical_1pct
    }
}

fn stephens(n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    sn + 0.12 + 0.11 / sn
}

/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} e^{-2k²λ²}`.
#[must_use]
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut acc = 0.0;
    for k in 1..=100 {
        let kf = f64::from(k);
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        acc += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

/// KS test of `sample` against a continuous `cdf`; sorts `sample`.
pub fn ks_one_sample(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> KsOutcome {
    sample.sort_by(f64::total_cmp);
    let n = sample.len();
    let nf = n as f64;
    let d = sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / nf).max((i + 1) as f64 / nf - c)
        })
        .fold(0.0, f64::max);
    let scale = stephens(n);
    KsOutcome {
        d,
        n,
        p_value: kolmogorov_survival(scale * d),
        critical_1pct: KOLMOGOROV_1PCT / scale,
    }
}

/// Two-sample KS p-value; sorts both inputs.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sn = ne.sqrt();
    kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)
}

/// Pearson χ² goodness of fit; cells with expected count below 5 are
/// pooled into their neighbour.
#[must_use]
pub fn chi2_pvalue(observed: &[u64], probs: &[f64]) -> f64 {
    assert_eq!(observed.len(), probs.len(), "one probability per cell");
    let n: u64 = observed.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&ob, &p) in observed.iter().zip(probs) {
        o += ob as f64;
        e += p * n as f64;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 {
        return 1.0;
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let law = ChiSquared::new((cells.len() - 1) as f64).expect("positive degrees of freedom");
    1.0 - law.cdf(stat)
}

/// `|a - b| / sqrt(sa² + sb²)`.
#[must_use]
pub fn z_score(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    let s = (sa * sa + sb * sb).sqrt();
    if s == 0.0 {
        if a == b {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - b).abs() / s
    }
}

/// Weighted least-squares slope of `log y` against `log x`, with
/// `var(log y_i) ≈ (se_i / y_i)²`.
#[must_use]
pub fn weighted_log_slope(xs: &[f64], ys: &[f64], ses: &[f64]) -> LineFit {
    let pts: Vec<(f64, f64, f64)> = xs
        .iter()
        .zip(ys)
        .zip(ses)
        .map(|((&x, &y), &s)| {
            let rel = if y > 0.0 { s / y } else { f64::INFINITY };
            (x.ln(), y.ln(), 1.0 / (rel * rel).max(1e-300))
        })
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    LineFit {
        slope,
        intercept: my - slope * mx,
        slope_se: (1.0 / sxx).sqrt(),
    }
}
