#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// `|x - target| <= k * se`, printing the numbers on failure.
pub fn within(label: &str, x: f64, se: f64, target: f64, k: f64) {
    assert!(
        (x - target).abs() <= k * se,
        "{label}: {x} vs {target}, se {se}, z {:.2}",
        (x - target) / se
    );
}

/// Binomial proportion check: `count/n` within `k` standard deviations of `p`.
pub fn proportion(label: &str, count: u64, n: u64, p: f64, k: f64) {
    let se = (p * (1.0 - p) / n as f64).sqrt();
    within(label, count as f64 / n as f64, se, p, k);
}

/// One-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lam = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = f64::from(k);
        let term = 2.0 * (-2.0 * kf * kf * lam * lam).exp();
        p += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov p-value.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).round() as usize;
    ks_pvalue(d, ne)
}

/// Pearson goodness-of-fit p-value of `observed` counts against `probs`;
/// cells with expected count below 5 are pooled into the last cell.
pub fn chi2_pvalue(observed: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = observed.iter().sum();
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut po, mut pe) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * n as f64;
        if e >= 5.0 {
            obs.push(o as f64);
            exp.push(e);
        } else {
            po += o as f64;
            pe += e;
        }
    }
    if pe > 0.0 {
        obs.push(po);
        exp.push(pe);
    }
    let stat: f64 = obs
        .iter()
        .zip(&exp)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = (obs.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

/// Mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
