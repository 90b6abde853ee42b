//! Exact integer combinatorics: Stirling numbers of the first kind, pair
//! partition counts, the alternating composition sum `N_q`, set partitions
//! and index maps grouped by image size.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};

/// Signed Stirling numbers of the first kind `s(p, m)` for `p, m ≤ max`,
/// defined by `x(x-1)…(x-p+1) = Σ_m s(p, m) x^m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StirlingTable {
    max: usize,
    table: Vec<Vec<i128>>,
}

impl StirlingTable {
    #[must_use]
    pub fn new(max: usize) -> Self {
        let mut table = vec![vec![0i128; max + 1]; max + 1];
        table[0][0] = 1;
        for p in 0..max {
            for m in 1..=p + 1 {
                table[p + 1][m] = table[p][m - 1] - p as i128 * table[p][m];
            }
        }
        Self { max, table }
    }

    #[must_use]
    pub fn max(&self) -> usize {
        self.max
    }

    /// `s(p, m)`; zero outside `0 ≤ m ≤ p ≤ max`.
    #[must_use]
    pub fn get(&self, p: usize, m: usize) -> i128 {
        if p > self.max || m > p {
            0
        } else {
            self.table[p][m]
        }
    }
}

/// Falling factorial `(n)_k = n(n-1)…(n-k+1)` as a float.
#[must_use]
pub fn falling_factorial(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

/// Exact falling factorial.
#[must_use]
pub fn falling_factorial_exact(n: u128, k: u32) -> u128 {
    (0..u128::from(k)).map(|i| n - i).product()
}

#[must_use]
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// Number of partitions of `[k]` into pairs: `I_k = k! / (2^{k/2} (k/2)!)`.
pub fn pair_count(k: u32) -> Result<u128> {
    if k % 2 == 1 {
        return invalid("pair_count needs an even argument");
    }
    if k > 30 {
        return invalid("pair_count argument outside the exact range");
    }
    Ok((1..k).step_by(2).map(u128::from).product())
}

fn multinomial(parts: &[u32]) -> u128 {
    let mut total = 0u64;
    let mut acc = 1u128;
    for &p in parts {
        total += u64::from(p);
        acc *= binomial(total, u64::from(p));
    }
    acc
}

/// Calls `visit` on every composition of `n` into positive even parts.
fn even_compositions(n: u32, prefix: &mut Vec<u32>, visit: &mut dyn FnMut(&[u32])) {
    if n == 0 {
        visit(prefix);
        return;
    }
    let mut part = 2;
    while part <= n {
        prefix.push(part);
        even_compositions(n - part, prefix, visit);
        prefix.pop();
        part += 2;
    }
}

/// `N_q = Σ_j Σ_{0 = k_0 < k_1 < … < k_j = q, k_i even}
///   C(q, k_1) C(q - k_1, q - k_2) … I_{k_1} I_{k_2 - k_1} … I_{k_j - k_{j-1}} (-1)^{j+1}`,
/// evaluated term by term. Each block of the composition carries its own
/// pair count, as required by the recurrence `N_q = I_q - Σ C(q,k) I_k N_{q-k}`.
pub fn alternating_sum(q: u32) -> Result<i128> {
    if q == 0 || q % 2 == 1 {
        return invalid("alternating_sum needs an even q >= 2");
    }
    if q > 20 {
        return invalid("alternating_sum argument outside the exact range");
    }
    let mut acc: i128 = 0;
    even_compositions(q, &mut Vec::new(), &mut |parts| {
        let pairs: u128 = parts.iter().map(|&c| pair_count(c).unwrap_or(0)).product();
        let term = (multinomial(parts) * pairs) as i128;
        if parts.len() % 2 == 1 {
            acc += term;
        } else {
            acc -= term;
        }
    });
    Ok(acc)
}

/// Inner sum over even refinements of `m` points:
/// `Σ_i Σ_{compositions (c_1..c_i) of m} multinomial(m; c) ∏ I_{c} (-1)^i`.
/// Equals `I_m (-1)^{m/2}`.
pub fn refinement_sum(m: u32) -> Result<i128> {
    Ok(-alternating_sum(m)?)
}

/// All set partitions of `{0, …, n-1}` as block label vectors
/// (restricted growth strings).
#[must_use]
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut labels = vec![0usize; n];
    fn rec(i: usize, max_label: usize, labels: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == labels.len() {
            out.push(labels.clone());
            return;
        }
        for l in 0..=max_label {
            labels[i] = l;
            rec(i + 1, max_label.max(l + 1), labels, out);
        }
    }
    if n == 0 {
        out.push(Vec::new());
    } else {
        rec(0, 0, &mut labels, &mut out);
    }
    out
}

/// Partitions grouped by blocks: each partition as a list of blocks.
#[must_use]
pub fn set_partition_blocks(n: usize) -> Vec<Vec<Vec<usize>>> {
    set_partitions(n)
        .into_iter()
        .map(|labels| {
            let nb = labels.iter().copied().max().map_or(0, |m| m + 1);
            let mut blocks = vec![Vec::new(); nb];
            for (i, &l) in labels.iter().enumerate() {
                blocks[l].push(i);
            }
            blocks
        })
        .collect()
}

/// All maps `a: [q] → [q]`, each with its image size.
#[must_use]
pub fn maps_by_image_size(q: usize) -> Vec<(Vec<usize>, usize)> {
    let total = q.pow(q as u32);
    (0..total)
        .map(|mut code| {
            let mut a = vec![0usize; q];
            for slot in a.iter_mut() {
                *slot = code % q;
                code /= q;
            }
            let mut seen = vec![false; q];
            for &x in &a {
                seen[x] = true;
            }
            let p = seen.iter().filter(|&&s| s).count();
            (a, p)
        })
        .collect()
}

/// All permutations of `[n]` in lexicographic order.
#[must_use]
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap_or(i);
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}
