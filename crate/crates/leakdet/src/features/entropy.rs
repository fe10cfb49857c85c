//! Entropy and regularity window features: Shannon entropy over fixed
//! quantile bins, rate (conditional) entropy of the binned symbol stream,
//! approximate entropy, and sample entropy.

use std::collections::HashMap;

use crate::{Error, Result};

use super::stats::GUARD_EPS;

/// Symbol index of `v` against ascending bin edges: the number of edges at
/// or below `v`, i.e. edges `[e1..e4]` split the line into 5 bins.
fn bin_symbol(v: f64, edges: &[f64]) -> u8 {
    edges.iter().take_while(|&&e| v >= e).count() as u8
}

/// Shannon entropy in bits of the window's empirical distribution over the
/// bins defined by `edges` (fitted upstream on training leak data only).
/// Empty bins contribute nothing; a single-bin window has entropy 0.
pub fn shannon_entropy(x: &[f64], edges: &[f64]) -> f64 {
    let mut counts = vec![0usize; edges.len() + 1];
    for &v in x {
        counts[bin_symbol(v, edges) as usize] += 1;
    }
    let n = x.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Conditional entropy H(X_n | X_{n-1}, X_{n-2}) of the binned symbol
/// stream, in bits, estimated from the window's empirical triple and pair
/// frequencies via the chain rule H(triples) - H(pairs).
pub fn rate_entropy(x: &[f64], edges: &[f64]) -> f64 {
    if x.len() < 3 {
        return 0.0;
    }
    let symbols: Vec<u8> = x.iter().map(|&v| bin_symbol(v, edges)).collect();
    let mut triples: HashMap<(u8, u8, u8), usize> = HashMap::new();
    let mut pairs: HashMap<(u8, u8), usize> = HashMap::new();
    for w in symbols.windows(3) {
        *triples.entry((w[0], w[1], w[2])).or_default() += 1;
        *pairs.entry((w[0], w[1])).or_default() += 1;
    }
    let total = (symbols.len() - 2) as f64;
    let h = |counts: Vec<usize>| -> f64 {
        counts
            .into_iter()
            .map(|c| {
                let p = c as f64 / total;
                -p * p.log2()
            })
            .sum()
    };
    h(triples.into_values().collect()) - h(pairs.into_values().collect())
}

fn population_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Chebyshev distance between two equal-length templates.
fn template_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

fn check_length(x: &[f64], m: usize) -> Result<()> {
    if x.len() < m + 2 {
        return Err(Error::Validation(format!(
            "series of {} samples too short for embedding dimension {m} (needs >= {})",
            x.len(),
            m + 2
        )));
    }
    Ok(())
}

/// Tolerance radius: `r_factor` times the window's population standard
/// deviation, floored so a constant window still matches itself.
fn tolerance(x: &[f64], r_factor: f64) -> f64 {
    let r = r_factor * population_std(x);
    if r < GUARD_EPS {
        GUARD_EPS
    } else {
        r
    }
}

/// Approximate entropy: Phi^m(r) - Phi^{m+1}(r) with self-matches included
/// and natural logarithms, r = r_factor * std.
pub fn apen(x: &[f64], m: usize, r_factor: f64) -> Result<f64> {
    check_length(x, m)?;
    let r = tolerance(x, r_factor);
    let phi = |m: usize| -> f64 {
        let count = x.len() - m + 1;
        let mut acc = 0.0;
        for i in 0..count {
            let ti = &x[i..i + m];
            let matches = (0..count)
                .filter(|&j| template_dist(ti, &x[j..j + m]) <= r)
                .count();
            acc += (matches as f64 / count as f64).ln();
        }
        acc / count as f64
    };
    Ok(phi(m) - phi(m + 1))
}

/// Sample entropy: -ln(A/B) with A = (m+1)-length and B = m-length template
/// match counts over pairs i != j, both template sets indexed over
/// [0, N - m) so every m-template has an (m+1)-extension. Self-matches are
/// excluded. When either count is zero the fallback -ln(1/(B+1)) is
/// returned (the match statistic is degenerate there, not infinite).
pub fn sampen(x: &[f64], m: usize, r_factor: f64) -> Result<f64> {
    check_length(x, m)?;
    let r = tolerance(x, r_factor);
    let count = x.len() - m; // both lengths use this index range
    let mut b = 0u64;
    let mut a = 0u64;
    for i in 0..count {
        for j in i + 1..count {
            if template_dist(&x[i..i + m], &x[j..j + m]) <= r {
                b += 1;
                if (x[i + m] - x[j + m]).abs() <= r {
                    a += 1;
                }
            }
        }
    }
    if a == 0 || b == 0 {
        return Ok(-(1.0 / (b + 1) as f64).ln());
    }
    Ok(-((a as f64) / (b as f64)).ln())
}
