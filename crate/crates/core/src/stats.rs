//! Small statistics toolbox shared by the estimators: deterministic
//! reductions, bootstrap error bars, a two-sample Kolmogorov–Smirnov test and
//! integrated autocorrelation times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A Monte-Carlo (or exact) estimate as emitted by every estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            value,
            stderr: 0.0,
            n: 0,
            seed: 0,
        }
    }

    /// Mean and standard error of the mean of independent values.
    pub fn from_values(values: &[f64], seed: u64) -> Self {
        let (mean, se) = mean_stderr(values);
        Estimate {
            value: mean,
            stderr: se,
            n: values.len(),
            seed,
        }
    }

    /// `|self - other|` in units of the combined standard error.
    pub fn z_distance(&self, other: &Estimate) -> f64 {
        let s = self.stderr.hypot(other.stderr);
        let d = (self.value - other.value).abs();
        if s == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / s
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("estimate serializes")
    }
}

/// Pairwise (cascade) summation; the result only depends on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&dev) / (n - 1) as f64
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, 0.0);
    }
    (m, (variance(xs) / xs.len() as f64).sqrt())
}

/// Deterministic per-stream generator: one ChaCha stream per sample index, so
/// results do not depend on how work is split across threads.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Bootstrap standard error of the mean of `xs` with `b` resamples.
pub fn bootstrap_stderr(xs: &[f64], b: usize, seed: u64) -> f64 {
    let n = xs.len();
    if n < 2 || b < 2 {
        return 0.0;
    }
    let mut rng = substream(seed, u64::MAX - 1);
    let mut means = Vec::with_capacity(b);
    let mut buf = vec![0.0; n];
    for _ in 0..b {
        for slot in buf.iter_mut() {
            *slot = xs[rng.random_range(0..n)];
        }
        means.push(mean(&buf));
    }
    variance(&means).sqrt()
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS statistic.
/// `alpha` must be one of 0.10, 0.05, 0.01, 0.001.
pub fn ks_critical(alpha: f64, na: usize, nb: usize) -> f64 {
    let c = if alpha >= 0.1 {
        1.224
    } else if alpha >= 0.05 {
        1.358
    } else if alpha >= 0.01 {
        1.628
    } else {
        1.949
    };
    let (na, nb) = (na as f64, nb as f64);
    c * ((na + nb) / (na * nb)).sqrt()
}

/// Integrated autocorrelation time with Sokal's adaptive window (c = 5).
pub fn integrated_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return 1.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c: f64 = (0..n - lag).map(|i| (xs[i] - m) * (xs[i + lag] - m)).sum::<f64>()
            / ((n - lag) as f64 * var);
        tau += 2.0 * c;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Digamma function for positive arguments (recurrence + asymptotic series).
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + x.ln() - 0.5 * inv
        - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)))
}
