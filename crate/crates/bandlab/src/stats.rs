//! Small statistics toolkit: two-sample Kolmogorov-Smirnov distance, gap
//! ratios, least-squares slopes and running moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `sup_x |F_a(x) - F_b(x)|` for the empirical distribution functions.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Statistics("KS distance needs two nonempty samples".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Statistics("KS distance of samples containing NaN".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0.0f64;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(best)
}

/// `min(s_i, s_{i+1}) / max(s_i, s_{i+1})` for consecutive gaps of the
/// eigenvalues (any order) whose index lies in the middle half of the
/// sorted spectrum. Degenerate pairs of zero gaps are skipped.
pub fn gap_ratios(eigenvalues: &[f64]) -> Vec<f64> {
    let mut ev = eigenvalues.to_vec();
    ev.sort_by(f64::total_cmp);
    let n = ev.len();
    if n < 3 {
        return Vec::new();
    }
    let (lo, hi) = (n / 4, n - n / 4);
    let gaps: Vec<f64> = ev[lo..hi].windows(2).map(|w| w[1] - w[0]).collect();
    gaps.windows(2)
        .filter_map(|g| {
            let (a, b) = (g[0], g[1]);
            let big = a.max(b);
            (big > 0.0).then(|| a.min(b) / big)
        })
        .collect()
}

/// Least-squares slope of `y` on `x`.
pub fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return f64::NAN;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).collect();
    slope(&pts)
}

/// Welford accumulator for mean and standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Combine two accumulators (Chan et al. update).
    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.mean += d * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.m2 / (self.count - 1) as f64
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}
