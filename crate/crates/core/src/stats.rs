//! Small statistics toolkit: Wilson intervals, Kolmogorov-Smirnov tests,
//! weighted least squares and histograms.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Wilson score interval at 95%.
pub fn wilson(successes: u64, trials: u64) -> Proportion {
    if trials == 0 {
        return Proportion {
            successes,
            trials,
            estimate: f64::NAN,
            lo: 0.0,
            hi: 1.0,
        };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Proportion {
        successes,
        trials,
        estimate: p,
        lo: if successes == 0 { 0.0 } else { (center - half).max(0.0) },
        hi: if successes >= trials { 1.0 } else { (center + half).min(1.0) },
    }
}

impl Proportion {
    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }
}

/// sup |F_n - F| for a sample against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample statistic sup |F_a - F_b|.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value of the Kolmogorov distribution, P(K > lambda).
pub fn kolmogorov_pvalue(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = 2.0 * (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// p-value of the two-sample test with the usual small-sample correction.
pub fn ks_two_sample_pvalue(d: f64, na: usize, nb: usize) -> f64 {
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let s = ne.sqrt();
    kolmogorov_pvalue((s + 0.12 + 0.11 / s) * d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// Weighted residual sum of squares.
    pub residual: f64,
}

/// Weighted least squares y ~ slope * x + intercept.
pub fn weighted_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<LinearFit> {
    if x.len() != y.len() || x.len() != w.len() || x.len() < 2 {
        return None;
    }
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, c), b)| b * (a - mx) * (c - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, c), b)| b * (c - intercept - slope * a).powi(2))
        .sum();
    let dof = (x.len() as f64 - 2.0).max(1.0);
    let slope_se = (residual / dof / sxx).sqrt();
    Some(LinearFit {
        slope,
        intercept,
        slope_se,
        residual,
    })
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    weighted_fit(x, y, &vec![1.0; x.len()])
}

/// n points log-spaced from lo to hi inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// n points evenly spaced from lo to hi inclusive.
pub fn lin_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Histogram with equal-width bins; `mass` is normalized to total 1 over counted points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub total: u64,
    /// Points falling outside [lo, hi].
    pub outside: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Histogram {
            lo,
            hi,
            counts: vec![0; bins.max(1)],
            total: 0,
            outside: 0,
        }
    }

    pub fn from_data(data: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let mut h = Histogram::new(lo, hi, bins);
        for &x in data {
            h.add(x);
        }
        h
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn add(&mut self, x: f64) {
        self.total += 1;
        if !(x >= self.lo && x <= self.hi) {
            self.outside += 1;
            return;
        }
        let i = (((x - self.lo) / self.width()) as usize).min(self.bins() - 1);
        self.counts[i] += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.outside += other.outside;
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = self.width();
        (self.lo + w * i as f64, self.lo + w * (i + 1) as f64)
    }

    /// Bin masses normalized by the number of in-range points.
    pub fn masses(&self) -> Vec<f64> {
        let inside = (self.total - self.outside) as f64;
        if inside == 0.0 {
            return vec![0.0; self.bins()];
        }
        self.counts.iter().map(|&c| c as f64 / inside).collect()
    }

    pub fn densities(&self) -> Vec<f64> {
        let w = self.width();
        self.masses().iter().map(|m| m / w).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_known_values() {
        let p = wilson(50, 100);
        assert!((p.lo - 0.4038).abs() < 1e-3 && (p.hi - 0.5962).abs() < 1e-3);
        let z = wilson(0, 100);
        assert_eq!(z.lo, 0.0);
        assert!((z.hi - 0.0370).abs() < 1e-3);
    }

    #[test]
    fn ks_uniform_grid() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_statistic(&xs, |x| x.clamp(0.0, 1.0)) <= 0.0005 + 1e-12);
        assert!(kolmogorov_pvalue(1.36) > 0.04 && kolmogorov_pvalue(1.36) < 0.06);
    }

    #[test]
    fn ks_two_sample_identical() {
        let a = [0.1, 0.5, 0.9];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 0.1], &[1.0, 2.0]), 1.0);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept + 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_mass() {
        let data: Vec<f64> = (0..1234).map(|i| (i as f64 * 0.618).fract()).collect();
        let h = Histogram::from_data(&data, 0.0, 1.0, 50);
        let s: f64 = h.masses().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
