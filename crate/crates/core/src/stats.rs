//! Mergeable summary statistics and weighted least squares.

use serde::{Deserialize, Serialize};

/// Running mean and variance (Welford), mergeable with Chan's update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl MeanStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &MeanStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let n = n1 + n2;
        let delta = other.mean - self.mean;
        self.mean += delta * n2 / n;
        self.m2 += other.m2 + delta * delta * n1 * n2 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for MeanStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = MeanStats::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// A scalar with a standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        Estimate { value, stderr }
    }

    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0 }
    }

    /// Difference of two independent estimates.
    pub fn minus(&self, other: &Estimate) -> Estimate {
        Estimate {
            value: self.value - other.value,
            stderr: self.stderr.hypot(other.stderr),
        }
    }

    /// |value| measured in units of the standard error.
    pub fn z_score(&self) -> f64 {
        if self.stderr == 0.0 {
            if self.value == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.value.abs() / self.stderr
        }
    }
}

impl From<&MeanStats> for Estimate {
    fn from(s: &MeanStats) -> Self {
        Estimate::new(s.mean(), s.stderr())
    }
}

/// Straight-line fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub intercept_stderr: f64,
    pub points: usize,
}

impl LineFit {
    /// Two-sided interval `slope ± z * stderr`.
    pub fn slope_interval(&self, z: f64) -> (f64, f64) {
        (self.slope - z * self.slope_stderr, self.slope + z * self.slope_stderr)
    }
}

/// Weighted least squares with known per-point standard deviations.
///
/// Returns `None` with fewer than two distinct abscissae.
pub fn weighted_line_fit(xs: &[f64], ys: &[f64], sigmas: &[f64]) -> Option<LineFit> {
    assert_eq!(xs.len(), ys.len());
    assert_eq!(xs.len(), sigmas.len());
    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    for ((&x, &y), &s) in xs.iter().zip(ys).zip(sigmas) {
        let w = 1.0 / (s * s).max(f64::MIN_POSITIVE);
        sw += w;
        swx += w * x;
        swy += w * y;
    }
    if sw == 0.0 {
        return None;
    }
    let xbar = swx / sw;
    let ybar = swy / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for ((&x, &y), &s) in xs.iter().zip(ys).zip(sigmas) {
        let w = 1.0 / (s * s).max(f64::MIN_POSITIVE);
        sxx += w * (x - xbar) * (x - xbar);
        sxy += w * (x - xbar) * (y - ybar);
    }
    if xs.len() < 2 || sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    Some(LineFit {
        slope,
        slope_stderr: (1.0 / sxx).sqrt(),
        intercept,
        intercept_stderr: (1.0 / sw + xbar * xbar / sxx).sqrt(),
        points: xs.len(),
    })
}

/// Neumaier-compensated sum that also tracks the sum of magnitudes.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
    abs: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
        self.abs += x.abs();
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    /// Folds another partial sum into this one.
    pub fn merge(&mut self, other: &CompensatedSum) {
        let abs = self.abs + other.abs;
        self.add(other.sum);
        self.add(other.comp);
        self.abs = abs;
    }

    pub fn abs_total(&self) -> f64 {
        self.abs
    }

    /// `sum |x| / |sum x|`, infinite for an exact zero.
    pub fn condition(&self) -> f64 {
        let v = self.value().abs();
        if v == 0.0 {
            if self.abs == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            self.abs / v
        }
    }
}

/// Sums after sorting by increasing magnitude.
pub fn sorted_sum(terms: &mut [f64]) -> f64 {
    terms.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut acc = CompensatedSum::default();
    for &t in terms.iter() {
        acc.add(t);
    }
    acc.value()
}
