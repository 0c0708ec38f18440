//! Binary-input AWGN channel in half-log-likelihood-ratio form.
//!
//! With the all-zero codeword sent (spins +1) and noise standard deviation
//! `eps`, the half-LLR of a bit is Gaussian with mean and variance `eps^-2`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_id, Streams};
use crate::stats::{Estimate, MeanStats};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-bit noise levels. `None` marks a perfectly observed bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    sigmas: Vec<Option<f64>>,
}

impl NoiseSpec {
    pub fn uniform(n: usize, eps: f64) -> Result<Self> {
        Self::new(vec![Some(eps); n])
    }

    /// Convenience constructor from the noise variance `eps^2`.
    pub fn from_variance(n: usize, eps2: f64) -> Result<Self> {
        if !(eps2 > 0.0) {
            return Err(Error::invalid(format!("noise variance must be positive, got {eps2}")));
        }
        Self::uniform(n, eps2.sqrt())
    }

    pub fn new(sigmas: Vec<Option<f64>>) -> Result<Self> {
        for (i, s) in sigmas.iter().enumerate() {
            if let Some(s) = s {
                if !(s.is_finite() && *s > 0.0) {
                    return Err(Error::invalid(format!("bit {i}: noise level must be finite and > 0, got {s}")));
                }
            }
        }
        Ok(Self { sigmas })
    }

    pub fn with_perfect(mut self, bits: &[usize]) -> Self {
        for &b in bits {
            self.sigmas[b] = None;
        }
        self
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn sigma(&self, i: usize) -> Option<f64> {
        self.sigmas[i]
    }

    pub fn is_perfect(&self, i: usize) -> bool {
        self.sigmas[i].is_none()
    }

    /// Largest noise level over all bits (perfect bits count as zero).
    pub fn eps(&self) -> f64 {
        self.sigmas.iter().map(|s| s.unwrap_or(0.0)).fold(0.0, f64::max)
    }
}

/// One channel realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlrVector {
    values: Vec<f64>,
    clamped: Vec<bool>,
    pub noise: Option<NoiseSpec>,
    pub stream: u64,
    /// Number of normal draws consumed from the stream.
    pub counter: u64,
}

impl LlrVector {
    /// Wraps fixed half-LLRs with no clamped bits.
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len();
        Self {
            values,
            clamped: vec![false; n],
            noise: None,
            stream: 0,
            counter: 0,
        }
    }

    /// Marks bits as perfectly observed. Their stored value is ignored.
    pub fn clamp(mut self, bits: &[usize]) -> Self {
        for &b in bits {
            self.clamped[b] = true;
            self.values[b] = 0.0;
        }
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Half-LLR of bit `i`; meaningless when the bit is clamped.
    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_clamped(&self, i: usize) -> bool {
        self.clamped[i]
    }

    pub fn clamped(&self) -> &[bool] {
        &self.clamped
    }

    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|&c| c)
    }

    /// Sum of the finite half-LLRs.
    pub fn sum_finite(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.clamped)
            .filter(|(_, &c)| !c)
            .map(|(v, _)| v)
            .sum()
    }

    /// Same realization with bit `i` shifted by `delta` (for finite differences).
    pub fn perturbed(&self, i: usize, delta: f64) -> Self {
        let mut out = self.clone();
        out.values[i] += delta;
        out
    }
}

/// Draws one half-LLR for noise level `eps`.
pub fn draw_llr<R: Rng + ?Sized>(eps: f64, rng: &mut R) -> f64 {
    let mean = 1.0 / (eps * eps);
    let z: f64 = rng.sample(StandardNormal);
    mean + mean.sqrt() * z
}

/// Samples a realization from an explicit generator. Perfect bits consume no
/// draws, so the draw for bit `i` is the `k`-th normal of the stream where
/// `k` counts the noisy bits before it.
pub fn sample_llr_with<R: Rng + ?Sized>(noise: &NoiseSpec, rng: &mut R) -> LlrVector {
    let n = noise.len();
    let mut values = Vec::with_capacity(n);
    let mut clamped = Vec::with_capacity(n);
    let mut counter = 0;
    for i in 0..n {
        match noise.sigma(i) {
            Some(eps) => {
                values.push(draw_llr(eps, rng));
                clamped.push(false);
                counter += 1;
            }
            None => {
                values.push(0.0);
                clamped.push(true);
            }
        }
    }
    LlrVector {
        values,
        clamped,
        noise: Some(noise.clone()),
        stream: 0,
        counter,
    }
}

/// Samples a realization from the stream identified by `parts`.
pub fn sample_llr(noise: &NoiseSpec, streams: &Streams, parts: &[u64]) -> LlrVector {
    let stream = stream_id(parts);
    let mut rng = streams.rng_for_stream(stream);
    let mut out = sample_llr_with(noise, &mut rng);
    out.stream = stream;
    out
}

/// Gaussian half-LLR density with mean and variance `eps^-2`.
pub fn llr_density(l: f64, eps: f64) -> f64 {
    log_llr_density(l, eps).exp()
}

pub fn log_llr_density(l: f64, eps: f64) -> f64 {
    let var = 1.0 / (eps * eps);
    let d = l - var;
    -0.5 * (LN_2PI + var.ln()) - d * d / (2.0 * var)
}

/// `ln|sinh x|` without overflow for large `|x|`.
pub fn ln_abs_sinh(x: f64) -> f64 {
    let a = x.abs();
    if a < 1e-4 {
        // sinh x = x (1 + x^2/6 + ...)
        a.ln() + (a * a / 6.0).ln_1p()
    } else {
        a + (-(-2.0 * a).exp_m1()).ln() - std::f64::consts::LN_2
    }
}

/// `E[f(l)]` for `l ~ N(mean, sd^2)` by double-exponential quadrature.
///
/// The range `mean ± 14 sd` is split at `mean`, `mean ± 4 sd` and at every
/// point of `breaks` inside it, so integrable endpoint singularities placed
/// at a break (for instance `l = 0`) are handled by the quadrature rule.
pub fn gaussian_expectation<F: Fn(f64) -> f64>(mean: f64, sd: f64, breaks: &[f64], f: F) -> Estimate {
    let lo = mean - 14.0 * sd;
    let hi = mean + 14.0 * sd;
    let mut cuts = vec![lo, mean - 4.0 * sd, mean, mean + 4.0 * sd, hi];
    cuts.extend(breaks.iter().copied().filter(|b| *b > lo && *b < hi));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let norm = -0.5 * LN_2PI - sd.ln();
    let integrand = |x: f64| {
        let z = (x - mean) / sd;
        let v = f(x);
        if v == 0.0 {
            0.0
        } else {
            v * (norm - 0.5 * z * z).exp()
        }
    };
    let mut total = 0.0;
    let mut err = 0.0;
    for w in cuts.windows(2) {
        let out = quadrature::integrate(integrand, w[0], w[1], 1e-13);
        total += out.integral;
        err += out.error_estimate;
    }
    Estimate::new(total, err)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MomentMethod {
    Quadrature,
    MonteCarlo { samples: u64, seed: u64 },
}

/// `E |sinh 2l|^(-2s)` over the half-LLR density at noise level `eps`.
///
/// The absolute value makes the moment well defined for negative `l`; the
/// singularity at `l = 0` is integrable because `2s < 1`.
pub fn sinh_moment(eps: f64, s: f64, method: MomentMethod) -> Result<Estimate> {
    if !(s > 0.0 && s < 0.5) {
        return Err(Error::invalid(format!("sinh moment exponent s must lie in (0, 1/2), got {s}")));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid(format!("noise level must be finite and > 0, got {eps}")));
    }
    let g = |l: f64| (-2.0 * s * ln_abs_sinh(2.0 * l)).exp();
    match method {
        MomentMethod::Quadrature => {
            let var = 1.0 / (eps * eps);
            Ok(gaussian_expectation(var, var.sqrt(), &[0.0], g))
        }
        MomentMethod::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::invalid("Monte Carlo needs at least two samples"));
            }
            let mut rng = Streams::new(seed).rng(&[crate::rng::tag::NOISE, u64::MAX]);
            let stats: MeanStats = (0..samples).map(|_| g(draw_llr(eps, &mut rng))).collect();
            Ok(Estimate::from(&stats))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn sample_moments() {
        let noise = NoiseSpec::uniform(1_000_000, 1.0).unwrap();
        let l = sample_llr(&noise, &Streams::new(7), &[1]);
        let stats: MeanStats = l.values().iter().copied().collect();
        assert!((stats.mean() - 1.0).abs() < 0.01);
        assert!((stats.variance() - 1.0).abs() < 0.02);
    }

    #[test]
    fn negative_llr_probability_matches_normal_cdf() {
        let eps2: f64 = 0.1;
        let n = 2_000_000;
        let noise = NoiseSpec::from_variance(n, eps2).unwrap();
        let l = sample_llr(&noise, &Streams::new(11), &[2]);
        let neg = l.values().iter().filter(|&&v| v < 0.0).count() as f64;
        let p = Normal::new(0.0, 1.0).unwrap().cdf(-(1.0 / eps2).sqrt());
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((neg / n as f64 - p).abs() < 3.0 * se, "{} vs {p}", neg / n as f64);
    }

    #[test]
    fn perfect_bits_are_clamped() {
        let noise = NoiseSpec::uniform(4, 0.8).unwrap().with_perfect(&[2]);
        let l = sample_llr(&noise, &Streams::new(1), &[0]);
        assert!(l.is_clamped(2));
        assert!(!l.is_clamped(0));
        assert_eq!(l.counter, 3);
        assert!(l.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn sampling_is_reproducible() {
        let noise = NoiseSpec::uniform(50, 0.7).unwrap();
        let s = Streams::new(99);
        assert_eq!(sample_llr(&noise, &s, &[3, 4]), sample_llr(&noise, &s, &[3, 4]));
        assert_ne!(sample_llr(&noise, &s, &[3, 4]), sample_llr(&noise, &s, &[3, 5]));
    }

    #[test]
    fn density_values() {
        let eps: f64 = 0.6;
        let var = eps.powi(-2);
        assert_relative_eq!(llr_density(var, eps), (2.0 * std::f64::consts::PI * var).powf(-0.5), max_relative = 1e-14);
        assert_relative_eq!(
            llr_density(0.0, 1.0),
            (2.0 * std::f64::consts::PI).powf(-0.5) * (-0.5f64).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn density_integrates_to_one() {
        for eps in [0.3, 1.0, 2.0] {
            let var: f64 = 1.0 / (eps * eps);
            let sd = var.sqrt();
            let out = quadrature::integrate(|l| llr_density(l, eps), var - 10.0 * sd, var + 10.0 * sd, 1e-14);
            assert!((out.integral - 1.0).abs() < 1e-10, "eps {eps}: {}", out.integral);
        }
    }

    #[test]
    fn channel_symmetry() {
        for eps in [0.3, 0.7, 1.5] {
            for k in -20..=20 {
                let l = k as f64 * 0.37;
                let lhs = log_llr_density(l, eps);
                let rhs = 2.0 * l + log_llr_density(-l, eps);
                // relative error of the densities themselves
                assert!((lhs - rhs).abs() < 1e-12, "eps {eps} l {l}");
            }
        }
    }

    #[test]
    fn ln_abs_sinh_matches_direct() {
        for x in [-3.0, -1e-6, 1e-5, 2e-4, 0.3, 5.0, 20.0] {
            assert_relative_eq!(ln_abs_sinh(x), f64::sinh(x).abs().ln(), max_relative = 1e-12);
        }
        assert!(ln_abs_sinh(2000.0).is_finite());
    }

    #[test]
    fn sinh_moment_small_exponent_tends_to_one() {
        let m = sinh_moment(0.5f64.sqrt(), 1e-6, MomentMethod::Quadrature).unwrap();
        assert!((m.value - 1.0).abs() < 1e-4, "{}", m.value);
    }

    #[test]
    fn sinh_moment_quadrature_agrees_with_monte_carlo() {
        let eps = 0.1f64.sqrt();
        let q = sinh_moment(eps, 1.0 / 16.0, MomentMethod::Quadrature).unwrap();
        let mc = sinh_moment(eps, 1.0 / 16.0, MomentMethod::MonteCarlo { samples: 1_000_000, seed: 5 }).unwrap();
        assert!((q.value - mc.value).abs() < 3.0 * mc.stderr, "{} vs {} ± {}", q.value, mc.value, mc.stderr);
    }

    #[test]
    fn sinh_moment_grows_with_noise() {
        let a = sinh_moment(0.1f64.sqrt(), 1.0 / 16.0, MomentMethod::Quadrature).unwrap();
        let b = sinh_moment(0.5f64.sqrt(), 1.0 / 16.0, MomentMethod::Quadrature).unwrap();
        assert!(a.value < b.value);
        for s in [1.0 / 16.0, 1.0 / 8.0, 3.0 / 8.0] {
            let mut prev = f64::INFINITY;
            for snr in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
                let m = sinh_moment(1.0 / f64::sqrt(snr), s, MomentMethod::Quadrature).unwrap();
                assert!(m.value.is_finite());
                assert!(m.value < prev, "s {s} snr {snr}");
                prev = m.value;
            }
        }
    }

    #[test]
    fn sinh_moment_rejects_bad_exponent() {
        assert!(sinh_moment(1.0, 0.5, MomentMethod::Quadrature).is_err());
        assert!(sinh_moment(1.0, 0.0, MomentMethod::Quadrature).is_err());
    }

    #[test]
    fn gaussian_expectation_moments() {
        let e = gaussian_expectation(2.0, 1.5, &[], |x| x * x);
        assert_relative_eq!(e.value, 4.0 + 2.25, max_relative = 1e-10);
    }
}
