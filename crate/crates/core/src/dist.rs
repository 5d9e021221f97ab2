//! Probability distributions: log-densities with derivatives for the sampler
//! and variate generation for the simulator.
//!
//! Variate generators are implemented here (polar normal, Marsaglia-Tsang
//! gamma, two-gamma beta) rather than borrowed, so the simulator and the
//! independent oracle in the CLI do not share sampling code.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("invalid {family:?} parameters: {message}")]
    InvalidParams { family: Family, message: String },
    #[error("degenerate PERT: mode {mode} not strictly inside ({min}, {max})")]
    DegeneratePert { min: f64, mode: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Normal,
    HalfNormal,
    Lognormal,
    Bernoulli,
    Categorical,
    Gamma,
    Uniform,
    Pert,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    Normal { mean: f64, sd: f64 },
    HalfNormal { sd: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Bernoulli { p: f64 },
    /// Outcomes are numbered from 1.
    Categorical { probs: Vec<f64> },
    Gamma { shape: f64, rate: f64 },
    Uniform { low: f64, high: f64 },
    /// Shape-4 Beta-PERT on `[min, max]`.
    Pert { min: f64, mode: f64, max: f64 },
}

/// A validated distribution. Construct through the named constructors.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    kind: Kind,
}

pub const PERT_SHAPE: f64 = 4.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

fn invalid(family: Family, message: impl Into<String>) -> DistError {
    DistError::InvalidParams { family, message: message.into() }
}

fn finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

impl DistributionSpec {
    pub fn normal(mean: f64, sd: f64) -> Result<Self, DistError> {
        if !finite(&[mean, sd]) || sd <= 0.0 {
            return Err(invalid(Family::Normal, format!("need finite mean and sd > 0, got ({mean}, {sd})")));
        }
        Ok(Self { kind: Kind::Normal { mean, sd } })
    }

    pub fn half_normal(sd: f64) -> Result<Self, DistError> {
        if !sd.is_finite() || sd <= 0.0 {
            return Err(invalid(Family::HalfNormal, format!("need sd > 0, got {sd}")));
        }
        Ok(Self { kind: Kind::HalfNormal { sd } })
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self, DistError> {
        if !finite(&[mu, sigma]) || sigma <= 0.0 {
            return Err(invalid(Family::Lognormal, format!("need sigma > 0, got ({mu}, {sigma})")));
        }
        Ok(Self { kind: Kind::Lognormal { mu, sigma } })
    }

    pub fn bernoulli(p: f64) -> Result<Self, DistError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(Family::Bernoulli, format!("p = {p} outside [0, 1]")));
        }
        Ok(Self { kind: Kind::Bernoulli { p } })
    }

    pub fn categorical(probs: Vec<f64>) -> Result<Self, DistError> {
        if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(invalid(Family::Categorical, "probabilities must be nonnegative and nonempty"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(Family::Categorical, format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { kind: Kind::Categorical { probs } })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self, DistError> {
        if !finite(&[shape, rate]) || shape <= 0.0 || rate <= 0.0 {
            return Err(invalid(Family::Gamma, format!("need shape, rate > 0, got ({shape}, {rate})")));
        }
        Ok(Self { kind: Kind::Gamma { shape, rate } })
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self, DistError> {
        if !finite(&[low, high]) || low >= high {
            return Err(invalid(Family::Uniform, format!("need low < high, got ({low}, {high})")));
        }
        Ok(Self { kind: Kind::Uniform { low, high } })
    }

    pub fn pert(min: f64, mode: f64, max: f64) -> Result<Self, DistError> {
        if !finite(&[min, mode, max]) || !(min < mode && mode < max) {
            return Err(invalid(Family::Pert, format!("need min < mode < max, got ({min}, {mode}, {max})")));
        }
        Ok(Self { kind: Kind::Pert { min, mode, max } })
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn family(&self) -> Family {
        match self.kind {
            Kind::Normal { .. } => Family::Normal,
            Kind::HalfNormal { .. } => Family::HalfNormal,
            Kind::Lognormal { .. } => Family::Lognormal,
            Kind::Bernoulli { .. } => Family::Bernoulli,
            Kind::Categorical { .. } => Family::Categorical,
            Kind::Gamma { .. } => Family::Gamma,
            Kind::Uniform { .. } => Family::Uniform,
            Kind::Pert { .. } => Family::Pert,
        }
    }

    /// Log-density (or log-mass for the discrete families); `-inf` outside the support.
    pub fn log_density(&self, x: f64) -> f64 {
        match self.kind {
            Kind::Normal { mean, sd } => normal_lpdf(x, mean, sd),
            Kind::HalfNormal { sd } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    LN_2 + normal_lpdf(x, 0.0, sd)
                }
            }
            Kind::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    normal_lpdf(x.ln(), mu, sigma) - x.ln()
                }
            }
            Kind::Bernoulli { p } => {
                if x == 1.0 {
                    p.ln()
                } else if x == 0.0 {
                    (1.0 - p).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Kind::Categorical { ref probs } => {
                if x.fract() == 0.0 && x >= 1.0 && x <= probs.len() as f64 {
                    probs[x as usize - 1].ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Kind::Gamma { shape, rate } => gamma_lpdf(x, shape, rate),
            Kind::Uniform { low, high } => {
                if (low..=high).contains(&x) {
                    -(high - low).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Kind::Pert { min, mode, max } => {
                if !(min..=max).contains(&x) {
                    return f64::NEG_INFINITY;
                }
                let (a, b) = pert_shape(min, mode, max);
                let w = max - min;
                (a - 1.0) * (x - min).ln() + (b - 1.0) * (max - x).ln() - ln_beta(a, b) - (a + b - 1.0) * w.ln()
            }
        }
    }

    /// d/dx of [`log_density`](Self::log_density). Discrete families have no
    /// derivative in `x` and return NaN.
    pub fn grad_log_density(&self, x: f64) -> f64 {
        match self.kind {
            Kind::Normal { mean, sd } => (mean - x) / (sd * sd),
            Kind::HalfNormal { sd } => -x / (sd * sd),
            Kind::Lognormal { mu, sigma } => (-(x.ln() - mu) / (sigma * sigma) - 1.0) / x,
            Kind::Bernoulli { .. } | Kind::Categorical { .. } => f64::NAN,
            Kind::Gamma { shape, rate } => (shape - 1.0) / x - rate,
            Kind::Uniform { .. } => 0.0,
            Kind::Pert { min, mode, max } => {
                let (a, b) = pert_shape(min, mode, max);
                (a - 1.0) / (x - min) - (b - 1.0) / (max - x)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            Kind::Normal { mean, sd } => mean + sd * standard_normal(rng),
            Kind::HalfNormal { sd } => sd * standard_normal(rng).abs(),
            Kind::Lognormal { mu, sigma } => (mu + sigma * standard_normal(rng)).exp(),
            Kind::Bernoulli { p } => f64::from(u8::from(uniform01(rng) < p)),
            Kind::Categorical { ref probs } => categorical(rng, probs) as f64,
            Kind::Gamma { shape, rate } => standard_gamma(rng, shape) / rate,
            Kind::Uniform { low, high } => low + (high - low) * uniform01(rng),
            Kind::Pert { min, mode, max } => {
                let (a, b) = pert_shape(min, mode, max);
                min + (max - min) * beta(rng, a, b)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self.kind {
            Kind::Normal { mean, .. } => mean,
            Kind::HalfNormal { sd } => sd * (2.0 / PI).sqrt(),
            Kind::Lognormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            Kind::Bernoulli { p } => p,
            Kind::Categorical { ref probs } => probs.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum(),
            Kind::Gamma { shape, rate } => shape / rate,
            Kind::Uniform { low, high } => 0.5 * (low + high),
            Kind::Pert { min, mode, max } => (min + PERT_SHAPE * mode + max) / (PERT_SHAPE + 2.0),
        }
    }
}

/// Beta shape parameters of the shape-4 PERT with the given three points.
pub fn pert_to_beta(min: f64, mode: f64, max: f64) -> Result<(f64, f64), DistError> {
    if !(min < mode && mode < max) {
        return Err(DistError::DegeneratePert { min, mode, max });
    }
    Ok(pert_shape(min, mode, max))
}

fn pert_shape(min: f64, mode: f64, max: f64) -> (f64, f64) {
    let w = max - min;
    (1.0 + PERT_SHAPE * (mode - min) / w, 1.0 + PERT_SHAPE * (max - mode) / w)
}

/// Draws from PERT(min, mode, max); a mode on (or beyond) a bound collapses to
/// a point mass at that bound. Returns the value and whether it was degenerate.
pub fn sample_pert<R: Rng + ?Sized>(rng: &mut R, min: f64, mode: f64, max: f64) -> (f64, bool) {
    if mode <= min {
        return (min, true);
    }
    if mode >= max {
        return (max, true);
    }
    let (a, b) = pert_shape(min, mode, max);
    (min + (max - min) * beta(rng, a, b), false)
}

pub fn normal_lpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - HALF_LN_2PI
}

pub fn gamma_lpdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    if x == 0.0 {
        return match shape {
            s if s < 1.0 => f64::INFINITY,
            s if s == 1.0 => rate.ln(),
            _ => f64::NEG_INFINITY,
        };
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `ln(sum(exp(xs)))` without overflow; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Uniform on the open interval (0, 1).
pub fn uniform01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Marsaglia polar method.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u = 2.0 * uniform01(rng) - 1.0;
        let v = 2.0 * uniform01(rng) - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// Gamma(shape, 1) by Marsaglia and Tsang, boosted for shape < 1.
pub fn standard_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape < 1.0 {
        let g = standard_gamma(rng, shape + 1.0);
        return g * uniform01(rng).powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let (x, v) = loop {
            let x = standard_normal(rng);
            let v = 1.0 + c * x;
            if v > 0.0 {
                break (x, v * v * v);
            }
        };
        let u = uniform01(rng);
        if u < 1.0 - 0.0331 * x.powi(4) || u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

pub fn beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let x = standard_gamma(rng, a);
    let y = standard_gamma(rng, b);
    x / (x + y)
}

/// Inverse-CDF categorical draw, numbered from 1. Probabilities need not be
/// normalised exactly; the last nonzero category absorbs rounding.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let total: f64 = probs.iter().sum();
    let u = uniform01(rng) * total;
    let mut acc = 0.0;
    let mut last = 1;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = i + 1;
        }
        acc += p;
        if u < acc {
            return i + 1;
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use proptest::prelude::*;

    fn rng() -> crate::rng::StreamRng {
        StreamKey::new(2024).rng()
    }

    #[test]
    fn normal_at_mode() {
        let d = DistributionSpec::normal(0.0, 1.0).unwrap();
        assert!((d.log_density(0.0) + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        assert_eq!(d.grad_log_density(0.0), 0.0);
        let d = DistributionSpec::normal(1.5, 2.0).unwrap();
        assert!((d.grad_log_density(0.5) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn uniform_density() {
        let d = DistributionSpec::uniform(0.8, 2.6).unwrap();
        assert!((d.log_density(1.4) - (1.0f64 / 1.8).ln()).abs() < 1e-14);
        assert_eq!(d.log_density(3.0), f64::NEG_INFINITY);
    }

    #[test]
    fn gamma_matches_high_precision_reference() {
        // 40-digit reference for Gamma(shape 2, rate 3) at 1.5
        let d = DistributionSpec::gamma(2.0, 3.0).unwrap();
        assert!((d.log_density(1.5) - (-1.897_310_314_555_616_2)).abs() < 1e-13);
    }

    #[test]
    fn gamma_gradient_matches_central_difference() {
        let d = DistributionSpec::gamma(2.0, 3.0).unwrap();
        let h = 1e-6;
        let fd = (d.log_density(1.5 + h) - d.log_density(1.5 - h)) / (2.0 * h);
        assert!((d.grad_log_density(1.5) - fd).abs() < 1e-6);
        assert!((d.grad_log_density(1.5) + 7.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn lognormal_gradient_at_one() {
        let d = DistributionSpec::lognormal(0.0, 1.0).unwrap();
        assert_eq!(d.grad_log_density(1.0), -1.0);
    }

    #[test]
    fn half_normal_includes_fold_factor() {
        let h = DistributionSpec::half_normal(1.0).unwrap();
        let n = DistributionSpec::normal(0.0, 1.0).unwrap();
        assert!((h.log_density(0.7) - n.log_density(0.7) - LN_2).abs() < 1e-15);
        assert_eq!(h.log_density(-0.1), f64::NEG_INFINITY);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(DistributionSpec::normal(0.0, 0.0).is_err());
        assert!(DistributionSpec::gamma(-1.0, 1.0).is_err());
        assert!(DistributionSpec::uniform(1.0, 1.0).is_err());
        assert!(DistributionSpec::pert(0.0, 0.0, 1.0).is_err());
        assert!(DistributionSpec::categorical(vec![0.5, 0.4]).is_err());
        assert!(DistributionSpec::categorical(vec![0.5, 0.5]).is_ok());
        assert!(DistributionSpec::bernoulli(1.1).is_err());
    }

    #[test]
    fn pert_shapes() {
        assert_eq!(pert_to_beta(0.0, 0.5, 1.0).unwrap(), (3.0, 3.0));
        assert_eq!(pert_to_beta(0.0, 0.25, 1.0).unwrap(), (2.0, 4.0));
        assert!(matches!(pert_to_beta(0.0, 0.0, 1.0), Err(DistError::DegeneratePert { .. })));
        assert!(matches!(pert_to_beta(0.0, 1.0, 1.0), Err(DistError::DegeneratePert { .. })));
    }

    #[test]
    fn degenerate_pert_is_a_point_mass() {
        let mut r = rng();
        for _ in 0..100 {
            assert_eq!(sample_pert(&mut r, 0.0, 0.0, 1.0), (0.0, true));
            assert_eq!(sample_pert(&mut r, 0.0, 1.0, 1.0), (1.0, true));
        }
    }

    #[test]
    fn uniform_mean_law_of_large_numbers() {
        let d = DistributionSpec::uniform(0.0, 1.0).unwrap();
        let mut r = rng();
        let n = 1_000_000;
        let m = (0..n).map(|_| d.sample(&mut r)).sum::<f64>() / n as f64;
        assert!((m - 0.5).abs() < 0.002, "{m}");
    }

    #[test]
    fn pert_mean_matches_identity() {
        let d = DistributionSpec::pert(0.0, 0.25, 1.0).unwrap();
        let mut r = rng();
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = d.sample(&mut r);
            assert!((0.0..=1.0).contains(&x));
            sum += x;
        }
        assert!((sum / n as f64 - 1.0 / 3.0).abs() < 0.002);
        assert!((d.mean() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pert_means_over_modes() {
        for (i, &m) in [0.1, 0.25, 0.5, 0.9].iter().enumerate() {
            let mut r = StreamKey::new(31).child(i as u64).rng();
            let n = 1_000_000;
            let mean = (0..n).map(|_| sample_pert(&mut r, 0.0, m, 1.0).0).sum::<f64>() / n as f64;
            assert!((mean - (1.0 + 4.0 * m) / 6.0).abs() < 0.002, "mode {m}: {mean}");
        }
    }

    #[test]
    fn beta_draws_pass_ks() {
        use statrs::distribution::{Beta, ContinuousCDF};
        let mut r = rng();
        let (a, b) = (2.0, 4.0);
        let mut x: Vec<f64> = (0..20_000).map(|_| beta(&mut r, a, b)).collect();
        x.sort_by(f64::total_cmp);
        let cdf = Beta::new(a, b).unwrap();
        let n = x.len() as f64;
        let d = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = cdf.cdf(v);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.628 / n.sqrt(), "D = {d}");
    }

    proptest! {
        #[test]
        fn pert_draws_stay_in_range(mode in -0.5f64..1.5, seed in 0u64..1000) {
            let mut r = StreamKey::new(seed).rng();
            for _ in 0..20 {
                let (v, degenerate) = sample_pert(&mut r, 0.0, mode, 1.0);
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert_eq!(degenerate, !(0.0 < mode && mode < 1.0));
            }
        }

        #[test]
        fn ln_beta_matches_reference(a in 0.05f64..50.0, b in 0.05f64..50.0) {
            let want = statrs::function::beta::ln_beta(a, b);
            prop_assert!((ln_beta(a, b) - want).abs() < 1e-9 * want.abs().max(1.0));
        }

        #[test]
        fn log_sum_exp_matches_direct_sum(xs in prop::collection::vec(-30.0f64..30.0, 1..10)) {
            let want = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
            prop_assert!((log_sum_exp(&xs) - want).abs() < 1e-12 * want.abs().max(1.0));
        }

        #[test]
        fn gamma_lpdf_matches_reference(x in 0.01f64..20.0, shape in 0.2f64..20.0, rate in 0.1f64..10.0) {
            use statrs::distribution::{Continuous, Gamma};
            let want = Gamma::new(shape, rate).unwrap().ln_pdf(x);
            prop_assert!((gamma_lpdf(x, shape, rate) - want).abs() < 1e-9 * want.abs().max(1.0));
        }
    }

    #[test]
    fn categorical_frequencies() {
        let d = DistributionSpec::categorical(vec![0.2, 0.3, 0.5]).unwrap();
        let mut r = rng();
        let n = 1_000_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[d.sample(&mut r) as usize - 1] += 1;
        }
        for (c, p) in counts.iter().zip([0.2, 0.3, 0.5]) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.003);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = DistributionSpec::gamma(0.7, 2.0).unwrap();
        let a: Vec<f64> = {
            let mut r = rng();
            (0..50).map(|_| d.sample(&mut r)).collect()
        };
        let b: Vec<f64> = {
            let mut r = rng();
            (0..50).map(|_| d.sample(&mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + LN_2)).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0);
    }
}
