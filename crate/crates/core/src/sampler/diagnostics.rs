//! Convergence diagnostics: split R-hat and rank-normalised bulk effective
//! sample size, computed per column from chains of equal length.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Pass/fail thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub max_rhat: f64,
    pub min_ess_per_chain: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { max_rhat: 1.01, min_ess_per_chain: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Monte Carlo standard error of the mean.
    pub mcse: f64,
    #[serde(with = "nan_as_null")]
    pub rhat: f64,
    #[serde(with = "nan_as_null")]
    pub ess_bulk: f64,
    /// Identical value in every draw: R-hat is undefined.
    pub constant: bool,
    /// Fixed by construction (e.g. the unit diagonal head of a correlation
    /// factor); excluded from pass/fail.
    pub structural: bool,
}

impl ParamSummary {
    pub fn passes(&self, t: &Thresholds, chains: usize) -> bool {
        if self.structural {
            return true;
        }
        !self.constant && self.rhat < t.max_rhat && self.ess_bulk > t.min_ess_per_chain * chains as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub params: Vec<ParamSummary>,
    pub thresholds: Thresholds,
    pub chains: usize,
    pub draws: usize,
    pub divergences: Vec<usize>,
    pub passed: bool,
}

impl DiagnosticsReport {
    pub fn failures(&self) -> impl Iterator<Item = &ParamSummary> {
        self.params.iter().filter(|p| !p.passes(&self.thresholds, self.chains))
    }

    pub fn max_rhat(&self) -> f64 {
        self.params.iter().filter(|p| !p.structural).map(|p| p.rhat).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.params.iter().filter(|p| !p.structural).map(|p| p.ess_bulk).fold(f64::INFINITY, f64::min)
    }

    /// Plain-text table, one row per parameter.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<40} {:>12} {:>12} {:>10} {:>8} {:>9}\n",
            "parameter", "mean", "sd", "mcse", "rhat", "ess_bulk"
        );
        for p in &self.params {
            let flag = if p.structural {
                ""
            } else if p.constant {
                "  constant"
            } else if !p.passes(&self.thresholds, self.chains) {
                "  *"
            } else {
                ""
            };
            out.push_str(&format!(
                "{:<40} {:>12.5} {:>12.5} {:>10.2e} {:>8.4} {:>9.1}{flag}\n",
                p.name, p.mean, p.sd, p.mcse, p.rhat, p.ess_bulk
            ));
        }
        out.push_str(&format!(
            "divergences per chain: {:?}\nmax rhat {:.4}, min bulk ess {:.1}: {}\n",
            self.divergences,
            self.max_rhat(),
            self.min_ess(),
            if self.passed { "pass" } else { "FAIL" }
        ));
        out
    }
}

/// JSON has no NaN; undefined statistics are written as null.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Halves of every chain (the odd middle draw is dropped).
pub fn split(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let n = chains[0].len() / 2;
    let m = chains[0].len();
    chains.iter().flat_map(|c| [c[..n].to_vec(), c[m - n..].to_vec()]).collect()
}

/// Potential scale reduction from between- and within-chain variance.
pub fn rhat_of(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| var(c)).collect::<Vec<_>>());
    let b = n * var(&means);
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Split R-hat on the raw values.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    rhat_of(&split(chains))
}

/// Normal scores of the pooled ranks (average rank for ties).
pub fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(Vec::len).sum();
    let mut all: Vec<(f64, usize, usize)> = Vec::with_capacity(total);
    for (c, xs) in chains.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            all.push((x, c, i));
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let std = Normal::new(0.0, 1.0).unwrap();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let s = total as f64;
    let mut k = 0;
    while k < all.len() {
        let mut e = k;
        while e + 1 < all.len() && all[e + 1].0 == all[k].0 {
            e += 1;
        }
        let rank = (k + e) as f64 / 2.0 + 1.0;
        let z = std.inverse_cdf((rank - 0.375) / (s + 0.25));
        for &(_, c, i) in &all[k..=e] {
            out[c][i] = z;
        }
        k = e + 1;
    }
    out
}

/// Effective sample size with Geyer's initial monotone sequence.
pub fn ess_of(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov = |t: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, mu)| (0..n - t).map(|i| (c[i] - mu) * (c[i + t] - mu)).sum::<f64>() / n as f64)
            .sum::<f64>()
            / m as f64
    };
    let acov0 = acov(0);
    let mean_var = acov0 * n as f64 / (n as f64 - 1.0);
    let mut var_plus = mean_var * (n as f64 - 1.0) / n as f64;
    if m > 1 {
        var_plus += var(&means);
    }
    let mut rho = vec![0.0; n + 3];
    rho[0] = 1.0;
    let mut even = 1.0;
    let mut odd = 1.0 - (mean_var - acov(1)) / var_plus;
    rho[1] = odd;
    let mut s = 1;
    while s < n.saturating_sub(4) && even + odd > 0.0 {
        even = 1.0 - (mean_var - acov(s + 1)) / var_plus;
        odd = 1.0 - (mean_var - acov(s + 2)) / var_plus;
        if even + odd >= 0.0 {
            rho[s + 1] = even;
            rho[s + 2] = odd;
        }
        s += 2;
    }
    let max_s = s;
    if even > 0.0 {
        rho[max_s + 1] = even;
    }
    let mut t = 1;
    while t + 3 <= max_s {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = -1.0 + 2.0 * rho[..max_s].iter().sum::<f64>() + rho[max_s + 1];
    // antithetic chains can push tau to or below zero
    total / tau.max(1.0 / total.log10())
}

/// Reported R-hat: the largest of the classic split value, the
/// rank-normalised bulk value, and the rank-normalised value of the folded
/// draws (which catches differences in scale).
pub fn rhat(chains: &[&[f64]]) -> f64 {
    let sp = split(chains);
    let bulk = rhat_of(&rank_normalize(&sp));
    let all: Vec<f64> = sp.iter().flatten().copied().collect();
    let med = median(&all);
    let folded: Vec<Vec<f64>> = sp.iter().map(|c| c.iter().map(|x| (x - med).abs()).collect()).collect();
    let tail = rhat_of(&rank_normalize(&folded));
    rhat_of(&sp).max(bulk).max(tail)
}

pub fn ess_bulk(chains: &[&[f64]]) -> f64 {
    ess_of(&rank_normalize(&split(chains)))
}

/// ESS of the raw values, used for the standard error of the mean.
pub fn ess_mean(chains: &[&[f64]]) -> f64 {
    ess_of(&split(chains))
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Summary of one column; `constant` when every draw is identical.
pub fn summarize_column(name: &str, chains: &[&[f64]], structural: bool) -> ParamSummary {
    let all: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let m = mean(&all);
    let sd = var(&all).sqrt();
    let constant = all.iter().all(|&x| x == all[0]);
    let (rhat, ess, mcse) = if constant {
        (f64::NAN, f64::NAN, 0.0)
    } else {
        let ess_m = ess_mean(chains);
        (rhat(chains), ess_bulk(chains), sd / ess_m.sqrt())
    };
    ParamSummary { name: name.to_string(), mean: m, sd, mcse, rhat, ess_bulk: ess, constant, structural }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::standard_normal;
    use crate::rng::StreamKey;

    fn normal_chains(m: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        (0..m)
            .map(|c| {
                let mut r = StreamKey::new(seed).child(c as u64).rng();
                (0..n).map(|_| standard_normal(&mut r)).collect()
            })
            .collect()
    }

    #[test]
    fn iid_chains_have_rhat_near_one() {
        let ch = normal_chains(4, 1000, 1);
        let refs: Vec<&[f64]> = ch.iter().map(|c| c.as_slice()).collect();
        let r = rhat(&refs);
        assert!((0.999..1.01).contains(&r), "{r}");
        let e = ess_bulk(&refs);
        assert!(e > 3000.0 && e < 5000.0, "{e}");
    }

    #[test]
    fn offset_chains_fail() {
        let mut ch = normal_chains(2, 500, 2);
        for x in ch[1].iter_mut() {
            *x += 10.0;
        }
        let refs: Vec<&[f64]> = ch.iter().map(|c| c.as_slice()).collect();
        assert!(rhat(&refs) > 2.0);
        assert!(split_rhat(&refs) > 2.0);
    }

    #[test]
    fn constant_chains_are_flagged() {
        let a = vec![3.0; 10];
        let s = summarize_column("c", &[&a, &a], false);
        assert!(s.constant && s.rhat.is_nan());
        assert!(!s.passes(&Thresholds::default(), 2));
    }

    #[test]
    fn ar1_ess_matches_theory() {
        // AR(1) with phi = 0.5: tau = (1 + phi) / (1 - phi) = 3
        let mut r = StreamKey::new(3).rng();
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..5000)
                    .map(|_| {
                        x = 0.5 * x + (0.75f64).sqrt() * standard_normal(&mut r);
                        x
                    })
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        let e = ess_mean(&refs);
        assert!((e / (20000.0 / 3.0) - 1.0).abs() < 0.15, "{e}");
    }

    #[test]
    fn ess_of_antithetic_chains_is_positive_and_capped() {
        let a: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let b: Vec<f64> = a.iter().map(|x| -x).collect();
        let e = ess_bulk(&[&a, &b]);
        let total = 400.0_f64;
        assert!(e > 0.0);
        assert!(e <= total * total.log10() + 1e-9);
    }

    #[test]
    fn rank_normalize_handles_ties() {
        let z = rank_normalize(&[vec![1.0, 2.0], vec![2.0, 3.0]]);
        assert_eq!(z[0][1], z[1][0]);
        assert!(z[0][0] < z[0][1] && z[0][1] < z[1][1]);
    }
}
