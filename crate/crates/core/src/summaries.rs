//! Posterior summaries of the pseudo-populations: each quantity is computed
//! within every iteration, then the median and a central credible interval
//! are taken across iterations. Quantiles interpolate linearly between order
//! statistics (the R type 7 rule).

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::StratumKey;
use crate::models::Source;
use crate::pseudopop::{ExposureSample, SampleTable};

#[derive(Debug, Error)]
pub enum SummaryError {
    #[error("need samples from at least 2 iterations, got {0}")]
    TooFewIterations(usize),
    #[error("unknown group key {0:?}; use age_group or gender")]
    UnknownGroupKey(String),
    #[error("all exposures are zero in iteration {0}")]
    ZeroAggregate(usize),
    #[error("ECDF grid must be nonempty and sorted ascending")]
    UnsortedGrid,
    #[error("probe {0} outside (0, 1)")]
    InvalidProbe(f64),
    #[error("credible level {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Type 7 quantile of sorted values.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of nothing");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileSummary {
    pub probe: f64,
    pub posterior_median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
}

/// Median and central interval of per-iteration values.
fn across(probe: f64, values: Vec<f64>, level: f64) -> QuantileSummary {
    let v = sorted(values);
    let tail = (1.0 - level) / 2.0;
    QuantileSummary {
        probe,
        posterior_median: quantile(&v, 0.5),
        ci_low: quantile(&v, tail),
        ci_high: quantile(&v, 1.0 - tail),
        ci_level: level,
    }
}

fn check_level(level: f64) -> Result<(), SummaryError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(SummaryError::InvalidLevel(level))
    }
}

fn check_probes(probes: &[f64]) -> Result<(), SummaryError> {
    match probes.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        Some(&p) => Err(SummaryError::InvalidProbe(p)),
        None => Ok(()),
    }
}

/// Values grouped by iteration, in iteration order.
fn by_iteration<'a>(
    samples: impl Iterator<Item = &'a ExposureSample>,
    value: impl Fn(&ExposureSample) -> f64,
) -> Result<BTreeMap<usize, Vec<f64>>, SummaryError> {
    let mut m: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for s in samples {
        m.entry(s.iteration).or_default().push(value(s));
    }
    if m.len() < 2 {
        return Err(SummaryError::TooFewIterations(m.len()));
    }
    Ok(m)
}

/// One column of the sample file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Quantity {
    Source(Source),
    Aggregated,
}

impl Quantity {
    pub fn of(self, s: &ExposureSample) -> f64 {
        match self {
            Quantity::Source(src) => s.source(src),
            Quantity::Aggregated => s.aggregated,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Source(s) => s.name(),
            Quantity::Aggregated => "aggregated",
        }
    }
}

fn quantiles_of<'a>(
    samples: impl Iterator<Item = &'a ExposureSample>,
    quantity: Quantity,
    probes: &[f64],
    level: f64,
) -> Result<Vec<QuantileSummary>, SummaryError> {
    let groups: Vec<Vec<f64>> = by_iteration(samples, |s| quantity.of(s))?.into_values().map(sorted).collect();
    Ok(probes.iter().map(|&p| across(p, groups.iter().map(|v| quantile(v, p)).collect(), level)).collect())
}

/// Percentiles of aggregated exposure: within-iteration quantile, then the
/// posterior median and interval across iterations.
pub fn population_quantiles(
    samples: &[ExposureSample],
    probes: &[f64],
    level: f64,
) -> Result<Vec<QuantileSummary>, SummaryError> {
    check_probes(probes)?;
    check_level(level)?;
    quantiles_of(samples.iter(), Quantity::Aggregated, probes, level)
}

/// Quantiles of all individuals of all iterations pooled together. Offered
/// for comparison; the interval collapses onto the point value.
pub fn pooled_quantiles(samples: &[ExposureSample], probes: &[f64]) -> Result<Vec<QuantileSummary>, SummaryError> {
    check_probes(probes)?;
    if samples.is_empty() {
        return Err(SummaryError::TooFewIterations(0));
    }
    let v = sorted(samples.iter().map(|s| s.aggregated).collect());
    Ok(probes
        .iter()
        .map(|&p| {
            let q = quantile(&v, p);
            QuantileSummary { probe: p, posterior_median: q, ci_low: q, ci_high: q, ci_level: 0.0 }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupKey {
    AgeGroup,
    Gender,
}

impl GroupKey {
    pub fn parse(s: &str) -> Result<Self, SummaryError> {
        match s.trim() {
            "age_group" | "age" => Ok(GroupKey::AgeGroup),
            "gender" => Ok(GroupKey::Gender),
            other => Err(SummaryError::UnknownGroupKey(other.to_string())),
        }
    }

    fn level(self, k: &StratumKey) -> String {
        match self {
            GroupKey::AgeGroup => k.age_group.label().to_string(),
            GroupKey::Gender => k.gender.code().to_string(),
        }
    }
}

/// One cell of the stratum table. `age_group` and `gender` read "all" when
/// the row does not split on them.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumCell {
    pub age_group: String,
    pub gender: String,
    pub quantity: Quantity,
    pub summary: QuantileSummary,
}

impl StratumCell {
    pub fn is_overall(&self) -> bool {
        self.age_group == "all" && self.gender == "all"
    }
}

/// Percentiles by demographic group (plus the overall population), for each
/// source and the aggregate, or the aggregate only.
pub fn stratum_table(
    table: &SampleTable,
    group_by: &[GroupKey],
    per_source: bool,
    probes: &[f64],
    level: f64,
) -> Result<Vec<StratumCell>, SummaryError> {
    check_probes(probes)?;
    check_level(level)?;
    let mut quantities: Vec<Quantity> = if per_source { Source::ALL.map(Quantity::Source).to_vec() } else { vec![] };
    quantities.push(Quantity::Aggregated);

    let label = |k: &StratumKey| -> (String, String) {
        let pick = |g: GroupKey| if group_by.contains(&g) { g.level(k) } else { "all".to_string() };
        (pick(GroupKey::AgeGroup), pick(GroupKey::Gender))
    };
    // groups in order of the strata's (age, gender) ordering
    let mut rows: Vec<((String, String), Vec<usize>)> = Vec::new();
    if !group_by.is_empty() {
        let mut keyed: Vec<(&StratumKey, usize)> = table.strata.iter().enumerate().map(|(i, k)| (k, i)).collect();
        keyed.sort();
        for (k, i) in keyed {
            let l = label(k);
            match rows.iter_mut().find(|(x, _)| *x == l) {
                Some((_, v)) => v.push(i),
                None => rows.push((l, vec![i])),
            }
        }
    }
    rows.push((("all".to_string(), "all".to_string()), (0..table.strata.len()).collect()));

    let mut out = Vec::new();
    for ((age, gender), members) in rows {
        let mut inside = vec![false; table.strata.len()];
        for m in members {
            inside[m] = true;
        }
        for &q in &quantities {
            let subset = table.samples.iter().filter(|s| inside[s.stratum]);
            for summary in quantiles_of(subset, q, probes, level)? {
                out.push(StratumCell { age_group: age.clone(), gender: gender.clone(), quantity: q, summary });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub source: Source,
    pub share_median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
}

/// Share of each source in the total exposure of each pseudo-population.
pub fn source_contributions(samples: &[ExposureSample], level: f64) -> Result<Vec<Contribution>, SummaryError> {
    check_level(level)?;
    let mut totals: BTreeMap<usize, ([f64; 4], f64)> = BTreeMap::new();
    for s in samples {
        let t = totals.entry(s.iteration).or_insert(([0.0; 4], 0.0));
        for (k, src) in Source::ALL.iter().enumerate() {
            t.0[k] += s.source(*src);
        }
        t.1 += s.aggregated;
    }
    if totals.len() < 2 {
        return Err(SummaryError::TooFewIterations(totals.len()));
    }
    let mut shares: [Vec<f64>; 4] = Default::default();
    for (j, (per, total)) in &totals {
        if !(*total > 0.0) {
            return Err(SummaryError::ZeroAggregate(*j));
        }
        for k in 0..4 {
            shares[k].push(per[k] / total);
        }
    }
    Ok(Source::ALL
        .iter()
        .zip(shares)
        .map(|(&source, v)| {
            let q = across(0.5, v, level);
            Contribution { source, share_median: q.posterior_median, ci_low: q.ci_low, ci_high: q.ci_high, ci_level: level }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcdfPoint {
    pub exposure: f64,
    pub cdf_median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
}

/// Fraction of individuals at or below each grid value, summarised across
/// iterations.
pub fn ecdf_band(samples: &[ExposureSample], grid: &[f64], level: f64) -> Result<Vec<EcdfPoint>, SummaryError> {
    check_level(level)?;
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(SummaryError::UnsortedGrid);
    }
    let groups: Vec<Vec<f64>> = by_iteration(samples.iter(), |s| s.aggregated)?.into_values().map(sorted).collect();
    Ok(grid
        .iter()
        .map(|&x| {
            let f = groups.iter().map(|v| v.partition_point(|&y| y <= x) as f64 / v.len() as f64).collect();
            let q = across(0.5, f, level);
            EcdfPoint { exposure: x, cdf_median: q.posterior_median, ci_low: q.ci_low, ci_high: q.ci_high, ci_level: level }
        })
        .collect())
}

/// `n` points spread logarithmically over the positive aggregated values,
/// or linearly when there are none.
pub fn default_grid(samples: &[ExposureSample], n: usize) -> Vec<f64> {
    let pos: Vec<f64> = samples.iter().map(|s| s.aggregated).filter(|&v| v > 0.0).collect();
    let (lo, hi) = pos.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    if pos.is_empty() || n < 2 {
        return vec![0.0; n.max(1)];
    }
    if lo == hi {
        return (0..n).map(|i| hi * i as f64 / (n - 1) as f64 * 2.0).collect();
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Six significant digits, plain notation for moderate magnitudes.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".to_string() } else { x.to_string() };
    }
    let e = x.abs().log10().floor() as i32;
    if (-4..6).contains(&e) {
        format!("{:.*}", (5 - e).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

pub fn write_quantiles<W: Write>(w: W, rows: &[QuantileSummary]) -> Result<(), SummaryError> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["probe", "posterior_median", "ci_low", "ci_high", "ci_level"])?;
    for r in rows {
        c.write_record([r.probe, r.posterior_median, r.ci_low, r.ci_high, r.ci_level].map(sig6))?;
    }
    c.flush()?;
    Ok(())
}

pub fn write_stratum_table<W: Write>(w: W, rows: &[StratumCell]) -> Result<(), SummaryError> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["age_group", "gender", "source", "probe", "posterior_median", "ci_low", "ci_high", "ci_level"])?;
    for r in rows {
        let s = &r.summary;
        let mut rec = vec![r.age_group.clone(), r.gender.clone(), r.quantity.name().to_string()];
        rec.extend([s.probe, s.posterior_median, s.ci_low, s.ci_high, s.ci_level].map(sig6));
        c.write_record(rec)?;
    }
    c.flush()?;
    Ok(())
}

pub fn write_contributions<W: Write>(w: W, rows: &[Contribution]) -> Result<(), SummaryError> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["source", "share_median", "ci_low", "ci_high", "ci_level"])?;
    for r in rows {
        let mut rec = vec![r.source.name().to_string()];
        rec.extend([r.share_median, r.ci_low, r.ci_high, r.ci_level].map(sig6));
        c.write_record(rec)?;
    }
    c.flush()?;
    Ok(())
}

pub fn write_ecdf<W: Write>(w: W, rows: &[EcdfPoint]) -> Result<(), SummaryError> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["exposure", "cdf_median", "ci_low", "ci_high", "ci_level"])?;
    for r in rows {
        c.write_record([r.exposure, r.cdf_median, r.ci_low, r.ci_high, r.ci_level].map(sig6))?;
    }
    c.flush()?;
    Ok(())
}
