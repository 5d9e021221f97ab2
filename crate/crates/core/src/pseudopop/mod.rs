//! The post-stratified pseudo-population: for each retained posterior
//! iteration and census stratum, simulate individuals from every enabled
//! source and add their long-term exposures.

mod output;
pub mod params;
pub mod sources;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use output::{read_samples, write_samples, SampleTable, SampleWriter, SAMPLE_COLUMNS};
pub use params::{FoodCategory, FoodStratum, MedicineStratum, SupplementStratum};
pub use sources::{retention, Counters, PcpCategory, PcpStratum, Pools, SupplementPools};

use crate::data::{CategoryTree, Dataset, StratumKey, StratumTable};
use crate::models::{ModelConfig, Source};
use crate::rng::StreamKey;
use crate::sampler::DrawSet;
use params::Draw;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("population total is zero")]
    EmptyPopulation,
    #[error("population total {total} is smaller than the {strata} populated strata")]
    TooFewIndividuals { total: u64, strata: usize },
    #[error("no draws for model {0}")]
    MissingModel(String),
    #[error("model {model} lacks {block}")]
    MissingBlock { model: String, block: String },
    #[error("no personal-care constants for {category} in stratum {stratum}")]
    MissingConstants { category: String, stratum: String },
    #[error("no retention rule for {0}")]
    MissingRetention(String),
    #[error("empty {0} pool")]
    EmptyPool(String),
    #[error("sample file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Every source.
    PreBan,
    /// Only medicines and personal care products.
    PostBan,
}

impl Preset {
    pub fn sources(self) -> Vec<Source> {
        match self {
            Preset::PreBan => Source::ALL.to_vec(),
            Preset::PostBan => vec![Source::Medicines, Source::Pcp],
        }
    }
}

/// Fraction of a personal-care product that is swallowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetentionRule {
    pub constant: f64,
    /// Children draw from the child range instead of using the constant.
    #[serde(default)]
    pub child_uniform: bool,
}

/// Power-of-ten factors turning amount x concentration into mg/kg/day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnitScale {
    pub food: f64,
    pub supplements: f64,
    pub medicines: f64,
    pub pcp: f64,
}

impl Default for UnitScale {
    fn default() -> Self {
        Self { food: 1e-3, supplements: 1e-3, medicines: 1e-6, pcp: 1e-6 }
    }
}

impl UnitScale {
    pub fn get(&self, s: Source) -> f64 {
        match s {
            Source::Food => self.food,
            Source::Supplements => self.supplements,
            Source::Medicines => self.medicines,
            Source::Pcp => self.pcp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub preset: Preset,
    /// Overrides the preset's source list.
    pub sources: Option<Vec<Source>>,
    /// When false every product is assumed to contain the chemical.
    pub market_presence: bool,
    /// Multiply the food additive sources by a nanoparticle mass fraction.
    pub nano: bool,
    /// Uniform range of the nanoparticle fraction.
    pub nano_range: [f64; 2],
    pub retention: BTreeMap<String, RetentionRule>,
    pub child_retention_range: [f64; 2],
    /// Age groups whose upper bound is at most this count as children.
    pub child_age_cutoff: u32,
    pub population_total: u64,
    pub unit_scale: UnitScale,
    /// Amount draws averaged per person and food category.
    pub food_amount_draws: usize,
    pub seed: Option<u64>,
    /// Number of pseudo-populations; defaults to one per retained draw.
    pub iterations: Option<usize>,
    /// Dataset directory supplying census, tree, pools and constants.
    pub data: Option<String>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let mut retention = BTreeMap::new();
        retention.insert("lip_balm".to_string(), RetentionRule { constant: 1.0, child_uniform: false });
        retention.insert("toothpaste".to_string(), RetentionRule { constant: 0.05, child_uniform: true });
        Self {
            preset: Preset::PreBan,
            sources: None,
            market_presence: true,
            nano: false,
            nano_range: [0.03, 0.41],
            retention,
            child_retention_range: [0.26, 0.67],
            child_age_cutoff: 12,
            population_total: 100_000,
            unit_scale: UnitScale::default(),
            food_amount_draws: 100,
            seed: None,
            iterations: None,
            data: None,
        }
    }
}

impl ScenarioConfig {
    pub fn post_ban() -> Self {
        Self { preset: Preset::PostBan, ..Self::default() }
    }

    pub fn enabled(&self) -> Vec<Source> {
        let mut s = self.sources.clone().unwrap_or_else(|| self.preset.sources());
        s.sort();
        s.dedup();
        s
    }

    pub fn is_enabled(&self, s: Source) -> bool {
        self.enabled().contains(&s)
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: String| Err(SimulationError::InvalidScenario(m));
        if self.population_total < 1 {
            return bad("population_total must be at least 1".into());
        }
        if self.enabled().is_empty() {
            return bad("no source enabled".into());
        }
        for (c, r) in &self.retention {
            if !(0.0..=1.0).contains(&r.constant) {
                return bad(format!("retention of {c} must lie in [0, 1]"));
            }
        }
        let [lo, hi] = self.child_retention_range;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return bad("child_retention_range must satisfy 0 <= low < high <= 1".into());
        }
        let [lo, hi] = self.nano_range;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return bad("nano_range must satisfy 0 <= low < high <= 1".into());
        }
        let u = self.unit_scale;
        if [u.food, u.supplements, u.medicines, u.pcp].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("unit scales must be positive".into());
        }
        if self.food_amount_draws < 1 {
            return bad("food_amount_draws must be at least 1".into());
        }
        if self.iterations == Some(0) {
            return bad("iterations must be at least 1".into());
        }
        Ok(())
    }
}

/// Splits `total` individuals over strata in proportion to their population
/// by largest remainders, breaking ties towards the lower index. Every
/// populated stratum gets at least one individual; the units it needs come
/// from the stratum furthest above its quota.
pub fn allocate_strata(populations: &[u64], total: u64) -> Result<Vec<u64>, SimulationError> {
    let pop: u128 = populations.iter().map(|&p| p as u128).sum();
    if pop == 0 {
        return Err(SimulationError::EmptyPopulation);
    }
    let nonzero = populations.iter().filter(|&&p| p > 0).count();
    if (total as u128) < nonzero as u128 {
        return Err(SimulationError::TooFewIndividuals { total, strata: nonzero });
    }
    let t = total as u128;
    let mut counts: Vec<u64> = populations.iter().map(|&p| (p as u128 * t / pop) as u64).collect();
    let rem: Vec<u128> = populations.iter().map(|&p| p as u128 * t % pop).collect();
    let left = total - counts.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..populations.len()).collect();
    // stable sort keeps lower indices first among equal remainders
    order.sort_by(|&a, &b| rem[b].cmp(&rem[a]));
    for &i in order.iter().take(left as usize) {
        counts[i] += 1;
    }
    for i in 0..populations.len() {
        if populations[i] > 0 && counts[i] == 0 {
            // excess over the exact quota, compared as count * pop - p * total
            let donor = (0..populations.len())
                .filter(|&k| counts[k] > 1)
                .max_by(|&a, &b| {
                    let ea = counts[a] as i128 * pop as i128 - populations[a] as i128 * t as i128;
                    let eb = counts[b] as i128 * pop as i128 - populations[b] as i128 * t as i128;
                    ea.cmp(&eb).then(b.cmp(&a))
                })
                .expect("total covers every populated stratum");
            counts[donor] -= 1;
            counts[i] = 1;
        }
    }
    Ok(counts)
}

/// Draw sets of the fitted models, looked up by graph name.
#[derive(Debug, Clone, Default)]
pub struct Posterior {
    sets: BTreeMap<String, DrawSet>,
}

impl Posterior {
    pub fn new(sets: Vec<DrawSet>) -> Self {
        Self { sets: sets.into_iter().map(|s| (s.name().to_string(), s)).collect() }
    }

    pub fn get(&self, name: &str) -> Result<&DrawSet, SimulationError> {
        self.sets.get(name).ok_or_else(|| SimulationError::MissingModel(name.to_string()))
    }

    /// Retained draws of the shortest set.
    pub fn len(&self) -> usize {
        self.sets.values().map(|s| s.len()).min().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.sets.keys().map(|s| s.as_str())
    }
}

/// Everything the simulator takes from the data besides the posterior.
#[derive(Debug, Clone)]
pub struct Population {
    pub strata: StratumTable,
    pub tree: CategoryTree,
    pub pools: Pools,
    pub pcp_constants: crate::data::PcpConstants,
    pub model: ModelConfig,
}

impl Population {
    pub fn from_dataset(data: &Dataset, model: &ModelConfig) -> Self {
        Self {
            strata: data.strata.clone(),
            tree: data.tree.clone(),
            pools: Pools::from_dataset(data, model),
            pcp_constants: data.pcp_constants.clone(),
            model: model.clone(),
        }
    }
}

/// Long-term exposure (mg/kg/day) of one pseudo-individual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureSample {
    pub iteration: usize,
    /// Index into the stratum table.
    pub stratum: usize,
    pub food: f64,
    pub supplements: f64,
    pub medicines: f64,
    pub pcp: f64,
    pub aggregated: f64,
}

impl ExposureSample {
    pub fn source(&self, s: Source) -> f64 {
        match s {
            Source::Food => self.food,
            Source::Supplements => self.supplements,
            Source::Medicines => self.medicines,
            Source::Pcp => self.pcp,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub iterations: usize,
    pub samples: u64,
    pub clamp_events: u64,
    pub degenerate_pert: u64,
    pub allocation: Vec<u64>,
}

/// Stream tags under the master seed.
const INDIVIDUAL_TAG: u64 = 0;
const UNSEEN_TAG: u64 = 1;

/// Index of the posterior draw used by pseudo-population `k` of `n`.
pub fn draw_index(k: usize, n: usize, len: usize) -> usize {
    k * len / n
}

/// Simulates every pseudo-population and hands the samples to `sink` in
/// (iteration, stratum, individual) order. Iterations run in parallel in
/// batches; the output does not depend on the thread count.
pub fn simulate_population(
    posterior: &Posterior,
    population: &Population,
    scenario: &ScenarioConfig,
    seed: u64,
    mut sink: impl FnMut(&ExposureSample) -> Result<(), SimulationError>,
) -> Result<SimulationReport, SimulationError> {
    scenario.validate()?;
    let pops: Vec<u64> = population.strata.iter().map(|s| s.population_count).collect();
    let allocation = allocate_strata(&pops, scenario.population_total)?;
    let len = posterior.len();
    if len == 0 {
        return Err(SimulationError::MissingModel("any retained draws".into()));
    }
    let n_iter = scenario.iterations.unwrap_or(len);
    let plan = Plan::new(posterior, population, scenario)?;
    let mut report = SimulationReport { iterations: n_iter, allocation: allocation.clone(), ..Default::default() };
    let batch = rayon::current_num_threads().max(1);
    for start in (0..n_iter).step_by(batch) {
        let end = (start + batch).min(n_iter);
        let chunks: Vec<(Vec<ExposureSample>, Counters)> = (start..end)
            .into_par_iter()
            .map(|k| plan.iteration(k, draw_index(k, n_iter, len), &allocation, seed))
            .collect::<Result<_, _>>()?;
        for (samples, c) in chunks {
            report.clamp_events += c.clamps.0;
            report.degenerate_pert += c.degenerate_pert;
            report.samples += samples.len() as u64;
            for s in &samples {
                sink(s)?;
            }
        }
    }
    Ok(report)
}

/// Convenience wrapper collecting every sample in memory.
pub fn simulate_to_vec(
    posterior: &Posterior,
    population: &Population,
    scenario: &ScenarioConfig,
    seed: u64,
) -> Result<(Vec<ExposureSample>, SimulationReport), SimulationError> {
    let mut out = Vec::new();
    let report = simulate_population(posterior, population, scenario, seed, |s| {
        out.push(*s);
        Ok(())
    })?;
    Ok((out, report))
}

/// Resolved inputs shared by every iteration.
struct Plan<'a> {
    posterior: &'a Posterior,
    population: &'a Population,
    scenario: &'a ScenarioConfig,
    enabled: Vec<Source>,
    pcp_categories: Vec<String>,
}

impl<'a> Plan<'a> {
    fn new(posterior: &'a Posterior, population: &'a Population, scenario: &'a ScenarioConfig) -> Result<Self, SimulationError> {
        let enabled = scenario.enabled();
        let market = scenario.market_presence;
        let mut needed = Vec::new();
        for s in &enabled {
            match s {
                Source::Food => {
                    needed.extend(["food", crate::models::concentration::NAME]);
                    if market {
                        needed.push("market_food");
                    }
                }
                Source::Supplements => {
                    needed.push("supplements");
                    if market {
                        needed.push("market_supplements");
                    }
                }
                Source::Medicines => needed.push("medicines"),
                Source::Pcp if market => needed.push("market_pcp"),
                Source::Pcp => {}
            }
        }
        for n in needed {
            posterior.get(n)?;
        }
        let pcp_categories: Vec<String> =
            population.tree.children(&population.model.pcp_root).map(|n| n.id.clone()).collect();
        if enabled.contains(&Source::Pcp) {
            if pcp_categories.is_empty() {
                return Err(SimulationError::EmptyPool(format!("{} category", population.model.pcp_root)));
            }
            for c in &pcp_categories {
                if !scenario.retention.contains_key(c) {
                    return Err(SimulationError::MissingRetention(c.clone()));
                }
                population.pools.pcp(c)?;
            }
        }
        if enabled.contains(&Source::Supplements) {
            population.pools.supplements.check()?;
        }
        Ok(Self { posterior, population, scenario, enabled, pcp_categories })
    }

    fn draw(&self, name: &str, j: usize, unseen: StreamKey) -> Result<Draw<'a>, SimulationError> {
        let set = self.posterior.get(name)?;
        // sets may hold different numbers of draws; map proportionally
        let jj = draw_index(j, self.posterior.len(), set.len());
        Ok(Draw { set, j: jj, unseen })
    }

    fn on(&self, s: Source) -> bool {
        self.enabled.contains(&s)
    }

    /// One pseudo-population: pseudo-population index `k` using draw `j`.
    fn iteration(
        &self,
        k: usize,
        j: usize,
        allocation: &[u64],
        seed: u64,
    ) -> Result<(Vec<ExposureSample>, Counters), SimulationError> {
        let root = StreamKey::new(seed);
        let unseen = root.path(&[UNSEEN_TAG, k as u64]);
        let sc = self.scenario;
        let market = sc.market_presence;
        let mut counters = Counters::default();
        let mut out = Vec::with_capacity(sc.population_total as usize);
        for (d, stratum) in self.population.strata.iter().enumerate() {
            let key = &stratum.key;
            let food = if self.on(Source::Food) {
                let m = self.draw("food", j, unseen)?;
                let c = self.draw(crate::models::concentration::NAME, j, unseen)?;
                let mk = if market { Some(self.draw("market_food", j, unseen)?) } else { None };
                Some(params::food(&m, &c, mk.as_ref(), &self.population.tree, key)?)
            } else {
                None
            };
            let supp = if self.on(Source::Supplements) {
                let m = self.draw("supplements", j, unseen)?;
                let mk = if market { Some(self.draw("market_supplements", j, unseen)?) } else { None };
                Some(params::supplements(&m, mk.as_ref(), key)?)
            } else {
                None
            };
            let med = if self.on(Source::Medicines) {
                Some(params::medicines(&self.draw("medicines", j, unseen)?, key)?)
            } else {
                None
            };
            let pcp = if self.on(Source::Pcp) {
                let mk = if market { Some(self.draw("market_pcp", j, unseen)?) } else { None };
                Some(self.pcp_stratum(mk.as_ref(), key)?)
            } else {
                None
            };
            let counts = self.population.pools.supplements.counts_for(key);
            for i in 0..allocation[d] {
                let ind = root.path(&[INDIVIDUAL_TAG, k as u64, d as u64, i]);
                let mut s = ExposureSample { iteration: k, stratum: d, food: 0.0, supplements: 0.0, medicines: 0.0, pcp: 0.0, aggregated: 0.0 };
                if let Some(f) = &food {
                    s.food = sources::food(f, sc, ind, &mut counters);
                }
                if let Some(p) = &supp {
                    s.supplements = sources::supplements(p, counts, &self.population.pools.supplements, sc, ind, &mut counters);
                }
                if let Some(p) = &med {
                    s.medicines = sources::medicines(p, sc, ind, &mut counters);
                }
                if let Some(p) = &pcp {
                    s.pcp = sources::pcp(p, &self.population.pools, sc, ind, &mut counters)?;
                }
                if sc.nano {
                    let f = sources::nano_fraction(sc, ind);
                    s.food *= f;
                    s.supplements *= f;
                    s.medicines *= f;
                }
                s.aggregated = s.food + s.supplements + s.medicines + s.pcp;
                out.push(s);
            }
        }
        Ok((out, counters))
    }

    fn pcp_stratum(&self, market: Option<&Draw>, key: &StratumKey) -> Result<PcpStratum, SimulationError> {
        let sc = self.scenario;
        let child = key.age_group.at_most(sc.child_age_cutoff);
        let mut categories = Vec::new();
        for c in &self.pcp_categories {
            let k = self.population.pcp_constants.lookup(c, &key.age_group, key.gender).ok_or_else(|| {
                SimulationError::MissingConstants { category: c.clone(), stratum: key.to_string() }
            })?;
            let market_pi = match market {
                Some(m) => params::market_probability(m, "xi", c)?,
                None => 1.0,
            };
            categories.push(PcpCategory {
                id: c.clone(),
                rule: sc.retention[c],
                child,
                usage_probability: k.usage_probability,
                median_amount: k.median_daily_amount_per_bw,
                market_pi,
            });
        }
        Ok(PcpStratum { categories })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Seat-by-seat reference: floors, then one extra seat at a time to the
    /// largest remaining fraction, then the minimum-one repair.
    fn reference(pops: &[u64], total: u64) -> Vec<u64> {
        let pop: u128 = pops.iter().map(|&p| p as u128).sum();
        let t = total as u128;
        let mut seats: Vec<u64> = pops.iter().map(|&p| (p as u128 * t / pop) as u64).collect();
        let frac: Vec<u128> = pops.iter().zip(&seats).map(|(&p, &s)| p as u128 * t - s as u128 * pop).collect();
        let mut given = vec![false; pops.len()];
        while seats.iter().sum::<u64>() < total {
            let i = (0..pops.len()).filter(|&i| !given[i]).fold(None, |best: Option<usize>, i| match best {
                Some(b) if frac[b] >= frac[i] => Some(b),
                _ => Some(i),
            });
            let i = i.unwrap();
            given[i] = true;
            seats[i] += 1;
        }
        for i in 0..pops.len() {
            if pops[i] > 0 && seats[i] == 0 {
                let mut donor = None;
                for k in 0..pops.len() {
                    if seats[k] < 2 {
                        continue;
                    }
                    let e = seats[k] as i128 * pop as i128 - pops[k] as i128 * t as i128;
                    match donor {
                        Some((_, best)) if best >= e => {}
                        _ => donor = Some((k, e)),
                    }
                }
                let (k, _) = donor.unwrap();
                seats[k] -= 1;
                seats[i] = 1;
            }
        }
        seats
    }

    #[test]
    fn allocation_examples() {
        assert_eq!(allocate_strata(&[50, 30, 20], 10).unwrap(), vec![5, 3, 2]);
        assert_eq!(allocate_strata(&[1, 1, 1], 10).unwrap(), vec![4, 3, 3]);
        assert_eq!(allocate_strata(&[999, 1], 100).unwrap(), vec![99, 1]);
        assert_eq!(allocate_strata(&[0, 7, 0], 5).unwrap(), vec![0, 5, 0]);
    }

    #[test]
    fn allocation_errors() {
        assert!(matches!(allocate_strata(&[0, 0], 10), Err(SimulationError::EmptyPopulation)));
        assert!(matches!(
            allocate_strata(&[1, 1, 1], 2),
            Err(SimulationError::TooFewIndividuals { total: 2, strata: 3 })
        ));
    }

    #[test]
    fn allocation_at_census_scale() {
        let pops = [1_234_567u64, 8_765_432, 55, 1];
        let n = allocate_strata(&pops, 100_000).unwrap();
        assert_eq!(n.iter().sum::<u64>(), 100_000);
        assert_eq!(n, reference(&pops, 100_000));
    }

    proptest! {
        #[test]
        fn allocation_matches_reference(
            pops in prop::collection::vec(prop_oneof![Just(0u64), 1u64..50, 1u64..1_000_000], 1..40),
            extra in 0u64..5000,
        ) {
            let nonzero = pops.iter().filter(|&&p| p > 0).count() as u64;
            prop_assume!(nonzero > 0);
            let total = nonzero + extra;
            let n = allocate_strata(&pops, total).unwrap();
            prop_assert_eq!(n.iter().sum::<u64>(), total);
            for (c, p) in n.iter().zip(&pops) {
                prop_assert_eq!(*c == 0, *p == 0);
            }
            prop_assert_eq!(n, reference(&pops, total));
        }

        #[test]
        fn allocation_stays_within_one_of_quota_without_repairs(
            pops in prop::collection::vec(1u64..1000, 1..20),
            total in 1000u64..100_000,
        ) {
            let pop: u64 = pops.iter().sum();
            let n = allocate_strata(&pops, total).unwrap();
            for (c, p) in n.iter().zip(&pops) {
                let quota = *p as f64 * total as f64 / pop as f64;
                if quota >= 1.0 {
                    prop_assert!((*c as f64 - quota).abs() < 1.0);
                }
            }
        }
    }

    #[test]
    fn draw_index_spreads_iterations() {
        assert_eq!((0..4).map(|k| draw_index(k, 4, 4000)).collect::<Vec<_>>(), vec![0, 1000, 2000, 3000]);
        assert_eq!((0..3).map(|k| draw_index(k, 3, 1)).collect::<Vec<_>>(), vec![0, 0, 0]);
    }

    #[test]
    fn presets() {
        assert_eq!(ScenarioConfig::default().enabled(), vec![Source::Food, Source::Supplements, Source::Medicines, Source::Pcp]);
        assert_eq!(ScenarioConfig::post_ban().enabled(), vec![Source::Medicines, Source::Pcp]);
        let s = ScenarioConfig { sources: Some(vec![Source::Pcp, Source::Food, Source::Pcp]), ..ScenarioConfig::post_ban() };
        assert_eq!(s.enabled(), vec![Source::Food, Source::Pcp]);
    }

    #[test]
    fn scenario_from_text() {
        let s: ScenarioConfig = serde_json::from_str(r#"{"preset": "post_ban", "population_total": 500, "nano": true}"#).unwrap();
        assert_eq!(s.preset, Preset::PostBan);
        assert_eq!(s.population_total, 500);
        assert_eq!(s.retention["toothpaste"].constant, 0.05);
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"populaton_total": 5}"#).is_err());
    }

    #[test]
    fn invalid_scenarios() {
        let bad = [
            ScenarioConfig { population_total: 0, ..Default::default() },
            ScenarioConfig { sources: Some(vec![]), ..Default::default() },
            ScenarioConfig { child_retention_range: [0.7, 0.2], ..Default::default() },
            ScenarioConfig { child_retention_range: [0.2, 1.2], ..Default::default() },
            ScenarioConfig { nano_range: [0.5, 0.5], ..Default::default() },
            ScenarioConfig { food_amount_draws: 0, ..Default::default() },
            ScenarioConfig { iterations: Some(0), ..Default::default() },
        ];
        for s in bad {
            assert!(matches!(s.validate(), Err(SimulationError::InvalidScenario(_))), "{s:?}");
        }
        let mut s = ScenarioConfig::default();
        s.retention.get_mut("lip_balm").unwrap().constant = 1.5;
        assert!(s.validate().is_err());
        assert!(ScenarioConfig::default().validate().is_ok());
    }
}
