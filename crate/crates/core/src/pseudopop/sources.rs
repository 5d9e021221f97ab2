//! Exposure of one pseudo-individual from each source. Every factor draws
//! from its own stream keyed by (individual, source, factor), so switching a
//! source or the market factor off leaves every other draw unchanged.

use std::collections::BTreeMap;

use super::{RetentionRule, ScenarioConfig, SimulationError};
use crate::data::{Dataset, StratumKey};
use crate::dist::{categorical, sample_pert, standard_normal, uniform01};
use crate::models::ModelConfig;
use crate::pseudopop::params::{FoodStratum, MedicineStratum, SupplementStratum};
use crate::rng::StreamKey;
use crate::transforms::{boxcox_inverse, logit_inverse, BoxCoxLambda, ClampCounter};

const FOOD: u64 = 0;
const SUPPLEMENTS: u64 = 1;
const MEDICINES: u64 = 2;
const PCP: u64 = 3;
const NANO: u64 = 4;
/// Factor slots reserved per category.
const SLOTS: u64 = 16;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub clamps: ClampCounter,
    pub degenerate_pert: u64,
}

/// Observed supplement concentrations and units taken per consuming day.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SupplementPools {
    pub concentrations: Vec<f64>,
    pub counts: BTreeMap<StratumKey, Vec<u32>>,
    /// Every count, used for strata without their own.
    pub all_counts: Vec<u32>,
}

impl SupplementPools {
    pub fn counts_for(&self, key: &StratumKey) -> &[u32] {
        match self.counts.get(key) {
            Some(c) if !c.is_empty() => c,
            _ => &self.all_counts,
        }
    }

    pub fn check(&self) -> Result<(), SimulationError> {
        if self.concentrations.is_empty() {
            return Err(SimulationError::EmptyPool("supplement concentration".into()));
        }
        if self.all_counts.is_empty() {
            return Err(SimulationError::EmptyPool("supplement count".into()));
        }
        Ok(())
    }
}

/// Empirical pools resampled with replacement.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pools {
    pub supplements: SupplementPools,
    /// Personal-care concentrations per category.
    pub pcp: BTreeMap<String, Vec<f64>>,
}

impl Pools {
    pub fn from_dataset(data: &Dataset, model: &ModelConfig) -> Self {
        let tree = &data.tree;
        let mut supplements = SupplementPools {
            concentrations: data
                .concentrations
                .iter()
                .filter(|c| tree.is_within(&c.category, &model.supplements_root))
                .map(|c| c.value)
                .collect(),
            ..Default::default()
        };
        for c in &data.supplement_counts {
            supplements.counts.entry(c.demographics.clone()).or_default().push(c.count);
            supplements.all_counts.push(c.count);
        }
        let mut pcp = BTreeMap::new();
        if tree.contains(&model.pcp_root) {
            for n in tree.children(&model.pcp_root) {
                let pool = data
                    .concentrations
                    .iter()
                    .filter(|c| tree.is_within(&c.category, &n.id))
                    .map(|c| c.value)
                    .collect();
                pcp.insert(n.id.clone(), pool);
            }
        }
        Self { supplements, pcp }
    }

    pub fn pcp(&self, category: &str) -> Result<&[f64], SimulationError> {
        match self.pcp.get(category) {
            Some(p) if !p.is_empty() => Ok(p),
            _ => Err(SimulationError::EmptyPool(format!("{category} concentration"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcpCategory {
    pub id: String,
    pub rule: RetentionRule,
    pub child: bool,
    pub usage_probability: f64,
    /// Median daily amount per body weight.
    pub median_amount: f64,
    pub market_pi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcpStratum {
    pub categories: Vec<PcpCategory>,
}

fn pick<'a, T, R: rand::Rng + ?Sized>(rng: &mut R, pool: &'a [T]) -> &'a T {
    let i = (uniform01(rng) * pool.len() as f64) as usize;
    &pool[i.min(pool.len() - 1)]
}

fn pert01(rng: &mut impl rand::Rng, mode: f64, counters: &mut Counters) -> f64 {
    let (v, degenerate) = sample_pert(rng, 0.0, mode, 1.0);
    counters.degenerate_pert += degenerate as u64;
    v
}

fn market(sc: &ScenarioConfig, pi: f64, key: StreamKey, counters: &mut Counters) -> f64 {
    if sc.market_presence {
        pert01(&mut key.rng(), pi, counters)
    } else {
        1.0
    }
}

/// Retention factor: the rule's constant, or a uniform draw over the child
/// range for children when the rule asks for it.
pub fn retention(rule: &RetentionRule, child: bool, range: [f64; 2], rng: &mut impl rand::Rng) -> f64 {
    if rule.child_uniform && child {
        range[0] + (range[1] - range[0]) * uniform01(rng)
    } else {
        rule.constant
    }
}

/// Food exposure summed over categories.
pub fn food(p: &FoodStratum, sc: &ScenarioConfig, ind: StreamKey, counters: &mut Counters) -> f64 {
    let lambda = BoxCoxLambda::new(p.lambda);
    let n = sc.food_amount_draws;
    let mut total = 0.0;
    for (g, cat) in p.categories.iter().enumerate() {
        let f = g as u64 * SLOTS;
        let mut rng = ind.path(&[FOOD, f]).rng();
        let (z1, z2) = (standard_normal(&mut rng), standard_normal(&mut rng));
        let [sd_freq, sd_amount] = cat.subject_sd;
        let r = cat.subject_corr;
        let nu = sd_amount * z1;
        let upsilon = sd_freq * (r * z1 + (1.0 - r * r).max(0.0).sqrt() * z2);
        let mut rng = ind.path(&[FOOD, f + 1]).rng();
        let mut sum = 0.0;
        for _ in 0..n {
            let v = cat.gamma + nu + p.sigma_amount * standard_normal(&mut rng);
            sum += boxcox_inverse(v, lambda, &mut counters.clamps);
        }
        let amount = sum / n as f64;
        let frequency = logit_inverse(cat.eta + upsilon);
        let presence = market(sc, cat.market_pi, ind.path(&[FOOD, f + 2]), counters);
        total += amount * frequency * cat.concentration_median * presence * sc.unit_scale.food;
    }
    total
}

pub fn supplements(
    p: &SupplementStratum,
    counts: &[u32],
    pools: &SupplementPools,
    sc: &ScenarioConfig,
    ind: StreamKey,
    counters: &mut Counters,
) -> f64 {
    let z = categorical(&mut ind.path(&[SUPPLEMENTS, 0]).rng(), &p.theta) - 1;
    let amount = (p.component_mean[z] + p.component_sd[z] * standard_normal(&mut ind.path(&[SUPPLEMENTS, 1]).rng())).exp();
    let tau = p.sigma_tau * standard_normal(&mut ind.path(&[SUPPLEMENTS, 2]).rng());
    let frequency = logit_inverse(p.alpha + tau);
    let r = *pick(&mut ind.path(&[SUPPLEMENTS, 3]).rng(), counts);
    let concentration = if r == 0 {
        0.0
    } else {
        let mut rng = ind.path(&[SUPPLEMENTS, 4]).rng();
        (0..r).map(|_| *pick(&mut rng, &pools.concentrations)).sum::<f64>() / r as f64
    };
    let presence = market(sc, p.market_pi, ind.path(&[SUPPLEMENTS, 5]), counters);
    amount * frequency * concentration * presence * sc.unit_scale.supplements
}

pub fn medicines(p: &MedicineStratum, sc: &ScenarioConfig, ind: StreamKey, counters: &mut Counters) -> f64 {
    let v = p.phi + p.sigma_amount * standard_normal(&mut ind.path(&[MEDICINES, 0]).rng());
    let amount = boxcox_inverse(v, BoxCoxLambda::new(p.lambda), &mut counters.clamps);
    let frequency = pert01(&mut ind.path(&[MEDICINES, 1]).rng(), p.pi, counters);
    amount * frequency * sc.unit_scale.medicines
}

pub fn pcp(
    p: &PcpStratum,
    pools: &Pools,
    sc: &ScenarioConfig,
    ind: StreamKey,
    counters: &mut Counters,
) -> Result<f64, SimulationError> {
    let mut total = 0.0;
    for (g, cat) in p.categories.iter().enumerate() {
        let f = g as u64 * SLOTS;
        let e = retention(&cat.rule, cat.child, sc.child_retention_range, &mut ind.path(&[PCP, f]).rng());
        let amount = cat.median_amount * e;
        let frequency = pert01(&mut ind.path(&[PCP, f + 1]).rng(), cat.usage_probability, counters);
        let concentration = *pick(&mut ind.path(&[PCP, f + 2]).rng(), pools.pcp(&cat.id)?);
        let presence = market(sc, cat.market_pi, ind.path(&[PCP, f + 3]), counters);
        total += amount * frequency * concentration * presence * sc.unit_scale.pcp;
    }
    Ok(total)
}

/// Nanoparticle mass fraction of one individual.
pub fn nano_fraction(sc: &ScenarioConfig, ind: StreamKey) -> f64 {
    let [lo, hi] = sc.nano_range;
    lo + (hi - lo) * uniform01(&mut ind.path(&[NANO, 0]).rng())
}
