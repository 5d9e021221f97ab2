//! Synthetic datasets drawn from the model family, with the realised true
//! parameters recorded for recovery checks and for the reference simulator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    AgeGroup, CategoryMap, CategoryNode, CategoryTree, ConcentrationObservation, Dataset, Gender,
    MedicineUseObservation, PcpConstant, PcpConstants, ProductObservation, Stratum, StratumKey, StratumTable,
    SupplementCount, SurveyObservation,
};
use crate::dist::{categorical, standard_gamma, standard_normal, uniform01};
use crate::rng::{StreamKey, StreamRng};
use crate::special::gamma_median;
use crate::transforms::{boxcox_inverse, logit_inverse, BoxCoxLambda, ClampCounter};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub n_individuals: usize,
    pub n_medicine_individuals: usize,
    pub missing_weight_rate: f64,
    pub age_groups: Vec<String>,
    pub regions: Vec<String>,
    /// Census counts are drawn uniformly from this range.
    pub population_range: [u64; 2],
    /// True standard deviation of every predictor-level effect.
    pub effect_scale: f64,
    pub weight: WeightTruth,
    pub food: FoodTruth,
    pub supplements: SupplementsTruth,
    pub medicines: MedicinesTruth,
    pub pcp: PcpTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightTruth {
    pub intercept: f64,
    /// Shift of ln weight per age group (same order as `age_groups`).
    pub age_shift: Vec<f64>,
    /// Shift of ln weight for F and M.
    pub gender_shift: [f64; 2],
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoodTruth {
    pub eta0: Vec<f64>,
    pub gamma0: Vec<f64>,
    pub lambda: f64,
    pub sigma_amount: f64,
    /// Standard deviations of the frequency and amount subject effects.
    pub subject_sd: [f64; 2],
    pub subject_corr: f64,
    pub market_pi: Vec<f64>,
    /// Median concentration (mg/kg) of each category.
    pub concentration_median: Vec<f64>,
    pub concentration_shape: f64,
    /// Spread of leaf log-medians around their category.
    pub leaf_sd: f64,
    pub leaves_per_category: usize,
    pub concentrations_per_leaf: usize,
    /// Fraction of concentrations reported with a standard error.
    pub std_error_fraction: f64,
    pub products_per_category: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupplementsTruth {
    pub alpha0: f64,
    pub sigma_tau: f64,
    pub rho0: Vec<f64>,
    pub sigma_amount: Vec<f64>,
    pub theta: Vec<f64>,
    pub market_pi: f64,
    pub n_products: usize,
    pub concentration_median: f64,
    pub concentration_log_sd: f64,
    pub n_concentrations: usize,
    pub max_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MedicinesTruth {
    pub psi0: f64,
    pub phi0: f64,
    pub lambda: f64,
    pub sigma_amount: f64,
    /// Mean unit mass used to turn a drawn amount into a unit count.
    pub mean_unit_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcpTruth {
    pub categories: Vec<String>,
    pub usage_probability: Vec<f64>,
    /// Median daily amount per body weight (g/kg/day) for adults.
    pub median_amount: Vec<f64>,
    /// Multiplier on the median amount for children.
    pub child_amount_factor: f64,
    pub market_pi: Vec<f64>,
    pub products_per_category: usize,
    pub concentration_median: Vec<f64>,
    pub concentration_log_sd: f64,
    pub concentrations_per_category: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_individuals: 400,
            n_medicine_individuals: 400,
            missing_weight_rate: 0.10,
            age_groups: ["3-9", "10-17", "18-64", "65+"].map(String::from).to_vec(),
            regions: ["BRU", "VLA", "WAL"].map(String::from).to_vec(),
            population_range: [2_000, 20_000],
            effect_scale: 0.3,
            weight: WeightTruth::default(),
            food: FoodTruth::default(),
            supplements: SupplementsTruth::default(),
            medicines: MedicinesTruth::default(),
            pcp: PcpTruth::default(),
        }
    }
}

impl Default for WeightTruth {
    fn default() -> Self {
        Self { intercept: 4.1, age_shift: vec![-1.0, -0.35, 0.15, 0.1], gender_shift: [-0.05, 0.05], sigma: 0.15 }
    }
}

impl Default for FoodTruth {
    fn default() -> Self {
        Self {
            eta0: vec![-0.8, -0.2, 0.5],
            gamma0: vec![-1.2, -0.7, -0.3],
            lambda: 0.3,
            sigma_amount: 0.35,
            subject_sd: [0.6, 0.3],
            subject_corr: 0.4,
            market_pi: vec![0.2, 0.5, 0.8],
            concentration_median: vec![50.0, 120.0, 300.0],
            concentration_shape: 3.0,
            leaf_sd: 0.3,
            leaves_per_category: 2,
            concentrations_per_leaf: 8,
            std_error_fraction: 0.2,
            products_per_category: 60,
        }
    }
}

impl Default for SupplementsTruth {
    fn default() -> Self {
        Self {
            alpha0: -1.0,
            sigma_tau: 0.5,
            // 1, 4 and 16 g a day for a 70 kg adult
            rho0: [1.0f64, 4.0, 16.0].iter().map(|g| (g / 70.0).ln()).collect(),
            sigma_amount: vec![0.3, 0.3, 0.3],
            theta: vec![0.5, 0.3, 0.2],
            market_pi: 0.21,
            n_products: 100,
            concentration_median: 2000.0,
            concentration_log_sd: 0.5,
            n_concentrations: 30,
            max_count: 3,
        }
    }
}

impl Default for MedicinesTruth {
    fn default() -> Self {
        Self { psi0: -1.5, phi0: -2.3, lambda: 0.2, sigma_amount: 0.3, mean_unit_mass: 1.7 }
    }
}

impl Default for PcpTruth {
    fn default() -> Self {
        Self {
            categories: vec!["lip_balm".into(), "toothpaste".into()],
            usage_probability: vec![0.3, 0.9],
            median_amount: vec![0.0008, 0.02],
            child_amount_factor: 1.5,
            market_pi: vec![0.4, 0.15],
            products_per_category: 80,
            concentration_median: vec![20_000.0, 5_000.0],
            concentration_log_sd: 0.4,
            concentrations_per_category: 20,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        let g = self.food.eta0.len();
        if g == 0 {
            return bad("food needs at least one category".into());
        }
        for (name, len) in [
            ("food.gamma0", self.food.gamma0.len()),
            ("food.market_pi", self.food.market_pi.len()),
            ("food.concentration_median", self.food.concentration_median.len()),
        ] {
            if len != g {
                return bad(format!("{name} has {len} entries, expected {g}"));
            }
        }
        let c = self.supplements.rho0.len();
        if c == 0 || self.supplements.sigma_amount.len() != c || self.supplements.theta.len() != c {
            return bad("supplements rho0, sigma_amount and theta must have equal nonzero length".into());
        }
        if (self.supplements.theta.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("supplements.theta must sum to 1".into());
        }
        if self.supplements.rho0.windows(2).any(|w| w[0] >= w[1]) {
            return bad("supplements.rho0 must be increasing".into());
        }
        let p = self.pcp.categories.len();
        for (name, len) in [
            ("pcp.usage_probability", self.pcp.usage_probability.len()),
            ("pcp.median_amount", self.pcp.median_amount.len()),
            ("pcp.market_pi", self.pcp.market_pi.len()),
            ("pcp.concentration_median", self.pcp.concentration_median.len()),
        ] {
            if len != p {
                return bad(format!("{name} has {len} entries, expected {p}"));
            }
        }
        if self.weight.age_shift.len() != self.age_groups.len() {
            return bad("weight.age_shift must have one entry per age group".into());
        }
        for a in &self.age_groups {
            AgeGroup::parse(a).map_err(SynthError::Invalid)?;
        }
        if self.regions.is_empty() || self.age_groups.is_empty() {
            return bad("need at least one age group and region".into());
        }
        if !(0.0..1.0).contains(&self.missing_weight_rate) {
            return bad("missing_weight_rate must lie in [0, 1)".into());
        }
        if self.n_individuals == 0 || self.n_medicine_individuals == 0 {
            return bad("sample sizes must be positive".into());
        }
        if self.population_range[0] > self.population_range[1] {
            return bad("population_range must be increasing".into());
        }
        if !(self.food.subject_corr.abs() < 1.0) {
            return bad("food.subject_corr must lie in (-1, 1)".into());
        }
        Ok(())
    }
}

/// Realised true values: everything needed to regenerate exposures without
/// the fitted models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub config: GeneratorConfig,
    pub seed: u64,
    pub age_groups: Vec<String>,
    pub genders: Vec<String>,
    pub regions: Vec<String>,
    pub strata: Vec<TruthStratum>,
    pub food: FoodParams,
    pub supplements: SupplementParams,
    pub medicines: MedicineParams,
    pub pcp: PcpParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthStratum {
    pub age_group: String,
    pub gender: String,
    pub region: String,
    pub count: u64,
}

/// Level effects keyed by predictor name, then one value per level in the
/// order of the truth's level lists.
pub type Effects = BTreeMap<String, Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoodParams {
    pub categories: Vec<String>,
    pub eta0: Vec<f64>,
    pub eta_effects: Vec<Effects>,
    pub gamma0: Vec<f64>,
    pub gamma_effects: Vec<Effects>,
    pub effect_scale: f64,
    pub lambda: f64,
    pub sigma_amount: f64,
    pub subject_sd: [f64; 2],
    pub subject_corr: f64,
    pub market_pi: Vec<f64>,
    /// Category median concentration (mg/kg).
    pub concentration_median: Vec<f64>,
    pub concentration_log_median_root: f64,
    /// Log-median offsets of every node below the root.
    pub concentration_offsets: BTreeMap<String, f64>,
    pub concentration_shape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplementParams {
    pub alpha0: f64,
    pub alpha_effects: Effects,
    pub sigma_tau: f64,
    pub rho0: Vec<f64>,
    pub rho_effects: Effects,
    pub sigma_amount: Vec<f64>,
    pub theta: Vec<f64>,
    pub market_pi: f64,
    pub concentrations: Vec<f64>,
    /// Observed person-day counts keyed by `age|gender|region`.
    pub counts: BTreeMap<String, Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedicineParams {
    pub psi0: f64,
    pub psi_effects: Effects,
    pub phi0: f64,
    pub phi_effects: Effects,
    pub lambda: f64,
    pub sigma_amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcpParams {
    pub categories: Vec<String>,
    pub market_pi: Vec<f64>,
    pub concentrations: Vec<Vec<f64>>,
    pub constants: Vec<PcpConstantTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcpConstantTruth {
    pub category: String,
    pub age_group: String,
    pub gender: String,
    pub usage_probability: f64,
    pub median_amount: f64,
}

pub fn stratum_label(age: &str, gender: &str, region: &str) -> String {
    format!("{age}|{gender}|{region}")
}

const PREDICTORS: [&str; 3] = ["age_group", "gender", "region"];

struct Gen {
    rng: StreamRng,
}

impl Gen {
    fn n(&mut self) -> f64 {
        standard_normal(&mut self.rng)
    }
    fn u(&mut self) -> f64 {
        uniform01(&mut self.rng)
    }
    fn bern(&mut self, p: f64) -> bool {
        self.u() < p
    }
    fn below(&mut self, n: usize) -> usize {
        ((self.u() * n as f64) as usize).min(n - 1)
    }
    fn effects(&mut self, sizes: [usize; 3], scale: f64) -> Effects {
        PREDICTORS
            .iter()
            .zip(sizes)
            .map(|(p, n)| (p.to_string(), (0..n).map(|_| scale * self.n()).collect()))
            .collect()
    }
}

fn effect(e: &Effects, lv: [usize; 3]) -> f64 {
    PREDICTORS.iter().zip(lv).map(|(p, l)| e[*p][l]).sum()
}

fn round_sig(x: f64) -> f64 {
    // keep CSV round trips exact and files readable
    format!("{x:.10e}").parse().unwrap()
}

/// Draws a dataset and the realised truth. The same seed always gives the
/// same output.
pub fn generate(config: &GeneratorConfig, seed: u64) -> Result<(Dataset, Truth), SynthError> {
    config.validate()?;
    let root = StreamKey::new(seed);
    let mut g = Gen { rng: root.child(0).rng() };
    let genders = vec!["F".to_string(), "M".to_string()];
    let sizes = [config.age_groups.len(), 2, config.regions.len()];
    let n_cat = config.food.eta0.len();

    // category tree
    let mut nodes = vec![node("food", None, 1)];
    let categories: Vec<String> = (1..=n_cat).map(|i| format!("food_{i}")).collect();
    let mut leaves = Vec::new();
    for c in &categories {
        nodes.push(node(c, Some("food"), 2));
        let mine: Vec<String> = (0..config.food.leaves_per_category.max(1))
            .map(|j| format!("{c}_{}", (b'a' + j as u8) as char))
            .collect();
        for l in &mine {
            nodes.push(node(l, Some(c), 3));
        }
        leaves.push(mine);
    }
    nodes.push(node("supplements", None, 1));
    nodes.push(node("pcp", None, 1));
    for c in &config.pcp.categories {
        nodes.push(node(c, Some("pcp"), 2));
    }
    let tree = CategoryTree::new(nodes).map_err(|e| SynthError::Invalid(e.to_string()))?;
    let mut category_map = CategoryMap::default();
    for c in &categories {
        category_map.insert("survey", &c.to_uppercase(), c);
    }

    // strata
    let mut strata = Vec::new();
    let mut truth_strata = Vec::new();
    let [lo, hi] = config.population_range;
    for a in &config.age_groups {
        for s in &genders {
            for r in &config.regions {
                let count = lo + (g.u() * (hi - lo + 1) as f64) as u64;
                let count = count.min(hi);
                strata.push(Stratum { key: StratumKey::parse(a, s, r).unwrap(), population_count: count });
                truth_strata.push(TruthStratum {
                    age_group: a.clone(),
                    gender: s.clone(),
                    region: r.clone(),
                    count,
                });
            }
        }
    }
    let strata = StratumTable::new(strata).map_err(|e| SynthError::Invalid(e.to_string()))?;

    // true effects
    let scale = config.effect_scale;
    let eta_effects: Vec<Effects> = (0..n_cat).map(|_| g.effects(sizes, scale)).collect();
    let gamma_effects: Vec<Effects> = (0..n_cat).map(|_| g.effects(sizes, scale)).collect();
    let alpha_effects = g.effects(sizes, scale);
    let rho_effects = g.effects(sizes, scale);
    let psi_effects = g.effects(sizes, scale);
    let phi_effects = g.effects(sizes, scale);

    let ft = &config.food;
    let st = &config.supplements;
    let lam_f = BoxCoxLambda::new(ft.lambda);
    let mut clamps = ClampCounter::default();
    let (sd_u, sd_n, rho) = (ft.subject_sd[0], ft.subject_sd[1], ft.subject_corr);

    // survey
    let mut g = Gen { rng: root.child(1).rng() };
    let mut survey = Vec::new();
    let mut supplement_counts = Vec::new();
    let mut counts_by_stratum: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    for i in 0..config.n_individuals {
        let lv = [g.below(sizes[0]), g.below(2), g.below(sizes[2])];
        let key = StratumKey::parse(&config.age_groups[lv[0]], &genders[lv[1]], &config.regions[lv[2]]).unwrap();
        let wt = &config.weight;
        let ln_w = wt.intercept + wt.age_shift[lv[0]] + wt.gender_shift[lv[1]] + wt.sigma * g.n();
        let w = round_sig(ln_w.exp());
        let reported = if g.bern(config.missing_weight_rate) { None } else { Some(w) };
        let id = format!("P{:05}", i + 1);
        let subject: Vec<(f64, f64)> = (0..n_cat)
            .map(|_| {
                let (z1, z2) = (g.n(), g.n());
                (sd_u * z1, sd_n * (rho * z1 + (1.0 - rho * rho).sqrt() * z2))
            })
            .collect();
        let tau = st.sigma_tau * g.n();
        let z = categorical(&mut g.rng, &st.theta) - 1;
        let supp_mu = st.rho0[z] + effect(&rho_effects, lv);
        let supp_mean = w * (supp_mu + st.sigma_amount[z] * g.n()).exp();
        let p_supp = logit_inverse(st.alpha0 + effect(&alpha_effects, lv) + tau);
        let supp_days: Vec<bool> = (0..2).map(|_| g.bern(p_supp)).collect();
        let n_supp = supp_days.iter().filter(|&&d| d).count();
        let jitter = 0.3 * (2.0 * g.u() - 1.0);
        for day in 1..=2u8 {
            for (ci, c) in categories.iter().enumerate() {
                let (ups, nu) = subject[ci];
                let p = logit_inverse(ft.eta0[ci] + effect(&eta_effects[ci], lv) + ups);
                let consumed = g.bern(p);
                let amount = consumed.then(|| loop {
                    let f = ft.gamma0[ci] + effect(&gamma_effects[ci], lv) + nu + ft.sigma_amount * g.n();
                    let y = boxcox_inverse(f, lam_f, &mut clamps);
                    if y > 0.0 {
                        break round_sig(y * w);
                    }
                });
                survey.push(SurveyObservation {
                    individual_id: id.clone(),
                    day,
                    category: c.clone(),
                    consumed,
                    amount,
                    body_weight: reported,
                    demographics: key.clone(),
                });
            }
            let consumed = supp_days[day as usize - 1];
            let amount = consumed.then(|| {
                let a = if n_supp == 2 {
                    supp_mean * if day == 1 { 1.0 + jitter } else { 1.0 - jitter }
                } else {
                    supp_mean
                };
                round_sig(a)
            });
            if consumed {
                let count = 1 + g.below(st.max_count.max(1) as usize) as u32;
                supplement_counts.push(SupplementCount { demographics: key.clone(), count });
                counts_by_stratum
                    .entry(stratum_label(key.age_group.label(), key.gender.code(), &key.region))
                    .or_default()
                    .push(count);
            }
            survey.push(SurveyObservation {
                individual_id: id.clone(),
                day,
                category: "supplements".into(),
                consumed,
                amount,
                body_weight: reported,
                demographics: key.clone(),
            });
        }
    }

    // medicines
    let mt = &config.medicines;
    let lam_m = BoxCoxLambda::new(mt.lambda);
    let mut g = Gen { rng: root.child(2).rng() };
    let mut medicines = Vec::new();
    let mut clamps = ClampCounter::default();
    for i in 0..config.n_medicine_individuals {
        let lv = [g.below(sizes[0]), g.below(2), g.below(sizes[2])];
        let key = StratumKey::parse(&config.age_groups[lv[0]], &genders[lv[1]], &config.regions[lv[2]]).unwrap();
        let wt = &config.weight;
        let w = round_sig((wt.intercept + wt.age_shift[lv[0]] + wt.gender_shift[lv[1]] + wt.sigma * g.n()).exp());
        let reported = if g.bern(config.missing_weight_rate) { None } else { Some(w) };
        let user = g.bern(logit_inverse(mt.psi0 + effect(&psi_effects, lv)));
        let units = if user {
            let f = mt.phi0 + effect(&phi_effects, lv) + mt.sigma_amount * g.n();
            let per_bw = boxcox_inverse(f, lam_m, &mut clamps);
            ((per_bw * w / mt.mean_unit_mass).round() as u32).max(1)
        } else {
            0
        };
        medicines.push(MedicineUseObservation {
            individual_id: format!("H{:05}", i + 1),
            regular_user: user,
            units_per_day: units,
            body_weight: reported,
            demographics: key,
        });
    }

    // concentrations and products
    let mut g = Gen { rng: root.child(3).rng() };
    let mut concentrations = Vec::new();
    let mut products = Vec::new();
    let shape = ft.concentration_shape;
    let q = gamma_median(shape);
    let log_root = ft.concentration_median.iter().map(|m| m.ln()).sum::<f64>() / n_cat as f64;
    let mut offsets = BTreeMap::new();
    let mut pid = 0;
    for (ci, c) in categories.iter().enumerate() {
        let cat_off = ft.concentration_median[ci].ln() - log_root;
        offsets.insert(c.clone(), cat_off);
        for leaf in &leaves[ci] {
            let leaf_off = ft.leaf_sd * g.n();
            offsets.insert(leaf.clone(), leaf_off);
            let median = (log_root + cat_off + leaf_off).exp();
            for _ in 0..ft.concentrations_per_leaf {
                pid += 1;
                let true_value = standard_gamma(&mut g.rng, shape) * median / q;
                let (value, std_error) = if g.bern(ft.std_error_fraction) {
                    let se = 0.1 * true_value;
                    let v = loop {
                        let v = true_value + se * g.n();
                        if v > 0.0 {
                            break v;
                        }
                    };
                    (v, Some(round_sig(se)))
                } else {
                    (true_value, None)
                };
                concentrations.push(ConcentrationObservation {
                    product_id: format!("C{pid:05}"),
                    category: leaf.clone(),
                    value: round_sig(value),
                    std_error,
                });
            }
        }
        for _ in 0..ft.products_per_category {
            pid += 1;
            let leaf = &leaves[ci][g.below(leaves[ci].len())];
            products.push(ProductObservation {
                product_id: format!("F{pid:05}"),
                category: leaf.clone(),
                contains_chemical: g.bern(ft.market_pi[ci]),
            });
        }
    }
    let mut supp_conc = Vec::new();
    for _ in 0..st.n_concentrations {
        pid += 1;
        let v = round_sig(st.concentration_median * (st.concentration_log_sd * g.n()).exp());
        supp_conc.push(v);
        concentrations.push(ConcentrationObservation {
            product_id: format!("C{pid:05}"),
            category: "supplements".into(),
            value: v,
            std_error: None,
        });
    }
    for _ in 0..st.n_products {
        pid += 1;
        products.push(ProductObservation {
            product_id: format!("S{pid:05}"),
            category: "supplements".into(),
            contains_chemical: g.bern(st.market_pi),
        });
    }
    let pt = &config.pcp;
    let mut pcp_conc = Vec::new();
    for (ci, c) in pt.categories.iter().enumerate() {
        let mut pool = Vec::new();
        for _ in 0..pt.concentrations_per_category {
            pid += 1;
            let v = round_sig(pt.concentration_median[ci] * (pt.concentration_log_sd * g.n()).exp());
            pool.push(v);
            concentrations.push(ConcentrationObservation {
                product_id: format!("C{pid:05}"),
                category: c.clone(),
                value: v,
                std_error: None,
            });
        }
        pcp_conc.push(pool);
        for _ in 0..pt.products_per_category {
            pid += 1;
            products.push(ProductObservation {
                product_id: format!("P{pid:05}"),
                category: c.clone(),
                contains_chemical: g.bern(pt.market_pi[ci]),
            });
        }
    }

    // personal care constants
    let mut pcp_rows = Vec::new();
    let mut pcp_truth = Vec::new();
    for (ci, c) in pt.categories.iter().enumerate() {
        for a in &config.age_groups {
            let child = AgeGroup::parse(a).unwrap().at_most(12);
            for s in &genders {
                let amount = pt.median_amount[ci] * if child { pt.child_amount_factor } else { 1.0 };
                pcp_rows.push(PcpConstant {
                    category: c.clone(),
                    age_group: AgeGroup::parse(a).unwrap(),
                    gender: Gender::parse(s).unwrap(),
                    usage_probability: pt.usage_probability[ci],
                    median_daily_amount_per_bw: amount,
                });
                pcp_truth.push(PcpConstantTruth {
                    category: c.clone(),
                    age_group: a.clone(),
                    gender: s.clone(),
                    usage_probability: pt.usage_probability[ci],
                    median_amount: amount,
                });
            }
        }
    }

    let dataset = Dataset {
        strata,
        tree,
        category_map,
        survey,
        products,
        concentrations,
        medicines,
        pcp_constants: PcpConstants::new(pcp_rows),
        supplement_counts,
    };
    let truth = Truth {
        config: config.clone(),
        seed,
        age_groups: config.age_groups.clone(),
        genders,
        regions: config.regions.clone(),
        strata: truth_strata,
        food: FoodParams {
            categories,
            eta0: ft.eta0.clone(),
            eta_effects,
            gamma0: ft.gamma0.clone(),
            gamma_effects,
            effect_scale: scale,
            lambda: ft.lambda,
            sigma_amount: ft.sigma_amount,
            subject_sd: ft.subject_sd,
            subject_corr: ft.subject_corr,
            market_pi: ft.market_pi.clone(),
            concentration_median: ft.concentration_median.clone(),
            concentration_log_median_root: log_root,
            concentration_offsets: offsets,
            concentration_shape: shape,
        },
        supplements: SupplementParams {
            alpha0: st.alpha0,
            alpha_effects,
            sigma_tau: st.sigma_tau,
            rho0: st.rho0.clone(),
            rho_effects,
            sigma_amount: st.sigma_amount.clone(),
            theta: st.theta.clone(),
            market_pi: st.market_pi,
            concentrations: supp_conc,
            counts: counts_by_stratum,
        },
        medicines: MedicineParams {
            psi0: mt.psi0,
            psi_effects,
            phi0: mt.phi0,
            phi_effects,
            lambda: mt.lambda,
            sigma_amount: mt.sigma_amount,
        },
        pcp: PcpParams {
            categories: pt.categories.clone(),
            market_pi: pt.market_pi.clone(),
            concentrations: pcp_conc,
            constants: pcp_truth,
        },
    };
    Ok((dataset, truth))
}

fn node(id: &str, parent: Option<&str>, level: u32) -> CategoryNode {
    CategoryNode { id: id.into(), parent: parent.map(String::from), level, label: id.into() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let c = GeneratorConfig { n_individuals: 30, n_medicine_individuals: 30, ..Default::default() };
        let (a, ta) = generate(&c, 5).unwrap();
        let (b, tb) = generate(&c, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (d, _) = generate(&c, 6).unwrap();
        assert_ne!(a.survey, d.survey);
    }

    #[test]
    fn survey_shape_and_missing_rate() {
        let (d, t) = generate(&GeneratorConfig::default(), 11).unwrap();
        let food_rows = d.survey.iter().filter(|o| o.category.starts_with("food")).count();
        assert_eq!(food_rows, 400 * 2 * 3);
        let mut ids: Vec<(&str, bool)> =
            d.survey.iter().map(|o| (o.individual_id.as_str(), o.body_weight.is_none())).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 400);
        let missing = ids.iter().filter(|x| x.1).count() as f64 / 400.0;
        assert!((missing - 0.10).abs() < 0.05, "{missing}");
        assert_eq!(t.food.lambda, 0.3);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = GeneratorConfig::default();
        c.food.gamma0.pop();
        assert!(generate(&c, 1).is_err());
        let mut c = GeneratorConfig::default();
        c.supplements.theta = vec![0.5, 0.5, 0.5];
        assert!(generate(&c, 1).is_err());
    }
}

/// Writes values into named blocks of a point.
struct Point<'a> {
    layout: &'a crate::models::Layout,
    x: Vec<f64>,
}

impl Point<'_> {
    fn set(&mut self, name: &str, values: &[f64]) -> Result<(), SynthError> {
        let b = self.layout.find(name).ok_or_else(|| SynthError::Invalid(format!("model has no block {name}")))?;
        if values.len() != b.len {
            return Err(SynthError::Invalid(format!("block {name} has {} entries, truth gives {}", b.len, values.len())));
        }
        self.x[b.range()].copy_from_slice(values);
        Ok(())
    }

    fn fill(&mut self, name: &str, v: f64) -> Result<(), SynthError> {
        let len = self.layout.find(name).map(|b| b.len).unwrap_or(0);
        self.set(name, &vec![v; len])
    }

    /// Level effects with unit scales, so each z is the true effect.
    fn effects(
        &mut self,
        prefix: &str,
        truth: &Truth,
        per_group: &[&Effects],
        labels: &BTreeMap<String, Vec<String>>,
    ) -> Result<(), SynthError> {
        self.fill(&format!("{prefix}_sigma"), 1.0)?;
        for (name, truth_levels) in [("age_group", &truth.age_groups), ("gender", &truth.genders), ("region", &truth.regions)] {
            let Some(levels) = labels.get(&format!("levels.{name}")) else { continue };
            let mut z = Vec::new();
            for e in per_group {
                for l in levels {
                    let i = truth_levels.iter().position(|t| t == l).ok_or_else(|| SynthError::Invalid(format!("unknown level {l}")))?;
                    z.push(e[name][i]);
                }
            }
            self.set(&format!("{prefix}_{name}_z"), &z)?;
        }
        Ok(())
    }
}

fn category_values(labels: &BTreeMap<String, Vec<String>>, ids: &[String], values: &[f64]) -> Result<Vec<f64>, SynthError> {
    labels
        .get("categories")
        .map(|c| c.as_slice())
        .unwrap_or_default()
        .iter()
        .map(|c| {
            ids.iter().position(|i| i == c).map(|i| values[i]).ok_or_else(|| SynthError::Invalid(format!("unknown category {c}")))
        })
        .collect()
}

/// Single-draw posteriors holding the true parameters, one per model the
/// dataset supports. Blocks the simulator never reads keep neutral values.
pub fn truth_draws(
    truth: &Truth,
    data: &Dataset,
    config: &crate::models::ModelConfig,
) -> Result<Vec<crate::sampler::DrawSet>, SynthError> {
    use crate::transforms::logit;
    let graphs = crate::models::build_graphs(data, config).map_err(|e| SynthError::Invalid(e.to_string()))?;
    let mut out = Vec::new();
    for g in graphs {
        let mut p = Point { layout: &g.layout, x: g.constrain(&vec![0.0; g.dim()]) };
        let f = &truth.food;
        let s = &truth.supplements;
        let m = &truth.medicines;
        match g.name.as_str() {
            "food" => {
                let ids = &f.categories;
                p.set("food.eta0", &category_values(&g.labels, ids, &f.eta0)?)?;
                p.set("food.gamma0", &category_values(&g.labels, ids, &f.gamma0)?)?;
                let order: Vec<usize> = g.labels["categories"].iter().map(|c| ids.iter().position(|i| i == c).unwrap()).collect();
                let eta: Vec<&Effects> = order.iter().map(|&i| &f.eta_effects[i]).collect();
                let gamma: Vec<&Effects> = order.iter().map(|&i| &f.gamma_effects[i]).collect();
                p.effects("food.eta", truth, &eta, &g.labels)?;
                p.effects("food.gamma", truth, &gamma, &g.labels)?;
                p.set("food.lambda", &[f.lambda])?;
                p.set("food.sigma_amount", &[f.sigma_amount])?;
                let r = f.subject_corr;
                let n = order.len();
                p.set("food.subject_scale", &f.subject_sd.repeat(n))?;
                p.set("food.subject_corr", &[1.0, 0.0, r, (1.0 - r * r).sqrt()].repeat(n))?;
            }
            crate::models::concentration::NAME => {
                p.set(&format!("{}.log_median_root", g.name), &[f.concentration_log_median_root])?;
                p.fill(&format!("{}.sigma_level", g.name), 1.0)?;
                let z: Vec<f64> = g.labels["offset_nodes"].iter().map(|n| f.concentration_offsets.get(n).copied().unwrap_or(0.0)).collect();
                p.set(&format!("{}.offset_z", g.name), &z)?;
                p.set(&format!("{}.shape", g.name), &[f.concentration_shape])?;
            }
            "market_food" | "market_pcp" => {
                let (sym, ids, pi) = if g.name == "market_food" {
                    ("delta", &f.categories, &f.market_pi)
                } else {
                    ("xi", &truth.pcp.categories, &truth.pcp.market_pi)
                };
                let logits: Vec<f64> = pi.iter().map(|&v| logit(v)).collect();
                p.set(&format!("{}.{sym}0", g.name), &[0.0])?;
                p.set(&format!("{}.sigma_{sym}", g.name), &[1.0])?;
                p.set(&format!("{}.{sym}_z", g.name), &category_values(&g.labels, ids, &logits)?)?;
            }
            "market_supplements" => p.set("market_supplements.logit_pi", &[logit(s.market_pi)])?,
            "supplements" => {
                p.set("supplements.alpha0", &[s.alpha0])?;
                p.effects("supplements.alpha", truth, &[&s.alpha_effects], &g.labels)?;
                p.effects("supplements.rho", truth, &[&s.rho_effects], &g.labels)?;
                p.set("supplements.sigma_tau", &[s.sigma_tau])?;
                p.set("supplements.rho0", &s.rho0)?;
                p.set("supplements.sigma_amount", &s.sigma_amount)?;
                p.set("supplements.theta", &s.theta)?;
            }
            "medicines" => {
                p.set("medicines.psi0", &[m.psi0])?;
                p.effects("medicines.psi", truth, &[&m.psi_effects], &g.labels)?;
                p.set("medicines.phi0", &[m.phi0])?;
                p.effects("medicines.phi", truth, &[&m.phi_effects], &g.labels)?;
                p.set("medicines.lambda", &[m.lambda])?;
                p.set("medicines.sigma_amount", &[m.sigma_amount])?;
            }
            _ => {}
        }
        let x = p.x;
        out.push(crate::sampler::DrawSet::from_point(g.name.clone(), g.source, &g.layout, g.labels.clone(), x));
    }
    Ok(out)
}
