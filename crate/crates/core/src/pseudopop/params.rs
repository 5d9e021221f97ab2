//! Reading the parameters of one posterior iteration back out of the draw
//! sets, resolved for one stratum.

use std::collections::BTreeMap;

use super::SimulationError;
use crate::data::{CategoryTree, Predictor, StratumKey};
use crate::dist::standard_normal;
use crate::rng::{label_hash, StreamKey};
use crate::sampler::DrawSet;
use crate::transforms::logit_inverse;

/// One retained draw of one model.
pub(crate) struct Draw<'a> {
    pub set: &'a DrawSet,
    pub j: usize,
    /// Stream for levels the model never saw, shared by every stratum of
    /// the iteration.
    pub unseen: StreamKey,
}

impl<'a> Draw<'a> {
    pub fn block(&self, name: &str) -> Result<&'a [f64], SimulationError> {
        self.set.get(self.j, name).ok_or_else(|| SimulationError::MissingBlock {
            model: self.set.name().to_string(),
            block: name.to_string(),
        })
    }

    pub fn scalar(&self, name: &str) -> Result<f64, SimulationError> {
        Ok(self.block(name)?[0])
    }

    fn labels(&self, key: &str) -> Result<&'a [String], SimulationError> {
        self.set.labels(key).ok_or_else(|| SimulationError::MissingBlock {
            model: self.set.name().to_string(),
            block: format!("labels {key}"),
        })
    }

    /// Position of `id` among the `categories` labels.
    pub fn category(&self, id: &str) -> Result<usize, SimulationError> {
        self.labels("categories")?.iter().position(|c| c == id).ok_or_else(|| SimulationError::MissingBlock {
            model: self.set.name().to_string(),
            block: format!("category {id}"),
        })
    }

    pub fn categories(&self) -> Result<&'a [String], SimulationError> {
        self.labels("categories")
    }

    /// Sum of the level effects `{prefix}_sigma` x `{prefix}_{predictor}_z`
    /// for `key`, in group `g` of `groups` (or ungrouped). Levels absent from
    /// the fitted data get a fresh standard normal z.
    pub fn effect(&self, prefix: &str, g: Option<usize>, key: &StratumKey) -> Result<f64, SimulationError> {
        let predictors = self.labels("predictors")?;
        let sigma = self.block(&format!("{prefix}_sigma"))?;
        let k = predictors.len();
        let mut total = 0.0;
        for (ki, name) in predictors.iter().enumerate() {
            let p = Predictor::parse(name).ok_or_else(|| SimulationError::MissingBlock {
                model: self.set.name().to_string(),
                block: format!("predictor {name}"),
            })?;
            let levels = self.labels(&format!("levels.{name}"))?;
            let z = self.block(&format!("{prefix}_{name}_z"))?;
            let s = match (sigma.len(), g) {
                (1, _) => sigma[0],
                (_, Some(g)) => sigma[g * k + ki],
                (_, None) => sigma[ki],
            };
            let level = key.level(p);
            let zv = match levels.iter().position(|l| *l == level) {
                Some(l) => z[g.unwrap_or(0) * levels.len() + l],
                None => {
                    let mut rng = self
                        .unseen
                        .path(&[label_hash(prefix), g.unwrap_or(0) as u64, label_hash(name), label_hash(&level)])
                        .rng();
                    standard_normal(&mut rng)
                }
            };
            total += s * zv;
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoodCategory {
    pub id: String,
    /// Linear predictor of the consumption probability.
    pub eta: f64,
    /// Mean of the Box-Cox transformed amount.
    pub gamma: f64,
    pub subject_sd: [f64; 2],
    pub subject_corr: f64,
    pub concentration_median: f64,
    pub market_pi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoodStratum {
    pub categories: Vec<FoodCategory>,
    pub lambda: f64,
    pub sigma_amount: f64,
}

pub(crate) fn food(
    model: &Draw,
    concentration: &Draw,
    market: Option<&Draw>,
    tree: &CategoryTree,
    key: &StratumKey,
) -> Result<FoodStratum, SimulationError> {
    let eta0 = model.block("food.eta0")?;
    let gamma0 = model.block("food.gamma0")?;
    let scale = model.block("food.subject_scale")?;
    let corr = model.block("food.subject_corr")?;
    let medians = category_medians(concentration, tree)?;
    let mut categories = Vec::new();
    for (g, id) in model.categories()?.iter().enumerate() {
        let median = medians.get(id).copied().ok_or_else(|| SimulationError::MissingBlock {
            model: concentration.set.name().to_string(),
            block: format!("median for {id}"),
        })?;
        categories.push(FoodCategory {
            id: id.clone(),
            eta: eta0[g] + model.effect("food.eta", Some(g), key)?,
            gamma: gamma0[g] + model.effect("food.gamma", Some(g), key)?,
            subject_sd: [scale[2 * g], scale[2 * g + 1]],
            subject_corr: corr[4 * g + 2],
            concentration_median: median,
            market_pi: match market {
                Some(m) => market_probability(m, "delta", id)?,
                None => 1.0,
            },
        });
    }
    Ok(FoodStratum {
        categories,
        lambda: model.scalar("food.lambda")?,
        sigma_amount: model.scalar("food.sigma_amount")?,
    })
}

/// Median concentration of every node under the root: the root effect plus
/// the offsets on the path that the model carries.
pub(crate) fn category_medians(draw: &Draw, tree: &CategoryTree) -> Result<BTreeMap<String, f64>, SimulationError> {
    let name = draw.set.name();
    let root = draw.labels("root")?.first().cloned().unwrap_or_default();
    let nodes = draw.labels("offset_nodes")?;
    let levels = draw.labels("offset_levels")?;
    let ln_root = draw.scalar(&format!("{name}.log_median_root"))?;
    let sigma = draw.block(&format!("{name}.sigma_level"))?;
    let z = draw.block(&format!("{name}.offset_z"))?;
    let mut out = BTreeMap::new();
    for n in tree.nodes().iter().filter(|n| tree.is_within(&n.id, &root)) {
        let mut ln_m = ln_root;
        for a in tree.ancestry(&n.id) {
            if let Some(p) = nodes.iter().position(|x| *x == a.id) {
                let slot: usize = levels[p].parse().unwrap_or(1);
                ln_m += sigma[slot - 1] * z[p];
            }
        }
        out.insert(n.id.clone(), ln_m.exp());
    }
    Ok(out)
}

/// Probability that a product of group `id` contains the chemical.
pub(crate) fn market_probability(draw: &Draw, symbol: &str, id: &str) -> Result<f64, SimulationError> {
    let name = draw.set.name();
    let g = draw.category(id)?;
    let eta = draw.scalar(&format!("{name}.{symbol}0"))?
        + draw.scalar(&format!("{name}.sigma_{symbol}"))? * draw.block(&format!("{name}.{symbol}_z"))?[g];
    Ok(logit_inverse(eta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupplementStratum {
    /// Linear predictor of use, without the person effect.
    pub alpha: f64,
    pub sigma_tau: f64,
    /// Component means of the log amount, shared effects included.
    pub component_mean: Vec<f64>,
    pub component_sd: Vec<f64>,
    pub theta: Vec<f64>,
    pub market_pi: f64,
}

pub(crate) fn supplements(
    model: &Draw,
    market: Option<&Draw>,
    key: &StratumKey,
) -> Result<SupplementStratum, SimulationError> {
    let shared = model.effect("supplements.rho", None, key)?;
    let rho0 = model.block("supplements.rho0")?;
    let market_pi = match market {
        Some(m) => logit_inverse(m.scalar(&format!("{}.logit_pi", m.set.name()))?),
        None => 1.0,
    };
    Ok(SupplementStratum {
        alpha: model.scalar("supplements.alpha0")? + model.effect("supplements.alpha", None, key)?,
        sigma_tau: model.scalar("supplements.sigma_tau")?,
        component_mean: rho0.iter().map(|r| r + shared).collect(),
        component_sd: model.block("supplements.sigma_amount")?.to_vec(),
        theta: model.block("supplements.theta")?.to_vec(),
        market_pi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedicineStratum {
    /// Probability of regular use.
    pub pi: f64,
    /// Mean of the Box-Cox transformed amount.
    pub phi: f64,
    pub lambda: f64,
    pub sigma_amount: f64,
}

pub(crate) fn medicines(model: &Draw, key: &StratumKey) -> Result<MedicineStratum, SimulationError> {
    Ok(MedicineStratum {
        pi: logit_inverse(model.scalar("medicines.psi0")? + model.effect("medicines.psi", None, key)?),
        phi: model.scalar("medicines.phi0")? + model.effect("medicines.phi", None, key)?,
        lambda: model.scalar("medicines.lambda")?,
        sigma_amount: model.scalar("medicines.sigma_amount")?,
    })
}
