//! Joint log-posteriors of the exposure-factor models.
//!
//! Each model is a [`ModelGraph`]: a [`Layout`] of named parameter blocks and
//! a density on the constrained scale. [`ModelGraph::log_posterior`] maps an
//! unconstrained vector through the block constraints, evaluates the density
//! and its gradient, and adds the Jacobian terms.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Predictor, StratumKey};
use crate::transforms::Constraint;

pub mod concentration;
pub mod food;
pub mod market;
pub mod medicines;
pub mod supplements;
mod weight;

pub use weight::WeightModel;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("parameter vector has length {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("category `{0}` has no consumed observations")]
    EmptyCategory(String),
    #[error("no observed body weights to anchor the weight model")]
    AllWeightsMissing,
    #[error("no regular users with at least one unit per day")]
    NoRegularUsers,
    #[error("no observations for the {0} model")]
    NoData(String),
    #[error("category tree has no nodes under `{0}`")]
    EmptyTree(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Food,
    Supplements,
    Medicines,
    Pcp,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::Food, Source::Supplements, Source::Medicines, Source::Pcp];

    pub fn name(self) -> &'static str {
        match self {
            Source::Food => "food",
            Source::Supplements => "supplements",
            Source::Medicines => "medicines",
            Source::Pcp => "pcp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Source::ALL.into_iter().find(|x| x.name() == s.trim())
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Model settings shared by the graph builders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub predictors: Vec<Predictor>,
    pub mixture_components: usize,
    pub lambda_bounds: [f64; 2],
    pub unit_mass_bounds: [f64; 2],
    pub max_units_per_person: u32,
    pub food_root: String,
    pub supplements_root: String,
    pub pcp_root: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            predictors: vec![Predictor::AgeGroup, Predictor::Gender, Predictor::Region],
            mixture_components: 3,
            lambda_bounds: [-2.0, 2.0],
            unit_mass_bounds: [0.8, 2.6],
            max_units_per_person: 10,
            food_root: "food".into(),
            supplements_root: "supplements".into(),
            pcp_root: "pcp".into(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.mixture_components < 1 {
            return bad("mixture_components must be at least 1");
        }
        if !(self.lambda_bounds[0] < self.lambda_bounds[1]) {
            return bad("lambda_bounds must be increasing");
        }
        if !(0.0 < self.unit_mass_bounds[0] && self.unit_mass_bounds[0] < self.unit_mass_bounds[1]) {
            return bad("unit_mass_bounds must be positive and increasing");
        }
        if self.max_units_per_person < 1 {
            return bad("max_units_per_person must be at least 1");
        }
        let mut seen = self.predictors.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.predictors.len() {
            return bad("predictors must be distinct");
        }
        Ok(())
    }
}

/// Index of a block within its layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub constraint: Constraint,
    /// Start in the unconstrained vector.
    pub offset: usize,
    pub free_len: usize,
    /// Start in the constrained vector.
    pub constrained_offset: usize,
    pub len: usize,
}

impl ParameterBlock {
    /// Entries transformed together: one simplex, one correlation factor, or
    /// one ordered vector. Other constraints act elementwise.
    fn chunk(&self) -> usize {
        match self.constraint {
            Constraint::Simplex | Constraint::Ordered => *self.shape.last().unwrap_or(&1),
            Constraint::CorrelationCholesky => {
                let n = self.shape.len();
                self.shape[n - 2] * self.shape[n - 1]
            }
            _ => self.len.max(1),
        }
    }

    /// Column names, 1-based and row-major: `food.eta0[3]`, `food.z[1,2]`.
    pub fn column_names(&self) -> Vec<String> {
        if self.shape.is_empty() {
            return vec![self.name.clone()];
        }
        let mut names = Vec::with_capacity(self.len);
        let mut idx = vec![0usize; self.shape.len()];
        for _ in 0..self.len {
            let parts: Vec<String> = idx.iter().map(|i| (i + 1).to_string()).collect();
            names.push(format!("{}[{}]", self.name, parts.join(",")));
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < self.shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        names
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.constrained_offset..self.constrained_offset + self.len
    }
}

/// Fixed affine change of sampling coordinates over a run of unconstrained
/// blocks, `x = shift + factor * u`. It leaves the posterior unchanged but
/// lets a diagonal metric cope with directions the data pin down only jointly.
#[derive(Debug, Clone, PartialEq)]
struct Affine {
    free: usize,
    constrained: usize,
    len: usize,
    shift: Vec<f64>,
    /// Row-major `len x len`.
    factor: Vec<f64>,
    inverse: Vec<f64>,
    ln_det: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layout {
    blocks: Vec<ParameterBlock>,
    affine: Vec<Affine>,
    free_dim: usize,
    dim: usize,
}

impl Layout {
    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, constraint: Constraint) -> BlockId {
        let len: usize = shape.iter().product();
        let chunk = match constraint {
            Constraint::Simplex | Constraint::Ordered => *shape.last().unwrap_or(&1),
            Constraint::CorrelationCholesky => shape[shape.len() - 2] * shape[shape.len() - 1],
            _ => 1,
        };
        let free_len = if len == 0 { 0 } else { (len / chunk) * constraint.free_len(chunk) };
        let block = ParameterBlock {
            name: name.into(),
            shape,
            constraint,
            offset: self.free_dim,
            free_len,
            constrained_offset: self.dim,
            len,
        };
        self.free_dim += free_len;
        self.dim += len;
        self.blocks.push(block);
        BlockId(self.blocks.len() - 1)
    }

    pub fn blocks(&self) -> &[ParameterBlock] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> &ParameterBlock {
        &self.blocks[id.0]
    }

    pub fn find(&self, name: &str) -> Option<&ParameterBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Unconstrained dimension.
    pub fn free_dim(&self) -> usize {
        self.free_dim
    }

    /// Constrained dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Offset of a block in the constrained vector.
    pub fn off(&self, id: BlockId) -> usize {
        self.blocks[id.0].constrained_offset
    }

    pub fn get<'a>(&self, x: &'a [f64], id: BlockId) -> &'a [f64] {
        &x[self.blocks[id.0].range()]
    }

    pub fn column_names(&self) -> Vec<String> {
        self.blocks.iter().flat_map(|b| b.column_names()).collect()
    }

    /// Samples the consecutive unconstrained blocks `first..=last` in
    /// coordinates `u` with `x = shift + factor * u`; `factor` is row-major
    /// and must be invertible.
    pub fn precondition(&mut self, first: BlockId, last: BlockId, shift: Vec<f64>, factor: Vec<f64>) {
        let run = &self.blocks[first.0..=last.0];
        assert!(run.iter().all(|b| b.constraint == Constraint::None), "affine blocks must be unconstrained");
        let len: usize = run.iter().map(|b| b.len).sum();
        assert!(shift.len() == len && factor.len() == len * len, "affine map shape");
        let m = nalgebra::DMatrix::from_row_slice(len, len, &factor);
        let ln_det = m.determinant().abs().ln();
        let inv = m.try_inverse().expect("affine factor must be invertible");
        let inverse = (0..len).flat_map(|r| (0..len).map(move |c| (r, c))).map(|(r, c)| inv[(r, c)]).collect();
        self.affine.push(Affine {
            free: run[0].offset,
            constrained: run[0].constrained_offset,
            len,
            shift,
            factor,
            inverse,
            ln_det,
        });
    }

    /// Maps `u` to the constrained vector; returns ln|Jacobian|.
    pub fn constrain(&self, u: &[f64], x: &mut [f64]) -> f64 {
        let mut lj = 0.0;
        for b in &self.blocks {
            let chunk = b.chunk();
            let free_chunk = b.constraint.free_len(chunk);
            for c in 0..b.len / chunk.max(1) {
                let uu = &u[b.offset + c * free_chunk..b.offset + (c + 1) * free_chunk];
                let xx = &mut x[b.constrained_offset + c * chunk..b.constrained_offset + (c + 1) * chunk];
                lj += b.constraint.constrain(uu, xx);
            }
        }
        for a in &self.affine {
            let uu = &u[a.free..a.free + a.len];
            for r in 0..a.len {
                let row = &a.factor[r * a.len..(r + 1) * a.len];
                x[a.constrained + r] = a.shift[r] + row.iter().zip(uu).map(|(m, v)| m * v).sum::<f64>();
            }
            lj += a.ln_det;
        }
        lj
    }

    pub fn backprop(&self, u: &[f64], x: &[f64], gx: &[f64], gu: &mut [f64]) {
        for b in &self.blocks {
            let chunk = b.chunk();
            let free_chunk = b.constraint.free_len(chunk);
            for c in 0..b.len / chunk.max(1) {
                let fr = b.offset + c * free_chunk..b.offset + (c + 1) * free_chunk;
                let cr = b.constrained_offset + c * chunk..b.constrained_offset + (c + 1) * chunk;
                b.constraint.backprop(&u[fr.clone()], &x[cr.clone()], &gx[cr], &mut gu[fr]);
            }
        }
        for a in &self.affine {
            let g = &gx[a.constrained..a.constrained + a.len];
            // the identity pass above already added g
            for c in 0..a.len {
                gu[a.free + c] += (0..a.len).map(|r| a.factor[r * a.len + c] * g[r]).sum::<f64>() - g[c];
            }
        }
    }

    pub fn unconstrain(&self, x: &[f64], u: &mut [f64]) {
        for b in &self.blocks {
            let chunk = b.chunk();
            let free_chunk = b.constraint.free_len(chunk);
            for c in 0..b.len / chunk.max(1) {
                let fr = b.offset + c * free_chunk..b.offset + (c + 1) * free_chunk;
                let cr = b.constrained_offset + c * chunk..b.constrained_offset + (c + 1) * chunk;
                b.constraint.unconstrain(&x[cr], &mut u[fr]);
            }
        }
        for a in &self.affine {
            let d: Vec<f64> = (0..a.len).map(|r| x[a.constrained + r] - a.shift[r]).collect();
            for r in 0..a.len {
                u[a.free + r] = a.inverse[r * a.len..(r + 1) * a.len].iter().zip(&d).map(|(m, v)| m * v).sum();
            }
        }
    }

    /// Whether every block of `x` satisfies its constraint.
    pub fn check(&self, x: &[f64]) -> Result<(), String> {
        for b in &self.blocks {
            let chunk = b.chunk();
            for c in 0..b.len / chunk.max(1) {
                let cr = b.constrained_offset + c * chunk..b.constrained_offset + (c + 1) * chunk;
                if !b.constraint.check(&x[cr]) {
                    return Err(format!("block {} violates {:?}", b.name, b.constraint));
                }
            }
        }
        Ok(())
    }
}

/// A log-density on the constrained scale.
pub trait Density: Send + Sync {
    /// Returns the log-density at `x` and adds its gradient to `grad`. With
    /// `likelihood == false` only the prior terms are included.
    fn log_density(&self, x: &[f64], grad: &mut [f64], likelihood: bool) -> f64;
}

/// A fitted-model specification: parameter layout plus density, along with
/// the level labels needed to map strata onto the regression terms.
pub struct ModelGraph {
    pub name: String,
    pub source: Source,
    pub layout: Layout,
    /// Level labels, e.g. `categories` or `levels.age_group`.
    pub labels: BTreeMap<String, Vec<String>>,
    density: Box<dyn Density>,
    likelihood: bool,
}

impl fmt::Debug for ModelGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelGraph")
            .field("name", &self.name)
            .field("source", &self.source)
            .field("free_dim", &self.layout.free_dim())
            .finish()
    }
}

impl ModelGraph {
    pub fn new(
        name: impl Into<String>,
        source: Source,
        layout: Layout,
        labels: BTreeMap<String, Vec<String>>,
        density: Box<dyn Density>,
    ) -> Self {
        Self { name: name.into(), source, layout, labels, density, likelihood: true }
    }

    /// The same model with the likelihood switched off.
    pub fn prior_only(mut self) -> Self {
        self.likelihood = false;
        self
    }

    pub fn dim(&self) -> usize {
        self.layout.free_dim()
    }

    pub fn log_posterior(&self, theta: &[f64]) -> Result<(f64, Vec<f64>), ModelError> {
        if theta.len() != self.dim() {
            return Err(ModelError::DimensionMismatch { expected: self.dim(), got: theta.len() });
        }
        let mut grad = vec![0.0; theta.len()];
        let value = self.log_posterior_into(theta, &mut grad);
        Ok((value, grad))
    }

    /// Allocation-light variant used by the sampler; `grad` is overwritten.
    pub fn log_posterior_into(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let mut x = vec![0.0; self.layout.dim()];
        let lj = self.layout.constrain(theta, &mut x);
        let mut gx = vec![0.0; x.len()];
        let lp = self.density.log_density(&x, &mut gx, self.likelihood);
        grad.fill(0.0);
        self.layout.backprop(theta, &x, &gx, grad);
        lp + lj
    }

    pub fn constrain(&self, theta: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.layout.dim()];
        self.layout.constrain(theta, &mut x);
        x
    }

    pub fn unconstrain(&self, x: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.layout.free_dim()];
        self.layout.unconstrain(x, &mut u);
        u
    }
}

/// Per-individual predictor levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub predictors: Vec<Predictor>,
    /// Sorted level labels per predictor.
    pub levels: Vec<Vec<String>>,
    /// `index[i][k]`: level of predictor `k` for row `i`.
    pub index: Vec<Vec<usize>>,
    /// Distinct level combinations, sorted, and the combination of each row.
    pub cells: Vec<Vec<usize>>,
    pub cell: Vec<usize>,
}

impl Design {
    pub fn new(predictors: &[Predictor], keys: &[&StratumKey]) -> Self {
        let levels: Vec<Vec<String>> = predictors
            .iter()
            .map(|&p| {
                let mut v: Vec<String> = keys.iter().map(|k| k.level(p)).collect();
                v.sort_by(|a, b| level_order(p, a, b));
                v.dedup();
                v
            })
            .collect();
        let index = keys
            .iter()
            .map(|key| {
                predictors
                    .iter()
                    .zip(&levels)
                    .map(|(&p, lv)| lv.iter().position(|l| *l == key.level(p)).unwrap())
                    .collect()
            })
            .collect::<Vec<Vec<usize>>>();
        let mut cells = index.clone();
        cells.sort();
        cells.dedup();
        let cell = index.iter().map(|r| cells.binary_search(r).unwrap()).collect();
        Self { predictors: predictors.to_vec(), levels, index, cells, cell }
    }

    pub fn n_levels(&self, k: usize) -> usize {
        self.levels[k].len()
    }

    /// Labels keyed `levels.<predictor>` for storing alongside draws.
    pub fn labels(&self) -> BTreeMap<String, Vec<String>> {
        let mut m = BTreeMap::new();
        m.insert("predictors".to_string(), self.predictors.iter().map(|p| p.name().to_string()).collect());
        for (p, lv) in self.predictors.iter().zip(&self.levels) {
            m.insert(format!("levels.{}", p.name()), lv.clone());
        }
        m
    }
}

fn level_order(p: Predictor, a: &str, b: &str) -> std::cmp::Ordering {
    if p == Predictor::AgeGroup {
        if let (Ok(x), Ok(y)) = (crate::data::AgeGroup::parse(a), crate::data::AgeGroup::parse(b)) {
            return x.cmp(&y);
        }
    }
    a.cmp(b)
}

/// Sum over predictors of `sigma[k] * z_k[level]`, the non-centred level
/// effects of one linear predictor.
#[derive(Debug, Clone)]
pub(crate) struct LevelEffects {
    /// One z block per predictor; for category-varying effects each block has
    /// shape `[G, L_k]`.
    pub z: Vec<BlockId>,
    /// Scales, shape `[G, K]` (or `[K]` without groups), or a single scale
    /// shared by every predictor.
    pub sigma: BlockId,
    pub shared: bool,
    pub n_levels: Vec<usize>,
}

impl LevelEffects {
    pub fn add(layout: &mut Layout, prefix: &str, design: &Design, groups: Option<usize>) -> Self {
        Self::build(layout, prefix, design, groups, false)
    }

    /// Ungrouped effects with one scale for all predictors.
    pub fn add_shared(layout: &mut Layout, prefix: &str, design: &Design) -> Self {
        Self::build(layout, prefix, design, None, true)
    }

    fn build(layout: &mut Layout, prefix: &str, design: &Design, groups: Option<usize>, shared: bool) -> Self {
        let k = design.predictors.len();
        let sigma_shape = match (shared, groups) {
            (true, _) => vec![],
            (false, Some(g)) => vec![g, k],
            (false, None) => vec![k],
        };
        let sigma = layout.add(format!("{prefix}_sigma"), sigma_shape, Constraint::Positive);
        let z = design
            .predictors
            .iter()
            .enumerate()
            .map(|(ki, p)| {
                let shape = match groups {
                    Some(g) => vec![g, design.n_levels(ki)],
                    None => vec![design.n_levels(ki)],
                };
                layout.add(format!("{prefix}_{}_z", p.name()), shape, Constraint::None)
            })
            .collect();
        Self { z, sigma, shared, n_levels: (0..k).map(|i| design.n_levels(i)).collect() }
    }

    /// Effect for group `g` and levels `idx`.
    pub fn value(&self, layout: &Layout, x: &[f64], g: usize, idx: &[usize]) -> f64 {
        let k = self.z.len();
        let sig = layout.get(x, self.sigma);
        let mut s = 0.0;
        for ki in 0..k {
            let z = layout.get(x, self.z[ki]);
            s += sig[self.sigma_index(g, ki)] * z[g * self.n_levels[ki] + idx[ki]];
        }
        s
    }

    /// Effects for every group and design cell, indexed `[g * cells + c]`.
    pub fn cell_values(&self, layout: &Layout, x: &[f64], groups: usize, design: &Design) -> Vec<f64> {
        let nc = design.cells.len();
        let mut out = vec![0.0; groups * nc];
        for g in 0..groups {
            for (c, idx) in design.cells.iter().enumerate() {
                out[g * nc + c] = self.value(layout, x, g, idx);
            }
        }
        out
    }

    /// Backprop of derivatives accumulated per group and design cell.
    pub fn backprop_cells(&self, layout: &Layout, x: &[f64], gx: &mut [f64], design: &Design, d: &[f64]) {
        let nc = design.cells.len();
        for (k, &dk) in d.iter().enumerate() {
            if dk != 0.0 {
                self.backprop(layout, x, gx, k / nc, &design.cells[k % nc], dk);
            }
        }
    }

    fn sigma_index(&self, g: usize, ki: usize) -> usize {
        if self.shared {
            0
        } else {
            g * self.z.len() + ki
        }
    }

    pub fn backprop(&self, layout: &Layout, x: &[f64], gx: &mut [f64], g: usize, idx: &[usize], d: f64) {
        let k = self.z.len();
        let so = layout.off(self.sigma);
        for ki in 0..k {
            let zo = layout.off(self.z[ki]) + g * self.n_levels[ki] + idx[ki];
            let si = so + self.sigma_index(g, ki);
            let sig = x[si];
            gx[si] += d * x[zo];
            gx[zo] += d * sig;
        }
    }

    /// Standard normal priors on the z blocks, half-normal(0, 1) on the scales.
    pub fn prior(&self, layout: &Layout, x: &[f64], gx: &mut [f64]) -> f64 {
        let mut lp = half_normal_prior(layout, x, gx, self.sigma, 1.0);
        for &z in &self.z {
            lp += normal_prior(layout, x, gx, z, 0.0, 1.0);
        }
        lp
    }
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `Normal(mean, sd)` log-density of `v` and its derivative in `v`.
#[inline]
pub(crate) fn normal(v: f64, mean: f64, sd: f64) -> (f64, f64) {
    let z = (v - mean) / sd;
    (-0.5 * z * z - sd.ln() - HALF_LN_2PI, -z / sd)
}

/// Normal log-density with derivatives in (v, mean, sd).
#[inline]
pub(crate) fn normal_full(v: f64, mean: f64, sd: f64) -> (f64, f64, f64, f64) {
    let z = (v - mean) / sd;
    let lp = -0.5 * z * z - sd.ln() - HALF_LN_2PI;
    (lp, -z / sd, z / sd, (z * z - 1.0) / sd)
}

pub(crate) fn normal_prior(layout: &Layout, x: &[f64], gx: &mut [f64], id: BlockId, mean: f64, sd: f64) -> f64 {
    let o = layout.off(id);
    let mut lp = 0.0;
    for (i, &v) in layout.get(x, id).iter().enumerate() {
        let (l, d) = normal(v, mean, sd);
        lp += l;
        gx[o + i] += d;
    }
    lp
}

pub(crate) fn half_normal_prior(layout: &Layout, x: &[f64], gx: &mut [f64], id: BlockId, sd: f64) -> f64 {
    normal_prior(layout, x, gx, id, 0.0, sd) + std::f64::consts::LN_2 * layout.block(id).len as f64
}

/// Log-likelihood of a Bernoulli outcome on the logit scale and its
/// derivative in the linear predictor.
#[inline]
pub(crate) fn bernoulli_logit(y: bool, eta: f64) -> (f64, f64) {
    use crate::transforms::{log_inv_logit, logit_inverse};
    let p = logit_inverse(eta);
    if y {
        (log_inv_logit(eta), 1.0 - p)
    } else {
        (log_inv_logit(-eta), -p)
    }
}

/// `k` successes out of `n` Bernoulli-logit trials sharing `eta`; returns the
/// log-likelihood and its derivative.
#[inline]
pub(crate) fn binomial_logit(k: f64, n: f64, eta: f64) -> (f64, f64) {
    let e = (-eta.abs()).exp();
    let softplus = eta.max(0.0) + e.ln_1p();
    let p = if eta >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    (k * eta - n * softplus, k - n * p)
}

/// Every model the dataset supports, in a fixed order: food, its
/// concentration and market models, supplements and their market model,
/// medicines, and the personal-care market model. Sources without data in
/// the dataset are skipped.
pub fn build_graphs(data: &crate::data::Dataset, config: &ModelConfig) -> Result<Vec<ModelGraph>, ModelError> {
    config.validate()?;
    let tree = &data.tree;
    let mut graphs = Vec::new();
    let food = food::food_categories(&data.survey, tree, &config.food_root);
    if !food.is_empty() {
        graphs.push(food::build_food_graph(&data.survey, tree, config)?);
        graphs.push(concentration::build_food_concentration_graph(&data.concentrations, tree, &config.food_root)?);
        graphs.push(market::build_market_graph(&data.products, tree, Source::Food, &food)?);
    }
    if data.survey.iter().any(|o| tree.is_within(&o.category, &config.supplements_root)) {
        graphs.push(supplements::build_supplements_graph(&data.survey, tree, config)?);
        let root = vec![config.supplements_root.clone()];
        graphs.push(market::build_market_graph(&data.products, tree, Source::Supplements, &root)?);
    }
    if !data.medicines.is_empty() {
        graphs.push(medicines::build_medicines_graph(&data.medicines, config)?);
    }
    if tree.contains(&config.pcp_root) {
        let cats: Vec<String> = tree.children(&config.pcp_root).map(|n| n.id.clone()).collect();
        if !cats.is_empty() {
            graphs.push(market::build_market_graph(&data.products, tree, Source::Pcp, &cats)?);
        }
    }
    Ok(graphs)
}

/// Central-difference gradient check on the fourth-order five-point stencil:
/// returns the worst relative error over coordinates, with an absolute floor.
/// The log-posterior of a few hundred observations runs to 1e5 and more, so
/// the two-point rule at small `h` loses most of its digits to round-off.
pub fn gradient_error(graph: &ModelGraph, theta: &[f64], h: f64, abs_floor: f64) -> (f64, usize) {
    let (_, g) = graph.log_posterior(theta).expect("dimension");
    let mut worst = (0.0, 0);
    let mut t = theta.to_vec();
    for i in 0..theta.len() {
        let mut at = |d: f64| {
            t[i] = theta[i] + d;
            let lp = graph.log_posterior(&t).unwrap().0;
            t[i] = theta[i];
            lp
        };
        let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        let err = (g[i] - fd).abs() / fd.abs().max(g[i].abs()).max(abs_floor.max(1e-300));
        let err = if (g[i] - fd).abs() < abs_floor { 0.0 } else { err };
        if err > worst.0 {
            worst = (err, i);
        }
    }
    worst
}
