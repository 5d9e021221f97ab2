//! Food consumption: frequency (Bernoulli-logit) and amount per body weight
//! (Box-Cox Normal) by category, linked through correlated subject effects,
//! with the body-weight model imputing missing weights.

use std::collections::BTreeMap;

use super::{
    binomial_logit, half_normal_prior, normal_full, normal_prior, BlockId, Constraint, Density, Design,
    Layout, LevelEffects, ModelConfig, ModelError, ModelGraph, Source, WeightModel,
};
use crate::data::{CategoryTree, StratumKey, SurveyObservation};
use crate::transforms::boxcox_log_input;

/// All survey days of one individual in one category.
#[derive(Debug, Clone)]
struct Cell {
    individual: usize,
    category: usize,
    days: f64,
    consumed: f64,
    /// Range into the log amounts of consumption days.
    amounts: std::ops::Range<usize>,
}

#[derive(Debug)]
struct FoodDensity {
    layout: Layout,
    n_categories: usize,
    n_individuals: usize,
    design: Design,
    cells: Vec<Cell>,
    ln_amounts: Vec<f64>,
    lambda_bounds: [f64; 2],
    mu_eta: BlockId,
    sigma_eta: BlockId,
    eta0: BlockId,
    eta: LevelEffects,
    mu_gamma: BlockId,
    sigma_gamma: BlockId,
    gamma0: BlockId,
    gamma: LevelEffects,
    lambda: BlockId,
    sigma_amount: BlockId,
    subject_scale: BlockId,
    subject_corr: BlockId,
    subject_z: BlockId,
    weight: WeightModel,
}

/// Food categories of the survey: distinct row categories under the food
/// root, sorted by id.
pub fn food_categories(survey: &[SurveyObservation], tree: &CategoryTree, root: &str) -> Vec<String> {
    let mut cats: Vec<String> =
        survey.iter().filter(|o| tree.is_within(&o.category, root)).map(|o| o.category.clone()).collect();
    cats.sort();
    cats.dedup();
    cats
}

/// Individuals in order of first appearance, with their strata and weights.
pub(crate) fn individuals<'a>(
    rows: impl Iterator<Item = (&'a str, &'a StratumKey, Option<f64>)>,
) -> (BTreeMap<String, usize>, Vec<StratumKey>, Vec<Option<f64>>) {
    let mut index = BTreeMap::new();
    let mut keys = Vec::new();
    let mut weights = Vec::new();
    for (id, key, w) in rows {
        if !index.contains_key(id) {
            index.insert(id.to_string(), keys.len());
            keys.push(key.clone());
            weights.push(w);
        } else if w.is_some() {
            let i = index[id];
            weights[i] = weights[i].or(w);
        }
    }
    (index, keys, weights)
}

pub fn build_food_graph(
    survey: &[SurveyObservation],
    tree: &CategoryTree,
    config: &ModelConfig,
) -> Result<ModelGraph, ModelError> {
    config.validate()?;
    let obs: Vec<&SurveyObservation> = survey.iter().filter(|o| tree.is_within(&o.category, &config.food_root)).collect();
    if obs.is_empty() {
        return Err(ModelError::NoData("food".into()));
    }
    let categories = food_categories(survey, tree, &config.food_root);
    for c in &categories {
        if !obs.iter().any(|o| &o.category == c && o.consumed) {
            return Err(ModelError::EmptyCategory(c.clone()));
        }
    }
    let (ids, keys, weights) =
        individuals(obs.iter().map(|o| (o.individual_id.as_str(), &o.demographics, o.body_weight)));
    let key_refs: Vec<&StratumKey> = keys.iter().collect();
    let design = Design::new(&config.predictors, &key_refs);
    let g = categories.len();
    let n = keys.len();

    let mut layout = Layout::default();
    let mu_eta = layout.add("food.mu_eta", vec![], Constraint::None);
    let sigma_eta = layout.add("food.sigma_eta", vec![], Constraint::Positive);
    let eta0 = layout.add("food.eta0", vec![g], Constraint::None);
    let eta = LevelEffects::add(&mut layout, "food.eta", &design, Some(g));
    let mu_gamma = layout.add("food.mu_gamma", vec![], Constraint::None);
    let sigma_gamma = layout.add("food.sigma_gamma", vec![], Constraint::Positive);
    let gamma0 = layout.add("food.gamma0", vec![g], Constraint::None);
    let gamma = LevelEffects::add(&mut layout, "food.gamma", &design, Some(g));
    let [lo, hi] = config.lambda_bounds;
    let lambda = layout.add("food.lambda", vec![], Constraint::Bounded { lo, hi });
    let sigma_amount = layout.add("food.sigma_amount", vec![], Constraint::Positive);
    let subject_scale = layout.add("food.subject_scale", vec![g, 2], Constraint::Positive);
    let subject_corr = layout.add("food.subject_corr", vec![g, 2, 2], Constraint::CorrelationCholesky);
    let subject_z = layout.add("food.subject_z", vec![g, n, 2], Constraint::None);
    let weight = WeightModel::add(&mut layout, "food", "beta", &design, &weights)?;

    let mut grouped: BTreeMap<(usize, usize), (f64, Vec<f64>)> = BTreeMap::new();
    for o in &obs {
        let key = (categories.binary_search(&o.category).unwrap(), ids[&o.individual_id]);
        let e = grouped.entry(key).or_default();
        e.0 += 1.0;
        if o.consumed {
            e.1.push(o.amount.map_or(0.0, f64::ln));
        }
    }
    let mut cells = Vec::with_capacity(grouped.len());
    let mut ln_amounts = Vec::new();
    for ((category, individual), (days, amounts)) in grouped {
        let start = ln_amounts.len();
        ln_amounts.extend(&amounts);
        cells.push(Cell { individual, category, days, consumed: amounts.len() as f64, amounts: start..ln_amounts.len() });
    }

    let mut labels = design.labels();
    labels.insert("categories".into(), categories);
    let density = FoodDensity {
        layout: layout.clone(),
        n_categories: g,
        n_individuals: n,
        design,
        cells,
        ln_amounts,
        lambda_bounds: config.lambda_bounds,
        mu_eta,
        sigma_eta,
        eta0,
        eta,
        mu_gamma,
        sigma_gamma,
        gamma0,
        gamma,
        lambda,
        sigma_amount,
        subject_scale,
        subject_corr,
        subject_z,
        weight,
    };
    Ok(ModelGraph::new("food", Source::Food, layout, labels, Box::new(density)))
}

/// Hierarchical intercepts `b[g] ~ Normal(mu, sigma)` with `mu ~ Normal(0, 2.5)`
/// and `sigma ~ HalfNormal(0, 1)`.
pub(crate) fn hierarchical_intercepts(
    layout: &Layout,
    x: &[f64],
    gx: &mut [f64],
    mu: BlockId,
    sigma: BlockId,
    b: BlockId,
) -> f64 {
    let mut lp = normal_prior(layout, x, gx, mu, 0.0, 2.5) + half_normal_prior(layout, x, gx, sigma, 1.0);
    let (mo, so, bo) = (layout.off(mu), layout.off(sigma), layout.off(b));
    for i in 0..layout.block(b).len {
        let (l, dv, dm, ds) = normal_full(x[bo + i], x[mo], x[so]);
        lp += l;
        gx[bo + i] += dv;
        gx[mo] += dm;
        gx[so] += ds;
    }
    lp
}

impl Density for FoodDensity {
    fn log_density(&self, x: &[f64], gx: &mut [f64], likelihood: bool) -> f64 {
        let l = &self.layout;
        let (g_n, n) = (self.n_categories, self.n_individuals);
        let mut lp = hierarchical_intercepts(l, x, gx, self.mu_eta, self.sigma_eta, self.eta0);
        lp += hierarchical_intercepts(l, x, gx, self.mu_gamma, self.sigma_gamma, self.gamma0);
        lp += self.eta.prior(l, x, gx) + self.gamma.prior(l, x, gx);
        lp -= (self.lambda_bounds[1] - self.lambda_bounds[0]).ln();
        lp += half_normal_prior(l, x, gx, self.sigma_amount, 1.0);
        lp += half_normal_prior(l, x, gx, self.subject_scale, 1.0);
        lp += normal_prior(l, x, gx, self.subject_z, 0.0, 1.0);

        let ln_w = self.weight.ln_weights(l, x);
        let mut g_ln_w = vec![0.0; n];
        if likelihood {
            let (so, co, zo) = (l.off(self.subject_scale), l.off(self.subject_corr), l.off(self.subject_z));
            // subject effects (upsilon, nu) per (g, i); the first z drives the
            // amount effect, which the data pin down far better than the
            // frequency effect, so the correlation moves only the second
            let mut ups = vec![0.0; g_n * n];
            let mut nu = vec![0.0; g_n * n];
            for gi in 0..g_n {
                let (s_u, s_n) = (x[so + 2 * gi], x[so + 2 * gi + 1]);
                let (l00, l10, l11) = (x[co + 4 * gi], x[co + 4 * gi + 2], x[co + 4 * gi + 3]);
                for i in 0..n {
                    let z1 = x[zo + 2 * (gi * n + i)];
                    let z2 = x[zo + 2 * (gi * n + i) + 1];
                    nu[gi * n + i] = s_n * l00 * z1;
                    ups[gi * n + i] = s_u * (l10 * z1 + l11 * z2);
                }
            }
            let mut g_ups = vec![0.0; g_n * n];
            let mut g_nu = vec![0.0; g_n * n];
            let lambda = x[l.off(self.lambda)];
            let sigma_a = x[l.off(self.sigma_amount)];
            let (e0, c0) = (l.off(self.eta0), l.off(self.gamma0));
            let mut g_lambda = 0.0;
            let mut g_sigma_a = 0.0;
            let nc = self.design.cells.len();
            let eta_eff = self.eta.cell_values(l, x, g_n, &self.design);
            let gamma_eff = self.gamma.cell_values(l, x, g_n, &self.design);
            let mut d_eta_eff = vec![0.0; g_n * nc];
            let mut d_gamma_eff = vec![0.0; g_n * nc];
            for c in &self.cells {
                let (gi, i) = (c.category, c.individual);
                let k = gi * n + i;
                let ce = gi * nc + self.design.cell[i];
                let eta = x[e0 + gi] + eta_eff[ce] + ups[k];
                let (lb, d_eta) = binomial_logit(c.consumed, c.days, eta);
                lp += lb;
                gx[e0 + gi] += d_eta;
                d_eta_eff[ce] += d_eta;
                g_ups[k] += d_eta;
                if c.amounts.is_empty() {
                    continue;
                }
                let mu = x[c0 + gi] + gamma_eff[ce] + nu[k];
                let mut d_mu_sum = 0.0;
                for &ln_a in &self.ln_amounts[c.amounts.clone()] {
                    let ln_y = ln_a - ln_w[i];
                    let (f, df_dl, df_dy) = boxcox_log_input(ln_y, lambda);
                    let (ln, d_f, d_mu, d_s) = normal_full(f, mu, sigma_a);
                    lp += ln + (lambda - 1.0) * ln_y - ln_w[i];
                    g_lambda += d_f * df_dl + ln_y;
                    g_sigma_a += d_s;
                    d_mu_sum += d_mu;
                    let d_ln_y = d_f * df_dy + lambda - 1.0;
                    g_ln_w[i] += -d_ln_y - 1.0;
                }
                gx[c0 + gi] += d_mu_sum;
                d_gamma_eff[ce] += d_mu_sum;
                g_nu[k] += d_mu_sum;
            }
            self.eta.backprop_cells(l, x, gx, &self.design, &d_eta_eff);
            self.gamma.backprop_cells(l, x, gx, &self.design, &d_gamma_eff);
            gx[l.off(self.lambda)] += g_lambda;
            gx[l.off(self.sigma_amount)] += g_sigma_a;
            for gi in 0..g_n {
                let (s_u, s_n) = (x[so + 2 * gi], x[so + 2 * gi + 1]);
                let (l00, l10, l11) = (x[co + 4 * gi], x[co + 4 * gi + 2], x[co + 4 * gi + 3]);
                for i in 0..n {
                    let k = gi * n + i;
                    let (du, dn) = (g_ups[k], g_nu[k]);
                    if du == 0.0 && dn == 0.0 {
                        continue;
                    }
                    let z1 = x[zo + 2 * k];
                    let z2 = x[zo + 2 * k + 1];
                    gx[so + 2 * gi + 1] += dn * l00 * z1;
                    gx[co + 4 * gi] += dn * s_n * z1;
                    gx[so + 2 * gi] += du * (l10 * z1 + l11 * z2);
                    gx[co + 4 * gi + 2] += du * s_u * z1;
                    gx[co + 4 * gi + 3] += du * s_u * z2;
                    gx[zo + 2 * k] += dn * s_n * l00 + du * s_u * l10;
                    gx[zo + 2 * k + 1] += du * s_u * l11;
                }
            }
        }
        lp + self.weight.log_density(l, x, gx, &ln_w, &g_ln_w, likelihood)
    }
}
