//! Dietary supplements: frequency with a per-person effect, and the mean
//! amount per body weight on consumption days as a lognormal mixture whose
//! component labels are summed out.

use super::{
    binomial_logit, half_normal_prior, normal, normal_full, normal_prior, BlockId, Constraint, Density, Design,
    Layout, LevelEffects, ModelConfig, ModelError, ModelGraph, Source, WeightModel,
};
use crate::data::{CategoryTree, StratumKey, SurveyObservation};
use crate::dist::log_sum_exp;
use crate::models::food::individuals;

#[derive(Debug)]
struct SupplementsDensity {
    layout: Layout,
    n_individuals: usize,
    components: usize,
    design: Design,
    /// (individual, days with use, days) per person.
    days: Vec<(usize, f64, f64)>,
    /// (individual, ln mean amount) for people with at least one consumption day.
    amounts: Vec<(usize, f64)>,
    alpha0: BlockId,
    alpha: LevelEffects,
    sigma_tau: BlockId,
    tau_z: BlockId,
    rho0: BlockId,
    rho: LevelEffects,
    sigma_amount: BlockId,
    theta: BlockId,
    weight: WeightModel,
}

/// Per-person mean of the daily totals over the days with consumption, in
/// survey order.
pub fn mean_daily_amounts(rows: &[&SurveyObservation]) -> Vec<(String, f64)> {
    let mut daily: Vec<(&str, u8, f64)> = Vec::new();
    for o in rows {
        let Some(a) = o.amount.filter(|_| o.consumed) else { continue };
        match daily.iter_mut().find(|(id, d, _)| *id == o.individual_id && *d == o.day) {
            Some(e) => e.2 += a,
            None => daily.push((&o.individual_id, o.day, a)),
        }
    }
    let mut out: Vec<(String, f64, u32)> = Vec::new();
    for (id, _, total) in daily {
        match out.iter_mut().find(|(x, _, _)| x == id) {
            Some(e) => {
                e.1 += total;
                e.2 += 1;
            }
            None => out.push((id.to_string(), total, 1)),
        }
    }
    out.into_iter().map(|(id, s, t)| (id, s / t as f64)).collect()
}

pub fn build_supplements_graph(
    survey: &[SurveyObservation],
    tree: &CategoryTree,
    config: &ModelConfig,
) -> Result<ModelGraph, ModelError> {
    config.validate()?;
    let obs: Vec<&SurveyObservation> =
        survey.iter().filter(|o| tree.is_within(&o.category, &config.supplements_root)).collect();
    if obs.is_empty() {
        return Err(ModelError::NoData("supplements".into()));
    }
    // a person-day may list several supplement categories; collapse to one flag
    let mut day_flags: Vec<(String, u8, bool)> = Vec::new();
    for o in &obs {
        match day_flags.iter_mut().find(|(id, d, _)| *id == o.individual_id && *d == o.day) {
            Some(e) => e.2 |= o.consumed,
            None => day_flags.push((o.individual_id.clone(), o.day, o.consumed)),
        }
    }
    let means = mean_daily_amounts(&obs);
    if means.is_empty() {
        return Err(ModelError::NoData("supplements amount".into()));
    }
    let (ids, keys, weights) =
        individuals(obs.iter().map(|o| (o.individual_id.as_str(), &o.demographics, o.body_weight)));
    let key_refs: Vec<&StratumKey> = keys.iter().collect();
    let design = Design::new(&config.predictors, &key_refs);
    let n = keys.len();
    let c = config.mixture_components;

    let mut layout = Layout::default();
    let alpha0 = layout.add("supplements.alpha0", vec![], Constraint::None);
    let alpha = LevelEffects::add(&mut layout, "supplements.alpha", &design, None);
    let sigma_tau = layout.add("supplements.sigma_tau", vec![], Constraint::Positive);
    let tau_z = layout.add("supplements.tau_z", vec![n], Constraint::None);
    let rho0 = layout.add("supplements.rho0", vec![c], Constraint::Ordered);
    let rho = LevelEffects::add_shared(&mut layout, "supplements.rho", &design);
    let sigma_amount = layout.add("supplements.sigma_amount", vec![c], Constraint::Positive);
    let theta = layout.add("supplements.theta", vec![c], Constraint::Simplex);
    let weight = WeightModel::add(&mut layout, "supplements", "zeta", &design, &weights)?;

    let mut days: Vec<(usize, f64, f64)> = Vec::new();
    for (id, _, f) in &day_flags {
        let i = ids[id];
        match days.iter_mut().find(|d| d.0 == i) {
            Some(d) => {
                d.1 += *f as u8 as f64;
                d.2 += 1.0;
            }
            None => days.push((i, *f as u8 as f64, 1.0)),
        }
    }
    let amounts = means.iter().map(|(id, m)| (ids[id], m.ln())).collect();
    let labels = design.labels();
    let density = SupplementsDensity {
        layout: layout.clone(),
        n_individuals: n,
        components: c,
        design,
        days,
        amounts,
        alpha0,
        alpha,
        sigma_tau,
        tau_z,
        rho0,
        rho,
        sigma_amount,
        theta,
        weight,
    };
    Ok(ModelGraph::new("supplements", Source::Supplements, layout, labels, Box::new(density)))
}

impl Density for SupplementsDensity {
    fn log_density(&self, x: &[f64], gx: &mut [f64], likelihood: bool) -> f64 {
        let l = &self.layout;
        let c = self.components;
        let mut lp = normal_prior(l, x, gx, self.alpha0, 0.0, 2.5);
        lp += self.alpha.prior(l, x, gx);
        lp += half_normal_prior(l, x, gx, self.sigma_tau, 1.0);
        lp += normal_prior(l, x, gx, self.tau_z, 0.0, 1.0);
        lp += normal_prior(l, x, gx, self.rho0, 0.0, 2.5);
        lp += self.rho.prior(l, x, gx);
        let (sa, th) = (l.off(self.sigma_amount), l.off(self.theta));
        for z in 0..c {
            // ln sigma ~ Normal(0, 2), as a density on sigma
            let s = x[sa + z];
            let (lz, dz) = normal(s.ln(), 0.0, 2.0);
            lp += lz - s.ln();
            gx[sa + z] += (dz - 1.0) / s;
        }
        // flat Dirichlet
        lp += statrs::function::gamma::ln_gamma(c as f64);

        let ln_w = self.weight.ln_weights(l, x);
        let mut g_ln_w = vec![0.0; self.n_individuals];
        if likelihood {
            let (a0, st, tz) = (l.off(self.alpha0), l.off(self.sigma_tau), l.off(self.tau_z));
            let alpha_eff = self.alpha.cell_values(l, x, 1, &self.design);
            let mut d_alpha = vec![0.0; alpha_eff.len()];
            for &(i, used, n_days) in &self.days {
                let ce = self.design.cell[i];
                let eta = x[a0] + alpha_eff[ce] + x[st] * x[tz + i];
                let (lb, d) = binomial_logit(used, n_days, eta);
                lp += lb;
                gx[a0] += d;
                d_alpha[ce] += d;
                gx[st] += d * x[tz + i];
                gx[tz + i] += d * x[st];
            }
            self.alpha.backprop_cells(l, x, gx, &self.design, &d_alpha);
            let r0 = l.off(self.rho0);
            let mut terms = vec![0.0; c];
            let mut parts = vec![(0.0, 0.0, 0.0); c];
            let rho_eff = self.rho.cell_values(l, x, 1, &self.design);
            let mut d_rho = vec![0.0; rho_eff.len()];
            for &(i, ln_mean) in &self.amounts {
                let ce = self.design.cell[i];
                let y = ln_mean - ln_w[i];
                let shared = rho_eff[ce];
                for z in 0..c {
                    let (ln, dy, dm, ds) = normal_full(y, x[r0 + z] + shared, x[sa + z]);
                    terms[z] = x[th + z].ln() + ln;
                    parts[z] = (dy, dm, ds);
                }
                let total = log_sum_exp(&terms);
                lp += total;
                let mut d_shared = 0.0;
                for z in 0..c {
                    let r = (terms[z] - total).exp();
                    if r == 0.0 {
                        continue;
                    }
                    let (dy, dm, ds) = parts[z];
                    gx[r0 + z] += r * dm;
                    gx[sa + z] += r * ds;
                    gx[th + z] += r / x[th + z];
                    d_shared += r * dm;
                    g_ln_w[i] -= r * dy;
                }
                d_rho[ce] += d_shared;
            }
            self.rho.backprop_cells(l, x, gx, &self.design, &d_rho);
        }
        lp + self.weight.log_density(l, x, gx, &ln_w, &g_ln_w, likelihood)
    }
}
