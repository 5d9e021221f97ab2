//! Medicines: regular use (Bernoulli-logit on the predictors) and the daily
//! amount per body weight (Box-Cox Normal), where the amount is the sum of
//! latent per-unit masses.

use super::{
    bernoulli_logit, half_normal_prior, normal_full, normal_prior, BlockId, Constraint, Density, Design, Layout,
    LevelEffects, ModelConfig, ModelError, ModelGraph, Source, WeightModel,
};
use crate::data::{MedicineUseObservation, StratumKey};
use crate::transforms::boxcox_log_input;

#[derive(Debug)]
struct User {
    individual: usize,
    /// First latent unit parameter and number of parameters.
    first_unit: usize,
    n_params: usize,
    /// Units beyond the cap, carried by the last parameter.
    extra_units: u32,
}

#[derive(Debug)]
struct MedicinesDensity {
    layout: Layout,
    design: Design,
    regular: Vec<bool>,
    users: Vec<User>,
    lambda_bounds: [f64; 2],
    unit_bounds: [f64; 2],
    psi0: BlockId,
    psi: LevelEffects,
    phi0: BlockId,
    phi: LevelEffects,
    lambda: BlockId,
    sigma_amount: BlockId,
    units: BlockId,
    weight: WeightModel,
}

pub fn build_medicines_graph(obs: &[MedicineUseObservation], config: &ModelConfig) -> Result<ModelGraph, ModelError> {
    config.validate()?;
    if !obs.iter().any(|o| o.regular_user && o.units_per_day >= 1) {
        return Err(ModelError::NoRegularUsers);
    }
    let keys: Vec<&StratumKey> = obs.iter().map(|o| &o.demographics).collect();
    let design = Design::new(&config.predictors, &keys);
    let weights: Vec<Option<f64>> = obs.iter().map(|o| o.body_weight).collect();

    let cap = config.max_units_per_person;
    let mut users = Vec::new();
    let mut n_units = 0;
    for (i, o) in obs.iter().enumerate() {
        if o.regular_user && o.units_per_day >= 1 {
            let n_params = o.units_per_day.min(cap) as usize;
            users.push(User { individual: i, first_unit: n_units, n_params, extra_units: o.units_per_day - n_params as u32 });
            n_units += n_params;
        }
    }

    let mut layout = Layout::default();
    let psi0 = layout.add("medicines.psi0", vec![], Constraint::None);
    let psi = LevelEffects::add(&mut layout, "medicines.psi", &design, None);
    let phi0 = layout.add("medicines.phi0", vec![], Constraint::None);
    let phi = LevelEffects::add(&mut layout, "medicines.phi", &design, None);
    let [lo, hi] = config.lambda_bounds;
    let lambda = layout.add("medicines.lambda", vec![], Constraint::Bounded { lo, hi });
    let sigma_amount = layout.add("medicines.sigma_amount", vec![], Constraint::Positive);
    let [ulo, uhi] = config.unit_mass_bounds;
    let units = layout.add("medicines.unit_mass", vec![n_units], Constraint::Bounded { lo: ulo, hi: uhi });
    let weight = WeightModel::add(&mut layout, "medicines", "omega", &design, &weights)?;

    let labels = design.labels();
    let density = MedicinesDensity {
        layout: layout.clone(),
        design,
        regular: obs.iter().map(|o| o.regular_user).collect(),
        users,
        lambda_bounds: config.lambda_bounds,
        unit_bounds: config.unit_mass_bounds,
        psi0,
        psi,
        phi0,
        phi,
        lambda,
        sigma_amount,
        units,
        weight,
    };
    Ok(ModelGraph::new("medicines", Source::Medicines, layout, labels, Box::new(density)))
}

impl Density for MedicinesDensity {
    fn log_density(&self, x: &[f64], gx: &mut [f64], likelihood: bool) -> f64 {
        let l = &self.layout;
        let mut lp = normal_prior(l, x, gx, self.psi0, 0.0, 2.5);
        lp += self.psi.prior(l, x, gx);
        lp += normal_prior(l, x, gx, self.phi0, 0.0, 2.5);
        lp += self.phi.prior(l, x, gx);
        lp -= (self.lambda_bounds[1] - self.lambda_bounds[0]).ln();
        lp += half_normal_prior(l, x, gx, self.sigma_amount, 1.0);
        lp -= l.block(self.units).len as f64 * (self.unit_bounds[1] - self.unit_bounds[0]).ln();

        let ln_w = self.weight.ln_weights(l, x);
        let mut g_ln_w = vec![0.0; self.regular.len()];
        if likelihood {
            let p0 = l.off(self.psi0);
            let psi_eff = self.psi.cell_values(l, x, 1, &self.design);
            let mut d_psi = vec![0.0; psi_eff.len()];
            for (i, &y) in self.regular.iter().enumerate() {
                let ce = self.design.cell[i];
                let (lb, d) = bernoulli_logit(y, x[p0] + psi_eff[ce]);
                lp += lb;
                gx[p0] += d;
                d_psi[ce] += d;
            }
            self.psi.backprop_cells(l, x, gx, &self.design, &d_psi);
            let phi_eff = self.phi.cell_values(l, x, 1, &self.design);
            let mut d_phi = vec![0.0; phi_eff.len()];
            let (f0, uo) = (l.off(self.phi0), l.off(self.units));
            let lambda = x[l.off(self.lambda)];
            let sigma = x[l.off(self.sigma_amount)];
            let mut g_lambda = 0.0;
            let mut g_sigma = 0.0;
            for u in &self.users {
                let i = u.individual;
                let ce = self.design.cell[i];
                let masses = &x[uo + u.first_unit..uo + u.first_unit + u.n_params];
                let total: f64 = masses.iter().sum::<f64>() + u.extra_units as f64 * masses[u.n_params - 1];
                let ln_y = total.ln() - ln_w[i];
                let (f, df_dl, df_dy) = boxcox_log_input(ln_y, lambda);
                let mu = x[f0] + phi_eff[ce];
                let (ln, d_f, d_mu, d_s) = normal_full(f, mu, sigma);
                lp += ln + (lambda - 1.0) * ln_y - ln_w[i];
                g_lambda += d_f * df_dl + ln_y;
                g_sigma += d_s;
                gx[f0] += d_mu;
                d_phi[ce] += d_mu;
                let d_ln_y = d_f * df_dy + lambda - 1.0;
                for p in 0..u.n_params {
                    let mult = if p + 1 == u.n_params { 1.0 + u.extra_units as f64 } else { 1.0 };
                    gx[uo + u.first_unit + p] += d_ln_y * mult / total;
                }
                g_ln_w[i] += -d_ln_y - 1.0;
            }
            self.phi.backprop_cells(l, x, gx, &self.design, &d_phi);
            gx[l.off(self.lambda)] += g_lambda;
            gx[l.off(self.sigma_amount)] += g_sigma;
        }
        lp + self.weight.log_density(l, x, gx, &ln_w, &g_ln_w, likelihood)
    }
}
