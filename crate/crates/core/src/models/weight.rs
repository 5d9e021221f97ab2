//! Log body weight regression on adjacent predictor interactions, with each
//! missing weight carried as a positive parameter.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{half_normal_prior, normal, normal_prior, BlockId, Constraint, Design, Layout, ModelError};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Observed(f64),
    Missing(usize),
}

#[derive(Debug, Clone)]
pub struct WeightModel {
    pub intercept: BlockId,
    /// Interaction of predictors k and k+1, shape `[L_k, L_{k+1}]`.
    pub interactions: Vec<BlockId>,
    pub sigma: BlockId,
    pub missing: BlockId,
    slots: Vec<Slot>,
    index: Vec<Vec<usize>>,
    n_levels: Vec<usize>,
}

/// Approximate posterior mode and a square root of the posterior covariance
/// of the regression coefficients given the observed weights, with the
/// residual scale taken from the pooled within-cell spread. The intercept
/// and the interactions overlap heavily, so this is the coordinate change
/// the sampler works in.
fn regression_geometry(n_levels: &[usize], index: &[Vec<usize>], weights: &[Option<f64>]) -> (Vec<f64>, Vec<f64>) {
    let k = n_levels.len();
    let mut offsets = vec![1];
    for i in 0..k.saturating_sub(1) {
        offsets.push(offsets[i] + n_levels[i] * n_levels[i + 1]);
    }
    let p = offsets[k.saturating_sub(1)];
    let row = |idx: &[usize]| -> Vec<usize> {
        let mut cols = vec![0];
        for i in 0..k.saturating_sub(1) {
            cols.push(offsets[i] + idx[i] * n_levels[i + 1] + idx[i + 1]);
        }
        cols
    };

    let mut cells: BTreeMap<&[usize], Vec<f64>> = BTreeMap::new();
    for (idx, w) in index.iter().zip(weights) {
        if let Some(w) = w {
            cells.entry(idx.as_slice()).or_default().push(w.ln());
        }
    }
    let n_obs: usize = cells.values().map(Vec::len).sum();
    let ss: f64 = cells
        .values()
        .map(|v| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        })
        .sum();
    let dof = n_obs.saturating_sub(cells.len());
    let s2 = if dof >= 5 { (ss / dof as f64).clamp(1e-4, 1.0) } else { 0.1 };

    let mut h = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    h[(0, 0)] = 1.0 / (2.5 * 2.5);
    for j in 1..p {
        h[(j, j)] = 1.0;
    }
    for (idx, v) in &cells {
        let cols = row(idx);
        let (n, sum) = (v.len() as f64, v.iter().sum::<f64>());
        for &a in &cols {
            b[a] += sum / s2;
            for &c in &cols {
                h[(a, c)] += n / s2;
            }
        }
    }
    let chol = h.cholesky().expect("prior precision keeps the system positive definite");
    let mode = chol.solve(&b);
    let l_inv = chol.l().try_inverse().expect("triangular factor is invertible");
    let factor = l_inv.transpose();
    let flat = (0..p).flat_map(|r| (0..p).map(move |c| (r, c))).map(|(r, c)| factor[(r, c)]).collect();
    (mode.iter().copied().collect(), flat)
}

impl WeightModel {
    /// `weights[i]` is the body weight of individual `i` (row `i` of `design`).
    pub fn add(
        layout: &mut Layout,
        prefix: &str,
        symbol: &str,
        design: &Design,
        weights: &[Option<f64>],
    ) -> Result<Self, ModelError> {
        if weights.iter().all(Option::is_none) {
            return Err(ModelError::AllWeightsMissing);
        }
        let intercept = layout.add(format!("{prefix}.{symbol}0"), vec![], Constraint::None);
        let k = design.predictors.len();
        let interactions = (0..k.saturating_sub(1))
            .map(|i| {
                layout.add(
                    format!("{prefix}.{symbol}_{}_x_{}", design.predictors[i].name(), design.predictors[i + 1].name()),
                    vec![design.n_levels(i), design.n_levels(i + 1)],
                    Constraint::None,
                )
            })
            .collect::<Vec<_>>();
        let n_levels: Vec<usize> = (0..k).map(|i| design.n_levels(i)).collect();
        let (shift, factor) = regression_geometry(&n_levels, &design.index, weights);
        layout.precondition(intercept, *interactions.last().unwrap_or(&intercept), shift, factor);
        let sigma = layout.add(format!("{prefix}.sigma_weight"), vec![], Constraint::Positive);
        let mut n_missing = 0;
        let slots = weights
            .iter()
            .map(|w| match w {
                Some(v) => Slot::Observed(v.ln()),
                None => {
                    n_missing += 1;
                    Slot::Missing(n_missing - 1)
                }
            })
            .collect();
        let missing = layout.add(format!("{prefix}.weight_missing"), vec![n_missing], Constraint::Positive);
        Ok(Self {
            intercept,
            interactions,
            sigma,
            missing,
            slots,
            index: design.index.clone(),
            n_levels,
        })
    }

    pub fn n_missing(&self) -> usize {
        self.slots.iter().filter(|s| matches!(s, Slot::Missing(_))).count()
    }

    /// Log body weight of every individual at `x`.
    pub fn ln_weights(&self, layout: &Layout, x: &[f64]) -> Vec<f64> {
        let miss = layout.get(x, self.missing);
        self.slots
            .iter()
            .map(|s| match *s {
                Slot::Observed(lw) => lw,
                Slot::Missing(m) => miss[m].ln(),
            })
            .collect()
    }

    fn mean(&self, layout: &Layout, x: &[f64], i: usize) -> f64 {
        let mut mu = x[layout.off(self.intercept)];
        for (k, &b) in self.interactions.iter().enumerate() {
            mu += x[layout.off(b) + self.index[i][k] * self.n_levels[k + 1] + self.index[i][k + 1]];
        }
        mu
    }

    /// Priors, the weight likelihood and the chain rule for missing weights.
    /// `g_ln_w[i]` carries d(other terms)/d ln w_i from the amount model.
    pub fn log_density(
        &self,
        layout: &Layout,
        x: &[f64],
        gx: &mut [f64],
        ln_w: &[f64],
        g_ln_w: &[f64],
        likelihood: bool,
    ) -> f64 {
        let mut lp = normal_prior(layout, x, gx, self.intercept, 0.0, 2.5);
        for &b in &self.interactions {
            lp += normal_prior(layout, x, gx, b, 0.0, 1.0);
        }
        lp += half_normal_prior(layout, x, gx, self.sigma, 1.0);
        let so = layout.off(self.sigma);
        let sigma = x[so];
        let mo = layout.off(self.missing);
        for (i, slot) in self.slots.iter().enumerate() {
            let missing = matches!(slot, Slot::Missing(_));
            if !(likelihood || missing) {
                continue;
            }
            let mu = self.mean(layout, x, i);
            let z = (ln_w[i] - mu) / sigma;
            let (l, d_lw) = normal(ln_w[i], mu, sigma);
            // density of w itself: lognormal
            lp += l - ln_w[i];
            let d_mu = -d_lw;
            gx[so] += (z * z - 1.0) / sigma;
            gx[layout.off(self.intercept)] += d_mu;
            for (k, &b) in self.interactions.iter().enumerate() {
                gx[layout.off(b) + self.index[i][k] * self.n_levels[k + 1] + self.index[i][k + 1]] += d_mu;
            }
            if let Slot::Missing(m) = *slot {
                let w = ln_w[i].exp();
                gx[mo + m] += (d_lw - 1.0 + g_ln_w[i]) / w;
            }
        }
        lp
    }
}
