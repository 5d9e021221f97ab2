//! Market presence: whether a product contains the chemical, Bernoulli-logit
//! on an intercept plus partially pooled category effects. Supplements use a
//! single probability with its prior placed directly on the logit.

use std::collections::BTreeMap;

use super::{
    bernoulli_logit, half_normal_prior, normal_prior, BlockId, Constraint, Density, Layout, ModelError, ModelGraph,
    Source,
};
use crate::data::{CategoryTree, ProductObservation};

#[derive(Debug)]
struct MarketDensity {
    layout: Layout,
    /// (group, contains) per product.
    products: Vec<(usize, bool)>,
    intercept: BlockId,
    /// Scale and non-centred effects; absent for the single-group model.
    groups: Option<(BlockId, BlockId)>,
}

/// Graph name of the market model for `source`.
pub fn market_name(source: Source) -> String {
    format!("market_{}", source.name())
}

/// Coefficient symbol used in block names.
fn symbol(source: Source) -> &'static str {
    match source {
        Source::Food => "delta",
        Source::Pcp => "xi",
        _ => "kappa",
    }
}

/// Builds the market-presence model over `groups` (category ids). Each
/// product is assigned to the group containing its category; products in no
/// group are ignored. Supplements are modelled as one group with the prior
/// on the logit itself.
pub fn build_market_graph(
    products: &[ProductObservation],
    tree: &CategoryTree,
    source: Source,
    groups: &[String],
) -> Result<ModelGraph, ModelError> {
    if groups.is_empty() {
        return Err(ModelError::NoData(market_name(source)));
    }
    let mut rows = Vec::new();
    for p in products {
        if let Some(g) = groups.iter().position(|g| tree.is_within(&p.category, g)) {
            rows.push((g, p.contains_chemical));
        }
    }
    for (gi, g) in groups.iter().enumerate() {
        if !rows.iter().any(|&(x, _)| x == gi) {
            return Err(ModelError::EmptyCategory(g.clone()));
        }
    }
    let name = market_name(source);
    let mut layout = Layout::default();
    let (intercept, group_blocks) = if source == Source::Supplements {
        (layout.add(format!("{name}.logit_pi"), vec![], Constraint::None), None)
    } else {
        let s = symbol(source);
        let intercept = layout.add(format!("{name}.{s}0"), vec![], Constraint::None);
        let sigma = layout.add(format!("{name}.sigma_{s}"), vec![], Constraint::Positive);
        let z = layout.add(format!("{name}.{s}_z"), vec![groups.len()], Constraint::None);
        (intercept, Some((sigma, z)))
    };
    let mut labels = BTreeMap::new();
    labels.insert("categories".to_string(), groups.to_vec());
    let density = MarketDensity { layout: layout.clone(), products: rows, intercept, groups: group_blocks };
    Ok(ModelGraph::new(name, source, layout, labels, Box::new(density)))
}

impl Density for MarketDensity {
    fn log_density(&self, x: &[f64], gx: &mut [f64], likelihood: bool) -> f64 {
        let l = &self.layout;
        let mut lp = normal_prior(l, x, gx, self.intercept, 0.0, 2.5);
        if let Some((sigma, z)) = self.groups {
            lp += half_normal_prior(l, x, gx, sigma, 1.0);
            lp += normal_prior(l, x, gx, z, 0.0, 1.0);
        }
        if !likelihood {
            return lp;
        }
        let io = l.off(self.intercept);
        for &(g, y) in &self.products {
            let eta = match self.groups {
                Some((sigma, z)) => x[io] + x[l.off(sigma)] * x[l.off(z) + g],
                None => x[io],
            };
            let (lb, d) = bernoulli_logit(y, eta);
            lp += lb;
            gx[io] += d;
            if let Some((sigma, z)) = self.groups {
                let (so, zo) = (l.off(sigma), l.off(z) + g);
                gx[so] += d * x[zo];
                gx[zo] += d * x[so];
            }
        }
        lp
    }
}
