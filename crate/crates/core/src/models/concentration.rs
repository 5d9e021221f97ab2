//! Food concentrations: Gamma observations whose median varies over the
//! category tree. The log median of a node is the root effect plus
//! partially pooled offsets of every node on its path; nodes without data
//! below them carry no offset and inherit their parent's median. Reported
//! standard errors add a Normal measurement layer around a latent true value.

use std::collections::BTreeMap;

use statrs::function::gamma::{digamma, ln_gamma};

use super::{half_normal_prior, normal, normal_prior, BlockId, Constraint, Density, Layout, ModelError, ModelGraph, Source};
use crate::data::{CategoryTree, ConcentrationObservation};
use crate::special::gamma_median_with_grad;

pub const NAME: &str = "food_concentration";

/// Support of the Gamma shape; outside it the density is treated as zero.
pub const SHAPE_RANGE: [f64; 2] = [0.01, 1e6];

#[derive(Debug)]
struct Obs {
    /// Offset indices on the path from the root.
    path: Vec<usize>,
    value: f64,
    /// Latent index and standard error when measurement error is reported.
    latent: Option<(usize, f64)>,
}

#[derive(Debug)]
struct ConcentrationDensity {
    layout: Layout,
    obs: Vec<Obs>,
    /// Depth slot (level - 2) of each offset node.
    node_level: Vec<usize>,
    root: BlockId,
    sigma_level: BlockId,
    offset_z: BlockId,
    shape: BlockId,
    true_value: BlockId,
}

pub fn build_food_concentration_graph(
    conc: &[ConcentrationObservation],
    tree: &CategoryTree,
    root: &str,
) -> Result<ModelGraph, ModelError> {
    let root_node = tree.get(root).ok_or_else(|| ModelError::EmptyTree(root.to_string()))?;
    let obs: Vec<&ConcentrationObservation> = conc.iter().filter(|o| tree.is_within(&o.category, root)).collect();
    if obs.is_empty() {
        return Err(ModelError::EmptyTree(root.to_string()));
    }
    // nodes below the root with at least one observation in their subtree, in tree order
    let offset_nodes: Vec<&str> = tree
        .nodes()
        .iter()
        .filter(|n| n.id != root_node.id && tree.is_within(&n.id, root))
        .filter(|n| obs.iter().any(|o| tree.is_within(&o.category, &n.id)))
        .map(|n| n.id.as_str())
        .collect();
    let max_level = tree.nodes().iter().filter(|n| tree.is_within(&n.id, root)).map(|n| n.level).max().unwrap();
    let depth = (max_level - root_node.level) as usize;
    let node_level: Vec<usize> =
        offset_nodes.iter().map(|id| (tree.get(id).unwrap().level - root_node.level - 1) as usize).collect();

    let mut n_latent = 0;
    let rows = obs
        .iter()
        .map(|o| {
            let path = tree
                .ancestry(&o.category)
                .iter()
                .filter_map(|a| offset_nodes.iter().position(|id| *id == a.id))
                .collect();
            let latent = match o.std_error {
                Some(se) if se > 0.0 => {
                    n_latent += 1;
                    Some((n_latent - 1, se))
                }
                _ => None,
            };
            Obs { path, value: o.value, latent }
        })
        .collect();

    let mut layout = Layout::default();
    let root_b = layout.add(format!("{NAME}.log_median_root"), vec![], Constraint::None);
    let sigma_level = layout.add(format!("{NAME}.sigma_level"), vec![depth], Constraint::Positive);
    let offset_z = layout.add(format!("{NAME}.offset_z"), vec![offset_nodes.len()], Constraint::None);
    let shape = layout.add(format!("{NAME}.shape"), vec![], Constraint::Positive);
    let true_value = layout.add(format!("{NAME}.true_value"), vec![n_latent], Constraint::Positive);

    let mut labels = BTreeMap::new();
    labels.insert("root".to_string(), vec![root.to_string()]);
    labels.insert("offset_nodes".to_string(), offset_nodes.iter().map(|s| s.to_string()).collect());
    labels.insert("offset_levels".to_string(), node_level.iter().map(|l| (l + 1).to_string()).collect());
    let density = ConcentrationDensity {
        layout: layout.clone(),
        obs: rows,
        node_level,
        root: root_b,
        sigma_level,
        offset_z,
        shape,
        true_value,
    };
    Ok(ModelGraph::new(NAME, Source::Food, layout, labels, Box::new(density)))
}

impl Density for ConcentrationDensity {
    fn log_density(&self, x: &[f64], gx: &mut [f64], likelihood: bool) -> f64 {
        let l = &self.layout;
        let mut lp = normal_prior(l, x, gx, self.root, 0.0, 5.0);
        lp += half_normal_prior(l, x, gx, self.sigma_level, 1.0);
        lp += normal_prior(l, x, gx, self.offset_z, 0.0, 1.0);
        let ko = l.off(self.shape);
        let k = x[ko];
        // the median solver underflows or crawls far out in the tails
        if !(SHAPE_RANGE[0]..=SHAPE_RANGE[1]).contains(&k) {
            return f64::NEG_INFINITY;
        }
        // ln shape ~ Normal(0, 1), as a density on the shape
        let (lk, dk) = normal(k.ln(), 0.0, 1.0);
        lp += lk - k.ln();
        gx[ko] += (dk - 1.0) / k;

        let (ro, so, zo, to) = (l.off(self.root), l.off(self.sigma_level), l.off(self.offset_z), l.off(self.true_value));
        let (q, dq) = gamma_median_with_grad(k);
        let (ln_q, dlnq) = (q.ln(), dq / q);
        let (lg_k, psi_k) = (ln_gamma(k), digamma(k));
        for o in &self.obs {
            if o.latent.is_none() && !likelihood {
                continue;
            }
            let mut ln_m = x[ro];
            for &p in &o.path {
                ln_m += x[so + self.node_level[p]] * x[zo + p];
            }
            let v = match o.latent {
                Some((j, _)) => x[to + j],
                None => o.value,
            };
            let ln_r = ln_q - ln_m;
            let r = ln_r.exp();
            lp += k * ln_r - lg_k + (k - 1.0) * v.ln() - r * v;
            let d_ln_m = -k + r * v;
            gx[ko] += ln_r + k * dlnq - psi_k + v.ln() - v * r * dlnq;
            gx[ro] += d_ln_m;
            for &p in &o.path {
                gx[so + self.node_level[p]] += d_ln_m * x[zo + p];
                gx[zo + p] += d_ln_m * x[so + self.node_level[p]];
            }
            if let Some((j, se)) = o.latent {
                gx[to + j] += (k - 1.0) / v - r;
                if likelihood {
                    let (lm, dv) = normal(o.value, v, se);
                    lp += lm;
                    gx[to + j] -= dv;
                }
            }
        }
        lp
    }
}
