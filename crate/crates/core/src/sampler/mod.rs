//! No-U-Turn sampling of a model graph: warmup with step-size and diagonal
//! metric adaptation, independent chains run in parallel, and the retained
//! draws returned on the constrained scale.

mod adapt;
pub mod diagnostics;
mod drawset;
mod nuts;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diagnostics::{DiagnosticsReport, ParamSummary, Thresholds};
pub use drawset::{BlockMeta, ChainStats, DrawMeta, DrawSet};
pub use nuts::TransitionStats;

use crate::dist::uniform01;
use crate::models::ModelGraph;
use crate::rng::StreamKey;
use adapt::{DualAveraging, Welford, Windows};
use nuts::{init_step_size, transition, Hamiltonian};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("model {0} has no parameters")]
    EmptyModel(String),
    #[error("chain {chain}: no finite starting point after {attempts} attempts")]
    InitializationFailed { chain: usize, attempts: usize },
    #[error("chain {chain}: non-finite gradient at {coordinate}")]
    NonFiniteGradient { chain: usize, coordinate: String },
    #[error("diagnostics need at least 2 chains of 4 draws, got {chains} x {draws}")]
    TooFewDraws { chains: usize, draws: usize },
    #[error("draw file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup_iters: usize,
    pub sampling_iters: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
    pub init_radius: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup_iters: 1000,
            sampling_iters: 1000,
            target_accept: 0.8,
            max_tree_depth: 10,
            seed: 1,
            init_radius: 2.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::InvalidConfig(m.to_string()));
        if self.chains < 1 {
            return bad("chains must be at least 1");
        }
        if self.sampling_iters < 1 {
            return bad("sampling_iters must be at least 1");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if self.max_tree_depth < 1 {
            return bad("max_tree_depth must be at least 1");
        }
        if !(self.init_radius > 0.0 && self.init_radius.is_finite()) {
            return bad("init_radius must be positive");
        }
        Ok(())
    }
}

const MAX_INIT_ATTEMPTS: usize = 100;

struct ChainOutput {
    draws: Vec<f64>,
    stats: ChainStats,
}

/// Runs all chains and returns the retained draws. Output depends only on
/// the graph and the configuration, not on thread scheduling.
pub fn run(graph: &ModelGraph, config: &SamplerConfig) -> Result<DrawSet, SamplerError> {
    config.validate()?;
    if graph.dim() == 0 {
        return Err(SamplerError::EmptyModel(graph.name.clone()));
    }
    let outputs: Vec<ChainOutput> =
        (0..config.chains).into_par_iter().map(|c| run_chain(graph, config, c)).collect::<Result<_, _>>()?;
    let mut values = Vec::with_capacity(config.chains * config.sampling_iters * graph.layout.dim());
    let mut stats = Vec::new();
    for o in outputs {
        values.extend(o.draws);
        stats.push(o.stats);
    }
    let mut set = DrawSet::new(
        graph.name.clone(),
        graph.source,
        &graph.layout,
        graph.labels.clone(),
        config.chains,
        config.sampling_iters,
        values,
    );
    set.meta.chain_stats = stats;
    if config.chains >= 2 && config.sampling_iters >= 4 {
        set.meta.diagnostics = Some(set.diagnose(Thresholds::default())?);
    }
    Ok(set)
}

fn initial_point(graph: &ModelGraph, config: &SamplerConfig, chain: usize) -> Result<Vec<f64>, SamplerError> {
    let mut rng = StreamKey::new(config.seed).path(&[chain as u64, 0]).rng();
    let r = config.init_radius;
    let mut grad = vec![0.0; graph.dim()];
    for _ in 0..MAX_INIT_ATTEMPTS {
        let q: Vec<f64> = (0..graph.dim()).map(|_| r * (2.0 * uniform01(&mut rng) - 1.0)).collect();
        let lp = graph.log_posterior_into(&q, &mut grad);
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(q);
        }
    }
    Err(SamplerError::InitializationFailed { chain, attempts: MAX_INIT_ATTEMPTS })
}

fn run_chain(graph: &ModelGraph, config: &SamplerConfig, chain: usize) -> Result<ChainOutput, SamplerError> {
    let q = initial_point(graph, config, chain)?;
    let mut rng = StreamKey::new(config.seed).path(&[chain as u64, 1]).rng();
    let mut ham = Hamiltonian { graph, inv_metric: vec![1.0; graph.dim()] };
    let mut z = ham.state(q);
    let mut eps = init_step_size(&ham, &z, 1.0, &mut rng);
    let mut da = DualAveraging::new(config.target_accept, eps);
    let mut windows = Windows::new(config.warmup_iters);
    let mut welford = Welford::new(graph.dim());
    let mut stats = ChainStats::default();
    let non_finite = |z: &nuts::State| -> Option<SamplerError> {
        let i = z.grad.iter().position(|g| !g.is_finite())?;
        let coordinate = free_coordinate_name(graph, i).unwrap_or_else(|| format!("free[{i}]"));
        Some(SamplerError::NonFiniteGradient { chain, coordinate })
    };

    for i in 0..config.warmup_iters {
        let (next, st) = transition(&ham, &z, eps, config.max_tree_depth, &mut rng);
        z = next;
        if let Some(e) = non_finite(&z) {
            return Err(e);
        }
        stats.warmup_divergences += st.divergent as usize;
        eps = da.update(st.accept_stat);
        if windows.collecting(i) {
            welford.add(&z.q);
        }
        if windows.closes(i) {
            ham.inv_metric = welford.regularized();
            welford = Welford::new(graph.dim());
            eps = init_step_size(&ham, &z, eps, &mut rng);
            da.restart(eps);
        }
    }
    if config.warmup_iters > 0 {
        eps = da.final_step();
    }

    let mut draws = Vec::with_capacity(config.sampling_iters * graph.layout.dim());
    let mut accept = 0.0;
    let mut depth = 0.0;
    for _ in 0..config.sampling_iters {
        let (next, st) = transition(&ham, &z, eps, config.max_tree_depth, &mut rng);
        z = next;
        if let Some(e) = non_finite(&z) {
            return Err(e);
        }
        stats.divergences += st.divergent as usize;
        stats.n_leapfrog += st.n_leapfrog;
        stats.max_depth_hits += (st.depth >= config.max_tree_depth) as usize;
        accept += st.accept_stat;
        depth += st.depth as f64;
        let x = graph.constrain(&z.q);
        debug_assert!(graph.layout.check(&x).is_ok(), "draw violates its constraints");
        draws.extend(x);
    }
    let n = config.sampling_iters as f64;
    stats.step_size = eps;
    stats.inv_metric = ham.inv_metric;
    stats.mean_accept = accept / n;
    stats.mean_tree_depth = depth / n;
    Ok(ChainOutput { draws, stats })
}

/// Block-qualified name of unconstrained coordinate `i`.
fn free_coordinate_name(graph: &ModelGraph, i: usize) -> Option<String> {
    let b = graph.layout.blocks().iter().find(|b| (b.offset..b.offset + b.free_len).contains(&i))?;
    Some(format!("{} (free coordinate {})", b.name, i - b.offset + 1))
}
