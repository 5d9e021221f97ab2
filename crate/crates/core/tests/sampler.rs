use std::collections::BTreeMap;

use aggrex_core::models::{Density, Layout, ModelGraph, Source};
use aggrex_core::sampler::{run, DrawSet, SamplerConfig, SamplerError, Thresholds};
use aggrex_core::transforms::Constraint;
use statrs::distribution::{ContinuousCDF, Normal};

/// Multivariate Normal with the given precision matrix and mean.
struct Gaussian {
    mean: Vec<f64>,
    precision: Vec<Vec<f64>>,
}

impl Density for Gaussian {
    fn log_density(&self, x: &[f64], grad: &mut [f64], _likelihood: bool) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        let mut lp = 0.0;
        for i in 0..d.len() {
            let row: f64 = self.precision[i].iter().zip(&d).map(|(p, v)| p * v).sum();
            grad[i] -= row;
            lp -= 0.5 * d[i] * row;
        }
        lp
    }
}

fn gaussian_graph(mean: Vec<f64>, precision: Vec<Vec<f64>>) -> ModelGraph {
    let mut layout = Layout::default();
    layout.add("x", vec![mean.len()], Constraint::None);
    ModelGraph::new("toy", Source::Food, layout, BTreeMap::new(), Box::new(Gaussian { mean, precision }))
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn config(seed: u64) -> SamplerConfig {
    SamplerConfig { seed, ..Default::default() }
}

fn column(set: &DrawSet, c: usize) -> Vec<f64> {
    (0..set.len()).map(|j| set.draw(j)[c]).collect()
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn standard_normal_in_ten_dimensions() {
    let set = run(&gaussian_graph(vec![0.0; 10], identity(10)), &config(11)).unwrap();
    assert_eq!(set.len(), 4000);
    for c in 0..10 {
        let (m, v) = moments(&column(&set, c));
        assert!(m.abs() < 0.05, "mean {m}");
        assert!((v - 1.0).abs() < 0.1, "variance {v}");
    }
    let d = set.meta.diagnostics.as_ref().unwrap();
    assert!(d.max_rhat() < 1.01, "{}", d.render());
    let div: usize = set.meta.chain_stats.iter().map(|s| s.divergences).sum();
    assert!((div as f64) < 0.01 * 4000.0);
}

#[test]
fn conjugate_normal_posterior() {
    // prior N(0, 1), one observation y = 2 with sd 1: posterior N(1, 1/2)
    let set = run(&gaussian_graph(vec![1.0], vec![vec![2.0]]), &config(12)).unwrap();
    let x = column(&set, 0);
    let (m, v) = moments(&x);
    let d = &set.meta.diagnostics.as_ref().unwrap().params[0];
    let mcse_sd = (v.sqrt()) / (2.0 * d.ess_bulk).sqrt();
    assert!((m - 1.0).abs() < 3.0 * d.mcse, "mean {m} mcse {}", d.mcse);
    assert!((v.sqrt() - 0.5f64.sqrt()).abs() < 3.0 * mcse_sd, "sd {}", v.sqrt());
    assert!(d.rhat < 1.01);
}

#[test]
fn correlated_pair() {
    let rho: f64 = 0.95;
    let det = 1.0 - rho * rho;
    let prec = vec![vec![1.0 / det, -rho / det], vec![-rho / det, 1.0 / det]];
    let set = run(&gaussian_graph(vec![0.0, 0.0], prec), &config(13)).unwrap();
    let (a, b) = (column(&set, 0), column(&set, 1));
    let (ma, va) = moments(&a);
    let (mb, vb) = moments(&b);
    let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0);
    let r = cov / (va * vb).sqrt();
    assert!((r - rho).abs() < 0.02, "{r}");
}

#[test]
fn ks_against_the_true_cdf() {
    let cfg = SamplerConfig { chains: 4, sampling_iters: 10_000, ..config(14) };
    let set = run(&gaussian_graph(vec![0.0], identity(1)), &cfg).unwrap();
    // thin by 4 to 10^4 draws
    let mut x: Vec<f64> = column(&set, 0).into_iter().step_by(4).collect();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let std = Normal::new(0.0, 1.0).unwrap();
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = std.cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value 1.628 / sqrt(n)
    assert!(d < 1.628 / n.sqrt(), "D = {d}");
}

#[test]
fn same_seed_same_draws() {
    let g = gaussian_graph(vec![0.5; 3], identity(3));
    let cfg = SamplerConfig { warmup_iters: 200, sampling_iters: 100, ..config(15) };
    let a = run(&g, &cfg).unwrap();
    let b = run(&g, &cfg).unwrap();
    assert_eq!(a, b);
    let c = run(&g, &SamplerConfig { seed: 16, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn chain_order_does_not_change_pooled_diagnostics() {
    let g = gaussian_graph(vec![0.0; 2], identity(2));
    let cfg = SamplerConfig { warmup_iters: 200, sampling_iters: 200, ..config(17) };
    let set = run(&g, &cfg).unwrap();
    let d = set.diagnose(Thresholds::default()).unwrap();
    // rebuild with chains reversed
    let mut values = Vec::new();
    for c in (0..4).rev() {
        for i in 0..200 {
            values.extend_from_slice(set.draw(c * 200 + i));
        }
    }
    let mut layout = Layout::default();
    layout.add("x", vec![2], Constraint::None);
    let rev = DrawSet::new("toy", Source::Food, &layout, BTreeMap::new(), 4, 200, values);
    let e = rev.diagnose(Thresholds::default()).unwrap();
    for (p, q) in d.params.iter().zip(&e.params) {
        assert!((p.rhat - q.rhat).abs() < 1e-12);
        assert!((p.ess_bulk - q.ess_bulk).abs() < 1e-9 * p.ess_bulk);
        assert!((p.mean - q.mean).abs() < 1e-12);
    }
}

#[test]
fn constrained_blocks_stay_valid_and_round_trip() {
    struct Flat;
    impl Density for Flat {
        fn log_density(&self, x: &[f64], grad: &mut [f64], _: bool) -> f64 {
            // weak Normal on the positive entry keeps the target proper
            grad[0] -= x[0];
            -0.5 * x[0] * x[0]
        }
    }
    let mut layout = Layout::default();
    layout.add("s", vec![], Constraint::Positive);
    layout.add("theta", vec![3], Constraint::Simplex);
    layout.add("l", vec![3, 3], Constraint::CorrelationCholesky);
    let g = ModelGraph::new("flat", Source::Supplements, layout.clone(), BTreeMap::new(), Box::new(Flat));
    let cfg = SamplerConfig { warmup_iters: 150, sampling_iters: 50, chains: 2, ..config(18) };
    let set = run(&g, &cfg).unwrap();
    for j in 0..set.len() {
        let x = set.draw(j);
        assert!(layout.check(x).is_ok());
        assert!((x[1] + x[2] + x[3] - 1.0).abs() < 1e-12);
    }
    let dir = tempfile::tempdir().unwrap();
    set.save(dir.path()).unwrap();
    let back = DrawSet::load(dir.path(), "flat").unwrap();
    // NaN statistics of constant columns compare unequal, so compare pieces
    assert_eq!(back.columns, set.columns);
    for j in 0..set.len() {
        assert_eq!(back.draw(j), set.draw(j));
    }
    assert_eq!(serde_json::to_string(&back.meta).unwrap(), serde_json::to_string(&set.meta).unwrap());
    assert_eq!(DrawSet::load_dir(dir.path()).unwrap().len(), 1);
    // diagonal of the correlation factor head is structural, not a failure
    let d = set.meta.diagnostics.as_ref().unwrap();
    assert!(d.params.iter().any(|p| p.structural && p.constant));
}

#[test]
fn bad_configs_and_unstartable_models() {
    let g = gaussian_graph(vec![0.0], identity(1));
    assert!(matches!(
        run(&g, &SamplerConfig { max_tree_depth: 0, ..config(1) }),
        Err(SamplerError::InvalidConfig(_))
    ));
    assert!(matches!(run(&g, &SamplerConfig { sampling_iters: 0, ..config(1) }), Err(SamplerError::InvalidConfig(_))));

    struct Nowhere;
    impl Density for Nowhere {
        fn log_density(&self, _: &[f64], _: &mut [f64], _: bool) -> f64 {
            f64::NEG_INFINITY
        }
    }
    let mut layout = Layout::default();
    layout.add("x", vec![], Constraint::None);
    let g = ModelGraph::new("none", Source::Food, layout, BTreeMap::new(), Box::new(Nowhere));
    assert!(matches!(run(&g, &config(1)), Err(SamplerError::InitializationFailed { attempts: 100, .. })));
}
