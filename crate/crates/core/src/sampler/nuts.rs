//! One NUTS transition: multinomial sampling over a doubling trajectory with
//! the generalised no-U-turn check, on a diagonal metric.

use crate::dist::{log_sum_exp, standard_normal, uniform01};
use crate::models::ModelGraph;
use crate::rng::StreamRng;

/// Energy error beyond which a trajectory counts as divergent.
const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone)]
pub(crate) struct State {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub lp: f64,
}

pub(crate) struct Hamiltonian<'a> {
    pub graph: &'a ModelGraph,
    /// Diagonal of the inverse mass matrix.
    pub inv_metric: Vec<f64>,
}

impl Hamiltonian<'_> {
    pub fn state(&self, q: Vec<f64>) -> State {
        let mut grad = vec![0.0; q.len()];
        let lp = self.graph.log_posterior_into(&q, &mut grad);
        State { p: vec![0.0; q.len()], q, grad, lp }
    }

    pub fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
    }

    pub fn energy(&self, z: &State) -> f64 {
        let h = -z.lp + self.kinetic(&z.p);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn velocity(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(p, m)| p * m).collect()
    }

    pub fn sample_momentum(&self, z: &mut State, rng: &mut StreamRng) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            *p = standard_normal(rng) / m.sqrt();
        }
    }

    pub fn leapfrog(&self, z: &mut State, eps: f64) {
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        z.lp = self.graph.log_posterior_into(&z.q, &mut z.grad);
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
    }
}

fn no_u_turn(ps_minus: &[f64], ps_plus: &[f64], rho: &[f64]) -> bool {
    dot(ps_plus, rho) > 0.0 && dot(ps_minus, rho) > 0.0
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| a + b).collect()
}

/// Summary of a finished transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionStats {
    pub accept_stat: f64,
    pub depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    pub energy: f64,
}

struct Subtree {
    log_weight: f64,
    sample: State,
    rho: Vec<f64>,
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
    ps_beg: Vec<f64>,
    ps_end: Vec<f64>,
}

struct Walk<'a, 'b> {
    ham: &'a Hamiltonian<'b>,
    eps: f64,
    h0: f64,
    n_leapfrog: usize,
    sum_metro: f64,
    divergent: bool,
}

impl Walk<'_, '_> {
    /// Extends `edge` by 2^depth steps in `sign` direction. `None` when the
    /// subtree diverged or turned back on itself.
    fn build(&mut self, depth: usize, edge: &mut State, sign: f64, rng: &mut StreamRng) -> Option<Subtree> {
        if depth == 0 {
            self.ham.leapfrog(edge, sign * self.eps);
            self.n_leapfrog += 1;
            let h = self.ham.energy(edge);
            if h - self.h0 > MAX_DELTA_H {
                self.divergent = true;
            }
            let w = self.h0 - h;
            self.sum_metro += if w > 0.0 { 1.0 } else { w.exp() };
            if self.divergent {
                return None;
            }
            let ps = self.ham.velocity(&edge.p);
            return Some(Subtree {
                log_weight: w,
                sample: edge.clone(),
                rho: edge.p.clone(),
                p_beg: edge.p.clone(),
                p_end: edge.p.clone(),
                ps_beg: ps.clone(),
                ps_end: ps,
            });
        }
        let init = self.build(depth - 1, edge, sign, rng)?;
        let fin = self.build(depth - 1, edge, sign, rng)?;
        let log_weight = log_sum_exp(&[init.log_weight, fin.log_weight]);
        let take_final = uniform01(rng) < (fin.log_weight - log_weight).exp();
        let rho = add(&init.rho, &fin.rho);
        let ok = no_u_turn(&init.ps_beg, &fin.ps_end, &rho)
            && no_u_turn(&init.ps_beg, &fin.ps_beg, &add(&init.rho, &fin.p_beg))
            && no_u_turn(&init.ps_end, &fin.ps_end, &add(&fin.rho, &init.p_end));
        if !ok {
            return None;
        }
        Some(Subtree {
            log_weight,
            sample: if take_final { fin.sample } else { init.sample },
            rho,
            p_beg: init.p_beg,
            p_end: fin.p_end,
            ps_beg: init.ps_beg,
            ps_end: fin.ps_end,
        })
    }
}

/// Draws a fresh momentum and returns the next state.
pub(crate) fn transition(
    ham: &Hamiltonian<'_>,
    current: &State,
    eps: f64,
    max_depth: usize,
    rng: &mut StreamRng,
) -> (State, TransitionStats) {
    let mut z = current.clone();
    ham.sample_momentum(&mut z, rng);
    let h0 = ham.energy(&z);
    let mut fwd = z.clone();
    let mut bck = z.clone();
    let mut sample = z.clone();
    let ps0 = ham.velocity(&z.p);
    // momenta and velocities at the inner and outer ends of both halves
    let (mut p_fwd_bck, mut p_bck_fwd) = (z.p.clone(), z.p.clone());
    let (mut ps_fwd_bck, mut ps_fwd_fwd, mut ps_bck_fwd, mut ps_bck_bck) =
        (ps0.clone(), ps0.clone(), ps0.clone(), ps0);
    let mut rho = z.p.clone();
    let mut log_weight = 0.0;
    let mut depth = 0;
    let mut walk = Walk { ham, eps, h0, n_leapfrog: 0, sum_metro: 0.0, divergent: false };

    while depth < max_depth {
        let forward = uniform01(rng) > 0.5;
        let (rho_fwd, rho_bck, sub);
        if forward {
            rho_bck = rho.clone();
            p_bck_fwd = p_fwd_bck.clone();
            ps_bck_fwd = ps_fwd_bck.clone();
            let Some(t) = walk.build(depth, &mut fwd, 1.0, rng) else { break };
            p_fwd_bck = t.p_beg.clone();
            ps_fwd_bck = t.ps_beg.clone();
            ps_fwd_fwd = t.ps_end.clone();
            rho_fwd = t.rho.clone();
            sub = t;
        } else {
            rho_fwd = rho.clone();
            p_fwd_bck = p_bck_fwd.clone();
            ps_fwd_bck = ps_bck_fwd.clone();
            let Some(t) = walk.build(depth, &mut bck, -1.0, rng) else { break };
            p_bck_fwd = t.p_beg.clone();
            ps_bck_fwd = t.ps_beg.clone();
            ps_bck_bck = t.ps_end.clone();
            rho_bck = t.rho.clone();
            sub = t;
        }
        depth += 1;
        if sub.log_weight > log_weight || uniform01(rng) < (sub.log_weight - log_weight).exp() {
            sample = sub.sample;
        }
        log_weight = log_sum_exp(&[log_weight, sub.log_weight]);
        rho = add(&rho_bck, &rho_fwd);
        let ok = no_u_turn(&ps_bck_bck, &ps_fwd_fwd, &rho)
            && no_u_turn(&ps_bck_bck, &ps_fwd_bck, &add(&rho_bck, &p_fwd_bck))
            && no_u_turn(&ps_bck_fwd, &ps_fwd_fwd, &add(&rho_fwd, &p_bck_fwd));
        if !ok {
            break;
        }
    }
    let stats = TransitionStats {
        accept_stat: if walk.n_leapfrog > 0 { walk.sum_metro / walk.n_leapfrog as f64 } else { 0.0 },
        depth,
        n_leapfrog: walk.n_leapfrog,
        divergent: walk.divergent,
        energy: ham.energy(&sample),
    };
    (sample, stats)
}

/// Heuristic initial step size: double or halve until the one-step
/// acceptance crosses 0.8.
pub(crate) fn init_step_size(ham: &Hamiltonian<'_>, z: &State, eps: f64, rng: &mut StreamRng) -> f64 {
    let mut eps = eps;
    let mut direction = 0.0;
    loop {
        let mut y = z.clone();
        ham.sample_momentum(&mut y, rng);
        let h0 = ham.energy(&y);
        ham.leapfrog(&mut y, eps);
        let delta = h0 - ham.energy(&y);
        let up = delta > 0.8f64.ln();
        if direction == 0.0 {
            direction = if up { 1.0 } else { -1.0 };
        } else if (direction > 0.0) != up {
            return eps;
        }
        eps = if direction > 0.0 { 2.0 * eps } else { 0.5 * eps };
        if !(1e-12..=1e7).contains(&eps) {
            return eps.clamp(1e-12, 1e7);
        }
    }
}
