//! Box-Cox, logistic and the unconstraining transforms used for sampling.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("Box-Cox input must be positive, got {0}")]
    NonPositiveInput(f64),
    #[error("Box-Cox zero threshold must be positive, got {0}")]
    InvalidThreshold(f64),
}

pub const DEFAULT_ZERO_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxCoxLambda {
    value: f64,
    zero_threshold: f64,
}

impl BoxCoxLambda {
    pub fn new(value: f64) -> Self {
        Self { value, zero_threshold: DEFAULT_ZERO_THRESHOLD }
    }

    pub fn with_threshold(value: f64, zero_threshold: f64) -> Result<Self, TransformError> {
        if !(zero_threshold > 0.0) {
            return Err(TransformError::InvalidThreshold(zero_threshold));
        }
        Ok(Self { value, zero_threshold })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_log(&self) -> bool {
        self.value.abs() <= self.zero_threshold
    }
}

/// Counts back-transforms that fell outside the Box-Cox domain and were set to 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClampCounter(pub u64);

impl ClampCounter {
    pub fn merge(&mut self, other: ClampCounter) {
        self.0 += other.0;
    }
}

pub fn boxcox_forward(y: f64, lambda: BoxCoxLambda) -> Result<f64, TransformError> {
    if !(y > 0.0) {
        return Err(TransformError::NonPositiveInput(y));
    }
    if lambda.is_log() {
        Ok(y.ln())
    } else {
        Ok((lambda.value * y.ln()).exp_m1() / lambda.value)
    }
}

pub fn boxcox_inverse(f: f64, lambda: BoxCoxLambda, clamps: &mut ClampCounter) -> f64 {
    if lambda.is_log() {
        return f.exp();
    }
    let base = lambda.value * f + 1.0;
    if base > 0.0 {
        base.powf(1.0 / lambda.value)
    } else {
        clamps.0 += 1;
        0.0
    }
}

/// Box-Cox of `exp(ln_y)` together with its derivatives in λ and in `ln_y`.
/// Used by the likelihoods, where λ is a sampled parameter and must stay
/// smooth through zero.
pub fn boxcox_log_input(ln_y: f64, lambda: f64) -> (f64, f64, f64) {
    let t = lambda * ln_y;
    let d_ln_y = t.exp();
    if t.abs() < 1e-3 {
        // f = sum_{n>=1} lambda^(n-1) L^n / n!
        let l = ln_y;
        let l2 = l * l;
        let l3 = l2 * l;
        let l4 = l3 * l;
        let l5 = l4 * l;
        let f = l + lambda * l2 / 2.0 + lambda * lambda * l3 / 6.0 + lambda.powi(3) * l4 / 24.0 + lambda.powi(4) * l5 / 120.0;
        let df = l2 / 2.0 + 2.0 * lambda * l3 / 6.0 + 3.0 * lambda * lambda * l4 / 24.0 + 4.0 * lambda.powi(3) * l5 / 120.0;
        return (f, df, d_ln_y);
    }
    let em1 = t.exp_m1();
    let f = em1 / lambda;
    let df = (ln_y * d_ln_y * lambda - em1) / (lambda * lambda);
    (f, df, d_ln_y)
}

pub fn logit_inverse(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// ln(1 + e^x) without overflow.
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// ln(logit_inverse(x)).
pub fn log_inv_logit(x: f64) -> f64 {
    -log1p_exp(-x)
}

/// Support of a parameter block and how it maps to the unconstrained scale.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    None,
    Positive,
    Bounded { lo: f64, hi: f64 },
    /// K entries summing to one, K-1 free coordinates.
    Simplex,
    /// Cholesky factor of a KxK correlation matrix, stored row-major as K*K
    /// entries with K(K-1)/2 free coordinates.
    CorrelationCholesky,
    /// Strictly increasing entries.
    Ordered,
}

impl Constraint {
    /// Number of free coordinates for a block with `n` constrained entries.
    pub fn free_len(&self, n: usize) -> usize {
        match self {
            Constraint::Simplex => n.saturating_sub(1),
            Constraint::CorrelationCholesky => {
                let k = corr_dim(n);
                k * (k - 1) / 2
            }
            _ => n,
        }
    }

    /// Maps free coordinates `u` to constrained values `x`; returns ln|Jacobian|.
    pub fn constrain(&self, u: &[f64], x: &mut [f64]) -> f64 {
        match *self {
            Constraint::None => {
                x.copy_from_slice(u);
                0.0
            }
            Constraint::Positive => {
                for (xi, &ui) in x.iter_mut().zip(u) {
                    *xi = ui.exp();
                }
                u.iter().sum()
            }
            Constraint::Bounded { lo, hi } => {
                let w = hi - lo;
                let mut lj = 0.0;
                for (xi, &ui) in x.iter_mut().zip(u) {
                    *xi = lo + w * logit_inverse(ui);
                    lj += w.ln() + log_inv_logit(ui) + log_inv_logit(-ui);
                }
                lj
            }
            Constraint::Simplex => simplex_constrain(u, x),
            Constraint::CorrelationCholesky => corr_cholesky_constrain(u, x),
            Constraint::Ordered => {
                let mut lj = 0.0;
                for k in 0..u.len() {
                    x[k] = if k == 0 {
                        u[0]
                    } else {
                        lj += u[k];
                        x[k - 1] + u[k].exp()
                    };
                }
                lj
            }
        }
    }

    /// Adds to `gu` the gradient with respect to `u` of
    /// `(target as a function of x) + ln|Jacobian|`, given `gx` = d target / dx.
    pub fn backprop(&self, u: &[f64], x: &[f64], gx: &[f64], gu: &mut [f64]) {
        match *self {
            Constraint::None => {
                for (g, &d) in gu.iter_mut().zip(gx) {
                    *g += d;
                }
            }
            Constraint::Positive => {
                for i in 0..u.len() {
                    gu[i] += gx[i] * x[i] + 1.0;
                }
            }
            Constraint::Bounded { lo, hi } => {
                let w = hi - lo;
                for i in 0..u.len() {
                    let s = logit_inverse(u[i]);
                    gu[i] += gx[i] * w * s * (1.0 - s) + 1.0 - 2.0 * s;
                }
            }
            Constraint::Simplex => simplex_backprop(u, gx, gu),
            Constraint::CorrelationCholesky => corr_cholesky_backprop(u, x, gx, gu),
            Constraint::Ordered => {
                let mut tail = 0.0;
                for k in (0..u.len()).rev() {
                    tail += gx[k];
                    gu[k] += if k == 0 { tail } else { tail * u[k].exp() + 1.0 };
                }
            }
        }
    }

    /// Inverse of [`constrain`](Self::constrain).
    pub fn unconstrain(&self, x: &[f64], u: &mut [f64]) {
        match *self {
            Constraint::None => u.copy_from_slice(x),
            Constraint::Positive => {
                for (ui, &xi) in u.iter_mut().zip(x) {
                    *ui = xi.ln();
                }
            }
            Constraint::Bounded { lo, hi } => {
                for (ui, &xi) in u.iter_mut().zip(x) {
                    *ui = logit((xi - lo) / (hi - lo));
                }
            }
            Constraint::Simplex => {
                let k = x.len();
                let mut stick = 1.0;
                for i in 0..k - 1 {
                    let z = x[i] / stick;
                    u[i] = logit(z) + ((k - i - 1) as f64).ln();
                    stick -= x[i];
                }
            }
            Constraint::CorrelationCholesky => {
                let k = corr_dim(x.len());
                let mut idx = 0;
                for i in 1..k {
                    let mut sum_sq = 0.0f64;
                    for j in 0..i {
                        let l = x[i * k + j];
                        let z = l / (1.0 - sum_sq).sqrt();
                        u[idx] = z.atanh();
                        sum_sq += l * l;
                        idx += 1;
                    }
                }
            }
            Constraint::Ordered => {
                for k in 0..x.len() {
                    u[k] = if k == 0 { x[0] } else { (x[k] - x[k - 1]).ln() };
                }
            }
        }
    }

    /// Whether `x` lies in the constrained space.
    pub fn check(&self, x: &[f64]) -> bool {
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match *self {
            Constraint::None => true,
            Constraint::Positive => x.iter().all(|&v| v > 0.0),
            Constraint::Bounded { lo, hi } => x.iter().all(|&v| v >= lo && v <= hi),
            Constraint::Simplex => x.iter().all(|&v| v >= 0.0) && (x.iter().sum::<f64>() - 1.0).abs() <= 1e-12,
            Constraint::CorrelationCholesky => {
                let k = corr_dim(x.len());
                (0..k).all(|i| {
                    let row = &x[i * k..(i + 1) * k];
                    let norm: f64 = row.iter().map(|v| v * v).sum();
                    (norm - 1.0).abs() < 1e-10 && row[i] > 0.0 && row[i + 1..].iter().all(|&v| v == 0.0)
                })
            }
            Constraint::Ordered => x.windows(2).all(|w| w[0] < w[1]),
        }
    }
}

/// Side length K of a K*K correlation factor stored in `n` entries.
pub fn corr_dim(n: usize) -> usize {
    let k = (n as f64).sqrt().round() as usize;
    assert_eq!(k * k, n, "correlation factor needs a square entry count, got {n}");
    k
}

fn simplex_constrain(u: &[f64], x: &mut [f64]) -> f64 {
    let k = x.len();
    let mut stick = 1.0f64;
    let mut lj = 0.0;
    for i in 0..k - 1 {
        let adj = u[i] - ((k - i - 1) as f64).ln();
        let z = logit_inverse(adj);
        lj += stick.ln() + log_inv_logit(adj) + log_inv_logit(-adj);
        x[i] = stick * z;
        stick -= x[i];
    }
    x[k - 1] = stick.max(0.0);
    lj
}

fn simplex_backprop(u: &[f64], gx: &[f64], gu: &mut [f64]) {
    let k = gx.len();
    let mut sticks = Vec::with_capacity(k);
    let mut zs = Vec::with_capacity(k - 1);
    let mut stick = 1.0f64;
    for i in 0..k - 1 {
        let z = logit_inverse(u[i] - ((k - i - 1) as f64).ln());
        sticks.push(stick);
        zs.push(z);
        stick *= 1.0 - z;
    }
    let mut g_stick = gx[k - 1];
    for i in (0..k - 1).rev() {
        let (s, z) = (sticks[i], zs[i]);
        let gz = (gx[i] - g_stick) * s;
        gu[i] += gz * z * (1.0 - z) + 1.0 - 2.0 * z;
        g_stick = gx[i] * z + g_stick * (1.0 - z) + 1.0 / s;
    }
}

fn corr_cholesky_constrain(u: &[f64], x: &mut [f64]) -> f64 {
    let k = corr_dim(x.len());
    x.fill(0.0);
    x[0] = 1.0;
    let mut lj = 0.0;
    let mut idx = 0;
    for i in 1..k {
        let mut sum_sq = 0.0f64;
        for j in 0..i {
            let y = u[idx];
            let z = y.tanh();
            // ln(1 - tanh^2 y), stable for large |y|
            lj += 2.0 * (std::f64::consts::LN_2 - y.abs() - (-2.0 * y.abs()).exp().ln_1p());
            lj += 0.5 * (1.0 - sum_sq).ln();
            let l = z * (1.0 - sum_sq).sqrt();
            x[i * k + j] = l;
            sum_sq += l * l;
            idx += 1;
        }
        x[i * k + i] = (1.0 - sum_sq).max(0.0).sqrt();
    }
    lj
}

fn corr_cholesky_backprop(u: &[f64], x: &[f64], gx: &[f64], gu: &mut [f64]) {
    let k = corr_dim(x.len());
    let mut start = 0;
    for i in 1..k {
        // prefix sums s_j before element j of row i
        let mut s = Vec::with_capacity(i + 1);
        s.push(0.0);
        for j in 0..i {
            let l = x[i * k + j];
            s.push(s[j] + l * l);
        }
        let l_ii = x[i * k + i];
        let mut gs = if l_ii > 0.0 { -0.5 * gx[i * k + i] / l_ii } else { 0.0 };
        for j in (0..i).rev() {
            let l = x[i * k + j];
            let w = (1.0 - s[j]).sqrt();
            let z = u[start + j].tanh();
            let gl = gx[i * k + j] + gs * 2.0 * l;
            let gz = gl * w;
            let gw = gl * z;
            gs += -0.5 * gw / w - 0.5 / (1.0 - s[j]);
            gu[start + j] += gz * (1.0 - z * z) - 2.0 * z;
        }
        start += i;
    }
}
