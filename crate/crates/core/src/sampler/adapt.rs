//! Warmup adaptation: dual-averaging step size and windowed estimation of a
//! diagonal metric.

#[derive(Debug, Clone)]
pub(crate) struct DualAveraging {
    target: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

const GAMMA: f64 = 0.05;
const T0: f64 = 10.0;
const KAPPA: f64 = 0.75;

impl DualAveraging {
    pub fn new(target: f64, eps: f64) -> Self {
        Self { target, mu: (10.0 * eps).ln(), counter: 0.0, s_bar: 0.0, x_bar: 0.0 }
    }

    /// Restarts around a new initial step size.
    pub fn restart(&mut self, eps: f64) {
        *self = Self::new(self.target, eps);
    }

    /// Next step size given the acceptance statistic of the last transition.
    pub fn update(&mut self, accept: f64) -> f64 {
        self.counter += 1.0;
        let accept = accept.min(1.0);
        let eta = 1.0 / (self.counter + T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept);
        let x = self.mu - self.s_bar * self.counter.sqrt() / GAMMA;
        let w = self.counter.powf(-KAPPA);
        self.x_bar = (1.0 - w) * self.x_bar + w * x;
        x.exp()
    }

    /// Step size used after warmup.
    pub fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Running mean and variance.
#[derive(Debug, Clone)]
pub(crate) struct Welford {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(dim: usize) -> Self {
        Self { n: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn add(&mut self, q: &[f64]) {
        self.n += 1.0;
        for ((m, s), x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(q) {
            let d = x - *m;
            *m += d / self.n;
            *s += d * (x - *m);
        }
    }

    /// Variance shrunk towards 1e-3, as a diagonal inverse metric.
    pub fn regularized(&self) -> Vec<f64> {
        let n = self.n;
        self.m2
            .iter()
            .map(|s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

/// Warmup schedule: a fast initial interval (15%), slow windows that double
/// in length, and a fast terminal interval (10%).
#[derive(Debug, Clone)]
pub(crate) struct Windows {
    warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_end: usize,
    enabled: bool,
}

pub(crate) const BASE_WINDOW: usize = 25;

impl Windows {
    pub fn new(warmup: usize) -> Self {
        let init_buffer = (0.15 * warmup as f64) as usize;
        let term_buffer = (0.10 * warmup as f64) as usize;
        let base = BASE_WINDOW.min(warmup.saturating_sub(init_buffer + term_buffer));
        let enabled = warmup >= 20 && base > 0;
        let mut w = Self { warmup, init_buffer, term_buffer, window_size: base, next_end: 0, enabled };
        w.next_end = init_buffer + base;
        w.clamp_last();
        w
    }

    fn slow_end(&self) -> usize {
        self.warmup - self.term_buffer
    }

    fn clamp_last(&mut self) {
        // a window that would leave less than a doubled window before the
        // terminal interval absorbs the remainder
        if self.next_end + 2 * self.window_size >= self.slow_end() {
            self.next_end = self.slow_end();
        }
    }

    /// Whether iteration `i` (0-based) contributes to the metric estimate.
    pub fn collecting(&self, i: usize) -> bool {
        self.enabled && i >= self.init_buffer && i < self.slow_end()
    }

    /// Whether a slow window closes after iteration `i`; advances the
    /// schedule when it does.
    pub fn closes(&mut self, i: usize) -> bool {
        if !self.enabled || i + 1 != self.next_end {
            return false;
        }
        if self.next_end < self.slow_end() {
            self.window_size *= 2;
            self.next_end += self.window_size;
            self.clamp_last();
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ends(warmup: usize) -> Vec<usize> {
        let mut w = Windows::new(warmup);
        (0..warmup).filter(|&i| w.closes(i)).map(|i| i + 1).collect()
    }

    #[test]
    fn window_schedule_for_a_thousand() {
        // 150 fast, then 25, 50, 100 and a final window to 900
        assert_eq!(ends(1000), vec![175, 225, 325, 900]);
        let w = Windows::new(1000);
        assert!(!w.collecting(149));
        assert!(w.collecting(150));
        assert!(w.collecting(899));
        assert!(!w.collecting(900));
    }

    #[test]
    fn short_warmups_skip_metric_adaptation() {
        assert!(ends(10).is_empty());
        assert_eq!(ends(100), vec![90]);
    }

    #[test]
    fn dual_averaging_moves_towards_target() {
        let mut da = DualAveraging::new(0.8, 1.0);
        let e1 = da.update(0.2);
        let mut da2 = DualAveraging::new(0.8, 1.0);
        let e2 = da2.update(0.99);
        assert!(e1 < e2);
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [[1.0, 2.0], [3.0, 5.0], [4.0, -1.0], [0.5, 0.0]];
        let mut w = Welford::new(2);
        for x in &xs {
            w.add(x);
        }
        let n = 4.0;
        for d in 0..2 {
            let m = xs.iter().map(|x| x[d]).sum::<f64>() / n;
            let v = xs.iter().map(|x| (x[d] - m).powi(2)).sum::<f64>() / (n - 1.0);
            let expect = (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0));
            assert!((w.regularized()[d] - expect).abs() < 1e-12);
        }
    }
}
