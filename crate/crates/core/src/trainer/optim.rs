use super::config::PpoConfig;

/// Constant until `lr_decay_start_fraction·total`, then linear to `lr_final`.
pub fn lr_schedule(step: u64, total: u64, cfg: &PpoConfig) -> f64 {
    let start = cfg.lr_decay_start_fraction * total as f64;
    let step = step as f64;
    if step < start || total == 0 {
        return cfg.lr_initial;
    }
    let span = total as f64 - start;
    if span <= 0.0 {
        return cfg.lr_final;
    }
    let frac = ((step - start) / span).min(1.0);
    cfg.lr_initial + (cfg.lr_final - cfg.lr_initial) * frac
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Descend along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Scale `grad` in place so its Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let c = PpoConfig::default();
        let total = 100_000_000;
        assert_eq!(lr_schedule(0, total, &c), 5e-5);
        assert_eq!(lr_schedule(19_999_999, total, &c), 5e-5);
        assert!((lr_schedule(total, total, &c) - 1e-7).abs() < 1e-20);
        let mid = lr_schedule(60_000_000, total, &c);
        assert!((mid - 0.5 * (5e-5 + 1e-7)).abs() < 1e-18);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2);
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut x, &g, 0.01);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2), "{x:?}");
    }

    #[test]
    fn first_adam_step_has_lr_magnitude() {
        let mut x = vec![0.0];
        Adam::new(1).step(&mut x, &[123.0], 0.1);
        assert!((x[0] + 0.1).abs() < 1e-9);
    }

    #[test]
    fn clipping() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }
}
