//! Projected Adam on a non-negative parameter vector.

#[derive(Debug, Clone)]
pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    shared: bool,
}

impl Adam {
    /// With `shared`, the second-moment estimate is the mean over all free
    /// coordinates, so step sizes stay proportional to the gradient.
    pub fn new(n: usize, lr: f64, shared: bool) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            shared,
        }
    }

    pub fn reset(&mut self) {
        self.m.fill(0.0);
        self.v.fill(0.0);
        self.t = 0;
    }

    /// One step; entries with `free[i] == false` stay at zero and every
    /// entry is clamped to be non-negative afterwards.
    pub fn step(&mut self, x: &mut [f64], grad: &[f64], free: &[bool]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        if self.shared {
            let (mut sq, mut n) = (0.0, 0usize);
            for i in 0..x.len() {
                if free[i] {
                    sq += grad[i] * grad[i];
                    n += 1;
                }
            }
            let g2 = if n == 0 { 0.0 } else { sq / n as f64 };
            self.v[0] = self.beta2 * self.v[0] + (1.0 - self.beta2) * g2;
            let denom = (self.v[0] / c2).sqrt() + self.eps;
            for i in 0..x.len() {
                if !free[i] {
                    x[i] = 0.0;
                    continue;
                }
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
                x[i] = (x[i] - self.lr * (self.m[i] / c1) / denom).max(0.0);
            }
            return;
        }
        for i in 0..x.len() {
            if !free[i] {
                x[i] = 0.0;
                continue;
            }
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            x[i] = (x[i] - self.lr * mh / (vh.sqrt() + self.eps)).max(0.0);
        }
    }
}
