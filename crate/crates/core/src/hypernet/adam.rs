use super::params::HypernetParams;

/// Adam with bias correction. Moment buffers mirror the parameter layout.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: HypernetParams,
    v: HypernetParams,
}

impl Adam {
    pub fn new(params: &HypernetParams) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut HypernetParams, grads: &HypernetParams, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let grads: Vec<_> = grads.tensors().into_iter().map(|(_, g)| g).collect();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
            for (((pi, &gi), mi), vi) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
