use super::{Real, Tensor};

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T = f32> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Real> Parameter<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter. Moments are kept in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new<T: Real>(param: &Parameter<T>, config: AdamConfig) -> Self {
        Self {
            m: vec![0.0; param.value.len()],
            v: vec![0.0; param.value.len()],
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update; the gradient is zeroed afterwards.
pub fn adam_step<T: Real>(param: &mut Parameter<T>, state: &mut AdamState, lr: f64) {
    let AdamConfig { beta1, beta2, eps } = state.config;
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    let grads = param.grad.data();
    for (i, theta) in param.value.data_mut().iter_mut().enumerate() {
        let g = grads[i].as_f64();
        let m = beta1 * state.m[i] + (1.0 - beta1) * g;
        let v = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let step = lr * (m / bc1) / ((v / bc2).sqrt() + eps);
        *theta = T::from_f64_lossy(theta.as_f64() - step);
    }
    param.zero_grad();
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Parameter<f64> {
        Parameter::new(Tensor::from_vec(&[1], vec![v]).unwrap())
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut p = Parameter::new(Tensor::<f32>::from_fn(&[4], |i| i as f32));
        let before = p.value.clone();
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &mut s, 0.01);
        assert_eq!(p.value, before);
    }

    #[test]
    fn first_step_closed_form() {
        // t=1: m̂ = g and √v̂ = |g|, so the step is lr·g/(|g|+ε).
        let mut p = scalar(1.0);
        p.grad.data_mut()[0] = 2.0;
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &mut s, 0.01);
        let expected = 1.0 - 0.01 * 2.0 / (2.0 + 1e-8);
        assert!((p.value.data()[0] - expected).abs() < 1e-12);
        assert_eq!(p.grad.data()[0], 0.0);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut p = scalar(0.0);
        let mut s = AdamState::new(&p, AdamConfig::default());
        let mut prev = 0.0;
        for _ in 0..2 {
            p.grad.data_mut()[0] = -3.0;
            adam_step(&mut p, &mut s, 0.01);
            let now = p.value.data()[0];
            assert!(now > prev);
            prev = now;
        }
        assert!(s.v.iter().all(|&v| v >= 0.0));
    }
}
