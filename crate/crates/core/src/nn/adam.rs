use serde::{Deserialize, Serialize};

use super::network::Network;
use super::tensor::{Scalar, Tensor4};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.93, beta2: 0.999, eps: 1e-8 }
    }
}

/// Outcome of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// A gradient held NaN or ±∞; parameters and moments were left as they were.
    SkippedNonFinite,
}

/// Per-parameter first and second moments with bias-correction step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    /// Steps rejected because of non-finite gradients.
    pub skipped: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, skipped: 0, m: Vec::new(), v: Vec::new() }
    }

    /// Zeroed moments shaped like `net`'s parameters.
    pub fn for_network(config: AdamConfig, net: &Network<T>) -> Self {
        let lens: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        Self {
            config,
            step: 0,
            skipped: 0,
            m: lens.iter().map(|&l| vec![T::zero(); l]).collect(),
            v: lens.iter().map(|&l| vec![T::zero(); l]).collect(),
        }
    }

    /// One bias-corrected Adam update of every tensor from its gradient buffer:
    ///
    /// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`, `θ ← θ − lr·m̂/(√v̂ + ε)`.
    pub fn step(&mut self, params: &mut [&mut Tensor4<T>], lr: f64) -> Result<StepOutcome, NnError> {
        if self.m.is_empty() && self.step == 0 {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(NnError::OptimizerMismatch(format!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if self.m[i].len() != p.len() {
                return Err(NnError::OptimizerMismatch(format!(
                    "tensor {i}: optimizer holds {} values, parameter has {}",
                    self.m[i].len(),
                    p.len()
                )));
            }
            if p.grad().is_none() {
                return Err(NnError::OptimizerMismatch(format!("tensor {i} has no gradient buffer")));
            }
        }
        let finite = params.iter().all(|p| p.grad().expect("checked").iter().all(|g| g.is_finite()));
        if !finite {
            self.skipped += 1;
            return Ok(StepOutcome::SkippedNonFinite);
        }

        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = T::from_f64(1.0 / (1.0 - beta1.powi(t)));
        let c2 = T::from_f64(1.0 / (1.0 - beta2.powi(t)));
        let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
        let (ob1, ob2) = (T::from_f64(1.0 - beta1), T::from_f64(1.0 - beta2));
        let (lr, eps) = (T::from_f64(lr), T::from_f64(eps));
        for (i, p) in params.iter_mut().enumerate() {
            let (data, grad) = p.data_and_grad_mut();
            let grad = grad.expect("checked");
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..data.len() {
                let g = grad[j];
                m[j] = b1 * m[j] + ob1 * g;
                v[j] = b2 * v[j] + ob2 * g * g;
                let mh = m[j] * c1;
                let vh = v[j] * c2;
                data[j] = data[j] - lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(StepOutcome::Applied)
    }
}

/// Applies one Adam step to every parameter of `net`.
pub fn adam_step<T: Scalar>(net: &mut Network<T>, state: &mut AdamState<T>, lr: f64) -> Result<StepOutcome, NnError> {
    let mut params = net.params_mut();
    state.step(&mut params, lr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Shape4;

    fn scalar(v: f64, g: f64) -> Tensor4<f64> {
        let mut t = Tensor4::param(Shape4::new(1, 1, 1, 1));
        t.data_mut()[0] = v;
        t.grad_mut().unwrap()[0] = g;
        t
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(0.5, 1.0);
        let mut st = AdamState::new(AdamConfig::default());
        st.step(&mut [&mut p], 0.001).unwrap();
        let expect = 0.5 - 0.001 / (1.0 + 1e-8);
        assert!((p.data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut p = scalar(0.5, 1.0);
        let mut st = AdamState::new(AdamConfig::default());
        st.step(&mut [&mut p], 0.01).unwrap();
        let before = p.data()[0];
        let (m0, v0) = (st.m[0][0], st.v[0][0]);
        p.grad_mut().unwrap()[0] = 0.0;
        // With a zero gradient the update is lr·m̂/(√v̂+ε), nonzero while momentum persists;
        // the moments themselves decay geometrically.
        st.step(&mut [&mut p], 0.0).unwrap();
        assert_eq!(p.data()[0], before);
        assert!((st.m[0][0] - 0.93 * m0).abs() < 1e-15);
        assert!((st.v[0][0] - 0.999 * v0).abs() < 1e-15);

        let mut fresh = scalar(0.25, 0.0);
        let mut st = AdamState::new(AdamConfig::default());
        st.step(&mut [&mut fresh], 0.1).unwrap();
        assert_eq!(fresh.data()[0], 0.25);
    }

    #[test]
    fn descends_quadratic() {
        let mut p = scalar(1.0, 0.0);
        let mut st = AdamState::new(AdamConfig::default());
        for _ in 0..50 {
            let x = p.data()[0];
            p.grad_mut().unwrap()[0] = 2.0 * x;
            st.step(&mut [&mut p], 0.05).unwrap();
        }
        assert!(p.data()[0].abs() < 0.5, "{}", p.data()[0]);
    }

    #[test]
    fn non_finite_gradient_skips() {
        let mut p = scalar(0.5, f64::NAN);
        let mut st = AdamState::new(AdamConfig::default());
        assert_eq!(st.step(&mut [&mut p], 0.1).unwrap(), StepOutcome::SkippedNonFinite);
        assert_eq!((p.data()[0], st.step, st.skipped), (0.5, 0, 1));
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let mut a = scalar(0.5, 1.0);
        let mut b = scalar(0.5, 1.0);
        let mut st = AdamState::new(AdamConfig::default());
        st.step(&mut [&mut a], 0.1).unwrap();
        assert!(st.step(&mut [&mut a, &mut b], 0.1).is_err());
    }
}
