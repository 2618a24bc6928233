use serde::{Deserialize, Serialize};

use super::{DenseNet, Gradients, Scalar};
use crate::error::{Error, Result};

/// Learning rate of the synthetic Hadamard experiment.
pub const SYNTHETIC_LR: f64 = 2e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub eta: f64,
    pub b1: f64,
    pub b2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eta: SYNTHETIC_LR,
            b1: 0.5,
            b2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eta > 0.0
            && self.eta.is_finite()
            && (0.0..1.0).contains(&self.b1)
            && (0.0..1.0).contains(&self.b2)
            && self.epsilon > 0.0
            && self.epsilon.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    step: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(net: &DenseNet<F>) -> Self {
        let m: Vec<Vec<F>> = net.params().map(|p| vec![F::zero(); p.len()]).collect();
        Self {
            v: m.clone(),
            m,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of every parameter of `net`.
///
/// Gradients are checked for finiteness before anything is modified.
pub fn adam_step<F: Scalar>(
    net: &mut DenseNet<F>,
    grads: &Gradients<F>,
    state: &mut AdamState<F>,
    cfg: &OptimizerConfig,
) -> Result<()> {
    let shapes_match = grads.layers.len() * 2 == state.m.len()
        && net
            .params()
            .zip(grads.layers.iter().flat_map(|(w, b)| [w.len(), b.len()]))
            .all(|(p, g)| p.len() == g);
    if !shapes_match {
        return Err(Error::Shape(
            "gradients do not match network parameters".into(),
        ));
    }
    if !grads.all_finite() {
        return Err(Error::Numerical(format!(
            "non-finite gradient at optimizer step {}",
            state.step + 1
        )));
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = F::of(1.0 - cfg.b1.powi(t));
    let bc2 = F::of(1.0 - cfg.b2.powi(t));
    let (b1, b2) = (F::of(cfg.b1), F::of(cfg.b2));
    let (one, eta, eps) = (F::one(), F::of(cfg.eta), F::of(cfg.epsilon));

    let grad_tensors = grads
        .layers
        .iter()
        .flat_map(|(w, b)| [w.as_slice(), b.as_slice()]);
    for (((param, g), m), v) in net
        .params_mut()
        .zip(grad_tensors)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for i in 0..param.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (one - b1) * gi;
            v[i] = b2 * v[i] + (one - b2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            param[i] = param[i] - eta * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense, LayerSpec};

    fn scalar_net(theta: f64) -> DenseNet<f64> {
        DenseNet::from_layers(vec![Dense {
            spec: LayerSpec {
                in_dim: 1,
                out_dim: 1,
                activation: Activation::Identity,
            },
            weights: vec![theta],
            bias: vec![0.0],
        }])
        .unwrap()
    }

    fn grads(gw: f64, gb: f64) -> Gradients<f64> {
        Gradients {
            layers: vec![(vec![gw], vec![gb])],
        }
    }

    #[test]
    fn first_step_by_hand() {
        let mut net = scalar_net(0.0);
        let mut st = AdamState::new(&net);
        let cfg = OptimizerConfig::default();
        adam_step(&mut net, &grads(2.0, 0.0), &mut st, &cfg).unwrap();
        // m̂ = 2, v̂ = 4: θ = −η·2/(2 + ε)
        let expect = -2e-5 * 2.0 / (2.0 + 1e-8);
        assert!((net.layers()[0].weights[0] - expect).abs() < 1e-15);
        assert!((net.layers()[0].weights[0] + 2e-5).abs() < 1e-10);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut net = scalar_net(0.3);
        let mut st = AdamState::new(&net);
        adam_step(
            &mut net,
            &grads(0.0, 0.0),
            &mut st,
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert_eq!(net.layers()[0].weights[0], 0.3);
        assert_eq!(net.layers()[0].bias[0], 0.0);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn no_momentum_is_rms_scaled_descent() {
        let cfg = OptimizerConfig {
            eta: 0.01,
            b1: 0.0,
            b2: 0.0,
            epsilon: 1e-8,
        };
        let mut net = scalar_net(1.0);
        let mut st = AdamState::new(&net);
        let mut theta = 1.0;
        for g in [0.5, -3.0, 1e-3, 7.0] {
            adam_step(&mut net, &grads(g, 0.0), &mut st, &cfg).unwrap();
            theta -= cfg.eta * g / (f64::abs(g) + cfg.epsilon);
            assert!((net.layers()[0].weights[0] - theta).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_is_surfaced() {
        let mut net = scalar_net(1.0);
        let mut st = AdamState::new(&net);
        let err = adam_step(
            &mut net,
            &grads(f64::NAN, 0.0),
            &mut st,
            &OptimizerConfig::default(),
        );
        assert!(matches!(err, Err(Error::Numerical(_))));
        assert_eq!(net.layers()[0].weights[0], 1.0);
        assert_eq!(st.step(), 0);
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = OptimizerConfig {
            b1: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
