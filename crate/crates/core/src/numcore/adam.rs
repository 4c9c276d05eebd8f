//! Adam with bias correction.

use super::network::{Gradients, Network};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment accumulators mirroring a network's parameter slots.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    t: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        Self {
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One Adam update of `net` along `grads` with learning rate `lr`.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients, lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::Domain(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        let g_slices = grads.slices();
        let mut m_slices = self.m.slices_mut();
        let mut v_slices = self.v.slices_mut();
        let mut p_slices = net.param_slices_mut();
        if g_slices.len() != p_slices.len()
            || g_slices
                .iter()
                .zip(&p_slices)
                .any(|(g, p)| g.len() != p.len())
            || m_slices
                .iter()
                .zip(&p_slices)
                .any(|(m, p)| m.len() != p.len())
        {
            return Err(Error::Shape(
                "gradient/optimizer state does not match network".into(),
            ));
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        for (((p, g), m), v) in p_slices
            .iter_mut()
            .zip(&g_slices)
            .zip(m_slices.iter_mut())
            .zip(v_slices.iter_mut())
        {
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(
    net: &mut Network,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    state.step(net, grads, lr)
}
