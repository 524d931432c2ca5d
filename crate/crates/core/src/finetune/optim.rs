//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One AdamW update of `weights` in place.
///
/// `w ← w − lr·wd·w`, then the bias-corrected Adam step
/// `w ← w − lr·m̂/(√v̂ + eps)`. A non-finite gradient aborts before anything
/// is modified.
pub fn optimizer_step(weights: &mut [f64], grad: &[f64], state: &mut AdamState, hyper: &AdamW) -> Result<()> {
    if weights.len() != grad.len() || state.m.len() != grad.len() || state.v.len() != grad.len() {
        return Err(Error::Dimension {
            id: None,
            expected: weights.len(),
            found: grad.len(),
        });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient entry {i} at optimizer step {}",
            state.step + 1
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for (((w, g), m), v) in weights.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *w -= hyper.lr * hyper.weight_decay * *w;
        *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
        *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hyper(lr: f64, wd: f64) -> AdamW {
        AdamW {
            lr,
            weight_decay: wd,
            ..AdamW::default()
        }
    }

    #[test]
    fn first_step_by_hand() {
        let mut w = [1.0];
        let mut s = AdamState::new(1);
        optimizer_step(&mut w, &[0.5], &mut s, &hyper(1e-3, 0.0)).unwrap();
        assert!((s.m[0] - 0.05).abs() < 1e-15);
        assert!((s.v[0] - 2.5e-4).abs() < 1e-18);
        let expected = 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8);
        assert!((w[0] - expected).abs() < 1e-15);
        assert!((w[0] - 0.999).abs() < 1e-10);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_gradient_and_decay() {
        let mut w = [0.3, -2.0];
        let mut s = AdamState::new(2);
        optimizer_step(&mut w, &[0.0, 0.0], &mut s, &hyper(1e-2, 0.0)).unwrap();
        assert_eq!(w, [0.3, -2.0]);

        let mut w = [0.3, -2.0];
        let mut s = AdamState::new(2);
        optimizer_step(&mut w, &[0.0, 0.0], &mut s, &hyper(1e-2, 0.01)).unwrap();
        assert_eq!(w, [0.3 * (1.0 - 1e-2 * 0.01), -2.0 * (1.0 - 1e-2 * 0.01)]);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut w = [1.0, 1.0];
        let mut s = AdamState::new(2);
        let err = optimizer_step(&mut w, &[0.1, f64::NAN], &mut s, &hyper(1e-3, 0.0)).unwrap_err();
        assert!(err.to_string().contains("entry 1"));
        assert_eq!(w, [1.0, 1.0]);
        assert_eq!(s.step, 0);
    }

    proptest! {
        // eps = 1e-8 shifts the first step by eps/|g|, so the bound holds for
        // |g| >= 1e-2.
        #[test]
        fn first_step_magnitude(g in prop_oneof![1e-2f64..1e3, -1e3f64..-1e-2], w0 in -5.0f64..5.0, lr in 1e-6f64..1e-1) {
            let mut w = [w0];
            let mut s = AdamState::new(1);
            optimizer_step(&mut w, &[g], &mut s, &hyper(lr, 0.0)).unwrap();
            let dw = (w[0] - w0).abs();
            prop_assert!(dw <= lr * (1.0 + 1e-12) && dw >= lr * (1.0 - 1e-6), "dw={dw} lr={lr}");
        }
    }
}
