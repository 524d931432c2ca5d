//! PSCE and InfoNCE losses and their gradients with respect to the adapter.
//!
//! A loss term sees vectors through the adapter, `u = W a`, `v = W x`. The
//! gradient of any similarity of `(W a, W x)` with respect to `W` is a sum of
//! outer products `g_u aᵀ + g_v xᵀ`, so each term's gradient is kept as
//! rank-one factors and only expanded into a matrix when reduced.

use serde::{Deserialize, Serialize};

use crate::embedding::{dot, norm, Similarity};
use crate::par::{self, Execution};
use crate::{Error, Result};

use super::LinearAdapter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Psce,
    InfoNce,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Psce => "psce",
            LossKind::InfoNce => "infonce",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psce" => Ok(LossKind::Psce),
            "infonce" => Ok(LossKind::InfoNce),
            other => Err(Error::InvalidArgument(format!("unknown loss `{other}`"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln(e^pos / (e^pos + e^neg))`.
pub fn psce_from_sims(pos: f64, neg: f64) -> f64 {
    softplus(neg - pos)
}

/// `-ln(e^(pos/τ) / (e^(pos/τ) + Σ e^(neg/τ)))`, log-sum-exp stabilized.
pub fn infonce_from_sims(pos: f64, negs: &[f64], tau: f64) -> f64 {
    let z0 = pos / tau;
    if let [n] = negs {
        return softplus(n / tau - z0);
    }
    let m = negs.iter().map(|n| n / tau).fold(z0, f64::max);
    let sum: f64 = (z0 - m).exp() + negs.iter().map(|n| (n / tau - m).exp()).sum::<f64>();
    m + sum.ln() - z0
}

pub fn psce_loss(anchor: &[f64], positive: &[f64], negative: &[f64], sim: Similarity) -> f64 {
    psce_from_sims(sim.apply(anchor, positive), sim.apply(anchor, negative))
}

/// # Panics
///
/// If `negatives` is empty or `tau` is not positive.
pub fn infonce_loss(anchor: &[f64], positive: &[f64], negatives: &[&[f64]], tau: f64, sim: Similarity) -> f64 {
    assert!(!negatives.is_empty(), "InfoNCE needs at least one negative");
    assert!(tau > 0.0, "temperature must be positive");
    let negs: Vec<f64> = negatives.iter().map(|n| sim.apply(anchor, n)).collect();
    infonce_from_sims(sim.apply(anchor, positive), &negs, tau)
}

/// `φ(u, v)` and `(∂φ/∂u, ∂φ/∂v)` for already-transformed `u`, `v`.
///
/// A zero-norm operand (cosine) or zero distance (Euclidean) contributes a
/// zero gradient.
pub fn similarity_gradient(sim: Similarity, u: &[f64], v: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let dim = u.len();
    match sim {
        Similarity::Cosine => {
            let (nu, nv) = (norm(u), norm(v));
            if nu == 0.0 || nv == 0.0 {
                return (0.0, vec![0.0; dim], vec![0.0; dim]);
            }
            let c = dot(u, v) / (nu * nv);
            let gu = u.iter().zip(v).map(|(a, b)| b / (nu * nv) - c * a / (nu * nu)).collect();
            let gv = u.iter().zip(v).map(|(a, b)| a / (nu * nv) - c * b / (nv * nv)).collect();
            (c, gu, gv)
        }
        Similarity::Euclidean => {
            let r: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
            let d = norm(&r);
            if d == 0.0 {
                return (0.0, vec![0.0; dim], vec![0.0; dim]);
            }
            let gu: Vec<f64> = r.iter().map(|x| -x / d).collect();
            let gv = gu.iter().map(|x| -x).collect();
            (-d, gu, gv)
        }
    }
}

/// Loss value of one term and its gradient as `Σ coef ⊗ input`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitGradient {
    pub loss: f64,
    pub factors: Vec<(Vec<f64>, Vec<f64>)>,
}

impl UnitGradient {
    pub fn to_matrix(&self, dim: usize) -> Vec<f64> {
        accumulate(dim, std::slice::from_ref(self), Execution::Sequential)
    }
}

/// Loss and rank-one gradient factors for one term.
///
/// PSCE takes exactly one negative.
pub fn unit_gradient(
    loss: LossKind,
    tau: f64,
    sim: Similarity,
    adapter: &LinearAdapter,
    anchor: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
) -> Result<UnitGradient> {
    if negatives.is_empty() {
        return Err(Error::InvalidArgument("loss term without negatives".into()));
    }
    if loss == LossKind::Psce && negatives.len() != 1 {
        return Err(Error::InvalidArgument("a PSCE term takes exactly one negative".into()));
    }
    let u = adapter.apply_slice(anchor);
    let others: Vec<Vec<f64>> = std::iter::once(positive)
        .chain(negatives.iter().copied())
        .map(|x| adapter.apply_slice(x))
        .collect();
    let grads: Vec<(f64, Vec<f64>, Vec<f64>)> = others.iter().map(|v| similarity_gradient(sim, &u, v)).collect();
    let sims: Vec<f64> = grads.iter().map(|g| g.0).collect();

    // dL/dφ for the positive (index 0) and each negative.
    let (value, coefs): (f64, Vec<f64>) = match loss {
        LossKind::Psce => {
            let s = sigmoid(sims[1] - sims[0]);
            (psce_from_sims(sims[0], sims[1]), vec![-s, s])
        }
        LossKind::InfoNce => {
            let z: Vec<f64> = sims.iter().map(|s| s / tau).collect();
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
            let total: f64 = e.iter().sum();
            let mut coefs: Vec<f64> = e.iter().map(|x| x / total / tau).collect();
            coefs[0] -= 1.0 / tau;
            (infonce_from_sims(sims[0], &sims[1..], tau), coefs)
        }
    };

    let dim = anchor.len();
    let mut anchor_coef = vec![0.0; dim];
    let mut factors = Vec::with_capacity(others.len() + 1);
    let inputs = std::iter::once(positive).chain(negatives.iter().copied());
    for ((c, (_, gu, gv)), x) in coefs.iter().zip(&grads).zip(inputs) {
        anchor_coef.iter_mut().zip(gu).for_each(|(a, g)| *a += c * g);
        factors.push((gv.iter().map(|g| c * g).collect(), x.to_vec()));
    }
    factors.insert(0, (anchor_coef, anchor.to_vec()));
    Ok(UnitGradient { loss: value, factors })
}

/// Dense `dL/dW` (row-major) for one term.
pub fn loss_gradient(
    loss: LossKind,
    tau: f64,
    sim: Similarity,
    adapter: &LinearAdapter,
    anchor: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
) -> Result<(f64, Vec<f64>)> {
    let g = unit_gradient(loss, tau, sim, adapter, anchor, positive, negatives)?;
    Ok((g.loss, g.to_matrix(adapter.dim())))
}

/// Sum of all factors as a dense row-major matrix.
///
/// Each row is summed in unit order then factor order, so parallel and
/// sequential execution agree bit for bit.
pub fn accumulate(dim: usize, units: &[UnitGradient], exec: Execution) -> Vec<f64> {
    let rows = par::map_range(exec, dim, |r| {
        let mut row = vec![0.0; dim];
        for unit in units {
            for (coef, input) in &unit.factors {
                let c = coef[r];
                if c != 0.0 {
                    row.iter_mut().zip(input).for_each(|(w, x)| *w += c * x);
                }
            }
        }
        row
    });
    rows.concat()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let ln2 = std::f64::consts::LN_2;
        assert!((psce_from_sims(0.3, 0.3) - ln2).abs() < 1e-12);
        assert!((psce_from_sims(1.0, 0.0) - 0.313_261_687_518_222_86).abs() < 1e-12);
        assert!((psce_from_sims(0.0, 1.0) - 1.313_261_687_518_222_8).abs() < 1e-12);
        assert!((infonce_from_sims(0.5, &[0.5], 0.07) - ln2).abs() < 1e-12);
        for m in 1..8 {
            let negs = vec![0.2; m];
            assert!((infonce_from_sims(0.2, &negs, 0.3) - ((1 + m) as f64).ln()).abs() < 1e-12);
        }
        let v = infonce_from_sims(1.0, &[0.0], 0.1);
        assert!((v - 4.539_889_921_686_465e-5).abs() < 1e-15, "{v}");
    }

    #[test]
    fn infonce_unit_temperature_equals_psce() {
        for (p, n) in [(0.1, 0.9), (-0.4, 0.4), (0.95, -0.95), (0.0, 0.0)] {
            assert!((infonce_from_sims(p, &[n], 1.0) - psce_from_sims(p, n)).abs() < 1e-12);
        }
        // Multi-negative path as well: split one negative into an equivalent pair.
        let a = infonce_from_sims(0.3, &[0.1, 0.1], 1.0);
        let b = softplus(0.1 - 0.3 + std::f64::consts::LN_2);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn psce_monotone_and_positive() {
        let mut prev = f64::INFINITY;
        for i in -20..=20 {
            let margin = i as f64 / 10.0;
            let l = psce_from_sims(margin, 0.0);
            assert!(l > 0.0 && l < prev);
            prev = l;
        }
    }

    #[test]
    fn extreme_margins_are_finite() {
        assert!(psce_from_sims(-800.0, 800.0).is_finite());
        assert!(infonce_from_sims(-1.0, &[1.0, 1.0], 1e-3).is_finite());
        assert_eq!(psce_from_sims(800.0, -800.0), 0.0);
    }

    #[test]
    fn psce_rejects_multiple_negatives() {
        let w = LinearAdapter::identity(2);
        let (a, n): (&[f64], &[f64]) = (&[1.0, 0.0], &[0.0, 1.0]);
        assert!(unit_gradient(LossKind::Psce, 1.0, Similarity::Cosine, &w, a, a, &[n, n]).is_err());
        assert!(unit_gradient(LossKind::InfoNce, 1.0, Similarity::Cosine, &w, a, a, &[]).is_err());
    }

    #[test]
    fn zero_vectors_give_zero_gradient() {
        let w = LinearAdapter::identity(3);
        let z = [0.0; 3];
        let x = [1.0, 2.0, 3.0];
        let (_, g) = loss_gradient(LossKind::Psce, 1.0, Similarity::Cosine, &w, &z, &x, &[&x]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        let (_, g) = loss_gradient(LossKind::Psce, 1.0, Similarity::Euclidean, &w, &x, &x, &[&x]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }
}
