use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::math;

/// A batch-mean loss over score margins `s⁺ − s⁻`, with its gradient per margin.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginLoss {
    pub loss: f64,
    pub d_margin: Vec<f64>,
}

/// Mean over the batch of `−ln σ(s⁺ − s⁻)`.
///
/// Weight decay is left to the optimizer.
pub fn bpr_loss(pos: &[f64], neg: &[f64]) -> Result<MarginLoss> {
    if pos.len() != neg.len() {
        bail!(Shape, "bpr: {} positive vs {} negative scores", pos.len(), neg.len());
    }
    if pos.is_empty() {
        bail!(InvalidArgument, "bpr: empty batch");
    }
    if pos.iter().chain(neg).any(|s| !s.is_finite()) {
        bail!(NonFinite, "bpr: non-finite score");
    }
    let n = pos.len() as f64;
    let mut loss = 0.0;
    let d_margin = pos
        .iter()
        .zip(neg)
        .map(|(p, q)| {
            let delta = p - q;
            loss += math::softplus(-delta);
            -math::sigmoid(-delta) / n
        })
        .collect();
    Ok(MarginLoss { loss: loss / n, d_margin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{stream_rng, Stream};
    use rand::Rng;

    #[test]
    fn equal_scores_cost_ln2() {
        let out = bpr_loss(&[0.3, -1.0], &[0.3, -1.0]).unwrap();
        assert!((out.loss - core::f64::consts::LN_2).abs() < 1e-12);
        assert!(out.d_margin.iter().all(|&g| (g + 0.25).abs() < 1e-12));
    }

    #[test]
    fn large_margin_costs_nothing() {
        let out = bpr_loss(&[800.0], &[-800.0]).unwrap();
        assert!(out.loss < 1e-300);
        let out = bpr_loss(&[-800.0], &[800.0]).unwrap();
        assert!((out.loss - 1600.0).abs() < 1e-9);
    }

    #[test]
    fn matches_scalar_loop() {
        let mut rng = stream_rng(3, Stream::Data, 0);
        let pos: Vec<f64> = (0..64).map(|_| rng.random_range(-5.0..5.0)).collect();
        let neg: Vec<f64> = (0..64).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut expected = 0.0;
        for (p, q) in pos.iter().zip(&neg) {
            expected -= libm::log(1.0 / (1.0 + libm::exp(-(p - q))));
        }
        expected /= 64.0;
        assert!((bpr_loss(&pos, &neg).unwrap().loss - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(bpr_loss(&[1.0], &[]).is_err());
        assert!(bpr_loss(&[f64::NAN], &[0.0]).is_err());
    }
}
