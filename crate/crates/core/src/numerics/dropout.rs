use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::DenseMatrix;
use crate::error::{bail, Result};

/// Which entries survived a dropout pass, and the rescale applied to them.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    keep: Vec<bool>,
    scale: f64,
}

impl DropoutMask {
    pub fn full(len: usize) -> Self {
        Self { keep: vec![true; len], scale: 1.0 }
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Chain rule through the mask, in place.
    pub fn backward(&self, grad: &mut DenseMatrix) {
        for (g, &k) in grad.as_mut_slice().iter_mut().zip(&self.keep) {
            *g = if k { *g * self.scale } else { 0.0 };
        }
    }
}

/// Inverted dropout. In evaluation mode (or with `rate == 0`) the input is
/// returned unchanged with a full mask and no random draws are made.
pub fn dropout_forward<R: Rng + ?Sized>(
    x: &DenseMatrix,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(DenseMatrix, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        bail!(InvalidArgument, "dropout rate must lie in [0, 1), got {rate}");
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), DropoutMask::full(x.len())));
    }
    let scale = 1.0 / (1.0 - rate);
    let keep: Vec<bool> = (0..x.len()).map(|_| rng.random::<f64>() >= rate).collect();
    let mut out = x.clone();
    for (v, &k) in out.as_mut_slice().iter_mut().zip(&keep) {
        *v = if k { *v * scale } else { 0.0 };
    }
    Ok((out, DropoutMask { keep, scale }))
}
