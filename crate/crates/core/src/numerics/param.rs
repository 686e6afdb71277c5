use alloc::string::{String, ToString};

use super::DenseMatrix;

/// A trainable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
    /// Frozen tensors are skipped by the optimizer.
    pub frozen: bool,
}

impl ParamTensor {
    pub fn new(name: impl ToString, value: DenseMatrix) -> Self {
        let grad = DenseMatrix::zeros(value.rows(), value.cols());
        Self { name: name.to_string(), value, grad, frozen: false }
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// FNV-1a over the bit patterns of every value, in order. Used to prove that
/// frozen tensors were not touched.
pub fn checksum<'a>(params: impl IntoIterator<Item = &'a ParamTensor>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in params {
        for b in p.name.bytes() {
            h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
        }
        for v in p.value.as_slice() {
            for b in v.to_bits().to_le_bytes() {
                h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}
