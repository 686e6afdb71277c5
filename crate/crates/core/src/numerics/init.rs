use rand::distr::{Distribution, Uniform};
use rand::Rng;

use super::{stream_rng, DenseMatrix, Stream};
use crate::error::{bail, Result};
use crate::math;

/// Uniform Xavier initialization: entries in `±√(6 / (rows + cols))`.
pub fn xavier_init(rows: usize, cols: usize, seed: u64) -> Result<DenseMatrix> {
    xavier_init_with(rows, cols, &mut stream_rng(seed, Stream::Init, 0))
}

pub fn xavier_init_with<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        bail!(InvalidArgument, "xavier_init needs nonzero dimensions, got {rows}x{cols}");
    }
    let bound = math::sqrt(6.0 / (rows + cols) as f64);
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite positive bound");
    Ok(DenseMatrix::from_fn(rows, cols, |_, _| dist.sample(rng)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_within_bound() {
        let m = xavier_init(1, 1, 7).unwrap();
        assert!(m.get(0, 0).abs() <= math::sqrt(3.0));
    }

    #[test]
    fn deterministic_for_seed() {
        assert_eq!(xavier_init(2, 4, 7).unwrap(), xavier_init(2, 4, 7).unwrap());
        assert_ne!(xavier_init(2, 4, 7).unwrap(), xavier_init(2, 4, 8).unwrap());
    }

    #[test]
    fn zero_dimension_is_error() {
        assert!(xavier_init(0, 3, 1).is_err());
        assert!(xavier_init(3, 0, 1).is_err());
    }

    #[test]
    fn moments_match_uniform_variance() {
        let m = xavier_init(100, 100, 42).unwrap();
        let n = m.len() as f64;
        let mean = m.as_slice().iter().sum::<f64>() / n;
        let var = m.as_slice().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        // U(-a, a) has variance a²/3 = 2 / (rows + cols).
        let expected = 2.0 / 200.0;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - expected).abs() / expected < 0.10, "var {var}");
    }
}
