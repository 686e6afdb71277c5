//! Dense and sparse matrices, the parameter store, AdamW, and the
//! initialization/regularization primitives the models are built from.

mod adamw;
mod dense;
mod dropout;
mod init;
mod param;
mod rng;
mod sparse;

pub use adamw::{AdamW, AdamWConfig};
pub use dense::DenseMatrix;
pub use dropout::{dropout_forward, DropoutMask};
pub use init::{xavier_init, xavier_init_with};
pub use param::{checksum, ParamTensor};
pub use rng::{stream_rng, Stream};
pub use sparse::SparseMatrix;
