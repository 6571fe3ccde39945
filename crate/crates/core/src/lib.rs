//! Superpixel-guided contrastive pre-training on the CPU.
//!
//! The crate covers the whole pair-generation and loss pipeline:
//!
//! * [`superpixel`]: SLIC segmentation, connectivity repair and majority-vote
//!   downsampling onto the encoder's feature grid.
//! * [`ilcp`]: pixel-level positives from shared superpixel membership.
//! * [`igcp`]: averaged-superpixel features, the top-1 neighbour graph and
//!   its connected components as a batch weak label.
//! * [`loss`]: supervised InfoNCE with an exact analytic gradient and the
//!   weighted three-term objective.
//! * [`nn`], [`augment`], [`optim`], [`data`], [`pretrain`]: a small
//!   convolutional encoder with hand-written backpropagation, the two
//!   augmentation groups, SGD with a cosine schedule, a synthetic volume
//!   generator and the training loop tying it all together.
//! * [`gradcheck`], [`checkpoint`], [`cli`]: finite-difference checks,
//!   NPY checkpoints and the `supercl` command-line front end.
//!
//! Arrays travel as [`Tensor`]s and are exchanged with other tools as NPY.

pub mod augment;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod igcp;
pub mod ilcp;
pub mod image;
pub mod linalg;
pub mod loss;
pub mod nn;
pub mod npy;
pub mod optim;
pub mod positive;
pub mod pretrain;
pub mod superpixel;
pub mod tensor;
pub mod union_find;

pub use error::{Error, Result};
pub use positive::PositiveSet;
pub use superpixel::SuperpixelMap;
pub use tensor::Tensor;
