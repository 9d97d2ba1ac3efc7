//! Distance-map penalized segmentation losses and boundary-aware evaluation
//! for 3D multi-class label volumes.
//!
//! The crate is `no_std` with `alloc`; file formats and the command line
//! live in the `bmap` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod augment;
pub mod edt;
pub mod error;
pub mod grid;
pub mod loss;
pub mod metrics;
pub mod net;
pub mod optim;
pub mod penalty;
pub mod phantom;
pub mod postproc;
pub mod train;

pub use error::{Error, Result};
pub use grid::{ClassVolume, LabelVolume, ScalarVolume, Shape3};
