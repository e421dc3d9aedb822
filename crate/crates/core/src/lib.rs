//! Spectral Newton solver for whiskered invariant tori.

// `!(x < bound)` is used deliberately so that NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundles;
pub mod cohomology;
pub mod error;
pub mod flow;
pub mod fourier;
pub mod geometry;
pub mod linalg;
pub mod models;
pub mod newton;
pub mod scalar;
pub mod torus;
pub mod verify;

pub use cohomology::{golden_mean, Frequency};
pub use error::{Result, WhiskerError};
pub use fourier::{FourierMap, Grid, MatrixField};
pub use geometry::SymplecticSystem;
pub use linalg::Matrix;
pub use newton::{solve, NewtonConfig, NewtonRecord, TorusSolution};
pub use scalar::Real;
pub use torus::Embedding;

pub type FourierMap64 = FourierMap<f64>;
pub type MatrixField64 = MatrixField<f64>;
pub type Matrix64 = Matrix<f64>;
pub type Embedding64 = Embedding<f64>;
pub type TorusSolution64 = TorusSolution<f64>;
