//! Allocation-only core of the Easy-IIL desk lab.
//!
//! Everything here is pure computation over plain values: planar geometry,
//! the pick-and-place simulator, the one-shot assistant expert, the chunked
//! diffusion novice, the gating engine that decides who acts, and the
//! evaluation metrics. IO, file formats and the CLI live in the `easy-iil`
//! companion crate.
//!
//! The crate is `no_std` unless the `std` feature is enabled; it only needs
//! `alloc`. Transcendental functions go through `libm` so results are the
//! same on every host.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod assistant;
pub mod dataset;
pub mod env;
pub mod error;
pub mod gating;
pub mod geometry;
pub mod math;
pub mod metrics;
pub mod novice;
pub mod rng;

pub use error::{AssistantError, GatingError, NoviceError, RegistrationError, StatsError};
pub use geometry::{Point2, PointSet, Pose2};
