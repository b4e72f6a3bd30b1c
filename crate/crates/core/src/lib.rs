//! Sequence-to-sequence single object tracking on LiDAR point clouds.
//!
//! The model reads the last `N` point clouds together with the last `N-1`
//! tracked boxes and regresses a whole box sequence, whose final entry is the
//! current estimate. See the guide in `book/` for a walkthrough.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod losses;
pub mod network;
pub mod nn;
pub mod plot;
pub mod tensor;
pub mod tracker;
pub mod train;

pub use error::{Error, Result};

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/tracking.md")]
    mod tracking {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
}
