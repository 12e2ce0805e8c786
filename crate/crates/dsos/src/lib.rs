//! A desk-scale laboratory for training classifiers under mixed label noise.
//!
//! Real labelling mistakes come in two flavours: a sample from a known class
//! tagged with the wrong class (in-distribution noise), and a sample that
//! belongs to no class at all (out-of-distribution noise). The two need
//! different medicine. This crate trains a small network with a warm-up
//! phase, then each epoch measures how much every sample's label disagrees
//! with the network, splits the disagreeing samples into the two noise
//! flavours with a two-component beta mixture, rewrites confidently flipped
//! labels from the network's own predictions, and softens the labels of
//! suspected out-of-distribution samples toward uniform so they stop
//! steering training.
//!
//! Everything is deterministic given a seed, and every stage (data
//! synthesis, training, assessment, reporting) is exposed both as a library
//! API and through the `dsos` command line tool.

pub mod correction;
pub mod data;
pub mod error;
pub mod label;
pub mod metrics;
pub mod mixture;
pub mod nn;
pub mod report;
pub mod trainer;
pub mod textio;

pub use error::{Error, Result};
pub use label::SoftLabel;

// The guide's code blocks compile and run as doc-tests, so the book and
// the crate cannot drift apart silently.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/labels-and-metrics.md")]
    mod labels_and_metrics {}
    #[doc = include_str!("../../../book/src/detection.md")]
    mod detection {}
    #[doc = include_str!("../../../book/src/correction.md")]
    mod correction {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/data-and-audits.md")]
    mod data_and_audits {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
