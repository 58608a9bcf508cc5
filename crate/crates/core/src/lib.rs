//! Tools for turning rigid, part-segmented 3D assets into articulated URDF
//! objects and for scoring predicted articulations against ground truth.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`kinematics`]: link/joint data model and tree validation
//! - [`urdf`]: strict-subset URDF reader and writer
//! - [`geometry`]: mesh loading, surface sampling, per-part normalization
//! - [`chain`]: parsing the delimited JSON + URDF model response
//! - [`llm`]: prompt assembly and chat-completion backends
//! - [`metrics`]: joint matching and the evaluation measures
//! - [`scene`]: scene ingestion, conversion, and re-assembly

pub mod chain;
pub mod geometry;
pub mod kinematics;
pub mod llm;
pub mod metrics;
pub mod scene;
pub mod urdf;
