//! The narrative guide.
//!
//! Each chapter of the mdbook under `book/` is included here as a doc
//! module, so every code snippet in the book compiles and runs under
//! `cargo test --doc`. The book builds with `mdbook build book/`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/data-model.md")]
pub mod data_model {}

#[doc = include_str!("../../../book/src/merging-and-partitioning.md")]
pub mod merging_and_partitioning {}

#[doc = include_str!("../../../book/src/landmark-selection.md")]
pub mod landmark_selection {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/inference.md")]
pub mod inference {}

#[doc = include_str!("../../../book/src/pipeline-and-cli.md")]
pub mod pipeline_and_cli {}
