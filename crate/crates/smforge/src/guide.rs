//! The user guide, compiled straight from `book/src`.
//!
//! Each chapter is attached as the documentation of an empty module, so
//! every code block in the book runs as a doc-test and the examples cannot
//! drift away from the API.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/photophysics.md")]
pub mod photophysics {}

#[doc = include_str!("../../../book/src/samples.md")]
pub mod samples {}

#[doc = include_str!("../../../book/src/instruments.md")]
pub mod instruments {}

#[doc = include_str!("../../../book/src/fitting.md")]
pub mod fitting {}

#[doc = include_str!("../../../book/src/analysis.md")]
pub mod analysis {}

#[doc = include_str!("../../../book/src/determinism.md")]
pub mod determinism {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
