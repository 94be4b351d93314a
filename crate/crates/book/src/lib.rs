//! The guide's chapters, compiled as doc modules so `cargo test` runs every
//! listing in `book/src`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/surrogate.md")]
pub mod surrogate {}
#[doc = include_str!("../../../book/src/observations.md")]
pub mod observations {}
#[doc = include_str!("../../../book/src/policy.md")]
pub mod policy {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/runner.md")]
pub mod runner {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
