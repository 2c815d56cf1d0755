//! Compiles the guide's code blocks as doctests.

#[doc = include_str!("src/introduction.md")]
pub mod chapter0 {}
#[doc = include_str!("src/topology.md")]
pub mod chapter1 {}
#[doc = include_str!("src/data.md")]
pub mod chapter2 {}
#[doc = include_str!("src/pseudo_labels.md")]
pub mod chapter3 {}
#[doc = include_str!("src/diffusion.md")]
pub mod chapter4 {}
#[doc = include_str!("src/mixup.md")]
pub mod chapter5 {}
#[doc = include_str!("src/aggregation.md")]
pub mod chapter6 {}
#[doc = include_str!("src/rounds.md")]
pub mod chapter7 {}
#[doc = include_str!("src/cli.md")]
pub mod chapter8 {}
