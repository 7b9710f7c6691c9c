//! Compiles the guide's code blocks as doc-tests, one module per chapter,
//! so `cargo test` keeps the book honest.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../../book/src/graphs.md")]
pub mod graphs {}
#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry {}
#[doc = include_str!("../../../book/src/mjls.md")]
pub mod mjls {}
#[doc = include_str!("../../../book/src/certificates.md")]
pub mod certificates {}
#[doc = include_str!("../../../book/src/fitting.md")]
pub mod fitting {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
