//! The chapters of the book in `book/src`, one module each, so that
//! `cargo test` compiles and runs every snippet as a doctest.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/lorenz.md")]
pub mod lorenz {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/markets.md")]
pub mod markets {}

#[doc = include_str!("../../../book/src/backtest.md")]
pub mod backtest {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
