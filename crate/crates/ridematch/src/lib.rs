//! Profit-maximizing shared-ride matching under detour-based discounts.
//!
//! The crate has three layers:
//!
//! - **Batch matching** ([`matching`]): exact and greedy algorithms that
//!   partition a batch of trip requests into shared cabs to maximize the
//!   provider's profit, given a travel metric ([`trips`]), fare and discount
//!   parameters ([`pricing`]), and exhaustive route selection ([`routing`]).
//! - **Discount learning** ([`bandit`]): a UCB1 learner over discount slope
//!   parameters, evaluated against a best-fixed-parameter oracle in a
//!   simulated daily market.
//! - **Detour-aware routing impact** ([`sirsim`]): a market simulation that
//!   quantifies how a minimum-incremental-benefit routing rule trades
//!   matched rides against market share.
//!
//! The `ridematch` binary exposes all of it behind `gen`, `match`, `learn`,
//! and `sir` subcommands writing plot-ready CSV reports.

pub mod bandit;
pub mod config;
pub mod error;
pub mod matching;
pub mod pricing;
pub mod report;
pub mod routing;
pub mod sirsim;
pub mod trips;
pub(crate) mod util;

pub use error::{Error, Result};
