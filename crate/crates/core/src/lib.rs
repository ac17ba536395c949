//! Leader/follower pricing for a two-resource (rendering, bandwidth) market.
//!
//! One provider sets unit prices and assigns users to base stations; each
//! user buys the bundle that maximises its own utility at those prices. The
//! crate computes follower best responses in closed form, allocates users
//! to base stations with a greedy pass followed by exchange moves, searches
//! the price box with a perturbed golden-section coordinate search, and
//! checks the result against brute-force oracles.
//!
//! Module map:
//!
//! * [`scenario`]: market instances, channel model, price bounds, generation.
//! * [`best_response`]: follower utility, KKT case enumeration, grid oracle.
//! * [`allocation`]: greedy assignment, pairwise and relocation exchanges.
//! * [`pricing`]: golden-section search, coordinate-ascent baseline, price grid.
//! * [`equilibrium`]: empirical checks of follower and leader optimality.
//! * [`ledger`]: hash-chained settlement log.
//! * [`experiment`]: solve/sweep/compare drivers and their file outputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod best_response;
pub mod equilibrium;
mod error;
pub mod experiment;
pub mod ledger;
pub mod pricing;
pub mod scenario;

pub use error::{MarketError, Result};
pub use scenario::{PriceBounds, Prices, Scenario};
