//! Numerical laboratory for singular stochastic control with
//! finite-variation strategies.
//!
//! The crate covers path arithmetic on uniform grids ([`paths`]), polyhedral
//! solvency cones ([`cones`]), a conic market with proportional costs
//! ([`market`]), behavioral goal functionals ([`goals`]), a budgeted storage
//! model ([`storage`]) and randomized policy search ([`search`]).

mod error;
mod linalg;
mod lp;

pub mod cones;
pub mod goals;
pub mod market;
pub mod paths;
pub mod rng;
pub mod search;
pub mod stats;
pub mod storage;

pub use cones::{Cone, LambdaSection, TransactionCostSpec};
pub use error::{Error, Result};
pub use paths::{FVPath, JordanPair, Monotonicity, TimeGrid};
pub use goals::{CptSpec, Distortion, Goal, GoalValue, Utility};
pub use market::{PriceModel, PricePath};
pub use search::{ControlProblem, MarketProblem, PolicyFamily, PolicyKind, RandomizedPolicy, SearchReport, SearchSettings, StorageProblem};
pub use storage::{ControlPair, DemandModel, StatePath, StorageCostSpec};
