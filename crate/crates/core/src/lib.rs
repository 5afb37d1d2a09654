//! Flexibility-market clearing for radial distribution networks.
//!
//! The crate clears a DSO congestion-management market in which generation
//! and demand resources offer four-sided flexibility (raise/lower generation,
//! lower/raise demand) at nodal prices. Two formulations of the network are
//! supported and can be run side by side:
//!
//! * a **linear** market built on the LinDistFlow equations with a polygonal
//!   inner approximation of the apparent-flow limit, and
//! * a **second-order-cone** benchmark built on the relaxed branch-flow
//!   equations with rotated-cone current constraints.
//!
//! Nodal prices (DLMPs) are the dual multipliers of the real-power balance
//! constraints, recovered from the embedded primal-dual interior-point
//! solver. The [`analysis`] module reproduces deterministic LP-vs-SOCP
//! comparisons (RMSE tables over prices, voltages, flows and revenues) and
//! seeded Monte Carlo studies over perturbed bid sets.
//!
//! Pipeline: [`netmodel`] parses Matpower case files and builds the radial
//! network; [`bids`] synthesizes base supply and flexibility bids;
//! [`formulation`] turns a [`MarketInstance`] into a solver-ready
//! [`ConeSystem`]; [`solver`] solves it; [`market`] maps the solution back
//! into market quantities; [`analysis`] compares and aggregates.

pub mod analysis;
pub mod bids;
pub mod formulation;
pub mod market;
pub mod netmodel;
pub mod solver;

pub use analysis::{ComparisonReport, MonteCarloStats};
pub use bids::{BaseProfile, FlexBid, ScenarioConfig, SpreadLevel};
pub use formulation::{ConeSystem, Formulation, MarketInstance, PolygonEdge, VariableLayout};
pub use market::{ClearingResult, MarketError};
pub use netmodel::{Branch, Bus, CaseError, RadialNetwork, RawCase};
pub use solver::{SolveReport, SolveStatus, SolverSettings};
