//! Approximate distance oracle for undirected graphs with non-negative
//! weights: stretch `2k−1`, a constant number of table lookups per query, and
//! an exact-distance audit suite that checks both claims.
//!
//! The core is generic over the weight type ([`Weight`], implemented for
//! `f32` and `f64`); the aliases below fix it to `f64`.

pub mod audit;
pub mod bench;
pub mod error;
pub mod estimator;
pub mod generate;
pub mod graph;
pub mod oracle;
pub mod query;
pub mod scalar;
pub mod scale;
pub mod snapshot;
pub mod tables;
pub mod tz;

pub use error::{GraphError, OracleError};
pub use estimator::{CoarseEstimator, EstimatorConfig, SnapEstimator, StretchInjector};
pub use generate::{Family, GeneratorConfig, WeightSpec};
pub use graph::NodeId;
pub use oracle::{BuildSummary, OracleConfig};
pub use query::{Branch, Check, FallbackReason, LevelPair, QueryParams, QueryStats, QueryTrace};
pub use scalar::Weight;

pub type Graph = graph::Graph<f64>;
pub type ExactOracle = graph::ExactOracle<f64>;
pub type TzOracle = tz::TzOracle<f64>;
pub type DistanceOracle = oracle::DistanceOracle<f64>;
pub type Graph32 = graph::Graph<f32>;
pub type DistanceOracle32 = oracle::DistanceOracle<f32>;
