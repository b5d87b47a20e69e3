//! Auditing and mitigating the vulnerability disparity of membership
//! inference attacks against (differentially private) ID3 decision trees.
//!
//! Numeric code is generic over [`scalar::Real`]; counting metrics are generic
//! over [`scalar::Proportion`] so they can also run in exact rational
//! arithmetic. The aliases below fix the common instantiations.

pub mod dataset;
pub mod experiment;
pub mod fairpick;
pub mod id3;
pub mod kmeans;
pub mod metrics;
pub mod mia;
pub mod mlp;
pub mod scalar;
pub mod serial;

pub type Exact = num_rational::Ratio<i64>;

pub type DecisionTree64 = id3::DecisionTree<f64>;
pub type DecisionTree32 = id3::DecisionTree<f32>;
pub type AttackModel64 = mia::AttackModel<f64>;
pub type Mlp64 = mlp::Mlp<f64>;
pub type MiaResult64 = mia::MiaResult<f64>;
pub type VdReport64 = metrics::VdReport<f64>;
pub type ExactVdReport = metrics::VdReport<Exact>;
pub type ClusteredData64 = fairpick::ClusteredData<f64>;
