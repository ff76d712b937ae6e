//! Spatial crash-frequency modelling for traffic analysis zones.
//!
//! Road-network betweenness centralization and pattern classes, zone
//! proximity matrices, a Poisson-lognormal intrinsic CAR model fitted by
//! MCMC, and model comparison by DIC.

pub mod centrality;
pub mod data;
pub mod error;
pub mod eval;
pub mod mcmc;
pub mod model;
pub mod recovery;
pub mod scalar;
pub mod synth;
pub mod weights;

pub use error::{Error, Result};

pub type RoadCentrality = centrality::CentralityResult<f64>;
pub type ExactCentrality = centrality::CentralityResult<scalar::Exact>;
pub type Proximity = weights::ProximityMatrix<f64>;
pub type ProximityF32 = weights::ProximityMatrix<f32>;
pub type Design = data::DesignMatrix<f64>;
