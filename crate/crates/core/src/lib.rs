pub mod ahpoly;
pub mod blackbox;
pub mod errbound;
pub mod error;
pub mod hpoly;
pub mod linalg;
pub mod lp;
pub mod reachavoid;
pub mod relunet;
pub mod rpm;
pub mod scalar;
pub mod trajmodel;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type HPolytope = hpoly::HPolytope<f64>;
pub type Hyperrectangle = hpoly::Hyperrectangle<f64>;
pub type AHPolytope = ahpoly::AHPolytope<f64>;
pub type ReluNetwork = relunet::ReluNetwork<f64>;
pub type AffineRegion = rpm::AffineRegion<f64>;
pub type SlicedAffineMap = trajmodel::SlicedAffineMap<f64>;
pub type Scenario = reachavoid::Scenario<f64>;
pub type SolveReport = reachavoid::SolveReport<f64>;
pub type BrasSample = reachavoid::BrasSample<f64>;
