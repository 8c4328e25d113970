#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Active inference in generalized coordinates.

pub mod control;
pub mod error;
pub mod gencoords;
pub mod inference;
pub mod model;
pub mod oracles;
pub mod planning;
pub mod plants;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases.
pub mod f64 {
    pub type GeneralizedVector = crate::gencoords::GeneralizedVector<f64>;
    pub type Beliefs = crate::inference::Beliefs<f64>;
    pub type EstimatorConfig = crate::inference::EstimatorConfig<f64>;
    pub type NoiseSpec = crate::model::NoiseSpec<f64>;
    pub type LinearModel = crate::model::LinearModel<f64>;
    pub type AttractorModel = crate::model::AttractorModel<f64>;
    pub type ControllerConfig = crate::control::ControllerConfig<f64>;
    pub type DiscretePomdp = crate::planning::DiscretePomdp<f64>;
    pub type PlanPosterior = crate::planning::PlanPosterior<f64>;
    pub type GaussianPlan = crate::planning::GaussianPlan<f64>;
    pub type LtiPlant = crate::plants::LtiPlant<f64>;
    pub type MountainCarPlant = crate::plants::MountainCarPlant<f64>;
}

/// Single-precision aliases.
pub mod f32 {
    pub type GeneralizedVector = crate::gencoords::GeneralizedVector<f32>;
    pub type Beliefs = crate::inference::Beliefs<f32>;
    pub type EstimatorConfig = crate::inference::EstimatorConfig<f32>;
    pub type NoiseSpec = crate::model::NoiseSpec<f32>;
    pub type LinearModel = crate::model::LinearModel<f32>;
    pub type AttractorModel = crate::model::AttractorModel<f32>;
    pub type ControllerConfig = crate::control::ControllerConfig<f32>;
    pub type DiscretePomdp = crate::planning::DiscretePomdp<f32>;
    pub type GaussianPlan = crate::planning::GaussianPlan<f32>;
}
