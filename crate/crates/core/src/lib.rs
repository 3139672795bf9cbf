//! Streaming ℓ1-regularized estimation of sparse, time-varying parameters of a
//! Bernoulli point process with logistic link.

pub mod confidence;
pub mod crossval;
pub mod error;
pub mod filters;
pub mod gof;
pub mod io;
pub mod linalg;
pub mod model;
pub mod prox;
pub mod simulation;
pub mod strf;

pub use error::{Error, Result};
pub use filters::{
    FilterConfig, IterationSemantics, PointProcessFilter, Ppf0, Ppf1, Sdppf, Ssppf, SsppfConfig,
};
pub use model::{ParamVector, SpikeTrain, StimulusSequence, WindowData};
pub use prox::ProxHyper;
