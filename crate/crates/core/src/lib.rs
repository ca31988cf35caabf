//! Hurricane wind-field ensembles turned into probabilistic infrastructure
//! damage, outage and loss estimates.

pub mod aggregate;
pub mod cli;
pub mod config;
pub mod critical_zone;
pub mod ensemble;
pub mod error;
pub mod export;
pub mod geo_grid;
pub mod lsq;
pub mod nhpp;
pub mod outage_glm;
pub mod sweep;
pub mod wind_field;

pub use error::{Error, Result};
