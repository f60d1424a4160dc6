//! Public-transport accessibility typology from static GTFS timetables.
//!
//! Stops are grouped into H3 micro-regions, each region is described by
//! hourly trip and distinct-headsign counts, the vectors are min-max scaled,
//! embedded with a small autoencoder and clustered hierarchically. The
//! nested cuts of the dendrogram form the levels of a typology.

pub mod autoencoder;
pub mod clustering;
pub mod features;
pub mod gtfs;
pub mod normalize;
mod percent;
pub mod region;
pub mod report;
pub mod synthetic;

#[cfg(feature = "pipeline")]
pub mod pipeline;

pub use percent::Percent;
