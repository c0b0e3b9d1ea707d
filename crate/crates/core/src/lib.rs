//! Synthetic medium/low-voltage distribution grids from OpenStreetMap data.
//!
//! The pipeline tessellates a study polygon into hexagonal cells, grows one
//! radial LV grid per cell along the road network, connects every MV/LV
//! transformer through a radial MV grid, sizes cables and transformers from
//! coincidence-factor peak demand, and validates the result with a
//! backward/forward sweep power flow and a short-circuit calculation.

pub mod error;
pub mod geodata;
pub mod geometry;
pub mod gridmodel;
pub mod lv_synth;
pub mod metrics;
pub mod mv_synth;
pub mod par;
pub mod pipeline;
pub mod profiles;
pub mod sizing;
pub mod solver;
pub mod spatial;
pub mod synth_map;
pub mod tessellate;

pub use error::{Error, Result};
pub use geometry::GeoPoint;
pub use gridmodel::Syngrid;
