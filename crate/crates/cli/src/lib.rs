//! Batch front end for the spectral toolkit: tuple files in, JSON, CSV and
//! SVG artifacts out.

pub mod io;
pub mod regions;
pub mod suite;
pub mod svg;
pub mod tasks;
