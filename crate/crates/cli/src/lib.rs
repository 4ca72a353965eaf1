//! Command-line harness around the `pslab` core: dataset generation, single
//! sorts, parameter sweeps and CSV/SVG reports.

pub mod commands;
pub mod config;
pub mod record;
pub mod svg;
