//! Experiment harness around `ngmres_core`: argument parsing, history files,
//! SVG plots, figure reproduction and seeded property suites.

pub mod app;
pub mod checks;
pub mod figures;
pub mod history;
pub mod parse;
pub mod plot;
pub mod report;
