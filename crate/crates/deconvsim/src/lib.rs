//! File formats, bundled benchmarks, report writers and the command-line
//! front end for the `deconv-core` accelerator model.

pub mod benchmarks;
pub mod cli;
pub mod formats;
pub mod report;
pub mod runner;
pub mod tensors;
