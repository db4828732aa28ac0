//! Std side of the linkage toolkit: declarative config, CSV ingest, the
//! parallel linkage driver, output files, and the clerical review service.

pub mod config;
pub mod ingest;
pub mod link;
pub mod output;
pub mod pipeline;
pub mod report;
pub mod review;
pub mod server;
