pub mod cli;
pub mod dataset;
pub mod edge;
pub mod eval;
pub mod http;
pub mod iqa;
pub mod pipeline;
pub mod raster;
pub mod review;
pub mod selection;
