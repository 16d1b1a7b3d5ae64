//! Age of information (AoI) and new age of information (NAoI) for
//! bufferless and small-buffer message-processing systems.

pub mod analytic;
pub mod aoi;
pub mod cli;
pub mod dist;
pub mod policies;
pub mod workload;
