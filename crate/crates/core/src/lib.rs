//! Metadata access for remote I/O namespaces: a pipelined transfer channel,
//! an edge/fog/cloud cache continuum, and access-pattern prefetch predictors.

pub mod bench;
pub mod cache;
pub mod config;
pub mod continuum;
pub mod meta;
pub mod predict;
pub mod remote;
pub mod replay;
pub mod report;
pub mod sim;
pub mod trace;
pub mod transfer;
