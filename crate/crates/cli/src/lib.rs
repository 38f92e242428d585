//! Command line front end and HTTP service over a loaded triple graph.

pub mod cli;
pub mod server;
