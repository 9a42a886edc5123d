//! Command-line front end: firewall files, packet I/O, and the commands
//! behind the `sofa` binary.

pub mod app;
pub mod bench;
pub mod format;
pub mod packets;
pub mod pipeline;
