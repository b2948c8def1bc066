//! File formats, score caching, external scorers, the HTTP gateway and the
//! command line around `semir-core`.

pub mod cache;
pub mod cli;
pub mod config;
pub mod error;
pub mod external;
pub mod io;
pub mod pipeline;
pub mod server;

pub use error::{Error, Result};
