//! File formats, HTTP backends, configuration and batch orchestration around
//! `ragtree-core`.

pub mod config;
pub mod data;
pub mod formats;
pub mod http;
pub mod run;
pub mod store;
