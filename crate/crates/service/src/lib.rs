//! Command-line workflow and HTTP service over `bnelicit` model files.

pub mod commands;
pub mod error;
pub mod http;
pub mod proposals;

pub use error::{Diagnostic, Result, ServiceError};
