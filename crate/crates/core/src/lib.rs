//! Exact construction and verification of norming sets for mixed Tsirelson
//! spaces, the HI spaces built on them and their HI extensions.

pub mod arena;
pub mod cli;
pub mod coding;
pub mod error;
pub mod extension;
pub mod families;
pub mod hi_core;
pub mod mt_norm;
pub mod ratvec;
pub mod schreier_ext;
pub mod tree;

pub use error::{Error, Result};
pub use ratvec::{Rational, SparseVector};
