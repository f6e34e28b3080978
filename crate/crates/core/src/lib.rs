pub mod conjugate;
pub mod error;
pub mod fundsol;
pub mod numcore;
pub mod operator;
pub mod oracle;
pub mod regularize;
pub mod secondorder;
pub mod zetadet;

pub use error::{Error, Result};
