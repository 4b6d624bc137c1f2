pub mod error;
pub mod matrices;
pub mod cauchy;
pub mod gridsim;
pub mod psdc;
pub mod psmma;
pub mod report;
pub mod secular;

pub use error::{PsdcError, Result};
