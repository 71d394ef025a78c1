pub mod error;
pub mod golden;
pub mod io;
pub mod measures;
pub mod oracle;
pub mod programs;
pub mod quantum;
pub mod tasks;
pub mod theories;
pub mod tolerance;

pub use error::{CoreError, Result};
pub use tolerance::{Ctx, Tolerances};
