//! Numerical certificates for the trace-term estimates, the noise
//! multiplier, the Itô energy balance and the regularity budget.

mod balance;
mod decomposition;
mod noise;
mod report;

pub use balance::*;
pub use decomposition::*;
pub use noise::*;
pub use report::*;
