//! Two-user cooperative uplink with NOMA and rate-splitting: rate models,
//! max-min power allocation, outage analysis and Monte-Carlo evaluation.

pub mod channel;
pub mod error;
pub mod montecarlo;
pub mod outage;
pub mod rates;
pub mod sca;
pub mod units;

pub use error::{Error, Result};
