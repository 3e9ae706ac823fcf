//! Joint day-ahead procurement and dynamic retail pricing with per-user
//! deficit queues.

pub mod distributions;
pub mod error;
pub mod harness;
pub mod lp;
pub mod market;
pub mod oracle;
pub mod procurement;
pub mod queues;
pub mod user;
pub mod wma;

#[cfg(test)]
mod testutil;

pub use distributions::{EmpiricalDistribution, LocationScaleDistribution};
pub use error::{Error, Result};
pub use market::{MarketMode, MarketProcess, MarketState};
pub use queues::{DeficitQueues, DriftConstants, DriftDiagnostic};
pub use user::{PiecewiseLinear, PlanningOptions, UserProfile, UserProfileSpec};
pub use wma::{
    DayRecord, Instance, MarketTiming, PriceGrid, PricingMode, RealtimePrice, RunStats, Simulation, SlotRecord,
    SystemModel, Wma, WmaConfig,
};
