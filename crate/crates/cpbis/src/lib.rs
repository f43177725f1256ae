//! BLE neighbor-discovery latency simulation and two-broadcast-interval
//! screening.
//!
//! The crate simulates the discovery latency of a BLE advertiser under a
//! given scanner duty cycle, sweeps broadcast intervals into (A, L)
//! distributions, superimposes them by scanner market share, and screens
//! out the two broadcast intervals plus their time proportion that
//! minimize the weighted worst-case latency under a minimum equivalent
//! broadcast interval constraint.

pub mod config;
pub mod eval;
pub mod screen;
pub mod sim;
pub mod sweep;
pub mod types;
