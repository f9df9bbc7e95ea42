//! Simulation library for networks of community currencies.

pub mod accounting;
pub mod economy;
pub mod engine;
pub mod identity;
pub mod justice;
pub mod ledger;
pub mod minting;
pub mod repro;
pub mod scenario;
