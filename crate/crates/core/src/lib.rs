//! Valuing building-energy flexibility under a measured-peak grid tariff.
//!
//! The pipeline: daily household scheduling problems are built as linear
//! programs with an SOS-2 future-cost block ([`model`]), solved by a
//! bounded-variable simplex ([`solver`]), chained backward over the month
//! into expected-future-cost curves ([`sdp`]), and evaluated forward by
//! Monte Carlo simulation ([`simulate`]) over discretized weather and EV
//! scenarios ([`scenario`]).

pub mod solver;

pub mod model;
pub mod scenario;
pub mod sdp;
pub mod simulate;

pub mod io;

pub mod oracle;
