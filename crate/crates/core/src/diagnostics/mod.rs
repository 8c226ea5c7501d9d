//! Representation diagnostics: expressivity, neighbour sensitivity and
//! linear probing.

pub mod expressivity;
pub mod probe;
pub mod sensitivity;

pub use expressivity::{expressivity, rho, ExpressivityTrace};
pub use probe::{linear_probe, split_indices, ProbeRecord, ProbeResult};
pub use sensitivity::{sensitivity, SensitivityProfile};
