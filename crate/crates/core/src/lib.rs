//! Statistical mechanics over the halting programs of a small prefix-free
//! machine.
//!
//! Programs of the `bitvm1` machine ([`vm`]) are enumerated up to a length
//! and step cap ([`enumerate`]). Each halting program carries three
//! observables: log runtime `E = log2 t`, length `V`, and output `N`. The
//! [`ensemble`] module builds Gibbs ensembles `p(x) ∝ exp(-βE - γV - δN)` over
//! them with certified partition-function enclosures, and [`thermo`] checks
//! the thermodynamic calculus (conjugates, Maxwell relations, heat-engine
//! cycles) numerically on the truncated ensembles.

pub mod bits;
pub mod cli;
pub mod ensemble;
pub mod enumerate;
pub mod summation;
pub mod thermo;
pub mod vm;

pub use bits::BitString;
pub use enumerate::{CorpusSnapshot, HaltingRecord};
