//! Coupled-cavity QED toolkit: a quantum emitter in a high-Q target cavity
//! whose vacuum field is reshaped by a tunable, lossier Fabry-Perot cavity.
//!
//! Layers, bottom up: [`modespace`] (coupled-mode algebra), [`tuning`]
//! (FP wavelength over time), [`lindblad`] (master-equation dynamics),
//! [`spectra`] (maps, filtered curves, burst metrics) and [`fitting`]
//! (parameter recovery from anticrossing data).

pub mod error;
pub mod fitting;
pub mod lindblad;
pub mod modespace;
pub mod par;
pub mod spectra;
pub mod tuning;
pub mod units;

pub use error::{Error, Result};
pub use par::Exec;
