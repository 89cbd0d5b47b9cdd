//! Multimode Fabry-Perot analysis of waveguide transmission spectra.
//!
//! The crate simulates the fringe pattern of a multimode waveguide resonator,
//! calibrates and stitches spectrograph exposures, transforms the spectrum to
//! the optical-length domain to separate modes and their round-trip
//! harmonics, and fits facet reflectivity and propagation loss.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyze;
pub mod calibrate;
pub mod cli;
pub mod error;
pub mod fit;
pub mod interp;
pub mod io;
pub mod lsq;
pub mod model;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{
    DispersionModel, InstrumentSpec, ModeDetection, ModeSpec, ResonatorSpec, Spectrum, SpectrumMeta,
};
pub use simulate::Band;
