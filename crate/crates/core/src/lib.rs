//! Two-mode bosonic Landau-Zener sweeps at four levels of description.

pub mod error;
pub mod exact;
pub mod fock;
pub mod meanfield;
pub mod phasespace;
pub mod ode;
pub mod open;
pub mod protocol;
pub mod spectra;
pub mod stats;

pub use error::{Error, Result};
pub use exact::{PlzEstimate, Sampling, TrajectoryRecord, WindowPolicy};
pub use fock::{AngularMomentumOps, LMoments, ManyBodyState, Spdm, SymTridiagonal};
pub use protocol::{Mode, SweepProtocol};
pub use meanfield::MeanFieldState;
pub use open::DensityMatrix;
pub use phasespace::{Ensemble, EnsembleEstimate, HusimiGrid, HusimiGridSpec};
