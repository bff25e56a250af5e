//! Sphere-plate Casimir metrology toolkit: exact sphere-plate electrostatics,
//! Lifshitz pressures from tabulated optical data, synthetic frequency-shift
//! experiments, the calibration chain and the comparison with theory.

// Guards like `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod calibrate;
pub mod constants;
pub mod csvio;
pub mod electrostatics;
pub mod error;
pub mod lifshitz;
pub mod numerics;
pub mod optics;
pub mod simulate;

pub use analysis::{ComparisonReport, CompensationMode, ErrorBudget, RatioTable, ResidualPotential, Verdict};
pub use calibrate::{CalibrationResult, ParabolaFitPoint};
pub use electrostatics::{ElectricDrive, SpherePlateGeometry};
pub use error::{Error, Result};
pub use lifshitz::{LifshitzCalculator, LifshitzSettings, PlatePressure, PressureCurve};
pub use numerics::FitResult;
pub use optics::{DrudeParameters, Extrapolation, OpticalTable, PermittivityModel};
pub use simulate::{ExperimentConfig, SweepDataset, V0Law};
