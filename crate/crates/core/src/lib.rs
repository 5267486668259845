//! Numerical toolkit for core-excited Rydberg states of Yb: five-channel
//! MQDT autoionization spectra and light shifts, Lindblad simulations of
//! control-field-suppressed Rydberg excitation, Bell-state fidelity bounds,
//! spectrum fitting, and addressing-error scaling laws.

pub mod constants;
pub mod dynamics;
pub mod errbudget;
pub mod fit;
pub mod mqdt;
pub mod spectrum;

pub use dynamics::PulseConfig;
pub use fit::{FitResult, SpectrumDataset};
pub use mqdt::{ChannelModel, MuMatrix, ThresholdSet};
pub use spectrum::{FieldConfig, SpectrumModel, TwoLevelParams};
