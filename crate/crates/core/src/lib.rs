//! Gradient flow of the relative entropy between a fixed affinity matrix
//! `P` and the similarity distribution `Q(Y)` of a point configuration,
//! the continuous-time limit of SNE and t-SNE.
//!
//! The crate covers kernels and their structural checks, affinity
//! construction from data, the cost and its gradient field, an adaptive
//! integrator with snapshot output, long-time diagnostics, and symmetric
//! scenarios that reduce to a scalar ODE.

pub mod affinity;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod integrator;
pub mod io;
pub mod kernel;
pub mod ode;

pub use affinity::{AffinityMatrix, Bandwidths, HighDimDataset, SquareMatrix};
pub use diagnostics::{DiagnosticRecord, ExponentFit, Quantity};
pub use error::{Error, Result};
pub use experiments::{ScenarioName, ScenarioSpec};
pub use flow::{Configuration, PairwiseCache};
pub use integrator::{FlowState, IntegrateError, Method, Schedule, Snapshot, StepControl, Trajectory};
pub use kernel::{Kernel, KernelFamily};
pub use ode::Stats;
