//! Evolutionary dynamics on one-dimensional continuous strategy spaces,
//! discretized on a grid: kernel games, BNN and pairwise-comparison mean
//! dynamics, passivity diagnostics and grid-refinement studies.

mod bl;
pub mod approximation;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod grid;
pub mod measure;

pub use approximation::{
    gronwall_bound, refine_study, ChoiceMobilityReport, RefinementReport, RefinementRow, RefinementSetup,
    RegularityConstants,
};
pub use diagnostics::{nash_check, nash_gap, storage, NashCheck};
pub use dynamics::{
    mean_field, simulate_dpedm, simulate_edm, ImpartialRate, Method, RevisionProtocol, SmoothingConfig, TimeGrid,
    Trajectory,
};
pub use error::{Error, Result};
pub use game::{KernelSpec, PayoffKernel, ThetaSpec};
pub use grid::{ReferenceMeasure, StrategyGrid};
pub use measure::{pairing, DiscreteMeasure, MeasureKind, PayoffVector};
