//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use popdyn_core::{DiscreteMeasure, PayoffKernel, StrategyGrid, ThetaSpec};

pub struct Fixture {
    pub grid: Arc<StrategyGrid>,
    pub kernel: PayoffKernel,
    pub state: DiscreteMeasure,
}

/// Continuous war of attrition with `V = 1` on `[0, 2]` and a Gaussian state.
pub fn war_fixture(n: usize) -> Fixture {
    let grid = StrategyGrid::uniform(n, 0.0, 2.0).expect("valid grid");
    let kernel = PayoffKernel::continuous_war(1.0, ThetaSpec::Logistic { alpha: 100.0 }, &grid).expect("valid game");
    let state = DiscreteMeasure::gaussian(&grid, 1.0, 0.1).expect("valid state");
    Fixture { grid, kernel, state }
}
