use alloc::vec::Vec;

use super::grid::PieceGrid;
use super::params::TaskHead;

/// A survival model's prediction for one subject, queried at times measured
/// from the prediction point.
pub trait SurvivalCurve {
    fn survival(&self, t: f64) -> f64;
    fn cumulative_hazard(&self, t: f64) -> f64;

    /// `Λ(horizon) / horizon`, the time-averaged hazard over `[0, horizon]`.
    fn average_hazard(&self, horizon: f64) -> f64 {
        if horizon > 0.0 {
            self.cumulative_hazard(horizon) / horizon
        } else {
            0.0
        }
    }
}

/// Piecewise-constant hazard on a [`PieceGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseHazard {
    pub grid: PieceGrid,
    pub hazards: Vec<f64>,
}

impl PiecewiseHazard {
    pub fn new(grid: PieceGrid, hazards: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), hazards.len());
        PiecewiseHazard { grid, hazards }
    }

    /// Hazards of task `task` at row `row` of `states`.
    pub fn from_head(head: &TaskHead, grid: &PieceGrid, states: &[f64], row: usize, task: usize) -> Self {
        let hazards = (0..head.num_pieces).map(|p| libm::exp(head.log_hazard(states, row, task, p))).collect();
        PiecewiseHazard { grid: grid.clone(), hazards }
    }

    /// Rate in the piece containing `t`.
    pub fn hazard(&self, t: f64) -> f64 {
        self.hazards[self.grid.piece_of(t.max(0.0))]
    }
}

impl SurvivalCurve for PiecewiseHazard {
    fn survival(&self, t: f64) -> f64 {
        libm::exp(-self.cumulative_hazard(t))
    }

    fn cumulative_hazard(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.hazards.iter().enumerate().map(|(p, &lam)| lam * self.grid.exposure(p, t)).sum()
    }
}
