//! Migration planning: the greedy hot-to-cold baseline and the repacking
//! pipeline (candidate selection, the min-max program, its solver and wave
//! scheduling).

pub mod greedy;
pub mod model;
pub mod planner;
pub mod solver;
pub mod waves;

use serde::Serialize;

use crate::cluster::{CallId, MpId};

pub use greedy::plan_greedy;
pub use model::{verify_solution, LinearModel, RepackModel, RepackSolution, SolveStatus};
pub use planner::{
    build_repack_model, plan_by_virtual_clusters, select_candidates, Candidates, MipRound,
    PlannerConfig, VcSolve,
};
pub use solver::{solve_repack, BranchAndBound, RepackSolver, SolveLimits};
pub use waves::{schedule_waves, Scheduled};

/// One call relocation. Loads are CPU ticks on the source and destination SKU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Move {
    pub call: CallId,
    pub from: MpId,
    pub to: MpId,
    pub from_load: i64,
    pub to_load: i64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MigrationPlan {
    /// Executed in order, one simulated second apart.
    pub waves: Vec<Vec<Move>>,
    /// Moves dropped from this round.
    pub deferred: Vec<Move>,
}

impl MigrationPlan {
    pub fn len(&self) -> usize {
        self.waves.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn moves(&self) -> impl Iterator<Item = &Move> {
        self.waves.iter().flatten()
    }

    /// Appends `other` wave by wave.
    pub fn merge(&mut self, other: Scheduled) {
        if self.waves.len() < other.waves.len() {
            self.waves.resize(other.waves.len(), Vec::new());
        }
        for (k, wave) in other.waves.into_iter().enumerate() {
            self.waves[k].extend(wave);
        }
        self.deferred.extend(other.deferred);
    }
}
