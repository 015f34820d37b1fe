//! The repacking program: choose an MP for every candidate call so the largest
//! MP load `y` is minimal, subject to
//!
//! - (a) each call on exactly one MP,
//! - (b) `B_m + Σ_c P_c·R_m·X_mc ≤ Cap_m`,
//! - (c) at most `L` calls leave their original MP (a call whose MP is not in
//!   the model must leave and always counts),
//! - (d) `y ≥ B_m + Σ_c P_c·R_m·X_mc` for every MP.
//!
//! All CPU quantities are integer ticks so objective values compare exactly.

use serde::Serialize;

use crate::cluster::{CallId, MpId};

#[derive(Debug, Clone, PartialEq)]
pub struct RepackModel {
    pub mps: Vec<MpId>,
    pub calls: Vec<CallId>,
    /// `P_c` on the reference SKU.
    pub demand: Vec<i64>,
    /// `B_m`: load of the calls that stay put.
    pub base: Vec<i64>,
    /// `R_m`.
    pub ratio: Vec<f64>,
    /// `Cap_m`.
    pub cap: Vec<i64>,
    /// Index into `mps` of each call's current MP (`O_mc = 1`); `None` when
    /// that MP is closed and the call has to move.
    pub original: Vec<Option<usize>>,
    /// `L`.
    pub budget: usize,
}

impl RepackModel {
    pub fn n_calls(&self) -> usize {
        self.calls.len()
    }

    pub fn n_mps(&self) -> usize {
        self.mps.len()
    }

    /// Load call `c` adds to MP `m`.
    pub fn weight(&self, c: usize, m: usize) -> i64 {
        (self.demand[c] as f64 * self.ratio[m]).round() as i64
    }

    pub fn o(&self, m: usize, c: usize) -> i64 {
        (self.original[c] == Some(m)) as i64
    }

    /// Calls whose current MP is outside the model.
    pub fn forced(&self) -> usize {
        self.original.iter().filter(|o| o.is_none()).count()
    }

    pub fn validate(&self) -> Result<(), String> {
        let (nc, nm) = (self.n_calls(), self.n_mps());
        if self.demand.len() != nc || self.original.len() != nc {
            return Err("per-call vectors disagree in length".into());
        }
        if self.base.len() != nm || self.ratio.len() != nm || self.cap.len() != nm {
            return Err("per-MP vectors disagree in length".into());
        }
        if nc > 0 && nm == 0 {
            return Err("calls without MPs".into());
        }
        if let Some(c) = self.demand.iter().position(|&p| p <= 0) {
            return Err(format!("P_c of {} is not positive", self.calls[c]));
        }
        if let Some(m) = self.base.iter().position(|&b| b < 0) {
            return Err(format!("B_m of {} is negative", self.mps[m]));
        }
        if self.ratio.iter().any(|r| !(*r > 0.0)) {
            return Err("R_m must be positive".into());
        }
        if self.original.iter().flatten().any(|&m| m >= nm) {
            return Err("original MP out of range".into());
        }
        if self.forced() > self.budget {
            return Err("more forced moves than the budget allows".into());
        }
        Ok(())
    }

    /// Per-MP load of an assignment (index into `mps` per call).
    pub fn loads(&self, assignment: &[usize]) -> Vec<i64> {
        let mut loads = self.base.clone();
        for (c, &m) in assignment.iter().enumerate() {
            loads[m] += self.weight(c, m);
        }
        loads
    }

    pub fn moves(&self, assignment: &[usize]) -> usize {
        assignment
            .iter()
            .zip(&self.original)
            .filter(|&(&a, o)| Some(a) != *o)
            .count()
    }

    /// Largest MP load with every call in place, or `None` when some call
    /// has no place in the model.
    pub fn original_max(&self) -> Option<i64> {
        let kept: Option<Vec<usize>> = self.original.iter().copied().collect();
        Some(self.loads(&kept?).into_iter().max().unwrap_or(0))
    }

    /// Explicit constraint rows, the form an external MIP solver consumes.
    pub fn to_linear(&self) -> LinearModel {
        let (nc, nm) = (self.n_calls(), self.n_mps());
        let x = |m: usize, c: usize| m * nc + c;
        let y = nm * nc;
        let mut rows = Vec::with_capacity(nc + 2 * nm + 1);
        for c in 0..nc {
            rows.push(Row {
                name: format!("a_{c}"),
                coeffs: (0..nm).map(|m| (x(m, c), 1)).collect(),
                sense: Sense::Eq,
                rhs: 1,
            });
        }
        for m in 0..nm {
            rows.push(Row {
                name: format!("b_{m}"),
                coeffs: (0..nc).map(|c| (x(m, c), self.weight(c, m))).collect(),
                sense: Sense::Le,
                rhs: self.cap[m] - self.base[m],
            });
        }
        // Σ_c (1 - Σ_m O_mc·X_mc) ≤ L, i.e. -Σ_c X_{orig(c),c} ≤ L - |C|.
        rows.push(Row {
            name: "c".into(),
            coeffs: (0..nc)
                .filter_map(|c| self.original[c].map(|m| (x(m, c), -1)))
                .collect(),
            sense: Sense::Le,
            rhs: self.budget as i64 - nc as i64,
        });
        for m in 0..nm {
            let mut coeffs: Vec<(usize, i64)> =
                (0..nc).map(|c| (x(m, c), self.weight(c, m))).collect();
            coeffs.push((y, -1));
            rows.push(Row {
                name: format!("d_{m}"),
                coeffs,
                sense: Sense::Le,
                rhs: -self.base[m],
            });
        }
        LinearModel {
            n_vars: nm * nc + 1,
            y_var: y,
            objective: vec![(y, 1)],
            rows,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Row {
    pub name: String,
    pub coeffs: Vec<(usize, i64)>,
    pub sense: Sense,
    pub rhs: i64,
}

/// Minimize `objective · v` over binary `X` (variables `m·|C| + c`) and
/// integer `y` (the last variable).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinearModel {
    pub n_vars: usize,
    pub y_var: usize,
    pub objective: Vec<(usize, i64)>,
    pub rows: Vec<Row>,
}

impl LinearModel {
    /// Names of the rows violated by `values`.
    pub fn violated_rows(&self, values: &[i64]) -> Vec<String> {
        self.rows
            .iter()
            .filter(|r| {
                let lhs: i64 = r.coeffs.iter().map(|&(v, a)| a * values[v]).sum();
                match r.sense {
                    Sense::Le => lhs > r.rhs,
                    Sense::Eq => lhs != r.rhs,
                }
            })
            .map(|r| r.name.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SolveStatus {
    Optimal,
    GapReached { gap: f64 },
    TimeLimit { best_y: i64, bound: i64 },
    InfeasibleRelaxed,
}

impl SolveStatus {
    pub fn label(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::GapReached { .. } => "gap_reached",
            SolveStatus::TimeLimit { .. } => "time_limit",
            SolveStatus::InfeasibleRelaxed => "infeasible_relaxed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepackSolution {
    /// Chosen MP (index into the model's `mps`) per call.
    pub assignment: Vec<usize>,
    pub y: i64,
    pub status: SolveStatus,
    pub nodes: u64,
}

impl RepackSolution {
    pub fn x(&self, m: usize, c: usize) -> bool {
        self.assignment[c] == m
    }

    /// Variable vector in `LinearModel` order.
    pub fn values(&self, model: &RepackModel) -> Vec<i64> {
        let nc = model.n_calls();
        let mut v = vec![0i64; model.n_mps() * nc + 1];
        for (c, &m) in self.assignment.iter().enumerate() {
            v[m * nc + c] = 1;
        }
        v[model.n_mps() * nc] = self.y;
        v
    }
}

/// Checks a solution against the explicit rows plus `y` being the realized
/// maximum. Cap rows are waived for relaxed solutions.
pub fn verify_solution(model: &RepackModel, sol: &RepackSolution) -> Result<(), Vec<String>> {
    let mut bad = Vec::new();
    if sol.assignment.len() != model.n_calls() {
        return Err(vec!["assignment length differs from call count".into()]);
    }
    if sol.assignment.iter().any(|&m| m >= model.n_mps()) {
        return Err(vec!["assignment references an unknown MP".into()]);
    }
    let relaxed = sol.status == SolveStatus::InfeasibleRelaxed;
    for name in model.to_linear().violated_rows(&sol.values(model)) {
        if !(relaxed && name.starts_with("b_")) {
            bad.push(name);
        }
    }
    let realized = model.loads(&sol.assignment).into_iter().max().unwrap_or(0);
    if model.n_mps() > 0 && realized != sol.y {
        bad.push(format!("y {} differs from realized max {realized}", sol.y));
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad)
    }
}
