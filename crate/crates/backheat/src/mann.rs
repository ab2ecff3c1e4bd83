//! Mann iteration: v_k = Σ_{j≤k} a_{kj} x_j, x_{k+1} = 𝒯(v_k).
//!
//! The coefficient matrix A is lower triangular with nonnegative rows summing
//! to one. Two step paths are provided:
//!
//! * the general path materializes matrix rows and keeps the full iterate
//!   history (O(kN) memory) — it exists for arbitrary matrices and as the
//!   cross-check oracle;
//! * the segmenting fast path, where rows obey
//!   a_{i+1,j} = (1 − a_{i+1,i+1}) a_{ij}, collapses to
//!   v_{k+1} = (1 − d_k) v_k + d_k 𝒯(v_k) with d_k := a_{k+1,k+1} and streams
//!   in O(N) memory. This is the default.
//!
//! Iteration indices are 1-based: x₁ is the starting guess and v₁ = x₁.
//! Convergence of the averaged iteration needs Σ d_k(1 − d_k) = ∞; true
//! divergence is not machine-checkable, so runs report the partial sum and
//! warn when a schedule tagged divergent fails to clear a threshold.
//!
//! State is single-owner mutable during a run and the trace is append-only;
//! a finished [`RunRecord`] is immutable and distinct runs share nothing, so
//! they may execute concurrently.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::spectral::CoefVec;

/// Diagonal schedule d_k ∈ [0, 1] generating a segmenting matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Schedule {
    /// d_k ≡ d. With d = 1 this is Picard / successive approximation;
    /// with d = 0 the iteration is frozen at x₁.
    Constant { d: f64 },
    /// d_k = 1/(k+1). Σ d_k(1−d_k) diverges; the generated matrix has the
    /// Cesàro rows (1/k, …, 1/k).
    Harmonic,
    /// d_k = 2^{−k}. Σ d_k(1−d_k) converges — a negative control that
    /// witnesses the necessity of the divergence hypothesis.
    GeometricDecay,
}

impl Schedule {
    pub fn picard() -> Self {
        Schedule::Constant { d: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Constant { d } if !(0.0..=1.0).contains(&d) => {
                Err(Error::ScheduleOutOfRange { k: 1, d })
            }
            _ => Ok(()),
        }
    }

    /// Diagonal entry d_k = a_{k+1,k+1}, k ≥ 1.
    pub fn d(&self, k: usize) -> f64 {
        match *self {
            Schedule::Constant { d } => d,
            Schedule::Harmonic => 1.0 / (k as f64 + 1.0),
            Schedule::GeometricDecay => 0.5f64.powi(k as i32),
        }
    }

    /// Whether Σ d_k(1−d_k) diverges for this schedule.
    pub fn sum_diverges(&self) -> bool {
        match *self {
            Schedule::Constant { d } => d > 0.0 && d < 1.0,
            Schedule::Harmonic => true,
            Schedule::GeometricDecay => false,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Schedule::Constant { d } => {
                if d == 1.0 {
                    "picard".into()
                } else {
                    format!("constant(d={d})")
                }
            }
            Schedule::Harmonic => "harmonic".into(),
            Schedule::GeometricDecay => "geometric-decay".into(),
        }
    }
}

/// Lower-triangular Mann coefficient matrix, materialized row by row.
///
/// Row k has exactly k entries a_{k1}…a_{kk}; all entries are nonnegative
/// and each row sums to 1 within 1e−12. Matrices built from a schedule grow
/// lazily; user-supplied matrices are fixed.
#[derive(Debug, Clone)]
pub struct MannMatrix {
    rows: Vec<Vec<f64>>,
    generator: Option<Schedule>,
}

const ROW_SUM_TOL: f64 = 1e-12;

impl MannMatrix {
    /// Wraps explicit rows, validating conditions (nonnegativity, lower
    /// triangular shape, unit row sums).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidMatrixRow {
                row: 1,
                detail: "matrix needs at least one row".into(),
            });
        }
        for (i, row) in rows.iter().enumerate() {
            Self::validate_row(row, i + 1)?;
        }
        Ok(Self {
            rows,
            generator: None,
        })
    }

    /// Materializes the segmenting matrix of a schedule via the recurrence
    /// a_{i+1,j} = (1 − d_i) a_{ij}, a_{i+1,i+1} = d_i, starting from row (1).
    pub fn segmenting(schedule: &Schedule, n_rows: usize) -> Result<Self> {
        schedule.validate()?;
        if n_rows == 0 {
            return Err(Error::InvalidMatrixRow {
                row: 1,
                detail: "matrix needs at least one row".into(),
            });
        }
        let mut m = Self {
            rows: vec![vec![1.0]],
            generator: Some(schedule.clone()),
        };
        m.ensure_rows(n_rows)?;
        Ok(m)
    }

    fn validate_row(row: &[f64], index: usize) -> Result<()> {
        if row.len() != index {
            return Err(Error::InvalidMatrixRow {
                row: index,
                detail: format!(
                    "row {} must have {} entries, has {}",
                    index,
                    index,
                    row.len()
                ),
            });
        }
        if let Some(j) = row
            .iter()
            .position(|&a| a.is_nan() || a < 0.0 || !a.is_finite())
        {
            return Err(Error::InvalidMatrixRow {
                row: index,
                detail: format!("negative or non-finite coefficient in column {}", j + 1),
            });
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidMatrixRow {
                row: index,
                detail: format!("row sum {} deviates from 1 beyond {}", sum, ROW_SUM_TOL),
            });
        }
        Ok(())
    }

    /// Extends a schedule-generated matrix through row `n`.
    pub fn ensure_rows(&mut self, n: usize) -> Result<()> {
        while self.rows.len() < n {
            let k = self.rows.len(); // producing row k+1; its diagonal is d_k
            let schedule = self.generator.as_ref().ok_or(Error::MatrixExhausted {
                rows: self.rows.len(),
                needed: n,
            })?;
            let d = schedule.d(k);
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::ScheduleOutOfRange { k, d });
            }
            let prev = &self.rows[k - 1];
            let mut row = Vec::with_capacity(k + 1);
            for &a in prev {
                row.push((1.0 - d) * a);
            }
            row.push(d);
            self.rows.push(row);
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, k: usize) -> Option<&[f64]> {
        self.rows.get(k - 1).map(|r| r.as_slice())
    }

    /// a_{kk}, the diagonal of row k.
    pub fn diagonal(&self, k: usize) -> Option<f64> {
        self.rows.get(k - 1).map(|r| r[k - 1])
    }
}

/// Fixed-point operator usable by the iteration.
pub trait MannOperator {
    /// 𝒯 v.
    fn apply(&self, v: &CoefVec) -> Result<CoefVec>;
    /// Fixed-point residual of x (zero exactly at the fixed point).
    fn residual(&self, x: &CoefVec) -> Result<CoefVec>;
    /// Parameters for run manifests.
    fn describe(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Current iterates: k is 1-based and v₁ = x₁.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub k: usize,
    pub x: CoefVec,
    pub v: CoefVec,
}

impl IterationState {
    pub fn start(x1: CoefVec) -> Self {
        Self {
            k: 1,
            v: x1.clone(),
            x: x1,
        }
    }
}

/// Quantities produced by one step k → k+1.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    /// Diagonal coefficient d_k used by the step.
    pub diag: f64,
    /// ‖v_k − 𝒯(v_k)‖₀ = ‖(I − 𝒯) v_k‖₀.
    pub op_defect_norm: f64,
    /// ‖v_{k+1} − v_k‖₀.
    pub v_diff_norm: f64,
}

/// One segmenting step: x_{k+1} = 𝒯(v_k), v_{k+1} = (1−d_k)v_k + d_k x_{k+1}.
pub fn mann_step_segmenting<O: MannOperator + ?Sized>(
    state: &mut IterationState,
    schedule: &Schedule,
    op: &O,
) -> Result<StepInfo> {
    let d = schedule.d(state.k);
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::ScheduleOutOfRange { k: state.k, d });
    }
    let x_next = op.apply(&state.v)?;
    let op_defect_norm = state.v.sub(&x_next)?.l2_norm();
    let v_next = state.v.add_scaled(1.0 - d, &x_next, d)?;
    let v_diff_norm = v_next.sub(&state.v)?.l2_norm();
    state.k += 1;
    state.x = x_next;
    state.v = v_next;
    Ok(StepInfo {
        diag: d,
        op_defect_norm,
        v_diff_norm,
    })
}

/// One general-matrix step. `history` must hold x₁…x_k on entry; the row
/// k+1 of the matrix is materialized on demand for schedule-generated
/// matrices and the new v_{k+1} is the full convex combination of the
/// extended history.
pub fn mann_step_general<O: MannOperator + ?Sized>(
    state: &mut IterationState,
    history: &mut Vec<CoefVec>,
    matrix: &mut MannMatrix,
    op: &O,
) -> Result<StepInfo> {
    if history.len() != state.k {
        return Err(Error::InvalidMatrixRow {
            row: state.k,
            detail: format!(
                "iterate history holds {} entries, expected {}",
                history.len(),
                state.k
            ),
        });
    }
    matrix.ensure_rows(state.k + 1)?;
    let x_next = op.apply(&state.v)?;
    let op_defect_norm = state.v.sub(&x_next)?.l2_norm();
    history.push(x_next.clone());

    let row = matrix.row(state.k + 1).expect("row ensured");
    let n = state.v.coef().len();
    let mut coef = vec![0.0; n];
    for (a, x) in row.iter().zip(history.iter()) {
        x.check_grid(&state.v)?;
        for (c, &xj) in coef.iter_mut().zip(x.coef()) {
            *c += a * xj;
        }
    }
    let v_next = CoefVec::new(state.v.grid().clone(), coef)?;
    let v_diff_norm = v_next.sub(&state.v)?.l2_norm();
    let diag = matrix.diagonal(state.k + 1).expect("row ensured");
    state.k += 1;
    state.x = x_next;
    state.v = v_next;
    Ok(StepInfo {
        diag,
        op_defect_norm,
        v_diff_norm,
    })
}

/// Which step path a run uses.
#[derive(Debug, Clone)]
pub enum Driver {
    Segmenting(Schedule),
    General(MannMatrix),
}

impl Driver {
    fn name(&self) -> String {
        match self {
            Driver::Segmenting(s) => s.name(),
            Driver::General(m) => match &m.generator {
                Some(s) => format!("general({})", s.name()),
                None => "general(explicit)".into(),
            },
        }
    }

    fn divergence_tagged(&self) -> bool {
        match self {
            Driver::Segmenting(s) => s.sum_diverges(),
            Driver::General(m) => m.generator.as_ref().is_some_and(|s| s.sum_diverges()),
        }
    }
}

/// Stopping predicate evaluated on the residual of x_k before each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Run to the iteration cap.
    None,
    /// Stop at the first k with ‖r_k‖₀ ≤ tol (exact-data runs).
    ResidualBelow(f64),
    /// Discrepancy principle: stop at the first k with ‖r_k‖₀ ≤ μ ε.
    Discrepancy { mu: f64, eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// The discrepancy predicate fired.
    Discrepancy,
    /// The residual tolerance fired.
    ResidualTol,
    /// max_iter exhausted — a recorded outcome, not an error.
    Cap,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Discrepancy => "discrepancy",
            StopReason::ResidualTol => "residual-tol",
            StopReason::Cap => "cap",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub max_iter: usize,
    pub stop: StopRule,
    /// Reference solution; when present the trace records ‖ref − x_k‖₀ and
    /// ‖ref − v_k‖₀.
    pub reference: Option<CoefVec>,
    /// Keep the full x and v histories (O(kN) memory).
    pub record_iterates: bool,
    /// Threshold the divergence surrogate Σ d_k(1−d_k) must clear by the end
    /// of a run whose schedule is tagged divergent; otherwise a warning is
    /// recorded.
    pub divergence_threshold: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            stop: StopRule::None,
            reference: None,
            record_iterates: false,
            divergence_threshold: 1.0,
        }
    }
}

/// One trace row; `k` is the 1-based iteration index. Step-derived fields
/// are absent on the final row, where no step was taken.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub k: usize,
    pub residual_norm: f64,
    pub v_diff_norm: Option<f64>,
    pub error_norm: Option<f64>,
    pub v_error_norm: Option<f64>,
    pub op_defect_norm: Option<f64>,
    /// Σ_{j<k} d_j(1−d_j): the divergence surrogate accumulated by the steps
    /// that produced v_k.
    pub sum_dk_1mdk: f64,
}

/// Full per-iteration trace of a run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub stop_reason: StopReason,
    pub k_stop: usize,
    pub final_x: CoefVec,
    pub final_v: CoefVec,
    pub schedule_name: String,
    pub divergence_tagged: bool,
    pub divergence_sum: f64,
    pub warnings: Vec<String>,
    pub x_history: Option<Vec<CoefVec>>,
    pub v_history: Option<Vec<CoefVec>>,
    pub operator_meta: serde_json::Value,
}

impl RunRecord {
    pub fn residual_norms(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.residual_norm).collect()
    }

    pub fn error_norms(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.error_norm).collect()
    }

    pub fn final_residual(&self) -> f64 {
        self.rows.last().map(|r| r.residual_norm).unwrap_or(0.0)
    }

    pub fn final_error(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.error_norm)
    }

    /// CSV export: `k,residual_norm,v_diff_norm,error_norm,sum_dk_1mdk`,
    /// with empty cells for absent optional values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,residual_norm,v_diff_norm,error_norm,sum_dk_1mdk\n");
        for row in &self.rows {
            let vd = row.v_diff_norm.map(|v| v.to_string()).unwrap_or_default();
            let en = row.error_norm.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.k, row.residual_norm, vd, en, row.sum_dk_1mdk
            ));
        }
        out
    }

    /// JSON metadata block for manifests.
    pub fn metadata_json(&self) -> serde_json::Value {
        json!({
            "schedule": self.schedule_name,
            "stop_reason": self.stop_reason.as_str(),
            "k_stop": self.k_stop,
            "iterations_recorded": self.rows.len(),
            "final_residual": self.final_residual(),
            "final_error": self.final_error(),
            "divergence_tagged": self.divergence_tagged,
            "divergence_sum": self.divergence_sum,
            "warnings": self.warnings,
            "operator": self.operator_meta,
        })
    }
}

/// Drives the Mann iteration until the stop rule fires or max_iter is
/// reached, recording residual norms, step norms and (given a reference)
/// error norms at every k.
pub fn run_iteration<O: MannOperator + ?Sized>(
    op: &O,
    x1: &CoefVec,
    driver: Driver,
    opts: &RunOptions,
) -> Result<RunRecord> {
    if opts.max_iter == 0 {
        return Err(Error::StoppingConfig("max_iter must be at least 1".into()));
    }
    if let Some(r) = &opts.reference {
        r.check_grid(x1)?;
    }
    if let Driver::Segmenting(s) = &driver {
        s.validate()?;
    }

    let schedule_name = driver.name();
    let divergence_tagged = driver.divergence_tagged();
    let (mut seg_schedule, mut general) = match driver {
        Driver::Segmenting(s) => (Some(s), None),
        Driver::General(m) => (None, Some((m, vec![x1.clone()]))),
    };

    let mut state = IterationState::start(x1.clone());
    let mut rows: Vec<RunRow> = Vec::new();
    let mut sum_dk = 0.0;
    let mut x_history = opts.record_iterates.then(|| vec![x1.clone()]);
    let mut v_history = opts.record_iterates.then(|| vec![x1.clone()]);

    let stop_reason = loop {
        let k = state.k;
        let residual_norm = op.residual(&state.x)?.l2_norm();
        let (error_norm, v_error_norm) = match &opts.reference {
            Some(r) => (
                Some(r.sub(&state.x)?.l2_norm()),
                Some(r.sub(&state.v)?.l2_norm()),
            ),
            None => (None, None),
        };
        let fired = match opts.stop {
            StopRule::None => false,
            StopRule::ResidualBelow(tol) => residual_norm <= tol,
            StopRule::Discrepancy { mu, eps } => residual_norm <= mu * eps,
        };
        if fired || k == opts.max_iter {
            rows.push(RunRow {
                k,
                residual_norm,
                v_diff_norm: None,
                error_norm,
                v_error_norm,
                op_defect_norm: None,
                sum_dk_1mdk: sum_dk,
            });
            break if fired {
                match opts.stop {
                    StopRule::Discrepancy { .. } => StopReason::Discrepancy,
                    StopRule::ResidualBelow(_) => StopReason::ResidualTol,
                    StopRule::None => unreachable!("StopRule::None never fires"),
                }
            } else {
                StopReason::Cap
            };
        }

        let info = match (&mut seg_schedule, &mut general) {
            (Some(schedule), None) => mann_step_segmenting(&mut state, schedule, op)?,
            (None, Some((matrix, history))) => mann_step_general(&mut state, history, matrix, op)?,
            _ => unreachable!("driver is exactly one of the two paths"),
        };
        rows.push(RunRow {
            k,
            residual_norm,
            v_diff_norm: Some(info.v_diff_norm),
            error_norm,
            v_error_norm,
            op_defect_norm: Some(info.op_defect_norm),
            sum_dk_1mdk: sum_dk,
        });
        sum_dk += info.diag * (1.0 - info.diag);
        if let (Some(xs), Some(vs)) = (&mut x_history, &mut v_history) {
            xs.push(state.x.clone());
            vs.push(state.v.clone());
        }
    };

    let mut warnings = Vec::new();
    if divergence_tagged && sum_dk < opts.divergence_threshold {
        warnings.push(format!(
            "schedule `{}` is tagged divergent but its partial sum {} stayed below the threshold {} within {} iterations",
            schedule_name, sum_dk, opts.divergence_threshold, state.k
        ));
    }

    Ok(RunRecord {
        rows,
        stop_reason,
        k_stop: state.k,
        final_x: state.x,
        final_v: state.v,
        schedule_name,
        divergence_tagged,
        divergence_sum: sum_dk,
        warnings,
        x_history,
        v_history,
        operator_meta: op.describe(),
    })
}

/// Conformance summary of the fixed-point defects ‖(I − 𝒯) v_k‖₀ of a run.
#[derive(Debug, Clone)]
pub struct RegularityReport {
    pub values: Vec<f64>,
    pub nonincreasing_after_burn_in: bool,
    pub final_below_tol: bool,
    pub burn_in: usize,
    pub tol: f64,
}

/// Extracts the asymptotic-regularity trace ‖(I − 𝒯) v_k‖₀ from a run and
/// checks that it is nonincreasing after the burn-in and below `tol` at the
/// end. A tiny relative slack absorbs floating-point noise.
pub fn asymptotic_regularity_trace(
    record: &RunRecord,
    burn_in: usize,
    tol: f64,
) -> RegularityReport {
    let values: Vec<f64> = record
        .rows
        .iter()
        .filter_map(|r| r.op_defect_norm)
        .collect();
    let mut nonincreasing = true;
    for i in 1..values.len() {
        if record.rows[i].k <= burn_in {
            continue;
        }
        if values[i] > values[i - 1] * (1.0 + 1e-12) + 1e-300 {
            nonincreasing = false;
            break;
        }
    }
    let final_below_tol = values.last().is_none_or(|&v| v <= tol);
    RegularityReport {
        values,
        nonincreasing_after_burn_in: nonincreasing,
        final_below_tol,
        burn_in,
        tol,
    }
}
