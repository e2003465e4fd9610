//! Conic program IR and solver contract.
//!
//! Programs maximize a linear objective `cᵀx` subject to affine maps of `x`
//! lying in one of three cones:
//!
//! - nonnegative: `e(x) ≥ 0`
//! - second order: `‖(e₁(x), …, e_k(x))‖ ≤ e₀(x)`
//! - exponential: `v·exp(u/v) ≤ w`, `v > 0`, with `(u, v, w)` affine in `x`
//!
//! Complex quantities are realified by the callers; the IR is real-valued.
//! The JSON form produced by [`ConicProgram::to_json`] is the serde
//! representation of these types and is stable for regression fixtures.

mod barrier;
mod cones;
pub mod fixtures;

pub use barrier::BarrierSolver;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `Σ coef·x[index] + constant`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        AffineExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(index: usize) -> Self {
        AffineExpr {
            terms: vec![(index, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, index: usize, coef: f64) -> Self {
        self.add_term(index, coef);
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn add_term(&mut self, index: usize, coef: f64) {
        if coef != 0.0 {
            self.terms.push((index, coef));
        }
    }

    pub fn add_scaled(&mut self, other: &AffineExpr, scale: f64) {
        for &(i, c) in &other.terms {
            self.add_term(i, c * scale);
        }
        self.constant += other.constant * scale;
    }

    pub fn scaled(&self, scale: f64) -> Self {
        let mut out = AffineExpr::zero();
        out.add_scaled(self, scale);
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    NonNeg {
        expr: AffineExpr,
    },
    Soc {
        bound: AffineExpr,
        vector: Vec<AffineExpr>,
    },
    Exp {
        u: AffineExpr,
        v: AffineExpr,
        w: AffineExpr,
    },
}

impl Constraint {
    /// `Σ qᵢ² ≤ r` written as `‖(2q, r − 1)‖ ≤ r + 1`.
    pub fn rotated_quadratic(q: Vec<AffineExpr>, r: AffineExpr) -> Self {
        let mut vector: Vec<AffineExpr> = q.into_iter().map(|e| e.scaled(2.0)).collect();
        vector.push(r.clone().plus(-1.0));
        Constraint::Soc {
            bound: r.plus(1.0),
            vector,
        }
    }

    /// `y·ln 2 ≤ ln(arg)`, i.e. `y ≤ log2(arg)`.
    pub fn log2_hypograph(y: AffineExpr, arg: AffineExpr) -> Self {
        Constraint::Exp {
            u: y.scaled(std::f64::consts::LN_2),
            v: AffineExpr::constant(1.0),
            w: arg,
        }
    }

    pub(crate) fn rows(&self) -> Vec<&AffineExpr> {
        match self {
            Constraint::NonNeg { expr } => vec![expr],
            Constraint::Soc { bound, vector } => {
                std::iter::once(bound).chain(vector.iter()).collect()
            }
            Constraint::Exp { u, v, w } => vec![u, v, w],
        }
    }

    /// Distance outside the cone at `x` (zero when inside).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::NonNeg { expr } => (-expr.eval(x)).max(0.0),
            Constraint::Soc { bound, vector } => {
                let n = vector.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
                (n - bound.eval(x)).max(0.0)
            }
            Constraint::Exp { u, v, w } => {
                let (u, v, w) = (u.eval(x), v.eval(x), w.eval(x));
                if v <= 0.0 {
                    // v = 0 boundary: u ≤ 0, w ≥ 0
                    return (-v).max(0.0) + u.max(0.0) + (-w).max(0.0);
                }
                (v * (u / v).exp() - w).max(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub n_vars: usize,
    /// Coefficients of the maximized objective.
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl ConicProgram {
    pub fn new(n_vars: usize) -> Self {
        ConicProgram {
            n_vars,
            objective: vec![0.0; n_vars],
            constraints: Vec::new(),
        }
    }

    pub fn maximize(mut self, index: usize, coef: f64) -> Self {
        self.objective[index] = coef;
        self
    }

    pub fn push(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn with(mut self, c: Constraint) -> Self {
        self.push(c);
        self
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.n_vars {
            return Err(Error::Program(format!(
                "objective has {} coefficients for {} variables",
                self.objective.len(),
                self.n_vars
            )));
        }
        for (k, c) in self.constraints.iter().enumerate() {
            for row in c.rows() {
                if let Some(&(i, _)) = row.terms.iter().find(|(i, _)| *i >= self.n_vars) {
                    return Err(Error::Program(format!(
                        "constraint {k} references variable {i} of {}",
                        self.n_vars
                    )));
                }
                if !row.constant.is_finite() || row.terms.iter().any(|(_, c)| !c.is_finite()) {
                    return Err(Error::Program(format!(
                        "constraint {k} has non-finite data"
                    )));
                }
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Program("non-finite objective".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: ConicProgram = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIters,
    NumericalTrouble,
}

/// Relative KKT residuals of a returned point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub status: SolveStatus,
    pub objective_value: f64,
    pub kkt: KktResiduals,
    /// Dual estimate per constraint, in cone coordinates.
    #[serde(default)]
    pub duals: Vec<Vec<f64>>,
    pub newton_steps: usize,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Target for the relative gap and dual residual.
    pub tolerance: f64,
    /// Cap on Newton steps over both phases.
    pub max_newton_steps: usize,
    /// Barrier parameter growth per outer iteration.
    pub barrier_growth: f64,
    /// Optional starting point; used as is when strictly feasible, otherwise
    /// as the phase-one start.
    #[serde(default)]
    pub initial_point: Option<Vec<f64>>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-9,
            max_newton_steps: 2000,
            barrier_growth: 10.0,
            initial_point: None,
        }
    }
}

impl SolverSettings {
    pub fn with_initial_point(mut self, x: Vec<f64>) -> Self {
        self.initial_point = Some(x);
        self
    }
}

/// A backend able to solve [`ConicProgram`]s under the status/residual
/// contract above.
pub trait ConicSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, prog: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution>;
}

/// Solves with the built-in barrier interior-point method.
pub fn solve(prog: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution> {
    BarrierSolver.solve(prog, settings)
}
