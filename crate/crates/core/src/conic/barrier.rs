//! Two-phase log-barrier interior-point method.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use super::cones::ConeKind;
use super::{
    AffineExpr, ConicProgram, ConicSolution, ConicSolver, Constraint, KktResiduals, SolveStatus,
    SolverSettings,
};
use crate::error::Result;

const UNBOUNDED_NORM: f64 = 1e12;
const LOOSE_CENTERING: f64 = 1e-5;
const TIGHT_CENTERING: f64 = 1e-14;
const ARMIJO: f64 = 0.25;
const PHASE_ONE_BOX: f64 = 1e9;
const STALL_STEPS: usize = 20;

#[derive(Debug, Clone, Copy, Default)]
pub struct BarrierSolver;

impl ConicSolver for BarrierSolver {
    fn name(&self) -> &'static str {
        "barrier"
    }

    fn solve(&self, prog: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution> {
        prog.validate()?;
        Ok(solve_validated(prog, settings))
    }
}

struct Block {
    kind: ConeKind,
    rows: Vec<AffineExpr>,
}

impl Block {
    fn slack(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.eval(x)).collect()
    }

    fn dir(&self, d: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.terms.iter().map(|&(i, c)| c * d[i]).sum())
            .collect()
    }
}

struct Problem {
    n: usize,
    c: Vec<f64>,
    blocks: Vec<Block>,
    nu: f64,
    sparse: Option<SparseFactor>,
}

/// Lower-triangular Hessian pattern with a cached symbolic factorization.
/// Used when the variables couple through few cones, as they do for the
/// per-stream blocks of the combiner subproblem.
struct SparseFactor {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    symbolic: SymbolicLlt<usize>,
}

/// Patterns denser than this go to the dense factorization.
const SPARSE_DENSITY: f64 = 0.3;

impl SparseFactor {
    fn analyze(n: usize, blocks: &[Block]) -> Option<Self> {
        let mut cols: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
        for b in blocks {
            let mut vars: Vec<usize> = b
                .rows
                .iter()
                .flat_map(|r| r.terms.iter().map(|t| t.0))
                .collect();
            vars.sort_unstable();
            vars.dedup();
            for (k, &j) in vars.iter().enumerate() {
                cols[j].extend_from_slice(&vars[k..]);
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for mut c in cols {
            c.sort_unstable();
            c.dedup();
            row_idx.extend(c);
            col_ptr.push(row_idx.len());
        }
        let lower_dense = n * (n + 1) / 2;
        if n < 32 || row_idx.len() as f64 > SPARSE_DENSITY * lower_dense as f64 {
            return None;
        }
        let pattern = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let symbolic = SymbolicLlt::try_new(pattern, Side::Lower).ok()?;
        Some(SparseFactor {
            col_ptr,
            row_idx,
            symbolic,
        })
    }

    fn solve(&self, h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let n = rhs.len();
        let mut values = Vec::with_capacity(self.row_idx.len());
        for j in 0..n {
            for &i in &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]] {
                values.push(h[(i, j)]);
            }
        }
        let pattern =
            SymbolicSparseColMatRef::new_checked(n, n, &self.col_ptr, None, &self.row_idx);
        let mat = SparseColMatRef::new(pattern, &values);
        let llt = Llt::try_new_with_symbolic(self.symbolic.clone(), mat, Side::Lower).ok()?;
        let mut x = Mat::from_fn(n, 1, |i, _| rhs[i]);
        llt.solve_in_place(&mut x);
        let out = DVector::from_fn(n, |i, _| x[(i, 0)]);
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

impl Problem {
    fn from_program(prog: &ConicProgram, scale: f64) -> Self {
        let blocks: Vec<Block> = prog
            .constraints
            .iter()
            .map(|c| {
                let kind = match c {
                    Constraint::NonNeg { .. } => ConeKind::NonNeg,
                    Constraint::Soc { .. } => ConeKind::Soc,
                    Constraint::Exp { .. } => ConeKind::Exp,
                };
                Block {
                    kind,
                    rows: c.rows().into_iter().map(merge_terms).collect(),
                }
            })
            .collect();
        let nu = blocks.iter().map(|b| b.kind.degree(b.rows.len())).sum();
        Problem {
            n: prog.n_vars,
            c: prog.objective.iter().map(|v| v / scale).collect(),
            sparse: SparseFactor::analyze(prog.n_vars, &blocks),
            blocks,
            nu,
        }
    }

    /// Phase-one problem: one extra variable `s` shifts every cone toward its
    /// interior; maximize `-s` subject to `s ≥ -1`. A wide box of half-width
    /// `radius` keeps the centering problems bounded.
    fn phase_one(&self, radius: f64) -> Self {
        let s = self.n;
        let mut blocks: Vec<Block> = self
            .blocks
            .iter()
            .map(|b| {
                let e = b.kind.interior_direction(b.rows.len());
                let rows = b
                    .rows
                    .iter()
                    .zip(e)
                    .map(|(r, ei)| r.clone().term(s, ei))
                    .collect();
                Block { kind: b.kind, rows }
            })
            .collect();
        blocks.push(Block {
            kind: ConeKind::NonNeg,
            rows: vec![AffineExpr::var(s).plus(1.0)],
        });
        for i in 0..self.n {
            blocks.push(Block {
                kind: ConeKind::NonNeg,
                rows: vec![AffineExpr::var(i).plus(radius)],
            });
            blocks.push(Block {
                kind: ConeKind::NonNeg,
                rows: vec![AffineExpr::constant(radius).term(i, -1.0)],
            });
        }
        let mut c = vec![0.0; self.n + 1];
        c[s] = -1.0;
        let nu = self.nu + 1.0 + 2.0 * self.n as f64;
        Problem {
            n: self.n + 1,
            c,
            sparse: SparseFactor::analyze(self.n + 1, &blocks),
            blocks,
            nu,
        }
    }

    fn interior(&self, x: &[f64]) -> bool {
        self.blocks.iter().all(|b| b.kind.is_interior(&b.slack(x)))
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Gradient and Hessian of `-τcᵀx + Σφ(s(x))`.
    fn newton_system(&self, x: &[f64], tau: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut g = DVector::from_iterator(n, self.c.iter().map(|c| -tau * c));
        let mut h = DMatrix::<f64>::zeros(n, n);
        let mut w = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        for b in &self.blocks {
            let s = b.slack(x);
            let grad = b.kind.gradient(&s);
            for (row, gi) in b.rows.iter().zip(&grad) {
                for &(i, a) in &row.terms {
                    g[i] += gi * a;
                }
            }
            match b.kind {
                ConeKind::NonNeg => add_outer(&mut h, &b.rows[0], &b.rows[0], 1.0 / (s[0] * s[0])),
                ConeKind::Soc if s.len() == 1 => {
                    add_outer(&mut h, &b.rows[0], &b.rows[0], 1.0 / (s[0] * s[0]))
                }
                ConeKind::Soc => {
                    let d = super::cones::soc_gap(&s);
                    // ∇d = (2t, -2y)
                    touched.clear();
                    for (p, row) in b.rows.iter().enumerate() {
                        let dd = if p == 0 { 2.0 * s[0] } else { -2.0 * s[p] };
                        for &(i, a) in &row.terms {
                            if w[i] == 0.0 {
                                touched.push(i);
                            }
                            w[i] += dd * a;
                        }
                    }
                    touched.sort_unstable();
                    touched.dedup();
                    let inv = 1.0 / (d * d);
                    for &i in &touched {
                        for &j in &touched {
                            h[(i, j)] += inv * w[i] * w[j];
                        }
                    }
                    for &i in &touched {
                        w[i] = 0.0;
                    }
                    let k = 2.0 / d;
                    add_outer(&mut h, &b.rows[0], &b.rows[0], -k);
                    for row in &b.rows[1..] {
                        add_outer(&mut h, row, row, k);
                    }
                }
                ConeKind::Exp => {
                    let hl = ConeKind::exp_hessian(&s);
                    for p in 0..3 {
                        for q in 0..3 {
                            add_outer(&mut h, &b.rows[p], &b.rows[q], hl[p][q]);
                        }
                    }
                }
            }
        }
        (g, h)
    }

    /// Change of the barrier objective between `x` and `y`, computed per block
    /// to avoid cancellation at large `τ`.
    fn merit_change(&self, x: &[f64], y: &[f64], tau: f64) -> f64 {
        let lin: f64 = self
            .c
            .iter()
            .zip(x.iter().zip(y))
            .map(|(c, (a, b))| c * (b - a))
            .sum();
        let bar: f64 = self
            .blocks
            .iter()
            .map(|b| b.kind.value(&b.slack(y)) - b.kind.value(&b.slack(x)))
            .sum();
        -tau * lin + bar
    }

    /// Dual estimate `z = -(∇φ + ∇²φ·AΔ)/τ` per block.
    fn duals(&self, x: &[f64], step: &[f64], tau: f64) -> Vec<Vec<f64>> {
        self.blocks
            .iter()
            .map(|b| {
                let s = b.slack(x);
                let ds = b.dir(step);
                let g = b.kind.gradient(&s);
                let hd = local_hessian_times(b.kind, &s, &ds);
                g.iter().zip(hd).map(|(gi, hi)| -(gi + hi) / tau).collect()
            })
            .collect()
    }

    fn dual_residual(&self, z: &[Vec<f64>]) -> Vec<f64> {
        let mut r = self.c.clone();
        for (b, zb) in self.blocks.iter().zip(z) {
            for (row, zi) in b.rows.iter().zip(zb) {
                for &(i, a) in &row.terms {
                    r[i] += a * zi;
                }
            }
        }
        r
    }

    fn complementarity(&self, x: &[f64], z: &[Vec<f64>]) -> f64 {
        self.blocks
            .iter()
            .zip(z)
            .map(|(b, zb)| b.slack(x).iter().zip(zb).map(|(s, z)| s * z).sum::<f64>())
            .sum()
    }
}

fn merge_terms(e: &AffineExpr) -> AffineExpr {
    let mut terms = e.terms.clone();
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    for (i, c) in terms {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += c,
            _ => out.push((i, c)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    AffineExpr {
        terms: out,
        constant: e.constant,
    }
}

fn add_outer(h: &mut DMatrix<f64>, a: &AffineExpr, b: &AffineExpr, scale: f64) {
    if scale == 0.0 {
        return;
    }
    for &(i, ai) in &a.terms {
        for &(j, bj) in &b.terms {
            h[(i, j)] += scale * ai * bj;
        }
    }
}

fn local_hessian_times(kind: ConeKind, s: &[f64], d: &[f64]) -> Vec<f64> {
    match kind {
        ConeKind::NonNeg => vec![d[0] / (s[0] * s[0])],
        ConeKind::Soc if s.len() == 1 => vec![d[0] / (s[0] * s[0])],
        ConeKind::Soc => {
            let gap = super::cones::soc_gap(s);
            let grad_d: Vec<f64> = s
                .iter()
                .enumerate()
                .map(|(p, v)| if p == 0 { 2.0 * v } else { -2.0 * v })
                .collect();
            let proj: f64 = grad_d.iter().zip(d).map(|(a, b)| a * b).sum();
            grad_d
                .iter()
                .zip(d)
                .enumerate()
                .map(|(p, (gd, di))| {
                    let j = if p == 0 { 1.0 } else { -1.0 };
                    gd * proj / (gap * gap) - 2.0 / gap * j * di
                })
                .collect()
        }
        ConeKind::Exp => {
            let h = ConeKind::exp_hessian(s);
            (0..3)
                .map(|p| (0..3).map(|q| h[p][q] * d[q]).sum())
                .collect()
        }
    }
}

fn solve_linear(
    sparse: Option<&SparseFactor>,
    h: &DMatrix<f64>,
    rhs: &DVector<f64>,
) -> Option<DVector<f64>> {
    if let Some(x) = sparse.and_then(|f| f.solve(h, rhs)) {
        return Some(x);
    }
    if let Some(ch) = h.clone().cholesky() {
        let x = ch.solve(rhs);
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    let diag_max = h.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut delta = 1e-14 * (1.0 + diag_max);
    for _ in 0..12 {
        let mut reg = h.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += delta;
        }
        if let Some(ch) = reg.cholesky() {
            let x = ch.solve(rhs);
            if x.iter().all(|v| v.is_finite()) {
                return Some(x);
            }
        }
        delta *= 100.0;
    }
    h.clone()
        .lu()
        .solve(rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
}

enum CenterOutcome {
    Centered {
        step: Vec<f64>,
    },
    /// Line search could not make progress; `step` is the last Newton step.
    Stalled {
        step: Vec<f64>,
    },
    Stopped,
    Diverged,
    Budget,
    Singular,
}

struct Centering<'a> {
    problem: &'a Problem,
    steps: usize,
    budget: usize,
}

impl Centering<'_> {
    fn center(
        &mut self,
        x: &mut Vec<f64>,
        tau: f64,
        tol: f64,
        stop: &dyn Fn(&[f64]) -> bool,
    ) -> CenterOutcome {
        let p = self.problem;
        // Newton decrements that stop shrinking inside the quadratic region
        // mean roundoff has taken over
        let mut best = f64::INFINITY;
        let mut idle = 0;
        loop {
            if self.steps >= self.budget {
                return CenterOutcome::Budget;
            }
            let (g, h) = p.newton_system(x, tau);
            let Some(dx) = solve_linear(p.sparse.as_ref(), &h, &(-&g)) else {
                return CenterOutcome::Singular;
            };
            let lambda2 = -g.dot(&dx);
            let step: Vec<f64> = dx.iter().copied().collect();
            if lambda2 / 2.0 <= tol {
                return CenterOutcome::Centered { step };
            }
            if lambda2 < 0.5 * best {
                best = lambda2;
                idle = 0;
            } else if lambda2 < 1e-4 {
                idle += 1;
                if idle > STALL_STEPS {
                    return CenterOutcome::Stalled { step };
                }
            }
            self.steps += 1;
            let mut alpha = 1.0;
            let mut trial: Vec<f64>;
            loop {
                trial = x.iter().zip(&step).map(|(a, d)| a + alpha * d).collect();
                if p.interior(&trial) {
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-20 {
                    return CenterOutcome::Stalled { step };
                }
            }
            let slope = g.dot(&dx);
            loop {
                let change = p.merit_change(x, &trial, tau);
                if change <= ARMIJO * alpha * slope {
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    return CenterOutcome::Stalled { step };
                }
                trial = x.iter().zip(&step).map(|(a, d)| a + alpha * d).collect();
            }
            *x = trial;
            if stop(x) {
                return CenterOutcome::Stopped;
            }
            if x.iter().any(|v| v.abs() > UNBOUNDED_NORM) {
                return CenterOutcome::Diverged;
            }
        }
    }
}

fn failed(prog: &ConicProgram, x: Vec<f64>, status: SolveStatus, steps: usize) -> ConicSolution {
    let objective_value = prog.objective_value(&x);
    let primal = prog.max_violation(&x);
    ConicSolution {
        x,
        status,
        objective_value,
        kkt: KktResiduals {
            primal,
            dual: f64::INFINITY,
            gap: f64::INFINITY,
        },
        duals: Vec::new(),
        newton_steps: steps,
    }
}

fn initial_shift(p: &Problem, x: &[f64]) -> f64 {
    let mut need = 0.0f64;
    for b in &p.blocks {
        let s = b.slack(x);
        let e = b.kind.interior_direction(s.len());
        let shifted = |t: f64| -> Vec<f64> { s.iter().zip(&e).map(|(a, ei)| a + t * ei).collect() };
        if b.kind.is_interior(&s) {
            continue;
        }
        let mut t = match b.kind {
            ConeKind::NonNeg => -s[0],
            ConeKind::Soc => s[1..].iter().map(|v| v * v).sum::<f64>().sqrt() - s[0],
            ConeKind::Exp => 1.0,
        };
        t = t.max(1e-12);
        while !b.kind.is_interior(&shifted(t)) && t < 1e300 {
            t *= 2.0;
        }
        need = need.max(t);
    }
    need + 1.0
}

fn solve_validated(prog: &ConicProgram, settings: &SolverSettings) -> ConicSolution {
    let n = prog.n_vars;
    let cmax = prog.objective.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if cmax > 0.0 { cmax } else { 1.0 };
    let problem = Problem::from_program(prog, scale);
    let tol = settings.tolerance;
    let mut steps = 0usize;

    let mut x: Vec<f64> = match &settings.initial_point {
        Some(v) if v.len() == n && v.iter().all(|a| a.is_finite()) => v.clone(),
        _ => vec![0.0; n],
    };

    if !problem.interior(&x) {
        let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let p1 = problem.phase_one(PHASE_ONE_BOX * (1.0 + xmax));
        let mut y = x.clone();
        y.push(initial_shift(&problem, &x));
        let mut cen = Centering {
            problem: &p1,
            steps,
            budget: settings.max_newton_steps,
        };
        let stop = |v: &[f64]| v[n] < 0.0 && problem.interior(&v[..n]);
        let mut tau = 1.0;
        let found = loop {
            match cen.center(&mut y, tau, LOOSE_CENTERING, &stop) {
                CenterOutcome::Stopped => break true,
                CenterOutcome::Centered { .. } => {
                    // the phase-one optimum is at least s - ν/τ
                    if y[n] - p1.nu / tau > 0.0 || p1.nu / tau < 1e-13 {
                        break false;
                    }
                }
                CenterOutcome::Stalled { .. } | CenterOutcome::Singular => {
                    if stop(&y) {
                        break true;
                    }
                    break false;
                }
                CenterOutcome::Diverged => break false,
                CenterOutcome::Budget => {
                    return failed(prog, y[..n].to_vec(), SolveStatus::MaxIters, cen.steps)
                }
            }
            tau *= settings.barrier_growth;
        };
        steps = cen.steps;
        if !found {
            return failed(prog, y[..n].to_vec(), SolveStatus::Infeasible, steps);
        }
        y.truncate(n);
        x = y;
    }

    let mut cen = Centering {
        problem: &problem,
        steps,
        budget: settings.max_newton_steps,
    };
    let never = |_: &[f64]| false;
    let mut tau = initial_barrier(&problem, &x);
    if tau > 1.0 {
        // an aggressive start that cannot be centered falls back to τ = 1
        let mut trial = x.clone();
        if matches!(
            cen.center(&mut trial, tau, LOOSE_CENTERING, &never),
            CenterOutcome::Centered { .. }
        ) {
            x = trial;
        } else {
            tau = 1.0;
        }
    }
    loop {
        let outcome = cen.center(&mut x, tau, LOOSE_CENTERING, &never);
        let obj = problem.objective(&x);
        let final_stage = problem.nu / tau <= tol * (1.0 + obj.abs());
        let step = match outcome {
            CenterOutcome::Centered { .. } if !final_stage => {
                tau *= settings.barrier_growth;
                continue;
            }
            CenterOutcome::Centered { .. } => {
                match cen.center(&mut x, tau, TIGHT_CENTERING, &never) {
                    CenterOutcome::Centered { step } | CenterOutcome::Stalled { step } => step,
                    CenterOutcome::Budget => {
                        return failed(prog, x, SolveStatus::MaxIters, cen.steps)
                    }
                    _ => return failed(prog, x, SolveStatus::NumericalTrouble, cen.steps),
                }
            }
            CenterOutcome::Stalled { step } => step,
            CenterOutcome::Diverged => {
                let status = if problem.objective(&x) > UNBOUNDED_NORM.sqrt() {
                    SolveStatus::Unbounded
                } else {
                    SolveStatus::NumericalTrouble
                };
                return failed(prog, x, status, cen.steps);
            }
            CenterOutcome::Budget => return failed(prog, x, SolveStatus::MaxIters, cen.steps),
            CenterOutcome::Singular | CenterOutcome::Stopped => {
                return failed(prog, x, SolveStatus::NumericalTrouble, cen.steps)
            }
        };
        let sol = finish(prog, &problem, x.clone(), &step, tau, scale, cen.steps);
        if final_stage && sol.kkt.max() <= tol.max(1e-7) {
            return sol;
        }
        // stalled before reaching the target
        if sol.kkt.max() <= 1e-7 {
            return sol;
        }
        let mut sol = sol;
        sol.status = SolveStatus::NumericalTrouble;
        return sol;
    }
}

/// Barrier weight that best balances the objective against the barrier
/// gradient at `x`, so a warm start sits close to the central path.
fn initial_barrier(p: &Problem, x: &[f64]) -> f64 {
    let mut g = vec![0.0; p.n];
    for b in &p.blocks {
        let grad = b.kind.gradient(&b.slack(x));
        for (row, gi) in b.rows.iter().zip(&grad) {
            for &(i, a) in &row.terms {
                g[i] += gi * a;
            }
        }
    }
    let cc: f64 = p.c.iter().map(|v| v * v).sum();
    if cc == 0.0 {
        return 1.0;
    }
    let cg: f64 = p.c.iter().zip(&g).map(|(a, b)| a * b).sum();
    (cg / cc).clamp(1.0, 1e6)
}

fn finish(
    prog: &ConicProgram,
    problem: &Problem,
    x: Vec<f64>,
    step: &[f64],
    tau: f64,
    scale: f64,
    steps: usize,
) -> ConicSolution {
    let z = problem.duals(&x, step, tau);
    let r = problem.dual_residual(&z);
    let obj = problem.objective(&x);
    let cnorm = problem.c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dual = r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / (1.0 + cnorm);
    let gap = problem.complementarity(&x, &z).abs().max(problem.nu / tau) / (1.0 + obj.abs());
    let primal = prog.max_violation(&x);
    let duals = z
        .into_iter()
        .map(|zb| zb.into_iter().map(|v| v * scale).collect())
        .collect();
    ConicSolution {
        objective_value: prog.objective_value(&x),
        x,
        status: SolveStatus::Optimal,
        kkt: KktResiduals { primal, dual, gap },
        duals,
        newton_steps: steps,
    }
}
