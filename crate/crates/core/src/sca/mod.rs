//! Alternating optimization of precoders and combiners.
//!
//! Each outer iteration solves the linearized precoder subproblem with the
//! combiners fixed, then the linearized combiner subproblem with the new
//! precoders fixed. Both surrogates are tight at the incumbent, so the
//! objective sequence is non-decreasing up to solver tolerance.

mod init;
mod subproblem;
mod tangent;

pub use init::{initialize_state, state_from_beams, surrogate_objective, warm_start_from};
pub use subproblem::{
    apply_solution, build_combiner_subproblem, build_precoder_subproblem, BlockKind, Subproblem,
    VariableLayout,
};
pub use tangent::{
    linearize_dispersion, sqrt_dispersion, DispersionTangent, Tangent, DORMANT_SINR,
};

use serde::{Deserialize, Serialize};

use crate::conic::{self, SolveStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::fbl::{user_rates, CombinerSet, FblParams, PrecoderSet, RateReport};
use crate::linalg::C64;
use crate::model::{ChannelRealization, DecodingOrder, SchemeKind, SymbolPart, SystemConfig};
use crate::scheme::lookup;

/// Smallest true-MMF gain that triggers an escape.
const ESCAPE_MARGIN: f64 = 1e-9;

/// One iterate of the alternating optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignState {
    pub p: PrecoderSet,
    pub g: CombinerSet,
    /// Slack SINRs, indexed by decoding position then stream.
    pub rho: Vec<Vec<f64>>,
    /// Surrogate objective of the subproblem that produced this iterate.
    pub t: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitStrategy {
    SvdMmse,
    /// For split configurations: solve the unsplit problem first and start
    /// from its design with silent second parts.
    NomaWarmStart,
    /// Runs `svd-mmse` and `noma-warm-start` and keeps the outcome with the
    /// larger true MMF. With several split users it also grows the split set
    /// one user at a time, each stage starting from the previous design.
    /// Same as `svd-mmse` for unsplit configurations.
    Multistart,
    Given {
        state: Box<DesignState>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoSettings {
    pub tolerance: f64,
    pub max_outer_iters: usize,
    pub solver: SolverSettings,
    pub init: InitStrategy,
}

impl Default for AoSettings {
    fn default() -> Self {
        AoSettings {
            tolerance: 1e-4,
            max_outer_iters: 100,
            solver: SolverSettings::default(),
            init: InitStrategy::SvdMmse,
        }
    }
}

impl AoSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("AO tolerance must be positive".into()));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::Config("max_outer_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AoStatus {
    Converged,
    IterationCap,
    /// At least one block was frozen after repeated solver failure.
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub block: BlockKind,
    pub status: SolveStatus,
    pub retried: bool,
    pub frozen: bool,
    pub t: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub t: f64,
    pub true_mmf: f64,
    pub precoder: StepRecord,
    pub combiner: StepRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoOutcome {
    /// Best iterate by true MMF.
    pub state: DesignState,
    pub order: DecodingOrder,
    pub initial_t: f64,
    pub trace: Vec<TraceRecord>,
    /// Clamped finite-blocklength rates of `state`.
    pub report: RateReport,
    pub status: AoStatus,
    /// Restarts from a design with a split part silenced.
    #[serde(default)]
    pub escapes: usize,
}

impl AoOutcome {
    pub fn mmf(&self) -> f64 {
        self.report.mmf
    }

    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    /// `t` at initialization followed by `t` after every outer iteration.
    pub fn objective_trace(&self) -> Vec<f64> {
        std::iter::once(self.initial_t)
            .chain(self.trace.iter().map(|r| r.t))
            .collect()
    }

    /// Both half-steps per iteration, in execution order.
    pub fn half_step_trace(&self) -> Vec<f64> {
        std::iter::once(self.initial_t)
            .chain(self.trace.iter().flat_map(|r| [r.precoder.t, r.combiner.t]))
            .collect()
    }

    pub fn trace_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.trace {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Solves the max-min problem for the configured scheme with its default
/// decoding order.
pub fn solve_mmf(
    channels: &ChannelRealization,
    config: &SystemConfig,
    fbl: &FblParams,
    settings: &AoSettings,
) -> Result<AoOutcome> {
    config.validate()?;
    channels.check(config)?;
    let order = lookup(config.scheme).decoding_order(channels, config);
    solve_mmf_with_order(channels, &order, config, fbl, settings)
}

pub fn solve_mmf_noma(
    channels: &ChannelRealization,
    config: &SystemConfig,
    fbl: &FblParams,
    settings: &AoSettings,
) -> Result<AoOutcome> {
    let config = config.clone().with_scheme(SchemeKind::Noma, Vec::new());
    solve_mmf(channels, &config, fbl, settings)
}

pub fn solve_mmf_sdma(
    channels: &ChannelRealization,
    config: &SystemConfig,
    fbl: &FblParams,
    settings: &AoSettings,
) -> Result<AoOutcome> {
    let config = config.clone().with_scheme(SchemeKind::Sdma, Vec::new());
    solve_mmf(channels, &config, fbl, settings)
}

pub fn solve_mmf_with_order(
    channels: &ChannelRealization,
    order: &DecodingOrder,
    config: &SystemConfig,
    fbl: &FblParams,
    settings: &AoSettings,
) -> Result<AoOutcome> {
    settings.validate()?;
    config.validate()?;
    channels.check(config)?;
    order.check(config)?;
    let start = match &settings.init {
        InitStrategy::Multistart => {
            let with = |init| AoSettings {
                init,
                ..settings.clone()
            };
            let cold =
                solve_mmf_with_order(channels, order, config, fbl, &with(InitStrategy::SvdMmse))?;
            if config.split_set.is_empty() {
                return Ok(cold);
            }
            let warm = solve_mmf_with_order(
                channels,
                order,
                config,
                fbl,
                &with(InitStrategy::NomaWarmStart),
            )?;
            let mut best = if warm.mmf() > cold.mmf() { warm } else { cold };
            if config.split_set.len() > 1 {
                // grow the split set one user at a time, weakest last: the
                // order then only moves that user's first part, which keeps
                // its position, so the warm start loses nothing
                let weakest = order
                    .entries
                    .iter()
                    .filter(|e| e.part == SymbolPart::FirstSplit)
                    .last()
                    .map(|e| e.user);
                let fewer: Vec<usize> = config
                    .split_set
                    .iter()
                    .copied()
                    .filter(|&k| Some(k) != weakest)
                    .collect();
                let smaller = config.clone().with_scheme(config.scheme, fewer);
                let prev = solve_mmf(channels, &smaller, fbl, settings)?;
                let state = warm_start_from(channels, &prev.state, &prev.order, order, config, fbl);
                let grown = solve_mmf_with_order(
                    channels,
                    order,
                    config,
                    fbl,
                    &with(InitStrategy::Given {
                        state: Box::new(state),
                    }),
                )?;
                if grown.mmf() > best.mmf() {
                    best = grown;
                }
            }
            return Ok(best);
        }
        InitStrategy::SvdMmse => initialize_state(channels, order, config, fbl),
        InitStrategy::Given { state } => {
            let mut s = (**state).clone();
            if s.p.matrices.len() != order.len() || s.rho.len() != order.len() {
                return Err(Error::Dimension(
                    "given state does not match the order".into(),
                ));
            }
            s.iteration = 0;
            s
        }
        InitStrategy::NomaWarmStart if config.split_set.is_empty() => {
            initialize_state(channels, order, config, fbl)
        }
        InitStrategy::NomaWarmStart => {
            let noma_config = config.clone().with_scheme(SchemeKind::Noma, Vec::new());
            let inner = AoSettings {
                init: InitStrategy::SvdMmse,
                ..settings.clone()
            };
            let noma = solve_mmf(channels, &noma_config, fbl, &inner)?;
            warm_start_from(channels, &noma.state, &noma.order, order, config, fbl)
        }
    };
    Ok(run_ao(start, channels, order, config, fbl, settings))
}

fn solve_block(
    block: BlockKind,
    state: &DesignState,
    channels: &ChannelRealization,
    order: &DecodingOrder,
    config: &SystemConfig,
    fbl: &FblParams,
    solver: &SolverSettings,
) -> (DesignState, StepRecord) {
    let frozen = |status, retried| {
        (
            state.clone(),
            StepRecord {
                block,
                status,
                retried,
                frozen: true,
                t: state.t,
                newton_steps: 0,
            },
        )
    };
    let sub = match block {
        BlockKind::Precoder => build_precoder_subproblem(state, channels, order, config, fbl),
        BlockKind::Combiner => build_combiner_subproblem(state, channels, order, config, fbl),
    };
    let Ok(sub) = sub else {
        return frozen(SolveStatus::NumericalTrouble, false);
    };
    let mut settings = solver.clone().with_initial_point(sub.incumbent.clone());
    let mut retried = false;
    let mut sol = conic::solve(&sub.program, &settings);
    if !matches!(&sol, Ok(s) if s.is_optimal()) {
        retried = true;
        settings.tolerance *= 10.0;
        sol = conic::solve(&sub.program, &settings);
    }
    let sol = match sol {
        Ok(s) if s.is_optimal() => s,
        Ok(s) => {
            return frozen(s.status, retried);
        }
        Err(_) => return frozen(SolveStatus::NumericalTrouble, retried),
    };
    let mut next = apply_solution(&sub, &sol.x, state);
    match block {
        BlockKind::Precoder => {
            subproblem::clip_power(&mut next.p, order, config.users, config.power)
        }
        // SINRs are invariant to the scale of a combiner row; a canonical
        // scale keeps the next linearization well conditioned
        BlockKind::Combiner => next.g = next.g.normalized_rows(),
    }
    let record = StepRecord {
        block,
        status: sol.status,
        retried,
        frozen: false,
        t: next.t,
        newton_steps: sol.newton_steps,
    };
    (next, record)
}

/// Alternating optimization with escapes: when silencing a split part of the
/// final design raises the true MMF, a fresh pass starts from the silenced
/// design. Every pass is monotone on its own; the reported outcome is the
/// last pass, which is also the best.
fn run_ao(
    start: DesignState,
    channels: &ChannelRealization,
    order: &DecodingOrder,
    config: &SystemConfig,
    fbl: &FblParams,
    settings: &AoSettings,
) -> AoOutcome {
    let mut out = ao_pass(start, channels, order, config, fbl, settings);
    for _ in 0..2 * config.split_set.len() {
        let Some(escape) = silenced_split_part(&out, channels, config, fbl) else {
            break;
        };
        let escapes = out.escapes + 1;
        out = ao_pass(escape, channels, order, config, fbl, settings);
        out.escapes = escapes;
    }
    out
}

/// The best design obtained by silencing one split part of `out`, if it
/// beats `out` in true MMF.
fn silenced_split_part(
    out: &AoOutcome,
    channels: &ChannelRealization,
    config: &SystemConfig,
    fbl: &FblParams,
) -> Option<DesignState> {
    let mut best: Option<(f64, DesignState)> = None;
    for (m, id) in out.order.entries.iter().enumerate() {
        if id.part == SymbolPart::Whole
            || out.state.p.matrices[m].iter().all(|z| z.norm_sqr() == 0.0)
        {
            continue;
        }
        let mut p = out.state.p.clone();
        p.matrices[m].fill(C64::new(0.0, 0.0));
        let mmf = user_rates(channels, &p, &out.state.g, &out.order, config, fbl).mmf;
        if mmf > out.mmf() + ESCAPE_MARGIN && best.as_ref().is_none_or(|(b, _)| mmf > *b) {
            let state = state_from_beams(channels, p, out.state.g.clone(), &out.order, config, fbl);
            best = Some((mmf, state));
        }
    }
    best.map(|(_, s)| s)
}

fn ao_pass(
    start: DesignState,
    channels: &ChannelRealization,
    order: &DecodingOrder,
    config: &SystemConfig,
    fbl: &FblParams,
    settings: &AoSettings,
) -> AoOutcome {
    let score = |s: &DesignState| user_rates(channels, &s.p, &s.g, order, config, fbl);
    let initial_t = start.t;
    let mut best_report = score(&start);
    let mut best = start.clone();
    let mut state = start;
    let mut trace = Vec::new();
    let mut status = AoStatus::IterationCap;
    let mut failed = false;

    for n in 1..=settings.max_outer_iters {
        let previous = state.t;
        let (after_p, rec_p) = solve_block(
            BlockKind::Precoder,
            &state,
            channels,
            order,
            config,
            fbl,
            &settings.solver,
        );
        let (mut after_g, rec_g) = solve_block(
            BlockKind::Combiner,
            &after_p,
            channels,
            order,
            config,
            fbl,
            &settings.solver,
        );
        failed |= rec_p.frozen || rec_g.frozen;
        prune_streams(&mut after_g, fbl);
        after_g.iteration = n;
        let report = score(&after_g);
        trace.push(TraceRecord {
            iteration: n,
            t: after_g.t,
            true_mmf: report.mmf,
            precoder: rec_p,
            combiner: rec_g,
        });
        if report.mmf > best_report.mmf {
            best_report = report;
            best = after_g.clone();
        }
        state = after_g;
        if (state.t - previous).abs() <= settings.tolerance {
            status = AoStatus::Converged;
            break;
        }
        if rec_frozen_both(&trace) {
            break;
        }
    }
    if failed {
        status = AoStatus::SolverFailure;
    }
    AoOutcome {
        state: best,
        order: order.clone(),
        initial_t,
        trace,
        report: best_report,
        status,
        escapes: 0,
    }
}

/// Silences streams whose surrogate rate is not positive. Their rate term can
/// only lower a user's sum, and removing their signal only lowers the
/// interference seen by every other stream, so the incumbent stays feasible
/// and `t` stays a valid lower bound.
fn prune_streams(state: &mut DesignState, fbl: &FblParams) {
    let w = fbl.dispersion_weight();
    for (m, row) in state.rho.iter_mut().enumerate() {
        for (a, rho) in row.iter_mut().enumerate() {
            if *rho <= DORMANT_SINR {
                continue;
            }
            if (1.0 + *rho).log2() - w * sqrt_dispersion(*rho) <= 0.0 {
                *rho = 0.0;
                state.p.matrices[m].column_mut(a).fill(C64::new(0.0, 0.0));
            }
        }
    }
}

fn rec_frozen_both(trace: &[TraceRecord]) -> bool {
    trace
        .last()
        .is_some_and(|r| r.precoder.frozen && r.combiner.frozen)
}
