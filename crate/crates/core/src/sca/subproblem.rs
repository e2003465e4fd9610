//! Linearized precoder and combiner subproblems.
//!
//! For a stream with incumbent signal `xₙ = gₙ H pₙ` and slack `ρₙ`, the SINR
//! constraint `|x|²/ρ ≥ I + noise` is replaced by its conservative
//! linearization `I + noise + ρ|xₙ|²/ρₙ² − 2Re{x̄ₙ x}/ρₙ ≤ 0`, where `x` and
//! `I` are affine and quadratic in whichever block is being optimized.

use serde::{Deserialize, Serialize};

use super::tangent::{linearize_dispersion, DORMANT_SINR};
use super::DesignState;
use crate::conic::{AffineExpr, ConicProgram, Constraint};
use crate::error::{Error, Result};
use crate::fbl::{combine_channel, combiner_noise, FblParams, PrecoderSet};
use crate::linalg::{dot, C64};
use crate::model::{ChannelRealization, DecodingOrder, NoiseNorm, SystemConfig};
use crate::scheme::lookup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Precoder,
    Combiner,
}

/// Index map of the realified program variables.
///
/// The decision variables are the beams (precoder columns or combiner rows,
/// real and imaginary parts interleaved), one slack per stream and `t`. Each
/// stream additionally owns a log-epigraph variable and, for Euclidean noise
/// norms in the combiner step, a norm bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableLayout {
    pub positions: usize,
    pub streams: usize,
    pub antennas: usize,
    rho_base: usize,
    t: usize,
    y_base: usize,
    aux_base: Option<usize>,
    total: usize,
}

impl VariableLayout {
    pub fn new(positions: usize, streams: usize, antennas: usize, norm_aux: bool) -> Self {
        let ml = positions * streams;
        let rho_base = 2 * ml * antennas;
        let t = rho_base + ml;
        let y_base = t + 1;
        let aux_base = norm_aux.then_some(y_base + ml);
        let total = y_base + ml + if norm_aux { ml } else { 0 };
        VariableLayout {
            positions,
            streams,
            antennas,
            rho_base,
            t,
            y_base,
            aux_base,
            total,
        }
    }

    /// Index of the real part; the imaginary part follows.
    pub fn beam(&self, m: usize, a: usize, i: usize) -> usize {
        2 * ((m * self.streams + a) * self.antennas + i)
    }

    pub fn rho(&self, m: usize, a: usize) -> usize {
        self.rho_base + m * self.streams + a
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn y(&self, m: usize, a: usize) -> usize {
        self.y_base + m * self.streams + a
    }

    fn aux(&self, m: usize, a: usize) -> Option<usize> {
        self.aux_base.map(|b| b + m * self.streams + a)
    }

    /// Beams, slacks and `t`.
    pub fn decision_variables(&self) -> usize {
        self.t + 1
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// Complex affine expression over realified variables.
#[derive(Debug, Clone, Default)]
struct CExpr {
    re: AffineExpr,
    im: AffineExpr,
}

impl CExpr {
    /// Adds `c·z` where `z = x[idx] + i·x[idx+1]`.
    fn add_var(&mut self, c: C64, idx: usize) {
        self.re.add_term(idx, c.re);
        self.re.add_term(idx + 1, -c.im);
        self.im.add_term(idx, c.im);
        self.im.add_term(idx + 1, c.re);
    }

    /// `Re{w·self}`.
    fn real_of_scaled(&self, w: C64) -> AffineExpr {
        let mut out = self.re.scaled(w.re);
        out.add_scaled(&self.im, -w.im);
        out
    }
}

#[derive(Debug, Clone)]
pub struct Subproblem {
    pub block: BlockKind,
    pub program: ConicProgram,
    pub layout: VariableLayout,
    pub dormant: Vec<Vec<bool>>,
    /// Scale of each slack variable: the program holds `ρ / rho_unit`.
    pub rho_unit: Vec<Vec<f64>>,
    /// Incumbent written in program coordinates.
    pub incumbent: Vec<f64>,
}

pub fn build_precoder_subproblem(
    state: &DesignState,
    channels: &ChannelRealization,
    order: &DecodingOrder,
    config: &SystemConfig,
    fbl: &FblParams,
) -> Result<Subproblem> {
    build(BlockKind::Precoder, state, channels, order, config, fbl)
}

pub fn build_combiner_subproblem(
    state: &DesignState,
    channels: &ChannelRealization,
    order: &DecodingOrder,
    config: &SystemConfig,
    fbl: &FblParams,
) -> Result<Subproblem> {
    build(BlockKind::Combiner, state, channels, order, config, fbl)
}

fn check_state(state: &DesignState, order: &DecodingOrder, config: &SystemConfig) -> Result<()> {
    let (m, l) = (order.len(), config.streams());
    let ok = state.p.matrices.len() == m
        && state.g.matrices.len() == m
        && state.rho.len() == m
        && state
            .p
            .matrices
            .iter()
            .all(|p| p.shape() == (config.tx_antennas, l))
        && state
            .g
            .matrices
            .iter()
            .all(|g| g.shape() == (l, config.rx_antennas))
        && state
            .rho
            .iter()
            .all(|r| r.len() == l && r.iter().all(|v| v.is_finite() && *v >= 0.0));
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(
            "design state does not match the configuration".into(),
        ))
    }
}

fn build(
    block: BlockKind,
    state: &DesignState,
    channels: &ChannelRealization,
    order: &DecodingOrder,
    config: &SystemConfig,
    fbl: &FblParams,
) -> Result<Subproblem> {
    check_state(state, order, config)?;
    let scheme = lookup(config.scheme);
    let (mcount, l) = (order.len(), config.streams());
    let euclid = block == BlockKind::Combiner && config.noise_norm == NoiseNorm::Euclidean;
    let antennas = match block {
        BlockKind::Precoder => config.tx_antennas,
        BlockKind::Combiner => config.rx_antennas,
    };
    let layout = VariableLayout::new(mcount, l, antennas, euclid);
    let mut prog = ConicProgram::new(layout.total()).maximize(layout.t(), 1.0);
    let tangents = linearize_dispersion(&state.rho);
    let weight = fbl.dispersion_weight();
    let sigma2 = config.noise_var;
    let rho_max = state.rho.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    let rho_cap = (100.0 * rho_max).max(1e6);

    let mut dormant = vec![vec![false; l]; mcount];
    let mut rho_unit = vec![vec![1.0; l]; mcount];
    for m in 0..mcount {
        let h_own = channels.user(order.user_at(m));
        let mut interferers: Vec<(usize, usize)> = Vec::new();
        for j in scheme.interferers(order, m) {
            for b in 0..l {
                interferers.push((j, b));
            }
        }
        for a in 0..l {
            let g_row = state.g.row(m, a);
            let p_col = state.p.column(m, a);
            // signal expression and incumbent value
            let (signal, x_n) = match block {
                BlockKind::Precoder => {
                    let c = combine_channel(&g_row, h_own);
                    (beam_expr(&layout, m, a, &c), dot(&c, &p_col))
                }
                BlockKind::Combiner => {
                    let v = h_own * nalgebra::DVector::from_vec(p_col.clone());
                    let v: Vec<C64> = v.iter().copied().collect();
                    (beam_expr(&layout, m, a, &v), dot(&g_row, &v))
                }
            };
            let rho_n = state.rho[m][a];
            let x_n2 = x_n.norm_sqr();
            let is_dormant = rho_n <= DORMANT_SINR || x_n2 <= f64::MIN_POSITIVE;
            dormant[m][a] = is_dormant;
            // the program works with ρ/ρₙ so every stream is O(1) near the incumbent
            let unit = if is_dormant { 1.0 } else { rho_n };
            rho_unit[m][a] = unit;
            let rho = layout.rho(m, a);
            prog.push(Constraint::NonNeg {
                expr: AffineExpr::var(rho),
            });
            let cap = if is_dormant { 1.0 } else { rho_cap / unit };
            prog.push(Constraint::NonNeg {
                expr: AffineExpr::constant(cap).term(rho, -1.0),
            });
            prog.push(Constraint::log2_hypograph(
                AffineExpr::var(layout.y(m, a)),
                AffineExpr::constant(1.0).term(rho, unit),
            ));
            if is_dormant {
                prog.push(Constraint::NonNeg {
                    expr: AffineExpr::var(layout.y(m, a)).plus(1.0),
                });
                if block == BlockKind::Combiner {
                    // keeps the unused combiner bounded near its incumbent
                    prog.push(Constraint::Soc {
                        bound: AffineExpr::constant(1.0),
                        vector: realified_offsets(&layout, m, a, &g_row),
                    });
                }
                continue;
            }

            // scaled by κ = ρₙ/|xₙ|²:
            // κ(I + noise) + ρ/ρₙ − 2Re{x̄ₙ x}/|xₙ|² ≤ 0
            let kappa = rho_n / x_n2;
            let kappa_sqrt = kappa.sqrt();
            let mut q: Vec<AffineExpr> = Vec::new();
            let intra = (0..l).filter(|&b| b != a).map(|b| (m, b));
            for (j, b) in intra.chain(interferers.iter().copied()) {
                let h_j = channels.user(order.user_at(j));
                let e = match block {
                    BlockKind::Precoder => {
                        let c = combine_channel(&g_row, h_j);
                        beam_expr(&layout, j, b, &c)
                    }
                    BlockKind::Combiner => {
                        let v = h_j * nalgebra::DVector::from_vec(state.p.column(j, b));
                        let v: Vec<C64> = v.iter().copied().collect();
                        beam_expr(&layout, m, a, &v)
                    }
                };
                q.push(e.re.scaled(kappa_sqrt));
                q.push(e.im.scaled(kappa_sqrt));
            }
            let mut r = signal.real_of_scaled(x_n.conj() * (2.0 / x_n2));
            r.add_term(rho, -1.0);
            match block {
                BlockKind::Precoder => {
                    r.constant -= kappa * combiner_noise(&g_row, sigma2, config.noise_norm);
                }
                BlockKind::Combiner if euclid => {
                    let aux = layout.aux(m, a).expect("aux layout");
                    r.add_term(aux, -kappa * sigma2);
                    let vector = realified(&layout, m, a);
                    prog.push(Constraint::Soc {
                        bound: AffineExpr::var(aux),
                        vector: vector.clone(),
                    });
                    prog.push(Constraint::Soc {
                        bound: AffineExpr::constant(1.0),
                        vector,
                    });
                }
                BlockKind::Combiner => {
                    let s = (kappa * sigma2).sqrt();
                    q.extend(realified(&layout, m, a).into_iter().map(|e| e.scaled(s)));
                }
            }
            prog.push(Constraint::rotated_quadratic(q, r));
        }
    }

    // rate constraints per user
    let mut rate_rows = Vec::with_capacity(config.users);
    for k in 0..config.users {
        let mut expr = AffineExpr::var(layout.t()).scaled(-1.0);
        for m in order.positions_of(k) {
            for a in 0..l {
                if dormant[m][a] {
                    continue;
                }
                let tg = tangents.grid[m][a];
                expr.add_term(layout.y(m, a), 1.0);
                expr.add_term(layout.rho(m, a), -weight * tg.slope * rho_unit[m][a]);
                expr.constant -= weight * (tg.value - tg.slope * tg.point);
            }
        }
        rate_rows.push(expr.clone());
        prog.push(Constraint::NonNeg { expr });
    }

    if block == BlockKind::Precoder {
        for k in 0..config.users {
            let mut vector = Vec::new();
            for m in order.positions_of(k) {
                for a in 0..l {
                    vector.extend(realified(&layout, m, a));
                }
            }
            prog.push(Constraint::Soc {
                bound: AffineExpr::constant(config.power.sqrt()),
                vector,
            });
        }
    }

    let incumbent = incumbent_point(block, state, &layout, &dormant, &rate_rows);
    Ok(Subproblem {
        block,
        program: prog,
        layout,
        dormant,
        rho_unit,
        incumbent,
    })
}

fn beam_expr(layout: &VariableLayout, m: usize, a: usize, coef: &[C64]) -> CExpr {
    let mut e = CExpr::default();
    for (i, c) in coef.iter().enumerate() {
        e.add_var(*c, layout.beam(m, a, i));
    }
    e
}

fn realified(layout: &VariableLayout, m: usize, a: usize) -> Vec<AffineExpr> {
    (0..layout.antennas)
        .flat_map(|i| {
            let idx = layout.beam(m, a, i);
            [AffineExpr::var(idx), AffineExpr::var(idx + 1)]
        })
        .collect()
}

fn realified_offsets(
    layout: &VariableLayout,
    m: usize,
    a: usize,
    center: &[C64],
) -> Vec<AffineExpr> {
    (0..layout.antennas)
        .flat_map(|i| {
            let idx = layout.beam(m, a, i);
            [
                AffineExpr::var(idx).plus(-center[i].re),
                AffineExpr::var(idx + 1).plus(-center[i].im),
            ]
        })
        .collect()
}

/// The incumbent pulled slightly into the interior of the feasible set so
/// the solver can skip its feasibility phase: beams shrink by a relative
/// `1e-4` (precoders only), slacks by `1%`, and the epigraph variables and
/// `t` back off from their bounds.
fn incumbent_point(
    block: BlockKind,
    state: &DesignState,
    layout: &VariableLayout,
    dormant: &[Vec<bool>],
    rate_rows: &[AffineExpr],
) -> Vec<f64> {
    const SHRINK: f64 = 1e-4;
    let beam_scale = match block {
        BlockKind::Precoder => 1.0 - SHRINK,
        BlockKind::Combiner if layout.aux_base.is_some() => 1.0 - SHRINK,
        BlockKind::Combiner => 1.0,
    };
    let mut x = vec![0.0; layout.total()];
    for m in 0..layout.positions {
        for a in 0..layout.streams {
            let beam = match block {
                BlockKind::Precoder => state.p.column(m, a),
                BlockKind::Combiner => state.g.row(m, a),
            };
            for (i, v) in beam.iter().enumerate() {
                let idx = layout.beam(m, a, i);
                x[idx] = v.re * beam_scale;
                x[idx + 1] = v.im * beam_scale;
            }
            let (scaled, rho) = if dormant[m][a] {
                (0.5, 0.5)
            } else {
                (0.99, 0.99 * state.rho[m][a])
            };
            x[layout.rho(m, a)] = scaled;
            x[layout.y(m, a)] = (1.0 + rho).log2() - 1e-3 * (1.0 + rho).log2().max(1e-3);
            if let Some(aux) = layout.aux(m, a) {
                let norm = beam.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt() * beam_scale;
                x[aux] = norm * (1.0 + SHRINK) + 1e-12;
            }
        }
    }
    let worst = rate_rows
        .iter()
        .map(|e| e.eval(&x))
        .fold(f64::INFINITY, f64::min);
    x[layout.t()] = worst - 1e-3 * (1.0 + worst.abs());
    x
}

/// Writes a subproblem solution back into a design state.
pub fn apply_solution(sub: &Subproblem, x: &[f64], state: &DesignState) -> DesignState {
    let layout = &sub.layout;
    let mut next = state.clone();
    for m in 0..layout.positions {
        for a in 0..layout.streams {
            for i in 0..layout.antennas {
                let idx = layout.beam(m, a, i);
                let v = C64::new(x[idx], x[idx + 1]);
                match sub.block {
                    BlockKind::Precoder => next.p.matrices[m][(i, a)] = v,
                    BlockKind::Combiner => next.g.matrices[m][(a, i)] = v,
                }
            }
            next.rho[m][a] = if sub.dormant[m][a] {
                0.0
            } else {
                (x[layout.rho(m, a)] * sub.rho_unit[m][a]).max(0.0)
            };
        }
    }
    next.t = x[layout.t()];
    next
}

/// Restores exact power feasibility after an interior-point solve that may
/// sit a rounding error outside the budget.
pub(crate) fn clip_power(p: &mut PrecoderSet, order: &DecodingOrder, users: usize, budget: f64) {
    for k in 0..users {
        let pos = order.positions_of(k);
        let used = p.power(&pos);
        if used > budget {
            let s = (budget / used).sqrt();
            for m in pos {
                p.matrices[m] *= C64::new(s, 0.0);
            }
        }
    }
}
