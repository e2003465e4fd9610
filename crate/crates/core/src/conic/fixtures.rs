//! Random conic programs with a known optimum, built from a complementary
//! primal-dual pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AffineExpr, ConicProgram, Constraint};

/// A program together with a certified optimal point and value.
#[derive(Debug, Clone)]
pub struct ConstructedProgram {
    pub program: ConicProgram,
    pub optimum: Vec<f64>,
    pub optimal_value: f64,
}

/// Builds a feasible, bounded program mixing nonnegative, second-order and
/// exponential cones. Every cone is either active with a nonzero multiplier or
/// inactive with a zero multiplier, so `x*` satisfies the KKT conditions.
/// Exactly `n` cones are active, which keeps a strictly feasible point.
pub fn constructed_program(seed: u64) -> ConstructedProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=7);
    let x_star: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut prog = ConicProgram::new(n);
    let mut c = vec![0.0; n];
    let cones = rng.gen_range(n..=n + 4);

    for k in 0..cones {
        let active = k < n;
        let (s, z): (Vec<f64>, Vec<f64>) = match k % 3 {
            0 => {
                if active {
                    (vec![0.0], vec![rng.gen_range(0.2..2.0)])
                } else {
                    (vec![rng.gen_range(0.2..2.0)], vec![0.0])
                }
            }
            1 => {
                let dim = rng.gen_range(2..=4);
                let y: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                if active {
                    let alpha = rng.gen_range(0.2..2.0);
                    let mut s = vec![ny];
                    s.extend(&y);
                    let mut z = vec![alpha * ny];
                    z.extend(y.iter().map(|v| -alpha * v));
                    (s, z)
                } else {
                    let mut s = vec![ny + rng.gen_range(0.2..1.0)];
                    s.extend(&y);
                    (s, vec![0.0; dim + 1])
                }
            }
            _ => {
                let v = rng.gen_range(0.3..2.0);
                let r: f64 = rng.gen_range(-1.5..1.0);
                let u = r * v;
                if active {
                    let alpha = rng.gen_range(0.2..2.0);
                    let er = r.exp();
                    (
                        vec![u, v, v * er],
                        vec![-alpha * er, alpha * er * (r - 1.0), alpha],
                    )
                } else {
                    (
                        vec![u, v, v * r.exp() + rng.gen_range(0.2..1.0)],
                        vec![0.0; 3],
                    )
                }
            }
        };
        // rows: s = A x + b with random A, b = s - A x*
        let rows: Vec<AffineExpr> = s
            .iter()
            .zip(&z)
            .enumerate()
            .map(|(p, (&si, &zi))| {
                let mut e = AffineExpr::zero();
                let forced = (k + p) % n;
                for (j, xj) in x_star.iter().enumerate() {
                    if j == forced || rng.gen_bool(0.7) {
                        let a = rng.gen_range(-1.0..1.0);
                        e.add_term(j, a);
                        c[j] -= a * zi;
                        e.constant -= a * xj;
                    }
                }
                e.constant += si;
                e
            })
            .collect();
        let constraint = match k % 3 {
            0 => Constraint::NonNeg {
                expr: rows.into_iter().next().unwrap(),
            },
            1 => {
                let mut it = rows.into_iter();
                let bound = it.next().unwrap();
                Constraint::Soc {
                    bound,
                    vector: it.collect(),
                }
            }
            _ => {
                let mut it = rows.into_iter();
                Constraint::Exp {
                    u: it.next().unwrap(),
                    v: it.next().unwrap(),
                    w: it.next().unwrap(),
                }
            }
        };
        prog.push(constraint);
    }
    prog.objective = c;
    let optimal_value = prog.objective_value(&x_star);
    ConstructedProgram {
        program: prog,
        optimum: x_star,
        optimal_value,
    }
}
