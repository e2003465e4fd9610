//! Log-homogeneous barriers for the supported cones, in cone coordinates.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ConeKind {
    NonNeg,
    Soc,
    Exp,
}

impl ConeKind {
    pub fn degree(self, dim: usize) -> f64 {
        match self {
            ConeKind::NonNeg => 1.0,
            ConeKind::Soc if dim == 1 => 1.0,
            ConeKind::Soc => 2.0,
            ConeKind::Exp => 3.0,
        }
    }

    /// Direction that moves every point toward the interior.
    pub fn interior_direction(self, dim: usize) -> Vec<f64> {
        match self {
            ConeKind::NonNeg => vec![1.0],
            ConeKind::Soc => {
                let mut e = vec![0.0; dim];
                e[0] = 1.0;
                e
            }
            ConeKind::Exp => vec![-1.0, 1.0, 1.0],
        }
    }

    pub fn is_interior(self, s: &[f64]) -> bool {
        if s.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            ConeKind::NonNeg => s[0] > 0.0,
            ConeKind::Soc => s[0] > 0.0 && soc_gap(s) > 0.0,
            ConeKind::Exp => s[1] > 0.0 && s[2] > 0.0 && exp_psi(s) > 0.0,
        }
    }

    /// Barrier value; caller guarantees interior.
    pub fn value(self, s: &[f64]) -> f64 {
        match self {
            ConeKind::NonNeg => -s[0].ln(),
            ConeKind::Soc => -soc_gap(s).ln(),
            ConeKind::Exp => -exp_psi(s).ln() - s[1].ln() - s[2].ln(),
        }
    }

    pub fn gradient(self, s: &[f64]) -> Vec<f64> {
        match self {
            ConeKind::NonNeg => vec![-1.0 / s[0]],
            ConeKind::Soc => {
                let d = soc_gap(s);
                let mut g: Vec<f64> = s.iter().map(|v| 2.0 * v / d).collect();
                g[0] = -2.0 * s[0] / d;
                g
            }
            ConeKind::Exp => {
                let psi = exp_psi(s);
                let dp = exp_dpsi(s);
                vec![
                    -dp[0] / psi,
                    -dp[1] / psi - 1.0 / s[1],
                    -dp[2] / psi - 1.0 / s[2],
                ]
            }
        }
    }

    /// Dense 3x3 Hessian of the exponential barrier.
    pub fn exp_hessian(s: &[f64]) -> [[f64; 3]; 3] {
        let (v, w) = (s[1], s[2]);
        let psi = exp_psi(s);
        let dp = exp_dpsi(s);
        let d2 = [
            [0.0, 0.0, 0.0],
            [0.0, -1.0 / v, 1.0 / w],
            [0.0, 1.0 / w, -v / (w * w)],
        ];
        let mut h = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                h[i][j] = dp[i] * dp[j] / (psi * psi) - d2[i][j] / psi;
            }
        }
        h[1][1] += 1.0 / (v * v);
        h[2][2] += 1.0 / (w * w);
        h
    }
}

/// `t² − ‖y‖²` computed as a product to limit cancellation.
pub(crate) fn soc_gap(s: &[f64]) -> f64 {
    let n = s[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    (s[0] - n) * (s[0] + n)
}

fn exp_psi(s: &[f64]) -> f64 {
    let (u, v, w) = (s[0], s[1], s[2]);
    v * (w / v).ln() - u
}

fn exp_dpsi(s: &[f64]) -> [f64; 3] {
    let (v, w) = (s[1], s[2]);
    [-1.0, (w / v).ln() - 1.0, v / w]
}
