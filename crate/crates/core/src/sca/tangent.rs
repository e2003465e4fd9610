//! First-order over-estimate of the square-root dispersion `√(1 − (1+ρ)⁻²)`.

use serde::{Deserialize, Serialize};

/// Expansion points below this are treated as dormant streams: the slope of
/// the tangent diverges there and the stream carries no useful rate.
pub const DORMANT_SINR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tangent {
    pub point: f64,
    pub value: f64,
    pub slope: f64,
}

impl Tangent {
    pub fn at(rho: f64) -> Self {
        let rho = rho.max(0.0);
        let inv2 = (1.0 + rho).powi(-2);
        let value = (1.0 - inv2).sqrt();
        let slope = if rho <= DORMANT_SINR {
            f64::INFINITY
        } else {
            (1.0 + rho).powi(-3) / value
        };
        Tangent {
            point: rho,
            value,
            slope,
        }
    }

    pub fn eval(&self, rho: f64) -> f64 {
        self.value + self.slope * (rho - self.point)
    }

    pub fn is_finite(&self) -> bool {
        self.slope.is_finite()
    }
}

/// Per position and stream tangents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionTangent {
    pub grid: Vec<Vec<Tangent>>,
}

pub fn sqrt_dispersion(rho: f64) -> f64 {
    (1.0 - (1.0 + rho.max(0.0)).powi(-2)).sqrt()
}

pub fn linearize_dispersion(rho_prev: &[Vec<f64>]) -> DispersionTangent {
    DispersionTangent {
        grid: rho_prev
            .iter()
            .map(|row| row.iter().map(|&r| Tangent::at(r)).collect())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_and_slope_at_one() {
        let t = Tangent::at(1.0);
        assert!((t.value - 0.75f64.sqrt()).abs() < 1e-12);
        assert!((t.slope - 0.125 / 0.75f64.sqrt()).abs() < 1e-12);
        assert!((t.value - 0.86603).abs() < 1e-5 && (t.slope - 0.14434).abs() < 1e-5);
    }

    #[test]
    fn saturates_for_large_sinr() {
        let t = Tangent::at(1e8);
        assert!((t.value - 1.0).abs() < 1e-12 && t.slope < 1e-20);
    }

    #[test]
    fn zero_expansion_point_is_dormant() {
        assert!(!Tangent::at(0.0).is_finite());
        assert!(Tangent::at(1e-6).is_finite());
    }

    #[test]
    fn tangent_over_estimates_everywhere() {
        for &p in &[1e-6, 0.01, 0.3, 1.0, 7.0, 250.0] {
            let t = Tangent::at(p);
            for i in 0..1000 {
                let rho = i as f64 * 0.05;
                assert!(
                    t.eval(rho) >= sqrt_dispersion(rho) - 1e-12,
                    "p={p} rho={rho}"
                );
            }
            assert!((t.eval(p) - sqrt_dispersion(p)).abs() < 1e-15);
        }
    }
}
