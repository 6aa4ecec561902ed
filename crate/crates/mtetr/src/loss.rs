//! Homoscedastic-uncertainty weighting of the two frame-level tasks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learnable log-variances `s = log σ²`, one per task.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UncertaintyState {
    pub s_dia: f64,
    pub s_det: f64,
}

impl UncertaintyState {
    pub fn sigma2_dia(&self) -> f64 {
        self.s_dia.exp()
    }

    pub fn sigma2_det(&self) -> f64 {
        self.s_det.exp()
    }
}

fn term(l: f64, s: f64) -> f64 {
    0.5 * l * (-s).exp() + 0.5 * s
}

fn check(l_dia: f64, l_det: f64, state: &UncertaintyState) -> Result<()> {
    for (name, v) in [("L_dia", l_dia), ("L_det", l_det)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Numeric(format!("{name} = {v}")));
        }
    }
    if !state.s_dia.is_finite() || !state.s_det.is_finite() {
        return Err(Error::Numeric(format!("non-finite log-variance {state:?}")));
    }
    Ok(())
}

/// `L_dia/(2σ²_dia) + log σ_dia + L_det/(2σ²_det) + log σ_det`.
pub fn uncertainty_loss(l_dia: f64, l_det: f64, state: &UncertaintyState) -> Result<f64> {
    check(l_dia, l_det, state)?;
    Ok(term(l_dia, state.s_dia) + term(l_det, state.s_det))
}

/// Partial derivatives with respect to `(s_dia, s_det)`.
pub fn uncertainty_grad(l_dia: f64, l_det: f64, state: &UncertaintyState) -> Result<(f64, f64)> {
    check(l_dia, l_det, state)?;
    let g = |l: f64, s: f64| 0.5 - 0.5 * l * (-s).exp();
    Ok((g(l_dia, state.s_dia), g(l_det, state.s_det)))
}

/// Minimum over both log-variances, reached at `σ² = L`.
pub fn uncertainty_floor(l_dia: f64, l_det: f64) -> f64 {
    0.5 * (1.0 + l_dia.ln()) + 0.5 * (1.0 + l_det.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_variance_halves_the_sum() {
        let s = UncertaintyState::default();
        assert_eq!(uncertainty_loss(1.3, 0.7, &s).unwrap(), 0.5 * (1.3 + 0.7));
        assert_eq!(uncertainty_loss(0.0, 0.0, &s).unwrap(), 0.0);
    }

    #[test]
    fn stationary_point_by_golden_section() {
        let l = 2.0;
        let f = |s: f64| uncertainty_loss(l, 0.0, &UncertaintyState { s_dia: s, s_det: 0.0 }).unwrap();
        let (mut a, mut b) = (-5.0f64, 5.0f64);
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let sigma2 = (0.5 * (a + b)).exp();
        assert!((sigma2 - l).abs() < 1e-4, "{sigma2}");
    }

    #[test]
    fn rejects_non_finite() {
        let s = UncertaintyState::default();
        assert!(uncertainty_loss(f64::NAN, 1.0, &s).is_err());
        assert!(uncertainty_loss(1.0, -1.0, &s).is_err());
        let bad = UncertaintyState {
            s_dia: f64::INFINITY,
            s_det: 0.0,
        };
        assert!(uncertainty_grad(1.0, 1.0, &bad).is_err());
    }

    #[test]
    fn floor_is_attained_at_sigma_squared_equal_to_loss() {
        let (a, b) = (0.8, 3.1);
        let at = UncertaintyState {
            s_dia: f64::ln(a),
            s_det: f64::ln(b),
        };
        assert!((uncertainty_loss(a, b, &at).unwrap() - uncertainty_floor(a, b)).abs() < 1e-12);
    }
}
