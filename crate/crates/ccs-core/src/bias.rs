//! Closed-form relative biases of the simplified variance estimators under
//! a two-way random-effects model, assuming SI designs in both dimensions.
//!
//! With variance ratios `r_M = sigma_M^2 / sigma_E^2` and
//! `r_D = sigma_D^2 / sigma_E^2`, the simplified one-way estimators are
//! biased low and the combined estimator is biased high; all three biases
//! depend on the design only through the sample and population sizes.

use serde::{Deserialize, Serialize};

use crate::error::{CcsError, Result};

/// Inputs to the closed-form bias computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasInputs {
    /// `sigma_M^2 / sigma_E^2`.
    pub r_m: f64,
    /// `sigma_D^2 / sigma_E^2`.
    pub r_d: f64,
    pub n_m: usize,
    pub n_d: usize,
    pub cap_n_m: usize,
    pub cap_n_d: usize,
}

/// Intermediate ratios and the resulting relative biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Relative bias of the row-only simplified estimator; always in (-1, 0).
    pub rb1: f64,
    /// Relative bias of the column-only simplified estimator; always in (-1, 0).
    pub rb2: f64,
    /// Relative bias of the combined simplified estimator; always in (0, 1).
    pub rb3: f64,
}

impl BiasInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_m.is_finite() && self.r_d.is_finite()) || self.r_m < 0.0 || self.r_d < 0.0 {
            return Err(CcsError::InvalidParams("variance ratios must be finite and >= 0".into()));
        }
        if self.n_m == 0 || self.n_d == 0 {
            return Err(CcsError::InvalidParams("sample sizes must be positive".into()));
        }
        if self.n_m > self.cap_n_m || self.n_d > self.cap_n_d {
            return Err(CcsError::InvalidParams(
                "sample size exceeds population size".into(),
            ));
        }
        if self.n_m == self.cap_n_m || self.n_d == self.cap_n_d {
            return Err(CcsError::InvalidParams(
                "census in one dimension: relative biases are undefined".into(),
            ));
        }
        Ok(())
    }

    /// Build the variance-ratio inputs from model standard deviations.
    pub fn from_sigmas(
        sigma_m: f64,
        sigma_d: f64,
        sigma_e: f64,
        n_m: usize,
        n_d: usize,
        cap_n_m: usize,
        cap_n_d: usize,
    ) -> Result<Self> {
        if !(sigma_e.is_finite()) || sigma_e <= 0.0 {
            return Err(CcsError::InvalidParams("sigma_e must be finite and > 0".into()));
        }
        Ok(BiasInputs {
            r_m: (sigma_m / sigma_e).powi(2),
            r_d: (sigma_d / sigma_e).powi(2),
            n_m,
            n_d,
            cap_n_m,
            cap_n_d,
        })
    }
}

/// Closed-form relative biases.
pub fn closed_form_rb(inputs: &BiasInputs) -> Result<BiasReport> {
    inputs.validate()?;
    let (r_m, r_d) = (inputs.r_m, inputs.r_d);
    let (n_m, n_d) = (inputs.n_m as f64, inputs.n_d as f64);
    let f_m = n_m / inputs.cap_n_m as f64;
    let f_d = n_d / inputs.cap_n_d as f64;
    let a1 = ((1.0 - f_m) / (1.0 - f_d)) * (n_d * r_m + 1.0) / (n_m * r_d + f_m);
    let a2 = ((1.0 - f_d) / (1.0 - f_m)) * (n_m * r_d + 1.0) / (n_d * r_m + f_d);
    let a3 = (n_d * r_m + f_d) / (1.0 - f_d) + (n_m * r_d + f_m) / (1.0 - f_m);
    Ok(BiasReport {
        a1,
        a2,
        a3,
        rb1: -1.0 / (1.0 + a1),
        rb2: -1.0 / (1.0 + a2),
        rb3: 1.0 / (1.0 + a3),
    })
}

/// Check that `|rb1|` decreases and `rb3` decreases as `r_m` grows over the
/// supplied grid of ratios (column effects held fixed). Returns the reports.
pub fn monotonicity_check(
    base: &BiasInputs,
    r_m_grid: &[f64],
) -> Result<(bool, Vec<BiasReport>)> {
    let mut reports = Vec::with_capacity(r_m_grid.len());
    for &r_m in r_m_grid {
        reports.push(closed_form_rb(&BiasInputs { r_m, ..*base })?);
    }
    let monotone = reports
        .windows(2)
        .all(|w| w[1].rb1.abs() <= w[0].rb1.abs() + 1e-12 && w[1].rb3 <= w[0].rb3 + 1e-12);
    Ok((monotone, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base() -> BiasInputs {
        BiasInputs { r_m: 1.0, r_d: 1.0, n_m: 5, n_d: 5, cap_n_m: 1000, cap_n_d: 1000 }
    }

    #[test]
    fn frozen_equal_ratio_values() {
        // r_M = r_D = 1, n = 5, N = 1000 in both dimensions:
        // A1 = A2 = (5*1 + 1)/(5*1 + 0.005) = 6/5.005
        let rep = closed_form_rb(&base()).unwrap();
        assert!((rep.a1 - 6.0 / 5.005).abs() < 1e-12);
        assert!((rep.a2 - 6.0 / 5.005).abs() < 1e-12);
        assert!((rep.rb1 + 1.0 / (1.0 + 6.0 / 5.005)).abs() < 1e-12, "rb1 {}", rep.rb1);
        assert!((rep.rb1 + 0.4548).abs() < 1e-4, "rb1 {}", rep.rb1);
        assert!((rep.rb2 - rep.rb1).abs() < 1e-12);
        assert!((rep.a3 - 2.0 * 5.005 / 0.995).abs() < 1e-12);
        assert!((rep.rb3 - 0.0904).abs() < 1e-4, "rb3 {}", rep.rb3);
    }

    #[test]
    fn strong_row_effects_leave_column_estimator_badly_biased() {
        // r_M = 100 drives A2 toward 0 and rb2 toward -1
        let rep = closed_form_rb(&BiasInputs { r_m: 100.0, ..base() }).unwrap();
        assert!(rep.rb2 < -0.98, "rb2 {}", rep.rb2);
        assert!(rep.rb1 > -0.02, "rb1 {}", rep.rb1);
        assert!(rep.rb3 < 0.01, "rb3 {}", rep.rb3);
    }

    #[test]
    fn signs_and_ranges() {
        for &(r_m, r_d) in &[(0.0, 0.0), (0.1, 2.0), (3.0, 0.5), (100.0, 100.0)] {
            let rep = closed_form_rb(&BiasInputs { r_m, r_d, ..base() }).unwrap();
            assert!(rep.rb1 > -1.0 && rep.rb1 < 0.0);
            assert!(rep.rb2 > -1.0 && rep.rb2 < 0.0);
            assert!(rep.rb3 > 0.0 && rep.rb3 < 1.0);
        }
    }

    #[test]
    fn monotone_in_row_effect() {
        let grid = [0.0, 0.1, 0.5, 1.0, 5.0, 20.0, 100.0];
        let (ok, reports) = monotonicity_check(&base(), &grid).unwrap();
        assert!(ok);
        assert_eq!(reports.len(), grid.len());
    }

    #[test]
    fn from_sigmas_matches_direct_ratios() {
        let a = BiasInputs::from_sigmas(2.0, 1.0, 2.0, 5, 5, 1000, 1000).unwrap();
        assert!((a.r_m - 1.0).abs() < 1e-15);
        assert!((a.r_d - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_census_and_bad_inputs() {
        assert!(closed_form_rb(&BiasInputs { n_m: 1000, ..base() }).is_err());
        assert!(closed_form_rb(&BiasInputs { r_m: -1.0, ..base() }).is_err());
        assert!(closed_form_rb(&BiasInputs { n_m: 0, ..base() }).is_err());
        assert!(closed_form_rb(&BiasInputs { n_m: 2000, ..base() }).is_err());
        assert!(BiasInputs::from_sigmas(1.0, 1.0, 0.0, 5, 5, 10, 10).is_err());
    }

    proptest! {
        // swapping dimensions swaps the two one-way biases and fixes rb3
        #[test]
        fn symmetry_under_dimension_swap(
            r_m in 0.0f64..10.0,
            r_d in 0.0f64..10.0,
            n_m in 2usize..50,
            n_d in 2usize..50,
        ) {
            let a = closed_form_rb(&BiasInputs { r_m, r_d, n_m, n_d, cap_n_m: 500, cap_n_d: 700 }).unwrap();
            let b = closed_form_rb(&BiasInputs {
                r_m: r_d, r_d: r_m, n_m: n_d, n_d: n_m, cap_n_m: 700, cap_n_d: 500,
            }).unwrap();
            prop_assert!((a.rb1 - b.rb2).abs() < 1e-12);
            prop_assert!((a.rb2 - b.rb1).abs() < 1e-12);
            prop_assert!((a.rb3 - b.rb3).abs() < 1e-12);
        }
    }
}
