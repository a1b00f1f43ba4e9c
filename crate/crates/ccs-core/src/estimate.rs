//! Horvitz-Thompson point estimation on a realized cross sample: totals,
//! sub-totals, ratios and the linearized variable for ratio variances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::design::{CrossSample, DesignSpec};
use crate::error::{CcsError, Result};
use crate::grid::PopulationGrid;

/// Variable values restricted to the sampled cells `S_M x S_D`, stored dense
/// row-major over local sample indices. Variance estimators consume this, so
/// plugging in the linearized variable needs no separate code path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMatrix {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    values: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(rows: Vec<usize>, cols: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows.len() * cols.len() {
            return Err(CcsError::DimensionMismatch(format!(
                "sample matrix needs {} values, got {}",
                rows.len() * cols.len(),
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_grid(grid: &PopulationGrid, sample: &CrossSample) -> Self {
        let mut values = Vec::with_capacity(sample.rows.len() * sample.cols.len());
        for &i in &sample.rows {
            for &k in &sample.cols {
                values.push(grid.get(i, k));
            }
        }
        Self { rows: sample.rows.clone(), cols: sample.cols.clone(), values }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn get_local(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols.len() + c]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty() || self.cols.is_empty()
    }
}

/// HT estimate of a total together with the estimated sub-totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEstimate {
    pub t_hat: f64,
    /// `Yhat_i. = sum_{k in S_D} Y_ik / pi_k^D`, keyed by population row index.
    pub row_subtotals: BTreeMap<usize, f64>,
    /// `Yhat_.k = sum_{i in S_M} Y_ik / pi_i^M`, keyed by population column index.
    pub col_subtotals: BTreeMap<usize, f64>,
    /// Set when the sample is empty in a dimension (possible under Poisson);
    /// the estimate is then the empty sum, zero.
    pub degenerate: bool,
}

fn inclusion_probs(design: &DesignSpec, idx: &[usize]) -> Result<Vec<f64>> {
    idx.iter()
        .map(|&i| {
            let p = design.pi1(i)?;
            if p <= 0.0 {
                Err(CcsError::ZeroInclusionProbability(i))
            } else {
                Ok(p)
            }
        })
        .collect()
}

/// HT estimator of the total from the sampled cells.
pub fn ht_total_from(
    sm: &SampleMatrix,
    dm: &DesignSpec,
    dd: &DesignSpec,
) -> Result<SampleEstimate> {
    let pi_m = inclusion_probs(dm, &sm.rows)?;
    let pi_d = inclusion_probs(dd, &sm.cols)?;
    let mut row_subtotals = BTreeMap::new();
    let mut col_acc = vec![0.0; sm.n_cols()];
    let mut t_rows = 0.0;
    for (r, &i) in sm.rows.iter().enumerate() {
        let mut yhat_i = 0.0;
        for (c, _) in sm.cols.iter().enumerate() {
            let y = sm.get_local(r, c);
            yhat_i += y / pi_d[c];
            col_acc[c] += y / pi_m[r];
        }
        row_subtotals.insert(i, yhat_i);
        t_rows += yhat_i / pi_m[r];
    }
    let mut col_subtotals = BTreeMap::new();
    let mut t_cols = 0.0;
    for (c, &k) in sm.cols.iter().enumerate() {
        col_subtotals.insert(k, col_acc[c]);
        t_cols += col_acc[c] / pi_d[c];
    }
    let degenerate = sm.is_empty();
    if !degenerate {
        let scale = t_rows.abs().max(t_cols.abs()).max(1.0);
        debug_assert!((t_rows - t_cols).abs() <= 1e-9 * scale, "aggregation mismatch");
    }
    Ok(SampleEstimate { t_hat: t_rows, row_subtotals, col_subtotals, degenerate })
}

/// HT estimator of the total of `y` on the realized cross sample.
pub fn ht_total(
    y: &PopulationGrid,
    dm: &DesignSpec,
    dd: &DesignSpec,
    s: &CrossSample,
) -> Result<SampleEstimate> {
    s.validate(dm, dd)?;
    ht_total_from(&SampleMatrix::from_grid(y, s), dm, dd)
}

/// Substitution (ratio) estimate with the attached linearized variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub r_hat: f64,
    pub t_hat_y: f64,
    pub t_hat_x: f64,
    pub linearized: SampleMatrix,
}

/// Estimated linearized variable of the ratio on the sampled cells:
/// `u_ik = (Y_ik - R_hat * X_ik) / t_hat_X`.
pub fn linearize(
    y: &PopulationGrid,
    x: &PopulationGrid,
    dm: &DesignSpec,
    dd: &DesignSpec,
    s: &CrossSample,
) -> Result<SampleMatrix> {
    Ok(ht_ratio(y, x, dm, dd, s)?.linearized)
}

/// `R_hat = t_hat_Y / t_hat_X` with the linearized variable attached.
pub fn ht_ratio(
    y: &PopulationGrid,
    x: &PopulationGrid,
    dm: &DesignSpec,
    dd: &DesignSpec,
    s: &CrossSample,
) -> Result<RatioEstimate> {
    if y.n_rows() != x.n_rows() || y.n_cols() != x.n_cols() {
        return Err(CcsError::DimensionMismatch("ratio variables must share dimensions".into()));
    }
    let sy = SampleMatrix::from_grid(y, s);
    let sx = SampleMatrix::from_grid(x, s);
    let t_hat_y = ht_total_from(&sy, dm, dd)?.t_hat;
    let t_hat_x = ht_total_from(&sx, dm, dd)?.t_hat;
    if t_hat_x == 0.0 {
        return Err(CcsError::ZeroDenominator);
    }
    let r_hat = t_hat_y / t_hat_x;
    let values = sy
        .values()
        .iter()
        .zip(sx.values())
        .map(|(&yv, &xv)| (yv - r_hat * xv) / t_hat_x)
        .collect();
    let linearized = SampleMatrix::new(sy.rows.clone(), sy.cols.clone(), values)?;
    Ok(RatioEstimate { r_hat, t_hat_y, t_hat_x, linearized })
}
