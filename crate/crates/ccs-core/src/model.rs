//! Superpopulation generator: two crossed random effects plus noise, and the
//! Poisson/binomial count-variable process used by the ratio experiments.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CcsError, Result};
use crate::grid::PopulationGrid;
use crate::rng::stream_rng;

/// `Y_ik = mu + sigma_m * U_i + sigma_d * V_k + sigma_e * W_ik` with
/// independent standard-normal effects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: f64,
    pub sigma_m: f64,
    pub sigma_d: f64,
    pub sigma_e: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    pub seed: u64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = self.mu.is_finite()
            && self.sigma_m.is_finite()
            && self.sigma_d.is_finite()
            && self.sigma_e.is_finite();
        if !finite {
            return Err(CcsError::InvalidParams("non-finite parameter".into()));
        }
        if self.sigma_m < 0.0 || self.sigma_d < 0.0 || self.sigma_e < 0.0 {
            return Err(CcsError::InvalidParams("sigma values must be non-negative".into()));
        }
        if self.n_rows == 0 || self.n_cols == 0 {
            return Err(CcsError::InvalidParams("grid dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// How the thinning probabilities `p_ik` are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PMode {
    /// `p_ik = p` for every cell.
    Constant(f64),
    /// `p_ik = exp(beta * Z_ik) / (1 + exp(beta * Z_ik))`.
    Logit(f64),
}

/// Paired count variables: `X_ik ~ Poisson(Z_ik)` and
/// `Y_ik ~ Binomial(X_ik, p_ik)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountVariablePair {
    pub x: PopulationGrid,
    pub y: PopulationGrid,
    pub p_mode: PMode,
}

// streams within one seed
const STREAM_GRID: u64 = 0;
const STREAM_COUNTS: u64 = 1;

// Poisson parameters must be positive; negative Z is astronomically rare at
// the paper's parameter scale, so clamping keeps the generator total.
const Z_FLOOR: f64 = 1e-9;

/// Generates a grid from the crossed random-effects model. Identical params
/// (including seed) give a bit-identical grid.
pub fn generate_grid(params: &ModelParams) -> Result<PopulationGrid> {
    params.validate()?;
    let mut rng = stream_rng(params.seed, STREAM_GRID);
    let row_effects: Vec<f64> = (0..params.n_rows)
        .map(|_| params.sigma_m * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let col_effects: Vec<f64> = (0..params.n_cols)
        .map(|_| params.sigma_d * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut values = Vec::with_capacity(params.n_rows * params.n_cols);
    for u in &row_effects {
        for v in &col_effects {
            let w: f64 = rng.sample(StandardNormal);
            values.push(params.mu + u + v + params.sigma_e * w);
        }
    }
    PopulationGrid::new(params.n_rows, params.n_cols, values, "model-grid")
}

/// Generates the count pair of the ratio experiments: a latent grid `Z` from
/// the model, then `X ~ Poisson(Z)` and `Y ~ Binomial(X, p)`.
pub fn generate_count_pair(params: &ModelParams, p_mode: PMode) -> Result<CountVariablePair> {
    params.validate()?;
    if let PMode::Constant(p) = p_mode {
        if !(p > 0.0 && p <= 1.0) {
            return Err(CcsError::InvalidParams(format!("thinning probability {p} not in (0, 1]")));
        }
    }
    let z = generate_grid(params)?;
    let mut rng = stream_rng(params.seed, STREAM_COUNTS);
    let n = z.n_rows() * z.n_cols();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for &zv in z.values() {
        let lambda = zv.max(Z_FLOOR);
        let x = Poisson::new(lambda)
            .map_err(|e| CcsError::InvalidParams(format!("poisson({lambda}): {e}")))?
            .sample(&mut rng) as u64;
        let p = match p_mode {
            PMode::Constant(p) => p,
            PMode::Logit(beta) => logistic(beta * zv),
        };
        let y = if x == 0 {
            0
        } else {
            Binomial::new(x, p)
                .map_err(|e| CcsError::InvalidParams(format!("binomial({x}, {p}): {e}")))?
                .sample(&mut rng)
        };
        xs.push(x as f64);
        ys.push(y as f64);
    }
    Ok(CountVariablePair {
        x: PopulationGrid::new(z.n_rows(), z.n_cols(), xs, "counts-x")?,
        y: PopulationGrid::new(z.n_rows(), z.n_cols(), ys, "counts-y")?,
        p_mode,
    })
}

#[inline]
fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Grid mean of `logistic(beta * Z_ik)`.
pub fn mean_logit_prob(z: &PopulationGrid, beta: f64) -> f64 {
    let n = (z.n_rows() * z.n_cols()) as f64;
    z.values().iter().map(|&v| logistic(beta * v)).sum::<f64>() / n
}

/// Finds `beta` such that the grid mean of `logistic(beta * Z_ik)` hits
/// `target` to 1e-6, by bracket expansion and bisection. The mean is
/// monotone in `beta` when the grid is of one sign, which holds after the
/// positivity clamp used by the count generator.
pub fn calibrate_beta(z: &PopulationGrid, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(CcsError::InvalidParams(format!("target {target} must lie in (0, 1)")));
    }
    let mean_z: f64 = z.values().iter().sum::<f64>() / (z.n_rows() * z.n_cols()) as f64;
    let scale = if mean_z.abs() > 0.0 { mean_z.abs() } else { 1.0 };
    let (mut lo, mut hi) = (-1.0 / scale, 1.0 / scale);
    let f = |beta: f64| mean_logit_prob(z, beta) - target;
    let mut flo = f(lo);
    let mut fhi = f(hi);
    let mut expansions = 0;
    while flo * fhi > 0.0 {
        lo *= 2.0;
        hi *= 2.0;
        flo = f(lo);
        fhi = f(hi);
        expansions += 1;
        if expansions > 60 {
            return Err(CcsError::CalibrationBracket { target, lo, hi });
        }
    }
    // mean_logit_prob increasing in beta for positive Z; flip if needed
    let increasing = fhi >= flo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() < 1e-9 {
            return Ok(mid);
        }
        if (fm < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = 0.5 * (lo + hi);
    if f(beta).abs() <= 1e-6 {
        Ok(beta)
    } else {
        Err(CcsError::CalibrationBracket { target, lo, hi })
    }
}
