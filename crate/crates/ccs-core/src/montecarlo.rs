//! Replicated simulation harness: repeated cross-sample draws, per-draw
//! estimation with all variance estimators, and aggregation into percent
//! relative biases, negative-estimate counts, and interval coverage.
//!
//! Replications are embarrassingly parallel. Each replication derives its
//! RNG from the master seed plus its index, so results are bit-identical
//! for any worker count.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{CrossSample, DesignSpec};
use crate::error::{CcsError, Result};
use crate::estimate::{ht_ratio, ht_total_from, SampleMatrix};
use crate::exact;
use crate::grid::PopulationGrid;
use crate::model::{generate_grid, ModelParams};
use crate::rng::{stream_rng, REP_STREAM_BASE, TRUTH_STREAM_BASE};
use crate::varest;

/// What the experiment estimates: a total of a single variable, or the
/// ratio of two variables on the same grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PopSource {
    Total(PopulationGrid),
    Ratio { y: PopulationGrid, x: PopulationGrid },
}

impl PopSource {
    fn dims(&self) -> (usize, usize) {
        match self {
            PopSource::Total(g) => (g.n_rows(), g.n_cols()),
            PopSource::Ratio { y, .. } => (y.n_rows(), y.n_cols()),
        }
    }

    fn validate(&self) -> Result<()> {
        if let PopSource::Ratio { y, x } = self {
            if y.n_rows() != x.n_rows() || y.n_cols() != x.n_cols() {
                return Err(CcsError::DimensionMismatch(
                    "ratio variables must share dimensions".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Independent replications used to approximate the true variance when no
/// closed form applies.
pub const DEFAULT_TRUTH_REPS: usize = 50_000;

/// One simulation cell: population, designs, replication counts, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub pop: PopSource,
    pub dm: DesignSpec,
    pub dd: DesignSpec,
    pub reps: usize,
    pub truth_reps: usize,
    pub seed: u64,
    pub ci_level: Option<f64>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.pop.validate()?;
        let (nr, nc) = self.pop.dims();
        if self.dm.population_size() != nr || self.dd.population_size() != nc {
            return Err(CcsError::DimensionMismatch(
                "design population sizes must match the grid".into(),
            ));
        }
        if self.reps == 0 || self.truth_reps < 2 {
            return Err(CcsError::InvalidParams("reps >= 1 and truth_reps >= 2 required".into()));
        }
        if let Some(level) = self.ci_level {
            if !(level > 0.0 && level < 1.0) {
                return Err(CcsError::InvalidParams("ci_level must lie in (0, 1)".into()));
            }
            if !(self.dm.fixed_size() && self.dd.fixed_size()) {
                return Err(CcsError::NotFixedSize);
            }
        }
        Ok(())
    }
}

/// Aggregated results of one experiment. `rb_mc` holds percent relative
/// biases per estimator; `neg_count` is populated for `v_ht` and `v_yg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub rb_mc: BTreeMap<String, f64>,
    pub neg_count: BTreeMap<String, u64>,
    pub true_variance: f64,
    pub true_variance_se: f64,
    pub coverage: Option<f64>,
    pub skipped: u64,
    pub elapsed_ms: u64,
}

impl SimulationSummary {
    /// JSON with the wall-clock field zeroed, for determinism comparisons.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.elapsed_ms = 0;
        serde_json::to_string_pretty(&c).expect("summary serializes")
    }
}

struct RepOutcome {
    estimate: f64,
    report: Option<varest::VarEstimateReport>,
    skipped: bool,
}

fn replicate(spec: &ExperimentSpec, rep: usize, with_estimators: bool) -> Result<RepOutcome> {
    let stream = if with_estimators { REP_STREAM_BASE } else { TRUTH_STREAM_BASE };
    let mut rng = stream_rng(spec.seed, stream + rep as u64);
    let sample = CrossSample::draw(&spec.dm, &spec.dd, &mut rng);
    let (estimate, sm) = match &spec.pop {
        PopSource::Total(g) => {
            let sm = SampleMatrix::from_grid(g, &sample);
            let est = ht_total_from(&sm, &spec.dm, &spec.dd)?;
            (est.t_hat, sm)
        }
        PopSource::Ratio { y, x } => match ht_ratio(y, x, &spec.dm, &spec.dd, &sample) {
            Ok(r) => (r.r_hat, r.linearized),
            Err(CcsError::ZeroDenominator) => {
                return Ok(RepOutcome { estimate: 0.0, report: None, skipped: true })
            }
            Err(e) => return Err(e),
        },
    };
    let report = if with_estimators {
        Some(varest::full_report(&sm, &spec.dm, &spec.dd)?)
    } else {
        None
    };
    Ok(RepOutcome { estimate, report, skipped: false })
}

/// The target parameter of the experiment (exact, from the full grid).
pub fn true_parameter(pop: &PopSource) -> Result<f64> {
    match pop {
        PopSource::Total(g) => Ok(g.total()),
        PopSource::Ratio { y, x } => {
            let tx = x.total();
            if tx == 0.0 {
                return Err(CcsError::ZeroDenominator);
            }
            Ok(y.total() / tx)
        }
    }
}

fn variance_with_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for v in values {
        let d = v - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    let s2 = m2 / (m - 1.0);
    m2 /= m;
    m4 /= m;
    // standard error of the sample variance from the fourth central moment
    let var_s2 = (m4 - (m - 3.0) / (m - 1.0) * m2 * m2) / m;
    (s2, var_s2.max(0.0).sqrt())
}

/// Run one experiment: `reps` replications with all estimators, plus an
/// independent set of `truth_reps` replications approximating the true
/// variance of the point estimator.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SimulationSummary> {
    spec.validate()?;
    let start = Instant::now();

    let outcomes: Vec<RepOutcome> = (0..spec.reps)
        .into_par_iter()
        .map(|b| replicate(spec, b, true))
        .collect::<Result<_>>()?;
    let truth_estimates: Vec<f64> = (0..spec.truth_reps)
        .into_par_iter()
        .map(|b| replicate(spec, b, false))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|o| !o.skipped)
        .map(|o| o.estimate)
        .collect();
    if truth_estimates.len() < 2 {
        return Err(CcsError::InvalidParams(
            "too few non-degenerate truth replications".into(),
        ));
    }
    let (mut true_variance, mut true_variance_se) = variance_with_se(&truth_estimates);
    // identical estimates can round to a ~eps^2-level positive variance
    let mean_truth = truth_estimates.iter().sum::<f64>() / truth_estimates.len() as f64;
    if true_variance <= 1e-20 * mean_truth * mean_truth {
        true_variance = 0.0;
        true_variance_se = 0.0;
    }

    let mut sums: BTreeMap<&str, (f64, u64)> = BTreeMap::new();
    let mut neg_ht = 0u64;
    let mut neg_yg = 0u64;
    let mut skipped = 0u64;
    let mut covered = 0u64;
    let mut kept = 0u64;
    let target = true_parameter(&spec.pop)?;
    let z = spec.ci_level.map(|level| inverse_normal_cdf(0.5 + level / 2.0));
    for o in &outcomes {
        if o.skipped {
            skipped += 1;
            continue;
        }
        kept += 1;
        let r = o.report.as_ref().expect("estimator replication carries a report");
        let mut add = |k: &'static str, v: Option<f64>| {
            if let Some(v) = v {
                let e = sums.entry(k).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
        };
        add("v_ht", Some(r.v_ht));
        add("v_yg", r.v_yg);
        add("v_simp1", r.v_simp1);
        add("v_simp2", r.v_simp2);
        add("v_simp3", r.v_simp3);
        if r.negative_ht {
            neg_ht += 1;
        }
        if r.negative_yg {
            neg_yg += 1;
        }
        if let Some(z) = z {
            let half = z * r.v_simp3.unwrap_or(0.0).max(0.0).sqrt();
            // absolute slack guards the zero-width degenerate interval
            if (o.estimate - target).abs() <= half + 1e-9 * target.abs().max(1.0) {
                covered += 1;
            }
        }
    }
    if kept == 0 {
        return Err(CcsError::InvalidParams("all replications were skipped".into()));
    }
    let mut rb_mc = BTreeMap::new();
    for (k, (sum, n)) in &sums {
        let mean = sum / *n as f64;
        let rb = if true_variance == 0.0 {
            if mean == 0.0 { 0.0 } else { f64::INFINITY * mean.signum() }
        } else {
            100.0 * (mean - true_variance) / true_variance
        };
        rb_mc.insert((*k).to_string(), rb);
    }
    let mut neg_count = BTreeMap::new();
    neg_count.insert("v_ht".to_string(), neg_ht);
    if spec.dm.fixed_size() && spec.dd.fixed_size() {
        neg_count.insert("v_yg".to_string(), neg_yg);
    }
    Ok(SimulationSummary {
        rb_mc,
        neg_count,
        true_variance,
        true_variance_se,
        coverage: z.map(|_| covered as f64 / kept as f64),
        skipped,
        elapsed_ms: start.elapsed().as_millis() as u64,
    })
}

/// One row of a multi-cell run; failures are isolated per cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub n_m: usize,
    pub n_d: usize,
    pub summary: Option<SimulationSummary>,
    pub error: Option<String>,
}

/// Run a matrix of experiments, one row per cell, isolating failures.
pub fn run_table(cells: &[(String, ExperimentSpec)]) -> Vec<TableRow> {
    cells
        .iter()
        .map(|(label, spec)| {
            let n_m = spec.dm.expected_sample_size().round() as usize;
            let n_d = spec.dd.expected_sample_size().round() as usize;
            match run_experiment(spec) {
                Ok(summary) => TableRow {
                    label: label.clone(),
                    n_m,
                    n_d,
                    summary: Some(summary),
                    error: None,
                },
                Err(e) => TableRow {
                    label: label.clone(),
                    n_m,
                    n_d,
                    summary: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Empirical coverage of normal-theory intervals built on `v_simp3`.
pub fn coverage_study(spec: &ExperimentSpec) -> Result<f64> {
    if spec.ci_level.is_none() {
        return Err(CcsError::InvalidParams("coverage study requires ci_level".into()));
    }
    let summary = run_experiment(spec)?;
    Ok(summary.coverage.expect("ci_level was set"))
}

/// Model-averaged percent relative biases of the simplified estimators:
/// fresh population realizations, many samples per realization, biases
/// measured against the exact design variance of each realization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelDesignRb {
    pub rb1: f64,
    pub rb2: f64,
    pub rb3: f64,
    pub se1: f64,
    pub se2: f64,
    pub se3: f64,
}

pub fn model_design_rb(
    params: &ModelParams,
    dm: &DesignSpec,
    dd: &DesignSpec,
    populations: usize,
    samples_per_pop: usize,
    seed: u64,
) -> Result<ModelDesignRb> {
    if populations < 2 || samples_per_pop == 0 {
        return Err(CcsError::InvalidParams(
            "need >= 2 populations and >= 1 sample per population".into(),
        ));
    }
    // per population: exact variance and the mean of each simplified estimator
    let per_pop: Vec<(f64, [f64; 3])> = (0..populations)
        .into_par_iter()
        .map(|p| -> Result<(f64, [f64; 3])> {
            let grid = generate_grid(&ModelParams {
                seed: seed.wrapping_add(p as u64),
                ..*params
            })?;
            let v = exact::v_ccs(&grid, dm, dd)?;
            let mut sums = [0.0; 3];
            for s in 0..samples_per_pop {
                let mut rng =
                    stream_rng(seed, REP_STREAM_BASE + (p * samples_per_pop + s) as u64);
                let sample = CrossSample::draw(dm, dd, &mut rng);
                let sm = SampleMatrix::from_grid(&grid, &sample);
                let simp = varest::v_simplified(&sm, dm, dd)?;
                sums[0] += simp.v_simp1;
                sums[1] += simp.v_simp2;
                sums[2] += simp.v_simp3;
            }
            let n = samples_per_pop as f64;
            Ok((v, [sums[0] / n, sums[1] / n, sums[2] / n]))
        })
        .collect::<Result<_>>()?;

    let p = populations as f64;
    let v_bar = per_pop.iter().map(|(v, _)| v).sum::<f64>() / p;
    let mut out = [(0.0, 0.0); 3];
    for j in 0..3 {
        let d_bar = per_pop.iter().map(|(v, m)| m[j] - v).sum::<f64>() / p;
        let rb = d_bar / v_bar;
        // delta-method standard error of the ratio of means
        let resid_var = per_pop
            .iter()
            .map(|(v, m)| {
                let r = (m[j] - v) - rb * v;
                r * r
            })
            .sum::<f64>()
            / (p - 1.0);
        out[j] = (100.0 * rb, 100.0 * (resid_var / p).sqrt() / v_bar);
    }
    Ok(ModelDesignRb {
        rb1: out[0].0,
        rb2: out[1].0,
        rb3: out[2].0,
        se1: out[0].1,
        se2: out[1].1,
        se3: out[2].1,
    })
}

/// Inverse standard-normal CDF (Acklam's rational approximation, |err| < 1.2e-9).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability must lie in (0, 1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -inverse_normal_cdf(1.0 - p)
    }
}
