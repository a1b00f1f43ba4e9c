//! Sample-based variance estimators for the HT total: the unbiased HT
//! estimator, the Yates-Grundy estimator, and the three non-negative
//! simplified estimators, each with its components.
//!
//! Estimators consume a [`SampleMatrix`], so the linearized variable of a
//! ratio plugs in with no extra code path.

use serde::{Deserialize, Serialize};

use crate::design::{CrossSample, DesignKind, DesignSpec, Stratum};
use crate::error::{CcsError, Result};
use crate::estimate::SampleMatrix;
use crate::grid::PopulationGrid;
use crate::model::{generate_grid, ModelParams};
use crate::rng::{stream_rng, SEARCH_STREAM_BASE};

/// HT variance estimator with its three components
/// (`v_ht = v_ht_1 + v_ht_2 - v_ht_3`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HtComponents {
    pub v_ht: f64,
    pub v_ht_1: f64,
    pub v_ht_2: f64,
    pub v_ht_3: f64,
}

/// Yates-Grundy variance estimator with its components
/// (`v_yg = v_yg_1 + v_yg_2 - v_yg_3`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YgComponents {
    pub v_yg: f64,
    pub v_yg_1: f64,
    pub v_yg_2: f64,
    pub v_yg_3: f64,
}

/// The three simplified estimators (`v_simp3 = v_simp1 + v_simp2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimpComponents {
    pub v_simp1: f64,
    pub v_simp2: f64,
    pub v_simp3: f64,
}

/// Everything computed on one sample. Yates-Grundy and simplified estimators
/// are only defined for fixed-size designs and are absent under Poisson.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarEstimateReport {
    pub v_ht: f64,
    pub v_ht_1: f64,
    pub v_ht_2: f64,
    pub v_ht_3: f64,
    pub v_yg: Option<f64>,
    pub v_yg_1: Option<f64>,
    pub v_yg_2: Option<f64>,
    pub v_yg_3: Option<f64>,
    pub v_simp1: Option<f64>,
    pub v_simp2: Option<f64>,
    pub v_simp3: Option<f64>,
    pub negative_ht: bool,
    pub negative_yg: bool,
}

struct Prepared {
    /// `Ycheck` on the sampled cells, local row-major.
    check: Vec<f64>,
    /// `A_i = Yhat_i. / pi_i^M` per sampled row.
    row_expanded: Vec<f64>,
    /// `B_k = Yhat_.k / pi_k^D` per sampled column.
    col_expanded: Vec<f64>,
}

fn prepare(sm: &SampleMatrix, dm: &DesignSpec, dd: &DesignSpec) -> Result<Prepared> {
    let (nr, nc) = (sm.n_rows(), sm.n_cols());
    let mut pi_m = Vec::with_capacity(nr);
    for &i in &sm.rows {
        let p = dm.pi1(i)?;
        if p <= 0.0 {
            return Err(CcsError::ZeroInclusionProbability(i));
        }
        pi_m.push(p);
    }
    let mut pi_d = Vec::with_capacity(nc);
    for &k in &sm.cols {
        let p = dd.pi1(k)?;
        if p <= 0.0 {
            return Err(CcsError::ZeroInclusionProbability(k));
        }
        pi_d.push(p);
    }
    let mut check = Vec::with_capacity(nr * nc);
    let mut row_expanded = vec![0.0; nr];
    let mut col_expanded = vec![0.0; nc];
    for r in 0..nr {
        for c in 0..nc {
            let v = sm.get_local(r, c) / (pi_m[r] * pi_d[c]);
            check.push(v);
            row_expanded[r] += v;
            col_expanded[c] += v;
        }
    }
    Ok(Prepared { check, row_expanded, col_expanded })
}

/// HT variance estimator with components, via the factorized fast paths.
pub fn v_ht(sm: &SampleMatrix, dm: &DesignSpec, dd: &DesignSpec) -> Result<HtComponents> {
    let p = prepare(sm, dm, dd)?;
    let cm = dm.estimator_coeffs(&sm.rows)?;
    let cd = dd.estimator_coeffs(&sm.cols)?;
    let v_ht_1 = cm.quadratic(&p.row_expanded);
    let v_ht_2 = cd.quadratic(&p.col_expanded);
    let ax = cm.apply_rows(&p.check, sm.n_rows(), sm.n_cols());
    let bax = cd.apply_cols(&ax, sm.n_rows(), sm.n_cols());
    let v_ht_3: f64 = p.check.iter().zip(&bax).map(|(u, v)| u * v).sum();
    Ok(HtComponents { v_ht: v_ht_1 + v_ht_2 - v_ht_3, v_ht_1, v_ht_2, v_ht_3 })
}

/// HT variance estimator via explicit sums over sampled pairs (oracle path).
pub fn v_ht_generic(sm: &SampleMatrix, dm: &DesignSpec, dd: &DesignSpec) -> Result<HtComponents> {
    let p = prepare(sm, dm, dd)?;
    let (nr, nc) = (sm.n_rows(), sm.n_cols());
    let weight = |d: &DesignSpec, a: usize, b: usize| -> Result<f64> {
        let p2 = d.pi2(a, b)?;
        if p2 <= 0.0 {
            return Err(CcsError::ZeroJointProbability(a, b));
        }
        Ok(d.delta(a, b)? / p2)
    };
    let (mut v1, mut v2, mut v3) = (0.0, 0.0, 0.0);
    for r in 0..nr {
        for r2 in 0..nr {
            let wm = weight(dm, sm.rows[r], sm.rows[r2])?;
            v1 += wm * p.row_expanded[r] * p.row_expanded[r2];
            for c in 0..nc {
                for c2 in 0..nc {
                    let wd = weight(dd, sm.cols[c], sm.cols[c2])?;
                    v3 += wm * wd * p.check[r * nc + c] * p.check[r2 * nc + c2];
                }
            }
        }
    }
    for c in 0..nc {
        for c2 in 0..nc {
            let wd = weight(dd, sm.cols[c], sm.cols[c2])?;
            v2 += wd * p.col_expanded[c] * p.col_expanded[c2];
        }
    }
    Ok(HtComponents { v_ht: v1 + v2 - v3, v_ht_1: v1, v_ht_2: v2, v_ht_3: v3 })
}

/// Yates-Grundy variance estimator with components; both designs must be of
/// fixed size.
pub fn v_yg(sm: &SampleMatrix, dm: &DesignSpec, dd: &DesignSpec) -> Result<YgComponents> {
    if !dm.fixed_size() || !dd.fixed_size() {
        return Err(CcsError::NotFixedSize);
    }
    let p = prepare(sm, dm, dd)?;
    let cm = dm.estimator_coeffs(&sm.rows)?;
    let cd = dd.estimator_coeffs(&sm.cols)?;
    let v_yg_1 = cm.yg_quadratic(&p.row_expanded);
    let v_yg_2 = cd.yg_quadratic(&p.col_expanded);

    // -1/2 sum_{(i,k) != (j,l)} w^M_ij w^D_kl (X_ik - X_jl)^2 expands into a
    // cross term (shared with v_ht_3) minus a row-sum-weighted square term
    let (nr, nc) = (sm.n_rows(), sm.n_cols());
    let ax = cm.apply_rows(&p.check, nr, nc);
    let bax = cd.apply_cols(&ax, nr, nc);
    let cross: f64 = p.check.iter().zip(&bax).map(|(u, v)| u * v).sum();
    let rm = cm.row_sums();
    let rd = cd.row_sums();
    let mut sq = 0.0;
    for r in 0..nr {
        for c in 0..nc {
            let x = p.check[r * nc + c];
            sq += x * x * rm[r] * rd[c];
        }
    }
    let v_yg_3 = cross - sq;
    Ok(YgComponents { v_yg: v_yg_1 + v_yg_2 - v_yg_3, v_yg_1, v_yg_2, v_yg_3 })
}

/// Yates-Grundy estimator via explicit sums over sampled pairs (oracle path).
pub fn v_yg_generic(sm: &SampleMatrix, dm: &DesignSpec, dd: &DesignSpec) -> Result<YgComponents> {
    if !dm.fixed_size() || !dd.fixed_size() {
        return Err(CcsError::NotFixedSize);
    }
    let p = prepare(sm, dm, dd)?;
    let (nr, nc) = (sm.n_rows(), sm.n_cols());
    let weight = |d: &DesignSpec, a: usize, b: usize| -> Result<f64> {
        let p2 = d.pi2(a, b)?;
        if p2 <= 0.0 {
            return Err(CcsError::ZeroJointProbability(a, b));
        }
        Ok(d.delta(a, b)? / p2)
    };
    let mut v1 = 0.0;
    for r in 0..nr {
        for r2 in 0..nr {
            if r == r2 {
                continue;
            }
            let wm = weight(dm, sm.rows[r], sm.rows[r2])?;
            v1 += -0.5 * wm * (p.row_expanded[r] - p.row_expanded[r2]).powi(2);
        }
    }
    let mut v2 = 0.0;
    for c in 0..nc {
        for c2 in 0..nc {
            if c == c2 {
                continue;
            }
            let wd = weight(dd, sm.cols[c], sm.cols[c2])?;
            v2 += -0.5 * wd * (p.col_expanded[c] - p.col_expanded[c2]).powi(2);
        }
    }
    let mut v3 = 0.0;
    for r in 0..nr {
        for c in 0..nc {
            for r2 in 0..nr {
                for c2 in 0..nc {
                    if r == r2 && c == c2 {
                        continue;
                    }
                    let wm = weight(dm, sm.rows[r], sm.rows[r2])?;
                    let wd = weight(dd, sm.cols[c], sm.cols[c2])?;
                    v3 += -0.5 * wm * wd * (p.check[r * nc + c] - p.check[r2 * nc + c2]).powi(2);
                }
            }
        }
    }
    Ok(YgComponents { v_yg: v1 + v2 - v3, v_yg_1: v1, v_yg_2: v2, v_yg_3: v3 })
}

/// The simplified estimators, defined from the Yates-Grundy components.
pub fn v_simplified(sm: &SampleMatrix, dm: &DesignSpec, dd: &DesignSpec) -> Result<SimpComponents> {
    let yg = v_yg(sm, dm, dd)?;
    Ok(SimpComponents { v_simp1: yg.v_yg_1, v_simp2: yg.v_yg_2, v_simp3: yg.v_yg_1 + yg.v_yg_2 })
}

/// Closed-form route for the simplified estimators under SI or STSI:
/// fpc-weighted sample variances of the estimated sub-totals,
/// `N^2 (1/n - 1/N) s^2` overall or summed per stratum. Strata with a single
/// sampled unit contribute zero, matching the general form.
pub fn v_simplified_closed_form(
    sm: &SampleMatrix,
    dm: &DesignSpec,
    dd: &DesignSpec,
) -> Result<SimpComponents> {
    let p = prepare(sm, dm, dd)?;
    // Yhat_i. = A_i * pi_i^M (and symmetrically for columns)
    let yhat_rows: Vec<f64> = sm
        .rows
        .iter()
        .zip(&p.row_expanded)
        .map(|(&i, &a)| a * dm.pi1_raw(i))
        .collect();
    let yhat_cols: Vec<f64> = sm
        .cols
        .iter()
        .zip(&p.col_expanded)
        .map(|(&k, &b)| b * dd.pi1_raw(k))
        .collect();
    let v_simp1 = fpc_variance(dm, &sm.rows, &yhat_rows)?;
    let v_simp2 = fpc_variance(dd, &sm.cols, &yhat_cols)?;
    Ok(SimpComponents { v_simp1, v_simp2, v_simp3: v_simp1 + v_simp2 })
}

fn fpc_variance(design: &DesignSpec, sample: &[usize], yhat: &[f64]) -> Result<f64> {
    fn one_stratum(values: &[f64], n: usize, big_n: usize) -> f64 {
        if values.len() < 2 {
            return 0.0;
        }
        let m = values.iter().sum::<f64>() / values.len() as f64;
        let s2 = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
        let (n, big_n) = (n as f64, big_n as f64);
        big_n * big_n * (1.0 / n - 1.0 / big_n) * s2
    }
    match design.kind() {
        DesignKind::Si { n } => Ok(one_stratum(yhat, *n, design.population_size())),
        DesignKind::Stsi { strata } => {
            let mut bounds = Vec::with_capacity(strata.len() + 1);
            let mut acc = 0;
            for s in strata {
                bounds.push(acc);
                acc += s.size;
            }
            bounds.push(acc);
            let mut total = 0.0;
            for (h, s) in strata.iter().enumerate() {
                let values: Vec<f64> = sample
                    .iter()
                    .zip(yhat)
                    .filter(|(&i, _)| i >= bounds[h] && i < bounds[h + 1])
                    .map(|(_, &v)| v)
                    .collect();
                total += one_stratum(&values, s.take, s.size);
            }
            Ok(total)
        }
        DesignKind::Poisson { .. } => Err(CcsError::NotFixedSize),
    }
}

/// Full per-sample report; Yates-Grundy and simplified entries are filled
/// only when both designs are of fixed size.
pub fn full_report(sm: &SampleMatrix, dm: &DesignSpec, dd: &DesignSpec) -> Result<VarEstimateReport> {
    let ht = v_ht(sm, dm, dd)?;
    let (yg, simp) = if dm.fixed_size() && dd.fixed_size() {
        let yg = v_yg(sm, dm, dd)?;
        let simp = SimpComponents {
            v_simp1: yg.v_yg_1,
            v_simp2: yg.v_yg_2,
            v_simp3: yg.v_yg_1 + yg.v_yg_2,
        };
        (Some(yg), Some(simp))
    } else {
        (None, None)
    };
    Ok(VarEstimateReport {
        v_ht: ht.v_ht,
        v_ht_1: ht.v_ht_1,
        v_ht_2: ht.v_ht_2,
        v_ht_3: ht.v_ht_3,
        v_yg: yg.map(|y| y.v_yg),
        v_yg_1: yg.map(|y| y.v_yg_1),
        v_yg_2: yg.map(|y| y.v_yg_2),
        v_yg_3: yg.map(|y| y.v_yg_3),
        v_simp1: simp.map(|s| s.v_simp1),
        v_simp2: simp.map(|s| s.v_simp2),
        v_simp3: simp.map(|s| s.v_simp3),
        negative_ht: ht.v_ht < 0.0,
        negative_yg: yg.map(|y| y.v_yg < 0.0).unwrap_or(false),
    })
}

/// A configuration on which an unbiased variance estimator went negative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NegativeWitness {
    pub grid: PopulationGrid,
    pub dm: DesignSpec,
    pub dd: DesignSpec,
    pub sample: CrossSample,
    pub v_ht: f64,
    pub v_yg: f64,
}

/// Randomized search for a sample on which `v_ht` or `v_yg` is negative.
/// Draws populations with weak row/column effects (where negativity is
/// common) and returns the first witness, or `None` on budget exhaustion.
pub fn find_negative_case(budget: usize, seed: u64) -> Option<NegativeWitness> {
    let n = 20;
    let dm = DesignSpec::si(5, n).ok()?;
    let dd = DesignSpec::si(5, n).ok()?;
    for attempt in 0..budget {
        let params = ModelParams {
            mu: 200.0,
            sigma_m: 0.5,
            sigma_d: 0.5,
            sigma_e: 5.0,
            n_rows: n,
            n_cols: n,
            seed: seed.wrapping_add(attempt as u64),
        };
        let grid = generate_grid(&params).ok()?;
        let mut rng = stream_rng(seed, SEARCH_STREAM_BASE + attempt as u64);
        let sample = CrossSample::draw(&dm, &dd, &mut rng);
        let sm = SampleMatrix::from_grid(&grid, &sample);
        let ht = v_ht(&sm, &dm, &dd).ok()?;
        let yg = v_yg(&sm, &dm, &dd).ok()?;
        if ht.v_ht < 0.0 || yg.v_yg < 0.0 {
            return Some(NegativeWitness {
                grid,
                dm,
                dd,
                sample,
                v_ht: ht.v_ht,
                v_yg: yg.v_yg,
            });
        }
    }
    None
}

/// Re-exported for tests that build STSI fixtures.
pub fn stratum(size: usize, take: usize) -> Stratum {
    Stratum { size, take }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact;

    fn grid(nr: usize, nc: usize, v: Vec<f64>) -> PopulationGrid {
        PopulationGrid::new(nr, nc, v, "t").unwrap()
    }

    fn pseudo_grid(nr: usize, nc: usize, seed: u64) -> PopulationGrid {
        generate_grid(&ModelParams {
            mu: 10.0,
            sigma_m: 2.0,
            sigma_d: 1.5,
            sigma_e: 1.0,
            n_rows: nr,
            n_cols: nc,
            seed,
        })
        .unwrap()
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    // enumeration unbiasedness oracle: E[v_ht] = E[v_yg] = V_CCS
    #[test]
    fn enumeration_unbiasedness_si2() {
        let y = grid(3, 3, vec![1.0, 4.0, 2.0, 8.0, 5.0, 7.0, 3.0, 6.0, 9.0]);
        let dm = DesignSpec::si(2, 3).unwrap();
        let dd = DesignSpec::si(2, 3).unwrap();
        let v = exact::v_ccs(&y, &dm, &dd).unwrap();
        let mut mean_ht = 0.0;
        let mut mean_yg = 0.0;
        for (rows, pm) in dm.enumerate().unwrap() {
            for (cols, pd) in dd.enumerate().unwrap() {
                let s = CrossSample { rows: rows.clone(), cols };
                let smx = SampleMatrix::from_grid(&y, &s);
                mean_ht += pm * pd * v_ht(&smx, &dm, &dd).unwrap().v_ht;
                mean_yg += pm * pd * v_yg(&smx, &dm, &dd).unwrap().v_yg;
            }
        }
        assert!(rel_close(mean_ht, v, 1e-9), "{mean_ht} vs {v}");
        assert!(rel_close(mean_yg, v, 1e-9), "{mean_yg} vs {v}");
    }

    #[test]
    fn fast_paths_match_generic_paths() {
        let y = pseudo_grid(6, 6, 4);
        let designs = [
            (DesignSpec::si(3, 6).unwrap(), DesignSpec::si(4, 6).unwrap()),
            (
                DesignSpec::stsi(vec![stratum(3, 2), stratum(3, 2)]).unwrap(),
                DesignSpec::stsi(vec![stratum(2, 1), stratum(4, 3)]).unwrap(),
            ),
        ];
        let mut rng = stream_rng(5, 0);
        for (dm, dd) in designs {
            for _ in 0..5 {
                let s = CrossSample::draw(&dm, &dd, &mut rng);
                let smx = SampleMatrix::from_grid(&y, &s);
                let fast = v_ht(&smx, &dm, &dd).unwrap();
                let slow = v_ht_generic(&smx, &dm, &dd).unwrap();
                assert!(rel_close(fast.v_ht_1, slow.v_ht_1, 1e-9));
                assert!(rel_close(fast.v_ht_2, slow.v_ht_2, 1e-9));
                assert!(rel_close(fast.v_ht_3, slow.v_ht_3, 1e-9));
                let fyg = v_yg(&smx, &dm, &dd).unwrap();
                let syg = v_yg_generic(&smx, &dm, &dd).unwrap();
                assert!(rel_close(fyg.v_yg_1, syg.v_yg_1, 1e-9));
                assert!(rel_close(fyg.v_yg_2, syg.v_yg_2, 1e-9));
                assert!(rel_close(fyg.v_yg_3, syg.v_yg_3, 1e-9), "{} vs {}", fyg.v_yg_3, syg.v_yg_3);
            }
        }
        // Poisson: HT estimator only
        let dm = DesignSpec::poisson_uniform(0.5, 6).unwrap();
        let dd = DesignSpec::poisson_uniform(0.4, 6).unwrap();
        for _ in 0..5 {
            let s = CrossSample::draw(&dm, &dd, &mut rng);
            let smx = SampleMatrix::from_grid(&y, &s);
            let fast = v_ht(&smx, &dm, &dd).unwrap();
            let slow = v_ht_generic(&smx, &dm, &dd).unwrap();
            assert!(rel_close(fast.v_ht, slow.v_ht, 1e-9));
        }
    }

    // under STSI both dimensions, HT and YG components match term by term
    #[test]
    fn stsi_ht_and_yg_components_match() {
        let y = pseudo_grid(5, 6, 9);
        let dm = DesignSpec::stsi(vec![stratum(3, 2), stratum(2, 2)]).unwrap();
        let dd = DesignSpec::stsi(vec![stratum(3, 2), stratum(3, 2)]).unwrap();
        let mut rng = stream_rng(11, 0);
        for _ in 0..10 {
            let s = CrossSample::draw(&dm, &dd, &mut rng);
            let smx = SampleMatrix::from_grid(&y, &s);
            let ht = v_ht(&smx, &dm, &dd).unwrap();
            let yg = v_yg(&smx, &dm, &dd).unwrap();
            assert!(rel_close(ht.v_ht_1, yg.v_yg_1, 1e-9));
            assert!(rel_close(ht.v_ht_2, yg.v_yg_2, 1e-9));
            assert!(rel_close(ht.v_ht_3, yg.v_yg_3, 1e-9));
        }
    }

    #[test]
    fn constant_variable_gives_zero_estimates() {
        let y = grid(4, 4, vec![3.0; 16]);
        let dm = DesignSpec::si(2, 4).unwrap();
        let dd = DesignSpec::si(2, 4).unwrap();
        let s = CrossSample { rows: vec![0, 2], cols: vec![1, 3] };
        let smx = SampleMatrix::from_grid(&y, &s);
        let ht = v_ht(&smx, &dm, &dd).unwrap();
        assert!(ht.v_ht.abs() < 1e-9);
        let yg = v_yg(&smx, &dm, &dd).unwrap();
        assert!(yg.v_yg.abs() < 1e-9);
        assert!(yg.v_yg_1.abs() < 1e-9 && yg.v_yg_2.abs() < 1e-9 && yg.v_yg_3.abs() < 1e-9);
    }

    #[test]
    fn poisson_v_ht_is_nonnegative() {
        let y = pseudo_grid(8, 8, 6);
        let dm = DesignSpec::poisson_uniform(0.4, 8).unwrap();
        let dd = DesignSpec::poisson_uniform(0.6, 8).unwrap();
        let mut rng = stream_rng(3, 0);
        for _ in 0..200 {
            let s = CrossSample::draw(&dm, &dd, &mut rng);
            let smx = SampleMatrix::from_grid(&y, &s);
            let ht = v_ht(&smx, &dm, &dd).unwrap();
            assert!(ht.v_ht >= -1e-9, "v_ht {}", ht.v_ht);
        }
    }

    #[test]
    fn yg_rejects_poisson() {
        let y = pseudo_grid(4, 4, 2);
        let dm = DesignSpec::poisson_uniform(0.5, 4).unwrap();
        let dd = DesignSpec::si(2, 4).unwrap();
        let s = CrossSample { rows: vec![0, 1], cols: vec![0, 1] };
        let smx = SampleMatrix::from_grid(&y, &s);
        assert!(matches!(v_yg(&smx, &dm, &dd), Err(CcsError::NotFixedSize)));
        assert!(matches!(v_simplified(&smx, &dm, &dd), Err(CcsError::NotFixedSize)));
    }

    #[test]
    fn simplified_are_nonnegative_under_syg_designs() {
        let y = pseudo_grid(6, 6, 12);
        let dm = DesignSpec::si(3, 6).unwrap();
        let dd = DesignSpec::stsi(vec![stratum(3, 2), stratum(3, 1)]).unwrap();
        let mut rng = stream_rng(8, 0);
        for _ in 0..50 {
            let s = CrossSample::draw(&dm, &dd, &mut rng);
            let smx = SampleMatrix::from_grid(&y, &s);
            let simp = v_simplified(&smx, &dm, &dd).unwrap();
            assert!(simp.v_simp1 >= -1e-12);
            assert!(simp.v_simp2 >= -1e-12);
            assert!(rel_close(simp.v_simp3, simp.v_simp1 + simp.v_simp2, 1e-12));
            assert!(simp.v_simp3 >= simp.v_simp1.max(simp.v_simp2) - 1e-12);
        }
    }

    // dual-formula oracle: fpc closed forms vs the Yates-Grundy general forms
    #[test]
    fn closed_forms_match_general_forms() {
        let y = pseudo_grid(6, 7, 14);
        let configs = [
            (DesignSpec::si(3, 6).unwrap(), DesignSpec::si(4, 7).unwrap()),
            (
                DesignSpec::stsi(vec![stratum(3, 2), stratum(3, 2)]).unwrap(),
                DesignSpec::stsi(vec![stratum(3, 2), stratum(4, 1)]).unwrap(),
            ),
        ];
        let mut rng = stream_rng(21, 0);
        for (dm, dd) in configs {
            for _ in 0..10 {
                let s = CrossSample::draw(&dm, &dd, &mut rng);
                let smx = SampleMatrix::from_grid(&y, &s);
                let general = v_simplified(&smx, &dm, &dd).unwrap();
                let closed = v_simplified_closed_form(&smx, &dm, &dd).unwrap();
                assert!(rel_close(general.v_simp1, closed.v_simp1, 1e-9));
                assert!(rel_close(general.v_simp2, closed.v_simp2, 1e-9));
                assert!(rel_close(general.v_simp3, closed.v_simp3, 1e-9));
            }
        }
    }

    #[test]
    fn row_census_zeroes_simp1() {
        let y = pseudo_grid(4, 6, 15);
        let dm = DesignSpec::si(4, 4).unwrap();
        let dd = DesignSpec::si(2, 6).unwrap();
        let mut rng = stream_rng(2, 0);
        let s = CrossSample::draw(&dm, &dd, &mut rng);
        let smx = SampleMatrix::from_grid(&y, &s);
        let simp = v_simplified(&smx, &dm, &dd).unwrap();
        assert!(simp.v_simp1.abs() < 1e-9, "v_simp1 {}", simp.v_simp1);
    }

    #[test]
    fn negative_witness_found_in_budget() {
        let w = find_negative_case(2000, 77).expect("expected a negative witness");
        assert!(w.v_ht < 0.0 || w.v_yg < 0.0);
        // regression fixture: recompute from the stored configuration
        let smx = SampleMatrix::from_grid(&w.grid, &w.sample);
        let ht = v_ht(&smx, &w.dm, &w.dd).unwrap();
        assert!((ht.v_ht - w.v_ht).abs() < 1e-12);
    }

    #[test]
    fn full_report_flags_negativity() {
        let w = find_negative_case(2000, 77).unwrap();
        let smx = SampleMatrix::from_grid(&w.grid, &w.sample);
        let rep = full_report(&smx, &w.dm, &w.dd).unwrap();
        assert_eq!(rep.negative_ht, rep.v_ht < 0.0);
        assert_eq!(rep.negative_yg, rep.v_yg.unwrap() < 0.0);
        assert!(rep.negative_ht || rep.negative_yg);
    }
}
