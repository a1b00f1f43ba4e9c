//! Exact, population-level variances of the HT estimator under
//! cross-classified sampling: the HT and Sen-Yates-Grundy forms, the
//! `V1 + V2 - V3` and Ohlsson decompositions, the two-stage variances with
//! PSU/SSU components, and the CCS-vs-two-stage difference.
//!
//! Every quantity has two routes: a generic quadruple sum (guarded, used as
//! oracle), and a fast path that exploits the block structure of SI, STSI and
//! Poisson coefficient matrices to run in O(N_M * N_D).

use serde::{Deserialize, Serialize};

use crate::design::{DesignKind, DesignSpec, PairCoeffs};
use crate::error::{CcsError, Result};
use crate::grid::PopulationGrid;

const GENERIC_TERM_GUARD: u128 = 100_000_000;

/// All exact variance components for one population and design pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactVarianceReport {
    pub v_ccs: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v_md: f64,
    pub v_md_psu: f64,
    pub v_md_ssu: f64,
    pub v_dm: f64,
    pub v_dm_psu: f64,
    pub v_dm_ssu: f64,
}

/// `Gamma_ijkl = pi2_ij^M pi2_kl^D - pi_i^M pi_j^M pi_k^D pi_l^D`.
pub fn gamma(dm: &DesignSpec, dd: &DesignSpec, i: usize, j: usize, k: usize, l: usize) -> Result<f64> {
    Ok(dm.pi2(i, j)? * dd.pi2(k, l)? - dm.pi1(i)? * dm.pi1(j)? * dd.pi1(k)? * dd.pi1(l)?)
}

fn check_dims(y: &PopulationGrid, dm: &DesignSpec, dd: &DesignSpec) -> Result<()> {
    if y.n_rows() != dm.population_size() || y.n_cols() != dd.population_size() {
        return Err(CcsError::DimensionMismatch(format!(
            "grid is {}x{}, designs cover {}x{}",
            y.n_rows(),
            y.n_cols(),
            dm.population_size(),
            dd.population_size()
        )));
    }
    Ok(())
}

fn guard_generic(y: &PopulationGrid) -> Result<()> {
    let cells = (y.n_rows() as u128) * (y.n_cols() as u128);
    let terms = cells * cells;
    if terms > GENERIC_TERM_GUARD {
        return Err(CcsError::PopulationTooLarge(terms));
    }
    Ok(())
}

/// Expanded values `Ycheck_ik = Y_ik / (pi_i^M pi_k^D)`, row-major.
fn check_matrix(y: &PopulationGrid, dm: &DesignSpec, dd: &DesignSpec) -> Result<Vec<f64>> {
    check_dims(y, dm, dd)?;
    let pi_m: Vec<f64> = (0..y.n_rows()).map(|i| dm.pi1_raw(i)).collect();
    let pi_d: Vec<f64> = (0..y.n_cols()).map(|k| dd.pi1_raw(k)).collect();
    if let Some(i) = pi_m.iter().position(|&p| p <= 0.0) {
        return Err(CcsError::ZeroInclusionProbability(i));
    }
    if let Some(k) = pi_d.iter().position(|&p| p <= 0.0) {
        return Err(CcsError::ZeroInclusionProbability(k));
    }
    let mut out = Vec::with_capacity(y.n_rows() * y.n_cols());
    for i in 0..y.n_rows() {
        for k in 0..y.n_cols() {
            out.push(y.get(i, k) / (pi_m[i] * pi_d[k]));
        }
    }
    Ok(out)
}

/// `sum_{ijkl} A_ij B_kl X_ik X_jl` where A acts on rows and B on columns.
fn bilinear(a: &PairCoeffs, b: &PairCoeffs, x: &[f64], nr: usize, nc: usize) -> f64 {
    let ax = a.apply_rows(x, nr, nc);
    let bax = b.apply_cols(&ax, nr, nc);
    x.iter().zip(&bax).map(|(u, v)| u * v).sum()
}

/// Exact CCS variance via the fast block-structured path.
pub fn v_ccs(y: &PopulationGrid, dm: &DesignSpec, dd: &DesignSpec) -> Result<f64> {
    let x = check_matrix(y, dm, dd)?;
    let q = bilinear(&dm.pi2_coeffs(), &dd.pi2_coeffs(), &x, y.n_rows(), y.n_cols());
    let t = y.total();
    Ok(q - t * t)
}

/// Exact CCS variance via the explicit quadruple sum (guarded oracle path).
pub fn v_ccs_generic(y: &PopulationGrid, dm: &DesignSpec, dd: &DesignSpec) -> Result<f64> {
    guard_generic(y)?;
    let x = check_matrix(y, dm, dd)?;
    let (nr, nc) = (y.n_rows(), y.n_cols());
    let mut acc = 0.0;
    for i in 0..nr {
        for j in 0..nr {
            let pm = dm.pi2_raw(i, j);
            let pp_m = dm.pi1_raw(i) * dm.pi1_raw(j);
            for k in 0..nc {
                for l in 0..nc {
                    let g = pm * dd.pi2_raw(k, l) - pp_m * dd.pi1_raw(k) * dd.pi1_raw(l);
                    acc += g * x[i * nc + k] * x[j * nc + l];
                }
            }
        }
    }
    Ok(acc)
}

/// Sen-Yates-Grundy form of the CCS variance; both designs must be of fixed
/// size. Evaluated by the explicit (guarded) sum.
pub fn v_ccs_syg(y: &PopulationGrid, dm: &DesignSpec, dd: &DesignSpec) -> Result<f64> {
    if !dm.fixed_size() || !dd.fixed_size() {
        return Err(CcsError::NotFixedSize);
    }
    guard_generic(y)?;
    let x = check_matrix(y, dm, dd)?;
    let (nr, nc) = (y.n_rows(), y.n_cols());
    let mut acc = 0.0;
    for i in 0..nr {
        for j in 0..nr {
            let pm = dm.pi2_raw(i, j);
            let pp_m = dm.pi1_raw(i) * dm.pi1_raw(j);
            for k in 0..nc {
                for l in 0..nc {
                    if i == j && k == l {
                        continue;
                    }
                    let g = pm * dd.pi2_raw(k, l) - pp_m * dd.pi1_raw(k) * dd.pi1_raw(l);
                    let d = x[i * nc + k] - x[j * nc + l];
                    acc += g * d * d;
                }
            }
        }
    }
    Ok(-0.5 * acc)
}

/// All exact components via the fast path.
pub fn decompose(y: &PopulationGrid, dm: &DesignSpec, dd: &DesignSpec) -> Result<ExactVarianceReport> {
    let x = check_matrix(y, dm, dd)?;
    let (nr, nc) = (y.n_rows(), y.n_cols());
    let delta_m = dm.delta_coeffs();
    let delta_d = dd.delta_coeffs();
    let pi2_m = dm.pi2_coeffs();
    let pi2_d = dd.pi2_coeffs();
    let outer_m = dm.pi_outer_coeffs();
    let outer_d = dd.pi_outer_coeffs();
    let diag_m = dm.pi_diag_coeffs();
    let diag_d = dd.pi_diag_coeffs();

    let t = y.total();
    let v_ccs = bilinear(&pi2_m, &pi2_d, &x, nr, nc) - t * t;
    let v1 = bilinear(&delta_m, &pi2_d, &x, nr, nc);
    let v2 = bilinear(&pi2_m, &delta_d, &x, nr, nc);
    let v3 = bilinear(&delta_m, &delta_d, &x, nr, nc);
    let v_md_psu = bilinear(&delta_m, &outer_d, &x, nr, nc);
    let v_md_ssu = bilinear(&diag_m, &delta_d, &x, nr, nc);
    let v_dm_psu = bilinear(&outer_m, &delta_d, &x, nr, nc);
    let v_dm_ssu = bilinear(&delta_m, &diag_d, &x, nr, nc);
    Ok(ExactVarianceReport {
        v_ccs,
        v1,
        v2,
        v3,
        v_md: v_md_psu + v_md_ssu,
        v_md_psu,
        v_md_ssu,
        v_dm: v_dm_psu + v_dm_ssu,
        v_dm_psu,
        v_dm_ssu,
    })
}

/// All exact components via explicit quadruple sums (guarded oracle path).
pub fn decompose_generic(
    y: &PopulationGrid,
    dm: &DesignSpec,
    dd: &DesignSpec,
) -> Result<ExactVarianceReport> {
    guard_generic(y)?;
    let x = check_matrix(y, dm, dd)?;
    let (nr, nc) = (y.n_rows(), y.n_cols());
    let (mut v_ccs, mut v1, mut v2, mut v3) = (0.0, 0.0, 0.0, 0.0);
    let (mut v_md_psu, mut v_md_ssu, mut v_dm_psu, mut v_dm_ssu) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..nr {
        for j in 0..nr {
            let pi2_m = dm.pi2_raw(i, j);
            let d_m = dm.delta_raw(i, j);
            let pp_m = dm.pi1_raw(i) * dm.pi1_raw(j);
            for k in 0..nc {
                for l in 0..nc {
                    let pi2_d = dd.pi2_raw(k, l);
                    let d_d = dd.delta_raw(k, l);
                    let pp_d = dd.pi1_raw(k) * dd.pi1_raw(l);
                    let xx = x[i * nc + k] * x[j * nc + l];
                    v_ccs += (pi2_m * pi2_d - pp_m * pp_d) * xx;
                    v1 += pi2_d * d_m * xx;
                    v2 += pi2_m * d_d * xx;
                    v3 += d_m * d_d * xx;
                    v_md_psu += d_m * pp_d * xx;
                    v_dm_psu += pp_m * d_d * xx;
                    if i == j {
                        v_md_ssu += dm.pi1_raw(i) * d_d * xx;
                    }
                    if k == l {
                        v_dm_ssu += dd.pi1_raw(k) * d_m * xx;
                    }
                }
            }
        }
    }
    Ok(ExactVarianceReport {
        v_ccs,
        v1,
        v2,
        v3,
        v_md: v_md_psu + v_md_ssu,
        v_md_psu,
        v_md_ssu,
        v_dm: v_dm_psu + v_dm_ssu,
        v_dm_psu,
        v_dm_ssu,
    })
}

/// `V_CCS - V_DM = sum_{i,j} delta_ij^M sum_{k != l} pi2_kl^D Ycheck_ik Ycheck_jl`
/// via the fast path.
pub fn ccs_vs_dm_difference(y: &PopulationGrid, dm: &DesignSpec, dd: &DesignSpec) -> Result<f64> {
    let x = check_matrix(y, dm, dd)?;
    Ok(bilinear(&dm.delta_coeffs(), &dd.pi2_offdiag_coeffs(), &x, y.n_rows(), y.n_cols()))
}

/// The alternative Sen-Yates-Grundy-style writing of the CCS-vs-DM
/// difference, valid when the row design is of fixed size. Explicit sum,
/// guarded; used to cross-check [`ccs_vs_dm_difference`].
pub fn ccs_vs_dm_difference_syg(y: &PopulationGrid, dm: &DesignSpec, dd: &DesignSpec) -> Result<f64> {
    if !dm.fixed_size() {
        return Err(CcsError::NotFixedSize);
    }
    guard_generic(y)?;
    check_dims(y, dm, dd)?;
    let (nr, nc) = (y.n_rows(), y.n_cols());
    let pi_m: Vec<f64> = (0..nr).map(|i| dm.pi1_raw(i)).collect();
    let pi_d: Vec<f64> = (0..nc).map(|k| dd.pi1_raw(k)).collect();
    let mut acc = 0.0;
    for i in 0..nr {
        for j in 0..nr {
            if i == j {
                continue;
            }
            let w = -dm.delta_raw(i, j) / 2.0;
            let mut inner = 0.0;
            for k in 0..nc {
                for l in 0..nc {
                    if k == l {
                        continue;
                    }
                    let a = y.get(i, k) / pi_m[i] - y.get(j, k) / pi_m[j];
                    let b = y.get(i, l) / pi_m[i] - y.get(j, l) / pi_m[j];
                    inner += dd.pi2_raw(k, l) / (pi_d[k] * pi_d[l]) * a * b;
                }
            }
            acc += w * inner;
        }
    }
    Ok(acc)
}

/// One row of the design-comparison sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_m: usize,
    pub n_d: usize,
    pub v_ccs: f64,
    pub v_md: f64,
    /// `100 * V_MD / V_CCS`; undefined (None) when `V_CCS = 0`.
    pub ratio_pct: Option<f64>,
}

/// Computes `V_MD / V_CCS` percentages over SI designs of the given sizes.
pub fn variance_ratio_sweep(y: &PopulationGrid, sizes: &[(usize, usize)]) -> Result<Vec<SweepRow>> {
    let mut out = Vec::with_capacity(sizes.len());
    for &(n_m, n_d) in sizes {
        let dm = DesignSpec::si(n_m, y.n_rows())?;
        let dd = DesignSpec::si(n_d, y.n_cols())?;
        debug_assert!(matches!(dm.kind(), DesignKind::Si { .. }));
        let rep = decompose(y, &dm, &dd)?;
        let ratio_pct = if rep.v_ccs.abs() > 1e-12 * y.total().powi(2).max(1.0) {
            Some(100.0 * rep.v_md / rep.v_ccs)
        } else {
            None
        };
        out.push(SweepRow { n_m, n_d, v_ccs: rep.v_ccs, v_md: rep.v_md, ratio_pct });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{CrossSample, Stratum};
    use crate::estimate::ht_total;
    use crate::model::{generate_grid, ModelParams};

    fn grid(nr: usize, nc: usize, v: Vec<f64>) -> PopulationGrid {
        PopulationGrid::new(nr, nc, v, "t").unwrap()
    }

    fn pseudo_grid(nr: usize, nc: usize, seed: u64) -> PopulationGrid {
        let params = ModelParams {
            mu: 10.0,
            sigma_m: 2.0,
            sigma_d: 1.5,
            sigma_e: 1.0,
            n_rows: nr,
            n_cols: nc,
            seed,
        };
        generate_grid(&params).unwrap()
    }

    fn rel_close(a: f64, b: f64, tol: f64, scale_hint: f64) -> bool {
        let scale = a.abs().max(b.abs()).max(scale_hint);
        (a - b).abs() <= tol * scale
    }

    #[test]
    fn gamma_examples() {
        let po = DesignSpec::poisson_uniform(0.3, 3).unwrap();
        assert_eq!(gamma(&po, &po, 0, 1, 0, 2).unwrap(), 0.0);

        // diagonal quadruple: Bernoulli variance of the cell indicator
        let dm = DesignSpec::si(2, 4).unwrap();
        let dd = DesignSpec::si(2, 4).unwrap();
        let p = 0.5 * 0.5;
        assert!((gamma(&dm, &dd, 1, 1, 2, 2).unwrap() - p * (1.0 - p)).abs() < 1e-15);

        // SI(2)/N=4 both dims, all indices distinct
        let g = gamma(&dm, &dd, 0, 1, 2, 3).unwrap();
        assert!((g - (1.0 / 36.0 - 1.0 / 16.0)).abs() < 1e-15);
    }

    // exhaustive enumeration oracle: Var(t_hat) over the 9 cross samples
    #[test]
    fn generic_matches_enumeration_variance() {
        let y = grid(3, 3, vec![1.0, 4.0, 2.0, 8.0, 5.0, 7.0, 3.0, 6.0, 9.0]);
        let dm = DesignSpec::si(2, 3).unwrap();
        let dd = DesignSpec::si(2, 3).unwrap();
        let t = y.total();
        let mut var = 0.0;
        for (rows, pm) in dm.enumerate().unwrap() {
            for (cols, pd) in dd.enumerate().unwrap() {
                let s = CrossSample { rows: rows.clone(), cols };
                let e = ht_total(&y, &dm, &dd, &s).unwrap();
                var += pm * pd * (e.t_hat - t).powi(2);
            }
        }
        let v = v_ccs_generic(&y, &dm, &dd).unwrap();
        assert!(rel_close(v, var, 1e-9, 1.0), "{v} vs {var}");
        // and the fast path agrees
        assert!(rel_close(v_ccs(&y, &dm, &dd).unwrap(), var, 1e-9, 1.0));
    }

    #[test]
    fn syg_form_matches_generic() {
        let y = pseudo_grid(3, 4, 5);
        let dm = DesignSpec::si(2, 3).unwrap();
        let dd = DesignSpec::stsi(vec![Stratum { size: 2, take: 1 }, Stratum { size: 2, take: 1 }]).unwrap();
        let a = v_ccs_generic(&y, &dm, &dd).unwrap();
        let b = v_ccs_syg(&y, &dm, &dd).unwrap();
        assert!(rel_close(a, b, 1e-9, 1.0), "{a} vs {b}");
    }

    #[test]
    fn syg_rejects_poisson() {
        let y = grid(2, 2, vec![1.0; 4]);
        let dm = DesignSpec::poisson_uniform(0.5, 2).unwrap();
        let dd = DesignSpec::si(1, 2).unwrap();
        assert!(matches!(v_ccs_syg(&y, &dm, &dd), Err(CcsError::NotFixedSize)));
    }

    #[test]
    fn constant_variable_and_census_have_zero_variance() {
        let y = grid(3, 3, vec![5.0; 9]);
        let dm = DesignSpec::si(2, 3).unwrap();
        let dd = DesignSpec::si(2, 3).unwrap();
        let t2 = y.total().powi(2);
        assert!(v_ccs(&y, &dm, &dd).unwrap().abs() < 1e-9 * t2);

        let yv = pseudo_grid(3, 3, 1);
        let census = DesignSpec::si(3, 3).unwrap();
        assert!(v_ccs(&yv, &census, &census).unwrap().abs() < 1e-9 * yv.total().powi(2));
    }

    fn assert_report_identities(r: &ExactVarianceReport, scale: f64) {
        assert!(rel_close(r.v_ccs, r.v1 + r.v2 - r.v3, 1e-9, scale));
        assert!(rel_close(r.v_ccs, r.v_md_psu + r.v_dm_psu + r.v3, 1e-9, scale));
        assert!(rel_close(r.v1, r.v_md_psu + r.v3, 1e-9, scale));
        assert!(rel_close(r.v2, r.v_dm_psu + r.v3, 1e-9, scale));
        assert!(rel_close(r.v_md, r.v_md_psu + r.v_md_ssu, 1e-9, scale));
        assert!(rel_close(r.v_dm, r.v_dm_psu + r.v_dm_ssu, 1e-9, scale));
    }

    #[test]
    fn decomposition_identities_hold() {
        for seed in 0..20 {
            let y = pseudo_grid(4, 5, seed);
            for (dm, dd) in [
                (DesignSpec::si(2, 4).unwrap(), DesignSpec::si(3, 5).unwrap()),
                (
                    DesignSpec::stsi(vec![Stratum { size: 2, take: 1 }, Stratum { size: 2, take: 1 }]).unwrap(),
                    DesignSpec::poisson(vec![0.2, 0.4, 0.6, 0.8, 0.5]).unwrap(),
                ),
                (
                    DesignSpec::poisson_uniform(0.5, 4).unwrap(),
                    DesignSpec::poisson_uniform(0.3, 5).unwrap(),
                ),
            ] {
                let r = decompose(&y, &dm, &dd).unwrap();
                assert_report_identities(&r, r.v_ccs.abs());
            }
        }
    }

    #[test]
    fn fast_path_matches_generic_path() {
        for seed in [3, 9] {
            let y = pseudo_grid(6, 6, seed);
            for (dm, dd) in [
                (DesignSpec::si(3, 6).unwrap(), DesignSpec::si(2, 6).unwrap()),
                (
                    DesignSpec::stsi(vec![Stratum { size: 3, take: 2 }, Stratum { size: 3, take: 1 }]).unwrap(),
                    DesignSpec::stsi(vec![Stratum { size: 2, take: 1 }, Stratum { size: 4, take: 2 }]).unwrap(),
                ),
                (
                    DesignSpec::poisson(vec![0.2, 0.4, 0.6, 0.8, 0.5, 0.3]).unwrap(),
                    DesignSpec::si(4, 6).unwrap(),
                ),
            ] {
                let fast = decompose(&y, &dm, &dd).unwrap();
                let slow = decompose_generic(&y, &dm, &dd).unwrap();
                let s = slow.v_ccs.abs();
                assert!(rel_close(fast.v_ccs, slow.v_ccs, 1e-9, s));
                assert!(rel_close(fast.v1, slow.v1, 1e-9, s));
                assert!(rel_close(fast.v2, slow.v2, 1e-9, s));
                assert!(rel_close(fast.v3, slow.v3, 1e-9, s));
                assert!(rel_close(fast.v_md, slow.v_md, 1e-9, s));
                assert!(rel_close(fast.v_md_psu, slow.v_md_psu, 1e-9, s));
                assert!(rel_close(fast.v_md_ssu, slow.v_md_ssu, 1e-9, s));
                assert!(rel_close(fast.v_dm, slow.v_dm, 1e-9, s));
                assert!(rel_close(fast.v_dm_psu, slow.v_dm_psu, 1e-9, s));
                assert!(rel_close(fast.v_dm_ssu, slow.v_dm_ssu, 1e-9, s));
            }
        }
    }

    /// Two-stage enumeration: variance of the HT estimator when the first
    /// stage selects rows (MD) or columns (DM) and independent second-stage
    /// samples are drawn inside each selected first-stage unit.
    fn two_stage_enumeration_variance(
        y: &PopulationGrid,
        first: &DesignSpec,
        second: &DesignSpec,
        rows_first: bool,
    ) -> (f64, f64) {
        let second_support = second.enumerate().unwrap();
        let mut mean = 0.0;
        let mut mean_sq = 0.0;
        for (firsts, p1) in first.enumerate().unwrap() {
            // recursively enumerate one independent second-stage sample per
            // selected first-stage unit
            let mut outcomes: Vec<(f64, f64)> = vec![(0.0, p1)];
            for &u in &firsts {
                let mut next = Vec::with_capacity(outcomes.len() * second_support.len());
                for (partial, p) in &outcomes {
                    for (ss, p2) in &second_support {
                        let mut sum = *partial;
                        for &v in ss {
                            let (i, k) = if rows_first { (u, v) } else { (v, u) };
                            sum += y.get(i, k)
                                / (if rows_first {
                                    first.pi1_raw(i) * second.pi1_raw(k)
                                } else {
                                    second.pi1_raw(i) * first.pi1_raw(k)
                                });
                        }
                        next.push((sum, p * p2));
                    }
                }
                outcomes = next;
            }
            for (t, p) in outcomes {
                mean += p * t;
                mean_sq += p * t * t;
            }
        }
        (mean, mean_sq - mean * mean)
    }

    // two-stage enumeration oracle for V_MD and V_DM (the latter settles the
    // printed-index ambiguity in the DM secondary-stage component)
    #[test]
    fn two_stage_variances_match_enumeration() {
        let y = grid(3, 3, vec![1.0, 4.0, 2.0, 8.0, 5.0, 7.0, 3.0, 6.0, 9.0]);
        let dm = DesignSpec::si(2, 3).unwrap();
        let dd = DesignSpec::si(2, 3).unwrap();
        let r = decompose(&y, &dm, &dd).unwrap();

        let (mean_md, var_md) = two_stage_enumeration_variance(&y, &dm, &dd, true);
        assert!(rel_close(mean_md, y.total(), 1e-9, 1.0));
        assert!(rel_close(r.v_md, var_md, 1e-9, 1.0), "{} vs {var_md}", r.v_md);

        let (mean_dm, var_dm) = two_stage_enumeration_variance(&y, &dd, &dm, false);
        assert!(rel_close(mean_dm, y.total(), 1e-9, 1.0));
        assert!(rel_close(r.v_dm, var_dm, 1e-9, 1.0), "{} vs {var_dm}", r.v_dm);
    }

    #[test]
    fn stsi_two_stage_variance_matches_enumeration() {
        let y = pseudo_grid(4, 3, 21);
        let dm = DesignSpec::stsi(vec![Stratum { size: 2, take: 1 }, Stratum { size: 2, take: 1 }]).unwrap();
        let dd = DesignSpec::si(2, 3).unwrap();
        let r = decompose(&y, &dm, &dd).unwrap();
        let (_, var_md) = two_stage_enumeration_variance(&y, &dm, &dd, true);
        assert!(rel_close(r.v_md, var_md, 1e-9, 1.0));
    }

    // Y constant in k makes every expanded column identical, so V2 = 0
    #[test]
    fn row_effect_only_zeroes_v2() {
        let params = ModelParams {
            mu: 0.0,
            sigma_m: 1.0,
            sigma_d: 0.0,
            sigma_e: 0.0,
            n_rows: 5,
            n_cols: 4,
            seed: 2,
        };
        let y = generate_grid(&params).unwrap();
        let dm = DesignSpec::si(2, 5).unwrap();
        let dd = DesignSpec::si(2, 4).unwrap();
        let r = decompose(&y, &dm, &dd).unwrap();
        assert!(r.v2.abs() < 1e-9 * r.v_ccs.abs());
    }

    #[test]
    fn difference_formula_matches_components() {
        for seed in 0..10 {
            let y = pseudo_grid(4, 4, 100 + seed);
            let dm = DesignSpec::si(2, 4).unwrap();
            let dd = DesignSpec::si(3, 4).unwrap();
            let r = decompose(&y, &dm, &dd).unwrap();
            let d15 = ccs_vs_dm_difference(&y, &dm, &dd).unwrap();
            assert!(rel_close(d15, r.v_ccs - r.v_dm, 1e-9, r.v_ccs.abs()));
            let d16 = ccs_vs_dm_difference_syg(&y, &dm, &dd).unwrap();
            assert!(rel_close(d15, d16, 1e-9, r.v_ccs.abs()));
        }
    }

    #[test]
    fn poisson_rows_make_ccs_less_efficient_than_dm() {
        for seed in 0..5 {
            let y = pseudo_grid(4, 4, 200 + seed);
            let dm = DesignSpec::poisson_uniform(0.5, 4).unwrap();
            let dd = DesignSpec::si(2, 4).unwrap();
            let d = ccs_vs_dm_difference(&y, &dm, &dd).unwrap();
            assert!(d >= -1e-9, "difference {d} should be non-negative");
        }
    }

    #[test]
    fn constant_variable_fixed_size_difference_is_zero() {
        let y = grid(3, 3, vec![4.0; 9]);
        let dm = DesignSpec::si(2, 3).unwrap();
        let dd = DesignSpec::si(2, 3).unwrap();
        assert!(ccs_vs_dm_difference(&y, &dm, &dd).unwrap().abs() < 1e-9);
    }

    #[test]
    fn sweep_census_gives_sentinel() {
        let y = pseudo_grid(4, 4, 7);
        let rows = variance_ratio_sweep(&y, &[(4, 4)]).unwrap();
        assert!(rows[0].ratio_pct.is_none());
    }

    #[test]
    fn sweep_matches_generic_path_on_toy_grid() {
        let y = pseudo_grid(4, 4, 8);
        let rows = variance_ratio_sweep(&y, &[(2, 3)]).unwrap();
        let dm = DesignSpec::si(2, 4).unwrap();
        let dd = DesignSpec::si(3, 4).unwrap();
        let slow = decompose_generic(&y, &dm, &dd).unwrap();
        let expect = 100.0 * slow.v_md / slow.v_ccs;
        assert!(rel_close(rows[0].ratio_pct.unwrap(), expect, 1e-9, 1.0));
    }
}
