//! One-dimensional sampling designs: simple random sampling without
//! replacement (SI), its stratified version (STSI) and Poisson sampling.
//!
//! A design exposes first and second-order inclusion probabilities, the
//! covariance quantities `delta(i, j) = pi2(i, j) - pi1(i) * pi1(j)`, sample
//! draws, and exhaustive enumeration of the support on small populations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CcsError, Result};

const ENUMERATION_GUARD: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratum {
    /// Stratum population size `N_h`.
    pub size: usize,
    /// Stratum sample size `n_h`.
    pub take: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DesignKind {
    Si { n: usize },
    /// Strata are contiguous index blocks in listed order.
    Stsi { strata: Vec<Stratum> },
    Poisson { probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    kind: DesignKind,
    population_size: usize,
    /// Start index of each stratum (STSI only), plus a trailing sentinel.
    #[serde(skip)]
    stratum_starts: Vec<usize>,
}

impl DesignSpec {
    pub fn si(n: usize, population_size: usize) -> Result<Self> {
        if population_size == 0 {
            return Err(CcsError::InvalidDesign("population size must be positive".into()));
        }
        if n == 0 || n > population_size {
            return Err(CcsError::InvalidDesign(format!(
                "SI sample size {n} must satisfy 1 <= n <= N = {population_size}"
            )));
        }
        Ok(Self { kind: DesignKind::Si { n }, population_size, stratum_starts: Vec::new() })
    }

    pub fn stsi(strata: Vec<Stratum>) -> Result<Self> {
        if strata.is_empty() {
            return Err(CcsError::InvalidDesign("STSI needs at least one stratum".into()));
        }
        for (h, s) in strata.iter().enumerate() {
            if s.size == 0 || s.take == 0 || s.take > s.size {
                return Err(CcsError::InvalidDesign(format!(
                    "stratum {}: need 1 <= n_h <= N_h, got n_h={} N_h={}",
                    h + 1,
                    s.take,
                    s.size
                )));
            }
        }
        let population_size = strata.iter().map(|s| s.size).sum();
        let mut stratum_starts = Vec::with_capacity(strata.len() + 1);
        let mut acc = 0;
        for s in &strata {
            stratum_starts.push(acc);
            acc += s.size;
        }
        stratum_starts.push(acc);
        Ok(Self { kind: DesignKind::Stsi { strata }, population_size, stratum_starts })
    }

    pub fn poisson(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(CcsError::InvalidDesign("Poisson needs at least one unit".into()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(p > 0.0 && p <= 1.0) {
                return Err(CcsError::InvalidDesign(format!(
                    "Poisson probability for unit {} must lie in (0, 1], got {p}",
                    i + 1
                )));
            }
        }
        let population_size = probs.len();
        Ok(Self { kind: DesignKind::Poisson { probs }, population_size, stratum_starts: Vec::new() })
    }

    pub fn poisson_uniform(p: f64, population_size: usize) -> Result<Self> {
        Self::poisson(vec![p; population_size])
    }

    pub fn kind(&self) -> &DesignKind {
        &self.kind
    }

    pub fn population_size(&self) -> usize {
        self.population_size
    }

    pub fn fixed_size(&self) -> bool {
        !matches!(self.kind, DesignKind::Poisson { .. })
    }

    /// Expected sample size: exactly `n` for SI/STSI, `sum(pi)` for Poisson.
    pub fn expected_sample_size(&self) -> f64 {
        match &self.kind {
            DesignKind::Si { n } => *n as f64,
            DesignKind::Stsi { strata } => strata.iter().map(|s| s.take as f64).sum(),
            DesignKind::Poisson { probs } => probs.iter().sum(),
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.population_size {
            Err(CcsError::IndexOutOfRange { index: i, size: self.population_size })
        } else {
            Ok(())
        }
    }

    /// Stratum index of unit `i` (STSI only).
    fn stratum_of(&self, i: usize) -> usize {
        debug_assert!(!self.stratum_starts.is_empty());
        match self.stratum_starts.binary_search(&i) {
            Ok(h) if h + 1 == self.stratum_starts.len() => h - 1,
            Ok(h) => h,
            Err(h) => h - 1,
        }
    }

    pub(crate) fn pi1_raw(&self, i: usize) -> f64 {
        match &self.kind {
            DesignKind::Si { n } => *n as f64 / self.population_size as f64,
            DesignKind::Stsi { strata } => {
                let s = &strata[self.stratum_of(i)];
                s.take as f64 / s.size as f64
            }
            DesignKind::Poisson { probs } => probs[i],
        }
    }

    pub(crate) fn pi2_raw(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.pi1_raw(i);
        }
        match &self.kind {
            DesignKind::Si { n } => {
                let n = *n as f64;
                let big_n = self.population_size as f64;
                n * (n - 1.0) / (big_n * (big_n - 1.0))
            }
            DesignKind::Stsi { strata } => {
                let hi = self.stratum_of(i);
                let hj = self.stratum_of(j);
                if hi == hj {
                    let s = &strata[hi];
                    let n = s.take as f64;
                    let big_n = s.size as f64;
                    if s.size == 1 {
                        // single-unit stratum: no distinct pair exists
                        0.0
                    } else {
                        n * (n - 1.0) / (big_n * (big_n - 1.0))
                    }
                } else {
                    self.pi1_raw(i) * self.pi1_raw(j)
                }
            }
            DesignKind::Poisson { probs } => probs[i] * probs[j],
        }
    }

    /// First-order inclusion probability of unit `i`.
    pub fn pi1(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        Ok(self.pi1_raw(i))
    }

    /// Joint inclusion probability of units `i` and `j`.
    pub fn pi2(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        Ok(self.pi2_raw(i, j))
    }

    /// `delta(i, j) = pi2(i, j) - pi1(i) * pi1(j)`; for `i == j` this is
    /// `pi_i * (1 - pi_i)`.
    pub fn delta(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        Ok(self.delta_raw(i, j))
    }

    pub(crate) fn delta_raw(&self, i: usize, j: usize) -> f64 {
        self.pi2_raw(i, j) - self.pi1_raw(i) * self.pi1_raw(j)
    }

    /// Draws one sample as a sorted index set, consuming the given stream.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        match &self.kind {
            DesignKind::Si { n } => {
                let mut s = draw_si(rng, self.population_size, *n, 0);
                s.sort_unstable();
                s
            }
            DesignKind::Stsi { strata } => {
                let mut out = Vec::with_capacity(strata.iter().map(|s| s.take).sum());
                let mut offset = 0;
                for s in strata {
                    out.extend(draw_si(rng, s.size, s.take, offset));
                    offset += s.size;
                }
                out.sort_unstable();
                out
            }
            DesignKind::Poisson { probs } => probs
                .iter()
                .enumerate()
                .filter(|&(_, &p)| rng.random::<f64>() < p)
                .map(|(i, _)| i)
                .collect(),
        }
    }

    /// Number of support points, used to guard enumeration.
    pub fn support_size(&self) -> u128 {
        match &self.kind {
            DesignKind::Si { n } => binomial(self.population_size as u128, *n as u128),
            DesignKind::Stsi { strata } => strata
                .iter()
                .map(|s| binomial(s.size as u128, s.take as u128))
                .product(),
            DesignKind::Poisson { probs } => 1u128 << probs.len().min(127),
        }
    }

    /// Exhaustively enumerates the support with exact probabilities.
    pub fn enumerate(&self) -> Result<Vec<(Vec<usize>, f64)>> {
        let support = self.support_size();
        if support > ENUMERATION_GUARD {
            return Err(CcsError::SupportTooLarge(support));
        }
        Ok(match &self.kind {
            DesignKind::Si { n } => {
                let p = 1.0 / support as f64;
                combinations(self.population_size, *n, 0)
                    .into_iter()
                    .map(|c| (c, p))
                    .collect()
            }
            DesignKind::Stsi { strata } => {
                let mut acc: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
                let mut offset = 0;
                for s in strata {
                    let combos = combinations(s.size, s.take, offset);
                    let p = 1.0 / combos.len() as f64;
                    let mut next = Vec::with_capacity(acc.len() * combos.len());
                    for (prefix, prob) in &acc {
                        for c in &combos {
                            let mut v = prefix.clone();
                            v.extend_from_slice(c);
                            next.push((v, prob * p));
                        }
                    }
                    acc = next;
                    offset += s.size;
                }
                acc
            }
            DesignKind::Poisson { probs } => {
                let n = probs.len();
                let mut out = Vec::with_capacity(1 << n);
                for mask in 0u64..(1u64 << n) {
                    let mut subset = Vec::new();
                    let mut p = 1.0;
                    for (i, &pi) in probs.iter().enumerate() {
                        if mask >> i & 1 == 1 {
                            subset.push(i);
                            p *= pi;
                        } else {
                            p *= 1.0 - pi;
                        }
                    }
                    out.push((subset, p));
                }
                out
            }
        })
    }

    /// True iff `delta(i, j) <= 0` for all distinct pairs.
    pub fn syg_condition_holds(&self) -> bool {
        match &self.kind {
            // off-diagonal delta is identically zero
            DesignKind::Poisson { .. } => true,
            _ => {
                for i in 0..self.population_size {
                    for j in (i + 1)..self.population_size {
                        if self.delta_raw(i, j) > 1e-12 {
                            return false;
                        }
                    }
                }
                true
            }
        }
    }

    /// Parses the design grammar: `si(n=25)`,
    /// `stsi(108:21,108:41,109:55,108:80,111:90)`, `poisson(p=0.1)`,
    /// `poisson(file=probs.csv)`. For `si` and uniform `poisson` the
    /// population size comes from the context (grid dimension).
    pub fn parse(text: &str, population_size: usize) -> Result<Self> {
        parse_design(text, population_size)
    }

    /// Canonical grammar string for config echoes.
    pub fn grammar_string(&self) -> String {
        match &self.kind {
            DesignKind::Si { n } => format!("si(n={n})"),
            DesignKind::Stsi { strata } => {
                let body: Vec<String> =
                    strata.iter().map(|s| format!("{}:{}", s.size, s.take)).collect();
                format!("stsi({})", body.join(","))
            }
            DesignKind::Poisson { probs } => {
                if probs.windows(2).all(|w| w[0] == w[1]) {
                    format!("poisson(p={})", probs[0])
                } else {
                    format!("poisson(probs=<{} values>)", probs.len())
                }
            }
        }
    }
}

/// Partial Fisher-Yates: uniform without-replacement n-subset of
/// `offset..offset + size`.
fn draw_si<R: Rng + ?Sized>(rng: &mut R, size: usize, n: usize, offset: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (offset..offset + size).collect();
    for t in 0..n {
        let j = rng.random_range(t..size);
        idx.swap(t, j);
    }
    idx.truncate(n);
    idx
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for t in 0..k {
        acc = acc.saturating_mul(n - t) / (t + 1);
    }
    acc
}

fn combinations(size: usize, take: usize, offset: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(take);
    fn rec(start: usize, size: usize, take: usize, offset: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == take {
            out.push(cur.clone());
            return;
        }
        let remaining = take - cur.len();
        for i in start..=(size - remaining) {
            cur.push(offset + i);
            rec(i + 1, size, take, offset, cur, out);
            cur.pop();
        }
    }
    rec(0, size, take, offset, &mut cur, &mut out);
    out
}

/// A realized cross sample: one index set per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossSample {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl CrossSample {
    pub fn new(mut rows: Vec<usize>, mut cols: Vec<usize>) -> Self {
        rows.sort_unstable();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        Self { rows, cols }
    }

    /// Draws the two samples independently from one stream (rows first).
    pub fn draw<R: Rng + ?Sized>(dm: &DesignSpec, dd: &DesignSpec, rng: &mut R) -> Self {
        let rows = dm.draw(rng);
        let cols = dd.draw(rng);
        Self { rows, cols }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty() || self.cols.is_empty()
    }

    pub fn validate(&self, dm: &DesignSpec, dd: &DesignSpec) -> Result<()> {
        for &i in &self.rows {
            if i >= dm.population_size() {
                return Err(CcsError::IndexOutOfRange { index: i, size: dm.population_size() });
            }
        }
        for &k in &self.cols {
            if k >= dd.population_size() {
                return Err(CcsError::IndexOutOfRange { index: k, size: dd.population_size() });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Block-structured pair coefficients.
//
// For SI, STSI and Poisson every symmetric matrix we need (delta, pi2,
// pi-outer, diag(pi), and the sample-level delta/pi2 weights) has the same
// shape: per-unit diagonal, a constant off-diagonal within each group, and
// either zero or a separable product across groups. Quadratic and bilinear
// forms against such matrices evaluate in linear time from group sums.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct PairCoeffs {
    group_of: Vec<usize>,
    n_groups: usize,
    diag: Vec<f64>,
    /// Within-group off-diagonal constant, per group.
    offdiag: Vec<f64>,
    /// Across groups `A_ij = cross[i] * cross[j]`; `None` means zero.
    cross: Option<Vec<f64>>,
}

impl PairCoeffs {
    pub(crate) fn len(&self) -> usize {
        self.group_of.len()
    }

    /// Matrix entry, for the generic/oracle paths.
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if self.group_of[i] == self.group_of[j] {
            self.offdiag[self.group_of[i]]
        } else {
            match &self.cross {
                Some(s) => s[i] * s[j],
                None => 0.0,
            }
        }
    }

    /// `out = A x` in O(n).
    pub(crate) fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.len());
        let mut group_sum = vec![0.0; self.n_groups];
        for (i, &xi) in x.iter().enumerate() {
            group_sum[self.group_of[i]] += xi;
        }
        let (total_s, group_s) = match &self.cross {
            Some(s) => {
                let mut gs = vec![0.0; self.n_groups];
                let mut t = 0.0;
                for (i, &xi) in x.iter().enumerate() {
                    let v = s[i] * xi;
                    gs[self.group_of[i]] += v;
                    t += v;
                }
                (t, gs)
            }
            None => (0.0, Vec::new()),
        };
        for (i, &xi) in x.iter().enumerate() {
            let g = self.group_of[i];
            let mut v = self.diag[i] * xi + self.offdiag[g] * (group_sum[g] - xi);
            if let Some(s) = &self.cross {
                v += s[i] * (total_s - group_s[g]);
            }
            out[i] = v;
        }
    }

    /// `x' A x`.
    pub(crate) fn quadratic(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; x.len()];
        self.apply(x, &mut ax);
        x.iter().zip(&ax).map(|(a, b)| a * b).sum()
    }

    /// Row sums `R_i = sum_j A_ij`.
    pub(crate) fn row_sums(&self) -> Vec<f64> {
        let ones = vec![1.0; self.len()];
        let mut out = vec![0.0; self.len()];
        self.apply(&ones, &mut out);
        out
    }

    /// `-1/2 sum_{i != j} A_ij (b_i - b_j)^2`, the Yates-Grundy quadratic.
    pub(crate) fn yg_quadratic(&self, b: &[f64]) -> f64 {
        let rows = self.row_sums();
        let bab = self.quadratic(b);
        let sq: f64 = b.iter().zip(&rows).map(|(bi, ri)| bi * bi * ri).sum();
        bab - sq
    }

    /// Applies A along the row index of a row-major `n x m` matrix.
    pub(crate) fn apply_rows(&self, x: &[f64], n: usize, m: usize) -> Vec<f64> {
        debug_assert_eq!(n, self.len());
        debug_assert_eq!(x.len(), n * m);
        let mut group_sum = vec![0.0; self.n_groups * m];
        for i in 0..n {
            let g = self.group_of[i];
            for k in 0..m {
                group_sum[g * m + k] += x[i * m + k];
            }
        }
        let (total_s, group_s) = match &self.cross {
            Some(s) => {
                let mut gs = vec![0.0; self.n_groups * m];
                let mut t = vec![0.0; m];
                for i in 0..n {
                    let g = self.group_of[i];
                    for k in 0..m {
                        let v = s[i] * x[i * m + k];
                        gs[g * m + k] += v;
                        t[k] += v;
                    }
                }
                (t, gs)
            }
            None => (Vec::new(), Vec::new()),
        };
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let g = self.group_of[i];
            for k in 0..m {
                let xi = x[i * m + k];
                let mut v = self.diag[i] * xi + self.offdiag[g] * (group_sum[g * m + k] - xi);
                if let Some(s) = &self.cross {
                    v += s[i] * (total_s[k] - group_s[g * m + k]);
                }
                out[i * m + k] = v;
            }
        }
        out
    }

    /// Applies A along the column index of a row-major `n x m` matrix.
    pub(crate) fn apply_cols(&self, x: &[f64], n: usize, m: usize) -> Vec<f64> {
        debug_assert_eq!(m, self.len());
        debug_assert_eq!(x.len(), n * m);
        let mut out = vec![0.0; n * m];
        let mut row_out = vec![0.0; m];
        for i in 0..n {
            self.apply(&x[i * m..(i + 1) * m], &mut row_out);
            out[i * m..(i + 1) * m].copy_from_slice(&row_out);
        }
        out
    }
}

impl DesignSpec {
    fn group_layout(&self) -> (Vec<usize>, usize) {
        let n = self.population_size;
        match &self.kind {
            DesignKind::Si { .. } => (vec![0; n], 1),
            DesignKind::Stsi { strata } => {
                let mut g = Vec::with_capacity(n);
                for (h, s) in strata.iter().enumerate() {
                    g.extend(std::iter::repeat(h).take(s.size));
                }
                (g, strata.len())
            }
            DesignKind::Poisson { .. } => ((0..n).collect(), n),
        }
    }

    /// Coefficients `delta(i, j)` over the whole population.
    pub(crate) fn delta_coeffs(&self) -> PairCoeffs {
        let (group_of, n_groups) = self.group_layout();
        let n = self.population_size;
        let diag: Vec<f64> = (0..n).map(|i| self.delta_raw(i, i)).collect();
        let offdiag = self.per_group_offdiag(n_groups, |i, j| self.delta_raw(i, j));
        PairCoeffs { group_of, n_groups, diag, offdiag, cross: None }
    }

    /// Coefficients `pi2(i, j)` over the whole population.
    pub(crate) fn pi2_coeffs(&self) -> PairCoeffs {
        let (group_of, n_groups) = self.group_layout();
        let n = self.population_size;
        let diag: Vec<f64> = (0..n).map(|i| self.pi1_raw(i)).collect();
        let offdiag = self.per_group_offdiag(n_groups, |i, j| self.pi2_raw(i, j));
        let cross = Some((0..n).map(|i| self.pi1_raw(i)).collect());
        PairCoeffs { group_of, n_groups, diag, offdiag, cross }
    }

    /// `pi2` with the diagonal removed (off-diagonal pairs only).
    pub(crate) fn pi2_offdiag_coeffs(&self) -> PairCoeffs {
        let mut c = self.pi2_coeffs();
        c.diag.iter_mut().for_each(|d| *d = 0.0);
        c
    }

    /// Rank-one coefficients `pi_i * pi_j` (including the diagonal).
    pub(crate) fn pi_outer_coeffs(&self) -> PairCoeffs {
        let n = self.population_size;
        let pis: Vec<f64> = (0..n).map(|i| self.pi1_raw(i)).collect();
        PairCoeffs {
            group_of: (0..n).collect(),
            n_groups: n,
            diag: pis.iter().map(|p| p * p).collect(),
            offdiag: vec![0.0; n],
            cross: Some(pis),
        }
    }

    /// Diagonal coefficients `pi_i`.
    pub(crate) fn pi_diag_coeffs(&self) -> PairCoeffs {
        let n = self.population_size;
        PairCoeffs {
            group_of: vec![0; n],
            n_groups: 1,
            diag: (0..n).map(|i| self.pi1_raw(i)).collect(),
            offdiag: vec![0.0],
            cross: None,
        }
    }

    fn per_group_offdiag(&self, n_groups: usize, f: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        match &self.kind {
            DesignKind::Si { .. } => {
                if self.population_size >= 2 {
                    vec![f(0, 1)]
                } else {
                    vec![0.0]
                }
            }
            DesignKind::Stsi { strata } => {
                let mut out = Vec::with_capacity(strata.len());
                let mut offset = 0;
                for s in strata {
                    out.push(if s.size >= 2 { f(offset, offset + 1) } else { 0.0 });
                    offset += s.size;
                }
                out
            }
            DesignKind::Poisson { .. } => vec![0.0; n_groups],
        }
    }

    /// Sample-level coefficients `delta(i, j) / pi2(i, j)` over the sampled
    /// units, indexed locally in sample order. Errors if a sampled distinct
    /// pair has zero joint probability.
    pub(crate) fn estimator_coeffs(&self, sample: &[usize]) -> Result<PairCoeffs> {
        let m = sample.len();
        let mut group_of = Vec::with_capacity(m);
        let mut diag = Vec::with_capacity(m);
        match &self.kind {
            DesignKind::Si { .. } => {
                let f = if m > 0 { self.pi1_raw(0) } else { 0.0 };
                group_of.resize(m, 0);
                diag.resize(m, 1.0 - f);
                let offdiag = if m >= 2 {
                    let (i, j) = (sample[0], sample[1]);
                    let p2 = self.pi2_raw(i, j);
                    if p2 <= 0.0 {
                        return Err(CcsError::ZeroJointProbability(i, j));
                    }
                    vec![self.delta_raw(i, j) / p2]
                } else {
                    vec![0.0]
                };
                Ok(PairCoeffs { group_of, n_groups: 1, diag, offdiag, cross: None })
            }
            DesignKind::Stsi { strata } => {
                // group = stratum; first sampled unit index per stratum
                let mut first: Vec<Option<usize>> = vec![None; strata.len()];
                let mut second: Vec<Option<usize>> = vec![None; strata.len()];
                for &i in sample {
                    let h = self.stratum_of(i);
                    group_of.push(h);
                    diag.push(1.0 - self.pi1_raw(i));
                    if first[h].is_none() {
                        first[h] = Some(i);
                    } else if second[h].is_none() {
                        second[h] = Some(i);
                    }
                }
                let mut offdiag = vec![0.0; strata.len()];
                for h in 0..strata.len() {
                    if let (Some(i), Some(j)) = (first[h], second[h]) {
                        let p2 = self.pi2_raw(i, j);
                        if p2 <= 0.0 {
                            return Err(CcsError::ZeroJointProbability(i, j));
                        }
                        offdiag[h] = self.delta_raw(i, j) / p2;
                    }
                }
                Ok(PairCoeffs { group_of, n_groups: strata.len(), diag, offdiag, cross: None })
            }
            DesignKind::Poisson { probs } => {
                for &i in sample {
                    group_of.push(diag.len());
                    diag.push(1.0 - probs[i]);
                }
                let n_groups = m;
                Ok(PairCoeffs { group_of, n_groups, diag, offdiag: vec![0.0; n_groups], cross: None })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Design grammar parser.
// ---------------------------------------------------------------------------

fn parse_design(text: &str, population_size: usize) -> Result<DesignSpec> {
    let s = text.trim();
    let err = |pos: usize, msg: &str| CcsError::DesignParse { pos, msg: msg.into() };
    let open = s.find('(').ok_or_else(|| err(s.len(), "expected '(' after design name"))?;
    if !s.ends_with(')') {
        return Err(err(s.len(), "expected closing ')'"));
    }
    let name = &s[..open];
    let body = &s[open + 1..s.len() - 1];
    let body_pos = open + 1;
    match name {
        "si" => {
            let n_str = body
                .strip_prefix("n=")
                .ok_or_else(|| err(body_pos, "expected 'n=<int>'"))?;
            let n: usize = n_str
                .trim()
                .parse()
                .map_err(|_| err(body_pos + 2, "invalid integer for n"))?;
            DesignSpec::si(n, population_size)
        }
        "stsi" => {
            let mut strata = Vec::new();
            let mut pos = body_pos;
            for part in body.split(',') {
                let colon = part
                    .find(':')
                    .ok_or_else(|| err(pos, "expected '<N_h>:<n_h>'"))?;
                let size: usize = part[..colon]
                    .trim()
                    .parse()
                    .map_err(|_| err(pos, "invalid stratum size"))?;
                let take: usize = part[colon + 1..]
                    .trim()
                    .parse()
                    .map_err(|_| err(pos + colon + 1, "invalid stratum sample size"))?;
                strata.push(Stratum { size, take });
                pos += part.len() + 1;
            }
            let d = DesignSpec::stsi(strata)?;
            if d.population_size() != population_size {
                return Err(CcsError::InvalidDesign(format!(
                    "STSI strata sizes sum to {}, population has {} units",
                    d.population_size(),
                    population_size
                )));
            }
            Ok(d)
        }
        "poisson" => {
            if let Some(p_str) = body.strip_prefix("p=") {
                let p: f64 = p_str
                    .trim()
                    .parse()
                    .map_err(|_| err(body_pos + 2, "invalid probability"))?;
                DesignSpec::poisson_uniform(p, population_size)
            } else if let Some(path) = body.strip_prefix("file=") {
                let content = std::fs::read_to_string(path.trim())?;
                let probs: Vec<f64> = content
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| err(body_pos + 5, "invalid probability in file"))?;
                if probs.len() != population_size {
                    return Err(CcsError::InvalidDesign(format!(
                        "probability file has {} entries, population has {}",
                        probs.len(),
                        population_size
                    )));
                }
                DesignSpec::poisson(probs)
            } else {
                Err(err(body_pos, "expected 'p=<prob>' or 'file=<path>'"))
            }
        }
        other => Err(err(0, &format!("unknown design '{other}' (expected si, stsi or poisson)"))),
    }
}
