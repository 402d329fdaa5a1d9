//! Ulam-type Galerkin discretization of the transfer operator and of its
//! coordinate projection, with eigenvalue and implied-time-scale reports.
//!
//! A box partition turns a trajectory into a cell sequence; lag-`m`
//! transition counts, optionally symmetrized to `(C + Cᵀ)/2` to enforce the
//! reversible structure, are row-normalized into a stochastic matrix whose
//! eigenvalues approximate the operator spectrum. Implied time scales are
//! `t_i = -t / ln λ_i`.
//!
//! Boxes a trajectory never visits get identity rows and are flagged; the
//! eigenvalue extraction works on the largest connected component of the
//! visited cells, so the flagged rows' trivial unit eigenvalues never mix
//! into the report.

use crate::error::{Error, Result};
use crate::linalg::{dense_eigenvalues_real_parts, dense_symmetric_eigen, fix_sign, CsrMatrix};
use crate::mat::Mat;
use nalgebra::DMatrix;

/// Rectangular box partition, either of the full state space or of the
/// reaction-coordinate range.
#[derive(Debug, Clone, PartialEq)]
pub enum UlamPartition {
    FullState {
        rect: Vec<(f64, f64)>,
        shape: Vec<usize>,
    },
    RcRange {
        intervals: Vec<(f64, f64)>,
        bins: Vec<usize>,
    },
}

impl UlamPartition {
    pub fn full_state(rect: &[(f64, f64)], shape: &[usize]) -> Result<Self> {
        validate_axes(rect, shape)?;
        Ok(Self::FullState {
            rect: rect.to_vec(),
            shape: shape.to_vec(),
        })
    }

    pub fn rc_range(intervals: &[(f64, f64)], bins: &[usize]) -> Result<Self> {
        validate_axes(intervals, bins)?;
        Ok(Self::RcRange {
            intervals: intervals.to_vec(),
            bins: bins.to_vec(),
        })
    }

    /// Partition of the bounding box of observed RC values; the usual way to
    /// discretize the neighborhood of `ξ̄(X̄)`.
    pub fn rc_range_of(values: &Mat, bins: &[usize]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("no RC values".into()));
        }
        if bins.len() != values.cols() {
            return Err(Error::Argument(format!(
                "{} bin counts for {} RC components",
                bins.len(),
                values.cols()
            )));
        }
        let mut intervals = Vec::with_capacity(values.cols());
        for a in 0..values.cols() {
            let col = values.column(a);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(lo < hi) {
                return Err(Error::Argument(format!(
                    "RC component {a} is constant; cannot partition its range"
                )));
            }
            intervals.push((lo, hi));
        }
        Self::rc_range(&intervals, bins)
    }

    fn axes(&self) -> (&[(f64, f64)], &[usize]) {
        match self {
            Self::FullState { rect, shape } => (rect, shape),
            Self::RcRange { intervals, bins } => (intervals, bins),
        }
    }

    pub fn dim(&self) -> usize {
        self.axes().0.len()
    }

    pub fn n_cells(&self) -> usize {
        self.axes().1.iter().product()
    }

    /// Cell index of `x`, or `None` when out of domain. Interior boundaries
    /// belong to the lower-index cell; both domain edges are included.
    pub fn assign(&self, x: &[f64]) -> Option<usize> {
        let (rect, shape) = self.axes();
        debug_assert_eq!(x.len(), rect.len());
        let mut idx = 0usize;
        for a in 0..rect.len() {
            let (lo, hi) = rect[a];
            if x[a] < lo || x[a] > hi {
                return None;
            }
            let u = (x[a] - lo) / (hi - lo) * shape[a] as f64;
            let cell = if u <= 0.0 {
                0
            } else {
                (u.ceil() as usize - 1).min(shape[a] - 1)
            };
            idx = idx * shape[a] + cell;
        }
        Some(idx)
    }
}

fn validate_axes(rect: &[(f64, f64)], shape: &[usize]) -> Result<()> {
    if rect.len() != shape.len() || rect.is_empty() {
        return Err(Error::Argument(
            "partition needs matching, nonempty axis lists".into(),
        ));
    }
    for (axis, (&(lo, hi), &count)) in rect.iter().zip(shape).enumerate() {
        if !(lo < hi) {
            return Err(Error::Argument(format!(
                "partition axis {axis}: need lo < hi, got [{lo}, {hi}]"
            )));
        }
        if count == 0 {
            return Err(Error::Argument(format!("partition axis {axis}: zero cells")));
        }
    }
    if shape.iter().product::<usize>() < 2 {
        return Err(Error::Argument("partition needs at least 2 cells".into()));
    }
    Ok(())
}

/// Cell index per point; `None` marks out-of-domain points.
pub fn assign_cells(partition: &UlamPartition, points: &Mat) -> Result<Vec<Option<usize>>> {
    if points.cols() != partition.dim() {
        return Err(Error::DimensionMismatch {
            expected: partition.dim(),
            got: points.cols(),
        });
    }
    Ok(points.iter_rows().map(|x| partition.assign(x)).collect())
}

/// Square nonnegative integer transition-count matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    pub n: usize,
    data: Vec<u64>,
    /// Lagged pairs skipped because either endpoint was out of domain.
    pub skipped: usize,
}

impl CountMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0; n * n],
            skipped: 0,
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: u64) {
        self.data[i * self.n + j] += v;
    }

    pub fn total(&self) -> u64 {
        self.data.iter().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.data[i * self.n..(i + 1) * self.n].iter().sum()
    }
}

/// Counts lag-`m` transitions in a cell sequence, skipping pairs with an
/// out-of-domain endpoint.
pub fn count_transitions(
    cells: &[Option<usize>],
    lag_steps: usize,
    n_cells: usize,
) -> Result<CountMatrix> {
    if lag_steps == 0 {
        return Err(Error::Argument("lag must be at least one step".into()));
    }
    if cells.len() <= lag_steps {
        return Err(Error::Argument(format!(
            "sequence of {} cells is too short for lag {lag_steps}",
            cells.len()
        )));
    }
    let mut counts = CountMatrix::zeros(n_cells);
    for s in 0..cells.len() - lag_steps {
        match (cells[s], cells[s + lag_steps]) {
            (Some(i), Some(j)) => counts.add(i, j, 1),
            _ => counts.skipped += 1,
        }
    }
    if counts.total() == 0 {
        return Err(Error::EmptyCounts);
    }
    Ok(counts)
}

/// Row-stochastic transition matrix with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub n: usize,
    /// Effective (possibly symmetrized, hence real-valued) counts.
    counts: Vec<f64>,
    /// Row-normalized matrix; flagged rows are identity rows.
    stochastic: Vec<f64>,
    pub lag_time: f64,
    pub symmetrized: bool,
    /// Rows with zero counts, replaced by identity rows.
    pub flagged_rows: Vec<usize>,
}

impl TransitionMatrix {
    #[inline]
    pub fn count(&self, i: usize, j: usize) -> f64 {
        self.counts[i * self.n + j]
    }

    #[inline]
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.stochastic[i * self.n + j]
    }

    pub fn stochastic_rows(&self) -> &[f64] {
        &self.stochastic
    }
}

/// Row-normalizes a count matrix; with `symmetrize` the counts first become
/// `(C + Cᵀ)/2`, the reversible estimator. Zero rows turn into identity rows
/// and are flagged.
pub fn to_stochastic(counts: &CountMatrix, symmetrize: bool, lag_time: f64) -> TransitionMatrix {
    let n = counts.n;
    let mut c = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            c[i * n + j] = if symmetrize {
                0.5 * (counts.get(i, j) + counts.get(j, i)) as f64
            } else {
                counts.get(i, j) as f64
            };
        }
    }
    let mut stochastic = vec![0.0f64; n * n];
    let mut flagged = Vec::new();
    for i in 0..n {
        let row_sum: f64 = c[i * n..(i + 1) * n].iter().sum();
        if row_sum > 0.0 {
            for j in 0..n {
                stochastic[i * n + j] = c[i * n + j] / row_sum;
            }
        } else {
            stochastic[i * n + i] = 1.0;
            flagged.push(i);
        }
    }
    TransitionMatrix {
        n,
        counts: c,
        stochastic,
        lag_time,
        symmetrized: symmetrize,
        flagged_rows: flagged,
    }
}

/// Implied time scale associated with an eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Timescale {
    /// `λ ≥ 1 - 1e-12`: no decay on this mode.
    Infinite,
    Finite(f64),
    /// `λ ≤ 0`: no time scale is defined.
    Undefined,
}

impl Timescale {
    pub fn of(lambda: f64, lag_time: f64) -> Self {
        if lambda >= 1.0 - 1e-12 {
            Timescale::Infinite
        } else if lambda <= 0.0 {
            Timescale::Undefined
        } else {
            Timescale::Finite(-lag_time / lambda.ln())
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Timescale::Finite(t) => Some(*t),
            _ => None,
        }
    }
}

/// Sorted spectrum of an Ulam matrix plus implied time scales.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// `λ_0 ≥ λ_1 ≥ …` (real parts when the matrix is not symmetrized).
    pub eigenvalues: Vec<f64>,
    pub timescales: Vec<Timescale>,
    pub lag_time: f64,
    /// `d`: position of the largest ratio gap `λ_d / λ_{d+1}`.
    pub dominant: usize,
    /// Cells excluded as unvisited (identity rows of the source matrix).
    pub flagged_cells: Vec<usize>,
    /// Number of connected components among visited cells; eigenvalues come
    /// from the largest one.
    pub components: usize,
    /// Cells (original indexing) of the component the spectrum lives on.
    pub component_cells: Vec<usize>,
    /// Right eigenvectors of the stochastic matrix on `component_cells`
    /// (columns aligned with `eigenvalues`); only for symmetrized matrices.
    pub eigenvectors: Option<Mat>,
}

impl SpectrumReport {
    /// Value of eigenfunction `which` on cell `cell` (original indexing), if
    /// the cell belongs to the analyzed component.
    pub fn eigenfunction_value(&self, which: usize, cell: usize) -> Option<f64> {
        let vecs = self.eigenvectors.as_ref()?;
        let row = self.component_cells.iter().position(|&c| c == cell)?;
        Some(vecs.get(row, which))
    }

    /// Spectral gap diagnostic: `1 - λ_1`.
    pub fn spectral_gap(&self) -> Option<f64> {
        self.eigenvalues.get(1).map(|l| 1.0 - l)
    }
}

/// Largest connected component of the visited cells under the symmetrized
/// count pattern. Returns original cell indices, sorted, plus the component
/// count.
fn largest_active_component(tm: &TransitionMatrix) -> (Vec<usize>, usize) {
    let n = tm.n;
    let mut is_flagged = vec![false; n];
    for &i in &tm.flagged_rows {
        is_flagged[i] = true;
    }
    let active: Vec<usize> = (0..n).filter(|&i| !is_flagged[i]).collect();
    let mut remap = vec![usize::MAX; n];
    for (new, &old) in active.iter().enumerate() {
        remap[old] = new;
    }
    let rows: Vec<Vec<(usize, f64)>> = active
        .iter()
        .map(|&i| {
            (0..n)
                .filter_map(|j| {
                    let w = tm.count(i, j) + tm.count(j, i);
                    if w > 0.0 && remap[j] != usize::MAX {
                        Some((remap[j], w))
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    let graph = CsrMatrix::from_rows(rows);
    let labels = graph.components();
    let ncomp = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; ncomp];
    for &l in &labels {
        sizes[l] += 1;
    }
    let best = (0..ncomp)
        .max_by_key(|&c| (sizes[c], std::cmp::Reverse(c)))
        .unwrap_or(0);
    let cells: Vec<usize> = active
        .iter()
        .enumerate()
        .filter(|(a, _)| labels[*a] == best)
        .map(|(_, &old)| old)
        .collect();
    (cells, ncomp)
}

/// Top-`k` eigenvalues of the transition matrix, with implied time scales.
///
/// Unvisited (flagged) cells and any smaller connected components are
/// excluded before the solve, and the restricted counts are renormalized.
/// For symmetrized matrices the spectrum is real by the reversible
/// similarity `D^{1/2} P D^{-1/2} = D^{-1/2} C D^{-1/2}` and right
/// eigenvectors are returned.
pub fn eigenvalues(tm: &TransitionMatrix, top_k: usize) -> Result<SpectrumReport> {
    if top_k == 0 || top_k > tm.n {
        return Err(Error::Argument(format!(
            "top_k = {top_k} must be in [1, {}]",
            tm.n
        )));
    }
    let (cells, components) = largest_active_component(tm);
    let na = cells.len();
    if na == 0 {
        return Err(Error::EmptyCounts);
    }
    let k = top_k.min(na);

    let (lambdas, vectors): (Vec<f64>, Option<Mat>) = if tm.symmetrized {
        // Restricted symmetric counts; D = restricted row sums.
        let mut c = DMatrix::<f64>::zeros(na, na);
        for (a, &i) in cells.iter().enumerate() {
            for (b, &j) in cells.iter().enumerate() {
                c[(a, b)] = tm.count(i, j);
            }
        }
        let d_inv_sqrt: Vec<f64> = (0..na).map(|a| 1.0 / c.row(a).sum().sqrt()).collect();
        let s = DMatrix::from_fn(na, na, |a, b| c[(a, b)] * d_inv_sqrt[a] * d_inv_sqrt[b]);
        let (vals, vecs) = dense_symmetric_eigen(s);
        let mut out = Mat::zeros(na, k);
        for col in 0..k {
            let mut psi: Vec<f64> = (0..na).map(|a| vecs[(a, col)] * d_inv_sqrt[a]).collect();
            let nrm = psi.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in psi.iter_mut() {
                *x /= nrm;
            }
            fix_sign(&mut psi);
            for a in 0..na {
                out.set(a, col, psi[a]);
            }
        }
        (vals[..k].to_vec(), Some(out))
    } else {
        let mut p = DMatrix::<f64>::zeros(na, na);
        for (a, &i) in cells.iter().enumerate() {
            let row_sum: f64 = cells.iter().map(|&j| tm.count(i, j)).sum();
            if row_sum <= 0.0 {
                return Err(Error::Numeric(format!(
                    "cell {i} lost all its transitions under component restriction"
                )));
            }
            for (b, &j) in cells.iter().enumerate() {
                p[(a, b)] = tm.count(i, j) / row_sum;
            }
        }
        let vals = dense_eigenvalues_real_parts(p)?;
        (vals[..k].to_vec(), None)
    };

    let timescales: Vec<Timescale> = lambdas
        .iter()
        .map(|&l| Timescale::of(l, tm.lag_time))
        .collect();
    let dominant = dominant_count(&lambdas);
    Ok(SpectrumReport {
        eigenvalues: lambdas,
        timescales,
        lag_time: tm.lag_time,
        dominant,
        flagged_cells: tm.flagged_rows.clone(),
        components,
        component_cells: cells,
        eigenvectors: vectors,
    })
}

/// Position of the largest ratio gap `λ_d / λ_{d+1}` over the positive
/// prefix of the spectrum.
fn dominant_count(lambdas: &[f64]) -> usize {
    let mut best = 0;
    let mut best_ratio = 0.0;
    for d in 0..lambdas.len().saturating_sub(1) {
        if lambdas[d + 1] <= 0.0 {
            // Drop to a non-positive eigenvalue: an infinite ratio gap.
            if lambdas[d] > 0.0 {
                best = d;
            }
            break;
        }
        let ratio = lambdas[d] / lambdas[d + 1];
        if ratio > best_ratio {
            best_ratio = ratio;
            best = d;
        }
    }
    best
}

/// Full projected-Ulam pass: assign RC values on a trajectory to boxes,
/// count lag-`m` transitions, normalize, and extract the spectrum.
pub fn project_and_discretize(
    rc_on_trajectory: &Mat,
    partition: &UlamPartition,
    lag_steps: usize,
    lag_time: f64,
    symmetrize: bool,
    top_k: usize,
) -> Result<SpectrumReport> {
    let cells = assign_cells(partition, rc_on_trajectory)?;
    let counts = count_transitions(&cells, lag_steps, partition.n_cells())?;
    let tm = to_stochastic(&counts, symmetrize, lag_time);
    eigenvalues(&tm, top_k.min(tm.n))
}

/// One row of a spectra comparison table.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub name: String,
    pub index: usize,
    pub lambda: f64,
    /// `λ_i - λ_i(reference)`.
    pub delta_vs_reference: f64,
    pub timescale: Timescale,
    /// `t_i / t_i(reference)` where both are finite.
    pub timescale_ratio: Option<f64>,
    /// Set when this λ exceeds the reference λ beyond solver tolerance,
    /// violating non-expansiveness of the projection.
    pub exceeds_reference: bool,
}

/// Aligned eigenvalue comparison across named reports; the first report is
/// the reference (usually the full-state operator).
#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub reference: String,
    pub violations: Vec<(String, usize)>,
}

/// Tolerance above which a projected eigenvalue exceeding the full one is
/// flagged.
pub const NON_EXPANSIVE_TOL: f64 = 1e-8;

pub fn compare_spectra(reports: &[(String, &SpectrumReport)]) -> Result<ComparisonTable> {
    let (ref_name, reference) = reports
        .first()
        .ok_or_else(|| Error::Argument("no reports to compare".into()))?;
    for (name, r) in reports {
        if (r.lag_time - reference.lag_time).abs() > 1e-12 {
            return Err(Error::Argument(format!(
                "lag mismatch: {name} has t = {}, reference {ref_name} has t = {}",
                r.lag_time, reference.lag_time
            )));
        }
    }
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for (name, r) in reports {
        for (i, &l) in r.eigenvalues.iter().enumerate() {
            let (delta, exceeds, ratio) = match reference.eigenvalues.get(i) {
                Some(&lr) => {
                    let exceeds = name != ref_name && l > lr + NON_EXPANSIVE_TOL;
                    let ratio = match (r.timescales[i], reference.timescales[i]) {
                        (Timescale::Finite(a), Timescale::Finite(b)) => Some(a / b),
                        _ => None,
                    };
                    (l - lr, exceeds, ratio)
                }
                None => (f64::NAN, false, None),
            };
            if exceeds {
                violations.push((name.clone(), i));
            }
            rows.push(ComparisonRow {
                name: name.clone(),
                index: i,
                lambda: l,
                delta_vs_reference: delta,
                timescale: r.timescales[i],
                timescale_ratio: ratio,
                exceeds_reference: exceeds,
            });
        }
    }
    Ok(ComparisonTable {
        rows,
        reference: ref_name.clone(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn part_1d(lo: f64, hi: f64, bins: usize) -> UlamPartition {
        UlamPartition::rc_range(&[(lo, hi)], &[bins]).unwrap()
    }

    #[test]
    fn assign_corner_and_outside() {
        let p = UlamPartition::full_state(&[(-2.0, 2.0), (-1.0, 2.0)], &[40, 30]).unwrap();
        assert_eq!(p.assign(&[-2.0, -1.0]), Some(0));
        assert_eq!(p.assign(&[2.0, 2.0]), Some(1199));
        assert_eq!(p.assign(&[-2.1, 0.0]), None);
        assert_eq!(p.assign(&[0.0, 2.5]), None);
    }

    #[test]
    fn interior_boundaries_go_to_the_lower_cell() {
        let p = part_1d(0.0, 1.0, 4);
        assert_eq!(p.assign(&[0.0]), Some(0));
        assert_eq!(p.assign(&[0.25]), Some(0));
        assert_eq!(p.assign(&[0.26]), Some(1));
        assert_eq!(p.assign(&[1.0]), Some(3));
    }

    #[test]
    fn uniform_points_fill_cells_roughly_evenly() {
        let p = UlamPartition::full_state(&[(-2.0, 2.0), (-2.0, 2.0)], &[40, 40]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 320_000;
        let mut occupancy = vec![0u32; p.n_cells()];
        for _ in 0..n {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            occupancy[p.assign(&x).unwrap()] += 1;
        }
        let expected = n as f64 / p.n_cells() as f64;
        let max = *occupancy.iter().max().unwrap() as f64;
        let min = *occupancy.iter().min().unwrap() as f64;
        // Loose sanity band around 200 per cell.
        assert!(min > expected * 0.5 && max < expected * 1.5, "min {min} max {max}");
    }

    #[test]
    fn constant_sequence_counts_on_diagonal() {
        let cells = vec![Some(2); 10];
        let c = count_transitions(&cells, 3, 4).unwrap();
        assert_eq!(c.get(2, 2), 7);
        assert_eq!(c.total(), 7);
    }

    #[test]
    fn alternating_sequence_counts_off_diagonal() {
        let cells: Vec<Option<usize>> = (0..10).map(|i| Some(i % 2)).collect();
        let c = count_transitions(&cells, 1, 2).unwrap();
        assert_eq!(c.get(0, 1), 5);
        assert_eq!(c.get(1, 0), 4);
        assert_eq!(c.get(0, 0) + c.get(1, 1), 0);
    }

    #[test]
    fn out_of_domain_pairs_are_skipped_and_counted() {
        let cells = vec![Some(0), None, Some(1), Some(1)];
        let c = count_transitions(&cells, 1, 2).unwrap();
        assert_eq!(c.skipped, 2);
        assert_eq!(c.get(1, 1), 1);
        let all_oob = vec![None, None, None];
        assert!(matches!(
            count_transitions(&all_oob, 1, 2),
            Err(Error::EmptyCounts)
        ));
    }

    #[test]
    fn stochastic_rows_sum_to_one() {
        let mut counts = CountMatrix::zeros(2);
        counts.add(0, 0, 1);
        counts.add(0, 1, 1);
        counts.add(1, 0, 1);
        counts.add(1, 1, 1);
        let tm = to_stochastic(&counts, false, 1.0);
        assert_eq!(tm.prob(0, 0), 0.5);
        assert_eq!(tm.prob(1, 1), 0.5);
    }

    #[test]
    fn symmetrization_matches_hand_arithmetic() {
        // [[0,2],[1,1]] -> counts [[0,1.5],[1.5,1]] -> rows [[0,1],[0.6,0.4]]
        let mut counts = CountMatrix::zeros(2);
        counts.add(0, 1, 2);
        counts.add(1, 0, 1);
        counts.add(1, 1, 1);
        let tm = to_stochastic(&counts, true, 1.0);
        assert_eq!(tm.count(0, 1), 1.5);
        assert_eq!(tm.count(1, 0), 1.5);
        assert_eq!(tm.prob(0, 1), 1.0);
        assert_eq!(tm.prob(1, 0), 0.6);
        assert_eq!(tm.prob(1, 1), 0.4);
    }

    #[test]
    fn zero_rows_become_flagged_identity_rows() {
        let mut counts = CountMatrix::zeros(3);
        counts.add(0, 0, 2);
        counts.add(0, 1, 2);
        counts.add(1, 0, 4);
        let tm = to_stochastic(&counts, false, 1.0);
        assert_eq!(tm.flagged_rows, vec![2]);
        assert_eq!(tm.prob(2, 2), 1.0);
        let row_sum: f64 = (0..3).map(|j| tm.prob(2, j)).sum();
        assert!((row_sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_matrix_spectrum_is_all_ones() {
        let mut counts = CountMatrix::zeros(2);
        counts.add(0, 0, 2);
        counts.add(1, 1, 2);
        let tm = to_stochastic(&counts, true, 1.0);
        let report = eigenvalues(&tm, 2).unwrap();
        // Two visited cells with no observed coupling: two components; the
        // spectrum comes from the largest one and is {1}.
        assert_eq!(report.components, 2);
        assert!((report.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!(matches!(report.timescales[0], Timescale::Infinite));
    }

    #[test]
    fn two_state_chain_eigenvalues_and_timescale() {
        let mut counts = CountMatrix::zeros(2);
        counts.add(0, 0, 9);
        counts.add(0, 1, 1);
        counts.add(1, 0, 1);
        counts.add(1, 1, 9);
        let tm = to_stochastic(&counts, true, 1.0);
        let report = eigenvalues(&tm, 2).unwrap();
        assert!((report.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((report.eigenvalues[1] - 0.8).abs() < 1e-12);
        let t1 = report.timescales[1].finite().unwrap();
        assert!((t1 - 4.4814).abs() < 1e-3, "t1 = {t1}");
        assert_eq!(report.dominant, 0);
    }

    #[test]
    fn simulated_two_state_chain_recovers_flip_probability() {
        let p_flip = 0.1;
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut state = 0usize;
        let mut cells = Vec::with_capacity(n);
        for _ in 0..n {
            cells.push(Some(state));
            if rng.gen::<f64>() < p_flip {
                state = 1 - state;
            }
        }
        let counts = count_transitions(&cells, 1, 2).unwrap();
        let tm = to_stochastic(&counts, false, 1.0);
        let sigma = 3.0 * (p_flip * (1.0 - p_flip) / (n as f64 / 2.0)).sqrt();
        assert!((tm.prob(0, 1) - p_flip).abs() < sigma);
        assert!((tm.prob(1, 0) - p_flip).abs() < sigma);
        let report = eigenvalues(&tm, 2).unwrap();
        assert!((report.eigenvalues[1] - (1.0 - 2.0 * p_flip)).abs() < 3.0 * sigma);
    }

    #[test]
    fn flagged_cells_do_not_pollute_the_spectrum() {
        // 2-state mixing chain plus two never-visited cells.
        let mut counts = CountMatrix::zeros(4);
        counts.add(0, 0, 9);
        counts.add(0, 1, 1);
        counts.add(1, 0, 1);
        counts.add(1, 1, 9);
        let tm = to_stochastic(&counts, true, 1.0);
        assert_eq!(tm.flagged_rows, vec![2, 3]);
        let report = eigenvalues(&tm, 4).unwrap();
        assert_eq!(report.component_cells, vec![0, 1]);
        assert!((report.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((report.eigenvalues[1] - 0.8).abs() < 1e-12);
        assert_eq!(report.eigenvalues.len(), 2);
    }

    #[test]
    fn projected_identity_rc_matches_full_spectrum() {
        // For a 1D system, projecting through ξ(x) = x onto the same boxes
        // is the full Ulam discretization itself.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let mut x = 0.0f64;
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            x = (x + rng.gen_range(-0.3..0.3)).clamp(-1.0, 1.0);
            rows.push(vec![x]);
        }
        let traj = Mat::from_rows(&rows).unwrap();
        let partition = part_1d(-1.0, 1.0, 10);
        let cells = assign_cells(&partition, &traj).unwrap();
        let counts = count_transitions(&cells, 2, partition.n_cells()).unwrap();
        let full = eigenvalues(&to_stochastic(&counts, true, 0.2), 5).unwrap();
        let projected = project_and_discretize(&traj, &partition, 2, 0.2, true, 5).unwrap();
        for (a, b) in full.eigenvalues.iter().zip(&projected.eigenvalues) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn compare_report_with_itself_gives_zero_deltas() {
        let mut counts = CountMatrix::zeros(2);
        counts.add(0, 0, 9);
        counts.add(0, 1, 1);
        counts.add(1, 0, 1);
        counts.add(1, 1, 9);
        let tm = to_stochastic(&counts, true, 1.0);
        let r = eigenvalues(&tm, 2).unwrap();
        let table = compare_spectra(&[("full".into(), &r), ("again".into(), &r)]).unwrap();
        assert!(table.violations.is_empty());
        for row in &table.rows {
            assert_eq!(row.delta_vs_reference, 0.0);
        }
    }

    #[test]
    fn non_expansiveness_violation_is_flagged() {
        let mut slow = CountMatrix::zeros(2);
        slow.add(0, 0, 99);
        slow.add(0, 1, 1);
        slow.add(1, 0, 1);
        slow.add(1, 1, 99);
        let mut fast = CountMatrix::zeros(2);
        fast.add(0, 0, 8);
        fast.add(0, 1, 2);
        fast.add(1, 0, 2);
        fast.add(1, 1, 8);
        let full = eigenvalues(&to_stochastic(&fast, true, 1.0), 2).unwrap();
        let projected = eigenvalues(&to_stochastic(&slow, true, 1.0), 2).unwrap();
        // projected λ1 = 0.98 > full λ1 = 0.6: must be flagged.
        let table =
            compare_spectra(&[("full".into(), &full), ("proj".into(), &projected)]).unwrap();
        assert!(table
            .violations
            .iter()
            .any(|(name, i)| name == "proj" && *i == 1));
    }

    #[test]
    fn lag_mismatch_is_rejected() {
        let mut counts = CountMatrix::zeros(2);
        counts.add(0, 1, 1);
        counts.add(1, 0, 1);
        let a = eigenvalues(&to_stochastic(&counts, true, 1.0), 1).unwrap();
        let b = eigenvalues(&to_stochastic(&counts, true, 2.0), 1).unwrap();
        assert!(compare_spectra(&[("a".into(), &a), ("b".into(), &b)]).is_err());
    }

    #[test]
    fn symmetrized_spectrum_is_real_and_within_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let n = 12;
        let mut counts = CountMatrix::zeros(n);
        for _ in 0..4000 {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            counts.add(i, j, 1);
        }
        let tm = to_stochastic(&counts, true, 0.5);
        let report = eigenvalues(&tm, n).unwrap();
        for &l in &report.eigenvalues {
            assert!((-1.0 - 1e-10..=1.0 + 1e-10).contains(&l));
        }
        for w in report.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn dominant_count_finds_the_gap() {
        assert_eq!(dominant_count(&[1.0, 0.99, 0.95, 0.3, 0.1]), 2);
        assert_eq!(dominant_count(&[1.0, 0.85, 0.33, 0.19]), 1);
        assert_eq!(dominant_count(&[1.0]), 0);
        assert_eq!(dominant_count(&[1.0, 0.5, -0.2]), 1);
    }
}
