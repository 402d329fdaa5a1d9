//! Diffusion maps over the embedded point cloud and the final reaction
//! coordinate.
//!
//! The similarity matrix uses the truncated Gaussian kernel
//! `W_ij = exp(-‖ẑ_i - ẑ_j‖² / σ) · 1{‖ẑ_i - ẑ_j‖²/σ ≤ R}`. It is normalized
//! twice, `W̃ = D⁻¹ W D⁻¹` and `P = D̃⁻¹ W̃`, and the spectrum of `P` is
//! computed through its symmetric conjugate `D̃^{-1/2} W̃ D̃^{-1/2}`. The
//! diffusion map is `Ψ(ẑ) = (γ_1 ψ_1(ẑ), …, γ_r ψ_r(ẑ))`, and the reaction
//! coordinate extends to new points by nearest-neighbor lookup.

use crate::error::{Error, Result};
use crate::linalg::{dense_symmetric_eigen, fix_sign, lanczos_top_k, CsrMatrix};
use crate::mat::{dist_sq, nearest_row, Mat};
use crate::parallel;
use crate::sampling::{EvaluationSet, Provenance};

/// Default cutoff in units of `d²/σ`; similarities below `e^{-4} ≈ 0.018`
/// are treated as structural zeros.
pub const DEFAULT_CUTOFF: f64 = 4.0;

/// Neighbor rank used by the median kernel-scale heuristic.
pub const MEDIAN_HEURISTIC_NEIGHBOR: usize = 10;

/// Sparse truncated-Gaussian similarity matrix over a point cloud.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub(crate) w: CsrMatrix,
    /// Points with no off-diagonal similarity (only `W_ii = 1`).
    pub isolated: Vec<usize>,
    pub sigma: f64,
    pub cutoff: f64,
}

impl KernelMatrix {
    pub fn len(&self) -> usize {
        self.w.n
    }

    pub fn is_empty(&self) -> bool {
        self.w.n == 0
    }

    pub fn nnz(&self) -> usize {
        self.w.nnz()
    }

    /// Dense copy, for inspection and small-problem tests.
    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.w.n, self.w.n);
        for i in 0..self.w.n {
            let (cols, vals) = self.w.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                m.set(i, c, v);
            }
        }
        m
    }
}

/// Median over the cloud of the squared distance to each point's
/// `neighbor`-th nearest neighbor (self excluded). The usual scale choice
/// when σ is not given explicitly.
pub fn kernel_scale_median(cloud: &Mat, neighbor: usize) -> Result<f64> {
    let n = cloud.rows();
    if n < 2 {
        return Err(Error::Argument("need at least two points".into()));
    }
    let rank = neighbor.clamp(1, n - 1);
    let mut kth: Vec<f64> = parallel::map_indexed(n, |i| {
        let mut d: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| dist_sq(cloud.row(i), cloud.row(j)))
            .collect();
        let (_, v, _) = d.select_nth_unstable_by(rank - 1, |a, b| a.partial_cmp(b).unwrap());
        *v
    });
    let mid = kth.len() / 2;
    let (_, median, _) = kth.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    let m = *median;
    if m <= 0.0 {
        return Err(Error::Argument(
            "median neighbor distance is zero; cloud has too many duplicates".into(),
        ));
    }
    Ok(m)
}

/// Builds the truncated-Gaussian kernel. Rows with no off-diagonal entries
/// are recorded in `isolated`, not dropped.
pub fn build_kernel(cloud: &Mat, sigma: f64, cutoff: f64) -> Result<KernelMatrix> {
    if sigma <= 0.0 || cutoff <= 0.0 {
        return Err(Error::Argument("sigma and cutoff must be positive".into()));
    }
    if cloud.rows() == 0 {
        return Err(Error::Argument("empty cloud".into()));
    }
    let n = cloud.rows();
    let rows: Vec<Vec<(usize, f64)>> = parallel::map_indexed(n, |i| {
        let mut row = Vec::new();
        let pi = cloud.row(i);
        for j in 0..n {
            let u = dist_sq(pi, cloud.row(j)) / sigma;
            if u <= cutoff {
                row.push((j, (-u).exp()));
            }
        }
        row
    });
    let isolated: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(i, r)| r.iter().all(|(j, _)| j == i))
        .map(|(i, _)| i)
        .collect();
    Ok(KernelMatrix {
        w: CsrMatrix::from_rows(rows),
        isolated,
        sigma,
        cutoff,
    })
}

/// What to do with isolated points when fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IsolatedPolicy {
    /// Keep them; a disconnected kernel graph is then an error.
    #[default]
    Keep,
    /// Drop them from the training set (recorded in the model).
    Drop,
}

/// Fitted diffusion-map model: kernel eigenpairs over the training cloud.
#[derive(Debug, Clone)]
pub struct DiffusionMapModel {
    /// Training cloud rows the eigenvectors refer to (isolated points
    /// removed when the policy dropped them).
    pub training: Mat,
    /// Indices into the original cloud, one per training row.
    pub kept: Vec<usize>,
    pub sigma: f64,
    pub cutoff: f64,
    /// `γ_0 ≥ γ_1 ≥ …`, with `γ_0 = 1`.
    pub eigenvalues: Vec<f64>,
    /// Column `j` holds `ψ_j` on the training rows, unit norm, sign-fixed.
    pub eigenvectors: Mat,
    /// Number of reaction-coordinate components to expose.
    pub r: usize,
    /// Indices (original cloud) dropped as isolated.
    pub dropped: Vec<usize>,
    /// `γ_{r+1}/γ_r > 0.9`: the requested `r` cuts inside a plateau.
    pub weak_separation: bool,
}

impl DiffusionMapModel {
    pub fn len(&self) -> usize {
        self.training.rows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.training.cols()
    }

    /// `Ψ` values on training row `i`.
    pub fn psi(&self, i: usize) -> Vec<f64> {
        (1..=self.r)
            .map(|j| self.eigenvalues[j] * self.eigenvectors.get(i, j))
            .collect()
    }
}

/// Number of eigenpairs to extract beyond the requested `r`.
fn spectrum_budget(n: usize, r: usize) -> usize {
    n.min((r + 2).max(10))
}

const DENSE_EIGEN_LIMIT: usize = 2048;

/// Normalizes the kernel and computes the leading eigenpairs of the
/// diffusion operator.
pub fn fit_diffmap(
    kernel: &KernelMatrix,
    cloud: &Mat,
    r: usize,
    policy: IsolatedPolicy,
) -> Result<DiffusionMapModel> {
    if cloud.rows() != kernel.len() {
        return Err(Error::Argument("kernel and cloud sizes differ".into()));
    }
    if r < 1 {
        return Err(Error::Argument("need r >= 1".into()));
    }

    // Resolve isolated points.
    let (w, kept, dropped): (CsrMatrix, Vec<usize>, Vec<usize>) = match policy {
        IsolatedPolicy::Keep | IsolatedPolicy::Drop if kernel.isolated.is_empty() => (
            kernel.w.clone(),
            (0..kernel.len()).collect(),
            Vec::new(),
        ),
        IsolatedPolicy::Drop => {
            let dropped = kernel.isolated.clone();
            let keep: Vec<usize> = (0..kernel.len())
                .filter(|i| !dropped.contains(i))
                .collect();
            let mut remap = vec![usize::MAX; kernel.len()];
            for (new, &old) in keep.iter().enumerate() {
                remap[old] = new;
            }
            let rows: Vec<Vec<(usize, f64)>> = keep
                .iter()
                .map(|&old| {
                    let (cols, vals) = kernel.w.row(old);
                    cols.iter()
                        .zip(vals)
                        .filter(|(c, _)| remap[**c] != usize::MAX)
                        .map(|(c, v)| (remap[*c], *v))
                        .collect()
                })
                .collect();
            (CsrMatrix::from_rows(rows), keep, dropped)
        }
        IsolatedPolicy::Keep => (
            kernel.w.clone(),
            (0..kernel.len()).collect(),
            Vec::new(),
        ),
    };
    let n = w.n;
    if n < 2 {
        return Err(Error::Argument(
            "fewer than two connected points remain".into(),
        ));
    }

    // Connectivity: multiplicity of γ = 1 equals the number of components.
    let labels = w.components();
    let ncomp = labels.iter().copied().max().unwrap_or(0) + 1;
    if ncomp > 1 {
        return Err(Error::DisconnectedCloud { components: ncomp });
    }

    // W̃ = D⁻¹ W D⁻¹, then S = D̃^{-1/2} W̃ D̃^{-1/2}.
    let mut s = w;
    let d = s.row_sums();
    let d_inv: Vec<f64> = d.iter().map(|&v| 1.0 / v).collect();
    s.scale_sym(&d_inv);
    let d_tilde = s.row_sums();
    let d_tilde_inv_sqrt: Vec<f64> = d_tilde.iter().map(|&v| 1.0 / v.sqrt()).collect();
    s.scale_sym(&d_tilde_inv_sqrt);

    let want = spectrum_budget(n, r);
    let (values, vectors): (Vec<f64>, Vec<Vec<f64>>) = if n <= DENSE_EIGEN_LIMIT || want >= n {
        let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            let (cols, vals) = s.row(i);
            cols.iter()
                .position(|&c| c == j)
                .map(|p| vals[p])
                .unwrap_or(0.0)
        });
        let (vals, vecs) = dense_symmetric_eigen(dm);
        let take = want.min(n);
        (
            vals[..take].to_vec(),
            (0..take)
                .map(|c| vecs.column(c).iter().copied().collect())
                .collect(),
        )
    } else {
        lanczos_top_k(n, want, |x, out| s.matvec(x, out), 1e-10)?
    };

    // ψ_j = D̃^{-1/2} v_j, unit norm, sign-fixed.
    let mut eigenvectors = Mat::zeros(n, values.len());
    for (j, v) in vectors.iter().enumerate() {
        let mut psi: Vec<f64> = v
            .iter()
            .zip(&d_tilde_inv_sqrt)
            .map(|(vi, di)| vi * di)
            .collect();
        let nrm = psi.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in psi.iter_mut() {
            *x /= nrm;
        }
        fix_sign(&mut psi);
        for i in 0..n {
            eigenvectors.set(i, j, psi[i]);
        }
    }

    // Spectral sanity.
    if (values[0] - 1.0).abs() > 1e-10 {
        return Err(Error::Numeric(format!(
            "leading diffusion-map eigenvalue is {} (expected 1)",
            values[0]
        )));
    }
    if values.len() > 1 && values[1] >= 1.0 - 1e-8 {
        return Err(Error::DisconnectedCloud { components: 2 });
    }
    if values.iter().any(|&g| g.abs() > 1.0 + 1e-10) {
        return Err(Error::Numeric("eigenvalue outside [-1, 1]".into()));
    }
    if values.len() <= r {
        return Err(Error::Argument(format!(
            "cloud supports only {} eigenpairs, need r+1 = {}",
            values.len(),
            r + 1
        )));
    }

    let weak_separation = if values.len() > r + 1 && values[r] > 0.0 {
        values[r + 1] / values[r] > 0.9
    } else {
        false
    };

    let mut training = Mat::zeros(n, cloud.cols());
    for (new, &old) in kept.iter().enumerate() {
        training.row_mut(new).copy_from_slice(cloud.row(old));
    }

    Ok(DiffusionMapModel {
        training,
        kept,
        sigma: kernel.sigma,
        cutoff: kernel.cutoff,
        eigenvalues: values,
        eigenvectors,
        r,
        dropped,
        weak_separation,
    })
}

/// The reaction coordinate: diffusion-map values on the training cloud with
/// nearest-neighbor extension.
#[derive(Debug, Clone)]
pub struct ReactionCoordinate {
    pub model: DiffusionMapModel,
    /// `ℓ x r` matrix of `Ψ(ẑ_i)`.
    pub values: Mat,
}

impl ReactionCoordinate {
    pub fn from_model(model: DiffusionMapModel) -> Self {
        let mut values = Mat::zeros(model.len(), model.r);
        for i in 0..model.len() {
            values.row_mut(i).copy_from_slice(&model.psi(i));
        }
        Self { model, values }
    }

    pub fn r(&self) -> usize {
        self.model.r
    }
}

/// Evaluates the reaction coordinate at embedded query rows: a training row
/// maps to its own value, anything else to the value of the Euclidean
/// nearest training row (ties to the lowest index).
pub fn evaluate_rc(rc: &ReactionCoordinate, queries: &Mat) -> Result<Mat> {
    if rc.values.is_empty() {
        return Err(Error::State("reaction coordinate has no training data".into()));
    }
    if queries.cols() != rc.model.embedding_dim() {
        return Err(Error::DimensionMismatch {
            expected: rc.model.embedding_dim(),
            got: queries.cols(),
        });
    }
    let rows = parallel::map_indexed(queries.rows(), |q| {
        let i = nearest_row(&rc.model.training, queries.row(q));
        rc.values.row(i).to_vec()
    });
    Ok(Mat::from_row_iter(rc.r(), rows))
}

/// Reaction-coordinate values pinned to state-space points, for extending
/// `ξ̄` to trajectory states by nearest neighbor.
#[derive(Debug, Clone)]
pub struct RcField {
    pub points: Mat,
    pub values: Mat,
    grid: Option<(Vec<(f64, f64)>, Vec<usize>)>,
}

impl RcField {
    /// Binds RC values to the evaluation points that produced them. Grid
    /// provenance enables O(1) nearest-neighbor lookup by snapping.
    pub fn new(eval: &EvaluationSet, values: Mat) -> Result<Self> {
        if values.rows() != eval.len() {
            return Err(Error::Argument(format!(
                "{} values for {} points",
                values.rows(),
                eval.len()
            )));
        }
        let grid = match &eval.provenance {
            Provenance::Grid { rect, shape } => Some((rect.clone(), shape.clone())),
            _ => None,
        };
        Ok(Self {
            points: eval.points.clone(),
            values,
            grid,
        })
    }

    pub fn r(&self) -> usize {
        self.values.cols()
    }

    /// Value at the nearest field point for every query state.
    pub fn extend_nearest(&self, queries: &Mat) -> Result<Mat> {
        if self.points.is_empty() {
            return Err(Error::State("empty reaction-coordinate field".into()));
        }
        if queries.cols() != self.points.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.points.cols(),
                got: queries.cols(),
            });
        }
        let rows = parallel::map_indexed(queries.rows(), |q| {
            let idx = self.nearest_index(queries.row(q));
            self.values.row(idx).to_vec()
        });
        Ok(Mat::from_row_iter(self.r(), rows))
    }

    fn nearest_index(&self, x: &[f64]) -> usize {
        if let Some((rect, shape)) = &self.grid {
            // Row-major with the last axis fastest; per-axis rounding is the
            // exact nearest neighbor on a tensor grid.
            let mut idx = 0usize;
            for a in 0..rect.len() {
                let (lo, hi) = rect[a];
                let step = (hi - lo) / (shape[a] - 1) as f64;
                let i = ((x[a] - lo) / step).round().clamp(0.0, (shape[a] - 1) as f64) as usize;
                idx = idx * shape[a] + i;
            }
            idx
        } else {
            nearest_row(&self.points, x)
        }
    }
}

/// Per-point local dimension estimates plus the global vote.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionDiagnostic {
    pub per_point: Vec<usize>,
    pub vote: usize,
}

/// Local-PCA intrinsic dimension: for each point, the covariance spectrum of
/// its `m` nearest neighbors; the local dimension is the smallest count of
/// leading directions explaining at least 90% of the variance. The global
/// vote is the mode (ties to the smaller dimension).
pub fn dimension_diagnostic(cloud: &Mat, m: usize) -> Result<DimensionDiagnostic> {
    let n = cloud.rows();
    let k = cloud.cols();
    if m < k + 1 {
        return Err(Error::Argument(format!(
            "neighborhood size {m} must be at least dim+1 = {}",
            k + 1
        )));
    }
    if n < m {
        return Err(Error::Argument(format!(
            "cloud of {n} points is smaller than the neighborhood size {m}"
        )));
    }
    let per_point: Vec<usize> = parallel::map_indexed(n, |i| {
        // m nearest neighbors of point i, including itself.
        let mut idx: Vec<usize> = (0..n).collect();
        idx.select_nth_unstable_by(m - 1, |&a, &b| {
            dist_sq(cloud.row(i), cloud.row(a))
                .partial_cmp(&dist_sq(cloud.row(i), cloud.row(b)))
                .unwrap()
        });
        let patch = &idx[..m];
        let mut mean = vec![0.0; k];
        for &p in patch {
            for (mu, &v) in mean.iter_mut().zip(cloud.row(p)) {
                *mu += v;
            }
        }
        for mu in mean.iter_mut() {
            *mu /= m as f64;
        }
        let mut cov = nalgebra::DMatrix::<f64>::zeros(k, k);
        for &p in patch {
            let row = cloud.row(p);
            for a in 0..k {
                for b in a..k {
                    let v = (row[a] - mean[a]) * (row[b] - mean[b]);
                    cov[(a, b)] += v;
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                cov[(a, b)] = cov[(b, a)];
            }
        }
        let mut eig: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let total: f64 = eig.iter().map(|&e| e.max(0.0)).sum();
        if total <= 0.0 {
            return 0;
        }
        let mut acc = 0.0;
        for (c, &e) in eig.iter().enumerate() {
            acc += e.max(0.0);
            if acc >= 0.9 * total {
                return c + 1;
            }
        }
        k
    });
    // Mode, ties to the smaller dimension.
    let mut counts = vec![0usize; k + 1];
    for &d in &per_point {
        counts[d] += 1;
    }
    let vote = counts
        .iter()
        .enumerate()
        .max_by(|(da, ca), (db, cb)| ca.cmp(cb).then(db.cmp(da)))
        .map(|(d, _)| d)
        .unwrap_or(0);
    Ok(DimensionDiagnostic { per_point, vote })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_rc(training: &[Vec<f64>], values: &[Vec<f64>], r: usize) -> ReactionCoordinate {
        let n = training.len();
        let model = DiffusionMapModel {
            training: Mat::from_rows(training).unwrap(),
            kept: (0..n).collect(),
            sigma: 1.0,
            cutoff: 4.0,
            eigenvalues: vec![1.0; r + 1],
            eigenvectors: Mat::zeros(n, r + 1),
            r,
            dropped: vec![],
            weak_separation: false,
        };
        ReactionCoordinate {
            model,
            values: Mat::from_rows(values).unwrap(),
        }
    }

    #[test]
    fn kernel_of_identical_points_is_all_ones() {
        let cloud = Mat::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let k = build_kernel(&cloud, 1.0, 4.0).unwrap();
        let d = k.to_dense();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(d.get(i, j), 1.0);
            }
        }
    }

    #[test]
    fn kernel_cutoff_zeroes_far_pairs() {
        let cloud = Mat::from_rows(&[vec![0.0], vec![10.0]]).unwrap();
        let k = build_kernel(&cloud, 1.0, 4.0).unwrap();
        let d = k.to_dense();
        assert_eq!(d.get(0, 1), 0.0);
        assert_eq!(d.get(0, 0), 1.0);
        assert_eq!(k.isolated, vec![0, 1]);
    }

    #[test]
    fn kernel_on_collinear_equidistant_points() {
        // d²/σ = 1 between neighbors, 4 between the outer pair.
        let cloud = Mat::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let k = build_kernel(&cloud, 1.0, 4.0).unwrap();
        let d = k.to_dense();
        let e1 = (-1.0f64).exp();
        let e4 = (-4.0f64).exp();
        assert!((d.get(0, 1) - e1).abs() < 1e-15);
        assert!((d.get(1, 2) - e1).abs() < 1e-15);
        assert!((d.get(0, 2) - e4).abs() < 1e-15);
        // With a tighter cutoff the far pair is structurally zero.
        let k2 = build_kernel(&cloud, 1.0, 2.0).unwrap();
        assert_eq!(k2.to_dense().get(0, 2), 0.0);
    }

    #[test]
    fn disconnected_kernel_is_an_error() {
        let cloud = Mat::from_rows(&[vec![0.0], vec![0.1], vec![50.0], vec![50.1]]).unwrap();
        let k = build_kernel(&cloud, 1.0, 4.0).unwrap();
        match fit_diffmap(&k, &cloud, 1, IsolatedPolicy::Keep) {
            Err(Error::DisconnectedCloud { components }) => assert_eq!(components, 2),
            other => panic!("expected disconnection, got {other:?}"),
        }
    }

    #[test]
    fn identity_kernel_is_fully_disconnected() {
        let cloud = Mat::from_rows(&[vec![0.0], vec![100.0], vec![200.0]]).unwrap();
        let k = build_kernel(&cloud, 1.0, 4.0).unwrap();
        assert_eq!(k.isolated.len(), 3);
        assert!(matches!(
            fit_diffmap(&k, &cloud, 1, IsolatedPolicy::Keep),
            Err(Error::DisconnectedCloud { .. })
        ));
    }

    #[test]
    fn all_ones_kernel_has_rank_one_spectrum() {
        let cloud = Mat::from_rows(&[vec![0.0], vec![1e-9], vec![2e-9], vec![3e-9]]).unwrap();
        let k = build_kernel(&cloud, 1.0, 4.0).unwrap();
        let model = fit_diffmap(&k, &cloud, 1, IsolatedPolicy::Keep).unwrap();
        assert!((model.eigenvalues[0] - 1.0).abs() < 1e-12);
        for &g in &model.eigenvalues[1..] {
            assert!(g.abs() < 1e-9, "subleading eigenvalue {g}");
        }
        // ψ0 constant
        let psi0 = model.eigenvectors.column(0);
        for v in &psi0 {
            assert!((v - psi0[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn stochastic_rows_of_reconstructed_p() {
        // P = D̃⁻¹W̃ row sums are exactly 1 by construction; rebuild and check.
        let cloud = Mat::from_rows(&[
            vec![0.0, 0.0],
            vec![0.7, 0.1],
            vec![1.4, -0.2],
            vec![2.0, 0.3],
            vec![2.8, 0.1],
        ])
        .unwrap();
        let k = build_kernel(&cloud, 1.5, 4.0).unwrap();
        let mut w = k.w.clone();
        let d = w.row_sums();
        let d_inv: Vec<f64> = d.iter().map(|&v| 1.0 / v).collect();
        w.scale_sym(&d_inv);
        let d_tilde = w.row_sums();
        for i in 0..w.n {
            let (_, vals) = w.row(i);
            let p_sum: f64 = vals.iter().map(|v| v / d_tilde[i]).sum();
            assert!((p_sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_equivariance_of_eigenpairs() {
        let rows = vec![
            vec![0.0, 0.0],
            vec![0.5, 0.2],
            vec![1.0, 0.1],
            vec![1.5, -0.1],
            vec![2.0, 0.2],
            vec![2.5, 0.0],
        ];
        let cloud = Mat::from_rows(&rows).unwrap();
        let perm = [3usize, 0, 5, 1, 4, 2];
        let permuted_rows: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let permuted = Mat::from_rows(&permuted_rows).unwrap();

        let m1 = fit_diffmap(&build_kernel(&cloud, 1.0, 6.0).unwrap(), &cloud, 2, IsolatedPolicy::Keep)
            .unwrap();
        let m2 = fit_diffmap(
            &build_kernel(&permuted, 1.0, 6.0).unwrap(),
            &permuted,
            2,
            IsolatedPolicy::Keep,
        )
        .unwrap();
        for j in 0..m1.eigenvalues.len() {
            assert!((m1.eigenvalues[j] - m2.eigenvalues[j]).abs() < 1e-10);
        }
        // ψ entries permute along with the rows (up to global sign, which
        // fix_sign pins to the first large entry and may differ after a
        // permutation; compare via absolute values and one aligned signature).
        for j in 0..m1.eigenvalues.len() {
            let a = m1.eigenvectors.column(j);
            let b = m2.eigenvectors.column(j);
            let flip = if (a[perm[0]] - b[0]).abs() <= (a[perm[0]] + b[0]).abs() {
                1.0
            } else {
                -1.0
            };
            for (new, &old) in perm.iter().enumerate() {
                assert!(
                    (a[old] - flip * b[new]).abs() < 1e-9,
                    "eigvec {j}: entry {new} mismatch"
                );
            }
        }
    }

    #[test]
    fn isometry_leaves_spectrum_and_psi_unchanged() {
        // Rotation + translation in R³ of a noisy arc.
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let s = i as f64 / 39.0 * 2.0;
                vec![s.cos(), s.sin() * 0.7, 0.05 * (7.0 * s).sin()]
            })
            .collect();
        let cloud = Mat::from_rows(&rows).unwrap();
        // Rotation by the 3-4-5 angle in the (x1,x2) plane plus a shift.
        let (c, s) = (0.6f64, 0.8f64);
        let moved_rows: Vec<Vec<f64>> = rows
            .iter()
            .map(|p| {
                vec![
                    c * p[0] - s * p[1] + 10.0,
                    s * p[0] + c * p[1] - 3.0,
                    p[2] + 0.5,
                ]
            })
            .collect();
        let moved = Mat::from_rows(&moved_rows).unwrap();
        let sigma = kernel_scale_median(&cloud, 5).unwrap();
        let m1 =
            fit_diffmap(&build_kernel(&cloud, sigma, 8.0).unwrap(), &cloud, 1, IsolatedPolicy::Keep)
                .unwrap();
        let m2 =
            fit_diffmap(&build_kernel(&moved, sigma, 8.0).unwrap(), &moved, 1, IsolatedPolicy::Keep)
                .unwrap();
        for j in 0..m1.eigenvalues.len() {
            assert!((m1.eigenvalues[j] - m2.eigenvalues[j]).abs() < 1e-8);
        }
        for j in 0..=1 {
            let a = m1.eigenvectors.column(j);
            let b = m2.eigenvectors.column(j);
            let flip = if (a[0] - b[0]).abs() <= (a[0] + b[0]).abs() { 1.0 } else { -1.0 };
            for i in 0..a.len() {
                assert!((a[i] - flip * b[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn evaluate_rc_is_exact_on_training_rows() {
        let rc = toy_rc(
            &[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]],
            &[vec![-1.0], vec![0.0], vec![1.0]],
            1,
        );
        let out = evaluate_rc(&rc, &rc.model.training.clone()).unwrap();
        assert_eq!(out.row(0), &[-1.0]);
        assert_eq!(out.row(1), &[0.0]);
        assert_eq!(out.row(2), &[1.0]);
    }

    #[test]
    fn evaluate_rc_takes_nearest_and_low_ties() {
        let rc = toy_rc(
            &[vec![0.0], vec![2.0]],
            &[vec![10.0], vec![20.0]],
            1,
        );
        let q = Mat::from_rows(&[vec![0.9], vec![1.0], vec![1.1]]).unwrap();
        let out = evaluate_rc(&rc, &q).unwrap();
        assert_eq!(out.row(0), &[10.0]);
        assert_eq!(out.row(1), &[10.0]); // exact midpoint: lowest index wins
        assert_eq!(out.row(2), &[20.0]);
    }

    #[test]
    fn grid_snapping_matches_brute_force() {
        let eval = crate::sampling::make_grid(&[(-1.0, 1.0), (0.0, 3.0)], &[5, 7]).unwrap();
        let values = Mat::from_row_iter(
            1,
            (0..eval.len()).map(|i| vec![i as f64]),
        );
        let field = RcField::new(&eval, values.clone()).unwrap();
        let brute = RcField {
            points: eval.points.clone(),
            values,
            grid: None,
        };
        let queries = Mat::from_rows(&[
            vec![-1.2, -0.4],
            vec![0.33, 2.9],
            vec![0.9, 3.4],
            vec![-0.1, 1.77],
        ])
        .unwrap();
        assert_eq!(
            field.extend_nearest(&queries).unwrap(),
            brute.extend_nearest(&queries).unwrap()
        );
    }

    #[test]
    fn dimension_diagnostic_on_line_and_plane() {
        let line = Mat::from_row_iter(
            3,
            (0..60).map(|i| {
                let s = i as f64 / 10.0;
                vec![s, 2.0 * s, -s]
            }),
        );
        let d = dimension_diagnostic(&line, 8).unwrap();
        assert_eq!(d.vote, 1);
        assert!(d.per_point.iter().all(|&v| v == 1));

        let plane = Mat::from_row_iter(
            3,
            (0..10).flat_map(|i| {
                (0..10).map(move |j| vec![i as f64, j as f64, 0.0])
            }),
        );
        let d2 = dimension_diagnostic(&plane, 12).unwrap();
        assert_eq!(d2.vote, 2);
    }

    #[test]
    fn dimension_diagnostic_rejects_small_clouds() {
        let cloud = Mat::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!(dimension_diagnostic(&cloud, 5).is_err());
    }
}
