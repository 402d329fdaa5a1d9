//! Computable quality diagnostics for reaction coordinates.
//!
//! The coordinate projection `P_ξ f` (conditional expectation of `f` over
//! level sets of `ξ` under the invariant measure) is realized empirically by
//! binning RC values and averaging within bins. The binned estimator is an
//! orthogonal projection of the sample vectors, so idempotence and
//! self-adjointness hold algebraically and the checks below measure only
//! floating-point accumulation.
//!
//! The perturbation oracle exercises the eigenvalue bound: for self-adjoint
//! non-expansive `T` with eigenpair `(λ, u)` and an orthogonal projection
//! `Q` with `‖Q^⊥ u‖ < ε`, the compression `QTQ` has an eigenvalue within
//! `ε/sqrt(1-ε²)` of `λ`. Each trial constructs such a pair exactly and
//! verifies against a dense eigensolver.
//!
//! Committor probabilities `q_i(x)` (reach core `i` before the others) are
//! estimated by Monte Carlo first-hitting simulation.

use crate::dynamics::{GaussianNoise, IntegratorConfig, PotentialSystem, RngStream, Simulator};
use crate::error::{Error, Result};
use crate::linalg::{dense_symmetric_eigen, dot, random_orthonormal_complement};
use crate::mat::{dist_sq, Mat};
use crate::parallel;
use crate::spectrum::UlamPartition;
use nalgebra::DMatrix;
use rand::Rng;

/// Empirical coordinate projection: per-bin means of an observable over a
/// 1-D reaction-coordinate range.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedConditional {
    pub edges: Vec<f64>,
    /// Mean per bin; `None` marks an empty bin.
    pub means: Vec<Option<f64>>,
    pub weights: Vec<usize>,
    /// Samples outside the binned range, excluded from every statistic.
    pub excluded: usize,
}

impl BinnedConditional {
    pub fn n_bins(&self) -> usize {
        self.means.len()
    }

    /// Bin index of an RC value; interior boundaries belong to the lower
    /// bin, both range edges are included.
    pub fn bin_of(&self, rc: f64) -> Option<usize> {
        bin_of(&self.edges, rc)
    }

    /// The projection evaluated at a sample with this RC value: its bin's
    /// mean.
    pub fn evaluate(&self, rc: f64) -> Option<f64> {
        self.bin_of(rc).and_then(|b| self.means[b])
    }
}

fn bin_of(edges: &[f64], rc: f64) -> Option<usize> {
    let last = *edges.last().unwrap();
    if rc < edges[0] || rc > last {
        return None;
    }
    if rc == edges[0] {
        return Some(0);
    }
    let idx = edges.partition_point(|&e| e < rc) - 1;
    Some(idx.min(edges.len() - 2))
}

/// Bins `(rc, f)` samples and computes per-bin means, the empirical `P_ξ f`.
pub fn binned_projection(rc: &[f64], f: &[f64], edges: &[f64]) -> Result<BinnedConditional> {
    if rc.is_empty() || rc.len() != f.len() {
        return Err(Error::Argument(format!(
            "need equal nonzero sample lengths, got {} and {}",
            rc.len(),
            f.len()
        )));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("bin edges must be strictly increasing".into()));
    }
    let nb = edges.len() - 1;
    // Running means: averaging identical values returns them exactly, which
    // makes the estimator idempotent to the bit.
    let mut running = vec![0.0; nb];
    let mut weights = vec![0usize; nb];
    let mut excluded = 0;
    for (&r, &v) in rc.iter().zip(f) {
        match bin_of(edges, r) {
            Some(b) => {
                weights[b] += 1;
                running[b] += (v - running[b]) / weights[b] as f64;
            }
            None => excluded += 1,
        }
    }
    let means = running
        .iter()
        .zip(&weights)
        .map(|(&m, &w)| if w > 0 { Some(m) } else { None })
        .collect();
    Ok(BinnedConditional {
        edges: edges.to_vec(),
        means,
        weights,
        excluded,
    })
}

/// Gaps measured by [`projection_property_check`]; all should sit at
/// floating-point noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionPropertyReport {
    /// `max_b |P(Pf) - Pf|` over nonempty bins: exactly zero for binning.
    pub idempotence_gap: f64,
    /// `|⟨Pf, g⟩ - ⟨f, Pg⟩|` over the empirical inner product.
    pub self_adjointness_gap: f64,
    /// `max(0, ‖Pf‖ - ‖f‖)`.
    pub expansiveness_gap: f64,
}

/// Checks the projection axioms of the binned estimator on a test pair
/// `(f, g)` sampled along the same RC values.
pub fn projection_property_check(
    rc: &[f64],
    f: &[f64],
    g: &[f64],
    edges: &[f64],
) -> Result<ProjectionPropertyReport> {
    if g.len() != rc.len() {
        return Err(Error::Argument("g must have one value per sample".into()));
    }
    let pf = binned_projection(rc, f, edges)?;
    let pg = binned_projection(rc, g, edges)?;

    // Idempotence: re-project the projected values over the same samples.
    let mut rc_in = Vec::with_capacity(rc.len());
    let mut pf_in = Vec::with_capacity(rc.len());
    for &r in rc {
        if let Some(v) = pf.evaluate(r) {
            rc_in.push(r);
            pf_in.push(v);
        }
    }
    let ppf = binned_projection(&rc_in, &pf_in, edges)?;
    let mut idem = 0.0f64;
    for b in 0..pf.n_bins() {
        if let (Some(a), Some(c)) = (pf.means[b], ppf.means[b]) {
            idem = idem.max((a - c).abs());
        }
    }

    // Empirical inner products over in-range samples.
    let mut fp_g = 0.0;
    let mut f_pg = 0.0;
    let mut norm_pf = 0.0;
    let mut norm_f = 0.0;
    let mut count = 0usize;
    for s in 0..rc.len() {
        if let (Some(pfv), Some(pgv)) = (pf.evaluate(rc[s]), pg.evaluate(rc[s])) {
            fp_g += pfv * g[s];
            f_pg += f[s] * pgv;
            norm_pf += pfv * pfv;
            norm_f += f[s] * f[s];
            count += 1;
        }
    }
    let n = count.max(1) as f64;
    Ok(ProjectionPropertyReport {
        idempotence_gap: idem,
        self_adjointness_gap: ((fp_g - f_pg) / n).abs(),
        expansiveness_gap: ((norm_pf / n).sqrt() - (norm_f / n).sqrt()).max(0.0),
    })
}

/// Result of the eigenvalue-perturbation oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationOracleReport {
    pub trials: usize,
    /// Largest observed `|λ - λ_Q|`.
    pub max_gap: f64,
    /// The bound `ε/sqrt(1-ε²)`.
    pub bound: f64,
    pub violations: usize,
}

/// Randomized check of the compression bound `|λ - λ_Q| < ε/sqrt(1-ε²)`.
///
/// Each trial draws a random symmetric `T` with spectrum in `[-1, 1]`, takes
/// its eigenpair `(λ, u)` of largest `|λ|`, and builds a rank-`q` orthogonal
/// projection `Q` whose range contains a vector at angle `arcsin(δ)` from
/// `u` with `δ < ε` (so `‖Q^⊥ u‖ = δ` exactly). The spectrum of `QTQ` comes
/// from a dense eigensolver.
pub fn perturbation_oracle(
    size: usize,
    subspace_dim: usize,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<PerturbationOracleReport> {
    if subspace_dim < 1 || subspace_dim >= size {
        return Err(Error::Argument(format!(
            "subspace dim {subspace_dim} must be in [1, {size})"
        )));
    }
    if epsilon <= 0.0 || epsilon >= 1.0 {
        return Err(Error::Argument("epsilon must be in (0, 1)".into()));
    }
    let bound = epsilon / (1.0 - epsilon * epsilon).sqrt();
    let gaps: Vec<f64> = parallel::map_indexed(trials, |trial| {
        let mut rng = RngStream::new(seed, (1 << 62) | trial as u64).rng();
        // T = U Λ Uᵀ with Λ ~ U[-1,1] and orthogonal U from a Gaussian QR.
        let gauss = DMatrix::from_fn(size, size, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let u_mat = gauss.qr().q();
        let lambdas: Vec<f64> = (0..size).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let t = &u_mat
            * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lambdas.clone()))
            * u_mat.transpose();
        let pick = (0..size)
            .max_by(|&a, &b| lambdas[a].abs().partial_cmp(&lambdas[b].abs()).unwrap())
            .unwrap();
        let lambda = lambdas[pick];
        let u: Vec<f64> = u_mat.column(pick).iter().copied().collect();

        // Range(Q) = span{cosθ·u + sinθ·e1, e2, …, eq} with sinθ = δ < ε.
        let delta = epsilon * 0.999 * ((trial as f64 + 0.5) / trials as f64);
        let comp = random_orthonormal_complement(&u, subspace_dim, seed ^ 0xA5A5 ^ trial as u64);
        let mut v1: Vec<f64> = u
            .iter()
            .zip(&comp[0])
            .map(|(&ui, &ei)| (1.0 - delta * delta).sqrt() * ui + delta * ei)
            .collect();
        let n1 = dot(&v1, &v1).sqrt();
        for xv in v1.iter_mut() {
            *xv /= n1;
        }
        let mut basis = vec![v1];
        basis.extend(comp[1..].iter().cloned());

        let mut q = DMatrix::<f64>::zeros(size, size);
        for b in &basis {
            let bv = nalgebra::DVector::from_column_slice(b);
            q += &bv * bv.transpose();
        }
        let tq = &q * &t * &q;
        let (eigs, _) = dense_symmetric_eigen((&tq + tq.transpose()) * 0.5);
        eigs.iter()
            .map(|&e| (e - lambda).abs())
            .fold(f64::INFINITY, f64::min)
    });
    let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
    let violations = gaps.iter().filter(|&&g| g >= bound).count();
    Ok(PerturbationOracleReport {
        trials,
        max_gap,
        bound,
        violations,
    })
}

/// Variance-explained score of how well an eigenfunction is parametrized by
/// the reaction coordinate: `1 - E[Var(φ | RC bin)] / Var(φ)`. Near 1 means
/// `φ` is a function of the RC; a constant `φ` scores 1 by convention.
pub fn parametrization_score(phi: &[f64], rc: &Mat, bins: &[usize]) -> Result<f64> {
    if phi.len() != rc.rows() {
        return Err(Error::Argument(format!(
            "{} eigenfunction values for {} RC rows",
            phi.len(),
            rc.rows()
        )));
    }
    let partition = UlamPartition::rc_range_of(rc, bins)?;
    let n = phi.len() as f64;
    let mean = phi.iter().sum::<f64>() / n;
    let total_var = phi.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if total_var == 0.0 {
        return Ok(1.0);
    }
    let nb = partition.n_cells();
    let mut sum = vec![0.0; nb];
    let mut sumsq = vec![0.0; nb];
    let mut count = vec![0usize; nb];
    for (i, &v) in phi.iter().enumerate() {
        // rc_range_of covers the data, so assignment cannot fail.
        let b = partition
            .assign(rc.row(i))
            .expect("RC value inside its own range");
        sum[b] += v;
        sumsq[b] += v * v;
        count[b] += 1;
    }
    let mut within = 0.0;
    for b in 0..nb {
        if count[b] == 0 {
            continue;
        }
        let nb_f = count[b] as f64;
        let mb = sum[b] / nb_f;
        let var_b = (sumsq[b] / nb_f - mb * mb).max(0.0);
        within += nb_f / n * var_b;
    }
    Ok(1.0 - within / total_var)
}

/// A metastable core: a disk around a potential minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct Disk {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Disk {
    pub fn contains(&self, x: &[f64]) -> bool {
        dist_sq(&self.center, x) <= self.radius * self.radius
    }
}

/// Default core radius around each shipped potential's minima.
pub const DEFAULT_CORE_RADIUS: f64 = 0.3;

/// Default cap on committor trajectories, in time units.
pub const DEFAULT_COMMITTOR_T_MAX: f64 = 1e3;

/// Disks of radius `radius` around every minimum of the system.
pub fn default_cores(sys: &PotentialSystem, radius: f64) -> Vec<Disk> {
    sys.minima()
        .into_iter()
        .map(|center| Disk { center, radius })
        .collect()
}

/// Monte Carlo committor estimate at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct CommittorEstimate {
    pub point: Vec<f64>,
    pub cores: Vec<Disk>,
    /// `q_i`: fraction of decided replicates that hit core `i` first.
    pub q: Vec<f64>,
    pub replicates: usize,
    pub decided: usize,
    pub undecided_fraction: f64,
    /// More than half the replicates never reached a core before `t_max`.
    pub inconclusive: bool,
}

/// Estimates `q_i(x) = P[X hits core i before the others | X_0 = x]` by
/// simulating `replicates` trajectories until first core entry or `t_max`.
pub fn committor_estimate(
    sys: &PotentialSystem,
    cfg: &IntegratorConfig,
    x: &[f64],
    cores: &[Disk],
    replicates: usize,
    t_max: f64,
    seed: u64,
) -> Result<CommittorEstimate> {
    if cores.is_empty() {
        return Err(Error::Argument("need at least one core".into()));
    }
    for c in cores {
        if c.center.len() != sys.dim {
            return Err(Error::DimensionMismatch {
                expected: sys.dim,
                got: c.center.len(),
            });
        }
        if c.radius <= 0.0 {
            return Err(Error::Argument("core radius must be positive".into()));
        }
    }
    for i in 0..cores.len() {
        for j in (i + 1)..cores.len() {
            let d = dist_sq(&cores[i].center, &cores[j].center).sqrt();
            if d <= cores[i].radius + cores[j].radius {
                return Err(Error::Argument(format!("cores {i} and {j} overlap")));
            }
        }
    }
    let inside: Vec<usize> = cores
        .iter()
        .enumerate()
        .filter(|(_, c)| c.contains(x))
        .map(|(i, _)| i)
        .collect();
    if inside.len() > 1 {
        return Err(Error::Argument(
            "start point lies inside more than one core".into(),
        ));
    }
    if replicates == 0 {
        return Err(Error::Argument("need at least one replicate".into()));
    }
    let max_steps = cfg.steps_for(t_max)?;

    let hits: Vec<Option<usize>> = parallel::map_indexed(replicates, |rep| {
        if let Some(&i) = inside.first() {
            return Some(i);
        }
        let mut rng = GaussianNoise(RngStream::new(seed, (3 << 61) | rep as u64).rng());
        let mut sim = Simulator::new(sys, cfg);
        let mut state = x.to_vec();
        for _ in 0..max_steps {
            if sim.run(&mut state, 1, &mut rng).is_err() {
                return None;
            }
            for (i, c) in cores.iter().enumerate() {
                if c.contains(&state) {
                    return Some(i);
                }
            }
        }
        None
    });
    let mut counts = vec![0usize; cores.len()];
    let mut decided = 0;
    for h in hits.iter().flatten() {
        counts[*h] += 1;
        decided += 1;
    }
    let q: Vec<f64> = if decided > 0 {
        counts.iter().map(|&c| c as f64 / decided as f64).collect()
    } else {
        vec![0.0; cores.len()]
    };
    let undecided_fraction = 1.0 - decided as f64 / replicates as f64;
    Ok(CommittorEstimate {
        point: x.to_vec(),
        cores: cores.to_vec(),
        q,
        replicates,
        decided,
        undecided_fraction,
        inconclusive: undecided_fraction > 0.5,
    })
}
