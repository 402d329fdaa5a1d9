//! Embedding of transition densities through observable averages.
//!
//! For observables `η_1..η_k` the embedding of the lag-`t` transition density
//! started at `x` is the vector of Koopman values
//! `(E[η_1(X_t) | X_0=x], …, E[η_k(X_t) | X_0=x])`, estimated by Monte Carlo
//! over burst endpoints. With linear observables `η_i(x) = a_i·x` this is a
//! linear image of the conditional mean, and the embedded cloud of all
//! evaluation points traces out the embedded transition manifold.
//!
//! Means and variances accumulate in replicate order (Welford), so the dense
//! route over a stored [`BurstEnsemble`] and the streaming route that never
//! materializes endpoints produce bit-identical rows.

use crate::dynamics::{GaussianNoise, IntegratorConfig, PotentialSystem, RngStream, Simulator};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::parallel;
use crate::sampling::{BurstEnsemble, EvaluationSet};
use rand::Rng;

/// How an observable set was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservableKind {
    LinearRandom,
    LinearExplicit,
}

/// A set of `k` linear observables `η_i(x) = A_i · x` given by the rows of a
/// `k x n` coefficient matrix. For a target manifold dimension `r`, `k`
/// should be `2r + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSet {
    pub kind: ObservableKind,
    /// `k x n` coefficients, one observable per row.
    pub coefficients: Mat,
}

impl ObservableSet {
    pub fn k(&self) -> usize {
        self.coefficients.rows()
    }

    pub fn dim(&self) -> usize {
        self.coefficients.cols()
    }

    /// Evaluates all observables at `x` into `out`.
    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.coefficients.row(i);
            let mut acc = 0.0;
            for j in 0..row.len() {
                acc += row[j] * x[j];
            }
            *o = acc;
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k()];
        self.eval_into(x, &mut out);
        out
    }
}

/// Effective rank requirement: `min(k, n)`. More observables than state
/// dimensions are allowed (and used: three linear observables on a planar
/// system); what is rejected is a coefficient matrix whose rows span less
/// than the maximum possible.
fn required_rank(k: usize, n: usize) -> usize {
    k.min(n)
}

fn matrix_rank(m: &Mat) -> usize {
    let dm = nalgebra::DMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j));
    dm.rank(1e-10)
}

/// Builds a set of `k` explicit linear observables, rejecting coefficient
/// matrices that are rank deficient.
pub fn make_observables_explicit(coefficients: Mat) -> Result<ObservableSet> {
    if coefficients.rows() == 0 || coefficients.cols() == 0 {
        return Err(Error::Argument("observable matrix must be nonempty".into()));
    }
    let need = required_rank(coefficients.rows(), coefficients.cols());
    let got = matrix_rank(&coefficients);
    if got < need {
        return Err(Error::Argument(format!(
            "observable coefficients are rank deficient: rank {got} < {need}"
        )));
    }
    Ok(ObservableSet {
        kind: ObservableKind::LinearExplicit,
        coefficients,
    })
}

/// Draws `k` random linear observables on `R^n` with coefficients i.i.d.
/// uniform on `[-1, 1]`, redrawing (up to 100 times) until full rank.
pub fn make_observables_random(k: usize, n: usize, seed: u64) -> Result<ObservableSet> {
    if k == 0 || n == 0 {
        return Err(Error::Argument("need k >= 1 and n >= 1".into()));
    }
    let mut rng = RngStream::new(seed, (1 << 63) | 3).rng();
    for attempt in 0..100 {
        let mut coeff = Mat::zeros(k, n);
        for i in 0..k {
            for j in 0..n {
                coeff.set(i, j, rng.gen_range(-1.0..=1.0));
            }
        }
        if matrix_rank(&coeff) >= required_rank(k, n) {
            let _ = attempt;
            return Ok(ObservableSet {
                kind: ObservableKind::LinearRandom,
                coefficients: coeff,
            });
        }
    }
    Err(Error::ImprobableFailure {
        what: "full-rank random observable matrix".into(),
        attempts: 100,
    })
}

/// The observables used throughout the planar experiments; coefficients were
/// drawn once uniformly from `[-1, 1]`.
pub fn reference_observables_2d() -> ObservableSet {
    make_observables_explicit(
        Mat::from_rows(&[
            vec![-0.2630, -0.3186],
            vec![-0.2246, 0.0969],
            vec![0.1564, 0.0783],
        ])
        .unwrap(),
    )
    .unwrap()
}

/// Streaming mean/variance accumulator (Welford), one slot per observable.
#[derive(Debug, Clone)]
pub(crate) struct MeanVar {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MeanVar {
    pub(crate) fn new(k: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; k],
            m2: vec![0.0; k],
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, values: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for (i, &v) in values.iter().enumerate() {
            let delta = v - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (v - self.mean[i]);
        }
    }

    pub(crate) fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Standard error of the mean per component; zero for a single sample.
    pub(crate) fn stderr(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        let n = self.count as f64;
        self.m2
            .iter()
            .map(|&m2| (m2 / (n - 1.0) / n).sqrt())
            .collect()
    }
}

/// Monte Carlo estimate of the Koopman values `E[η_i(X_t) | X_0 = start]`
/// over one burst ensemble, with standard errors.
pub fn koopman_estimate(obs: &ObservableSet, ensemble: &BurstEnsemble) -> Result<(Vec<f64>, Vec<f64>)> {
    if ensemble.replicates() == 0 {
        return Err(Error::Argument("empty burst ensemble".into()));
    }
    if ensemble.endpoints.cols() != obs.dim() {
        return Err(Error::DimensionMismatch {
            expected: obs.dim(),
            got: ensemble.endpoints.cols(),
        });
    }
    let mut acc = MeanVar::new(obs.k());
    let mut vals = vec![0.0; obs.k()];
    for rep in 0..ensemble.replicates() {
        obs.eval_into(ensemble.endpoints.row(rep), &mut vals);
        acc.push(&vals);
    }
    Ok((acc.mean().to_vec(), acc.stderr()))
}

/// Embedded evaluation points: one row `ẑ_i` per point, plus Monte Carlo
/// standard errors and back-references to the evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedCloud {
    /// `ℓ x k` embedded coordinates.
    pub z: Mat,
    /// `ℓ x k` standard errors of each coordinate.
    pub stderr: Mat,
    /// The evaluation points the rows refer back to.
    pub source: EvaluationSet,
    pub lag: f64,
    pub replicates: usize,
}

impl EmbeddedCloud {
    pub fn len(&self) -> usize {
        self.z.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn k(&self) -> usize {
        self.z.cols()
    }
}

/// Stacks Koopman estimates for a list of burst ensembles, preserving
/// evaluation-point order.
pub fn embed_cloud(
    obs: &ObservableSet,
    bursts: &[BurstEnsemble],
    source: EvaluationSet,
) -> Result<EmbeddedCloud> {
    if bursts.is_empty() {
        return Err(Error::Argument("no burst ensembles".into()));
    }
    if bursts.len() != source.len() {
        return Err(Error::Argument(format!(
            "{} ensembles for {} evaluation points",
            bursts.len(),
            source.len()
        )));
    }
    let lag = bursts[0].lag;
    let replicates = bursts[0].replicates();
    for b in bursts {
        if b.lag != lag {
            return Err(Error::Argument(format!(
                "inconsistent burst lags: {} vs {lag}",
                b.lag
            )));
        }
    }
    let k = obs.k();
    let mut z = Mat::zeros(bursts.len(), k);
    let mut se = Mat::zeros(bursts.len(), k);
    for (i, b) in bursts.iter().enumerate() {
        let (mean, stderr) = koopman_estimate(obs, b)?;
        z.row_mut(i).copy_from_slice(&mean);
        se.row_mut(i).copy_from_slice(&stderr);
    }
    Ok(EmbeddedCloud {
        z,
        stderr: se,
        source,
        lag,
        replicates,
    })
}

/// Burst sampling fused with observable averaging: endpoints are folded into
/// the running estimates and never stored. Bit-identical to sampling dense
/// ensembles and calling [`embed_cloud`].
pub fn embed_streaming(
    sys: &PotentialSystem,
    cfg: &IntegratorConfig,
    eval: &EvaluationSet,
    obs: &ObservableSet,
    replicates: usize,
    t: f64,
    seed: u64,
) -> Result<EmbeddedCloud> {
    if replicates == 0 {
        return Err(Error::Argument("need at least one replicate".into()));
    }
    if eval.dim() != sys.dim {
        return Err(Error::DimensionMismatch {
            expected: sys.dim,
            got: eval.dim(),
        });
    }
    if obs.dim() != sys.dim {
        return Err(Error::DimensionMismatch {
            expected: sys.dim,
            got: obs.dim(),
        });
    }
    let steps = cfg.steps_for(t)?;
    let k = obs.k();
    let rows = parallel::map_indexed(eval.len(), |p| -> Result<(Vec<f64>, Vec<f64>)> {
        let start = eval.points.row(p);
        let mut sim = Simulator::new(sys, cfg);
        let mut acc = MeanVar::new(k);
        let mut x = vec![0.0; sys.dim];
        let mut vals = vec![0.0; k];
        for rep in 0..replicates {
            x.copy_from_slice(start);
            let mut src = GaussianNoise(RngStream::for_burst(seed, p, rep).rng());
            sim.run(&mut x, steps, &mut src).map_err(|e| match e {
                Error::Instability { step, .. } => Error::BurstInstability {
                    point: p,
                    replicate: rep,
                    step,
                },
                other => other,
            })?;
            obs.eval_into(&x, &mut vals);
            acc.push(&vals);
        }
        Ok((acc.mean().to_vec(), acc.stderr()))
    });
    let mut z = Mat::zeros(eval.len(), k);
    let mut se = Mat::zeros(eval.len(), k);
    for (i, r) in rows.into_iter().enumerate() {
        let (mean, stderr) = r?;
        z.row_mut(i).copy_from_slice(&mean);
        se.row_mut(i).copy_from_slice(&stderr);
    }
    Ok(EmbeddedCloud {
        z,
        stderr: se,
        source: eval.clone(),
        lag: t,
        replicates,
    })
}
