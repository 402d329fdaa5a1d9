//! Evaluation point sets, short-burst ensembles, and equilibrium
//! trajectories.
//!
//! A burst ensemble holds the endpoints of `M` independent lag-`t`
//! realizations started from one point — the empirical stand-in for the
//! transition density `p^t(x,·)`. Burst replicates draw from per-`(point,
//! replicate)` noise streams, so results are bit-identical across any
//! parallel schedule.

use crate::dynamics::{
    GaussianNoise, IntegratorConfig, NoiseSource, PotentialSystem, RngStream, Simulator,
};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::parallel;
use rand::prelude::SliceRandom;

/// Hard cap on evaluation-set size.
pub const MAX_POINTS: usize = 10_000_000;

/// Stream id reserved for equilibrium trajectories; burst streams pack
/// `(point, replicate)` into the low 2x32 bits and never reach it.
const STREAM_EQUILIBRIUM: u64 = (1 << 63) | 1;
const STREAM_SUBSAMPLE: u64 = (1 << 63) | 2;

/// How an evaluation set was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Grid {
        rect: Vec<(f64, f64)>,
        shape: Vec<usize>,
    },
    TrajectorySubsample {
        count: usize,
    },
    Explicit,
}

/// Points at which the reaction coordinate is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSet {
    pub points: Mat,
    pub provenance: Provenance,
}

impl EvaluationSet {
    pub fn explicit(points: Mat) -> Self {
        Self {
            points,
            provenance: Provenance::Explicit,
        }
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }
}

/// Tensor-product lattice over `rect`, both endpoints included per axis,
/// row-major with the last axis varying fastest.
pub fn make_grid(rect: &[(f64, f64)], shape: &[usize]) -> Result<EvaluationSet> {
    if rect.len() != shape.len() || rect.is_empty() {
        return Err(Error::Argument(
            "grid rect and shape must have equal, nonzero length".into(),
        ));
    }
    let mut total: usize = 1;
    for (axis, (&(lo, hi), &count)) in rect.iter().zip(shape).enumerate() {
        if !(lo < hi) {
            return Err(Error::Argument(format!(
                "grid axis {axis}: need lo < hi, got [{lo}, {hi}]"
            )));
        }
        if count < 2 {
            return Err(Error::Argument(format!(
                "grid axis {axis}: need at least 2 points, got {count}"
            )));
        }
        total = total
            .checked_mul(count)
            .filter(|&t| t <= MAX_POINTS)
            .ok_or(Error::TooLarge {
                count: usize::MAX,
                max: MAX_POINTS,
            })?;
    }
    let dim = rect.len();
    let mut points = Mat::zeros(total, dim);
    let mut idx = vec![0usize; dim];
    for i in 0..total {
        let row = points.row_mut(i);
        for a in 0..dim {
            let (lo, hi) = rect[a];
            row[a] = lo + (hi - lo) * idx[a] as f64 / (shape[a] - 1) as f64;
        }
        // Increment the row-major counter (last axis fastest).
        for a in (0..dim).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    Ok(EvaluationSet {
        points,
        provenance: Provenance::Grid {
            rect: rect.to_vec(),
            shape: shape.to_vec(),
        },
    })
}

/// Endpoints of `M` lag-`t` realizations from one start point.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstEnsemble {
    pub start: Vec<f64>,
    pub lag: f64,
    /// `M x n`, one endpoint per row, in replicate order.
    pub endpoints: Mat,
}

impl BurstEnsemble {
    pub fn replicates(&self) -> usize {
        self.endpoints.rows()
    }
}

/// One burst ensemble per evaluation point, `replicates` endpoints each.
/// Deterministic per `(seed, point index, replicate index)`; points are
/// processed in parallel with results identical to serial execution.
pub fn sample_bursts(
    sys: &PotentialSystem,
    cfg: &IntegratorConfig,
    eval: &EvaluationSet,
    replicates: usize,
    t: f64,
    seed: u64,
) -> Result<Vec<BurstEnsemble>> {
    sample_bursts_with(sys, cfg, eval, replicates, t, |point, rep| {
        GaussianNoise(RngStream::for_burst(seed, point, rep).rng())
    })
}

/// As [`sample_bursts`] with a caller-supplied noise source per
/// `(point, replicate)`; zero noise yields the deterministic gradient flow.
pub fn sample_bursts_with<N, F>(
    sys: &PotentialSystem,
    cfg: &IntegratorConfig,
    eval: &EvaluationSet,
    replicates: usize,
    t: f64,
    noise: F,
) -> Result<Vec<BurstEnsemble>>
where
    N: NoiseSource,
    F: Fn(usize, usize) -> N + Sync,
{
    if replicates == 0 {
        return Err(Error::Argument("need at least one replicate".into()));
    }
    if eval.dim() != sys.dim {
        return Err(Error::DimensionMismatch {
            expected: sys.dim,
            got: eval.dim(),
        });
    }
    let steps = cfg.steps_for(t)?;
    let results = parallel::map_indexed(eval.len(), |p| -> Result<BurstEnsemble> {
        let start = eval.points.row(p);
        let mut endpoints = Mat::zeros(replicates, sys.dim);
        let mut sim = Simulator::new(sys, cfg);
        for rep in 0..replicates {
            let row = endpoints.row_mut(rep);
            row.copy_from_slice(start);
            let mut src = noise(p, rep);
            sim.run(row, steps, &mut src).map_err(|e| match e {
                Error::Instability { step, .. } => Error::BurstInstability {
                    point: p,
                    replicate: rep,
                    step,
                },
                other => other,
            })?;
        }
        Ok(BurstEnsemble {
            start: start.to_vec(),
            lag: t,
            endpoints,
        })
    });
    results.into_iter().collect()
}

/// States of a long equilibrated trajectory, recorded every `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumTrajectory {
    /// `N x n`; row `j` is the state after `j+1` tau-steps from `x0`.
    pub states: Mat,
    pub tau: f64,
    pub x0: Vec<f64>,
    pub seed: u64,
}

impl EquilibriumTrajectory {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.cols()
    }
}

/// Runs a single trajectory of `n_states` recorded states with recording
/// step `tau` (a multiple of the integrator step).
pub fn run_equilibrium(
    sys: &PotentialSystem,
    cfg: &IntegratorConfig,
    x0: &[f64],
    n_states: usize,
    tau: f64,
    seed: u64,
) -> Result<EquilibriumTrajectory> {
    if x0.len() != sys.dim {
        return Err(Error::DimensionMismatch {
            expected: sys.dim,
            got: x0.len(),
        });
    }
    if n_states == 0 {
        return Err(Error::Argument("need at least one trajectory state".into()));
    }
    let inner = cfg.steps_for(tau)?;
    let mut src = GaussianNoise(RngStream::new(seed, STREAM_EQUILIBRIUM).rng());
    let mut sim = Simulator::new(sys, cfg);
    let mut states = Mat::zeros(n_states, sys.dim);
    let mut x = x0.to_vec();
    for j in 0..n_states {
        sim.run(&mut x, inner, &mut src)
            .map_err(|e| match e {
                Error::Instability { step, limit } => Error::Instability {
                    step: j * inner + step,
                    limit,
                },
                other => other,
            })?;
        states.row_mut(j).copy_from_slice(&x);
    }
    Ok(EquilibriumTrajectory {
        states,
        tau,
        x0: x0.to_vec(),
        seed,
    })
}

/// Subsampling strategy for [`subsample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsampleStrategy {
    /// Every `floor(N/k)`-th state starting at the first.
    Stride,
    /// `k` distinct states drawn uniformly, kept in trajectory order.
    UniformRandom { seed: u64 },
}

/// Reduces a trajectory to `k` evaluation points.
pub fn subsample(
    traj: &EquilibriumTrajectory,
    k: usize,
    strategy: SubsampleStrategy,
) -> Result<EvaluationSet> {
    let n = traj.len();
    if k == 0 || k > n {
        return Err(Error::Argument(format!(
            "subsample count {k} must be in [1, {n}]"
        )));
    }
    let indices: Vec<usize> = match strategy {
        SubsampleStrategy::Stride => {
            let stride = n / k;
            (0..k).map(|i| i * stride).collect()
        }
        SubsampleStrategy::UniformRandom { seed } => {
            let mut rng = RngStream::new(seed, STREAM_SUBSAMPLE).rng();
            let mut all: Vec<usize> = (0..n).collect();
            all.partial_shuffle(&mut rng, k);
            let mut chosen: Vec<usize> = all[..k].to_vec();
            chosen.sort_unstable();
            chosen
        }
    };
    let mut points = Mat::zeros(k, traj.dim());
    for (out, &i) in indices.iter().enumerate() {
        points.row_mut(out).copy_from_slice(traj.states.row(i));
    }
    Ok(EvaluationSet {
        points,
        provenance: Provenance::TrajectorySubsample { count: k },
    })
}
