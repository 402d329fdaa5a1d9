//! Potential-energy systems and the overdamped Langevin integrator.
//!
//! The dynamics is `dX_t = -∇V(X_t) dt + sqrt(2 β⁻¹) dW_t` with a fixed
//! registry of analytic potentials. The Euler–Maruyama step is
//! `x' = x - ∇V(x) h + sqrt(2h/β) ξ` with `ξ` i.i.d. standard normal.
//!
//! Noise is drawn from counter-based streams: a `(seed, stream)` pair fully
//! determines a noise sequence, so trajectories are bit-reproducible no
//! matter how work is scheduled across threads.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Any coordinate above this magnitude aborts a trajectory as unstable.
/// All shipped potentials confine the dynamics to order-one boxes.
pub const BLOWUP_LIMIT: f64 = 1e6;

/// Analytic potential shapes. All formulas are closed-form; gradients are
/// exact.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// `V(x) = (x1²-1)² + 2(x1²+x2-1)²` — two wells at `(±1, 0)` joined by a
    /// curved transition path. Requires `dim = 2`.
    CurvedDoubleWell,
    /// `V(x) = cos(k·atan2(x2,x1)) + c(|x12|-1)² + c Σ_{j≥3} xj²` — `k` wells
    /// along the unit circle with radial confinement `c`. Requires `dim ≥ 2`;
    /// singular at `x1 = x2 = 0`.
    Circular { wells: u32, confinement: f64 },
    /// `V(x) = (x1²-1)² + (x2²-1)² + 5 e^{-5(x1²+x2²)}` — four wells at
    /// `(±1,±1)` with a central hill confining transitions to the edges.
    QuadHilly,
    /// `V(x) = 1 - Σ_c e^{-10((x1∓1)²+(x2∓1)²)²}` — four wells at `(±1,±1)`
    /// in an otherwise flat landscape.
    QuadFlat,
    /// `V(x) = ‖x‖²/2` in any dimension.
    Harmonic,
    /// `V ≡ 0` — driftless diffusion.
    Zero,
}

/// A potential together with its state dimension and inverse temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSystem {
    pub potential: Potential,
    pub dim: usize,
    pub beta: f64,
}

impl PotentialSystem {
    pub fn new(potential: Potential, dim: usize, beta: f64) -> Result<Self> {
        if beta <= 0.0 || !beta.is_finite() {
            return Err(Error::Argument(format!(
                "inverse temperature must be positive, got {beta}"
            )));
        }
        let min_dim = match potential {
            Potential::CurvedDoubleWell | Potential::QuadHilly | Potential::QuadFlat => {
                if dim != 2 {
                    return Err(Error::Argument(format!(
                        "{} requires dim = 2, got {dim}",
                        potential_name(&potential)
                    )));
                }
                2
            }
            Potential::Circular { wells, .. } => {
                if wells == 0 {
                    return Err(Error::Argument("circular potential needs wells >= 1".into()));
                }
                2
            }
            Potential::Harmonic | Potential::Zero => 1,
        };
        if dim < min_dim {
            return Err(Error::Argument(format!(
                "{} requires dim >= {min_dim}, got {dim}",
                potential_name(&potential)
            )));
        }
        Ok(Self {
            potential,
            dim,
            beta,
        })
    }

    pub fn curved_double_well(beta: f64) -> Result<Self> {
        Self::new(Potential::CurvedDoubleWell, 2, beta)
    }

    /// Circular `wells`-well system with the standard confinement strength 10.
    pub fn circular(wells: u32, dim: usize, beta: f64) -> Result<Self> {
        Self::new(
            Potential::Circular {
                wells,
                confinement: 10.0,
            },
            dim,
            beta,
        )
    }

    pub fn quad_hilly(beta: f64) -> Result<Self> {
        Self::new(Potential::QuadHilly, 2, beta)
    }

    pub fn quad_flat(beta: f64) -> Result<Self> {
        Self::new(Potential::QuadFlat, 2, beta)
    }

    pub fn harmonic(dim: usize, beta: f64) -> Result<Self> {
        Self::new(Potential::Harmonic, dim, beta)
    }

    pub fn zero(dim: usize, beta: f64) -> Result<Self> {
        Self::new(Potential::Zero, dim, beta)
    }

    /// Look up a potential by registry name, e.g. from an experiment config.
    /// `params` carries shape parameters: `[wells]` or `[wells, confinement]`
    /// for `"circular"`; empty for every other potential.
    pub fn from_name(name: &str, params: &[f64], dim: usize, beta: f64) -> Result<Self> {
        let potential = match name {
            "curved_double_well" => Potential::CurvedDoubleWell,
            "circular" => {
                let wells = *params.first().ok_or_else(|| {
                    Error::Argument("circular potential needs params = [wells, ...]".into())
                })? as u32;
                let confinement = params.get(1).copied().unwrap_or(10.0);
                Potential::Circular { wells, confinement }
            }
            "quad_hilly" => Potential::QuadHilly,
            "quad_flat" => Potential::QuadFlat,
            "harmonic" => Potential::Harmonic,
            "zero" => Potential::Zero,
            other => {
                return Err(Error::Argument(format!(
                    "unknown potential '{other}' (known: curved_double_well, circular, \
                     quad_hilly, quad_flat, harmonic, zero)"
                )))
            }
        };
        Self::new(potential, dim, beta)
    }

    pub fn name(&self) -> &'static str {
        potential_name(&self.potential)
    }

    /// Locations of the potential minima, used as committor cores and for
    /// well-membership bookkeeping. Empty for the zero potential.
    pub fn minima(&self) -> Vec<Vec<f64>> {
        match &self.potential {
            Potential::CurvedDoubleWell => vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
            Potential::Circular { wells, .. } => {
                let k = *wells as usize;
                (0..k)
                    .map(|j| {
                        let theta = (2 * j + 1) as f64 * std::f64::consts::PI / k as f64;
                        let mut x = vec![0.0; self.dim];
                        x[0] = theta.cos();
                        x[1] = theta.sin();
                        x
                    })
                    .collect()
            }
            Potential::QuadHilly | Potential::QuadFlat => vec![
                vec![1.0, 1.0],
                vec![1.0, -1.0],
                vec![-1.0, 1.0],
                vec![-1.0, -1.0],
            ],
            Potential::Harmonic => vec![vec![0.0; self.dim]],
            Potential::Zero => vec![],
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

fn potential_name(p: &Potential) -> &'static str {
    match p {
        Potential::CurvedDoubleWell => "curved_double_well",
        Potential::Circular { .. } => "circular",
        Potential::QuadHilly => "quad_hilly",
        Potential::QuadFlat => "quad_flat",
        Potential::Harmonic => "harmonic",
        Potential::Zero => "zero",
    }
}

/// `V(x)`.
pub fn potential_value(sys: &PotentialSystem, x: &[f64]) -> Result<f64> {
    sys.check_dim(x)?;
    match &sys.potential {
        Potential::CurvedDoubleWell => {
            let a = x[0] * x[0] - 1.0;
            let b = x[0] * x[0] + x[1] - 1.0;
            Ok(a * a + 2.0 * b * b)
        }
        Potential::Circular { wells, confinement } => {
            let rho2 = x[0] * x[0] + x[1] * x[1];
            if rho2 == 0.0 {
                return Err(Error::SingularPoint {
                    potential: "circular",
                });
            }
            let theta = x[1].atan2(x[0]);
            let rho = rho2.sqrt();
            let radial = rho - 1.0;
            let tail: f64 = x[2..].iter().map(|&v| v * v).sum();
            Ok((*wells as f64 * theta).cos() + confinement * (radial * radial + tail))
        }
        Potential::QuadHilly => {
            let a = x[0] * x[0] - 1.0;
            let b = x[1] * x[1] - 1.0;
            Ok(a * a + b * b + 5.0 * (-5.0 * (x[0] * x[0] + x[1] * x[1])).exp())
        }
        Potential::QuadFlat => {
            let mut v = 1.0;
            for (cx, cy) in QUAD_CENTERS {
                let s = (x[0] - cx) * (x[0] - cx) + (x[1] - cy) * (x[1] - cy);
                v -= (-10.0 * s * s).exp();
            }
            Ok(v)
        }
        Potential::Harmonic => Ok(0.5 * x.iter().map(|&v| v * v).sum::<f64>()),
        Potential::Zero => Ok(0.0),
    }
}

const QUAD_CENTERS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];

/// `∇V(x)`.
pub fn potential_gradient(sys: &PotentialSystem, x: &[f64]) -> Result<Vec<f64>> {
    sys.check_dim(x)?;
    let mut g = vec![0.0; sys.dim];
    gradient_into(sys, x, &mut g)?;
    Ok(g)
}

pub(crate) fn gradient_into(sys: &PotentialSystem, x: &[f64], g: &mut [f64]) -> Result<()> {
    match &sys.potential {
        Potential::CurvedDoubleWell => {
            let b = x[0] * x[0] + x[1] - 1.0;
            g[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0) + 8.0 * x[0] * b;
            g[1] = 4.0 * b;
        }
        Potential::Circular { wells, confinement } => {
            let rho2 = x[0] * x[0] + x[1] * x[1];
            if rho2 == 0.0 {
                return Err(Error::SingularPoint {
                    potential: "circular",
                });
            }
            let k = *wells as f64;
            let theta = x[1].atan2(x[0]);
            let rho = rho2.sqrt();
            let angular = -k * (k * theta).sin();
            let radial = 2.0 * confinement * (rho - 1.0) / rho;
            // ∂θ/∂x1 = -x2/ρ², ∂θ/∂x2 = x1/ρ².
            g[0] = angular * (-x[1] / rho2) + radial * x[0];
            g[1] = angular * (x[0] / rho2) + radial * x[1];
            for j in 2..x.len() {
                g[j] = 2.0 * confinement * x[j];
            }
        }
        Potential::QuadHilly => {
            let bump = -50.0 * (-5.0 * (x[0] * x[0] + x[1] * x[1])).exp();
            g[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0) + bump * x[0];
            g[1] = 4.0 * x[1] * (x[1] * x[1] - 1.0) + bump * x[1];
        }
        Potential::QuadFlat => {
            g[0] = 0.0;
            g[1] = 0.0;
            for (cx, cy) in QUAD_CENTERS {
                let dx = x[0] - cx;
                let dy = x[1] - cy;
                let s = dx * dx + dy * dy;
                let w = 40.0 * s * (-10.0 * s * s).exp();
                g[0] += w * dx;
                g[1] += w * dy;
            }
        }
        Potential::Harmonic => g.copy_from_slice(x),
        Potential::Zero => g.fill(0.0),
    }
    Ok(())
}

/// Time-stepping scheme. Only Euler–Maruyama is shipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    EulerMaruyama,
}

/// Integrator step size and scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub h: f64,
    pub scheme: Scheme,
}

impl IntegratorConfig {
    pub fn new(h: f64) -> Result<Self> {
        if h <= 0.0 || !h.is_finite() {
            return Err(Error::Argument(format!("step size must be positive, got {h}")));
        }
        Ok(Self {
            h,
            scheme: Scheme::EulerMaruyama,
        })
    }

    /// Number of steps covering time `t`, which must be a positive integer
    /// multiple of `h` (up to 1e-9 relative slack).
    pub fn steps_for(&self, t: f64) -> Result<usize> {
        if t <= 0.0 || !t.is_finite() {
            return Err(Error::Argument(format!("lag time must be positive, got {t}")));
        }
        let m = (t / self.h).round();
        if (m * self.h - t).abs() > 1e-9 * t.max(1.0) || m < 1.0 {
            return Err(Error::Argument(format!(
                "lag time {t} is not an integer multiple of the step size {}",
                self.h
            )));
        }
        Ok(m as usize)
    }
}

impl Default for IntegratorConfig {
    /// Step size `1e-2`, the default used by all shipped experiments.
    fn default() -> Self {
        Self {
            h: 1e-2,
            scheme: Scheme::EulerMaruyama,
        }
    }
}

/// One logical noise stream. Identical `(seed, stream)` pairs produce
/// bit-identical noise regardless of execution order or thread count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Stream for replicate `replicate` of evaluation point `point`.
    /// Point and replicate indices each must fit in 32 bits.
    pub fn for_burst(seed: u64, point: usize, replicate: usize) -> Self {
        debug_assert!(point < (1 << 32) && replicate < (1 << 32));
        Self {
            seed,
            stream: ((point as u64) << 32) | replicate as u64,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Mixes a stage tag into a base seed so different pipeline stages never
/// share streams.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    splitmix64(base ^ splitmix64(tag))
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Source of per-step noise vectors.
pub trait NoiseSource {
    fn fill(&mut self, buf: &mut [f64]);
}

/// Standard normal noise from any RNG.
pub struct GaussianNoise<R: Rng>(pub R);

impl<R: Rng> NoiseSource for GaussianNoise<R> {
    fn fill(&mut self, buf: &mut [f64]) {
        for b in buf.iter_mut() {
            *b = self.0.sample(StandardNormal);
        }
    }
}

/// All-zero noise; deterministic gradient flow for tests.
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn fill(&mut self, buf: &mut [f64]) {
        buf.fill(0.0);
    }
}

/// One Euler–Maruyama step `x' = x - ∇V(x) h + sqrt(2h/β) ξ`.
pub fn em_step(
    sys: &PotentialSystem,
    cfg: &IntegratorConfig,
    x: &[f64],
    noise: &[f64],
) -> Result<Vec<f64>> {
    sys.check_dim(x)?;
    sys.check_dim(noise)?;
    let mut state = x.to_vec();
    let mut grad = vec![0.0; sys.dim];
    step_in_place(sys, cfg, &mut state, noise, &mut grad, 0)?;
    Ok(state)
}

#[inline]
fn step_in_place(
    sys: &PotentialSystem,
    cfg: &IntegratorConfig,
    x: &mut [f64],
    noise: &[f64],
    grad: &mut [f64],
    step: usize,
) -> Result<()> {
    gradient_into(sys, x, grad)?;
    let scale = (2.0 * cfg.h / sys.beta).sqrt();
    let mut ok = true;
    for i in 0..x.len() {
        x[i] += -grad[i] * cfg.h + scale * noise[i];
        ok &= x[i].abs() <= BLOWUP_LIMIT && x[i].is_finite();
    }
    if !ok {
        return Err(Error::Instability {
            step,
            limit: BLOWUP_LIMIT,
        });
    }
    Ok(())
}

/// Reusable integrator owning its scratch buffers.
pub struct Simulator<'a> {
    sys: &'a PotentialSystem,
    cfg: &'a IntegratorConfig,
    grad: Vec<f64>,
    noise: Vec<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(sys: &'a PotentialSystem, cfg: &'a IntegratorConfig) -> Self {
        Self {
            sys,
            cfg,
            grad: vec![0.0; sys.dim],
            noise: vec![0.0; sys.dim],
        }
    }

    /// Advances `x` in place by `steps` EM steps, drawing noise from `src`.
    pub fn run(
        &mut self,
        x: &mut [f64],
        steps: usize,
        src: &mut impl NoiseSource,
    ) -> Result<()> {
        for step in 0..steps {
            src.fill(&mut self.noise);
            step_in_place(self.sys, self.cfg, x, &self.noise, &mut self.grad, step)?;
        }
        Ok(())
    }
}

/// Endpoint of `t / h` EM steps started at `x0`, with noise from `stream`.
/// Deterministic: the same stream always yields the same endpoint.
pub fn simulate_endpoint(
    sys: &PotentialSystem,
    cfg: &IntegratorConfig,
    x0: &[f64],
    t: f64,
    stream: RngStream,
) -> Result<Vec<f64>> {
    simulate_endpoint_with(sys, cfg, x0, t, &mut GaussianNoise(stream.rng()))
}

/// As [`simulate_endpoint`] with an explicit noise source (test hook).
pub fn simulate_endpoint_with(
    sys: &PotentialSystem,
    cfg: &IntegratorConfig,
    x0: &[f64],
    t: f64,
    src: &mut impl NoiseSource,
) -> Result<Vec<f64>> {
    sys.check_dim(x0)?;
    let steps = cfg.steps_for(t)?;
    let mut x = x0.to_vec();
    Simulator::new(sys, cfg).run(&mut x, steps, src)?;
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_gradient(sys: &PotentialSystem, x: &[f64], h: f64) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            g[i] = (potential_value(sys, &xp).unwrap() - potential_value(sys, &xm).unwrap())
                / (2.0 * h);
        }
        g
    }

    fn all_systems() -> Vec<PotentialSystem> {
        vec![
            PotentialSystem::curved_double_well(0.5).unwrap(),
            PotentialSystem::circular(7, 2, 0.5).unwrap(),
            PotentialSystem::circular(7, 10, 0.5).unwrap(),
            PotentialSystem::quad_hilly(0.5).unwrap(),
            PotentialSystem::quad_flat(0.5).unwrap(),
            PotentialSystem::harmonic(3, 1.0).unwrap(),
            PotentialSystem::zero(4, 1.0).unwrap(),
        ]
    }

    #[test]
    fn double_well_minima_have_zero_value_and_gradient() {
        let sys = PotentialSystem::curved_double_well(0.5).unwrap();
        for x in [[1.0, 0.0], [-1.0, 0.0]] {
            assert_eq!(potential_value(&sys, &x).unwrap(), 0.0);
            let g = potential_gradient(&sys, &x).unwrap();
            assert_eq!(g, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn quad_flat_value_at_well_center() {
        // Direct evaluation at (1,1): the own-well bump contributes exp(0)=1,
        // the two adjacent centers sit at squared distance 4 and the opposite
        // one at 8, giving 1 - 1 - 2 e^{-10·16} - e^{-10·64}.
        let sys = PotentialSystem::quad_flat(0.5).unwrap();
        let v = potential_value(&sys, &[1.0, 1.0]).unwrap();
        let expected = -(2.0 * (-160.0f64).exp() + (-640.0f64).exp());
        assert!(v < 0.0);
        assert!((v - expected).abs() <= 1e-84, "v = {v:e}");
    }

    #[test]
    fn circular_is_singular_at_origin_only() {
        let sys = PotentialSystem::circular(7, 2, 0.5).unwrap();
        assert!(matches!(
            potential_value(&sys, &[0.0, 0.0]),
            Err(Error::SingularPoint { .. })
        ));
        assert!(matches!(
            potential_gradient(&sys, &[0.0, 0.0]),
            Err(Error::SingularPoint { .. })
        ));
        assert!(potential_value(&sys, &[1e-8, 0.0]).unwrap().is_finite());
    }

    #[test]
    fn circular_minima_lie_on_unit_circle_between_barriers() {
        let sys = PotentialSystem::circular(7, 2, 0.5).unwrap();
        for m in sys.minima() {
            let v = potential_value(&sys, &m).unwrap();
            assert!((v + 1.0).abs() < 1e-12, "minimum value {v}");
            let g = potential_gradient(&sys, &m).unwrap();
            for gi in g {
                assert!(gi.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_argument_error() {
        let sys = PotentialSystem::curved_double_well(0.5).unwrap();
        assert!(matches!(
            potential_value(&sys, &[1.0, 0.0, 0.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for sys in all_systems() {
            let mut checked = 0;
            while checked < 100 {
                let x: Vec<f64> = (0..sys.dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
                if matches!(sys.potential, Potential::Circular { .. })
                    && (x[0] * x[0] + x[1] * x[1]).sqrt() < 0.2
                {
                    continue;
                }
                let g = potential_gradient(&sys, &x).unwrap();
                let fd = fd_gradient(&sys, &x, 1e-5);
                let scale = g.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
                for i in 0..sys.dim {
                    assert!(
                        (g[i] - fd[i]).abs() <= 1e-6 * scale,
                        "{}: grad {} vs fd {} at {:?}",
                        sys.name(),
                        g[i],
                        fd[i],
                        x
                    );
                }
                checked += 1;
            }
        }
    }

    #[test]
    fn zero_potential_em_step_without_noise_is_identity() {
        let sys = PotentialSystem::zero(3, 1.0).unwrap();
        let cfg = IntegratorConfig::default();
        let x = [0.3, -0.7, 2.0];
        assert_eq!(em_step(&sys, &cfg, &x, &[0.0; 3]).unwrap(), x.to_vec());
    }

    #[test]
    fn harmonic_em_step_contracts_by_one_minus_h() {
        let sys = PotentialSystem::harmonic(1, 1.0).unwrap();
        let cfg = IntegratorConfig::new(0.1).unwrap();
        let out = em_step(&sys, &cfg, &[1.0], &[0.0]).unwrap();
        assert!((out[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn ou_mean_decays_like_exp_minus_t() {
        // For V(x) = x²/2 the exact conditional mean is e^{-t} x0; the EM
        // chain has mean (1-h)^{t/h} x0, inside the Monte Carlo band.
        let sys = PotentialSystem::harmonic(1, 1.0).unwrap();
        let cfg = IntegratorConfig::default();
        let t = 1.0;
        let m = 10_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for rep in 0..m {
            let x = simulate_endpoint(&sys, &cfg, &[1.0], t, RngStream::for_burst(11, 0, rep))
                .unwrap();
            sum += x[0];
            sumsq += x[0] * x[0];
        }
        let mean = sum / m as f64;
        let var = (sumsq - sum * sum / m as f64) / (m as f64 - 1.0);
        let stderr = (var / m as f64).sqrt();
        let exact = (-t).exp();
        assert!(
            (mean - exact).abs() < 3.0 * stderr,
            "mean {mean} vs {exact}, stderr {stderr}"
        );
    }

    #[test]
    fn endpoint_is_deterministic_per_stream() {
        let sys = PotentialSystem::curved_double_well(0.5).unwrap();
        let cfg = IntegratorConfig::default();
        let s = RngStream::for_burst(42, 3, 17);
        let a = simulate_endpoint(&sys, &cfg, &[1.0, 0.0], 0.5, s).unwrap();
        let b = simulate_endpoint(&sys, &cfg, &[1.0, 0.0], 0.5, s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn endpoint_at_one_step_equals_em_step() {
        let sys = PotentialSystem::quad_hilly(0.5).unwrap();
        let cfg = IntegratorConfig::default();
        let x0 = [0.4, -1.1];
        let end = simulate_endpoint_with(&sys, &cfg, &x0, cfg.h, &mut ZeroNoise).unwrap();
        assert_eq!(end, em_step(&sys, &cfg, &x0, &[0.0, 0.0]).unwrap());
    }

    #[test]
    fn non_multiple_lag_is_rejected() {
        let cfg = IntegratorConfig::default();
        assert!(cfg.steps_for(0.015).is_err());
        assert_eq!(cfg.steps_for(0.02).unwrap(), 2);
    }

    #[test]
    fn blow_up_is_reported_with_step_index() {
        // Gradient flow of V = ‖x‖²/2 with a huge negative step size diverges.
        let sys = PotentialSystem::harmonic(1, 1.0).unwrap();
        let cfg = IntegratorConfig::new(3.0).unwrap(); // (1-h) = -2, |x| doubles each step
        let err = simulate_endpoint_with(&sys, &cfg, &[1.0], 300.0, &mut ZeroNoise).unwrap_err();
        match err {
            Error::Instability { step, .. } => assert!(step > 0),
            other => panic!("expected instability, got {other}"),
        }
    }

    #[test]
    fn derive_seed_separates_stages() {
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 1), derive_seed(2, 1));
        assert_eq!(derive_seed(5, 9), derive_seed(5, 9));
    }
}
