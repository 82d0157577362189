//! Conditioned (stochastic) Bloch equations under homodyne detection with
//! photocurrent feedback, integrated with Euler-Maruyama in the Ito sense.
//!
//! One step reads
//!
//! ```text
//! b' = b + (M b + c) dt + n(b) dW
//! n(b) = ( -s x^2 + (s + 2l/sqrt(eta)) z + s,
//!          -s x y,
//!          -(s + 2l/sqrt(eta)) x - s x z ),      s = sqrt(gamma eta)
//! ```
//!
//! and the same `dW` enters the recorded current `I dt = sqrt(gamma) x dt + dW/sqrt(eta)`.
//!
//! # Random streams
//!
//! Trajectory `i` of a run with seed `s` draws its Wiener increments from
//! ChaCha8 keyed by `ChaCha8Rng::seed_from_u64(s)` on stream number `i`,
//! converted with `sqrt(dt) * StandardNormal`. Streams are independent, so
//! ensembles parallelize without changing any individual path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{BlochVector, TOL_BLOCH};
use crate::error::{Error, Result};
use crate::steady_state::{drift_model, DriftModel, SystemParams};

/// Default integration step, in units of `1/gamma`.
pub const DEFAULT_DT: f64 = 1e-3;

/// Largest step accepted without `allow_large_dt`, in units of `1/gamma`.
pub const MAX_DT: f64 = 1e-2;

/// Distance from `x = ±1` counted as "arrived" for equatorial runs.
pub const ENDPOINT_TOL: f64 = 1e-3;

/// Euler-Maruyama leaves the pure manifold by `|r^2 - 1| ~ |g|^2 sqrt(2 dt t)`,
/// so purity errors scale with `sqrt(dt)`. 99th percentile of
/// `max_t |r^2 - 1| / sqrt(gamma dt)` over 1000 paths of the `theta = pi/6`,
/// `eta = 1` design from the ground state, `t <= 10/gamma`, `dt = 10^-3/gamma`
/// (measured 75.4; the median is 3.6).
pub const PURITY_C: f64 = 76.0;

/// Largest `r^2` a path may reach before the run is rejected.
pub fn containment_bound(gamma: f64, dt: f64) -> f64 {
    1.0 + 10.0 * PURITY_C * (gamma * dt).sqrt()
}

/// Wiener-increment source for one trajectory.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    sqrt_dt: f64,
}

impl NoiseStream {
    pub fn new(seed: u64, trajectory: u64, dt: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trajectory);
        NoiseStream { rng, sqrt_dt: dt.sqrt() }
    }

    #[inline]
    pub fn next_increment(&mut self) -> f64 {
        let n: f64 = self.rng.sample(StandardNormal);
        self.sqrt_dt * n
    }
}

/// `n_steps` i.i.d. `N(0, dt)` increments from stream 0 of `seed`.
pub fn wiener_increments(seed: u64, n_steps: usize, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt = {dt} must be > 0")));
    }
    let mut s = NoiseStream::new(seed, 0, dt);
    Ok((0..n_steps).map(|_| s.next_increment()).collect())
}

/// Precomputed coefficients of the conditioned Bloch equations.
#[derive(Debug, Clone, Copy)]
pub struct Sbe {
    pub drift: DriftModel,
    sqrt_gamma: f64,
    inv_sqrt_eta: f64,
    /// `sqrt(gamma eta)`
    s: f64,
    /// `sqrt(gamma eta) + 2 lambda / sqrt(eta)`
    c: f64,
}

impl Sbe {
    pub fn new(p: &SystemParams) -> Result<Self> {
        p.validate()?;
        if !(p.eta > 0.0) {
            return Err(Error::InvalidParams(
                "conditioned dynamics need eta > 0".into(),
            ));
        }
        let drift = drift_model(p)?;
        let s = (p.gamma * p.eta).sqrt();
        let inv_sqrt_eta = 1.0 / p.eta.sqrt();
        Ok(Sbe {
            drift,
            sqrt_gamma: p.gamma.sqrt(),
            inv_sqrt_eta,
            s,
            c: s + 2.0 * p.lambda * inv_sqrt_eta,
        })
    }

    #[inline]
    pub fn noise(&self, b: &BlochVector) -> BlochVector {
        let BlochVector { x, y, z } = *b;
        BlochVector::new(
            -self.s * x * x + self.c * z + self.s,
            -self.s * x * y,
            -self.c * x - self.s * x * z,
        )
    }

    #[inline]
    pub fn step(&self, b: &BlochVector, dt: f64, dw: f64) -> BlochVector {
        let f = self.drift.apply(b);
        let g = self.noise(b);
        BlochVector::new(
            b.x + f.x * dt + g.x * dw,
            b.y + f.y * dt + g.y * dw,
            b.z + f.z * dt + g.z * dw,
        )
    }

    #[inline]
    pub fn current(&self, b: &BlochVector, dt: f64, dw: f64) -> f64 {
        self.sqrt_gamma * b.x * dt + dw * self.inv_sqrt_eta
    }
}

/// Noise (diffusion) vector of the conditioned Bloch equations at `b`.
pub fn noise_vector(b: &BlochVector, p: &SystemParams) -> Result<BlochVector> {
    Ok(Sbe::new(p)?.noise(b))
}

/// One Euler-Maruyama step. No projection onto the Bloch ball is applied.
pub fn sbe_step(b: &BlochVector, p: &SystemParams, dt: f64, dw: f64) -> Result<BlochVector> {
    Ok(Sbe::new(p)?.step(b, dt, dw))
}

/// Photocurrent increment `I dt` recorded while the state is `b`.
pub fn photocurrent_increment(b: &BlochVector, p: &SystemParams, dt: f64, dw: f64) -> Result<f64> {
    Ok(Sbe::new(p)?.current(b, dt, dw))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub n_trajectories: usize,
    pub initial_state: BlochVector,
    pub params: SystemParams,
    /// Keep every `record_every`-th step (the final step is always kept).
    pub record_every: usize,
    /// Accept `dt > 10^-2 / gamma` with a warning instead of an error.
    pub allow_large_dt: bool,
}

impl SimConfig {
    pub fn new(params: SystemParams, t_final: f64, seed: u64) -> Self {
        SimConfig {
            dt: DEFAULT_DT / params.gamma,
            t_final,
            seed,
            n_trajectories: 1,
            initial_state: BlochVector::GROUND,
            params,
            record_every: 1,
            allow_large_dt: false,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Checks the configuration; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.params.validate()?;
        let mut warnings = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParams(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidParams(format!("t_final = {} must be >= 0", self.t_final)));
        }
        if self.n_trajectories == 0 {
            return Err(Error::InvalidParams("n_trajectories must be >= 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParams("record_every must be >= 1".into()));
        }
        self.initial_state.check(TOL_BLOCH)?;
        let limit = MAX_DT / self.params.gamma;
        if self.dt > limit {
            let msg = format!("dt = {} exceeds {limit} (0.01/gamma)", self.dt);
            if !self.allow_large_dt {
                return Err(Error::InvalidParams(msg));
            }
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let steps = self.t_final / self.dt;
        if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) {
            let msg = format!(
                "t_final = {} is not a multiple of dt; integrating {} steps",
                self.t_final,
                self.n_steps()
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        Ok(warnings)
    }

    fn record_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let mut steps: Vec<usize> = (0..=n).step_by(self.record_every).collect();
        if *steps.last().unwrap() != n {
            steps.push(n);
        }
        steps
    }
}

/// Integrates trajectory `index`, calling `observe(step, state, current)` at
/// every step `0..=n_steps`. `current` is the `I dt` of the step that led to
/// `state` (zero at step 0). Fails once `r^2` exceeds [`containment_bound`].
fn integrate<F: FnMut(usize, &BlochVector, f64)>(
    sbe: &Sbe,
    cfg: &SimConfig,
    index: u64,
    mut observe: F,
) -> Result<()> {
    let bound = containment_bound(cfg.params.gamma, cfg.dt);
    let mut noise = NoiseStream::new(cfg.seed, index, cfg.dt);
    let mut b = cfg.initial_state;
    observe(0, &b, 0.0);
    for k in 1..=cfg.n_steps() {
        let dw = noise.next_increment();
        let di = sbe.current(&b, cfg.dt, dw);
        b = sbe.step(&b, cfg.dt, dw);
        let r2 = b.norm_squared();
        if !(r2 <= bound) {
            return Err(Error::LeftBlochBall { trajectory: index, time: k as f64 * cfg.dt, r_squared: r2, bound });
        }
        observe(k, &b, di);
    }
    Ok(())
}

/// One conditioned path and its homodyne record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<BlochVector>,
    /// `I dt` summed over the steps since the previous record (0 at t = 0).
    pub photocurrent_increments: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> BlochVector {
        *self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn max_r_squared(&self) -> f64 {
        self.states.iter().map(|b| b.norm_squared()).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max |r^2 - 1|` along the recorded path.
    pub fn max_purity_deviation(&self) -> f64 {
        self.states.iter().map(|b| (b.norm_squared() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Time average over records with `t0 <= t <= t1`, with a standard error
    /// from `n_batches` contiguous batch means (robust to autocorrelation).
    pub fn time_average(&self, t0: f64, t1: f64, n_batches: usize) -> TimeAverage {
        let samples: Vec<BlochVector> = self
            .times
            .iter()
            .zip(&self.states)
            .filter(|(t, _)| **t >= t0 - 1e-12 && **t <= t1 + 1e-12)
            .map(|(_, b)| *b)
            .collect();
        let n = samples.len();
        let mean = samples.iter().fold(BlochVector::MIXED, |a, b| a + *b) * (1.0 / n as f64);
        let batch = n / n_batches;
        let means: Vec<BlochVector> = (0..n_batches)
            .map(|k| {
                let chunk = &samples[k * batch..(k + 1) * batch];
                chunk.iter().fold(BlochVector::MIXED, |a, b| a + *b) * (1.0 / batch as f64)
            })
            .collect();
        let mut var = [0.0; 3];
        let grand = means.iter().fold(BlochVector::MIXED, |a, b| a + *b) * (1.0 / n_batches as f64);
        for m in &means {
            let d = (*m - grand).as_array();
            for i in 0..3 {
                var[i] += d[i] * d[i];
            }
        }
        let stderr = var.map(|v| (v / (n_batches - 1) as f64 / n_batches as f64).sqrt());
        let r2: Vec<f64> = samples.iter().map(|b| b.norm_squared()).collect();
        let r2_mean = r2.iter().sum::<f64>() / n as f64;
        let r2_var = r2.iter().map(|v| (v - r2_mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        TimeAverage { mean, stderr, n_samples: n, r_squared_variance: r2_var }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeAverage {
    pub mean: BlochVector,
    pub stderr: [f64; 3],
    pub n_samples: usize,
    /// Sample variance of the instantaneous `r^2` over the window.
    pub r_squared_variance: f64,
}

/// Simulates trajectory 0 of `cfg`.
pub fn simulate(cfg: &SimConfig) -> Result<Trajectory> {
    simulate_trajectory(cfg, 0)
}

pub fn simulate_trajectory(cfg: &SimConfig, index: u64) -> Result<Trajectory> {
    let warnings = cfg.validate()?;
    let sbe = Sbe::new(&cfg.params)?;
    let n = cfg.n_steps();
    let cap = n / cfg.record_every + 2;
    let mut times = Vec::with_capacity(cap);
    let mut states = Vec::with_capacity(cap);
    let mut currents = Vec::with_capacity(cap);
    let mut acc = 0.0;
    integrate(&sbe, cfg, index, |k, b, di| {
        acc += di;
        if k % cfg.record_every == 0 || k == n {
            times.push(k as f64 * cfg.dt);
            states.push(*b);
            currents.push(acc);
            acc = 0.0;
        }
    })?;
    Ok(Trajectory { times, states, photocurrent_increments: currents, warnings })
}

/// States of every trajectory at the record steps, in trajectory order.
fn sampled_paths(cfg: &SimConfig, sbe: &Sbe, steps: &[usize]) -> Result<Vec<Vec<BlochVector>>> {
    (0..cfg.n_trajectories as u64)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::with_capacity(steps.len());
            let mut next = 0;
            integrate(sbe, cfg, i, |k, b, _| {
                if next < steps.len() && steps[next] == k {
                    out.push(*b);
                    next += 1;
                }
            })?;
            Ok(out)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub mean_bloch: Vec<BlochVector>,
    /// Sample standard deviation over trajectories divided by `sqrt(n)`;
    /// NaN when `n = 1`.
    pub stderr_bloch: Vec<[f64; 3]>,
    pub mean_r_squared: Vec<f64>,
    pub n_trajectories: usize,
    pub stderr_defined: bool,
}

/// Runs `cfg.n_trajectories` independent paths and reduces them in index order.
pub fn ensemble(cfg: &SimConfig) -> Result<EnsembleStats> {
    cfg.validate()?;
    let sbe = Sbe::new(&cfg.params)?;
    let steps = cfg.record_steps();
    let paths = sampled_paths(cfg, &sbe, &steps)?;
    let n = paths.len();
    let nf = n as f64;
    let mut mean_bloch = Vec::with_capacity(steps.len());
    let mut stderr_bloch = Vec::with_capacity(steps.len());
    let mut mean_r_squared = Vec::with_capacity(steps.len());
    for j in 0..steps.len() {
        let mut sum = [0.0; 3];
        let mut r2 = 0.0;
        for p in &paths {
            let v = p[j].as_array();
            for i in 0..3 {
                sum[i] += v[i];
            }
            r2 += p[j].norm_squared();
        }
        let mean = sum.map(|s| s / nf);
        let se = if n > 1 {
            let mut ss = [0.0; 3];
            for p in &paths {
                let v = p[j].as_array();
                for i in 0..3 {
                    ss[i] += (v[i] - mean[i]).powi(2);
                }
            }
            ss.map(|s| (s / (nf - 1.0) / nf).sqrt())
        } else {
            [f64::NAN; 3]
        };
        mean_bloch.push(BlochVector::from_array(mean));
        stderr_bloch.push(se);
        mean_r_squared.push(r2 / nf);
    }
    Ok(EnsembleStats {
        times: steps.iter().map(|&k| k as f64 * cfg.dt).collect(),
        mean_bloch,
        stderr_bloch,
        mean_r_squared,
        n_trajectories: n,
        stderr_defined: n > 1,
    })
}

/// Outcome of comparing an ensemble mean with the deterministic solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub deterministic: Vec<BlochVector>,
    /// Largest `|mean - exact| / stderr` over times and components.
    pub max_z_score: f64,
    pub worst_time: f64,
    pub n_sigma: f64,
    pub pass: bool,
}

impl EnsembleStats {
    /// Compares the mean path with the exact affine solution from `initial`.
    ///
    /// Components with zero spread (e.g. at `t = 0`) must agree to `1e-12`.
    pub fn compare_deterministic(
        &self,
        drift: &DriftModel,
        initial: &BlochVector,
        n_sigma: f64,
    ) -> EquivalenceReport {
        let mut max_z = 0.0_f64;
        let mut worst = 0.0;
        let mut pass = self.stderr_defined;
        let mut deterministic = Vec::with_capacity(self.times.len());
        for (j, &t) in self.times.iter().enumerate() {
            let exact = drift.evolve(initial, t);
            let diff = (self.mean_bloch[j] - exact).as_array();
            for i in 0..3 {
                let se = self.stderr_bloch[j][i];
                let z = if se > 0.0 {
                    diff[i].abs() / se
                } else if diff[i].abs() <= 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                };
                if !(z <= n_sigma) {
                    pass = false;
                }
                if z > max_z || z.is_nan() {
                    max_z = z;
                    worst = t;
                }
            }
            deterministic.push(exact);
        }
        EquivalenceReport { deterministic, max_z_score: max_z, worst_time: worst, n_sigma, pass }
    }
}

/// Statistics of the equatorial (`theta = ±pi/2`) feedback runs, where `x`
/// performs the driftless walk `dx = sqrt(gamma) (1 - x^2) dW`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquatorReport {
    pub times: Vec<f64>,
    pub mean_x: Vec<f64>,
    pub stderr_x: Vec<f64>,
    pub mean_x_squared: Vec<f64>,
    /// Standard error of each successive increment of `E[x^2]`.
    pub stderr_x_squared_step: Vec<f64>,
    pub n_trajectories: usize,
    pub fraction_plus: f64,
    pub fraction_minus: f64,
    pub fraction_unsettled: f64,
    pub n_sigma: f64,
    /// `|E[x](t) - x0| <= n_sigma * stderr` at every record.
    pub mean_x_constant: bool,
    /// Every increment of `E[x^2]` is `>= -n_sigma * stderr`.
    pub x_squared_non_decreasing: bool,
}

impl EquatorReport {
    /// Binomial standard error of an endpoint fraction.
    pub fn fraction_stderr(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.n_trajectories as f64).sqrt()
    }
}

/// Runs the equatorial ensemble. A trajectory counts as having reached `±1`
/// when `|x ∓ 1| < 10^-3` at every step of the last `1/gamma` of the run.
pub fn equator_diagnostic(cfg: &SimConfig, n_sigma: f64) -> Result<EquatorReport> {
    cfg.validate()?;
    let p = cfg.params;
    let on_design = (p.lambda + p.gamma.sqrt() / 2.0).abs() <= 1e-12 * p.gamma.sqrt()
        && p.alpha.abs() <= 1e-12 * p.gamma
        && p.eta == 1.0;
    if !on_design {
        return Err(Error::InvalidParams(
            "equator diagnostic needs eta = 1, lambda = -sqrt(gamma)/2, alpha = 0".into(),
        ));
    }
    let window = 1.0 / p.gamma;
    if cfg.t_final < window {
        return Err(Error::InvalidParams("t_final shorter than the 1/gamma settling window".into()));
    }
    let sbe = Sbe::new(&p)?;
    let steps = cfg.record_steps();
    let n = cfg.n_steps();
    let window_start = n.saturating_sub((window / cfg.dt).round() as usize);

    // (x at record steps, endpoint: +1, -1 or 0)
    let runs: Vec<(Vec<f64>, i8)> = (0..cfg.n_trajectories as u64)
        .into_par_iter()
        .map(|i| {
            let mut xs = Vec::with_capacity(steps.len());
            let mut next = 0;
            let (mut plus, mut minus) = (true, true);
            integrate(&sbe, cfg, i, |k, b, _| {
                if next < steps.len() && steps[next] == k {
                    xs.push(b.x);
                    next += 1;
                }
                if k >= window_start {
                    plus &= (b.x - 1.0).abs() < ENDPOINT_TOL;
                    minus &= (b.x + 1.0).abs() < ENDPOINT_TOL;
                }
            })?;
            Ok((xs, if plus { 1 } else if minus { -1 } else { 0 }))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;

    let nt = runs.len();
    let nf = nt as f64;
    let x0 = cfg.initial_state.x;
    let mut mean_x = Vec::new();
    let mut stderr_x = Vec::new();
    let mut mean_x2 = Vec::new();
    let mut stderr_step = Vec::new();
    let mut mean_x_constant = true;
    let mut non_decreasing = true;
    for j in 0..steps.len() {
        let xs: Vec<f64> = runs.iter().map(|r| r.0[j]).collect();
        let (m, se) = mean_stderr(&xs);
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / nf;
        if !((m - x0).abs() <= n_sigma * se + 1e-12) {
            mean_x_constant = false;
        }
        if j > 0 {
            let d: Vec<f64> = runs.iter().map(|r| r.0[j] * r.0[j] - r.0[j - 1] * r.0[j - 1]).collect();
            let (dm, dse) = mean_stderr(&d);
            if !(dm >= -n_sigma * dse - 1e-12) {
                non_decreasing = false;
            }
            stderr_step.push(dse);
        } else {
            stderr_step.push(0.0);
        }
        mean_x.push(m);
        stderr_x.push(se);
        mean_x2.push(m2);
    }
    let plus = runs.iter().filter(|r| r.1 == 1).count() as f64 / nf;
    let minus = runs.iter().filter(|r| r.1 == -1).count() as f64 / nf;
    Ok(EquatorReport {
        times: steps.iter().map(|&k| k as f64 * cfg.dt).collect(),
        mean_x,
        stderr_x,
        mean_x_squared: mean_x2,
        stderr_x_squared_step: stderr_step,
        n_trajectories: nt,
        fraction_plus: plus,
        fraction_minus: minus,
        fraction_unsettled: 1.0 - plus - minus,
        n_sigma,
        mean_x_constant,
        x_squared_non_decreasing: non_decreasing,
    })
}

/// Sample mean and its standard error (0 for a single sample).
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
