//! Choosing the feedback gain `lambda` and driving `alpha` that steer the
//! stationary state toward a target direction `theta` in the x-z plane.
//!
//! At unit efficiency the target pure state is reached exactly by the closed
//! forms [`lambda_eta1`] and [`alpha_eta1`]. Below unit efficiency the driving
//! is slaved to the gain by the direction constraint ([`alpha_constrained`])
//! and the gain is found by a one-dimensional search that either maximizes the
//! stationary purity `r^2` or minimizes the stationary noise norm.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{angle_difference, direction_angle, BlochVector};
use crate::error::{Error, Result};
use crate::sde::noise_vector;
use crate::steady_state::{driving_only_ss, feedback_ss, SystemParams};

/// `|cos theta|` below which a direction is treated as equatorial.
pub const EQUATOR_COS_TOL: f64 = 1e-9;

/// `lambda = -(sqrt(gamma)/2)(1 + cos theta)`.
pub fn lambda_eta1(theta: f64, gamma: f64) -> f64 {
    -(gamma.sqrt() / 2.0) * (1.0 + theta.cos())
}

/// `alpha = (gamma/4) sin theta cos theta`.
pub fn alpha_eta1(theta: f64, gamma: f64) -> f64 {
    gamma / 4.0 * theta.sin() * theta.cos()
}

fn check_gamma_eta(gamma: f64, eta: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParams(format!("gamma = {gamma} must be > 0")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParams(format!("eta = {eta} must lie in (0, 1]")));
    }
    Ok(())
}

/// Driving that puts the stationary state on the line `x / z = tan theta`
/// for gain `lambda`.
///
/// The sign of the stationary `z` is `-sign(sqrt(gamma) + 2 lambda)`, so
/// only one half-line of gains reaches `theta` itself; the other reaches
/// `theta + pi`.
pub fn alpha_constrained(lambda: f64, theta: f64, gamma: f64, eta: f64) -> Result<f64> {
    check_gamma_eta(gamma, eta)?;
    if theta.cos().abs() < EQUATOR_COS_TOL {
        return Err(Error::SingularDirection { theta });
    }
    let sg = gamma.sqrt();
    let den = gamma + 2.0 * sg * lambda;
    if den.abs() <= 1e-12 * gamma {
        return Err(Error::SingularDenominator { lambda });
    }
    let q = gamma * eta + 4.0 * sg * eta * lambda + 4.0 * lambda * lambda;
    Ok(sg * eta * (sg + 2.0 * lambda) * q * theta.tan() / (4.0 * eta * eta * den))
}

/// Squared norm of the conditioned-equation noise vector at the stationary
/// state reached with gain `lambda` and constrained driving.
pub fn noise_norm(lambda: f64, theta: f64, gamma: f64, eta: f64) -> Result<f64> {
    let alpha = alpha_constrained(lambda, theta, gamma, eta)?;
    let p = SystemParams::new(gamma, eta, alpha, lambda)?;
    let ss = feedback_ss(&p)?;
    Ok(noise_vector(&ss, &p)?.norm_squared())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Maximize the stationary purity `r^2`.
    Purity,
    /// Minimize the stationary noise norm.
    Noise,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::Purity => "purity",
            Objective::Noise => "noise",
        })
    }
}

/// Grid-plus-golden-section search over the gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Grid points over the nominal interval `[-sqrt(gamma), 0]`.
    pub grid_points: usize,
    /// Extra fraction of the nominal width probed beyond each end.
    pub margin: f64,
    /// Golden-section stops when the bracket is below `lambda_tol * sqrt(gamma)`.
    pub lambda_tol: f64,
    /// Objective values closer than this count as tied; the smaller `|lambda|` wins.
    pub tie_tol: f64,
    /// Angular shift applied to equatorial targets.
    pub equator_offset: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            grid_points: 512,
            margin: 0.2,
            lambda_tol: 1e-8,
            tie_tol: 1e-12,
            equator_offset: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackDesign {
    /// Angle asked for.
    pub requested_theta: f64,
    /// Angle actually designed for (differs only for flagged equator targets).
    pub theta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub lambda_opt: f64,
    pub alpha_opt: f64,
    pub steady_state: BlochVector,
    pub r_squared: f64,
    pub noise_norm: f64,
    pub objective: Objective,
    /// Target was on the equator and was shifted by the search config's offset.
    pub equator_flag: bool,
    /// Optimum fell inside the search margin, outside `[-sqrt(gamma), 0]`.
    pub outside_nominal: bool,
}

impl FeedbackDesign {
    pub fn params(&self) -> SystemParams {
        SystemParams {
            gamma: self.gamma,
            eta: self.eta,
            alpha: self.alpha_opt,
            lambda: self.lambda_opt,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    lambda: f64,
    alpha: f64,
    state: BlochVector,
    noise: f64,
    score: f64,
}

/// Evaluates one gain; `None` when the stationary state does not point along
/// `theta` (wrong half-line or a singular point).
fn evaluate(lambda: f64, theta: f64, gamma: f64, eta: f64, objective: Objective) -> Option<Candidate> {
    let alpha = alpha_constrained(lambda, theta, gamma, eta).ok()?;
    let p = SystemParams::new(gamma, eta, alpha, lambda).ok()?;
    let state = feedback_ss(&p).ok()?;
    let r2 = state.x * state.x + state.z * state.z;
    if !(r2 > 0.0) || angle_difference(direction_angle(state.x, state.z), theta).abs() >= FRAC_PI_2 {
        return None;
    }
    let noise = noise_vector(&state, &p).ok()?.norm_squared();
    let score = match objective {
        Objective::Purity => r2,
        Objective::Noise => -noise,
    };
    score.is_finite().then_some(Candidate { lambda, alpha, state, noise, score })
}

fn score_of(c: &Option<Candidate>) -> f64 {
    c.map_or(f64::NEG_INFINITY, |c| c.score)
}

/// Picks the best candidate; scores within `tie_tol` go to the smaller `|lambda|`.
fn select(cands: impl IntoIterator<Item = Candidate>, tie_tol: f64) -> Option<Candidate> {
    let cands: Vec<Candidate> = cands.into_iter().collect();
    let best = cands.iter().map(|c| c.score).fold(f64::NEG_INFINITY, f64::max);
    cands
        .into_iter()
        .filter(|c| c.score >= best - tie_tol)
        .min_by(|a, b| a.lambda.abs().total_cmp(&b.lambda.abs()))
}

/// Golden-section maximization of `f` on `[lo, hi]`.
fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        x1
    } else {
        x2
    }
}

/// Gains probed by the coarse pass, ascending.
fn search_grid(gamma: f64, cfg: &SearchConfig) -> Vec<f64> {
    let sg = gamma.sqrt();
    let n = cfg.grid_points.max(2);
    let step = sg / (n - 1) as f64;
    let extra = (cfg.margin * (n - 1) as f64).ceil() as usize;
    let lo = -(sg + extra as f64 * step);
    (0..n + 2 * extra).map(|k| lo + k as f64 * step).collect()
}

/// Shifts exact equator targets toward the lower hemisphere.
fn resolve_theta(theta: f64, cfg: &SearchConfig) -> (f64, bool) {
    if theta.cos().abs() < EQUATOR_COS_TOL {
        let shifted = theta + theta.signum() * cfg.equator_offset;
        (shifted, true)
    } else {
        (theta, false)
    }
}

fn optimize(theta: f64, gamma: f64, eta: f64, cfg: &SearchConfig, objective: Objective) -> Result<FeedbackDesign> {
    check_gamma_eta(gamma, eta)?;
    if !theta.is_finite() || !(-PI..=PI).contains(&theta) {
        return Err(Error::InvalidParams(format!("theta = {theta} outside [-pi, pi]")));
    }
    let (target, equator_flag) = resolve_theta(theta, cfg);
    let sg = gamma.sqrt();
    let eval = |l: f64| evaluate(l, target, gamma, eta, objective);

    let grid = search_grid(gamma, cfg);
    let values: Vec<Option<Candidate>> = grid.iter().map(|&l| eval(l)).collect();
    let best_grid = select(values.iter().flatten().copied(), cfg.tie_tol)
        .ok_or(Error::Unreachable { theta: target })?;
    let i = grid.iter().position(|&l| l == best_grid.lambda).unwrap();

    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    let refined = golden_max(|l| score_of(&eval(l)), lo, hi, cfg.lambda_tol * sg);

    let extras = [refined, 0.0, -sg].into_iter().filter_map(eval);
    let best = select(std::iter::once(best_grid).chain(extras), cfg.tie_tol).unwrap();

    let outside_nominal = best.lambda < -sg * (1.0 + 1e-12) || best.lambda > 0.0;
    if outside_nominal {
        log::warn!(
            "optimal gain {} for theta = {target} lies outside [-sqrt(gamma), 0]",
            best.lambda
        );
    }
    Ok(FeedbackDesign {
        requested_theta: theta,
        theta: target,
        gamma,
        eta,
        lambda_opt: best.lambda,
        alpha_opt: best.alpha,
        steady_state: best.state,
        r_squared: best.state.norm_squared(),
        noise_norm: best.noise,
        objective,
        equator_flag,
        outside_nominal,
    })
}

/// Gain maximizing the stationary purity along `theta`, with the driving
/// slaved by [`alpha_constrained`]. Equatorial targets are shifted by
/// `cfg.equator_offset` and flagged.
pub fn optimize_purity(theta: f64, gamma: f64, eta: f64, cfg: &SearchConfig) -> Result<FeedbackDesign> {
    optimize(theta, gamma, eta, cfg, Objective::Purity)
}

/// Gain minimizing [`noise_norm`] along `theta`.
pub fn optimize_noise(theta: f64, gamma: f64, eta: f64, cfg: &SearchConfig) -> Result<FeedbackDesign> {
    optimize(theta, gamma, eta, cfg, Objective::Noise)
}

/// Driving-only design (`lambda = 0`), the only option at `eta = 0`.
/// Reachable directions are the lower hemisphere, `|theta| > pi/2`.
pub fn driving_only_design(theta: f64, gamma: f64, objective: Objective) -> Result<FeedbackDesign> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParams(format!("gamma = {gamma} must be > 0")));
    }
    if theta.cos() >= -EQUATOR_COS_TOL {
        return Err(Error::Unreachable { theta });
    }
    // x/z = 4 alpha / gamma on the driving-only locus
    let alpha = gamma / 4.0 * theta.tan();
    let state = driving_only_ss(gamma, alpha);
    Ok(FeedbackDesign {
        requested_theta: theta,
        theta,
        gamma,
        eta: 0.0,
        lambda_opt: 0.0,
        alpha_opt: alpha,
        steady_state: state,
        r_squared: state.norm_squared(),
        noise_norm: 0.0,
        objective,
        equator_flag: false,
        outside_nominal: false,
    })
}

/// Dispatches on `eta`: driving-only at `eta = 0`, otherwise the optimizer
/// for `objective`.
pub fn design(theta: f64, gamma: f64, eta: f64, objective: Objective, cfg: &SearchConfig) -> Result<FeedbackDesign> {
    if eta == 0.0 {
        return driving_only_design(theta, gamma, objective);
    }
    optimize(theta, gamma, eta, cfg, objective)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocusRow {
    pub theta: f64,
    pub theta_eval: f64,
    pub lambda_opt: f64,
    pub alpha_opt: f64,
    pub x_ss: f64,
    pub z_ss: f64,
    pub r_squared: f64,
    pub equator_flag: bool,
    pub error: Option<String>,
}

impl LocusRow {
    fn failed(theta: f64, err: &Error) -> Self {
        LocusRow {
            theta,
            theta_eval: theta,
            lambda_opt: f64::NAN,
            alpha_opt: f64::NAN,
            x_ss: f64::NAN,
            z_ss: f64::NAN,
            r_squared: f64::NAN,
            equator_flag: false,
            error: Some(err.to_string()),
        }
    }
}

/// Optimal stationary states over a grid of directions at fixed efficiency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocusTable {
    pub eta: f64,
    pub gamma: f64,
    pub objective: Objective,
    pub rows: Vec<LocusRow>,
}

/// `n` angles `-pi + 2 pi k / n`, `k = 1..=n`, covering `(-pi, pi]`.
pub fn theta_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|k| -PI + 2.0 * PI * k as f64 / n as f64).collect()
}

/// Builds the locus row by row; a failing row records its error.
pub fn build_locus(
    eta: f64,
    gamma: f64,
    theta_grid: &[f64],
    objective: Objective,
    cfg: &SearchConfig,
) -> Result<LocusTable> {
    if !(0.0..=1.0).contains(&eta) || !(gamma > 0.0) {
        return Err(Error::InvalidParams(format!("need 0 <= eta <= 1 and gamma > 0, got {eta}, {gamma}")));
    }
    if theta_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParams("theta grid must be strictly increasing".into()));
    }
    let rows = theta_grid
        .par_iter()
        .map(|&theta| match design(theta, gamma, eta, objective, cfg) {
            Ok(d) => LocusRow {
                theta,
                theta_eval: d.theta,
                lambda_opt: d.lambda_opt,
                alpha_opt: d.alpha_opt,
                x_ss: d.steady_state.x,
                z_ss: d.steady_state.z,
                r_squared: d.r_squared,
                equator_flag: d.equator_flag,
                error: None,
            },
            Err(e) => LocusRow::failed(theta, &e),
        })
        .collect();
    Ok(LocusTable { eta, gamma, objective, rows })
}

/// Per-angle gains chosen by the two objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub theta: f64,
    pub lambda_purity: f64,
    pub lambda_noise: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub eta: f64,
    pub gamma: f64,
    pub rows: Vec<AgreementRow>,
    pub max_abs_delta: f64,
    pub theta_at_max: f64,
}

/// Compares purity-optimal and noise-optimal gains over `theta_grid`.
/// Angles where either search fails are skipped.
pub fn optimizer_agreement(eta: f64, gamma: f64, theta_grid: &[f64], cfg: &SearchConfig) -> Result<AgreementReport> {
    check_gamma_eta(gamma, eta)?;
    let rows: Vec<AgreementRow> = theta_grid
        .par_iter()
        .filter_map(|&theta| {
            let p = optimize_purity(theta, gamma, eta, cfg).ok()?;
            let n = optimize_noise(theta, gamma, eta, cfg).ok()?;
            Some(AgreementRow {
                theta,
                lambda_purity: p.lambda_opt,
                lambda_noise: n.lambda_opt,
                delta: n.lambda_opt - p.lambda_opt,
            })
        })
        .collect();
    let (max_abs_delta, theta_at_max) = rows
        .iter()
        .map(|r| (r.delta.abs(), r.theta))
        .fold((0.0, f64::NAN), |acc, v| if v.0 > acc.0 || acc.1.is_nan() { v } else { acc });
    Ok(AgreementReport { eta, gamma, rows, max_abs_delta, theta_at_max })
}
