//! Deterministic (ensemble-averaged) dynamics with feedback.
//!
//! Averaging the conditioned Bloch equations over the homodyne noise leaves
//! an affine system `db/dt = M b + c` with
//!
//! ```text
//!     | -g/2 - 2k    0     2a      |        |        0        |
//! M = |    0       -g/2    0       |    c = |        0        |
//!     |   -2a        0    -g - 2k  |        | -(2 l sqrt(g) + g) |
//! ```
//!
//! where `g` is the decay rate, `a` the driving amplitude, `l` the feedback
//! gain and `k = l^2/eta + l sqrt(g)`. The `y` component decouples, so all
//! spectral work reduces to the 2x2 x-z block.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::BlochVector;
use crate::error::{Error, Result};

/// Relative threshold below which the stationary denominator is treated as zero.
pub const TOL_DENOMINATOR: f64 = 1e-14;

/// Marginal-stability band, in units of `gamma`.
pub const TOL_EIG_REL: f64 = 1e-9;

/// Physical configuration of the driven, monitored atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Spontaneous decay rate (inverse time).
    pub gamma: f64,
    /// Homodyne detection efficiency.
    pub eta: f64,
    /// Driving amplitude, half the Rabi frequency (inverse time).
    pub alpha: f64,
    /// Feedback gain on the photocurrent (inverse time to the 1/2).
    pub lambda: f64,
}

impl SystemParams {
    pub fn new(gamma: f64, eta: f64, alpha: f64, lambda: f64) -> Result<Self> {
        let p = SystemParams { gamma, eta, alpha, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParams(format!("gamma = {} must be > 0", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParams(format!("eta = {} outside [0, 1]", self.eta)));
        }
        if !self.alpha.is_finite() || !self.lambda.is_finite() {
            return Err(Error::InvalidParams("alpha and lambda must be finite".into()));
        }
        Ok(())
    }

    /// `k = lambda^2 / eta + lambda sqrt(gamma)`; requires `eta > 0` unless `lambda = 0`.
    pub fn kappa(&self) -> Result<f64> {
        if self.lambda == 0.0 {
            return Ok(0.0);
        }
        if self.eta <= 0.0 {
            return Err(Error::InvalidParams(
                "eta = 0 carries no information; feedback gain must be 0".into(),
            ));
        }
        Ok(self.lambda * self.lambda / self.eta + self.lambda * self.gamma.sqrt())
    }
}

/// Stationary state of the driven atom without feedback.
pub fn driving_only_ss(gamma: f64, alpha: f64) -> BlochVector {
    let den = gamma * gamma + 8.0 * alpha * alpha;
    BlochVector::new(-4.0 * alpha * gamma / den, 0.0, -gamma * gamma / den)
}

/// Closed-form stationary state of the feedback-modified master equation.
///
/// The denominator `D` equals `2 eta^2 det(B)` for the x-z block `B` of the
/// drift matrix; it vanishes (and the fixed point stops being unique) only
/// at `eta = 1`, `lambda = -sqrt(gamma)/2`, `alpha = 0`.
pub fn feedback_ss(p: &SystemParams) -> Result<BlochVector> {
    p.validate()?;
    let SystemParams { gamma: g, eta: e, alpha: a, lambda: l } = *p;
    if e == 0.0 {
        if l != 0.0 {
            return Err(Error::InvalidParams(
                "eta = 0 requires lambda = 0 (the current carries no signal)".into(),
            ));
        }
        return Ok(driving_only_ss(g, a));
    }
    let sg = g.sqrt();
    let terms = [
        g * g * e * e,
        6.0 * g * sg * e * e * l,
        2.0 * g * e * (3.0 + 4.0 * e) * l * l,
        16.0 * sg * e * l * l * l,
        8.0 * a * a * e * e,
        8.0 * l.powi(4),
    ];
    let d: f64 = terms.iter().sum();
    let scale: f64 = terms.iter().map(|t| t.abs()).sum();
    if !(d.abs() > TOL_DENOMINATOR * scale) {
        return Err(Error::DegenerateDenominator { denominator: d });
    }
    let q = g * e + 4.0 * sg * e * l + 4.0 * l * l;
    let x = -4.0 * a * e * e * (g + 2.0 * sg * l) / d;
    let z = -sg * e * (sg + 2.0 * l) * q / d;
    Ok(BlochVector::new(x, 0.0, z))
}

/// Affine drift `M b + c` of the (averaged) Bloch equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    pub matrix: [[f64; 3]; 3],
    pub offset: [f64; 3],
    pub kappa: f64,
}

pub fn drift_model(p: &SystemParams) -> Result<DriftModel> {
    p.validate()?;
    let kappa = p.kappa()?;
    let SystemParams { gamma: g, alpha: a, lambda: l, .. } = *p;
    Ok(DriftModel {
        matrix: [
            [-g / 2.0 - 2.0 * kappa, 0.0, 2.0 * a],
            [0.0, -g / 2.0, 0.0],
            [-2.0 * a, 0.0, -g - 2.0 * kappa],
        ],
        offset: [0.0, 0.0, -(2.0 * l * g.sqrt() + g)],
        kappa,
    })
}

impl DriftModel {
    /// `M b + c`.
    pub fn apply(&self, b: &BlochVector) -> BlochVector {
        let v = b.as_array();
        let mut out = self.offset;
        for (i, row) in self.matrix.iter().enumerate() {
            out[i] += row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
        }
        BlochVector::from_array(out)
    }

    /// x-z block `[[a, b], [c, d]]`.
    fn block(&self) -> [[f64; 2]; 2] {
        let m = &self.matrix;
        [[m[0][0], m[0][2]], [m[2][0], m[2][2]]]
    }

    fn block_scale(&self) -> f64 {
        self.block().iter().flatten().fold(0.0_f64, |s, v| s.max(v.abs()))
    }

    /// Solves `M b + c = 0` by Cramer's rule on the x-z block.
    pub fn fixed_point(&self) -> Result<BlochVector> {
        let [[a, b], [c, d]] = self.block();
        let det = a * d - b * c;
        let scale = self.block_scale();
        if !(det.abs() > TOL_DENOMINATOR * scale * scale) {
            return Err(Error::DegenerateDenominator { denominator: det });
        }
        let (rx, rz) = (-self.offset[0], -self.offset[2]);
        let x = (rx * d - b * rz) / det;
        let z = (a * rz - c * rx) / det;
        Ok(BlochVector::new(x, -self.offset[1] / self.matrix[1][1], z))
    }

    /// Eigenvalues of the x-z block, `(trace ± sqrt(disc)) / 2`.
    pub fn block_eigenvalues(&self) -> [Complex64; 2] {
        let [[a, b], [c, d]] = self.block();
        let tr = a + d;
        let det = a * d - b * c;
        let half_gap = (a - d) / 2.0;
        // (a-d)^2/4 + bc, factored when bc < 0 to avoid cancellation
        let disc = if b * c < 0.0 {
            let w = (-b * c).sqrt();
            (half_gap - w) * (half_gap + w)
        } else {
            half_gap * half_gap + b * c
        };
        let mid = tr / 2.0;
        if disc >= 0.0 {
            let s = disc.sqrt();
            let big = if mid >= 0.0 { mid + s } else { mid - s };
            let small = if big != 0.0 { det / big } else { 0.0 };
            [Complex64::new(big, 0.0), Complex64::new(small, 0.0)]
        } else {
            let w = (-disc).sqrt();
            [Complex64::new(mid, w), Complex64::new(mid, -w)]
        }
    }

    /// Exact solution of `db/dt = M b + c` from `b0` after time `t >= 0`.
    ///
    /// Uses the closed-form exponential of the 2x2 x-z block,
    /// `exp(Bt) = e^{mt} [C(t) I + S(t) (B - m I)]` with `m = tr B / 2`,
    /// and falls back to `int_0^t exp(Bu) du` when `B` is singular.
    pub fn evolve(&self, b0: &BlochVector, t: f64) -> BlochVector {
        let [[a, b], [c, d]] = self.block();
        let m = (a + d) / 2.0;
        let disc = ((a - d) / 2.0).powi(2) + b * c;
        let (ch, sh) = cosh_sinhc(disc, t);
        let e = (m * t).exp();
        // exp(Bt) = e * [ch I + sh (B - m I)]
        let exp_bt = [
            [e * (ch + sh * (a - m)), e * sh * b],
            [e * sh * c, e * (ch + sh * (d - m))],
        ];
        let mul = |mat: &[[f64; 2]; 2], v: [f64; 2]| {
            [mat[0][0] * v[0] + mat[0][1] * v[1], mat[1][0] * v[0] + mat[1][1] * v[1]]
        };
        let y = b0.y * (self.matrix[1][1] * t).exp()
            + if self.offset[1] != 0.0 {
                self.offset[1] * (self.matrix[1][1] * t).exp_m1() / self.matrix[1][1]
            } else {
                0.0
            };

        let v0 = [b0.x, b0.z];
        let off = [self.offset[0], self.offset[2]];
        let det = a * d - b * c;
        let scale = self.block_scale();
        let xz = if det.abs() > 1e-8 * scale * scale {
            let ss = self.fixed_point().expect("nonsingular block");
            let dv = mul(&exp_bt, [v0[0] - ss.x, v0[1] - ss.z]);
            [dv[0] + ss.x, dv[1] + ss.z]
        } else {
            let w = integrated_exponential([[a, b], [c, d]], m, disc, t);
            let hom = mul(&exp_bt, v0);
            let inh = mul(&w, off);
            [hom[0] + inh[0], hom[1] + inh[1]]
        };
        BlochVector::new(xz[0], y, xz[1])
    }
}

/// `(cosh(s t), sinh(s t)/s)` with `s^2 = disc`, continued to the
/// oscillatory branch for `disc < 0`.
fn cosh_sinhc(disc: f64, t: f64) -> (f64, f64) {
    let w = disc * t * t;
    if w.abs() < 1e-8 {
        (1.0 + w / 2.0, t * (1.0 + w / 6.0))
    } else if disc > 0.0 {
        let s = disc.sqrt();
        ((s * t).cosh(), (s * t).sinh() / s)
    } else {
        let s = (-disc).sqrt();
        ((s * t).cos(), (s * t).sin() / s)
    }
}

/// `int_0^t exp(B u) du` for a singular (or nearly singular) block, whose
/// eigenvalues are then real: `mu = m ± sqrt(disc)`.
fn integrated_exponential(bm: [[f64; 2]; 2], m: f64, disc: f64, t: f64) -> [[f64; 2]; 2] {
    let g = |mu: f64| if mu == 0.0 { t } else { (mu * t).exp_m1() / mu };
    let s = disc.max(0.0).sqrt();
    let (mu1, mu2) = (m + s, m - s);
    let scale = bm.iter().flatten().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if (mu1 - mu2).abs() > 1e-6 * scale.max(1e-300) {
        // Lagrange interpolation of g on the two eigenvalues
        let (g1, g2) = (g(mu1), g(mu2));
        let k1 = g1 / (mu1 - mu2);
        let k2 = g2 / (mu2 - mu1);
        let mut w = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { 1.0 } else { 0.0 };
                w[i][j] = k1 * (bm[i][j] - mu2 * id) + k2 * (bm[i][j] - mu1 * id);
            }
        }
        w
    } else {
        // B is nearly nilpotent: t I + t^2/2 B
        let mut w = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { 1.0 } else { 0.0 };
                w[i][j] = t * id + t * t / 2.0 * bm[i][j];
            }
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Marginal,
    Unstable,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stability::Stable => "stable",
            Stability::Marginal => "marginal",
            Stability::Unstable => "unstable",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `[-gamma/2 (y), block eigenvalue 1, block eigenvalue 2]`.
    pub eigenvalues: [Complex64; 3],
    pub classification: Stability,
}

impl StabilityReport {
    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn classify(eigenvalues: &[Complex64], gamma: f64) -> Stability {
    let tol = TOL_EIG_REL * gamma;
    let max_re = eigenvalues.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    if max_re < -tol {
        Stability::Stable
    } else if max_re <= tol {
        Stability::Marginal
    } else {
        Stability::Unstable
    }
}

pub fn stability_eigenvalues(p: &SystemParams) -> Result<StabilityReport> {
    let drift = drift_model(p)?;
    let [e1, e2] = drift.block_eigenvalues();
    let eigenvalues = [Complex64::new(drift.matrix[1][1], 0.0), e1, e2];
    Ok(StabilityReport { eigenvalues, classification: classify(&eigenvalues, p.gamma) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn eta1_design(theta: f64, gamma: f64) -> SystemParams {
        let lambda = -(gamma.sqrt() / 2.0) * (1.0 + theta.cos());
        let alpha = gamma / 4.0 * theta.sin() * theta.cos();
        SystemParams::new(gamma, 1.0, alpha, lambda).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(SystemParams::new(1.0, 1.5, 0.0, 0.0).is_err());
        assert!(SystemParams::new(1.0, -0.1, 0.0, 0.0).is_err());
        assert!(SystemParams::new(1.0, 0.0, 0.3, 0.0).is_ok());
    }

    #[test]
    fn undriven_atom_decays_to_ground() {
        assert_eq!(driving_only_ss(1.0, 0.0), BlochVector::GROUND);
    }

    #[test]
    fn strong_driving_saturates() {
        assert!(driving_only_ss(1.0, 1e3).norm() < 2e-3);
    }

    #[test]
    fn driving_only_at_alpha_one_over_root_eight() {
        // 8 a^2 = g^2, so |x| = 4a/2 = 1/sqrt(2), z = -1/2; x takes the sign of -alpha
        let b = driving_only_ss(1.0, 1.0 / 8f64.sqrt());
        assert_abs_diff_eq!(b.x, -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(b.z, -0.5, epsilon = 1e-12);
        assert_eq!(b.y, 0.0);
    }

    #[test]
    fn driving_only_is_drift_fixed_point() {
        for &a in &[-2.0, -0.3, 0.0, 0.1, 0.7, 5.0] {
            let p = SystemParams::new(1.3, 0.5, a, 0.0).unwrap();
            let fp = drift_model(&p).unwrap().fixed_point().unwrap();
            let ss = driving_only_ss(1.3, a);
            assert_abs_diff_eq!(fp.x, ss.x, epsilon = 1e-14);
            assert_abs_diff_eq!(fp.z, ss.z, epsilon = 1e-14);
        }
    }

    #[test]
    fn feedback_ss_lambda_zero_reduces() {
        for &eta in &[0.2, 0.5, 1.0] {
            for &a in &[-0.7, 0.0, 0.25, 1.1] {
                let p = SystemParams::new(1.0, eta, a, 0.0).unwrap();
                let b = feedback_ss(&p).unwrap();
                let r = driving_only_ss(1.0, a);
                assert_abs_diff_eq!(b.x, r.x, epsilon = 1e-12);
                assert_abs_diff_eq!(b.z, r.z, epsilon = 1e-12);
            }
        }
        // eta = 0 is only physical without feedback
        let b = feedback_ss(&SystemParams::new(1.0, 0.0, 0.4, 0.0).unwrap()).unwrap();
        assert_eq!(b, driving_only_ss(1.0, 0.4));
        assert!(feedback_ss(&SystemParams::new(1.0, 0.0, 0.4, -0.1).unwrap()).is_err());
    }

    #[test]
    fn feedback_ss_reaches_eta1_design() {
        let theta = PI / 6.0;
        let b = feedback_ss(&eta1_design(theta, 1.0)).unwrap();
        assert_abs_diff_eq!(b.x, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(b.z, 0.75f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn feedback_ss_without_driving_has_no_x() {
        let b = feedback_ss(&SystemParams::new(1.0, 1.0, 0.0, -1.0).unwrap()).unwrap();
        assert_eq!(b.x, 0.0);
        // z = -(g + 2 l sqrt g)/(g + 2k), k = 1 - 1 = 0
        assert_abs_diff_eq!(b.z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn feedback_ss_equator_design_is_degenerate() {
        let p = SystemParams::new(1.0, 1.0, 0.0, -0.5).unwrap();
        assert!(matches!(feedback_ss(&p), Err(Error::DegenerateDenominator { .. })));
    }

    #[test]
    fn drift_model_examples() {
        let free = drift_model(&SystemParams::new(1.0, 1.0, 0.0, 0.0).unwrap()).unwrap();
        assert_eq!(free.matrix, [[-0.5, 0.0, 0.0], [0.0, -0.5, 0.0], [0.0, 0.0, -1.0]]);
        assert_eq!(free.offset, [0.0, 0.0, -1.0]);

        let eq = drift_model(&SystemParams::new(1.0, 1.0, 0.0, -0.5).unwrap()).unwrap();
        assert_eq!(eq.kappa, -0.25);
        assert_eq!(eq.matrix, [[0.0, 0.0, 0.0], [0.0, -0.5, 0.0], [0.0, 0.0, -0.5]]);
        assert_eq!(eq.offset, [0.0, 0.0, 0.0]);

        let d = drift_model(&SystemParams::new(1.0, 0.5, 0.3, -0.4).unwrap()).unwrap();
        assert_abs_diff_eq!(d.kappa, -0.08, epsilon = 1e-15);
        let want = [[-0.34, 0.0, 0.6], [0.0, -0.5, 0.0], [-0.6, 0.0, -0.84]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(d.matrix[i][j], want[i][j], epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(d.offset[2], -0.2, epsilon = 1e-15);

        assert!(drift_model(&SystemParams::new(1.0, 0.0, 0.3, -0.4).unwrap()).is_err());
    }

    #[test]
    fn eigenvalues_at_designs() {
        let r = stability_eigenvalues(&eta1_design(PI / 2.0, 1.0)).unwrap();
        let mut re: Vec<f64> = r.eigenvalues.iter().map(|e| e.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(re[0], -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(re[1], -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(re[2], 0.0, epsilon = 1e-12);
        assert_eq!(r.classification, Stability::Marginal);

        let r = stability_eigenvalues(&eta1_design(PI, 1.0)).unwrap();
        let mut re: Vec<f64> = r.eigenvalues.iter().map(|e| e.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(re[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(re[2], -0.5, epsilon = 1e-12);
        assert_eq!(r.classification, Stability::Stable);

        let p = eta1_design(PI / 6.0, 1.0);
        let r = stability_eigenvalues(&p).unwrap();
        let mut re: Vec<f64> = r.eigenvalues.iter().map(|e| e.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(re[0], -0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(re[1], -0.5, epsilon = 1e-12);
        // sum and product against trace and determinant of the block
        let d = drift_model(&p).unwrap();
        let [e1, e2] = d.block_eigenvalues();
        let m = d.matrix;
        assert_abs_diff_eq!((e1 + e2).re, m[0][0] + m[2][2], epsilon = 1e-12);
        assert_abs_diff_eq!((e1 * e2).re, m[0][0] * m[2][2] - m[0][2] * m[2][0], epsilon = 1e-12);
    }

    #[test]
    fn classification_bands() {
        let c = |re: f64| [Complex64::new(-1.0, 0.0), Complex64::new(re, 0.0)];
        assert_eq!(classify(&c(-1e-6), 1.0), Stability::Stable);
        assert_eq!(classify(&c(-1e-10), 1.0), Stability::Marginal);
        assert_eq!(classify(&c(1e-10), 1.0), Stability::Marginal);
        assert_eq!(classify(&c(1e-6), 1.0), Stability::Unstable);
    }

    /// Fine-step classical RK4 on the full 3x3 affine system.
    fn rk4(d: &DriftModel, b0: BlochVector, t: f64, steps: usize) -> BlochVector {
        let h = t / steps as f64;
        let mut b = b0;
        for _ in 0..steps {
            let k1 = d.apply(&b);
            let k2 = d.apply(&(b + k1 * (h / 2.0)));
            let k3 = d.apply(&(b + k2 * (h / 2.0)));
            let k4 = d.apply(&(b + k3 * h));
            b = b + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        b
    }

    #[test]
    fn evolve_matches_rk4() {
        let cases = [
            SystemParams::new(1.0, 0.5, 0.3, -0.4).unwrap(),
            SystemParams::new(2.0, 0.9, 1.7, -0.2).unwrap(),
            SystemParams::new(1.0, 1.0, 0.0, -0.5).unwrap(), // singular block
            eta1_design(PI / 4.0, 1.0),                      // defective block
            eta1_design(PI / 6.0, 1.0),
        ];
        let b0 = BlochVector::new(0.3, 0.4, -0.5);
        for p in &cases {
            let d = drift_model(p).unwrap();
            for &t in &[0.0, 0.37, 2.0, 7.5] {
                let exact = d.evolve(&b0, t);
                let oracle = rk4(&d, b0, t, 20_000);
                assert!(
                    exact.distance(&oracle) < 1e-10,
                    "{p:?} t={t}: {exact:?} vs {oracle:?}"
                );
            }
        }
    }

    #[test]
    fn jordan_point_is_sqrt_epsilon_conditioned() {
        // at theta = pi/4 both x-z eigenvalues are -gamma/2 and the block is
        // defective, so one ulp in alpha moves them by ~sqrt(1e-16)
        for theta in [PI / 4.0, -PI / 4.0, 3.0 * PI / 4.0, -3.0 * PI / 4.0] {
            let rep = stability_eigenvalues(&eta1_design(theta, 1.0)).unwrap();
            assert_eq!(rep.classification, Stability::Stable);
            for e in rep.eigenvalues {
                assert!((e - Complex64::new(-0.5, 0.0)).norm() < 3e-8, "{theta}: {e}");
            }
        }
    }
}
