//! Two-level atom states: Cartesian Bloch vectors, 2x2 density matrices in
//! the `{|e>, |g>}` basis, and the in-plane polar form `(r, theta)`.
//!
//! The angle `theta` is measured from the excited state (`+z`) toward `+x`,
//! so that `|theta> = cos(theta/2)|e> + sin(theta/2)|g>` has Bloch vector
//! `(sin theta, 0, cos theta)`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default slack on `|b| <= 1` for algebraically computed states.
pub const TOL_BLOCH: f64 = 1e-9;

/// Tolerance on Hermiticity, unit trace and positivity of density matrices.
pub const TOL_RHO: f64 = 1e-12;

/// Largest `|y|` accepted by [`cartesian_to_polar`].
pub const TOL_IN_PLANE: f64 = 1e-9;

/// Bloch vector `(<sigma_x>, <sigma_y>, <sigma_z>)`.
///
/// This is a plain value: integrator output may sit marginally outside the
/// unit ball, so construction does not validate. Use [`BlochVector::validated`]
/// where the ball constraint must hold.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const GROUND: BlochVector = BlochVector { x: 0.0, y: 0.0, z: -1.0 };
    pub const EXCITED: BlochVector = BlochVector { x: 0.0, y: 0.0, z: 1.0 };
    pub const MIXED: BlochVector = BlochVector { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        BlochVector { x, y, z }
    }

    /// Constructs a vector and checks `|b| <= 1 + tol`.
    pub fn validated(x: f64, y: f64, z: f64, tol: f64) -> Result<Self> {
        let b = BlochVector { x, y, z };
        b.check(tol)?;
        Ok(b)
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        let norm = self.norm();
        if !(norm <= 1.0 + tol) {
            return Err(Error::OutsideBlochBall { norm, tol });
        }
        Ok(())
    }

    pub fn norm_squared(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn dot(&self, other: &BlochVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        BlochVector { x: a[0], y: a[1], z: a[2] }
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &BlochVector) -> f64 {
        (*self - *other).norm()
    }
}

impl Add for BlochVector {
    type Output = BlochVector;
    fn add(self, o: BlochVector) -> BlochVector {
        BlochVector::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for BlochVector {
    type Output = BlochVector;
    fn sub(self, o: BlochVector) -> BlochVector {
        BlochVector::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for BlochVector {
    type Output = BlochVector;
    fn mul(self, s: f64) -> BlochVector {
        BlochVector::new(self.x * s, self.y * s, self.z * s)
    }
}

/// 2x2 density matrix, row/column 0 = `|e>`, 1 = `|g>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    entries: [[Complex64; 2]; 2],
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity (all to [`TOL_RHO`]).
    pub fn new(entries: [[Complex64; 2]; 2]) -> Result<Self> {
        let [[a, b], [c, d]] = entries;
        let mismatch = (c - b.conj())
            .norm()
            .max(a.im.abs())
            .max(d.im.abs());
        if !(mismatch <= TOL_RHO) {
            return Err(Error::NotHermitian { mismatch });
        }
        let trace = a.re + d.re;
        if !((trace - 1.0).abs() <= TOL_RHO) {
            return Err(Error::BadTrace { trace });
        }
        let det = a.re * d.re - b.norm_sqr();
        if det < -TOL_RHO {
            return Err(Error::NotPositive { det });
        }
        Ok(DensityMatrix { entries })
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row][col]
    }

    pub fn entries(&self) -> [[Complex64; 2]; 2] {
        self.entries
    }

    pub fn trace(&self) -> Complex64 {
        self.entries[0][0] + self.entries[1][1]
    }
}

/// Density matrix `rho = (I + x sx + y sy + z sz) / 2`.
pub fn bloch_to_rho(b: &BlochVector) -> Result<DensityMatrix> {
    b.check(TOL_BLOCH)?;
    let ee = Complex64::new((1.0 + b.z) / 2.0, 0.0);
    let gg = Complex64::new((1.0 - b.z) / 2.0, 0.0);
    let eg = Complex64::new(b.x / 2.0, -b.y / 2.0);
    // Not re-validated: inside the slack the determinant can dip to -tol/2.
    Ok(DensityMatrix { entries: [[ee, eg], [eg.conj(), gg]] })
}

pub fn rho_to_bloch(rho: &DensityMatrix) -> BlochVector {
    let eg = rho.entry(0, 1);
    BlochVector {
        x: 2.0 * eg.re,
        y: -2.0 * eg.im,
        z: rho.entry(0, 0).re - rho.entry(1, 1).re,
    }
}

/// Squared Bloch length together with `Tr[rho^2] = (1 + r^2) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Purity {
    pub r_squared: f64,
    pub trace_rho_squared: f64,
}

pub fn purity(b: &BlochVector) -> Purity {
    let r_squared = b.norm_squared();
    Purity { r_squared, trace_rho_squared: (1.0 + r_squared) / 2.0 }
}

/// State in the x-z plane, `x = r sin theta`, `z = r cos theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarState {
    pub r: f64,
    pub theta: f64,
}

impl PolarState {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !(r >= 0.0) {
            return Err(Error::InvalidParams(format!("polar radius {r} < 0")));
        }
        if !(-PI..=PI).contains(&theta) {
            return Err(Error::InvalidParams(format!("polar angle {theta} outside [-pi, pi]")));
        }
        Ok(PolarState { r, theta })
    }
}

pub fn polar_to_cartesian(p: &PolarState) -> BlochVector {
    let (s, c) = p.theta.sin_cos();
    BlochVector::new(p.r * s, 0.0, p.r * c)
}

/// Inverse of [`polar_to_cartesian`]; `theta` lies in `(-pi, pi]`, and the
/// origin maps to `theta = 0`.
pub fn cartesian_to_polar(b: &BlochVector) -> Result<PolarState> {
    if !(b.y.abs() <= TOL_IN_PLANE) {
        return Err(Error::OutOfPlane { y: b.y });
    }
    let r = b.x.hypot(b.z);
    if r == 0.0 {
        return Ok(PolarState { r, theta: 0.0 });
    }
    Ok(PolarState { r, theta: direction_angle(b.x, b.z) })
}

/// `atan2(x, z)` folded into `(-pi, pi]`.
pub fn direction_angle(x: f64, z: f64) -> f64 {
    let theta = x.atan2(z);
    if theta == -PI {
        PI
    } else {
        theta
    }
}

/// Signed difference `a - b` wrapped into `(-pi, pi]`.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let mut d = (a - b) % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d <= -PI {
        d += 2.0 * PI;
    }
    d
}
