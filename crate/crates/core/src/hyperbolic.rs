//! Poincaré disk geometry.
//!
//! Interior points are stored in geodesic polar coordinates `(rho, theta)`
//! about the origin `o`, not as complex numbers. Near the ideal boundary the
//! Euclidean radius `tanh(rho / 2)` rounds to 1 long before `rho` becomes
//! large, so distances and Busemann functions are evaluated from the polar
//! form:
//!
//! ```text
//! sinh^2(d/2) = sinh^2((r1 - r2)/2) + sinh(r1) sinh(r2) sin^2(dtheta/2)
//! B_xi(y)     = -rho + ln(1 + (e^{2 rho} - 1) sin^2((theta - xi)/2))
//! ```
//!
//! The second line is `ln(|e^{i xi} - y|^2 / (1 - |y|^2))` rewritten so that it
//! stays accurate out to `rho` in the hundreds. Busemann functions decrease
//! toward their ideal point: `B_xi(gamma_xi(t)) = -t`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};

/// Reduce an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if t >= TAU {
        0.0
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskPoint {
    rho: f64,
    theta: f64,
}

impl DiskPoint {
    pub const ORIGIN: DiskPoint = DiskPoint { rho: 0.0, theta: 0.0 };

    /// Point at hyperbolic distance `rho` from the origin in direction `theta`.
    /// A negative `rho` is folded onto the opposite direction.
    pub fn from_polar(rho: f64, theta: f64) -> Self {
        if rho < 0.0 {
            Self { rho: -rho, theta: wrap_angle(theta + PI) }
        } else if rho == 0.0 {
            Self::ORIGIN
        } else {
            Self { rho, theta: wrap_angle(theta) }
        }
    }

    pub fn from_complex(z: Complex64) -> Result<Self> {
        let r = z.norm();
        if !(r < 1.0) {
            return Err(GeomError::OutsideWindow(format!("|z| = {r} is not inside the unit disk")));
        }
        if r == 0.0 {
            return Ok(Self::ORIGIN);
        }
        Ok(Self { rho: 2.0 * r.atanh(), theta: wrap_angle(z.arg()) })
    }

    pub fn from_cartesian(x: f64, y: f64) -> Result<Self> {
        Self::from_complex(Complex64::new(x, y))
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar((self.rho / 2.0).tanh(), self.theta)
    }

    /// Hyperbolic distance to the origin.
    pub fn rho(self) -> f64 {
        self.rho
    }

    pub fn theta(self) -> f64 {
        self.theta
    }
}

/// A point of the ideal boundary `S^1`, stored as an angle in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct IdealPoint(f64);

impl IdealPoint {
    pub fn new(angle: f64) -> Self {
        Self(wrap_angle(angle))
    }

    pub fn angle(self) -> f64 {
        self.0
    }

    pub fn unit(self) -> Complex64 {
        Complex64::from_polar(1.0, self.0)
    }
}

pub fn hyperbolic_distance(z: &DiskPoint, w: &DiskPoint) -> f64 {
    let half_dr = ((z.rho - w.rho) / 2.0).sinh();
    let half_dt = ((z.theta - w.theta) / 2.0).sin();
    let s2 = half_dr * half_dr + z.rho.sinh() * w.rho.sinh() * half_dt * half_dt;
    2.0 * s2.sqrt().asinh()
}

/// Distance between two points given in Cartesian disk coordinates.
pub fn distance_cartesian(z: Complex64, w: Complex64) -> f64 {
    let nz = z.norm();
    let nw = w.norm();
    let cz = (1.0 - nz) * (1.0 + nz);
    let cw = (1.0 - nw) * (1.0 + nw);
    2.0 * ((z - w).norm() / (cz * cw).sqrt()).asinh()
}

/// Busemann function normalised at the origin, decreasing toward `xi`.
pub fn busemann(xi: IdealPoint, y: &DiskPoint) -> f64 {
    if y.rho == 0.0 {
        return 0.0;
    }
    let s = ((y.theta - xi.0) / 2.0).sin();
    -y.rho + ((2.0 * y.rho).exp_m1() * s * s).ln_1p()
}

/// The point at distance `t` along the unit-speed geodesic ray from `o` toward `xi`.
pub fn ray_point(xi: IdealPoint, t: f64) -> DiskPoint {
    DiskPoint::from_polar(t, xi.0)
}

/// Orientation-preserving isometry `z -> (a z + b) / (conj(b) z + conj(a))`
/// with `|a|^2 - |b|^2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Isometry {
    a: Complex64,
    b: Complex64,
}

const DET_TOL: f64 = 1e-12;

impl Isometry {
    pub const IDENTITY: Isometry = Isometry {
        a: Complex64 { re: 1.0, im: 0.0 },
        b: Complex64 { re: 0.0, im: 0.0 },
    };

    pub fn from_coefficients(a: Complex64, b: Complex64) -> Result<Self> {
        let g = Self { a, b };
        let scale = a.norm_sqr() + b.norm_sqr();
        if !((g.det() - 1.0).abs() <= DET_TOL * scale.max(1.0)) {
            return Err(GeomError::InvalidParameter(format!(
                "|a|^2 - |b|^2 = {} is not 1",
                g.det()
            )));
        }
        Ok(g)
    }

    pub fn a(&self) -> Complex64 {
        self.a
    }

    pub fn b(&self) -> Complex64 {
        self.b
    }

    pub fn det(&self) -> f64 {
        self.a.norm_sqr() - self.b.norm_sqr()
    }

    /// Rotation about the origin by `phi`: `z -> e^{i phi} z`.
    pub fn rotation(phi: f64) -> Self {
        Self { a: Complex64::from_polar(1.0, phi / 2.0), b: Complex64::new(0.0, 0.0) }
    }

    /// Hyperbolic translation of length `length` along the diameter through
    /// `e^{i axis}`, moving the origin toward `e^{i axis}`.
    pub fn translation(length: f64, axis: f64) -> Self {
        let h = length / 2.0;
        Self {
            a: Complex64::new(h.cosh(), 0.0),
            b: Complex64::from_polar(h.sinh(), axis),
        }
    }

    /// `translation(length, axis) ∘ rotation(rotation)`.
    pub fn from_parts(length: f64, axis: f64, rotation: f64) -> Result<Self> {
        if !(length >= 0.0) || !length.is_finite() {
            return Err(GeomError::InvalidParameter(format!(
                "translation length must be finite and >= 0, got {length}"
            )));
        }
        Ok(Self::translation(length, axis).compose(&Self::rotation(rotation)))
    }

    /// Uniformly random rotation followed by a translation of length drawn
    /// uniformly from `[0, max_length]` along a uniformly random axis.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_length: f64) -> Self {
        let rot = rng.random::<f64>() * TAU;
        let axis = rng.random::<f64>() * TAU;
        let len = rng.random::<f64>() * max_length;
        Self::translation(len, axis).compose(&Self::rotation(rot))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Isometry) -> Isometry {
        let a = self.a * other.a + self.b * other.b.conj();
        let b = self.a * other.b + self.b * other.a.conj();
        let n = (a.norm_sqr() - b.norm_sqr()).sqrt();
        Isometry { a: a / n, b: b / n }
    }

    pub fn inverse(&self) -> Isometry {
        Isometry { a: self.a.conj(), b: -self.b }
    }

    pub fn apply(&self, z: &DiskPoint) -> DiskPoint {
        let half = z.rho / 2.0;
        let zc = Complex64::from_polar(half.tanh(), z.theta);
        let num = self.a * zc + self.b;
        let den = self.b.conj() * zc + self.a.conj();
        let rho = 2.0 * (num.norm() * half.cosh()).asinh();
        let theta = if num.norm() == 0.0 { 0.0 } else { (num * den.conj()).arg() };
        DiskPoint::from_polar(rho, theta)
    }

    /// Boundary action. Uses `g(e^{i xi}) = e^{i (xi + 2 arg(a + b e^{-i xi}))}`
    /// so no interior limit is taken.
    pub fn apply_boundary(&self, xi: IdealPoint) -> IdealPoint {
        let w = self.a + self.b * Complex64::from_polar(1.0, -xi.0);
        IdealPoint::new(xi.0 + 2.0 * w.arg())
    }

    /// `d(o, g o)`.
    pub fn displacement(&self) -> f64 {
        2.0 * self.b.norm().asinh()
    }

    pub fn max_coefficient_distance(&self, other: &Isometry) -> f64 {
        // SU(1,1) double-covers the isometry group; compare up to sign
        let plus = (self.a - other.a).norm().max((self.b - other.b).norm());
        let minus = (self.a + other.a).norm().max((self.b + other.b).norm());
        plus.min(minus)
    }
}

/// Additive Radon–Nikodym cocycle: `log c(g, xi) = B_xi(g^{-1} o)`.
pub fn height_cocycle(g: &Isometry, xi: IdealPoint) -> f64 {
    busemann(xi, &g.inverse().apply(&DiskPoint::ORIGIN))
}

/// An atom `(xi, s)` of a configuration on boundary × additive heights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub xi: IdealPoint,
    pub s: f64,
}

impl Atom {
    pub fn new(xi: f64, s: f64) -> Self {
        Self { xi: IdealPoint::new(xi), s }
    }

    /// The function `y -> B_xi(y) + s` associated with this atom.
    pub fn value(&self, y: &DiskPoint) -> f64 {
        busemann(self.xi, y) + self.s
    }

    /// `g (xi, s) = (g xi, s + B_xi(g^{-1} o))`.
    pub fn transport(&self, g: &Isometry) -> Atom {
        Atom { xi: g.apply_boundary(self.xi), s: self.s + height_cocycle(g, self.xi) }
    }
}

impl fmt::Display for Isometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.17e} {:.17e} {:.17e} {:.17e}", self.a.re, self.a.im, self.b.re, self.b.im)
    }
}

impl FromStr for Isometry {
    type Err = GeomError;

    fn from_str(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| GeomError::Parse { line: 1, msg: e.to_string() })?;
        if vals.len() != 4 {
            return Err(GeomError::Parse {
                line: 1,
                msg: format!("expected 4 reals, found {}", vals.len()),
            });
        }
        Self::from_coefficients(Complex64::new(vals[0], vals[1]), Complex64::new(vals[2], vals[3]))
    }
}

/// Sample a point from normalised hyperbolic area on the ball `B(o, radius)`.
pub fn sample_uniform_in_ball<R: Rng + ?Sized>(rng: &mut R, radius: f64) -> DiskPoint {
    sample_uniform_in_annulus(rng, 0.0, radius, 0.0, TAU)
}

/// Area-uniform sample on the sector `rho in [r0, r1]`, `theta in [t0, t1)`.
pub fn sample_uniform_in_annulus<R: Rng + ?Sized>(
    rng: &mut R,
    r0: f64,
    r1: f64,
    t0: f64,
    t1: f64,
) -> DiskPoint {
    let u: f64 = rng.random();
    let c0 = r0.cosh();
    // cosh(rho) = cosh(r0) + u (cosh(r1) - cosh(r0))
    let rho = (c0 + u * (r1.cosh() - c0)).acosh();
    let theta = t0 + rng.random::<f64>() * (t1 - t0);
    DiskPoint::from_polar(rho, theta)
}
