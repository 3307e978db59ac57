//! Model spaces, intensity measures and exact Poisson sampling on windows.
//!
//! Three model spaces are supported, each with its canonical measure:
//!
//! | space              | coordinates      | canonical measure            | window mass          |
//! |--------------------|------------------|------------------------------|----------------------|
//! | `EuclideanBox`     | `x_1 .. x_n`     | Lebesgue volume              | `∏ sides`            |
//! | `HyperbolicDisk`   | disk `(x, y)`    | `sinh ρ dρ dθ`               | `2π (cosh R − 1)`    |
//! | `BoundaryHeights`  | `(ξ, s)`         | `(dξ / 2π) ⊗ e^s ds`         | `e^{s_max}`          |
//!
//! An [`IntensityMeasure`] multiplies one of these by a positive scale.
//! Sampling draws `N ~ Pois(mass)` and then `N` i.i.d. locations from the
//! normalised measure.

use std::collections::HashSet;
use std::f64::consts::TAU;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{GeomError, Result};
use crate::hyperbolic::{self, wrap_angle, Atom, DiskPoint};
use crate::seed::SeedStream;

/// Largest hyperbolic window radius whose boundary is still strictly inside
/// the unit disk in double precision Cartesian coordinates.
pub const MAX_DISK_RADIUS: f64 = 36.0;

const ANGLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpaceModel {
    EuclideanBox { lo: Vec<f64>, hi: Vec<f64> },
    HyperbolicDisk { radius: f64 },
    BoundaryHeights { s_max: f64 },
}

impl SpaceModel {
    pub fn euclidean_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(GeomError::InvalidWindow(format!(
                "box corners must have equal nonzero dimension, got {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l.is_finite() && h.is_finite() && h > l) {
                return Err(GeomError::InvalidWindow(format!("side [{l}, {h}] is not a positive interval")));
            }
        }
        Ok(Self::EuclideanBox { lo, hi })
    }

    /// `[0, side_1] × … × [0, side_n]`.
    pub fn box_from_sides(sides: &[f64]) -> Result<Self> {
        Self::euclidean_box(vec![0.0; sides.len()], sides.to_vec())
    }

    pub fn hyperbolic_disk(radius: f64) -> Result<Self> {
        if !(radius > 0.0) || radius > MAX_DISK_RADIUS {
            return Err(GeomError::InvalidWindow(format!(
                "disk radius must lie in (0, {MAX_DISK_RADIUS}], got {radius}"
            )));
        }
        Ok(Self::HyperbolicDisk { radius })
    }

    pub fn boundary_heights(s_max: f64) -> Result<Self> {
        if !s_max.is_finite() {
            return Err(GeomError::UnboundedWindow);
        }
        Ok(Self::BoundaryHeights { s_max })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::EuclideanBox { lo, .. } => lo.len(),
            Self::HyperbolicDisk { .. } | Self::BoundaryHeights { .. } => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::EuclideanBox { .. } => "euclidean",
            Self::HyperbolicDisk { .. } => "hyperbolic",
            Self::BoundaryHeights { .. } => "heights",
        }
    }

    /// Mass of the window under the canonical (unscaled) measure.
    fn canonical_mass(&self) -> f64 {
        match self {
            Self::EuclideanBox { lo, hi } => lo.iter().zip(hi).map(|(l, h)| h - l).product(),
            Self::HyperbolicDisk { radius } => {
                let s = (radius / 2.0).sinh();
                TAU * 2.0 * s * s
            }
            Self::BoundaryHeights { s_max } => s_max.exp(),
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        if p.len() != self.dim() || p.iter().any(|x| !x.is_finite()) {
            return false;
        }
        match self {
            Self::EuclideanBox { lo, hi } => p.iter().zip(lo.iter().zip(hi)).all(|(x, (l, h))| l <= x && x <= h),
            Self::HyperbolicDisk { radius } => match DiskPoint::from_cartesian(p[0], p[1]) {
                Ok(z) => z.rho() <= radius * (1.0 + 1e-12) + 1e-12,
                Err(_) => false,
            },
            Self::BoundaryHeights { s_max } => (0.0..TAU).contains(&p[0]) && p[1] <= *s_max,
        }
    }

    pub fn has_metric(&self) -> bool {
        !matches!(self, Self::BoundaryHeights { .. })
    }

    /// Metric of the space, if it has one.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Option<f64> {
        match self {
            Self::EuclideanBox { .. } => Some(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()),
            Self::HyperbolicDisk { .. } => Some(hyperbolic::distance_cartesian(
                num_complex::Complex64::new(a[0], a[1]),
                num_complex::Complex64::new(b[0], b[1]),
            )),
            Self::BoundaryHeights { .. } => None,
        }
    }

    fn header(&self) -> String {
        match self {
            Self::EuclideanBox { lo, hi } => {
                let join = |v: &[f64]| v.iter().map(|x| fmt_real(*x)).collect::<Vec<_>>().join(",");
                format!("space=euclidean window={}:{}", join(lo), join(hi))
            }
            Self::HyperbolicDisk { radius } => format!("space=hyperbolic window={}", fmt_real(*radius)),
            Self::BoundaryHeights { s_max } => format!("space=heights window={}", fmt_real(*s_max)),
        }
    }

    fn parse_header(line: &str, lineno: usize) -> Result<Self> {
        let perr = |msg: String| GeomError::Parse { line: lineno, msg };
        let mut space = None;
        let mut window = None;
        for tok in line.split_whitespace() {
            match tok.split_once('=') {
                Some(("space", v)) => space = Some(v),
                Some(("window", v)) => window = Some(v),
                _ => return Err(perr(format!("unexpected header token `{tok}`"))),
            }
        }
        let (space, window) = match (space, window) {
            (Some(s), Some(w)) => (s, w),
            _ => return Err(perr("header needs `space=` and `window=`".into())),
        };
        let real = |s: &str| s.parse::<f64>().map_err(|e| perr(format!("`{s}`: {e}")));
        match space {
            "euclidean" => {
                let (lo, hi) = window.split_once(':').ok_or_else(|| perr("box window needs `lo:hi`".into()))?;
                let lo = lo.split(',').map(real).collect::<Result<Vec<_>>>()?;
                let hi = hi.split(',').map(real).collect::<Result<Vec<_>>>()?;
                Self::euclidean_box(lo, hi)
            }
            "hyperbolic" => Self::hyperbolic_disk(real(window)?),
            "heights" => Self::boundary_heights(real(window)?),
            other => Err(perr(format!("unknown space `{other}`"))),
        }
    }
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityMeasure {
    space: SpaceModel,
    scale: f64,
}

impl IntensityMeasure {
    pub fn new(space: SpaceModel, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(GeomError::InvalidParameter(format!("intensity scale must be positive, got {scale}")));
        }
        Ok(Self { space, scale })
    }

    pub fn space(&self) -> &SpaceModel {
        &self.space
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Total mass of the window.
    pub fn mass(&self) -> f64 {
        self.scale * self.space.canonical_mass()
    }

    pub fn region_mass(&self, region: &Region) -> f64 {
        self.scale * region.canonical_mass()
    }
}

/// Total mass `m(window)`.
pub fn mass(measure: &IntensityMeasure) -> f64 {
    measure.mass()
}

/// Poisson probability `e^{-t} t^k / k!`, evaluated in log space.
pub fn poisson_pmf(k: u64, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(GeomError::Domain(format!("Poisson parameter must be positive, got {t}")));
    }
    let k = k as f64;
    Ok((-t + k * t.ln() - ln_gamma(k + 1.0)).exp())
}

/// A measurable sub-region of a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// Axis-aligned box in a Euclidean window.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Polar sector `{ρ ∈ [rho_min, rho_max], θ ∈ [theta_min, theta_min + width)}` of the disk.
    Sector { rho_min: f64, rho_max: f64, theta_min: f64, width: f64 },
    /// `{ξ ∈ [xi_min, xi_min + width), s ∈ [s_min, s_max]}`; `s_min` may be `-∞`.
    HeightBox { xi_min: f64, width: f64, s_min: f64, s_max: f64 },
}

fn in_arc(angle: f64, start: f64, width: f64) -> bool {
    width >= TAU - ANGLE_TOL || (angle - start).rem_euclid(TAU) < width
}

impl Region {
    pub fn ball(radius: f64) -> Self {
        Self::Sector { rho_min: 0.0, rho_max: radius, theta_min: 0.0, width: TAU }
    }

    pub fn height_box(xi_min: f64, xi_max: f64, s_min: f64, s_max: f64) -> Self {
        Self::HeightBox { xi_min: wrap_angle(xi_min), width: xi_max - xi_min, s_min, s_max }
    }

    /// The region covering the whole window.
    pub fn whole(space: &SpaceModel) -> Self {
        match space {
            SpaceModel::EuclideanBox { lo, hi } => Self::Box { lo: lo.clone(), hi: hi.clone() },
            SpaceModel::HyperbolicDisk { radius } => Self::ball(*radius),
            SpaceModel::BoundaryHeights { s_max } => {
                Self::HeightBox { xi_min: 0.0, width: TAU, s_min: f64::NEG_INFINITY, s_max: *s_max }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Box { lo, hi } => !lo.is_empty() && lo.len() == hi.len() && lo.iter().zip(hi).all(|(l, h)| l <= h),
            Self::Sector { rho_min, rho_max, width, .. } => {
                *rho_min >= 0.0 && rho_max >= rho_min && (0.0..=TAU + ANGLE_TOL).contains(width)
            }
            Self::HeightBox { width, s_min, s_max, .. } => {
                s_max.is_finite() && s_min <= s_max && (0.0..=TAU + ANGLE_TOL).contains(width)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(GeomError::InvalidParameter(format!("malformed region {self:?}")))
        }
    }

    /// Whether the region is a subset of `window`.
    pub fn within(&self, window: &SpaceModel) -> bool {
        if self.validate().is_err() {
            return false;
        }
        match (self, window) {
            (Self::Box { lo, hi }, SpaceModel::EuclideanBox { lo: wl, hi: wh }) => {
                lo.len() == wl.len()
                    && lo.iter().zip(wl).all(|(a, b)| a >= b)
                    && hi.iter().zip(wh).all(|(a, b)| a <= b)
            }
            (Self::Sector { rho_max, .. }, SpaceModel::HyperbolicDisk { radius }) => rho_max <= radius,
            (Self::HeightBox { s_max, .. }, SpaceModel::BoundaryHeights { s_max: w }) => s_max <= w,
            _ => false,
        }
    }

    /// Whether the closed `r`-neighbourhood of the region lies inside `window`.
    pub fn enlargement_within(&self, r: f64, window: &SpaceModel) -> bool {
        match (self, window) {
            (Self::Box { lo, hi }, SpaceModel::EuclideanBox { .. }) => {
                let lo: Vec<f64> = lo.iter().map(|x| x - r).collect();
                let hi: Vec<f64> = hi.iter().map(|x| x + r).collect();
                Self::Box { lo, hi }.within(window)
            }
            // the r-neighbourhood of a sector lies in the ball B(o, rho_max + r)
            (Self::Sector { rho_max, .. }, SpaceModel::HyperbolicDisk { radius }) => {
                self.within(window) && rho_max + r <= *radius
            }
            _ => false,
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        match self {
            Self::Box { lo, hi } => {
                p.len() == lo.len() && p.iter().zip(lo.iter().zip(hi)).all(|(x, (l, h))| l <= x && x <= h)
            }
            Self::Sector { rho_min, rho_max, theta_min, width } => {
                if p.len() != 2 {
                    return false;
                }
                match DiskPoint::from_cartesian(p[0], p[1]) {
                    Ok(z) => {
                        *rho_min <= z.rho() && z.rho() <= rho_max * (1.0 + 1e-12) + 1e-12 && in_arc(z.theta(), *theta_min, *width)
                    }
                    Err(_) => false,
                }
            }
            Self::HeightBox { xi_min, width, s_min, s_max } => {
                p.len() == 2 && *s_min <= p[1] && p[1] <= *s_max && in_arc(p[0], *xi_min, *width)
            }
        }
    }

    pub fn contains_atom(&self, a: &Atom) -> bool {
        self.contains(&[a.xi.angle(), a.s])
    }

    fn canonical_mass(&self) -> f64 {
        match self {
            Self::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| h - l).product(),
            Self::Sector { rho_min, rho_max, width, .. } => {
                // ∫ sinh ρ dρ = cosh(ρ1) − cosh(ρ0) = 2 sinh((ρ1+ρ0)/2) sinh((ρ1−ρ0)/2)
                let w = width.min(TAU);
                w * 2.0 * ((rho_max + rho_min) / 2.0).sinh() * ((rho_max - rho_min) / 2.0).sinh()
            }
            Self::HeightBox { width, s_min, s_max, .. } => {
                let frac = width.min(TAU) / TAU;
                // e^{s_max} − e^{s_min} = e^{s_max} (1 − e^{s_min − s_max})
                frac * s_max.exp() * -(s_min - s_max).exp_m1()
            }
        }
    }

    /// One point from the normalised measure restricted to the region.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Self::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| l + rng.random::<f64>() * (h - l)).collect(),
            Self::Sector { rho_min, rho_max, theta_min, width } => {
                let z = hyperbolic::sample_uniform_in_annulus(
                    rng,
                    *rho_min,
                    *rho_max,
                    *theta_min,
                    theta_min + width.min(TAU),
                )
                .to_complex();
                vec![z.re, z.im]
            }
            Self::HeightBox { xi_min, width, s_min, s_max } => {
                let xi = wrap_angle(xi_min + rng.random::<f64>() * width.min(TAU));
                // inverse CDF of e^s on [s_min, s_max]
                let u: f64 = 1.0 - rng.random::<f64>();
                let span = s_min - s_max;
                let s = if span == f64::NEG_INFINITY {
                    s_max + u.ln()
                } else {
                    s_max + (1.0 + u * span.exp_m1()).ln()
                };
                vec![xi, s.max(*s_min)]
            }
        }
    }
}

/// A finite simple point configuration in a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    window: SpaceModel,
    coords: Vec<f64>,
}

fn point_key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|x| x.to_bits()).collect()
}

impl Configuration {
    pub fn empty(window: SpaceModel) -> Self {
        Self { window, coords: Vec::new() }
    }

    pub fn new(window: SpaceModel, points: Vec<Vec<f64>>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(points.len());
        let mut coords = Vec::with_capacity(points.len() * window.dim());
        for (i, p) in points.iter().enumerate() {
            if !window.contains(p) {
                return Err(GeomError::OutsideWindow(format!("point {i} = {p:?}")));
            }
            if !seen.insert(point_key(p)) {
                return Err(GeomError::DuplicatePoint(i));
            }
            coords.extend_from_slice(p);
        }
        Ok(Self { window, coords })
    }

    pub fn window(&self) -> &SpaceModel {
        &self.window
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim())
    }

    pub fn position(&self, x: &[f64]) -> Option<usize> {
        self.points().position(|p| p == x)
    }

    /// Point `i` as a disk point; `None` unless the window is a hyperbolic disk.
    pub fn disk_point(&self, i: usize) -> Option<DiskPoint> {
        match self.window {
            SpaceModel::HyperbolicDisk { .. } => {
                let p = self.point(i);
                DiskPoint::from_cartesian(p[0], p[1]).ok()
            }
            _ => None,
        }
    }

    pub fn disk_points(&self) -> Option<Vec<DiskPoint>> {
        (0..self.len()).map(|i| self.disk_point(i)).collect()
    }

    /// Append `x`, returning its index. Existing points are not duplicated.
    pub fn insert(&mut self, x: &[f64]) -> Result<usize> {
        if !self.window.contains(x) {
            return Err(GeomError::OutsideWindow(format!("{x:?}")));
        }
        if let Some(i) = self.position(x) {
            return Ok(i);
        }
        self.coords.extend_from_slice(x);
        Ok(self.len() - 1)
    }

    /// Sub-configuration of the points satisfying `keep`.
    pub fn filter<F: FnMut(usize, &[f64]) -> bool>(&self, mut keep: F) -> Configuration {
        let mut coords = Vec::new();
        for (i, p) in self.points().enumerate() {
            if keep(i, p) {
                coords.extend_from_slice(p);
            }
        }
        Configuration { window: self.window.clone(), coords }
    }

    /// Text form: optional `#` comment lines, the `space=… window=…` header,
    /// then one point per line.
    pub fn to_text(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "{}", self.window.header());
        for p in self.points() {
            let line: Vec<String> = p.iter().map(|x| fmt_real(*x)).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut window = None;
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if window.is_none() {
                window = Some(SpaceModel::parse_header(line, i + 1)?);
                continue;
            }
            let p = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| GeomError::Parse { line: i + 1, msg: e.to_string() })?;
            points.push(p);
        }
        let window = window.ok_or(GeomError::Parse { line: 0, msg: "missing header".into() })?;
        Self::new(window, points)
    }
}

/// Number of points of `config` in `region`.
pub fn count_in(config: &Configuration, region: &Region) -> Result<usize> {
    if !region.within(config.window()) {
        return Err(GeomError::RegionEscapesWindow(format!("{region:?}")));
    }
    Ok(config.points().filter(|p| region.contains(p)).count())
}

pub(crate) fn draw_count<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> Result<u64> {
    if !mean.is_finite() {
        return Err(GeomError::UnboundedWindow);
    }
    if mean <= 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|e| GeomError::Overflow(format!("Poisson({mean}): {e}")))?;
    Ok(dist.sample(rng) as u64)
}

/// Poisson process with intensity `measure` restricted to `region`.
pub fn sample_poisson_in(measure: &IntensityMeasure, region: &Region, seed: &SeedStream) -> Result<Configuration> {
    if !region.within(measure.space()) {
        return Err(GeomError::RegionEscapesWindow(format!("{region:?}")));
    }
    let mut rng = seed.rng();
    let n = draw_count(&mut rng, measure.region_mass(region))?;
    let dim = measure.space().dim();
    let mut coords = Vec::with_capacity(n as usize * dim);
    let mut seen = HashSet::with_capacity(n as usize);
    for _ in 0..n {
        let p = region.sample_point(&mut rng);
        // exact repeats have probability zero under a nonatomic measure
        if seen.insert(point_key(&p)) {
            coords.extend_from_slice(&p);
        }
    }
    Ok(Configuration { window: measure.space().clone(), coords })
}

/// Poisson process with intensity `measure` on its whole window.
pub fn sample_poisson(measure: &IntensityMeasure, seed: &SeedStream) -> Result<Configuration> {
    sample_poisson_in(measure, &Region::whole(measure.space()), seed)
}
