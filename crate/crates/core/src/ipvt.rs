//! The ideal Poisson–Voronoi tessellation of the hyperbolic plane.
//!
//! Atoms `(ξ, s)` live on boundary × additive heights with intensity
//! `(dξ/2π) ⊗ e^s ds`; atom `i` contributes the function `B_{ξ_i}(y) + s_i`.
//!
//! Sampling is exact on a ball `B(o, R)`. Since `|B_ξ(y)| <= d(o, y)`, every
//! member value at `y ∈ B(o, R)` is at least `s − R`, while the minimum at `y`
//! is at most `s₀ + R`. Atoms higher than `s₀ + 2R` therefore never win in the
//! ball and are not drawn.
//!
//! Low-intensity Poisson–Voronoi tessellations couple to this picture through
//! `x ↦ (direction of x, d(o, x) − r_t)` with `r_t = −ln(π t)`. In polar
//! coordinates the intensity `t sinh ρ dρ dθ` becomes, with `s = ρ − r_t`,
//! approximately `(t e^{r_t} / 2) e^s ds dθ`; matching `e^s ds dθ / 2π` gives
//! `e^{r_t} = 1 / (π t)`.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::hyperbolic::{busemann, hyperbolic_distance, sample_uniform_in_ball, Atom, DiskPoint, IdealPoint, Isometry};
use crate::measure::{
    draw_count, fmt_real, sample_poisson, sample_poisson_in, Configuration, IntensityMeasure, Region, SpaceModel,
    MAX_DISK_RADIUS,
};
use crate::report::{Decision, MonteCarlo, TestReport};
use crate::seed::SeedStream;
use crate::stats::{chi_square_poisson, ks_one_sample, ks_two_sample, mean_se, z_score};
use crate::tessellation::{assign, grid, ray_margins, unboundedness_probe, FunctionFamily, Query};

/// Refuse to draw more atoms than this in one configuration.
pub const MAX_ATOMS: f64 = 5.0e7;

/// Agreement fraction at `t = 1e-3`, `R_query = 1`, measured once and frozen
/// (4000 replicas × 200 queries, root seed 20240611; SE 2.5e-6).
pub const AGREEMENT_AT_T3: f64 = 0.999995;

/// Cap and spacing of the radii scanned by [`unboundedness_experiment`].
pub const PROBE_CAP: f64 = 50.0;
pub const PROBE_STEP: f64 = 0.5;

/// Atoms on boundary × heights, exact on `B(o, r_valid)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealConfiguration {
    atoms: Vec<Atom>,
    r_valid: f64,
    complete_below: f64,
    degraded: bool,
    seed: String,
}

fn sort_atoms(atoms: &mut [Atom]) {
    atoms.sort_by(|a, b| a.s.total_cmp(&b.s).then(a.xi.angle().total_cmp(&b.xi.angle())));
}

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Open01)
}

/// Heights in `(lo, hi]` from the density `e^s`, by inverse CDF.
fn fill_heights<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64, atoms: &mut Vec<Atom>) -> Result<()> {
    if hi <= lo {
        return Ok(());
    }
    let span = (hi - lo).exp_m1();
    let mean = lo.exp() * span;
    if mean > MAX_ATOMS {
        return Err(GeomError::Overflow(format!("{mean:.3e} expected atoms below height {hi}")));
    }
    let n = draw_count(rng, mean)?;
    atoms.reserve(n as usize);
    for _ in 0..n {
        let s = lo + (open01(rng) * span).ln_1p();
        let xi = rng.random::<f64>() * TAU;
        atoms.push(Atom::new(xi, s.min(hi)));
    }
    Ok(())
}

/// Lowest height: `P[s₀ <= u] = 1 − exp(−e^u)`, the void probability below `u`.
fn sample_min_height<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (-open01(rng).ln()).ln()
}

/// Exact sample of the atoms that can matter on `B(o, r_valid)`.
pub fn sample_ipvt(r_valid: f64, seed: &SeedStream) -> Result<IdealConfiguration> {
    if !(r_valid > 0.0) || !r_valid.is_finite() {
        return Err(GeomError::InvalidParameter(format!("validity radius must be positive, got {r_valid}")));
    }
    let mut rng = seed.rng();
    let s0 = sample_min_height(&mut rng);
    build(&mut rng, s0, s0 + 2.0 * r_valid, seed)
}

/// Every atom up to height `max(ceiling, s₀)`.
pub fn sample_ipvt_to_ceiling(ceiling: f64, seed: &SeedStream) -> Result<IdealConfiguration> {
    if !ceiling.is_finite() {
        return Err(GeomError::InvalidParameter(format!("height ceiling must be finite, got {ceiling}")));
    }
    let mut rng = seed.rng();
    let s0 = sample_min_height(&mut rng);
    build(&mut rng, s0, ceiling.max(s0), seed)
}

fn build<R: Rng + ?Sized>(rng: &mut R, s0: f64, complete_below: f64, seed: &SeedStream) -> Result<IdealConfiguration> {
    let mut atoms = vec![Atom::new(rng.random::<f64>() * TAU, s0)];
    fill_heights(rng, s0, complete_below, &mut atoms)?;
    sort_atoms(&mut atoms);
    Ok(IdealConfiguration {
        atoms,
        r_valid: (complete_below - s0) / 2.0,
        complete_below,
        degraded: false,
        seed: seed.to_string(),
    })
}

impl IdealConfiguration {
    /// Configuration from explicit atoms, taken to be every atom up to
    /// `complete_below`.
    pub fn from_atoms(mut atoms: Vec<Atom>, complete_below: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(GeomError::EmptyFamily);
        }
        sort_atoms(&mut atoms);
        let s0 = atoms[0].s;
        if complete_below < s0 {
            return Err(GeomError::InvalidParameter(format!(
                "completeness ceiling {complete_below} lies below the lowest atom {s0}"
            )));
        }
        atoms.retain(|a| a.s <= complete_below);
        Ok(Self { atoms, r_valid: (complete_below - s0) / 2.0, complete_below, degraded: false, seed: String::new() })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn r_valid(&self) -> f64 {
        self.r_valid
    }

    pub fn s_min(&self) -> f64 {
        self.atoms[0].s
    }

    /// Every atom with height at most this value is present.
    pub fn complete_below(&self) -> f64 {
        self.complete_below
    }

    /// Set when a transport left no positive validity radius.
    pub fn degraded(&self) -> bool {
        self.degraded
    }

    pub fn seed(&self) -> &str {
        &self.seed
    }

    /// Add the atoms with heights in `(complete_below, complete_below + extra]`.
    /// Existing atoms keep their indices.
    pub fn extend_ceiling(&self, extra: f64, seed: &SeedStream) -> Result<Self> {
        if !(extra >= 0.0) {
            return Err(GeomError::InvalidParameter(format!("ceiling extension must be nonnegative, got {extra}")));
        }
        let mut rng = seed.rng();
        let mut added = Vec::new();
        fill_heights(&mut rng, self.complete_below, self.complete_below + extra, &mut added)?;
        sort_atoms(&mut added);
        let mut atoms = self.atoms.clone();
        atoms.extend(added);
        let complete_below = self.complete_below + extra;
        Ok(Self {
            atoms,
            r_valid: (complete_below - self.s_min()) / 2.0,
            complete_below,
            degraded: self.degraded,
            seed: self.seed.clone(),
        })
    }

    pub fn to_text(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "# r_valid={}", fmt_real(self.r_valid));
        let _ = writeln!(out, "# complete_below={}", fmt_real(self.complete_below));
        let _ = writeln!(out, "# seed={}", self.seed);
        if self.degraded {
            let _ = writeln!(out, "# degraded=true");
        }
        for a in &self.atoms {
            let _ = writeln!(out, "xi={} s={}", fmt_real(a.xi.angle()), fmt_real(a.s));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut atoms = Vec::new();
        let mut complete_below = None;
        let mut seed = String::new();
        let mut degraded = false;
        let real = |line: usize, v: &str| {
            v.parse::<f64>().map_err(|e| GeomError::Parse { line, msg: format!("{v:?}: {e}") })
        };
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let l = raw.trim();
            if l.is_empty() {
                continue;
            }
            if let Some(c) = l.strip_prefix('#') {
                let c = c.trim();
                if let Some(v) = c.strip_prefix("complete_below=") {
                    complete_below = Some(real(line, v)?);
                } else if let Some(v) = c.strip_prefix("seed=") {
                    seed = v.to_string();
                } else if c == "degraded=true" {
                    degraded = true;
                }
                continue;
            }
            let mut xi = None;
            let mut s = None;
            for field in l.split_whitespace() {
                match field.split_once('=') {
                    Some(("xi", v)) => xi = Some(real(line, v)?),
                    Some(("s", v)) => s = Some(real(line, v)?),
                    _ => return Err(GeomError::Parse { line, msg: format!("unexpected field {field:?}") }),
                }
            }
            match (xi, s) {
                (Some(xi), Some(s)) => atoms.push(Atom::new(xi, s)),
                _ => return Err(GeomError::Parse { line, msg: "expected `xi=<radians> s=<height>`".into() }),
            }
        }
        let complete_below = complete_below
            .ok_or_else(|| GeomError::Parse { line: 0, msg: "missing complete_below header".into() })?;
        let mut ic = Self::from_atoms(atoms, complete_below)?;
        ic.seed = seed;
        ic.degraded = degraded;
        if degraded {
            ic.r_valid = 0.0;
        }
        Ok(ic)
    }
}

/// The Busemann family `y ↦ B_{ξ_i}(y) + s_i` of the atoms.
pub fn ipvt_family(ic: &IdealConfiguration) -> FunctionFamily {
    FunctionFamily::Busemann { atoms: ic.atoms.clone(), complete_below: ic.complete_below }
}

/// Transport every atom by `g`. Also returns where each original atom went
/// (`None` when trimmed).
///
/// Heights move by at most the displacement `L` of `g`, so the image is
/// complete below `complete_below − L`; atoms above that are dropped and the
/// validity radius recomputed. With no positive radius left, only the lowest
/// atom is kept and the result is flagged as degraded.
pub fn act_on_ideal_indexed(g: &Isometry, ic: &IdealConfiguration) -> (IdealConfiguration, Vec<Option<usize>>) {
    let moved: Vec<Atom> = ic.atoms.iter().map(|a| a.transport(g)).collect();
    let mut order: Vec<usize> = (0..moved.len()).collect();
    order.sort_by(|&i, &j| moved[i].s.total_cmp(&moved[j].s).then(moved[i].xi.angle().total_cmp(&moved[j].xi.angle())));
    let s0 = moved[order[0]].s;
    let complete_below = ic.complete_below - g.displacement();
    let degraded = complete_below <= s0;
    let keep = |a: &Atom| if degraded { a.s <= s0 } else { a.s <= complete_below };

    let mut index = vec![None; moved.len()];
    let mut atoms = Vec::new();
    for &i in &order {
        if keep(&moved[i]) {
            index[i] = Some(atoms.len());
            atoms.push(moved[i]);
        }
    }
    let out = IdealConfiguration {
        atoms,
        r_valid: if degraded { 0.0 } else { (complete_below - s0) / 2.0 },
        complete_below: if degraded { s0 } else { complete_below },
        degraded: degraded || ic.degraded,
        seed: ic.seed.clone(),
    };
    (out, index)
}

pub fn act_on_ideal(g: &Isometry, ic: &IdealConfiguration) -> IdealConfiguration {
    act_on_ideal_indexed(g, ic).0
}

/// Height offset `r_t = −ln(π t)` matching intensity `t` to unit boundary intensity.
pub fn height_offset(t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(GeomError::InvalidParameter(format!("intensity must be positive, got {t}")));
    }
    Ok(-(PI * t).ln())
}

/// A disk configuration seen from the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPvt {
    /// `(direction of x, d(o, x) − r_t)`, in configuration order.
    pub atoms: Vec<Atom>,
    pub offset: f64,
    /// `y ↦ d(x, y) − r_t`.
    pub family: FunctionFamily,
}

impl NormalizedPvt {
    /// The Busemann family of the atom images, indexed like `family`.
    pub fn coupled_family(&self, complete_below: f64) -> FunctionFamily {
        FunctionFamily::Busemann { atoms: self.atoms.clone(), complete_below }
    }
}

pub fn normalize_pvt(config: &Configuration, t: f64) -> Result<NormalizedPvt> {
    let offset = height_offset(t)?;
    let points = match config.window() {
        SpaceModel::HyperbolicDisk { .. } => config.disk_points(),
        _ => None,
    }
    .ok_or_else(|| GeomError::SpaceMismatch("normalization needs a configuration on the disk".into()))?;
    let atoms = points.iter().map(|x| Atom::new(x.theta(), x.rho() - offset)).collect();
    let family = FunctionFamily::normalized_global(config, offset)?;
    Ok(NormalizedPvt { atoms, offset, family })
}

/// Fraction of `queries` whose winner under the normalized distance family
/// equals the winner under the coupled Busemann family.
pub fn coupled_agreement(config: &Configuration, t: f64, queries: &[DiskPoint]) -> Result<f64> {
    if queries.is_empty() {
        return Err(GeomError::InvalidParameter("no query points".into()));
    }
    // only points within 2 max|y| of the nearest one can win at some query
    let reach = queries.iter().map(|y| y.rho()).fold(0.0, f64::max);
    let rho = |p: &[f64]| 2.0 * p[0].hypot(p[1]).atanh();
    let nearest = config.points().map(rho).fold(f64::INFINITY, f64::min);
    let config = config.filter(|_, p| rho(p) <= nearest + 2.0 * reach);
    let n = normalize_pvt(&config, t)?;
    let qs: Vec<Query> = queries.iter().map(|&y| Query::Disk(y)).collect();
    let a = assign(&n.family, &qs)?;
    let b = assign(&n.coupled_family(f64::INFINITY), &qs)?;
    let same = a.winners.iter().zip(&b.winners).filter(|(x, y)| x == y).count();
    Ok(same as f64 / queries.len() as f64)
}

/// Poisson sample of intensity `t` on a disk large enough that every point
/// able to win in `B(o, r_query)` is present: the window covers `ρ_min + 2 r_query`.
pub fn sample_covering_pvt(t: f64, r_query: f64, seed: &SeedStream) -> Result<Configuration> {
    let offset = height_offset(t)?;
    let overflow = || GeomError::Overflow(format!("window for intensity t = {t} exceeds the numeric range"));
    let mut radius = offset.max(0.0) + 2.0 * r_query + 3.0;
    if radius > MAX_DISK_RADIUS {
        return Err(overflow());
    }
    let mut config = sample_poisson(&IntensityMeasure::new(SpaceModel::hyperbolic_disk(radius)?, t)?, &seed.child(0))?;
    for round in 1.. {
        let rho_min = config.disk_points().into_iter().flatten().map(|p| p.rho()).fold(f64::INFINITY, f64::min);
        let needed = if rho_min.is_finite() { rho_min + 2.0 * r_query } else { radius + 3.0 };
        if needed <= radius {
            return Ok(config);
        }
        if needed > MAX_DISK_RADIUS {
            return Err(overflow());
        }
        let window = SpaceModel::hyperbolic_disk(needed)?;
        let shell = Region::Sector { rho_min: radius, rho_max: needed, theta_min: 0.0, width: TAU };
        let extra = sample_poisson_in(&IntensityMeasure::new(window.clone(), t)?, &shell, &seed.child(round))?;
        let mut merged = Configuration::empty(window);
        for p in config.points().chain(extra.points()) {
            merged.insert(p)?;
        }
        config = merged;
        radius = needed;
    }
    unreachable!()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceParams {
    /// Strictly decreasing intensities.
    pub intensities: Vec<f64>,
    pub r_query: f64,
    pub n_queries: usize,
    /// Regression value for the last intensity; `None` checks the trend only.
    pub floor: Option<f64>,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        Self { intensities: vec![1e-1, 1e-2, 1e-3], r_query: 1.0, n_queries: 200, floor: Some(AGREEMENT_AT_T3) }
    }
}

/// Mean coupled agreement per intensity. Passes iff the means do not drop by
/// more than 2 combined SE between consecutive intensities and the last one
/// is within 3 SE of, or above, the floor.
pub fn convergence_experiment(params: &ConvergenceParams, mc: &MonteCarlo) -> Result<TestReport> {
    let ts = &params.intensities;
    if ts.is_empty() || ts.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(GeomError::InvalidParameter(format!("intensities must be strictly decreasing, got {ts:?}")));
    }
    if !(params.r_query > 0.0) || params.n_queries == 0 {
        return Err(GeomError::InvalidParameter("need a positive query radius and at least one query".into()));
    }
    for &t in ts {
        height_offset(t)?;
    }
    let rows = mc.run("ipvt-converge", |s| {
        let mut rng = s.fork("queries").rng();
        let queries: Vec<DiskPoint> =
            (0..params.n_queries).map(|_| sample_uniform_in_ball(&mut rng, params.r_query)).collect();
        ts.iter()
            .enumerate()
            .map(|(k, &t)| coupled_agreement(&sample_covering_pvt(t, params.r_query, &s.child(k as u64))?, t, &queries))
            .collect::<Result<Vec<f64>>>()
    })?;

    let mut rep = TestReport::new("ipvt-converge", mc)
        .param("intensities", ts.clone())
        .param("r_query", params.r_query)
        .param("n_queries", params.n_queries as u64);
    for k in 0..ts.len() {
        let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        let (m, se) = mean_se(&col);
        rep.estimate.push(m);
        rep.se.push(se);
    }
    let mut ok = true;
    for k in 1..ts.len() {
        let se = rep.se[k].hypot(rep.se[k - 1]);
        if rep.estimate[k] < rep.estimate[k - 1] - 2.0 * se {
            ok = false;
            rep.notes.push(format!("agreement drops from t = {} to t = {}", ts[k - 1], ts[k]));
        }
    }
    let last = ts.len() - 1;
    match params.floor {
        Some(floor) => {
            rep = rep.param("floor", floor);
            let z = z_score(rep.estimate[last] - floor, rep.se[last]);
            rep.z = Some(z);
            if z < -mc.z_max {
                ok = false;
                rep.notes.push(format!("final agreement below the regression value {floor}"));
            }
        }
        None => rep.notes.push("no regression value supplied; trend only".into()),
    }
    rep.decision = Decision::from_bool(ok);
    Ok(rep)
}

/// `g` applied to the atoms of a height box region.
fn atoms_in<R: Rng + ?Sized>(region: &Region, rng: &mut R) -> Result<Vec<Atom>> {
    let m = region_mass(region)?;
    let n = draw_count(rng, m)?;
    Ok((0..n)
        .map(|_| {
            let p = region.sample_point(rng);
            Atom::new(p[0], p[1])
        })
        .collect())
}

fn region_mass(region: &Region) -> Result<f64> {
    match region {
        Region::HeightBox { s_min, s_max, .. } if s_min.is_finite() && s_max.is_finite() && s_min <= s_max => {
            Ok(IntensityMeasure::new(SpaceModel::boundary_heights(*s_max)?, 1.0)?.region_mass(region))
        }
        _ => Err(GeomError::InvalidParameter(format!("expected a bounded height box, got {region:?}"))),
    }
}

/// Probability that a height box holds at least one atom: `1 − e^{−m}`.
pub fn occupancy_probability(region: &Region) -> Result<f64> {
    Ok(-(-region_mass(region)?).exp_m1())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingParams {
    /// Events are "at least one atom in the box".
    pub box_a: Region,
    pub box_b: Region,
    pub lengths: Vec<f64>,
    /// Direction of the translations.
    pub axis: f64,
}

impl Default for MixingParams {
    fn default() -> Self {
        let b = Region::height_box(0.0, PI / 4.0, -1.0, 0.0);
        Self { box_a: b.clone(), box_b: b, lengths: vec![0.0, 5.0, 10.0, 20.0], axis: 0.0 }
    }
}

/// One replica: indicators of `B` and of `g A` on a configuration sampled
/// exactly on `B ∪ g A`.
///
/// The process on `g A` is the image of a sample on `A` (the action preserves
/// the intensity); its points landing in `B` are replaced by the sample on `B`.
fn mixing_replica(params: &MixingParams, g: &Isometry, seed: &SeedStream) -> Result<(bool, bool)> {
    let on_b = atoms_in(&params.box_b, &mut seed.child(0).rng())?;
    let on_a = atoms_in(&params.box_a, &mut seed.child(1).rng())?;
    let g_inv = g.inverse();
    let in_b = !on_b.is_empty();
    let in_ga = on_b.iter().any(|p| params.box_a.contains_atom(&p.transport(&g_inv)))
        || on_a.iter().any(|q| !params.box_b.contains_atom(&q.transport(g)));
    Ok((in_b, in_ga))
}

/// Covariance of `1_B` and `1_{g_L A}` for each translation length.
/// Passes iff the last covariance is within `z_max` SE of zero and, when the
/// list starts at `L = 0` with `A = B`, strictly smaller in size than the first.
pub fn mixing_experiment(params: &MixingParams, mc: &MonteCarlo) -> Result<TestReport> {
    if params.lengths.is_empty() || params.lengths.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(GeomError::InvalidParameter(format!("translation lengths {:?}", params.lengths)));
    }
    let p_a = occupancy_probability(&params.box_a)?;
    occupancy_probability(&params.box_b)?;

    let mut rep = TestReport::new("ipvt-mixing", mc)
        .param("lengths", params.lengths.clone())
        .param("axis", params.axis)
        .param("box_a", serde_json::to_value(&params.box_a).expect("plain data"))
        .param("box_b", serde_json::to_value(&params.box_b).expect("plain data"))
        .param("occupancy_a", p_a);

    let mut first_a = Vec::new();
    for (k, &l) in params.lengths.iter().enumerate() {
        let g = Isometry::translation(l, params.axis);
        let pairs = mc.run(&format!("ipvt-mixing/{k}"), |s| mixing_replica(params, &g, s))?;
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as u8 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as u8 as f64).collect();
        let (mx, _) = mean_se(&x);
        let (my, _) = mean_se(&y);
        let prod: Vec<f64> = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).collect();
        let (cov, se) = mean_se(&prod);
        rep.estimate.push(cov);
        rep.se.push(se);
        if k == 0 {
            first_a = y;
        }
    }
    let (mu_a, se_a) = mean_se(&first_a);
    rep.notes.push(format!(
        "occupancy of g A at the first length: {mu_a:.5} ± {se_a:.5}, void-probability value {p_a:.5}, z = {:.3}",
        z_score(mu_a - p_a, se_a)
    ));

    let last = params.lengths.len() - 1;
    let z = z_score(rep.estimate[last], rep.se[last]);
    rep.z = Some(z);
    let mut ok = z.abs() < mc.z_max;
    if params.lengths[0] == 0.0 && params.box_a == params.box_b && last > 0 {
        ok &= rep.estimate[last].abs() < rep.estimate[0].abs();
    }
    rep.decision = Decision::from_bool(ok);
    Ok(rep)
}

/// KS test of the lowest height against `1 − exp(−e^u)`.
pub fn min_height_law(mc: &MonteCarlo) -> Result<TestReport> {
    let s0 = mc.run("ipvt-s0", |s| Ok(sample_min_height(&mut s.rng())))?;
    let ks = ks_one_sample(&s0, |u| -(-u.exp()).exp_m1());
    let mut rep = TestReport::new("ipvt-s0", mc);
    rep.estimate = vec![ks.statistic];
    rep.p = Some(ks.p_value);
    rep.decision = Decision::from_bool(ks.p_value > mc.p_min);
    Ok(rep)
}

/// Raise the height cutoff by `extra` and count grid points of `B(o, r_valid)`
/// whose winner changes. Passes iff none does in any replica.
pub fn truncation_soundness(r_valid: f64, grid_h: f64, extra: f64, mc: &MonteCarlo) -> Result<TestReport> {
    let g = grid(&SpaceModel::hyperbolic_disk(r_valid)?, grid_h)?;
    let changed = mc.run("ipvt-truncation", |s| {
        let ic = sample_ipvt(r_valid, &s.child(0))?;
        let wider = ic.extend_ceiling(extra, &s.child(1))?;
        let a = assign(&ipvt_family(&ic), &g.queries)?;
        let b = assign(&ipvt_family(&wider), &g.queries)?;
        Ok(a.winners.iter().zip(&b.winners).filter(|(x, y)| x != y).count() as f64)
    })?;
    let total: f64 = changed.iter().sum();
    let mut rep = TestReport::new("ipvt-truncation", mc)
        .param("r_valid", r_valid)
        .param("grid_h", grid_h)
        .param("extra", extra)
        .param("grid_points", g.queries.len() as u64);
    rep.estimate = vec![total];
    rep.decision = Decision::from_bool(total == 0.0);
    Ok(rep)
}

/// Whether the winner at the origin is the lowest atom, in every replica.
pub fn origin_winner_check(r_valid: f64, mc: &MonteCarlo) -> Result<TestReport> {
    let hits = mc.run("ipvt-origin", |s| {
        let ic = sample_ipvt(r_valid, s)?;
        let a = assign(&ipvt_family(&ic), &[Query::Disk(DiskPoint::ORIGIN)])?;
        Ok(ic.atoms[a.winners[0]].s == ic.s_min())
    })?;
    let misses = hits.iter().filter(|h| !**h).count();
    let mut rep = TestReport::new("ipvt-origin", mc).param("r_valid", r_valid);
    rep.estimate = vec![misses as f64];
    rep.decision = Decision::from_bool(misses == 0);
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceParams {
    pub ceiling: f64,
    pub max_length: f64,
    pub region: Region,
}

impl Default for InvarianceParams {
    fn default() -> Self {
        Self { ceiling: 4.0, max_length: 2.0, region: Region::height_box(0.0, PI / 2.0, -2.0, 1.0) }
    }
}

/// Counts in a fixed box after a random isometry, compared with direct
/// sampling by a two-sample KS test.
pub fn invariance_experiment(params: &InvarianceParams, mc: &MonteCarlo) -> Result<TestReport> {
    let m = region_mass(&params.region)?;
    let Region::HeightBox { s_max, .. } = params.region else { unreachable!() };
    if s_max > params.ceiling - params.max_length {
        return Err(GeomError::BeyondValidity(format!(
            "box reaches height {s_max}, above the guaranteed ceiling {} after transport",
            params.ceiling - params.max_length
        )));
    }
    let count = |ic: &IdealConfiguration| ic.atoms.iter().filter(|a| params.region.contains_atom(a)).count() as f64;
    let moved = mc.run("ipvt-invariance/moved", |s| {
        let ic = sample_ipvt_to_ceiling(params.ceiling, &s.child(0))?;
        let g = Isometry::random(&mut s.child(1).rng(), params.max_length);
        Ok(count(&act_on_ideal(&g, &ic)))
    })?;
    let direct = mc.run("ipvt-invariance/direct", |s| Ok(count(&sample_ipvt_to_ceiling(params.ceiling, s)?)))?;
    let ks = ks_two_sample(&moved, &direct);
    let chi = chi_square_poisson(&moved.iter().map(|&c| c as u64).collect::<Vec<_>>(), m);

    let mut rep = TestReport::new("ipvt-invariance", mc)
        .param("ceiling", params.ceiling)
        .param("max_length", params.max_length)
        .param("box_mass", m);
    let (a, sa) = mean_se(&moved);
    let (b, sb) = mean_se(&direct);
    rep.estimate = vec![a, b];
    rep.se = vec![sa, sb];
    rep.p = Some(ks.p_value);
    rep.notes.push(format!("transported counts vs Poisson({m:.5}): chi-square p = {:.4}", chi.p_value));
    rep.decision = Decision::from_bool(ks.p_value > mc.p_min);
    Ok(rep)
}

/// Probe radii `0, PROBE_STEP, …, PROBE_CAP`.
pub fn probe_radii() -> Vec<f64> {
    (0..=(PROBE_CAP / PROBE_STEP) as usize).map(|k| k as f64 * PROBE_STEP).collect()
}

/// For each replica, every atom winning at a grid point of `B(o, r_query)`
/// must win at the probe cap along its own ray. Passes iff the fraction of
/// replicas where all do is at least `min_fraction`.
pub fn unboundedness_experiment(r_query: f64, grid_h: f64, min_fraction: f64, mc: &MonteCarlo) -> Result<TestReport> {
    let g = grid(&SpaceModel::hyperbolic_disk(r_query)?, grid_h)?;
    let radii = probe_radii();
    let rows = mc.run("ipvt-unbounded", |s| {
        // winners in B(o, r) have heights at most s₀ + 2r, all present
        let ic = sample_ipvt(r_query, s)?;
        let f = ipvt_family(&ic);
        let mut winners = assign(&f, &g.queries)?.winners;
        winners.sort_unstable();
        winners.dedup();
        let mut failures = Vec::new();
        for &i in &winners {
            let hit = unboundedness_probe(&f, i, &radii)?;
            if !hit.last().copied().unwrap_or(false) {
                let m = ray_margins(&f, i, &radii)?;
                let trend: Vec<String> = m.iter().step_by(20).map(|x| format!("{x:.3}")).collect();
                failures.push(format!("{s} atom {i}: margins {}", trend.join(" ")));
            }
        }
        Ok((winners.len(), failures))
    })?;
    let good = rows.iter().filter(|r| r.1.is_empty()).count();
    let frac = good as f64 / rows.len().max(1) as f64;
    let mut rep = TestReport::new("ipvt-unbounded", mc)
        .param("r_query", r_query)
        .param("grid_h", grid_h)
        .param("cap", PROBE_CAP)
        .param("min_fraction", min_fraction)
        .param("winners", rows.iter().map(|r| r.0 as u64).sum::<u64>());
    rep.estimate = vec![frac];
    rep.notes = rows.into_iter().flat_map(|r| r.1).collect();
    rep.decision = Decision::from_bool(frac >= min_fraction);
    Ok(rep)
}

/// Distance-family and Busemann-family values at `y` for the atom image of `x`;
/// their gap vanishes as `x` recedes.
pub fn coupling_error(x: &DiskPoint, y: &DiskPoint) -> f64 {
    (hyperbolic_distance(x, y) - x.rho() - busemann(IdealPoint::new(x.theta()), y)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ss(n: u64) -> SeedStream {
        SeedStream::new(n)
    }

    #[test]
    fn sampler_shape() {
        for k in 0..50 {
            let ic = sample_ipvt(1.5, &ss(k)).unwrap();
            assert!(!ic.is_empty());
            assert!(ic.atoms().windows(2).all(|w| w[0].s <= w[1].s));
            assert!(ic.atoms().iter().all(|a| a.s <= ic.s_min() + 2.0 * ic.r_valid() + 1e-12));
            assert!((ic.r_valid() - 1.5).abs() < 1e-12);
            assert!(!ic.degraded());
        }
        assert!(sample_ipvt(0.0, &ss(0)).is_err());
        assert!(sample_ipvt(-1.0, &ss(0)).is_err());
        assert!(matches!(sample_ipvt(12.0, &ss(0)), Err(GeomError::Overflow(_))));
        assert_eq!(sample_ipvt(2.0, &ss(3)).unwrap(), sample_ipvt(2.0, &ss(3)).unwrap());
    }

    #[test]
    fn extra_count_law() {
        // conditional on s₀ the count above it is Poisson(e^{s₀} (e^{2R} − 1))
        let r = 1.0;
        let mut counts = Vec::new();
        let mut means = Vec::new();
        for k in 0..4000 {
            let ic = sample_ipvt(r, &ss(k)).unwrap();
            counts.push(ic.len() as f64 - 1.0);
            means.push(ic.s_min().exp() * (2.0 * r).exp_m1());
        }
        // Σ (N − λ) / sqrt(Σ λ) is approximately standard normal
        let diff: f64 = counts.iter().zip(&means).map(|(n, l)| n - l).sum();
        let var: f64 = means.iter().sum();
        assert!((diff / var.sqrt()).abs() < 3.0);
    }

    #[test]
    fn family_examples() {
        let ic = IdealConfiguration::from_atoms(vec![Atom::new(0.7, 0.0)], 0.0).unwrap();
        let f = ipvt_family(&ic);
        assert_eq!(f.value(0, &Query::Disk(DiskPoint::ORIGIN)).unwrap(), 0.0);
        let ic = sample_ipvt(2.0, &ss(9)).unwrap();
        let f = ipvt_family(&ic);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let y = sample_uniform_in_ball(&mut rng, 2.0);
            for (i, a) in ic.atoms().iter().enumerate() {
                assert!(f.value(i, &Query::Disk(y)).unwrap() >= a.s - 2.0 - 1e-12);
            }
        }
    }

    #[test]
    fn act_examples() {
        let ic = sample_ipvt(2.0, &ss(5)).unwrap();
        assert_eq!(act_on_ideal(&Isometry::IDENTITY, &ic), ic);

        let rot = act_on_ideal(&Isometry::rotation(1.0), &ic);
        assert_eq!(rot.len(), ic.len());
        assert_eq!(rot.r_valid(), ic.r_valid());
        let mut expect: Vec<(f64, f64)> =
            ic.atoms().iter().map(|a| (a.s, IdealPoint::new(a.xi.angle() + 1.0).angle())).collect();
        expect.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (a, e) in rot.atoms().iter().zip(&expect) {
            assert_eq!(a.s, e.0);
            assert!((a.xi.angle() - e.1).abs() < 1e-12);
        }

        // a long translation exhausts the radius
        let far = act_on_ideal(&Isometry::translation(10.0, 0.3), &ic);
        assert!(far.degraded());
        assert_eq!(far.r_valid(), 0.0);
        assert_eq!(far.len(), 1);
    }

    #[test]
    fn act_is_equivariant_on_assignments() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for k in 0..40 {
            let ic = sample_ipvt(3.0, &ss(100 + k)).unwrap();
            let g = Isometry::random(&mut rng, 1.0);
            let (moved, index) = act_on_ideal_indexed(&g, &ic);
            let r = moved.r_valid().min(ic.r_valid());
            // queries y with both y and g y inside the valid balls
            let ys: Vec<DiskPoint> = (0..50)
                .map(|_| sample_uniform_in_ball(&mut rng, ic.r_valid()))
                .filter(|y| g.apply(y).rho() <= r)
                .collect();
            let qs: Vec<Query> = ys.iter().map(|&y| Query::Disk(y)).collect();
            let gqs: Vec<Query> = ys.iter().map(|y| Query::Disk(g.apply(y))).collect();
            if qs.is_empty() {
                continue;
            }
            let a = assign(&ipvt_family(&ic), &qs).unwrap();
            let b = assign(&ipvt_family(&moved), &gqs).unwrap();
            for j in 0..qs.len() {
                if a.margins[j] > 1e-9 {
                    assert_eq!(index[a.winners[j]], Some(b.winners[j]));
                }
            }
        }
    }

    #[test]
    fn text_round_trip() {
        let ic = sample_ipvt(1.0, &ss(2)).unwrap();
        let text = ic.to_text(&["stochgeom ipvt sample".into()]);
        assert!(text.lines().any(|l| l.starts_with("xi=")));
        let back = IdealConfiguration::from_text(&text).unwrap();
        assert_eq!(back, ic);
        assert!(IdealConfiguration::from_text("xi=0 s=1\n").is_err());
        assert!(IdealConfiguration::from_text("# complete_below=1\nxi=0 t=1\n").is_err());
    }

    #[test]
    fn extension_keeps_prefix() {
        let ic = sample_ipvt(1.0, &ss(4)).unwrap();
        let wide = ic.extend_ceiling(3.0, &ss(5)).unwrap();
        assert_eq!(&wide.atoms()[..ic.len()], ic.atoms());
        assert!(wide.atoms().windows(2).all(|w| w[0].s <= w[1].s));
        assert!((wide.r_valid() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn normalization() {
        assert!(height_offset(0.0).is_err());
        assert!((height_offset(1.0 / PI).unwrap()).abs() < 1e-15);
        let w = SpaceModel::hyperbolic_disk(6.0).unwrap();
        let c = sample_poisson(&IntensityMeasure::new(w, 0.01).unwrap(), &ss(1)).unwrap();
        let n = normalize_pvt(&c, 0.01).unwrap();
        for (i, a) in n.atoms.iter().enumerate() {
            let at_o = n.family.value(i, &Query::Disk(DiskPoint::ORIGIN)).unwrap();
            assert!((at_o - a.s).abs() < 1e-12);
            assert!((n.coupled_family(f64::INFINITY).value(i, &Query::Disk(DiskPoint::ORIGIN)).unwrap() - a.s).abs() < 1e-12);
        }
        let e = SpaceModel::box_from_sides(&[1.0]).unwrap();
        assert!(normalize_pvt(&Configuration::empty(e), 0.1).is_err());
    }

    #[test]
    fn coupling_error_vanishes() {
        let y = DiskPoint::from_polar(1.0, 0.4);
        let errs: Vec<f64> = [2.0, 5.0, 10.0, 20.0].iter().map(|&r| coupling_error(&DiskPoint::from_polar(r, 2.0), &y)).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]));
        assert!(errs[3] < 1e-6);
    }

    #[test]
    fn single_point_agrees() {
        let w = SpaceModel::hyperbolic_disk(3.0).unwrap();
        let c = Configuration::new(w, vec![vec![0.3, 0.1]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let qs: Vec<DiskPoint> = (0..20).map(|_| sample_uniform_in_ball(&mut rng, 1.0)).collect();
        assert_eq!(coupled_agreement(&c, 0.1, &qs).unwrap(), 1.0);
    }

    #[test]
    fn agreement_is_rotation_invariant() {
        let t = 0.01;
        let c = sample_covering_pvt(t, 1.0, &ss(8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let qs: Vec<DiskPoint> = (0..100).map(|_| sample_uniform_in_ball(&mut rng, 1.0)).collect();
        let g = Isometry::rotation(0.9);
        let pts: Vec<Vec<f64>> = c
            .disk_points()
            .unwrap()
            .iter()
            .map(|p| {
                let z = g.apply(p).to_complex();
                vec![z.re, z.im]
            })
            .collect();
        let rc = Configuration::new(c.window().clone(), pts).unwrap();
        let rq: Vec<DiskPoint> = qs.iter().map(|y| g.apply(y)).collect();
        assert_eq!(coupled_agreement(&c, t, &qs).unwrap(), coupled_agreement(&rc, t, &rq).unwrap());
    }

    #[test]
    fn covering_window() {
        for k in 0..20 {
            let c = sample_covering_pvt(1e-3, 1.0, &ss(k)).unwrap();
            let SpaceModel::HyperbolicDisk { radius } = *c.window() else { panic!() };
            let rho_min = c.disk_points().unwrap().iter().map(|p| p.rho()).fold(f64::INFINITY, f64::min);
            assert!(rho_min + 2.0 <= radius);
        }
        assert!(matches!(sample_covering_pvt(1e-20, 1.0, &ss(0)), Err(GeomError::Overflow(_))));
    }

    #[test]
    fn occupancy_of_documented_box() {
        let p = occupancy_probability(&MixingParams::default().box_a).unwrap();
        let expect = 1.0 - (-(1.0 - (-1.0f64).exp()) / 8.0).exp();
        assert!((p - expect).abs() < 1e-12);
    }

    #[test]
    fn experiment_argument_checks() {
        let mc = MonteCarlo::new(4, 1);
        let bad = ConvergenceParams { intensities: vec![1e-3, 1e-2], ..Default::default() };
        assert!(convergence_experiment(&bad, &mc).is_err());
        let bad = MixingParams { lengths: vec![], ..Default::default() };
        assert!(mixing_experiment(&bad, &mc).is_err());
        let bad = InvarianceParams { ceiling: 2.0, ..Default::default() };
        assert!(matches!(invariance_experiment(&bad, &mc), Err(GeomError::BeyondValidity(_))));
    }
}
