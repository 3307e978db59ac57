//! Generalized Voronoi tessellations of finite function families.
//!
//! The cell of member `f` is `{y : f(y) <= f'(y) for every member f'}`.
//! [`cell_contains`] keeps those closed-cell semantics, so boundary points
//! belong to every minimiser; [`assign`] picks a single winner per query by
//! lowest index and records the tie.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::hyperbolic::{hyperbolic_distance, ray_point, Atom, DiskPoint};
use crate::measure::{fmt_real, Configuration, SpaceModel};

/// Largest number of grid points [`grid`] will build.
pub const MAX_GRID_POINTS: usize = 20_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Sites {
    Euclidean { dim: usize, coords: Vec<f64> },
    Disk(Vec<DiskPoint>),
}

impl Sites {
    pub fn from_configuration(config: &Configuration) -> Result<Self> {
        match config.window() {
            SpaceModel::EuclideanBox { .. } => Ok(Sites::Euclidean {
                dim: config.dim(),
                coords: config.points().flatten().copied().collect(),
            }),
            SpaceModel::HyperbolicDisk { .. } => Ok(Sites::Disk(config.disk_points().ok_or_else(|| {
                GeomError::SpaceMismatch("disk configuration with a point outside the disk".into())
            })?)),
            SpaceModel::BoundaryHeights { .. } => Err(GeomError::SpaceMismatch(
                "distance families need a metric space; use a Busemann family for heights".into(),
            )),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Sites::Euclidean { dim, coords } => coords.len() / dim,
            Sites::Disk(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn distance(&self, i: usize, y: &Query) -> Result<f64> {
        match (self, y) {
            (Sites::Euclidean { dim, coords }, Query::Euclidean(q)) if q.len() == *dim => {
                let s = &coords[i * dim..(i + 1) * dim];
                Ok(s.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            }
            (Sites::Disk(p), Query::Disk(q)) => Ok(hyperbolic_distance(&p[i], q)),
            _ => Err(GeomError::SpaceMismatch(format!("query {y:?} does not live in the sites' space"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Query {
    Euclidean(Vec<f64>),
    Disk(DiskPoint),
}

impl Query {
    /// Query point from raw coordinates of `window`.
    pub fn from_coords(window: &SpaceModel, p: &[f64]) -> Result<Self> {
        match window {
            SpaceModel::EuclideanBox { .. } => Ok(Query::Euclidean(p.to_vec())),
            SpaceModel::HyperbolicDisk { .. } => Ok(Query::Disk(DiskPoint::from_cartesian(p[0], p[1])?)),
            SpaceModel::BoundaryHeights { .. } => {
                Err(GeomError::SpaceMismatch("heights space has no query points".into()))
            }
        }
    }

    /// Euclidean coordinates, or Cartesian disk coordinates.
    pub fn coords(&self) -> Vec<f64> {
        match self {
            Query::Euclidean(p) => p.clone(),
            Query::Disk(z) => {
                let c = z.to_complex();
                vec![c.re, c.im]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FunctionFamily {
    /// `f_i(y) = d(x_i, y)`.
    Distance(Sites),
    /// `f_i(y) = d(x_i, y) − offset_i`.
    NormalizedDistance { sites: Sites, offsets: Vec<f64> },
    /// `f_i(y) = B_{ξ_i}(y) + s_i`. Every atom with height below
    /// `complete_below` is present.
    Busemann { atoms: Vec<Atom>, complete_below: f64 },
}

impl FunctionFamily {
    pub fn distance(config: &Configuration) -> Result<Self> {
        Ok(Self::Distance(Sites::from_configuration(config)?))
    }

    pub fn normalized(config: &Configuration, offsets: Vec<f64>) -> Result<Self> {
        let sites = Sites::from_configuration(config)?;
        if offsets.len() != sites.len() {
            return Err(GeomError::InvalidParameter(format!(
                "{} offsets for {} sites",
                offsets.len(),
                sites.len()
            )));
        }
        Ok(Self::NormalizedDistance { sites, offsets })
    }

    pub fn normalized_global(config: &Configuration, offset: f64) -> Result<Self> {
        Self::normalized(config, vec![offset; config.len()])
    }

    /// Busemann family of hand-picked atoms, taken to be the complete list.
    pub fn busemann(atoms: Vec<Atom>) -> Self {
        Self::Busemann { atoms, complete_below: f64::INFINITY }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Distance(s) | Self::NormalizedDistance { sites: s, .. } => s.len(),
            Self::Busemann { atoms, .. } => atoms.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn accepts(&self, y: &Query) -> bool {
        match (self, y) {
            (Self::Distance(Sites::Euclidean { dim, .. }), Query::Euclidean(q))
            | (Self::NormalizedDistance { sites: Sites::Euclidean { dim, .. }, .. }, Query::Euclidean(q)) => {
                q.len() == *dim
            }
            (Self::Distance(Sites::Disk(_)), Query::Disk(_))
            | (Self::NormalizedDistance { sites: Sites::Disk(_), .. }, Query::Disk(_))
            | (Self::Busemann { .. }, Query::Disk(_)) => true,
            _ => false,
        }
    }

    /// `f_i(y)`.
    pub fn value(&self, i: usize, y: &Query) -> Result<f64> {
        if i >= self.len() {
            return Err(GeomError::IndexOutOfRange { index: i, len: self.len() });
        }
        match self {
            Self::Distance(s) => s.distance(i, y),
            Self::NormalizedDistance { sites, offsets } => Ok(sites.distance(i, y)? - offsets[i]),
            Self::Busemann { atoms, .. } => match y {
                Query::Disk(z) => Ok(atoms[i].value(z)),
                _ => Err(GeomError::SpaceMismatch("Busemann families live on the disk".into())),
            },
        }
    }

    /// Values of every member at `y`; `y` must already be accepted.
    fn values(&self, y: &Query) -> impl Iterator<Item = f64> + '_ {
        let y = y.clone();
        (0..self.len()).map(move |i| self.value(i, &y).expect("query space checked"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAssignment {
    pub queries: Vec<Query>,
    pub winners: Vec<usize>,
    /// Runner-up value minus winning value; `f64::MAX` when the family has a
    /// single member (see `margin_sentinel`).
    pub margins: Vec<f64>,
    /// Whether the winner shared the minimum with a higher-index member.
    pub tied: Vec<bool>,
    pub margin_sentinel: bool,
}

fn check_queries(family: &FunctionFamily, queries: &[Query]) -> Result<()> {
    if family.is_empty() {
        return Err(GeomError::EmptyFamily);
    }
    if let Some(bad) = queries.iter().find(|q| !family.accepts(q)) {
        return Err(GeomError::SpaceMismatch(format!("query {bad:?} does not match the family")));
    }
    Ok(())
}

fn winner_at(family: &FunctionFamily, y: &Query) -> (usize, f64, bool) {
    let mut best = (usize::MAX, f64::INFINITY);
    let mut second = f64::INFINITY;
    for (i, v) in family.values(y).enumerate() {
        if v < best.1 || best.0 == usize::MAX {
            second = best.1;
            best = (i, v);
        } else if v < second {
            second = v;
        }
    }
    if family.len() == 1 {
        return (best.0, f64::MAX, false);
    }
    let margin = second - best.1;
    (best.0, margin, margin == 0.0)
}

/// Index of the minimising member at each query, lowest index on ties.
pub fn assign(family: &FunctionFamily, queries: &[Query]) -> Result<CellAssignment> {
    check_queries(family, queries)?;
    let results: Vec<(usize, f64, bool)> = queries.par_iter().map(|y| winner_at(family, y)).collect();
    Ok(CellAssignment {
        queries: queries.to_vec(),
        winners: results.iter().map(|r| r.0).collect(),
        margins: results.iter().map(|r| r.1).collect(),
        tied: results.iter().map(|r| r.2).collect(),
        margin_sentinel: family.len() == 1,
    })
}

/// Whether `y` lies in the closed cell of member `i`.
pub fn cell_contains(family: &FunctionFamily, i: usize, y: &Query) -> Result<bool> {
    let vi = family.value(i, y)?;
    check_queries(family, std::slice::from_ref(y))?;
    Ok(family.values(y).all(|v| vi <= v))
}

/// A regular grid over a window, with its nearest-neighbour edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub h: f64,
    /// Euclidean coordinates, or Cartesian disk coordinates.
    pub points: Vec<Vec<f64>>,
    pub queries: Vec<Query>,
    pub edges: Vec<(usize, usize)>,
}

/// Grid of spacing `h`. Euclidean boxes are covered corner to corner; disk
/// windows get the Cartesian lattice `h Z²` restricted to the window.
pub fn grid(window: &SpaceModel, h: f64) -> Result<Grid> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(GeomError::InvalidParameter(format!("grid spacing must be positive, got {h}")));
    }
    let too_many = |n: f64| {
        if n > MAX_GRID_POINTS as f64 {
            Err(GeomError::InvalidParameter(format!("grid of {n:.0} points is too fine")))
        } else {
            Ok(())
        }
    };
    match window {
        SpaceModel::EuclideanBox { lo, hi } => {
            let shape: Vec<usize> = lo.iter().zip(hi).map(|(l, u)| ((u - l) / h).floor() as usize + 1).collect();
            too_many(shape.iter().map(|&s| s as f64).product())?;
            let total: usize = shape.iter().product();
            let mut points = Vec::with_capacity(total);
            let mut edges = Vec::new();
            let mut idx = vec![0usize; shape.len()];
            for flat in 0..total {
                points.push(idx.iter().zip(lo).map(|(&k, l)| l + k as f64 * h).collect::<Vec<f64>>());
                let mut stride = 1;
                for (d, &k) in idx.iter().enumerate().rev() {
                    if k + 1 < shape[d] {
                        edges.push((flat, flat + stride));
                    }
                    stride *= shape[d];
                }
                // odometer increment, last axis fastest
                for d in (0..shape.len()).rev() {
                    idx[d] += 1;
                    if idx[d] < shape[d] {
                        break;
                    }
                    idx[d] = 0;
                }
            }
            let queries = points.iter().map(|p| Query::Euclidean(p.clone())).collect();
            Ok(Grid { h, points, queries, edges })
        }
        SpaceModel::HyperbolicDisk { .. } => {
            let k = (1.0 / h).floor() as i64;
            too_many(((2 * k + 1) as f64).powi(2))?;
            let mut index = std::collections::HashMap::new();
            let mut points = Vec::new();
            let mut queries = Vec::new();
            for a in -k..=k {
                for b in -k..=k {
                    let p = [a as f64 * h, b as f64 * h];
                    if window.contains(&p) {
                        index.insert((a, b), points.len());
                        queries.push(Query::Disk(DiskPoint::from_cartesian(p[0], p[1])?));
                        points.push(p.to_vec());
                    }
                }
            }
            let mut edges = Vec::new();
            for (&(a, b), &i) in &index {
                for nb in [(a + 1, b), (a, b + 1)] {
                    if let Some(&j) = index.get(&nb) {
                        edges.push((i.min(j), i.max(j)));
                    }
                }
            }
            edges.sort_unstable();
            Ok(Grid { h, points, queries, edges })
        }
        SpaceModel::BoundaryHeights { .. } => {
            Err(GeomError::SpaceMismatch("cannot grid the boundary-heights space".into()))
        }
    }
}

/// Unordered pairs of members whose winning regions meet on neighbouring
/// grid points.
pub fn adjacency_probe(family: &FunctionFamily, window: &SpaceModel, h: f64) -> Result<BTreeSet<(usize, usize)>> {
    let g = grid(window, h)?;
    let a = assign(family, &g.queries)?;
    Ok(adjacency_from(&a, &g))
}

pub fn adjacency_from(assignment: &CellAssignment, g: &Grid) -> BTreeSet<(usize, usize)> {
    g.edges
        .iter()
        .filter_map(|&(i, j)| {
            let (wi, wj) = (assignment.winners[i], assignment.winners[j]);
            (wi != wj).then(|| (wi.min(wj), wi.max(wj)))
        })
        .collect()
}

fn check_ray_probe(family: &FunctionFamily, i: usize, radii: &[f64]) -> Result<Atom> {
    let (atoms, complete_below) = match family {
        FunctionFamily::Busemann { atoms, complete_below } => (atoms, *complete_below),
        _ => return Err(GeomError::SpaceMismatch("ray probes need a Busemann family".into())),
    };
    let atom = *atoms.get(i).ok_or(GeomError::IndexOutOfRange { index: i, len: atoms.len() })?;
    // Along the ray toward ξ_i we have f_i = s_i − ρ and f_j >= s_j − ρ, so only
    // atoms lower than s_i can beat member i there.
    if atom.s > complete_below {
        return Err(GeomError::BeyondValidity(format!(
            "member {i} has height {} above the completeness ceiling {complete_below}",
            atom.s
        )));
    }
    if let Some(r) = radii.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
        return Err(GeomError::InvalidParameter(format!("probe radius {r}")));
    }
    Ok(atom)
}

/// For each radius `ρ`, whether member `i` wins at distance `ρ` from the
/// origin along the ray toward its own ideal point.
pub fn unboundedness_probe(family: &FunctionFamily, i: usize, radii: &[f64]) -> Result<Vec<bool>> {
    let atom = check_ray_probe(family, i, radii)?;
    radii
        .iter()
        .map(|&rho| cell_contains(family, i, &Query::Disk(ray_point(atom.xi, rho))))
        .collect()
}

/// `min_{j != i} f_j − f_i` along the same ray; positive where `i` wins strictly.
pub fn ray_margins(family: &FunctionFamily, i: usize, radii: &[f64]) -> Result<Vec<f64>> {
    let atom = check_ray_probe(family, i, radii)?;
    Ok(radii
        .iter()
        .map(|&rho| {
            let y = Query::Disk(ray_point(atom.xi, rho));
            let fi = family.value(i, &y).expect("checked");
            family
                .values(&y)
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| v - fi)
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

impl CellAssignment {
    /// CSV with one row per query: coordinates, winner index, margin.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        if self.margin_sentinel {
            let _ = writeln!(out, "# margin sentinel: single-member family, margins are f64::MAX");
        }
        let dim = self.queries.first().map(|q| q.coords().len()).unwrap_or(0);
        let names: Vec<String> = match self.queries.first() {
            Some(Query::Disk(_)) => vec!["x".into(), "y".into()],
            _ => (0..dim).map(|d| format!("x{d}")).collect(),
        };
        let _ = writeln!(out, "{},winner,margin", names.join(","));
        for ((q, w), m) in self.queries.iter().zip(&self.winners).zip(&self.margins) {
            let coords: Vec<String> = q.coords().iter().map(|x| fmt_real(*x)).collect();
            let _ = writeln!(out, "{},{w},{}", coords.join(","), fmt_real(*m));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolic::{busemann, sample_uniform_in_ball, Isometry};
    use crate::measure::{sample_poisson, IntensityMeasure};
    use crate::seed::SeedStream;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(lo: f64, hi: f64) -> SpaceModel {
        SpaceModel::euclidean_box(vec![lo], vec![hi]).unwrap()
    }

    fn sites_1d(xs: &[f64]) -> FunctionFamily {
        let w = line(-10.0, 10.0);
        FunctionFamily::distance(&Configuration::new(w, xs.iter().map(|&x| vec![x]).collect()).unwrap()).unwrap()
    }

    #[test]
    fn assign_examples() {
        let f = sites_1d(&[-1.0, 1.0]);
        let a = assign(&f, &[Query::Euclidean(vec![0.2])]).unwrap();
        assert_eq!(a.winners, vec![1]);
        assert!((a.margins[0] - 0.4).abs() < 1e-15);
        assert!(!a.tied[0]);

        let single = sites_1d(&[3.0]);
        let a = assign(&single, &[Query::Euclidean(vec![-5.0]), Query::Euclidean(vec![9.0])]).unwrap();
        assert_eq!(a.winners, vec![0, 0]);
        assert!(a.margin_sentinel);
        assert!(a.margins.iter().all(|&m| m == f64::MAX));

        let w = SpaceModel::box_from_sides(&[1.0, 1.0]).unwrap();
        let c = Configuration::new(w, vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let f = FunctionFamily::distance(&c).unwrap();
        let qs: Vec<Query> = (0..5).map(|k| Query::Euclidean(vec![0.5, k as f64 * 0.25])).collect();
        let a = assign(&f, &qs).unwrap();
        assert!(a.winners.iter().all(|&w| w == 0));
        assert!(a.margins.iter().all(|&m| m == 0.0));
        assert!(a.tied.iter().all(|&t| t));
    }

    #[test]
    fn assign_errors() {
        let empty = FunctionFamily::busemann(vec![]);
        assert!(matches!(assign(&empty, &[Query::Disk(DiskPoint::ORIGIN)]), Err(GeomError::EmptyFamily)));
        let f = sites_1d(&[0.0]);
        assert!(matches!(assign(&f, &[Query::Disk(DiskPoint::ORIGIN)]), Err(GeomError::SpaceMismatch(_))));
        assert!(matches!(assign(&f, &[Query::Euclidean(vec![0.0, 1.0])]), Err(GeomError::SpaceMismatch(_))));
    }

    #[test]
    fn closed_cells() {
        let f = sites_1d(&[-1.0, 1.0]);
        let mid = Query::Euclidean(vec![0.0]);
        assert!(cell_contains(&f, 0, &mid).unwrap());
        assert!(cell_contains(&f, 1, &mid).unwrap());
        assert!(cell_contains(&f, 0, &Query::Euclidean(vec![-1.0])).unwrap());
        assert!(!cell_contains(&f, 1, &Query::Euclidean(vec![-1.0])).unwrap());
        assert!(matches!(
            cell_contains(&f, 2, &mid),
            Err(GeomError::IndexOutOfRange { index: 2, len: 2 })
        ));
        let one = FunctionFamily::busemann(vec![Atom::new(1.0, 0.3)]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            assert!(cell_contains(&one, 0, &Query::Disk(sample_uniform_in_ball(&mut rng, 5.0))).unwrap());
        }
    }

    #[test]
    fn adjacency_examples() {
        let w = SpaceModel::box_from_sides(&[1.0, 1.0]).unwrap();
        let c = Configuration::new(w.clone(), vec![vec![0.2, 0.5], vec![0.8, 0.5]]).unwrap();
        let pairs = adjacency_probe(&FunctionFamily::distance(&c).unwrap(), &w, 0.05).unwrap();
        assert_eq!(pairs.into_iter().collect::<Vec<_>>(), vec![(0, 1)]);

        let c = Configuration::new(w.clone(), vec![vec![0.3, 0.3]]).unwrap();
        assert!(adjacency_probe(&FunctionFamily::distance(&c).unwrap(), &w, 0.05).unwrap().is_empty());

        let f = sites_1d(&[-4.0, 0.5, 3.0]);
        let pairs = adjacency_probe(&f, &line(-10.0, 10.0), 0.1).unwrap();
        assert_eq!(pairs.into_iter().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn disk_grid_covers_window() {
        let w = SpaceModel::hyperbolic_disk(2.0).unwrap();
        let g = grid(&w, 0.05).unwrap();
        assert!(g.points.iter().all(|p| w.contains(p)));
        let m = IntensityMeasure::new(w.clone(), 1.0).unwrap();
        let f = FunctionFamily::distance(&sample_poisson(&m, &SeedStream::new(4)).unwrap()).unwrap();
        let a = assign(&f, &g.queries).unwrap();
        // closed cells cover: every grid point lies in the cell of its winner
        for (q, &w) in a.queries.iter().zip(&a.winners) {
            assert!(cell_contains(&f, w, q).unwrap());
        }
        assert!(grid(&w, 0.0).is_err());
    }

    #[test]
    fn probe_examples() {
        let radii: Vec<f64> = (0..=100).map(|k| k as f64 * 0.5).collect();
        let one = FunctionFamily::busemann(vec![Atom::new(2.0, 0.0)]);
        assert!(unboundedness_probe(&one, 0, &radii).unwrap().iter().all(|&b| b));

        // equal heights: along its own ray member 0 wins from the origin on
        let two = FunctionFamily::busemann(vec![Atom::new(0.0, 0.0), Atom::new(1.0, 0.0)]);
        let p = unboundedness_probe(&two, 0, &radii).unwrap();
        assert!(p.iter().all(|&b| b));
        // direct evaluation along the ray
        for &rho in &radii[1..] {
            let y = ray_point(crate::hyperbolic::IdealPoint::new(0.0), rho);
            assert!(busemann(crate::hyperbolic::IdealPoint::new(1.0), &y) > -rho);
        }

        // a high atom loses near the origin but wins far along its own ray
        let high = FunctionFamily::busemann(vec![Atom::new(0.0, 0.0), Atom::new(2.0, 4.0)]);
        let p = unboundedness_probe(&high, 1, &radii).unwrap();
        assert!(!p[0]);
        let first = p.iter().position(|&b| b).unwrap();
        assert!(p[first..].iter().all(|&b| b));
        // oracle: wins once s_1 − ρ <= s_0 + B_{ξ_0}(γ(ρ))
        let xi0 = crate::hyperbolic::IdealPoint::new(0.0);
        let xi1 = crate::hyperbolic::IdealPoint::new(2.0);
        for (k, &rho) in radii.iter().enumerate() {
            let y = ray_point(xi1, rho);
            assert_eq!(p[k], 4.0 - rho <= busemann(xi0, &y));
        }
    }

    #[test]
    fn probe_errors() {
        let f = FunctionFamily::Busemann { atoms: vec![Atom::new(0.0, 0.0), Atom::new(1.0, 3.0)], complete_below: 1.0 };
        assert!(unboundedness_probe(&f, 0, &[1.0]).is_ok());
        assert!(matches!(unboundedness_probe(&f, 1, &[1.0]), Err(GeomError::BeyondValidity(_))));
        assert!(unboundedness_probe(&sites_1d(&[0.0]), 0, &[1.0]).is_err());
    }

    #[test]
    fn csv_format() {
        let f = sites_1d(&[-1.0, 1.0]);
        let a = assign(&f, &[Query::Euclidean(vec![0.5])]).unwrap();
        let csv = a.to_csv(&["hdr".into()]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines, vec!["# hdr", "x0,winner,margin", "5.0000000000000000e-1,1,1.0000000000000000e0"]);
    }

    fn random_family(seed: u64) -> (FunctionFamily, FunctionFamily, FunctionFamily) {
        let w = SpaceModel::hyperbolic_disk(5.0).unwrap();
        let m = IntensityMeasure::new(w, 0.05).unwrap();
        let c = sample_poisson(&m, &SeedStream::new(seed)).unwrap();
        let atoms: Vec<Atom> = (0..c.len()).map(|i| Atom::new(i as f64 * 0.7, (i as f64 * 1.3).sin())).collect();
        (
            FunctionFamily::distance(&c).unwrap(),
            FunctionFamily::normalized_global(&c, 2.0).unwrap(),
            FunctionFamily::busemann(atoms),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn members_are_one_lipschitz(seed in 0u64..500, a in (0.0..4.0f64, 0.0..6.3f64), b in (0.0..4.0f64, 0.0..6.3f64)) {
            let y1 = DiskPoint::from_polar(a.0, a.1);
            let y2 = DiskPoint::from_polar(b.0, b.1);
            let d = hyperbolic_distance(&y1, &y2);
            let (f1, f2, f3) = random_family(seed);
            for f in [&f1, &f2, &f3] {
                for i in 0..f.len() {
                    let diff = f.value(i, &Query::Disk(y1)).unwrap() - f.value(i, &Query::Disk(y2)).unwrap();
                    prop_assert!(diff.abs() <= d + 1e-9);
                }
            }
        }

        #[test]
        fn winners_lie_in_their_cells(seed in 0u64..500) {
            let (f1, _, f3) = random_family(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let qs: Vec<Query> = (0..30).map(|_| Query::Disk(sample_uniform_in_ball(&mut rng, 4.0))).collect();
            for f in [&f1, &f3] {
                if f.is_empty() { continue; }
                let a = assign(f, &qs).unwrap();
                for (q, &w) in qs.iter().zip(&a.winners) {
                    prop_assert!(cell_contains(f, w, q).unwrap());
                }
                prop_assert!(a.margins.iter().all(|&m| m >= 0.0));
            }
        }

        #[test]
        fn assignment_is_equivariant(seed in 0u64..500, l in 0.0..2.0f64, axis in 0.0..6.3f64, rot in 0.0..6.3f64) {
            let g = Isometry::from_parts(l, axis, rot).unwrap();
            let (f1, _, f3) = random_family(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let qs: Vec<DiskPoint> = (0..30).map(|_| sample_uniform_in_ball(&mut rng, 3.0)).collect();
            let moved_q: Vec<Query> = qs.iter().map(|y| Query::Disk(g.apply(y))).collect();
            let qs: Vec<Query> = qs.into_iter().map(Query::Disk).collect();
            if let FunctionFamily::Distance(Sites::Disk(sites)) = &f1 {
                if sites.is_empty() { return Ok(()); }
                let moved = FunctionFamily::Distance(Sites::Disk(sites.iter().map(|x| g.apply(x)).collect()));
                let a = assign(&f1, &qs).unwrap();
                let b = assign(&moved, &moved_q).unwrap();
                for k in 0..qs.len() {
                    if a.margins[k] > 1e-9 { prop_assert_eq!(a.winners[k], b.winners[k]); }
                }
            }
            if let FunctionFamily::Busemann { atoms, .. } = &f3 {
                if atoms.is_empty() { return Ok(()); }
                let moved = FunctionFamily::busemann(atoms.iter().map(|a| a.transport(&g)).collect());
                let a = assign(&f3, &qs).unwrap();
                let b = assign(&moved, &moved_q).unwrap();
                for k in 0..qs.len() {
                    if a.margins[k] > 1e-9 { prop_assert_eq!(a.winners[k], b.winners[k]); }
                }
            }
        }
    }
}
