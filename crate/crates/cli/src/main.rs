//! `stochgeom`: seeded experiments on Poisson processes and Voronoi
//! tessellations of Euclidean boxes and the hyperbolic disk.
//!
//! Exit codes: 0 success, 1 a harness failed, 2 bad arguments, 3 I/O or
//! input-format errors.

mod render;

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stochgeom::ipvt::{
    convergence_experiment, ipvt_family, mixing_experiment, sample_ipvt, ConvergenceParams, MixingParams,
    AGREEMENT_AT_T3,
};
use stochgeom::measure::{sample_poisson, Configuration, IntensityMeasure, Region, SpaceModel};
use stochgeom::process::{
    apply_thinning, fullness_verdict, mecke_two_sided, palm_inclusion_probability, renyi_recurrence, Fullness,
    TestFunction, ThinningRule,
};
use stochgeom::report::{MonteCarlo, TestReport};
use stochgeom::seed::SeedStream;
use stochgeom::tessellation::{adjacency_from, assign, grid, FunctionFamily};
use stochgeom::GeomError;

#[derive(Parser, Debug)]
#[command(name = "stochgeom", version, about = "Seeded Poisson process and Voronoi experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a Poisson process and write a points file.
    Sample {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mecke two-sided check and the count recurrence, as JSON lines.
    Mecke(MeckeArgs),
    /// Thinnings: apply a rule, probe Palm inclusion, or classify fullness.
    Thin {
        #[command(subcommand)]
        action: ThinCommand,
    },
    /// Voronoi assignment of a point set on a grid, as CSV and optional SVG.
    Voronoi(VoronoiArgs),
    /// The ideal tessellation of the hyperbolic plane.
    Ipvt {
        #[command(subcommand)]
        action: IpvtCommand,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Space {
    Euclidean,
    Hyperbolic,
    Heights,
}

#[derive(Args, Debug, Clone)]
struct SpaceArgs {
    #[arg(long, value_enum, default_value = "euclidean")]
    space: Space,
    /// Box side lengths, e.g. `1x1` or `10`.
    #[arg(long = "box", default_value = "1x1")]
    sides: String,
    /// Disk radius for the hyperbolic space.
    #[arg(long, default_value_t = 3.0)]
    radius: f64,
    /// Height cap for the boundary-heights space.
    #[arg(long, default_value_t = 0.0)]
    s_max: f64,
    #[arg(long, default_value_t = 1.0)]
    intensity: f64,
}

#[derive(Args, Debug, Clone)]
struct HarnessArgs {
    /// Replicas.
    #[arg(long = "n", default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3.0)]
    z_max: f64,
    #[arg(long, default_value_t = 0.01)]
    p_min: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    Indicator,
    IndicatorK,
    Isolated,
}

#[derive(Args, Debug)]
struct MeckeArgs {
    #[command(flatten)]
    space: SpaceArgs,
    #[arg(long, value_enum, default_value = "indicator")]
    family: Family,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    r: f64,
    /// Linear fraction of the window taken as the test region.
    #[arg(long, default_value_t = 0.5)]
    region_frac: f64,
    #[arg(long, default_value_t = 8)]
    k_max: usize,
    #[command(flatten)]
    harness: HarnessArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Rule {
    Identity,
    Isolated,
    Mark,
}

#[derive(Args, Debug, Clone)]
struct RuleArgs {
    #[arg(long, value_enum)]
    rule: Rule,
    #[arg(long, default_value_t = 0.5)]
    r: f64,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Verdict {
    Full,
    Empty,
    Nontrivial,
}

#[derive(Subcommand, Debug)]
enum ThinCommand {
    /// Thin a points file; only survivors away from the window edge are kept.
    Apply {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probability that the window centre survives after being added.
    Palm {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        rule: RuleArgs,
        #[command(flatten)]
        harness: HarnessArgs,
    },
    /// Classify a rule as full, empty or nontrivial.
    Verdict {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long, value_enum)]
        expect: Option<Verdict>,
        #[command(flatten)]
        harness: HarnessArgs,
    },
}

#[derive(Args, Debug)]
struct VoronoiArgs {
    /// Points file; without it a sample is drawn.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[command(flatten)]
    space: SpaceArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.02)]
    grid_h: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also render the disk assignment as SVG.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum IpvtCommand {
    /// Sample the atoms that decide the tessellation on B(o, rvalid).
    Sample {
        #[arg(long, default_value_t = 2.0)]
        rvalid: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Agreement of low-intensity Voronoi assignments with the ideal ones.
    Converge {
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001")]
        intensities: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        r_query: f64,
        #[arg(long, default_value_t = 200)]
        queries: usize,
        /// Regression value at the last intensity.
        #[arg(long)]
        floor: Option<f64>,
        #[command(flatten)]
        harness: HarnessArgs,
    },
    /// Covariance of box events under translations of growing length.
    Mixing {
        #[arg(long, value_delimiter = ',', default_value = "0,5,10,20")]
        lengths: Vec<f64>,
        #[command(flatten)]
        harness: HarnessArgs,
    },
    /// SVG of the cells on B(o, rvalid).
    Render {
        #[arg(long, default_value_t = 2.0)]
        rvalid: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.02)]
        grid_h: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Io(String),
    Harness,
}

impl From<GeomError> for Failure {
    fn from(e: GeomError) -> Self {
        match e {
            GeomError::Parse { .. } => Failure::Io(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

/// Comment header lines: the command line, seed and version.
fn header(seed: u64) -> Vec<String> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    vec![
        format!("stochgeom {}", args.join(" ")),
        format!("seed={seed}"),
        format!("version={}", env!("CARGO_PKG_VERSION")),
    ]
}

fn emit(out: &Option<PathBuf>, text: &str) -> Outcome {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read(path: &PathBuf) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn window(a: &SpaceArgs) -> Result<SpaceModel, Failure> {
    Ok(match a.space {
        Space::Euclidean => {
            let sides = a
                .sides
                .split('x')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::Usage(format!("--box {}: {e}", a.sides)))?;
            SpaceModel::box_from_sides(&sides)?
        }
        Space::Hyperbolic => SpaceModel::hyperbolic_disk(a.radius)?,
        Space::Heights => SpaceModel::boundary_heights(a.s_max)?,
    })
}

fn measure(a: &SpaceArgs) -> Result<IntensityMeasure, Failure> {
    Ok(IntensityMeasure::new(window(a)?, a.intensity)?)
}

/// Central part of the window: `frac` of each side, the disk of radius
/// `frac · R`, or the arc `[0, 2π frac)` below the height cap.
fn central_region(w: &SpaceModel, frac: f64) -> Result<Region, Failure> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Failure::Usage(format!("--region-frac must lie in (0, 1], got {frac}")));
    }
    Ok(match w {
        SpaceModel::EuclideanBox { lo, hi } => {
            let m: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| (h - l) * (1.0 - frac) / 2.0).collect();
            Region::Box {
                lo: lo.iter().zip(&m).map(|(l, m)| l + m).collect(),
                hi: hi.iter().zip(&m).map(|(h, m)| h - m).collect(),
            }
        }
        SpaceModel::HyperbolicDisk { radius } => Region::ball(radius * frac),
        SpaceModel::BoundaryHeights { s_max } => {
            Region::HeightBox { xi_min: 0.0, width: TAU * frac, s_min: f64::NEG_INFINITY, s_max: *s_max }
        }
    })
}

/// The window shrunk by `r`, where a rule with dependence range `r` sees
/// uncensored data.
fn interior(w: &SpaceModel, r: f64) -> Result<Region, Failure> {
    let region = match w {
        SpaceModel::EuclideanBox { lo, hi } => Region::Box {
            lo: lo.iter().map(|l| l + r).collect(),
            hi: hi.iter().map(|h| h - r).collect(),
        },
        SpaceModel::HyperbolicDisk { radius } => Region::ball(radius - r),
        SpaceModel::BoundaryHeights { .. } => Region::whole(w),
    };
    region.validate().map_err(|_| Failure::Usage(format!("window too small for range {r}")))?;
    Ok(region)
}

fn centre(w: &SpaceModel) -> Result<Vec<f64>, Failure> {
    match w {
        SpaceModel::EuclideanBox { lo, hi } => Ok(lo.iter().zip(hi).map(|(l, h)| (l + h) / 2.0).collect()),
        SpaceModel::HyperbolicDisk { .. } => Ok(vec![0.0, 0.0]),
        SpaceModel::BoundaryHeights { .. } => Err(Failure::Usage("Palm probes need a metric space".into())),
    }
}

fn rule(a: &RuleArgs) -> Result<ThinningRule, Failure> {
    Ok(match a.rule {
        Rule::Identity => ThinningRule::r_isolated(0.0)?,
        Rule::Isolated => ThinningRule::r_isolated(a.r)?,
        Rule::Mark => ThinningRule::independent_mark(a.p)?,
    })
}

/// Closed-form Palm inclusion probability at an interior point, where known.
fn palm_expected(rule: &ThinningRule, m: &IntensityMeasure) -> Option<f64> {
    let lambda = m.scale();
    match rule {
        ThinningRule::IndependentMark { p } => Some(*p),
        ThinningRule::RIsolated { r } if *r == 0.0 => Some(1.0),
        ThinningRule::RIsolated { r } => {
            let ball = match m.space() {
                SpaceModel::EuclideanBox { lo, .. } => match lo.len() {
                    1 => 2.0 * r,
                    2 => PI * r * r,
                    3 => 4.0 / 3.0 * PI * r.powi(3),
                    _ => return None,
                },
                SpaceModel::HyperbolicDisk { .. } => 2.0 * PI * (r.cosh() - 1.0),
                SpaceModel::BoundaryHeights { .. } => return None,
            };
            Some((-lambda * ball).exp())
        }
    }
}

fn harness(h: &HarnessArgs) -> Result<MonteCarlo, Failure> {
    if h.n < 2 {
        return Err(Failure::Usage("--n must be at least 2".into()));
    }
    let mut mc = MonteCarlo::new(h.n, h.seed);
    mc.z_max = h.z_max;
    mc.p_min = h.p_min;
    Ok(mc)
}

fn report(h: &HarnessArgs, reports: &[TestReport]) -> Outcome {
    let mut text: String = header(h.seed).iter().map(|l| format!("# {l}\n")).collect();
    for r in reports {
        text.push_str(&r.to_json_line());
        text.push('\n');
        eprintln!("{}", r.summary());
    }
    emit(&h.out, &text)?;
    if reports.iter().all(|r| r.passed()) {
        Ok(())
    } else {
        Err(Failure::Harness)
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Sample { space, seed, out } => {
            let c = sample_poisson(&measure(&space)?, &SeedStream::new(seed))?;
            emit(&out, &c.to_text(&header(seed)))
        }
        Command::Mecke(a) => {
            let m = measure(&a.space)?;
            let region = central_region(m.space(), a.region_frac)?;
            let f = match a.family {
                Family::Indicator => TestFunction::Indicator { region: region.clone() },
                Family::IndicatorK => TestFunction::IndicatorCount { region: region.clone(), k: a.k },
                Family::Isolated => TestFunction::Isolated { region: region.clone(), r: a.r },
            };
            let mc = harness(&a.harness)?;
            let reports = [mecke_two_sided(&m, &f, &mc)?, renyi_recurrence(&m, &region, a.k_max, &mc)?];
            report(&a.harness, &reports)
        }
        Command::Thin { action } => match action {
            ThinCommand::Apply { input, rule: ra, seed, out } => {
                let c = Configuration::from_text(&read(&input)?)?;
                let rule = rule(&ra)?;
                let core = interior(c.window(), rule.dependence_range())?;
                let marks = SeedStream::new(seed).fork("marks");
                let kept = apply_thinning(&rule, &c, &core, Some(&marks))?;
                emit(&out, &kept.to_text(&header(seed)))
            }
            ThinCommand::Palm { space, rule: ra, harness: h } => {
                let m = measure(&space)?;
                let rule = rule(&ra)?;
                let x = centre(m.space())?;
                let expected = palm_expected(&rule, &m);
                report(&h, &[palm_inclusion_probability(&rule, &m, &x, expected, &harness(&h)?)?])
            }
            ThinCommand::Verdict { space, rule: ra, expect, harness: h } => {
                let m = measure(&space)?;
                let rule = rule(&ra)?;
                let core = interior(m.space(), rule.dependence_range())?;
                let expect = expect.map(|v| match v {
                    Verdict::Full => Fullness::EmpiricallyFull,
                    Verdict::Empty => Fullness::EmpiricallyEmpty,
                    Verdict::Nontrivial => Fullness::Nontrivial,
                });
                report(&h, &[fullness_verdict(&rule, &m, &core, expect, &harness(&h)?)?])
            }
        },
        Command::Voronoi(a) => {
            let c = match &a.input {
                Some(p) => Configuration::from_text(&read(p)?)?,
                None => sample_poisson(&measure(&a.space)?, &SeedStream::new(a.seed))?,
            };
            if a.svg.is_some() && !matches!(c.window(), SpaceModel::HyperbolicDisk { .. }) {
                return Err(Failure::Usage("--svg renders disk windows only".into()));
            }
            let family = FunctionFamily::distance(&c)?;
            let g = grid(c.window(), a.grid_h)?;
            let assignment = assign(&family, &g.queries)?;
            let pairs: Vec<String> = adjacency_from(&assignment, &g).iter().map(|(i, j)| format!("{i}-{j}")).collect();
            let mut head = header(a.seed);
            head.push(format!("sites={}", c.len()));
            head.push(format!("adjacent={}", pairs.join(" ")));
            emit(&a.out, &assignment.to_csv(&head))?;
            match &a.svg {
                Some(path) => emit(&Some(path.clone()), &render::render_disk(&assignment, &g, &head)),
                None => Ok(()),
            }
        }
        Command::Ipvt { action } => match action {
            IpvtCommand::Sample { rvalid, seed, out } => {
                let ic = sample_ipvt(rvalid, &SeedStream::new(seed))?;
                emit(&out, &ic.to_text(&header(seed)))
            }
            IpvtCommand::Converge { intensities, r_query, queries, floor, harness: h } => {
                // the frozen value only describes the default query ball and last intensity
                let floor = floor.or_else(|| {
                    (r_query == 1.0 && intensities.last() == Some(&1e-3)).then_some(AGREEMENT_AT_T3)
                });
                let p = ConvergenceParams { intensities, r_query, n_queries: queries, floor };
                report(&h, &[convergence_experiment(&p, &harness(&h)?)?])
            }
            IpvtCommand::Mixing { lengths, harness: h } => {
                let p = MixingParams { lengths, ..Default::default() };
                report(&h, &[mixing_experiment(&p, &harness(&h)?)?])
            }
            IpvtCommand::Render { rvalid, seed, grid_h, out } => {
                let ic = sample_ipvt(rvalid, &SeedStream::new(seed))?;
                let g = grid(&SpaceModel::hyperbolic_disk(rvalid)?, grid_h)?;
                let assignment = assign(&ipvt_family(&ic), &g.queries)?;
                let mut head = header(seed);
                head.push(format!("atoms={} r_valid={rvalid}", ic.len()));
                emit(&out, &render::render_disk(&assignment, &g, &head))
            }
        },
    }
}

fn main() -> ExitCode {
    // clap reports usage errors itself with exit code 2
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Harness) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
