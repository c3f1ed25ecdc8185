use std::path::{Path, PathBuf};
use std::sync::Arc;

use l2man::affine::{analyze, Builtin, BuiltinOracle};
use l2man::battery::{self, angle_scales};
use l2man::gallery::{hilbert_nonrigid, r1_nonrigid};
use l2man::isometry_group::{decompose, validate_isometry, DecomposeOptions, IsometryOracle, L2Isometry};
use l2man::l2::{alexandrov_angle_analytic, alexandrov_angle_numeric, geodesic};
use l2man::measure::Automorphism;
use l2man::report::Relation;
use l2man::{tol, Check, DensityFn, Error, L2Function, ManifoldSpec, Point, ProbSpace, Report, SuiteReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{ConfigError, Experiment, ExperimentConfig, GalleryCase};

/// A finished experiment: the JSON to write and whether every check passed.
pub struct Outcome {
    pub json: String,
    pub passed: bool,
    /// Human-readable lines for stderr.
    pub lines: Vec<String>,
}

impl Outcome {
    fn from_report(report: Report) -> Self {
        let lines = report.checks.iter().map(Check::line).collect();
        Outcome {
            passed: report.passed,
            json: report.to_json(),
            lines,
        }
    }

    fn from_suite(suite: SuiteReport) -> Self {
        let lines = suite
            .reports
            .iter()
            .enumerate()
            .map(|(i, r)| format!("criterion {} {}: {}", i + 1, r.experiment, if r.passed { "PASS" } else { "FAIL" }))
            .collect();
        Outcome {
            passed: suite.passed,
            json: suite.to_json(),
            lines,
        }
    }
}

pub struct RunContext {
    pub seed: u64,
    pub parallel: bool,
}

pub fn run(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Outcome, ConfigError> {
    let experiment = cfg
        .experiment
        .ok_or_else(|| ConfigError("no experiment given: pass a subcommand or set `experiment` in the config".into()))?;
    if experiment == Experiment::Suite {
        let mut suite = battery::run_suite(ctx.seed, ctx.parallel);
        apply_overrides_all(&mut suite.reports, &cfg.tolerances)?;
        suite.passed = suite.reports.iter().all(|r| r.passed);
        return Ok(Outcome::from_suite(suite));
    }
    let mut report = match experiment {
        Experiment::Space => space_report(cfg, ctx)?,
        Experiment::Angle => angle_report(cfg, ctx)?,
        Experiment::Decompose => decompose_report(cfg, ctx)?,
        Experiment::EtaRecover => eta_report(cfg, ctx)?,
        Experiment::Gallery => gallery_report(cfg, ctx)?,
        Experiment::Suite => unreachable!(),
    };
    apply_overrides_all(std::slice::from_mut(&mut report), &cfg.tolerances)?;
    Ok(Outcome::from_report(report))
}

fn apply_overrides_all(
    reports: &mut [Report],
    overrides: &std::collections::BTreeMap<String, f64>,
) -> Result<(), ConfigError> {
    for (name, &tolerance) in overrides {
        let mut matched = false;
        for report in reports.iter_mut() {
            for check in report.checks.iter_mut().filter(|c| &c.name == name) {
                let value = check.value.ok_or_else(|| {
                    ConfigError(format!("config field `tolerances.{name}`: check has no numeric tolerance"))
                })?;
                check.tolerance = Some(tolerance);
                check.passed = match check.relation {
                    Relation::AtMost => value <= tolerance,
                    Relation::AtLeast => value >= tolerance,
                    Relation::Holds => check.passed,
                };
                matched = true;
            }
            report.passed = report.checks.iter().all(|c| c.passed);
        }
        if !matched {
            return Err(ConfigError(format!(
                "config field `tolerances.{name}`: no check with that name in this experiment"
            )));
        }
    }
    Ok(())
}

fn space_of(cfg: &ExperimentConfig, default_uniform: usize) -> Result<Arc<ProbSpace>, ConfigError> {
    match (&cfg.space, cfg.uniform) {
        (Some(_), Some(_)) => Err(ConfigError("give either `space` or `uniform`, not both".into())),
        (Some(s), None) => Ok(Arc::new(s.clone())),
        (None, Some(m)) if m > 0 => Ok(Arc::new(ProbSpace::uniform_interval(m))),
        (None, Some(_)) => Err(ConfigError("field `uniform`: grid size must be positive".into())),
        (None, None) => Ok(Arc::new(ProbSpace::uniform_interval(default_uniform))),
    }
}

fn manifold_of(cfg: &ExperimentConfig, default: ManifoldSpec) -> Result<Arc<ManifoldSpec>, ConfigError> {
    let m = cfg.manifold.clone().unwrap_or(default);
    m.validate()?;
    Ok(Arc::new(m))
}

fn space_report(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Report, ConfigError> {
    if cfg.space.is_none() && cfg.uniform.is_none() {
        return Err(ConfigError("the space experiment needs `--space <file>` or `--uniform <m>`".into()));
    }
    let sp = space_of(cfg, 1)?;
    let mut r = Report::new("space", ctx.seed);
    r.push(Check::at_most("normalization", (sp.total() - 1.0).abs(), tol::NORMALIZATION));
    Ok(r.with_details(json!({
        "atoms": sp.len(),
        "weights": sp.weights(),
        "uniform_grid": sp.is_uniform_grid(),
        "weight_classes": sp.weight_classes(),
        "automorphism_count": sp.automorphism_count().map(|c| c.to_string()),
    })))
}

fn angle_report(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Report, ConfigError> {
    let sp = space_of(cfg, 6)?;
    let m = manifold_of(cfg, ManifoldSpec::sphere(2))?;
    let pairs = cfg.pairs.unwrap_or(20);
    let scales = angle_scales();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let (mut worst, mut non_monotone) = (0.0f64, 0usize);
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for pair in 0..pairs {
        let f = L2Function::random(sp.clone(), m.clone(), &mut rng);
        let s1 = geodesic(&f, &L2Function::random(sp.clone(), m.clone(), &mut rng))?;
        let s2 = geodesic(&f, &L2Function::random(sp.clone(), m.clone(), &mut rng))?;
        let trace = alexandrov_angle_numeric(&f, &s1, &s2, &scales)?;
        let exact = alexandrov_angle_analytic(&s1, &s2)?;
        for (k, (&scale, &angle)) in trace.scales.iter().zip(&trace.angles).enumerate() {
            let diff = if k == 0 { None } else { Some(trace.diffs[k - 1]) };
            rows.push(TraceRow {
                pair,
                scale,
                comparison_angle: angle,
                analytic_angle: exact,
                diff,
            });
        }
        worst = worst.max((trace.extrapolated - exact).abs());
        non_monotone += usize::from(!trace.differences_decreasing_below(1e-2, tol::ANGLE_NOISE_FLOOR));
        summaries.push(json!({ "pair": pair, "analytic": exact, "extrapolated": trace.extrapolated }));
    }
    if let Some(path) = &cfg.trace {
        write_trace(path, &rows)?;
    }
    let mut r = Report::new("angle", ctx.seed);
    r.push(Check::at_most("angle_agreement", worst, tol::ANGLE_AGREEMENT))
        .push(Check::holds("differences_decreasing_below_1e-2", non_monotone == 0));
    Ok(r.with_details(json!({
        "pairs": summaries,
        "trace": {
            "columns": ["pair", "scale", "comparison_angle", "analytic_angle", "diff"],
            "rows": rows.iter().map(|t| json!([t.pair, t.scale, t.comparison_angle, t.analytic_angle, t.diff])).collect::<Vec<_>>(),
        },
    })))
}

#[derive(serde::Serialize)]
struct TraceRow {
    pair: usize,
    scale: f64,
    comparison_angle: f64,
    analytic_angle: f64,
    diff: Option<f64>,
}

fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<(), ConfigError> {
    let io = |e: &dyn std::fmt::Display| ConfigError(format!("cannot write trace {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(|e| io(&e))?;
    for row in rows {
        w.serialize(row).map_err(|e| io(&e))?;
    }
    w.flush().map_err(|e| io(&e))
}

fn expectation(cfg: &ExperimentConfig, default: &str, allowed: [&str; 2]) -> Result<String, ConfigError> {
    let e = cfg.expect.clone().unwrap_or_else(|| default.to_string());
    if !allowed.contains(&e.as_str()) {
        return Err(ConfigError(format!("field `expect`: expected one of {allowed:?}, got {e:?}")));
    }
    Ok(e)
}

fn decompose_report(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Report, ConfigError> {
    let kind = cfg.oracle.clone().unwrap_or_else(|| "generated".into());
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let m_grid = cfg.m.unwrap_or(8);
    let (oracle, generator): (Box<dyn IsometryOracle>, Option<L2Isometry>) = match kind.as_str() {
        "generated" | "identity" | "automorphism" | "pointwise" => {
            let sp = space_of(cfg, 6)?;
            let m = manifold_of(cfg, ManifoldSpec::sphere(2))?;
            let g = match (kind.as_str(), &cfg.isometry) {
                ("generated", Some(rec)) => L2Isometry::from_record(sp, m, rec.clone())?,
                ("generated", None) => L2Isometry::random(sp, m, &mut rng),
                ("identity", _) => L2Isometry::identity(sp, m),
                ("automorphism", _) => {
                    let phi = Automorphism::random(&sp, &mut rng);
                    L2Isometry::from_automorphism(sp, m, phi)?
                }
                _ => {
                    let rho = (0..sp.len()).map(|_| m.sample_isometry(&mut rng)).collect();
                    L2Isometry::pointwise(sp, m, rho)?
                }
            };
            (Box::new(g.clone()), Some(g))
        }
        "r1" => {
            let factor = cfg.manifold.clone().unwrap_or(ManifoldSpec::sphere(2));
            (Box::new(r1_nonrigid(&factor, m_grid)?), None)
        }
        "hilbert" => (Box::new(hilbert_nonrigid(m_grid)?), None),
        other => {
            return Err(ConfigError(format!(
                "field `oracle`: unknown isometry oracle {other:?} (generated, identity, automorphism, pointwise, r1, hilbert)"
            )))
        }
    };
    let default_verdict = if generator.is_some() { "RIGID" } else { "NON_RIGID" };
    let expect = expectation(cfg, default_verdict, ["RIGID", "NON_RIGID"])?;

    let validation = validate_isometry(oracle.as_ref(), 20, ctx.seed)?;
    let options = DecomposeOptions {
        seed: ctx.seed,
        parallel: ctx.parallel && oracle.is_reentrant(),
        ..DecomposeOptions::default()
    };
    let mut r = Report::new("decompose", ctx.seed);
    r.push(Check::at_most("isometry_validation", validation.max_deviation, tol::ISOMETRY_VALIDATION));
    let (verdict, details) = match decompose(oracle.as_ref(), &options) {
        Ok(rec) => {
            r.push(Check::at_most("held_out_residual", rec.holdout_residual, tol::DECOMPOSE_RESIDUAL));
            if let Some(g) = &generator {
                r.push(Check::holds("permutation_matches_generator", rec.isometry.phi() == g.phi()));
                if rec.isometry.phi() == g.phi() {
                    r.push(Check::at_most(
                        "rho_matches_generator",
                        rec.isometry.max_abs_diff(g)?,
                        tol::DECOMPOSE_RESIDUAL,
                    ));
                }
            }
            (
                "RIGID",
                json!({
                    "oracle": kind,
                    "phi": rec.isometry.phi().perm(),
                    "rho": rec.isometry.rho(),
                    "fit_residuals": rec.fit_residuals,
                    "holdout_residual": rec.holdout_residual,
                }),
            )
        }
        Err(Error::NonRigid(reason)) => ("NON_RIGID", json!({ "oracle": kind, "reason": reason })),
        Err(e) => return Err(e.into()),
    };
    r.push(Check::holds(format!("verdict_is_{}", expect.to_lowercase()), verdict == expect));
    Ok(r.with_verdict(verdict).with_details(details))
}

fn eta_report(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Report, ConfigError> {
    let spec = cfg.oracle.clone().unwrap_or_else(|| "builtin:identity".into());
    let name = spec
        .strip_prefix("builtin:")
        .ok_or_else(|| ConfigError(format!("field `oracle`: expected builtin:<name>, got {spec:?}")))?;
    let sp = space_of(cfg, 4)?;
    let m = manifold_of(cfg, ManifoldSpec::sphere(2))?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let kind = match name {
        "identity" => Builtin::Identity,
        "constant" => Builtin::Constant,
        "restriction" => Builtin::Restriction(
            cfg.set
                .clone()
                .ok_or_else(|| ConfigError("builtin:restriction needs `set`".into()))?,
        ),
        "density" => Builtin::Density(match &cfg.eta {
            Some(v) => DensityFn::new(v.clone())?,
            None => l2man::affine::random_density(sp.len(), 2.0, &mut rng),
        }),
        "ball_clip" => Builtin::BallClip {
            center: m.base_point(),
            radius: cfg.radius.unwrap_or(1.0),
        },
        "weighted_product" => Builtin::WeightedProduct(
            cfg.factor_weights
                .clone()
                .ok_or_else(|| ConfigError("builtin:weighted_product needs `factor_weights`".into()))?,
        ),
        other => {
            return Err(ConfigError(format!(
                "field `oracle`: unknown builtin {other:?} (identity, restriction, density, constant, ball_clip, weighted_product)"
            )))
        }
    };
    let probes: Vec<(Point, Point)> = match &kind {
        Builtin::BallClip { center, radius } => {
            let toward = l2man::isometry_group::default_partner(&m, center, &mut rng);
            vec![
                (center.clone(), m.point_at_distance(center, &toward, 0.5 * radius)?),
                (center.clone(), m.point_at_distance(center, &toward, 3.0 * radius)?),
            ]
        }
        _ => (0..2).map(|_| (m.sample_point(&mut rng), m.sample_point(&mut rng))).collect(),
    };
    let default_verdict = if matches!(kind, Builtin::BallClip { .. }) { "NOT_AFFINE" } else { "AFFINE" };
    let expect = expectation(cfg, default_verdict, ["AFFINE", "NOT_AFFINE"])?;
    let oracle = BuiltinOracle::new(sp, m, kind)?;
    let analysis = analyze(&oracle, &probes, cfg.pairs.unwrap_or(100), rng.random())?;
    let verdict = if analysis.affine { "AFFINE" } else { "NOT_AFFINE" };

    let mut r = Report::new("eta_recover", ctx.seed);
    if expect == "AFFINE" {
        r.push(Check::at_most(
            "probe_independence",
            analysis.welldefinedness.deviation,
            tol::ETA_PROBE_INDEPENDENCE,
        ))
        .push(Check::at_most("distance_identity", analysis.identity_residual, tol::AFFINE_IDENTITY))
        .push(Check::at_most("additivity", analysis.additivity.additivity_residual, tol::ADDITIVITY))
        .push(Check::holds("lipschitz_bound", analysis.additivity.bound_holds));
    } else {
        r.push(Check::at_least("probe_deviation", analysis.welldefinedness.deviation, tol::NOT_AFFINE));
    }
    r.push(Check::holds(format!("verdict_is_{}", expect.to_lowercase()), verdict == expect));
    Ok(r.with_verdict(verdict).with_details(json!({
        "oracle": spec,
        "eta": analysis.eta,
        "probe_deviation": analysis.welldefinedness.deviation,
        "identity_residual": analysis.identity_residual,
        "additivity_residual": analysis.additivity.additivity_residual,
        "block_residual": analysis.additivity.block_residual,
        "lipschitz_estimate": analysis.additivity.lipschitz,
        "max_eta": analysis.additivity.max_eta,
    })))
}

fn gallery_report(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Report, ConfigError> {
    let case = cfg
        .case
        .ok_or_else(|| ConfigError("the gallery experiment needs `--case` (interleave, hilbert, r1, product)".into()))?;
    let m = cfg.m.unwrap_or(8);
    let pairs = cfg.pairs.unwrap_or(100);
    Ok(match case {
        GalleryCase::Hilbert => battery::hilbert_case(m, ctx.seed)?,
        GalleryCase::R1 => {
            let factor = cfg.manifold.clone().unwrap_or(ManifoldSpec::sphere(2));
            factor.validate()?;
            battery::r1_case(&factor, m, ctx.seed)?
        }
        GalleryCase::Interleave => battery::interleave_report(cfg.k.unwrap_or(2), m, pairs, ctx.seed)?,
        GalleryCase::Product => {
            let prod = cfg.manifold.clone().unwrap_or(ManifoldSpec::product(vec![
                ManifoldSpec::sphere(2),
                ManifoldSpec::hyperbolic(2),
            ]));
            prod.validate()?;
            let ManifoldSpec::Product(fs) = &prod else {
                return Err(ConfigError("gallery product: `manifold` must be a two-factor product".into()));
            };
            if fs.len() != 2 {
                return Err(ConfigError("gallery product: `manifold` must be a two-factor product".into()));
            }
            battery::product_report([&fs[0], &fs[1]], m, pairs, ctx.seed)?
        }
    })
}

/// Where the report goes: an explicit report path wins over `--out`.
pub fn output_path(report: Option<PathBuf>, out: Option<PathBuf>) -> Option<PathBuf> {
    report.or(out)
}
