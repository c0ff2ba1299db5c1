//! Command implementations.
//!
//! Output formats are frozen: the path CSV has columns
//! `walk,step,height,distance_from_start,vertex`; the entropy CSV has
//! `n,entropy,increment` (increment empty on the n=0 row); JSON reports
//! serialize the library report structs field for field.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use horoprod::config::{EnvSpec, ExperimentConfig, Params};
use horoprod::eqrel::{self, EqRelError, FiniteEqRel};
use horoprod::estimate::{self, EstimateReport};
use horoprod::oracle;
use horoprod::product::BoundarySide;
use horoprod::walk::{self, WalkError};
use horoprod::{HoroProduct, Kernel, ProductVertex};

use crate::{CmdResult, ConfigArgs, EqrelArgs, Failure, GeodesicsArgs};

fn build(cfg: &ExperimentConfig) -> Result<(HoroProduct, Kernel), Failure> {
    let g = cfg
        .build_product()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let k = cfg
        .build_kernel()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    Ok((g, k))
}

fn walk_failure(e: WalkError) -> Failure {
    match e {
        WalkError::BudgetExceeded { .. } => {
            Failure::Budget(format!("{e}; raise --budget or lower the horizon"))
        }
        other => Failure::Usage(other.to_string()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CmdResult {
    fs::write(path, bytes)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn csv_failure(path: &Path, e: csv::Error) -> Failure {
    Failure::Usage(format!("cannot write {}: {e}", path.display()))
}

pub fn verify_distance(args: &ConfigArgs) -> CmdResult {
    let cfg = args.resolve()?;
    let (g, _) = build(&cfg)?;
    let radius = cfg.params.radius;
    let audit =
        oracle::verify_distance_formula_capped(&g, &g.origin(), radius, cfg.params.budget)
            .map_err(|count| {
                Failure::Budget(format!(
                    "the radius-{} BFS arena needs more than {count} vertices; \
                     raise --budget or lower --radius",
                    2 * radius
                ))
            })?;
    println!("radius: {}", audit.radius);
    println!("audited vertices: {}", audit.ball_size);
    println!("bfs arena: {} vertices", audit.ambient_size);
    println!("pairs checked: {}", audit.pairs);
    println!("mismatches: {}", audit.mismatches.len());
    if audit.mismatches.is_empty() {
        println!("distance formula matches BFS on every pair");
        return Ok(());
    }
    for (v, w, f, b) in &audit.mismatches {
        println!("mismatch: {v} -> {w} formula={f} bfs={b}");
    }
    Err(Failure::Verification(format!(
        "{} distance mismatches",
        audit.mismatches.len()
    )))
}

fn parse_vertex(g: &HoroProduct, s: &str) -> Result<ProductVertex, Failure> {
    let v: ProductVertex = s
        .parse()
        .map_err(|e| Failure::Usage(format!("bad vertex {s:?}: {e}")))?;
    if !g.left_env().is_valid_addr(v.left()) || !g.right_env().is_valid_addr(v.right()) {
        return Err(Failure::Usage(format!(
            "vertex {s} is not canonical in this product: \
             a descent slot is out of range or aliases a spine vertex"
        )));
    }
    Ok(v)
}

pub fn geodesics(args: &GeodesicsArgs) -> CmdResult {
    let cfg = args.common.resolve()?;
    let (g, _) = build(&cfg)?;
    let v = parse_vertex(&g, &args.x)?;
    let w = parse_vertex(&g, &args.y)?;
    let d = g.product_distance(&v, &w);
    let cap = cfg.params.budget;
    let (geos, truncated) = g.enumerate_geodesics(&v, &w, cap);
    if truncated {
        return Err(Failure::Budget(format!(
            "more than {cap} geodesics between {v} and {w}; raise --budget"
        )));
    }
    // one family of geodesics when the heights differ (who is lower fixes
    // the height profile), two merged families at equal heights
    let label = match v.height().cmp(&w.height()) {
        Ordering::Less => "(i)",
        Ordering::Greater => "(ii)",
        Ordering::Equal => "(iii)",
    };
    println!("case: {label}");
    println!("distance: {d}");
    println!("geodesics: {}", geos.len());
    for path in &geos {
        let line: Vec<String> = path.iter().map(|u| u.to_string()).collect();
        println!("{}", line.join(" "));
    }
    for path in &geos {
        if path.len() as u64 != d + 1 {
            return Err(Failure::Verification(format!(
                "geodesic of length {} against distance {d}",
                path.len() - 1
            )));
        }
        for pair in path.windows(2) {
            if g.product_distance(&pair[0], &pair[1]) != 1 {
                return Err(Failure::Verification(format!(
                    "non-adjacent step {} -> {}",
                    pair[0], pair[1]
                )));
            }
        }
    }
    Ok(())
}

fn write_paths_csv(
    g: &HoroProduct,
    kernel: &Kernel,
    start: &ProductVertex,
    p: &Params,
    path: &Path,
) -> CmdResult {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_failure(path, e))?;
    wtr.write_record(["walk", "step", "height", "distance_from_start", "vertex"])
        .map_err(|e| csv_failure(path, e))?;
    for w in 0..p.csv_walks.min(p.walks) {
        let traj = walk::sample_path(g, kernel, start, p.n, walk::member_seed(p.seed, w as u64))
            .map_err(walk_failure)?;
        for (t, v) in traj.vertices().iter().enumerate() {
            wtr.write_record([
                w.to_string(),
                t.to_string(),
                v.height().to_string(),
                g.product_distance(start, v).to_string(),
                v.to_string(),
            ])
            .map_err(|e| csv_failure(path, e))?;
        }
    }
    wtr.flush()
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

pub fn simulate(args: &ConfigArgs) -> CmdResult {
    let cfg = args.resolve()?;
    let (g, kernel) = build(&cfg)?;
    let p = &cfg.params;
    let origin = g.origin();
    let drift = estimate::drift_estimate(&g, &kernel, &origin, p.n, p.walks, p.seed)
        .map_err(walk_failure)?;
    let speed = estimate::speed_estimate(&g, &kernel, &origin, p.n, p.walks, p.seed)
        .map_err(walk_failure)?;
    let entropy =
        estimate::asymptotic_entropy_estimate(&g, &kernel, &origin, p.n_max, p.walks, p.seed, p.budget)
            .map_err(walk_failure)?;
    let convergence = estimate::boundary_convergence_stats(
        &g,
        &kernel,
        &origin,
        p.n,
        p.walks,
        p.prefix_depth,
        p.seed,
    )
    .map_err(walk_failure)?;

    println!("walks: {} of {} steps, seed {}", p.walks, p.n, p.seed);
    println!(
        "height drift: trajectory {:.6} +- {:.6}, one-step {:.6}",
        drift.trajectory, drift.ci, drift.one_step
    );
    println!("escape rate: {:.6} +- {:.6}", speed.rate, speed.ci);
    println!(
        "entropy: increment {:.6} at n={}, sampled rate {:.6} +- {:.6}",
        entropy.last_increment, entropy.n_max, entropy.sampled, entropy.sampled_ci
    );
    println!(
        "boundary: {:.1}% upper, {:.1}% lower, {:.1}% unclassified at prefix depth {}",
        100.0 * convergence.upper_fraction,
        100.0 * convergence.lower_fraction,
        100.0 * convergence.unclassified_fraction,
        convergence.prefix_depth
    );

    // cross-check: a nonzero one-step drift predicts the side the walks
    // settle on; the sampled majority has to agree
    let agree = match convergence.expected_side {
        Some(BoundarySide::Upper) => convergence.upper_fraction > convergence.lower_fraction,
        Some(BoundarySide::Lower) => convergence.lower_fraction > convergence.upper_fraction,
        None => true,
    };
    match convergence.expected_side {
        Some(side) => println!(
            "cross-check: drift sign predicts {side:?}; majority {}",
            if agree { "agrees" } else { "disagrees" }
        ),
        None => println!("cross-check: zero drift, no side predicted"),
    }

    let csv_path = args
        .out
        .clone()
        .or_else(|| cfg.output.csv.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("paths.csv"));
    let json_path = cfg
        .output
        .json
        .clone()
        .map(PathBuf::from)
        .unwrap_or_else(|| csv_path.with_extension("json"));
    write_paths_csv(&g, &kernel, &origin, p, &csv_path)?;
    let report = EstimateReport {
        drift,
        speed,
        entropy: Some(entropy),
        convergence: Some(convergence),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_file(&json_path, json.as_bytes())?;
    println!(
        "wrote {} ({} walks) and {}",
        csv_path.display(),
        p.csv_walks.min(p.walks),
        json_path.display()
    );

    if !agree {
        return Err(Failure::Verification(
            "drift sign and majority boundary side disagree".into(),
        ));
    }
    Ok(())
}

pub fn entropy(args: &ConfigArgs) -> CmdResult {
    let cfg = args.resolve()?;
    let (g, kernel) = build(&cfg)?;
    let p = &cfg.params;
    let n_max = args.n.unwrap_or(p.n_max);
    if n_max == 0 {
        return Err(Failure::Usage("entropy horizon must be positive".into()));
    }

    let random_env = matches!(cfg.left, EnvSpec::GaltonWatson { .. })
        || matches!(cfg.right, EnvSpec::GaltonWatson { .. });
    let (seq, envs) = if random_env && p.env_samples > 1 {
        let make = |s: u64| {
            let l = cfg.left.reseeded(walk::member_seed(s, 0)).build("left");
            let r = cfg.right.reseeded(walk::member_seed(s, 1)).build("right");
            HoroProduct::new(l.expect("validated spec"), r.expect("validated spec"))
        };
        let summary = estimate::entropy_over_environments(
            make,
            &kernel,
            n_max,
            p.env_samples,
            p.seed,
            p.budget,
        )
        .map_err(walk_failure)?;
        (summary.mean, summary.num_envs)
    } else {
        (
            estimate::entropy_sequence(&g, &kernel, &g.origin(), n_max, p.budget)
                .map_err(walk_failure)?,
            1,
        )
    };

    let csv_path = args
        .out
        .clone()
        .or_else(|| cfg.output.csv.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("entropy.csv"));
    let mut wtr = csv::Writer::from_path(&csv_path).map_err(|e| csv_failure(&csv_path, e))?;
    wtr.write_record(["n", "entropy", "increment"])
        .map_err(|e| csv_failure(&csv_path, e))?;
    for (n, h) in seq.iter().enumerate() {
        let inc = if n == 0 {
            String::new()
        } else {
            (h - seq[n - 1]).to_string()
        };
        wtr.write_record([n.to_string(), h.to_string(), inc])
            .map_err(|e| csv_failure(&csv_path, e))?;
    }
    wtr.flush()
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", csv_path.display())))?;

    let monotone = seq
        .windows(2)
        .map(|w| w[1] - w[0])
        .collect::<Vec<_>>()
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-9);
    if envs > 1 {
        println!("environments averaged: {envs}");
    }
    println!("horizon: {n_max}");
    println!("final entropy: {:.6}", seq[n_max]);
    println!("final increment: {:.6}", seq[n_max] - seq[n_max - 1]);
    println!("entropy over horizon: {:.6}", seq[n_max] / n_max as f64);
    println!("increments nonincreasing: {monotone}");
    println!("wrote {}", csv_path.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct EntropyCheck {
    k: usize,
    n: usize,
    lhs: f64,
    rhs: f64,
    diff: f64,
}

#[derive(serde::Serialize)]
struct RelationReport {
    source: String,
    points: usize,
    classes: usize,
    /// Worst gap between the density-formula pushforward and the direct one.
    density_max_gap: f64,
    /// Worst cocycle multiplicativity violation over in-class triples.
    cocycle_violation: f64,
    /// Stationarity of the weight measure itself.
    mu_stationary: bool,
    mu_residual: f64,
    mu_leafwise_residual: f64,
    /// Which measure the reversal and entropy checks ran against.
    stationary_measure: Option<String>,
    reversible: Option<bool>,
    reversibility_violation: Option<f64>,
    entropy_checks: Vec<EntropyCheck>,
    /// Expectation of the log weight cocycle under the stationary edge
    /// measure; zero for reversible walks.
    antisymmetric_expectation: Option<f64>,
    ok: bool,
    failures: Vec<String>,
}

#[derive(serde::Serialize)]
struct EqrelReport {
    relations: Vec<RelationReport>,
    passed: usize,
    failed: usize,
}

const ENTROPY_TOL: f64 = 1e-10;
const EXPECTATION_TOL: f64 = 1e-12;

fn audit_relation(rel: &FiniteEqRel, source: String) -> RelationReport {
    let n = rel.points();
    let mu: Vec<f64> = (0..n).map(|x| rel.mu(x)).collect();
    let mut failures = Vec::new();

    let density_max_gap = match rel.apply_markov(&mu) {
        Ok(push) => push.max_gap,
        Err(e) => {
            failures.push(format!("density: {e}"));
            f64::NAN
        }
    };

    let mut cocycle_violation = 0.0f64;
    for c in 0..rel.num_classes() {
        let members = rel.class_members(c);
        for &x in members {
            for &y in members {
                for &z in members {
                    let chained =
                        rel.radon_nikodym(x, y).unwrap() * rel.radon_nikodym(y, z).unwrap();
                    let direct = rel.radon_nikodym(x, z).unwrap();
                    let gap = (chained - direct).abs() / direct.max(1.0);
                    cocycle_violation = cocycle_violation.max(gap);
                }
            }
        }
    }
    if cocycle_violation > EXPECTATION_TOL {
        failures.push(format!("cocycle chain rule off by {cocycle_violation:e}"));
    }

    let mu_report = rel.stationarity_check(&mu).expect("lengths match");

    // pick a stationary measure for the reversal-side checks: the weights
    // themselves, else the degree-weighted measure on graphed relations
    let mut lambda: Option<(Vec<f64>, String)> = None;
    if mu_report.stationary {
        lambda = Some((mu.clone(), "mu".into()));
    } else if let Some(dm) = rel.degree_measure() {
        if let Ok(rep) = rel.stationarity_check(&dm) {
            if rep.stationary {
                lambda = Some((dm, "degree-mu".into()));
            }
        }
    }

    let mut reversible = None;
    let mut reversibility_violation = None;
    let mut entropy_checks = Vec::new();
    let mut antisymmetric_expectation = None;
    if let Some((lam, _)) = &lambda {
        match rel.reversibility_check(lam) {
            Ok(rep) => {
                reversible = Some(rep.reversible);
                reversibility_violation = Some(rep.max_violation);
                if rep.reversible {
                    // E[ln(mu(y)/mu(x))] under the stationary edge measure:
                    // antisymmetric under the edge flip, so it must vanish
                    let total: f64 = lam.iter().sum();
                    let mut e = 0.0;
                    for (x, &lx) in lam.iter().enumerate() {
                        for y in 0..n {
                            let q = rel.kernel(x, y);
                            if q > 0.0 {
                                e += lx / total * q * (rel.mu(y) / rel.mu(x)).ln();
                            }
                        }
                    }
                    antisymmetric_expectation = Some(e);
                    if e.abs() > EXPECTATION_TOL {
                        failures.push(format!("antisymmetric cocycle expectation {e:e}"));
                    }
                }
            }
            Err(e) => failures.push(format!("reversibility: {e}")),
        }
        for horizon in 1..=4usize {
            for k in 1..=horizon {
                match rel.conditional_entropy_identity(lam, k, horizon) {
                    Ok(id) => {
                        if id.diff.abs() > ENTROPY_TOL {
                            failures.push(format!(
                                "entropy identity off by {:e} at k={k}, n={horizon}",
                                id.diff
                            ));
                        }
                        entropy_checks.push(EntropyCheck {
                            k,
                            n: horizon,
                            lhs: id.lhs,
                            rhs: id.rhs,
                            diff: id.diff,
                        });
                    }
                    Err(EqRelError::BudgetExceeded { .. }) => {}
                    Err(e) => failures.push(format!("entropy identity k={k} n={horizon}: {e}")),
                }
            }
        }
    }

    RelationReport {
        source,
        points: n,
        classes: rel.num_classes(),
        density_max_gap,
        cocycle_violation,
        mu_stationary: mu_report.stationary,
        mu_residual: mu_report.residual,
        mu_leafwise_residual: mu_report.leafwise_residual,
        stationary_measure: lambda.map(|(_, name)| name),
        reversible,
        reversibility_violation,
        entropy_checks,
        antisymmetric_expectation,
        ok: failures.is_empty(),
        failures,
    }
}

pub fn eqrel(args: &EqrelArgs) -> CmdResult {
    let mut relations = Vec::new();
    match &args.relation {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            // toml errors carry line/column spans for the offending entry
            let file: crate::relation::RelationFile = toml::from_str(&text)
                .map_err(|e| Failure::Usage(format!("bad relation {}: {e}", path.display())))?;
            let rel = file
                .build()
                .map_err(|e| Failure::Usage(format!("bad relation {}: {e}", path.display())))?;
            relations.push(audit_relation(&rel, format!("file:{}", path.display())));
        }
        None => {
            if args.count == 0 {
                return Err(Failure::Usage("need --count >= 1 or --relation".into()));
            }
            for i in 0..args.count {
                let seed = walk::member_seed(args.seed, i as u64);
                let points = 2 + i % 7; // cycle sizes 2..=8
                let rel = eqrel::random_relation(points, 3, seed);
                relations.push(audit_relation(&rel, format!("random:{points}p:{seed:#x}")));
                let gpoints = 4 + i % 5; // 4..=8, room for two classes
                let grel = eqrel::random_graphed_relation(gpoints, 3, seed);
                relations.push(audit_relation(&grel, format!("graph:{gpoints}p:{seed:#x}")));
            }
        }
    }

    let passed = relations.iter().filter(|r| r.ok).count();
    let failed = relations.len() - passed;
    let report = EqrelReport {
        relations,
        passed,
        failed,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("eqrel.json"));
    write_file(&out, json.as_bytes())?;
    println!(
        "relations audited: {}, passed: {passed}, failed: {failed}",
        report.relations.len()
    );
    println!("wrote {}", out.display());
    if failed > 0 {
        for r in report.relations.iter().filter(|r| !r.ok) {
            for f in &r.failures {
                println!("failure in {}: {f}", r.source);
            }
        }
        return Err(Failure::Verification(format!(
            "{failed} relations failed identity checks"
        )));
    }
    Ok(())
}
