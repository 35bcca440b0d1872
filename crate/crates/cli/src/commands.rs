//! The five subcommands.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dextra::engine::RunConfig;
use dextra::experiment::{self, Algorithm, Setup, SweepReport, WeightStrategy};
use dextra::io::{ensure_dir, CsvSchema, ColumnKind, Manifest};
use dextra::objectives::{LeastSquaresSpec, Objective};
use dextra::Digraph;

use crate::config::ExperimentConfig;
use crate::plot::residual_plot;

/// How a command ended, when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    Infeasible,
    Diverged,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::Infeasible => 2,
            Status::Diverged => 3,
        }
    }
}

/// `summary.csv` written by `compare`.
pub const SUMMARY_SCHEMA: CsvSchema = CsvSchema {
    columns: &[
        ("algorithm", ColumnKind::Text),
        ("alpha", ColumnKind::Float),
        ("outcome", ColumnKind::Text),
        ("iterations", ColumnKind::Index),
        ("final_residual", ColumnKind::Float),
        ("tau", ColumnKind::OptionalFloat),
        ("r_squared", ColumnKind::OptionalFloat),
        ("linear", ColumnKind::Bool),
    ],
};

pub fn generate(cfg: &ExperimentConfig) -> Result<Status> {
    let spec = &cfg.setup;
    let setup = match &cfg.graph_file {
        None => spec.build()?,
        Some(path) => {
            let graph = Digraph::load(path)?;
            let problem = LeastSquaresSpec {
                agents: graph.len(),
                dim: spec.dim,
                rows_per_agent: spec.rows_per_agent,
                noise_std: spec.noise_std,
                seed: spec.data_seed,
                target_lipschitz: spec.target_lipschitz,
            }
            .generate()?;
            let a = spec.strategy.build(&graph)?;
            Setup::assemble(graph, a, spec.strategy.to_string(), spec.theta, problem)?
        }
    };
    let mut m = Manifest::new();
    match &cfg.graph_file {
        Some(p) => m.set("graph_source", p.display()),
        None => m
            .set("graph_source", "random")
            .set("graph_seed", spec.graph_seed)
            .set("extra_edge_prob", spec.extra_edge_prob),
    };
    m.set("data_seed", spec.data_seed)
        .set("dim", spec.dim)
        .set("rows_per_agent", spec.rows_per_agent)
        .set("noise_std", spec.noise_std)
        .set(
            "target_lipschitz",
            spec.target_lipschitz.map_or("none".into(), |v| v.to_string()),
        );
    setup.save(&cfg.out, &m)?;
    let (l_f, s_f) = setup.problem.constants();
    println!(
        "instance written to {}: {} agents, {} edges, {} weights, L_f={l_f:.4}, S_f={s_f:.4}",
        cfg.out.display(),
        setup.agents(),
        setup.graph.edge_count(),
        setup.strategy
    );
    Ok(Status::Success)
}

fn load_instance(cfg: &ExperimentConfig) -> Result<Setup> {
    let dir = cfg.instance_dir();
    if !dir.join("manifest.txt").is_file() {
        bail!(
            "no instance at {} (missing manifest.txt; run `dextra generate` first)",
            dir.display()
        );
    }
    Setup::load(dir).with_context(|| format!("cannot load instance from {}", dir.display()))
}

pub fn certify(cfg: &ExperimentConfig) -> Result<Status> {
    let setup = load_instance(cfg)?;
    let cert = setup.certify(&cfg.certify)?;
    ensure_dir(&cfg.out)?;
    let report = cert.report();
    report.save(&cfg.out.join("certificate.txt"))?;
    write(&cfg.out.join("constants.csv"), &cert.constants_csv())?;
    print!("{}", report.to_text());
    Ok(if cert.feasible() {
        Status::Success
    } else {
        Status::Infeasible
    })
}

/// `--alpha`, or the middle of a feasible certified interval.
fn resolve_alpha(cfg: &ExperimentConfig, setup: &Setup) -> Result<f64> {
    if let Some(a) = cfg.alpha {
        return Ok(a);
    }
    let cert = setup.certify(&cfg.certify)?;
    if !cert.feasible() {
        bail!(
            "no --alpha given and no certified step size exists ({}); pass --alpha",
            cert.interval.diagnostic.as_deref().unwrap_or("infeasible")
        );
    }
    Ok(cert.equispaced(1)[0])
}

pub fn run(cfg: &ExperimentConfig) -> Result<Status> {
    let setup = load_instance(cfg)?;
    let algorithm = cfg.algorithms[0];
    let alpha = resolve_alpha(cfg, &setup)?;
    let schedule = match algorithm {
        Algorithm::DgdRow | Algorithm::GradientPush => cfg.baseline_schedule.unwrap_or(algorithm.default_schedule()),
        _ => algorithm.default_schedule(),
    };
    let trace = setup.run_with(algorithm, &RunConfig::new(alpha, cfg.max_iter, cfg.target), schedule)?;
    ensure_dir(&cfg.out)?;
    trace.write_csv(&cfg.out.join(format!("trace_{algorithm}.csv")))?;
    let mut m = trace.manifest();
    m.set("strategy", &setup.strategy)
        .set("max_iter", cfg.max_iter)
        .set("target", cfg.target);
    if let Some(fit) = experiment::fit_residual(&trace) {
        m.set("tau", fit.tau);
    }
    m.save(&cfg.out.join(format!("run_{algorithm}.txt")))?;
    println!(
        "{algorithm} α={alpha}: {} after {} iterations, residual {:.3e}",
        trace.termination,
        trace.iterations(),
        trace.final_residual()
    );
    Ok(if trace.diverged() {
        Status::Diverged
    } else {
        Status::Success
    })
}

pub fn compare(cfg: &ExperimentConfig) -> Result<Status> {
    let setup = load_instance(cfg)?;
    let (alphas, grid) = match &cfg.alpha_grid {
        Some(g) => (g.clone(), true),
        None => (vec![resolve_alpha(cfg, &setup)?], false),
    };
    ensure_dir(&cfg.out)?;
    let mut summary = SUMMARY_SCHEMA.header().join(",");
    summary.push('\n');
    let mut table = format!(
        "{:<14} {:>10} {:>16} {:>7} {:>11} {:>9}  linear\n",
        "algorithm", "alpha", "outcome", "iters", "residual", "tau"
    );
    let mut traces: Vec<(Algorithm, f64, dextra::RunTrace)> = Vec::new();
    let mut status = Status::Success;
    for (i, &alpha) in alphas.iter().enumerate() {
        let rows = experiment::compare(
            &setup,
            &cfg.algorithms,
            &RunConfig::new(alpha, cfg.max_iter, cfg.target),
            cfg.baseline_schedule,
        );
        for (algorithm, row) in rows {
            let row = match row {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("skipping {algorithm} at α={alpha}: {e}");
                    continue;
                }
            };
            let name = if grid {
                format!("trace_{algorithm}_{i}.csv")
            } else {
                format!("trace_{algorithm}.csv")
            };
            row.trace.write_csv(&cfg.out.join(name))?;
            let tau = row.fit.map(|f| f.tau);
            let r2 = row.fit.and_then(|f| f.r_squared);
            let _ = writeln!(
                summary,
                "{algorithm},{alpha},{},{},{},{},{},{}",
                row.trace.termination,
                row.trace.iterations(),
                row.trace.final_residual(),
                opt(tau),
                opt(r2),
                row.linear()
            );
            let _ = writeln!(
                table,
                "{:<14} {:>10.4e} {:>16} {:>7} {:>11.3e} {:>9}  {}",
                algorithm.to_string(),
                alpha,
                row.trace.termination.to_string(),
                row.trace.iterations(),
                row.trace.final_residual(),
                tau.map_or("-".into(), |t| format!("{t:.5}")),
                if row.linear() { "yes" } else { "not linear" }
            );
            if !grid && algorithm == Algorithm::Dextra && row.trace.diverged() {
                status = Status::Diverged;
            }
            traces.push((algorithm, alpha, row.trace));
        }
    }
    write(&cfg.out.join("summary.csv"), &summary)?;
    if grid {
        for &algorithm in &cfg.algorithms {
            let series: Vec<(String, &[f64])> = traces
                .iter()
                .filter(|t| t.0 == algorithm)
                .map(|(_, a, t)| (flagged(*a, t), t.residual.as_slice()))
                .collect();
            if !series.is_empty() {
                let title = format!("{algorithm}: residual by step size");
                residual_plot(&cfg.out.join(format!("compare_{algorithm}.svg")), &title, &series)?;
            }
        }
    } else {
        let series: Vec<(String, &[f64])> = traces
            .iter()
            .map(|(algo, _, t)| (algo.to_string(), t.residual.as_slice()))
            .collect();
        let title = format!("residual at α = {}", alphas[0]);
        residual_plot(&cfg.out.join("compare.svg"), &title, &series)?;
    }
    print!("{table}");
    Ok(status)
}

fn flagged(alpha: f64, trace: &dextra::RunTrace) -> String {
    if trace.diverged() {
        format!("α={alpha} (diverged)")
    } else {
        format!("α={alpha}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// File-name-safe label of a weight strategy.
fn slug(label: &str) -> String {
    label.replace(':', "-")
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<Status> {
    let Some(grid) = &cfg.alpha_grid else {
        bail!("sweep needs a step-size grid (--alpha-grid or [run] alpha_grid)");
    };
    let setup = load_instance(cfg)?;
    let mut setups = vec![setup.clone()];
    let contrast = match setup.strategy.parse::<WeightStrategy>() {
        Ok(WeightStrategy::LocalDegree) => Some(WeightStrategy::Constant(0.01)),
        Ok(WeightStrategy::Constant(_)) => Some(WeightStrategy::LocalDegree),
        Err(_) => None,
    };
    if let Some(s) = contrast {
        setups.push(setup.with_strategy(s)?);
    }
    ensure_dir(&cfg.out)?;
    let cert = setup.certify(&cfg.certify)?;
    let mut report = Manifest::new();
    report
        .set("grid_points", grid.len())
        .set("certificate_feasible", cert.feasible())
        .set("certified_lower", cert.interval.lower)
        .set("certified_upper", cert.interval.upper);
    let mut text = String::new();
    for s in &setups {
        let sw: SweepReport = experiment::sweep(s, Algorithm::Dextra, grid, cfg.max_iter, cfg.target)?;
        let tag = slug(&s.strategy);
        write(&cfg.out.join(format!("sweep_{tag}.csv")), &sw.to_csv())?;
        let series: Vec<(String, &[f64])> = sw
            .points
            .iter()
            .map(|p| (flagged(p.alpha, &p.trace), p.trace.residual.as_slice()))
            .collect();
        let title = format!("DEXTRA residual by step size, {} weights", s.strategy);
        residual_plot(&cfg.out.join(format!("sweep_{tag}.svg")), &title, &series)?;
        let _ = writeln!(text, "{} weights:", s.strategy);
        for p in &sw.points {
            let _ = writeln!(
                text,
                "  α={:<12.5e} {:<16} to-target={:<6} τ={}",
                p.alpha,
                p.trace.termination.to_string(),
                p.iterations_to_target().map_or("-".into(), |k| k.to_string()),
                p.fit.map_or("-".into(), |f| format!("{:.5}", f.tau)),
            );
        }
        match sw.empirical_range() {
            Some(r) => {
                report
                    .set(&format!("{tag}.alpha_max"), r.max)
                    .set(&format!("{tag}.range_min"), r.min)
                    .set(&format!("{tag}.range_width"), r.width())
                    .set(&format!("{tag}.contiguous"), r.contiguous);
                if cert.feasible() && s.strategy == setup.strategy {
                    report.set(
                        "certified_inside_empirical",
                        r.contains(cert.interval.lower, cert.interval.upper),
                    );
                }
                let _ = writeln!(
                    text,
                    "  empirical range [{:.5e}, {:.5e}]{}",
                    r.min,
                    r.max,
                    if r.contiguous { "" } else { " (with non-convergent gaps)" }
                );
            }
            None => {
                report.set(&format!("{tag}.alpha_max"), "none");
                let _ = writeln!(text, "  no grid step size converged");
            }
        }
    }
    report.save(&cfg.out.join("sweep.txt"))?;
    print!("{text}");
    Ok(Status::Success)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
