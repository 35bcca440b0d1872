//! Experiment plumbing: a graph + weights + objective bundle, algorithm
//! dispatch, step-size sweeps and multi-algorithm comparisons.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::analysis::{certify, fit_linear_rate, truncate_at_floor, Certificate, CertifyOptions, RateFit};
use crate::baselines::{run_dgd_row, run_extra, run_gradient_push, ExtraWeights, Schedule};
use crate::digraph::{random_strongly_connected, Digraph};
use crate::engine::{self, RunConfig, RunTrace};
use crate::io::{self, Manifest};
use crate::objectives::{centralized_solve, LeastSquaresInstance, LeastSquaresSpec, Objective};
use crate::stack::AgentStack;
use crate::weights::{
    constant_weights, local_degree_weights, metropolis_weights, row_stochastic_weights, stationary,
    StationaryInfo, WeightPair,
};
use crate::{Error, Result};

/// A run is convergent if it reached the target, or ended finite with the
/// residual reduced by at least this factor.
pub const CONVERGENT_REDUCTION: f64 = 1e-3;

/// `R²` a residual trace must reach to count as linearly convergent.
pub const LINEAR_R2: f64 = 0.99;

/// Residuals below this fraction of the initial one are round-off and are
/// dropped before rate fitting.
pub const FIT_FLOOR: f64 = 1e-12;

const STATIONARY_TOL: f64 = 1e-15;
const STATIONARY_MAX_ITER: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Dextra,
    Extra,
    DgdRow,
    GradientPush,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Dextra,
        Algorithm::Extra,
        Algorithm::DgdRow,
        Algorithm::GradientPush,
    ];

    pub fn default_schedule(self) -> Schedule {
        match self {
            Algorithm::Dextra | Algorithm::Extra => Schedule::Constant,
            Algorithm::DgdRow | Algorithm::GradientPush => Schedule::InvSqrt,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Dextra => "dextra",
            Algorithm::Extra => "extra",
            Algorithm::DgdRow => "dgd-row",
            Algorithm::GradientPush => "gradient-push",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dextra" => Ok(Algorithm::Dextra),
            "extra" => Ok(Algorithm::Extra),
            "dgd-row" | "dgd" => Ok(Algorithm::DgdRow),
            "gradient-push" | "gp" => Ok(Algorithm::GradientPush),
            other => Err(format!(
                "unknown algorithm `{other}` (expected dextra, extra, dgd-row or gradient-push)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightStrategy {
    LocalDegree,
    Constant(f64),
}

impl WeightStrategy {
    pub fn build(self, g: &Digraph) -> Result<nalgebra::DMatrix<f64>> {
        match self {
            WeightStrategy::LocalDegree => local_degree_weights(g),
            WeightStrategy::Constant(zeta) => constant_weights(g, zeta),
        }
    }
}

impl fmt::Display for WeightStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightStrategy::LocalDegree => f.write_str("local-degree"),
            WeightStrategy::Constant(z) => write!(f, "constant:{z}"),
        }
    }
}

impl FromStr for WeightStrategy {
    type Err = String;

    /// `local-degree`, `constant` (ζ = 0.01) or `constant:<ζ>`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        match s {
            "local-degree" => Ok(WeightStrategy::LocalDegree),
            "constant" => Ok(WeightStrategy::Constant(0.01)),
            _ => match s.strip_prefix("constant:") {
                Some(z) => z
                    .parse()
                    .map(WeightStrategy::Constant)
                    .map_err(|e| format!("bad zeta in `{s}`: {e}")),
                None => Err(format!(
                    "unknown weight strategy `{s}` (expected local-degree or constant:<zeta>)"
                )),
            },
        }
    }
}

/// Parameters of a generated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SetupSpec {
    pub agents: usize,
    pub extra_edge_prob: f64,
    pub graph_seed: u64,
    pub strategy: WeightStrategy,
    pub theta: f64,
    pub dim: usize,
    pub rows_per_agent: usize,
    pub noise_std: f64,
    pub data_seed: u64,
    pub target_lipschitz: Option<f64>,
}

impl Default for SetupSpec {
    /// Ten agents, extra-edge density 0.3, least squares with `p = 4`,
    /// `m = 6`, noise 0.1, local-degree weights.
    fn default() -> Self {
        Self {
            agents: 10,
            extra_edge_prob: 0.3,
            graph_seed: 0,
            strategy: WeightStrategy::LocalDegree,
            theta: 0.5,
            dim: 4,
            rows_per_agent: 6,
            noise_std: 0.1,
            data_seed: 0,
            target_lipschitz: Some(crate::objectives::DEFAULT_TARGET_LIPSCHITZ),
        }
    }
}

impl SetupSpec {
    /// The default spec with both seeds set to `seed`.
    pub fn seeded(seed: u64) -> Self {
        Self {
            graph_seed: seed,
            data_seed: seed,
            ..Self::default()
        }
    }

    pub fn build(&self) -> Result<Setup> {
        let graph = random_strongly_connected(self.agents, self.extra_edge_prob, self.graph_seed)?;
        let problem = LeastSquaresSpec {
            agents: self.agents,
            dim: self.dim,
            rows_per_agent: self.rows_per_agent,
            noise_std: self.noise_std,
            seed: self.data_seed,
            target_lipschitz: self.target_lipschitz,
        }
        .generate()?;
        let a = self.strategy.build(&graph)?;
        Setup::assemble(graph, a, self.strategy.to_string(), self.theta, problem)
    }
}

/// Graph, weights, stationary vector, objective and its minimizer.
#[derive(Debug, Clone)]
pub struct Setup {
    pub graph: Digraph,
    /// Label of the weight construction, e.g. `local-degree`.
    pub strategy: String,
    pub pair: WeightPair,
    pub info: StationaryInfo,
    pub problem: LeastSquaresInstance,
    pub optimum: Vec<f64>,
}

impl Setup {
    pub fn assemble(
        graph: Digraph,
        a: nalgebra::DMatrix<f64>,
        strategy: String,
        theta: f64,
        problem: LeastSquaresInstance,
    ) -> Result<Self> {
        if problem.agents() != graph.len() || a.nrows() != graph.len() {
            return Err(Error::Dimension(format!(
                "graph has {} nodes, weights {}, objective {} agents",
                graph.len(),
                a.nrows(),
                problem.agents()
            )));
        }
        let pair = WeightPair::new(a, theta)?;
        let info = stationary(pair.a(), STATIONARY_TOL, STATIONARY_MAX_ITER)?;
        let optimum = centralized_solve(&problem)?;
        Ok(Self {
            graph,
            strategy,
            pair,
            info,
            problem,
            optimum,
        })
    }

    /// Same graph and objective with another weight construction.
    pub fn with_strategy(&self, strategy: WeightStrategy) -> Result<Self> {
        let a = strategy.build(&self.graph)?;
        Self::assemble(
            self.graph.clone(),
            a,
            strategy.to_string(),
            self.pair.theta(),
            self.problem.clone(),
        )
    }

    pub fn agents(&self) -> usize {
        self.graph.len()
    }

    pub fn x0(&self) -> AgentStack {
        AgentStack::zeros(self.agents(), self.problem.dim())
    }

    pub fn certify(&self, options: &CertifyOptions) -> Result<Certificate> {
        let (l_f, s_f) = self.problem.constants();
        certify(&self.pair, &self.info, l_f, s_f, options)
    }

    /// Runs `algorithm` from zero with its default schedule.
    pub fn run(&self, algorithm: Algorithm, config: &RunConfig) -> Result<RunTrace> {
        self.run_with(algorithm, config, algorithm.default_schedule())
    }

    pub fn run_with(&self, algorithm: Algorithm, config: &RunConfig, schedule: Schedule) -> Result<RunTrace> {
        let x0 = self.x0();
        let u = &self.optimum;
        match algorithm {
            Algorithm::Dextra | Algorithm::Extra if schedule != Schedule::Constant => Err(Error::invalid(
                "schedule",
                f64::NAN,
                format!("{algorithm} only supports a constant step size"),
            )),
            Algorithm::Dextra => engine::run(&self.problem, &self.pair, x0, config, u),
            Algorithm::Extra => {
                let w = ExtraWeights::new(metropolis_weights(&self.graph)?, self.pair.theta())?;
                run_extra(&self.problem, &w, x0, config, u)
            }
            Algorithm::DgdRow => {
                run_dgd_row(&self.problem, &row_stochastic_weights(&self.graph)?, x0, config, schedule, u)
            }
            Algorithm::GradientPush => run_gradient_push(&self.problem, self.pair.a(), x0, config, schedule, u),
        }
    }

    /// Writes `graph.txt`, `A.csv`, `A_tilde.csv`, `pi.csv`, `objective/`
    /// and `manifest.txt`.
    pub fn save(&self, dir: &Path, extra: &Manifest) -> Result<()> {
        io::ensure_dir(dir)?;
        self.graph.save(&dir.join("graph.txt"))?;
        io::write_matrix_csv(&dir.join("A.csv"), self.pair.a())?;
        io::write_matrix_csv(&dir.join("A_tilde.csv"), self.pair.a_tilde())?;
        let pi = nalgebra::DMatrix::from_column_slice(self.agents(), 1, &self.info.pi);
        io::write_matrix_csv(&dir.join("pi.csv"), &pi)?;
        self.problem.save(&dir.join("objective"))?;
        let mut m = extra.clone();
        m.set("agents", self.agents())
            .set("strategy", &self.strategy)
            .set("theta", self.pair.theta());
        m.save(&dir.join("manifest.txt"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.txt");
        let m = Manifest::load(&mpath)?;
        let theta: f64 = m.parse("theta", &mpath)?;
        let strategy = m.get("strategy").unwrap_or("custom").to_string();
        let graph = Digraph::load(&dir.join("graph.txt"))?;
        let a = io::read_matrix_csv(&dir.join("A.csv"))?;
        let problem = LeastSquaresInstance::load(&dir.join("objective"))?;
        Self::assemble(graph, a, strategy, theta, problem)
    }
}

/// Reached the target, or stayed finite and shrank the residual by
/// [`CONVERGENT_REDUCTION`].
pub fn is_convergent(trace: &RunTrace) -> bool {
    trace.converged()
        || (!trace.diverged()
            && trace.final_residual().is_finite()
            && trace.final_residual() <= CONVERGENT_REDUCTION * trace.residual[0])
}

/// Log-linear fit of a residual trace above the round-off floor.
pub fn fit_residual(trace: &RunTrace) -> Option<RateFit> {
    let series = truncate_at_floor(&trace.residual, FIT_FLOOR);
    fit_linear_rate(series, series.len() / 10).ok()
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let r = (hi / lo).ln() / (count - 1) as f64;
            (0..count).map(|i| lo * (r * i as f64).exp()).collect()
        }
    }
}

/// Parses a comma-separated list of positive step sizes.
pub fn parse_alpha_grid(s: &str) -> std::result::Result<Vec<f64>, String> {
    let grid: Vec<f64> = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad step size `{t}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if grid.is_empty() {
        return Err("step-size grid is empty".into());
    }
    if let Some(bad) = grid.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(format!("step sizes must be positive, got {bad}"));
    }
    Ok(grid)
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub alpha: f64,
    pub trace: RunTrace,
    pub convergent: bool,
    pub fit: Option<RateFit>,
}

impl SweepPoint {
    /// Iterations to reach the target, if it was reached.
    pub fn iterations_to_target(&self) -> Option<usize> {
        self.trace.converged().then(|| self.trace.iterations())
    }
}

/// Smallest and largest convergent step size of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalRange {
    pub min: f64,
    pub max: f64,
    /// Whether every grid point between `min` and `max` converged.
    pub contiguous: bool,
}

impl EmpiricalRange {
    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, lo: f64, hi: f64) -> bool {
        self.min <= lo && hi <= self.max
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub algorithm: Algorithm,
    pub strategy: String,
    /// Sorted by step size.
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn empirical_range(&self) -> Option<EmpiricalRange> {
        let ok: Vec<usize> = (0..self.points.len()).filter(|&i| self.points[i].convergent).collect();
        let (&first, &last) = (ok.first()?, ok.last()?);
        Some(EmpiricalRange {
            min: self.points[first].alpha,
            max: self.points[last].alpha,
            contiguous: ok.len() == last - first + 1,
        })
    }

    pub fn alpha_max(&self) -> Option<f64> {
        self.empirical_range().map(|r| r.max)
    }

    /// CSV `alpha,outcome,iterations,final_residual,tau,r_squared`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,outcome,convergent,iterations,final_residual,tau,r_squared\n");
        for p in &self.points {
            let (tau, r2) = match p.fit {
                Some(f) => (f.tau.to_string(), f.r_squared.map_or(String::new(), |r| r.to_string())),
                None => (String::new(), String::new()),
            };
            s.push_str(&format!(
                "{},{},{},{},{},{tau},{r2}\n",
                p.alpha,
                p.trace.termination,
                p.convergent,
                p.trace.iterations(),
                p.trace.final_residual()
            ));
        }
        s
    }
}

/// Runs `algorithm` at every step size in parallel.
pub fn sweep(
    setup: &Setup,
    algorithm: Algorithm,
    alphas: &[f64],
    max_iter: usize,
    target: f64,
) -> Result<SweepReport> {
    let mut points = alphas
        .par_iter()
        .map(|&alpha| {
            let trace = setup.run(algorithm, &RunConfig::new(alpha, max_iter, target))?;
            Ok(SweepPoint {
                alpha,
                convergent: is_convergent(&trace),
                fit: fit_residual(&trace),
                trace,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    Ok(SweepReport {
        algorithm,
        strategy: setup.strategy.clone(),
        points,
    })
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub algorithm: Algorithm,
    pub trace: RunTrace,
    pub fit: Option<RateFit>,
}

impl ComparisonRow {
    /// `τ < 1` with `R² ≥ 0.99`.
    pub fn linear(&self) -> bool {
        self.fit.is_some_and(|f| f.is_linear(LINEAR_R2))
    }
}

/// Runs each algorithm from the same start with the same base step size.
/// `baseline_schedule` replaces the diminishing default of DGD and
/// gradient-push. Failures of one algorithm (e.g. EXTRA on a directed
/// graph) are returned per row.
pub fn compare(
    setup: &Setup,
    algorithms: &[Algorithm],
    config: &RunConfig,
    baseline_schedule: Option<Schedule>,
) -> Vec<(Algorithm, Result<ComparisonRow>)> {
    algorithms
        .par_iter()
        .map(|&algorithm| {
            let schedule = match algorithm {
                Algorithm::DgdRow | Algorithm::GradientPush => {
                    baseline_schedule.unwrap_or(algorithm.default_schedule())
                }
                _ => algorithm.default_schedule(),
            };
            let row = setup.run_with(algorithm, config, schedule).map(|trace| ComparisonRow {
                algorithm,
                fit: fit_residual(&trace),
                trace,
            });
            (algorithm, row)
        })
        .collect()
}
