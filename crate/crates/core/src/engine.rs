//! The DEXTRA iteration.
//!
//! Each agent `i` holds `x_i`, a scalar `y_i` and the ratio `z_i = x_i / y_i`.
//! One synchronous round is
//!
//! ```text
//! x_i ← x_i + Σ_j a_ij x_j − Σ_j ã_ij x_j^prev − α (∇f_i(z_i) − ∇f_i(z_i^prev))
//! y_i ← Σ_j a_ij y_j
//! ```
//!
//! with sums over the in-neighbors of `i`. The first round is the special
//! start `x¹ = A x⁰ − α ∇f(z⁰)`, `y¹ = A 1`.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use crate::io::Manifest;
use crate::objectives::Objective;
use crate::stack::AgentStack;
use crate::weights::WeightPair;
use crate::{Error, Result};

/// Runs stop as diverged once the residual exceeds this multiple of its
/// initial value.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Column order of trace CSV files.
pub const TRACE_HEADER: [&str; 4] = ["iter", "residual", "consensus_spread", "conservation_defect"];

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    x: AgentStack,
    y: Vec<f64>,
    z: AgentStack,
    x_prev: AgentStack,
    grad_prev: AgentStack,
    k: usize,
}

/// Per-round bookkeeping returned by [`NetworkState::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Relative violation of `1ᵀx^{k+1} − 1ᵀx^k = −α 1ᵀ∇f(z^k)`, worst column.
    pub mass_defect: f64,
    /// `|Σ y_i − n| / n` after the round.
    pub scale_defect: f64,
}

impl StepReport {
    pub fn conservation_defect(&self) -> f64 {
        self.mass_defect.max(self.scale_defect)
    }
}

impl NetworkState {
    /// Runs the special first round from `x0` and returns the state at `k = 1`.
    pub fn init(
        problem: &dyn Objective,
        pair: &WeightPair,
        x0: AgentStack,
        alpha: f64,
    ) -> Result<(Self, StepReport)> {
        check_alpha(alpha)?;
        check_dims(problem, pair, &x0)?;
        let n = x0.agents();
        let g0 = problem.stacked_gradient(&x0);
        let mut x1 = pair.a_rows().apply(&x0);
        for i in 0..n {
            for (v, g) in x1.row_mut(i).iter_mut().zip(g0.row(i)) {
                *v -= alpha * g;
            }
        }
        let y1 = pair.a_rows().apply_scalar(&vec![1.0; n]);
        let report = StepReport {
            mass_defect: mass_defect(&x1, &x0, &[(&g0, alpha)], &[]),
            scale_defect: scale_defect(&y1),
        };
        let state = Self {
            z: ratio(&x1, &y1),
            x: x1,
            y: y1,
            x_prev: x0,
            grad_prev: g0,
            k: 1,
        };
        if !state.is_finite() {
            return Err(Error::Diverged(1));
        }
        Ok((state, report))
    }

    /// Assembles a state directly; `z` is derived from `x` and `y`.
    pub fn from_parts(
        x: AgentStack,
        y: Vec<f64>,
        x_prev: AgentStack,
        grad_prev: AgentStack,
        k: usize,
    ) -> Result<Self> {
        let shape = (x.agents(), x.dim());
        if y.len() != shape.0
            || (x_prev.agents(), x_prev.dim()) != shape
            || (grad_prev.agents(), grad_prev.dim()) != shape
        {
            return Err(Error::Dimension("state components disagree in shape".into()));
        }
        if k == 0 {
            return Err(Error::invalid("k", 0.0, "states are positioned at k >= 1"));
        }
        Ok(Self {
            z: ratio(&x, &y),
            x,
            y,
            x_prev,
            grad_prev,
            k,
        })
    }

    /// One synchronous round, `k → k + 1`.
    pub fn step(&mut self, problem: &dyn Objective, pair: &WeightPair, alpha: f64) -> Result<StepReport> {
        let grad = problem.stacked_gradient(&self.z);
        let mixed = pair.a_rows().apply(&self.x);
        let lazy = pair.a_tilde_rows().apply(&self.x_prev);
        let mut next = self.x.clone();
        for i in 0..next.agents() {
            let (m, l, g, gp) = (mixed.row(i), lazy.row(i), grad.row(i), self.grad_prev.row(i));
            for (d, v) in next.row_mut(i).iter_mut().enumerate() {
                *v += m[d] - l[d] - alpha * (g[d] - gp[d]);
            }
        }
        let y = pair.a_rows().apply_scalar(&self.y);
        let report = StepReport {
            mass_defect: mass_defect(
                &next,
                &self.x,
                &[(&grad, alpha)],
                &[&self.x_prev, &self.grad_prev],
            ),
            scale_defect: scale_defect(&y),
        };
        self.z = ratio(&next, &y);
        self.x_prev = std::mem::replace(&mut self.x, next);
        self.y = y;
        self.grad_prev = grad;
        self.k += 1;
        if !self.is_finite() {
            return Err(Error::Diverged(self.k));
        }
        Ok(report)
    }

    pub fn x(&self) -> &AgentStack {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn z(&self) -> &AgentStack {
        &self.z
    }

    pub fn x_prev(&self) -> &AgentStack {
        &self.x_prev
    }

    pub fn grad_prev(&self) -> &AgentStack {
        &self.grad_prev
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.z.is_finite() && self.y.iter().all(|v| v.is_finite())
    }
}

fn ratio(x: &AgentStack, y: &[f64]) -> AgentStack {
    AgentStack::from_fn(x.agents(), x.dim(), |i, d| x.row(i)[d] / y[i])
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("alpha", alpha, "step size must be positive and finite"))
    }
}

fn check_dims(problem: &dyn Objective, pair: &WeightPair, x0: &AgentStack) -> Result<()> {
    let n = problem.agents();
    if pair.len() != n || x0.agents() != n || x0.dim() != problem.dim() {
        return Err(Error::Dimension(format!(
            "objective has {n} agents in R^{}, weights have {} agents, x0 is {}x{}",
            problem.dim(),
            pair.len(),
            x0.agents(),
            x0.dim()
        )));
    }
    Ok(())
}

/// Worst-column relative defect of `1ᵀ after − 1ᵀ before + Σ scale·1ᵀ g`.
/// `extra` only contributes to the magnitude scale.
pub(crate) fn mass_defect(
    after: &AgentStack,
    before: &AgentStack,
    steps: &[(&AgentStack, f64)],
    extra: &[&AgentStack],
) -> f64 {
    let mut diff: Vec<f64> = after
        .column_sums()
        .iter()
        .zip(before.column_sums())
        .map(|(a, b)| a - b)
        .collect();
    let mut scale: Vec<f64> = after
        .column_abs_sums()
        .iter()
        .zip(before.column_abs_sums())
        .map(|(a, b)| a + b)
        .collect();
    for (g, s) in steps {
        for (d, (v, a)) in g.column_sums().iter().zip(g.column_abs_sums()).enumerate() {
            diff[d] += s * v;
            scale[d] += s.abs() * a;
        }
    }
    for e in extra {
        for (d, a) in e.column_abs_sums().iter().enumerate() {
            scale[d] += a;
        }
    }
    diff.iter()
        .zip(&scale)
        .map(|(d, s)| if *s > 0.0 { d.abs() / s } else { 0.0 })
        .fold(0.0, f64::max)
}

pub(crate) fn scale_defect(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    (y.iter().sum::<f64>() - n).abs() / n
}

/// Mean distance of the agents' estimates to `u`.
pub fn residual(z: &AgentStack, u: &[f64]) -> f64 {
    let n = z.agents() as f64;
    z.rows()
        .map(|r| r.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .sum::<f64>()
        / n
}

/// `max_{i,j} ‖z_i − z_j‖`.
pub fn consensus_spread(z: &AgentStack) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..z.agents() {
        for j in (i + 1)..z.agents() {
            let d = z
                .row(i)
                .iter()
                .zip(z.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            worst = worst.max(d);
        }
    }
    worst.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    Budget,
    Diverged { iteration: usize },
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Converged => f.write_str("converged"),
            Termination::Budget => f.write_str("iteration-budget"),
            Termination::Diverged { iteration } => write!(f, "diverged@{iteration}"),
        }
    }
}

/// Stopping rules and recording options for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha: f64,
    pub max_iter: usize,
    pub target_residual: f64,
    /// Keep `z^k` every `snapshot_stride` iterations; 0 disables snapshots.
    pub snapshot_stride: usize,
    /// Keep every `x^k` and `y^k` (needed by the Lyapunov check).
    pub record_states: bool,
}

impl RunConfig {
    pub fn new(alpha: f64, max_iter: usize, target_residual: f64) -> Self {
        Self {
            alpha,
            max_iter,
            target_residual,
            snapshot_stride: 0,
            record_states: false,
        }
    }

    pub fn recording_states(mut self) -> Self {
        self.record_states = true;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.target_residual >= 0.0) {
            return Err(Error::invalid(
                "target_residual",
                self.target_residual,
                "must be nonnegative",
            ));
        }
        Ok(())
    }
}

/// Everything recorded during one run. Series are indexed by iteration and
/// have `iterations() + 1` entries.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub algorithm: String,
    pub alpha: f64,
    pub residual: Vec<f64>,
    pub consensus_spread: Vec<f64>,
    /// Relative conservation defect of the round ending at each iteration;
    /// entry 0 is 0. NaN for algorithms without a conserved quantity.
    pub conservation_defect: Vec<f64>,
    pub snapshots: Vec<(usize, AgentStack)>,
    /// `x^k` for every recorded `k` when states are recorded.
    pub x_history: Vec<AgentStack>,
    /// `y^k` for every recorded `k` when states are recorded.
    pub y_history: Vec<Vec<f64>>,
    /// Final estimates `z`.
    pub final_z: AgentStack,
    /// Final DEXTRA state, when the algorithm is DEXTRA and it did not diverge.
    pub final_state: Option<NetworkState>,
    pub termination: Termination,
    /// Wall-clock seconds spent on each iteration (entry 0 is 0).
    pub iteration_seconds: Vec<f64>,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.residual.len() - 1
    }

    pub fn final_residual(&self) -> f64 {
        *self.residual.last().unwrap()
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn diverged(&self) -> bool {
        matches!(self.termination, Termination::Diverged { .. })
    }

    /// Residual at iteration `k`, or the last one recorded if the run
    /// stopped earlier by converging.
    pub fn residual_at(&self, k: usize) -> f64 {
        self.residual[k.min(self.residual.len() - 1)]
    }

    pub fn max_conservation_defect(&self) -> f64 {
        self.conservation_defect.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = TRACE_HEADER.join(",");
        out.push('\n');
        for k in 0..self.residual.len() {
            out.push_str(&format!(
                "{k},{},{},{}\n",
                self.residual[k], self.consensus_spread[k], self.conservation_defect[k]
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Sidecar metadata; callers add seed and weight strategy.
    pub fn manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.set("algorithm", &self.algorithm)
            .set("alpha", self.alpha)
            .set("iterations", self.iterations())
            .set("final_residual", self.final_residual())
            .set("termination", self.termination);
        m
    }
}

/// Shared residual/stopping bookkeeping for DEXTRA and the baselines.
pub(crate) struct Recorder<'a> {
    u: &'a [f64],
    config: &'a RunConfig,
    trace: RunTrace,
    initial: f64,
    clock: Instant,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(algorithm: &str, config: &'a RunConfig, u: &'a [f64], z0: &AgentStack) -> Self {
        let r0 = residual(z0, u);
        let mut rec = Self {
            u,
            config,
            trace: RunTrace {
                algorithm: algorithm.to_string(),
                alpha: config.alpha,
                residual: Vec::new(),
                consensus_spread: Vec::new(),
                conservation_defect: Vec::new(),
                snapshots: Vec::new(),
                x_history: Vec::new(),
                y_history: Vec::new(),
                final_z: z0.clone(),
                final_state: None,
                termination: Termination::Budget,
                iteration_seconds: Vec::new(),
            },
            initial: r0,
            clock: Instant::now(),
        };
        rec.push(z0, 0.0);
        rec.trace.iteration_seconds.push(0.0);
        rec
    }

    pub(crate) fn record_state(&mut self, x: &AgentStack, y: &[f64]) {
        if self.config.record_states {
            self.trace.x_history.push(x.clone());
            self.trace.y_history.push(y.to_vec());
        }
    }

    fn push(&mut self, z: &AgentStack, defect: f64) {
        let k = self.trace.residual.len();
        self.trace.residual.push(residual(z, self.u));
        self.trace.consensus_spread.push(consensus_spread(z));
        self.trace.conservation_defect.push(defect);
        if self.config.snapshot_stride > 0 && k.is_multiple_of(self.config.snapshot_stride) {
            self.trace.snapshots.push((k, z.clone()));
        }
    }

    /// Records the iterate reached after a round; returns the termination
    /// if the run should stop.
    pub(crate) fn after_round(&mut self, z: &AgentStack, defect: f64) -> Option<Termination> {
        self.trace.iteration_seconds.push(self.clock.elapsed().as_secs_f64());
        self.clock = Instant::now();
        self.push(z, defect);
        self.trace.final_z = z.clone();
        let k = self.trace.residual.len() - 1;
        let r = *self.trace.residual.last().unwrap();
        if !r.is_finite() || r > DIVERGENCE_FACTOR * self.initial.max(f64::MIN_POSITIVE) {
            Some(Termination::Diverged { iteration: k })
        } else if r <= self.config.target_residual {
            Some(Termination::Converged)
        } else if k >= self.config.max_iter {
            Some(Termination::Budget)
        } else {
            None
        }
    }

    /// Checks the starting point before any round runs.
    pub(crate) fn initial_termination(&self) -> Option<Termination> {
        if self.trace.residual[0] <= self.config.target_residual {
            Some(Termination::Converged)
        } else if self.config.max_iter == 0 {
            Some(Termination::Budget)
        } else {
            None
        }
    }

    pub(crate) fn diverged_at(&mut self, k: usize) -> Termination {
        self.trace.iteration_seconds.push(self.clock.elapsed().as_secs_f64());
        let n = self.trace.final_z.agents();
        let p = self.trace.final_z.dim();
        let nan = AgentStack::from_fn(n, p, |_, _| f64::NAN);
        self.push(&nan, f64::NAN);
        self.trace.final_z = nan;
        Termination::Diverged { iteration: k }
    }

    pub(crate) fn finish(mut self, termination: Termination) -> RunTrace {
        self.trace.termination = termination;
        self.trace
    }

    pub(crate) fn set_final_state(&mut self, state: NetworkState) {
        self.trace.final_state = Some(state);
    }
}

/// Runs DEXTRA from `x0` until the residual to `u` reaches the target, the
/// budget runs out, or the iterates diverge.
pub fn run(
    problem: &dyn Objective,
    pair: &WeightPair,
    x0: AgentStack,
    config: &RunConfig,
    u: &[f64],
) -> Result<RunTrace> {
    config.validate()?;
    check_dims(problem, pair, &x0)?;
    if u.len() != problem.dim() {
        return Err(Error::Dimension(format!(
            "optimum has length {}, expected {}",
            u.len(),
            problem.dim()
        )));
    }
    let mut rec = Recorder::new("dextra", config, u, &x0);
    rec.record_state(&x0, &vec![1.0; x0.agents()]);
    if let Some(t) = rec.initial_termination() {
        return Ok(rec.finish(t));
    }
    let (mut state, report) = match NetworkState::init(problem, pair, x0, config.alpha) {
        Ok(v) => v,
        Err(Error::Diverged(k)) => {
            let t = rec.diverged_at(k);
            return Ok(rec.finish(t));
        }
        Err(e) => return Err(e),
    };
    rec.record_state(state.x(), state.y());
    let mut stop = rec.after_round(state.z(), report.conservation_defect());
    while stop.is_none() {
        match state.step(problem, pair, config.alpha) {
            Ok(report) => {
                rec.record_state(state.x(), state.y());
                stop = rec.after_round(state.z(), report.conservation_defect());
            }
            Err(Error::Diverged(k)) => {
                stop = Some(rec.diverged_at(k));
            }
            Err(e) => return Err(e),
        }
    }
    let termination = stop.unwrap();
    if !matches!(termination, Termination::Diverged { .. }) {
        rec.set_final_state(state);
    }
    Ok(rec.finish(termination))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digraph::{random_connected_undirected, random_strongly_connected, Digraph};
    use crate::objectives::{centralized_solve, generate_least_squares, LeastSquaresInstance};
    use crate::weights::{local_degree_weights, metropolis_weights, stationary};
    use nalgebra::{DMatrix, DVector};

    fn cycle_pair() -> WeightPair {
        let g = Digraph::new(3, [(1, 0), (2, 1), (0, 2), (2, 0)]).unwrap();
        WeightPair::new(local_degree_weights(&g).unwrap(), 0.5).unwrap()
    }

    fn dense_grad(problem: &dyn Objective, z: &DMatrix<f64>) -> DMatrix<f64> {
        let s = AgentStack::from_matrix(z);
        problem.stacked_gradient(&s).to_matrix()
    }

    /// Dense matrix-form oracle: returns (x^k, y^k) for k = 0..=iters.
    fn dense_oracle(
        problem: &dyn Objective,
        pair: &WeightPair,
        x0: &DMatrix<f64>,
        alpha: f64,
        iters: usize,
    ) -> Vec<(DMatrix<f64>, DVector<f64>)> {
        let n = x0.nrows();
        let a = pair.a();
        let at = pair.a_tilde();
        let eye = DMatrix::<f64>::identity(n, n);
        let z_of = |x: &DMatrix<f64>, y: &DVector<f64>| {
            DMatrix::from_fn(n, x.ncols(), |i, d| x[(i, d)] / y[i])
        };
        let y0 = DVector::from_element(n, 1.0);
        let g0 = dense_grad(problem, x0);
        let x1 = a * x0 - &g0 * alpha;
        let y1 = a * &y0;
        let mut out = vec![(x0.clone(), y0), (x1, y1)];
        let mut gprev = g0;
        while out.len() <= iters {
            let (xk, yk) = out[out.len() - 1].clone();
            let xp = out[out.len() - 2].0.clone();
            let g = dense_grad(problem, &z_of(&xk, &yk));
            let xn = (&eye + a) * &xk - at * &xp - (&g - &gprev) * alpha;
            let yn = a * &yk;
            gprev = g;
            out.push((xn, yn));
        }
        out
    }

    fn scalar_quadratic(h: f64, t: f64) -> LeastSquaresInstance {
        LeastSquaresInstance::from_parts(
            vec![DMatrix::from_element(1, 1, h)],
            vec![DVector::from_element(1, t)],
            vec![0.0],
            0.0,
            0,
        )
        .unwrap()
    }

    #[test]
    fn init_from_zero_is_negative_gradient_step() {
        let inst = generate_least_squares(3, 2, 3, 0.1, 1).unwrap();
        let pair = cycle_pair();
        let x0 = AgentStack::zeros(3, 2);
        let g0 = inst.stacked_gradient(&x0);
        let (s, _) = NetworkState::init(&inst, &pair, x0, 0.3).unwrap();
        for i in 0..3 {
            for d in 0..2 {
                assert_eq!(s.x().row(i)[d], -0.3 * g0.row(i)[d]);
            }
        }
        assert_eq!(s.k(), 1);
    }

    #[test]
    fn doubly_stochastic_keeps_unit_scale() {
        let g = random_connected_undirected(5, 0.3, 2).unwrap();
        let pair = WeightPair::new(metropolis_weights(&g).unwrap(), 0.5).unwrap();
        let inst = generate_least_squares(5, 2, 3, 0.1, 2).unwrap();
        let (s, _) = NetworkState::init(&inst, &pair, AgentStack::zeros(5, 2), 0.1).unwrap();
        for y in s.y() {
            assert!((y - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let inst = generate_least_squares(3, 2, 3, 0.1, 1).unwrap();
        let pair = cycle_pair();
        assert!(NetworkState::init(&inst, &pair, AgentStack::zeros(3, 2), 0.0).is_err());
        assert!(NetworkState::init(&inst, &pair, AgentStack::zeros(3, 2), f64::NAN).is_err());
        assert!(matches!(
            NetworkState::init(&inst, &pair, AgentStack::zeros(2, 2), 0.1),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn matches_dense_oracle_on_three_nodes() {
        let inst = generate_least_squares(3, 2, 3, 0.1, 4).unwrap();
        let pair = cycle_pair();
        let x0 = AgentStack::from_fn(3, 2, |i, d| (i as f64) - 0.5 * d as f64);
        let oracle = dense_oracle(&inst, &pair, &x0.to_matrix(), 0.2, 40);
        let (mut s, _) = NetworkState::init(&inst, &pair, x0, 0.2).unwrap();
        assert!(s.x().max_abs_diff(&AgentStack::from_matrix(&oracle[1].0)) <= 1e-14);
        s.step(&inst, &pair, 0.2).unwrap();
        assert!(s.x().max_abs_diff(&AgentStack::from_matrix(&oracle[2].0)) <= 1e-14);
        for k in 3..=40 {
            s.step(&inst, &pair, 0.2).unwrap();
            let (x, y) = &oracle[k];
            assert!(s.x().max_abs_diff(&AgentStack::from_matrix(x)) <= 1e-13, "k={k}");
            for (a, b) in s.y().iter().zip(y.iter()) {
                assert!((a - b).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn sparse_and_dense_runs_agree_on_ten_nodes() {
        let g = random_strongly_connected(10, 0.3, 8).unwrap();
        let pair = WeightPair::new(local_degree_weights(&g).unwrap(), 0.5).unwrap();
        let inst = generate_least_squares(10, 4, 6, 0.1, 8).unwrap();
        let x0 = AgentStack::zeros(10, 4);
        let oracle = dense_oracle(&inst, &pair, &x0.to_matrix(), 0.5, 300);
        let (mut s, _) = NetworkState::init(&inst, &pair, x0, 0.5).unwrap();
        for (k, (x, _)) in oracle.iter().enumerate().skip(2) {
            s.step(&inst, &pair, 0.5).unwrap();
            // summation order differs, and the mass direction is only weakly
            // damped, so compare relative to the iterate magnitude
            let diff = s.x().max_abs_diff(&AgentStack::from_matrix(x));
            let scale = x.amax().max(1.0);
            assert!(diff <= 1e-13 * scale, "k={k}: {diff:e}");
        }
    }

    #[test]
    fn single_agent_is_gradient_descent() {
        let inst = scalar_quadratic(1.3, 0.7);
        let pair = WeightPair::new(DMatrix::identity(1, 1), 0.5).unwrap();
        let alpha = 0.2;
        let x0 = AgentStack::from_fn(1, 1, |_, _| 2.0);
        let (mut s, _) = NetworkState::init(&inst, &pair, x0, alpha).unwrap();
        let mut gd = 2.0;
        gd -= alpha * inst.gradient(0, &[gd])[0];
        assert_eq!(s.x().row(0)[0], gd);
        for _ in 0..2 {
            s.step(&inst, &pair, alpha).unwrap();
            gd -= alpha * inst.gradient(0, &[gd])[0];
            assert!((s.z().row(0)[0] - gd).abs() <= 1e-15);
        }
    }

    #[test]
    fn optimum_is_a_fixed_point() {
        let g = random_strongly_connected(6, 0.3, 3).unwrap();
        let pair = WeightPair::new(local_degree_weights(&g).unwrap(), 0.5).unwrap();
        let info = stationary(pair.a(), 1e-15, 1_000_000).unwrap();
        let inst = generate_least_squares(6, 3, 4, 0.1, 3).unwrap();
        let u = centralized_solve(&inst).unwrap();
        let x = AgentStack::outer(&info.pi, &u);
        let grad = inst.stacked_gradient(&AgentStack::broadcast(6, &u));
        let mut s =
            NetworkState::from_parts(x.clone(), info.pi.clone(), x.clone(), grad.clone(), 5).unwrap();
        s.step(&inst, &pair, 0.3).unwrap();
        assert!(s.x().max_abs_diff(&x) <= 1e-12);
        for (a, b) in s.y().iter().zip(&info.pi) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(s.grad_prev().max_abs_diff(&grad) <= 1e-12);
    }

    #[test]
    fn conservation_holds_each_round() {
        let g = random_strongly_connected(10, 0.3, 1).unwrap();
        let pair = WeightPair::new(local_degree_weights(&g).unwrap(), 0.5).unwrap();
        let inst = generate_least_squares(10, 4, 6, 0.1, 1).unwrap();
        let x0 = AgentStack::from_fn(10, 4, |i, d| ((i * 7 + d * 3) % 5) as f64 - 2.0);
        let (mut s, r) = NetworkState::init(&inst, &pair, x0, 0.4).unwrap();
        assert!(r.conservation_defect() <= 1e-12);
        for _ in 0..500 {
            // independent recomputation of the identity
            let before = s.x().column_sums();
            let g = inst.stacked_gradient(s.z()).column_sums();
            let r = s.step(&inst, &pair, 0.4).unwrap();
            let after = s.x().column_sums();
            let scale = s.x().column_abs_sums().iter().sum::<f64>() + 1.0;
            for d in 0..4 {
                assert!((after[d] - before[d] + 0.4 * g[d]).abs() <= 1e-12 * scale);
            }
            assert!(r.conservation_defect() <= 1e-12);
            assert!((s.y().iter().sum::<f64>() - 10.0).abs() <= 1e-12 * 10.0);
        }
    }

    #[test]
    fn residual_examples() {
        let u = [1.0, -2.0];
        assert_eq!(residual(&AgentStack::broadcast(4, &u), &u), 0.0);
        let z = AgentStack::from_fn(2, 2, |i, d| u[d] + if d == 0 { if i == 0 { 1.0 } else { -1.0 } } else { 0.0 });
        assert_eq!(residual(&z, &u), 1.0);
        let z = AgentStack::from_fn(5, 3, |i, d| ((i * 13 + d * 5) % 7) as f64 * 0.37 - 1.0);
        let v = [0.2, -0.4, 0.9];
        let mut acc = 0.0;
        for i in 0..5 {
            let mut sq = 0.0;
            for d in 0..3 {
                sq += (z.row(i)[d] - v[d]).powi(2);
            }
            acc += sq.sqrt();
        }
        assert!((residual(&z, &v) - acc / 5.0).abs() <= 1e-15);
    }

    #[test]
    fn run_from_optimum_stops_immediately() {
        let inst = generate_least_squares(3, 2, 3, 0.1, 1).unwrap();
        let u = centralized_solve(&inst).unwrap();
        let t = run(&inst, &cycle_pair(), AgentStack::broadcast(3, &u), &RunConfig::new(0.1, 100, 1e-10), &u)
            .unwrap();
        assert_eq!(t.residual, vec![0.0]);
        assert!(t.converged());
    }

    #[test]
    fn run_converges_and_diverges() {
        let g = random_strongly_connected(10, 0.3, 0).unwrap();
        let pair = WeightPair::new(local_degree_weights(&g).unwrap(), 0.5).unwrap();
        let inst = generate_least_squares(10, 4, 6, 0.1, 0).unwrap();
        let u = centralized_solve(&inst).unwrap();
        let good = run(&inst, &pair, AgentStack::zeros(10, 4), &RunConfig::new(0.5, 5000, 1e-10), &u).unwrap();
        assert!(good.converged(), "{}", good.termination);
        assert!(good.final_residual() <= 1e-10);
        assert_eq!(good.residual.len(), good.iterations() + 1);
        assert_eq!(good.consensus_spread.len(), good.residual.len());
        assert_eq!(good.iteration_seconds.len(), good.residual.len());
        assert!(good.max_conservation_defect() <= 1e-12);

        let bad = run(&inst, &pair, AgentStack::zeros(10, 4), &RunConfig::new(1000.0, 5000, 1e-10), &u).unwrap();
        assert!(bad.diverged(), "{}", bad.termination);
        assert!(bad.final_state.is_none());
    }

    #[test]
    fn runs_are_deterministic_and_export() {
        let inst = generate_least_squares(3, 2, 3, 0.1, 1).unwrap();
        let u = centralized_solve(&inst).unwrap();
        let mut cfg = RunConfig::new(0.5, 50, 0.0);
        cfg.snapshot_stride = 10;
        let a = run(&inst, &cycle_pair(), AgentStack::zeros(3, 2), &cfg, &u).unwrap();
        let b = run(&inst, &cycle_pair(), AgentStack::zeros(3, 2), &cfg, &u).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.termination, Termination::Budget);
        assert_eq!(a.snapshots.len(), 6);
        let csv = a.to_csv();
        assert!(csv.starts_with("iter,residual,consensus_spread,conservation_defect\n"));
        assert_eq!(csv.lines().count(), 52);
        assert_eq!(a.manifest().get("termination"), Some("iteration-budget"));
    }
}
