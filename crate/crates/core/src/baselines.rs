//! Comparison algorithms: EXTRA on undirected graphs, DGD with
//! row-stochastic weights, and gradient-push.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::engine::{mass_defect, scale_defect, Recorder, RunConfig, RunTrace, Termination};
use crate::objectives::Objective;
use crate::stack::AgentStack;
use crate::weights::{check_column_stochastic, SparseRows};
use crate::{Error, Result};

/// Largest tolerated `|w_ij − w_ji|` for EXTRA weights.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Step size as a function of the iteration index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Constant,
    /// `α / √(k + 1)`.
    InvSqrt,
}

impl Schedule {
    pub fn at(self, alpha: f64, k: usize) -> f64 {
        match self {
            Schedule::Constant => alpha,
            Schedule::InvSqrt => alpha / ((k + 1) as f64).sqrt(),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::Constant => "constant",
            Schedule::InvSqrt => "inv-sqrt",
        })
    }
}

impl FromStr for Schedule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "constant" => Ok(Schedule::Constant),
            "inv-sqrt" | "diminishing" => Ok(Schedule::InvSqrt),
            other => Err(format!("unknown schedule `{other}` (expected constant or inv-sqrt)")),
        }
    }
}

/// Symmetric doubly-stochastic `W` and `W̃ = θI + (1−θ)W`.
#[derive(Debug, Clone)]
pub struct ExtraWeights {
    w: DMatrix<f64>,
    rows: SparseRows,
    tilde_rows: SparseRows,
}

impl ExtraWeights {
    pub fn new(w: DMatrix<f64>, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 0.5) {
            return Err(Error::invalid("theta", theta, "must lie in (0, 1/2]"));
        }
        check_column_stochastic(&w)?;
        let asym = (&w - w.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetricMatrix(asym));
        }
        let n = w.nrows();
        let tilde = DMatrix::identity(n, n) * theta + &w * (1.0 - theta);
        Ok(Self {
            rows: SparseRows::from_dense(&w),
            tilde_rows: SparseRows::from_dense(&tilde),
            w,
        })
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.nrows() == 0
    }
}

/// `x^{k+1} = (I+W)x^k − W̃x^{k−1} − α(∇f(x^k) − ∇f(x^{k−1}))`.
pub fn extra_step(
    x: &AgentStack,
    x_prev: &AgentStack,
    grads: &AgentStack,
    grads_prev: &AgentStack,
    weights: &ExtraWeights,
    alpha: f64,
) -> AgentStack {
    let mixed = weights.rows.apply(x);
    let lazy = weights.tilde_rows.apply(x_prev);
    let mut next = x.clone();
    for i in 0..next.agents() {
        let (m, l, g, gp) = (mixed.row(i), lazy.row(i), grads.row(i), grads_prev.row(i));
        for (d, v) in next.row_mut(i).iter_mut().enumerate() {
            *v += m[d] - l[d] - alpha * (g[d] - gp[d]);
        }
    }
    next
}

/// `x^{k+1} = W x^k − α_k ∇f(x^k)` with row-stochastic `W`.
pub fn dgd_row_step(x: &AgentStack, grads: &AgentStack, w_row: &SparseRows, alpha_k: f64) -> AgentStack {
    let mut next = w_row.apply(x);
    axpy_rows(&mut next, grads, -alpha_k);
    next
}

/// Gradient then push: `w^{k+1} = A(w^k − α_k ∇f(z^k))`, `y^{k+1} = A y^k`.
pub fn gradient_push_step(
    w: &AgentStack,
    y: &[f64],
    grads_at_z: &AgentStack,
    a: &SparseRows,
    alpha_k: f64,
) -> (AgentStack, Vec<f64>) {
    let mut pre = w.clone();
    axpy_rows(&mut pre, grads_at_z, -alpha_k);
    (a.apply(&pre), a.apply_scalar(y))
}

fn axpy_rows(target: &mut AgentStack, g: &AgentStack, scale: f64) {
    for i in 0..target.agents() {
        for (t, v) in target.row_mut(i).iter_mut().zip(g.row(i)) {
            *t += scale * v;
        }
    }
}

fn ratio(w: &AgentStack, y: &[f64]) -> AgentStack {
    AgentStack::from_fn(w.agents(), w.dim(), |i, d| w.row(i)[d] / y[i])
}

fn check_inputs(problem: &dyn Objective, n: usize, x0: &AgentStack, u: &[f64], config: &RunConfig) -> Result<()> {
    config.validate()?;
    if problem.agents() != n || x0.agents() != n || x0.dim() != problem.dim() || u.len() != problem.dim() {
        return Err(Error::Dimension(format!(
            "objective has {} agents in R^{}, weights have {n}, x0 is {}x{}, optimum has length {}",
            problem.agents(),
            problem.dim(),
            x0.agents(),
            x0.dim(),
            u.len()
        )));
    }
    Ok(())
}

/// Drives `round(k)` until the recorder stops; `round` returns the new
/// estimate and its conservation defect, or `None` on non-finite values.
fn drive(
    mut rec: Recorder<'_>,
    mut round: impl FnMut(usize) -> Option<(AgentStack, f64)>,
) -> RunTrace {
    if let Some(t) = rec.initial_termination() {
        return rec.finish(t);
    }
    let mut k = 0;
    let stop: Termination = loop {
        match round(k) {
            Some((z, defect)) => {
                if let Some(t) = rec.after_round(&z, defect) {
                    break t;
                }
            }
            None => break rec.diverged_at(k + 1),
        }
        k += 1;
    };
    rec.finish(stop)
}

/// EXTRA from `x0`, started with `x¹ = W x⁰ − α∇f(x⁰)`.
pub fn run_extra(
    problem: &dyn Objective,
    weights: &ExtraWeights,
    x0: AgentStack,
    config: &RunConfig,
    u: &[f64],
) -> Result<RunTrace> {
    check_inputs(problem, weights.len(), &x0, u, config)?;
    let alpha = config.alpha;
    let rec = Recorder::new("extra", config, u, &x0);
    let mut x_prev = AgentStack::zeros(x0.agents(), x0.dim());
    let mut g_prev = AgentStack::zeros(x0.agents(), x0.dim());
    let mut x = x0;
    Ok(drive(rec, |k| {
        let g = problem.stacked_gradient(&x);
        let next = if k == 0 {
            dgd_row_step(&x, &g, &weights.rows, alpha)
        } else {
            extra_step(&x, &x_prev, &g, &g_prev, weights, alpha)
        };
        let defect = if k == 0 {
            mass_defect(&next, &x, &[(&g, alpha)], &[])
        } else {
            mass_defect(&next, &x, &[(&g, alpha)], &[&x_prev, &g_prev])
        };
        x_prev = std::mem::replace(&mut x, next);
        g_prev = g;
        x.is_finite().then(|| (x.clone(), defect))
    }))
}

/// DGD with row-stochastic `w_row`; no conserved quantity, so the defect
/// column is NaN.
pub fn run_dgd_row(
    problem: &dyn Objective,
    w_row: &DMatrix<f64>,
    x0: AgentStack,
    config: &RunConfig,
    schedule: Schedule,
    u: &[f64],
) -> Result<RunTrace> {
    check_row_stochastic(w_row)?;
    check_inputs(problem, w_row.nrows(), &x0, u, config)?;
    let rows = SparseRows::from_dense(w_row);
    let rec = Recorder::new("dgd-row", config, u, &x0);
    let mut x = x0;
    Ok(drive(rec, |k| {
        let g = problem.stacked_gradient(&x);
        x = dgd_row_step(&x, &g, &rows, schedule.at(config.alpha, k));
        x.is_finite().then(|| (x.clone(), f64::NAN))
    }))
}

/// Gradient-push with column-stochastic `a`, from `w⁰ = x0`, `y⁰ = 1`.
pub fn run_gradient_push(
    problem: &dyn Objective,
    a: &DMatrix<f64>,
    x0: AgentStack,
    config: &RunConfig,
    schedule: Schedule,
    u: &[f64],
) -> Result<RunTrace> {
    check_column_stochastic(a)?;
    check_inputs(problem, a.nrows(), &x0, u, config)?;
    let rows = SparseRows::from_dense(a);
    let rec = Recorder::new("gradient-push", config, u, &x0);
    let mut y = vec![1.0; x0.agents()];
    let mut z = x0.clone();
    let mut w = x0;
    Ok(drive(rec, |k| {
        let g = problem.stacked_gradient(&z);
        let alpha_k = schedule.at(config.alpha, k);
        let (wn, yn) = gradient_push_step(&w, &y, &g, &rows, alpha_k);
        let defect = mass_defect(&wn, &w, &[(&g, alpha_k)], &[]).max(scale_defect(&yn));
        w = wn;
        y = yn;
        z = ratio(&w, &y);
        z.is_finite().then(|| (z.clone(), defect))
    }))
}

pub fn check_row_stochastic(w: &DMatrix<f64>) -> Result<()> {
    check_column_stochastic(&w.transpose()).map_err(|e| match e {
        Error::NotColumnStochastic { column, sum } => Error::Dimension(format!(
            "matrix is not row-stochastic: row {column} sums to {sum}"
        )),
        other => other,
    })
}
