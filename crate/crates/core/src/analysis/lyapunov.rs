//! Numerical check of the contraction inequality
//! `‖t^k − t*‖²_G ≥ (1+δ)‖t^{k+1} − t*‖²_G − Γγ^k` along a recorded run.
//!
//! `t^k` stacks `x^k` and the running sum `q^k = Σ_{r≤k} x^r`; the limit
//! pairs `π ⊗ u` with the minimum-norm `q*` solving `L q* = −α ∇f(1 ⊗ u)`.
//! `G` weights the two blocks by `Mᵀ` and `N`.

use std::path::Path;

use nalgebra::DMatrix;

use crate::engine::RunTrace;
use crate::linalg;
use crate::objectives::Objective;
use crate::stack::AgentStack;
use crate::weights::{StationaryInfo, WeightPair};
use crate::{Error, Result};

use super::matrices::build_matrix_set;
use super::rate::{fit_linear_rate, truncate_at_floor, RateFit};

/// Largest tolerated negative G-seminorm value.
pub const SEMINORM_TOL: f64 = 1e-10;

/// Relative floor below which `‖x^k − π⊗u‖²` is treated as round-off.
pub const ERROR_FLOOR: f64 = 1e-20;

/// Relative floor for the `y^k → π` series.
const SCALE_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct LyapunovTrace {
    /// `‖t^k − t*‖²_G`
    pub g_seminorm: Vec<f64>,
    /// `‖D^k z^k − D∞ z*‖² = ‖x^k − π⊗u‖²`
    pub dz_error_sq: Vec<f64>,
    pub q_star: DMatrix<f64>,
    pub delta: f64,
    /// Lemma value `1 − 1/n^n`.
    pub gamma: f64,
    /// Fitted rate of `max_i |y_i^k − π_i|`; `None` if `y` starts at `π`.
    pub gamma_empirical: Option<f64>,
    /// Iterations used before the error reaches the round-off floor.
    pub horizon: usize,
    /// Smallest `Γ ≥ 0` making the inequality hold with `gamma`.
    pub gamma_coefficient: f64,
    /// The same with `gamma_empirical`.
    pub gamma_coefficient_empirical: Option<f64>,
    /// Log-linear fit of `dz_error_sq` up to `horizon`.
    pub tau_fit: Option<RateFit>,
}

impl LyapunovTrace {
    pub fn min_seminorm(&self) -> f64 {
        self.g_seminorm.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn nonnegative(&self) -> bool {
        self.min_seminorm() >= -SEMINORM_TOL
    }

    /// `max{1/(1+δ), γ}`, the floor the rate bound places on `τ`.
    pub fn tau_floor(&self) -> f64 {
        (1.0 / (1.0 + self.delta)).max(self.gamma)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,g_seminorm,dz_error_sq\n");
        for (k, (g, e)) in self.g_seminorm.iter().zip(&self.dz_error_sq).enumerate() {
            s.push_str(&format!("{k},{g},{e}\n"));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub enum LyapunovOutcome {
    Inapplicable(String),
    Validated(LyapunovTrace),
}

/// Smallest `Γ ≥ 0` with `s_k ≥ (1+δ) s_{k+1} − Γ γ^k` for all `k < horizon`.
pub fn required_gamma_coefficient(series: &[f64], delta: f64, gamma: f64) -> f64 {
    let log_gamma = gamma.ln();
    let mut worst: f64 = 0.0;
    for k in 0..series.len().saturating_sub(1) {
        let excess = (1.0 + delta) * series[k + 1] - series[k];
        if excess > 0.0 {
            worst = worst.max(excess * (-(k as f64) * log_gamma).exp());
        }
    }
    worst
}

/// Evaluates the G-seminorm series of a converged DEXTRA run recorded with
/// states, and the quantities derived from it.
pub fn lyapunov_validate(
    trace: &RunTrace,
    problem: &dyn Objective,
    pair: &WeightPair,
    info: &StationaryInfo,
    delta: f64,
    u: &[f64],
) -> Result<LyapunovOutcome> {
    if !trace.converged() {
        return Ok(LyapunovOutcome::Inapplicable(format!(
            "run did not converge ({})",
            trace.termination
        )));
    }
    if trace.x_history.is_empty() || trace.y_history.len() != trace.x_history.len() {
        return Ok(LyapunovOutcome::Inapplicable("run was recorded without states".into()));
    }
    let n = pair.len();
    let p = u.len();
    let alpha = trace.alpha;
    let ms = build_matrix_set(pair, info)?;
    let g_star = problem.stacked_gradient(&AgentStack::broadcast(n, u)).to_matrix() * (-alpha);
    let q_star = linalg::min_norm_solve(&ms.l, &g_star, 1e-12)?;
    let m_sym = (&ms.m + ms.m.transpose()) * 0.5;
    let n_sym = (&ms.n + ms.n.transpose()) * 0.5;
    let limit = AgentStack::outer(&info.pi, u).to_matrix();

    let mut g_seminorm = Vec::with_capacity(trace.x_history.len());
    let mut dz_error_sq = Vec::with_capacity(trace.x_history.len());
    // Σ_r (x^r − π⊗u); q^k − q* differs from this minus q* by a multiple
    // of π, which the N-block ignores
    let mut drift = DMatrix::<f64>::zeros(n, p);
    for x in &trace.x_history {
        let a = x.to_matrix() - &limit;
        drift += &a;
        let mut b = &drift - &q_star;
        for mut col in b.column_iter_mut() {
            let c = col.sum() / n as f64;
            for (v, pi) in col.iter_mut().zip(&info.pi) {
                *v -= c * pi;
            }
        }
        g_seminorm.push(quad_form(&m_sym, &a) + quad_form(&n_sym, &b));
        dz_error_sq.push(a.norm_squared());
    }

    let horizon = truncate_at_floor(&dz_error_sq, ERROR_FLOOR).len();
    let window = &g_seminorm[..horizon];
    let scale_gap: Vec<f64> = trace
        .y_history
        .iter()
        .map(|y| {
            y.iter()
                .zip(&info.pi)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let gamma_empirical = {
        let s = truncate_at_floor(&scale_gap, SCALE_FLOOR);
        fit_linear_rate(s, 0).ok().map(|f| f.tau.min(1.0))
    };
    let tau_fit = {
        let s = &dz_error_sq[..horizon];
        fit_linear_rate(s, s.len() / 10).ok()
    };
    Ok(LyapunovOutcome::Validated(LyapunovTrace {
        gamma_coefficient: required_gamma_coefficient(window, delta, info.gamma),
        gamma_coefficient_empirical: gamma_empirical
            .map(|g| required_gamma_coefficient(window, delta, g)),
        g_seminorm,
        dz_error_sq,
        q_star,
        delta,
        gamma: info.gamma,
        gamma_empirical,
        horizon,
        tau_fit,
    }))
}

/// `Σ_d v_dᵀ S v_d` over the columns of `v`.
fn quad_form(s: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    v.column_iter().map(|c| c.dot(&(s * c))).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digraph::random_strongly_connected;
    use crate::engine::{run, RunConfig};
    use crate::objectives::{centralized_solve, generate_least_squares, LeastSquaresInstance};
    use crate::weights::{local_degree_weights, stationary};
    use nalgebra::DVector;

    fn validated(o: LyapunovOutcome) -> LyapunovTrace {
        match o {
            LyapunovOutcome::Validated(t) => t,
            LyapunovOutcome::Inapplicable(r) => panic!("inapplicable: {r}"),
        }
    }

    #[test]
    fn started_at_optimum_is_zero() {
        // noiseless data gives every agent the same minimizer, and
        // doubly-stochastic weights put π at 1, so t^0 = t*
        let g = crate::digraph::random_connected_undirected(4, 0.3, 1).unwrap();
        let pair = WeightPair::new(crate::weights::metropolis_weights(&g).unwrap(), 0.5).unwrap();
        let info = stationary(pair.a(), 1e-15, 1_000_000).unwrap();
        let inst = generate_least_squares(4, 2, 3, 0.0, 1).unwrap();
        let u = centralized_solve(&inst).unwrap();
        let trace = run(
            &inst,
            &pair,
            AgentStack::broadcast(4, &u),
            &RunConfig::new(0.1, 10, 0.0).recording_states(),
            &u,
        )
        .unwrap();
        let t = validated(lyapunov_validate(&trace, &inst, &pair, &info, 0.1, &u).unwrap());
        assert!(t.g_seminorm.iter().all(|s| s.abs() <= 1e-20), "{:?}", t.g_seminorm);
        assert!(t.dz_error_sq.iter().all(|s| *s <= 1e-20));
    }

    #[test]
    fn single_agent_is_weighted_gradient_descent_error() {
        let inst = LeastSquaresInstance::from_parts(
            vec![nalgebra::DMatrix::from_element(1, 1, 0.5)],
            vec![DVector::from_element(1, 1.0)],
            vec![0.0],
            0.0,
            0,
        )
        .unwrap();
        let pair = WeightPair::new(nalgebra::DMatrix::identity(1, 1), 0.5).unwrap();
        let info = stationary(pair.a(), 1e-15, 10).unwrap();
        let u = centralized_solve(&inst).unwrap();
        let alpha = 0.3;
        let trace = run(
            &inst,
            &pair,
            AgentStack::zeros(1, 1),
            &RunConfig::new(alpha, 1000, 1e-12).recording_states(),
            &u,
        )
        .unwrap();
        let t = validated(lyapunov_validate(&trace, &inst, &pair, &info, 0.1, &u).unwrap());
        // closed form: x^k − u = (1 − 2α h²)^k (x^0 − u)
        let factor: f64 = 1.0 - 2.0 * alpha * 0.25;
        for (k, s) in t.g_seminorm.iter().enumerate() {
            let e = factor.powi(k as i32) * (0.0 - u[0]);
            assert!((s - e * e).abs() <= 1e-14, "k={k}");
        }
        for w in t.g_seminorm.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert_eq!(t.gamma_empirical, None);
    }

    #[test]
    fn converged_ten_node_run() {
        let g = random_strongly_connected(10, 0.3, 0).unwrap();
        let pair = WeightPair::new(local_degree_weights(&g).unwrap(), 0.5).unwrap();
        let info = stationary(pair.a(), 1e-15, 1_000_000).unwrap();
        let inst = generate_least_squares(10, 4, 6, 0.1, 0).unwrap();
        let u = centralized_solve(&inst).unwrap();
        let trace = run(
            &inst,
            &pair,
            AgentStack::zeros(10, 4),
            &RunConfig::new(0.5, 5000, 1e-10).recording_states(),
            &u,
        )
        .unwrap();
        let t = validated(lyapunov_validate(&trace, &inst, &pair, &info, 0.05, &u).unwrap());
        assert!(t.nonnegative(), "{}", t.min_seminorm());
        assert!(t.gamma_coefficient.is_finite());
        let fit = t.tau_fit.unwrap();
        assert!(fit.tau < 1.0);
        // q* solves the singular system
        let rhs = inst.stacked_gradient(&AgentStack::broadcast(10, &u)).to_matrix() * (-0.5);
        let l = pair.a_tilde() - pair.a();
        assert!(linalg::max_abs_diff(&(&l * &t.q_star), &rhs) <= 1e-10);
        let csv = t.to_csv();
        assert!(csv.starts_with("iter,g_seminorm,dz_error_sq\n"));
    }

    #[test]
    fn inapplicable_without_convergence_or_states() {
        let g = random_strongly_connected(4, 0.3, 1).unwrap();
        let pair = WeightPair::new(local_degree_weights(&g).unwrap(), 0.5).unwrap();
        let info = stationary(pair.a(), 1e-15, 1_000_000).unwrap();
        let inst = generate_least_squares(4, 2, 3, 0.1, 1).unwrap();
        let u = centralized_solve(&inst).unwrap();
        let short = run(&inst, &pair, AgentStack::zeros(4, 2), &RunConfig::new(0.1, 3, 1e-10), &u).unwrap();
        assert!(matches!(
            lyapunov_validate(&short, &inst, &pair, &info, 0.1, &u).unwrap(),
            LyapunovOutcome::Inapplicable(_)
        ));
        let done = run(&inst, &pair, AgentStack::zeros(4, 2), &RunConfig::new(1.0, 20_000, 1e-6), &u).unwrap();
        assert!(done.converged(), "{} {}", done.termination, done.final_residual());
        assert!(matches!(
            lyapunov_validate(&done, &inst, &pair, &info, 0.1, &u).unwrap(),
            LyapunovOutcome::Inapplicable(_)
        ));
    }

    #[test]
    fn gamma_coefficient_examples() {
        assert_eq!(required_gamma_coefficient(&[4.0, 2.0, 1.0], 0.5, 0.9), 0.0);
        // (1+δ)·3 − 1 = 3.5 at k = 0
        assert!((required_gamma_coefficient(&[1.0, 3.0], 0.5, 0.9) - 3.5).abs() < 1e-15);
        // at k = 1 the excess is divided by γ
        assert!((required_gamma_coefficient(&[4.0, 2.0, 2.0], 0.0, 0.5) - 0.0).abs() < 1e-15);
        assert!((required_gamma_coefficient(&[4.0, 2.0, 3.0], 0.0, 0.5) - 2.0).abs() < 1e-15);
    }
}
