//! Column-stochastic weight construction, the stationary vector `π`, and
//! the structural checks the DEXTRA analysis relies on.

use nalgebra::{DMatrix, DVector};

use crate::digraph::Digraph;
use crate::linalg;
use crate::stack::AgentStack;
use crate::{Error, Result};

/// Tolerance used when validating stochasticity of externally supplied matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Relative positivity margin for the `(D∞)⁻¹Ã + Ãᵀ(D∞)⁻¹ ≻ 0` check.
pub const POSITIVITY_TOL: f64 = 1e-12;

/// `a_ij = 1/|N_j^out|` for every out-neighbor `i` of `j` (self included).
pub fn local_degree_weights(g: &Digraph) -> Result<DMatrix<f64>> {
    require_strongly_connected(g)?;
    let n = g.len();
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        let w = 1.0 / g.out_degree(j) as f64;
        for &i in g.out_neighbors(j) {
            a[(i, j)] = w;
        }
    }
    Ok(a)
}

/// Diagonally dominant weights: `zeta` to every other out-neighbor and the
/// remainder `1 - zeta (|N_j^out| - 1)` on the diagonal.
pub fn constant_weights(g: &Digraph, zeta: f64) -> Result<DMatrix<f64>> {
    require_strongly_connected(g)?;
    let max_others = g.max_out_degree().saturating_sub(1);
    let upper = if max_others == 0 {
        f64::INFINITY
    } else {
        1.0 / max_others as f64
    };
    if !(zeta > 0.0 && zeta < upper) {
        return Err(Error::invalid(
            "zeta",
            zeta,
            format!("must lie in (0, {upper}) so every diagonal weight stays positive"),
        ));
    }
    let n = g.len();
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        for &i in g.out_neighbors(j) {
            if i != j {
                a[(i, j)] = zeta;
            }
        }
        a[(j, j)] = 1.0 - zeta * (g.out_degree(j) - 1) as f64;
    }
    Ok(a)
}

/// Row-stochastic weights `w_ij = 1/|N_i^in|`, built from what each agent
/// receives. Used by the row-stochastic DGD baseline.
pub fn row_stochastic_weights(g: &Digraph) -> Result<DMatrix<f64>> {
    require_strongly_connected(g)?;
    let n = g.len();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let v = 1.0 / g.in_degree(i) as f64;
        for &j in g.in_neighbors(i) {
            w[(i, j)] = v;
        }
    }
    Ok(w)
}

/// Symmetric doubly-stochastic Metropolis–Hastings weights on an undirected
/// graph. Degrees here exclude the self-loop.
pub fn metropolis_weights(g: &Digraph) -> Result<DMatrix<f64>> {
    require_strongly_connected(g)?;
    if let Some((i, j)) = g.edges().find(|&(i, j)| !g.has_edge(j, i)) {
        return Err(Error::NotSymmetric(i, j));
    }
    let n = g.len();
    let deg: Vec<usize> = (0..n).map(|i| g.in_degree(i) - 1).collect();
    let mut w = DMatrix::zeros(n, n);
    for (i, j) in g.edges().filter(|(i, j)| i != j) {
        w[(i, j)] = 1.0 / (1 + deg[i].max(deg[j])) as f64;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    Ok(w)
}

fn require_strongly_connected(g: &Digraph) -> Result<()> {
    if g.is_strongly_connected() {
        Ok(())
    } else {
        Err(Error::NotStronglyConnected)
    }
}

/// Nonzero pattern of a weight matrix, row by row: agent `i` combines
/// `Σ_j w_ij v_j` over the `j` it receives from.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn from_dense(w: &DMatrix<f64>) -> Self {
        let rows = (0..w.nrows())
            .map(|i| {
                (0..w.ncols())
                    .filter(|&j| w[(i, j)] != 0.0)
                    .map(|j| (j, w[(i, j)]))
                    .collect()
            })
            .collect();
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// `(W ⊗ I_p) x`, evaluated as per-agent sums over received messages.
    pub fn apply(&self, x: &AgentStack) -> AgentStack {
        let mut out = AgentStack::zeros(x.agents(), x.dim());
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_into(&self, x: &AgentStack, out: &mut AgentStack) {
        for (i, row) in self.rows.iter().enumerate() {
            let target = out.row_mut(i);
            target.fill(0.0);
            for &(j, w) in row {
                for (t, v) in target.iter_mut().zip(x.row(j)) {
                    *t += w * v;
                }
            }
        }
    }

    pub fn apply_scalar(&self, y: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * y[j]).sum())
            .collect()
    }
}

/// `A` together with `Ã = θI + (1-θ)A`.
#[derive(Debug, Clone)]
pub struct WeightPair {
    a: DMatrix<f64>,
    a_tilde: DMatrix<f64>,
    theta: f64,
    a_rows: SparseRows,
    a_tilde_rows: SparseRows,
}

impl WeightPair {
    /// Validates `a` as column-stochastic and forms `Ã`.
    pub fn new(a: DMatrix<f64>, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 0.5) {
            return Err(Error::invalid("theta", theta, "must lie in (0, 1/2]"));
        }
        check_column_stochastic(&a)?;
        let n = a.nrows();
        let a_tilde = DMatrix::identity(n, n) * theta + &a * (1.0 - theta);
        Ok(Self {
            a_rows: SparseRows::from_dense(&a),
            a_tilde_rows: SparseRows::from_dense(&a_tilde),
            a,
            a_tilde,
            theta,
        })
    }

    pub fn len(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.a.nrows() == 0
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn a_tilde(&self) -> &DMatrix<f64> {
        &self.a_tilde
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn a_rows(&self) -> &SparseRows {
        &self.a_rows
    }

    pub fn a_tilde_rows(&self) -> &SparseRows {
        &self.a_tilde_rows
    }
}

pub fn check_column_stochastic(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "weight matrix must be square and nonempty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if let Some(v) = a.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid("weight", *v, "entries must be nonnegative"));
    }
    for (column, col) in a.column_iter().enumerate() {
        let sum: f64 = col.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NotColumnStochastic { column, sum });
        }
    }
    Ok(())
}

/// Limit of `A^k 1_n` and the consensus constants that go with it.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryInfo {
    /// Right Perron vector of `A`, normalized so that `Σ π_i = n`.
    pub pi: Vec<f64>,
    /// Geometric consensus factor `1 - 1/n^n`.
    pub gamma: f64,
    /// Consensus constant; 4 for column-stochastic matrices.
    pub c: f64,
    /// Power iterations spent.
    pub iterations: usize,
}

impl StationaryInfo {
    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn d_inf(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.pi))
    }

    pub fn d_inf_inverse(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.pi.len(),
            self.pi.iter().map(|p| 1.0 / p),
        ))
    }

    /// `π` rescaled to a probability vector.
    pub fn pi_stochastic(&self) -> Vec<f64> {
        let n = self.pi.len() as f64;
        self.pi.iter().map(|p| p / n).collect()
    }
}

/// Power iteration `y ← A y` from `y = 1_n`, i.e. the push-sum scale
/// dynamics. Stops once `‖A y − y‖₂ ≤ tol`.
pub fn stationary(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<StationaryInfo> {
    check_column_stochastic(a)?;
    let n = a.nrows();
    let rows = SparseRows::from_dense(a);
    let mut y = vec![1.0; n];
    let mut residual = f64::INFINITY;
    for it in 0..=max_iter {
        let next = rows.apply_scalar(&y);
        residual = next
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if residual <= tol {
            if y.iter().any(|v| *v <= 0.0) {
                return Err(Error::NotStronglyConnected);
            }
            // column sums are 1 up to rounding; restore Σ y = n exactly
            let scale = n as f64 / y.iter().sum::<f64>();
            return Ok(StationaryInfo {
                pi: y.into_iter().map(|v| v * scale).collect(),
                gamma: consensus_gamma(n),
                c: 4.0,
                iterations: it,
            });
        }
        y = next;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// `1 - 1/n^n`.
pub fn consensus_gamma(n: usize) -> f64 {
    1.0 - 1.0 / (n as f64).powi(n as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityCheck {
    pub holds: bool,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

/// Smallest eigenvalue of `(D∞)⁻¹Ã + Ãᵀ(D∞)⁻¹` and whether it is positive
/// relative to the largest one.
pub fn check_lazy_positivity(pair: &WeightPair, info: &StationaryInfo) -> Result<PositivityCheck> {
    if pair.len() != info.len() {
        return Err(Error::Dimension(format!(
            "weights have {} agents, stationary vector has {}",
            pair.len(),
            info.len()
        )));
    }
    let m = info.d_inf_inverse() * pair.a_tilde();
    let ev = linalg::sym_eigenvalues(&(&m + m.transpose()));
    let min = ev[0];
    let max = *ev.last().unwrap();
    Ok(PositivityCheck {
        holds: min > POSITIVITY_TOL * max.abs(),
        min_eigenvalue: min,
        max_eigenvalue: max,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusBoundReport {
    pub horizon: usize,
    pub violations: usize,
    /// Largest `|[A^k]_ij − π_i| / (C γ^k)` seen; `< 1` when the bound holds.
    pub worst_ratio: f64,
    pub first_violation: Option<(usize, usize, usize)>,
}

impl ConsensusBoundReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `|[A^k]_ij − π_i| < C γ^k` for `k ≤ horizon`, with `π` taken as a
/// probability vector.
pub fn consensus_rate_bound_check(
    a: &DMatrix<f64>,
    info: &StationaryInfo,
    horizon: usize,
) -> ConsensusBoundReport {
    let n = a.nrows();
    let pi = info.pi_stochastic();
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut bound = info.c;
    let mut report = ConsensusBoundReport {
        horizon,
        violations: 0,
        worst_ratio: 0.0,
        first_violation: None,
    };
    for k in 0..=horizon {
        for i in 0..n {
            for j in 0..n {
                let gap = (power[(i, j)] - pi[i]).abs();
                // n = 1 has γ = 0; an exact zero gap is not a violation
                if gap == 0.0 {
                    continue;
                }
                report.worst_ratio = report.worst_ratio.max(gap / bound);
                if gap >= bound {
                    report.violations += 1;
                    report.first_violation.get_or_insert((k, i, j));
                }
            }
        }
        power = a * power;
        bound *= info.gamma;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digraph::{random_connected_undirected, random_strongly_connected};

    fn cycle3() -> Digraph {
        Digraph::new(3, [(1, 0), (2, 1), (0, 2)]).unwrap()
    }

    /// Independent oracle: null vector of `A - I` from the SVD, scaled to sum n.
    fn eigen_oracle_pi(a: &DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        let m = a - DMatrix::<f64>::identity(n, n);
        let svd = m.svd(false, true);
        let v_t = svd.v_t.unwrap();
        let (idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .unwrap();
        let v: Vec<f64> = v_t.row(idx).iter().copied().collect();
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x * n as f64 / s).collect()
    }

    /// Cyclic Jacobi eigenvalue iteration for symmetric matrices.
    fn jacobi_min_eigenvalue(mut m: DMatrix<f64>) -> f64 {
        let n = m.nrows();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .map(|(i, j)| m[(i, j)].powi(2))
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if m[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    let mut r = DMatrix::<f64>::identity(n, n);
                    r[(p, p)] = c;
                    r[(q, q)] = c;
                    r[(p, q)] = s;
                    r[(q, p)] = -s;
                    m = r.transpose() * &m * &r;
                }
            }
        }
        (0..n).map(|i| m[(i, i)]).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn local_degree_on_cycle_is_half() {
        let a = local_degree_weights(&cycle3()).unwrap();
        for v in a.iter().filter(|v| **v != 0.0) {
            assert_eq!(*v, 0.5);
        }
        assert_eq!(local_degree_weights(&Digraph::new(1, []).unwrap()).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn weights_are_column_stochastic() {
        let g = random_strongly_connected(10, 0.3, 5).unwrap();
        for a in [local_degree_weights(&g).unwrap(), constant_weights(&g, 0.01).unwrap()] {
            for col in a.column_iter() {
                assert!((col.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn constant_weights_entries() {
        // node 0 sends to 1 and 2 as well as itself
        let g = Digraph::new(3, [(1, 0), (2, 0), (0, 1), (0, 2)]).unwrap();
        let a = constant_weights(&g, 0.01).unwrap();
        assert!((a[(0, 0)] - 0.98).abs() < 1e-15);
        assert_eq!(a[(1, 0)], 0.01);
        assert_eq!(a[(2, 0)], 0.01);
        assert!(matches!(
            constant_weights(&g, 1.0),
            Err(Error::InvalidParameter { name: "zeta", .. })
        ));
        assert!(constant_weights(&g, 0.0).is_err());
    }

    #[test]
    fn make_tilde_examples() {
        let p = WeightPair::new(DMatrix::identity(2, 2), 0.5).unwrap();
        assert_eq!(p.a_tilde(), &DMatrix::<f64>::identity(2, 2));
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = WeightPair::new(swap, 0.5).unwrap();
        assert_eq!(p.a_tilde(), &DMatrix::from_element(2, 2, 0.5));
        assert!(WeightPair::new(DMatrix::identity(2, 2), 0.0).is_err());
        assert!(WeightPair::new(DMatrix::identity(2, 2), 0.6).is_err());
        assert!(matches!(
            WeightPair::new(DMatrix::from_element(2, 2, 0.3), 0.5),
            Err(Error::NotColumnStochastic { .. })
        ));
    }

    #[test]
    fn tilde_is_column_stochastic_and_consistent() {
        let g = random_strongly_connected(7, 0.4, 2).unwrap();
        let pair = WeightPair::new(local_degree_weights(&g).unwrap(), 0.3).unwrap();
        for col in pair.a_tilde().column_iter() {
            assert!((col.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
        }
        // Ã − A = θ (I − A)
        let lhs = pair.a_tilde() - pair.a();
        let rhs = (DMatrix::identity(7, 7) - pair.a()) * 0.3;
        assert!(linalg::max_abs_diff(&lhs, &rhs) < 1e-15);
    }

    #[test]
    fn stationary_of_doubly_stochastic_is_ones() {
        let g = random_connected_undirected(6, 0.3, 1).unwrap();
        let info = stationary(&metropolis_weights(&g).unwrap(), 1e-14, 100_000).unwrap();
        for p in &info.pi {
            assert!((p - 1.0).abs() < 1e-12);
        }
        let info = stationary(&DMatrix::identity(1, 1), 1e-14, 10).unwrap();
        assert_eq!(info.pi, vec![1.0]);
        assert_eq!(info.gamma, 0.0);
    }

    #[test]
    fn stationary_matches_eigen_oracle_on_cycle() {
        // An unbalanced 3-node graph: 0 -> 1 -> 2 -> 0 plus 0 -> 2.
        let g = Digraph::new(3, [(1, 0), (2, 1), (0, 2), (2, 0)]).unwrap();
        let a = local_degree_weights(&g).unwrap();
        let info = stationary(&a, 1e-15, 100_000).unwrap();
        let oracle = eigen_oracle_pi(&a);
        for (p, o) in info.pi.iter().zip(&oracle) {
            assert!((p - o).abs() < 1e-10, "{p} vs {o}");
        }
        assert!((info.pi.iter().sum::<f64>() - 3.0).abs() < 1e-14);
        let ap = &a * DVector::from_column_slice(&info.pi);
        let r = (ap - DVector::from_column_slice(&info.pi)).norm();
        assert!(r <= 1e-14);
        // frozen oracle value: π = (1, 2/3, 4/3)
        for (p, e) in info.pi.iter().zip([1.0, 2.0 / 3.0, 4.0 / 3.0]) {
            assert!((p - e).abs() < 1e-10);
        }
    }

    #[test]
    fn stationary_reports_non_convergence() {
        let g = random_strongly_connected(10, 0.1, 4).unwrap();
        let a = constant_weights(&g, 0.001).unwrap();
        assert!(matches!(
            stationary(&a, 1e-15, 5),
            Err(Error::NoConvergence { iterations: 5, .. })
        ));
    }

    #[test]
    fn power_iteration_error_shrinks() {
        let g = random_strongly_connected(8, 0.3, 12).unwrap();
        let a = local_degree_weights(&g).unwrap();
        let info = stationary(&a, 1e-15, 100_000).unwrap();
        let rows = SparseRows::from_dense(&a);
        let mut y = vec![1.0; 8];
        let dist = |y: &[f64]| -> f64 {
            y.iter().zip(&info.pi).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let mut prev = dist(&y);
        // past the mixing transient the error is monotone
        for k in 0..200 {
            y = rows.apply_scalar(&y);
            let d = dist(&y);
            if k >= 20 && prev > 1e-13 {
                assert!(d <= prev * (1.0 + 1e-9), "k={k}: {d} > {prev}");
            }
            prev = d;
        }
    }

    #[test]
    fn identity_passes_positivity() {
        let pair = WeightPair::new(DMatrix::identity(3, 3), 0.5).unwrap();
        let info = stationary(pair.a(), 1e-15, 10).unwrap();
        let check = check_lazy_positivity(&pair, &info).unwrap();
        assert!(check.holds);
        assert!((check.min_eigenvalue - 2.0).abs() < 1e-14);
    }

    #[test]
    fn positivity_matches_jacobi_oracle() {
        let g = Digraph::new(3, [(1, 0), (2, 1), (0, 2), (2, 0)]).unwrap();
        let pair = WeightPair::new(local_degree_weights(&g).unwrap(), 0.5).unwrap();
        let info = stationary(pair.a(), 1e-15, 100_000).unwrap();
        let check = check_lazy_positivity(&pair, &info).unwrap();
        let m = info.d_inf_inverse() * pair.a_tilde();
        let oracle = jacobi_min_eigenvalue(&m + m.transpose());
        assert!((check.min_eigenvalue - oracle).abs() < 1e-10);
        assert!(check.holds);
    }

    #[test]
    fn constant_weights_pass_positivity_on_generated_graphs() {
        for seed in 0..20 {
            let n = 2 + (seed as usize % 19);
            let g = random_strongly_connected(n, 0.3, seed).unwrap();
            for zeta in [0.01, 0.005] {
                let pair = WeightPair::new(constant_weights(&g, zeta).unwrap(), 0.5).unwrap();
                let info = stationary(pair.a(), 1e-13, 10_000_000).unwrap();
                assert!(check_lazy_positivity(&pair, &info).unwrap().holds, "seed {seed}");
            }
        }
    }

    #[test]
    fn consensus_bound_examples() {
        let a = DMatrix::from_element(2, 2, 0.5);
        let info = stationary(&a, 1e-15, 10).unwrap();
        assert!(consensus_rate_bound_check(&a, &info, 50).holds());

        let g = Digraph::new(3, [(1, 0), (2, 1), (0, 2)]).unwrap();
        let a = local_degree_weights(&g).unwrap();
        let info = stationary(&a, 1e-15, 100_000).unwrap();
        assert!(consensus_rate_bound_check(&a, &info, 200).holds());

        let g = random_strongly_connected(4, 0.3, 3).unwrap();
        let a = local_degree_weights(&g).unwrap();
        let info = stationary(&a, 1e-15, 100_000).unwrap();
        assert!(consensus_rate_bound_check(&a, &info, 100).holds());
    }
}
