//! Row-per-agent storage for stacked local vectors.

use nalgebra::DMatrix;

/// `n` agents, each holding a vector in `R^p`, stored agent-major.
///
/// Row `i` is the local copy of agent `i`; the stacked vector of the
/// matrix-form iteration is the concatenation of the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentStack {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl AgentStack {
    pub fn zeros(n: usize, p: usize) -> Self {
        Self {
            n,
            p,
            data: vec![0.0; n * p],
        }
    }

    pub fn from_fn(n: usize, p: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * p);
        for i in 0..n {
            for d in 0..p {
                data.push(f(i, d));
            }
        }
        Self { n, p, data }
    }

    /// Every agent holds a copy of `v` (the `1_n ⊗ v` vector).
    pub fn broadcast(n: usize, v: &[f64]) -> Self {
        Self::from_fn(n, v.len(), |_, d| v[d])
    }

    /// Agent `i` holds `weights[i] * v` (the `w ⊗ v` vector).
    pub fn outer(weights: &[f64], v: &[f64]) -> Self {
        Self::from_fn(weights.len(), v.len(), |i, d| weights[i] * v[d])
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.p.max(1)).take(self.n)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Column sums `1ᵀ x` in `R^p`.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.p];
        for row in self.rows() {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// Column sums of absolute values, used as a magnitude scale.
    pub fn column_abs_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.p];
        for row in self.rows() {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v.abs();
            }
        }
        out
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &AgentStack) -> f64 {
        assert_eq!((self.n, self.p), (other.n, other.p));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn sub(&self, other: &AgentStack) -> AgentStack {
        assert_eq!((self.n, self.p), (other.n, other.p));
        AgentStack {
            n: self.n,
            p: self.p,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &AgentStack) {
        assert_eq!((self.n, self.p), (other.n, other.p));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.p, &self.data)
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, d| m[(i, d)])
    }
}
