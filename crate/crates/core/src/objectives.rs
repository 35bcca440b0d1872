//! Per-agent objectives `f_i` and the least-squares family used throughout
//! the experiments.
//!
//! Agent `i` holds `f_i(x) = ‖H_i x − h_i‖²`, so `∇f_i(x) = 2H_iᵀ(H_i x − h_i)`,
//! `L_i = 2λ_max(H_iᵀH_i)` and `S_i = 2λ_min(H_iᵀH_i)`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::io::{self, Manifest};
use crate::linalg;
use crate::stack::AgentStack;
use crate::{Error, Result};

/// Default aggregate Lipschitz constant the generator rescales to.
pub const DEFAULT_TARGET_LIPSCHITZ: f64 = 0.14;

/// Attempts before rank-deficient generation gives up.
pub const MAX_GENERATION_ATTEMPTS: usize = 10;

/// Smallest accepted `λ_min / λ_max` of each `H_iᵀH_i`.
const RANK_TOL: f64 = 1e-10;

/// A family of differentiable local objectives, one per agent.
pub trait Objective: Send + Sync {
    fn agents(&self) -> usize;

    fn dim(&self) -> usize;

    fn value(&self, agent: usize, x: &[f64]) -> f64;

    fn gradient_into(&self, agent: usize, x: &[f64], out: &mut [f64]);

    /// Lipschitz constant of `∇f_i`.
    fn lipschitz(&self, agent: usize) -> f64;

    /// Restricted strong convexity constant of `f_i`.
    fn strong_convexity(&self, agent: usize) -> f64;

    fn gradient(&self, agent: usize, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(agent, x, &mut g);
        g
    }

    /// Row `i` of the result is `∇f_i(z_i)`.
    fn stacked_gradient(&self, z: &AgentStack) -> AgentStack {
        let mut out = AgentStack::zeros(z.agents(), z.dim());
        self.stacked_gradient_into(z, &mut out);
        out
    }

    fn stacked_gradient_into(&self, z: &AgentStack, out: &mut AgentStack) {
        for i in 0..z.agents() {
            self.gradient_into(i, z.row(i), out.row_mut(i));
        }
    }

    /// `Σ_i f_i(x)`.
    fn total_value(&self, x: &[f64]) -> f64 {
        (0..self.agents()).map(|i| self.value(i, x)).sum()
    }

    /// `(L_f, S_f) = (max_i L_i, min_i S_i)`.
    fn constants(&self) -> (f64, f64) {
        let n = self.agents();
        let l = (0..n).map(|i| self.lipschitz(i)).fold(0.0, f64::max);
        let s = (0..n)
            .map(|i| self.strong_convexity(i))
            .fold(f64::INFINITY, f64::min);
        (l, s)
    }
}

/// Generation parameters for [`LeastSquaresInstance`].
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresSpec {
    pub agents: usize,
    pub dim: usize,
    pub rows_per_agent: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// Rescale all `H_i` so that `L_f` equals this; `None` keeps raw data.
    pub target_lipschitz: Option<f64>,
}

impl LeastSquaresSpec {
    pub fn new(agents: usize, dim: usize, rows_per_agent: usize, noise_std: f64, seed: u64) -> Self {
        Self {
            agents,
            dim,
            rows_per_agent,
            noise_std,
            seed,
            target_lipschitz: Some(DEFAULT_TARGET_LIPSCHITZ),
        }
    }

    pub fn generate(&self) -> Result<LeastSquaresInstance> {
        if self.agents == 0 {
            return Err(Error::EmptyGraph);
        }
        if self.dim == 0 || self.rows_per_agent < self.dim {
            return Err(Error::Dimension(format!(
                "need rows_per_agent >= dim >= 1, got rows_per_agent={} dim={}",
                self.rows_per_agent, self.dim
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid("noise_std", self.noise_std, "must be finite and >= 0"));
        }
        if let Some(t) = self.target_lipschitz {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid("target_lipschitz", t, "must be positive"));
            }
        }
        for attempt in 0..MAX_GENERATION_ATTEMPTS {
            let seed = self.seed.wrapping_add((attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            if let Some(inst) = self.try_generate(seed) {
                return Ok(inst);
            }
        }
        Err(Error::RankDeficient(MAX_GENERATION_ATTEMPTS))
    }

    fn try_generate(&self, seed: u64) -> Option<LeastSquaresInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, p, m) = (self.agents, self.dim, self.rows_per_agent);
        let truth: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut h: Vec<DMatrix<f64>> = (0..n)
            .map(|_| DMatrix::from_fn(m, p, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        for hi in &h {
            let ev = linalg::sym_eigenvalues(&(hi.transpose() * hi));
            if !(ev[0] > RANK_TOL * ev[p - 1]) {
                return None;
            }
        }
        if let Some(target) = self.target_lipschitz {
            let raw = h
                .iter()
                .map(|hi| 2.0 * linalg::lambda_max(&(hi.transpose() * hi)))
                .fold(0.0, f64::max);
            let scale = (target / raw).sqrt();
            for hi in h.iter_mut() {
                *hi *= scale;
            }
        }
        // the noise draw is separate so noise_std does not perturb H
        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        let x = DVector::from_column_slice(&truth);
        let targets: Vec<DVector<f64>> = h
            .iter()
            .map(|hi| {
                let clean = hi * &x;
                DVector::from_fn(m, |r, _| clean[r] + self.noise_std * noise.sample(&mut rng))
            })
            .collect();
        LeastSquaresInstance::from_parts(h, targets, truth, self.noise_std, self.seed).ok()
    }
}

/// `f_i(x) = ‖H_i x − h_i‖²` for each agent.
#[derive(Debug, Clone)]
pub struct LeastSquaresInstance {
    h: Vec<DMatrix<f64>>,
    targets: Vec<DVector<f64>>,
    truth: Vec<f64>,
    noise_std: f64,
    seed: u64,
    gram: Vec<DMatrix<f64>>,
    moment: Vec<DVector<f64>>,
    lipschitz: Vec<f64>,
    strong_convexity: Vec<f64>,
}

impl PartialEq for LeastSquaresInstance {
    fn eq(&self, other: &Self) -> bool {
        self.h == other.h
            && self.targets == other.targets
            && self.truth == other.truth
            && self.noise_std == other.noise_std
            && self.seed == other.seed
    }
}

impl LeastSquaresInstance {
    /// Builds an instance from explicit data. `truth` is the generating
    /// point, kept for diagnostics only.
    pub fn from_parts(
        h: Vec<DMatrix<f64>>,
        targets: Vec<DVector<f64>>,
        truth: Vec<f64>,
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        if h.is_empty() || h.len() != targets.len() {
            return Err(Error::Dimension(format!(
                "{} data matrices and {} target vectors",
                h.len(),
                targets.len()
            )));
        }
        let p = h[0].ncols();
        if truth.len() != p {
            return Err(Error::Dimension(format!(
                "generating point has length {}, expected {p}",
                truth.len()
            )));
        }
        for (i, (hi, ti)) in h.iter().zip(&targets).enumerate() {
            if hi.ncols() != p || hi.nrows() != ti.len() || hi.nrows() == 0 {
                return Err(Error::Dimension(format!(
                    "agent {i}: H is {}x{}, h has length {}",
                    hi.nrows(),
                    hi.ncols(),
                    ti.len()
                )));
            }
        }
        let gram: Vec<DMatrix<f64>> = h.iter().map(|hi| hi.transpose() * hi).collect();
        let moment: Vec<DVector<f64>> = h.iter().zip(&targets).map(|(hi, t)| hi.transpose() * t).collect();
        let (lipschitz, strong_convexity) = gram
            .iter()
            .map(|g| {
                let ev = linalg::sym_eigenvalues(g);
                (2.0 * ev[p - 1], 2.0 * ev[0].max(0.0))
            })
            .unzip();
        Ok(Self {
            h,
            targets,
            truth,
            noise_std,
            seed,
            gram,
            moment,
            lipschitz,
            strong_convexity,
        })
    }

    pub fn data(&self, agent: usize) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.h[agent], &self.targets[agent])
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Writes `H_<i>.csv`, `h_<i>.csv`, `truth.csv` and `manifest.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(dir)?;
        for (i, (hi, ti)) in self.h.iter().zip(&self.targets).enumerate() {
            io::write_matrix_csv(&dir.join(format!("H_{i}.csv")), hi)?;
            io::write_matrix_csv(&dir.join(format!("h_{i}.csv")), &column(ti))?;
        }
        io::write_matrix_csv(&dir.join("truth.csv"), &column(&DVector::from_column_slice(&self.truth)))?;
        let rows: Vec<String> = self.h.iter().map(|hi| hi.nrows().to_string()).collect();
        let mut m = Manifest::new();
        m.set("n", self.h.len())
            .set("p", self.dim())
            .set("m", rows.join(","))
            .set("seed", self.seed)
            .set("noise_std", self.noise_std);
        m.save(&dir.join("manifest.txt"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.txt");
        let m = Manifest::load(&mpath)?;
        let n: usize = m.parse("n", &mpath)?;
        let seed: u64 = m.parse("seed", &mpath)?;
        let noise_std: f64 = m.parse("noise_std", &mpath)?;
        let mut h = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for i in 0..n {
            h.push(io::read_matrix_csv(&dir.join(format!("H_{i}.csv")))?);
            let t = io::read_matrix_csv(&dir.join(format!("h_{i}.csv")))?;
            targets.push(DVector::from_column_slice(t.as_slice()));
        }
        let truth = io::read_matrix_csv(&dir.join("truth.csv"))?.as_slice().to_vec();
        Self::from_parts(h, targets, truth, noise_std, seed)
    }
}

fn column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

impl Objective for LeastSquaresInstance {
    fn agents(&self) -> usize {
        self.h.len()
    }

    fn dim(&self) -> usize {
        self.h[0].ncols()
    }

    fn value(&self, agent: usize, x: &[f64]) -> f64 {
        let r = &self.h[agent] * DVector::from_column_slice(x) - &self.targets[agent];
        r.norm_squared()
    }

    fn gradient_into(&self, agent: usize, x: &[f64], out: &mut [f64]) {
        let g = &self.gram[agent];
        let b = &self.moment[agent];
        let p = x.len();
        for r in 0..p {
            let mut acc = -b[r];
            for c in 0..p {
                acc += g[(r, c)] * x[c];
            }
            out[r] = 2.0 * acc;
        }
    }

    fn lipschitz(&self, agent: usize) -> f64 {
        self.lipschitz[agent]
    }

    fn strong_convexity(&self, agent: usize) -> f64 {
        self.strong_convexity[agent]
    }
}

/// Convenience wrapper: [`LeastSquaresSpec::new`] with the default
/// Lipschitz target.
pub fn generate_least_squares(
    n: usize,
    p: usize,
    m_each: usize,
    noise_std: f64,
    seed: u64,
) -> Result<LeastSquaresInstance> {
    LeastSquaresSpec::new(n, p, m_each, noise_std, seed).generate()
}

/// The minimizer of `Σ_i f_i` from the normal equations.
pub fn centralized_solve(inst: &LeastSquaresInstance) -> Result<Vec<f64>> {
    let p = inst.dim();
    let mut gram = DMatrix::zeros(p, p);
    let mut moment = DVector::zeros(p);
    for (g, b) in inst.gram.iter().zip(&inst.moment) {
        gram += g;
        moment += b;
    }
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("aggregate normal matrix is not positive definite".into()))?;
    let mut u = chol.solve(&moment);
    // one step of iterative refinement
    let r = &moment - &gram * &u;
    u += chol.solve(&r);
    Ok(u.as_slice().to_vec())
}

/// `(L_f, S_f)` from per-agent symmetric eigensolves.
pub fn estimate_constants(inst: &LeastSquaresInstance) -> (f64, f64) {
    inst.constants()
}
