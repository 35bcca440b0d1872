//! The structural matrices built from `A`, `Ã` and `D∞`, and the spectral
//! quantities the step-size certificate consumes.

use nalgebra::DMatrix;

use crate::linalg::{self, lambda_max, lambda_min, spectral_norm};
use crate::weights::{check_lazy_positivity, PositivityCheck, StationaryInfo, WeightPair};
use crate::{Error, Result};

/// Eigenvalues below this fraction of the largest magnitude count as zero
/// when taking the smallest nonzero eigenvalue.
pub const NULL_EIGENVALUE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct MatrixSet {
    /// `(D∞)⁻¹Ã`
    pub m: DMatrix<f64>,
    /// `(D∞)⁻¹(Ã − A)`
    pub n: DMatrix<f64>,
    /// `(D∞)⁻¹(I + A − 2Ã)`
    pub q: DMatrix<f64>,
    /// `I − A`
    pub p: DMatrix<f64>,
    /// `Ã − A`
    pub l: DMatrix<f64>,
    /// `I + A − 2Ã`
    pub r: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub a_tilde: DMatrix<f64>,
    pub theta: f64,
    pub positivity: PositivityCheck,
}

/// Builds all six matrices. A failed positivity check is reported in
/// [`MatrixSet::positivity`] rather than as an error.
pub fn build_matrix_set(pair: &WeightPair, info: &StationaryInfo) -> Result<MatrixSet> {
    let positivity = check_lazy_positivity(pair, info)?;
    let n = pair.len();
    let eye = DMatrix::<f64>::identity(n, n);
    let d_inv = info.d_inf_inverse();
    let a = pair.a().clone();
    let a_tilde = pair.a_tilde().clone();
    let p = &eye - &a;
    let l = &a_tilde - &a;
    let r = &eye + &a - &a_tilde * 2.0;
    Ok(MatrixSet {
        m: &d_inv * &a_tilde,
        n: &d_inv * &l,
        q: &d_inv * &r,
        p,
        l,
        r,
        a,
        a_tilde,
        theta: pair.theta(),
        positivity,
    })
}

/// Residuals of the algebraic identities tying the matrices together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    /// `max |L − θP|`
    pub l_vs_theta_p: f64,
    /// `max |R − (1 − 2θ)P|`
    pub r_vs_scaled_p: f64,
    /// `λ_min(N + Nᵀ)`; nonnegative up to round-off.
    pub n_sym_min_eigenvalue: f64,
}

impl MatrixSet {
    pub fn len(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.a.nrows() == 0
    }

    pub fn identities(&self) -> IdentityReport {
        IdentityReport {
            l_vs_theta_p: linalg::max_abs_diff(&self.l, &(&self.p * self.theta)),
            r_vs_scaled_p: linalg::max_abs_diff(&self.r, &(&self.p * (1.0 - 2.0 * self.theta))),
            n_sym_min_eigenvalue: lambda_min(&(&self.n + self.n.transpose())),
        }
    }

    pub fn spectral_summary(&self) -> SpectralSummary {
        let n = self.len();
        let eye = DMatrix::<f64>::identity(n, n);
        let m_sym = &self.m + self.m.transpose();
        let ltl = self.l.transpose() * &self.l;
        SpectralSummary {
            norm_i_plus_a: spectral_norm(&(&eye + &self.a)),
            norm_a_tilde: spectral_norm(&self.a_tilde),
            lambda_max_nnt: lambda_max(&(&self.n * self.n.transpose())),
            lambda_max_n_sym: lambda_max(&(&self.n + self.n.transpose())),
            lambda_nonzero_min_ltl: linalg::smallest_nonzero_eigenvalue(&ltl, NULL_EIGENVALUE_TOL),
            lambda_min_m_sym: lambda_min(&m_sym),
            lambda_max_m_sym_half: lambda_max(&m_sym) * 0.5,
            lambda_max_rtr: lambda_max(&(self.r.transpose() * &self.r)),
            lambda_max_mmt: lambda_max(&(&self.m * self.m.transpose())),
            lambda_max_att: lambda_max(&(self.a_tilde.transpose() * &self.a_tilde)),
        }
    }
}

/// Norms and extreme eigenvalues used by the certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSummary {
    /// `‖I + A‖₂`
    pub norm_i_plus_a: f64,
    /// `‖Ã‖₂`
    pub norm_a_tilde: f64,
    /// `λ_max(NNᵀ)`
    pub lambda_max_nnt: f64,
    /// `λ_max(N + Nᵀ)`
    pub lambda_max_n_sym: f64,
    /// Smallest nonzero eigenvalue of `LᵀL`; `None` when `L = 0`.
    pub lambda_nonzero_min_ltl: Option<f64>,
    /// `λ_min(M + Mᵀ)`
    pub lambda_min_m_sym: f64,
    /// `λ_max((M + Mᵀ)/2)`
    pub lambda_max_m_sym_half: f64,
    /// `λ_max(RᵀR)`
    pub lambda_max_rtr: f64,
    /// `λ_max(MMᵀ)`
    pub lambda_max_mmt: f64,
    /// `λ_max(ÃᵀÃ)`
    pub lambda_max_att: f64,
}

/// How the `d` constants were obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DMode {
    /// Scanned from `y^k` for `k ≤ horizon`, then inflated by `margin`.
    Observed { horizon: usize, margin: f64 },
    /// Worst-case bounds `d ≤ n`, `d⁻ ≤ a_min^{-(n-1)}`.
    Analytic,
}

impl std::fmt::Display for DMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DMode::Observed { horizon, margin } => write!(f, "observed(horizon={horizon},margin={margin})"),
            DMode::Analytic => f.write_str("analytic"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DConstants {
    /// Upper bound on `max_k max_i y_i^k`.
    pub d: f64,
    /// Upper bound on `max_k 1/min_i y_i^k`.
    pub d_minus: f64,
    /// `1/min_i π_i`.
    pub d_inf_minus: f64,
    pub mode: DMode,
}

/// Exact scan of a `y` trace, without safety margin.
pub fn estimate_d_constants(y_trace: &[Vec<f64>], info: &StationaryInfo) -> Result<DConstants> {
    if y_trace.is_empty() {
        return Err(Error::SeriesTooShort { len: 0, min: 1 });
    }
    let mut d: f64 = 0.0;
    let mut d_minus: f64 = 0.0;
    for y in y_trace {
        if y.len() != info.len() {
            return Err(Error::Dimension(format!(
                "y trace entry has length {}, expected {}",
                y.len(),
                info.len()
            )));
        }
        for v in y {
            d = d.max(v.abs());
            d_minus = d_minus.max(1.0 / v);
        }
    }
    Ok(DConstants {
        d,
        d_minus,
        d_inf_minus: inf_minus(info),
        mode: DMode::Observed {
            horizon: y_trace.len() - 1,
            margin: 0.0,
        },
    })
}

/// Scans `y^k = A^k 1` for `k ≤ horizon` and inflates `d`, `d⁻` by
/// `1 + margin`. The scan does not depend on the step size.
pub fn calibrate_d_constants(
    pair: &WeightPair,
    info: &StationaryInfo,
    horizon: usize,
    margin: f64,
) -> Result<DConstants> {
    if !(margin >= 0.0) {
        return Err(Error::invalid("margin", margin, "must be nonnegative"));
    }
    let mut y = vec![1.0; pair.len()];
    let mut trace = Vec::with_capacity(horizon + 1);
    trace.push(y.clone());
    for _ in 0..horizon {
        y = pair.a_rows().apply_scalar(&y);
        trace.push(y.clone());
    }
    let raw = estimate_d_constants(&trace, info)?;
    Ok(DConstants {
        d: raw.d * (1.0 + margin),
        d_minus: raw.d_minus * (1.0 + margin),
        d_inf_minus: raw.d_inf_minus,
        mode: DMode::Observed { horizon, margin },
    })
}

/// `d = n` and `d⁻ = a_min^{-(n-1)}`, valid for every `k`: `Σ y = n`, and
/// every entry of `A^{n-1}` is at least `a_min^{n-1}` because `A` has a
/// positive diagonal.
pub fn analytic_d_constants(pair: &WeightPair, info: &StationaryInfo) -> DConstants {
    let n = pair.len();
    let a_min = pair
        .a()
        .iter()
        .filter(|v| **v > 0.0)
        .fold(f64::INFINITY, |m, v| m.min(*v));
    DConstants {
        d: n as f64,
        d_minus: a_min.powi(-(n as i32 - 1)),
        d_inf_minus: inf_minus(info),
        mode: DMode::Analytic,
    }
}

fn inf_minus(info: &StationaryInfo) -> f64 {
    1.0 / info.pi.iter().fold(f64::INFINITY, |m, v| m.min(*v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digraph::{random_connected_undirected, random_strongly_connected, Digraph};
    use crate::weights::{constant_weights, local_degree_weights, metropolis_weights, stationary};

    fn setup(a: DMatrix<f64>, theta: f64) -> (WeightPair, StationaryInfo) {
        let pair = WeightPair::new(a, theta).unwrap();
        let info = stationary(pair.a(), 1e-15, 10_000_000).unwrap();
        (pair, info)
    }

    fn cycle() -> Digraph {
        Digraph::new(3, [(1, 0), (2, 1), (0, 2), (2, 0)]).unwrap()
    }

    #[test]
    fn identity_network() {
        let (pair, info) = setup(DMatrix::identity(3, 3), 0.5);
        let ms = build_matrix_set(&pair, &info).unwrap();
        for z in [&ms.n, &ms.q, &ms.p, &ms.l, &ms.r] {
            assert_eq!(z.amax(), 0.0);
        }
        assert_eq!(ms.m, info.d_inf_inverse());
        let s = ms.spectral_summary();
        assert_eq!(s.lambda_nonzero_min_ltl, None);
    }

    #[test]
    fn half_theta_identities() {
        let g = random_strongly_connected(8, 0.3, 4).unwrap();
        for theta in [0.5, 0.3, 0.1] {
            let (pair, info) = setup(local_degree_weights(&g).unwrap(), theta);
            let ms = build_matrix_set(&pair, &info).unwrap();
            let id = ms.identities();
            assert!(id.l_vs_theta_p <= 1e-14);
            assert!(id.r_vs_scaled_p <= 1e-14);
            assert!(id.n_sym_min_eigenvalue >= -1e-10);
            if theta == 0.5 {
                assert!(ms.r.amax() <= 1e-15);
            }
        }
    }

    /// Jacobi rotations as an independent symmetric eigensolver.
    fn jacobi_eigenvalues(mut m: DMatrix<f64>) -> Vec<f64> {
        let n = m.nrows();
        for _ in 0..200 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += m[(p, q)] * m[(p, q)];
                    if m[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let tau = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                    let t = if tau >= 0.0 {
                        1.0 / (tau + (1.0 + tau * tau).sqrt())
                    } else {
                        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                        m[(k, p)] = c * mkp - s * mkq;
                        m[(k, q)] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                        m[(p, k)] = c * mpk - s * mqk;
                        m[(q, k)] = s * mpk + c * mqk;
                    }
                }
            }
            if off < 1e-32 {
                break;
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    #[test]
    fn m_sym_min_eigenvalue_matches_oracle() {
        let (pair, info) = setup(local_degree_weights(&cycle()).unwrap(), 0.5);
        let ms = build_matrix_set(&pair, &info).unwrap();
        let s = ms.spectral_summary();
        let oracle = jacobi_eigenvalues(&ms.m + ms.m.transpose())[0];
        assert!((s.lambda_min_m_sym - oracle).abs() <= 1e-10);
        // cross-check against the weights-module computation
        assert!((s.lambda_min_m_sym - ms.positivity.min_eigenvalue).abs() <= 1e-10);
    }

    #[test]
    fn stronger_diagonal_does_not_shrink_positivity() {
        for seed in 0..5 {
            let g = random_strongly_connected(8, 0.3, seed).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for zeta in [0.05, 0.02, 0.01, 0.005] {
                let (pair, info) = setup(constant_weights(&g, zeta).unwrap(), 0.5);
                let ms = build_matrix_set(&pair, &info).unwrap();
                let v = ms.spectral_summary().lambda_min_m_sym;
                assert!(v >= prev - 1e-12, "seed {seed} zeta {zeta}: {v} < {prev}");
                prev = v;
            }
        }
    }

    #[test]
    fn d_constants_for_doubly_stochastic_and_single_node() {
        let g = random_connected_undirected(5, 0.4, 1).unwrap();
        let (pair, info) = setup(metropolis_weights(&g).unwrap(), 0.5);
        let dc = calibrate_d_constants(&pair, &info, 100, 0.0).unwrap();
        assert!((dc.d - 1.0).abs() < 1e-14 && (dc.d_minus - 1.0).abs() < 1e-14);
        assert!((dc.d_inf_minus - 1.0).abs() < 1e-12);

        let (pair, info) = setup(DMatrix::identity(1, 1), 0.5);
        let dc = calibrate_d_constants(&pair, &info, 10, 0.0).unwrap();
        assert_eq!((dc.d, dc.d_minus, dc.d_inf_minus), (1.0, 1.0, 1.0));
        let an = analytic_d_constants(&pair, &info);
        assert_eq!((an.d, an.d_minus), (1.0, 1.0));
    }

    #[test]
    fn d_constants_match_brute_force_scan() {
        let (pair, info) = setup(local_degree_weights(&cycle()).unwrap(), 0.5);
        let dc = calibrate_d_constants(&pair, &info, 500, 0.0).unwrap();
        // brute force: dense powers of A applied to 1
        let a = pair.a();
        let mut y = nalgebra::DVector::from_element(3, 1.0);
        let (mut d, mut dm) = (0.0f64, 0.0f64);
        for _ in 0..=500 {
            d = d.max(y.max());
            dm = dm.max(1.0 / y.min());
            y = a * y;
        }
        assert!((dc.d - d).abs() <= 1e-14);
        assert!((dc.d_minus - dm).abs() <= 1e-14);
        let margin = calibrate_d_constants(&pair, &info, 500, 0.1).unwrap();
        assert!((margin.d - 1.1 * d).abs() <= 1e-14);
        let an = analytic_d_constants(&pair, &info);
        assert!(an.d >= d && an.d_minus >= dm);
        assert!(estimate_d_constants(&[], &info).is_err());
    }
}
