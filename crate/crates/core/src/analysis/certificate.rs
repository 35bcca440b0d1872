//! Step-size certificate: the constants `C1`–`C7`, the discriminant `Δ`
//! and the interval `[α̲, ᾱ]`.

use std::fmt;

use crate::io::Manifest;
use crate::weights::{StationaryInfo, WeightPair};
use crate::Result;

use super::matrices::{
    analytic_d_constants, build_matrix_set, calibrate_d_constants, DConstants, SpectralSummary,
};

/// Endpoint tolerance of the `C1` fixed-point refinement.
pub const FIXED_POINT_TOL: f64 = 1e-10;
pub const FIXED_POINT_MAX_ROUNDS: usize = 50;

/// Everything the constants depend on apart from `η`, `δ` and `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateInputs {
    pub spectral: SpectralSummary,
    pub d: DConstants,
    pub agents: usize,
    /// Consensus constant (4 for column-stochastic weights).
    pub c: f64,
    pub gamma: f64,
    pub l_f: f64,
    pub s_f: f64,
    /// Whether `(D∞)⁻¹Ã + Ãᵀ(D∞)⁻¹ ≻ 0` held.
    pub positivity: bool,
}

impl CertificateInputs {
    /// `d∞⁻ d⁻ L_f`, which recurs in several constants.
    fn coupling(&self) -> f64 {
        self.d.d_inf_minus * self.d.d_minus * self.l_f
    }

    /// Supremum of admissible `η`.
    pub fn eta_max(&self) -> f64 {
        self.s_f / (self.d.d.powi(2) * (1.0 + self.coupling().powi(2)))
    }

    /// `η` that keeps `C6 = S_f / (4d²) > 0`.
    pub fn default_eta(&self) -> f64 {
        0.5 * self.s_f / (self.d.d.powi(2) * (1.0 + 2.0 * self.coupling().powi(2)))
    }

    /// Supremum of admissible `δ`, which needs `C7` (independent of `η`).
    pub fn delta_max(&self) -> f64 {
        self.spectral.lambda_min_m_sym / (2.0 * c7(&self.spectral, c2(&self.spectral)))
    }

    pub fn default_delta(&self) -> f64 {
        (0.5 * self.delta_max()).min(0.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    /// `Δ = C6² − 4 C4 δ (1/δ + C5 δ)`.
    pub discriminant: f64,
    pub eta: f64,
    pub delta: f64,
    /// Step size at which `C1` and `C3` were evaluated.
    pub alpha: f64,
}

fn c2(s: &SpectralSummary) -> f64 {
    let num = s.lambda_max_nnt + s.lambda_max_n_sym;
    match s.lambda_nonzero_min_ltl {
        Some(den) => num / (2.0 * den),
        // L = 0 forces N = 0
        None if num.abs() <= f64::EPSILON => 0.0,
        None => f64::INFINITY,
    }
}

fn c7(s: &SpectralSummary, c2: f64) -> f64 {
    0.5 * s.lambda_max_mmt + 4.0 * c2 * s.lambda_max_att
}

/// Evaluates every constant at the given `η`, `δ` and `α`.
pub fn compute_constants(inp: &CertificateInputs, eta: f64, delta: f64, alpha: f64) -> TheoremConstants {
    let s = &inp.spectral;
    let (d, dm) = (inp.d.d, inp.d.d_minus);
    let k = inp.coupling();
    let c1 = dm * (d * s.norm_i_plus_a + d * s.norm_a_tilde + 2.0 * alpha * inp.l_f);
    let c2 = c2(s);
    let nc = inp.agents as f64 * inp.c;
    let c3 = alpha * nc * nc * (c1 * c1 / (2.0 * eta) + k * k * (eta + 1.0 / eta) + inp.s_f / (d * d));
    let c4 = 8.0 * c2 * (inp.l_f * dm).powi(2);
    let c5 = s.lambda_max_m_sym_half + 4.0 * c2 * s.lambda_max_rtr;
    let c6 = 0.5 * (inp.s_f / (d * d) - eta - 2.0 * eta * k * k);
    let c7 = c7(s, c2);
    let discriminant = c6 * c6 - 4.0 * c4 * delta * (1.0 / delta + c5 * delta);
    TheoremConstants {
        c1,
        c2,
        c3,
        c4,
        c5,
        c6,
        c7,
        discriminant,
        eta,
        delta,
        alpha,
    }
}

/// Range on which `C4 δ α² − C6 α + (1/δ + C5 δ) ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticRange {
    pub discriminant: f64,
    /// `(C6 − √Δ) / (2 C4 δ)`; NaN when `Δ < 0`.
    pub lower: f64,
    /// `(C6 + √Δ) / (2 C4 δ)`; NaN when `Δ < 0`.
    pub upper: f64,
}

pub fn quadratic_range(c4: f64, c5: f64, c6: f64, delta: f64) -> QuadraticRange {
    let constant = 1.0 / delta + c5 * delta;
    let discriminant = c6 * c6 - 4.0 * c4 * delta * constant;
    if c4 == 0.0 {
        // the quadratic degenerates to a linear condition
        let lower = if c6 > 0.0 { constant / c6 } else { f64::NAN };
        return QuadraticRange {
            discriminant,
            lower,
            upper: if c6 > 0.0 { f64::INFINITY } else { f64::NAN },
        };
    }
    if discriminant < 0.0 {
        return QuadraticRange {
            discriminant,
            lower: f64::NAN,
            upper: f64::NAN,
        };
    }
    let root = discriminant.sqrt();
    QuadraticRange {
        discriminant,
        lower: (c6 - root) / (2.0 * c4 * delta),
        upper: (c6 + root) / (2.0 * c4 * delta),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSizeInterval {
    pub lower: f64,
    pub upper: f64,
    /// `η λ_min(M+Mᵀ) / (2 (d∞⁻ d⁻ L_f)²)`
    pub upper_eta_branch: f64,
    pub quadratic: QuadraticRange,
    pub feasible: bool,
    /// Why the interval is infeasible, if it is.
    pub diagnostic: Option<String>,
}

/// Admissible-range violations of `η` and `δ`, each naming its bound.
pub fn parameter_violations(inp: &CertificateInputs, eta: f64, delta: f64) -> Vec<String> {
    let mut out = Vec::new();
    if !inp.positivity {
        out.push(format!(
            "positivity: lambda_min(M+M^T) = {:e} is not positive",
            inp.spectral.lambda_min_m_sym
        ));
    }
    let eta_max = inp.eta_max();
    if !(eta > 0.0 && eta < eta_max) {
        out.push(format!("eta = {eta:e} outside (0, {eta_max:e})"));
    }
    let delta_max = inp.delta_max();
    if !(delta > 0.0 && delta < delta_max) {
        out.push(format!("delta = {delta:e} outside (0, {delta_max:e})"));
    }
    out
}

pub fn step_size_interval(inp: &CertificateInputs, k: &TheoremConstants) -> StepSizeInterval {
    let coupling = inp.coupling();
    let upper_eta_branch = if coupling > 0.0 {
        k.eta * inp.spectral.lambda_min_m_sym / (2.0 * coupling * coupling)
    } else {
        f64::INFINITY
    };
    let quadratic = quadratic_range(k.c4, k.c5, k.c6, k.delta);
    let lower = quadratic.lower;
    let upper = upper_eta_branch.min(quadratic.upper);
    let mut problems = parameter_violations(inp, k.eta, k.delta);
    if quadratic.discriminant < 0.0 && k.c4 != 0.0 {
        problems.push(format!("discriminant = {:e} < 0", quadratic.discriminant));
    } else if !(lower > 0.0 && lower <= upper) {
        problems.push(format!("empty interval: lower = {lower:e}, upper = {upper:e}"));
    }
    StepSizeInterval {
        lower,
        upper,
        upper_eta_branch,
        quadratic,
        feasible: problems.is_empty(),
        diagnostic: (!problems.is_empty()).then(|| problems.join("; ")),
    }
}

/// Parameters for [`certify`]; `None` selects the defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub eta: Option<f64>,
    pub delta: Option<f64>,
    pub d_mode: DModeChoice,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DModeChoice {
    Observed { horizon: usize, margin: f64 },
    Analytic,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            eta: None,
            delta: None,
            d_mode: DModeChoice::Observed {
                horizon: 2000,
                margin: 0.1,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub inputs: CertificateInputs,
    pub constants: TheoremConstants,
    pub interval: StepSizeInterval,
    /// Rounds of the `C1` fixed-point refinement.
    pub rounds: usize,
    /// `(S_f/(2d²) − η/2) / (2 C2 δ)`: the linearized lower-end estimate,
    /// reported for reference, not certified.
    pub linearized_lower_estimate: f64,
    /// Rate fitted on a run, when one was attached.
    pub fitted_tau: Option<f64>,
}

/// Builds the matrices, the `d` constants and the interval for `pair`.
///
/// `C1` (and so `C3`) depends on `α`; it is evaluated at the current upper
/// end and the interval recomputed until the endpoints settle.
pub fn certify(
    pair: &WeightPair,
    info: &StationaryInfo,
    l_f: f64,
    s_f: f64,
    options: &CertifyOptions,
) -> Result<Certificate> {
    let ms = build_matrix_set(pair, info)?;
    let d = match options.d_mode {
        DModeChoice::Observed { horizon, margin } => calibrate_d_constants(pair, info, horizon, margin)?,
        DModeChoice::Analytic => analytic_d_constants(pair, info),
    };
    let inputs = CertificateInputs {
        spectral: ms.spectral_summary(),
        d,
        agents: pair.len(),
        c: info.c,
        gamma: info.gamma,
        l_f,
        s_f,
        positivity: ms.positivity.holds,
    };
    Ok(certify_inputs(inputs, options.eta, options.delta))
}

/// [`certify`] from precomputed inputs.
pub fn certify_inputs(inputs: CertificateInputs, eta: Option<f64>, delta: Option<f64>) -> Certificate {
    let eta = eta.unwrap_or_else(|| inputs.default_eta());
    let delta = delta.unwrap_or_else(|| inputs.default_delta());
    let mut alpha = 0.0;
    let mut constants = compute_constants(&inputs, eta, delta, alpha);
    let mut interval = step_size_interval(&inputs, &constants);
    let mut rounds = 1;
    while rounds < FIXED_POINT_MAX_ROUNDS {
        let candidate = if interval.upper.is_finite() { interval.upper } else { alpha };
        constants = compute_constants(&inputs, eta, delta, candidate);
        let next = step_size_interval(&inputs, &constants);
        rounds += 1;
        let settled = same(next.lower, interval.lower) && same(next.upper, interval.upper);
        interval = next;
        alpha = candidate;
        if settled {
            break;
        }
    }
    let linearized_lower_estimate =
        (inputs.s_f / (2.0 * inputs.d.d.powi(2)) - eta / 2.0) / (2.0 * constants.c2 * delta);
    Certificate {
        inputs,
        constants,
        interval,
        rounds,
        linearized_lower_estimate,
        fitted_tau: None,
    }
}

fn same(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a == b || (a - b).abs() <= FIXED_POINT_TOL * a.abs().max(1.0)
}

impl Certificate {
    pub fn feasible(&self) -> bool {
        self.interval.feasible
    }

    /// `count` equispaced step sizes spanning the interval.
    pub fn equispaced(&self, count: usize) -> Vec<f64> {
        let (lo, hi) = (self.interval.lower, self.interval.upper);
        match count {
            0 => Vec::new(),
            1 => vec![0.5 * (lo + hi)],
            _ => (0..count)
                .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                .collect(),
        }
    }

    /// Flat key=value report.
    pub fn report(&self) -> Manifest {
        let i = &self.inputs;
        let k = &self.constants;
        let s = &i.spectral;
        let mut m = Manifest::new();
        m.set("feasible", self.feasible())
            .set("alpha_lower", self.interval.lower)
            .set("alpha_upper", self.interval.upper)
            .set("alpha_upper_eta_branch", self.interval.upper_eta_branch)
            .set("alpha_upper_quadratic", self.interval.quadratic.upper)
            .set("alpha_lower_linearized_estimate", self.linearized_lower_estimate)
            .set("diagnostic", self.interval.diagnostic.as_deref().unwrap_or("none"))
            .set("d", i.d.d)
            .set("d_minus", i.d.d_minus)
            .set("d_inf_minus", i.d.d_inf_minus)
            .set("d_mode", i.d.mode)
            .set("eta", k.eta)
            .set("eta_max", i.eta_max())
            .set("delta", k.delta)
            .set("delta_max", i.delta_max())
            .set("gamma", i.gamma)
            .set("consensus_c", i.c)
            .set("l_f", i.l_f)
            .set("s_f", i.s_f)
            .set("c1", k.c1)
            .set("c2", k.c2)
            .set("c3", k.c3)
            .set("c4", k.c4)
            .set("c5", k.c5)
            .set("c6", k.c6)
            .set("c7", k.c7)
            .set("discriminant", k.discriminant)
            .set("alpha_for_c1", k.alpha)
            .set("fixed_point_rounds", self.rounds)
            .set("lambda_min_m_sym", s.lambda_min_m_sym)
            .set("lambda_max_m_sym_half", s.lambda_max_m_sym_half)
            .set("lambda_max_nnt", s.lambda_max_nnt)
            .set("lambda_max_n_sym", s.lambda_max_n_sym)
            .set(
                "lambda_nonzero_min_ltl",
                s.lambda_nonzero_min_ltl.map_or("none".to_string(), |v| v.to_string()),
            )
            .set("lambda_max_rtr", s.lambda_max_rtr)
            .set("lambda_max_mmt", s.lambda_max_mmt)
            .set("lambda_max_att", s.lambda_max_att)
            .set("norm_i_plus_a", s.norm_i_plus_a)
            .set("norm_a_tilde", s.norm_a_tilde);
        if let Some(t) = self.fitted_tau {
            m.set("fitted_tau", t);
        }
        m
    }

    /// Two-column CSV `name,value` of the numeric constants.
    pub fn constants_csv(&self) -> String {
        let k = &self.constants;
        let rows = [
            ("c1", k.c1),
            ("c2", k.c2),
            ("c3", k.c3),
            ("c4", k.c4),
            ("c5", k.c5),
            ("c6", k.c6),
            ("c7", k.c7),
            ("discriminant", k.discriminant),
            ("eta", k.eta),
            ("delta", k.delta),
            ("d", self.inputs.d.d),
            ("d_minus", self.inputs.d.d_minus),
            ("d_inf_minus", self.inputs.d.d_inf_minus),
            ("gamma", self.inputs.gamma),
            ("alpha_lower", self.interval.lower),
            ("alpha_upper", self.interval.upper),
        ];
        let mut s = String::from("name,value\n");
        for (n, v) in rows {
            s.push_str(&format!("{n},{v}\n"));
        }
        s
    }
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.report().to_text())
    }
}
