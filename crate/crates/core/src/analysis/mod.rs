//! Step-size certification, rate fitting and the Lyapunov check.

pub mod certificate;
pub mod lyapunov;
pub mod matrices;
pub mod rate;

pub use certificate::{
    certify, certify_inputs, compute_constants, parameter_violations, quadratic_range, step_size_interval,
    Certificate, CertificateInputs, CertifyOptions, DModeChoice, QuadraticRange, StepSizeInterval,
    TheoremConstants,
};
pub use lyapunov::{lyapunov_validate, required_gamma_coefficient, LyapunovOutcome, LyapunovTrace};
pub use matrices::{
    analytic_d_constants, build_matrix_set, calibrate_d_constants, estimate_d_constants, DConstants, DMode,
    IdentityReport, MatrixSet, SpectralSummary,
};
pub use rate::{fit_linear_rate, truncate_at_floor, RateFit};
