//! Deterministic simulator and analysis toolkit for distributed optimization
//! over strongly-connected directed graphs.
//!
//! The centerpiece is the DEXTRA iteration ([`engine`]): every agent keeps a
//! state `x_i`, a push-sum scale `y_i`, and the ratio `z_i = x_i / y_i`, and
//! mixes with in-neighbors through a column-stochastic matrix `A` and its
//! lazy companion `Ã = θI + (1-θ)A`. Around it sit
//!
//! - [`digraph`]: topologies and their edge-list format,
//! - [`weights`]: weight construction, the stationary vector `π`, and the
//!   weight-matrix checks,
//! - [`objectives`]: per-agent least-squares objectives and a centralized solver,
//! - [`baselines`]: EXTRA, row-stochastic DGD and gradient-push,
//! - [`analysis`]: step-size certificates, rate fitting and Lyapunov checks,
//! - [`experiment`]: sweeps and multi-algorithm comparisons.

pub mod analysis;
pub mod baselines;
pub mod digraph;
pub mod engine;
mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod objectives;
pub mod stack;
pub mod weights;

pub use digraph::Digraph;
pub use engine::{NetworkState, RunTrace, Termination};
pub use error::{Error, Result};
pub use objectives::{LeastSquaresInstance, Objective};
pub use stack::AgentStack;
pub use weights::{StationaryInfo, WeightPair};
