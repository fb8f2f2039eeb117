//! Lipschitz constants of random ReLU networks.
//!
//! * [`net`]: the network model, forward pass and piecewise-affine gradients.
//! * [`init`]: He-style random initialization with seeded, per-trial streams.
//! * [`feasibility`]: a small dense simplex deciding halfspace systems.
//! * [`exact`]: exact Lipschitz constants by activation-region enumeration.
//! * [`estimators`]: sampled lower bounds, local search and fixed-point gradients.
//! * [`bounds`]: closed-form upper/lower bounds, covering numbers, entropy integrals.
//! * [`experiments`]: seeded Monte Carlo studies producing CSV/JSON reports.

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod experiments;
pub mod feasibility;
pub mod init;
pub mod linalg;
pub mod net;
pub mod quadrature;

pub use bounds::BoundConstants;
pub use error::{LipError, Result};
pub use estimators::{EstimateConfig, FixedPointReport, SampleLaw};
pub use exact::{exact_lipschitz, Budget, EnumerationMode, LipOptions, LipResult, RegionCertificate};
pub use experiments::ExperimentReport;
pub use feasibility::{solve_margin, FeasibilityResult, FeasibilityStatus, HalfspaceSystem, Relation};
pub use init::{derive_trial_rng, sample_network, BiasSpec, InitConfig};
pub use linalg::Matrix;
pub use net::{ActivationPattern, LayerTrace, NetworkParams};
