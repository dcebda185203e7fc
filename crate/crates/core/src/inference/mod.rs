//! Bayesian fitting by adaptive blockwise Metropolis, plus convergence checks.

pub mod augment;
pub mod chains;
pub mod prior;
pub mod psrf;
pub mod sampler;
pub mod transform;

pub use chains::{run_chain, run_mcmc, Chain, ChainSet, ParamSummary};
pub use prior::{ConstraintSet, Prior, PriorSpec};
pub use psrf::{mpsrf, psrf, psrf_report, PsrfEntry, PsrfReport};
pub use sampler::{BlockAcceptance, ChainSampler, McmcSettings, Posterior};
pub use transform::Layout;
