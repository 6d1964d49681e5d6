//! Built-in targets.

pub mod bvn;
pub mod expm;
pub mod mmpp;
pub mod oracle;

pub use bvn::{
    bvn_functionals, bvn_log_conditional, bvn_truth, BivariateGaussian, BvnConditionalProposal, ConditionalFamily,
};
pub use mmpp::{mmpp_loglik, simulate_mmpp, MmppParams, MmppPosterior};
pub use oracle::{discrete_oracle_kernel, DiscreteOracleTarget, OracleKernel, OracleSpec};
