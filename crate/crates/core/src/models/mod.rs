//! The Bayesian matrix-factorisation models, their Gibbs conditionals and
//! the NMF baseline.
//!
//! Every model has `R_ij ~ N(U_i V_j^T, 1/tau)` (or Poisson for PGG/PGGG)
//! on the observed entries, with priors on U and V chosen by [`ModelKind`].

mod density;
mod hierarchy;
mod hyper;
mod init;
mod kind;
mod nmf;
mod poisson;
mod state;
mod sweep;
mod updates;

pub use density::{
    ln_exponential, ln_gamma_pdf, ln_inverse_gaussian, ln_laplace, ln_normal, ln_normal_cdf, ln_poisson,
    ln_truncated_normal, log_joint, log_joint_complete,
};
pub use hierarchy::{
    ard_posterior, gttn_mean_posterior, gttn_precision_posterior, laplace_eta_posterior, laplace_scale_posterior,
    update_ard, update_gttn_hyper, update_laplace, update_wishart, wishart_posterior, LAPLACE_ABS_FLOOR,
};
pub use hyper::{Hyperparams, ModelSpec, Resolved};
pub use init::{check_compatible, forward_sample, generate_data, initial_state};
pub use kind::{ModelKind, Side};
pub use nmf::{nmf_step, DENOMINATOR_FLOOR};
pub use poisson::{
    check_count_totals, gamma_entry_posterior, rate_posterior, update_counts, update_factor as update_poisson_factor,
    update_rates, FACTOR_FLOOR,
};
pub use state::{Aux, Diagnostics, FactorState, RowGaussian};
pub use sweep::{gibbs_sweep, update_side};
pub(crate) use sweep::sweep;
pub use updates::{noise_posterior, sse, update_noise, volume_prior_terms};
