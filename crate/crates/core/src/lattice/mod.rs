//! Lattice structure, exact size laws and local limits for sesqui-type trees.

mod clt;
mod exact;
mod hnf;
mod pmf;
mod sesqui;

pub use clt::{
    conditional_clt_check, conditional_fertile_law, exact_mean_fertile, gaussian_density, ks_to_normal, normal_cdf,
    tail_asymptotic_check, CltReport,
};
pub use exact::SesquiExactSampler;
pub use hnf::{smallest_lattice, IntLattice};
pub use pmf::{joint_size_pmf, joint_size_pmf_as, joint_size_pmf_f64, size_pmf, step_sum_law, step_sum_pmf, Precision};
pub use sesqui::{CltParams, LatticeReport, Moments, SesquiModel};
