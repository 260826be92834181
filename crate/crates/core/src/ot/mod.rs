//! Entropic optimal transport primitives: ℓp cost matrices, Sinkhorn solvers,
//! exact brute-force oracles and fixed-plan gradients.

mod cost;
mod exact;
mod grad;
mod sinkhorn;

pub use cost::{cost_matrix, lp_distance, CostMatrix};
pub use exact::{exact_ot_2x2, exact_ot_assignment, MAX_ASSIGNMENT_SIZE};
pub use grad::{grad_fixed_plan, lp_distance_grad};
pub use sinkhorn::{
    sinkhorn_log, sinkhorn_marginals, sinkhorn_uniform, sinkhorn_uniform_log, SinkhornResult,
    TransportPlan, DEFAULT_DELTA,
};
