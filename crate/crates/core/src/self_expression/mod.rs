//! Self-expression: the dense least-squares oracle, its probabilistic
//! bounds, and the scalable landmark factorization `C = PPᵀ`.

mod bounds;
mod factorization;
mod fit;
mod lsr;

pub use bounds::{
    prop2_bound, prop2_monte_carlo, prop3_bound, prop3_g, prop3_monte_carlo, MonteCarloEstimate,
};
pub use factorization::{
    factorization_residual, kmeanspp_anchors, kmeanspp_indices, landmark_update, procrustes_update, LandmarkMatrix,
    ProjectorP, ORTHONORMAL_TOL, PROCRUSTES_RCOND,
};
pub use fit::{
    block_coordinate_fit, fit_from, history_from_tsv, history_to_tsv, AnchorCount, FitConfig, FittedModel,
    HistoryRecord, HISTORY_HEADER,
};
pub use lsr::{
    lowrank_residual, lsr_closed_form, lsr_closed_form_capped, lsr_objective, projector_residual,
    projector_residual_factored, projector_residual_formula, trace_objective, verify_prop3_experiment, GramSpectrum,
    LsrSolution, Prop3Experiment, Prop3Outcome, ResidualRoute, DENSE_CAP, RANK_TOL,
};
