//! NCVaR value iteration on the augmented state space `X x Y`.

mod bellman;
mod envelope;
mod export;
mod iterate;
mod policy;
mod value;
mod ygrid;

pub use bellman::{bellman, Backup, BellmanOperator, CurveTable};
pub use envelope::{
    inner_max, Curve, EnvelopeProblem, EnvelopeSolution, EnvelopeTerm, FEASIBILITY_TOL,
};
pub use export::{
    load_result_csv, read_result_csv, save_result_csv, write_result_csv, SolveSummary, ValueTable,
    CSV_HEADER,
};
pub use iterate::{
    extract_policy, result_from_values, value_iteration, value_iteration_from, SolveOptions,
    SolveResult,
};
pub use policy::{policy_step, Decision, GreedyPolicy};
pub use value::{check_concavity, interpolate, value_at, ConcavityViolation, ValueFunction, CONCAVITY_TOL};
pub use ygrid::{make_ygrid, YGrid};
