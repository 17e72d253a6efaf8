//! The bi-level search loop: weight steps, architecture steps through the
//! Gumbel-softmax relaxation, and the learned trade-off multiplier.

mod config;
mod engine;

pub use config::{anneal_tau, step_lambda, Objective, PathMode, SearchConfig};
pub(crate) use engine::stream;
pub use engine::{
    alpha_objective, objective_value, run_search, write_history, AlphaObjective, HistoryRow,
    SearchOutcome, SearchState, HISTORY_HEADER,
};
