//! Reference controllers: threshold staging and an exhaustive oracle.

mod objective;
mod oracle;
mod rbc;

pub use objective::{evaluate_sequence, policy_sequence, rbc_sequence, SequenceCost};
pub use oracle::{
    decode_sequence, oracle_gap, oracle_solve, sequence_budget, GapStats, OracleOptions, OracleSolution,
    MAX_ORACLE_CHILLERS, MAX_ORACLE_HORIZON,
};
pub use rbc::{plr, rbc_step, stage, staged_delta, staging_order, RbcConfig, RbcState};
