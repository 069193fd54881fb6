//! The federated protocol: three agents, a typed message boundary, and the
//! acting/learning loops.

mod agents;
mod message;
mod replay;
mod runtime;
mod update;

pub use agents::{
    build_alpha, build_beta, AgentAlpha, AgentBeta, FedServer, LocalAgent, OptimizerAlgo,
    OptimizerConfig,
};
pub use message::{
    audit_log, AgentId, Channel, FedMessage, MessageAudit, MessageRecord, TAG_BATCH_IDS,
    TAG_FED_Q_VECTOR, TAG_QUERY_Q, TAG_Q_VECTOR, TAG_SHARED_TARGET,
};
pub use replay::{
    sample_indices, ReplayBuffer, TransitionAlpha, TransitionBeta, TransitionBetaExt,
};
pub use runtime::{
    ActingOutcome, AuditStats, EpisodeStats, EpsilonSchedule, FedRuntime, ProtocolConfig,
    RuntimeState, SlateStrategy,
};
pub use update::{
    compute_targets, expected_selector, joint_update, state_candidate_scores, OnlineValue,
};
