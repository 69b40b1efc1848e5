//! Message-framing field experiments on social platforms.
//!
//! A campaign watches a public stream for posts on configured topics,
//! assigns their authors to framing arms in balanced blocks, calls groups
//! of them to action, and follows up on replies. Everything it does is
//! written to an append-only event log, from which [`analytics`] derives
//! participation metrics and tests.
//!
//! Real platforms are out of scope: [`simulator::SimulatedPlatform`] and
//! [`platform::ReplayPlatform`] implement the [`platform::Platform`] port.

pub mod analytics;
pub mod eventlog;
pub mod fixtures;
pub mod model;
pub mod orchestrator;
pub mod platform;
pub mod simulator;
pub mod strategy;
pub mod targeting;

pub use eventlog::{read_log, validate_log, write_log, EventLog, LogError, LogSink};
pub use model::{
    validate_config, CampaignConfig, CampaignEvent, ConfigError, ContactState, ConversationId,
    ConversationRecord, EventKind, Label, MessageId, StrategyId, StrategySpec, TargetAuthor,
    TargetUser, Timestamp, UserId, Violation, VolunteerLabel,
};
pub use orchestrator::{replay_campaign, run_campaign, Orchestrator, OrchestratorError, RunOptions, RunOutcome, StopReason};
pub use platform::{InboundItem, InboundKind, Platform, PlatformError};
pub use simulator::{SimulatedPlatform, SimulationConfig};
