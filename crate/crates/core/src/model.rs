//! Domain types shared across the crate.
//!
//! Everything here is plain data: values are validated once and then
//! treated as immutable. Serialized field names are part of the on-disk
//! formats (campaign config, event log, label files) and must not change.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::strategy::render_message;

/// Milliseconds since the Unix epoch, UTC.
pub type Timestamp = i64;

pub const MS_PER_SECOND: Timestamp = 1_000;
pub const MS_PER_HOUR: Timestamp = 3_600_000;

/// Actor name recorded for messages the campaign itself sends.
pub const BOT_ACTOR: &str = "BOT";

/// Identifier of a framing arm. Open set: arms are declared in config.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StrategyId(pub String);

impl StrategyId {
    pub fn new(name: impl Into<String>) -> Self {
        StrategyId(name.into())
    }

    pub fn direct() -> Self {
        StrategyId::new("direct")
    }

    pub fn solidarity() -> Self {
        StrategyId::new("solidarity")
    }

    pub fn gain() -> Self {
        StrategyId::new("gain")
    }

    pub fn loss() -> Self {
        StrategyId::new("loss")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Opaque platform handle of a user.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub String);

impl UserId {
    pub fn new(handle: impl Into<String>) -> Self {
        UserId(handle.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Opaque platform message id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MessageId(pub String);

impl MessageId {
    pub fn new(id: impl Into<String>) -> Self {
        MessageId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConversationId(pub String);

impl ConversationId {
    pub fn new(id: impl Into<String>) -> Self {
        ConversationId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConversationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A framing arm: how calls to action and follow-ups are worded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub id: StrategyId,
    /// Template with `{topic}` and optionally `{mentions}` placeholders.
    pub call_to_action: String,
    /// Second message of every turn. Present iff `messages_per_turn == 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solidarity_quote: Option<String>,
    pub followups: Vec<String>,
    pub messages_per_turn: u8,
    /// Per-arm account label. Informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub account: Option<String>,
    /// Texts are translations back from the English wording.
    #[serde(default, skip_serializing_if = "is_false")]
    pub back_translated: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub name: String,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    /// Seconds.
    pub min_delay: f64,
    /// Seconds.
    pub max_delay: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter {
            min_delay: 60.0,
            max_delay: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotIdentity {
    pub display_name: String,
    pub bio_text: String,
    pub is_declared_bot: bool,
    /// Platform handle the campaign posts from.
    #[serde(default = "default_bot_handle")]
    pub handle: String,
}

fn default_bot_handle() -> String {
    "rallybot".to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartialPolicy {
    Discard,
    DispatchPartial,
}

/// What to do with a group buffer that has waited too long to fill.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialGroups {
    pub policy: PartialPolicy,
    pub timeout_secs: f64,
}

impl Default for PartialGroups {
    fn default() -> Self {
        PartialGroups {
            policy: PartialPolicy::DispatchPartial,
            timeout_secs: 6.0 * 3600.0,
        }
    }
}

/// Limits of the platform the campaign talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformCapabilities {
    pub char_limit: usize,
    pub max_mentions_per_message: usize,
    pub supports_favorites: bool,
}

impl Default for PlatformCapabilities {
    fn default() -> Self {
        PlatformCapabilities {
            char_limit: 140,
            max_mentions_per_message: 3,
            supports_favorites: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlatformKind {
    #[default]
    Sim,
    Replay,
}

/// Platform binding section of the campaign config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PlatformBinding {
    #[serde(default)]
    pub kind: PlatformKind,
    #[serde(default)]
    pub capabilities: PlatformCapabilities,
    /// Characters reserved per handle when checking templates against
    /// `char_limit` before real handles are known.
    #[serde(default = "default_handle_budget")]
    pub handle_budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<crate::simulator::SimulationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_log: Option<String>,
}

fn default_handle_budget() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub topics: Vec<Topic>,
    #[serde(default)]
    pub strategies: Vec<StrategySpec>,
    /// Load `strategies` from this file (relative to the config) when the
    /// inline list is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategies_file: Option<String>,
    pub groups_per_strategy_per_topic: u32,
    pub group_size: usize,
    #[serde(default)]
    pub jitter: Jitter,
    pub bot_identity: BotIdentity,
    pub random_seed: u64,
    #[serde(default)]
    pub partial_groups: PartialGroups,
    /// Hard stop for a run, in hours of campaign time.
    #[serde(default = "default_deadline_hours")]
    pub deadline_hours: f64,
    #[serde(default)]
    pub platform: PlatformBinding,
}

fn default_deadline_hours() -> f64 {
    24.0 * 14.0
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Simulation(#[from] crate::simulator::SimulationError),
}

#[derive(Deserialize)]
struct StrategiesFile {
    strategies: Vec<StrategySpec>,
}

fn read_text(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parse a strategies file: a TOML document with a `[[strategies]]` list.
pub fn parse_strategies(text: &str) -> Result<Vec<StrategySpec>, toml::de::Error> {
    toml::from_str::<StrategiesFile>(text).map(|f| f.strategies)
}

impl CampaignConfig {
    /// Parse a TOML config and pull in the files it references, resolved
    /// against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut config: CampaignConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<config>".into(),
            message: e.to_string(),
        })?;
        if config.strategies.is_empty() {
            if let Some(file) = &config.strategies_file {
                let path = base_dir.join(file);
                config.strategies = parse_strategies(&read_text(&path)?).map_err(|e| ConfigError::Parse {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
            }
        }
        if let Some(sim) = &mut config.platform.simulation {
            sim.resolve(base_dir)?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&read_text(path)?, base).map_err(|e| match e {
            ConfigError::Parse { path: p, message } if p == "<config>" => ConfigError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn strategy(&self, id: &StrategyId) -> Option<&StrategySpec> {
        self.strategies.iter().find(|s| &s.id == id)
    }

    pub fn strategy_ids(&self) -> Vec<StrategyId> {
        self.strategies.iter().map(|s| s.id.clone()).collect()
    }

    pub fn topic(&self, name: &str) -> Option<&Topic> {
        self.topics.iter().find(|t| t.name == name)
    }

    /// Handles the campaign posts from; never targeted.
    pub fn bot_handles(&self) -> BTreeSet<String> {
        let mut handles = BTreeSet::new();
        handles.insert(self.bot_identity.handle.to_lowercase());
        for s in &self.strategies {
            if let Some(account) = &s.account {
                handles.insert(account.to_lowercase());
            }
        }
        handles
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ContactState {
    Fresh,
    Queued,
    Contacted,
    Replied,
    Exhausted,
}

impl ContactState {
    /// States only move forward; staying put is allowed.
    pub fn can_advance_to(self, next: ContactState) -> bool {
        next >= self
    }

    /// Once reached, the user is never targeted by a new call to action.
    pub fn is_contacted(self) -> bool {
        self >= ContactState::Contacted
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetUser {
    pub user_id: UserId,
    pub matched_keyword: String,
    pub matched_message_id: MessageId,
    pub topic: String,
    pub assigned_strategy: Option<StrategyId>,
    pub contact_state: ContactState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConversationState {
    Pending,
    CalledToAction,
    Engaged,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reply {
    pub user_id: UserId,
    pub message_id: MessageId,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub conversation_id: ConversationId,
    pub topic: String,
    pub strategy: StrategyId,
    pub members: Vec<UserId>,
    pub sent_messages: Vec<MessageId>,
    pub used_followups: BTreeSet<usize>,
    pub replies: Vec<Reply>,
    pub state: ConversationState,
    #[serde(default)]
    pub partial: bool,
    #[serde(default)]
    pub aborted: bool,
}

impl ConversationRecord {
    pub fn new(
        conversation_id: ConversationId,
        topic: impl Into<String>,
        strategy: StrategyId,
        members: Vec<UserId>,
    ) -> Self {
        ConversationRecord {
            conversation_id,
            topic: topic.into(),
            strategy,
            members,
            sent_messages: Vec::new(),
            used_followups: BTreeSet::new(),
            replies: Vec::new(),
            state: ConversationState::Pending,
            partial: false,
            aborted: false,
        }
    }

    pub fn is_member(&self, user: &UserId) -> bool {
        self.members.contains(user)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    OutboundCall,
    OutboundQuote,
    OutboundFollowup,
    InboundReply,
    Retweet,
    Favorite,
    /// A post was permanently rejected; the conversation is abandoned.
    Aborted,
    /// Follow-up questions ran out; the conversation gets no more messages.
    Closed,
}

impl EventKind {
    pub fn is_outbound(self) -> bool {
        matches!(
            self,
            EventKind::OutboundCall | EventKind::OutboundQuote | EventKind::OutboundFollowup
        )
    }

    pub fn is_interaction(self) -> bool {
        matches!(self, EventKind::Retweet | EventKind::Favorite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TargetAuthor {
    Bot,
    Volunteer,
}

/// One line of the event log.
///
/// The first eleven fields are always written, `null` when absent, in this
/// order. `mentions`, `question` and `partial` are only written when set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignEvent {
    pub seq: u64,
    pub ts: Timestamp,
    pub kind: EventKind,
    pub actor: String,
    pub strategy: StrategyId,
    pub topic: String,
    pub conv: ConversationId,
    pub msg: Option<MessageId>,
    pub reply_to: Option<MessageId>,
    pub target_author: Option<TargetAuthor>,
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mentions: Vec<UserId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<usize>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub partial: bool,
}

impl CampaignEvent {
    pub fn is_bot(&self) -> bool {
        self.actor == BOT_ACTOR
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    OnTopic,
    OffTopic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolunteerLabel {
    pub user_id: UserId,
    pub label: Label,
    pub coder_id: String,
}

/// A broken config rule: which field, which rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Check every config invariant. An empty list means the config is usable.
pub fn validate_config(config: &CampaignConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let caps = &config.platform.capabilities;

    if config.group_size < 1 {
        out.push(Violation::new("group_size", "must be at least 1"));
    }
    if config.group_size > caps.max_mentions_per_message {
        out.push(Violation::new(
            "group_size",
            format!(
                "exceeds platform max_mentions_per_message ({})",
                caps.max_mentions_per_message
            ),
        ));
    }
    if config.groups_per_strategy_per_topic == 0 {
        out.push(Violation::new(
            "groups_per_strategy_per_topic",
            "must be at least 1",
        ));
    }
    let jitter = &config.jitter;
    if !(jitter.min_delay >= 0.0 && jitter.min_delay <= jitter.max_delay) {
        out.push(Violation::new(
            "jitter",
            "min_delay must be non-negative and not exceed max_delay",
        ));
    }
    if !config.bot_identity.is_declared_bot {
        out.push(Violation::new(
            "bot_identity.is_declared_bot",
            "must be true: the campaign account has to disclose that it is a bot",
        ));
    }
    if config.partial_groups.timeout_secs < 0.0 {
        out.push(Violation::new("partial_groups.timeout_secs", "must be >= 0"));
    }

    if config.topics.is_empty() {
        out.push(Violation::new("topics", "at least one topic is required"));
    }
    let mut topic_names = BTreeSet::new();
    for (i, topic) in config.topics.iter().enumerate() {
        if !topic_names.insert(topic.name.as_str()) {
            out.push(Violation::new(format!("topics[{i}].name"), "duplicate topic"));
        }
        if topic.keywords.is_empty() || topic.keywords.iter().any(|k| k.trim().is_empty()) {
            out.push(Violation::new(
                format!("topics[{i}].keywords"),
                "must be a non-empty list of non-empty strings",
            ));
        }
    }

    if config.strategies.is_empty() {
        out.push(Violation::new("strategies", "at least one strategy is required"));
    }
    let mut ids = BTreeSet::new();
    for (i, spec) in config.strategies.iter().enumerate() {
        let at = |field: &str| format!("strategies[{i}].{field}");
        if !ids.insert(spec.id.clone()) {
            out.push(Violation::new(at("id"), "duplicate strategy id"));
        }
        if spec.messages_per_turn != 1 && spec.messages_per_turn != 2 {
            out.push(Violation::new(at("messages_per_turn"), "must be 1 or 2"));
        } else if (spec.messages_per_turn == 2) != spec.solidarity_quote.is_some() {
            out.push(Violation::new(
                at("messages_per_turn"),
                "must be 2 exactly when solidarity_quote is set",
            ));
        }
        if spec.followups.is_empty() {
            out.push(Violation::new(at("followups"), "must not be empty"));
        }

        // Worst case over topics, with placeholder handles of the budgeted length.
        let handles: Vec<UserId> = (0..config.group_size)
            .map(|_| UserId::new("x".repeat(config.platform.handle_budget)))
            .collect();
        let mut templates: Vec<(String, &str)> = vec![(at("call_to_action"), &spec.call_to_action)];
        if let Some(q) = &spec.solidarity_quote {
            templates.push((at("solidarity_quote"), q));
        }
        for (j, f) in spec.followups.iter().enumerate() {
            templates.push((format!("strategies[{i}].followups[{j}]"), f));
        }
        for (field, template) in templates {
            for topic in &config.topics {
                let body = template.replace("{topic}", &topic.name);
                let len = render_message(&body, &handles).chars().count();
                if len > caps.char_limit {
                    out.push(Violation::new(
                        field.clone(),
                        format!(
                            "expands to {len} characters for topic '{}', limit is {}",
                            topic.name, caps.char_limit
                        ),
                    ));
                    break;
                }
            }
        }
    }
    out
}
