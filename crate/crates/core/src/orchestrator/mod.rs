//! The campaign loop: arm assignment, group formation, jittered dispatch
//! and conversation progression, all recorded in the event log.
//!
//! Time is whatever the platform says it is. The loop repeatedly takes the
//! earliest pending thing (a scheduled turn, a notification, a public post
//! or a stale group buffer), advances the clock to it and handles it.
//!
//! Calls go out in rounds: one group from every open arm of a topic, at
//! distinct offsets inside one `min_delay` window. A new round starts only
//! after the previous one is fully posted and at least one jitter delay
//! after its base time, so per-arm call counts never drift apart by more
//! than one. Topics take turns round by round.

mod allocator;
mod groups;
mod schedule;
mod state;

pub use allocator::ArmAllocator;
pub use groups::{FormedGroup, GroupBuffer};
pub use schedule::{draw_delay, round_offsets, DispatchSchedule};
pub use state::CampaignState;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eventlog::{EventDraft, EventLog, LogError, LogSink};
use crate::model::{
    validate_config, CampaignConfig, CampaignEvent, ConversationId, ConversationState, EventKind,
    MessageId, PartialPolicy, StrategyId, TargetAuthor, Timestamp, Topic, Violation, BOT_ACTOR,
    MS_PER_HOUR, MS_PER_SECOND,
};
use crate::platform::{
    IdempotencyKey, InboundItem, InboundKind, Platform, PlatformError, ReplayPlatform,
};
use crate::strategy::{compose_call, compose_followup, select_followup, MessageKind, OutboundMessage};
use crate::targeting::{admit, match_target, Admission};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("every arm has reached its quota")]
    AllQuotasExhausted,
    #[error("no conversation owns message {0}")]
    UnknownConversation(MessageId),
    #[error("invalid campaign config ({} violations)", .0.len())]
    InvalidConfig(Vec<Violation>),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Platform(#[from] PlatformError),
}

/// What handling one inbound item did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InboundEffect {
    /// Public post that matched no wanted topic.
    Ignored,
    /// Matching author already seen.
    DuplicateRejected,
    /// Admitted and assigned; `group_formed` when it completed a group.
    Targeted { strategy: StrategyId, group_formed: bool },
    /// Logged without any outbound reaction.
    Logged,
    FollowupScheduled { question: usize, due: Timestamp },
    /// Reply logged; no questions were left so the conversation closed.
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Every arm reached its quota and every conversation went quiet.
    Completed,
    Deadline,
    MaxEvents,
    /// Nothing left to wait for, but quotas are not met.
    Idle,
}

/// One turn of a conversation: the call or a follow-up, plus the quote when
/// the arm has a two-message budget.
#[derive(Debug, Clone)]
struct Turn {
    conv: ConversationId,
    topic: String,
    strategy: StrategyId,
    number: u32,
    messages: Vec<OutboundMessage>,
    next: usize,
    lead: Option<MessageId>,
    reply_to: Option<MessageId>,
    round_call: bool,
    partial: bool,
}

#[derive(Debug, Default)]
struct Rounds {
    outstanding: usize,
    prev_base: Option<Timestamp>,
    next_topic: usize,
}

pub struct Orchestrator {
    config: CampaignConfig,
    rng: ChaCha8Rng,
    allocators: BTreeMap<String, ArmAllocator>,
    buffer: GroupBuffer,
    ready: BTreeMap<String, BTreeMap<StrategyId, VecDeque<FormedGroup>>>,
    opened: BTreeMap<(String, StrategyId), u32>,
    schedule: DispatchSchedule<Turn>,
    reserved: BTreeMap<ConversationId, BTreeSet<usize>>,
    rounds: Rounds,
    state: CampaignState,
    log: EventLog,
    bot_handles: BTreeSet<String>,
    listen_from: Option<Timestamp>,
    next_conv: u64,
}

impl Orchestrator {
    pub fn new(config: CampaignConfig, log: EventLog) -> Result<Self, OrchestratorError> {
        let violations = validate_config(&config);
        if !violations.is_empty() {
            return Err(OrchestratorError::InvalidConfig(violations));
        }
        let quota = config.groups_per_strategy_per_topic as u64 * config.group_size as u64;
        let allocators = config
            .topics
            .iter()
            .map(|t| (t.name.clone(), ArmAllocator::new(config.strategy_ids(), quota)))
            .collect();
        Ok(Orchestrator {
            rng: ChaCha8Rng::seed_from_u64(config.random_seed),
            allocators,
            buffer: GroupBuffer::new(config.group_size),
            ready: BTreeMap::new(),
            opened: BTreeMap::new(),
            schedule: DispatchSchedule::new(),
            reserved: BTreeMap::new(),
            rounds: Rounds::default(),
            state: CampaignState::new(),
            log,
            bot_handles: config.bot_handles(),
            listen_from: None,
            next_conv: 1,
            config,
        })
    }

    pub fn state(&self) -> &CampaignState {
        &self.state
    }

    pub fn events(&self) -> &[CampaignEvent] {
        self.log.events()
    }

    pub fn into_parts(self) -> (CampaignState, EventLog) {
        (self.state, self.log)
    }

    fn char_limit(&self) -> usize {
        self.config.platform.capabilities.char_limit
    }

    fn timeout_ms(&self) -> i64 {
        (self.config.partial_groups.timeout_secs * MS_PER_SECOND as f64) as i64
    }

    fn record(&mut self, draft: EventDraft) -> Result<(), OrchestratorError> {
        let event = self.log.append(draft)?;
        self.state.apply(event);
        Ok(())
    }

    fn ready_len(&self, topic: &str, arm: &StrategyId) -> usize {
        self.ready
            .get(topic)
            .and_then(|by_arm| by_arm.get(arm))
            .map_or(0, VecDeque::len)
    }

    /// Arms of `topic` that still owe groups.
    fn open_arms(&self, topic: &str) -> Vec<StrategyId> {
        let target = self.config.groups_per_strategy_per_topic;
        self.config
            .strategy_ids()
            .into_iter()
            .filter(|a| self.opened.get(&(topic.to_string(), a.clone())).copied().unwrap_or(0) < target)
            .collect()
    }

    /// Backpressure: a topic listens for targets only while one of its open
    /// arms has no ready group and can still take users.
    fn wants_targets(&self, topic: &str) -> bool {
        let alloc = &self.allocators[topic];
        self.open_arms(topic)
            .iter()
            .any(|a| self.ready_len(topic, a) == 0 && alloc.remaining(a) > 0)
    }

    fn wanted_topics(&self) -> Vec<Topic> {
        self.config
            .topics
            .iter()
            .filter(|t| self.wants_targets(&t.name))
            .cloned()
            .collect()
    }

    fn quotas_met(&self) -> bool {
        self.config.topics.iter().all(|t| self.open_arms(&t.name).is_empty())
    }

    /// Handle one item from either stream.
    pub fn on_inbound(&mut self, item: InboundItem, now: Timestamp) -> Result<InboundEffect, OrchestratorError> {
        match item.kind {
            InboundKind::PublicPost => self.on_public(item, now),
            InboundKind::ReplyToBot => self.on_reply(item, now),
            InboundKind::Retweet | InboundKind::Favorite => self.on_interaction(item, now),
        }
    }

    fn on_public(&mut self, item: InboundItem, now: Timestamp) -> Result<InboundEffect, OrchestratorError> {
        let topics = self.wanted_topics();
        let Some(mut target) = match_target(&item, &topics, &self.bot_handles) else {
            return Ok(InboundEffect::Ignored);
        };
        if admit(&mut target, &mut self.state.registry) == Admission::DuplicateRejected {
            return Ok(InboundEffect::DuplicateRejected);
        }
        let alloc = self
            .allocators
            .get_mut(&target.topic)
            .expect("targets carry configured topics");
        let strategy = alloc.assign(&mut self.rng)?;
        target.assigned_strategy = Some(strategy.clone());
        let group = self.buffer.enqueue_and_form(target, now);
        let group_formed = group.is_some();
        if let Some(g) = group {
            self.push_ready(g);
        }
        Ok(InboundEffect::Targeted { strategy, group_formed })
    }

    fn push_ready(&mut self, group: FormedGroup) {
        self.ready
            .entry(group.topic.clone())
            .or_default()
            .entry(group.strategy.clone())
            .or_default()
            .push_back(group);
    }

    fn lookup(&self, item: &InboundItem) -> Result<(ConversationId, bool), OrchestratorError> {
        let target = item
            .in_reply_to
            .clone()
            .unwrap_or_else(|| item.message_id.clone());
        match item.in_reply_to.as_ref().and_then(|m| self.state.conversation_of(m)) {
            Some((conv, by_bot)) => Ok((conv.clone(), by_bot)),
            None => {
                log::warn!(
                    "{:?} {} from {} targets unknown message {}",
                    item.kind,
                    item.message_id,
                    item.author,
                    target
                );
                Err(OrchestratorError::UnknownConversation(target))
            }
        }
    }

    fn draft_for(&self, conv: &ConversationId, kind: EventKind, actor: &str, now: Timestamp) -> EventDraft {
        let record = &self.state.records[conv];
        EventDraft::new(now, kind, actor, record.strategy.clone(), record.topic.clone(), conv.clone())
    }

    fn on_reply(&mut self, item: InboundItem, now: Timestamp) -> Result<InboundEffect, OrchestratorError> {
        let (conv, _) = self.lookup(&item)?;
        let mut draft = self.draft_for(&conv, EventKind::InboundReply, item.author.as_str(), now);
        draft.msg = Some(item.message_id.clone());
        draft.reply_to = item.in_reply_to.clone();
        draft.text = Some(item.text.clone());
        self.record(draft)?;

        let record = &self.state.records[&conv];
        if !record.is_member(&item.author) || record.state == ConversationState::Closed {
            return Ok(InboundEffect::Logged);
        }
        let spec = self
            .config
            .strategy(&record.strategy)
            .expect("conversation arms come from config")
            .clone();
        let mut view = record.clone();
        if let Some(r) = self.reserved.get(&conv) {
            view.used_followups.extend(r.iter().copied());
        }
        let Some(question) = select_followup(&view, &spec, &mut self.rng) else {
            let closed = self.draft_for(&conv, EventKind::Closed, BOT_ACTOR, now);
            self.record(closed)?;
            return Ok(InboundEffect::Closed);
        };
        self.reserved.entry(conv.clone()).or_default().insert(question);

        let (topic, members) = (view.topic.clone(), view.members.clone());
        match compose_followup(&spec, &topic, &members, question, &conv, self.char_limit()) {
            Ok(messages) => {
                let due = now + draw_delay(&self.config.jitter, &mut self.rng);
                self.schedule.push(
                    due,
                    Turn {
                        conv,
                        topic,
                        strategy: spec.id.clone(),
                        number: question as u32 + 1,
                        messages,
                        next: 0,
                        lead: None,
                        reply_to: Some(item.message_id),
                        round_call: false,
                        partial: false,
                    },
                );
                Ok(InboundEffect::FollowupScheduled { question, due })
            }
            Err(e) => {
                log::warn!("aborting {conv}: {e}");
                self.abort(&conv, now)?;
                Ok(InboundEffect::Logged)
            }
        }
    }

    fn on_interaction(&mut self, item: InboundItem, now: Timestamp) -> Result<InboundEffect, OrchestratorError> {
        let (conv, by_bot) = self.lookup(&item)?;
        let kind = if item.kind == InboundKind::Retweet {
            EventKind::Retweet
        } else {
            EventKind::Favorite
        };
        let mut draft = self.draft_for(&conv, kind, item.author.as_str(), now);
        draft.msg = Some(item.message_id);
        draft.reply_to = item.in_reply_to;
        draft.target_author = Some(if by_bot { TargetAuthor::Bot } else { TargetAuthor::Volunteer });
        self.record(draft)?;
        Ok(InboundEffect::Logged)
    }

    fn abort(&mut self, conv: &ConversationId, now: Timestamp) -> Result<(), OrchestratorError> {
        let mut draft = self.draft_for(conv, EventKind::Aborted, BOT_ACTOR, now);
        draft.mentions = self.state.records[conv].members.clone();
        self.record(draft)
    }

    /// Start the next round if none is in flight and some topic, taken in
    /// rotation, has a ready group for every open arm.
    fn try_start_round(&mut self, now: Timestamp) -> Result<(), OrchestratorError> {
        if self.rounds.outstanding > 0 {
            return Ok(());
        }
        let n = self.config.topics.len();
        for k in 0..n {
            let idx = (self.rounds.next_topic + k) % n;
            let topic = self.config.topics[idx].name.clone();
            let mut arms = self.open_arms(&topic);
            if arms.is_empty() || arms.iter().any(|a| self.ready_len(&topic, a) == 0) {
                continue;
            }
            let base = match self.rounds.prev_base {
                None => now,
                Some(prev) => now.max(prev + draw_delay(&self.config.jitter, &mut self.rng)),
            };
            arms.shuffle(&mut self.rng);
            let offsets = round_offsets(&self.config.jitter, arms.len(), &mut self.rng);
            for (arm, offset) in arms.iter().zip(offsets) {
                let group = self
                    .ready
                    .get_mut(&topic)
                    .and_then(|by_arm| by_arm.get_mut(arm))
                    .and_then(VecDeque::pop_front)
                    .expect("checked ready");
                self.open_conversation(group, base + offset, now)?;
            }
            self.rounds.prev_base = Some(base);
            self.rounds.next_topic = idx + 1;
            return Ok(());
        }
        Ok(())
    }

    fn open_conversation(&mut self, group: FormedGroup, due: Timestamp, now: Timestamp) -> Result<(), OrchestratorError> {
        let conv = ConversationId::new(format!("c{}", self.next_conv));
        self.next_conv += 1;
        *self
            .opened
            .entry((group.topic.clone(), group.strategy.clone()))
            .or_default() += 1;
        let spec = self
            .config
            .strategy(&group.strategy)
            .expect("groups carry configured arms");
        let members: Vec<_> = group.members.iter().map(|t| t.user_id.clone()).collect();
        match compose_call(spec, &group.topic, &members, &conv, self.char_limit()) {
            Ok(messages) => {
                self.rounds.outstanding += 1;
                self.schedule.push(
                    due,
                    Turn {
                        conv,
                        topic: group.topic,
                        strategy: group.strategy,
                        number: 0,
                        messages,
                        next: 0,
                        lead: None,
                        reply_to: None,
                        round_call: true,
                        partial: group.partial,
                    },
                );
            }
            Err(e) => {
                log::warn!("aborting {conv}: {e}");
                let mut draft = EventDraft::new(now, EventKind::Aborted, BOT_ACTOR, group.strategy, group.topic, conv);
                draft.mentions = members;
                self.record(draft)?;
            }
        }
        Ok(())
    }

    /// Post the remaining messages of a due turn.
    fn dispatch_turn<P: Platform + ?Sized>(
        &mut self,
        platform: &mut P,
        mut turn: Turn,
        now: Timestamp,
    ) -> Result<(), OrchestratorError> {
        while turn.next < turn.messages.len() {
            let message = &turn.messages[turn.next];
            let key = IdempotencyKey {
                conversation: turn.conv.clone(),
                kind: message.kind,
                turn: turn.number,
            };
            match platform.post(message, &key, now) {
                Ok(id) => {
                    let kind = match message.kind {
                        MessageKind::Call => EventKind::OutboundCall,
                        MessageKind::Quote => EventKind::OutboundQuote,
                        MessageKind::Followup => EventKind::OutboundFollowup,
                    };
                    let mut draft = EventDraft::new(
                        now,
                        kind,
                        BOT_ACTOR,
                        turn.strategy.clone(),
                        turn.topic.clone(),
                        turn.conv.clone(),
                    );
                    draft.msg = Some(id.clone());
                    draft.text = Some(message.rendered());
                    draft.question = message.question;
                    draft.reply_to = match message.kind {
                        MessageKind::Call => None,
                        MessageKind::Quote => turn.lead.clone(),
                        MessageKind::Followup => turn.reply_to.clone(),
                    };
                    if message.kind == MessageKind::Call {
                        draft.mentions = message.mentions.clone();
                        draft.partial = turn.partial;
                    }
                    if let Some(q) = message.question {
                        if let Some(r) = self.reserved.get_mut(&turn.conv) {
                            r.remove(&q);
                        }
                    }
                    self.record(draft)?;
                    if turn.next == 0 {
                        turn.lead = Some(id);
                    }
                    turn.next += 1;
                }
                Err(PlatformError::RateLimited { retry_after_ms }) => {
                    log::debug!("rate limited; {} retries in {retry_after_ms} ms", turn.conv);
                    self.schedule.push(now + retry_after_ms.max(1), turn);
                    return Ok(());
                }
                Err(e) => {
                    log::warn!("aborting {}: {e}", turn.conv);
                    if self.state.records.contains_key(&turn.conv) {
                        self.abort(&turn.conv, now)?;
                    } else {
                        let mut draft = EventDraft::new(
                            now,
                            EventKind::Aborted,
                            BOT_ACTOR,
                            turn.strategy.clone(),
                            turn.topic.clone(),
                            turn.conv.clone(),
                        );
                        draft.mentions = turn.messages[0].mentions.clone();
                        self.record(draft)?;
                    }
                    break;
                }
            }
        }
        if turn.round_call {
            self.rounds.outstanding -= 1;
            if self.rounds.outstanding == 0 {
                self.log.sync_block()?;
            }
        }
        Ok(())
    }

    fn flush_stale(&mut self, now: Timestamp) {
        let size = self.config.group_size as u64;
        for group in self.buffer.take_stale(now, self.timeout_ms()) {
            let alloc = self
                .allocators
                .get_mut(&group.topic)
                .expect("groups carry configured topics");
            let n = group.members.len() as u64;
            match self.config.partial_groups.policy {
                PartialPolicy::DispatchPartial => {
                    log::info!("dispatching partial {} group of {n} for {}", group.strategy, group.topic);
                    alloc.forfeit(&group.strategy, size - n);
                    self.push_ready(group);
                }
                PartialPolicy::Discard => {
                    log::info!("discarding stale {} group of {n} for {}", group.strategy, group.topic);
                    alloc.release(&group.strategy, n);
                }
            }
        }
    }

    fn handle_stream_result(
        &mut self,
        platform: &mut (impl Platform + ?Sized),
        result: Result<Option<InboundItem>, PlatformError>,
        now: Timestamp,
    ) -> Result<(), OrchestratorError> {
        match result {
            Ok(Some(item)) => match self.on_inbound(item, now) {
                Ok(_) | Err(OrchestratorError::UnknownConversation(_)) => Ok(()),
                Err(e) => Err(e),
            },
            Ok(None) => Ok(()),
            Err(PlatformError::StreamInterrupted { stream, last_seq }) => {
                log::info!("{stream:?} stream interrupted after {last_seq}; resuming");
                platform.resume(stream, last_seq)?;
                Ok(())
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Drive the campaign until it completes, hits the deadline, runs out
    /// of things to wait for, or has logged `max_events` events.
    pub fn run<P: Platform + ?Sized>(
        &mut self,
        platform: &mut P,
        max_events: Option<usize>,
    ) -> Result<StopReason, OrchestratorError> {
        let start = platform.now();
        let deadline = start + (self.config.deadline_hours * MS_PER_HOUR as f64) as i64;
        let timeout_ms = self.timeout_ms();
        let mut now = start;
        let stop = loop {
            if max_events.is_some_and(|max| self.log.len() >= max) {
                break StopReason::MaxEvents;
            }
            self.try_start_round(now)?;

            let wanted = self.wanted_topics();
            if wanted.is_empty() {
                self.listen_from = None;
            } else if self.listen_from.is_none() {
                self.listen_from = Some(now);
            }

            let due = self.schedule.next_due();
            let notification = platform.peek_notification();
            let public = self.listen_from.and_then(|after| platform.peek_public(after));
            let stale = self.buffer.next_timeout(timeout_ms);

            if due.is_none() && notification.is_none() && self.rounds.outstanding == 0 && self.quotas_met() {
                break StopReason::Completed;
            }
            let Some(t) = [due, notification, public, stale].into_iter().flatten().min() else {
                break StopReason::Idle;
            };
            if t > deadline {
                break StopReason::Deadline;
            }
            now = now.max(t);

            if due.is_some_and(|d| d <= now) {
                let (_, turn) = self.schedule.pop_due(now).expect("due");
                self.dispatch_turn(platform, turn, now)?;
            } else if notification.is_some_and(|n| n <= now) {
                let result = platform.stream_notifications(now);
                self.handle_stream_result(platform, result, now)?;
            } else if public.is_some_and(|p| p <= now) {
                let keywords: Vec<String> = wanted.iter().flat_map(|t| t.keywords.clone()).collect();
                let after = self.listen_from.expect("listening");
                let result = platform.stream_public(&keywords, after, now);
                self.handle_stream_result(platform, result, now)?;
            } else {
                self.flush_stale(now);
            }
        };
        self.log.sync_block()?;
        log::info!("campaign stopped: {stop:?} after {} events", self.log.len());
        Ok(stop)
    }
}

/// Knobs for [`run_campaign`].
#[derive(Default)]
pub struct RunOptions {
    /// Stop after this many events (the log stays valid).
    pub max_events: Option<usize>,
    /// Write events here as they are produced.
    pub sink: Option<LogSink>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub events: Vec<CampaignEvent>,
    pub stop: StopReason,
    pub state: CampaignState,
}

pub fn run_campaign<P: Platform + ?Sized>(
    config: &CampaignConfig,
    platform: &mut P,
    options: RunOptions,
) -> Result<RunOutcome, OrchestratorError> {
    let log = match options.sink {
        Some(sink) => EventLog::with_sink(sink),
        None => EventLog::in_memory(),
    };
    let mut orchestrator = Orchestrator::new(config.clone(), log)?;
    let stop = orchestrator.run(platform, options.max_events)?;
    let (state, log) = orchestrator.into_parts();
    Ok(RunOutcome {
        events: log.into_events()?,
        stop,
        state,
    })
}

/// Rebuild a recorded campaign: the log is validated against the config,
/// folded into state, and passed through unchanged. Nothing is posted.
pub fn replay_campaign(
    config: &CampaignConfig,
    platform: &ReplayPlatform,
    sink: Option<LogSink>,
) -> Result<RunOutcome, OrchestratorError> {
    let violations = validate_config(config);
    if !violations.is_empty() {
        return Err(OrchestratorError::InvalidConfig(violations));
    }
    let mut log = match sink {
        Some(sink) => EventLog::with_sink(sink),
        None => EventLog::in_memory(),
    };
    let mut foreign = Vec::new();
    for e in platform.events() {
        if config.strategy(&e.strategy).is_none() || config.topic(&e.topic).is_none() {
            foreign.push(Violation {
                field: format!("log seq {}", e.seq),
                rule: format!("arm {} / topic {} not in config", e.strategy, e.topic),
            });
        }
    }
    if !foreign.is_empty() {
        return Err(OrchestratorError::InvalidConfig(foreign));
    }
    let mut state = CampaignState::new();
    for e in platform.events() {
        let mut draft = EventDraft::new(e.ts, e.kind, e.actor.clone(), e.strategy.clone(), e.topic.clone(), e.conv.clone());
        draft.msg = e.msg.clone();
        draft.reply_to = e.reply_to.clone();
        draft.target_author = e.target_author;
        draft.text = e.text.clone();
        draft.mentions = e.mentions.clone();
        draft.question = e.question;
        draft.partial = e.partial;
        state.apply(log.append(draft)?);
    }
    let target = config.groups_per_strategy_per_topic;
    let complete = config.topics.iter().all(|t| {
        config
            .strategy_ids()
            .iter()
            .all(|a| state.conversations_opened(&t.name, a) >= target)
    });
    Ok(RunOutcome {
        events: log.into_events()?,
        stop: if complete { StopReason::Completed } else { StopReason::Idle },
        state,
    })
}
