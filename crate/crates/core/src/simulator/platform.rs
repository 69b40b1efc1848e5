use std::collections::{BTreeMap, HashMap, VecDeque};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{
    CampaignConfig, ConversationId, MessageId, PlatformCapabilities, Timestamp, Topic, UserId,
};
use crate::platform::{
    find_keyword, IdempotencyKey, InboundItem, InboundKind, Platform, PlatformError, StreamKind,
};
use crate::strategy::{MessageKind, OutboundMessage};

use super::{
    react, react_to_reply, Clock, IdSource, Population, PublicPostGenerator, ReceivedMessage,
    SimulationConfig, SimulationError,
};

/// Delivered items kept for resuming a stream.
const HISTORY: usize = 4096;

#[derive(Debug, Default)]
struct Stream {
    seq: u64,
    history: VecDeque<InboundItem>,
    redeliver: VecDeque<InboundItem>,
}

impl Stream {
    fn deliver(&mut self, mut item: InboundItem) -> InboundItem {
        self.seq += 1;
        item.seq = self.seq;
        if self.history.len() == HISTORY {
            self.history.pop_front();
        }
        self.history.push_back(item.clone());
        item
    }

    fn resume(&mut self, last_seq: u64) {
        self.redeliver = self.history.iter().filter(|i| i.seq > last_seq).cloned().collect();
    }
}

/// [`Platform`] backed by the agent simulator.
pub struct SimulatedPlatform {
    config: SimulationConfig,
    capabilities: PlatformCapabilities,
    bot_handle: String,
    population: Population,
    generator: PublicPostGenerator,
    rng: ChaCha8Rng,
    ids: IdSource,

    next_generated: Option<InboundItem>,
    public_cursor: Timestamp,
    injected: BTreeMap<(Timestamp, u64), InboundItem>,
    public: Stream,

    pending: BTreeMap<(Timestamp, u64), InboundItem>,
    queued: u64,
    notifications: Stream,

    posted: HashMap<IdempotencyKey, MessageId>,
    members: HashMap<ConversationId, Vec<UserId>>,
    new_posts: u64,
    recent_posts: VecDeque<Timestamp>,
    stream_reads: u64,
    clock: Timestamp,
}

impl SimulatedPlatform {
    pub fn new(
        config: &SimulationConfig,
        topics: &[Topic],
        capabilities: PlatformCapabilities,
        bot_handle: &str,
        campaign_seed: u64,
    ) -> Result<Self, SimulationError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.effective_seed(campaign_seed));
        let population = Population::new(config, &mut rng);
        let generator = PublicPostGenerator::new(&population, topics);
        Ok(SimulatedPlatform {
            config: config.clone(),
            capabilities,
            bot_handle: bot_handle.to_string(),
            population,
            generator,
            rng,
            ids: IdSource::default(),
            next_generated: None,
            public_cursor: config.start_ts,
            injected: BTreeMap::new(),
            public: Stream::default(),
            pending: BTreeMap::new(),
            queued: 0,
            notifications: Stream::default(),
            posted: HashMap::new(),
            members: HashMap::new(),
            new_posts: 0,
            recent_posts: VecDeque::new(),
            stream_reads: 0,
            clock: config.start_ts,
        })
    }

    /// Build from the campaign's simulation section, which must already
    /// have its profiles resolved.
    pub fn from_campaign(config: &CampaignConfig) -> Result<Self, SimulationError> {
        let sim = config.platform.simulation.as_ref().ok_or(SimulationError::Missing)?;
        Self::new(
            sim,
            &config.topics,
            config.platform.capabilities,
            &config.bot_identity.handle,
            config.random_seed,
        )
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn pending_notifications(&self) -> usize {
        self.pending.len()
    }

    fn queue(&mut self, item: InboundItem) {
        self.queued += 1;
        self.pending.insert((item.timestamp, self.queued), item);
    }

    fn inject_public(&mut self, item: InboundItem) {
        self.queued += 1;
        self.injected.insert((item.timestamp, self.queued), item);
    }

    fn pace(&mut self, ts: Timestamp) {
        if ts <= self.clock {
            return;
        }
        if let Clock::AcceleratedReal { factor } = self.config.clock {
            let real_ms = (ts - self.clock) as f64 / factor;
            std::thread::sleep(Duration::from_secs_f64(real_ms / 1000.0));
        }
        self.clock = ts;
    }

    /// Count a stream read; every n-th one fails when interruptions are
    /// configured.
    fn interrupted(&mut self, stream: StreamKind) -> Result<(), PlatformError> {
        self.stream_reads += 1;
        match self.config.faults.interrupt_every {
            Some(n) if self.stream_reads.is_multiple_of(n) => {
                let last_seq = match stream {
                    StreamKind::Public => self.public.seq,
                    StreamKind::Notifications => self.notifications.seq,
                };
                Err(PlatformError::StreamInterrupted { stream, last_seq })
            }
            _ => Ok(()),
        }
    }

    fn refill_public(&mut self, after: Timestamp) {
        if self.next_generated.as_ref().is_some_and(|p| p.timestamp >= after) {
            return;
        }
        let from = after.max(self.public_cursor);
        self.next_generated = self
            .generator
            .next_after(&self.population, from, &mut self.rng, &mut self.ids);
    }

    fn deliver_reactions(&mut self, message: &OutboundMessage, id: &MessageId, now: Timestamp) {
        let received = ReceivedMessage {
            id: id.clone(),
            strategy: message.strategy.clone(),
            topic: message.topic.clone(),
            timestamp: now,
        };
        let members = self
            .members
            .get(&message.conversation_id)
            .cloned()
            .unwrap_or_else(|| message.mentions.clone());
        let favorites = self.capabilities.supports_favorites;
        for user in &message.mentions {
            let Some(i) = self.population.position(user) else {
                continue;
            };
            let profile = self.population.profiles[self.population.agents[i].profile].clone();
            let items = react(
                &mut self.population.agents[i],
                &profile,
                &received,
                favorites,
                &mut self.rng,
                &mut self.ids,
            );
            for item in items {
                match item.kind {
                    InboundKind::ReplyToBot => {
                        for other in members.iter().filter(|m| *m != user) {
                            let Some(j) = self.population.position(other) else {
                                continue;
                            };
                            let agent = &self.population.agents[j];
                            let p = &self.population.profiles[agent.profile];
                            if let Some(x) = react_to_reply(
                                agent,
                                p,
                                &message.strategy,
                                &item,
                                favorites,
                                &mut self.rng,
                                &mut self.ids,
                            ) {
                                self.queue(x);
                            }
                        }
                    }
                    InboundKind::Retweet => {
                        let rt = InboundItem {
                            seq: 0,
                            kind: InboundKind::PublicPost,
                            author: user.clone(),
                            message_id: self.ids.post(),
                            in_reply_to: None,
                            text: format!("RT @{}: {}", self.bot_handle, message.rendered()),
                            timestamp: item.timestamp,
                        };
                        self.inject_public(rt);
                    }
                    _ => {}
                }
                self.queue(item);
            }
        }
    }
}

impl Platform for SimulatedPlatform {
    fn capabilities(&self) -> PlatformCapabilities {
        self.capabilities
    }

    fn now(&self) -> Timestamp {
        self.config.start_ts
    }

    fn post(
        &mut self,
        message: &OutboundMessage,
        key: &IdempotencyKey,
        now: Timestamp,
    ) -> Result<MessageId, PlatformError> {
        if let Some(id) = self.posted.get(key) {
            return Ok(id.clone());
        }
        let text = message.rendered();
        if text.chars().count() > self.capabilities.char_limit {
            return Err(PlatformError::PlatformRejected {
                reason: format!("{} characters over the limit", text.chars().count()),
            });
        }
        if message.mentions.len() > self.capabilities.max_mentions_per_message {
            return Err(PlatformError::PlatformRejected {
                reason: "too many mentions".into(),
            });
        }
        if let Some(limit) = self.config.faults.rate_limit {
            let window = (limit.window_secs * 1000.0) as i64;
            while self.recent_posts.front().is_some_and(|&t| t + window <= now) {
                self.recent_posts.pop_front();
            }
            if self.recent_posts.len() >= limit.max_posts {
                let oldest = *self.recent_posts.front().expect("non-empty");
                return Err(PlatformError::RateLimited {
                    retry_after_ms: (oldest + window - now).max(1),
                });
            }
        }
        self.new_posts += 1;
        if self
            .config
            .faults
            .reject_every
            .is_some_and(|n| n > 0 && self.new_posts.is_multiple_of(n))
        {
            return Err(PlatformError::PlatformRejected {
                reason: "injected rejection".into(),
            });
        }

        self.pace(now);
        let id = self.ids.bot_message();
        self.posted.insert(key.clone(), id.clone());
        self.recent_posts.push_back(now);
        if message.kind == MessageKind::Call {
            self.members
                .insert(message.conversation_id.clone(), message.mentions.clone());
        }
        self.inject_public(InboundItem {
            seq: 0,
            kind: InboundKind::PublicPost,
            author: UserId::new(self.bot_handle.clone()),
            message_id: id.clone(),
            in_reply_to: None,
            text,
            timestamp: now,
        });
        self.deliver_reactions(message, &id, now);
        Ok(id)
    }

    fn peek_public(&mut self, after: Timestamp) -> Option<Timestamp> {
        if let Some(item) = self.public.redeliver.front() {
            return Some(item.timestamp);
        }
        while self
            .injected
            .first_key_value()
            .is_some_and(|((t, _), _)| *t < after)
        {
            self.injected.pop_first();
        }
        self.refill_public(after);
        let injected = self.injected.keys().next().map(|(t, _)| *t);
        let generated = self.next_generated.as_ref().map(|p| p.timestamp);
        [injected, generated].into_iter().flatten().min()
    }

    fn stream_public(
        &mut self,
        keywords: &[String],
        after: Timestamp,
        until: Timestamp,
    ) -> Result<Option<InboundItem>, PlatformError> {
        self.interrupted(StreamKind::Public)?;
        let matches = |item: &InboundItem| find_keyword(&item.text, keywords).is_some();
        if let Some(item) = self.public.redeliver.front() {
            if item.timestamp > until {
                return Ok(None);
            }
            let item = self.public.redeliver.pop_front().expect("front");
            return Ok(matches(&item).then_some(item));
        }
        let Some(t) = self.peek_public(after) else {
            return Ok(None);
        };
        if t > until {
            return Ok(None);
        }
        let take_injected = self
            .injected
            .first_key_value()
            .is_some_and(|((ti, _), _)| *ti == t);
        let item = if take_injected {
            self.injected.pop_first().expect("present").1
        } else {
            let item = self.next_generated.take().expect("peeked");
            self.public_cursor = item.timestamp;
            item
        };
        self.pace(item.timestamp);
        let item = self.public.deliver(item);
        Ok(matches(&item).then_some(item))
    }

    fn peek_notification(&mut self) -> Option<Timestamp> {
        self.notifications
            .redeliver
            .front()
            .map(|i| i.timestamp)
            .or_else(|| self.pending.keys().next().map(|(t, _)| *t))
    }

    fn stream_notifications(
        &mut self,
        until: Timestamp,
    ) -> Result<Option<InboundItem>, PlatformError> {
        self.interrupted(StreamKind::Notifications)?;
        if let Some(item) = self.notifications.redeliver.front() {
            if item.timestamp > until {
                return Ok(None);
            }
            return Ok(self.notifications.redeliver.pop_front());
        }
        match self.pending.first_key_value() {
            Some(((t, _), _)) if *t <= until => {
                let (_, item) = self.pending.pop_first().expect("present");
                self.pace(item.timestamp);
                Ok(Some(self.notifications.deliver(item)))
            }
            _ => Ok(None),
        }
    }

    fn resume(&mut self, stream: StreamKind, last_seq: u64) -> Result<(), PlatformError> {
        match stream {
            StreamKind::Public => self.public.resume(last_seq),
            StreamKind::Notifications => self.notifications.resume(last_seq),
        }
        Ok(())
    }
}
