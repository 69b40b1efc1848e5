use std::collections::{BTreeMap, HashMap};

use crate::model::{
    CampaignEvent, ContactState, ConversationId, ConversationRecord, ConversationState, EventKind,
    MessageId, Reply, StrategyId, UserId,
};
use crate::targeting::ContactRegistry;

/// Everything the campaign knows, as a fold over its event log.
///
/// The live loop and a replay both go through [`CampaignState::apply`], so a
/// restored state is the state the run had when it wrote those events.
#[derive(Debug, Clone, Default)]
pub struct CampaignState {
    pub registry: ContactRegistry,
    pub records: BTreeMap<ConversationId, ConversationRecord>,
    /// Message id -> (conversation, sent by the bot).
    messages: HashMap<MessageId, (ConversationId, bool)>,
    calls: BTreeMap<(String, StrategyId), u32>,
}

impl CampaignState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_events(events: &[CampaignEvent]) -> Self {
        let mut state = CampaignState::new();
        for e in events {
            state.apply(e);
        }
        state
    }

    pub fn conversation_of(&self, message: &MessageId) -> Option<(&ConversationId, bool)> {
        self.messages.get(message).map(|(c, bot)| (c, *bot))
    }

    /// Conversations opened (called or aborted at the call) per topic and arm.
    pub fn conversations_opened(&self, topic: &str, strategy: &StrategyId) -> u32 {
        self.calls
            .get(&(topic.to_string(), strategy.clone()))
            .copied()
            .unwrap_or(0)
    }

    pub fn apply(&mut self, e: &CampaignEvent) {
        if matches!(e.kind, EventKind::OutboundCall | EventKind::Aborted)
            && !self.records.contains_key(&e.conv)
        {
            self.records.insert(
                e.conv.clone(),
                ConversationRecord::new(e.conv.clone(), e.topic.clone(), e.strategy.clone(), e.mentions.clone()),
            );
            *self.calls.entry((e.topic.clone(), e.strategy.clone())).or_default() += 1;
        }
        let Some(record) = self.records.get_mut(&e.conv) else {
            return;
        };

        match e.kind {
            EventKind::OutboundCall | EventKind::OutboundQuote | EventKind::OutboundFollowup => {
                if let Some(msg) = &e.msg {
                    record.sent_messages.push(msg.clone());
                    self.messages.insert(msg.clone(), (e.conv.clone(), true));
                }
                if e.kind == EventKind::OutboundCall {
                    record.partial = e.partial;
                    if record.state == ConversationState::Pending {
                        record.state = ConversationState::CalledToAction;
                    }
                    for m in &e.mentions {
                        self.registry.advance(m, ContactState::Contacted);
                    }
                }
                if let Some(q) = e.question {
                    record.used_followups.insert(q);
                }
            }
            EventKind::InboundReply => {
                let user = UserId::new(e.actor.clone());
                if let Some(msg) = &e.msg {
                    self.messages.insert(msg.clone(), (e.conv.clone(), false));
                    if record.is_member(&user) {
                        record.replies.push(Reply {
                            user_id: user.clone(),
                            message_id: msg.clone(),
                            timestamp: e.ts,
                        });
                    }
                }
                if record.is_member(&user) {
                    self.registry.advance(&user, ContactState::Replied);
                    if record.state != ConversationState::Closed {
                        record.state = ConversationState::Engaged;
                    }
                }
            }
            EventKind::Retweet | EventKind::Favorite => {}
            EventKind::Aborted => {
                record.aborted = true;
                record.state = ConversationState::Closed;
                for m in &e.mentions {
                    self.registry.advance(m, ContactState::Contacted);
                }
            }
            EventKind::Closed => {
                record.state = ConversationState::Closed;
                for m in &record.members {
                    self.registry.advance(m, ContactState::Exhausted);
                }
            }
        }
    }
}
