use crate::eventlog::validate_log;
use crate::model::{CampaignEvent, EventKind, MessageId, PlatformCapabilities, Timestamp, UserId};
use crate::strategy::OutboundMessage;

use super::{IdempotencyKey, InboundItem, InboundKind, Platform, PlatformError, StreamKind};

/// Read-only adapter over a recorded event log.
///
/// Inbound events come back out of the notification stream in log order.
/// Public posts are not part of the log, so the public stream is empty, and
/// every post is rejected.
pub struct ReplayPlatform {
    events: Vec<CampaignEvent>,
    notifications: Vec<InboundItem>,
    cursor: usize,
    capabilities: PlatformCapabilities,
}

impl ReplayPlatform {
    pub fn new(events: Vec<CampaignEvent>) -> Result<Self, crate::eventlog::LogError> {
        validate_log(&events)?;
        let notifications = events
            .iter()
            .filter_map(|e| {
                let kind = match e.kind {
                    EventKind::InboundReply => InboundKind::ReplyToBot,
                    EventKind::Retweet => InboundKind::Retweet,
                    EventKind::Favorite => InboundKind::Favorite,
                    _ => return None,
                };
                Some((kind, e))
            })
            .enumerate()
            .map(|(i, (kind, e))| InboundItem {
                seq: i as u64 + 1,
                kind,
                author: UserId::new(e.actor.clone()),
                message_id: e.msg.clone().unwrap_or_else(|| MessageId::new(format!("seq{}", e.seq))),
                in_reply_to: e.reply_to.clone(),
                text: e.text.clone().unwrap_or_default(),
                timestamp: e.ts,
            })
            .collect();
        Ok(ReplayPlatform {
            events,
            notifications,
            cursor: 0,
            capabilities: PlatformCapabilities::default(),
        })
    }

    /// The recorded sequence, unchanged.
    pub fn events(&self) -> &[CampaignEvent] {
        &self.events
    }
}

impl Platform for ReplayPlatform {
    fn capabilities(&self) -> PlatformCapabilities {
        self.capabilities
    }

    fn now(&self) -> Timestamp {
        self.events.first().map(|e| e.ts).unwrap_or(0)
    }

    fn post(
        &mut self,
        _message: &OutboundMessage,
        _key: &IdempotencyKey,
        _now: Timestamp,
    ) -> Result<MessageId, PlatformError> {
        Err(PlatformError::PlatformRejected {
            reason: "replay platform is read-only".into(),
        })
    }

    fn peek_public(&mut self, _after: Timestamp) -> Option<Timestamp> {
        None
    }

    fn stream_public(
        &mut self,
        _keywords: &[String],
        _after: Timestamp,
        _until: Timestamp,
    ) -> Result<Option<InboundItem>, PlatformError> {
        Ok(None)
    }

    fn peek_notification(&mut self) -> Option<Timestamp> {
        self.notifications.get(self.cursor).map(|i| i.timestamp)
    }

    fn stream_notifications(
        &mut self,
        until: Timestamp,
    ) -> Result<Option<InboundItem>, PlatformError> {
        match self.notifications.get(self.cursor) {
            Some(item) if item.timestamp <= until => {
                self.cursor += 1;
                Ok(Some(item.clone()))
            }
            _ => Ok(None),
        }
    }

    fn resume(&mut self, stream: StreamKind, last_seq: u64) -> Result<(), PlatformError> {
        if stream == StreamKind::Notifications {
            self.cursor = (last_seq as usize).min(self.notifications.len());
        }
        Ok(())
    }
}
