//! Boundary to a social platform.
//!
//! The orchestrator only talks to a [`Platform`]. Two adapters exist:
//! [`crate::simulator::SimulatedPlatform`] and [`ReplayPlatform`]. A live
//! network adapter would implement the same trait.

mod replay;

pub use replay::ReplayPlatform;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::{char::is_combining_mark, UnicodeNormalization};

use crate::model::{ConversationId, MessageId, PlatformCapabilities, Timestamp, UserId};
use crate::strategy::{MessageKind, OutboundMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InboundKind {
    PublicPost,
    ReplyToBot,
    Retweet,
    Favorite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InboundItem {
    /// Position in its stream; strictly increasing per stream.
    pub seq: u64,
    pub kind: InboundKind,
    pub author: UserId,
    pub message_id: MessageId,
    /// Replied-to message for replies, target message for retweets and
    /// favorites.
    pub in_reply_to: Option<MessageId>,
    pub text: String,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamKind {
    Public,
    Notifications,
}

/// At-most-once key for a post: one message kind per conversation turn.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IdempotencyKey {
    pub conversation: ConversationId,
    pub kind: MessageKind,
    pub turn: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlatformError {
    #[error("rate limited, retry after {retry_after_ms} ms")]
    RateLimited { retry_after_ms: i64 },
    #[error("post rejected: {reason}")]
    PlatformRejected { reason: String },
    #[error("{stream:?} stream interrupted after seq {last_seq}")]
    StreamInterrupted { stream: StreamKind, last_seq: u64 },
}

pub trait Platform {
    fn capabilities(&self) -> PlatformCapabilities;

    /// Current platform time; the campaign clock starts here.
    fn now(&self) -> Timestamp;

    /// Publish a message. Repeating a key returns the original id without
    /// posting again.
    fn post(
        &mut self,
        message: &OutboundMessage,
        key: &IdempotencyKey,
        now: Timestamp,
    ) -> Result<MessageId, PlatformError>;

    /// Time of the next public post at or after `after`, if any is pending.
    /// Posts published before `after` were not being listened to and are
    /// dropped.
    fn peek_public(&mut self, after: Timestamp) -> Option<Timestamp>;

    /// Next public post in `[after, until]` whose text contains one of the
    /// keywords (case- and accent-folded substring match).
    fn stream_public(
        &mut self,
        keywords: &[String],
        after: Timestamp,
        until: Timestamp,
    ) -> Result<Option<InboundItem>, PlatformError>;

    fn peek_notification(&mut self) -> Option<Timestamp>;

    /// Next reply, retweet or favorite with timestamp at or before `until`.
    fn stream_notifications(&mut self, until: Timestamp)
        -> Result<Option<InboundItem>, PlatformError>;

    /// Continue `stream` with the item following `last_seq`.
    fn resume(&mut self, stream: StreamKind, last_seq: u64) -> Result<(), PlatformError>;
}

/// Lowercase and strip diacritics: "Corrupción" folds to "corrupcion".
pub fn fold_text(text: &str) -> String {
    text.nfd()
        .filter(|c| !is_combining_mark(*c))
        .collect::<String>()
        .to_lowercase()
}

/// First keyword (in list order) that occurs in `text` after folding.
pub fn find_keyword<'k>(text: &str, keywords: &'k [String]) -> Option<&'k str> {
    let folded = fold_text(text);
    keywords
        .iter()
        .find(|k| folded.contains(&fold_text(k)))
        .map(String::as_str)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accent_and_case_folding() {
        let kws = vec!["corrupcion".to_string(), "impunidad".to_string()];
        assert_eq!(find_keyword("La Corrupción nos afecta", &kws), Some("corrupcion"));
        assert_eq!(find_keyword("CORRUPCIÓN", &kws), Some("corrupcion"));
        assert_eq!(find_keyword("#impunidad total", &kws), Some("impunidad"));
        assert_eq!(find_keyword("nada que ver", &kws), None);
        // Accented keyword still matches unaccented text.
        let accented = vec!["corrupción".to_string()];
        assert_eq!(find_keyword("corrupcion", &accented), Some("corrupción"));
    }

    #[test]
    fn substring_not_token() {
        let kws = vec!["corrupcion".to_string()];
        assert!(find_keyword("#anticorrupcion", &kws).is_some());
    }
}
