//! Turning public posts into eligible targets under the one-touch rule.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{
    CampaignEvent, ContactState, ConversationId, EventKind, TargetUser, Topic, UserId,
};
use crate::platform::{find_keyword, fold_text, InboundItem, InboundKind};

/// Contact state of every user the campaign has seen.
///
/// Only states from `Contacted` on are durable: they are recorded in the
/// event log and in snapshots. `Queued` users that never got a call are
/// forgotten across restarts, which is safe because they were never
/// contacted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactRegistry {
    states: BTreeMap<UserId, ContactState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admitted,
    DuplicateRejected,
}

impl ContactRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self, user: &UserId) -> ContactState {
        self.states.get(user).copied().unwrap_or(ContactState::Fresh)
    }

    /// Move `user` forward to `to`. Backward moves are refused and leave
    /// the state unchanged.
    pub fn advance(&mut self, user: &UserId, to: ContactState) -> bool {
        let current = self.state(user);
        if !current.can_advance_to(to) {
            return false;
        }
        if to != ContactState::Fresh {
            self.states.insert(user.clone(), to);
        }
        true
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&UserId, ContactState)> {
        self.states.iter().map(|(u, s)| (u, *s))
    }

    /// The part of the registry that survives a restart.
    pub fn durable(&self) -> ContactRegistry {
        ContactRegistry {
            states: self
                .states
                .iter()
                .filter(|(_, s)| s.is_contacted())
                .map(|(u, s)| (u.clone(), *s))
                .collect(),
        }
    }

    /// Rebuild from the event log.
    pub fn from_events(events: &[CampaignEvent]) -> ContactRegistry {
        let mut registry = ContactRegistry::new();
        let mut members: BTreeMap<&ConversationId, &[UserId]> = BTreeMap::new();
        for e in events {
            registry.apply(e, &mut members);
        }
        registry
    }

    fn apply<'e>(
        &mut self,
        e: &'e CampaignEvent,
        members: &mut BTreeMap<&'e ConversationId, &'e [UserId]>,
    ) {
        match e.kind {
            EventKind::OutboundCall | EventKind::Aborted => {
                if !e.mentions.is_empty() {
                    members.entry(&e.conv).or_insert(&e.mentions);
                }
                for m in &e.mentions {
                    self.advance(m, ContactState::Contacted);
                }
            }
            EventKind::InboundReply => {
                let user = UserId::new(e.actor.clone());
                if members.get(&e.conv).is_some_and(|ms| ms.contains(&user)) {
                    self.advance(&user, ContactState::Replied);
                }
            }
            EventKind::Closed => {
                if let Some(ms) = members.get(&e.conv) {
                    for m in ms.iter() {
                        self.advance(m, ContactState::Exhausted);
                    }
                }
            }
            _ => {}
        }
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(&self.durable())?;
        fs::write(path, json)
    }

    pub fn load(path: &Path) -> std::io::Result<ContactRegistry> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

/// Match a public post against the campaign topics.
///
/// Topics are tried in order, so a post mentioning two topics counts for
/// the first. Posts by the campaign's own accounts and retweets of them are
/// never targets.
pub fn match_target(
    item: &InboundItem,
    topics: &[Topic],
    bot_handles: &BTreeSet<String>,
) -> Option<TargetUser> {
    if item.kind != InboundKind::PublicPost {
        return None;
    }
    if bot_handles.contains(&item.author.as_str().to_lowercase()) {
        return None;
    }
    let folded = fold_text(&item.text);
    if bot_handles
        .iter()
        .any(|h| folded.starts_with(&format!("rt @{h}")))
    {
        return None;
    }
    topics.iter().find_map(|topic| {
        find_keyword(&item.text, &topic.keywords).map(|kw| TargetUser {
            user_id: item.author.clone(),
            matched_keyword: kw.to_string(),
            matched_message_id: item.message_id.clone(),
            topic: topic.name.clone(),
            assigned_strategy: None,
            contact_state: ContactState::Fresh,
        })
    })
}

/// Admit a target iff the user has never been seen. Admitted users become
/// `Queued`.
pub fn admit(target: &mut TargetUser, registry: &mut ContactRegistry) -> Admission {
    if registry.state(&target.user_id) != ContactState::Fresh {
        return Admission::DuplicateRejected;
    }
    registry.advance(&target.user_id, ContactState::Queued);
    target.contact_state = ContactState::Queued;
    Admission::Admitted
}
