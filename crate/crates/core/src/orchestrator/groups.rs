use std::collections::BTreeMap;

use crate::model::{StrategyId, TargetUser, Timestamp};

/// Users bound for one conversation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormedGroup {
    pub topic: String,
    pub strategy: StrategyId,
    pub members: Vec<TargetUser>,
    /// Flushed on timeout with fewer than `group_size` members.
    pub partial: bool,
}

#[derive(Debug, Clone)]
struct Pending {
    members: Vec<TargetUser>,
    since: Timestamp,
}

/// Per (topic, arm) queues of assigned users waiting for a full group.
#[derive(Debug, Clone)]
pub struct GroupBuffer {
    group_size: usize,
    pending: BTreeMap<(String, StrategyId), Pending>,
}

impl GroupBuffer {
    pub fn new(group_size: usize) -> Self {
        GroupBuffer {
            group_size,
            pending: BTreeMap::new(),
        }
    }

    /// Queue `target` under its topic and assigned arm; emits the group
    /// once `group_size` users are waiting.
    pub fn enqueue_and_form(&mut self, target: TargetUser, now: Timestamp) -> Option<FormedGroup> {
        let strategy = target
            .assigned_strategy
            .clone()
            .expect("target must have an assigned strategy");
        let key = (target.topic.clone(), strategy);
        let slot = self.pending.entry(key.clone()).or_insert_with(|| Pending {
            members: Vec::new(),
            since: now,
        });
        slot.members.push(target);
        if slot.members.len() < self.group_size {
            return None;
        }
        let Pending { members, .. } = self.pending.remove(&key).expect("present");
        Some(FormedGroup {
            topic: key.0,
            strategy: key.1,
            members,
            partial: false,
        })
    }

    pub fn len(&self, topic: &str, strategy: &StrategyId) -> usize {
        self.pending
            .get(&(topic.to_string(), strategy.clone()))
            .map_or(0, |p| p.members.len())
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Earliest moment a waiting buffer goes stale.
    pub fn next_timeout(&self, timeout_ms: i64) -> Option<Timestamp> {
        self.pending.values().map(|p| p.since + timeout_ms).min()
    }

    /// Remove every buffer that has waited at least `timeout_ms`, returned
    /// as partial groups in key order.
    pub fn take_stale(&mut self, now: Timestamp, timeout_ms: i64) -> Vec<FormedGroup> {
        let stale: Vec<_> = self
            .pending
            .iter()
            .filter(|(_, p)| p.since + timeout_ms <= now)
            .map(|(k, _)| k.clone())
            .collect();
        stale
            .into_iter()
            .map(|key| {
                let p = self.pending.remove(&key).expect("present");
                FormedGroup {
                    topic: key.0,
                    strategy: key.1,
                    members: p.members,
                    partial: true,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ContactState, MessageId, UserId};

    fn target(user: &str) -> TargetUser {
        TargetUser {
            user_id: UserId::new(user),
            matched_keyword: "corrupcion".into(),
            matched_message_id: MessageId::new(format!("p-{user}")),
            topic: "corruption".into(),
            assigned_strategy: Some(StrategyId::direct()),
            contact_state: ContactState::Queued,
        }
    }

    #[test]
    fn third_member_completes_group() {
        let mut buf = GroupBuffer::new(3);
        assert!(buf.enqueue_and_form(target("a"), 0).is_none());
        assert!(buf.enqueue_and_form(target("b"), 1).is_none());
        assert_eq!(buf.len("corruption", &StrategyId::direct()), 2);
        let g = buf.enqueue_and_form(target("c"), 2).unwrap();
        assert_eq!(g.members.len(), 3);
        assert!(!g.partial);
        assert!(buf.is_empty());
    }

    #[test]
    fn arms_fill_separately() {
        let mut buf = GroupBuffer::new(2);
        let mut other = target("b");
        other.assigned_strategy = Some(StrategyId::gain());
        assert!(buf.enqueue_and_form(target("a"), 0).is_none());
        assert!(buf.enqueue_and_form(other, 0).is_none());
        assert_eq!(buf.len("corruption", &StrategyId::gain()), 1);
    }

    #[test]
    fn timeout_flush_is_partial() {
        let mut buf = GroupBuffer::new(3);
        buf.enqueue_and_form(target("a"), 1_000);
        buf.enqueue_and_form(target("b"), 5_000);
        assert_eq!(buf.next_timeout(10_000), Some(11_000));
        assert!(buf.take_stale(10_999, 10_000).is_empty());
        let flushed = buf.take_stale(11_000, 10_000);
        assert_eq!(flushed.len(), 1);
        assert_eq!(flushed[0].members.len(), 2);
        assert!(flushed[0].partial);
        assert!(buf.is_empty());
    }
}
