use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::eventlog::validate_log;
use crate::model::{
    CampaignEvent, ConversationId, EventKind, Label, MessageId, StrategyId, TargetAuthor, UserId,
    VolunteerLabel,
};

use super::anova::{one_way_anova, AnovaResult};
use super::labels::final_labels;
use super::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnTopic {
    pub on_topic: u64,
    pub labeled: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMetrics {
    pub strategy: String,
    pub calls_to_action: u64,
    pub quotes: u64,
    pub followups: u64,
    /// Calls, quotes and follow-ups: every message the arm sent.
    pub outbound_messages: u64,
    pub targeted: u64,
    /// Distinct members who replied at least once.
    pub volunteers: u64,
    pub volunteer_replies: u64,
    pub reply_rate: f64,
    pub interactions_bot: u64,
    pub interactions_volunteers: u64,
    pub bot_interaction_rate: f64,
    pub volunteer_interaction_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_topic: Option<OnTopic>,
}

impl ArmMetrics {
    fn empty(strategy: &str) -> Self {
        ArmMetrics {
            strategy: strategy.to_string(),
            calls_to_action: 0,
            quotes: 0,
            followups: 0,
            outbound_messages: 0,
            targeted: 0,
            volunteers: 0,
            volunteer_replies: 0,
            reply_rate: 0.0,
            interactions_bot: 0,
            interactions_volunteers: 0,
            bot_interaction_rate: 0.0,
            volunteer_interaction_rate: 0.0,
            on_topic: None,
        }
    }

    fn finish(&mut self) {
        let ratio = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        self.outbound_messages = self.calls_to_action + self.quotes + self.followups;
        self.reply_rate = ratio(self.volunteer_replies, self.outbound_messages);
        self.bot_interaction_rate = ratio(self.interactions_bot, self.outbound_messages);
        self.volunteer_interaction_rate = ratio(self.interactions_volunteers, self.volunteer_replies);
        if let Some(o) = &mut self.on_topic {
            o.fraction = ratio(o.on_topic, o.labeled);
        }
    }
}

/// Cross-arm tests. Each is `None` when its input is degenerate (fewer
/// than two arms, an arm without observations, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AnovaSet {
    /// 0/1 per targeted member: did they reply at all.
    pub contributors: Option<AnovaResult>,
    /// Member replies per bot message.
    pub replies_per_message: Option<AnovaResult>,
    /// Retweets and favorites per bot message.
    pub bot_interactions_per_message: Option<AnovaResult>,
    /// Retweets and favorites per volunteer reply.
    pub volunteer_interactions_per_reply: Option<AnovaResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub arms: Vec<ArmMetrics>,
    /// Sums of the per-arm columns, rates recomputed from the sums.
    pub totals: ArmMetrics,
    pub anova: AnovaSet,
}

impl MetricsReport {
    pub fn arm(&self, id: &StrategyId) -> Option<&ArmMetrics> {
        self.arms.iter().find(|a| a.strategy == id.as_str())
    }
}

/// Report order: the four standard arms first, the rest alphabetically.
pub fn arm_order(a: &StrategyId, b: &StrategyId) -> std::cmp::Ordering {
    const KNOWN: [&str; 4] = ["direct", "loss", "gain", "solidarity"];
    let key = |s: &StrategyId| KNOWN.iter().position(|k| *k == s.as_str()).unwrap_or(KNOWN.len());
    key(a).cmp(&key(b)).then_with(|| a.cmp(b))
}

#[derive(Default)]
struct ArmTally {
    metrics: Option<ArmMetrics>,
    /// replies, bot interactions per bot message
    per_message: BTreeMap<MessageId, (u64, u64)>,
    /// volunteer interactions per volunteer reply
    per_reply: BTreeMap<MessageId, u64>,
    targeted: BTreeSet<UserId>,
    volunteers: BTreeSet<UserId>,
}

/// Per-arm participation metrics from a valid log, with optional final
/// (one per user) on-topic labels.
pub fn compute_metrics(
    events: &[CampaignEvent],
    labels: Option<&[VolunteerLabel]>,
) -> Result<MetricsReport, AnalyticsError> {
    validate_log(events)?;
    let labels: Option<BTreeMap<UserId, Label>> = labels.map(final_labels).transpose()?;

    let mut tallies: BTreeMap<StrategyId, ArmTally> = BTreeMap::new();
    let mut members: HashMap<&ConversationId, &[UserId]> = HashMap::new();

    for e in events {
        let tally = tallies.entry(e.strategy.clone()).or_default();
        let m = tally
            .metrics
            .get_or_insert_with(|| ArmMetrics::empty(e.strategy.as_str()));
        match e.kind {
            EventKind::OutboundCall => {
                members.insert(&e.conv, &e.mentions);
                m.calls_to_action += 1;
                tally.targeted.extend(e.mentions.iter().cloned());
            }
            EventKind::OutboundQuote => m.quotes += 1,
            EventKind::OutboundFollowup => m.followups += 1,
            EventKind::InboundReply => {
                let user = UserId::new(e.actor.clone());
                if !members.get(&e.conv).is_some_and(|ms| ms.contains(&user)) {
                    continue;
                }
                m.volunteer_replies += 1;
                tally.volunteers.insert(user);
                if let Some(msg) = &e.msg {
                    tally.per_reply.entry(msg.clone()).or_default();
                }
                if let Some(to) = &e.reply_to {
                    if let Some(c) = tally.per_message.get_mut(to) {
                        c.0 += 1;
                    }
                }
            }
            EventKind::Retweet | EventKind::Favorite => {
                let Some(target) = &e.reply_to else { continue };
                match e.target_author {
                    Some(TargetAuthor::Bot) => {
                        m.interactions_bot += 1;
                        if let Some(c) = tally.per_message.get_mut(target) {
                            c.1 += 1;
                        }
                    }
                    Some(TargetAuthor::Volunteer) => {
                        m.interactions_volunteers += 1;
                        if let Some(c) = tally.per_reply.get_mut(target) {
                            *c += 1;
                        }
                    }
                    None => {}
                }
            }
            EventKind::Aborted | EventKind::Closed => {}
        }
        if e.kind.is_outbound() {
            if let Some(msg) = &e.msg {
                tally.per_message.insert(msg.clone(), (0, 0));
            }
        }
    }

    let mut ids: Vec<StrategyId> = tallies.keys().cloned().collect();
    ids.sort_by(arm_order);

    let mut arms = Vec::new();
    let mut samples: [Vec<Vec<f64>>; 4] = Default::default();
    for id in &ids {
        let tally = &tallies[id];
        let mut m = tally.metrics.clone().expect("tally exists only with events");
        m.targeted = tally.targeted.len() as u64;
        m.volunteers = tally.volunteers.len() as u64;
        if let Some(labels) = &labels {
            let labeled: Vec<Label> = tally.volunteers.iter().filter_map(|u| labels.get(u).copied()).collect();
            m.on_topic = Some(OnTopic {
                on_topic: labeled.iter().filter(|l| **l == Label::OnTopic).count() as u64,
                labeled: labeled.len() as u64,
                fraction: 0.0,
            });
        }
        m.finish();
        arms.push(m);

        samples[0].push(
            tally
                .targeted
                .iter()
                .map(|u| if tally.volunteers.contains(u) { 1.0 } else { 0.0 })
                .collect(),
        );
        samples[1].push(tally.per_message.values().map(|c| c.0 as f64).collect());
        samples[2].push(tally.per_message.values().map(|c| c.1 as f64).collect());
        samples[3].push(tally.per_reply.values().map(|c| *c as f64).collect());
    }

    let mut totals = ArmMetrics::empty("total");
    for a in &arms {
        totals.calls_to_action += a.calls_to_action;
        totals.quotes += a.quotes;
        totals.followups += a.followups;
        totals.targeted += a.targeted;
        totals.volunteers += a.volunteers;
        totals.volunteer_replies += a.volunteer_replies;
        totals.interactions_bot += a.interactions_bot;
        totals.interactions_volunteers += a.interactions_volunteers;
        if let Some(o) = a.on_topic {
            let t = totals.on_topic.get_or_insert(OnTopic { on_topic: 0, labeled: 0, fraction: 0.0 });
            t.on_topic += o.on_topic;
            t.labeled += o.labeled;
        }
    }
    totals.finish();

    let [contributors, replies, bot, volunteer] = samples.map(|s| one_way_anova(&s).ok());
    Ok(MetricsReport {
        arms,
        totals,
        anova: AnovaSet {
            contributors,
            replies_per_message: replies,
            bot_interactions_per_message: bot,
            volunteer_interactions_per_reply: volunteer,
        },
    })
}
