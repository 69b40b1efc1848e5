//! Shipped reference data: strategy texts, campaign configs, the calibrated
//! simulation profile, and a synthetic log plus coder labels that encode
//! the reference per-arm counts.
//!
//! Everything is compiled in, so the CLI can write the files anywhere.

use std::io;
use std::path::Path;

use crate::analytics::{AgreementTable, FINAL_CODER};
use crate::eventlog::{encode_event, EventDraft, EventLog};
use crate::model::{
    parse_strategies, CampaignConfig, CampaignEvent, ConversationId, EventKind, Label, MessageId,
    StrategyId, StrategySpec, TargetAuthor, Timestamp, UserId, VolunteerLabel, BOT_ACTOR,
    MS_PER_SECOND,
};
use crate::simulator::{ProfileSpec, SimulationProfile, DEFAULT_START_TS, OFF_TOPIC_TAG, ON_TOPIC_TAG};

pub const STRATEGIES_EN: &str = include_str!("../fixtures/strategies.en.toml");
pub const STRATEGIES_ES: &str = include_str!("../fixtures/strategies.es.toml");
pub const CAMPAIGN_EN: &str = include_str!("../fixtures/campaign.en.toml");
pub const CAMPAIGN_ES: &str = include_str!("../fixtures/campaign.es.toml");
pub const CALIBRATED_PROFILE: &str = include_str!("../fixtures/field-calibrated.toml");

/// File names under which [`write_all`] stores each fixture.
pub const SUMMARY_LOG_FILE: &str = "summary-table.log";
pub const CODER_A_FILE: &str = "labels.coder-a.jsonl";
pub const CODER_B_FILE: &str = "labels.coder-b.jsonl";
pub const TIEBREAK_FILE: &str = "labels.tiebreak.jsonl";

pub fn english_strategies() -> Vec<StrategySpec> {
    parse_strategies(STRATEGIES_EN).expect("shipped strategies parse")
}

pub fn spanish_strategies() -> Vec<StrategySpec> {
    parse_strategies(STRATEGIES_ES).expect("shipped strategies parse")
}

pub fn calibrated_profile() -> Vec<ProfileSpec> {
    SimulationProfile::from_toml(CALIBRATED_PROFILE)
        .expect("shipped profile parses")
        .profiles
}

fn assemble(config: &str, strategies: Vec<StrategySpec>) -> CampaignConfig {
    let mut config: CampaignConfig = toml::from_str(config).expect("shipped config parses");
    config.strategies = strategies;
    if let Some(sim) = &mut config.platform.simulation {
        sim.profiles = calibrated_profile();
    }
    config
}

/// The English campaign, with strategies and profile inlined.
pub fn standard_config() -> CampaignConfig {
    assemble(CAMPAIGN_EN, english_strategies())
}

pub fn standard_config_spanish() -> CampaignConfig {
    assemble(CAMPAIGN_ES, spanish_strategies())
}

/// Reference per-arm counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArmCounts {
    pub strategy: &'static str,
    pub calls: u32,
    pub followups: u32,
    pub volunteers: u32,
    pub replies: u32,
    pub interactions_bot: u32,
    pub interactions_volunteers: u32,
    pub on_topic_volunteers: u32,
}

/// Per-arm columns in report order. The reference total column disagrees
/// with these sums in three rows; totals are always recomputed.
pub const SUMMARY_ARMS: [ArmCounts; 4] = [
    ArmCounts {
        strategy: "direct",
        calls: 94,
        followups: 158,
        volunteers: 94,
        replies: 204,
        interactions_bot: 90,
        interactions_volunteers: 274,
        on_topic_volunteers: 88,
    },
    ArmCounts {
        strategy: "loss",
        calls: 94,
        followups: 80,
        volunteers: 31,
        replies: 53,
        interactions_bot: 48,
        interactions_volunteers: 71,
        on_topic_volunteers: 23,
    },
    ArmCounts {
        strategy: "gain",
        calls: 94,
        followups: 79,
        volunteers: 27,
        replies: 74,
        interactions_bot: 57,
        interactions_volunteers: 85,
        on_topic_volunteers: 24,
    },
    ArmCounts {
        strategy: "solidarity",
        calls: 94,
        followups: 120,
        volunteers: 23,
        replies: 92,
        interactions_bot: 250,
        interactions_volunteers: 62,
        on_topic_volunteers: 19,
    },
];

/// 2×2 agreement table over 175 volunteers with 34 disagreements and
/// κ ≈ 0.62, found by enumerating all tables of that size.
pub const KAPPA_TABLE: AgreementTable = AgreementTable {
    both_on: 66,
    a_on_b_off: 3,
    a_off_b_on: 31,
    both_off: 75,
};

const TOPICS: [&str; 2] = ["corruption", "impunity"];
const MAX_QUESTIONS: u32 = 7;

/// `total` spread over `slots` as evenly as possible, earlier slots first.
fn spread(total: u32, slots: u32) -> impl Iterator<Item = u32> {
    (0..slots).map(move |i| total / slots + u32::from(i < total % slots))
}

fn member(arm: &str, conv: u32, j: u32) -> UserId {
    UserId::new(format!("{}{conv:02}_{j}", &arm[..1]))
}

struct ConvPlan {
    /// Replies per replying member, in member order.
    replies: Vec<u32>,
    followups: u32,
}

fn plan(arm: &ArmCounts, group_size: u32) -> Vec<ConvPlan> {
    let mut plans: Vec<ConvPlan> = spread(arm.volunteers, arm.calls)
        .map(|v| ConvPlan {
            replies: vec![1; v.min(group_size) as usize],
            followups: 0,
        })
        .collect();
    // Extra replies round-robin over volunteers, in conversation order.
    let slots: Vec<(usize, usize)> = plans
        .iter()
        .enumerate()
        .flat_map(|(c, p)| (0..p.replies.len()).map(move |m| (c, m)))
        .collect();
    for (i, extra) in spread(arm.replies - arm.volunteers, slots.len() as u32).enumerate() {
        let (c, m) = slots[i];
        plans[c].replies[m] += extra;
    }
    let replied: Vec<usize> = (0..plans.len()).filter(|&c| !plans[c].replies.is_empty()).collect();
    for (i, n) in spread(arm.followups, replied.len() as u32).enumerate() {
        assert!(n <= MAX_QUESTIONS, "{}: {n} follow-ups in one conversation", arm.strategy);
        plans[replied[i]].followups = n;
    }
    plans
}

#[derive(Default)]
struct Ids {
    bot: u64,
    reply: u64,
    interaction: u64,
}

struct ArmCursor {
    counts: ArmCounts,
    plans: Vec<ConvPlan>,
    budget: u32,
    bot_messages: u32,
    volunteer_replies: u32,
    bot_seen: u32,
    replies_seen: u32,
    volunteer_index: u32,
}

/// Number of round-robin hits slot `i` of `n` gets out of `total`.
fn share(total: u32, n: u32, i: u32) -> u32 {
    total / n + u32::from(i < total % n)
}

/// The synthetic log behind the reference per-arm columns.
///
/// Each arm gets 94 conversations of three members, alternating topics.
/// Conversations are opened one per arm in turn, so call counts stay
/// balanced. Replies carry the on/off-topic tag of their author's label.
pub fn summary_log() -> Vec<CampaignEvent> {
    let group_size = 3;
    let budgets = english_strategies();
    let mut arms: Vec<ArmCursor> = SUMMARY_ARMS
        .iter()
        .map(|a| {
            let budget = budgets
                .iter()
                .find(|s| s.id.as_str() == a.strategy)
                .map_or(1, |s| s.messages_per_turn as u32);
            let plans = plan(a, group_size);
            let bot_messages = plans.iter().map(|p| budget * (1 + p.followups)).sum();
            ArmCursor {
                counts: *a,
                plans,
                budget,
                bot_messages,
                volunteer_replies: a.replies,
                bot_seen: 0,
                replies_seen: 0,
                volunteer_index: 0,
            }
        })
        .collect();

    let quote = |arm: &str| {
        budgets
            .iter()
            .find(|s| s.id.as_str() == arm)
            .and_then(|s| s.solidarity_quote.clone())
            .unwrap_or_default()
    };
    let spec = |arm: &str| budgets.iter().find(|s| s.id.as_str() == arm).cloned().expect("arm exists");

    let mut log = EventLog::in_memory();
    let mut ids = Ids::default();
    let mut ts: Timestamp = DEFAULT_START_TS;
    let mut conv_no = 0;
    let calls = SUMMARY_ARMS[0].calls;
    for k in 0..calls {
        for cursor in &mut arms {
            conv_no += 1;
            let arm = cursor.counts.strategy;
            let strategy = StrategyId::new(arm);
            let topic = TOPICS[k as usize % 2];
            let conv = ConversationId::new(format!("c{conv_no}"));
            let members: Vec<UserId> = (0..group_size).map(|j| member(arm, k, j)).collect();
            let spec = spec(arm);
            let quote_text = quote(arm);
            let p = &cursor.plans[k as usize];

            let mut bot_ids: Vec<MessageId> = Vec::new();
            let mut reply_ids: Vec<(MessageId, usize)> = Vec::new();
            let push = |log: &mut EventLog, draft: EventDraft| {
                log.append(draft).expect("in-memory append");
            };
            let draft = |kind: EventKind, actor: &str, ts: &mut Timestamp| {
                *ts += 60 * MS_PER_SECOND;
                EventDraft::new(*ts, kind, actor, strategy.clone(), topic, conv.clone())
            };

            // A turn: lead message plus the quote for two-message arms.
            let turn = |log: &mut EventLog,
                            ts: &mut Timestamp,
                            kind: EventKind,
                            text: String,
                            question: Option<usize>,
                            reply_to: Option<MessageId>,
                            bot_ids: &mut Vec<MessageId>,
                            ids: &mut Ids| {
                ids.bot += 1;
                let lead = MessageId::new(format!("m{}", ids.bot));
                let mut d = draft(kind, BOT_ACTOR, ts);
                d.msg = Some(lead.clone());
                d.text = Some(crate::strategy::render_message(&text, &members));
                d.question = question;
                d.reply_to = reply_to;
                if kind == EventKind::OutboundCall {
                    d.mentions = members.clone();
                }
                push(log, d);
                bot_ids.push(lead.clone());
                if cursor.budget == 2 {
                    ids.bot += 1;
                    let id = MessageId::new(format!("m{}", ids.bot));
                    let mut d = draft(EventKind::OutboundQuote, BOT_ACTOR, ts);
                    d.msg = Some(id.clone());
                    d.text = Some(crate::strategy::render_message(&quote_text, &members));
                    d.reply_to = Some(lead.clone());
                    push(log, d);
                    bot_ids.push(id);
                }
                lead
            };

            let call_text = spec.call_to_action.replace("{topic}", topic);
            let mut lead = turn(&mut log, &mut ts, EventKind::OutboundCall, call_text, None, None, &mut bot_ids, &mut ids);

            // Replies in member order, a follow-up after each until the
            // conversation's follow-ups are used up.
            let mut order: Vec<usize> = Vec::new();
            let most = p.replies.iter().copied().max().unwrap_or(0);
            for round in 0..most {
                for (m, n) in p.replies.iter().enumerate() {
                    if round < *n {
                        order.push(m);
                    }
                }
            }
            let labels_on = cursor.counts.on_topic_volunteers;
            let first_volunteer = cursor.volunteer_index;
            let mut asked = 0;
            let mut last_reply: Option<MessageId> = None;
            let emit_followup = |log: &mut EventLog,
                                     ts: &mut Timestamp,
                                     last_reply: &Option<MessageId>,
                                     bot_ids: &mut Vec<MessageId>,
                                     ids: &mut Ids,
                                     asked: &mut u32|
             -> MessageId {
                let q = *asked as usize;
                *asked += 1;
                let text = spec.followups[q].replace("{topic}", topic);
                turn(log, ts, EventKind::OutboundFollowup, text, Some(q), last_reply.clone(), bot_ids, ids)
            };
            for m in order {
                ids.reply += 1;
                let id = MessageId::new(format!("r{}", ids.reply));
                let volunteer = first_volunteer + m as u32;
                let tag = if volunteer < labels_on { ON_TOPIC_TAG } else { OFF_TOPIC_TAG };
                let body = if volunteer < labels_on {
                    format!("{tag} we could audit public spending on {topic}")
                } else {
                    format!("{tag} why are bots asking me this")
                };
                let mut d = draft(EventKind::InboundReply, members[m].as_str(), &mut ts);
                d.msg = Some(id.clone());
                d.reply_to = Some(lead.clone());
                d.text = Some(body);
                push(&mut log, d);
                reply_ids.push((id.clone(), m));
                last_reply = Some(id);
                if asked < p.followups {
                    lead = emit_followup(&mut log, &mut ts, &last_reply, &mut bot_ids, &mut ids, &mut asked);
                }
            }
            while asked < p.followups {
                emit_followup(&mut log, &mut ts, &last_reply, &mut bot_ids, &mut ids, &mut asked);
            }
            cursor.volunteer_index += p.replies.len() as u32;

            // Interactions, spread round-robin over the arm's messages.
            let interact = |log: &mut EventLog,
                                ts: &mut Timestamp,
                                target: &MessageId,
                                actor: &UserId,
                                author: TargetAuthor,
                                ids: &mut Ids| {
                ids.interaction += 1;
                let kind = if ids.interaction.is_multiple_of(2) { EventKind::Favorite } else { EventKind::Retweet };
                let mut d = draft(kind, actor.as_str(), ts);
                d.msg = Some(MessageId::new(format!("i{}", ids.interaction)));
                d.reply_to = Some(target.clone());
                d.target_author = Some(author);
                push(log, d);
            };
            for id in &bot_ids {
                let n = share(cursor.counts.interactions_bot, cursor.bot_messages, cursor.bot_seen);
                for j in 0..n {
                    let actor = &members[((cursor.bot_seen + j) % group_size) as usize];
                    interact(&mut log, &mut ts, id, actor, TargetAuthor::Bot, &mut ids);
                }
                cursor.bot_seen += 1;
            }
            for (id, author) in &reply_ids {
                let n = share(cursor.counts.interactions_volunteers, cursor.volunteer_replies, cursor.replies_seen);
                for j in 0..n {
                    let actor = &members[(*author + 1 + j as usize) % group_size as usize];
                    interact(&mut log, &mut ts, id, actor, TargetAuthor::Volunteer, &mut ids);
                }
                cursor.replies_seen += 1;
            }
        }
    }
    log.into_events().expect("in-memory log")
}

/// Volunteers of the summary log in log order, with their label.
fn summary_volunteers() -> Vec<(UserId, Label)> {
    let mut out = Vec::new();
    for a in &SUMMARY_ARMS {
        let plans = plan(a, 3);
        let mut index = 0;
        for (k, p) in plans.iter().enumerate() {
            for m in 0..p.replies.len() {
                let label = if index < a.on_topic_volunteers { Label::OnTopic } else { Label::OffTopic };
                out.push((member(a.strategy, k as u32, m as u32), label));
                index += 1;
            }
        }
    }
    out
}

fn labels(coder: &str, items: impl IntoIterator<Item = (UserId, Label)>) -> Vec<VolunteerLabel> {
    items
        .into_iter()
        .map(|(user_id, label)| VolunteerLabel {
            user_id,
            label,
            coder_id: coder.to_string(),
        })
        .collect()
}

/// Users coder B marks off-topic although coder A marks them on-topic:
/// every fourth on-topic volunteer, 34 in all.
fn disputed() -> Vec<UserId> {
    summary_volunteers()
        .into_iter()
        .filter(|(_, l)| *l == Label::OnTopic)
        .step_by(4)
        .take(34)
        .map(|(u, _)| u)
        .collect()
}

/// First coder: the per-arm on-topic counts as given.
pub fn coder_a_labels() -> Vec<VolunteerLabel> {
    labels("a", summary_volunteers())
}

/// Second coder: agrees with the first except on 34 volunteers.
pub fn coder_b_labels() -> Vec<VolunteerLabel> {
    let flipped = disputed();
    labels(
        "b",
        summary_volunteers().into_iter().map(|(u, l)| {
            let l = if flipped.contains(&u) { Label::OffTopic } else { l };
            (u, l)
        }),
    )
}

/// Tiebreaker: labels only the disputed volunteers, siding with coder A.
pub fn tiebreak_labels() -> Vec<VolunteerLabel> {
    labels("tiebreak", disputed().into_iter().map(|u| (u, Label::OnTopic)))
}

/// Merged labels the three coder files produce.
pub fn final_summary_labels() -> Vec<VolunteerLabel> {
    labels(FINAL_CODER, summary_volunteers())
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("serializable") + "\n")
        .collect()
}

/// Every fixture as (file name, contents).
pub fn files() -> Vec<(&'static str, String)> {
    vec![
        ("strategies.en.toml", STRATEGIES_EN.to_string()),
        ("strategies.es.toml", STRATEGIES_ES.to_string()),
        ("campaign.en.toml", CAMPAIGN_EN.to_string()),
        ("campaign.es.toml", CAMPAIGN_ES.to_string()),
        ("field-calibrated.toml", CALIBRATED_PROFILE.to_string()),
        (
            SUMMARY_LOG_FILE,
            summary_log().iter().map(|e| encode_event(e) + "\n").collect(),
        ),
        (CODER_A_FILE, jsonl(&coder_a_labels())),
        (CODER_B_FILE, jsonl(&coder_b_labels())),
        (TIEBREAK_FILE, jsonl(&tiebreak_labels())),
    ]
}

/// Write every fixture into `dir`, which must exist.
pub fn write_all(dir: &Path) -> io::Result<Vec<String>> {
    let mut written = Vec::new();
    for (name, content) in files() {
        std::fs::write(dir.join(name), content)?;
        written.push(name.to_string());
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{cohen_kappa, kappa_from_table, merge_labels};
    use crate::eventlog::validate_log;

    #[test]
    fn summary_log_is_valid() {
        validate_log(&summary_log()).unwrap();
    }

    #[test]
    fn shipped_files_match_builders() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
        for (name, content) in files() {
            let on_disk = std::fs::read_to_string(dir.join(name)).unwrap();
            assert!(on_disk == content, "{name} is stale; regenerate with `campaign fixtures`");
        }
    }

    #[test]
    fn plan_respects_counts() {
        for a in &SUMMARY_ARMS {
            let p = plan(a, 3);
            assert_eq!(p.len() as u32, a.calls);
            assert_eq!(p.iter().map(|c| c.replies.len() as u32).sum::<u32>(), a.volunteers);
            assert_eq!(p.iter().map(|c| c.replies.iter().sum::<u32>()).sum::<u32>(), a.replies);
            assert_eq!(p.iter().map(|c| c.followups).sum::<u32>(), a.followups);
        }
    }

    #[test]
    fn coders_merge_to_reference_labels() {
        let mut merged = merge_labels(&coder_a_labels(), &coder_b_labels(), &tiebreak_labels()).unwrap();
        let mut expected = final_summary_labels();
        merged.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        expected.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        assert_eq!(merged, expected);
        assert_eq!(disputed().len(), 34);
    }

    #[test]
    fn kappa_table_is_near_reference_value() {
        assert_eq!(KAPPA_TABLE.total(), 175);
        assert_eq!(KAPPA_TABLE.a_on_b_off + KAPPA_TABLE.a_off_b_on, 34);
        let k = kappa_from_table(&KAPPA_TABLE).unwrap();
        assert!((k - 0.62).abs() < 0.01, "{k}");
        // The coder files cannot reach that value with the reference
        // on-topic counts; see `coder_b_labels`.
        let files = cohen_kappa(&coder_a_labels(), &coder_b_labels()).unwrap();
        assert!((files - 0.4586).abs() < 1e-3, "{files}");
    }
}
