//! Expansion of strategy templates into outbound messages.
//!
//! Templates are platform neutral: `{topic}` is substituted here, while the
//! mention list travels next to the text and is rendered by
//! [`render_message`], which the platform adapters also use.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConversationId, ConversationRecord, StrategyId, StrategySpec, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MessageKind {
    Call,
    Quote,
    Followup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutboundMessage {
    pub kind: MessageKind,
    /// Body with `{topic}` expanded; may still hold `{mentions}`.
    pub text: String,
    pub mentions: Vec<UserId>,
    pub strategy: StrategyId,
    pub topic: String,
    pub conversation_id: ConversationId,
    /// Follow-up question index, for `Followup` messages.
    pub question: Option<usize>,
}

impl OutboundMessage {
    /// Text as it appears on the platform.
    pub fn rendered(&self) -> String {
        render_message(&self.text, &self.mentions)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error("{kind:?} message for strategy {strategy} is {len} characters, limit is {limit}")]
    TemplateOverflow {
        strategy: StrategyId,
        kind: MessageKind,
        len: usize,
        limit: usize,
    },
    #[error("strategy {strategy} has no follow-up question {index}")]
    NoSuchFollowup { strategy: StrategyId, index: usize },
}

/// Place `@handle` mentions into a message body.
///
/// The mentions replace a `{mentions}` placeholder when the template has
/// one and are prepended otherwise.
pub fn render_message(body: &str, mentions: &[UserId]) -> String {
    let joined = mentions
        .iter()
        .map(|m| format!("@{m}"))
        .collect::<Vec<_>>()
        .join(" ");
    if body.contains("{mentions}") {
        body.replace("{mentions}", &joined).trim().to_string()
    } else if joined.is_empty() {
        body.to_string()
    } else {
        format!("{joined} {body}")
    }
}

#[allow(clippy::too_many_arguments)]
fn expand(
    spec: &StrategySpec,
    kind: MessageKind,
    template: &str,
    topic: &str,
    members: &[UserId],
    conversation_id: &ConversationId,
    question: Option<usize>,
    char_limit: usize,
) -> Result<OutboundMessage, ComposeError> {
    let msg = OutboundMessage {
        kind,
        text: template.replace("{topic}", topic),
        mentions: members.to_vec(),
        strategy: spec.id.clone(),
        topic: topic.to_string(),
        conversation_id: conversation_id.clone(),
        question,
    };
    let len = msg.rendered().chars().count();
    if len > char_limit {
        return Err(ComposeError::TemplateOverflow {
            strategy: spec.id.clone(),
            kind,
            len,
            limit: char_limit,
        });
    }
    Ok(msg)
}

fn with_quote(
    spec: &StrategySpec,
    first: OutboundMessage,
    topic: &str,
    members: &[UserId],
    conversation_id: &ConversationId,
    char_limit: usize,
) -> Result<Vec<OutboundMessage>, ComposeError> {
    let mut out = vec![first];
    if spec.messages_per_turn == 2 {
        if let Some(quote) = &spec.solidarity_quote {
            out.push(expand(
                spec,
                MessageKind::Quote,
                quote,
                topic,
                members,
                conversation_id,
                None,
                char_limit,
            )?);
        }
    }
    Ok(out)
}

/// The messages of the opening turn: the call itself, then the quote when
/// the strategy has a two-message budget.
pub fn compose_call(
    spec: &StrategySpec,
    topic: &str,
    members: &[UserId],
    conversation_id: &ConversationId,
    char_limit: usize,
) -> Result<Vec<OutboundMessage>, ComposeError> {
    let call = expand(
        spec,
        MessageKind::Call,
        &spec.call_to_action,
        topic,
        members,
        conversation_id,
        None,
        char_limit,
    )?;
    with_quote(spec, call, topic, members, conversation_id, char_limit)
}

/// Uniform draw among the questions this conversation has not used yet.
/// `None` once every question has been asked.
pub fn select_followup<R: Rng + ?Sized>(
    record: &ConversationRecord,
    spec: &StrategySpec,
    rng: &mut R,
) -> Option<usize> {
    let unused: Vec<usize> = (0..spec.followups.len())
        .filter(|i| !record.used_followups.contains(i))
        .collect();
    if unused.is_empty() {
        None
    } else {
        Some(unused[rng.random_range(0..unused.len())])
    }
}

pub fn compose_followup(
    spec: &StrategySpec,
    topic: &str,
    members: &[UserId],
    index: usize,
    conversation_id: &ConversationId,
    char_limit: usize,
) -> Result<Vec<OutboundMessage>, ComposeError> {
    let template = spec
        .followups
        .get(index)
        .ok_or_else(|| ComposeError::NoSuchFollowup {
            strategy: spec.id.clone(),
            index,
        })?;
    let followup = expand(
        spec,
        MessageKind::Followup,
        template,
        topic,
        members,
        conversation_id,
        Some(index),
        char_limit,
    )?;
    with_quote(spec, followup, topic, members, conversation_id, char_limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::ConversationState;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn handles() -> Vec<UserId> {
        vec![UserId::new("ana"), UserId::new("beto"), UserId::new("caro")]
    }

    fn conv() -> ConversationId {
        ConversationId::new("c1")
    }

    fn arm(id: StrategyId) -> StrategySpec {
        fixtures::english_strategies()
            .into_iter()
            .find(|s| s.id == id)
            .unwrap()
    }

    fn record(used: impl IntoIterator<Item = usize>) -> ConversationRecord {
        let mut r = ConversationRecord::new(conv(), "corruption", StrategyId::direct(), handles());
        r.used_followups = used.into_iter().collect();
        r.state = ConversationState::Engaged;
        r
    }

    #[test]
    fn direct_call() {
        let msgs = compose_call(&arm(StrategyId::direct()), "corruption", &handles(), &conv(), 140).unwrap();
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].kind, MessageKind::Call);
        assert_eq!(msgs[0].mentions.len(), 3);
        assert_eq!(
            msgs[0].rendered(),
            "@ana @beto @caro Could we collaborate to brainstorm solutions to the problem of corruption?"
        );
    }

    #[test]
    fn solidarity_call_has_quote() {
        let msgs =
            compose_call(&arm(StrategyId::solidarity()), "corruption", &handles(), &conv(), 140).unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[1].kind, MessageKind::Quote);
        assert!(msgs[1].text.contains("One for all, all for one!"));
        assert_eq!(msgs[1].mentions, handles());
    }

    #[test]
    fn gain_and_loss_calls() {
        let gain = compose_call(&arm(StrategyId::gain()), "corruption", &handles(), &conv(), 140).unwrap();
        assert_eq!(gain.len(), 1);
        assert!(gain[0].text.ends_with("We might improve our cities!"));
        let loss = compose_call(&arm(StrategyId::loss()), "corruption", &handles(), &conv(), 140).unwrap();
        assert!(loss[0].text.ends_with("If not, our cities might suffer!"));
    }

    #[test]
    fn overflow_is_reported() {
        let long = vec![UserId::new("a".repeat(40)); 3];
        let err = compose_call(&arm(StrategyId::loss()), "corruption", &long, &conv(), 140).unwrap_err();
        assert!(matches!(err, ComposeError::TemplateOverflow { kind: MessageKind::Call, .. }));
    }

    #[test]
    fn mentions_placeholder() {
        assert_eq!(
            render_message("Hi {mentions}, join us", &handles()),
            "Hi @ana @beto @caro, join us"
        );
        assert_eq!(render_message("plain", &[]), "plain");
    }

    #[test]
    fn direct_followups_match_question_list() {
        let spec = arm(StrategyId::direct());
        let q0 = compose_followup(&spec, "corruption", &handles(), 0, &conv(), 140).unwrap();
        assert_eq!(q0.len(), 1);
        assert_eq!(q0[0].text, "How do we fight corruption in our cities?");
        assert_eq!(q0[0].question, Some(0));
        let q2 = compose_followup(&spec, "corruption", &handles(), 2, &conv(), 140).unwrap();
        assert_eq!(q2[0].text, "How do we use Twitter to fight corruption?");
    }

    #[test]
    fn gain_followup_variant() {
        let q0 = compose_followup(&arm(StrategyId::gain()), "corruption", &handles(), 0, &conv(), 140).unwrap();
        assert_eq!(q0[0].text, "How do we fight corruption in our cities & thus improve them?");
    }

    #[test]
    fn solidarity_followup_is_two_messages() {
        let spec = arm(StrategyId::solidarity());
        for i in 0..spec.followups.len() {
            let msgs = compose_followup(&spec, "impunity", &handles(), i, &conv(), 140).unwrap();
            assert_eq!(msgs.len(), 2);
            assert_eq!(msgs[1].kind, MessageKind::Quote);
        }
    }

    #[test]
    fn missing_followup_index() {
        let spec = arm(StrategyId::direct());
        assert!(matches!(
            compose_followup(&spec, "corruption", &handles(), 7, &conv(), 140),
            Err(ComposeError::NoSuchFollowup { index: 7, .. })
        ));
    }

    #[test]
    fn exhausted_followups() {
        let spec = arm(StrategyId::direct());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select_followup(&record(0..7), &spec, &mut rng), None);
        assert_eq!(select_followup(&record(0..6), &spec, &mut rng), Some(6));
    }

    #[test]
    fn followup_draw_is_uniform() {
        // Chi-square goodness of fit, 6 degrees of freedom; the 0.99
        // quantile is 16.812.
        let spec = arm(StrategyId::direct());
        let r = record([]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0u32; 7];
        let draws = 10_000;
        for _ in 0..draws {
            counts[select_followup(&r, &spec, &mut rng).unwrap()] += 1;
        }
        let expected = draws as f64 / 7.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 16.812, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn budget_matches_messages_per_turn() {
        for spec in fixtures::english_strategies()
            .into_iter()
            .chain(fixtures::spanish_strategies())
        {
            let call = compose_call(&spec, "x", &handles(), &conv(), 280).unwrap();
            assert_eq!(call.len(), spec.messages_per_turn as usize);
            for i in 0..spec.followups.len() {
                let f = compose_followup(&spec, "x", &handles(), i, &conv(), 280).unwrap();
                assert_eq!(f.len(), spec.messages_per_turn as usize);
            }
        }
    }
}
