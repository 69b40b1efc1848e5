//! The append-only campaign event log.
//!
//! One JSON object per line, fields in [`CampaignEvent`] order. The log is
//! the single source of truth: contact registry, conversation records and
//! every reported metric are derived from it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::{
    CampaignEvent, ConversationId, EventKind, MessageId, StrategyId, TargetAuthor, Timestamp,
    UserId, BOT_ACTOR,
};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error on event log: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("malformed log at seq {seq}: {reason}")]
    Malformed { seq: u64, reason: String },
    #[error("resumed run diverged from the existing log at line {line}")]
    ResumeDiverged { line: usize },
}

/// Fields of an event before the log assigns its sequence number.
#[derive(Debug, Clone)]
pub struct EventDraft {
    pub ts: Timestamp,
    pub kind: EventKind,
    pub actor: String,
    pub strategy: StrategyId,
    pub topic: String,
    pub conv: ConversationId,
    pub msg: Option<MessageId>,
    pub reply_to: Option<MessageId>,
    pub target_author: Option<TargetAuthor>,
    pub text: Option<String>,
    pub mentions: Vec<UserId>,
    pub question: Option<usize>,
    pub partial: bool,
}

impl EventDraft {
    pub fn new(
        ts: Timestamp,
        kind: EventKind,
        actor: impl Into<String>,
        strategy: StrategyId,
        topic: impl Into<String>,
        conv: ConversationId,
    ) -> Self {
        EventDraft {
            ts,
            kind,
            actor: actor.into(),
            strategy,
            topic: topic.into(),
            conv,
            msg: None,
            reply_to: None,
            target_author: None,
            text: None,
            mentions: Vec::new(),
            question: None,
            partial: false,
        }
    }

    fn into_event(self, seq: u64) -> CampaignEvent {
        CampaignEvent {
            seq,
            ts: self.ts,
            kind: self.kind,
            actor: self.actor,
            strategy: self.strategy,
            topic: self.topic,
            conv: self.conv,
            msg: self.msg,
            reply_to: self.reply_to,
            target_author: self.target_author,
            text: self.text,
            mentions: self.mentions,
            question: self.question,
            partial: self.partial,
        }
    }
}

pub fn encode_event(event: &CampaignEvent) -> String {
    serde_json::to_string(event).expect("event serialization cannot fail")
}

pub fn decode_event(line: &str) -> Result<CampaignEvent, serde_json::Error> {
    serde_json::from_str(line)
}

/// File sink. When resuming, the first lines already on disk are compared
/// against the regenerated events instead of being written again.
pub struct LogSink {
    writer: BufWriter<File>,
    existing: Vec<String>,
    written: usize,
}

impl LogSink {
    pub fn create(path: &Path) -> Result<Self, LogError> {
        let file = File::create(path)?;
        Ok(LogSink {
            writer: BufWriter::new(file),
            existing: Vec::new(),
            written: 0,
        })
    }

    /// Open an existing log for continuation. A torn final line (no
    /// trailing newline) is cut off.
    pub fn resume(path: &Path) -> Result<Self, LogError> {
        let mut file = OpenOptions::new().read(true).write(true).open(path)?;
        let mut content = String::new();
        file.read_to_string(&mut content)?;
        let keep = match content.rfind('\n') {
            Some(i) => i + 1,
            None => 0,
        };
        if keep != content.len() {
            file.set_len(keep as u64)?;
        }
        file.seek(SeekFrom::End(0))?;
        let existing = content[..keep].lines().map(str::to_string).collect();
        Ok(LogSink {
            writer: BufWriter::new(file),
            existing,
            written: 0,
        })
    }

    /// Lines that were on disk before this sink was opened.
    pub fn existing_len(&self) -> usize {
        self.existing.len()
    }

    fn write(&mut self, line: &str) -> Result<(), LogError> {
        if self.written < self.existing.len() {
            if self.existing[self.written] != line {
                return Err(LogError::ResumeDiverged {
                    line: self.written + 1,
                });
            }
        } else {
            self.writer.write_all(line.as_bytes())?;
            self.writer.write_all(b"\n")?;
        }
        self.written += 1;
        Ok(())
    }

    fn sync(&mut self) -> Result<(), LogError> {
        self.writer.flush()?;
        self.writer.get_ref().sync_data()?;
        Ok(())
    }
}

/// In-memory log with an optional file sink.
#[derive(Default)]
pub struct EventLog {
    events: Vec<CampaignEvent>,
    sink: Option<LogSink>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        EventLog::default()
    }

    pub fn with_sink(sink: LogSink) -> Self {
        EventLog {
            events: Vec::new(),
            sink: Some(sink),
        }
    }

    pub fn append(&mut self, draft: EventDraft) -> Result<&CampaignEvent, LogError> {
        let seq = self.events.len() as u64 + 1;
        let event = draft.into_event(seq);
        if let Some(sink) = &mut self.sink {
            sink.write(&encode_event(&event))?;
        }
        self.events.push(event);
        Ok(self.events.last().expect("just pushed"))
    }

    /// Flush and fsync at a block boundary.
    pub fn sync_block(&mut self) -> Result<(), LogError> {
        match &mut self.sink {
            Some(sink) => sink.sync(),
            None => Ok(()),
        }
    }

    pub fn events(&self) -> &[CampaignEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Finish the log. A resumed run that stopped short of the lines already
    /// on disk is reported as diverged.
    pub fn into_events(mut self) -> Result<Vec<CampaignEvent>, LogError> {
        self.sync_block()?;
        if let Some(sink) = &self.sink {
            if sink.written < sink.existing.len() {
                return Err(LogError::ResumeDiverged {
                    line: sink.written + 1,
                });
            }
        }
        Ok(self.events)
    }
}

pub fn read_events<R: Read>(reader: R) -> Result<Vec<CampaignEvent>, LogError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(decode_event(&line).map_err(|source| LogError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn read_log(path: &Path) -> Result<Vec<CampaignEvent>, LogError> {
    read_events(File::open(path)?)
}

pub fn write_log(path: &Path, events: &[CampaignEvent]) -> Result<(), LogError> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in events {
        writeln!(w, "{}", encode_event(e))?;
    }
    w.flush()?;
    Ok(())
}

struct ConvFacts {
    strategy: StrategyId,
    topic: String,
    members: BTreeSet<UserId>,
    has_reply: bool,
    questions: BTreeSet<usize>,
}

/// Structural validation: sequence numbers, references, conversation
/// consistency. Behavioural properties (one-touch, arm balance, budgets)
/// are checked by the functions in [`audit`].
pub fn validate_log(events: &[CampaignEvent]) -> Result<(), LogError> {
    let mut last_seq = 0u64;
    let mut convs: HashMap<&ConversationId, ConvFacts> = HashMap::new();
    // message id -> (conversation, authored by the bot)
    let mut messages: HashMap<&MessageId, (&ConversationId, bool)> = HashMap::new();
    let bad = |e: &CampaignEvent, reason: String| LogError::Malformed { seq: e.seq, reason };

    for e in events {
        if e.seq <= last_seq {
            return Err(bad(e, format!("seq does not increase (previous {last_seq})")));
        }
        last_seq = e.seq;

        let is_bot_kind = e.kind.is_outbound()
            || matches!(e.kind, EventKind::Aborted | EventKind::Closed);
        if is_bot_kind != (e.actor == BOT_ACTOR) {
            return Err(bad(e, format!("{:?} has actor {}", e.kind, e.actor)));
        }

        match e.kind {
            EventKind::OutboundCall | EventKind::Aborted if !convs.contains_key(&e.conv) => {
                let members: BTreeSet<UserId> = e.mentions.iter().cloned().collect();
                if members.len() != e.mentions.len() {
                    return Err(bad(e, "duplicate member in call".into()));
                }
                if e.kind == EventKind::OutboundCall && members.is_empty() {
                    return Err(bad(e, "call without mentions".into()));
                }
                convs.insert(
                    &e.conv,
                    ConvFacts {
                        strategy: e.strategy.clone(),
                        topic: e.topic.clone(),
                        members,
                        has_reply: false,
                        questions: BTreeSet::new(),
                    },
                );
            }
            EventKind::OutboundCall => {
                return Err(bad(e, format!("second call for conversation {}", e.conv)));
            }
            _ => {}
        }

        let facts = convs
            .get_mut(&e.conv)
            .ok_or_else(|| bad(e, format!("conversation {} has no call", e.conv)))?;
        if facts.strategy != e.strategy || facts.topic != e.topic {
            return Err(bad(e, "strategy or topic differs from the conversation's call".into()));
        }

        let needs_msg = !matches!(e.kind, EventKind::Aborted | EventKind::Closed);
        if needs_msg {
            let msg = e.msg.as_ref().ok_or_else(|| bad(e, "missing msg".into()))?;
            if messages.contains_key(msg) && !e.kind.is_interaction() {
                return Err(bad(e, format!("duplicate message id {msg}")));
            }
        }

        match e.kind {
            EventKind::OutboundFollowup => {
                if !facts.has_reply {
                    return Err(bad(e, "follow-up before any reply".into()));
                }
                let q = e.question.ok_or_else(|| bad(e, "follow-up without question".into()))?;
                if !facts.questions.insert(q) {
                    return Err(bad(e, format!("question {q} repeated")));
                }
            }
            EventKind::InboundReply => {
                let target = e.reply_to.as_ref().ok_or_else(|| bad(e, "reply without reply_to".into()))?;
                match messages.get(target) {
                    Some((c, _)) if *c == &e.conv => {}
                    _ => return Err(bad(e, format!("reply_to {target} is not a prior message of {}", e.conv))),
                }
                if facts.members.contains(&UserId::new(e.actor.clone())) {
                    facts.has_reply = true;
                }
            }
            EventKind::Retweet | EventKind::Favorite => {
                let target = e.reply_to.as_ref().ok_or_else(|| bad(e, "interaction without target".into()))?;
                let ta = e.target_author.ok_or_else(|| bad(e, "interaction without target_author".into()))?;
                match messages.get(target) {
                    Some((c, by_bot)) if *c == &e.conv => {
                        if *by_bot != (ta == TargetAuthor::Bot) {
                            return Err(bad(e, "target_author does not match target message".into()));
                        }
                    }
                    _ => return Err(bad(e, format!("target {target} is not a prior message of {}", e.conv))),
                }
            }
            _ => {}
        }

        if needs_msg && !e.kind.is_interaction() {
            let msg = e.msg.as_ref().expect("checked above");
            messages.insert(msg, (&e.conv, e.kind.is_outbound()));
        }
    }
    Ok(())
}

/// Behavioural checks over a log.
pub mod audit {
    use super::*;

    /// Users mentioned by more than one call to action.
    pub fn one_touch_violations(events: &[CampaignEvent]) -> Vec<UserId> {
        let mut seen = BTreeSet::new();
        let mut repeated = BTreeSet::new();
        for e in events.iter().filter(|e| e.kind == EventKind::OutboundCall) {
            for m in &e.mentions {
                if !seen.insert(m.clone()) {
                    repeated.insert(m.clone());
                }
            }
        }
        repeated.into_iter().collect()
    }

    /// Largest difference between per-arm call counts over every prefix of
    /// the log. Arms are those listed, so an arm that never got a call
    /// still counts as zero.
    pub fn max_arm_spread(events: &[CampaignEvent], arms: &[StrategyId]) -> usize {
        let mut counts: BTreeMap<&StrategyId, usize> = arms.iter().map(|a| (a, 0)).collect();
        let mut worst = 0;
        for e in events.iter().filter(|e| e.kind == EventKind::OutboundCall) {
            *counts.entry(&e.strategy).or_default() += 1;
            let max = counts.values().max().copied().unwrap_or(0);
            let min = counts.values().min().copied().unwrap_or(0);
            worst = worst.max(max - min);
        }
        worst
    }

    /// Turns (call or follow-up) whose message count differs from the
    /// arm's budget. A turn's extra messages are the quotes replying to it.
    pub fn budget_violations(
        events: &[CampaignEvent],
        budget: &BTreeMap<StrategyId, u8>,
    ) -> Vec<MessageId> {
        let mut quotes: HashMap<&MessageId, usize> = HashMap::new();
        for e in events.iter().filter(|e| e.kind == EventKind::OutboundQuote) {
            if let Some(r) = &e.reply_to {
                *quotes.entry(r).or_default() += 1;
            }
        }
        let mut bad = Vec::new();
        for e in events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::OutboundCall | EventKind::OutboundFollowup))
        {
            let Some(msg) = &e.msg else { continue };
            let sent = 1 + quotes.get(msg).copied().unwrap_or(0);
            if budget.get(&e.strategy).map(|b| *b as usize) != Some(sent) {
                bad.push(msg.clone());
            }
        }
        bad
    }

    /// Follow-ups not preceded by a reply in their conversation.
    pub fn unprompted_followups(events: &[CampaignEvent]) -> Vec<MessageId> {
        let mut replied: BTreeSet<&ConversationId> = BTreeSet::new();
        let mut bad = Vec::new();
        for e in events {
            match e.kind {
                EventKind::InboundReply => {
                    replied.insert(&e.conv);
                }
                EventKind::OutboundFollowup if !replied.contains(&e.conv) => {
                    bad.extend(e.msg.clone());
                }
                _ => {}
            }
        }
        bad
    }
}
