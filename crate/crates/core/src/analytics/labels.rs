use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::model::{CampaignEvent, EventKind, Label, UserId, VolunteerLabel};
use crate::simulator::{OFF_TOPIC_TAG, ON_TOPIC_TAG};

use super::AnalyticsError;

/// Coder id of merged labels.
pub const FINAL_CODER: &str = "final";
/// Coder id of labels read off simulator reply tags.
pub const SIM_CODER: &str = "sim";

pub(crate) fn by_user(labels: &[VolunteerLabel]) -> Result<BTreeMap<UserId, Label>, AnalyticsError> {
    let mut out = BTreeMap::new();
    for l in labels {
        if out.insert(l.user_id.clone(), l.label).is_some() {
            return Err(AnalyticsError::DuplicateLabel {
                user: l.user_id.clone(),
                coder: l.coder_id.clone(),
            });
        }
    }
    Ok(out)
}

/// Labels as a per-user map; each user must appear once.
pub fn final_labels(labels: &[VolunteerLabel]) -> Result<BTreeMap<UserId, Label>, AnalyticsError> {
    by_user(labels)
}

/// One JSON object per line: `{"user_id":…,"label":"OnTopic","coder_id":…}`.
pub fn read_labels(path: &Path) -> Result<Vec<VolunteerLabel>, AnalyticsError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let label: VolunteerLabel = serde_json::from_str(&line).map_err(|e| AnalyticsError::LabelFile {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if !seen.insert((label.user_id.clone(), label.coder_id.clone())) {
            return Err(AnalyticsError::DuplicateLabel {
                user: label.user_id,
                coder: label.coder_id,
            });
        }
        out.push(label);
    }
    Ok(out)
}

pub fn write_labels(path: &Path, labels: &[VolunteerLabel]) -> Result<(), AnalyticsError> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in labels {
        writeln!(w, "{}", serde_json::to_string(l).expect("label serializes"))?;
    }
    w.flush()?;
    Ok(())
}

/// Labels from the tag at the start of each volunteer's first reply.
/// Replies without a tag (real data) produce no label.
pub fn simulated_labels(events: &[CampaignEvent]) -> Vec<VolunteerLabel> {
    let mut members: BTreeMap<&crate::model::ConversationId, &[UserId]> = BTreeMap::new();
    let mut labeled = BTreeSet::new();
    let mut out = Vec::new();
    for e in events {
        match e.kind {
            EventKind::OutboundCall => {
                members.insert(&e.conv, &e.mentions);
            }
            EventKind::InboundReply => {
                let user = UserId::new(e.actor.clone());
                if !members.get(&e.conv).is_some_and(|m| m.contains(&user)) || labeled.contains(&user) {
                    continue;
                }
                let text = e.text.as_deref().unwrap_or("");
                let label = if text.starts_with(ON_TOPIC_TAG) {
                    Label::OnTopic
                } else if text.starts_with(OFF_TOPIC_TAG) {
                    Label::OffTopic
                } else {
                    continue;
                };
                labeled.insert(user.clone());
                out.push(VolunteerLabel {
                    user_id: user,
                    label,
                    coder_id: SIM_CODER.to_string(),
                });
            }
            _ => {}
        }
    }
    out
}
