use std::collections::BTreeMap;

use crate::model::{Label, UserId, VolunteerLabel};

use super::labels::{by_user, FINAL_CODER};
use super::AnalyticsError;

/// 2×2 agreement counts between coders A and B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AgreementTable {
    pub both_on: u64,
    pub a_on_b_off: u64,
    pub a_off_b_on: u64,
    pub both_off: u64,
}

impl AgreementTable {
    pub fn total(&self) -> u64 {
        self.both_on + self.a_on_b_off + self.a_off_b_on + self.both_off
    }

    pub fn transposed(&self) -> Self {
        AgreementTable {
            a_on_b_off: self.a_off_b_on,
            a_off_b_on: self.a_on_b_off,
            ..*self
        }
    }
}

/// κ = (p_o − p_e) / (1 − p_e), chance agreement from the marginals.
pub fn kappa_from_table(t: &AgreementTable) -> Result<f64, AnalyticsError> {
    let n = t.total();
    if n == 0 {
        return Err(AnalyticsError::EmptyInput);
    }
    let n = n as f64;
    let p_o = (t.both_on + t.both_off) as f64 / n;
    let a_on = (t.both_on + t.a_on_b_off) as f64 / n;
    let b_on = (t.both_on + t.a_off_b_on) as f64 / n;
    let p_e = a_on * b_on + (1.0 - a_on) * (1.0 - b_on);
    if p_e == 1.0 {
        return if p_o == 1.0 {
            Ok(1.0)
        } else {
            Err(AnalyticsError::DegenerateMarginals)
        };
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

fn paired(
    a: &[VolunteerLabel],
    b: &[VolunteerLabel],
) -> Result<Vec<(UserId, Label, Label)>, AnalyticsError> {
    let (ma, mb) = (by_user(a)?, by_user(b)?);
    if let Some(u) = ma.keys().find(|u| !mb.contains_key(*u)) {
        return Err(AnalyticsError::LabelMismatch(format!("{u} only labeled by the first coder")));
    }
    if let Some(u) = mb.keys().find(|u| !ma.contains_key(*u)) {
        return Err(AnalyticsError::LabelMismatch(format!("{u} only labeled by the second coder")));
    }
    Ok(ma.into_iter().map(|(u, la)| {
        let lb = mb[&u];
        (u, la, lb)
    }).collect())
}

pub fn cohen_kappa(a: &[VolunteerLabel], b: &[VolunteerLabel]) -> Result<f64, AnalyticsError> {
    let mut t = AgreementTable::default();
    for (_, la, lb) in paired(a, b)? {
        match (la, lb) {
            (Label::OnTopic, Label::OnTopic) => t.both_on += 1,
            (Label::OnTopic, Label::OffTopic) => t.a_on_b_off += 1,
            (Label::OffTopic, Label::OnTopic) => t.a_off_b_on += 1,
            (Label::OffTopic, Label::OffTopic) => t.both_off += 1,
        }
    }
    kappa_from_table(&t)
}

/// Agreements pass through; disagreements take the tiebreaker's label.
pub fn merge_labels(
    a: &[VolunteerLabel],
    b: &[VolunteerLabel],
    tiebreak: &[VolunteerLabel],
) -> Result<Vec<VolunteerLabel>, AnalyticsError> {
    let third: BTreeMap<UserId, Label> = by_user(tiebreak)?;
    paired(a, b)?
        .into_iter()
        .map(|(user_id, la, lb)| {
            let label = if la == lb {
                la
            } else {
                *third.get(&user_id).ok_or_else(|| {
                    AnalyticsError::LabelMismatch(format!("{user_id} disputed but has no tiebreak label"))
                })?
            };
            Ok(VolunteerLabel {
                user_id,
                label,
                coder_id: FINAL_CODER.to_string(),
            })
        })
        .collect()
}
