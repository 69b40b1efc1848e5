use std::fmt::Write;

use serde_json::json;

use super::metrics::{ArmMetrics, MetricsReport};
use super::AnovaResult;

fn pct(x: f64) -> String {
    format!("{:.0}%", x * 100.0)
}

/// Plain-text table: one column per arm plus the total.
pub fn render_table(report: &MetricsReport) -> String {
    let columns: Vec<&ArmMetrics> = report.arms.iter().chain([&report.totals]).collect();
    type Row = (&'static str, fn(&ArmMetrics) -> String);
    let rows: &[Row] = &[
        ("Calls to action", |m| m.calls_to_action.to_string()),
        ("Follow-ups", |m| m.followups.to_string()),
        ("Outbound messages", |m| m.outbound_messages.to_string()),
        ("Targeted users", |m| m.targeted.to_string()),
        ("Volunteers", |m| m.volunteers.to_string()),
        ("Replies", |m| m.volunteer_replies.to_string()),
        ("Reply rate", |m| pct(m.reply_rate)),
        ("Interactions bot", |m| m.interactions_bot.to_string()),
        ("Interactions volunteers", |m| m.interactions_volunteers.to_string()),
        ("Bot interaction rate", |m| pct(m.bot_interaction_rate)),
        ("Volunteer interaction rate", |m| pct(m.volunteer_interaction_rate)),
        ("On-topic volunteers", |m| {
            m.on_topic.map_or("-".to_string(), |o| format!("{} ({}/{})", pct(o.fraction), o.on_topic, o.labeled))
        }),
    ];
    let label_width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(_, f)| columns.iter().map(|m| f(m)).collect())
        .collect();
    let widths: Vec<usize> = (0..columns.len())
        .map(|c| {
            cells
                .iter()
                .map(|row| row[c].len())
                .chain([columns[c].strategy.len()])
                .max()
                .unwrap_or(0)
        })
        .collect();

    let mut out = String::new();
    let _ = write!(out, "{:label_width$}", "");
    for (m, w) in columns.iter().zip(&widths) {
        let _ = write!(out, "  {:>w$}", m.strategy, w = w);
    }
    out.push('\n');
    for ((label, _), row) in rows.iter().zip(&cells) {
        let _ = write!(out, "{label:label_width$}");
        for (cell, w) in row.iter().zip(&widths) {
            let _ = write!(out, "  {cell:>w$}");
        }
        out.push('\n');
    }

    let tests = [
        ("contributors", &report.anova.contributors),
        ("replies per message", &report.anova.replies_per_message),
        ("bot interactions per message", &report.anova.bot_interactions_per_message),
        ("volunteer interactions per reply", &report.anova.volunteer_interactions_per_reply),
    ];
    out.push('\n');
    for (name, result) in tests {
        match result {
            Some(r) => {
                let _ = writeln!(out, "ANOVA {name}: {}", describe(r));
            }
            None => {
                let _ = writeln!(out, "ANOVA {name}: not enough data");
            }
        }
    }
    out
}

fn describe(r: &AnovaResult) -> String {
    let p = if r.p_value < 0.001 {
        "p < 0.001".to_string()
    } else {
        format!("p = {:.3}", r.p_value)
    };
    format!("F({},{}) = {:.2}, {p}", r.df_between, r.df_within, r.f)
}

/// One JSON object per arm, then the total, then the tests.
pub fn render_json_lines(report: &MetricsReport) -> String {
    let mut out = String::new();
    for m in report.arms.iter().chain([&report.totals]) {
        let mut v = serde_json::to_value(m).expect("metrics serialize");
        v["record"] = json!(if m.strategy == "total" { "total" } else { "arm" });
        out.push_str(&v.to_string());
        out.push('\n');
    }
    let tests = [
        ("contributors", &report.anova.contributors),
        ("replies_per_message", &report.anova.replies_per_message),
        ("bot_interactions_per_message", &report.anova.bot_interactions_per_message),
        ("volunteer_interactions_per_reply", &report.anova.volunteer_interactions_per_reply),
    ];
    for (name, result) in tests {
        let v = match result {
            Some(r) => json!({
                "record": "anova",
                "test": name,
                "df_between": r.df_between,
                "df_within": r.df_within,
                // JSON has no infinity; a separating test is reported as null.
                "f": if r.f.is_finite() { json!(r.f) } else { json!(null) },
                "p_value": r.p_value,
            }),
            None => json!({"record": "anova", "test": name, "f": null}),
        };
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}
