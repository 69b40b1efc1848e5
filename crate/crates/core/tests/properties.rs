//! Property tests for the framework's invariants.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rally_core::analytics::{cohen_kappa, compute_metrics, mann_whitney_rho, one_way_anova, simulated_labels};
use rally_core::eventlog::{audit, decode_event, encode_event};
use rally_core::fixtures::{english_strategies, standard_config};
use rally_core::model::{
    CampaignConfig, CampaignEvent, ContactState, ConversationId, ConversationRecord, EventKind, Label,
    StrategyId, UserId, VolunteerLabel,
};
use rally_core::orchestrator::{ArmAllocator, CampaignState};
use rally_core::platform::{InboundItem, InboundKind};
use rally_core::simulator::SimulatedPlatform;
use rally_core::strategy::{compose_call, compose_followup, select_followup};
use rally_core::targeting::{admit, match_target, Admission, ContactRegistry};
use rally_core::{run_campaign, validate_log, RunOptions};

fn small_config(seed: u64, population: usize) -> CampaignConfig {
    let mut config = standard_config();
    config.random_seed = seed;
    config.groups_per_strategy_per_topic = 2;
    config.platform.simulation.as_mut().unwrap().population = population;
    config
}

fn campaign(config: &CampaignConfig) -> Vec<CampaignEvent> {
    let mut platform = SimulatedPlatform::from_campaign(config).unwrap();
    run_campaign(config, &mut platform, RunOptions::default()).unwrap().events
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn campaign_logs_hold_every_invariant(seed in any::<u64>(), population in 40usize..400) {
        let config = small_config(seed, population);
        let events = campaign(&config);
        prop_assert!(validate_log(&events).is_ok());
        prop_assert!(audit::one_touch_violations(&events).is_empty());
        prop_assert!(audit::max_arm_spread(&events, &config.strategy_ids()) <= 1);
        let budget: BTreeMap<StrategyId, u8> =
            config.strategies.iter().map(|s| (s.id.clone(), s.messages_per_turn)).collect();
        prop_assert!(audit::budget_violations(&events, &budget).is_empty());
        prop_assert!(audit::unprompted_followups(&events).is_empty());

        // Follow-up questions never repeat within a conversation.
        let mut asked: BTreeSet<(&ConversationId, usize)> = BTreeSet::new();
        for e in events.iter().filter(|e| e.kind == EventKind::OutboundFollowup) {
            prop_assert!(asked.insert((&e.conv, e.question.unwrap())));
        }
        // Every call mentions a full group unless flagged partial.
        for e in events.iter().filter(|e| e.kind == EventKind::OutboundCall) {
            prop_assert!(e.partial || e.mentions.len() == config.group_size);
        }
        // The simulator only answers bot messages.
        let bot_msgs: BTreeSet<_> = events.iter().filter(|e| e.kind.is_outbound()).filter_map(|e| e.msg.clone()).collect();
        let replies: BTreeSet<_> = events.iter().filter(|e| e.kind == EventKind::InboundReply).filter_map(|e| e.msg.clone()).collect();
        for e in events.iter().filter(|e| e.kind == EventKind::InboundReply) {
            prop_assert!(bot_msgs.contains(e.reply_to.as_ref().unwrap()));
        }
        for e in events.iter().filter(|e| e.kind.is_interaction()) {
            let target = e.reply_to.as_ref().unwrap();
            prop_assert!(bot_msgs.contains(target) || replies.contains(target));
        }
    }

    #[test]
    fn same_seed_gives_identical_logs(seed in any::<u64>()) {
        let config = small_config(seed, 200);
        let a: Vec<String> = campaign(&config).iter().map(encode_event).collect();
        let b: Vec<String> = campaign(&config).iter().map(encode_event).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn logs_fold_into_consistent_state(seed in any::<u64>()) {
        let config = small_config(seed, 200);
        let events = campaign(&config);
        let state = CampaignState::from_events(&events);
        for record in state.records.values() {
            let spec = config.strategy(&record.strategy).unwrap();
            prop_assert!(record.used_followups.iter().all(|i| *i < spec.followups.len()));
            let distinct: BTreeSet<_> = record.members.iter().collect();
            prop_assert_eq!(distinct.len(), record.members.len());
            if !record.used_followups.is_empty() {
                prop_assert!(!record.replies.is_empty());
            }
        }
        for e in events.iter().filter(|e| e.kind == EventKind::InboundReply) {
            prop_assert!(state.records.contains_key(&e.conv), "orphan reply {}", e.seq);
        }
        // The registry rebuilt from the log is the one the run kept, minus
        // users still waiting in a group buffer.
        let rebuilt = ContactRegistry::from_events(&events);
        let durable = state.registry.durable();
        prop_assert_eq!(rebuilt.iter().collect::<Vec<_>>(), durable.iter().collect::<Vec<_>>());
    }

    #[test]
    fn events_round_trip(seed in any::<u64>()) {
        let events = campaign(&small_config(seed, 120));
        for e in &events {
            let line = encode_event(e);
            prop_assert_eq!(&decode_event(&line).unwrap(), e);
        }
    }

    #[test]
    fn metrics_identities(seed in any::<u64>()) {
        let events = campaign(&small_config(seed, 200));
        let labels = simulated_labels(&events);
        let report = compute_metrics(&events, Some(&labels)).unwrap();
        let mut repliers = BTreeSet::new();
        let mut members: BTreeMap<&ConversationId, &[UserId]> = BTreeMap::new();
        for e in &events {
            if e.kind == EventKind::OutboundCall {
                members.insert(&e.conv, &e.mentions);
            }
            if e.kind == EventKind::InboundReply {
                let u = UserId::new(e.actor.clone());
                if members.get(&e.conv).is_some_and(|ms| ms.contains(&u)) {
                    repliers.insert(u);
                }
            }
        }
        let sum: u64 = report.arms.iter().map(|a| a.volunteers).sum();
        prop_assert_eq!(sum, repliers.len() as u64);
        prop_assert_eq!(report.totals.volunteers, sum);
        for a in report.arms.iter().chain([&report.totals]) {
            prop_assert_eq!(a.outbound_messages, a.calls_to_action + a.quotes + a.followups);
            prop_assert!(a.reply_rate >= 0.0);
            // A member answers a bot message at most once.
            prop_assert!(a.volunteer_replies <= a.outbound_messages * 3);
            prop_assert!(a.volunteers <= a.targeted);
        }
        prop_assert_eq!(compute_metrics(&events, Some(&labels)).unwrap(), report);
    }

    #[test]
    fn admitted_users_are_unique(stream in prop::collection::vec((0u32..30, prop::bool::ANY), 1..300)) {
        let config = standard_config();
        let handles = config.bot_handles();
        let mut registry = ContactRegistry::new();
        let mut admitted = Vec::new();
        for (i, (user, on_topic)) in stream.into_iter().enumerate() {
            let item = InboundItem {
                seq: i as u64 + 1,
                kind: InboundKind::PublicPost,
                author: UserId::new(format!("u{user:05}")),
                message_id: rally_core::model::MessageId::new(format!("p{i}")),
                in_reply_to: None,
                text: if on_topic { "Impunity again".into() } else { "lunch".into() },
                timestamp: i as i64,
            };
            if let Some(mut t) = match_target(&item, &config.topics, &handles) {
                if admit(&mut t, &mut registry) == Admission::Admitted {
                    admitted.push(t.user_id);
                }
            }
        }
        let distinct: BTreeSet<_> = admitted.iter().collect();
        prop_assert_eq!(distinct.len(), admitted.len());
        for u in &admitted {
            prop_assert_eq!(registry.state(u), ContactState::Queued);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn allocation_is_block_balanced(arms in 1usize..6, quota in 1u64..20, seed in any::<u64>()) {
        let ids: Vec<StrategyId> = (0..arms).map(|i| StrategyId::new(format!("a{i}"))).collect();
        let mut alloc = ArmAllocator::new(ids.clone(), quota);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut all = Vec::new();
        while let Ok(a) = alloc.assign(&mut rng) {
            all.push(a);
        }
        prop_assert_eq!(all.len() as u64, arms as u64 * quota);
        for block in all.chunks(arms) {
            let distinct: BTreeSet<_> = block.iter().collect();
            prop_assert_eq!(distinct.len(), block.len());
        }
    }

    #[test]
    fn turns_respect_budget_and_never_repeat(seed in any::<u64>(), topic in "[a-z]{3,12}") {
        let members: Vec<UserId> = (0..3).map(|i| UserId::new(format!("u{i:05}"))).collect();
        let conv = ConversationId::new("c1");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for spec in english_strategies() {
            let call = compose_call(&spec, &topic, &members, &conv, 140).unwrap();
            prop_assert_eq!(call.len(), spec.messages_per_turn as usize);
            let mut record = ConversationRecord::new(conv.clone(), topic.clone(), spec.id.clone(), members.clone());
            let mut seen = BTreeSet::new();
            while let Some(q) = select_followup(&record, &spec, &mut rng) {
                prop_assert!(seen.insert(q));
                let turn = compose_followup(&spec, &topic, &members, q, &conv, 140).unwrap();
                prop_assert_eq!(turn.len(), spec.messages_per_turn as usize);
                prop_assert!(turn.iter().all(|m| m.rendered().chars().count() <= 140));
                record.used_followups.insert(q);
            }
            prop_assert_eq!(seen.len(), spec.followups.len());
        }
    }

    #[test]
    fn rho_is_invariant_under_monotone_transforms(
        a in prop::collection::vec(0.0f64..1.0, 1..12),
        b in prop::collection::vec(0.0f64..1.0, 1..12),
    ) {
        let rho = mann_whitney_rho(&a, &b);
        let f = |x: &f64| (3.0 * x).exp() + x.powi(3);
        let ta: Vec<f64> = a.iter().map(f).collect();
        let tb: Vec<f64> = b.iter().map(f).collect();
        prop_assert!((mann_whitney_rho(&ta, &tb) - rho).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&rho));
        prop_assert!((rho + mann_whitney_rho(&b, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_is_symmetric(values in prop::collection::vec((prop::bool::ANY, prop::bool::ANY), 1..80)) {
        let label = |on: bool| if on { Label::OnTopic } else { Label::OffTopic };
        let coder = |name: &str, pick: &dyn Fn(&(bool, bool)) -> bool| -> Vec<VolunteerLabel> {
            values
                .iter()
                .enumerate()
                .map(|(i, v)| VolunteerLabel {
                    user_id: UserId::new(format!("u{i}")),
                    label: label(pick(v)),
                    coder_id: name.to_string(),
                })
                .collect()
        };
        let a = coder("a", &|v| v.0);
        let b = coder("b", &|v| v.1);
        match (cohen_kappa(&a, &b), cohen_kappa(&b, &a)) {
            (Ok(x), Ok(y)) => {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&x));
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "asymmetric failure"),
        }
    }

    #[test]
    fn anova_is_nonnegative_and_shift_invariant(
        groups in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 2..10), 2..5),
        shift in -100.0f64..100.0,
    ) {
        let Ok(r) = one_way_anova(&groups) else { return Ok(()) };
        prop_assert!(r.f >= 0.0);
        prop_assert_eq!(r.df_between, groups.len() - 1);
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        let shifted: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|x| x + shift).collect()).collect();
        let s = one_way_anova(&shifted).unwrap();
        if r.f.is_finite() && r.f > 1e-6 {
            prop_assert!((s.f - r.f).abs() <= 1e-6 * r.f.max(1.0));
        }
    }
}
