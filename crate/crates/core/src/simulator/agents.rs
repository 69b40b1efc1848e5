use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Geometric;

use crate::model::{MessageId, StrategyId, Timestamp, UserId, MS_PER_SECOND};
use crate::platform::{InboundItem, InboundKind};

use super::{ArmPropensity, ProfileSpec, SimulationConfig, OFF_TOPIC_TAG, ON_TOPIC_TAG};

const MIN_DELAY_SECS: f64 = 60.0;
const MAX_DELAY_SECS: f64 = 6.0 * 3600.0;

/// Mutable per-agent state.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub user_id: UserId,
    /// Index into the population's profile mixture.
    pub profile: usize,
    /// Replies this agent will send at most, over its whole life.
    pub max_turns: u32,
    pub turns_used: u32,
    /// Drawn at the first reply and kept.
    pub on_topic: Option<bool>,
}

/// Flattened view of one agent's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentProfile {
    pub user_id: UserId,
    pub reply_propensity: BTreeMap<StrategyId, f64>,
    /// (toward bot messages, toward fellow members' replies)
    pub interaction_propensity: BTreeMap<StrategyId, (f64, f64)>,
    pub on_topic_probability: BTreeMap<StrategyId, f64>,
    pub max_turns: u32,
    pub post_rate: f64,
}

#[derive(Debug, Clone)]
pub struct Population {
    pub agents: Vec<Agent>,
    pub profiles: Vec<ProfileSpec>,
    index: HashMap<UserId, usize>,
}

impl Population {
    pub fn new<R: Rng + ?Sized>(config: &SimulationConfig, rng: &mut R) -> Self {
        let profiles = config.profiles.clone();
        let weights = WeightedIndex::new(profiles.iter().map(|p| p.weight)).ok();
        let geometric: Vec<Geometric> = profiles
            .iter()
            .map(|p| Geometric::new(1.0 / p.mean_turns).expect("mean_turns >= 1"))
            .collect();
        let agents: Vec<Agent> = (0..config.population)
            .map(|i| {
                let profile = weights.as_ref().map_or(0, |w| w.sample(rng));
                Agent {
                    user_id: UserId::new(format!("u{i:05}")),
                    profile,
                    max_turns: 1 + geometric[profile].sample(rng).min(u32::MAX as u64 - 1) as u32,
                    turns_used: 0,
                    on_topic: None,
                }
            })
            .collect();
        let index = agents
            .iter()
            .enumerate()
            .map(|(i, a)| (a.user_id.clone(), i))
            .collect();
        Population { agents, profiles, index }
    }

    pub fn position(&self, user: &UserId) -> Option<usize> {
        self.index.get(user).copied()
    }

    pub fn profile_of(&self, i: usize, arms: &[StrategyId]) -> AgentProfile {
        let agent = &self.agents[i];
        let spec = &self.profiles[agent.profile];
        let per_arm = |f: &dyn Fn(ArmPropensity) -> f64| arms.iter().map(|a| (a.clone(), f(spec.arm(a)))).collect();
        AgentProfile {
            user_id: agent.user_id.clone(),
            reply_propensity: per_arm(&|p| p.reply),
            interaction_propensity: arms
                .iter()
                .map(|a| {
                    let p = spec.arm(a);
                    (a.clone(), (p.bot_interaction, p.volunteer_interaction))
                })
                .collect(),
            on_topic_probability: per_arm(&|p| p.on_topic),
            max_turns: agent.max_turns,
            post_rate: spec.post_rate,
        }
    }

    /// Total keyword posts per hour over the whole population.
    pub fn total_post_rate(&self) -> f64 {
        self.agents.iter().map(|a| self.profiles[a.profile].post_rate).sum()
    }
}

/// Sequential ids for everything the simulator creates.
#[derive(Debug, Clone, Default)]
pub struct IdSource {
    bot: u64,
    reply: u64,
    interaction: u64,
    post: u64,
}

impl IdSource {
    pub fn bot_message(&mut self) -> MessageId {
        self.bot += 1;
        MessageId::new(format!("m{}", self.bot))
    }

    pub fn reply(&mut self) -> MessageId {
        self.reply += 1;
        MessageId::new(format!("r{}", self.reply))
    }

    pub fn interaction(&mut self) -> MessageId {
        self.interaction += 1;
        MessageId::new(format!("i{}", self.interaction))
    }

    pub fn post(&mut self) -> MessageId {
        self.post += 1;
        MessageId::new(format!("p{}", self.post))
    }
}

/// A bot message as an agent receives it.
#[derive(Debug, Clone)]
pub struct ReceivedMessage {
    pub id: MessageId,
    pub strategy: StrategyId,
    pub topic: String,
    pub timestamp: Timestamp,
}

/// Log-uniform delay between one minute and six hours, in milliseconds.
pub fn reaction_delay<R: Rng + ?Sized>(rng: &mut R) -> i64 {
    let secs = rng
        .random_range(MIN_DELAY_SECS.ln()..=MAX_DELAY_SECS.ln())
        .exp();
    (secs * MS_PER_SECOND as f64).round() as i64
}

const ON_TOPIC_REPLIES: &[&str] = &[
    "Propongo vigilar el gasto público para frenar la {topic}",
    "Hay que exigir transparencia y denunciar la {topic}",
    "Podemos organizarnos por barrio contra la {topic} #propuesta",
    "Votar informados es la mejor respuesta a la {topic}",
];

const OFF_TOPIC_REPLIES: &[&str] = &[
    "¿Son bots? Qué raro hablar con bots",
    "who runs these bots anyway",
    "no le hablo a bots",
];

fn reply_text<R: Rng + ?Sized>(on_topic: bool, topic: &str, rng: &mut R) -> String {
    let (tag, pool) = if on_topic {
        (ON_TOPIC_TAG, ON_TOPIC_REPLIES)
    } else {
        (OFF_TOPIC_TAG, OFF_TOPIC_REPLIES)
    };
    let body = pool[rng.random_range(0..pool.len())].replace("{topic}", topic);
    format!("{tag} {body}")
}

fn interaction<R: Rng + ?Sized>(
    author: &UserId,
    target: &MessageId,
    at: Timestamp,
    supports_favorites: bool,
    rng: &mut R,
    ids: &mut IdSource,
) -> InboundItem {
    let kind = if supports_favorites && rng.random_bool(0.5) {
        InboundKind::Favorite
    } else {
        InboundKind::Retweet
    };
    InboundItem {
        seq: 0,
        kind,
        author: author.clone(),
        message_id: ids.interaction(),
        in_reply_to: Some(target.clone()),
        text: String::new(),
        timestamp: at + reaction_delay(rng),
    }
}

/// An agent's response to one bot message: maybe a reply (while under its
/// reply cap) and, independently, maybe a retweet or favorite.
pub fn react<R: Rng + ?Sized>(
    agent: &mut Agent,
    profile: &ProfileSpec,
    message: &ReceivedMessage,
    supports_favorites: bool,
    rng: &mut R,
    ids: &mut IdSource,
) -> Vec<InboundItem> {
    let arm = profile.arm(&message.strategy);
    let mut out = Vec::new();
    if agent.turns_used < agent.max_turns && rng.random_bool(arm.reply) {
        agent.turns_used += 1;
        let on_topic = *agent.on_topic.get_or_insert_with(|| rng.random_bool(arm.on_topic));
        out.push(InboundItem {
            seq: 0,
            kind: InboundKind::ReplyToBot,
            author: agent.user_id.clone(),
            message_id: ids.reply(),
            in_reply_to: Some(message.id.clone()),
            text: reply_text(on_topic, &message.topic, rng),
            timestamp: message.timestamp + reaction_delay(rng),
        });
    }
    if rng.random_bool(arm.bot_interaction) {
        out.push(interaction(
            &agent.user_id,
            &message.id,
            message.timestamp,
            supports_favorites,
            rng,
            ids,
        ));
    }
    out
}

/// A fellow member's response to a reply in their conversation.
pub fn react_to_reply<R: Rng + ?Sized>(
    agent: &Agent,
    profile: &ProfileSpec,
    strategy: &StrategyId,
    reply: &InboundItem,
    supports_favorites: bool,
    rng: &mut R,
    ids: &mut IdSource,
) -> Option<InboundItem> {
    let p = profile.arm(strategy).volunteer_interaction;
    rng.random_bool(p).then(|| {
        interaction(
            &agent.user_id,
            &reply.message_id,
            reply.timestamp,
            supports_favorites,
            rng,
            ids,
        )
    })
}
