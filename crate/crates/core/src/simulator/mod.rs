//! Agent population behind [`SimulatedPlatform`].
//!
//! Agents post keyword tweets as a Poisson process and react to bot
//! messages with per-arm propensities. All randomness flows from one seed,
//! and with the virtual clock a run is a pure function of config and seed.

mod agents;
mod calibrate;
mod platform;
mod posts;

pub use agents::{react, react_to_reply, Agent, AgentProfile, IdSource, Population, ReceivedMessage};
pub use calibrate::{calibrate_reply_propensities, measure_arms, ArmMeasurement, CalibrationTarget};
pub use platform::SimulatedPlatform;
pub use posts::{generate_public_posts, PublicPostGenerator};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{StrategyId, Timestamp};

/// 2015-04-26T00:00:00Z, the default start of simulated time.
pub const DEFAULT_START_TS: Timestamp = 1_430_006_400_000;

/// Text tags the simulator puts in replies so label fixtures can be derived.
pub const ON_TOPIC_TAG: &str = "[on-topic]";
pub const OFF_TOPIC_TAG: &str = "[off-topic]";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmPropensity {
    /// Probability of replying to one received bot message.
    pub reply: f64,
    /// Probability of retweeting or favoriting one received bot message.
    pub bot_interaction: f64,
    /// Probability of retweeting or favoriting a fellow member's reply.
    pub volunteer_interaction: f64,
    /// Probability that the agent's replies are on topic.
    pub on_topic: f64,
}

/// One component of the population mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub name: String,
    #[serde(default = "one")]
    pub weight: f64,
    /// Keyword posts per simulated hour.
    pub post_rate: f64,
    /// Mean of the geometric cap on replies per agent.
    #[serde(default = "default_mean_turns")]
    pub mean_turns: f64,
    /// Used for arms missing from `arms`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<ArmPropensity>,
    #[serde(default)]
    pub arms: BTreeMap<StrategyId, ArmPropensity>,
}

fn one() -> f64 {
    1.0
}

fn default_mean_turns() -> f64 {
    2.0
}

impl ProfileSpec {
    pub fn arm(&self, id: &StrategyId) -> ArmPropensity {
        self.arms.get(id).copied().or(self.default).unwrap_or(ArmPropensity {
            reply: 0.0,
            bot_interaction: 0.0,
            volunteer_interaction: 0.0,
            on_topic: 0.0,
        })
    }

    fn probabilities(&self) -> impl Iterator<Item = (String, f64)> + '_ {
        self.arms
            .iter()
            .map(|(id, a)| (id.to_string(), *a))
            .chain(self.default.map(|a| ("default".to_string(), a)))
            .flat_map(|(arm, a)| {
                [
                    (format!("{arm}.reply"), a.reply),
                    (format!("{arm}.bot_interaction"), a.bot_interaction),
                    (format!("{arm}.volunteer_interaction"), a.volunteer_interaction),
                    (format!("{arm}.on_topic"), a.on_topic),
                ]
            })
    }
}

/// A profile file: a mixture of agent profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationProfile {
    pub profiles: Vec<ProfileSpec>,
}

impl SimulationProfile {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, SimulationError> {
        let text = fs::read_to_string(path).map_err(|e| SimulationError::Profile(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| SimulationError::Profile(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Clock {
    /// Time jumps straight to the next event.
    #[default]
    Virtual,
    /// Real sleeps, `factor` simulated seconds per real second.
    AcceleratedReal { factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateLimit {
    pub max_posts: usize,
    pub window_secs: f64,
}

/// Injected platform misbehaviour, for exercising recovery paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Faults {
    /// Every n-th stream read fails with an interruption.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interrupt_every: Option<u64>,
    /// Every n-th new post is rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reject_every: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit: Option<RateLimit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub population: usize,
    /// Profile file, relative to the campaign config. Ignored when
    /// `profiles` is given inline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_file: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub profiles: Vec<ProfileSpec>,
    #[serde(default)]
    pub clock: Clock,
    /// Defaults to a value derived from the campaign seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_start")]
    pub start_ts: Timestamp,
    #[serde(default)]
    pub faults: Faults,
}

fn default_start() -> Timestamp {
    DEFAULT_START_TS
}

impl SimulationConfig {
    pub fn new(population: usize, profiles: Vec<ProfileSpec>) -> Self {
        SimulationConfig {
            population,
            profile_file: None,
            profiles,
            clock: Clock::Virtual,
            seed: None,
            start_ts: DEFAULT_START_TS,
            faults: Faults::default(),
        }
    }

    /// Inline the profile file, resolving it against `base_dir`.
    pub fn resolve(&mut self, base_dir: &Path) -> Result<(), SimulationError> {
        if self.profiles.is_empty() {
            if let Some(file) = &self.profile_file {
                self.profiles = SimulationProfile::load(&base_dir.join(file))?.profiles;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        if self.profiles.is_empty() {
            return Err(SimulationError::Profile("no agent profiles".into()));
        }
        for p in &self.profiles {
            if !(p.weight > 0.0 && p.weight.is_finite()) {
                return Err(SimulationError::Profile(format!("{}: weight must be positive", p.name)));
            }
            if !(p.post_rate >= 0.0 && p.post_rate.is_finite()) {
                return Err(SimulationError::Profile(format!("{}: post_rate must be non-negative", p.name)));
            }
            if p.mean_turns.is_nan() || p.mean_turns < 1.0 {
                return Err(SimulationError::Profile(format!("{}: mean_turns must be at least 1", p.name)));
            }
            for (field, value) in p.probabilities() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(SimulationError::Profile(format!(
                        "{}: {field} = {value} is not a probability",
                        p.name
                    )));
                }
            }
        }
        if let Some(n) = self.faults.interrupt_every {
            if n < 2 {
                return Err(SimulationError::Profile("interrupt_every must be at least 2".into()));
            }
        }
        if let Clock::AcceleratedReal { factor } = self.clock {
            if factor.is_nan() || factor <= 0.0 {
                return Err(SimulationError::Profile("clock factor must be positive".into()));
            }
        }
        Ok(())
    }

    /// Seed for the simulator's own random stream.
    pub fn effective_seed(&self, campaign_seed: u64) -> u64 {
        self.seed
            .unwrap_or_else(|| campaign_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulationError {
    #[error("simulation profile: {0}")]
    Profile(String),
    #[error("campaign config has no simulation section")]
    Missing,
}
