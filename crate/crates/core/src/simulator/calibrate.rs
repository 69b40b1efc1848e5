//! Fit per-arm reply propensities so that simulated campaigns hit target
//! reply rates.
//!
//! A campaign's reply rate is not the per-message propensity: follow-ups
//! are only sent after replies and every agent has a reply cap, so the
//! mapping is found by running campaigns.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analytics::{compute_metrics, simulated_labels, AnalyticsError};
use crate::model::{CampaignConfig, StrategyId};
use crate::orchestrator::{run_campaign, OrchestratorError, RunOptions};

use super::{SimulatedPlatform, SimulationError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    pub strategy: StrategyId,
    pub reply_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMeasurement {
    pub strategy: StrategyId,
    pub reply_propensity: f64,
    pub reply_rate: f64,
    pub on_topic_fraction: f64,
    pub bot_interaction_rate: f64,
    pub volunteer_interaction_rate: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Campaign(#[from] OrchestratorError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

fn reply_propensity(config: &CampaignConfig, arm: &StrategyId) -> f64 {
    config
        .platform
        .simulation
        .as_ref()
        .and_then(|s| s.profiles.first())
        .map_or(0.0, |p| p.arm(arm).reply)
}

/// Run one simulated campaign and report what each arm produced.
pub fn measure_arms(config: &CampaignConfig) -> Result<Vec<ArmMeasurement>, CalibrationError> {
    let mut platform = SimulatedPlatform::from_campaign(config)?;
    let outcome = run_campaign(config, &mut platform, RunOptions::default())?;
    let labels = simulated_labels(&outcome.events);
    let report = compute_metrics(&outcome.events, Some(&labels))?;
    Ok(report
        .arms
        .iter()
        .map(|m| {
            let strategy = StrategyId::new(m.strategy.clone());
            ArmMeasurement {
                reply_propensity: reply_propensity(config, &strategy),
                reply_rate: m.reply_rate,
                on_topic_fraction: m.on_topic.map_or(0.0, |o| o.fraction),
                bot_interaction_rate: m.bot_interaction_rate,
                volunteer_interaction_rate: m.volunteer_interaction_rate,
                strategy,
            }
        })
        .collect())
}

/// Bisect every targeted arm's reply propensity at once, one campaign per
/// iteration, and return the fitted values. The propensity is set on
/// every profile of the mixture.
pub fn calibrate_reply_propensities(
    config: &CampaignConfig,
    targets: &[CalibrationTarget],
    iterations: usize,
) -> Result<BTreeMap<StrategyId, f64>, CalibrationError> {
    let mut config = config.clone();
    let mut bounds: BTreeMap<StrategyId, (f64, f64)> =
        targets.iter().map(|t| (t.strategy.clone(), (0.0, 1.0))).collect();
    let set = |config: &mut CampaignConfig, values: &BTreeMap<StrategyId, f64>| {
        let sim = config.platform.simulation.as_mut().expect("checked by from_campaign");
        for profile in &mut sim.profiles {
            for (arm, value) in values {
                let mut p = profile.arm(arm);
                p.reply = *value;
                profile.arms.insert(arm.clone(), p);
            }
        }
    };
    let midpoints = |bounds: &BTreeMap<StrategyId, (f64, f64)>| -> BTreeMap<StrategyId, f64> {
        bounds.iter().map(|(a, (lo, hi))| (a.clone(), (lo + hi) / 2.0)).collect()
    };

    config.platform.simulation.as_ref().ok_or(SimulationError::Missing)?;
    for i in 0..iterations {
        let mid = midpoints(&bounds);
        set(&mut config, &mid);
        let measured = measure_arms(&config)?;
        for t in targets {
            let rate = measured
                .iter()
                .find(|m| m.strategy == t.strategy)
                .map_or(0.0, |m| m.reply_rate);
            let b = bounds.get_mut(&t.strategy).expect("every target has bounds");
            if rate < t.reply_rate {
                b.0 = mid[&t.strategy];
            } else {
                b.1 = mid[&t.strategy];
            }
            log::info!(
                "iteration {i}: {} propensity {:.4} -> rate {rate:.4} (target {:.4})",
                t.strategy,
                mid[&t.strategy],
                t.reply_rate
            );
        }
    }
    Ok(midpoints(&bounds))
}
