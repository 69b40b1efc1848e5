use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::StrategyId;

use super::OrchestratorError;

/// Block-randomized arm assignment with per-arm user quotas.
///
/// Arms are dealt from shuffled permutation blocks, so within every block
/// each arm is assigned once. Arms at quota are skipped.
#[derive(Debug, Clone)]
pub struct ArmAllocator {
    arms: Vec<StrategyId>,
    block: Vec<StrategyId>,
    cursor: usize,
    assigned: BTreeMap<StrategyId, u64>,
    quota: u64,
}

impl ArmAllocator {
    pub fn new(arms: Vec<StrategyId>, quota: u64) -> Self {
        let assigned = arms.iter().map(|a| (a.clone(), 0)).collect();
        ArmAllocator {
            arms,
            block: Vec::new(),
            cursor: 0,
            assigned,
            quota,
        }
    }

    pub fn assign<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<StrategyId, OrchestratorError> {
        if self.is_exhausted() {
            return Err(OrchestratorError::AllQuotasExhausted);
        }
        loop {
            if self.cursor >= self.block.len() {
                self.block = self.arms.clone();
                self.block.shuffle(rng);
                self.cursor = 0;
            }
            let arm = &self.block[self.cursor];
            self.cursor += 1;
            let count = self.assigned.get_mut(arm).expect("block holds known arms");
            if *count < self.quota {
                *count += 1;
                return Ok(arm.clone());
            }
        }
    }

    pub fn assigned(&self, arm: &StrategyId) -> u64 {
        self.assigned.get(arm).copied().unwrap_or(0)
    }

    pub fn remaining(&self, arm: &StrategyId) -> u64 {
        self.quota.saturating_sub(self.assigned(arm))
    }

    pub fn is_exhausted(&self) -> bool {
        self.assigned.values().all(|&c| c >= self.quota)
    }

    /// Give `n` assignments back, e.g. when a stale partial group is
    /// discarded.
    pub fn release(&mut self, arm: &StrategyId, n: u64) {
        if let Some(c) = self.assigned.get_mut(arm) {
            *c = c.saturating_sub(n);
        }
    }

    /// Count `n` slots as used without a user, e.g. the empty seats of a
    /// partial group that was dispatched anyway.
    pub fn forfeit(&mut self, arm: &StrategyId, n: u64) {
        if let Some(c) = self.assigned.get_mut(arm) {
            *c = (*c + n).min(self.quota);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arms() -> Vec<StrategyId> {
        vec![
            StrategyId::direct(),
            StrategyId::solidarity(),
            StrategyId::gain(),
            StrategyId::loss(),
        ]
    }

    #[test]
    fn every_block_holds_each_arm_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut alloc = ArmAllocator::new(arms(), 1000);
        for _ in 0..50 {
            let mut block: Vec<_> = (0..4).map(|_| alloc.assign(&mut rng).unwrap()).collect();
            block.sort();
            let mut expected = arms();
            expected.sort();
            assert_eq!(block, expected);
        }
    }

    #[test]
    fn eight_assignments_give_two_each() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut alloc = ArmAllocator::new(arms(), 100);
        for _ in 0..8 {
            alloc.assign(&mut rng).unwrap();
        }
        for a in arms() {
            assert_eq!(alloc.assigned(&a), 2);
        }
    }

    #[test]
    fn only_open_arm_is_returned() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut alloc = ArmAllocator::new(arms(), 1);
        for a in [StrategyId::direct(), StrategyId::gain(), StrategyId::loss()] {
            alloc.forfeit(&a, 1);
        }
        assert_eq!(alloc.assign(&mut rng).unwrap(), StrategyId::solidarity());
        assert!(matches!(
            alloc.assign(&mut rng),
            Err(OrchestratorError::AllQuotasExhausted)
        ));
    }

    #[test]
    fn full_campaign_quota() {
        // 94 groups of three per arm across both topics: 47 per topic.
        let mut rng = ChaCha8Rng::seed_from_u64(20150426);
        let mut per_arm: BTreeMap<StrategyId, u64> = BTreeMap::new();
        for _topic in 0..2 {
            let mut alloc = ArmAllocator::new(arms(), 47 * 3);
            while let Ok(a) = alloc.assign(&mut rng) {
                *per_arm.entry(a).or_default() += 1;
            }
        }
        assert_eq!(per_arm.values().sum::<u64>(), 376 * 3);
        for users in per_arm.values() {
            assert_eq!(users / 3, 94);
        }
    }

    #[test]
    fn release_reopens_quota() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut alloc = ArmAllocator::new(vec![StrategyId::direct()], 2);
        alloc.assign(&mut rng).unwrap();
        alloc.assign(&mut rng).unwrap();
        assert!(alloc.is_exhausted());
        alloc.release(&StrategyId::direct(), 2);
        assert_eq!(alloc.remaining(&StrategyId::direct()), 2);
    }
}
