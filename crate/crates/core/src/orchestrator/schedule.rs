use std::collections::BTreeMap;

use rand::Rng;

use crate::model::{Jitter, Timestamp, MS_PER_SECOND};

/// Time-ordered queue of pending work. Items due at the same instant come
/// out in insertion order.
#[derive(Debug, Clone)]
pub struct DispatchSchedule<T> {
    queue: BTreeMap<(Timestamp, u64), T>,
    inserted: u64,
}

impl<T> Default for DispatchSchedule<T> {
    fn default() -> Self {
        DispatchSchedule {
            queue: BTreeMap::new(),
            inserted: 0,
        }
    }
}

impl<T> DispatchSchedule<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, due: Timestamp, item: T) {
        self.inserted += 1;
        self.queue.insert((due, self.inserted), item);
    }

    pub fn next_due(&self) -> Option<Timestamp> {
        self.queue.keys().next().map(|(t, _)| *t)
    }

    /// Earliest item if it is due at or before `now`.
    pub fn pop_due(&mut self, now: Timestamp) -> Option<(Timestamp, T)> {
        match self.queue.first_key_value() {
            Some(((t, _), _)) if *t <= now => self.queue.pop_first().map(|((t, _), v)| (t, v)),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

/// Uniform delay in `[min_delay, max_delay]` seconds, in milliseconds.
pub fn draw_delay<R: Rng + ?Sized>(jitter: &Jitter, rng: &mut R) -> i64 {
    let secs = if jitter.max_delay > jitter.min_delay {
        rng.random_range(jitter.min_delay..=jitter.max_delay)
    } else {
        jitter.min_delay
    };
    (secs * MS_PER_SECOND as f64).round() as i64
}

/// `n` sorted offsets in `[0, min_delay)` seconds, in milliseconds. Calls of
/// one round are spread over these so they never overlap the next round.
pub fn round_offsets<R: Rng + ?Sized>(jitter: &Jitter, n: usize, rng: &mut R) -> Vec<i64> {
    let span = (jitter.min_delay * MS_PER_SECOND as f64) as i64;
    let mut offsets: Vec<i64> = (0..n)
        .map(|_| if span > 0 { rng.random_range(0..span) } else { 0 })
        .collect();
    offsets.sort_unstable();
    offsets
}
