//! Shared token bucket for per-provider request pacing.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use super::retry::Sleeper;

#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    /// `rate` tokens per second, bursting up to `max(rate, 1)`.
    pub fn new(rate: f64) -> Self {
        let capacity = rate.max(1.0);
        TokenBucket { rate, capacity, state: Mutex::new((capacity, Instant::now())) }
    }

    /// Takes one token, returning how long the caller must wait first.
    pub fn reserve(&self) -> Duration {
        self.reserve_at(Instant::now())
    }

    fn reserve_at(&self, now: Instant) -> Duration {
        let mut guard = self.state.lock().expect("token bucket poisoned");
        let (tokens, last) = *guard;
        let refilled = (tokens + now.saturating_duration_since(last).as_secs_f64() * self.rate).min(self.capacity);
        let remaining = refilled - 1.0;
        *guard = (remaining, now);
        if remaining >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-remaining / self.rate)
        }
    }

    pub fn acquire(&self, sleeper: &dyn Sleeper) {
        let wait = self.reserve();
        if !wait.is_zero() {
            sleeper.sleep(wait);
        }
    }
}
