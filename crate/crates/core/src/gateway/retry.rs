//! Exponential backoff for transient provider failures.

use std::time::Duration;

use super::GatewayError;

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl RetryPolicy {
    pub fn new(max_retries: u32) -> Self {
        RetryPolicy { max_retries, base_delay: Duration::from_millis(250), max_delay: Duration::from_secs(8) }
    }

    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    /// Runs `op` until it succeeds, fails non-transiently, or the retries run out.
    ///
    /// `op` receives the 1-based attempt number. Total attempts never exceed
    /// `1 + max_retries`. The final transient error is reported with the
    /// attempt count filled in.
    pub fn run<T>(&self, sleeper: &dyn Sleeper, mut op: impl FnMut(u32) -> Result<T, GatewayError>) -> Result<T, GatewayError> {
        let mut attempt = 1;
        loop {
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transient() && attempt <= self.max_retries => {
                    let wait = self.delay(attempt);
                    log::warn!("provider attempt {attempt} failed ({e}); retrying in {wait:?}");
                    sleeper.sleep(wait);
                    attempt += 1;
                }
                Err(e) => return Err(with_attempts(e, attempt)),
            }
        }
    }
}

fn with_attempts(e: GatewayError, attempts: u32) -> GatewayError {
    match e {
        GatewayError::RateLimited { .. } => GatewayError::RateLimited { attempts },
        GatewayError::Timeout { .. } => GatewayError::Timeout { attempts },
        GatewayError::Unavailable { status, .. } => GatewayError::Unavailable { status, attempts },
        other => other,
    }
}
