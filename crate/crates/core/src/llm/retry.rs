use std::fmt;
use std::sync::Mutex;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Exponential backoff with full jitter: before retry `k` (1-based) the
/// caller sleeps a uniform draw from `[0, base * factor^(k-1)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    #[serde(with = "secs")]
    pub base: Duration,
    pub factor: f64,
    pub max_attempts: u32,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { base: Duration::from_secs(1), factor: 2.0, max_attempts: 5 }
    }
}

/// How one attempt failed.
#[derive(Debug)]
pub enum Failure<E> {
    Retryable(E),
    Fatal(E),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RetryError<E> {
    Fatal { attempts: u32, error: E },
    Exhausted { attempts: u32, last: E },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub outcome: String,
    /// Sleep taken after this attempt, if a retry followed.
    pub delay: Option<Duration>,
}

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

/// Records requested sleeps without sleeping.
#[derive(Debug, Default)]
pub struct RecordingSleeper {
    slept: Mutex<Vec<Duration>>,
}

impl RecordingSleeper {
    pub fn sleeps(&self) -> Vec<Duration> {
        self.slept.lock().unwrap().clone()
    }
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.slept.lock().unwrap().push(d);
    }
}

impl RetryPolicy {
    /// Upper bound of the jitter window before retry `k` (1-based).
    pub fn delay_cap(&self, retry: u32) -> Duration {
        let exp = self.factor.powi(retry.saturating_sub(1) as i32);
        Duration::try_from_secs_f64(self.base.as_secs_f64() * exp).unwrap_or(Duration::MAX)
    }

    /// Runs `op` until it succeeds, fails fatally, or `max_attempts` is
    /// reached. `op` receives the 1-based attempt number.
    pub fn execute<T, E: fmt::Display>(
        &self,
        sleeper: &dyn Sleeper,
        log: &mut Vec<AttemptRecord>,
        mut op: impl FnMut(u32) -> Result<T, Failure<E>>,
    ) -> Result<(T, u32), RetryError<E>> {
        let max = self.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match op(attempt) {
                Ok(v) => {
                    log.push(AttemptRecord { attempt, outcome: "ok".into(), delay: None });
                    return Ok((v, attempt));
                }
                Err(Failure::Fatal(error)) => {
                    log.push(AttemptRecord { attempt, outcome: error.to_string(), delay: None });
                    return Err(RetryError::Fatal { attempts: attempt, error });
                }
                Err(Failure::Retryable(e)) => {
                    if attempt >= max {
                        log.push(AttemptRecord { attempt, outcome: e.to_string(), delay: None });
                        return Err(RetryError::Exhausted { attempts: attempt, last: e });
                    }
                    let cap = self.delay_cap(attempt);
                    let delay = if cap.is_zero() {
                        cap
                    } else {
                        Duration::from_secs_f64(rand::rng().random_range(0.0..=cap.as_secs_f64()))
                    };
                    log.push(AttemptRecord { attempt, outcome: e.to_string(), delay: Some(delay) });
                    sleeper.sleep(delay);
                    attempt += 1;
                }
            }
        }
    }
}
