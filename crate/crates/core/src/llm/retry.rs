use std::sync::Mutex;
use std::time::Duration;

/// Exponential backoff with "equal jitter": before retry `k` (1-based) the
/// delay is drawn from `[c/2, c]` where `c = base * 2^(k-1)`. Consecutive
/// ranges touch but never overlap, so delays never decrease.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub base: Duration,
}

impl Backoff {
    pub fn new(base: Duration) -> Self {
        Backoff { base }
    }

    /// `unit` is a uniform sample from `[0, 1]`.
    pub fn delay(&self, retry: u32, unit: f64) -> Duration {
        let exp = retry.saturating_sub(1).min(30);
        let ceiling = self.base.as_secs_f64() * f64::from(1u32 << exp);
        let unit = unit.clamp(0.0, 1.0);
        Duration::from_secs_f64(ceiling / 2.0 + unit * ceiling / 2.0)
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Records requested delays without sleeping.
#[derive(Default)]
pub struct RecordingSleeper {
    delays: Mutex<Vec<Duration>>,
}

impl RecordingSleeper {
    pub fn delays(&self) -> Vec<Duration> {
        self.delays.lock().expect("sleeper lock").clone()
    }
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.delays.lock().expect("sleeper lock").push(d);
    }
}
