use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Monotonic time source; swapped for a fake in tests.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep_until(&self, deadline: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep_until(&self, deadline: Duration) {
        let now = self.now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        }
    }
}

/// Time only moves when someone sleeps.
#[derive(Default)]
pub struct FakeClock {
    now: Mutex<Duration>,
}

impl FakeClock {
    pub fn advance(&self, by: Duration) {
        *self.now.lock().expect("fake clock") += by;
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        *self.now.lock().expect("fake clock")
    }

    fn sleep_until(&self, deadline: Duration) {
        let mut now = self.now.lock().expect("fake clock");
        if deadline > *now {
            *now = deadline;
        }
    }
}

/// Admits at most one request per `1/rate` seconds. Admission slots are
/// handed out under a lock; the wait happens outside it.
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Duration>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64, clock: Arc<dyn Clock>) -> Self {
        assert!(requests_per_second > 0.0, "rate must be positive");
        RateLimiter {
            // Rounded up so `rate` intervals never fit inside one second.
            interval: Duration::from_nanos((1e9 / requests_per_second).ceil() as u64),
            next_slot: Mutex::new(Duration::ZERO),
            clock,
        }
    }

    /// Blocks until the caller may send; returns the admission time.
    pub fn acquire(&self) -> Duration {
        let slot = {
            let mut next = self.next_slot.lock().expect("rate limiter");
            let slot = (*next).max(self.clock.now());
            *next = slot + self.interval;
            slot
        };
        self.clock.sleep_until(slot);
        slot
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_in_any_window(times: &[Duration], window: Duration) -> usize {
        times
            .iter()
            .map(|&start| times.iter().filter(|&&t| t >= start && t < start + window).count())
            .max()
            .unwrap_or(0)
    }

    #[test]
    fn never_exceeds_rate_on_fake_clock() {
        for rate in [1.0, 3.0, 10.0] {
            let clock = Arc::new(FakeClock::default());
            let limiter = RateLimiter::new(rate, clock.clone());
            let mut times = Vec::new();
            for i in 0..40 {
                if i % 7 == 0 {
                    clock.advance(Duration::from_millis(130));
                }
                times.push(limiter.acquire());
            }
            assert!(max_in_any_window(&times, Duration::from_secs(1)) <= rate as usize);
            assert!(times.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn idle_time_is_not_banked() {
        let clock = Arc::new(FakeClock::default());
        let limiter = RateLimiter::new(2.0, clock.clone());
        limiter.acquire();
        clock.advance(Duration::from_secs(10));
        let a = limiter.acquire();
        let b = limiter.acquire();
        assert_eq!(b - a, Duration::from_millis(500));
    }
}
