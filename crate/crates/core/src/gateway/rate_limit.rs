use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::Clock;

/// Sliding-window request limiter shared by every caller of one provider.
///
/// Keeps the dispatch times of the last window. A request is admitted only if
/// fewer than `limit` dispatches happened in the preceding `window`, so the
/// cap holds for every window position, not just on average.
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    clock: Arc<dyn Clock>,
    log: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn per_minute(limit: u32, clock: Arc<dyn Clock>) -> Self {
        Self::with_window(limit as usize, Duration::from_secs(60), clock)
    }

    pub fn with_window(limit: usize, window: Duration, clock: Arc<dyn Clock>) -> Self {
        assert!(limit > 0, "rate limit must be positive");
        Self { limit, window, clock, log: Mutex::new(VecDeque::with_capacity(limit)) }
    }

    /// Block until a dispatch slot is free, then claim it. Returns the
    /// dispatch timestamp.
    pub fn acquire(&self) -> Duration {
        loop {
            let wait = {
                let mut log = self.log.lock().expect("rate limiter poisoned");
                let now = self.clock.now();
                while log.front().is_some_and(|&t| t + self.window <= now) {
                    log.pop_front();
                }
                if log.len() < self.limit {
                    log.push_back(now);
                    return now;
                }
                // Oldest entry leaves the window at front + window.
                log[0] + self.window - now
            };
            self.clock.sleep(wait);
        }
    }
}
