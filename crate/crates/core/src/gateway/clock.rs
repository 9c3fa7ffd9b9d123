use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Time source used by retry backoff and rate limiting.
pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn sleep(&self, duration: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// A clock that only moves when slept on. Every sleep is recorded.
#[derive(Default)]
pub struct ManualClock {
    state: Mutex<(Duration, Vec<Duration>)>,
}

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, by: Duration) {
        self.state.lock().expect("clock poisoned").0 += by;
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.state.lock().expect("clock poisoned").1.clone()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        self.state.lock().expect("clock poisoned").0
    }

    fn sleep(&self, duration: Duration) {
        let mut state = self.state.lock().expect("clock poisoned");
        state.0 += duration;
        state.1.push(duration);
    }
}
