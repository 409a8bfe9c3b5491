//! Request-rate and concurrency limits for live backends.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use futures::future::BoxFuture;
use tokio::sync::Semaphore;

use super::{BackendError, ChatBackend, Completion, CompletionRequest};

pub const WINDOW: Duration = Duration::from_secs(60);

/// Time source for the limiter and for retry backoff.
pub trait Clock: Send + Sync {
    /// Time elapsed since the clock's origin.
    fn now(&self) -> Duration;
    fn sleep(&self, duration: Duration) -> BoxFuture<'_, ()>;
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock { origin: Instant::now() }
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

    fn sleep(&self, duration: Duration) -> BoxFuture<'_, ()> {
        Box::pin(tokio::time::sleep(duration))
    }
}

/// A clock that only moves when someone sleeps on it. Sleeping advances
/// the clock to at least `now + duration` and yields once.
#[derive(Debug, Default)]
pub struct VirtualClock {
    nanos: AtomicU64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, by: Duration) {
        self.nanos.fetch_add(by.as_nanos() as u64, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
    }

    fn sleep(&self, duration: Duration) -> BoxFuture<'_, ()> {
        let target = self.now() + duration;
        let target = target.as_nanos() as u64;
        self.nanos.fetch_max(target, Ordering::SeqCst);
        Box::pin(tokio::task::yield_now())
    }
}

/// Sliding-window limiter: at most `cap` grants in any window of length
/// [`WINDOW`].
#[derive(Debug)]
pub struct RateLimiter {
    cap: usize,
    granted: VecDeque<Duration>,
}

impl RateLimiter {
    pub fn new(cap: u32) -> Self {
        assert!(cap > 0, "rate cap must be positive");
        RateLimiter {
            cap: cap as usize,
            granted: VecDeque::with_capacity(cap as usize),
        }
    }

    /// Grants a request at `now`, or returns how long to wait before trying
    /// again. `now` must not decrease between calls.
    pub fn try_acquire(&mut self, now: Duration) -> Result<(), Duration> {
        while let Some(&oldest) = self.granted.front() {
            if now >= oldest + WINDOW {
                self.granted.pop_front();
            } else {
                break;
            }
        }
        if self.granted.len() < self.cap {
            self.granted.push_back(now);
            Ok(())
        } else {
            let oldest = *self.granted.front().expect("full window is non-empty");
            Err(oldest + WINDOW - now)
        }
    }
}

/// Wraps a backend with a requests-per-minute cap and an in-flight ceiling.
pub struct ThrottledBackend<B> {
    inner: B,
    limiter: Mutex<RateLimiter>,
    permits: Semaphore,
    clock: Arc<dyn Clock>,
}

impl<B> ThrottledBackend<B> {
    pub fn new(inner: B, requests_per_minute: u32, max_concurrency: usize, clock: Arc<dyn Clock>) -> Self {
        ThrottledBackend {
            inner,
            limiter: Mutex::new(RateLimiter::new(requests_per_minute)),
            permits: Semaphore::new(max_concurrency.max(1)),
            clock,
        }
    }

    async fn wait_for_slot(&self) {
        loop {
            let wait = {
                let mut limiter = self.limiter.lock().expect("limiter lock");
                match limiter.try_acquire(self.clock.now()) {
                    Ok(()) => return,
                    Err(wait) => wait,
                }
            };
            self.clock.sleep(wait).await;
        }
    }
}

#[async_trait]
impl<B: ChatBackend> ChatBackend for ThrottledBackend<B> {
    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let _permit = self.permits.acquire().await.expect("semaphore never closed");
        self.wait_for_slot().await;
        self.inner.complete(request).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_in_any_window(stamps: &[Duration]) -> usize {
        (0..stamps.len())
            .map(|i| stamps[i..].iter().take_while(|t| **t < stamps[i] + WINDOW).count())
            .max()
            .unwrap_or(0)
    }

    #[test]
    fn limiter_waits_for_oldest_grant() {
        let mut l = RateLimiter::new(2);
        assert!(l.try_acquire(Duration::ZERO).is_ok());
        assert!(l.try_acquire(Duration::from_secs(10)).is_ok());
        assert_eq!(l.try_acquire(Duration::from_secs(20)), Err(Duration::from_secs(40)));
        assert!(l.try_acquire(Duration::from_secs(60)).is_ok());
    }

    proptest! {
        #[test]
        fn limiter_never_exceeds_cap(cap in 1u32..20, gaps in proptest::collection::vec(0u64..5_000, 1..200)) {
            let mut limiter = RateLimiter::new(cap);
            let mut now = Duration::ZERO;
            let mut granted = Vec::new();
            for gap in gaps {
                now += Duration::from_millis(gap);
                loop {
                    match limiter.try_acquire(now) {
                        Ok(()) => { granted.push(now); break; }
                        Err(wait) => { prop_assert!(wait > Duration::ZERO); now += wait; }
                    }
                }
            }
            prop_assert!(max_in_any_window(&granted) <= cap as usize);
        }
    }

    #[test]
    fn virtual_clock_sleep_advances() {
        let clock = VirtualClock::new();
        futures::executor::block_on(clock.sleep(Duration::from_secs(3)));
        assert_eq!(clock.now(), Duration::from_secs(3));
    }
}
