//! Bounded exponential backoff for retryable backend errors.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;

use super::{BackendError, ChatBackend, Clock, Completion, CompletionRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl RetryPolicy {
    pub fn new(max_retries: u32, base_delay: Duration) -> Self {
        RetryPolicy {
            max_retries,
            base_delay,
        }
    }

    /// Delay before retry number `retry` (0-based): `base * 2^retry`.
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << retry.min(16))
    }
}

pub struct RetryingBackend<B> {
    inner: B,
    policy: RetryPolicy,
    clock: Arc<dyn Clock>,
}

impl<B> RetryingBackend<B> {
    pub fn new(inner: B, policy: RetryPolicy, clock: Arc<dyn Clock>) -> Self {
        RetryingBackend { inner, policy, clock }
    }
}

#[async_trait]
impl<B: ChatBackend> ChatBackend for RetryingBackend<B> {
    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let mut retry = 0;
        loop {
            match self.inner.complete(request).await {
                Err(e) if e.is_retryable() && retry < self.policy.max_retries => {
                    let delay = self.policy.delay(retry);
                    tracing::warn!(error = %e, retry, ?delay, "retrying completion");
                    self.clock.sleep(delay).await;
                    retry += 1;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, VirtualClock};

    #[tokio::test]
    async fn gives_up_after_budget() {
        let clock = Arc::new(VirtualClock::new());
        let mock = Arc::new(MockBackend::failing(|_| BackendError::Retryable("503".into())));
        let backend = RetryingBackend::new(mock.clone(), RetryPolicy::new(3, Duration::from_secs(1)), clock.clone());
        let err = backend.complete(&CompletionRequest::new("p")).await.unwrap_err();
        assert!(err.is_retryable());
        assert_eq!(mock.calls(), 4);
        assert_eq!(clock.now(), Duration::from_secs(1 + 2 + 4));
    }

    #[tokio::test]
    async fn fatal_errors_are_not_retried() {
        let clock = Arc::new(VirtualClock::new());
        let mock = Arc::new(MockBackend::failing(|_| BackendError::Fatal("401".into())));
        let backend = RetryingBackend::new(mock.clone(), RetryPolicy::new(3, Duration::from_secs(1)), clock);
        assert!(backend.complete(&CompletionRequest::new("p")).await.is_err());
        assert_eq!(mock.calls(), 1);
    }

    #[tokio::test]
    async fn recovers_after_transient_failures() {
        let clock = Arc::new(VirtualClock::new());
        let mock = Arc::new(MockBackend::flaky(2, "true"));
        let backend = RetryingBackend::new(mock.clone(), RetryPolicy::new(3, Duration::from_millis(10)), clock);
        let done = backend.complete(&CompletionRequest::new("p")).await.unwrap();
        assert_eq!(done.text, "true");
        assert_eq!(mock.calls(), 3);
    }
}
