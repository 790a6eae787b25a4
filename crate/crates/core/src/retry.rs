use std::thread;
use std::time::Duration;

/// Bounded retry with exponential backoff, shared by the HTTP clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub attempts: u32,
    pub initial: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial: Duration::from_secs(1),
        }
    }
}

impl Backoff {
    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        self.initial.saturating_mul(1u32 << retry.min(16))
    }

    /// Run `op` until it succeeds, fails with a non-retryable error, or the
    /// attempt budget is spent. The last error is returned.
    pub fn run<T, E>(
        &self,
        mut is_retryable: impl FnMut(&E) -> bool,
        mut op: impl FnMut() -> Result<T, E>,
    ) -> Result<T, E> {
        let attempts = self.attempts.max(1);
        let mut attempt = 0;
        loop {
            match op() {
                Ok(value) => return Ok(value),
                Err(err) => {
                    attempt += 1;
                    if attempt >= attempts || !is_retryable(&err) {
                        return Err(err);
                    }
                    let delay = self.delay(attempt - 1);
                    log::debug!("attempt {attempt} failed; retrying in {delay:?}");
                    thread::sleep(delay);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delays_double() {
        let b = Backoff::default();
        assert_eq!(b.delay(0), Duration::from_secs(1));
        assert_eq!(b.delay(1), Duration::from_secs(2));
        assert_eq!(b.delay(2), Duration::from_secs(4));
    }

    #[test]
    fn stops_after_budget() {
        let b = Backoff {
            attempts: 3,
            initial: Duration::ZERO,
        };
        let mut calls = 0;
        let res: Result<(), &str> = b.run(
            |_| true,
            || {
                calls += 1;
                Err("down")
            },
        );
        assert!(res.is_err());
        assert_eq!(calls, 3);
    }

    #[test]
    fn non_retryable_fails_fast() {
        let b = Backoff {
            attempts: 3,
            initial: Duration::ZERO,
        };
        let mut calls = 0;
        let res: Result<(), &str> = b.run(
            |_| false,
            || {
                calls += 1;
                Err("bad request")
            },
        );
        assert!(res.is_err());
        assert_eq!(calls, 1);
    }

    #[test]
    fn recovers_on_later_attempt() {
        let b = Backoff {
            attempts: 3,
            initial: Duration::ZERO,
        };
        let mut calls = 0;
        let res: Result<u32, &str> = b.run(
            |_| true,
            || {
                calls += 1;
                if calls < 3 {
                    Err("flaky")
                } else {
                    Ok(calls)
                }
            },
        );
        assert_eq!(res, Ok(3));
    }
}
