use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

/// Token bucket: `capacity` tokens, refilled continuously at
/// `capacity / period`.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(capacity: u32, period: Duration) -> Self {
        let capacity = f64::from(capacity.max(1));
        Self {
            capacity,
            per_sec: capacity / period.as_secs_f64().max(1e-9),
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Four requests per minute.
    pub fn per_minute(n: u32) -> Self {
        Self::new(n, Duration::from_secs(60))
    }

    /// Takes a token at `now` if available, else returns the wait until one is.
    pub fn try_acquire_at(&self, now: Instant) -> Result<(), Duration> {
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let elapsed = now.saturating_duration_since(st.1).as_secs_f64();
        st.0 = (st.0 + elapsed * self.per_sec).min(self.capacity);
        st.1 = st.1.max(now);
        if st.0 >= 1.0 {
            st.0 -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - st.0) / self.per_sec))
        }
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        loop {
            match self.try_acquire_at(Instant::now()) {
                Ok(()) => return,
                Err(wait) => thread::sleep(wait),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_per_minute() {
        let b = TokenBucket::per_minute(4);
        let t0 = Instant::now();
        for _ in 0..4 {
            assert!(b.try_acquire_at(t0).is_ok());
        }
        let wait = b.try_acquire_at(t0).unwrap_err();
        assert!((wait.as_secs_f64() - 15.0).abs() < 0.01);
        assert!(b.try_acquire_at(t0 + Duration::from_secs(15)).is_ok());
        assert!(b.try_acquire_at(t0 + Duration::from_secs(16)).is_err());
    }
}
