//! In-memory listener sessions.
//!
//! A session is keyed by an opaque token. The listener id and the session's
//! RNG seed are both derived from a hash of the token, so a listener keeps
//! their identity (and their stored ratings and preferences) across restarts
//! even though sessions themselves are not persisted.

use std::collections::{HashMap, VecDeque};
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use radio_core::domain::{ListenerId, Millis};
use radio_core::recommender::SessionState;
use rand::RngCore;
use sha2::{Digest, Sha256};

/// 128 random bits, hex encoded.
pub fn new_token() -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

/// Tokens must carry at least 128 bits: 32 to 128 hex digits.
pub fn is_well_formed(token: &str) -> bool {
    (32..=128).contains(&token.len()) && token.bytes().all(|b| b.is_ascii_hexdigit())
}

pub fn listener_for(token: &str) -> (ListenerId, u64) {
    let digest = Sha256::digest(token.as_bytes());
    let listener = ListenerId(format!("listener-{}", hex::encode(&digest[..8])));
    let seed = u64::from_le_bytes(digest[8..16].try_into().expect("8 bytes"));
    (listener, seed)
}

#[derive(Debug, Clone)]
pub struct Session {
    pub token: String,
    pub state: SessionState,
    pub created_at: Millis,
    recent: VecDeque<Instant>,
}

impl Session {
    fn new(token: String, created_at: Millis) -> Self {
        let (listener, seed) = listener_for(&token);
        Self {
            token,
            state: SessionState::new(listener, seed),
            created_at,
            recent: VecDeque::new(),
        }
    }
}

#[derive(Debug, Default)]
pub struct Sessions {
    inner: Mutex<HashMap<String, Session>>,
}

/// The session's per-second budget is spent.
#[derive(Debug)]
pub struct RateLimited;

impl Sessions {
    /// Run `f` on the session for `token`, creating it first if needed, after
    /// charging one request against its per-second budget (`0` = unlimited).
    pub fn with<T>(
        &self,
        token: &str,
        now: Millis,
        per_sec: u32,
        f: impl FnOnce(&mut Session) -> T,
    ) -> Result<T, RateLimited> {
        let mut map = self.inner.lock();
        let session = map
            .entry(token.to_owned())
            .or_insert_with(|| Session::new(token.to_owned(), now));
        if per_sec > 0 {
            let t = Instant::now();
            while session
                .recent
                .front()
                .is_some_and(|&old| t.duration_since(old) >= Duration::from_secs(1))
            {
                session.recent.pop_front();
            }
            if session.recent.len() >= per_sec as usize {
                return Err(RateLimited);
            }
            session.recent.push_back(t);
        }
        Ok(f(session))
    }

    pub fn len(&self) -> usize {
        self.inner.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_are_128_bit_hex() {
        let a = new_token();
        assert_eq!(a.len(), 32);
        assert!(is_well_formed(&a));
        assert_ne!(a, new_token());
        assert!(!is_well_formed("short"));
        assert!(!is_well_formed(&"z".repeat(32)));
    }

    #[test]
    fn listener_identity_is_stable() {
        let t = new_token();
        assert_eq!(listener_for(&t), listener_for(&t));
        assert_ne!(listener_for(&t).0, listener_for(&new_token()).0);
    }

    #[test]
    fn limit_applies_per_session() {
        let s = Sessions::default();
        let (a, b) = (new_token(), new_token());
        for _ in 0..3 {
            assert!(s.with(&a, 0, 3, |_| ()).is_ok());
        }
        assert!(matches!(s.with(&a, 0, 3, |_| ()), Err(RateLimited)));
        assert!(s.with(&b, 0, 3, |_| ()).is_ok());
        // a zero budget means unlimited
        assert!(s.with(&a, 0, 0, |_| ()).is_ok());
        assert_eq!(s.len(), 2);
    }
}
