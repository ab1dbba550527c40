//! Push stream records and bounded per-subscriber queues.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::SessionSnapshot;
use crate::engine::{LedgerEvent, LightChange, ReconciliationReport};

/// One line of the push stream, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PushMessage {
    LedgerEvent { event: LedgerEvent },
    Light { change: LightChange },
    Snapshot { snapshot: SessionSnapshot },
    Reconciliation { report: ReconciliationReport },
    /// Last record before the server drops a subscriber that fell behind.
    Overflow { bound: usize },
}

impl PushMessage {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("push messages serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

#[derive(Debug)]
struct QueueState {
    items: VecDeque<PushMessage>,
    closed: bool,
}

#[derive(Debug)]
struct Shared {
    bound: usize,
    state: Mutex<QueueState>,
    ready: Condvar,
}

/// Receiving end handed to a subscriber.
#[derive(Debug)]
pub struct Subscription {
    shared: Arc<Shared>,
}

/// Publishing end kept by the service.
#[derive(Debug)]
pub(crate) struct Publisher {
    shared: Arc<Shared>,
}

pub(crate) fn channel(bound: usize) -> (Publisher, Subscription) {
    let shared = Arc::new(Shared {
        bound: bound.max(1),
        state: Mutex::new(QueueState { items: VecDeque::new(), closed: false }),
        ready: Condvar::new(),
    });
    (Publisher { shared: shared.clone() }, Subscription { shared })
}

impl Publisher {
    /// Queues `msg`. Returns false once the subscriber is gone, closed, or
    /// has just overflowed; the caller should forget it then.
    pub fn offer(&self, msg: PushMessage) -> bool {
        if Arc::strong_count(&self.shared) == 1 {
            return false;
        }
        let mut st = self.shared.state.lock().unwrap();
        if st.closed {
            return false;
        }
        let alive = if st.items.len() < self.shared.bound {
            st.items.push_back(msg);
            true
        } else {
            st.items.push_back(PushMessage::Overflow { bound: self.shared.bound });
            st.closed = true;
            false
        };
        drop(st);
        self.shared.ready.notify_all();
        alive
    }

    /// Ends the stream after whatever is already queued.
    pub fn close(&self) {
        self.shared.state.lock().unwrap().closed = true;
        self.shared.ready.notify_all();
    }
}

impl Subscription {
    /// Blocks for the next message. `None` once the stream is closed and drained.
    pub fn recv(&self) -> Option<PushMessage> {
        let mut st = self.shared.state.lock().unwrap();
        loop {
            if let Some(m) = st.items.pop_front() {
                return Some(m);
            }
            if st.closed {
                return None;
            }
            st = self.shared.ready.wait(st).unwrap();
        }
    }

    /// `Err(())` on timeout, `Ok(None)` when the stream has ended.
    #[allow(clippy::result_unit_err)]
    pub fn recv_timeout(&self, timeout: Duration) -> Result<Option<PushMessage>, ()> {
        let deadline = Instant::now() + timeout;
        let mut st = self.shared.state.lock().unwrap();
        loop {
            if let Some(m) = st.items.pop_front() {
                return Ok(Some(m));
            }
            if st.closed {
                return Ok(None);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(());
            }
            st = self.shared.ready.wait_timeout(st, deadline - now).unwrap().0;
        }
    }

    pub fn try_recv(&self) -> Option<PushMessage> {
        self.shared.state.lock().unwrap().items.pop_front()
    }

    /// Everything queued right now.
    pub fn drain(&self) -> Vec<PushMessage> {
        self.shared.state.lock().unwrap().items.drain(..).collect()
    }

    pub fn is_closed(&self) -> bool {
        self.shared.state.lock().unwrap().closed
    }
}

impl Iterator for Subscription {
    type Item = PushMessage;

    fn next(&mut self) -> Option<PushMessage> {
        self.recv()
    }
}
