use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use super::{EventId, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FacilityId(pub usize);

/// A token currently holding a server.
#[derive(Debug, Clone)]
pub struct InService {
    pub token: TokenId,
    pub priority: i32,
    pub started_at: f64,
    pub start_seq: u64,
    pub release_event: EventId,
    pub release_at: f64,
}

/// A waiting token with the service time it will need once dequeued.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueEntry {
    pub token: TokenId,
    pub priority: i32,
    pub enqueued_at: f64,
    pub service_time: f64,
    pub preempted: bool,
}

// Highest priority first; preempted tokens ahead of fresh ones of the same
// priority; arrival order otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct QueueKey {
    priority: Reverse<i32>,
    fresh: bool,
    order: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FacilityStats {
    pub completions: u64,
    /// Service time summed over all servers.
    pub busy_time: f64,
    /// Tokens that finished waiting, including those served on arrival.
    pub queue_exits: u64,
    pub cumulative_wait: f64,
    pub max_queue_len: usize,
    pub preemptions: u64,
    /// Integral of queue length over time.
    pub queue_area: f64,
}

/// Derived statistics for one facility at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct FacilityReport {
    pub name: String,
    pub servers: usize,
    pub completions: u64,
    pub busy_time: f64,
    pub utilization: f64,
    pub mean_wait: f64,
    pub mean_queue_len: f64,
    pub max_queue_len: usize,
    pub preemptions: u64,
    pub queue_len: usize,
}

#[derive(Debug)]
pub struct Facility {
    name: String,
    server_count: usize,
    busy: BTreeMap<usize, InService>,
    freed: BTreeSet<usize>,
    next_unused: usize,
    queue: BTreeMap<QueueKey, QueueEntry>,
    queue_order: u64,
    last_queue_change: f64,
    pub(crate) up: bool,
    pub(crate) stats: FacilityStats,
}

impl Facility {
    pub(crate) fn new(name: String, server_count: usize, now: f64) -> Self {
        Self {
            name,
            server_count,
            busy: BTreeMap::new(),
            freed: BTreeSet::new(),
            next_unused: 0,
            queue: BTreeMap::new(),
            queue_order: 0,
            last_queue_change: now,
            up: true,
            stats: FacilityStats::default(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn server_count(&self) -> usize {
        self.server_count
    }

    pub fn busy_count(&self) -> usize {
        self.busy.len()
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_up(&self) -> bool {
        self.up
    }

    pub fn has_free_server(&self) -> bool {
        self.busy.len() < self.server_count
    }

    pub fn in_service(&self, server: usize) -> Option<&InService> {
        self.busy.get(&server)
    }

    pub fn servers_in_use(&self) -> impl Iterator<Item = (usize, &InService)> {
        self.busy.iter().map(|(s, i)| (*s, i))
    }

    pub fn queued(&self) -> impl Iterator<Item = &QueueEntry> {
        self.queue.values()
    }

    /// Claims the lowest-numbered free server slot.
    pub(crate) fn claim_server(&mut self) -> Option<usize> {
        if !self.has_free_server() {
            return None;
        }
        if let Some(slot) = self.freed.pop_first() {
            return Some(slot);
        }
        let slot = self.next_unused;
        self.next_unused += 1;
        Some(slot)
    }

    pub(crate) fn occupy(&mut self, server: usize, service: InService) {
        let prev = self.busy.insert(server, service);
        debug_assert!(prev.is_none(), "server {server} already busy");
    }

    /// Frees a server, accounting its busy slice up to `now`.
    pub(crate) fn vacate(&mut self, server: usize, now: f64) -> Option<InService> {
        let service = self.busy.remove(&server)?;
        self.stats.busy_time += now - service.started_at;
        self.freed.insert(server);
        Some(service)
    }

    /// Victim for a preemption by `priority`: the lowest-priority token in
    /// service, earliest start first among equals, if strictly lower.
    pub(crate) fn preemption_victim(&self, priority: i32) -> Option<usize> {
        self.busy
            .iter()
            .filter(|(_, s)| s.priority < priority)
            .min_by(|(_, a), (_, b)| {
                a.priority
                    .cmp(&b.priority)
                    .then(a.started_at.total_cmp(&b.started_at))
                    .then(a.start_seq.cmp(&b.start_seq))
            })
            .map(|(slot, _)| *slot)
    }

    fn account_queue_area(&mut self, now: f64) {
        self.stats.queue_area += self.queue.len() as f64 * (now - self.last_queue_change);
        self.last_queue_change = now;
    }

    pub(crate) fn enqueue(&mut self, entry: QueueEntry, now: f64) {
        self.account_queue_area(now);
        let key = QueueKey {
            priority: Reverse(entry.priority),
            fresh: !entry.preempted,
            order: self.queue_order,
        };
        self.queue_order += 1;
        self.queue.insert(key, entry);
        self.stats.max_queue_len = self.stats.max_queue_len.max(self.queue.len());
    }

    pub(crate) fn dequeue(&mut self, now: f64) -> Option<QueueEntry> {
        if self.queue.is_empty() {
            return None;
        }
        self.account_queue_area(now);
        let (_, entry) = self.queue.pop_first()?;
        self.record_wait(now - entry.enqueued_at);
        Some(entry)
    }

    pub(crate) fn record_wait(&mut self, wait: f64) {
        self.stats.queue_exits += 1;
        self.stats.cumulative_wait += wait;
    }

    pub(crate) fn report(&self, now: f64) -> FacilityReport {
        let in_progress: f64 = self.busy.values().map(|s| now - s.started_at).sum();
        let busy_time = self.stats.busy_time + in_progress;
        let queue_area =
            self.stats.queue_area + self.queue.len() as f64 * (now - self.last_queue_change);
        let capacity = now * self.server_count as f64;
        FacilityReport {
            name: self.name.clone(),
            servers: self.server_count,
            completions: self.stats.completions,
            busy_time,
            utilization: if capacity > 0.0 { busy_time / capacity } else { 0.0 },
            mean_wait: if self.stats.queue_exits > 0 {
                self.stats.cumulative_wait / self.stats.queue_exits as f64
            } else {
                0.0
            },
            mean_queue_len: if now > 0.0 { queue_area / now } else { 0.0 },
            max_queue_len: self.stats.max_queue_len,
            preemptions: self.stats.preemptions,
            queue_len: self.queue.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(token: u64, priority: i32, preempted: bool) -> QueueEntry {
        QueueEntry {
            token: TokenId(token),
            priority,
            enqueued_at: 0.0,
            service_time: 1.0,
            preempted,
        }
    }

    #[test]
    fn queue_order_is_priority_then_preempted_then_fifo() {
        let mut f = Facility::new("f".into(), 1, 0.0);
        f.enqueue(entry(1, 1, false), 0.0);
        f.enqueue(entry(2, 5, false), 0.0);
        f.enqueue(entry(3, 1, false), 0.0);
        f.enqueue(entry(4, 1, true), 0.0);
        let order: Vec<u64> = std::iter::from_fn(|| f.dequeue(0.0).map(|e| e.token.0)).collect();
        assert_eq!(order, vec![2, 4, 1, 3]);
    }

    #[test]
    fn sparse_servers_reuse_lowest_slot() {
        let mut f = Facility::new("m".into(), 65536, 0.0);
        let a = f.claim_server().unwrap();
        let b = f.claim_server().unwrap();
        assert_eq!((a, b), (0, 1));
        let svc = |t| InService {
            token: TokenId(t),
            priority: 0,
            started_at: 0.0,
            start_seq: t,
            release_event: EventId(t),
            release_at: 1.0,
        };
        f.occupy(a, svc(0));
        f.occupy(b, svc(1));
        f.vacate(a, 1.0);
        assert_eq!(f.claim_server(), Some(0));
    }
}
