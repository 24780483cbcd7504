use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use super::{EventId, TokenId};

/// A scheduled state change.
#[derive(Debug, Clone, PartialEq)]
pub struct Event<K> {
    pub id: EventId,
    pub kind: K,
    pub fire_time: f64,
    pub token: Option<TokenId>,
    pub seq: u64,
}

/// Ordering key of the chain: firing time first, insertion counter second.
#[derive(Debug, Clone, Copy)]
struct ChainKey {
    fire_time: f64,
    seq: u64,
}

impl PartialEq for ChainKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ChainKey {}

impl PartialOrd for ChainKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ChainKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.fire_time
            .total_cmp(&other.fire_time)
            .then(self.seq.cmp(&other.seq))
    }
}

/// Time-ordered set of pending events.
///
/// Simultaneous events fire in insertion order. Every event is reachable by
/// id so cancellation costs one map lookup plus one tree removal.
#[derive(Debug)]
pub struct EventChain<K> {
    events: BTreeMap<ChainKey, Event<K>>,
    index: HashMap<EventId, ChainKey>,
    next_seq: u64,
}

impl<K> Default for EventChain<K> {
    fn default() -> Self {
        Self {
            events: BTreeMap::new(),
            index: HashMap::new(),
            next_seq: 0,
        }
    }
}

impl<K> EventChain<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Inserts an event at an absolute time. The caller validates the time.
    pub fn insert(&mut self, kind: K, fire_time: f64, token: Option<TokenId>) -> EventId {
        let seq = self.next_seq;
        self.next_seq += 1;
        let id = EventId(seq);
        let key = ChainKey { fire_time, seq };
        self.events.insert(
            key,
            Event {
                id,
                kind,
                fire_time,
                token,
                seq,
            },
        );
        self.index.insert(id, key);
        id
    }

    pub fn pop(&mut self) -> Option<Event<K>> {
        let (_, event) = self.events.pop_first()?;
        self.index.remove(&event.id);
        Some(event)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.events.first_key_value().map(|(k, _)| k.fire_time)
    }

    pub fn remove(&mut self, id: EventId) -> Option<Event<K>> {
        let key = self.index.remove(&id)?;
        self.events.remove(&key)
    }

    pub fn fire_time(&self, id: EventId) -> Option<f64> {
        self.index.get(&id).map(|k| k.fire_time)
    }

    pub fn contains(&self, id: EventId) -> bool {
        self.index.contains_key(&id)
    }
}
