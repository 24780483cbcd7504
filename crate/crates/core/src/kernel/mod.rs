//! Event-driven queuing engine in the SMPL tradition.
//!
//! The kernel knows three things: *facilities* (multi-server resources with a
//! preemptive priority queue), *tokens* (the entities served by facilities)
//! and *events* (timed state changes kept in a chain ordered by firing time).
//! Service completion is represented by a kernel-owned release event; the
//! caller pops it with [`Kernel::cause`] and acknowledges it with
//! [`Kernel::release`], which also pulls the next waiting token into service.

mod chain;
mod facility;
pub mod rng;

use std::collections::HashMap;

use thiserror::Error;

pub use chain::{Event, EventChain};
pub use facility::{Facility, FacilityId, FacilityReport, FacilityStats, InService, QueueEntry};

/// Server count used to approximate an infinite-server facility.
pub const MAX_MEDIUM_SERVERS: usize = 65536;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenId(pub u64);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("cannot schedule with delay {0}: delays must be finite and non-negative")]
    InvalidDelay(f64),
    #[error("invalid service time {0}")]
    InvalidServiceTime(f64),
    #[error("facility {0:?} must have at least one server")]
    ZeroServers(String),
    #[error("unknown facility {0:?}")]
    UnknownFacility(FacilityId),
    #[error("unknown token {0:?}")]
    UnknownToken(TokenId),
    #[error("server {server} of facility {facility:?} is not busy")]
    ServerNotBusy { facility: FacilityId, server: usize },
    #[error("{0}")]
    InvalidDistribution(String),
}

/// Event codes seen by the dispatcher: the caller's own kinds plus the
/// kernel's service-completion code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind<K> {
    Release { facility: FacilityId, server: usize },
    User(K),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token<T> {
    pub id: TokenId,
    pub priority: i32,
    pub payload: T,
    /// Set while the token waits in a queue: its outstanding service time.
    pub service_remaining: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestOutcome {
    Served {
        server: usize,
        /// Token displaced by a successful preemption.
        preempted: Option<TokenId>,
    },
    Enqueued,
}

#[derive(Debug)]
pub struct Kernel<K, T> {
    clock: f64,
    chain: EventChain<EventKind<K>>,
    facilities: Vec<Facility>,
    tokens: HashMap<TokenId, Token<T>>,
    next_token: u64,
    start_seq: u64,
}

impl<K, T> Default for Kernel<K, T> {
    fn default() -> Self {
        Self {
            clock: 0.0,
            chain: EventChain::new(),
            facilities: Vec::new(),
            tokens: HashMap::new(),
            next_token: 1,
            start_seq: 0,
        }
    }
}

impl<K, T> Kernel<K, T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.clock
    }

    pub fn pending_events(&self) -> usize {
        self.chain.len()
    }

    pub fn schedule(
        &mut self,
        kind: K,
        delay: f64,
        token: Option<TokenId>,
    ) -> Result<EventId, KernelError> {
        self.schedule_kind(EventKind::User(kind), delay, token)
    }

    fn schedule_kind(
        &mut self,
        kind: EventKind<K>,
        delay: f64,
        token: Option<TokenId>,
    ) -> Result<EventId, KernelError> {
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(KernelError::InvalidDelay(delay));
        }
        Ok(self.chain.insert(kind, self.clock + delay, token))
    }

    /// Pops the next event and advances the clock to its firing time.
    /// `None` means the chain is exhausted.
    pub fn cause(&mut self) -> Option<Event<EventKind<K>>> {
        let event = self.chain.pop()?;
        debug_assert!(event.fire_time >= self.clock);
        self.clock = event.fire_time;
        Some(event)
    }

    pub fn next_event_time(&self) -> Option<f64> {
        self.chain.peek_time()
    }

    pub fn cancel(&mut self, id: EventId) -> bool {
        self.chain.remove(id).is_some()
    }

    pub fn is_scheduled(&self, id: EventId) -> bool {
        self.chain.contains(id)
    }

    pub fn create_token(&mut self, priority: i32, payload: T) -> TokenId {
        let id = TokenId(self.next_token);
        self.next_token += 1;
        self.tokens.insert(
            id,
            Token {
                id,
                priority,
                payload,
                service_remaining: None,
            },
        );
        id
    }

    pub fn token(&self, id: TokenId) -> Option<&Token<T>> {
        self.tokens.get(&id)
    }

    pub fn token_mut(&mut self, id: TokenId) -> Option<&mut Token<T>> {
        self.tokens.get_mut(&id)
    }

    pub fn remove_token(&mut self, id: TokenId) -> Option<Token<T>> {
        self.tokens.remove(&id)
    }

    pub fn live_tokens(&self) -> impl Iterator<Item = &Token<T>> {
        self.tokens.values()
    }

    pub fn define_facility(
        &mut self,
        name: impl Into<String>,
        servers: usize,
    ) -> Result<FacilityId, KernelError> {
        let name = name.into();
        if servers == 0 {
            return Err(KernelError::ZeroServers(name));
        }
        let id = FacilityId(self.facilities.len());
        self.facilities
            .push(Facility::new(name, servers, self.clock));
        Ok(id)
    }

    pub fn facility(&self, id: FacilityId) -> Result<&Facility, KernelError> {
        self.facilities
            .get(id.0)
            .ok_or(KernelError::UnknownFacility(id))
    }

    fn facility_mut(&mut self, id: FacilityId) -> Result<&mut Facility, KernelError> {
        self.facilities
            .get_mut(id.0)
            .ok_or(KernelError::UnknownFacility(id))
    }

    /// Number of busy servers.
    pub fn status(&self, id: FacilityId) -> Result<usize, KernelError> {
        Ok(self.facility(id)?.busy_count())
    }

    fn check_request(
        &self,
        facility: FacilityId,
        token: TokenId,
        service_time: f64,
    ) -> Result<(), KernelError> {
        self.facility(facility)?;
        if !self.tokens.contains_key(&token) {
            return Err(KernelError::UnknownToken(token));
        }
        if !(service_time.is_finite() && service_time >= 0.0) {
            return Err(KernelError::InvalidServiceTime(service_time));
        }
        Ok(())
    }

    fn start_service(
        &mut self,
        facility: FacilityId,
        server: usize,
        token: TokenId,
        priority: i32,
        service_time: f64,
    ) -> Result<(), KernelError> {
        let release_event = self.schedule_kind(
            EventKind::Release { facility, server },
            service_time,
            Some(token),
        )?;
        let start_seq = self.start_seq;
        self.start_seq += 1;
        let now = self.clock;
        if let Some(t) = self.tokens.get_mut(&token) {
            t.service_remaining = None;
        }
        self.facilities[facility.0].occupy(
            server,
            InService {
                token,
                priority,
                started_at: now,
                start_seq,
                release_event,
                release_at: now + service_time,
            },
        );
        Ok(())
    }

    fn wait_in_queue(
        &mut self,
        facility: FacilityId,
        token: TokenId,
        priority: i32,
        service_time: f64,
        preempted: bool,
    ) {
        let now = self.clock;
        if let Some(t) = self.tokens.get_mut(&token) {
            t.service_remaining = Some(service_time);
        }
        self.facilities[facility.0].enqueue(
            QueueEntry {
                token,
                priority,
                enqueued_at: now,
                service_time,
                preempted,
            },
            now,
        );
    }

    /// Asks for service: starts it on a free server of an operational
    /// facility, otherwise queues the token with its service time.
    pub fn request(
        &mut self,
        facility: FacilityId,
        token: TokenId,
        priority: i32,
        service_time: f64,
    ) -> Result<RequestOutcome, KernelError> {
        self.check_request(facility, token, service_time)?;
        let f = &mut self.facilities[facility.0];
        if f.up {
            if let Some(server) = f.claim_server() {
                f.record_wait(0.0);
                self.start_service(facility, server, token, priority, service_time)?;
                return Ok(RequestOutcome::Served {
                    server,
                    preempted: None,
                });
            }
        }
        self.wait_in_queue(facility, token, priority, service_time, false);
        Ok(RequestOutcome::Enqueued)
    }

    /// Like [`request`](Self::request), but a busy facility gives up the
    /// server of its lowest-priority token if that priority is strictly
    /// lower. The victim keeps its unserved time and waits ahead of tokens
    /// of equal priority.
    pub fn preempt(
        &mut self,
        facility: FacilityId,
        token: TokenId,
        priority: i32,
        service_time: f64,
    ) -> Result<RequestOutcome, KernelError> {
        self.check_request(facility, token, service_time)?;
        let f = &self.facilities[facility.0];
        if !f.up || f.has_free_server() {
            return self.request(facility, token, priority, service_time);
        }
        let Some(slot) = f.preemption_victim(priority) else {
            return self.request(facility, token, priority, service_time);
        };
        let now = self.clock;
        let f = &mut self.facilities[facility.0];
        let victim = f.vacate(slot, now).expect("victim slot is busy");
        f.stats.preemptions += 1;
        self.chain.remove(victim.release_event);
        let remaining = victim.release_at - now;
        self.wait_in_queue(facility, victim.token, victim.priority, remaining, true);

        let f = &mut self.facilities[facility.0];
        let server = f.claim_server().expect("preemption freed a server");
        f.record_wait(0.0);
        self.start_service(facility, server, token, priority, service_time)?;
        Ok(RequestOutcome::Served {
            server,
            preempted: Some(victim.token),
        })
    }

    /// Ends the service on `server` and, if the facility is up, starts the
    /// token at the head of the queue. Returns that token.
    pub fn release(
        &mut self,
        facility: FacilityId,
        server: usize,
    ) -> Result<Option<TokenId>, KernelError> {
        let now = self.clock;
        let f = self.facility_mut(facility)?;
        let done = f
            .vacate(server, now)
            .ok_or(KernelError::ServerNotBusy { facility, server })?;
        f.stats.completions += 1;
        // Released early: the completion event must not fire later.
        self.chain.remove(done.release_event);
        self.fill_servers(facility)
            .map(|started| started.into_iter().next())
    }

    fn fill_servers(&mut self, facility: FacilityId) -> Result<Vec<TokenId>, KernelError> {
        let now = self.clock;
        let mut started = Vec::new();
        loop {
            let f = &mut self.facilities[facility.0];
            if !f.up || !f.has_free_server() || f.queue_len() == 0 {
                break;
            }
            let entry = f.dequeue(now).expect("queue is non-empty");
            let server = f.claim_server().expect("free server");
            self.start_service(facility, server, entry.token, entry.priority, entry.service_time)?;
            started.push(entry.token);
        }
        Ok(started)
    }

    /// Marks a facility operational or failed. Bringing it back up starts
    /// waiting tokens on the free servers; the started tokens are returned.
    pub fn set_facility_up(
        &mut self,
        facility: FacilityId,
        up: bool,
    ) -> Result<Vec<TokenId>, KernelError> {
        let f = self.facility_mut(facility)?;
        let was_up = f.up;
        f.up = up;
        if up && !was_up {
            self.fill_servers(facility)
        } else {
            Ok(Vec::new())
        }
    }

    /// Evicts every token in service without completing it; their release
    /// events are cancelled. Waiting tokens stay queued.
    pub fn abort_service(&mut self, facility: FacilityId) -> Result<Vec<TokenId>, KernelError> {
        let now = self.clock;
        let f = self.facility_mut(facility)?;
        let slots: Vec<usize> = f.servers_in_use().map(|(s, _)| s).collect();
        let mut evicted = Vec::with_capacity(slots.len());
        for slot in slots {
            let service = self.facilities[facility.0]
                .vacate(slot, now)
                .expect("slot listed as busy");
            self.chain.remove(service.release_event);
            evicted.push(service.token);
        }
        self.fill_servers(facility)?;
        Ok(evicted)
    }

    pub fn facility_stats(
        &self,
        facility: FacilityId,
        now: f64,
    ) -> Result<FacilityReport, KernelError> {
        Ok(self.facility(facility)?.report(now))
    }

    pub fn facilities(&self) -> impl Iterator<Item = (FacilityId, &Facility)> {
        self.facilities
            .iter()
            .enumerate()
            .map(|(i, f)| (FacilityId(i), f))
    }
}
