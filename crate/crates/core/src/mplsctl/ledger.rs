use std::collections::BTreeMap;

use crate::ids::LspId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reservation {
    /// bit/s
    pub amount: f64,
    pub tentative: bool,
    /// When the entry was last made tentative or confirmed.
    pub since: f64,
}

/// Bandwidth reserved on one simplex link, per LSP.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservationLedger {
    capacity: f64,
    entries: BTreeMap<LspId, Reservation>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Insufficient {
    pub requested: f64,
    pub available: f64,
}

impl ReservationLedger {
    pub fn new(capacity: f64) -> Self {
        Self {
            capacity,
            entries: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    /// Confirmed plus tentative reservations.
    pub fn reserved(&self) -> f64 {
        self.entries.values().map(|r| r.amount).sum()
    }

    pub fn available(&self) -> f64 {
        self.capacity - self.reserved()
    }

    pub fn get(&self, lsp: LspId) -> Option<&Reservation> {
        self.entries.get(&lsp)
    }

    pub fn entries(&self) -> impl Iterator<Item = (LspId, &Reservation)> {
        self.entries.iter().map(|(id, r)| (*id, r))
    }

    /// Pre-reserves `amount` for `lsp` if it fits. Re-reserving replaces the
    /// previous amount.
    pub fn reserve_tentative(&mut self, lsp: LspId, amount: f64, now: f64) -> Result<(), Insufficient> {
        let current = self.entries.get(&lsp).map_or(0.0, |r| r.amount);
        let available = self.available() + current;
        if amount > available {
            return Err(Insufficient {
                requested: amount,
                available,
            });
        }
        self.entries.insert(
            lsp,
            Reservation {
                amount,
                tentative: true,
                since: now,
            },
        );
        Ok(())
    }

    /// Returns false when `lsp` holds nothing here.
    pub fn confirm(&mut self, lsp: LspId, now: f64) -> bool {
        match self.entries.get_mut(&lsp) {
            Some(r) => {
                r.tentative = false;
                r.since = now;
                true
            }
            None => false,
        }
    }

    pub fn release(&mut self, lsp: LspId) -> Option<Reservation> {
        self.entries.remove(&lsp)
    }

    /// Drops tentative entries older than `timeout`; returns their owners.
    pub fn expire_tentative(&mut self, now: f64, timeout: f64) -> Vec<LspId> {
        let stale: Vec<LspId> = self
            .entries
            .iter()
            .filter(|(_, r)| r.tentative && now - r.since > timeout)
            .map(|(id, _)| *id)
            .collect();
        for id in &stale {
            self.entries.remove(id);
        }
        stale
    }
}
