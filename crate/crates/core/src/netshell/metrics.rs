use crate::ids::GeneratorId;

/// One packet delivered to its destination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryRecord {
    pub flow: GeneratorId,
    pub packet_id: u64,
    pub created_at: f64,
    pub arrived_at: f64,
    pub delay: f64,
    pub jitter: f64,
}

/// Delay and jitter bookkeeping for one application flow, as seen at the
/// destination. Jitter is the absolute change in delay from the previous
/// delivered packet; the first packet has none.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMetrics {
    pub flow: GeneratorId,
    pub records: Vec<DeliveryRecord>,
    pub sent: u64,
    pub received: u64,
    pub dropped: u64,
    pub last_delay: Option<f64>,
}

impl FlowMetrics {
    pub fn new(flow: GeneratorId) -> Self {
        Self {
            flow,
            records: Vec::new(),
            sent: 0,
            received: 0,
            dropped: 0,
            last_delay: None,
        }
    }

    pub fn record_delivery(&mut self, packet_id: u64, created_at: f64, now: f64) -> DeliveryRecord {
        let delay = now - created_at;
        debug_assert!(delay >= 0.0);
        let jitter = self.last_delay.map_or(0.0, |prev| (delay - prev).abs());
        self.last_delay = Some(delay);
        self.received += 1;
        let record = DeliveryRecord {
            flow: self.flow,
            packet_id,
            created_at,
            arrived_at: now,
            delay,
            jitter,
        };
        self.records.push(record);
        record
    }

    pub fn in_flight(&self) -> u64 {
        self.sent - self.received - self.dropped
    }

    pub fn mean_delay(&self) -> f64 {
        mean(self.records.iter().map(|r| r.delay))
    }

    pub fn max_delay(&self) -> f64 {
        self.records.iter().map(|r| r.delay).fold(0.0, f64::max)
    }

    pub fn mean_jitter(&self) -> f64 {
        mean(self.records.iter().map(|r| r.jitter))
    }

    pub fn max_jitter(&self) -> f64 {
        self.records.iter().map(|r| r.jitter).fold(0.0, f64::max)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
