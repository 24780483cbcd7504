/// Token-bucket policer measured in bytes of credit.
#[derive(Debug, Clone, PartialEq)]
pub struct Policer {
    rate: f64,
    bucket_size: f64,
    tokens: f64,
    last_update: f64,
    pub conformed: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Conform,
    Drop,
}

impl Policer {
    /// A policer for `rate` bit/s with a `bucket_size`-byte bucket, full at `now`.
    pub fn new(rate: f64, bucket_size: f64, now: f64) -> Self {
        Self::with_tokens(rate, bucket_size, bucket_size, now)
    }

    pub fn with_tokens(rate: f64, bucket_size: f64, tokens: f64, now: f64) -> Self {
        Self {
            rate,
            bucket_size,
            tokens: tokens.clamp(0.0, bucket_size),
            last_update: now,
            conformed: 0,
            dropped: 0,
        }
    }

    pub fn tokens(&self) -> f64 {
        self.tokens
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn bucket_size(&self) -> f64 {
        self.bucket_size
    }

    pub fn police(&mut self, size: u32, now: f64) -> Verdict {
        let elapsed = (now - self.last_update).max(0.0);
        self.tokens = (self.tokens + self.rate * elapsed / 8.0).min(self.bucket_size);
        self.last_update = now;
        let size = f64::from(size);
        if self.tokens >= size {
            self.tokens -= size;
            self.conformed += 1;
            Verdict::Conform
        } else {
            self.dropped += 1;
            Verdict::Drop
        }
    }
}
