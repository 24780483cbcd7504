use std::fmt;
use std::str::FromStr;

use crate::ids::{GeneratorId, NodeId};
use crate::kernel::rng::{Exponential, Pareto, RngStream};
use crate::kernel::KernelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    Cbr,
    Exponential,
    ExpOnOff,
    Pareto,
}

impl GeneratorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorKind::Cbr => "CBR",
            GeneratorKind::Exponential => "EXPONENTIAL",
            GeneratorKind::ExpOnOff => "EXP_ON_OFF",
            GeneratorKind::Pareto => "PARETO",
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeneratorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "CBR" => Ok(GeneratorKind::Cbr),
            "EXPONENTIAL" => Ok(GeneratorKind::Exponential),
            "EXP_ON_OFF" => Ok(GeneratorKind::ExpOnOff),
            "PARETO" => Ok(GeneratorKind::Pareto),
            other => Err(format!("unknown generator kind {other:?}")),
        }
    }
}

/// Token bucket attached to a generator's output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicerSpec {
    pub rate: f64,
    pub bucket_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub id: GeneratorId,
    pub kind: GeneratorKind,
    pub node: NodeId,
    pub dst: NodeId,
    pub packet_size: u32,
    /// Mean rate, or the in-burst rate for EXP_ON_OFF, in bit/s.
    pub rate: f64,
    pub on_mean: Option<f64>,
    pub off_mean: Option<f64>,
    pub pareto_shape: Option<f64>,
    /// Defaults to the scale giving a mean interval of `packet_size * 8 / rate`.
    pub pareto_scale: Option<f64>,
    pub start: f64,
    pub policer: Option<PolicerSpec>,
}

impl GeneratorSpec {
    /// Nominal spacing of packets at `rate`.
    pub fn interval(&self) -> f64 {
        f64::from(self.packet_size) * 8.0 / self.rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorState {
    /// Not started, or in an OFF period that ends at the given time.
    Off { until: Option<f64> },
    On { until: f64 },
    Stopped,
}

#[derive(Debug, Clone, Copy)]
enum Gaps {
    Fixed,
    Exponential(Exponential),
    Pareto(Pareto),
    OnOff { on: Exponential, off: Exponential },
}

/// Packet emission schedule of one traffic source.
#[derive(Debug, Clone)]
pub struct TrafficGenerator {
    pub spec: GeneratorSpec,
    pub state: GeneratorState,
    gaps: Gaps,
    rng: RngStream,
    /// Sum of drawn ON and OFF period lengths.
    pub on_time: f64,
    pub off_time: f64,
    /// Completed OFF periods.
    pub cycles: u64,
}

impl TrafficGenerator {
    pub fn new(spec: GeneratorSpec, rng: RngStream) -> Result<Self, KernelError> {
        if !(spec.rate.is_finite() && spec.rate > 0.0) || spec.packet_size == 0 {
            return Err(KernelError::InvalidDistribution(format!(
                "generator {} needs a positive rate and packet size",
                spec.id
            )));
        }
        let gaps = match spec.kind {
            GeneratorKind::Cbr => Gaps::Fixed,
            GeneratorKind::Exponential => Gaps::Exponential(Exponential::new(spec.interval())?),
            GeneratorKind::Pareto => {
                let shape = spec.pareto_shape.ok_or_else(|| {
                    KernelError::InvalidDistribution(format!(
                        "PARETO generator {} needs a shape",
                        spec.id
                    ))
                })?;
                let scale = spec
                    .pareto_scale
                    .unwrap_or(spec.interval() * (shape - 1.0) / shape);
                Gaps::Pareto(Pareto::new(shape, scale)?)
            }
            GeneratorKind::ExpOnOff => {
                let (Some(on), Some(off)) = (spec.on_mean, spec.off_mean) else {
                    return Err(KernelError::InvalidDistribution(format!(
                        "EXP_ON_OFF generator {} needs on and off means",
                        spec.id
                    )));
                };
                Gaps::OnOff {
                    on: Exponential::new(on)?,
                    off: Exponential::new(off)?,
                }
            }
        };
        Ok(Self {
            spec,
            state: GeneratorState::Off { until: None },
            gaps,
            rng,
            on_time: 0.0,
            off_time: 0.0,
            cycles: 0,
        })
    }

    pub fn id(&self) -> GeneratorId {
        self.spec.id
    }

    /// Starts the source at `now`. On/off sources open with an ON period.
    pub fn start(&mut self, now: f64) {
        self.state = GeneratorState::Off { until: Some(now) };
    }

    pub fn stop(&mut self) {
        self.state = GeneratorState::Stopped;
    }

    /// Called at an emission instant. Returns whether a packet goes out now
    /// and the delay until the next emission instant.
    pub fn emit(&mut self, now: f64) -> Option<f64> {
        match self.state {
            GeneratorState::Stopped => return None,
            GeneratorState::Off { until: None } => return None,
            _ => {}
        }
        let interval = self.spec.interval();
        match self.gaps {
            Gaps::Fixed => {
                self.state = GeneratorState::On { until: f64::INFINITY };
                Some(interval)
            }
            Gaps::Exponential(d) => {
                self.state = GeneratorState::On { until: f64::INFINITY };
                Some(d.sample(&mut self.rng))
            }
            Gaps::Pareto(d) => {
                self.state = GeneratorState::On { until: f64::INFINITY };
                Some(d.sample(&mut self.rng))
            }
            Gaps::OnOff { on, off } => {
                let until = match self.state {
                    GeneratorState::On { until } => until,
                    _ => {
                        let length = on.sample(&mut self.rng);
                        self.on_time += length;
                        now + length
                    }
                };
                let next = now + interval;
                if next < until {
                    self.state = GeneratorState::On { until };
                    Some(interval)
                } else {
                    let silence = off.sample(&mut self.rng);
                    self.off_time += silence;
                    self.cycles += 1;
                    let resume = until + silence;
                    self.state = GeneratorState::Off {
                        until: Some(resume),
                    };
                    Some(resume - now)
                }
            }
        }
    }

    /// Fraction of drawn period time spent ON.
    pub fn duty_cycle(&self) -> f64 {
        let total = self.on_time + self.off_time;
        if total > 0.0 {
            self.on_time / total
        } else {
            0.0
        }
    }
}
