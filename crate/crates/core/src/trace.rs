//! JSON-lines traces: a header, one line per engine event, a summary.
//!
//! Every certificate in a trace re-verifies on its own, consecutive
//! certificates link up from the input's fibre decomposition, and replaying
//! the recorded driver on the recorded input reproduces the file byte for
//! byte.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use num_traits::Signed;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::caps::Caps;
use crate::certificate::{transport_floor, IncrementCertificate};
use crate::counting::quadruple_count;
use crate::engine::{self, Branch, EngineConfig};
use crate::error::{Error, Result};
use crate::group::{fibre_decompose, Family, Z4Set};
use crate::rational::{serde_rational, Rational};

pub const TRACE_SCHEMA: &str = "z4ap-trace/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Driver {
    Rml,
    Weighted,
}

impl std::str::FromStr for Driver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rml" => Ok(Driver::Rml),
            "weighted" => Ok(Driver::Weighted),
            _ => Err(Error::invalid(format!("unknown driver {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub driver: Driver,
    pub config: EngineConfig,
    pub input: Z4Set,
}

/// A floor on `Λ` of the family current at the event, and the same floor
/// carried back to the input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloorRecord {
    #[serde(with = "serde_rational")]
    pub local: Rational,
    pub m: usize,
    #[serde(with = "serde_rational")]
    pub global: Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: usize,
    pub branch: Branch,
    pub measured: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<IncrementCertificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<FloorRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Floor,
    MaxSteps,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub termination: Termination,
    pub certificates: usize,
    /// `Q_0 ≥ Q_1 ≥ ... ≥ Q_k` along the certificate chain.
    #[serde(with = "crate::certificate::serde_count::vec")]
    pub chain_counts: Vec<u128>,
    pub final_m: usize,
    #[serde(with = "serde_rational")]
    pub global_floor: Rational,
    #[serde(with = "serde_rational")]
    pub exact_lambda: Rational,
    pub sound: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Header(Header),
    Event(TraceEvent),
    Summary(Summary),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub header: Header,
    pub events: Vec<TraceEvent>,
    pub summary: Summary,
}

impl Trace {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let mut line = |l: Line| -> Result<()> {
            serde_json::to_writer(&mut w, &l)?;
            w.write_all(b"\n")?;
            Ok(())
        };
        line(Line::Header(self.header.clone()))?;
        for e in &self.events {
            line(Line::Event(e.clone()))?;
        }
        line(Line::Summary(self.summary.clone()))
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_from(r: impl BufRead) -> Result<Trace> {
        let mut header = None;
        let mut events = Vec::new();
        let mut summary = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            match parsed {
                Line::Header(h) if header.is_none() && i == 0 => header = Some(h),
                Line::Event(e) if header.is_some() && summary.is_none() => events.push(e),
                Line::Summary(s) if header.is_some() && summary.is_none() => summary = Some(s),
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: "expected header, then events, then one summary".into(),
                    })
                }
            }
        }
        let header = header.ok_or_else(|| Error::Schema("missing header".into()))?;
        if header.schema != TRACE_SCHEMA {
            return Err(Error::Schema(format!(
                "expected {TRACE_SCHEMA}, found {}",
                header.schema
            )));
        }
        let summary = summary.ok_or_else(|| Error::Schema("missing summary".into()))?;
        Ok(Trace {
            header,
            events,
            summary,
        })
    }

    pub fn parse(s: &str) -> Result<Trace> {
        Trace::read_from(s.as_bytes())
    }
}

/// Collects events while a driver runs and keeps the certificate chain
/// consistent.
pub(crate) struct Recorder {
    start: Family,
    start_m: usize,
    current: Family,
    events: Vec<TraceEvent>,
    counts: Vec<u128>,
    floor: Option<Rational>,
}

impl Recorder {
    pub(crate) fn new(start: &Family) -> Self {
        Recorder {
            start_m: start.ambient_m(),
            current: start.clone(),
            counts: vec![quadruple_count(start)],
            start: start.clone(),
            events: Vec::new(),
            floor: None,
        }
    }

    pub(crate) fn current(&self) -> &Family {
        &self.current
    }

    pub(crate) fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub(crate) fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }

    /// The global floor, once a floor event has been recorded.
    pub(crate) fn floor(&self) -> Option<&Rational> {
        self.floor.as_ref()
    }

    pub(crate) fn note(&mut self, branch: Branch, measured: BTreeMap<String, Value>) {
        self.push(branch, measured, None, None);
    }

    pub(crate) fn certify(
        &mut self,
        branch: Branch,
        measured: BTreeMap<String, Value>,
        cert: IncrementCertificate,
    ) -> Result<()> {
        if cert.before_family != self.current {
            return Err(Error::mismatch(
                "trace",
                format!("{branch:?} certificate does not start at the current family"),
            ));
        }
        self.current = cert.after_family.clone();
        self.counts.push(cert.after.raw_count);
        self.push(branch, measured, Some(cert), None);
        Ok(())
    }

    /// Records a floor on `Λ` of the current family.
    pub(crate) fn floor_event(&mut self, branch: Branch, measured: BTreeMap<String, Value>, local: Rational) {
        let m = self.current.ambient_m();
        let global = transport_floor(&local, self.start_m, m);
        self.floor = Some(global.clone());
        self.push(branch, measured, None, Some(FloorRecord { local, m, global }));
    }

    fn push(
        &mut self,
        branch: Branch,
        measured: BTreeMap<String, Value>,
        certificate: Option<IncrementCertificate>,
        floor: Option<FloorRecord>,
    ) {
        self.events.push(TraceEvent {
            step: self.events.len(),
            branch,
            measured,
            certificate,
            floor,
        });
    }

    pub(crate) fn finish(self, driver: Driver, config: &EngineConfig, input: &Z4Set) -> Result<Trace> {
        let exact_lambda = crate::counting::raw_to_lambda(self.counts[0], self.start_m);
        let (termination, global_floor) = match &self.floor {
            Some(f) => (Termination::Floor, f.clone()),
            None => (Termination::MaxSteps, Rational::from_integer(0.into())),
        };
        if self.start != fibre_decompose(input) {
            return Err(Error::mismatch("trace", "recorder did not start at the input"));
        }
        let summary = Summary {
            termination,
            certificates: self.counts.len() - 1,
            chain_counts: self.counts,
            final_m: self.current.ambient_m(),
            sound: global_floor <= exact_lambda,
            global_floor,
            exact_lambda,
        };
        Ok(Trace {
            header: Header {
                schema: TRACE_SCHEMA.into(),
                driver,
                config: config.clone(),
                input: input.clone(),
            },
            events: self.events,
            summary,
        })
    }
}

/// Re-checks every certificate and floor in `text`, then replays the driver
/// and compares the output byte for byte.
pub fn verify(text: &str, caps: &Caps) -> Result<Trace> {
    let trace = Trace::parse(text)?;
    let start = fibre_decompose(&trace.header.input);
    let start_m = start.ambient_m();
    let mut current = start.clone();
    let mut counts = vec![quadruple_count(&start)];
    let mut last_floor = None;
    for (i, e) in trace.events.iter().enumerate() {
        let fail = |reason: String| Error::Certificate { step: e.step, reason };
        if e.step != i {
            return Err(fail(format!("event {i} carries step {}", e.step)));
        }
        if let Some(cert) = &e.certificate {
            cert.verify(e.step)?;
            if cert.before_family != current {
                return Err(fail("certificate does not start where the previous one ended".into()));
            }
            counts.push(cert.after.raw_count);
            current = cert.after_family.clone();
        }
        if let Some(f) = &e.floor {
            if f.m != current.ambient_m() {
                return Err(fail(format!(
                    "floor recorded on Z_2^{} but the chain is on Z_2^{}",
                    f.m,
                    current.ambient_m()
                )));
            }
            if f.global != transport_floor(&f.local, start_m, f.m) {
                return Err(fail("global floor is not the transported local floor".into()));
            }
            if f.local.is_negative() {
                return Err(fail("negative floor".into()));
            }
            last_floor = Some(f.global.clone());
        }
    }
    let s = &trace.summary;
    let summary_fail = |reason: &str| Error::Certificate {
        step: trace.events.len(),
        reason: format!("summary: {reason}"),
    };
    if s.chain_counts != counts {
        return Err(summary_fail("chain counts differ from the certificates"));
    }
    if counts.windows(2).any(|w| w[0] < w[1]) {
        return Err(summary_fail("chain counts increase"));
    }
    if s.certificates != counts.len() - 1 || s.final_m != current.ambient_m() {
        return Err(summary_fail("certificate count or final dimension is wrong"));
    }
    let exact = crate::counting::raw_to_lambda(counts[0], start_m);
    if s.exact_lambda != exact {
        return Err(summary_fail("exact Λ is wrong"));
    }
    match (&last_floor, s.termination) {
        (Some(f), Termination::Floor) if f == &s.global_floor => {}
        (None, Termination::MaxSteps) if s.global_floor == Rational::from_integer(0.into()) => {}
        _ => return Err(summary_fail("termination and final floor disagree with the events")),
    }
    if s.sound != (s.global_floor <= exact) {
        return Err(summary_fail("soundness flag is wrong"));
    }

    let replay = engine::run(trace.header.driver, &trace.header.input, &trace.header.config, caps)?;
    let expected = replay.to_jsonl();
    if expected != text {
        let line = expected
            .lines()
            .zip(text.lines())
            .position(|(a, b)| a != b)
            .unwrap_or_else(|| expected.lines().count().min(text.lines().count()));
        return Err(Error::Certificate {
            step: line.saturating_sub(1),
            reason: format!("replay differs from the trace at line {}", line + 1),
        });
    }
    Ok(trace)
}
