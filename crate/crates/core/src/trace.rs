//! Canonical symbolic access traces.
//!
//! Every oblivious routine in this crate reports the logical objects it touches
//! (`"LSH"`, `"OHT.t1"`, `"ReqArray"`, ...) together with offsets and lengths
//! that are derived from public shape parameters and public loop indices only.
//! Two executions over different private data but identical public parameters
//! must produce byte-identical canonical traces; the acceptance suite and the
//! `audit-trace` command check exactly that.
//!
//! Recording is a runtime mode: a disabled log drops every event before it is
//! constructed, so training runs pay one predictable branch on a public flag.
//!
//! Parallel phases keep one sub-log per worker. The canonical order expands a
//! parallel phase worker by worker (0..W-1), each worker's events in its own
//! program order.

use std::borrow::Cow;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Magic prefix of a serialized trace file.
pub const TRACE_MAGIC: &[u8; 4] = b"OTR1";

/// Environment variable that forces trace recording on.
pub const TRACE_ENV: &str = "OBLIVNET_TRACE";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum EventKind {
    Read = 0,
    Write = 1,
    CmpSet = 2,
    SortExchange = 3,
    PhaseMark = 4,
}

impl EventKind {
    fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Self::Read,
            1 => Self::Write,
            2 => Self::CmpSet,
            3 => Self::SortExchange,
            4 => Self::PhaseMark,
            _ => return None,
        })
    }
}

/// One logical access. Never carries a secret value, a data-dependent index,
/// or a predicate outcome.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub kind: EventKind,
    pub object: Cow<'static, str>,
    pub offset: u64,
    pub length: u64,
    pub worker: u32,
}

impl TraceEvent {
    pub fn new(kind: EventKind, object: &'static str, offset: u64, length: u64) -> Self {
        Self {
            kind,
            object: Cow::Borrowed(object),
            offset,
            length,
            worker: 0,
        }
    }

    pub fn on_worker(mut self, worker: u32) -> Self {
        self.worker = worker;
        self
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        let name = self.object.as_bytes();
        let body_len = 1 + 4 + 8 + 8 + 2 + name.len();
        out.extend_from_slice(&(body_len as u32).to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.worker.to_le_bytes());
        out.extend_from_slice(&self.offset.to_le_bytes());
        out.extend_from_slice(&self.length.to_le_bytes());
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
    }

    fn decode(body: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Format {
            what: "trace event",
            msg: msg.to_string(),
        };
        if body.len() < 23 {
            return Err(bad("event shorter than fixed header"));
        }
        let kind = EventKind::from_u8(body[0]).ok_or_else(|| bad("unknown event kind"))?;
        let worker = u32::from_le_bytes(body[1..5].try_into().unwrap());
        let offset = u64::from_le_bytes(body[5..13].try_into().unwrap());
        let length = u64::from_le_bytes(body[13..21].try_into().unwrap());
        let name_len = u16::from_le_bytes(body[21..23].try_into().unwrap()) as usize;
        if body.len() != 23 + name_len {
            return Err(bad("object name length disagrees with event length"));
        }
        let object = std::str::from_utf8(&body[23..])
            .map_err(|_| bad("object name is not UTF-8"))?
            .to_string();
        Ok(Self {
            kind,
            object: Cow::Owned(object),
            offset,
            length,
            worker,
        })
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?}({}, off={}, len={}, w={})",
            self.kind, self.object, self.offset, self.length, self.worker
        )
    }
}

#[derive(Clone, Debug)]
enum Segment {
    Seq(Vec<TraceEvent>),
    Par(Vec<Vec<TraceEvent>>),
}

/// Ordered log of trace events with per-worker sub-logs for parallel phases.
#[derive(Clone, Debug)]
pub struct TraceLog {
    enabled: bool,
    worker: u32,
    segments: Vec<Segment>,
    open: Option<Vec<Vec<TraceEvent>>>,
}

impl Default for TraceLog {
    fn default() -> Self {
        Self::new()
    }
}

impl TraceLog {
    /// A recording log.
    pub fn new() -> Self {
        Self::with_mode(true)
    }

    /// A log that drops every event.
    pub fn disabled() -> Self {
        Self::with_mode(false)
    }

    pub fn with_mode(enabled: bool) -> Self {
        Self {
            enabled,
            worker: 0,
            segments: Vec::new(),
            open: None,
        }
    }

    /// Recording iff `requested` or `OBLIVNET_TRACE=1` is set.
    pub fn from_env(requested: bool) -> Self {
        let forced = std::env::var(TRACE_ENV).map(|v| v == "1").unwrap_or(false);
        Self::with_mode(requested || forced)
    }

    /// A private sub-log for worker `w` of a parallel phase, in the same mode.
    pub fn worker_log(&self, worker: usize) -> Self {
        Self {
            enabled: self.enabled,
            worker: worker as u32,
            segments: Vec::new(),
            open: None,
        }
    }

    #[inline]
    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn worker(&self) -> u32 {
        self.worker
    }

    /// Appends `event` to its worker's sub-log (or the sequential log).
    pub fn record(&mut self, event: TraceEvent) {
        if !self.enabled {
            return;
        }
        match &mut self.open {
            Some(workers) => {
                let w = event.worker as usize;
                if workers.len() <= w {
                    workers.resize_with(w + 1, Vec::new);
                }
                workers[w].push(event);
            }
            None => match self.segments.last_mut() {
                Some(Segment::Seq(events)) => events.push(event),
                _ => self.segments.push(Segment::Seq(vec![event])),
            },
        }
    }

    #[inline]
    fn emit(&mut self, kind: EventKind, object: &'static str, offset: usize, length: usize) {
        if self.enabled {
            let ev = TraceEvent::new(kind, object, offset as u64, length as u64).on_worker(self.worker);
            self.record(ev);
        }
    }

    #[inline]
    pub fn read(&mut self, object: &'static str, offset: usize, length: usize) {
        self.emit(EventKind::Read, object, offset, length);
    }

    #[inline]
    pub fn write(&mut self, object: &'static str, offset: usize, length: usize) {
        self.emit(EventKind::Write, object, offset, length);
    }

    #[inline]
    pub fn cmpset(&mut self, object: &'static str, offset: usize, length: usize) {
        self.emit(EventKind::CmpSet, object, offset, length);
    }

    #[inline]
    pub fn exchange(&mut self, object: &'static str, lo: usize, distance: usize) {
        self.emit(EventKind::SortExchange, object, lo, distance);
    }

    /// Delimits a pipeline component so divergence reports can be localized.
    pub fn phase(&mut self, name: &'static str) {
        self.emit(EventKind::PhaseMark, name, 0, 0);
    }

    /// Opens a parallel phase in which `record` routes events by worker index.
    pub fn begin_parallel(&mut self, workers: usize) -> Result<()> {
        if self.open.is_some() {
            return Err(Error::InvalidConfig("parallel phase already open".into()));
        }
        self.open = Some(vec![Vec::new(); workers]);
        Ok(())
    }

    pub fn end_parallel(&mut self) -> Result<()> {
        let workers = self
            .open
            .take()
            .ok_or_else(|| Error::InvalidConfig("no parallel phase is open".into()))?;
        if self.enabled {
            self.segments.push(Segment::Par(workers));
        }
        Ok(())
    }

    /// Closes a parallel phase whose workers recorded into their own logs
    /// (see [`TraceLog::worker_log`]).
    pub fn absorb_parallel(&mut self, logs: Vec<TraceLog>) -> Result<()> {
        if self.open.is_some() {
            return Err(Error::UnclosedParallelPhase);
        }
        if !self.enabled {
            return Ok(());
        }
        let width = logs.iter().map(|l| l.worker as usize + 1).max().unwrap_or(0);
        let mut per_worker = vec![Vec::new(); width];
        for log in logs {
            let w = log.worker as usize;
            per_worker[w].extend(log.events().cloned());
        }
        self.segments.push(Segment::Par(per_worker));
        Ok(())
    }

    pub fn has_open_phase(&self) -> bool {
        self.open.is_some()
    }

    /// Events in canonical order, including any still-open phase.
    pub fn events(&self) -> impl Iterator<Item = &TraceEvent> + '_ {
        let closed = self
            .segments
            .iter()
            .flat_map(|seg| -> Box<dyn Iterator<Item = &TraceEvent>> {
                match seg {
                    Segment::Seq(v) => Box::new(v.iter()),
                    Segment::Par(ws) => Box::new(ws.iter().flatten()),
                }
            });
        closed.chain(self.open.iter().flatten().flatten())
    }

    pub fn len(&self) -> usize {
        self.events().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of events of `kind` on `object`.
    pub fn count(&self, kind: EventKind, object: &str) -> usize {
        self.events().filter(|e| e.kind == kind && e.object == object).count()
    }

    /// Deterministic serialization: each event length-prefixed, in canonical order.
    pub fn canonicalize(&self) -> Result<Vec<u8>> {
        if self.open.is_some() {
            return Err(Error::UnclosedParallelPhase);
        }
        let mut out = Vec::new();
        for ev in self.events() {
            ev.encode_into(&mut out);
        }
        Ok(out)
    }

    /// Hex SHA-256 of the canonical bytes.
    pub fn digest(&self) -> Result<String> {
        let bytes = self.canonicalize()?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.canonicalize()?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(TRACE_MAGIC)?;
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }

    /// Reads a trace file back as a flat event sequence.
    pub fn read_file(path: impl AsRef<Path>) -> Result<Vec<TraceEvent>> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        if bytes.len() < 4 || &bytes[..4] != TRACE_MAGIC {
            return Err(Error::Format {
                what: "trace file",
                msg: "missing OTR1 magic".into(),
            });
        }
        let mut events = Vec::new();
        let mut pos = 4;
        while pos < bytes.len() {
            if pos + 4 > bytes.len() {
                return Err(Error::Format {
                    what: "trace file",
                    msg: "truncated length prefix".into(),
                });
            }
            let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
            pos += 4;
            let body = bytes.get(pos..pos + len).ok_or_else(|| Error::Format {
                what: "trace file",
                msg: "truncated event".into(),
            })?;
            events.push(TraceEvent::decode(body)?);
            pos += len;
        }
        Ok(events)
    }
}

/// First position at which two canonical traces disagree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divergence {
    pub index: usize,
    pub left: Option<TraceEvent>,
    pub right: Option<TraceEvent>,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |e: &Option<TraceEvent>| match e {
            Some(e) => e.to_string(),
            None => "<end of trace>".to_string(),
        };
        write!(
            f,
            "traces diverge at event {}: {} vs {}",
            self.index,
            show(&self.left),
            show(&self.right)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceComparison {
    pub equal: bool,
    pub divergence: Option<Divergence>,
}

/// Compares two logs event by event in canonical order.
pub fn assert_equal(a: &TraceLog, b: &TraceLog) -> TraceComparison {
    compare_events(a.events(), b.events())
}

pub fn compare_events<'a>(
    a: impl IntoIterator<Item = &'a TraceEvent>,
    b: impl IntoIterator<Item = &'a TraceEvent>,
) -> TraceComparison {
    let mut a = a.into_iter();
    let mut b = b.into_iter();
    let mut index = 0;
    loop {
        match (a.next(), b.next()) {
            (None, None) => {
                return TraceComparison {
                    equal: true,
                    divergence: None,
                }
            }
            (x, y) if x == y => index += 1,
            (x, y) => {
                return TraceComparison {
                    equal: false,
                    divergence: Some(Divergence {
                        index,
                        left: x.cloned(),
                        right: y.cloned(),
                    }),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_worker_log(first: u32, second: u32) -> TraceLog {
        let mut log = TraceLog::new();
        log.begin_parallel(2).unwrap();
        log.record(TraceEvent::new(EventKind::Read, "LSH", 0, 8).on_worker(first));
        log.record(TraceEvent::new(EventKind::Read, "LSH", 8, 8).on_worker(second));
        log.end_parallel().unwrap();
        log
    }

    #[test]
    fn record_appends() {
        let mut log = TraceLog::new();
        log.record(TraceEvent::new(EventKind::Read, "LSH", 0, 8));
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn disabled_log_stays_empty() {
        let mut log = TraceLog::disabled();
        log.record(TraceEvent::new(EventKind::Read, "LSH", 0, 8));
        log.read("LSH", 0, 8);
        assert!(log.is_empty());
        assert!(log.canonicalize().unwrap().is_empty());
    }

    #[test]
    fn workers_land_in_own_sublogs() {
        let mut log = TraceLog::new();
        log.begin_parallel(2).unwrap();
        log.record(TraceEvent::new(EventKind::Read, "A", 0, 1).on_worker(1));
        log.record(TraceEvent::new(EventKind::Read, "B", 0, 1).on_worker(0));
        log.end_parallel().unwrap();
        let order: Vec<_> = log.events().map(|e| e.object.to_string()).collect();
        // worker 0's events come first in canonical order
        assert_eq!(order, vec!["B", "A"]);
    }

    #[test]
    fn empty_log_canonicalizes_to_nothing() {
        assert!(TraceLog::new().canonicalize().unwrap().is_empty());
    }

    #[test]
    fn unclosed_phase_is_an_error() {
        let mut log = TraceLog::new();
        log.begin_parallel(2).unwrap();
        assert!(matches!(log.canonicalize(), Err(Error::UnclosedParallelPhase)));
    }

    #[test]
    fn swapped_workers_change_bytes() {
        let a = two_worker_log(0, 1);
        let b = two_worker_log(1, 0);
        assert_eq!(a.canonicalize().unwrap(), a.clone().canonicalize().unwrap());
        assert_ne!(a.canonicalize().unwrap(), b.canonicalize().unwrap());
    }

    #[test]
    fn comparison_reports_first_divergence() {
        let mut a = TraceLog::new();
        let mut b = TraceLog::new();
        for off in 0..4 {
            a.read("LSH", off, 1);
            b.read("LSH", if off == 2 { 9 } else { off }, 1);
        }
        assert!(assert_equal(&a, &a.clone()).equal);
        let cmp = assert_equal(&a, &b);
        assert!(!cmp.equal);
        let d = cmp.divergence.unwrap();
        assert_eq!(d.index, 2);
        assert_eq!(d.left.unwrap().offset, 2);
        assert_eq!(d.right.unwrap().offset, 9);
    }

    #[test]
    fn absorbed_worker_logs_follow_worker_order() {
        let mut log = TraceLog::new();
        let mut w1 = log.worker_log(1);
        let mut w0 = log.worker_log(0);
        w1.read("X", 1, 1);
        w0.read("X", 0, 1);
        log.absorb_parallel(vec![w1, w0]).unwrap();
        let offs: Vec<_> = log.events().map(|e| (e.offset, e.worker)).collect();
        assert_eq!(offs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.otr");
        let mut log = TraceLog::new();
        log.phase("Requester");
        log.exchange("ReqArray", 3, 4);
        log.write_file(&path).unwrap();
        let back = TraceLog::read_file(&path).unwrap();
        assert_eq!(back, log.events().cloned().collect::<Vec<_>>());
        assert_eq!(log.digest().unwrap().len(), 64);
    }
}
