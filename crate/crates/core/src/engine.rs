//! Deterministic discrete-event core.
//!
//! Events are ordered by `(fire_at, seq)` where `seq` is a per-engine insertion
//! counter, so two runs that schedule the same events in the same order process
//! them identically. Every processed event is appended to an [`EventLog`];
//! handlers may append extra trace records through [`Engine::record`].

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Write as _;
use std::io;

use crate::time::{SimDuration, SimTime};
use crate::SimError;

/// Index into the engine's entity name table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Returned by [`Engine::schedule`]; used to cancel the event later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn seq(self) -> u64 {
        self.0
    }
}

/// Log-facing description of an event payload.
pub trait EventPayload {
    fn kind(&self) -> &'static str;

    /// Free-form detail. Must not contain commas or newlines.
    fn detail(&self) -> String {
        String::new()
    }
}

#[derive(Debug, Clone)]
pub struct Event<E> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: EntityId,
    pub payload: E,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub time: SimTime,
    pub entity: EntityId,
    pub kind: &'static str,
    pub detail: String,
}

/// Append-only record of a run, serialisable as `time_us,entity,kind,detail` lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    names: Vec<String>,
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.names[id.index()]
    }

    pub fn entity_names(&self) -> &[String] {
        &self.names
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 40);
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.time.as_micros(),
                self.names[r.entity.index()],
                r.kind,
                r.detail
            );
        }
        out
    }

    pub fn write_to<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{}",
                r.time.as_micros(),
                self.names[r.entity.index()],
                r.kind,
                r.detail
            )?;
        }
        Ok(())
    }
}

#[derive(Debug)]
struct Pending<E> {
    target: EntityId,
    payload: E,
}

#[derive(Debug)]
pub struct Engine<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<(SimTime, u64)>>,
    pending: HashMap<u64, Pending<E>>,
    log: EventLog,
}

impl<E: EventPayload> Default for Engine<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: EventPayload> Engine<E> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            pending: HashMap::new(),
            log: EventLog::default(),
        }
    }

    pub fn register_entity(&mut self, name: impl Into<String>) -> EntityId {
        let name = name.into();
        debug_assert!(!name.contains(',') && !name.contains('\n'));
        self.log.names.push(name);
        EntityId((self.log.names.len() - 1) as u32)
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    /// Enqueues `payload` for `target` at `fire_at`.
    ///
    /// Scheduling before the current clock is a protocol-logic bug and is
    /// reported as [`SimError::CausalityViolation`].
    pub fn schedule(&mut self, fire_at: SimTime, target: EntityId, payload: E) -> Result<EventHandle, SimError> {
        if fire_at < self.now {
            return Err(SimError::CausalityViolation {
                now: self.now,
                requested: fire_at,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse((fire_at, seq)));
        self.pending.insert(seq, Pending { target, payload });
        Ok(EventHandle(seq))
    }

    /// Schedules relative to the current clock; cannot violate causality.
    pub fn schedule_in(&mut self, delay: SimDuration, target: EntityId, payload: E) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, target, payload)
            .expect("relative schedule is never in the past")
    }

    /// Returns true iff the event was still pending. Idempotent.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0).is_some()
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.pending.contains_key(&handle.0)
    }

    /// Appends a handler-level trace record at the current clock.
    pub fn record(&mut self, entity: EntityId, kind: &'static str, detail: String) {
        self.log.records.push(LogRecord {
            time: self.now,
            entity,
            kind,
            detail,
        });
    }

    /// Pops the next live event with `fire_at <= end`, advancing the clock and
    /// logging it.
    pub fn next_event(&mut self, end: SimTime) -> Option<Event<E>> {
        while let Some(&Reverse((at, seq))) = self.heap.peek() {
            if at > end {
                return None;
            }
            self.heap.pop();
            let Some(p) = self.pending.remove(&seq) else {
                continue; // cancelled
            };
            self.now = at;
            self.log.records.push(LogRecord {
                time: at,
                entity: p.target,
                kind: p.payload.kind(),
                detail: p.payload.detail(),
            });
            return Some(Event {
                fire_at: at,
                seq,
                target: p.target,
                payload: p.payload,
            });
        }
        None
    }

    /// Processes every event with `fire_at <= end` in `(fire_at, seq)` order.
    /// Afterwards the clock reads `end` (unless `end` is [`SimTime::MAX`]).
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> Result<&EventLog, SimError>
    where
        F: FnMut(&mut Engine<E>, Event<E>) -> Result<(), SimError>,
    {
        while let Some(ev) = self.next_event(end) {
            handler(self, ev)?;
        }
        if end != SimTime::MAX && end > self.now {
            self.now = end;
        }
        Ok(&self.log)
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Tick(u32);

    impl EventPayload for Tick {
        fn kind(&self) -> &'static str {
            "tick"
        }
        fn detail(&self) -> String {
            format!("n={}", self.0)
        }
    }

    fn engine() -> (Engine<Tick>, EntityId) {
        let mut e = Engine::new();
        let id = e.register_entity("node");
        (e, id)
    }

    fn fired(e: &mut Engine<Tick>, end: SimTime) -> Vec<(u64, u32)> {
        let mut out = Vec::new();
        e.run_until(end, |eng, ev| {
            out.push((eng.now().as_micros(), ev.payload.0));
            Ok(())
        })
        .unwrap();
        out
    }

    #[test]
    fn fires_at_scheduled_time() {
        let (mut e, id) = engine();
        e.run_until(SimTime::from_millis(1_000), |_, _| Ok(())).unwrap();
        e.schedule(SimTime::from_millis(5_000), id, Tick(1)).unwrap();
        assert_eq!(fired(&mut e, SimTime::from_millis(10_000)), vec![(5_000_000, 1)]);
    }

    #[test]
    fn ties_break_by_schedule_order() {
        let (mut e, id) = engine();
        let t = SimTime::from_millis(3);
        for n in [7, 3, 9] {
            e.schedule(t, id, Tick(n)).unwrap();
        }
        let got: Vec<u32> = fired(&mut e, SimTime::MAX).into_iter().map(|x| x.1).collect();
        assert_eq!(got, vec![7, 3, 9]);
    }

    #[test]
    fn scheduling_in_the_past_is_an_error() {
        let (mut e, id) = engine();
        e.run_until(SimTime::from_millis(1_000), |_, _| Ok(())).unwrap();
        let err = e.schedule(SimTime::from_millis(900), id, Tick(0)).unwrap_err();
        assert!(matches!(err, SimError::CausalityViolation { .. }));
    }

    #[test]
    fn cancel_semantics() {
        let (mut e, id) = engine();
        let a = e.schedule(SimTime::from_millis(1), id, Tick(1)).unwrap();
        let b = e.schedule(SimTime::from_millis(2), id, Tick(2)).unwrap();
        assert!(e.cancel(a));
        assert!(!e.cancel(a));
        let got = fired(&mut e, SimTime::MAX);
        assert_eq!(got, vec![(2_000, 2)]);
        assert!(!e.cancel(b), "already fired");
        assert!(e.log().records().iter().all(|r| r.detail != "n=1"));
    }

    #[test]
    fn run_until_empty_queue_advances_clock() {
        let (mut e, _) = engine();
        let log = e.run_until(SimTime::from_millis(10_000), |_, _| Ok(())).unwrap();
        assert!(log.is_empty());
        assert_eq!(e.now(), SimTime::from_millis(10_000));
    }

    #[test]
    fn run_until_stops_at_end() {
        let (mut e, id) = engine();
        for s in 1..=3 {
            e.schedule(SimTime::from_millis(s * 1_000), id, Tick(s as u32)).unwrap();
        }
        let got = fired(&mut e, SimTime::from_millis(2_000));
        assert_eq!(got.len(), 2);
        assert_eq!(e.pending_count(), 1);
        assert_eq!(e.now(), SimTime::from_millis(2_000));
    }

    #[test]
    fn handler_records_follow_event_record() {
        let (mut e, id) = engine();
        e.schedule(SimTime::from_micros(42), id, Tick(5)).unwrap();
        e.run_until(SimTime::MAX, |eng, ev| {
            eng.record(ev.target, "note", "x=1".into());
            Ok(())
        })
        .unwrap();
        assert_eq!(e.log().to_text(), "42,node,tick,n=5\n42,node,note,x=1\n");
    }

    #[test]
    fn handlers_may_schedule_at_now() {
        let (mut e, id) = engine();
        e.schedule(SimTime::from_micros(10), id, Tick(0)).unwrap();
        let mut seen = Vec::new();
        e.run_until(SimTime::MAX, |eng, ev| {
            seen.push(ev.payload.0);
            if ev.payload.0 < 3 {
                let now = eng.now();
                eng.schedule(now, ev.target, Tick(ev.payload.0 + 1))?;
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }
}
