//! Discrete-time event scheduling.
//!
//! Only two kinds of events ever go through the queue: ZI trader arrivals and
//! delayed NBBO updates. Everything else a handler triggers (order submission,
//! matching, quote publication, arbitrage) happens synchronously inside the
//! handler before the next event is popped.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::io::{self, Write};

use crate::exchange::{ExchangeId, Quote};

/// Simulation clock in whole ticks.
pub type Time = u64;

/// Payload of a scheduled market event.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// A ZI trader (by index) arrives to trade.
    ZiArrival(usize),
    /// The SIP applies a BBO snapshot it received `latency` ticks earlier.
    NbboUpdate { venue: ExchangeId, quote: Quote },
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::ZiArrival(id) => write!(f, "ZI_ARRIVAL zi={id}"),
            EventKind::NbboUpdate { venue, quote } => write!(
                f,
                "NBBO_UPDATE venue={} bid={} ask={}",
                venue.index(),
                fmt_opt(quote.bid.map(|p| p.get())),
                fmt_opt(quote.ask.map(|p| p.get()))
            ),
        }
    }
}

fn fmt_opt(v: Option<i64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

/// A scheduled occurrence. Two events never compare equal because `seq` is
/// unique within a queue.
#[derive(Debug, Clone, PartialEq)]
pub struct Event<K> {
    pub time: Time,
    pub seq: u64,
    pub kind: K,
}

struct Pending<K>(Event<K>);

impl<K> PartialEq for Pending<K> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<K> Eq for Pending<K> {}

impl<K> PartialOrd for Pending<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K> Ord for Pending<K> {
    // Reversed so the max-heap pops the smallest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.time, other.0.seq).cmp(&(self.0.time, self.0.seq))
    }
}

/// FIFO-within-tick priority queue of events.
pub struct EventQueue<K> {
    heap: BinaryHeap<Pending<K>>,
    next_seq: u64,
    now: Time,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: 0,
        }
    }

    /// Time of the event currently (or most recently) being dispatched.
    pub fn now(&self) -> Time {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Enqueue `kind` at `time` and return its sequence number.
    ///
    /// Events past the run horizon are accepted; the dispatcher simply never
    /// reaches them.
    ///
    /// # Panics
    ///
    /// Scheduling into the past is a simulation bug and aborts the run.
    pub fn schedule(&mut self, time: Time, kind: K) -> u64 {
        assert!(
            time >= self.now,
            "event scheduled at t={time} before current dispatch time t={}",
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Pending(Event { time, seq, kind }));
        seq
    }

    /// Pop the next event if it is due at or before `horizon`.
    pub fn pop_due(&mut self, horizon: Time) -> Option<Event<K>> {
        match self.heap.peek() {
            Some(p) if p.0.time <= horizon => {
                let ev = self.heap.pop().expect("peeked").0;
                self.now = ev.time;
                Some(ev)
            }
            _ => None,
        }
    }

    /// Dispatch every event with `time <= horizon` in `(time, seq)` order.
    /// The handler may schedule more events. Returns the dispatch count.
    pub fn run<F>(&mut self, horizon: Time, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, Event<K>),
    {
        let mut dispatched = 0;
        while let Some(ev) = self.pop_due(horizon) {
            handler(self, ev);
            dispatched += 1;
        }
        dispatched
    }
}

impl<K: fmt::Display> EventQueue<K> {
    /// Like [`EventQueue::run`], additionally writing one `time seq kind`
    /// line per dispatch to `trace`.
    pub fn run_traced<F, W>(&mut self, horizon: Time, mut handler: F, trace: &mut W) -> io::Result<u64>
    where
        F: FnMut(&mut Self, Event<K>),
        W: Write,
    {
        let mut dispatched = 0;
        while let Some(ev) = self.pop_due(horizon) {
            writeln!(trace, "{} {} {}", ev.time, ev.seq, ev.kind)?;
            handler(self, ev);
            dispatched += 1;
        }
        Ok(dispatched)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drain(q: &mut EventQueue<&'static str>, horizon: Time) -> Vec<(Time, u64, &'static str)> {
        let mut out = Vec::new();
        q.run(horizon, |_, ev| out.push((ev.time, ev.seq, ev.kind)));
        out
    }

    #[test]
    fn same_tick_events_fire_in_insertion_order() {
        let mut q = EventQueue::new();
        q.schedule(5, "a");
        q.schedule(5, "b");
        assert_eq!(drain(&mut q, 10), vec![(5, 0, "a"), (5, 1, "b")]);
    }

    #[test]
    fn events_past_horizon_never_fire() {
        let mut q = EventQueue::new();
        q.schedule(60, "late");
        assert_eq!(q.run(50, |_, _| panic!("dispatched")), 0);
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn single_event_round_trips() {
        let mut q = EventQueue::new();
        q.schedule(1, "only");
        let ev = q.pop_due(1).unwrap();
        assert_eq!((ev.time, ev.seq, ev.kind), (1, 0, "only"));
        assert!(q.pop_due(1).is_none());
    }

    #[test]
    fn dispatch_is_time_then_seq() {
        let mut q = EventQueue::new();
        q.schedule(3, "x");
        q.schedule(1, "y");
        q.schedule(3, "z");
        assert_eq!(drain(&mut q, 10), vec![(1, 1, "y"), (3, 0, "x"), (3, 2, "z")]);
    }

    #[test]
    fn handler_scheduled_same_tick_runs_after_existing() {
        let mut q = EventQueue::new();
        q.schedule(2, "first");
        q.schedule(2, "second");
        let mut order = Vec::new();
        q.run(10, |q, ev| {
            if ev.kind == "first" {
                q.schedule(2, "spawned");
            }
            order.push(ev.kind);
        });
        assert_eq!(order, vec!["first", "second", "spawned"]);
    }

    #[test]
    #[should_panic(expected = "before current dispatch time")]
    fn scheduling_into_the_past_aborts() {
        let mut q = EventQueue::new();
        q.schedule(5, "a");
        q.run(10, |q, _| {
            q.schedule(4, "b");
        });
    }

    #[test]
    fn trace_has_one_line_per_dispatch() {
        let mut q = EventQueue::new();
        q.schedule(1, EventKind::ZiArrival(0));
        q.schedule(2, EventKind::ZiArrival(1));
        let mut buf = Vec::new();
        let n = q.run_traced(10, |_, _| {}, &mut buf).unwrap();
        assert_eq!(n, 2);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "1 0 ZI_ARRIVAL zi=0\n2 1 ZI_ARRIVAL zi=1\n");
    }
}
