//! Per-event serving latency.
//!
//! Every event is served `PASSES` times from the same pre-event state; the
//! first pass warms caches and is discarded, the event's latency is the mean
//! of the rest. Events are served one at a time with no batching.

use std::time::Instant;

use tgl_core::embed::TextEmbedder;
use tgl_core::eval::LatencyStats;
use tgl_core::serve::{Clock, EmbeddingCache, ServeTimings, Server, SessionState};
use tgl_core::session::SessionRecord;

use crate::error::Result;

pub const PASSES: usize = 4;
pub const DISCARDED: usize = 1;

/// Nanoseconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct StdClock(Instant);

impl Default for StdClock {
    fn default() -> Self {
        StdClock(Instant::now())
    }
}

impl Clock for StdClock {
    fn now_ns(&self) -> u64 {
        self.0.elapsed().as_nanos() as u64
    }
}

/// Latency of one event after discarding the warm-up pass.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EventLatency {
    pub total_ns: f64,
    pub parts: [f64; 3],
}

pub fn time_event<E: TextEmbedder + ?Sized>(
    server: &Server<'_, E>,
    state: &mut SessionState,
    event: &tgl_core::session::EventRecord,
    mut cache: Option<&mut EmbeddingCache>,
    clock: &StdClock,
) -> Result<Option<EventLatency>> {
    let mut kept = EventLatency::default();
    let mut next = None;
    for pass in 0..PASSES {
        let mut trial = state.clone();
        let start = clock.now_ns();
        let served = server.serve_event(&mut trial, event.clone(), cache.as_deref_mut(), clock)?;
        let elapsed = clock.now_ns() - start;
        let Some((_, t)) = served else { return Ok(None) };
        if pass >= DISCARDED {
            kept.total_ns += elapsed as f64;
            add_parts(&mut kept.parts, &t);
        }
        next = Some(trial);
    }
    *state = next.expect("at least one pass");
    let n = (PASSES - DISCARDED) as f64;
    kept.total_ns /= n;
    kept.parts.iter_mut().for_each(|p| *p /= n);
    Ok(Some(kept))
}

fn add_parts(parts: &mut [f64; 3], t: &ServeTimings) {
    parts[0] += t.embed_ns as f64;
    parts[1] += t.message_passing_ns as f64;
    parts[2] += t.heads_ns as f64;
}

/// Streams every session through `server` and summarises per-event latency.
pub fn bench_latency<E: TextEmbedder + ?Sized>(
    server: &Server<'_, E>,
    sessions: &[SessionRecord],
    mut cache: Option<&mut EmbeddingCache>,
) -> Result<LatencyStats> {
    let clock = StdClock::default();
    let mut per_event = Vec::new();
    for s in sessions {
        let mut state = SessionState::new(s.sample_id.clone());
        for ev in &s.events {
            if let Some(l) = time_event(server, &mut state, ev, cache.as_deref_mut(), &clock)? {
                per_event.push(l);
            }
        }
    }
    Ok(summarize(&per_event))
}

pub fn summarize(events: &[EventLatency]) -> LatencyStats {
    let ms = |ns: f64| ns / 1e6;
    let n = events.len();
    let mut totals: Vec<f64> = events.iter().map(|e| e.total_ns).collect();
    totals.sort_by(f64::total_cmp);
    let mean = |f: &dyn Fn(&EventLatency) -> f64| if n == 0 { 0.0 } else { events.iter().map(f).sum::<f64>() / n as f64 };
    LatencyStats {
        events: n,
        passes_per_event: PASSES,
        discarded_per_event: DISCARDED,
        mean_ms: ms(mean(&|e| e.total_ns)),
        median_ms: ms(percentile(&totals, 0.5)),
        p95_ms: ms(percentile(&totals, 0.95)),
        embed_ms: ms(mean(&|e| e.parts[0])),
        message_passing_ms: ms(mean(&|e| e.parts[1])),
        heads_ms: ms(mean(&|e| e.parts[2])),
    }
}

/// Linear interpolation between closest ranks.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}
