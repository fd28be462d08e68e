//! Exact representation of a simulated path.
//!
//! Between jumps the lag moves deterministically, so a path is stored as a
//! list of [`Segment`]s, each with a closed-form position, plus the event log.
//! Sampled output on a grid is derived from the segments, never the other way
//! around.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// `x(t) = x0 - rate (t - t0) - (amp/omega) (cos(omega t0 + phase) - cos(omega t + phase))`
/// on `[t0, t1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub x0: f64,
    pub rate: f64,
    pub amp: f64,
    pub omega: f64,
    pub phase: f64,
}

impl Segment {
    pub fn linear(t0: f64, t1: f64, x0: f64, rate: f64) -> Self {
        Segment {
            t0,
            t1,
            x0,
            rate,
            amp: 0.0,
            omega: 0.0,
            phase: 0.0,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.amp == 0.0
    }

    pub fn value(&self, t: f64) -> f64 {
        let mut x = self.x0 - self.rate * (t - self.t0);
        if self.amp != 0.0 {
            x -= self.amp / self.omega
                * ((self.omega * self.t0 + self.phase).cos() - (self.omega * t + self.phase).cos());
        }
        x
    }

    /// Position at the right end (left limit at `t1`).
    pub fn x1(&self) -> f64 {
        self.value(self.t1)
    }

    /// `dx/dt`.
    pub fn slope(&self, t: f64) -> f64 {
        -self.rate - self.amp * (self.omega * t + self.phase).sin()
    }

    /// Sub-intervals on which `x` is monotone.
    pub fn monotone_parts(&self) -> Vec<(f64, f64)> {
        if self.is_linear() || self.amp <= self.rate.abs() {
            return vec![(self.t0, self.t1)];
        }
        // Zeros of rate + amp sin(theta): theta = asin(-rate/amp) and pi - that, mod 2 pi.
        let base = (-self.rate / self.amp).asin();
        let mut cuts = Vec::new();
        for root in [base, std::f64::consts::PI - base] {
            let period = std::f64::consts::TAU;
            // Smallest theta >= omega t0 + phase congruent to root.
            let start = self.omega * self.t0 + self.phase;
            let mut theta = root + ((start - root) / period).ceil() * period;
            loop {
                let t = (theta - self.phase) / self.omega;
                if t >= self.t1 {
                    break;
                }
                if t > self.t0 {
                    cuts.push(t);
                }
                theta += period;
            }
        }
        cuts.sort_by(f64::total_cmp);
        let mut parts = Vec::with_capacity(cuts.len() + 1);
        let mut a = self.t0;
        for c in cuts {
            parts.push((a, c));
            a = c;
        }
        parts.push((a, self.t1));
        parts
    }

    /// Time in `[a, b]` (a monotone part) at which `x` equals `level`; the
    /// caller guarantees `level` lies between the endpoint values.
    pub fn time_at_level(&self, a: f64, b: f64, level: f64) -> f64 {
        if self.is_linear() {
            if self.rate == 0.0 {
                return a;
            }
            return (self.t0 + (self.x0 - level) / self.rate).clamp(a, b);
        }
        let (mut lo, mut hi) = (a, b);
        let increasing = self.value(b) >= self.value(a);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let above = self.value(mid) >= level;
            if above == increasing {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Lebesgue measure of `{t in [t0, t1) : lo < x(t) < hi}`.
    pub fn time_inside(&self, lo: f64, hi: f64) -> f64 {
        let mut total = 0.0;
        for (a, b) in self.monotone_parts() {
            let (xa, xb) = (self.value(a), self.value(b));
            let (xmin, xmax) = (xa.min(xb), xa.max(xb));
            if xmax <= lo || xmin >= hi {
                continue;
            }
            if xmin == xmax {
                total += b - a;
                continue;
            }
            // Monotone: the set is an interval whose ends are level times.
            let clip = |level: f64| -> f64 {
                if level <= xmin {
                    if xa <= xb {
                        a
                    } else {
                        b
                    }
                } else if level >= xmax {
                    if xa <= xb {
                        b
                    } else {
                        a
                    }
                } else {
                    self.time_at_level(a, b, level)
                }
            };
            let (ta, tb) = (clip(lo), clip(hi));
            total += (tb - ta).abs();
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ProposedRejected,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub alpha: f64,
    pub x_before: f64,
    pub x_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    /// The event cap was hit; the path stops at `end_time < horizon`.
    BudgetExceeded,
}

/// A simulated path with its event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub x0: f64,
    pub horizon: f64,
    /// Time up to which the path was constructed (`horizon` unless truncated).
    pub end_time: f64,
    pub seed: u64,
    pub scenario_hash: String,
    pub status: RunStatus,
    pub segments: Vec<Segment>,
    pub events: Vec<Event>,
    /// `(t, X_t)` on the output grid.
    pub samples: Vec<(f64, f64)>,
}

/// A change of side relative to a level: `below = true` means the path is
/// strictly below the level from `t` on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub t: f64,
    pub below: bool,
}

impl Trajectory {
    /// `X_t` (right-continuous) for `0 <= t <= end_time`.
    pub fn value_at(&self, t: f64) -> f64 {
        if self.segments.is_empty() {
            return self.x0;
        }
        let idx = self.segments.partition_point(|s| s.t0 <= t);
        let seg = &self.segments[idx.saturating_sub(1)];
        seg.value(t.min(seg.t1))
    }

    pub fn terminal(&self) -> f64 {
        self.segments.last().map_or(self.x0, Segment::x1)
    }

    pub fn fixed_events(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.kind == EventKind::Fixed)
    }

    pub fn x_range(&self) -> (f64, f64) {
        let mut lo = self.x0;
        let mut hi = self.x0;
        for s in &self.segments {
            for (a, b) in s.monotone_parts() {
                for x in [s.value(a), s.value(b)] {
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
            }
        }
        (lo, hi)
    }

    /// Times at which the path changes side relative to `level`, in order.
    pub fn level_transitions(&self, level: f64) -> Vec<Transition> {
        let mut out = Vec::new();
        let mut below = self.x0 < level;
        for seg in &self.segments {
            let start_below = seg.x0 < level;
            if start_below != below {
                out.push(Transition {
                    t: seg.t0,
                    below: start_below,
                });
                below = start_below;
            }
            for (a, b) in seg.monotone_parts() {
                let xb = seg.value(b);
                let end_below = xb < level;
                if end_below != below {
                    let t = seg.time_at_level(a, b, level);
                    out.push(Transition {
                        t,
                        below: end_below,
                    });
                    below = end_below;
                }
            }
        }
        out
    }

    /// Writes `t,x` on the output grid, preceded by a provenance comment.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# scenario_hash={} seed={}",
            self.scenario_hash, self.seed
        )?;
        writeln!(w, "t,x")?;
        for (t, x) in &self.samples {
            writeln!(w, "{t},{x}")?;
        }
        Ok(())
    }

    /// Writes the event log as JSON lines, preceded by a header object.
    pub fn write_events_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header = serde_json::json!({
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "x0": self.x0,
            "horizon": self.horizon,
            "status": self.status,
        });
        writeln!(w, "{header}")?;
        for e in &self.events {
            writeln!(w, "{}", serde_json::to_string(e).map_err(io::Error::other)?)?;
        }
        Ok(())
    }
}
