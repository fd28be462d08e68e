//! Independent discrete-event reference for a single-atom measure under the
//! step fixation rule.
//!
//! The lag is advanced event by event from a priority queue of pending clocks
//! (the next mutation birth and the end of the run) instead of through path
//! segments. It consumes the jump stream in the documented order, so for a
//! common seed it must reproduce the simulator's event log.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEvent {
    pub t: f64,
    pub fixed: bool,
    pub x_before: f64,
    pub x_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub events: Vec<OracleEvent>,
    pub terminal: f64,
    /// Time spent strictly below `level`, divided by the horizon.
    pub fraction_below: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Clock {
    Birth,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    t: f64,
    clock: Clock,
}

impl Eq for Pending {}

impl Ord for Pending {
    // Earliest first; at equal times the end of the run wins.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .t
            .total_cmp(&self.t)
            .then_with(|| (self.clock == Clock::End).cmp(&(other.clock == Clock::End)))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub struct AtomStepOracle {
    pub atom: f64,
    pub weight: f64,
    pub v: f64,
    pub x0: f64,
    pub horizon: f64,
}

impl AtomStepOracle {
    fn birth_gap(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.random();
        -(1.0 - u).ln() / self.weight
    }

    /// Time in `[0, dt)` that `anchor - v s` spends below `level`.
    fn below(&self, anchor: f64, dt: f64, level: f64) -> f64 {
        if anchor < level {
            return dt;
        }
        let reach = (anchor - level) / self.v;
        (dt - reach).max(0.0)
    }

    pub fn run(&self, seed: u64, level: f64) -> OracleRun {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let mut queue = BinaryHeap::new();
        queue.push(Pending {
            t: self.birth_gap(&mut rng),
            clock: Clock::Birth,
        });
        queue.push(Pending {
            t: self.horizon,
            clock: Clock::End,
        });

        // The lag is affine between fixations: x(t) = anchor - v (t - since).
        let (mut anchor, mut since) = (self.x0, 0.0);
        let mut events = Vec::new();
        let mut below = 0.0;
        while let Some(p) = queue.pop() {
            let x = anchor - self.v * (p.t - since);
            if p.clock == Clock::End {
                below += self.below(anchor, self.horizon - since, level);
                return OracleRun {
                    events,
                    terminal: x,
                    fraction_below: below / self.horizon,
                };
            }
            // Piece selector (a single atom always wins), then the fixation mark.
            let _selector: f64 = rng.random();
            let mark = 1.0 - rng.random::<f64>();
            let fixes = x < 0.0 && self.atom <= -2.0 * x;
            let fixed = fixes && mark <= 1.0;
            let x_after = if fixed { x + self.atom } else { x };
            events.push(OracleEvent {
                t: p.t,
                fixed,
                x_before: x,
                x_after,
            });
            if fixed {
                below += self.below(anchor, p.t - since, level);
                anchor = x_after;
                since = p.t;
            }
            queue.push(Pending {
                t: p.t + self.birth_gap(&mut rng),
                clock: Clock::Birth,
            });
        }
        unreachable!("the end clock is always pending")
    }
}
