//! Lossy link simulation: drop, delay, duplication, reordering.
//!
//! Every send consumes randomness in a fixed pattern, so a given seed
//! yields the same delivery schedule regardless of when deliveries are
//! polled. Messages arrive no earlier than the tick after they were sent.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::AgentId;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    /// Probability a given transmission is lost entirely.
    pub drop: f64,
    /// Extra delivery delay drawn uniformly from this inclusive tick range.
    pub delay_min: u64,
    pub delay_max: u64,
    /// Probability the link spontaneously duplicates a transmission.
    pub duplicate: f64,
    /// When false the link preserves per-pair send order even if random
    /// delays would have swapped it.
    pub reorder: bool,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self { drop: 0.0, delay_min: 0, delay_max: 0, duplicate: 0.0, reorder: false }
    }
}

/// One queued or delivered transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub from: AgentId,
    pub to: AgentId,
    pub bytes: Vec<u8>,
}

#[derive(Debug)]
struct Queued {
    arrival: u64,
    seq: u64,
    env: Envelope,
}

#[derive(Debug)]
pub struct NetworkModel {
    default: LinkParams,
    overrides: HashMap<(AgentId, AgentId), LinkParams>,
    rng: ChaCha8Rng,
    queue: Vec<Queued>,
    seq: u64,
    /// Messages handed to the link, before loss.
    pub sent_count: u64,
    /// Messages that actually arrived (duplicates included).
    pub delivered_count: u64,
    last_arrival: HashMap<(AgentId, AgentId), u64>,
}

impl NetworkModel {
    pub fn new(default: LinkParams, seed: u64) -> Self {
        assert!((0.0..=1.0).contains(&default.drop) && (0.0..=1.0).contains(&default.duplicate));
        Self {
            default,
            overrides: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            queue: Vec::new(),
            seq: 0,
            sent_count: 0,
            delivered_count: 0,
            last_arrival: HashMap::new(),
        }
    }

    /// Directional per-link override.
    pub fn set_link(&mut self, from: AgentId, to: AgentId, params: LinkParams) {
        self.overrides.insert((from, to), params);
    }

    fn params(&self, from: AgentId, to: AgentId) -> &LinkParams {
        self.overrides.get(&(from, to)).unwrap_or(&self.default)
    }

    /// Queue a transmission made at `now`.
    pub fn send(&mut self, env: Envelope, now: u64) {
        self.sent_count += 1;
        let p = self.params(env.from, env.to).clone();
        let copies = {
            let dropped = p.drop > 0.0 && self.rng.gen_bool(p.drop);
            let duplicated = p.duplicate > 0.0 && self.rng.gen_bool(p.duplicate);
            match (dropped, duplicated) {
                (true, _) => 0,
                (false, false) => 1,
                (false, true) => 2,
            }
        };
        for _ in 0..copies {
            let delay = if p.delay_max > p.delay_min {
                self.rng.gen_range(p.delay_min..=p.delay_max)
            } else {
                p.delay_min
            };
            let mut arrival = now + 1 + delay;
            if !p.reorder {
                let link = (env.from, env.to);
                let floor = self.last_arrival.get(&link).copied().unwrap_or(0);
                arrival = arrival.max(floor);
                self.last_arrival.insert(link, arrival);
            }
            let seq = self.seq;
            self.seq += 1;
            self.queue.push(Queued { arrival, seq, env: env.clone() });
        }
    }

    /// All transmissions due by `now`, in (arrival, send order) order.
    pub fn deliver(&mut self, now: u64) -> Vec<Envelope> {
        let mut due: Vec<Queued> = Vec::new();
        let mut rest = Vec::with_capacity(self.queue.len());
        for q in self.queue.drain(..) {
            if q.arrival <= now {
                due.push(q);
            } else {
                rest.push(q);
            }
        }
        self.queue = rest;
        due.sort_by_key(|q| (q.arrival, q.seq));
        self.delivered_count += due.len() as u64;
        due.into_iter().map(|q| q.env).collect()
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(from: AgentId, to: AgentId, tag: u8) -> Envelope {
        Envelope { from, to, bytes: vec![tag] }
    }

    #[test]
    fn perfect_link_delivers_next_tick_in_order() {
        let mut net = NetworkModel::new(LinkParams::default(), 1);
        net.send(env(0, 1, 1), 5);
        net.send(env(0, 1, 2), 5);
        assert!(net.deliver(5).is_empty());
        let got = net.deliver(6);
        assert_eq!(got.iter().map(|e| e.bytes[0]).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(net.pending(), 0);
    }

    #[test]
    fn drop_probability_one_loses_everything() {
        let mut net = NetworkModel::new(LinkParams { drop: 1.0, ..Default::default() }, 2);
        for i in 0..10 {
            net.send(env(0, 1, i), 0);
        }
        assert!(net.deliver(100).is_empty());
        assert_eq!(net.sent_count, 10);
        assert_eq!(net.delivered_count, 0);
    }

    #[test]
    fn duplication_doubles_copies() {
        let mut net = NetworkModel::new(LinkParams { duplicate: 1.0, ..Default::default() }, 3);
        net.send(env(0, 1, 7), 0);
        assert_eq!(net.deliver(10).len(), 2);
    }

    #[test]
    fn fifo_holds_without_reorder_flag() {
        let p = LinkParams { delay_min: 0, delay_max: 20, reorder: false, ..Default::default() };
        let mut net = NetworkModel::new(p, 4);
        for i in 0..30u8 {
            net.send(env(0, 1, i), i as u64);
        }
        let got = net.deliver(200);
        let tags: Vec<u8> = got.iter().map(|e| e.bytes[0]).collect();
        let mut sorted = tags.clone();
        sorted.sort_unstable();
        assert_eq!(tags, sorted, "per-link order broken: {tags:?}");
    }

    #[test]
    fn reorder_flag_allows_overtaking() {
        let p = LinkParams { delay_min: 0, delay_max: 20, reorder: true, ..Default::default() };
        let mut net = NetworkModel::new(p, 5);
        for i in 0..30u8 {
            net.send(env(0, 1, i), i as u64);
        }
        let got = net.deliver(200);
        let tags: Vec<u8> = got.iter().map(|e| e.bytes[0]).collect();
        let mut sorted = tags.clone();
        sorted.sort_unstable();
        assert_ne!(tags, sorted, "expected at least one overtake with this seed");
    }

    #[test]
    fn same_seed_same_schedule() {
        let p = LinkParams { drop: 0.3, delay_min: 1, delay_max: 5, duplicate: 0.2, reorder: true };
        let run = |seed| {
            let mut net = NetworkModel::new(p.clone(), seed);
            for i in 0..50u8 {
                net.send(env(i as AgentId % 3, 1, i), (i / 4) as u64);
            }
            let mut all = Vec::new();
            for t in 0..40 {
                all.extend(net.deliver(t).into_iter().map(|e| e.bytes[0]));
            }
            all
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn per_link_override_applies() {
        let mut net = NetworkModel::new(LinkParams::default(), 6);
        net.set_link(0, 1, LinkParams { drop: 1.0, ..Default::default() });
        net.send(env(0, 1, 1), 0);
        net.send(env(1, 0, 2), 0);
        let got = net.deliver(10);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].bytes[0], 2);
    }
}
