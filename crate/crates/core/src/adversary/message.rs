//! Strategies for message-level worlds.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::agreement::Node;
use crate::broadcast::{RbKind, RbMessage, RbProcess};
use crate::digest::mix_words;
use crate::params::Sign;
use crate::sim::{
    stream_rng, Adversary, AdversaryView, ByzAction, CoinOracle, CoinRequest, Event, Process,
    ProcessId, ProcessSet, UniformScheduler, ADVERSARY_STREAM,
};

/// `k` distinct processes drawn uniformly.
pub fn random_subset(rng: &mut ChaCha20Rng, n: usize, k: usize) -> Vec<ProcessId> {
    let mut v: Vec<ProcessId> = sample(rng, n, k.min(n))
        .into_iter()
        .map(|i| ProcessId(i as u32))
        .collect();
    v.sort();
    v
}

/// Uniform fair scheduling, no corruption.
pub struct HonestRandom {
    sched: UniformScheduler,
}

impl HonestRandom {
    pub fn new(seed: u64) -> Self {
        HonestRandom {
            sched: UniformScheduler::new(seed),
        }
    }
}

impl<P: Process> Adversary<P> for HonestRandom {
    fn next_event(&mut self, view: &AdversaryView<'_, P>) -> Option<Event> {
        self.sched.pick(view)
    }
}

/// Crashes `crashes` random processes at random points of the first `horizon` events.
pub struct CrashStop {
    sched: UniformScheduler,
    rng: ChaCha20Rng,
    crashes: usize,
    horizon: u64,
    plan: Option<Vec<(u64, ProcessId)>>,
}

impl CrashStop {
    pub fn new(seed: u64, crashes: usize, horizon: u64) -> Self {
        let mut rng = stream_rng(seed, ADVERSARY_STREAM);
        // Keep scheduling and crash planning on separate draws.
        rng.set_word_pos(1 << 40);
        CrashStop {
            sched: UniformScheduler::new(seed),
            rng,
            crashes,
            horizon: horizon.max(1),
            plan: None,
        }
    }
}

impl<P: Process> Adversary<P> for CrashStop {
    fn next_event(&mut self, view: &AdversaryView<'_, P>) -> Option<Event> {
        let plan = self.plan.get_or_insert_with(|| {
            let k = self.crashes.min(view.params().f);
            let who = random_subset(&mut self.rng, view.n(), k);
            let mut at: Vec<(u64, ProcessId)> = who
                .into_iter()
                .map(|p| (self.rng.gen_range(0..self.horizon), p))
                .collect();
            at.sort();
            at.reverse();
            at
        });
        if let Some(&(when, p)) = plan.last() {
            if view.clock() >= when {
                plan.pop();
                return Some(Event::Corrupt(p));
            }
        }
        self.sched.pick(view)
    }
}

/// Never computes or delivers to a fixed set of good processes.
pub struct StarveSubset {
    rng: ChaCha20Rng,
    starved: ProcessSet,
}

impl StarveSubset {
    pub fn new(seed: u64, starved: ProcessSet) -> Self {
        StarveSubset {
            rng: stream_rng(seed, ADVERSARY_STREAM),
            starved,
        }
    }

    /// Starves `k` processes drawn from the seed.
    pub fn random(seed: u64, n: usize, k: usize) -> Self {
        let mut rng = stream_rng(seed, ADVERSARY_STREAM);
        let mut starved = ProcessSet::default();
        for p in random_subset(&mut rng, n, k) {
            starved.insert(p);
        }
        StarveSubset { rng, starved }
    }

    pub fn starved(&self) -> ProcessSet {
        self.starved
    }
}

impl<P: Process> Adversary<P> for StarveSubset {
    fn next_event(&mut self, view: &AdversaryView<'_, P>) -> Option<Event> {
        let d = view.pending_delivery_count();
        let c = view.pending_computes().len();
        if d + c == 0 {
            return None;
        }
        let ok = |e: &Event| match *e {
            Event::Deliver { to, .. } => !self.starved.contains(to),
            Event::Compute(p) => !self.starved.contains(p),
            Event::Corrupt(_) => true,
        };
        let at = |k: usize| {
            if k < d {
                let (from, to) = view.pending_delivery_at(k);
                Event::Deliver { from, to }
            } else {
                Event::Compute(ProcessId(view.pending_computes()[k - d] as u32))
            }
        };
        for _ in 0..16 {
            let e = at(self.rng.gen_range(0..d + c));
            if ok(&e) {
                return Some(e);
            }
        }
        let allowed: Vec<Event> = (0..d + c).map(at).filter(ok).collect();
        if allowed.is_empty() {
            None
        } else {
            Some(allowed[self.rng.gen_range(0..allowed.len())])
        }
    }
}

/// Corrupts `count` random processes once `after` events have run, scheduling
/// uniformly throughout.
struct EarlyCorruption {
    sched: UniformScheduler,
    pending: Vec<ProcessId>,
    planned: bool,
    count: usize,
    after: u64,
    rng: ChaCha20Rng,
}

impl EarlyCorruption {
    fn new(seed: u64, count: usize) -> Self {
        let mut rng = stream_rng(seed, ADVERSARY_STREAM);
        rng.set_word_pos(1 << 40);
        EarlyCorruption {
            sched: UniformScheduler::new(seed),
            pending: Vec::new(),
            planned: false,
            count,
            after: 0,
            rng,
        }
    }

    fn next<P: Process>(&mut self, view: &AdversaryView<'_, P>) -> Option<Event> {
        if !self.planned {
            self.planned = true;
            self.pending = random_subset(&mut self.rng, view.n(), self.count.min(view.params().f));
            self.pending.reverse();
        }
        if view.clock() >= self.after {
            if let Some(p) = self.pending.pop() {
                return Some(Event::Corrupt(p));
            }
        }
        self.sched.pick(view)
    }
}

/// Adversarial direction per board: against any decision candidate a good process holds.
pub fn directions(view: &AdversaryView<'_, RbProcess<Node>>) -> BTreeMap<u64, Sign> {
    let mut out = BTreeMap::new();
    for (i, p) in view.processes().iter().enumerate() {
        if view.is_corrupted(ProcessId(i as u32)) {
            continue;
        }
        for (&t, &v) in &p.app.candidates {
            out.entry(t).or_insert(v.flip());
        }
    }
    out
}

struct PushOracle {
    sigma: BTreeMap<u64, Sign>,
}

impl CoinOracle for PushOracle {
    fn coin(&mut self, _: ProcessId, req: CoinRequest) -> Sign {
        self.sigma.get(&req.board).copied().unwrap_or(Sign::Pos)
    }
}

/// Corrupts `f` processes at time 0; they follow the protocol but every coin
/// they write points in the adversarial direction.
pub struct Counteract {
    early: EarlyCorruption,
}

impl Counteract {
    pub fn new(seed: u64, f: usize) -> Self {
        Counteract {
            early: EarlyCorruption::new(seed, f),
        }
    }

    /// Same strategy, but the corruptions happen only after `after` events,
    /// typically in the middle of an epoch.
    pub fn corrupting_at(seed: u64, f: usize, after: u64) -> Self {
        let mut c = Counteract::new(seed, f);
        c.early.after = after;
        c
    }
}

impl Adversary<RbProcess<Node>> for Counteract {
    fn next_event(&mut self, view: &AdversaryView<'_, RbProcess<Node>>) -> Option<Event> {
        self.early.next(view)
    }

    fn byzantine_compute(
        &mut self,
        view: &AdversaryView<'_, RbProcess<Node>>,
        _who: ProcessId,
    ) -> ByzAction<<RbProcess<Node> as Process>::Msg> {
        ByzAction::Honest {
            coins: Some(Box::new(PushOracle {
                sigma: directions(view),
            })),
            extra: Vec::new(),
        }
    }
}

struct SharedOracle {
    key: u64,
}

impl CoinOracle for SharedOracle {
    fn coin(&mut self, _: ProcessId, req: CoinRequest) -> Sign {
        if mix_words(&[self.key, req.board, req.row as u64]) & 1 == 0 {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }
}

/// Corrupts `f` processes at time 0; they follow the protocol but all write the
/// same coin in the same cell, maximizing their pairwise correlation.
pub struct Colluding {
    early: EarlyCorruption,
    key: u64,
}

impl Colluding {
    pub fn new(seed: u64, f: usize) -> Self {
        Colluding {
            early: EarlyCorruption::new(seed, f),
            key: mix_words(&[seed, 0xc011]),
        }
    }
}

impl<P: Process> Adversary<P> for Colluding {
    fn next_event(&mut self, view: &AdversaryView<'_, P>) -> Option<Event> {
        self.early.next(view)
    }

    fn byzantine_compute(&mut self, _: &AdversaryView<'_, P>, _: ProcessId) -> ByzAction<P::Msg> {
        ByzAction::Honest {
            coins: Some(Box::new(SharedOracle { key: self.key })),
            extra: Vec::new(),
        }
    }
}

/// Corrupts one sender at time 0 and has it broadcast two different payloads for
/// each sequence number, endorsing both in echoes and readies.
pub struct Equivocator {
    sched: UniformScheduler,
    sender: ProcessId,
    rounds: u64,
    corrupted: bool,
    sent: bool,
}

impl Equivocator {
    pub fn new(seed: u64, sender: ProcessId, rounds: u64) -> Self {
        Equivocator {
            sched: UniformScheduler::new(seed),
            sender,
            rounds,
            corrupted: false,
            sent: false,
        }
    }

    /// The two payloads for `seq`.
    pub fn payloads(&self, seq: u64) -> (Vec<u8>, Vec<u8>) {
        (vec![0xa, seq as u8], vec![0xb, seq as u8])
    }
}

impl<A> Adversary<RbProcess<A>> for Equivocator
where
    A: crate::broadcast::RbApp<Body = Vec<u8>>,
{
    fn next_event(&mut self, view: &AdversaryView<'_, RbProcess<A>>) -> Option<Event> {
        if !self.corrupted {
            self.corrupted = true;
            return Some(Event::Corrupt(self.sender));
        }
        if !self.sent {
            return Some(Event::Compute(self.sender));
        }
        self.sched.pick(view)
    }

    fn byzantine_compute(
        &mut self,
        view: &AdversaryView<'_, RbProcess<A>>,
        who: ProcessId,
    ) -> ByzAction<RbMessage<Vec<u8>>> {
        if self.sent || who != self.sender {
            return ByzAction::Silent;
        }
        self.sent = true;
        let n = view.n() as u32;
        let mut out = Vec::new();
        for seq in 1..=self.rounds {
            let (a, b) = self.payloads(seq);
            let ma = RbMessage::new(RbKind::Init, who, seq, Arc::new(a));
            let mb = RbMessage::new(RbKind::Init, who, seq, Arc::new(b));
            for q in 0..n {
                let to = ProcessId(q);
                let (mine, other) = if q % 2 == 0 { (&ma, &mb) } else { (&mb, &ma) };
                out.push((to, mine.clone()));
                for kind in [RbKind::Echo, RbKind::Ready] {
                    out.push((to, mine.with_kind(kind)));
                    out.push((to, other.with_kind(kind)));
                }
            }
        }
        ByzAction::Send(out)
    }
}
