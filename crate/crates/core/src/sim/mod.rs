//! Deterministic event-driven simulation of the asynchronous full-information model.
//!
//! A [`World`] owns `n` process state machines and the `2n²` buffers `Out(i→j)` and
//! `In(i→j)`. An [`Adversary`] chooses every event: `Compute(i)` lets process `i`
//! drain its in-buffers and emit messages, `Deliver(i, j)` moves the head of
//! `Out(i→j)` to `In(i→j)`, and `Corrupt(i)` hands `i` to the adversary, which
//! decides what it does on each later compute.

mod ids;
mod trace;

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::params::{ProtocolParams, Sign};

pub(crate) use ids::IndexedSet;
pub use ids::{ProcessId, ProcessSet};
pub use trace::{export_trace, import_trace, EventKind, TraceLog, TraceMode, TraceRecord};

/// A point-to-point message carried through the buffers.
pub trait Message: Clone + Send + std::fmt::Debug {
    fn digest(&self) -> u64;
}

#[derive(Debug, Clone)]
pub struct Envelope<M> {
    pub from: ProcessId,
    pub msg: M,
    /// Length of the longest chain of dependent messages ending here.
    pub depth: u64,
}

/// Label of a coin a process is about to flip: blackboard index and row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CoinRequest {
    pub board: u64,
    pub row: u32,
}

/// Source of coin values for a corrupted process.
pub trait CoinOracle: Send {
    fn coin(&mut self, who: ProcessId, req: CoinRequest) -> Sign;
}

/// Everything a process sees during one compute event.
pub struct ComputeCtx<'a, M> {
    me: ProcessId,
    n: usize,
    ordinal: u64,
    inbox: Vec<Envelope<M>>,
    rng: &'a mut ChaCha20Rng,
    coins: Option<Box<dyn CoinOracle>>,
    out: Vec<(ProcessId, M)>,
}

impl<'a, M: Message> ComputeCtx<'a, M> {
    pub fn me(&self) -> ProcessId {
        self.me
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Ordinal of the compute event being applied.
    pub fn ordinal(&self) -> u64 {
        self.ordinal
    }

    pub fn take_inbox(&mut self) -> Vec<Envelope<M>> {
        std::mem::take(&mut self.inbox)
    }

    pub fn send(&mut self, to: ProcessId, msg: M) {
        self.out.push((to, msg));
    }

    /// Sends `msg` to every process, including the sender.
    pub fn send_all(&mut self, msg: M) {
        for j in 0..self.n {
            self.out.push((ProcessId(j as u32), msg.clone()));
        }
    }

    /// A fair coin for good processes; the adversary's choice for corrupted ones.
    pub fn flip(&mut self, req: CoinRequest) -> Sign {
        match self.coins.as_mut() {
            Some(oracle) => oracle.coin(self.me, req),
            None => {
                use rand::Rng;
                if self.rng.gen::<bool>() {
                    Sign::Pos
                } else {
                    Sign::Neg
                }
            }
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        self.rng
    }
}

/// A per-process protocol state machine.
pub trait Process: Send {
    type Msg: Message;

    fn on_compute(&mut self, ctx: &mut ComputeCtx<'_, Self::Msg>);

    fn decided(&self) -> Option<Sign> {
        None
    }

    /// Current epoch, for epoch-limited runs.
    fn epoch(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Event {
    Compute(ProcessId),
    Deliver { from: ProcessId, to: ProcessId },
    Corrupt(ProcessId),
}

/// What a corrupted process does on a compute event.
pub enum ByzAction<M> {
    /// Drop the inbox; send nothing.
    Silent,
    /// Run the honest handler, with coins supplied by `coins` if given, then send `extra`.
    Honest {
        coins: Option<Box<dyn CoinOracle>>,
        extra: Vec<(ProcessId, M)>,
    },
    /// Drop the inbox and send exactly these messages.
    Send(Vec<(ProcessId, M)>),
}

/// Read-only full-information view of a world. Exposes every process state and
/// buffer but none of the random streams.
pub struct AdversaryView<'a, P: Process> {
    world: &'a World<P>,
}

impl<'a, P: Process> AdversaryView<'a, P> {
    pub fn n(&self) -> usize {
        self.world.n
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.world.params
    }

    pub fn clock(&self) -> u64 {
        self.world.trace.len()
    }

    pub fn process(&self, p: ProcessId) -> &P {
        &self.world.processes[p.index()]
    }

    pub fn processes(&self) -> &[P] {
        &self.world.processes
    }

    pub fn is_corrupted(&self, p: ProcessId) -> bool {
        self.world.corrupted[p.index()]
    }

    pub fn corrupted_count(&self) -> usize {
        self.world.n_corrupted
    }

    pub fn out_buffer(&self, from: ProcessId, to: ProcessId) -> &VecDeque<Envelope<P::Msg>> {
        &self.world.out_buf[self.world.slot(from, to)]
    }

    pub fn in_buffer(&self, from: ProcessId, to: ProcessId) -> &VecDeque<Envelope<P::Msg>> {
        &self.world.in_buf[self.world.slot(from, to)]
    }

    /// Non-empty out buffers as `(from, to)` pairs, in unspecified but deterministic order.
    pub fn pending_deliveries(&self) -> impl ExactSizeIterator<Item = (ProcessId, ProcessId)> + '_ {
        let n = self.world.n;
        self.world
            .nonempty_out
            .as_slice()
            .iter()
            .map(move |&s| (ProcessId((s / n) as u32), ProcessId((s % n) as u32)))
    }

    pub fn pending_delivery_at(&self, k: usize) -> (ProcessId, ProcessId) {
        let s = self.world.nonempty_out.as_slice()[k];
        let n = self.world.n;
        (ProcessId((s / n) as u32), ProcessId((s % n) as u32))
    }

    pub fn pending_delivery_count(&self) -> usize {
        self.world.nonempty_out.as_slice().len()
    }

    /// Processes that have not started yet or have a non-empty inbox.
    pub fn pending_computes(&self) -> &[usize] {
        self.world.compute_ready.as_slice()
    }

    pub fn has_pending_work(&self, p: ProcessId) -> bool {
        self.world.compute_ready.contains(p.index())
    }

    pub fn trace(&self) -> &TraceLog {
        &self.world.trace
    }
}

/// Event scheduler and controller of corrupted processes.
pub trait Adversary<P: Process> {
    /// Next event to apply, or `None` to stop the run.
    fn next_event(&mut self, view: &AdversaryView<'_, P>) -> Option<Event>;

    /// Behavior of corrupted process `who` on its compute event.
    fn byzantine_compute(
        &mut self,
        _view: &AdversaryView<'_, P>,
        _who: ProcessId,
    ) -> ByzAction<P::Msg> {
        ByzAction::Silent
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("inapplicable event {event:?} at ordinal {ordinal}: {reason}")]
    InapplicableEvent {
        event: Event,
        ordinal: u64,
        reason: &'static str,
    },
    #[error("fairness violation: no good process with pending work computed in the last {window} events (ordinal {ordinal})")]
    FairnessViolation { window: u64, ordinal: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopCondition {
    /// Every good process has decided.
    AllDecided,
    /// Stop after this many events.
    MaxEvents(u64),
    /// Every good process has reached this epoch.
    EpochLimit(u64),
    /// Every good process in the set has decided.
    AllDecidedAmong(ProcessSet),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    AllDecided,
    EpochLimit,
    /// The event budget ran out first.
    NonTermination,
    /// No event is applicable.
    Quiescent,
    /// The strategy declined to schedule anything.
    StrategyStopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOutcome {
    pub reason: StopReason,
    pub events: u64,
}

pub struct World<P: Process> {
    params: ProtocolParams,
    n: usize,
    processes: Vec<P>,
    out_buf: Vec<VecDeque<Envelope<P::Msg>>>,
    in_buf: Vec<VecDeque<Envelope<P::Msg>>>,
    corrupted: Vec<bool>,
    n_corrupted: usize,
    rngs: Vec<ChaCha20Rng>,
    trace: TraceLog,
    started: Vec<bool>,
    inbox_len: Vec<usize>,
    nonempty_out: IndexedSet,
    compute_ready: IndexedSet,
    depth: Vec<u64>,
    max_depth: u64,
    since_progress: u64,
}

/// Independent stream `stream` derived from a root seed.
pub fn stream_rng(root: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(root);
    rng.set_stream(stream);
    rng
}

/// Stream reserved for adversary randomness; process `i` uses stream `i + 1`.
pub const ADVERSARY_STREAM: u64 = 0;

impl<P: Process> World<P> {
    pub fn new(params: ProtocolParams, processes: Vec<P>, seed: u64, mode: TraceMode) -> Self {
        let n = processes.len();
        assert_eq!(n, params.n, "process count must equal params.n");
        assert!(n <= crate::params::MAX_PROCESSES);
        let mut compute_ready = IndexedSet::with_universe(n);
        for i in 0..n {
            compute_ready.insert(i);
        }
        World {
            params,
            n,
            processes,
            out_buf: (0..n * n).map(|_| VecDeque::new()).collect(),
            in_buf: (0..n * n).map(|_| VecDeque::new()).collect(),
            corrupted: vec![false; n],
            n_corrupted: 0,
            rngs: (0..n as u64).map(|i| stream_rng(seed, i + 1)).collect(),
            trace: TraceLog::new(mode),
            started: vec![false; n],
            inbox_len: vec![0; n],
            nonempty_out: IndexedSet::with_universe(n * n),
            compute_ready,
            depth: vec![0; n],
            max_depth: 0,
            since_progress: 0,
        }
    }

    fn slot(&self, from: ProcessId, to: ProcessId) -> usize {
        from.index() * self.n + to.index()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn process(&self, p: ProcessId) -> &P {
        &self.processes[p.index()]
    }

    pub fn processes(&self) -> &[P] {
        &self.processes
    }

    pub fn is_corrupted(&self, p: ProcessId) -> bool {
        self.corrupted[p.index()]
    }

    pub fn good(&self) -> impl Iterator<Item = ProcessId> + '_ {
        ProcessId::all(self.n).filter(move |p| !self.corrupted[p.index()])
    }

    pub fn corrupted_set(&self) -> ProcessSet {
        ProcessId::all(self.n)
            .filter(|p| self.corrupted[p.index()])
            .collect()
    }

    pub fn trace(&self) -> &TraceLog {
        &self.trace
    }

    pub fn clock(&self) -> u64 {
        self.trace.len()
    }

    /// Longest chain of dependent messages observed so far.
    pub fn chain_depth(&self) -> u64 {
        self.max_depth
    }

    /// Read-only snapshot for adversaries and checkers.
    pub fn full_snapshot(&self) -> AdversaryView<'_, P> {
        AdversaryView { world: self }
    }

    pub fn into_processes(self) -> Vec<P> {
        self.processes
    }

    /// Queues a message from `from` to `to` as if `from` had sent it. Used to seed
    /// hand-built scenarios.
    pub fn inject(&mut self, from: ProcessId, to: ProcessId, msg: P::Msg) {
        let s = self.slot(from, to);
        self.out_buf[s].push_back(Envelope {
            from,
            msg,
            depth: 1,
        });
        self.nonempty_out.insert(s);
    }

    fn check_applicable(&self, e: Event) -> Result<(), &'static str> {
        let in_range = |p: ProcessId| p.index() < self.n;
        match e {
            Event::Compute(i) if !in_range(i) => Err("unknown process"),
            Event::Compute(_) => Ok(()),
            Event::Deliver { from, to } => {
                if !in_range(from) || !in_range(to) {
                    Err("unknown process")
                } else if self.out_buf[self.slot(from, to)].is_empty() {
                    Err("out buffer is empty")
                } else {
                    Ok(())
                }
            }
            Event::Corrupt(i) => {
                if !in_range(i) {
                    Err("unknown process")
                } else if self.corrupted[i.index()] {
                    Err("process already corrupted")
                } else if self.n_corrupted >= self.params.f {
                    Err("fault budget exhausted")
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Applies one event chosen by `adv`. Corrupted computes consult `adv`.
    pub fn apply_event<A: Adversary<P> + ?Sized>(
        &mut self,
        e: Event,
        adv: &mut A,
    ) -> Result<(), SimError> {
        let ordinal = self.trace.len();
        self.check_applicable(e)
            .map_err(|reason| SimError::InapplicableEvent {
                event: e,
                ordinal,
                reason,
            })?;
        let progress = match e {
            Event::Compute(i) => {
                let pending = self.compute_ready.contains(i.index());
                let good = !self.corrupted[i.index()];
                if good {
                    self.compute_good(i, ordinal);
                } else {
                    let action = adv.byzantine_compute(&self.full_snapshot(), i);
                    self.compute_bad(i, ordinal, action);
                }
                self.trace.push(EventKind::Compute, i, i, 0);
                good && pending
            }
            Event::Deliver { from, to } => {
                let s = self.slot(from, to);
                let env = self.out_buf[s].pop_front().expect("checked non-empty");
                if self.out_buf[s].is_empty() {
                    self.nonempty_out.remove(s);
                }
                let digest = env.msg.digest();
                self.in_buf[s].push_back(env);
                self.inbox_len[to.index()] += 1;
                self.compute_ready.insert(to.index());
                self.trace.push(EventKind::Deliver, from, to, digest);
                false
            }
            Event::Corrupt(i) => {
                self.corrupted[i.index()] = true;
                self.n_corrupted += 1;
                self.trace.push(EventKind::Corrupt, i, i, 0);
                false
            }
        };
        if progress || !self.good_work_exists() {
            self.since_progress = 0;
        } else {
            self.since_progress += 1;
        }
        Ok(())
    }

    fn good_work_exists(&self) -> bool {
        self.compute_ready
            .as_slice()
            .iter()
            .any(|&i| !self.corrupted[i])
    }

    fn drain_inbox(&mut self, i: ProcessId) -> Vec<Envelope<P::Msg>> {
        let mut inbox = Vec::with_capacity(self.inbox_len[i.index()]);
        if self.inbox_len[i.index()] > 0 {
            for from in 0..self.n {
                let s = from * self.n + i.index();
                inbox.extend(self.in_buf[s].drain(..));
            }
        }
        self.inbox_len[i.index()] = 0;
        self.started[i.index()] = true;
        self.compute_ready.remove(i.index());
        inbox
    }

    fn compute_good(&mut self, i: ProcessId, ordinal: u64) {
        let inbox = self.drain_inbox(i);
        self.run_handler(i, ordinal, inbox, None, Vec::new());
    }

    fn compute_bad(&mut self, i: ProcessId, ordinal: u64, action: ByzAction<P::Msg>) {
        let inbox = self.drain_inbox(i);
        match action {
            ByzAction::Silent => {}
            ByzAction::Honest { coins, extra } => {
                self.run_handler(i, ordinal, inbox, coins, extra);
            }
            ByzAction::Send(msgs) => {
                let depth = self.depth[i.index()] + 1;
                self.enqueue(i, msgs, depth);
            }
        }
    }

    fn run_handler(
        &mut self,
        i: ProcessId,
        ordinal: u64,
        inbox: Vec<Envelope<P::Msg>>,
        coins: Option<Box<dyn CoinOracle>>,
        extra: Vec<(ProcessId, P::Msg)>,
    ) {
        let idx = i.index();
        let d = inbox
            .iter()
            .map(|e| e.depth)
            .max()
            .unwrap_or(0)
            .max(self.depth[idx]);
        self.depth[idx] = d;
        self.max_depth = self.max_depth.max(d);
        let mut ctx = ComputeCtx {
            me: i,
            n: self.n,
            ordinal,
            inbox,
            rng: &mut self.rngs[idx],
            coins,
            out: Vec::new(),
        };
        self.processes[idx].on_compute(&mut ctx);
        let mut out = ctx.out;
        out.extend(extra);
        self.enqueue(i, out, d + 1);
    }

    fn enqueue(&mut self, from: ProcessId, msgs: Vec<(ProcessId, P::Msg)>, depth: u64) {
        for (to, msg) in msgs {
            let s = self.slot(from, to);
            self.out_buf[s].push_back(Envelope { from, msg, depth });
            self.nonempty_out.insert(s);
        }
    }

    fn all_good_decided(&self) -> bool {
        self.good()
            .all(|p| self.processes[p.index()].decided().is_some())
    }

    fn all_good_reached(&self, k: u64) -> bool {
        self.good().all(|p| self.processes[p.index()].epoch() >= k)
    }

    /// Runs until `stop` holds, the strategy stops, or nothing is applicable.
    /// `max_events` bounds every run; reaching it reports `NonTermination`.
    pub fn run<A: Adversary<P> + ?Sized>(
        &mut self,
        adv: &mut A,
        stop: StopCondition,
        max_events: u64,
    ) -> Result<RunOutcome, SimError> {
        let start = self.trace.len();
        let limit = match stop {
            StopCondition::MaxEvents(k) => k.min(max_events),
            _ => max_events,
        };
        loop {
            let done = match stop {
                StopCondition::AllDecided => self.all_good_decided(),
                StopCondition::AllDecidedAmong(set) => set.iter().all(|p| {
                    self.corrupted[p.index()] || self.processes[p.index()].decided().is_some()
                }),
                StopCondition::EpochLimit(k) => self.all_good_reached(k),
                StopCondition::MaxEvents(_) => false,
            };
            if done {
                let reason = match stop {
                    StopCondition::AllDecided | StopCondition::AllDecidedAmong(_) => {
                        StopReason::AllDecided
                    }
                    _ => StopReason::EpochLimit,
                };
                return Ok(RunOutcome {
                    reason,
                    events: self.trace.len() - start,
                });
            }
            if self.trace.len() - start >= limit {
                return Ok(RunOutcome {
                    reason: StopReason::NonTermination,
                    events: self.trace.len() - start,
                });
            }
            if self.nonempty_out.as_slice().is_empty() && self.compute_ready.as_slice().is_empty() {
                return Ok(RunOutcome {
                    reason: StopReason::Quiescent,
                    events: self.trace.len() - start,
                });
            }
            let Some(e) = adv.next_event(&self.full_snapshot()) else {
                return Ok(RunOutcome {
                    reason: StopReason::StrategyStopped,
                    events: self.trace.len() - start,
                });
            };
            self.apply_event(e, adv)?;
            if self.since_progress > self.params.fairness_window {
                return Err(SimError::FairnessViolation {
                    window: self.params.fairness_window,
                    ordinal: self.trace.len() - 1,
                });
            }
        }
    }
}

/// Picks uniformly among all pending deliveries and pending computes.
pub struct UniformScheduler {
    rng: ChaCha20Rng,
}

impl UniformScheduler {
    pub fn new(seed: u64) -> Self {
        UniformScheduler {
            rng: stream_rng(seed, ADVERSARY_STREAM),
        }
    }

    pub fn pick<P: Process>(&mut self, view: &AdversaryView<'_, P>) -> Option<Event> {
        use rand::Rng;
        let d = view.pending_delivery_count();
        let c = view.pending_computes().len();
        if d + c == 0 {
            return None;
        }
        let k = self.rng.gen_range(0..d + c);
        Some(if k < d {
            let (from, to) = view.pending_delivery_at(k);
            Event::Deliver { from, to }
        } else {
            Event::Compute(ProcessId(view.pending_computes()[k - d] as u32))
        })
    }
}

impl<P: Process> Adversary<P> for UniformScheduler {
    fn next_event(&mut self, view: &AdversaryView<'_, P>) -> Option<Event> {
        self.pick(view)
    }
}
