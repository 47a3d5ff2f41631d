//! FIFO reliable broadcast with echo/ready amplification, driven by an
//! application that can delay its participation until a message is valid.

mod wire;

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::Sign;
use crate::sim::{CoinRequest, ComputeCtx, Process, ProcessId, ProcessSet};

pub use wire::{Payload, RbKind, RbMessage, Reader, WireError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RbError {
    #[error("{origin} cannot broadcast seq {seq}: only {accepted} accepted locally")]
    FifoViolation {
        origin: ProcessId,
        seq: u64,
        accepted: u64,
    },
}

/// Application verdict on a body it is asked to endorse or accept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Ready,
    /// Prerequisites missing; ask again later.
    Wait,
    /// Never valid.
    Reject,
}

/// A sender seen endorsing two different bodies for one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Equivocation {
    pub origin: ProcessId,
    pub seq: u64,
    pub sender: ProcessId,
}

/// One local accept, in acceptance order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptRecord {
    pub origin: ProcessId,
    pub seq: u64,
    pub digest: u64,
    pub ordinal: u64,
}

#[derive(Debug)]
struct Tally<B> {
    digest: u64,
    body: Arc<B>,
    echo: ProcessSet,
    ready: ProcessSet,
}

#[derive(Debug)]
struct Instance<B> {
    init: Option<u64>,
    tallies: Vec<Tally<B>>,
    echoed: ProcessSet,
    readied: ProcessSet,
    banned: ProcessSet,
    sent_echo: bool,
    sent_ready: bool,
}

impl<B> Default for Instance<B> {
    fn default() -> Self {
        Instance {
            init: None,
            tallies: Vec::new(),
            echoed: ProcessSet::EMPTY,
            readied: ProcessSet::EMPTY,
            banned: ProcessSet::EMPTY,
            sent_echo: false,
            sent_ready: false,
        }
    }
}

#[derive(Debug)]
struct OriginState<B> {
    accepted: u64,
    pending: BTreeMap<u64, Instance<B>>,
}

/// Per-process broadcast state across all origins.
#[derive(Debug)]
pub struct RbState<B> {
    me: ProcessId,
    n: usize,
    f: usize,
    origins: Vec<OriginState<B>>,
    own_queue: VecDeque<Arc<B>>,
    own_in_flight: bool,
    accept_log: Vec<AcceptRecord>,
    equivocations: Vec<Equivocation>,
}

/// Handle given to the application while it reacts to an accept.
pub struct AppCtx<'c, 'a, B: Payload> {
    inner: &'c mut ComputeCtx<'a, RbMessage<B>>,
    broadcasts: Vec<B>,
}

impl<'c, 'a, B: Payload> AppCtx<'c, 'a, B> {
    pub fn me(&self) -> ProcessId {
        self.inner.me()
    }

    pub fn n(&self) -> usize {
        self.inner.n()
    }

    pub fn ordinal(&self) -> u64 {
        self.inner.ordinal()
    }

    pub fn flip(&mut self, req: CoinRequest) -> Sign {
        self.inner.flip(req)
    }

    /// Queues a reliable broadcast; it starts once every earlier one has been accepted locally.
    pub fn broadcast(&mut self, body: B) {
        self.broadcasts.push(body);
    }
}

/// Application layered on reliable broadcast.
pub trait RbApp: Send {
    type Body: Payload;

    fn start(&mut self, _ctx: &mut AppCtx<'_, '_, Self::Body>) {}

    /// Whether this process may echo, ready, or accept `body` now.
    fn check(&self, origin: ProcessId, seq: u64, body: &Self::Body) -> Check;

    /// Called once per accepted message, in per-origin FIFO order.
    fn deliver(
        &mut self,
        origin: ProcessId,
        seq: u64,
        body: Arc<Self::Body>,
        ctx: &mut AppCtx<'_, '_, Self::Body>,
    );

    fn decided(&self) -> Option<Sign> {
        None
    }

    fn epoch(&self) -> u64 {
        0
    }
}

impl<B: Payload> RbState<B> {
    pub fn new(me: ProcessId, n: usize, f: usize) -> Self {
        RbState {
            me,
            n,
            f,
            origins: (0..n)
                .map(|_| OriginState {
                    accepted: 0,
                    pending: BTreeMap::new(),
                })
                .collect(),
            own_queue: VecDeque::new(),
            own_in_flight: false,
            accept_log: Vec::new(),
            equivocations: Vec::new(),
        }
    }

    /// Highest sequence number of `origin` accepted here.
    pub fn accepted_upto(&self, origin: ProcessId) -> u64 {
        self.origins[origin.index()].accepted
    }

    /// Whether this process has sent its ready for a still-pending instance.
    pub fn readied_by_me(&self, origin: ProcessId, seq: u64) -> bool {
        self.origins[origin.index()]
            .pending
            .get(&seq)
            .is_some_and(|i| i.readied.contains(self.me))
    }

    pub fn accept_log(&self) -> &[AcceptRecord] {
        &self.accept_log
    }

    pub fn equivocations(&self) -> &[Equivocation] {
        &self.equivocations
    }

    /// Builds the init message for `seq`; fails unless `seq - 1` is accepted here.
    pub fn rb_initiate(&self, seq: u64, body: Arc<B>) -> Result<RbMessage<B>, RbError> {
        let accepted = self.accepted_upto(self.me);
        if seq != accepted + 1 {
            return Err(RbError::FifoViolation {
                origin: self.me,
                seq,
                accepted,
            });
        }
        Ok(RbMessage::new(RbKind::Init, self.me, seq, body))
    }

    /// Records one incoming message. Reactions happen in [`RbState::drive`].
    pub fn receive(&mut self, from: ProcessId, msg: &RbMessage<B>) {
        if msg.origin.index() >= self.n || from.index() >= self.n || msg.seq == 0 {
            return;
        }
        let me = self.me;
        let org = &mut self.origins[msg.origin.index()];
        if msg.seq <= org.accepted {
            return;
        }
        let inst = org.pending.entry(msg.seq).or_default();
        if inst.banned.contains(from) {
            return;
        }
        let k = match inst.tallies.iter().position(|t| t.digest == msg.digest) {
            Some(k) => k,
            None => {
                // The sender's own messages are built locally and need no check.
                if from != me && msg.body.payload_digest() != msg.digest {
                    return;
                }
                inst.tallies.push(Tally {
                    digest: msg.digest,
                    body: msg.body.clone(),
                    echo: ProcessSet::EMPTY,
                    ready: ProcessSet::EMPTY,
                });
                inst.tallies.len() - 1
            }
        };
        let equivocated = match msg.kind {
            RbKind::Init => {
                if from != msg.origin {
                    return;
                }
                match inst.init {
                    None => {
                        inst.init = Some(msg.digest);
                        false
                    }
                    Some(d) => d != msg.digest,
                }
            }
            RbKind::Echo => {
                let t = &mut inst.tallies[k];
                if t.echo.contains(from) {
                    false
                } else if inst.echoed.insert(from) {
                    t.echo.insert(from);
                    false
                } else {
                    true
                }
            }
            RbKind::Ready => {
                let t = &mut inst.tallies[k];
                if t.ready.contains(from) {
                    false
                } else if inst.readied.insert(from) {
                    t.ready.insert(from);
                    false
                } else {
                    true
                }
            }
        };
        if equivocated {
            inst.banned.insert(from);
            self.equivocations.push(Equivocation {
                origin: msg.origin,
                seq: msg.seq,
                sender: from,
            });
        }
    }

    /// Applies every enabled echo, ready and accept step until nothing changes.
    pub fn drive<A: RbApp<Body = B>>(
        &mut self,
        app: &mut A,
        ctx: &mut ComputeCtx<'_, RbMessage<B>>,
    ) {
        self.start_own(ctx);
        loop {
            let mut progressed = false;
            for o in 0..self.n {
                while self.step_origin(ProcessId(o as u32), app, ctx) {
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
    }

    /// Queues own broadcasts requested by the application.
    pub fn enqueue_own(&mut self, bodies: Vec<B>) {
        self.own_queue.extend(bodies.into_iter().map(Arc::new));
    }

    fn start_own(&mut self, ctx: &mut ComputeCtx<'_, RbMessage<B>>) {
        if self.own_in_flight {
            return;
        }
        let Some(body) = self.own_queue.pop_front() else {
            return;
        };
        let seq = self.accepted_upto(self.me) + 1;
        let msg = self
            .rb_initiate(seq, body)
            .expect("next own seq follows the last accepted one");
        self.own_in_flight = true;
        self.receive(self.me, &msg);
        self.send_others(ctx, msg);
    }

    fn send_others(&self, ctx: &mut ComputeCtx<'_, RbMessage<B>>, msg: RbMessage<B>) {
        for j in ProcessId::all(self.n) {
            if j != self.me {
                ctx.send(j, msg.clone());
            }
        }
    }

    /// Advances the gate-open instance of `origin`; true iff it got accepted.
    fn step_origin<A: RbApp<Body = B>>(
        &mut self,
        origin: ProcessId,
        app: &mut A,
        ctx: &mut ComputeCtx<'_, RbMessage<B>>,
    ) -> bool {
        let (n, f, me) = (self.n, self.f, self.me);
        let seq = self.origins[origin.index()].accepted + 1;
        let Some(inst) = self.origins[origin.index()].pending.get_mut(&seq) else {
            return false;
        };
        let mut accepted: Option<(u64, Arc<B>)> = None;
        let mut outgoing = Vec::new();
        'scan: loop {
            let mut changed = false;
            for t in inst.tallies.iter_mut() {
                let echo_ok = 2 * t.echo.len() > n + f;
                let ready_amp = t.ready.len() > f;
                let want_echo =
                    !inst.sent_echo && (inst.init == Some(t.digest) || echo_ok || ready_amp);
                let want_ready = !inst.sent_ready && (echo_ok || ready_amp);
                let can_accept = t.ready.len() > 2 * f;
                if !(want_echo || want_ready || can_accept) {
                    continue;
                }
                if app.check(origin, seq, &t.body) != Check::Ready {
                    continue;
                }
                let endorse = |kind| RbMessage {
                    kind,
                    origin,
                    seq,
                    body: t.body.clone(),
                    digest: t.digest,
                };
                let (echo_msg, ready_msg) = (endorse(RbKind::Echo), endorse(RbKind::Ready));
                if want_echo {
                    inst.sent_echo = true;
                    inst.echoed.insert(me);
                    t.echo.insert(me);
                    outgoing.push(echo_msg);
                    changed = true;
                }
                if !inst.sent_ready && (2 * t.echo.len() > n + f || t.ready.len() > f) {
                    inst.sent_ready = true;
                    inst.readied.insert(me);
                    t.ready.insert(me);
                    outgoing.push(ready_msg);
                    changed = true;
                }
                if t.ready.len() > 2 * f {
                    accepted = Some((t.digest, t.body.clone()));
                    break 'scan;
                }
            }
            if !changed {
                break;
            }
        }
        for m in outgoing {
            self.send_others(ctx, m);
        }
        let Some((digest, body)) = accepted else {
            return false;
        };
        let org = &mut self.origins[origin.index()];
        org.pending.remove(&seq);
        org.accepted = seq;
        self.accept_log.push(AcceptRecord {
            origin,
            seq,
            digest,
            ordinal: ctx.ordinal(),
        });
        if origin == me {
            self.own_in_flight = false;
        }
        let mut actx = AppCtx {
            inner: ctx,
            broadcasts: Vec::new(),
        };
        app.deliver(origin, seq, body, &mut actx);
        let bodies = actx.broadcasts;
        self.enqueue_own(bodies);
        self.start_own(ctx);
        true
    }
}

/// A process running `A` over reliable broadcast.
pub struct RbProcess<A: RbApp> {
    pub rb: RbState<A::Body>,
    pub app: A,
    started: bool,
}

impl<A: RbApp> RbProcess<A> {
    pub fn new(me: ProcessId, n: usize, f: usize, app: A) -> Self {
        RbProcess {
            rb: RbState::new(me, n, f),
            app,
            started: false,
        }
    }
}

impl<A: RbApp> Process for RbProcess<A> {
    type Msg = RbMessage<A::Body>;

    fn on_compute(&mut self, ctx: &mut ComputeCtx<'_, Self::Msg>) {
        if !self.started {
            self.started = true;
            let mut actx = AppCtx {
                inner: ctx,
                broadcasts: Vec::new(),
            };
            self.app.start(&mut actx);
            let bodies = actx.broadcasts;
            self.rb.enqueue_own(bodies);
        }
        for env in ctx.take_inbox() {
            self.rb.receive(env.from, &env.msg);
        }
        self.rb.drive(&mut self.app, ctx);
    }

    fn decided(&self) -> Option<Sign> {
        self.app.decided()
    }

    fn epoch(&self) -> u64 {
        self.app.epoch()
    }
}

#[cfg(test)]
mod tests;
