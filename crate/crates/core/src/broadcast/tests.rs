use rand::Rng;

use super::*;
use crate::params::ProtocolParams;
use crate::sim::{stream_rng, Adversary, AdversaryView, Event, StopCondition, TraceMode, World};

#[derive(Default)]
struct Log {
    to_send: Vec<Vec<u8>>,
    got: Vec<(ProcessId, u64, Vec<u8>)>,
}

impl RbApp for Log {
    type Body = Vec<u8>;

    fn start(&mut self, ctx: &mut AppCtx<'_, '_, Vec<u8>>) {
        for b in self.to_send.drain(..) {
            ctx.broadcast(b);
        }
    }

    fn check(&self, _: ProcessId, _: u64, body: &Vec<u8>) -> Check {
        if body.first() == Some(&0xff) {
            Check::Reject
        } else {
            Check::Ready
        }
    }

    fn deliver(
        &mut self,
        origin: ProcessId,
        seq: u64,
        body: Arc<Vec<u8>>,
        _: &mut AppCtx<'_, '_, Vec<u8>>,
    ) {
        self.got.push((origin, seq, (*body).clone()));
    }
}

fn p(i: u32) -> ProcessId {
    ProcessId(i)
}

fn msg(kind: RbKind, origin: u32, seq: u64, body: &[u8]) -> RbMessage<Vec<u8>> {
    RbMessage::new(kind, p(origin), seq, Arc::new(body.to_vec()))
}

/// Feeds messages straight into one process's state and drives it.
fn feed(
    proc_: &mut RbProcess<Log>,
    msgs: &[(u32, RbMessage<Vec<u8>>)],
) -> Vec<(ProcessId, RbMessage<Vec<u8>>)> {
    struct Nobody;
    impl Adversary<RbProcess<Log>> for Nobody {
        fn next_event(&mut self, _: &AdversaryView<'_, RbProcess<Log>>) -> Option<Event> {
            None
        }
    }
    let me = proc_.rb.me;
    let placeholder = RbProcess::new(me, 4, 1, Log::default());
    let mut procs: Vec<RbProcess<Log>> = (0..4)
        .map(|i| RbProcess::new(p(i), 4, 1, Log::default()))
        .collect();
    procs[me.index()] = std::mem::replace(proc_, placeholder);
    let mut w = World::new(
        ProtocolParams::desk(4, 1, 4, 4),
        procs,
        1,
        TraceMode::DigestOnly,
    );
    for (from, m) in msgs {
        w.inject(p(*from), me, m.clone());
        w.apply_event(
            Event::Deliver {
                from: p(*from),
                to: me,
            },
            &mut Nobody,
        )
        .unwrap();
    }
    w.apply_event(Event::Compute(me), &mut Nobody).unwrap();
    let view = w.full_snapshot();
    let mut out = Vec::new();
    for j in ProcessId::all(4) {
        for env in view.out_buffer(me, j) {
            out.push((j, env.msg.clone()));
        }
    }
    *proc_ = w.into_processes().swap_remove(me.index());
    out
}

#[test]
fn n4_thresholds() {
    let mut q = RbProcess::new(p(1), 4, 1, Log::default());
    // Two echoes (including none of our own) are not > (4+1)/2.
    let out = feed(
        &mut q,
        &[
            (2, msg(RbKind::Echo, 0, 1, b"a")),
            (3, msg(RbKind::Echo, 0, 1, b"a")),
        ],
    );
    assert!(out.is_empty());
    // A third echo crosses the threshold: echo and ready are sent together.
    let out = feed(&mut q, &[(0, msg(RbKind::Echo, 0, 1, b"a"))]);
    let kinds: Vec<RbKind> = out.iter().map(|(_, m)| m.kind).collect();
    assert_eq!(kinds.iter().filter(|k| **k == RbKind::Echo).count(), 3);
    assert_eq!(kinds.iter().filter(|k| **k == RbKind::Ready).count(), 3);
    assert!(q.app.got.is_empty());
    // Own ready plus one more is 2 < 2f+1.
    feed(&mut q, &[(2, msg(RbKind::Ready, 0, 1, b"a"))]);
    assert!(q.app.got.is_empty());
    feed(&mut q, &[(3, msg(RbKind::Ready, 0, 1, b"a"))]);
    assert_eq!(q.app.got, vec![(p(0), 1, b"a".to_vec())]);
}

#[test]
fn init_from_non_origin_is_ignored() {
    let mut q = RbProcess::new(p(1), 4, 1, Log::default());
    let out = feed(&mut q, &[(2, msg(RbKind::Init, 0, 1, b"a"))]);
    assert!(out.is_empty());
    let out = feed(&mut q, &[(0, msg(RbKind::Init, 0, 1, b"a"))]);
    assert_eq!(out.len(), 3);
}

#[test]
fn ready_amplification_at_f_plus_one() {
    let mut q = RbProcess::new(p(1), 4, 1, Log::default());
    let out = feed(&mut q, &[(2, msg(RbKind::Ready, 0, 1, b"a"))]);
    assert!(out.is_empty());
    let out = feed(&mut q, &[(3, msg(RbKind::Ready, 0, 1, b"a"))]);
    assert!(out.iter().any(|(_, m)| m.kind == RbKind::Ready));
}

#[test]
fn rejected_body_gets_no_endorsement() {
    let mut q = RbProcess::new(p(1), 4, 1, Log::default());
    let out = feed(&mut q, &[(0, msg(RbKind::Init, 0, 1, &[0xff]))]);
    assert!(out.is_empty());
}

#[test]
fn equivocating_echo_sender_is_banned() {
    let mut q = RbProcess::new(p(1), 4, 1, Log::default());
    feed(
        &mut q,
        &[
            (2, msg(RbKind::Echo, 0, 1, b"a")),
            (2, msg(RbKind::Echo, 0, 1, b"b")),
        ],
    );
    assert_eq!(
        q.rb.equivocations(),
        &[Equivocation {
            origin: p(0),
            seq: 1,
            sender: p(2)
        }]
    );
    // Further messages from the banned sender do not count.
    feed(
        &mut q,
        &[
            (2, msg(RbKind::Ready, 0, 1, b"a")),
            (3, msg(RbKind::Ready, 0, 1, b"a")),
        ],
    );
    assert!(!q.rb.readied_by_me(p(0), 1));
}

#[test]
fn duplicate_messages_are_idempotent() {
    let mut q = RbProcess::new(p(1), 4, 1, Log::default());
    let e = msg(RbKind::Echo, 0, 1, b"a");
    let out = feed(&mut q, &[(2, e.clone()), (2, e.clone()), (2, e)]);
    assert!(out.is_empty());
}

#[test]
fn forged_digest_is_dropped() {
    let mut q = RbProcess::new(p(1), 4, 1, Log::default());
    let mut bad = msg(RbKind::Init, 0, 1, b"a");
    bad.digest ^= 1;
    let out = feed(&mut q, &[(0, bad)]);
    assert!(out.is_empty());
}

#[test]
fn fifo_violation_on_early_initiate() {
    let st = RbState::<Vec<u8>>::new(p(0), 4, 1);
    assert!(st.rb_initiate(1, Arc::new(vec![1])).is_ok());
    assert_eq!(
        st.rb_initiate(2, Arc::new(vec![1])).unwrap_err(),
        RbError::FifoViolation {
            origin: p(0),
            seq: 2,
            accepted: 0
        }
    );
}

struct RandomFair {
    rng: rand_chacha::ChaCha20Rng,
}

impl<P: Process> Adversary<P> for RandomFair {
    fn next_event(&mut self, view: &AdversaryView<'_, P>) -> Option<Event> {
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

#[test]
fn all_good_processes_accept_everything_in_order() {
    for seed in 0..20 {
        let n = 5;
        let procs = (0..n as u32)
            .map(|i| {
                let to_send = (0..3).map(|k| vec![i as u8, k]).collect();
                RbProcess::new(
                    p(i),
                    n,
                    1,
                    Log {
                        to_send,
                        got: Vec::new(),
                    },
                )
            })
            .collect();
        let mut w = World::new(
            ProtocolParams::desk(n, 1, 4, 4),
            procs,
            seed,
            TraceMode::DigestOnly,
        );
        let mut adv = RandomFair {
            rng: stream_rng(seed, 0),
        };
        w.run(&mut adv, StopCondition::MaxEvents(1_000_000), 1_000_000)
            .unwrap();
        for q in w.processes() {
            assert_eq!(q.app.got.len(), 15);
            for o in 0..n as u32 {
                let mine: Vec<_> = q
                    .app
                    .got
                    .iter()
                    .filter(|g| g.0 == p(o))
                    .map(|g| (g.1, g.2.clone()))
                    .collect();
                let want: Vec<_> = (0..3u8).map(|k| (k as u64 + 1, vec![o as u8, k])).collect();
                assert_eq!(mine, want);
            }
        }
    }
}
