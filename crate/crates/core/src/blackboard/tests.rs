use super::*;
use crate::broadcast::RbProcess;
use crate::params::ProtocolParams;
use crate::sim::{StopCondition, TraceMode, UniformScheduler, World};

fn p(i: u32) -> ProcessId {
    ProcessId(i)
}

fn run_boards(n: usize, f: usize, m: usize, boards: u64, seed: u64) -> Vec<RbProcess<BoardOnly>> {
    let procs = (0..n as u32)
        .map(|i| RbProcess::new(p(i), n, f, BoardOnly::new(p(i), n, f, m, boards)))
        .collect();
    let mut w = World::new(
        ProtocolParams::desk(n, f, m, 4),
        procs,
        seed,
        TraceMode::DigestOnly,
    );
    let mut adv = UniformScheduler::new(seed);
    w.run(&mut adv, StopCondition::MaxEvents(u64::MAX), 50_000_000)
        .unwrap();
    w.into_processes()
}

#[test]
fn all_good_processes_finalize_every_board() {
    for seed in 0..4 {
        let (n, f, m, boards) = (4, 1, 2, 3);
        let procs = run_boards(n, f, m, boards, seed);
        for a in &procs {
            for t in 1..=boards {
                let bar = a.app.bb.lastbar(t).expect("finalized");
                let view = a.app.bb.board_view(bar, t);
                let full = view.iter().filter(|col| col[m - 1].is_some()).count();
                assert!(full >= n - f, "board {t}: {full} full columns");
            }
            for b in &procs {
                let d = view_disagreements(
                    &a.app.bb,
                    a.app.bb.lastbar(boards).unwrap(),
                    &b.app.bb,
                    b.app.bb.lastbar(boards).unwrap(),
                    boards,
                );
                assert!(d.len() <= f, "{} disagreements", d.len());
                assert!(d.iter().all(|(_, one_empty)| *one_empty));
            }
        }
    }
}

#[test]
fn writer_history_matches_its_final_vector() {
    let procs = run_boards(4, 1, 1, 3, 9);
    for a in &procs {
        for q in &procs {
            for t in 2..=3 {
                let h = a.app.bb.history_of_writer(q.app.bb.me, t).unwrap();
                assert_eq!(h, q.app.bb.lastbar(t - 1).unwrap());
            }
        }
        assert_eq!(
            a.app.bb.history_of_writer(p(0), 1),
            Err(BbError::WriterAbsent { writer: p(0), t: 1 })
        );
    }
}

#[test]
fn prerequisites_gate_messages() {
    let mut bb = Blackboard::new(p(0), 4, 1, 2);
    let coin = CellValue::Coin(Sign::Pos);
    assert_eq!(
        bb.check(
            p(1),
            &BbMsg::Write {
                t: 1,
                r: 3,
                value: coin.clone()
            }
        ),
        Check::Reject
    );
    assert_eq!(
        bb.check(
            p(1),
            &BbMsg::Write {
                t: 1,
                r: 0,
                value: coin.clone()
            }
        ),
        Check::Reject
    );
    assert_eq!(
        bb.check(
            p(1),
            &BbMsg::Write {
                t: 1,
                r: 0,
                value: CellValue::Last(vec![])
            }
        ),
        Check::Ready
    );
    assert_eq!(
        bb.check(
            p(1),
            &BbMsg::Write {
                t: 1,
                r: 1,
                value: coin.clone()
            }
        ),
        Check::Wait
    );
    assert_eq!(
        bb.check(
            p(2),
            &BbMsg::Ack {
                t: 1,
                r: 0,
                col: p(1)
            }
        ),
        Check::Wait
    );
    let mut flips = |_| Sign::Neg;
    bb.on_accept(
        p(1),
        &BbMsg::Write {
            t: 1,
            r: 0,
            value: CellValue::Last(vec![]),
        },
        1,
        &mut flips,
    );
    assert_eq!(
        bb.check(
            p(2),
            &BbMsg::Ack {
                t: 1,
                r: 0,
                col: p(1)
            }
        ),
        Check::Ready
    );
    for a in 1..4 {
        bb.on_accept(
            p(a),
            &BbMsg::Ack {
                t: 1,
                r: 0,
                col: p(1),
            },
            2,
            &mut flips,
        );
    }
    assert_eq!(
        bb.check(
            p(1),
            &BbMsg::Write {
                t: 1,
                r: 1,
                value: coin
            }
        ),
        Check::Ready
    );
    let stale = vec![Some((1, 0)), Some((1, 0)), None, None];
    assert_eq!(
        bb.check(p(3), &BbMsg::LastVec { t: 1, last: stale }),
        Check::Wait
    );
}

#[test]
fn row_zero_claim_needs_exact_supported_maximum() {
    let mut bb = Blackboard::new(p(0), 4, 1, 1);
    let mut flips = |_| Sign::Pos;
    bb.on_accept(
        p(1),
        &BbMsg::Write {
            t: 1,
            r: 0,
            value: CellValue::Last(vec![]),
        },
        1,
        &mut flips,
    );
    bb.on_accept(
        p(2),
        &BbMsg::Write {
            t: 1,
            r: 0,
            value: CellValue::Last(vec![]),
        },
        2,
        &mut flips,
    );
    let a = vec![None, Some((1, 0)), None, None];
    let b = vec![None, None, Some((1, 0)), None];
    let c = vec![None, Some((1, 0)), Some((1, 0)), None];
    for (q, v) in [(1, &a), (2, &b), (3, &a)] {
        bb.on_accept(
            p(q),
            &BbMsg::LastVec {
                t: 1,
                last: v.clone(),
            },
            3,
            &mut flips,
        );
    }
    let claim = |v: &LastVector| {
        bb.check(
            p(1),
            &BbMsg::Write {
                t: 2,
                r: 0,
                value: CellValue::Last(v.clone()),
            },
        )
    };
    assert_eq!(claim(&c), Check::Ready);
    assert_eq!(claim(&a), Check::Wait);
    assert_eq!(claim(&vec![None; 4]), Check::Wait);
    assert_eq!(claim(&vec![None; 3]), Check::Reject);
}

#[test]
fn messages_roundtrip_through_wire_format() {
    let msgs = vec![
        BbMsg::Write {
            t: 3,
            r: 0,
            value: CellValue::Last(vec![None, Some((2, 4)), Some((3, 0))]),
        },
        BbMsg::Write {
            t: 1,
            r: 2,
            value: CellValue::Coin(Sign::Neg),
        },
        BbMsg::Ack {
            t: 7,
            r: 1,
            col: p(5),
        },
        BbMsg::LastVec {
            t: 2,
            last: vec![Some((2, 1)); 4],
        },
    ];
    for m in msgs {
        let mut buf = Vec::new();
        m.encode(&mut buf);
        assert_eq!(BbMsg::decode(&buf).unwrap(), m);
        buf.push(0);
        assert!(BbMsg::decode(&buf).is_err());
    }
}

#[test]
fn cell_dump_lists_accepted_writes() {
    let procs = run_boards(4, 1, 1, 1, 3);
    let dump = procs[0].app.bb.cell_dump();
    assert!(dump.iter().filter(|c| c.r == 0).count() >= 3);
    assert!(dump.iter().all(|c| (c.r == 0) == c.value.is_none()));
}
