use super::*;
use crate::agreement::{check_agreement, DecisionRecord};
use crate::broadcast::{AppCtx, Check, RbApp};
use crate::game::{run_game, GameConfig, GameView};
use crate::params::Sign;
use crate::sim::{ProcessId, StopCondition, StopReason, TraceMode, World};
use std::sync::Arc;

fn view<'a>(
    params: &'a ProtocolParams,
    w: &'a [f64],
    cols: &'a [Vec<Sign>],
    bad: &[u32],
    sigma: Sign,
) -> GameView<'a> {
    let mut b = ProcessSet::default();
    for &i in bad {
        b.insert(ProcessId(i));
    }
    GameView {
        t: 1,
        k: 1,
        params,
        weights: w,
        bad: b,
        sigma,
        columns: cols,
    }
}

fn col(sum: i64, m: usize) -> Vec<Sign> {
    let mut v = vec![if sum >= 0 { Sign::Pos } else { Sign::Neg }; sum.unsigned_abs() as usize];
    while v.len() + 2 <= m {
        v.push(Sign::Pos);
        v.push(Sign::Neg);
    }
    v
}

fn signed(cells: &[Sign]) -> i64 {
    cells.iter().map(|s| s.value()).sum()
}

#[test]
fn counteract_is_silent_when_good_sum_already_agrees() {
    let params = ProtocolParams::desk(9, 2, 8, 4);
    let w = vec![1.0; 9];
    let mut cols: Vec<Vec<Sign>> = (0..7).map(|_| col(2, 8)).collect();
    cols.extend([vec![], vec![]]);
    let out = counteract_bad_values(&view(&params, &w, &cols, &[7, 8], Sign::Pos));
    assert_eq!(out.len(), 2);
    assert!(out.iter().all(|c| signed(c) == 0 && c.len() == 8));
}

#[test]
fn counteract_offsets_a_negative_good_sum() {
    let params = ProtocolParams::desk(9, 2, 8, 4);
    let w = vec![1.0; 9];
    let mut cols: Vec<Vec<Sign>> = vec![col(-4, 8), col(-4, 8), col(-2, 8)];
    cols.extend((3..7).map(|_| col(0, 8)));
    cols.extend([vec![], vec![]]);
    let out = counteract_bad_values(&view(&params, &w, &cols, &[7, 8], Sign::Pos));
    let s_bad: i64 = out.iter().map(|c| signed(c)).sum();
    assert!(s_bad >= 8, "{s_bad}");
    assert!(s_bad >= 10);
    let neg = counteract_bad_values(&view(&params, &w, &cols, &[7, 8], Sign::Neg));
    assert!(neg.iter().all(|c| signed(c) == 0));
}

#[test]
fn counteract_saturates_when_offset_is_out_of_reach() {
    let params = ProtocolParams::desk(9, 2, 8, 4);
    let cap = 8.min(params.x_max().floor() as i64);
    let w = vec![1.0; 9];
    let mut cols: Vec<Vec<Sign>> = (0..7).map(|_| col(-8, 8)).collect();
    cols.extend([vec![], vec![]]);
    let out = counteract_bad_values(&view(&params, &w, &cols, &[7, 8], Sign::Pos));
    assert!(out.iter().all(|c| signed(c) == cap));
}

#[test]
fn counteract_forces_most_coins_with_unit_weights() {
    // f * m >= 2 sqrt(m n).
    let (n, f, m) = (9, 2, 16);
    assert!((f * m) as f64 >= 2.0 * ((m * n) as f64).sqrt());
    let params = ProtocolParams::desk(n, f, m, 200);
    let mut cfg = GameConfig::new(params, 1);
    cfg.candidate = Some(Sign::Pos);
    for seed in 0..5 {
        let out = run_game(&cfg, &mut GameCounteract::default(), seed).unwrap();
        let forced = out.iterations.iter().filter(|r| r.with_sigma()).count();
        assert!(
            forced * 10 >= out.iterations.len() * 9,
            "{forced}/{}",
            out.iterations.len()
        );
        assert!(out.iterations.iter().all(|r| r.sigma == -1));
    }
}

#[test]
fn split_ambiguity_only_hides_last_cells_within_budget() {
    let params = ProtocolParams::desk(9, 2, 4, 64);
    let mut cfg = GameConfig::new(params, 1);
    cfg.force_bad_weights_zero = true;
    let mut adv = GameCounteract {
        ambiguity: AmbiguityPolicy::Split,
    };
    let out = run_game(&cfg, &mut adv, 11).unwrap();
    let split = out.iterations.iter().filter(|r| !r.coins_agree()).count();
    assert!(split > 0 && split < out.iterations.len());
}

#[test]
fn strategies_are_built_by_name() {
    let params = ProtocolParams::desk(5, 1, 2, 4);
    let args = AdversaryArgs::new();
    for name in STRATEGY_NAMES {
        assert!(message_strategy(name, &args, &params, 0).is_ok());
    }
    assert!(matches!(
        message_strategy("nope", &args, &params, 0),
        Err(AdversaryError::Unknown(_))
    ));
    assert!(matches!(
        game_strategy("starve-subset", &args),
        Err(AdversaryError::NoGameForm { .. })
    ));
    let bad = [("ambiguity".to_string(), "sideways".to_string())]
        .into_iter()
        .collect();
    assert!(matches!(
        game_strategy("counteract", &bad),
        Err(AdversaryError::BadArg { .. })
    ));
    let bad = [("k".to_string(), "x".to_string())].into_iter().collect();
    assert!(message_strategy("starve-subset", &bad, &params, 0).is_err());
}

fn agreement_run(
    name: &str,
    n: usize,
    f: usize,
    inputs: &[Sign],
    seed: u64,
) -> (StopReason, Vec<DecisionRecord>, usize) {
    let params = ProtocolParams::desk(n, f, 2, 4);
    let strat = message_strategy(name, &AdversaryArgs::new(), &params, seed).unwrap();
    let procs = (0..n as u32)
        .map(|i| {
            RbProcess::new(
                ProcessId(i),
                n,
                f,
                Node::new(ProcessId(i), inputs[i as usize], &params),
            )
        })
        .collect();
    let mut w = World::new(params, procs, seed, TraceMode::DigestOnly);
    let mut target = ProcessSet::default();
    for p in w
        .good()
        .filter(|p| !strat.starved.contains(*p))
        .collect::<Vec<_>>()
    {
        target.insert(p);
    }
    let mut adv = strat.adversary;
    let out = w
        .run(
            adv.as_mut(),
            StopCondition::AllDecidedAmong(target),
            50_000_000,
        )
        .unwrap();
    assert!(w.corrupted_set().len() <= f);
    let decided: Vec<DecisionRecord> = w
        .good()
        .filter(|p| target.contains(*p))
        .filter_map(|p| w.process(p).app.decision)
        .collect();
    let expected = w.good().filter(|p| target.contains(*p)).count();
    (out.reason, decided, expected)
}

#[test]
fn message_level_strategies_keep_agreement() {
    let inputs = [Sign::Pos, Sign::Neg, Sign::Pos, Sign::Neg, Sign::Neg];
    for name in STRATEGY_NAMES {
        for seed in 0..3 {
            let (reason, ds, expected) = agreement_run(name, 5, 1, &inputs, seed);
            assert_eq!(reason, StopReason::AllDecided, "{name} seed {seed}");
            let v = check_agreement(&inputs, &ds, expected);
            assert!(v.is_safe() && v.violations.is_empty(), "{name}: {v:?}");
        }
    }
}

#[derive(Default)]
struct Log {
    got: Vec<(ProcessId, u64, Vec<u8>)>,
}

impl RbApp for Log {
    type Body = Vec<u8>;

    fn check(&self, _: ProcessId, _: u64, _: &Vec<u8>) -> Check {
        Check::Ready
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

#[test]
fn equivocating_sender_never_splits_good_processes() {
    for seed in 0..30 {
        let n = 4;
        let procs = (0..n as u32)
            .map(|i| RbProcess::new(ProcessId(i), n, 1, Log::default()))
            .collect();
        let mut w = World::new(
            ProtocolParams::desk(n, 1, 2, 2),
            procs,
            seed,
            TraceMode::DigestOnly,
        );
        let mut adv = Equivocator::new(seed, ProcessId(0), 3);
        w.run(&mut adv, StopCondition::MaxEvents(100_000), 100_000)
            .unwrap();
        let mut seen = BTreeMap::new();
        for p in w.good() {
            for (o, s, b) in &w.process(p).app.got {
                let prev = seen.entry((*o, *s)).or_insert_with(|| b.clone());
                assert_eq!(prev, b);
            }
        }
    }
}

#[test]
fn mid_run_counteract_corrupts_late_and_stays_safe() {
    let params = ProtocolParams::desk(9, 2, 4, 4);
    let mut args = AdversaryArgs::new();
    args.insert("corrupt-at".into(), "3000".into());
    for seed in 0..5 {
        let strat = message_strategy("counteract", &args, &params, seed).unwrap();
        let inputs: Vec<Sign> = (0..9)
            .map(|i| if i % 2 == 0 { Sign::Pos } else { Sign::Neg })
            .collect();
        let procs = (0..9u32)
            .map(|i| {
                RbProcess::new(
                    ProcessId(i),
                    9,
                    2,
                    Node::new(ProcessId(i), inputs[i as usize], &params),
                )
            })
            .collect();
        let mut w = World::new(params.clone(), procs, seed, TraceMode::DigestOnly);
        let mut adv = strat.adversary;
        w.run(adv.as_mut(), StopCondition::MaxEvents(2_999), u64::MAX)
            .unwrap();
        assert_eq!(w.corrupted_set().len(), 0);
        w.run(adv.as_mut(), StopCondition::AllDecided, 50_000_000)
            .unwrap();
        assert_eq!(w.corrupted_set().len(), 2);
        let decisions: Vec<DecisionRecord> =
            w.good().filter_map(|p| w.process(p).app.decision).collect();
        assert!(check_agreement(&inputs, &decisions, 7).is_safe());
    }
}
