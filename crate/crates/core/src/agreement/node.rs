//! A full protocol participant: validated Bracha iterations, each followed by a
//! blackboard board whose weighted column sums give the coin.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::bracha::{validate_claim, BVal, BrachaMsg, BrachaState, RoundOutcome, Validity};
use super::epoch::WeightBook;
use crate::blackboard::{BbMsg, Blackboard};
use crate::broadcast::{AppCtx, Check, Payload, RbApp, Reader, WireError};
use crate::params::{ProtocolParams, Sign};
use crate::sim::ProcessId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeMsg {
    Bracha(BrachaMsg),
    Board(BbMsg),
}

impl Payload for NodeMsg {
    fn encode(&self, out: &mut Vec<u8>) {
        match self {
            NodeMsg::Bracha(m) => {
                out.push(0);
                out.extend_from_slice(&m.round.to_be_bytes());
                out.push(match m.value {
                    BVal::Plain(Sign::Pos) => 0,
                    BVal::Plain(Sign::Neg) => 1,
                    BVal::Dec(Sign::Pos) => 2,
                    BVal::Dec(Sign::Neg) => 3,
                });
            }
            NodeMsg::Board(m) => {
                out.push(1);
                m.encode_into(out);
            }
        }
    }

    fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader(bytes);
        let msg = match r.u8()? {
            0 => {
                let round = r.u64()?;
                let value = match r.u8()? {
                    0 => BVal::Plain(Sign::Pos),
                    1 => BVal::Plain(Sign::Neg),
                    2 => BVal::Dec(Sign::Pos),
                    3 => BVal::Dec(Sign::Neg),
                    _ => return Err(WireError::Malformed("vote tag")),
                };
                NodeMsg::Bracha(BrachaMsg { round, value })
            }
            1 => NodeMsg::Board(BbMsg::decode_from(&mut r)?),
            t => return Err(WireError::UnknownTag(t)),
        };
        if !r.is_empty() {
            return Err(WireError::Trailing(r.0.len()));
        }
        Ok(msg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub process: u32,
    pub iteration: u64,
    pub value: i64,
    pub event_ordinal: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub origin: u32,
    pub round: u64,
    pub value: BVal,
    pub witnesses: Vec<u32>,
}

/// Outcome of one coin-flip call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinRecord {
    pub t: u64,
    pub value: i64,
    pub weighted_sum: f64,
    /// Whether the Bracha iteration actually used the coin.
    pub used: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Round(u64),
    Board(u64),
}

#[derive(Debug, Clone)]
pub struct Node {
    params: ProtocolParams,
    me: ProcessId,
    pub input: Sign,
    pub state: BrachaState,
    stage: Stage,
    needs_coin: bool,
    pool: BTreeMap<u64, Vec<(ProcessId, BVal)>>,
    prev: Vec<Option<(u64, BVal)>>,
    pub validations: Vec<ValidationRecord>,
    pub bb: Blackboard,
    pub weights: WeightBook,
    pub decision: Option<DecisionRecord>,
    pub coins: Vec<CoinRecord>,
    /// Candidate value per iteration, for the adversary's direction.
    pub candidates: BTreeMap<u64, Sign>,
}

impl Node {
    pub fn new(me: ProcessId, input: Sign, params: &ProtocolParams) -> Self {
        Node {
            params: params.clone(),
            me,
            input,
            state: BrachaState::new(input),
            stage: Stage::Round(0),
            needs_coin: false,
            pool: BTreeMap::new(),
            prev: vec![None; params.n],
            validations: Vec::new(),
            bb: Blackboard::new(me, params.n, params.f, params.m),
            weights: WeightBook::new(params),
            decision: None,
            coins: Vec::new(),
            candidates: BTreeMap::new(),
        }
    }

    pub fn me(&self) -> ProcessId {
        self.me
    }

    pub fn iteration(&self) -> u64 {
        match self.stage {
            Stage::Round(r) => r / 3 + 1,
            Stage::Board(t) => t,
        }
    }

    /// Validated messages of a round, in validation order.
    pub fn validated(&self, round: u64) -> &[(ProcessId, BVal)] {
        self.pool.get(&round).map_or(&[], Vec::as_slice)
    }

    fn validity(&self, origin: ProcessId, m: &BrachaMsg) -> Validity {
        let expected = self.prev[origin.index()].map_or(0, |(r, _)| r + 1);
        if m.round != expected {
            return Validity::Invalid;
        }
        let prev = self.prev[origin.index()].map(|(_, v)| v);
        let pool = if m.round == 0 {
            &[][..]
        } else {
            self.validated(m.round - 1)
        };
        validate_claim(m.round, m.value, prev, pool, self.params.n, self.params.f)
    }

    /// Weighted coin from the final view of board `t`.
    pub fn coin_flip(&mut self, t: u64) -> (Sign, f64) {
        let bar = self
            .bb
            .lastbar(t)
            .expect("board finalized before the coin")
            .clone();
        let k = self.weights.schedule().epoch_of(t);
        let sums = self.bb.column_sums(&bar, t, self.params.x_max());
        let mut total = 0.0;
        for (i, x) in sums.iter().enumerate() {
            let q = ProcessId(i as u32);
            if *x == 0.0 || !self.bb.participated(&bar, q, t) {
                continue;
            }
            let w = self
                .weights
                .consensus(&self.bb, &self.params, k, q)
                .unwrap_or(0.0);
            total += w * x;
        }
        (Sign::of(total), total)
    }

    fn advance(&mut self, ctx: &mut AppCtx<'_, '_, NodeMsg>) {
        let (n, f) = (self.params.n, self.params.f);
        loop {
            match self.stage {
                Stage::Round(r) => {
                    let vals: Vec<BVal> = self
                        .validated(r)
                        .iter()
                        .take(n - f)
                        .map(|(_, v)| *v)
                        .collect();
                    if vals.len() < n - f {
                        return;
                    }
                    let outcome = self
                        .state
                        .bracha_round(&vals, n, f)
                        .expect("validated messages are sound");
                    match outcome {
                        RoundOutcome::Send(v) => {
                            self.stage = Stage::Round(r + 1);
                            ctx.broadcast(NodeMsg::Bracha(BrachaMsg {
                                round: r + 1,
                                value: v,
                            }));
                        }
                        RoundOutcome::IterationEnd { needs_coin } => {
                            let t = r / 3 + 1;
                            if let Some(v) = self.state.candidate {
                                self.candidates.insert(t, v);
                            }
                            if let (Some((v, it)), None) = (self.state.decided, self.decision) {
                                self.decision = Some(DecisionRecord {
                                    process: self.me.0,
                                    iteration: it,
                                    value: v.value(),
                                    event_ordinal: ctx.ordinal(),
                                });
                            }
                            self.needs_coin = needs_coin;
                            self.stage = Stage::Board(t);
                            let out = self.bb.start_board(t, &mut |req| ctx.flip(req));
                            for m in out {
                                ctx.broadcast(NodeMsg::Board(m));
                            }
                        }
                    }
                }
                Stage::Board(t) => {
                    if !self.bb.is_finalized(t) {
                        return;
                    }
                    let (coin, sum) = self.coin_flip(t);
                    self.coins.push(CoinRecord {
                        t,
                        value: coin.value(),
                        weighted_sum: sum,
                        used: self.needs_coin,
                    });
                    if self.needs_coin {
                        self.state.set_coin(coin);
                    }
                    let r = 3 * t;
                    self.state.round = r;
                    self.stage = Stage::Round(r);
                    ctx.broadcast(NodeMsg::Bracha(BrachaMsg {
                        round: r,
                        value: self.state.value,
                    }));
                }
            }
        }
    }
}

impl RbApp for Node {
    type Body = NodeMsg;

    fn start(&mut self, ctx: &mut AppCtx<'_, '_, NodeMsg>) {
        ctx.broadcast(NodeMsg::Bracha(BrachaMsg {
            round: 0,
            value: self.state.value,
        }));
    }

    fn check(&self, origin: ProcessId, _: u64, body: &NodeMsg) -> Check {
        match body {
            NodeMsg::Bracha(m) => match self.validity(origin, m) {
                Validity::Valid(_) => Check::Ready,
                Validity::Pending => Check::Wait,
                Validity::Invalid => Check::Reject,
            },
            NodeMsg::Board(m) => self.bb.check(origin, m),
        }
    }

    fn deliver(
        &mut self,
        origin: ProcessId,
        _: u64,
        body: Arc<NodeMsg>,
        ctx: &mut AppCtx<'_, '_, NodeMsg>,
    ) {
        match &*body {
            NodeMsg::Bracha(m) => {
                let Validity::Valid(w) = self.validity(origin, m) else {
                    unreachable!("delivered an unvalidated vote")
                };
                self.validations.push(ValidationRecord {
                    origin: origin.0,
                    round: m.round,
                    value: m.value,
                    witnesses: w.into_iter().map(|q| q.0).collect(),
                });
                self.prev[origin.index()] = Some((m.round, m.value));
                self.pool
                    .entry(m.round)
                    .or_default()
                    .push((origin, m.value));
            }
            NodeMsg::Board(m) => {
                let ordinal = ctx.ordinal();
                let out = self
                    .bb
                    .on_accept(origin, m, ordinal, &mut |req| ctx.flip(req));
                for m in out {
                    ctx.broadcast(NodeMsg::Board(m));
                }
                // Board progress is read off the blackboard directly.
                self.bb.take_events();
            }
        }
        self.advance(ctx);
    }

    fn decided(&self) -> Option<Sign> {
        self.state.decided.map(|(v, _)| v)
    }

    fn epoch(&self) -> u64 {
        self.weights.schedule().epoch_of(self.iteration())
    }
}
