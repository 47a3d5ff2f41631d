//! Iterated blackboard: a series of `(m + 1) x n` boards written column-wise over
//! reliable broadcast, with per-process frozen views of the whole history.
//!
//! Row 0 of board `t` carries the writer's final last-vector of board `t - 1`;
//! rows `1..=m` carry coins. A process finalizes board `t` once it has accepted
//! `n - f` last-vectors for it; its view is then every accepted cell at or
//! before the pointwise maximum of those vectors.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::broadcast::{AppCtx, Check, Payload, RbApp, Reader, WireError};
use crate::params::Sign;
use crate::sim::{CoinRequest, ProcessId, ProcessSet};
use crate::stats::clamp_sum;

/// Position `(board, row)` within a column, ordered lexicographically.
pub type Pos = (u64, u32);

/// Last accepted position per column; `None` where nothing was accepted.
pub type LastVector = Vec<Option<Pos>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellValue {
    Coin(Sign),
    Last(LastVector),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BbMsg {
    Write { t: u64, r: u32, value: CellValue },
    Ack { t: u64, r: u32, col: ProcessId },
    LastVec { t: u64, last: LastVector },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BbError {
    #[error("{writer} has no accepted row-0 write on board {t}")]
    WriterAbsent { writer: ProcessId, t: u64 },
    #[error("board {t} is not finalized here")]
    NotFinalized { t: u64 },
}

/// One accepted cell, for debugging dumps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRecord {
    pub t: u64,
    pub r: u32,
    pub i: u32,
    /// Coin value, or `None` for a row-0 last-vector.
    pub value: Option<i64>,
    pub accept_ordinal: u64,
}

#[derive(Debug, Clone)]
struct Cell {
    pos: Pos,
    value: CellValue,
    ordinal: u64,
}

#[derive(Debug, Clone, Default)]
struct BoardState {
    complete: bool,
    my_row: u32,
    last_t: Option<LastVector>,
    finalized: bool,
}

/// Things the owner of a blackboard reacts to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BbEvent {
    Completed(u64),
    Finalized(u64),
}

#[derive(Debug, Clone)]
pub struct Blackboard {
    n: usize,
    f: usize,
    m: u32,
    me: ProcessId,
    columns: Vec<Vec<Cell>>,
    last: LastVector,
    acks: HashMap<(u64, u32, u32), ProcessSet>,
    boards: BTreeMap<u64, BoardState>,
    lastvecs: HashMap<u64, Vec<(ProcessId, LastVector)>>,
    lastbar: BTreeMap<u64, LastVector>,
    finalized_at: BTreeMap<u64, u64>,
    events: Vec<BbEvent>,
}

impl Blackboard {
    pub fn new(me: ProcessId, n: usize, f: usize, m: usize) -> Self {
        Blackboard {
            n,
            f,
            m: m as u32,
            me,
            columns: vec![Vec::new(); n],
            last: vec![None; n],
            acks: HashMap::new(),
            boards: BTreeMap::new(),
            lastvecs: HashMap::new(),
            lastbar: BTreeMap::new(),
            finalized_at: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    fn quorum(&self) -> usize {
        self.n - self.f
    }

    pub fn rows(&self) -> u32 {
        self.m
    }

    /// Highest board this process has started, 0 if none.
    pub fn current_board(&self) -> u64 {
        self.boards.keys().next_back().copied().unwrap_or(0)
    }

    pub fn is_complete(&self, t: u64) -> bool {
        self.boards.get(&t).is_some_and(|b| b.complete)
    }

    pub fn is_finalized(&self, t: u64) -> bool {
        self.lastbar.contains_key(&t)
    }

    /// The live last-vector.
    pub fn last(&self) -> &LastVector {
        &self.last
    }

    /// Last-vector frozen when board `t` completed here.
    pub fn last_at_completion(&self, t: u64) -> Option<&LastVector> {
        self.boards.get(&t).and_then(|b| b.last_t.as_ref())
    }

    /// Pointwise maximum of the last-vectors board `t` was finalized with.
    pub fn lastbar(&self, t: u64) -> Option<&LastVector> {
        self.lastbar.get(&t)
    }

    /// Finalized boards with their final vectors and the ordinal of finalization.
    pub fn finalized(&self) -> impl Iterator<Item = (u64, &LastVector, u64)> + '_ {
        self.lastbar
            .iter()
            .map(|(t, v)| (*t, v, self.finalized_at.get(t).copied().unwrap_or(0)))
    }

    pub fn take_events(&mut self) -> Vec<BbEvent> {
        std::mem::take(&mut self.events)
    }

    fn cell(&self, i: usize, pos: Pos) -> Option<&Cell> {
        let col = &self.columns[i];
        col.binary_search_by(|c| c.pos.cmp(&pos))
            .ok()
            .map(|k| &col[k])
    }

    pub fn has_cell(&self, i: ProcessId, pos: Pos) -> bool {
        self.cell(i.index(), pos).is_some()
    }

    pub fn coin_at(&self, i: ProcessId, pos: Pos) -> Option<Sign> {
        match self.cell(i.index(), pos).map(|c| &c.value) {
            Some(CellValue::Coin(s)) => Some(*s),
            _ => None,
        }
    }

    fn ack_count(&self, t: u64, r: u32, col: usize) -> usize {
        self.acks
            .get(&(t, r, col as u32))
            .map_or(0, ProcessSet::len)
    }

    /// Starts board `t`: broadcasts row 0. `t` must be 1 or follow a finalized board.
    pub fn start_board(&mut self, t: u64, flip: &mut dyn FnMut(CoinRequest) -> Sign) -> Vec<BbMsg> {
        assert!(
            t == 1 || self.is_finalized(t - 1),
            "board {t} started before board {} was finalized",
            t - 1
        );
        assert!(!self.boards.contains_key(&t), "board {t} started twice");
        let zeta = if t == 1 {
            Vec::new()
        } else {
            self.lastbar[&(t - 1)].clone()
        };
        self.boards.insert(t, BoardState::default());
        let mut out = vec![BbMsg::Write {
            t,
            r: 0,
            value: CellValue::Last(zeta),
        }];
        self.run_clauses(None, &mut out, flip);
        out
    }

    /// Whether this process may participate in broadcasting `msg` from `origin`.
    pub fn check(&self, origin: ProcessId, msg: &BbMsg) -> Check {
        let q = self.quorum();
        match msg {
            BbMsg::Write { t, r, value } => {
                if *t == 0 || *r > self.m {
                    return Check::Reject;
                }
                match (r, value) {
                    (0, CellValue::Last(v)) if *t == 1 => {
                        if v.is_empty() {
                            Check::Ready
                        } else {
                            Check::Reject
                        }
                    }
                    (0, CellValue::Last(claim)) => {
                        if claim.len() != self.n {
                            return Check::Reject;
                        }
                        if self.lastvec_support(t - 1, claim) {
                            Check::Ready
                        } else {
                            Check::Wait
                        }
                    }
                    (r, CellValue::Coin(_)) if *r > 0 => {
                        if self.ack_count(*t, r - 1, origin.index()) >= q {
                            Check::Ready
                        } else {
                            Check::Wait
                        }
                    }
                    _ => Check::Reject,
                }
            }
            BbMsg::Ack { t, r, col } => {
                if *r > self.m || col.index() >= self.n {
                    Check::Reject
                } else if self.has_cell(*col, (*t, *r)) {
                    Check::Ready
                } else {
                    Check::Wait
                }
            }
            BbMsg::LastVec { last, .. } => {
                if last.len() != self.n {
                    return Check::Reject;
                }
                let all_known = last
                    .iter()
                    .enumerate()
                    .all(|(i, p)| p.is_none_or(|pos| self.cell(i, pos).is_some()));
                if all_known {
                    Check::Ready
                } else {
                    Check::Wait
                }
            }
        }
    }

    /// Whether some `n - f` accepted last-vectors of board `t` have pointwise maximum `claim`.
    fn lastvec_support(&self, t: u64, claim: &LastVector) -> bool {
        let Some(vecs) = self.lastvecs.get(&t) else {
            return false;
        };
        let below: Vec<&LastVector> = vecs
            .iter()
            .map(|(_, v)| v)
            .filter(|v| leq(v, claim))
            .collect();
        below.len() >= self.quorum() && pointwise_max(self.n, below.into_iter()) == *claim
    }

    /// Records an accepted message and runs the upon-clauses in order.
    pub fn on_accept(
        &mut self,
        origin: ProcessId,
        msg: &BbMsg,
        ordinal: u64,
        flip: &mut dyn FnMut(CoinRequest) -> Sign,
    ) -> Vec<BbMsg> {
        let mut out = Vec::new();
        let mut wrote = None;
        match msg {
            BbMsg::Write { t, r, value } => {
                let col = &mut self.columns[origin.index()];
                let pos = (*t, *r);
                if col.last().is_none_or(|c| c.pos < pos) {
                    col.push(Cell {
                        pos,
                        value: value.clone(),
                        ordinal,
                    });
                    self.last[origin.index()] = Some(pos);
                    wrote = Some((*t, *r));
                } else {
                    // Reliable broadcast delivers each column in order.
                    assert!(
                        self.cell(origin.index(), pos).is_some(),
                        "out-of-order write from {origin} at {pos:?}"
                    );
                }
            }
            BbMsg::Ack { t, r, col } => {
                self.acks.entry((*t, *r, col.0)).or_default().insert(origin);
            }
            BbMsg::LastVec { t, last } => {
                let vecs = self.lastvecs.entry(*t).or_default();
                if !vecs.iter().any(|(q, _)| *q == origin) {
                    vecs.push((origin, last.clone()));
                }
            }
        }
        self.run_clauses(wrote.map(|(t, r)| (origin, t, r)), &mut out, flip);
        for e in &self.events {
            if let BbEvent::Finalized(t) = e {
                self.finalized_at.entry(*t).or_insert(ordinal);
            }
        }
        out
    }

    fn run_clauses(
        &mut self,
        written: Option<(ProcessId, u64, u32)>,
        out: &mut Vec<BbMsg>,
        flip: &mut dyn FnMut(CoinRequest) -> Sign,
    ) {
        let q = self.quorum();
        let open: Vec<u64> = self
            .boards
            .iter()
            .filter(|(_, b)| !b.complete || !b.finalized)
            .map(|(t, _)| *t)
            .collect();
        for &t in &open {
            // Completion.
            if !self.boards[&t].complete {
                let full = (0..self.n)
                    .filter(|&c| self.ack_count(t, self.m, c) >= q)
                    .count();
                if full >= q {
                    let snapshot = self.last.clone();
                    let b = self.boards.get_mut(&t).expect("open board");
                    b.complete = true;
                    b.last_t = Some(snapshot.clone());
                    self.events.push(BbEvent::Completed(t));
                    out.push(BbMsg::LastVec { t, last: snapshot });
                }
            }
            // Next own write.
            let b = &self.boards[&t];
            let r = b.my_row;
            if !b.complete && r < self.m && self.ack_count(t, r, self.me.index()) >= q {
                self.boards.get_mut(&t).expect("open board").my_row = r + 1;
                let value = CellValue::Coin(flip(CoinRequest {
                    board: t,
                    row: r + 1,
                }));
                out.push(BbMsg::Write { t, r: r + 1, value });
            }
        }
        // Acknowledge the accepted write.
        if let Some((col, t, r)) = written {
            if !self.is_complete(t) {
                out.push(BbMsg::Ack { t, r, col });
            }
        }
        // Finalization.
        for &t in &open {
            if self.boards[&t].finalized {
                continue;
            }
            if let Some(vecs) = self.lastvecs.get(&t) {
                if vecs.len() >= q {
                    let bar = pointwise_max(self.n, vecs.iter().take(q).map(|(_, v)| v));
                    self.lastbar.insert(t, bar);
                    self.boards.get_mut(&t).expect("open board").finalized = true;
                    self.events.push(BbEvent::Finalized(t));
                }
            }
        }
    }

    /// Coins of board `t` visible under `bar`, as `view[i][row - 1]`.
    pub fn board_view(&self, bar: &LastVector, t: u64) -> Vec<Vec<Option<Sign>>> {
        (0..self.n)
            .map(|i| {
                (1..=self.m)
                    .map(|r| {
                        if bar[i].is_some_and(|b| (t, r) <= b) {
                            self.coin_at(ProcessId(i as u32), (t, r))
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Clamped column sums of board `t` under `bar`.
    pub fn column_sums(&self, bar: &LastVector, t: u64, x_max: f64) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let Some(limit) = bar[i] else { return 0.0 };
                let col = &self.columns[i];
                let start = col.partition_point(|c| c.pos < (t, 1));
                let raw: i64 = col[start..]
                    .iter()
                    .take_while(|c| c.pos.0 == t && c.pos <= limit)
                    .filter_map(|c| match c.value {
                        CellValue::Coin(s) => Some(s.value()),
                        CellValue::Last(_) => None,
                    })
                    .sum();
                clamp_sum(raw, x_max)
            })
            .collect()
    }

    /// This process's frozen view through board `t` (its `lastbar`).
    pub fn own_view(&self, t: u64) -> Result<&LastVector, BbError> {
        self.lastbar(t).ok_or(BbError::NotFinalized { t })
    }

    /// The view `q` had fixed through board `t - 1`, from its row-0 write on board `t`.
    pub fn history_of_writer(&self, q: ProcessId, t: u64) -> Result<&LastVector, BbError> {
        match self.cell(q.index(), (t, 0)).map(|c| &c.value) {
            Some(CellValue::Last(v)) if t > 1 => Ok(v),
            _ => Err(BbError::WriterAbsent { writer: q, t }),
        }
    }

    /// Whether `q` has a non-empty column on board `t` under `bar`.
    pub fn participated(&self, bar: &LastVector, q: ProcessId, t: u64) -> bool {
        bar[q.index()].is_some_and(|b| b >= (t, 1)) && self.has_cell(q, (t, 1))
    }

    pub fn cell_dump(&self) -> Vec<CellRecord> {
        let mut out: Vec<CellRecord> = self
            .columns
            .iter()
            .enumerate()
            .flat_map(|(i, col)| {
                col.iter().map(move |c| CellRecord {
                    t: c.pos.0,
                    r: c.pos.1,
                    i: i as u32,
                    value: match c.value {
                        CellValue::Coin(s) => Some(s.value()),
                        CellValue::Last(_) => None,
                    },
                    accept_ordinal: c.ordinal,
                })
            })
            .collect();
        out.sort_by_key(|c| (c.t, c.r, c.i));
        out
    }
}

/// Pointwise `a <= b`.
pub fn leq(a: &LastVector, b: &LastVector) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x <= y)
}

pub fn pointwise_max<'a>(n: usize, vecs: impl Iterator<Item = &'a LastVector>) -> LastVector {
    let mut out = vec![None; n];
    for v in vecs {
        for (o, x) in out.iter_mut().zip(v) {
            if *x > *o {
                *o = *x;
            }
        }
    }
    out
}

/// Cells `(board, row, column)` of boards `1..=t` (rows `1..=m`) where two views differ,
/// with whether one side is empty.
pub fn view_disagreements(
    a: &Blackboard,
    bar_a: &LastVector,
    b: &Blackboard,
    bar_b: &LastVector,
    t: u64,
) -> Vec<((u64, u32, usize), bool)> {
    let mut out = Vec::new();
    for tt in 1..=t {
        let va = a.board_view(bar_a, tt);
        let vb = b.board_view(bar_b, tt);
        for i in 0..va.len() {
            for r in 0..va[i].len() {
                if va[i][r] != vb[i][r] {
                    out.push((
                        (tt, r as u32 + 1, i),
                        va[i][r].is_none() || vb[i][r].is_none(),
                    ));
                }
            }
        }
    }
    out
}

fn put_pos(out: &mut Vec<u8>, p: &Option<Pos>) {
    match p {
        None => out.push(0),
        Some((t, r)) => {
            out.push(1);
            out.extend_from_slice(&t.to_be_bytes());
            out.extend_from_slice(&r.to_be_bytes());
        }
    }
}

fn get_pos(r: &mut Reader<'_>) -> Result<Option<Pos>, WireError> {
    match r.u8()? {
        0 => Ok(None),
        1 => Ok(Some((r.u64()?, r.u32()?))),
        _ => Err(WireError::Malformed("position tag")),
    }
}

fn put_vec(out: &mut Vec<u8>, v: &LastVector) {
    out.extend_from_slice(&(v.len() as u32).to_be_bytes());
    for p in v {
        put_pos(out, p);
    }
}

fn get_vec(r: &mut Reader<'_>) -> Result<LastVector, WireError> {
    let len = r.u32()? as usize;
    (0..len).map(|_| get_pos(r)).collect()
}

impl BbMsg {
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            BbMsg::Write { t, r, value } => {
                out.push(0);
                out.extend_from_slice(&t.to_be_bytes());
                out.extend_from_slice(&r.to_be_bytes());
                match value {
                    CellValue::Coin(s) => out.push(if *s == Sign::Pos { 1 } else { 2 }),
                    CellValue::Last(v) => {
                        out.push(0);
                        put_vec(out, v);
                    }
                }
            }
            BbMsg::Ack { t, r, col } => {
                out.push(1);
                out.extend_from_slice(&t.to_be_bytes());
                out.extend_from_slice(&r.to_be_bytes());
                out.extend_from_slice(&col.0.to_be_bytes());
            }
            BbMsg::LastVec { t, last } => {
                out.push(2);
                out.extend_from_slice(&t.to_be_bytes());
                put_vec(out, last);
            }
        }
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, WireError> {
        match r.u8()? {
            0 => {
                let (t, row) = (r.u64()?, r.u32()?);
                let value = match r.u8()? {
                    0 => CellValue::Last(get_vec(r)?),
                    1 => CellValue::Coin(Sign::Pos),
                    2 => CellValue::Coin(Sign::Neg),
                    _ => return Err(WireError::Malformed("cell value tag")),
                };
                Ok(BbMsg::Write { t, r: row, value })
            }
            1 => Ok(BbMsg::Ack {
                t: r.u64()?,
                r: r.u32()?,
                col: ProcessId(r.u32()?),
            }),
            2 => Ok(BbMsg::LastVec {
                t: r.u64()?,
                last: get_vec(r)?,
            }),
            tag => Err(WireError::UnknownTag(tag)),
        }
    }
}

impl Payload for BbMsg {
    fn encode(&self, out: &mut Vec<u8>) {
        self.encode_into(out);
    }

    fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader(bytes);
        let m = BbMsg::decode_from(&mut r)?;
        if !r.is_empty() {
            return Err(WireError::Trailing(r.0.len()));
        }
        Ok(m)
    }
}

/// Runs boards `1..=boards` back to back with nothing else on top.
#[derive(Debug, Clone)]
pub struct BoardOnly {
    pub bb: Blackboard,
    pub boards: u64,
}

impl BoardOnly {
    pub fn new(me: ProcessId, n: usize, f: usize, m: usize, boards: u64) -> Self {
        BoardOnly {
            bb: Blackboard::new(me, n, f, m),
            boards,
        }
    }

    fn after(&mut self, mut out: Vec<BbMsg>, ctx: &mut AppCtx<'_, '_, BbMsg>) {
        loop {
            for m in out.drain(..) {
                ctx.broadcast(m);
            }
            let events = self.bb.take_events();
            for e in events {
                if let BbEvent::Finalized(t) = e {
                    if t < self.boards && t == self.bb.current_board() {
                        out.extend(self.bb.start_board(t + 1, &mut |req| ctx.flip(req)));
                    }
                }
            }
            if out.is_empty() {
                break;
            }
        }
    }
}

impl RbApp for BoardOnly {
    type Body = BbMsg;

    fn start(&mut self, ctx: &mut AppCtx<'_, '_, BbMsg>) {
        let out = self.bb.start_board(1, &mut |req| ctx.flip(req));
        self.after(out, ctx);
    }

    fn check(&self, origin: ProcessId, _: u64, body: &BbMsg) -> Check {
        self.bb.check(origin, body)
    }

    fn deliver(
        &mut self,
        origin: ProcessId,
        _: u64,
        body: Arc<BbMsg>,
        ctx: &mut AppCtx<'_, '_, BbMsg>,
    ) {
        let ordinal = ctx.ordinal();
        let out = self
            .bb
            .on_accept(origin, &body, ordinal, &mut |req| ctx.flip(req));
        self.after(out, ctx);
    }

    fn epoch(&self) -> u64 {
        self.bb.lastbar.keys().next_back().copied().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests;
