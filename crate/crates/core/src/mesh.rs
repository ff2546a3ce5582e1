//! Per-cycle model of one PE array working on one (output channel, input
//! channel) pair of a tile.
//!
//! Column `c` loads its activations at step `c`. Weights enter column 0
//! one per step and shift one column right per step, so at step `t`
//! column `c` multiplies by weight `t - c`. Steps and cycles coincide
//! unless a FIFO fills up (see below). Each cycle a PE first pops at
//! most one message from each overlap FIFO (only messages that were queued
//! before the cycle started), then performs its MAC. A product or message
//! that belongs to another PE is pushed one hop toward its owner. A FIFO
//! only accepts a message when it has room; if a MAC step would push into a
//! full FIFO the whole array holds that step for a cycle.
//! When the last message has landed, result blocks drain toward column 0
//! in `T_c` cycles.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::fixed::{add, mul};
use crate::schedule::owner;

pub use crate::schedule::{Direction, PeCoord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Message {
    pub value: i64,
    /// Local `[z, r, c]` of the owning PE.
    pub dest: [usize; 3],
    /// Slot in the owner's result block.
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fifo {
    queue: VecDeque<Message>,
    capacity: usize,
    peak: usize,
}

impl Fifo {
    fn new(capacity: usize) -> Self {
        Self {
            queue: VecDeque::new(),
            capacity,
            peak: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn peak(&self) -> usize {
        self.peak
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeState {
    /// Activation register.
    pub ra: Option<i64>,
    /// Weight register: kernel index and value.
    pub rw: Option<(usize, i64)>,
    pub fifo_v: Fifo,
    pub fifo_h: Fifo,
    pub fifo_d: Fifo,
    /// Accumulators for the PE's own `K^dims` block.
    pub results: Vec<i64>,
    /// `[z, r, c]` inside the array.
    pub position: [usize; 3],
}

impl PeState {
    pub fn fifo(&self, dir: Direction) -> &Fifo {
        match dir {
            Direction::V => &self.fifo_v,
            Direction::H => &self.fifo_h,
            Direction::D => &self.fifo_d,
        }
    }

    fn fifo_mut(&mut self, dir: Direction) -> &mut Fifo {
        match dir {
            Direction::V => &mut self.fifo_v,
            Direction::H => &mut self.fifo_h,
            Direction::D => &mut self.fifo_d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceOp {
    Load { activation: i64 },
    Mac { activation: i64, weight: i64, weight_index: usize },
    Push { direction: Direction, value: i64 },
    Add { value: i64 },
    Drain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub cycle: u64,
    pub pe: [usize; 3],
    pub op: TraceOp,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [z, r, c] = self.pe;
        write!(f, "{}, pe({z},{r},{c}), ", self.cycle)?;
        match self.op {
            TraceOp::Load { activation } => write!(f, "load, a={activation}"),
            TraceOp::Mac {
                activation,
                weight,
                weight_index,
            } => write!(f, "mac, a={activation} w[{weight_index}]={weight}"),
            TraceOp::Push { direction, value } => write!(f, "push-{direction}, v={value}"),
            TraceOp::Add { value } => write!(f, "add, v={value}"),
            TraceOp::Drain => f.write_str("drain, -"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Compute,
    Drain { left: usize },
    Done,
}

/// Outcome of running an array to completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeshRun {
    /// Per PE (row-major `[z, r, c]`), its `K^dims` owned accumulators.
    pub results: Vec<Vec<i64>>,
    pub cycles: u64,
    pub macs: u64,
    pub messages: u64,
    pub peak_fifo: usize,
    /// Cycles lost to full FIFOs.
    pub stalls: u64,
}

#[derive(Debug, Clone)]
pub struct MeshSim {
    extent: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    base: PeCoord,
    activations: Vec<i64>,
    weights: Vec<i64>,
    pes: Vec<PeState>,
    cycle: u64,
    /// MAC steps issued so far; column `c` uses kernel tap `step - c`.
    step: usize,
    /// Cycles the array held its MAC step because a FIFO was full.
    stalls: u64,
    phase: Phase,
    macs: u64,
    messages: u64,
    fifo_d_enabled: bool,
    trace: Option<Vec<TraceEvent>>,
}

impl MeshSim {
    /// `activations` is row-major over `extent`; `weights` is row-major over
    /// `kernel`. `base` locates the array in the engine for error reports.
    pub fn new(
        extent: [usize; 3],
        kernel: [usize; 3],
        stride: [usize; 3],
        activations: Vec<i64>,
        weights: Vec<i64>,
        fifo_capacity: usize,
        base: PeCoord,
    ) -> Self {
        let kvol: usize = kernel.iter().product();
        debug_assert_eq!(activations.len(), extent.iter().product::<usize>());
        debug_assert_eq!(weights.len(), kvol);
        let mut pes = Vec::with_capacity(activations.len());
        for z in 0..extent[0] {
            for r in 0..extent[1] {
                for c in 0..extent[2] {
                    pes.push(PeState {
                        ra: None,
                        rw: None,
                        fifo_v: Fifo::new(fifo_capacity),
                        fifo_h: Fifo::new(fifo_capacity),
                        fifo_d: Fifo::new(fifo_capacity),
                        results: vec![0; kvol],
                        position: [z, r, c],
                    });
                }
            }
        }
        Self {
            extent,
            kernel,
            stride,
            base,
            activations,
            weights,
            pes,
            cycle: 0,
            step: 0,
            stalls: 0,
            phase: Phase::Compute,
            macs: 0,
            messages: 0,
            fifo_d_enabled: kernel[0] > 1 || extent[0] > 1,
            trace: None,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn pe(&self, z: usize, r: usize, c: usize) -> &PeState {
        &self.pes[self.index([z, r, c])]
    }

    pub fn pes(&self) -> &[PeState] {
        &self.pes
    }

    pub fn macs(&self) -> u64 {
        self.macs
    }

    pub fn messages(&self) -> u64 {
        self.messages
    }

    pub fn backpressure_stalls(&self) -> u64 {
        self.stalls
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.take().unwrap_or_default()
    }

    fn index(&self, p: [usize; 3]) -> usize {
        (p[0] * self.extent[1] + p[1]) * self.extent[2] + p[2]
    }

    fn kvol(&self) -> usize {
        self.kernel.iter().product()
    }

    fn record(&mut self, pe: [usize; 3], op: TraceOp) {
        if let Some(t) = &mut self.trace {
            t.push(TraceEvent {
                cycle: self.cycle,
                pe,
                op,
            });
        }
    }

    fn coord(&self, p: [usize; 3]) -> PeCoord {
        PeCoord {
            plane: self.base.plane + p[0],
            row: p[1],
            col: p[2],
            ..self.base
        }
    }

    /// Next hop of a message sitting at `at`, or `None` when `at` owns it.
    fn next_hop(at: [usize; 3], msg: &Message) -> Option<(Direction, [usize; 3])> {
        let dir = Direction::ROUTING_ORDER
            .into_iter()
            .find(|d| at[d.axis()] > msg.dest[d.axis()])?;
        let mut next = at;
        next[dir.axis()] -= 1;
        Some((dir, next))
    }

    fn has_room(&self, at: [usize; 3], msg: &Message) -> bool {
        match Self::next_hop(at, msg) {
            None => true,
            Some((dir, next)) => {
                let f = self.pes[self.index(next)].fifo(dir);
                f.len() < f.capacity()
            }
        }
    }

    /// Accumulate locally or push one hop toward `msg.dest`.
    fn route(&mut self, at: [usize; 3], msg: Message) -> Result<()> {
        let Some((dir, next)) = Self::next_hop(at, &msg) else {
            let here = self.index(at);
            let slot = &mut self.pes[here].results[msg.slot];
            *slot = add(*slot, msg.value)?;
            self.record(at, TraceOp::Add { value: msg.value });
            return Ok(());
        };
        debug_assert!(dir != Direction::D || self.fifo_d_enabled);
        let ni = self.index(next);
        let coord = self.coord(next);
        let fifo = self.pes[ni].fifo_mut(dir);
        if fifo.queue.len() == fifo.capacity {
            return Err(Error::FifoOverflow {
                pe: coord,
                direction: dir,
                depth: fifo.capacity,
            });
        }
        fifo.queue.push_back(msg);
        fifo.peak = fifo.peak.max(fifo.queue.len());
        self.messages += 1;
        self.record(
            at,
            TraceOp::Push {
                direction: dir,
                value: msg.value,
            },
        );
        Ok(())
    }

    fn fifos_empty(&self) -> bool {
        self.pes
            .iter()
            .all(|p| p.fifo_v.is_empty() && p.fifo_h.is_empty() && p.fifo_d.is_empty())
    }

    /// Product destination for PE `at` multiplying kernel tap `w_idx`.
    fn product_message(&self, at: [usize; 3], w_idx: usize, value: i64) -> Message {
        let k = [
            w_idx / (self.kernel[1] * self.kernel[2]),
            (w_idx / self.kernel[2]) % self.kernel[1],
            w_idx % self.kernel[2],
        ];
        let mut dest = [0; 3];
        let mut off = [0; 3];
        for ax in 0..3 {
            dest[ax] = owner(at[ax], k[ax], self.kernel[ax], self.stride[ax]);
            off[ax] = (at[ax] - dest[ax]) * self.stride[ax] + k[ax];
        }
        let slot = (off[0] * self.kernel[1] + off[1]) * self.kernel[2] + off[2];
        Message { value, dest, slot }
    }

    /// One clock edge.
    pub fn advance_cycle(&mut self) -> Result<()> {
        let kvol = self.kvol();
        let cols = self.extent[2];
        match self.phase {
            Phase::Done => {}
            Phase::Drain { left } => {
                if let Some(c) = cols.checked_sub(left) {
                    for z in 0..self.extent[0] {
                        for r in 0..self.extent[1] {
                            self.record([z, r, c], TraceOp::Drain);
                        }
                    }
                }
                self.phase = if left <= 1 {
                    Phase::Done
                } else {
                    Phase::Drain { left: left - 1 }
                };
            }
            Phase::Compute => {
                // Overlap FIFOs first, lowest PE first so that freed slots
                // can take this cycle's pushes. At most one pop per FIFO,
                // and only when the next hop has room.
                for i in 0..self.pes.len() {
                    let at = self.pes[i].position;
                    for dir in Direction::ROUTING_ORDER {
                        let Some(&m) = self.pes[i].fifo(dir).queue.front() else {
                            continue;
                        };
                        if self.has_room(at, &m) {
                            self.pes[i].fifo_mut(dir).queue.pop_front();
                            self.route(at, m)?;
                        }
                    }
                }
                let step = self.step;
                if step < kvol + cols - 1 {
                    // the whole array advances in lockstep; one full FIFO
                    // holds every column back for a cycle
                    let tap = |c: usize| step.checked_sub(c).filter(|&k| k < kvol);
                    let mut ready = true;
                    'check: for i in 0..self.pes.len() {
                        let at = self.pes[i].position;
                        if let Some(k) = tap(at[2]) {
                            let m = self.product_message(at, k, 0);
                            if !self.has_room(at, &m) {
                                ready = false;
                                break 'check;
                            }
                        }
                    }
                    if ready {
                        if step < cols {
                            for z in 0..self.extent[0] {
                                for r in 0..self.extent[1] {
                                    let i = self.index([z, r, step]);
                                    let a = self.activations[i];
                                    self.pes[i].ra = Some(a);
                                    self.record([z, r, step], TraceOp::Load { activation: a });
                                }
                            }
                        }
                        for i in 0..self.pes.len() {
                            let c = self.pes[i].position[2];
                            self.pes[i].rw = tap(c).map(|k| (k, self.weights[k]));
                        }
                        for i in 0..self.pes.len() {
                            let pe = &self.pes[i];
                            let (Some(a), Some((w_idx, w))) = (pe.ra, pe.rw) else {
                                continue;
                            };
                            let at = pe.position;
                            let value = mul(a, w)?;
                            self.macs += 1;
                            self.record(
                                at,
                                TraceOp::Mac {
                                    activation: a,
                                    weight: w,
                                    weight_index: w_idx,
                                },
                            );
                            let m = self.product_message(at, w_idx, value);
                            self.route(at, m)?;
                        }
                        self.step += 1;
                    } else {
                        self.stalls += 1;
                    }
                }
                if self.step == kvol + cols - 1 && self.fifos_empty() {
                    for pe in &mut self.pes {
                        pe.ra = None;
                        pe.rw = None;
                    }
                    self.phase = Phase::Drain { left: cols };
                }
            }
        }
        debug_assert!(self.fifo_d_enabled || self.pes.iter().all(|p| p.fifo_d.is_empty()));
        self.cycle += 1;
        Ok(())
    }

    pub fn run(mut self) -> Result<(MeshRun, Vec<TraceEvent>)> {
        while !self.is_done() {
            self.advance_cycle()?;
        }
        let peak_fifo = self
            .pes
            .iter()
            .flat_map(|p| [p.fifo_v.peak, p.fifo_h.peak, p.fifo_d.peak])
            .max()
            .unwrap_or(0);
        let trace = self.take_trace();
        Ok((
            MeshRun {
                results: self.pes.into_iter().map(|p| p.results).collect(),
                cycles: self.cycle,
                macs: self.macs,
                messages: self.messages,
                peak_fifo,
                stalls: self.stalls,
            },
            trace,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::tile_messages;

    fn small(extent: [usize; 3], kernel: [usize; 3], stride: [usize; 3]) -> MeshSim {
        let n: usize = extent.iter().product();
        let kv: usize = kernel.iter().product();
        MeshSim::new(
            extent,
            kernel,
            stride,
            (1..=n as i64).collect(),
            (1..=kv as i64).map(|w| w * 10).collect(),
            64,
            PeCoord::default(),
        )
    }

    #[test]
    fn first_stage_loads_column_zero() {
        let mut m = small([1, 3, 3], [1, 3, 3], [1, 2, 2]);
        m.advance_cycle().unwrap();
        for r in 0..3 {
            let pe = m.pe(0, r, 0);
            assert_eq!(pe.ra, Some(1 + 3 * r as i64));
            assert_eq!(pe.rw, Some((0, 10)));
            assert_eq!(m.pe(0, r, 1).ra, None);
        }
    }

    #[test]
    fn second_stage_shifts_weight_right() {
        let mut m = small([1, 3, 3], [1, 3, 3], [1, 2, 2]);
        m.advance_cycle().unwrap();
        m.advance_cycle().unwrap();
        for r in 0..3 {
            assert_eq!(m.pe(0, r, 1).rw, Some((0, 10)));
            assert_eq!(m.pe(0, r, 0).rw, Some((1, 20)));
            assert!(m.pe(0, r, 1).ra.is_some());
        }
    }

    #[test]
    fn idle_advance_only_counts() {
        let mut m = small([1, 1, 1], [1, 2, 2], [1, 1, 1]);
        while !m.is_done() {
            m.advance_cycle().unwrap();
        }
        let before = m.pes().to_vec();
        let c = m.cycle();
        m.advance_cycle().unwrap();
        assert_eq!(m.cycle(), c + 1);
        assert_eq!(m.pes(), &before[..]);
    }

    #[test]
    fn messages_match_analytic_count() {
        for (e, k, s) in [
            ([3, 3, 3], [3; 3], [2; 3]),
            ([2, 4, 3], [4; 3], [1; 3]),
            ([1, 4, 4], [1, 5, 5], [1, 2, 2]),
            ([1, 4, 4], [1, 3, 3], [1, 3, 3]),
        ] {
            let (run, _) = small(e, k, s).run().unwrap();
            assert_eq!(run.messages, tile_messages(e, k, s), "{e:?} {k:?} {s:?}");
            assert_eq!(run.macs, (e.iter().product::<usize>() * k.iter().product::<usize>()) as u64);
        }
    }

    #[test]
    fn trace_lines() {
        let m = small([1, 1, 2], [1, 2, 2], [1, 1, 1]).with_trace();
        let (_, trace) = m.run().unwrap();
        let first = alloc::format!("{}", trace[0]);
        assert_eq!(first, "0, pe(0,0,0), load, a=1");
        assert!(trace.iter().any(|e| matches!(e.op, TraceOp::Push { direction: Direction::H, .. })));
    }

    #[test]
    fn full_fifo_holds_the_array() {
        let tight = MeshSim::new([1, 1, 4], [1, 1, 4], [1, 1, 1], vec![1; 4], vec![1; 4], 1, PeCoord::default());
        let roomy = MeshSim::new([1, 1, 4], [1, 1, 4], [1, 1, 1], vec![1; 4], vec![1; 4], 64, PeCoord::default());
        let (a, _) = tight.run().unwrap();
        let (b, _) = roomy.run().unwrap();
        assert_eq!(a.results, b.results);
        assert_eq!(a.peak_fifo, 1);
        assert!(a.stalls > 0 && b.stalls == 0);
        assert!(a.cycles > b.cycles);
    }
}
