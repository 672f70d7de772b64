//! Streaming simulation of a space-bounded offline machine by per-position hop tables.
//!
//! For tape position `k`, `h_k` maps every memory configuration `x` to where the
//! machine first reaches position `k+1` when started in `x` at `k` (plus what it
//! printed meanwhile), or to a terminal [`HopEntry`] when it never gets there. `h_k` is
//! computed from `h_{k-1}` and the symbol at `k` alone, so the input is read once,
//! left to right, after a blank prefix that announces its length.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tm::{Limits, Move, TmError, TmSpec, UnaryTape, Variant, Verdict, run_on_tape, MemoryConfig};

/// Largest work-tape bound the compiler will enumerate.
pub const F_CAP: usize = 14;

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("{f} work cells give {count} configurations ({states} states x {heads} heads x 2^{f}); cap is f <= {cap}")]
    ConfigCap { f: usize, states: usize, heads: usize, count: u128, cap: usize },
    #[error("expected an offline machine, got {0}")]
    NotOffline(Variant),
    #[error("f(n) machine: {0}")]
    FOfN(String),
    #[error("input longer than the {announced} symbols announced by the blank prefix")]
    InputTooLong { announced: usize },
    #[error("no transition applies on the run at position {position}")]
    Stuck { position: usize },
    #[error(transparent)]
    Tm(#[from] TmError),
}

/// Dense indexing of memory configurations with at most `f` binary work cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfigSpace {
    pub states: usize,
    pub f: usize,
    pub heads: usize,
}

impl ConfigSpace {
    pub fn new(states: usize, f: usize) -> Result<Self, CompileError> {
        let heads = f.max(1);
        if f > F_CAP {
            let count = states as u128 * heads as u128 * (1u128 << f.min(100));
            return Err(CompileError::ConfigCap { f, states, heads, count, cap: F_CAP });
        }
        Ok(ConfigSpace { states, f, heads })
    }

    /// `states · max(f,1) · 2^f`
    pub fn count(&self) -> usize {
        self.states * self.heads << self.f
    }

    pub fn index(&self, state: usize, head: usize, bits: u32) -> u32 {
        (((state * self.heads + head) << self.f) | bits as usize) as u32
    }

    pub fn decode(&self, idx: u32) -> (usize, usize, u32) {
        let idx = idx as usize;
        let bits = (idx & ((1 << self.f) - 1)) as u32;
        let rest = idx >> self.f;
        (rest / self.heads, rest % self.heads, bits)
    }

    pub fn to_memory(&self, idx: u32) -> MemoryConfig {
        let (state, head, bits) = self.decode(idx);
        let mut cells: Vec<bool> = (0..self.f).map(|i| bits >> i & 1 == 1).collect();
        while cells.last() == Some(&false) {
            cells.pop();
        }
        MemoryConfig { state, head, cells }
    }

    pub fn from_memory(&self, m: &MemoryConfig) -> Option<u32> {
        if m.state >= self.states || m.head >= self.heads || m.cells.len() > self.f {
            return None;
        }
        let bits = m.cells.iter().enumerate().fold(0u32, |acc, (i, &b)| acc | (b as u32) << i);
        Some(self.index(m.state, m.head, bits))
    }
}

/// Every memory configuration within `f_cells` work cells, in index order.
pub fn enumerate_configs(spec: &TmSpec, f_cells: usize) -> Result<Vec<MemoryConfig>, CompileError> {
    let space = ConfigSpace::new(spec.num_states(), f_cells)?;
    Ok((0..space.count() as u32).map(|i| space.to_memory(i)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum HopEntry {
    /// First arrival at the next position.
    Exit { config: u32, output: String },
    /// Halting configuration reached before moving on.
    Halt { config: u32, output: String },
    Loop,
    /// The work head would leave the `f` cells after `printed` output symbols.
    Overflow { printed: usize },
    /// No transition applies after `printed` output symbols; an error only if the real run gets here.
    Stuck { printed: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HopTable {
    pub position: usize,
    pub entries: Vec<HopEntry>,
}

/// One `g` step: the result is either final or a return to the same position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GStep {
    Return { config: u32, output: String },
    Final(HopEntry),
}

/// Shared per-machine data for hop computations.
#[derive(Debug, Clone, Copy)]
pub struct HopContext<'a> {
    pub spec: &'a TmSpec,
    pub space: ConfigSpace,
    pub output_cap: usize,
}

impl HopContext<'_> {
    /// From `x` at position `k` (`h_prev` is `h_{k-1}`, absent at `k = 0`), run until the
    /// head leaves `k`. Stay moves are simulated directly; a left move is resolved
    /// through `h_prev`. At the last position a right move clamps like a stay.
    pub fn g_step(&self, h_prev: Option<&HopTable>, sym: usize, x: u32, last: bool) -> Result<GStep, TmError> {
        let sp = self.space;
        let (mut state, mut head, mut bits) = sp.decode(x);
        let mut output = String::new();
        let mut local = 0usize;
        loop {
            if self.spec.is_halting(state) {
                return Ok(GStep::Final(HopEntry::Halt { config: sp.index(state, head, bits), output }));
            }
            let bit = bits >> head & 1 == 1;
            let Some(&act) = self.spec.action(state, sym, bit) else {
                return Ok(GStep::Final(HopEntry::Stuck { printed: output.chars().count() }));
            };
            if act.uses_work() && head >= sp.f {
                return Ok(GStep::Final(HopEntry::Overflow { printed: output.chars().count() }));
            }
            if let Some(b) = act.write {
                bits = (bits & !(1 << head)) | (b as u32) << head;
            }
            match act.move_work {
                Move::Left => head = head.saturating_sub(1),
                Move::Right if head + 1 >= sp.f => {
                    return Ok(GStep::Final(HopEntry::Overflow { printed: output.chars().count() }))
                }
                Move::Right => head += 1,
                Move::Stay => {}
            }
            if let Some(c) = act.emit {
                output.push(c);
                if output.chars().count() > self.output_cap {
                    return Ok(GStep::Final(HopEntry::Loop));
                }
            }
            state = act.next;
            let here = sp.index(state, head, bits);
            let move_in = match (act.move_in, h_prev) {
                (Move::Right, _) if last => Move::Stay,
                (Move::Left, None) => Move::Stay,
                (m, _) => m,
            };
            match move_in {
                Move::Right => return Ok(GStep::Final(HopEntry::Exit { config: here, output })),
                Move::Left => {
                    let prev = h_prev.expect("left move needs a previous table");
                    return Ok(match &prev.entries[here as usize] {
                        HopEntry::Exit { config, output: more } => {
                            output.push_str(more);
                            if output.chars().count() > self.output_cap {
                                GStep::Final(HopEntry::Loop)
                            } else {
                                GStep::Return { config: *config, output }
                            }
                        }
                        HopEntry::Halt { config, output: more } => {
                            output.push_str(more);
                            if output.chars().count() > self.output_cap {
                                GStep::Final(HopEntry::Loop)
                            } else {
                                GStep::Final(HopEntry::Halt { config: *config, output })
                            }
                        }
                        other => GStep::Final(self.after(output.chars().count(), other.clone())),
                    });
                }
                Move::Stay => {
                    // a stay-only cycle revisits a configuration within count() steps
                    local += 1;
                    if local > sp.count() {
                        return Ok(GStep::Final(HopEntry::Loop));
                    }
                }
            }
        }
    }

    /// `h_k(x)`: iterate `g` from `x`, the fast pointer taking two steps per round and
    /// carrying the printed output; meeting pointers or too much output give a loop marker.
    pub fn hop(&self, h_prev: Option<&HopTable>, sym: usize, x: u32, last: bool) -> Result<HopEntry, TmError> {
        let mut slow = x;
        let mut fast = x;
        let mut printed = String::new();
        loop {
            for _ in 0..2 {
                match self.g_step(h_prev, sym, fast, last)? {
                    GStep::Final(HopEntry::Exit { config, output }) => {
                        printed.push_str(&output);
                        return Ok(self.capped(HopEntry::Exit { config, output: printed }));
                    }
                    GStep::Final(HopEntry::Halt { config, output }) => {
                        printed.push_str(&output);
                        return Ok(self.capped(HopEntry::Halt { config, output: printed }));
                    }
                    GStep::Final(other) => return Ok(self.after(printed.chars().count(), other)),
                    GStep::Return { config, output } => {
                        printed.push_str(&output);
                        if printed.chars().count() > self.output_cap {
                            return Ok(HopEntry::Loop);
                        }
                        fast = config;
                    }
                }
            }
            slow = match self.g_step(h_prev, sym, slow, last)? {
                GStep::Return { config, .. } => config,
                _ => unreachable!("the fast pointer already passed this point"),
            };
            if slow == fast {
                return Ok(HopEntry::Loop);
            }
        }
    }

    /// A failure entry reached after `before` more output symbols; past the cap the output limit comes first.
    fn after(&self, before: usize, e: HopEntry) -> HopEntry {
        match e {
            HopEntry::Overflow { printed } | HopEntry::Stuck { printed } if before + printed > self.output_cap => HopEntry::Loop,
            HopEntry::Overflow { printed } => HopEntry::Overflow { printed: before + printed },
            HopEntry::Stuck { printed } => HopEntry::Stuck { printed: before + printed },
            other => other,
        }
    }

    fn capped(&self, e: HopEntry) -> HopEntry {
        match &e {
            HopEntry::Exit { output, .. } | HopEntry::Halt { output, .. } if output.chars().count() > self.output_cap => HopEntry::Loop,
            _ => e,
        }
    }

    /// The full table for position `position` reading `sym`.
    pub fn advance(&self, h_prev: Option<&HopTable>, sym: usize, position: usize) -> Result<HopTable, TmError> {
        let entries = (0..self.space.count() as u32)
            .map(|x| self.hop(h_prev, sym, x, false))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(HopTable { position, entries })
    }
}

/// An offline machine ready to be streamed; `f_of` computes the work bound from `1^n`.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub spec: TmSpec,
    pub f_of: TmSpec,
    pub output_cap: usize,
    pub f_of_limits: Limits,
}

impl Compiled {
    pub fn new(spec: TmSpec, f_of: TmSpec) -> Result<Self, CompileError> {
        if spec.variant != Variant::Offline {
            return Err(CompileError::NotOffline(spec.variant));
        }
        if f_of.variant != Variant::Offline {
            return Err(CompileError::NotOffline(f_of.variant));
        }
        let output_cap = spec.output_cap.unwrap_or(1).max(1);
        let f_of_limits = f_of.default_limits();
        Ok(Compiled { spec, f_of, output_cap, f_of_limits })
    }

    /// `f(n)`, by running the `f_of` machine on a virtual `1^n`.
    pub fn f_of_n(&self, n: usize) -> Result<usize, CompileError> {
        let r = run_on_tape(&self.f_of, &UnaryTape::new(&self.f_of, n)?, &self.f_of_limits)?;
        if r.verdict != Verdict::Accept {
            return Err(CompileError::FOfN(format!("ended with {} on n = {n}", r.verdict)));
        }
        usize::from_str_radix(&r.output, 2).map_err(|_| CompileError::FOfN(format!("output {:?} is not binary", r.output)))
    }

    pub fn streamer(&self) -> Streamer<'_> {
        Streamer {
            compiled: self,
            blanks: 0,
            run: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceRecord {
    pub position: usize,
    pub table_size: usize,
    pub cells_used: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub n: usize,
    pub f: usize,
    pub configs: usize,
    pub output_cap: usize,
    /// Bits for the two live hop tables.
    pub table_bits: u64,
    /// Counters, the tracked entry configuration, the output so far and the `g` iteration state.
    pub scratch_bits: u64,
    pub total_bits: u64,
    /// `total_bits / (max(f,1) · 2^f · output_cap)`
    pub constant: f64,
}

impl fmt::Display for ResourceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n={} f={} configs={} output_cap={} table_bits={} scratch_bits={} total_bits={} C={:.3}",
            self.n, self.f, self.configs, self.output_cap, self.table_bits, self.scratch_bits, self.total_bits, self.constant
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamResult {
    pub verdict: Verdict,
    pub output: String,
    pub resources: ResourceReport,
    pub log: Vec<ResourceRecord>,
}

fn bits_for(values: usize) -> u64 {
    (usize::BITS - values.saturating_sub(1).leading_zeros()) as u64
}

#[derive(Debug, Clone)]
struct Running {
    n: usize,
    f: usize,
    ctx_space: ConfigSpace,
    table: HopTable,
    /// Configuration in which the machine first enters the current position.
    entry: u32,
    output: String,
    done: Option<Verdict>,
    fed: usize,
    stuck: bool,
    log: Vec<ResourceRecord>,
}

/// Consumes `n` blanks, then `n` input symbols, then the end of input.
#[derive(Debug, Clone)]
pub struct Streamer<'a> {
    compiled: &'a Compiled,
    blanks: usize,
    run: Option<Running>,
}

impl<'a> Streamer<'a> {
    fn ctx(&self, space: ConfigSpace) -> HopContext<'a> {
        HopContext { spec: &self.compiled.spec, space, output_cap: self.compiled.output_cap }
    }

    pub fn blank(&mut self) -> Result<(), CompileError> {
        if self.run.is_some() {
            return Err(CompileError::Tm(TmError::UnknownSymbol(crate::tm::BLANK)));
        }
        self.blanks += 1;
        Ok(())
    }

    fn start(&mut self) -> Result<&mut Running, CompileError> {
        if self.run.is_none() {
            let n = self.blanks;
            let f = self.compiled.f_of_n(n)?;
            let space = ConfigSpace::new(self.compiled.spec.num_states(), f)?;
            // position 0 holds the left blank; left moves there clamp
            let table = self.ctx(space).advance(None, 0, 0)?;
            let entry = space.index(self.compiled.spec.initial, 0, 0);
            let mut run = Running { n, f, ctx_space: space, table, entry, output: String::new(), done: None, fed: 0, stuck: false, log: Vec::new() };
            run.log.push(ResourceRecord { position: 0, table_size: space.count(), cells_used: 0 });
            self.run = Some(run);
            let bits = self.memory_bits();
            self.run.as_mut().expect("just set").log[0].cells_used = bits;
        }
        Ok(self.run.as_mut().expect("started"))
    }

    /// Consume one input symbol.
    pub fn feed(&mut self, c: char) -> Result<(), CompileError> {
        let sym = self
            .compiled
            .spec
            .symbol_index(c)
            .filter(|&i| i >= 2)
            .ok_or(TmError::UnknownSymbol(c))?;
        let ctx = {
            let run = self.start()?;
            // the blank prefix bounds the input length
            if run.fed == run.n {
                return Err(CompileError::InputTooLong { announced: run.n });
            }
            run.fed += 1;
            if run.done.is_some() {
                return Ok(());
            }
            run.ctx_space
        };
        let ctx = self.ctx(ctx);
        let run = self.run.as_mut().expect("started");
        let position = run.fed;
        let table = ctx.advance(Some(&run.table), sym, position)?;
        let hop = table.entries[run.entry as usize].clone();
        run.table = table;
        Self::follow(&ctx, run, hop);
        if run.stuck {
            return Err(CompileError::Stuck { position });
        }
        let bits = self.memory_bits();
        let run = self.run.as_mut().expect("started");
        run.log.push(ResourceRecord { position, table_size: run.table.entries.len(), cells_used: bits });
        Ok(())
    }

    fn follow(ctx: &HopContext<'_>, run: &mut Running, hop: HopEntry) {
        match hop {
            HopEntry::Exit { config, output } => {
                run.output.push_str(&output);
                run.entry = config;
            }
            HopEntry::Halt { config, output } => {
                run.output.push_str(&output);
                let (state, _, _) = ctx.space.decode(config);
                run.done = Some(if state == ctx.spec.accept { Verdict::Accept } else { Verdict::Reject });
            }
            HopEntry::Loop => run.done = Some(Verdict::Loop),
            HopEntry::Overflow { printed } | HopEntry::Stuck { printed } if run.output.chars().count() + printed > ctx.output_cap => {
                run.done = Some(Verdict::LimitExceeded(crate::tm::Limit::Output))
            }
            HopEntry::Overflow { .. } => run.done = Some(Verdict::LimitExceeded(crate::tm::Limit::Space)),
            HopEntry::Stuck { .. } => run.stuck = true,
        }
        if run.done.is_none() || matches!(run.done, Some(Verdict::Accept | Verdict::Reject)) {
            if run.output.chars().count() > ctx.output_cap {
                run.done = Some(Verdict::LimitExceeded(crate::tm::Limit::Output));
            }
        }
    }

    /// Hash-free snapshot of everything the streamer holds: usable as a state key.
    pub fn state_key(&self) -> Vec<u8> {
        let mut key = Vec::new();
        match &self.run {
            None => key.extend_from_slice(&(self.blanks as u64).to_le_bytes()),
            Some(run) => {
                key.extend_from_slice(&(run.fed as u64).to_le_bytes());
                key.extend_from_slice(&run.entry.to_le_bytes());
                key.push(match run.done {
                    None => 0,
                    Some(Verdict::Accept) => 1,
                    Some(Verdict::Reject) => 2,
                    Some(Verdict::Loop) => 3,
                    Some(Verdict::LimitExceeded(_)) => 4,
                });
                key.extend_from_slice(run.output.as_bytes());
                key.push(0xff);
                for e in &run.table.entries {
                    match e {
                        HopEntry::Exit { config, output } | HopEntry::Halt { config, output } => {
                            key.push(matches!(e, HopEntry::Halt { .. }) as u8);
                            key.extend_from_slice(&config.to_le_bytes());
                            key.extend_from_slice(output.as_bytes());
                            key.push(0xff);
                        }
                        HopEntry::Loop => key.push(2),
                        HopEntry::Overflow { printed } => key.extend_from_slice(&[3, *printed as u8]),
                        HopEntry::Stuck { printed } => key.extend_from_slice(&[4, *printed as u8]),
                    }
                }
            }
        }
        key
    }

    /// Bits held right now: two tables plus scratch.
    pub fn memory_bits(&self) -> u64 {
        match &self.run {
            None => bits_for(self.blanks + 1),
            Some(run) => self.report_for(run).total_bits,
        }
    }

    fn report_for(&self, run: &Running) -> ResourceReport {
        let configs = run.ctx_space.count();
        let cap = self.compiled.output_cap;
        let out_syms = self.compiled.spec.output_alphabet().map_or(1, |a| a.len().max(1));
        let out_bits = cap as u64 * bits_for(out_syms + 1) + bits_for(cap + 1);
        let config_bits = bits_for(configs);
        let entry_bits = bits_for(configs + 3) + out_bits;
        let table_bits = 2 * configs as u64 * entry_bits;
        let counters = 2 * bits_for(2 * run.n + 3) + bits_for(run.f + 1);
        let iteration = 2 * config_bits + out_bits + bits_for(configs + 1);
        let scratch_bits = counters + config_bits + out_bits + iteration;
        let total_bits = table_bits + scratch_bits;
        let denom = (run.f.max(1) << run.f) as f64 * cap as f64;
        ResourceReport {
            n: run.n,
            f: run.f,
            configs,
            output_cap: cap,
            table_bits,
            scratch_bits,
            total_bits,
            constant: total_bits as f64 / denom,
        }
    }

    /// Read the end marker and report.
    pub fn finish(mut self) -> Result<StreamResult, CompileError> {
        self.start()?;
        let space = self.run.as_ref().expect("started").ctx_space;
        let ctx = self.ctx(space);
        let run = self.run.as_mut().expect("started");
        if run.done.is_none() {
            // the end marker: right moves clamp, so only a halt or a loop can follow
            let hop = ctx.hop(Some(&run.table), 1, run.entry, true)?;
            Self::follow(&ctx, run, hop);
            if run.stuck {
                return Err(CompileError::Stuck { position: run.n + 1 });
            }
        }
        let run = self.run.as_ref().expect("started");
        let verdict = run.done.unwrap_or(Verdict::Loop);
        let resources = self.report_for(run);
        Ok(StreamResult { verdict, output: run.output.clone(), resources, log: run.log.clone() })
    }
}

/// Stream `input` through the compiled machine: `|input|` blanks, the input, the end marker.
pub fn stream(compiled: &Compiled, input: &str) -> Result<StreamResult, CompileError> {
    let mut s = compiled.streamer();
    for _ in input.chars() {
        s.blank()?;
    }
    for c in input.chars() {
        s.feed(c)?;
    }
    s.finish()
}
