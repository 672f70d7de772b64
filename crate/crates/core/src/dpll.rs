//! Plain DPLL driven by streaming heuristics.
//!
//! A heuristic reads the canonical serialization of the current formula once, left
//! to right, through a state it can expose at any point. Heuristics come in two
//! halves: a variable chooser `A` and a value chooser `B` that reads the formula
//! followed by the decimal id `A` picked. [`combine`] folds the two into a single
//! heuristic `H` that feeds `B` the digits of `A`'s answer one index at a time.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{serialize, CnfFormula, Var};
use crate::offline2online::{CompileError, Compiled, Streamer};
use crate::tm::{self, Config, Move, Tape, TmError, TmSpec, Variant, Verdict};

pub const DEFAULT_BUDGET: u64 = 1 << 20;

pub type StateKey = Vec<u8>;

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error("heuristic chose variable {0}, which does not occur in the formula")]
    EliminatedVariable(Var),
    #[error("variable chooser found no variable")]
    NoVariable,
    #[error("variable chooser output {len} symbols, more than the bound {bound}")]
    OutputTooLong { len: usize, bound: usize },
    #[error("unknown heuristic {0:?}")]
    Unknown(String),
    #[error("machine-backed heuristic: {0}")]
    Machine(String),
    #[error(transparent)]
    Tm(#[from] TmError),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeuristicDecision {
    pub var: Var,
    pub value: bool,
}

pub trait VarStream {
    fn feed(&mut self, bytes: &[u8]);
    fn state(&self) -> StateKey;
    /// The chosen variable, a pure function of the current state.
    fn output(&self) -> Result<Var, HeuristicError>;
}

pub trait VariableChooser: Send + Sync {
    fn name(&self) -> String;
    fn start(&self, input_len: usize) -> Box<dyn VarStream + '_>;
}

pub trait ValueStream {
    fn feed(&mut self, bytes: &[u8]);
    fn state(&self) -> StateKey;
    fn finish(&mut self) -> Result<bool, HeuristicError>;
}

pub trait ValueChooser: Send + Sync {
    fn name(&self) -> String;
    /// Declared width of the streaming state.
    fn state_bits(&self) -> u32;
    fn start(&self, input_len: usize) -> Box<dyn ValueStream + '_>;
}

pub trait HeuristicStream {
    fn feed(&mut self, bytes: &[u8]);
    fn state(&self) -> StateKey;
    fn finish(&mut self) -> Result<HeuristicDecision, HeuristicError>;
}

/// A heuristic choosing both variable and value from one pass over the formula.
pub trait BoundedHeuristic: Send + Sync {
    fn name(&self) -> String;
    /// Declared state width of the value-choosing part.
    fn state_bits(&self) -> u32;
    /// `input_len` bounds the input and sets the memory budget; DPLL passes the root formula length.
    fn start(&self, input_len: usize) -> Box<dyn HeuristicStream + '_>;

    fn decide(&self, bytes: &[u8]) -> Result<HeuristicDecision, HeuristicError> {
        self.decide_within(bytes, bytes.len())
    }

    /// Decide on `bytes` with the memory bound set by a length-`n` input.
    fn decide_within(&self, bytes: &[u8], n: usize) -> Result<HeuristicDecision, HeuristicError> {
        let mut s = self.start(n.max(bytes.len()));
        s.feed(bytes);
        s.finish()
    }
}

/// Splits the body of a serialization into signed literals; the header line is skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
struct LitTokens {
    past_header: bool,
    neg: bool,
    acc: u64,
    digits: bool,
}

impl LitTokens {
    fn push(&mut self, b: u8) -> Option<i64> {
        if !self.past_header {
            self.past_header = b == b'\n';
            return None;
        }
        match b {
            b'-' => self.neg = true,
            b'0'..=b'9' => {
                self.acc = self.acc.saturating_mul(10).saturating_add((b - b'0') as u64);
                self.digits = true;
            }
            _ => {
                let lit = self.digits.then(|| if self.neg { -(self.acc as i64) } else { self.acc as i64 });
                self.neg = false;
                self.acc = 0;
                self.digits = false;
                return lit.filter(|&l| l != 0);
            }
        }
        None
    }

    fn key(&self, out: &mut Vec<u8>) {
        out.push(self.past_header as u8 | (self.neg as u8) << 1 | (self.digits as u8) << 2);
        out.extend_from_slice(&self.acc.to_le_bytes());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRule {
    /// Smallest variable id occurring.
    Lowest,
    /// Variable of the first literal.
    FirstSeen,
    /// Variable of the last literal.
    LastSeen,
}

impl VarRule {
    pub fn parse(s: &str) -> Option<VarRule> {
        match s {
            "lowest" => Some(VarRule::Lowest),
            "first-seen" => Some(VarRule::FirstSeen),
            "last-seen" => Some(VarRule::LastSeen),
            _ => None,
        }
    }
}

impl VariableChooser for VarRule {
    fn name(&self) -> String {
        match self {
            VarRule::Lowest => "lowest",
            VarRule::FirstSeen => "first-seen",
            VarRule::LastSeen => "last-seen",
        }
        .to_string()
    }

    fn start(&self, _input_len: usize) -> Box<dyn VarStream + '_> {
        Box::new(VarRuleStream { rule: *self, tokens: LitTokens::default(), chosen: None })
    }
}

struct VarRuleStream {
    rule: VarRule,
    tokens: LitTokens,
    chosen: Option<Var>,
}

impl VarStream for VarRuleStream {
    fn feed(&mut self, bytes: &[u8]) {
        for &b in bytes {
            if self.rule == VarRule::FirstSeen && self.chosen.is_some() {
                return;
            }
            if let Some(lit) = self.tokens.push(b) {
                let v = lit.unsigned_abs() as Var;
                self.chosen = Some(match (self.rule, self.chosen) {
                    (VarRule::Lowest, Some(c)) => c.min(v),
                    (VarRule::FirstSeen, Some(c)) => c,
                    _ => v,
                });
            }
        }
    }

    fn state(&self) -> StateKey {
        let mut key = Vec::with_capacity(16);
        key.extend_from_slice(&self.chosen.unwrap_or(0).to_le_bytes());
        // a settled first-seen choice ignores everything after it
        if !(self.rule == VarRule::FirstSeen && self.chosen.is_some()) {
            self.tokens.key(&mut key);
        }
        key
    }

    fn output(&self) -> Result<Var, HeuristicError> {
        self.chosen.ok_or(HeuristicError::NoVariable)
    }
}

/// Always the same value; no state.
#[derive(Debug, Clone, Copy)]
pub struct ConstValue(pub bool);

impl ValueChooser for ConstValue {
    fn name(&self) -> String {
        format!("const-{}", self.0)
    }
    fn state_bits(&self) -> u32 {
        0
    }
    fn start(&self, _input_len: usize) -> Box<dyn ValueStream + '_> {
        Box::new(ConstStream(self.0))
    }
}

struct ConstStream(bool);

impl ValueStream for ConstStream {
    fn feed(&mut self, _bytes: &[u8]) {}
    fn state(&self) -> StateKey {
        Vec::new()
    }
    fn finish(&mut self) -> Result<bool, HeuristicError> {
        Ok(self.0)
    }
}

const SKETCH_KEY: u64 = 0x9e37_79b9_7f4a_7c15;

fn keyed_byte_hash(b: u8, key: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = (b as u64 ^ key).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `k`-bit rolling sketch: rotate by one, XOR in the keyed hash of the byte folded to
/// `k` bits. The value is the sketch's parity. With `last_digit`, the parity is also
/// XORed with the parity of the last byte read.
#[derive(Debug, Clone, Copy)]
pub struct ParitySketch {
    pub k: u32,
    pub key: u64,
    pub last_digit: bool,
}

impl ParitySketch {
    pub fn new(k: u32) -> Self {
        assert!((1..=32).contains(&k), "sketch width must be 1..=32");
        ParitySketch { k, key: SKETCH_KEY, last_digit: false }
    }

    fn fold(&self, h: u64) -> u32 {
        let mask = (1u64 << self.k) - 1;
        let mut out = 0u64;
        let mut h = h;
        while h != 0 {
            out ^= h & mask;
            h >>= self.k;
        }
        out as u32
    }
}

impl ValueChooser for ParitySketch {
    fn name(&self) -> String {
        if self.last_digit {
            format!("sketch-xor-last-digit:{}", self.k)
        } else {
            format!("parity-sketch:{}", self.k)
        }
    }
    fn state_bits(&self) -> u32 {
        self.k + self.last_digit as u32
    }
    fn start(&self, _input_len: usize) -> Box<dyn ValueStream + '_> {
        let mut table = [0u32; 256];
        for (b, t) in table.iter_mut().enumerate() {
            *t = self.fold(keyed_byte_hash(b as u8, self.key));
        }
        Box::new(SketchStream { cfg: *self, table, s: 0, last: false })
    }
}

struct SketchStream {
    cfg: ParitySketch,
    table: [u32; 256],
    s: u32,
    last: bool,
}

impl ValueStream for SketchStream {
    fn feed(&mut self, bytes: &[u8]) {
        let k = self.cfg.k;
        let mask = if k == 32 { u32::MAX } else { (1u32 << k) - 1 };
        for &b in bytes {
            let rot = ((self.s << 1) | (self.s >> (k - 1))) & mask;
            self.s = rot ^ self.table[b as usize];
            self.last = b & 1 == 1;
        }
    }
    fn state(&self) -> StateKey {
        let mut key = self.s.to_le_bytes().to_vec();
        if self.cfg.last_digit {
            key.push(self.last as u8);
        }
        key
    }
    fn finish(&mut self) -> Result<bool, HeuristicError> {
        Ok((self.s.count_ones() % 2 == 1) ^ (self.cfg.last_digit && self.last))
    }
}

/// An online machine reading bytes as symbols; acceptance means value 1.
#[derive(Debug, Clone)]
pub struct MachineValue {
    pub label: String,
    pub spec: Arc<TmSpec>,
    pub limits: tm::Limits,
}

impl MachineValue {
    pub fn new(label: impl Into<String>, spec: TmSpec) -> Result<Self, HeuristicError> {
        if spec.variant != Variant::Online {
            return Err(HeuristicError::Machine(format!("expected an online machine, got {}", spec.variant)));
        }
        let limits = spec.default_limits();
        Ok(MachineValue { label: label.into(), spec: Arc::new(spec), limits })
    }
}

/// One-cell view used to step an online machine symbol by symbol.
struct OneCell(usize);

impl Tape for OneCell {
    fn len(&self) -> usize {
        2
    }
    fn at(&self, _pos: usize) -> usize {
        self.0
    }
    fn start(&self) -> usize {
        0
    }
}

impl ValueChooser for MachineValue {
    fn name(&self) -> String {
        format!("tm:{}", self.label)
    }
    fn state_bits(&self) -> u32 {
        let f = self.spec.space.unwrap_or(0);
        let configs = (self.spec.num_states() as u64) * (f.max(1) as u64) << f;
        64 - configs.saturating_sub(1).leading_zeros()
    }
    fn start(&self, _input_len: usize) -> Box<dyn ValueStream + '_> {
        let cfg = Config::initial(&self.spec, &OneCell(0));
        Box::new(MachineStream { m: self, cfg, error: None })
    }
}

struct MachineStream<'a> {
    m: &'a MachineValue,
    cfg: Config,
    error: Option<String>,
}

impl MachineStream<'_> {
    /// Run on one symbol until it is consumed or the machine halts.
    fn consume(&mut self, sym: usize, is_end: bool) {
        let spec = &*self.m.spec;
        let tape = OneCell(sym);
        while self.error.is_none() && !spec.is_halting(self.cfg.state) {
            if self.cfg.steps >= self.m.limits.steps {
                self.error = Some("step limit".into());
                return;
            }
            self.cfg.in_pos = 0;
            let consumes = spec
                .action(self.cfg.state, sym, self.cfg.work_bit())
                .is_some_and(|a| a.move_in == Move::Right);
            if let Err(e) = tm::step(spec, &tape, &mut self.cfg, &self.m.limits) {
                self.error = Some(e.to_string());
                return;
            }
            if consumes && !is_end {
                return;
            }
        }
    }
}

impl ValueStream for MachineStream<'_> {
    fn feed(&mut self, bytes: &[u8]) {
        for &b in bytes {
            if self.error.is_some() || self.m.spec.is_halting(self.cfg.state) {
                return;
            }
            match self.m.spec.symbol_index(b as char).filter(|&i| i >= 2) {
                Some(sym) => self.consume(sym, false),
                None => self.error = Some(format!("byte {:?} is not in the input alphabet", b as char)),
            }
        }
    }
    fn state(&self) -> StateKey {
        let mem = self.cfg.memory();
        let mut key = Vec::with_capacity(mem.cells.len() + 16);
        key.extend_from_slice(&(mem.state as u32).to_le_bytes());
        key.extend_from_slice(&(mem.head as u32).to_le_bytes());
        key.extend(mem.cells.iter().map(|&b| b as u8));
        key.push(self.error.is_some() as u8);
        key
    }
    fn finish(&mut self) -> Result<bool, HeuristicError> {
        if !self.m.spec.is_halting(self.cfg.state) {
            self.consume(1, true);
        }
        if let Some(e) = &self.error {
            return Err(HeuristicError::Machine(e.clone()));
        }
        Ok(self.cfg.state == self.m.spec.accept)
    }
}

/// An offline machine run through the offline-to-online compiler.
#[derive(Debug, Clone)]
pub struct CompiledValue {
    pub label: String,
    pub compiled: Arc<Compiled>,
}

impl CompiledValue {
    pub fn new(label: impl Into<String>, spec: TmSpec, f_of: TmSpec) -> Result<Self, HeuristicError> {
        Ok(CompiledValue { label: label.into(), compiled: Arc::new(Compiled::new(spec, f_of)?) })
    }
}

impl ValueChooser for CompiledValue {
    fn name(&self) -> String {
        format!("compiled:{}", self.label)
    }
    fn state_bits(&self) -> u32 {
        // two hop tables at f(1); grows only through the position counters
        let c = &self.compiled;
        let mut s = c.streamer();
        let _ = s.blank();
        s.memory_bits() as u32
    }
    fn start(&self, input_len: usize) -> Box<dyn ValueStream + '_> {
        let mut s = self.compiled.streamer();
        let mut error = None;
        // the value chooser also reads the chosen id after the formula
        for _ in 0..input_len + output_bound(input_len) {
            if let Err(e) = s.blank() {
                error = Some(e.to_string());
            }
        }
        Box::new(CompiledStream { s: Some(s), error })
    }
}

struct CompiledStream<'a> {
    s: Option<Streamer<'a>>,
    error: Option<String>,
}

impl ValueStream for CompiledStream<'_> {
    fn feed(&mut self, bytes: &[u8]) {
        let Some(s) = self.s.as_mut() else { return };
        for &b in bytes {
            if self.error.is_some() {
                return;
            }
            if let Err(e) = s.feed(b as char) {
                self.error = Some(e.to_string());
            }
        }
    }
    fn state(&self) -> StateKey {
        self.s.as_ref().map(|s| s.state_key()).unwrap_or_default()
    }
    fn finish(&mut self) -> Result<bool, HeuristicError> {
        if let Some(e) = &self.error {
            return Err(HeuristicError::Machine(e.clone()));
        }
        let s = self.s.take().ok_or_else(|| HeuristicError::Machine("stream already finished".into()))?;
        let r = s.finish()?;
        match r.verdict {
            Verdict::Accept => Ok(true),
            Verdict::Reject => Ok(false),
            v => Err(HeuristicError::Machine(format!("compiled machine ended with {v}"))),
        }
    }
}

/// `H` built from `A` and `B`.
#[derive(Clone)]
pub struct Combined {
    pub a: Arc<dyn VariableChooser>,
    pub b: Arc<dyn ValueChooser>,
}

impl fmt::Debug for Combined {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Combined({})", self.name())
    }
}

pub fn combine(a: Arc<dyn VariableChooser>, b: Arc<dyn ValueChooser>) -> Combined {
    Combined { a, b }
}

/// Longest `A` output allowed for an input of `input_len` bytes: the decimal width
/// of the length, plus one.
pub fn output_bound(input_len: usize) -> usize {
    input_len.max(1).to_string().len() + 1
}

fn bits_for(values: usize) -> u32 {
    usize::BITS - values.saturating_sub(1).leading_zeros()
}

impl BoundedHeuristic for Combined {
    fn name(&self) -> String {
        format!("{}+{}", self.a.name(), self.b.name())
    }
    fn state_bits(&self) -> u32 {
        self.b.state_bits()
    }
    fn start(&self, input_len: usize) -> Box<dyn HeuristicStream + '_> {
        Box::new(CombinedStream {
            a: self.a.start(input_len),
            b: self.b.start(input_len),
            bound: output_bound(input_len),
            index_bits: 0,
        })
    }
}

pub struct CombinedStream<'a> {
    a: Box<dyn VarStream + 'a>,
    b: Box<dyn ValueStream + 'a>,
    bound: usize,
    index_bits: u32,
}

impl CombinedStream<'_> {
    /// Bits the index into `A`'s output needed in the last `finish`.
    pub fn index_bits(&self) -> u32 {
        self.index_bits
    }
}

impl HeuristicStream for CombinedStream<'_> {
    fn feed(&mut self, bytes: &[u8]) {
        self.a.feed(bytes);
        self.b.feed(bytes);
    }
    fn state(&self) -> StateKey {
        let sa = self.a.state();
        let mut key = (sa.len() as u32).to_le_bytes().to_vec();
        key.extend(sa);
        key.extend(self.b.state());
        key
    }
    fn finish(&mut self) -> Result<HeuristicDecision, HeuristicError> {
        let var = self.a.output()?;
        let len = var.to_string().len();
        if len > self.bound {
            return Err(HeuristicError::OutputTooLong { len, bound: self.bound });
        }
        // only the index is kept; each symbol is recomputed from A's state
        let mut k = 0usize;
        while k < len {
            let sym = self.a.output()?.to_string().as_bytes()[k];
            self.b.feed(&[sym]);
            k += 1;
        }
        self.index_bits = bits_for(len + 1);
        Ok(HeuristicDecision { var, value: self.b.finish()? })
    }
}

/// `(name, A, B)` triples for comparing two-heuristic DPLL with the combined heuristic.
pub fn combiner_pairs() -> Vec<(String, Arc<dyn VariableChooser>, Arc<dyn ValueChooser>)> {
    let pairs: Vec<(Arc<dyn VariableChooser>, Arc<dyn ValueChooser>)> = vec![
        (Arc::new(VarRule::Lowest), Arc::new(ConstValue(true))),
        (Arc::new(VarRule::FirstSeen), Arc::new(ParitySketch::new(4))),
        (Arc::new(VarRule::LastSeen), Arc::new(ParitySketch { last_digit: true, ..ParitySketch::new(4) })),
    ];
    pairs.into_iter().map(|(a, b)| (format!("{}+{}", a.name(), b.name()), a, b)).collect()
}

/// Names accepted by [`parse_heuristic`] without a file argument.
pub const BUILTIN_NAMES: &[&str] = &[
    "first-true",
    "parity-sketch:4",
    "parity-sketch:6",
    "tm:neg-parity",
    "compiled:last-clause-negative",
];

fn load_machine(arg: &str) -> Result<(String, TmSpec), HeuristicError> {
    if tm::bundled_source(arg).is_some() {
        return Ok((arg.to_string(), TmSpec::bundled(arg)?));
    }
    let text = std::fs::read_to_string(arg).map_err(|e| HeuristicError::Machine(format!("{arg}: {e}")))?;
    let label = Path::new(arg).file_stem().map_or(arg.to_string(), |s| s.to_string_lossy().into_owned());
    Ok((label, TmSpec::parse(&text)?))
}

fn parse_value(s: &str) -> Result<Arc<dyn ValueChooser>, HeuristicError> {
    let unknown = || HeuristicError::Unknown(s.to_string());
    if let Some(k) = s.strip_prefix("parity-sketch:") {
        let k: u32 = k.parse().map_err(|_| unknown())?;
        if !(1..=32).contains(&k) {
            return Err(unknown());
        }
        return Ok(Arc::new(ParitySketch::new(k)));
    }
    if let Some(k) = s.strip_prefix("sketch-xor-last-digit:") {
        let k: u32 = k.parse().map_err(|_| unknown())?;
        if !(1..=32).contains(&k) {
            return Err(unknown());
        }
        return Ok(Arc::new(ParitySketch { last_digit: true, ..ParitySketch::new(k) }));
    }
    if let Some(arg) = s.strip_prefix("tm:") {
        let (label, spec) = load_machine(arg)?;
        return Ok(Arc::new(MachineValue::new(label, spec)?));
    }
    if let Some(arg) = s.strip_prefix("compiled:") {
        let (label, spec) = load_machine(arg)?;
        return Ok(Arc::new(CompiledValue::new(label, spec, TmSpec::bundled("const-1")?)?));
    }
    match s {
        "const-true" | "true" => Ok(Arc::new(ConstValue(true))),
        "const-false" | "false" => Ok(Arc::new(ConstValue(false))),
        _ => Err(unknown()),
    }
}

/// `first-true`, a value chooser name (paired with `first-seen`), or `A+B`.
pub fn parse_heuristic(s: &str) -> Result<Combined, HeuristicError> {
    if s == "first-true" {
        return Ok(combine(Arc::new(VarRule::FirstSeen), Arc::new(ConstValue(true))));
    }
    if let Some((a, b)) = s.split_once('+') {
        let a = VarRule::parse(a).ok_or_else(|| HeuristicError::Unknown(a.to_string()))?;
        return Ok(combine(Arc::new(a), parse_value(b)?));
    }
    Ok(combine(Arc::new(VarRule::FirstSeen), parse_value(s)?))
}

pub fn builtin_heuristics() -> Vec<Combined> {
    BUILTIN_NAMES.iter().map(|n| parse_heuristic(n).expect("built-in names parse")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Sat,
    /// The formula contains the empty clause.
    Conflict,
    Branch { var: Var, value: bool },
    /// The call budget ran out here.
    Cut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceNode {
    pub depth: u32,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DpllVerdict {
    Satisfiable,
    Unsatisfiable,
    LimitExceeded,
}

impl fmt::Display for DpllVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DpllVerdict::Satisfiable => "satisfiable",
            DpllVerdict::Unsatisfiable => "unsatisfiable",
            DpllVerdict::LimitExceeded => "limit-exceeded",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DpllTrace {
    pub calls: u64,
    /// Call tree in preorder; the first child of a branch takes the chosen value.
    pub nodes: Vec<TraceNode>,
    pub verdict: DpllVerdict,
    /// Variables fixed on the satisfying path; others are free.
    pub assignment: Option<Vec<Option<bool>>>,
}

impl DpllTrace {
    /// One JSON object per node: depth, variable, value, verdict.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let (var, value, verdict) = match n.kind {
                NodeKind::Branch { var, value } => (Some(var), Some(value), "branch"),
                NodeKind::Sat => (None, None, "sat"),
                NodeKind::Conflict => (None, None, "conflict"),
                NodeKind::Cut => (None, None, "cut"),
            };
            let line = serde_json::json!({ "depth": n.depth, "variable": var, "value": value, "verdict": verdict });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DpllLimits {
    pub budget: u64,
    /// Keep the call tree (costs memory on big runs).
    pub record: bool,
}

impl Default for DpllLimits {
    fn default() -> Self {
        DpllLimits { budget: DEFAULT_BUDGET, record: true }
    }
}

/// Flat clause storage for the search: one allocation per substitution.
struct Flat {
    num_vars: u32,
    lits: Vec<i32>,
    /// End offset of each clause in `lits`.
    ends: Vec<u32>,
}

impl Flat {
    fn new(f: &CnfFormula) -> Self {
        let mut lits = Vec::with_capacity(f.num_literals());
        let mut ends = Vec::with_capacity(f.num_clauses());
        for c in f.clauses() {
            lits.extend(c.lits().iter().map(|l| l.to_dimacs()));
            ends.push(lits.len() as u32);
        }
        Flat { num_vars: f.num_vars(), lits, ends }
    }

    fn clauses(&self) -> impl Iterator<Item = &[i32]> {
        let mut start = 0usize;
        self.ends.iter().map(move |&e| {
            let c = &self.lits[start..e as usize];
            start = e as usize;
            c
        })
    }

    fn has_empty_clause(&self) -> bool {
        self.clauses().any(|c| c.is_empty())
    }

    fn occurs(&self, var: Var) -> bool {
        self.lits.iter().any(|l| l.unsigned_abs() == var)
    }

    fn substitute(&self, var: Var, value: bool) -> Flat {
        let sat = if value { var as i32 } else { -(var as i32) };
        let mut lits = Vec::with_capacity(self.lits.len());
        let mut ends = Vec::with_capacity(self.ends.len());
        for c in self.clauses() {
            if c.contains(&sat) {
                continue;
            }
            lits.extend(c.iter().copied().filter(|l| *l != -sat));
            ends.push(lits.len() as u32);
        }
        Flat { num_vars: self.num_vars, lits, ends }
    }

    /// Same bytes as [`serialize`].
    fn serialize_into(&self, out: &mut Vec<u8>) {
        out.clear();
        out.extend_from_slice(b"p cnf ");
        push_int(out, self.num_vars as i64);
        out.push(b' ');
        push_int(out, self.ends.len() as i64);
        out.push(b'\n');
        for c in self.clauses() {
            for &l in c {
                push_int(out, l as i64);
                out.push(b' ');
            }
            out.extend_from_slice(b"0\n");
        }
    }
}

fn push_int(out: &mut Vec<u8>, v: i64) {
    if v < 0 {
        out.push(b'-');
    }
    let mut u = v.unsigned_abs();
    let mut buf = [0u8; 20];
    let mut i = buf.len();
    loop {
        i -= 1;
        buf[i] = b'0' + (u % 10) as u8;
        u /= 10;
        if u == 0 {
            break;
        }
    }
    out.extend_from_slice(&buf[i..]);
}

type Decide<'d> = dyn FnMut(&[u8], usize) -> Result<HeuristicDecision, HeuristicError> + 'd;

struct Engine<'d> {
    decide: &'d mut Decide<'d>,
    /// Serialized length of the root formula; fixes the heuristic's memory bound.
    n: usize,
    limits: DpllLimits,
    calls: u64,
    nodes: Vec<TraceNode>,
    path: Vec<Option<bool>>,
    found: Option<Vec<Option<bool>>>,
    buf: Vec<u8>,
}

enum Outcome {
    Sat,
    Unsat,
    Cut,
}

impl Engine<'_> {
    fn node(&mut self, depth: u32, kind: NodeKind) {
        if self.limits.record {
            self.nodes.push(TraceNode { depth, kind });
        }
    }

    fn run(&mut self, f: &Flat, depth: u32) -> Result<Outcome, HeuristicError> {
        if self.calls >= self.limits.budget {
            self.node(depth, NodeKind::Cut);
            return Ok(Outcome::Cut);
        }
        self.calls += 1;
        if f.ends.is_empty() {
            self.node(depth, NodeKind::Sat);
            self.found = Some(self.path.clone());
            return Ok(Outcome::Sat);
        }
        if f.has_empty_clause() {
            self.node(depth, NodeKind::Conflict);
            return Ok(Outcome::Unsat);
        }
        f.serialize_into(&mut self.buf);
        let d = (self.decide)(&self.buf, self.n)?;
        if !f.occurs(d.var) {
            return Err(HeuristicError::EliminatedVariable(d.var));
        }
        self.node(depth, NodeKind::Branch { var: d.var, value: d.value });
        let slot = d.var as usize - 1;
        for value in [d.value, !d.value] {
            self.path[slot] = Some(value);
            let out = self.run(&f.substitute(d.var, value), depth + 1)?;
            self.path[slot] = None;
            match out {
                Outcome::Unsat => {}
                other => return Ok(other),
            }
        }
        Ok(Outcome::Unsat)
    }
}

fn drive<'d>(f: &CnfFormula, limits: DpllLimits, decide: &'d mut Decide<'d>) -> Result<DpllTrace, HeuristicError> {
    let n = serialize(f).len();
    let mut e = Engine {
        decide,
        n,
        limits,
        calls: 0,
        nodes: Vec::new(),
        path: vec![None; f.num_vars() as usize],
        found: None,
        buf: Vec::with_capacity(n),
    };
    let verdict = match e.run(&Flat::new(f), 0)? {
        Outcome::Sat => DpllVerdict::Satisfiable,
        Outcome::Unsat => DpllVerdict::Unsatisfiable,
        Outcome::Cut => DpllVerdict::LimitExceeded,
    };
    Ok(DpllTrace { calls: e.calls, nodes: e.nodes, verdict, assignment: e.found })
}

/// DPLL where `h` picks variable and value at every call.
pub fn dpll_h(f: &CnfFormula, h: &dyn BoundedHeuristic, limits: DpllLimits) -> Result<DpllTrace, HeuristicError> {
    drive(f, limits, &mut |bytes, n| h.decide_within(bytes, n))
}

/// DPLL where `a` picks the variable and `b` reads the formula followed by its decimal id.
pub fn dpll_ab(f: &CnfFormula, a: &dyn VariableChooser, b: &dyn ValueChooser, limits: DpllLimits) -> Result<DpllTrace, HeuristicError> {
    drive(f, limits, &mut |bytes, n| {
        let mut sa = a.start(n);
        sa.feed(bytes);
        let var = sa.output()?;
        let mut sb = b.start(n);
        sb.feed(bytes);
        sb.feed(var.to_string().as_bytes());
        Ok(HeuristicDecision { var, value: sb.finish()? })
    })
}

/// Check that every conflict leaf's path assignment falsifies a clause of `f`.
/// Returns the number of leaves checked.
pub fn check_refutation(f: &CnfFormula, trace: &DpllTrace) -> Result<usize, String> {
    if trace.verdict != DpllVerdict::Unsatisfiable {
        return Err(format!("trace verdict is {}", trace.verdict));
    }
    // (var, value, children seen so far)
    let mut stack: Vec<(Var, bool, u8)> = Vec::new();
    let mut leaves = 0;
    for (i, n) in trace.nodes.iter().enumerate() {
        let d = n.depth as usize;
        if d > stack.len() {
            return Err(format!("node {i} skips a level"));
        }
        stack.truncate(d);
        if let Some(top) = stack.last_mut() {
            top.2 += 1;
        }
        match n.kind {
            NodeKind::Branch { var, value } => stack.push((var, value, 0)),
            NodeKind::Conflict => {
                let mut partial = vec![None; f.num_vars() as usize];
                for &(var, value, seen) in &stack {
                    partial[var as usize - 1] = Some(if seen == 1 { value } else { !value });
                }
                if f.falsified_clause(&partial).is_none() {
                    return Err(format!("leaf {i} falsifies no clause"));
                }
                leaves += 1;
            }
            NodeKind::Sat | NodeKind::Cut => return Err(format!("node {i} is not a refutation leaf")),
        }
    }
    Ok(leaves)
}
