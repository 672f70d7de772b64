//! Deterministic machines with a read-only input tape, one binary work tape and an
//! optional write-only output tape. The [`Variant`] fixes how the input is laid out.
//!
//! Tape layouts:
//! * offline: `_` at 0, the input at `1..=n`, `$` at `n+1`; the head starts at 1.
//! * online: the input at `0..n`, then `$`.
//! * shifted-online: `n` blanks, the input, then `$`.
//!
//! The input head clamps at both ends. The work tape is binary with blank read as 0;
//! its head starts at cell 0 and clamps there.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BLANK: char = '_';
pub const END: char = '$';
pub const WILDCARD: char = '*';

pub const DEFAULT_STEP_LIMIT: u64 = 1 << 22;
pub const DEFAULT_SPACE_LIMIT: usize = 64;

#[derive(Debug, Error)]
pub enum TmError {
    #[error("machine spec, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no transition for state {state}, input {input:?}, work {work}")]
    MissingTransition { state: String, input: char, work: u8 },
    #[error("machine has already halted")]
    Halted,
    #[error("expected a {expected} machine, got {got}")]
    VariantMismatch { expected: Variant, got: Variant },
    #[error("symbol {0:?} is not in the input alphabet")]
    UnknownSymbol(char),
    #[error("work tape exceeds {limit} cells")]
    SpaceExceeded { limit: usize },
    #[error("output exceeds {limit} symbols")]
    OutputExceeded { limit: usize },
    #[error("unknown bundled machine {0:?}")]
    UnknownMachine(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Offline,
    Online,
    ShiftedOnline,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Offline => "offline",
            Variant::Online => "online",
            Variant::ShiftedOnline => "shifted-online",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "offline" => Ok(Variant::Offline),
            "online" => Ok(Variant::Online),
            "shifted-online" | "shifted" => Ok(Variant::ShiftedOnline),
            _ => Err(format!("unknown variant {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Move {
    Left,
    Right,
    Stay,
}

impl Move {
    fn parse(t: &str) -> Option<Move> {
        match t {
            "L" => Some(Move::Left),
            "R" => Some(Move::Right),
            "S" => Some(Move::Stay),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub next: usize,
    /// `None` leaves the cell unchanged.
    pub write: Option<bool>,
    pub move_in: Move,
    pub move_work: Move,
    pub emit: Option<char>,
}

impl Action {
    /// Whether the transition touches the work tape.
    pub fn uses_work(&self) -> bool {
        self.write.is_some() || self.move_work != Move::Stay
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum SymPat {
    Exact(char),
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum BitPat {
    Exact(bool),
    Any,
}

/// A parsed machine. Transitions are resolved at load into a dense table over
/// (state, tape symbol, work bit).
#[derive(Debug, Clone, PartialEq)]
pub struct TmSpec {
    pub variant: Variant,
    states: Vec<String>,
    pub initial: usize,
    pub accept: usize,
    pub reject: usize,
    input_alphabet: Vec<char>,
    output_alphabet: Option<Vec<char>>,
    pub output_cap: Option<usize>,
    /// Declared work-tape bound, if any.
    pub space: Option<usize>,
    symbols: Vec<char>,
    sym_index: HashMap<char, usize>,
    table: Vec<Option<Action>>,
}

fn parse_symbol(tok: &str) -> Option<char> {
    match tok {
        "\\s" => Some(' '),
        "\\n" => Some('\n'),
        _ => {
            let mut cs = tok.chars();
            let c = cs.next()?;
            cs.next().is_none().then_some(c)
        }
    }
}

fn parse_bit(tok: &str) -> Option<BitPat> {
    match tok {
        "0" | "_" => Some(BitPat::Exact(false)),
        "1" => Some(BitPat::Exact(true)),
        "*" => Some(BitPat::Any),
        _ => None,
    }
}

impl TmSpec {
    pub fn parse(text: &str) -> Result<TmSpec, TmError> {
        let err = |line: usize, msg: String| TmError::Parse { line, msg };
        let mut variant = None;
        let mut states: Option<Vec<String>> = None;
        let (mut initial, mut accept, mut reject) = (None, None, None);
        let mut input_alphabet: Option<Vec<char>> = None;
        let mut output_alphabet = None;
        let mut output_cap = None;
        let mut space = None;
        let mut rules: Vec<(usize, String, SymPat, BitPat, String, Option<bool>, Move, Move, Option<char>)> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if let Some(arrow) = toks.iter().position(|&t| t == "->") {
                if arrow != 3 || !(toks.len() == 8 || toks.len() == 9) {
                    return Err(err(line_no, "transition must be `state in work -> state' write moveIn moveWork [emit]`".into()));
                }
                let sym = match toks[1] {
                    "*" => SymPat::Any,
                    t => SymPat::Exact(parse_symbol(t).ok_or_else(|| err(line_no, format!("bad input symbol {t:?}")))?),
                };
                let bit = parse_bit(toks[2]).ok_or_else(|| err(line_no, format!("bad work symbol {:?}", toks[2])))?;
                let write = match parse_bit(toks[5]) {
                    Some(BitPat::Exact(b)) => Some(b),
                    Some(BitPat::Any) => None,
                    None => return Err(err(line_no, format!("work alphabet is binary, cannot write {:?}", toks[5]))),
                };
                let move_in = Move::parse(toks[6]).ok_or_else(|| err(line_no, format!("bad move {:?}", toks[6])))?;
                let move_work = Move::parse(toks[7]).ok_or_else(|| err(line_no, format!("bad move {:?}", toks[7])))?;
                let emit = match toks.get(8) {
                    Some(t) => Some(parse_symbol(t).ok_or_else(|| err(line_no, format!("bad output symbol {t:?}")))?),
                    None => None,
                };
                rules.push((line_no, toks[0].to_string(), sym, bit, toks[4].to_string(), write, move_in, move_work, emit));
                continue;
            }
            let rest = &toks[1..];
            let one = |what: &str| -> Result<String, TmError> {
                match rest {
                    [v] => Ok(v.to_string()),
                    _ => Err(err(line_no, format!("`{what}` takes one value"))),
                }
            };
            let symbols = || -> Result<Vec<char>, TmError> {
                rest.iter()
                    .map(|t| parse_symbol(t).ok_or_else(|| err(line_no, format!("bad symbol {t:?}"))))
                    .collect()
            };
            match toks[0] {
                "variant" => variant = Some(one("variant")?.parse::<Variant>().map_err(|m| err(line_no, m))?),
                "states" => states = Some(rest.iter().map(|s| s.to_string()).collect()),
                "initial" => initial = Some((line_no, one("initial")?)),
                "accept" => accept = Some((line_no, one("accept")?)),
                "reject" => reject = Some((line_no, one("reject")?)),
                "input" => {
                    let syms = symbols()?;
                    if let Some(c) = syms.iter().find(|c| [BLANK, END, WILDCARD].contains(c)) {
                        return Err(err(line_no, format!("{c:?} is reserved")));
                    }
                    input_alphabet = Some(syms);
                }
                "output" => output_alphabet = Some(symbols()?),
                "output-cap" => output_cap = Some(one("output-cap")?.parse().map_err(|_| err(line_no, "bad output cap".into()))?),
                "space" => space = Some(one("space")?.parse().map_err(|_| err(line_no, "bad space bound".into()))?),
                "work" => {
                    let syms = symbols()?;
                    if syms.iter().any(|c| !['0', '1', BLANK].contains(c)) {
                        return Err(err(line_no, "work alphabet must be binary".into()));
                    }
                }
                other => return Err(err(line_no, format!("unknown header {other:?}"))),
            }
        }

        let variant = variant.ok_or_else(|| err(0, "missing `variant`".into()))?;
        let states = states.ok_or_else(|| err(0, "missing `states`".into()))?;
        let input_alphabet = input_alphabet.ok_or_else(|| err(0, "missing `input`".into()))?;
        let index: HashMap<&str, usize> = states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        if index.len() != states.len() {
            return Err(err(0, "duplicate state name".into()));
        }
        let lookup = |entry: Option<(usize, String)>, what: &str| -> Result<usize, TmError> {
            let (line, name) = entry.ok_or_else(|| err(0, format!("missing `{what}`")))?;
            index.get(name.as_str()).copied().ok_or_else(|| err(line, format!("undeclared state {name:?}")))
        };
        let initial = lookup(initial, "initial")?;
        let accept = lookup(accept, "accept")?;
        let reject = lookup(reject, "reject")?;
        if accept == reject {
            return Err(err(0, "accept and reject must differ".into()));
        }
        if output_cap.is_some() && output_alphabet.is_none() {
            return Err(err(0, "`output-cap` without `output`".into()));
        }
        let output_cap = output_cap.or(output_alphabet.as_ref().map(|_| 1));

        let mut symbols = vec![BLANK, END];
        symbols.extend(input_alphabet.iter().copied());
        let sym_index: HashMap<char, usize> = symbols.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        if sym_index.len() != symbols.len() {
            return Err(err(0, "duplicate input symbol".into()));
        }

        let mut by_key: HashMap<(usize, SymPat, BitPat), Action> = HashMap::new();
        for (line, from, sym, bit, to, write, move_in, move_work, emit) in rules {
            let from = *index.get(from.as_str()).ok_or_else(|| err(line, format!("undeclared state {from:?}")))?;
            let next = *index.get(to.as_str()).ok_or_else(|| err(line, format!("undeclared state {to:?}")))?;
            if from == accept || from == reject {
                return Err(err(line, "halting states have no transitions".into()));
            }
            if let SymPat::Exact(c) = sym {
                if !sym_index.contains_key(&c) {
                    return Err(err(line, format!("symbol {c:?} not in the input alphabet")));
                }
            }
            if variant != Variant::Offline && move_in == Move::Left {
                return Err(err(line, "online machines cannot move the input head left".into()));
            }
            if let Some(c) = emit {
                match &output_alphabet {
                    Some(out) if out.contains(&c) => {}
                    Some(_) => return Err(err(line, format!("{c:?} not in the output alphabet"))),
                    None => return Err(err(line, "emitting transition without an output tape".into())),
                }
            }
            let action = Action { next, write, move_in, move_work, emit };
            if by_key.insert((from, sym, bit), action).is_some() {
                return Err(err(line, "duplicate transition".into()));
            }
        }

        let ns = symbols.len();
        let mut table = vec![None; states.len() * ns * 2];
        for st in 0..states.len() {
            for (si, &c) in symbols.iter().enumerate() {
                for b in [false, true] {
                    let keys = [
                        (SymPat::Exact(c), BitPat::Exact(b)),
                        (SymPat::Exact(c), BitPat::Any),
                        (SymPat::Any, BitPat::Exact(b)),
                        (SymPat::Any, BitPat::Any),
                    ];
                    table[(st * ns + si) * 2 + b as usize] = keys.iter().find_map(|&(s, w)| by_key.get(&(st, s, w)).copied());
                }
            }
        }

        Ok(TmSpec {
            variant,
            states,
            initial,
            accept,
            reject,
            input_alphabet,
            output_alphabet,
            output_cap,
            space,
            symbols,
            sym_index,
            table,
        })
    }

    pub fn bundled(name: &str) -> Result<TmSpec, TmError> {
        let text = bundled_source(name).ok_or_else(|| TmError::UnknownMachine(name.to_string()))?;
        TmSpec::parse(text)
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.states[s]
    }

    pub fn input_alphabet(&self) -> &[char] {
        &self.input_alphabet
    }

    pub fn output_alphabet(&self) -> Option<&[char]> {
        self.output_alphabet.as_deref()
    }

    pub fn is_halting(&self, s: usize) -> bool {
        s == self.accept || s == self.reject
    }

    /// Tape symbols: blank, end marker, then the input alphabet.
    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn symbol_index(&self, c: char) -> Option<usize> {
        self.sym_index.get(&c).copied()
    }

    pub fn action(&self, state: usize, sym: usize, bit: bool) -> Option<&Action> {
        self.table[(state * self.symbols.len() + sym) * 2 + bit as usize].as_ref()
    }

    fn action_or_err(&self, state: usize, sym: usize, bit: bool) -> Result<&Action, TmError> {
        self.action(state, sym, bit).ok_or_else(|| TmError::MissingTransition {
            state: self.states[state].clone(),
            input: self.symbols[sym],
            work: bit as u8,
        })
    }

    /// The input tape for `input` under this machine's variant.
    pub fn tape(&self, input: &str) -> Result<VecTape, TmError> {
        let syms = input
            .chars()
            .map(|c| self.symbol_index(c).filter(|&i| i >= 2).ok_or(TmError::UnknownSymbol(c)))
            .collect::<Result<Vec<_>, _>>()?;
        let n = syms.len();
        let mut cells = Vec::with_capacity(2 * n + 2);
        match self.variant {
            Variant::Offline => cells.push(0),
            Variant::Online => {}
            Variant::ShiftedOnline => cells.extend(std::iter::repeat(0).take(n)),
        }
        cells.extend(syms);
        cells.push(1);
        let start = usize::from(self.variant == Variant::Offline);
        Ok(VecTape { cells, start })
    }

    pub fn default_limits(&self) -> Limits {
        Limits {
            steps: DEFAULT_STEP_LIMIT,
            space: self.space.unwrap_or(DEFAULT_SPACE_LIMIT),
            output: self.output_cap,
        }
    }
}

/// Names of the machines shipped with the crate.
pub const BUNDLED: &[&str] = &[
    "length-prefix",
    "f-periodic",
    "right-sweep-parity",
    "first-equals-last",
    "emit-last-then-first",
    "looper",
    "const-1",
    "const-2",
    "neg-parity",
    "last-clause-negative",
];

pub fn bundled_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "length-prefix" => include_str!("../machines/length-prefix.tm"),
        "f-periodic" => include_str!("../machines/f-periodic.tm"),
        "right-sweep-parity" => include_str!("../machines/right-sweep-parity.tm"),
        "first-equals-last" => include_str!("../machines/first-equals-last.tm"),
        "emit-last-then-first" => include_str!("../machines/emit-last-then-first.tm"),
        "looper" => include_str!("../machines/looper.tm"),
        "const-1" => include_str!("../machines/const-1.tm"),
        "const-2" => include_str!("../machines/const-2.tm"),
        "neg-parity" => include_str!("../machines/neg-parity.tm"),
        "last-clause-negative" => include_str!("../machines/last-clause-negative.tm"),
        _ => return None,
    })
}

/// Read access to an input tape, by symbol index into [`TmSpec::symbols`].
pub trait Tape {
    /// Number of cells; the last one holds the end marker.
    fn len(&self) -> usize;
    fn at(&self, pos: usize) -> usize;
    /// Where the input head starts.
    fn start(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VecTape {
    cells: Vec<usize>,
    start: usize,
}

impl Tape for VecTape {
    fn len(&self) -> usize {
        self.cells.len()
    }
    fn at(&self, pos: usize) -> usize {
        self.cells[pos]
    }
    fn start(&self) -> usize {
        self.start
    }
}

/// The offline tape of `1^n`, without materializing it.
#[derive(Debug, Clone, Copy)]
pub struct UnaryTape {
    n: usize,
    one: usize,
}

impl UnaryTape {
    pub fn new(spec: &TmSpec, n: usize) -> Result<Self, TmError> {
        let one = spec.symbol_index('1').filter(|&i| i >= 2).ok_or(TmError::UnknownSymbol('1'))?;
        Ok(UnaryTape { n, one })
    }
}

impl Tape for UnaryTape {
    fn len(&self) -> usize {
        self.n + 2
    }
    fn at(&self, pos: usize) -> usize {
        match pos {
            0 => 0,
            p if p <= self.n => self.one,
            _ => 1,
        }
    }
    fn start(&self) -> usize {
        1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub steps: u64,
    pub space: usize,
    pub output: Option<usize>,
}

/// Control state, work tape window and work head: everything but the input position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MemoryConfig {
    pub state: usize,
    pub head: usize,
    /// Work cells with trailing zeros trimmed.
    pub cells: Vec<bool>,
}

/// A full configuration plus run counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub state: usize,
    pub in_pos: usize,
    pub head: usize,
    pub work: Vec<bool>,
    pub output: String,
    pub steps: u64,
    written: Vec<bool>,
    /// Cells reached by the work head while using the tape.
    pub extent: usize,
}

impl Config {
    pub fn initial(spec: &TmSpec, tape: &dyn Tape) -> Self {
        Config {
            state: spec.initial,
            in_pos: tape.start(),
            head: 0,
            work: Vec::new(),
            output: String::new(),
            steps: 0,
            written: Vec::new(),
            extent: 0,
        }
    }

    pub fn memory(&self) -> MemoryConfig {
        let mut cells = self.work.clone();
        while cells.last() == Some(&false) {
            cells.pop();
        }
        MemoryConfig { state: self.state, head: self.head, cells }
    }

    pub fn work_bit(&self) -> bool {
        self.work.get(self.head).copied().unwrap_or(false)
    }

    /// Distinct work cells written so far.
    pub fn cells_written(&self) -> usize {
        self.written.iter().filter(|&&w| w).count()
    }
}

/// Apply one transition.
pub fn step(spec: &TmSpec, tape: &dyn Tape, cfg: &mut Config, limits: &Limits) -> Result<(), TmError> {
    if spec.is_halting(cfg.state) {
        return Err(TmError::Halted);
    }
    let sym = tape.at(cfg.in_pos);
    let act = *spec.action_or_err(cfg.state, sym, cfg.work_bit())?;
    if act.uses_work() {
        if cfg.head >= limits.space {
            return Err(TmError::SpaceExceeded { limit: limits.space });
        }
        cfg.extent = cfg.extent.max(cfg.head + 1);
    }
    if let Some(b) = act.write {
        if cfg.work.len() <= cfg.head {
            cfg.work.resize(cfg.head + 1, false);
        }
        if cfg.written.len() <= cfg.head {
            cfg.written.resize(cfg.head + 1, false);
        }
        cfg.work[cfg.head] = b;
        cfg.written[cfg.head] = true;
    }
    match act.move_work {
        Move::Left => cfg.head = cfg.head.saturating_sub(1),
        Move::Right => {
            if cfg.head + 1 >= limits.space {
                return Err(TmError::SpaceExceeded { limit: limits.space });
            }
            cfg.head += 1;
            cfg.extent = cfg.extent.max(cfg.head + 1);
        }
        Move::Stay => {}
    }
    match act.move_in {
        Move::Left => cfg.in_pos = cfg.in_pos.saturating_sub(1),
        Move::Right => cfg.in_pos = (cfg.in_pos + 1).min(tape.len() - 1),
        Move::Stay => {}
    }
    if let Some(c) = act.emit {
        cfg.output.push(c);
        if let Some(cap) = limits.output {
            if cfg.output.chars().count() > cap {
                return Err(TmError::OutputExceeded { limit: cap });
            }
        }
    }
    cfg.state = act.next;
    cfg.steps += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Limit {
    Steps,
    Space,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Accept,
    Reject,
    LimitExceeded(Limit),
    /// Only from the compiled streamer: the offline run never halts.
    Loop,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Accept => f.write_str("accept"),
            Verdict::Reject => f.write_str("reject"),
            Verdict::LimitExceeded(l) => write!(f, "limit-exceeded ({l:?})"),
            Verdict::Loop => f.write_str("loop"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunResult {
    pub verdict: Verdict,
    pub output: String,
    pub steps: u64,
    /// Distinct work cells written.
    pub work_cells: usize,
    /// Work cells reached by the head while using the tape.
    pub work_extent: usize,
    pub output_len: usize,
}

/// Run on an arbitrary tape until halt or limit.
pub fn run_on_tape(spec: &TmSpec, tape: &dyn Tape, limits: &Limits) -> Result<RunResult, TmError> {
    let mut cfg = Config::initial(spec, tape);
    let verdict = loop {
        if cfg.state == spec.accept {
            break Verdict::Accept;
        }
        if cfg.state == spec.reject {
            break Verdict::Reject;
        }
        if cfg.steps >= limits.steps {
            break Verdict::LimitExceeded(Limit::Steps);
        }
        match step(spec, tape, &mut cfg, limits) {
            Ok(()) => {}
            Err(TmError::SpaceExceeded { .. }) => break Verdict::LimitExceeded(Limit::Space),
            Err(TmError::OutputExceeded { .. }) => break Verdict::LimitExceeded(Limit::Output),
            Err(e) => return Err(e),
        }
    };
    Ok(RunResult {
        verdict,
        output_len: cfg.output.chars().count(),
        work_cells: cfg.cells_written(),
        work_extent: cfg.extent,
        steps: cfg.steps,
        output: cfg.output,
    })
}

fn expect_variant(spec: &TmSpec, v: Variant) -> Result<(), TmError> {
    if spec.variant != v {
        return Err(TmError::VariantMismatch { expected: v, got: spec.variant });
    }
    Ok(())
}

pub fn run_offline(spec: &TmSpec, input: &str, limits: &Limits) -> Result<RunResult, TmError> {
    expect_variant(spec, Variant::Offline)?;
    run_on_tape(spec, &spec.tape(input)?, limits)
}

pub fn run_online(spec: &TmSpec, input: &str, limits: &Limits) -> Result<RunResult, TmError> {
    expect_variant(spec, Variant::Online)?;
    run_on_tape(spec, &spec.tape(input)?, limits)
}

pub fn run_shifted(spec: &TmSpec, input: &str, limits: &Limits) -> Result<RunResult, TmError> {
    expect_variant(spec, Variant::ShiftedOnline)?;
    run_on_tape(spec, &spec.tape(input)?, limits)
}

/// Dispatch on the machine's own variant.
pub fn run(spec: &TmSpec, input: &str, limits: &Limits) -> Result<RunResult, TmError> {
    run_on_tape(spec, &spec.tape(input)?, limits)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reachable {
    pub configs: BTreeSet<MemoryConfig>,
    /// False when the step limit cut the run short.
    pub halted: bool,
}

/// Memory configurations visited by the run, including the initial and final ones.
/// Exceeding the space or output limit is an error; the step limit is not.
pub fn memory_configs_reachable(spec: &TmSpec, input: &str, limits: &Limits) -> Result<Reachable, TmError> {
    let tape = spec.tape(input)?;
    let mut cfg = Config::initial(spec, &tape);
    let mut configs = BTreeSet::from([cfg.memory()]);
    while !spec.is_halting(cfg.state) {
        if cfg.steps >= limits.steps {
            return Ok(Reachable { configs, halted: false });
        }
        step(spec, &tape, &mut cfg, limits)?;
        configs.insert(cfg.memory());
    }
    Ok(Reachable { configs, halted: true })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limits(steps: u64) -> Limits {
        Limits { steps, space: 64, output: None }
    }

    const ACCEPT_NOW: &str = "variant offline\nstates s acc rej\ninitial s\naccept acc\nreject rej\ninput 0 1\ns * * -> acc * S S\n";

    #[test]
    fn immediate_accept_takes_one_step() {
        let m = TmSpec::parse(ACCEPT_NOW).unwrap();
        let r = run_offline(&m, "0110", &limits(10)).unwrap();
        assert_eq!((r.verdict, r.steps), (Verdict::Accept, 1));
    }

    #[test]
    fn step_on_halted_config_errors() {
        let m = TmSpec::parse(ACCEPT_NOW).unwrap();
        let tape = m.tape("").unwrap();
        let mut cfg = Config::initial(&m, &tape);
        step(&m, &tape, &mut cfg, &limits(10)).unwrap();
        assert!(matches!(step(&m, &tape, &mut cfg, &limits(10)), Err(TmError::Halted)));
    }

    #[test]
    fn right_move_advances_input_by_one() {
        let m = TmSpec::parse("variant online\nstates s acc rej\ninitial s\naccept acc\nreject rej\ninput 0 1\ns * * -> s * R S\n").unwrap();
        let tape = m.tape("010").unwrap();
        let mut cfg = Config::initial(&m, &tape);
        step(&m, &tape, &mut cfg, &limits(10)).unwrap();
        assert_eq!(cfg.in_pos, 1);
    }

    #[test]
    fn two_pass_first_symbol_zero() {
        // right to the end, back to the left end, then look at the first symbol
        let m = TmSpec::parse(
            "variant offline\nstates r l f acc rej\ninitial r\naccept acc\nreject rej\ninput 0 1\n\
             r $ * -> l * L S\nr * * -> r * R S\nl _ * -> f * R S\nl * * -> l * L S\n\
             f 0 * -> acc * S S\nf * * -> rej * S S\n",
        )
        .unwrap();
        assert_eq!(run_offline(&m, "0110", &limits(100)).unwrap().verdict, Verdict::Accept);
        assert_eq!(run_offline(&m, "1110", &limits(100)).unwrap().verdict, Verdict::Reject);
    }

    #[test]
    fn looping_machine_hits_step_limit() {
        let m = TmSpec::bundled("looper").unwrap();
        let r = run_offline(&m, "10", &limits(1000)).unwrap();
        assert_eq!(r.verdict, Verdict::LimitExceeded(Limit::Steps));
        assert_eq!(r.steps, 1000);
    }

    #[test]
    fn writes_extend_cell_counter() {
        let m = TmSpec::parse(
            "variant online\nstates s t acc rej\ninitial s\naccept acc\nreject rej\ninput 0\n\
             s * * -> t 1 S R\nt * * -> acc 1 S R\n",
        )
        .unwrap();
        let r = run_online(&m, "", &limits(10)).unwrap();
        assert_eq!((r.work_cells, r.work_extent), (2, 3));
        let r = run_online(&m, "", &Limits { steps: 10, space: 2, output: None }).unwrap();
        assert_eq!(r.verdict, Verdict::LimitExceeded(Limit::Space));
    }

    #[test]
    fn shifted_reads_n_blanks_first() {
        // counts blanks into the state until the first real symbol, then halts
        let m = TmSpec::parse("variant shifted-online\nstates s acc rej\ninitial s\naccept acc\nreject rej\ninput 0 1\ns _ * -> s * R S\ns * * -> acc * S S\n").unwrap();
        let r = run_shifted(&m, "10110", &limits(100)).unwrap();
        assert_eq!((r.verdict, r.steps), (Verdict::Accept, 6));
    }

    #[test]
    fn wildcard_precedence() {
        let m = TmSpec::parse(
            "variant online\nstates s a b c d acc rej\ninitial s\naccept acc\nreject rej\ninput 0 1\n\
             s * * -> d * S S\ns * 0 -> c * S S\ns 0 * -> b * S S\ns 0 0 -> a * S S\n\
             a * * -> acc * S S\nb * * -> acc * S S\nc * * -> acc * S S\nd * * -> acc * S S\n",
        )
        .unwrap();
        let name = |sym: char, bit| m.state_name(m.action(0, m.symbol_index(sym).unwrap(), bit).unwrap().next).to_string();
        assert_eq!(name('0', false), "a");
        assert_eq!(name('0', true), "b");
        assert_eq!(name('1', false), "c");
        assert_eq!(name('1', true), "d");
    }

    #[test]
    fn spec_errors() {
        let base = "variant online\nstates s acc rej\ninitial s\naccept acc\nreject rej\ninput 0 1\n";
        let bad = |extra: &str| TmSpec::parse(&format!("{base}{extra}"));
        assert!(matches!(bad("s 0 * -> s * L S\n"), Err(TmError::Parse { line: 7, .. })));
        assert!(matches!(bad("s 0 * -> s * R S\ns 0 * -> acc * R S\n"), Err(TmError::Parse { line: 8, .. })));
        assert!(matches!(bad("s 0 0 -> s * R S\ns 0 _ -> acc * R S\n"), Err(TmError::Parse { line: 8, .. })));
        assert!(matches!(bad("s 0 * -> s 2 R S\n"), Err(TmError::Parse { .. })));
        assert!(matches!(bad("acc 0 * -> s * R S\n"), Err(TmError::Parse { .. })));
        assert!(matches!(bad("s 0 * -> s * R S 1\n"), Err(TmError::Parse { .. })));
        assert!(matches!(bad("work 0 1 2\n"), Err(TmError::Parse { .. })));
        assert!(matches!(bad("s x * -> s * R S\n"), Err(TmError::Parse { .. })));
    }

    #[test]
    fn missing_transition_names_the_triple() {
        let m = TmSpec::parse("variant online\nstates s acc rej\ninitial s\naccept acc\nreject rej\ninput 0 1\ns 0 * -> s * R S\n").unwrap();
        match run_online(&m, "01", &limits(10)) {
            Err(TmError::MissingTransition { state, input, work }) => assert_eq!((state.as_str(), input, work), ("s", '1', 0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bundled_machines_load() {
        for name in BUNDLED {
            TmSpec::bundled(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    fn in_length_prefix(s: &str) -> bool {
        s.starts_with(&format!("{:b}", s.len()))
    }

    fn f_periodic(s: &[u8]) -> bool {
        let f = s.len() / 2;
        (0..s.len() - f).all(|i| s[i] == s[i + f])
    }

    fn strings(max_len: usize) -> impl Iterator<Item = String> {
        (0..=max_len).flat_map(|n| (0..1u32 << n).map(move |m| (0..n).map(|i| if m >> i & 1 == 1 { '1' } else { '0' }).collect()))
    }

    #[test]
    fn length_prefix_examples() {
        let m = TmSpec::bundled("length-prefix").unwrap();
        let run = |s: &str| run_shifted(&m, s, &m.default_limits()).unwrap().verdict;
        assert_eq!(run("10100"), Verdict::Accept);
        assert_eq!(run("10110"), Verdict::Accept);
        assert_eq!(run("11100"), Verdict::Reject);
        assert_eq!(run(""), Verdict::Reject);
        for s in strings(8) {
            assert_eq!(run(&s) == Verdict::Accept, in_length_prefix(&s), "{s:?}");
        }
    }

    #[test]
    fn f_periodic_examples() {
        let m = TmSpec::bundled("f-periodic").unwrap();
        let run = |s: &str| run_shifted(&m, s, &m.default_limits()).unwrap().verdict;
        assert_eq!(run("0101"), Verdict::Accept);
        assert_eq!(run("0110"), Verdict::Reject);
        assert_eq!(run("01010"), Verdict::Accept);
        for s in strings(8) {
            assert_eq!(run(&s) == Verdict::Accept, f_periodic(s.as_bytes()), "{s:?}");
        }
    }

    #[test]
    fn online_runs_never_move_input_left() {
        let m = TmSpec::bundled("f-periodic").unwrap();
        let tape = m.tape("011011").unwrap();
        let mut cfg = Config::initial(&m, &tape);
        let mut last = cfg.in_pos;
        while !m.is_halting(cfg.state) {
            step(&m, &tape, &mut cfg, &m.default_limits()).unwrap();
            assert!(cfg.in_pos >= last);
            last = cfg.in_pos;
        }
    }

    #[test]
    fn cells_written_match_an_instrumented_rerun() {
        let m = TmSpec::bundled("length-prefix").unwrap();
        for s in ["1", "10", "1000000", "110101101"] {
            let r = run_shifted(&m, s, &m.default_limits()).unwrap();
            let tape = m.tape(s).unwrap();
            let mut cfg = Config::initial(&m, &tape);
            let mut seen = BTreeSet::new();
            while !m.is_halting(cfg.state) {
                let act = *m.action(cfg.state, tape.at(cfg.in_pos), cfg.work_bit()).unwrap();
                if act.write.is_some() {
                    seen.insert(cfg.head);
                }
                step(&m, &tape, &mut cfg, &m.default_limits()).unwrap();
            }
            assert_eq!(r.work_cells, seen.len(), "{s}");
        }
    }

    #[test]
    fn reachable_configs() {
        let halt = TmSpec::parse(ACCEPT_NOW).unwrap();
        let r = memory_configs_reachable(&halt, "01", &limits(10)).unwrap();
        assert!(r.halted);
        assert_eq!(r.configs.len(), 2);

        // blank parity: the configuration graph over blanks is a 2-cycle
        let cycle = TmSpec::parse(
            "variant shifted-online\nstates e o acc rej\ninitial e\naccept acc\nreject rej\ninput 0 1\n\
             e _ * -> o * R S\no _ * -> e * R S\ne * * -> acc * S S\no * * -> acc * S S\n",
        )
        .unwrap();
        let sizes: Vec<usize> = [4, 8, 16]
            .iter()
            .map(|&n| memory_configs_reachable(&cycle, &"1".repeat(n), &limits(1000)).unwrap().configs.len())
            .collect();
        assert!(sizes.windows(2).all(|w| w[0] == w[1]), "{sizes:?}");

        let counter = TmSpec::bundled("length-prefix").unwrap();
        let sizes: Vec<usize> = [4, 8, 16]
            .iter()
            .map(|&n| memory_configs_reachable(&counter, &"1".repeat(n), &counter.default_limits()).unwrap().configs.len())
            .collect();
        assert!(sizes.windows(2).all(|w| w[0] < w[1]), "{sizes:?}");
    }

    #[test]
    fn unary_tape_matches_materialized_tape() {
        let m = TmSpec::bundled("const-2").unwrap();
        for n in 0..6 {
            let a = run_on_tape(&m, &UnaryTape::new(&m, n).unwrap(), &m.default_limits()).unwrap();
            let b = run_offline(&m, &"1".repeat(n), &m.default_limits()).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.output, "10");
        }
    }
}
