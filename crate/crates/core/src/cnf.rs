//! CNF formulas, parity-constraint encodings and the two-branch instance builder.
//!
//! Variables are 1-based DIMACS ids. Formulas built over a matrix carry a
//! [`VariableLayout`] naming every id by role. Column variables `x_j` come first,
//! then one variable `x_{i,j}` per 1 of the matrix, then the selector `u`. The clause
//! order of a formula is part of its value, since its serialization is the
//! byte stream heuristics read.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2::{Gf2Matrix, Gf2Vector};

pub type Var = u32;

/// Default variable cap for exhaustive enumeration.
pub const DEFAULT_VAR_CAP: usize = 24;

#[derive(Debug, Error)]
pub enum CnfError {
    #[error("parity constraint needs 2 or 3 variables, got {0}")]
    XorArity(usize),
    #[error("variable {0} repeated in parity constraint")]
    RepeatedVariable(Var),
    #[error("row {row} has weight {weight}, expected 3")]
    RowWeight { row: usize, weight: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("variable {0} already occurs in the formula")]
    VariableCollision(Var),
    #[error("parity pair needs two distinct columns, got ({0}, {0})")]
    SameIndex(usize),
    #[error("column {index} out of range for {cols} columns")]
    ColumnOutOfRange { index: usize, cols: usize },
    #[error("variable {var} out of range for {num_vars} variables")]
    VariableOutOfRange { var: Var, num_vars: u32 },
    #[error("{vars} free variables exceed the enumeration cap of {cap}")]
    VarCap { vars: usize, cap: usize },
    #[error("DIMACS parse error, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A literal: variable id and polarity.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(i32);

impl Lit {
    pub fn new(var: Var, positive: bool) -> Lit {
        assert!(var >= 1 && var <= i32::MAX as u32, "variable ids start at 1");
        Lit(if positive { var as i32 } else { -(var as i32) })
    }

    pub fn pos(var: Var) -> Lit {
        Lit::new(var, true)
    }

    pub fn neg(var: Var) -> Lit {
        Lit::new(var, false)
    }

    pub fn var(self) -> Var {
        self.0.unsigned_abs()
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn negate(self) -> Lit {
        Lit(-self.0)
    }

    pub fn to_dimacs(self) -> i32 {
        self.0
    }

    pub fn from_dimacs(v: i32) -> Option<Lit> {
        (v != 0 && v != i32::MIN).then_some(Lit(v))
    }

    /// Truth value under `value` of its variable.
    pub fn eval(self, value: bool) -> bool {
        value == self.is_positive()
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A disjunction of literals with no repeats and no complementary pair.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Clause(Vec<Lit>);

impl Clause {
    /// `None` for a tautology; repeated literals are merged, first occurrence kept.
    pub fn new(lits: impl IntoIterator<Item = Lit>) -> Option<Clause> {
        let mut out: Vec<Lit> = Vec::new();
        for l in lits {
            if out.contains(&l.negate()) {
                return None;
            }
            if !out.contains(&l) {
                out.push(l);
            }
        }
        Some(Clause(out))
    }

    pub fn lits(&self) -> &[Lit] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn contains_var(&self, var: Var) -> bool {
        self.0.iter().any(|l| l.var() == var)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    /// `(φ_q ∨ u)`
    Q,
    /// `(φ_w ∨ ¬u)`
    W,
    /// the linking constraints `x_{i,j} = x_j ⊕ d[i]`
    D,
    /// the parity pair `ψ_{a,b}`
    Psi,
    /// a bare `φ_q` block
    Phi,
}

impl SegmentKind {
    fn tag(self) -> &'static str {
        match self {
            SegmentKind::Q => "q",
            SegmentKind::W => "w",
            SegmentKind::D => "d",
            SegmentKind::Psi => "psi",
            SegmentKind::Phi => "phi",
        }
    }

    fn from_tag(t: &str) -> Option<Self> {
        Some(match t {
            "q" => SegmentKind::Q,
            "w" => SegmentKind::W,
            "d" => SegmentKind::D,
            "psi" => SegmentKind::Psi,
            "phi" => SegmentKind::Phi,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Segment {
    pub kind: SegmentKind,
    pub clauses: Range<usize>,
}

/// Which role a variable id plays.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Column(usize),
    One { row: usize, col: usize },
    Selector,
}

/// Dense id assignment: `x_j ↦ j+1`, then one id per 1 of the matrix in
/// row-major order, then `u`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VariableLayout {
    n_cols: usize,
    ones: Vec<(usize, usize)>,
    segments: Vec<Segment>,
}

impl VariableLayout {
    pub fn for_matrix(a: &Gf2Matrix) -> Self {
        let ones = (0..a.n_rows())
            .flat_map(|i| a.support(i).iter().map(move |&j| (i, j)))
            .collect();
        VariableLayout {
            n_cols: a.n_cols(),
            ones,
            segments: Vec::new(),
        }
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn num_vars(&self) -> u32 {
        (self.n_cols + self.ones.len() + 1) as u32
    }

    pub fn column_var(&self, j: usize) -> Var {
        assert!(j < self.n_cols, "column {j} out of range");
        j as Var + 1
    }

    pub fn one_var(&self, row: usize, col: usize) -> Option<Var> {
        self.ones
            .iter()
            .position(|&p| p == (row, col))
            .map(|k| (self.n_cols + k + 1) as Var)
    }

    pub fn selector_var(&self) -> Var {
        self.num_vars()
    }

    pub fn role(&self, var: Var) -> Option<Role> {
        let v = var as usize;
        if v == 0 || v > self.num_vars() as usize {
            None
        } else if v <= self.n_cols {
            Some(Role::Column(v - 1))
        } else if v == self.num_vars() as usize {
            Some(Role::Selector)
        } else {
            let (row, col) = self.ones[v - self.n_cols - 1];
            Some(Role::One { row, col })
        }
    }

    /// Column variables and `u`: every satisfying assignment of a built instance
    /// is determined by these.
    pub fn determining_vars(&self) -> Vec<Var> {
        (1..=self.n_cols as Var).chain([self.selector_var()]).collect()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, kind: SegmentKind) -> Option<&Segment> {
        self.segments.iter().find(|s| s.kind == kind)
    }

    fn push_segment(&mut self, kind: SegmentKind, clauses: Range<usize>) {
        self.segments.push(Segment { kind, clauses });
    }
}

/// An ordered clause list over variables `1..=num_vars`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CnfFormula {
    num_vars: u32,
    clauses: Vec<Clause>,
    layout: Option<VariableLayout>,
}

impl CnfFormula {
    pub fn new(num_vars: u32) -> Self {
        CnfFormula {
            num_vars,
            clauses: Vec::new(),
            layout: None,
        }
    }

    pub fn with_layout(layout: VariableLayout) -> Self {
        CnfFormula {
            num_vars: layout.num_vars(),
            clauses: Vec::new(),
            layout: Some(layout),
        }
    }

    /// Clauses given as DIMACS integers; tautologies are dropped.
    pub fn from_dimacs_clauses(num_vars: u32, clauses: &[Vec<i32>]) -> Result<Self, CnfError> {
        let mut f = CnfFormula::new(num_vars);
        for c in clauses {
            let lits = c
                .iter()
                .map(|&v| Lit::from_dimacs(v).ok_or(CnfError::VariableOutOfRange { var: 0, num_vars }))
                .collect::<Result<Vec<_>, _>>()?;
            f.push_lits(lits)?;
        }
        Ok(f)
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn layout(&self) -> Option<&VariableLayout> {
        self.layout.as_ref()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn has_empty_clause(&self) -> bool {
        self.clauses.iter().any(Clause::is_empty)
    }

    pub fn num_literals(&self) -> usize {
        self.clauses.iter().map(Clause::len).sum()
    }

    /// Append a clause unless it is a tautology; returns whether it was kept.
    pub fn push_lits(&mut self, lits: impl IntoIterator<Item = Lit>) -> Result<bool, CnfError> {
        let lits: Vec<Lit> = lits.into_iter().collect();
        if let Some(l) = lits.iter().find(|l| l.var() > self.num_vars) {
            return Err(CnfError::VariableOutOfRange { var: l.var(), num_vars: self.num_vars });
        }
        match Clause::new(lits) {
            Some(c) => {
                self.clauses.push(c);
                Ok(true)
            }
            None => Ok(false),
        }
    }

    fn push_clause(&mut self, c: Clause) {
        self.clauses.push(c);
    }

    pub fn occurs(&self, var: Var) -> bool {
        self.clauses.iter().any(|c| c.contains_var(var))
    }

    /// Variables occurring in some clause, ascending.
    pub fn occurring_vars(&self) -> BTreeSet<Var> {
        self.clauses.iter().flat_map(|c| c.lits().iter().map(|l| l.var())).collect()
    }

    pub fn satisfied_by(&self, assignment: &Assignment) -> bool {
        self.clauses
            .iter()
            .all(|c| c.lits().iter().any(|l| l.eval(assignment.value(l.var()))))
    }

    /// Index of the first clause every literal of which is false under the partial assignment.
    pub fn falsified_clause(&self, partial: &[Option<bool>]) -> Option<usize> {
        self.clauses.iter().position(|c| {
            c.lits()
                .iter()
                .all(|l| partial.get(l.var() as usize - 1).copied().flatten().is_some_and(|v| !l.eval(v)))
        })
    }
}

/// A total assignment; index `v - 1` holds variable `v`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(pub Vec<bool>);

impl Assignment {
    pub fn value(&self, var: Var) -> bool {
        self.0[var as usize - 1]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn complement(&self) -> Assignment {
        Assignment(self.0.iter().map(|b| !b).collect())
    }

    /// The column variables as a vector (requires a layout).
    pub fn columns(&self, layout: &VariableLayout) -> Gf2Vector {
        Gf2Vector::from_bits((0..layout.n_cols()).map(|j| self.value(layout.column_var(j))))
    }
}

/// Clauses forbidding exactly the assignments of `vars` whose parity differs from `rhs`.
/// Forbidden assignments are listed by weight, then with earlier variables set first.
pub fn encode_xor(vars: &[Var], rhs: bool) -> Result<Vec<Clause>, CnfError> {
    let k = vars.len();
    if !(2..=3).contains(&k) {
        return Err(CnfError::XorArity(k));
    }
    for (i, v) in vars.iter().enumerate() {
        if vars[..i].contains(v) {
            return Err(CnfError::RepeatedVariable(*v));
        }
    }
    let bit = |mask: u32, i: usize| mask >> (k - 1 - i) & 1 == 1;
    let mut forbidden: Vec<u32> = (0..1u32 << k).filter(|m| (m.count_ones() % 2 == 1) != rhs).collect();
    forbidden.sort_by_key(|&m| (m.count_ones(), std::cmp::Reverse(m)));
    Ok(forbidden
        .into_iter()
        .map(|m| {
            Clause::new((0..k).map(|i| Lit::new(vars[i], !bit(m, i)))).expect("distinct variables")
        })
        .collect())
}

fn check_weight_three(a: &Gf2Matrix) -> Result<(), CnfError> {
    for i in 0..a.n_rows() {
        let w = a.support(i).len();
        if w != 3 {
            return Err(CnfError::RowWeight { row: i, weight: w });
        }
    }
    Ok(())
}

fn check_len(v: &Gf2Vector, n: usize) -> Result<(), CnfError> {
    if v.len() != n {
        return Err(CnfError::DimensionMismatch { expected: n, got: v.len() });
    }
    Ok(())
}

fn phi_clauses(a: &Gf2Matrix, layout: &VariableLayout, q: &Gf2Vector) -> Vec<Clause> {
    let mut out = Vec::with_capacity(4 * a.n_rows());
    for i in 0..a.n_rows() {
        let vars: Vec<Var> = a
            .support(i)
            .iter()
            .map(|&j| layout.one_var(i, j).expect("layout built from this matrix"))
            .collect();
        out.extend(encode_xor(&vars, q.get(i)).expect("three distinct variables"));
    }
    out
}

fn linking_clauses(a: &Gf2Matrix, layout: &VariableLayout, d: &Gf2Vector) -> Vec<Clause> {
    let mut out = Vec::with_capacity(6 * a.n_rows());
    for i in 0..a.n_rows() {
        for &j in a.support(i) {
            let one = layout.one_var(i, j).expect("layout built from this matrix");
            out.extend(encode_xor(&[one, layout.column_var(j)], d.get(i)).expect("distinct variables"));
        }
    }
    out
}

/// `φ_q`: row `i` contributes the parity constraint `⊕_{j∈S_i} x_{i,j} = q[i]`.
pub fn build_phi(a: &Gf2Matrix, q: &Gf2Vector) -> Result<CnfFormula, CnfError> {
    check_weight_three(a)?;
    check_len(q, a.n_rows())?;
    let mut layout = VariableLayout::for_matrix(a);
    let clauses = phi_clauses(a, &layout, q);
    layout.push_segment(SegmentKind::Phi, 0..clauses.len());
    let mut f = CnfFormula::with_layout(layout);
    clauses.into_iter().for_each(|c| f.push_clause(c));
    Ok(f)
}

/// CNF of `f ∨ lit`: the literal is appended to every clause.
pub fn or_literal(f: &CnfFormula, lit: Lit) -> Result<CnfFormula, CnfError> {
    if f.occurs(lit.var()) {
        return Err(CnfError::VariableCollision(lit.var()));
    }
    if lit.var() > f.num_vars {
        return Err(CnfError::VariableOutOfRange { var: lit.var(), num_vars: f.num_vars });
    }
    let mut out = f.clone();
    for c in out.clauses.iter_mut() {
        c.0.push(lit);
    }
    Ok(out)
}

/// `x_{i,j} = x_j ⊕ d[i]` for every 1 of the matrix, two clauses each.
pub fn build_linking(a: &Gf2Matrix, d: &Gf2Vector) -> Result<CnfFormula, CnfError> {
    check_len(d, a.n_rows())?;
    let mut layout = VariableLayout::for_matrix(a);
    let clauses = linking_clauses(a, &layout, d);
    layout.push_segment(SegmentKind::D, 0..clauses.len());
    let mut f = CnfFormula::with_layout(layout);
    clauses.into_iter().for_each(|c| f.push_clause(c));
    Ok(f)
}

fn psi_clauses(layout: &VariableLayout, a: usize, b: usize, parity: bool) -> Result<Vec<Clause>, CnfError> {
    if a == b {
        return Err(CnfError::SameIndex(a));
    }
    for idx in [a, b] {
        if idx >= layout.n_cols() {
            return Err(CnfError::ColumnOutOfRange { index: idx, cols: layout.n_cols() });
        }
    }
    encode_xor(&[layout.column_var(a), layout.column_var(b)], parity)
}

/// `ψ_{a,b}`: `x_a ⊕ x_b = parity`.
pub fn build_psi(matrix: &Gf2Matrix, a: usize, b: usize, parity: bool) -> Result<CnfFormula, CnfError> {
    let mut layout = VariableLayout::for_matrix(matrix);
    let clauses = psi_clauses(&layout, a, b, parity)?;
    layout.push_segment(SegmentKind::Psi, 0..clauses.len());
    let mut f = CnfFormula::with_layout(layout);
    clauses.into_iter().for_each(|c| f.push_clause(c));
    Ok(f)
}

/// Parameters of one instance `(φ_q ∨ u) ∧ (φ_w ∨ ¬u) ∧ links(d) ∧ ψ_{a,b}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InstanceParams {
    pub q: Gf2Vector,
    pub w: Gf2Vector,
    pub d: Gf2Vector,
    pub a: usize,
    pub b: usize,
    pub psi_parity: bool,
}

impl InstanceParams {
    pub const DEFAULT_PSI_PARITY: bool = true;
}

fn assemble(a: &Gf2Matrix, p: &InstanceParams, with_psi: bool) -> Result<CnfFormula, CnfError> {
    check_weight_three(a)?;
    let n = a.n_rows();
    check_len(&p.q, n)?;
    check_len(&p.w, n)?;
    check_len(&p.d, n)?;
    let mut layout = VariableLayout::for_matrix(a);
    let u = layout.selector_var();
    let psi = psi_clauses(&layout, p.a, p.b, p.psi_parity)?;
    let mut clauses = Vec::new();
    let mark = |layout: &mut VariableLayout, kind, block: Vec<Clause>, clauses: &mut Vec<Clause>| {
        let start = clauses.len();
        clauses.extend(block);
        layout.push_segment(kind, start..clauses.len());
    };
    let with = |mut block: Vec<Clause>, lit: Lit| {
        block.iter_mut().for_each(|c| c.0.push(lit));
        block
    };
    let q_block = with(phi_clauses(a, &layout, &p.q), Lit::pos(u));
    let w_block = with(phi_clauses(a, &layout, &p.w), Lit::neg(u));
    let d_block = linking_clauses(a, &layout, &p.d);
    mark(&mut layout, SegmentKind::Q, q_block, &mut clauses);
    mark(&mut layout, SegmentKind::W, w_block, &mut clauses);
    mark(&mut layout, SegmentKind::D, d_block, &mut clauses);
    if with_psi {
        mark(&mut layout, SegmentKind::Psi, psi, &mut clauses);
    }
    let mut f = CnfFormula::with_layout(layout);
    clauses.into_iter().for_each(|c| f.push_clause(c));
    Ok(f)
}

/// The full instance, segments in the order q, w, d, ψ.
pub fn build_instance(a: &Gf2Matrix, p: &InstanceParams) -> Result<CnfFormula, CnfError> {
    assemble(a, p, true)
}

/// The instance with `ψ` left out.
pub fn build_instance_without_psi(a: &Gf2Matrix, p: &InstanceParams) -> Result<CnfFormula, CnfError> {
    assemble(a, p, false)
}

/// `f[var := value]`: satisfied clauses removed, falsified literals deleted.
/// No unit propagation; an emptied clause stays as the empty clause.
pub fn substitute(f: &CnfFormula, var: Var, value: bool) -> CnfFormula {
    let mut out = CnfFormula {
        num_vars: f.num_vars,
        clauses: Vec::with_capacity(f.clauses.len()),
        layout: f.layout.clone(),
    };
    for c in &f.clauses {
        match c.lits().iter().find(|l| l.var() == var) {
            Some(l) if l.eval(value) => {}
            Some(_) => out.clauses.push(Clause(c.lits().iter().copied().filter(|l| l.var() != var).collect())),
            None => out.clauses.push(c.clone()),
        }
    }
    if let Some(layout) = out.layout.as_mut() {
        // clause indices no longer line up with the original segments
        layout.segments.clear();
    }
    out
}

/// Every satisfying assignment, by enumerating all `2^num_vars` candidates.
pub fn brute_force_sat(f: &CnfFormula, var_cap: usize) -> Result<Vec<Assignment>, CnfError> {
    let all: Vec<Var> = (1..=f.num_vars).collect();
    brute_force_sat_over(f, &all, var_cap)
}

/// Every satisfying assignment, enumerating only `determining` and deriving the rest
/// by unit propagation; variables propagation leaves open are enumerated as well.
/// The count of enumerated variables per branch is capped by `var_cap`.
pub fn brute_force_sat_over(f: &CnfFormula, determining: &[Var], var_cap: usize) -> Result<Vec<Assignment>, CnfError> {
    let n = f.num_vars as usize;
    if determining.len() > var_cap {
        return Err(CnfError::VarCap { vars: determining.len(), cap: var_cap });
    }
    if let Some(&v) = determining.iter().find(|&&v| v == 0 || v as usize > n) {
        return Err(CnfError::VariableOutOfRange { var: v, num_vars: f.num_vars });
    }
    let mut found = BTreeSet::new();
    for mask in 0..1u64 << determining.len() {
        let mut partial: Vec<Option<bool>> = vec![None; n];
        for (k, &v) in determining.iter().enumerate() {
            partial[v as usize - 1] = Some(mask >> k & 1 == 1);
        }
        if !propagate(f, &mut partial) {
            continue;
        }
        let open: Vec<usize> = (0..n).filter(|&i| partial[i].is_none()).collect();
        if determining.len() + open.len() > var_cap {
            return Err(CnfError::VarCap { vars: determining.len() + open.len(), cap: var_cap });
        }
        for rest in 0..1u64 << open.len() {
            let mut full = partial.clone();
            for (k, &i) in open.iter().enumerate() {
                full[i] = Some(rest >> k & 1 == 1);
            }
            let a = Assignment(full.into_iter().map(|b| b.expect("all assigned")).collect());
            if f.satisfied_by(&a) {
                found.insert(a);
            }
        }
    }
    Ok(found.into_iter().collect())
}

/// Unit propagation to fixpoint; false on conflict.
fn propagate(f: &CnfFormula, partial: &mut [Option<bool>]) -> bool {
    loop {
        let mut changed = false;
        for c in f.clauses() {
            let mut open = None;
            let mut n_open = 0;
            let mut sat = false;
            for &l in c.lits() {
                match partial[l.var() as usize - 1] {
                    Some(v) if l.eval(v) => {
                        sat = true;
                        break;
                    }
                    Some(_) => {}
                    None => {
                        n_open += 1;
                        open = Some(l);
                    }
                }
            }
            if sat {
                continue;
            }
            match (n_open, open) {
                (0, _) => return false,
                (1, Some(l)) => {
                    partial[l.var() as usize - 1] = Some(l.is_positive());
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            return true;
        }
    }
}

/// Canonical bytes: the `p cnf` header followed by one zero-terminated line per clause.
pub fn serialize(f: &CnfFormula) -> Vec<u8> {
    serialize_with_offsets(f).0
}

/// Serialization plus the byte offset at which each clause line starts (and a final end offset).
pub fn serialize_with_offsets(f: &CnfFormula) -> (Vec<u8>, Vec<usize>) {
    use std::io::Write as _;
    let mut out = Vec::with_capacity(16 * f.clauses.len() + 32);
    write!(out, "p cnf {} {}\n", f.num_vars, f.clauses.len()).expect("write to Vec");
    let mut offsets = Vec::with_capacity(f.clauses.len() + 1);
    for c in &f.clauses {
        offsets.push(out.len());
        for l in c.lits() {
            write!(out, "{} ", l.to_dimacs()).expect("write to Vec");
        }
        out.extend_from_slice(b"0\n");
    }
    offsets.push(out.len());
    (out, offsets)
}

/// Byte range of each layout segment within [`serialize`]'s output.
pub fn segment_byte_ranges(f: &CnfFormula) -> Vec<(SegmentKind, Range<usize>)> {
    let Some(layout) = f.layout() else { return Vec::new() };
    let (_, offsets) = serialize_with_offsets(f);
    layout
        .segments()
        .iter()
        .map(|s| (s.kind, offsets[s.clauses.start]..offsets[s.clauses.end]))
        .collect()
}

/// DIMACS with the layout in `c layout` comment lines ahead of the header.
pub fn write_dimacs<W: Write>(f: &CnfFormula, mut out: W) -> Result<(), CnfError> {
    if let Some(layout) = f.layout() {
        writeln!(out, "c layout cols {}", layout.n_cols)?;
        let ones: Vec<String> = layout.ones.iter().map(|(i, j)| format!("{i}:{j}")).collect();
        writeln!(out, "c layout ones {}", ones.join(" "))?;
        for s in &layout.segments {
            writeln!(out, "c layout segment {} {} {}", s.kind.tag(), s.clauses.start, s.clauses.end)?;
        }
    }
    out.write_all(&serialize(f))?;
    Ok(())
}

pub fn parse_dimacs<R: BufRead>(input: R) -> Result<CnfFormula, CnfError> {
    let err = |line: usize, msg: String| CnfError::Parse { line, msg };
    let mut header: Option<(u32, usize)> = None;
    let mut layout_cols: Option<usize> = None;
    let mut layout_ones: Option<Vec<(usize, usize)>> = None;
    let mut segments = Vec::new();
    let mut clauses: Vec<Vec<i32>> = Vec::new();
    let mut current: Vec<i32> = Vec::new();
    let mut last_line = 0;
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('c') {
            let mut toks = rest.split_whitespace();
            if toks.next() != Some("layout") {
                continue;
            }
            match toks.next() {
                Some("cols") => {
                    let n = toks.next().and_then(|s| s.parse().ok()).ok_or_else(|| err(line_no, "bad layout cols".into()))?;
                    layout_cols = Some(n);
                }
                Some("ones") => {
                    let ones = toks
                        .map(|p| {
                            let (i, j) = p.split_once(':')?;
                            Some((i.parse().ok()?, j.parse().ok()?))
                        })
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| err(line_no, "bad layout ones".into()))?;
                    layout_ones = Some(ones);
                }
                Some("segment") => {
                    let kind = toks.next().and_then(SegmentKind::from_tag);
                    let start = toks.next().and_then(|s| s.parse().ok());
                    let end = toks.next().and_then(|s| s.parse().ok());
                    match (kind, start, end) {
                        (Some(kind), Some(start), Some(end)) => segments.push(Segment { kind, clauses: start..end }),
                        _ => return Err(err(line_no, "bad layout segment".into())),
                    }
                }
                other => return Err(err(line_no, format!("unknown layout entry {other:?}"))),
            }
            continue;
        }
        if let Some(rest) = t.strip_prefix('p') {
            if header.is_some() {
                return Err(err(line_no, "duplicate header".into()));
            }
            let toks: Vec<&str> = rest.split_whitespace().collect();
            match toks[..] {
                ["cnf", v, c] => {
                    let v = v.parse().map_err(|_| err(line_no, "bad variable count".into()))?;
                    let c = c.parse().map_err(|_| err(line_no, "bad clause count".into()))?;
                    header = Some((v, c));
                }
                _ => return Err(err(line_no, "header must be `p cnf <vars> <clauses>`".into())),
            }
            continue;
        }
        let Some((num_vars, _)) = header else {
            return Err(err(line_no, "clause before `p cnf` header".into()));
        };
        for tok in t.split_whitespace() {
            let v: i32 = tok.parse().map_err(|_| err(line_no, format!("bad literal {tok:?}")))?;
            if v == 0 {
                clauses.push(std::mem::take(&mut current));
            } else {
                if v.unsigned_abs() > num_vars {
                    return Err(err(line_no, format!("literal {v} exceeds {num_vars} variables")));
                }
                current.push(v);
            }
        }
    }
    let (num_vars, num_clauses) = header.ok_or_else(|| err(last_line.max(1), "missing `p cnf` header".into()))?;
    if !current.is_empty() {
        return Err(err(last_line, "last clause is not zero-terminated".into()));
    }
    if clauses.len() != num_clauses {
        return Err(err(last_line, format!("header declares {num_clauses} clauses, found {}", clauses.len())));
    }
    let mut f = CnfFormula::from_dimacs_clauses(num_vars, &clauses)?;
    if let (Some(n_cols), Some(ones)) = (layout_cols, layout_ones) {
        let layout = VariableLayout { n_cols, ones, segments };
        if layout.num_vars() != num_vars {
            return Err(err(0, format!("layout implies {} variables, header says {num_vars}", layout.num_vars())));
        }
        if layout.segments.iter().any(|s| s.clauses.end > f.clauses.len() || s.clauses.start > s.clauses.end) {
            return Err(err(0, "layout segment out of range".into()));
        }
        f.layout = Some(layout);
    }
    Ok(f)
}
