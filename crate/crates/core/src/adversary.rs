//! The two-formula adversary against a bounded streaming heuristic.
//!
//! Pipeline: [`partition_q`] groups parameter vectors by the heuristic's state after
//! the `q` segment, [`refine_w`] does the same for the `w` segment, then
//! [`choose_d_and_tilde`], [`coordinate_classes`], [`bad_pairs`] and
//! [`choose_psi_and_points`] fix the remaining parameters and
//! [`build_certificate`] writes down the pair. [`verify_certificate`] re-checks a
//! certificate from scratch with the brute-force oracle.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{
    brute_force_sat_over, build_instance, serialize, substitute, segment_byte_ranges, Assignment, CnfError, CnfFormula,
    InstanceParams, SegmentKind, VariableLayout,
};
use crate::dpll::{parse_heuristic, BoundedHeuristic, HeuristicDecision, HeuristicError};
use crate::expander::{boundary, construct_expander, for_each_subset, ExpanderError, ExpanderMatrix, ExpanderParams, Ratio};
use crate::gf2::{Gf2Error, Gf2Matrix, Gf2Vector};

/// Largest `m` whose `2^m` parameter vectors are enumerated.
pub const DEFAULT_ENUM_CAP: usize = 16;
/// Rows in a bad-pair witness, the added row included.
pub const BAD_PAIR_MAX_ROWS: usize = 4;
pub const BAD_PAIR_RATIO: Ratio = Ratio::new(18, 65);
/// `(max(2, 18t/65) - 1) / t` is smallest at `t = 65/9`, where it equals this.
pub const BAD_PAIR_MIN_RATIO: Ratio = Ratio::new(9, 65);
/// Oracle cap for [`verify_certificate`]: `m + 1` determining variables.
pub const VERIFY_VAR_CAP: usize = 24;

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error("enumerating 2^{m} vectors exceeds the cap 2^{cap}")]
    EnumerationCap { m: usize, cap: usize },
    #[error("matrix must be square and invertible")]
    NotInvertible,
    #[error("serializations differ in length ({0} vs {1}); states are not comparable")]
    LengthMismatch(usize, usize),
    #[error("empty vector set")]
    Empty,
    #[error("degenerate instance: {0} coordinate class(es); two are needed for a non-constant pair")]
    OneClass(usize),
    #[error("degenerate instance: all {0} cross-class pairs are bad")]
    AllPairsBad(usize),
    #[error("degenerate instance: no q0 separates the pair")]
    NoQ0,
    #[error("degenerate instance: no w0 separates the pair")]
    NoW0,
    #[error("certificate check failed: {0}")]
    Verification(Condition),
    #[error("malformed certificate: {0}")]
    Malformed(String),
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
    #[error(transparent)]
    Cnf(#[from] CnfError),
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
    #[error(transparent)]
    Expander(#[from] ExpanderError),
}

impl AdversaryError {
    /// The instance, not the code, ran out of room: another expander may work.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, AdversaryError::OneClass(_) | AdversaryError::AllPairsBad(_) | AdversaryError::NoQ0 | AdversaryError::NoW0)
    }
}

/// Vectors grouped by the heuristic state they lead to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndistClasses {
    /// Largest first; ties go to the class with the smaller first member.
    pub classes: Vec<Vec<Gf2Vector>>,
    pub total: usize,
}

impl IndistClasses {
    pub fn largest(&self) -> &[Gf2Vector] {
        &self.classes[0]
    }

    pub fn num_states(&self) -> usize {
        self.classes.len()
    }

    /// `|largest| * #states >= total`.
    pub fn pigeonhole_holds(&self) -> bool {
        self.largest().len() * self.num_states() >= self.total
    }

    fn from_groups(groups: BTreeMap<Vec<u8>, Vec<Gf2Vector>>, total: usize) -> Self {
        let mut classes: Vec<Vec<Gf2Vector>> = groups
            .into_values()
            .map(|mut c| {
                c.sort();
                c
            })
            .collect();
        classes.sort_by(|x, y| y.len().cmp(&x.len()).then_with(|| x[0].cmp(&y[0])));
        IndistClasses { classes, total }
    }
}

fn all_vectors(m: usize, cap: usize) -> Result<Vec<Gf2Vector>, AdversaryError> {
    if m > cap || m > 63 {
        return Err(AdversaryError::EnumerationCap { m, cap });
    }
    let mut v: Vec<Gf2Vector> = (0..1u64 << m).map(|x| Gf2Vector::from_u64(x, m)).collect();
    v.sort();
    Ok(v)
}

fn segment_bytes(f: &CnfFormula, kind: SegmentKind) -> (Vec<u8>, std::ops::Range<usize>) {
    let bytes = serialize(f);
    let range = segment_byte_ranges(f)
        .into_iter()
        .find(|(k, _)| *k == kind)
        .map(|(_, r)| r)
        .expect("instance formulas carry their segments");
    (bytes, range)
}

/// Template parameters: everything zero, the pair `(0, 1)`.
pub fn template_params(m: usize) -> InstanceParams {
    InstanceParams {
        q: Gf2Vector::zeros(m),
        w: Gf2Vector::zeros(m),
        d: Gf2Vector::zeros(m),
        a: 0,
        b: 1.min(m.saturating_sub(1)),
        psi_parity: InstanceParams::DEFAULT_PSI_PARITY,
    }
}

/// Streams the header and `q` segment for every `q` and groups by the resulting state.
pub fn partition_q(h: &dyn BoundedHeuristic, a: &Gf2Matrix, template: &InstanceParams, cap: usize) -> Result<IndistClasses, AdversaryError> {
    let m = a.n_rows();
    let all = all_vectors(m, cap)?;
    let input_len = serialize(&build_instance(a, template)?).len();
    let mut groups: BTreeMap<Vec<u8>, Vec<Gf2Vector>> = BTreeMap::new();
    for q in all {
        let f = build_instance(a, &InstanceParams { q: q.clone(), ..template.clone() })?;
        let (bytes, range) = segment_bytes(&f, SegmentKind::Q);
        if bytes.len() != input_len {
            return Err(AdversaryError::LengthMismatch(input_len, bytes.len()));
        }
        let mut s = h.start(input_len);
        s.feed(&bytes[..range.end]);
        groups.entry(s.state()).or_default().push(q);
    }
    Ok(IndistClasses::from_groups(groups, 1 << m))
}

/// Groups `w` in `Q ⊕ 1` by the state after the `w` segment, starting from the `q = q_rep` prefix.
pub fn refine_w_from(
    h: &dyn BoundedHeuristic,
    a: &Gf2Matrix,
    template: &InstanceParams,
    q_set: &[Gf2Vector],
    q_rep: &Gf2Vector,
) -> Result<IndistClasses, AdversaryError> {
    if q_set.is_empty() {
        return Err(AdversaryError::Empty);
    }
    let input_len = serialize(&build_instance(a, template)?).len();
    let mut groups: BTreeMap<Vec<u8>, Vec<Gf2Vector>> = BTreeMap::new();
    for q in q_set {
        let w = q.complement();
        let f = build_instance(a, &InstanceParams { q: q_rep.clone(), w: w.clone(), ..template.clone() })?;
        let (bytes, range) = segment_bytes(&f, SegmentKind::W);
        if bytes.len() != input_len {
            return Err(AdversaryError::LengthMismatch(input_len, bytes.len()));
        }
        let mut s = h.start(input_len);
        s.feed(&bytes[..range.end]);
        groups.entry(s.state()).or_default().push(w);
    }
    Ok(IndistClasses::from_groups(groups, q_set.len()))
}

/// [`refine_w_from`] with the canonical-first member of `Q` as the prefix.
pub fn refine_w(h: &dyn BoundedHeuristic, a: &Gf2Matrix, template: &InstanceParams, q_set: &[Gf2Vector]) -> Result<IndistClasses, AdversaryError> {
    let rep = q_set.iter().min().ok_or(AdversaryError::Empty)?;
    refine_w_from(h, a, template, q_set, rep)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tilde {
    pub d: Gf2Vector,
    pub w_tilde: Vec<Gf2Vector>,
    pub q_tilde: Vec<Gf2Vector>,
}

/// `d` is the canonical-first element of `W ⊕ 1`; `W̃ = W ⊕ d`, `Q̃ = W̃ ⊕ 1`.
pub fn choose_d_and_tilde(w_set: &[Gf2Vector]) -> Result<Tilde, AdversaryError> {
    let d = w_set.iter().map(Gf2Vector::complement).min().ok_or(AdversaryError::Empty)?;
    let mut w_tilde: Vec<Gf2Vector> = w_set.iter().map(|w| w.xor(&d)).collect::<Result<_, _>>()?;
    w_tilde.sort();
    let mut q_tilde: Vec<Gf2Vector> = w_tilde.iter().map(Gf2Vector::complement).collect();
    q_tilde.sort();
    let m = d.len();
    assert!(q_tilde.binary_search(&Gf2Vector::zeros(m)).is_ok(), "0 is in Q~");
    assert!(w_tilde.binary_search(&Gf2Vector::ones(m)).is_ok(), "1 is in W~");
    Ok(Tilde { d, w_tilde, q_tilde })
}

/// Coordinates `i ~ j` when `v[i] ⊕ v[j]` is the same for every `v` in `set`.
/// Classes are listed by smallest member.
pub fn coordinate_classes(set: &[Gf2Vector]) -> Result<Vec<Vec<usize>>, AdversaryError> {
    let first = set.first().ok_or(AdversaryError::Empty)?;
    let m = first.len();
    // column i over the set, normalized so the first entry is 0
    let mut by_column: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for i in 0..m {
        let flip = first.get(i);
        let col: Vec<bool> = set.iter().map(|v| v.get(i) ^ flip).collect();
        by_column.entry(col).or_default().push(i);
    }
    let mut classes: Vec<Vec<usize>> = by_column.into_values().collect();
    classes.sort();
    Ok(classes)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BadPair {
    pub i: usize,
    pub j: usize,
    /// Rows of the original matrix that, with the added row, violate the margin.
    pub witness: Vec<usize>,
    pub boundary: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BadPairReport {
    pub n: usize,
    pub max_rows: usize,
    pub pairs: Vec<BadPair>,
}

impl BadPairReport {
    pub fn is_bad(&self, i: usize, j: usize) -> bool {
        let (i, j) = (i.min(j), i.max(j));
        self.pairs.binary_search_by(|p| (p.i, p.j).cmp(&(i, j))).is_ok()
    }

    pub fn fraction(&self) -> f64 {
        let total = self.n * self.n.saturating_sub(1) / 2;
        if total == 0 { 0.0 } else { self.pairs.len() as f64 / total as f64 }
    }

    /// Re-derive each witness's boundary with [`boundary`] on the extended matrix.
    pub fn verify(&self, a: &Gf2Matrix) -> Result<bool, AdversaryError> {
        for p in &self.pairs {
            let b = with_pair_row(a, p.i, p.j)?;
            let mut rows = p.witness.clone();
            rows.push(a.n_rows());
            let size = boundary(&b, &rows).map_err(|e| AdversaryError::Malformed(e.to_string()))?.len();
            if size != p.boundary || margin_holds(size, rows.len()) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn with_pair_row(a: &Gf2Matrix, i: usize, j: usize) -> Result<Gf2Matrix, Gf2Error> {
    let mut supports = a.supports().to_vec();
    supports.push(vec![i, j]);
    Gf2Matrix::from_supports(a.n_cols(), &supports)
}

/// `size >= max(2, 18/65 * rows)`.
pub fn margin_holds(size: usize, rows: usize) -> bool {
    size >= 2 && BAD_PAIR_RATIO.satisfied_by(size, rows)
}

/// Flag pairs `(i, j)` for which adding the row `x_i ⊕ x_j` leaves some row set
/// through the new row, of at most [`BAD_PAIR_MAX_ROWS`] rows, below the margin.
pub fn bad_pairs(a: &Gf2Matrix) -> BadPairReport {
    let n = a.n_cols();
    let mut pairs = Vec::new();
    let mut count = vec![0u32; n];
    for i in 0..n {
        for j in i + 1..n {
            let mut found: Option<(Vec<usize>, usize)> = None;
            for k in 0..BAD_PAIR_MAX_ROWS {
                for_each_subset(a.n_rows(), k, |rows| {
                    count.iter_mut().for_each(|c| *c = 0);
                    count[i] += 1;
                    count[j] += 1;
                    for &r in rows {
                        for &c in a.support(r) {
                            count[c] += 1;
                        }
                    }
                    let size = count.iter().filter(|&&c| c == 1).count();
                    if !margin_holds(size, rows.len() + 1) {
                        found = Some((rows.to_vec(), size));
                        return false;
                    }
                    true
                });
                if found.is_some() {
                    break;
                }
            }
            if let Some((witness, boundary)) = found {
                pairs.push(BadPair { i, j, witness, boundary });
            }
        }
    }
    BadPairReport { n, max_rows: BAD_PAIR_MAX_ROWS, pairs }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PsiChoice {
    pub a: usize,
    pub b: usize,
    pub q0: Gf2Vector,
    pub w0: Gf2Vector,
}

/// Pick the first good cross-class pair, then `q0 ∈ Q̃` with `ψ(A⁻¹q0) = 1` and
/// `w0 = q0 ⊕ 1`, which lies in `W̃` and has `ψ(A⁻¹w0) = 1 ≠ ψ(1)`.
pub fn choose_psi_and_points(
    a_inv: &Gf2Matrix,
    tilde: &Tilde,
    bad: &BadPairReport,
) -> Result<PsiChoice, AdversaryError> {
    let pre: Vec<Gf2Vector> = tilde.q_tilde.iter().map(|q| a_inv.mat_vec_mul(q)).collect::<Result<_, _>>()?;
    let classes = coordinate_classes(&pre)?;
    if classes.len() < 2 {
        return Err(AdversaryError::OneClass(classes.len()));
    }
    let m = a_inv.n_cols();
    let mut class_of = vec![0; m];
    for (k, c) in classes.iter().enumerate() {
        for &i in c {
            class_of[i] = k;
        }
    }
    let mut cross = 0;
    let mut chosen = None;
    'outer: for x in 0..m {
        for y in x + 1..m {
            if class_of[x] != class_of[y] {
                cross += 1;
                if !bad.is_bad(x, y) {
                    chosen = Some((x, y));
                    break 'outer;
                }
            }
        }
    }
    let (pa, pb) = chosen.ok_or(AdversaryError::AllPairsBad(cross))?;
    let psi = |v: &Gf2Vector| v.get(pa) ^ v.get(pb);
    let q0 = tilde
        .q_tilde
        .iter()
        .zip(&pre)
        .find(|(_, x)| psi(x))
        .map(|(q, _)| q.clone())
        .ok_or(AdversaryError::NoQ0)?;
    let w0 = q0.complement();
    let w_pre = a_inv.mat_vec_mul(&w0)?;
    if tilde.w_tilde.binary_search(&w0).is_err() || psi(&w_pre) == psi(&Gf2Vector::ones(m)) {
        return Err(AdversaryError::NoW0);
    }
    Ok(PsiChoice { a: pa, b: pb, q0, w0 })
}

/// The five things a certificate asserts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    UniqueSatFirst,
    UniqueSatSecond,
    Opposite,
    SameDecision,
    FirstBranchUnsat,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::UniqueSatFirst => "unique-sat-first",
            Condition::UniqueSatSecond => "unique-sat-second",
            Condition::Opposite => "opposite",
            Condition::SameDecision => "same-decision",
            Condition::FirstBranchUnsat => "first-branch-unsat",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormulaRecord {
    /// Hex of the `q` and `w` parameters actually used in the formula.
    pub q: String,
    pub w: String,
    /// Hex of the satisfying assignment over all variables, variable `v` at bit `v - 1`.
    pub assignment: String,
    pub decision: HeuristicDecision,
    /// Hex of the heuristic's state after the whole formula.
    pub final_state: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSizes {
    pub q: usize,
    pub q_states: usize,
    pub w: usize,
    pub w_states: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryCertificate {
    pub m: usize,
    /// Column indices of each row.
    pub matrix: Vec<Vec<usize>>,
    pub expander_seed: Option<u64>,
    pub expansion_verified_up_to: Option<usize>,
    pub heuristic: String,
    pub state_bits: u32,
    pub d: String,
    pub q0: String,
    pub w0: String,
    pub a: usize,
    pub b: usize,
    pub psi_parity: bool,
    /// `Φ(0 ⊕ d, w0 ⊕ d)` and `Φ(q0 ⊕ d, 1 ⊕ d)`.
    pub formulas: [FormulaRecord; 2],
    pub class_sizes: ClassSizes,
    /// Index of the formula whose first-decision branch is unsatisfiable.
    pub hard: usize,
}

impl AdversaryCertificate {
    pub fn matrix(&self) -> Result<Gf2Matrix, AdversaryError> {
        Ok(Gf2Matrix::from_supports(self.m, &self.matrix)?)
    }

    fn vector(&self, hex: &str) -> Result<Gf2Vector, AdversaryError> {
        Ok(Gf2Vector::from_hex(hex, self.m)?)
    }

    pub fn params(&self, k: usize) -> Result<InstanceParams, AdversaryError> {
        let rec = self.formulas.get(k).ok_or_else(|| AdversaryError::Malformed(format!("no formula {k}")))?;
        Ok(InstanceParams {
            q: self.vector(&rec.q)?,
            w: self.vector(&rec.w)?,
            d: self.vector(&self.d)?,
            a: self.a,
            b: self.b,
            psi_parity: self.psi_parity,
        })
    }

    /// Rebuild the two formulas from the recorded parameters.
    pub fn formulas(&self) -> Result<[CnfFormula; 2], AdversaryError> {
        let a = self.matrix()?;
        Ok([build_instance(&a, &self.params(0)?)?, build_instance(&a, &self.params(1)?)?])
    }
}

fn assignment_hex(a: &Assignment) -> String {
    Gf2Vector::from_bits(a.0.iter().copied()).to_hex()
}

/// The assignment predicted by linear algebra: the `u` branch whose solution satisfies ψ.
pub fn predicted_assignment(a: &Gf2Matrix, a_inv: &Gf2Matrix, p: &InstanceParams) -> Result<Option<Assignment>, AdversaryError> {
    let layout = VariableLayout::for_matrix(a);
    let mut found = None;
    for (u, param) in [(false, &p.q), (true, &p.w)] {
        let x = a_inv.mat_vec_mul(&param.xor(&p.d)?)?;
        if (x.get(p.a) ^ x.get(p.b)) != p.psi_parity {
            continue;
        }
        if found.is_some() {
            return Ok(None);
        }
        let mut bits = vec![false; layout.num_vars() as usize];
        for j in 0..a.n_cols() {
            bits[layout.column_var(j) as usize - 1] = x.get(j);
        }
        for i in 0..a.n_rows() {
            for &j in a.support(i) {
                let v = layout.one_var(i, j).expect("support entry has a variable");
                bits[v as usize - 1] = x.get(j) ^ p.d.get(i);
            }
        }
        bits[layout.selector_var() as usize - 1] = u;
        found = Some(Assignment(bits));
    }
    Ok(found)
}

fn run_heuristic(h: &dyn BoundedHeuristic, f: &CnfFormula) -> Result<(HeuristicDecision, Vec<u8>), AdversaryError> {
    let bytes = serialize(f);
    let mut s = h.start(bytes.len());
    s.feed(&bytes);
    let state = s.state();
    Ok((s.finish()?, state))
}

/// Everything the pipeline produced besides the certificate.
#[derive(Debug, Clone)]
pub struct AdversaryRun {
    pub q_classes: IndistClasses,
    pub w_classes: IndistClasses,
    pub tilde: Tilde,
    pub coordinate_classes: Vec<Vec<usize>>,
    pub bad: BadPairReport,
    pub choice: PsiChoice,
    pub certificate: AdversaryCertificate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdversaryOptions {
    pub enum_cap: usize,
    pub psi_parity: bool,
    pub expander_seed: Option<u64>,
    pub verified_up_to: Option<usize>,
}

impl Default for AdversaryOptions {
    fn default() -> Self {
        AdversaryOptions { enum_cap: DEFAULT_ENUM_CAP, psi_parity: InstanceParams::DEFAULT_PSI_PARITY, expander_seed: None, verified_up_to: None }
    }
}

/// Run the whole pipeline and build the certificate. `name` must parse back to `h`
/// with [`parse_heuristic`] for [`verify_certificate`] to re-run it.
pub fn build_certificate(h: &dyn BoundedHeuristic, name: &str, a: &Gf2Matrix, opts: &AdversaryOptions) -> Result<AdversaryRun, AdversaryError> {
    if !a.is_square() || !a.is_full_rank() {
        return Err(AdversaryError::NotInvertible);
    }
    let m = a.n_rows();
    let a_inv = a.inverse()?;
    let template = InstanceParams { psi_parity: opts.psi_parity, ..template_params(m) };
    let q_classes = partition_q(h, a, &template, opts.enum_cap)?;
    let w_classes = refine_w(h, a, &template, q_classes.largest())?;
    let tilde = choose_d_and_tilde(w_classes.largest())?;
    let pre: Vec<Gf2Vector> = tilde.q_tilde.iter().map(|q| a_inv.mat_vec_mul(q)).collect::<Result<_, _>>()?;
    let coords = coordinate_classes(&pre)?;
    let bad = bad_pairs(a);
    let choice = choose_psi_and_points(&a_inv, &tilde, &bad)?;

    let d = &tilde.d;
    let params = [
        InstanceParams { q: d.clone(), w: choice.w0.xor(d)?, d: d.clone(), a: choice.a, b: choice.b, psi_parity: opts.psi_parity },
        InstanceParams { q: choice.q0.xor(d)?, w: d.complement(), d: d.clone(), a: choice.a, b: choice.b, psi_parity: opts.psi_parity },
    ];
    let mut records = Vec::with_capacity(2);
    let mut formulas = Vec::with_capacity(2);
    for (k, p) in params.iter().enumerate() {
        let f = build_instance(a, p)?;
        let sat = predicted_assignment(a, &a_inv, p)?.ok_or(AdversaryError::Verification(if k == 0 {
            Condition::UniqueSatFirst
        } else {
            Condition::UniqueSatSecond
        }))?;
        let (decision, state) = run_heuristic(h, &f)?;
        records.push(FormulaRecord {
            q: p.q.to_hex(),
            w: p.w.to_hex(),
            assignment: assignment_hex(&sat),
            decision,
            final_state: hex::encode(state),
        });
        formulas.push((f, sat));
    }
    if records[0].decision != records[1].decision {
        return Err(AdversaryError::Verification(Condition::SameDecision));
    }
    if formulas[0].1.complement() != formulas[1].1 {
        return Err(AdversaryError::Verification(Condition::Opposite));
    }
    // the formula whose assignment disagrees with the decision goes unsatisfiable
    let dec = records[0].decision;
    let hard = if formulas[0].1.value(dec.var) != dec.value { 0 } else { 1 };
    let [r0, r1]: [FormulaRecord; 2] = records.try_into().expect("two records");
    let certificate = AdversaryCertificate {
        m,
        matrix: a.supports().to_vec(),
        expander_seed: opts.expander_seed,
        expansion_verified_up_to: opts.verified_up_to,
        heuristic: name.to_string(),
        state_bits: h.state_bits(),
        d: d.to_hex(),
        q0: choice.q0.to_hex(),
        w0: choice.w0.to_hex(),
        a: choice.a,
        b: choice.b,
        psi_parity: opts.psi_parity,
        formulas: [r0, r1],
        class_sizes: ClassSizes {
            q: q_classes.largest().len(),
            q_states: q_classes.num_states(),
            w: w_classes.largest().len(),
            w_states: w_classes.num_states(),
        },
        hard,
    };
    Ok(AdversaryRun { q_classes, w_classes, tilde, coordinate_classes: coords, bad, choice, certificate })
}

/// Seeds tried by [`certify_with_retries`] step by this much.
pub const SEED_STRIDE: u64 = 1000;

/// Expander plus adversary run, moving to the next expander seed while the
/// instance is degenerate. Returns the last degenerate error if none works.
pub fn certify_with_retries(
    h: &dyn BoundedHeuristic,
    name: &str,
    m: usize,
    r_verify: usize,
    seed: u64,
    max_seeds: usize,
    opts: &AdversaryOptions,
) -> Result<(ExpanderMatrix, AdversaryRun), AdversaryError> {
    let params = ExpanderParams::new(r_verify, 3, ExpanderParams::DEFAULT_C)?;
    let mut last = None;
    for t in 0..max_seeds as u64 {
        let e = construct_expander(m, params, r_verify, seed.wrapping_add(t * SEED_STRIDE), 2000)?;
        let opts = AdversaryOptions { expander_seed: Some(e.seed), verified_up_to: Some(e.verified_up_to), ..*opts };
        match build_certificate(h, name, &e.matrix, &opts) {
            Ok(run) => return Ok((e, run)),
            Err(err) if err.is_degenerate() => last = Some(err),
            Err(err) => return Err(err),
        }
    }
    Err(last.unwrap_or(AdversaryError::Empty))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: Condition,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub results: Vec<ConditionResult>,
    /// Formula whose first-decision branch the oracle found unsatisfiable.
    pub hard: Option<usize>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.results.len() == 5 && self.results.iter().all(|r| r.passed)
    }

    pub fn failed(&self) -> Vec<Condition> {
        self.results.iter().filter(|r| !r.passed).map(|r| r.condition).collect()
    }
}

/// Re-check a certificate from its parameters alone, with the brute-force oracle
/// over the column variables and `u`, and a fresh run of the named heuristic.
pub fn verify_certificate(cert: &AdversaryCertificate) -> Result<VerifyReport, AdversaryError> {
    let h = parse_heuristic(&cert.heuristic)?;
    verify_certificate_with(cert, &h)
}

pub fn verify_certificate_with(cert: &AdversaryCertificate, h: &dyn BoundedHeuristic) -> Result<VerifyReport, AdversaryError> {
    let formulas = cert.formulas()?;
    let layout = formulas[0].layout().cloned().ok_or_else(|| AdversaryError::Malformed("missing layout".into()))?;
    let determining = layout.determining_vars();
    let mut results = Vec::with_capacity(5);
    let mut sols: Vec<Option<Assignment>> = Vec::with_capacity(2);
    for (k, f) in formulas.iter().enumerate() {
        let all = brute_force_sat_over(f, &determining, VERIFY_VAR_CAP)?;
        let recorded = &cert.formulas[k].assignment;
        let (passed, detail) = match all.as_slice() {
            [one] if assignment_hex(one) == *recorded => (true, "exactly one, as recorded".to_string()),
            [one] => (false, format!("one assignment {} differs from recorded {recorded}", assignment_hex(one))),
            many => (false, format!("{} satisfying assignments", many.len())),
        };
        sols.push((all.len() == 1).then(|| all[0].clone()));
        let condition = if k == 0 { Condition::UniqueSatFirst } else { Condition::UniqueSatSecond };
        results.push(ConditionResult { condition, passed, detail });
    }
    let opposite = matches!((&sols[0], &sols[1]), (Some(x), Some(y)) if x.complement() == *y);
    results.push(ConditionResult {
        condition: Condition::Opposite,
        passed: opposite,
        detail: if opposite { "assignments are complements".into() } else { "not complements".into() },
    });
    let mut decisions = Vec::with_capacity(2);
    for (k, f) in formulas.iter().enumerate() {
        let (d, state) = run_heuristic(h, f)?;
        if d != cert.formulas[k].decision || hex::encode(state) != cert.formulas[k].final_state {
            results.push(ConditionResult {
                condition: Condition::SameDecision,
                passed: false,
                detail: format!("re-run of formula {k} disagrees with the recorded decision or state"),
            });
            return Ok(VerifyReport { results, hard: None });
        }
        decisions.push(d);
    }
    let same = decisions[0] == decisions[1];
    results.push(ConditionResult {
        condition: Condition::SameDecision,
        passed: same,
        detail: format!("{:?} / {:?}", decisions[0], decisions[1]),
    });
    let mut hard = None;
    for (k, f) in formulas.iter().enumerate() {
        let g = substitute(f, decisions[k].var, decisions[k].value);
        if brute_force_sat_over(&g, &determining, VERIFY_VAR_CAP)?.is_empty() {
            hard = Some(k);
            break;
        }
    }
    results.push(ConditionResult {
        condition: Condition::FirstBranchUnsat,
        passed: hard.is_some() && hard == Some(cert.hard),
        detail: match hard {
            Some(k) => format!("formula {k} is unsatisfiable after x{} = {}", decisions[k].var, decisions[k].value as u8),
            None => "both first-decision branches are satisfiable".into(),
        },
    });
    Ok(VerifyReport { results, hard })
}

/// The satisfying assignment's column part, handy for display.
pub fn columns_of(cert: &AdversaryCertificate, k: usize) -> Result<Gf2Vector, AdversaryError> {
    let a = cert.matrix()?;
    let layout = VariableLayout::for_matrix(&a);
    let bits = Gf2Vector::from_hex(&cert.formulas[k].assignment, layout.num_vars() as usize)?;
    Ok(Gf2Vector::from_bits((0..a.n_cols()).map(|j| bits.get(layout.column_var(j) as usize - 1))))
}

/// Sets of vectors as sorted sets, for tests and reports.
pub fn as_set(v: &[Gf2Vector]) -> BTreeSet<Gf2Vector> {
    v.iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expander::{construct_expander, ExpanderParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn expander(n: usize, seed: u64) -> Gf2Matrix {
        construct_expander(n, ExpanderParams::new(3, 3, ExpanderParams::DEFAULT_C).unwrap(), 3, seed, 2000)
            .unwrap()
            .matrix
    }

    #[test]
    fn zero_bit_heuristic_has_one_class() {
        let a = expander(8, 1);
        let h = parse_heuristic("first-true").unwrap();
        let c = partition_q(&h, &a, &template_params(8), DEFAULT_ENUM_CAP).unwrap();
        assert_eq!(c.num_states(), 1);
        assert_eq!(c.largest().len(), 256);
        let w = refine_w(&h, &a, &template_params(8), c.largest()).unwrap();
        assert_eq!(as_set(w.largest()), as_set(&c.largest().iter().map(Gf2Vector::complement).collect::<Vec<_>>()));
    }

    #[test]
    fn sketch_classes_match_restreaming() {
        let a = expander(10, 2);
        let h = parse_heuristic("parity-sketch:4").unwrap();
        let t = template_params(10);
        let c = partition_q(&h, &a, &t, DEFAULT_ENUM_CAP).unwrap();
        assert!(c.num_states() <= 16);
        assert!(c.pigeonhole_holds());
        assert_eq!(c.classes.iter().map(Vec::len).sum::<usize>(), 1024);
        // every member of a class reaches the same state when the full prefix is re-streamed
        for class in &c.classes {
            let mut states = BTreeSet::new();
            for q in class.iter().take(8) {
                let f = build_instance(&a, &InstanceParams { q: q.clone(), ..t.clone() }).unwrap();
                let bytes = serialize(&f);
                let end = segment_byte_ranges(&f)[0].1.end;
                let mut s = h.start(bytes.len());
                for b in &bytes[..end] {
                    s.feed(std::slice::from_ref(b));
                }
                states.insert(s.state());
            }
            assert_eq!(states.len(), 1);
        }
    }

    #[test]
    fn w_classes_do_not_depend_on_representative() {
        let a = expander(8, 3);
        let h = parse_heuristic("parity-sketch:4").unwrap();
        let t = template_params(8);
        let q = partition_q(&h, &a, &t, DEFAULT_ENUM_CAP).unwrap();
        let set = q.largest();
        let x = refine_w_from(&h, &a, &t, set, &set[0]).unwrap();
        let y = refine_w_from(&h, &a, &t, set, set.last().unwrap()).unwrap();
        assert_eq!(x, y);
        assert!(x.largest().len() * x.num_states() >= set.len());
    }

    #[test]
    fn tilde_of_all_ones() {
        let t = choose_d_and_tilde(&[Gf2Vector::ones(5)]).unwrap();
        assert_eq!(t.d, Gf2Vector::zeros(5));
        assert_eq!(t.w_tilde, vec![Gf2Vector::ones(5)]);
        assert_eq!(t.q_tilde, vec![Gf2Vector::zeros(5)]);
    }

    #[test]
    fn tilde_contains_zero_for_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let w: Vec<Gf2Vector> = (0..rng.gen_range(1..20)).map(|_| Gf2Vector::from_u64(rng.gen(), 7)).collect();
            let t = choose_d_and_tilde(&w).unwrap();
            assert!(t.q_tilde.contains(&Gf2Vector::zeros(7)));
            let flipped: BTreeSet<_> = t.w_tilde.iter().map(Gf2Vector::complement).collect();
            assert_eq!(flipped, as_set(&t.q_tilde));
        }
    }

    #[test]
    fn coordinate_class_extremes() {
        assert_eq!(coordinate_classes(&[Gf2Vector::zeros(4)]).unwrap(), vec![vec![0, 1, 2, 3]]);
        let all: Vec<Gf2Vector> = (0..16).map(|x| Gf2Vector::from_u64(x, 4)).collect();
        assert_eq!(coordinate_classes(&all).unwrap(), vec![vec![0], vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn coordinate_classes_match_pairwise_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..10 {
            let set: Vec<Gf2Vector> = (0..64).map(|_| Gf2Vector::from_u64(rng.gen(), 8)).collect();
            let classes = coordinate_classes(&set).unwrap();
            assert!((1usize << classes.len()) >= as_set(&set).len());
            let class_of = |i: usize| classes.iter().position(|c| c.contains(&i)).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    let constant = set.iter().map(|v| v.get(i) ^ v.get(j)).collect::<BTreeSet<_>>().len() == 1;
                    assert_eq!(constant, class_of(i) == class_of(j));
                }
            }
        }
    }

    #[test]
    fn duplicated_row_pair_is_bad() {
        let a = Gf2Matrix::from_supports(6, &[vec![0, 1, 2], vec![3, 4, 5], vec![0, 3, 4], vec![1, 2, 5], vec![0, 2, 4], vec![1, 3, 5]]).unwrap();
        let r = bad_pairs(&a);
        assert!(r.is_bad(0, 1));
        let p = r.pairs.iter().find(|p| (p.i, p.j) == (0, 1)).unwrap();
        assert_eq!(p.boundary, 1);
        assert!(r.verify(&a).unwrap());
    }

    #[test]
    fn unflagged_pairs_meet_the_margin() {
        let a = expander(12, 0);
        let r = bad_pairs(&a);
        assert!(r.verify(&a).unwrap());
        let good: Vec<(usize, usize)> = (0..12).flat_map(|i| (i + 1..12).map(move |j| (i, j))).filter(|&(i, j)| !r.is_bad(i, j)).collect();
        assert!(!good.is_empty());
        // independent oracle: the folding boundary on every small row set of the extended matrix
        for (i, j) in good {
            let b = with_pair_row(&a, i, j).unwrap();
            for k in 0..BAD_PAIR_MAX_ROWS {
                for_each_subset(12, k, |rows| {
                    let mut rows = rows.to_vec();
                    rows.push(12);
                    let size = crate::expander::boundary_by_folding(&b, &rows).unwrap().len();
                    assert!(size >= 2 && 65 * size >= 18 * rows.len());
                    true
                });
            }
        }
    }

    #[test]
    fn all_pairs_bad_at_eight() {
        // every full-rank 8 x 8 expander here has only bad pairs
        let a = expander(8, 1);
        assert_eq!(bad_pairs(&a).pairs.len(), 28);
        let h = parse_heuristic("first-true").unwrap();
        let err = build_certificate(&h, "first-true", &a, &AdversaryOptions::default()).unwrap_err();
        assert!(matches!(err, AdversaryError::AllPairsBad(28)));
        assert!(err.is_degenerate());
    }

    #[test]
    fn margin_constant() {
        // (max(2, 18t/65) - 1) / t over integer and fractional t: minimum 9/65 at t = 65/9
        let f = |t: f64| ((18.0 * t / 65.0).max(2.0) - 1.0) / t;
        let best = (1..10_000).map(|k| f(k as f64 / 100.0)).fold(f64::INFINITY, f64::min);
        assert!((best - BAD_PAIR_MIN_RATIO.as_f64()).abs() < 1e-4);
        assert!((f(65.0 / 9.0) - 9.0 / 65.0).abs() < 1e-12);
    }

    fn certify(name: &str, m: usize, opts: &AdversaryOptions) -> AdversaryRun {
        let h = parse_heuristic(name).unwrap();
        certify_with_retries(&h, name, m, 3, 0, 20, opts).unwrap().1
    }

    #[test]
    fn end_to_end_certificates_verify() {
        for name in ["first-true", "parity-sketch:4"] {
            let run = certify(name, 10, &AdversaryOptions::default());
            let cert = &run.certificate;
            assert!(!run.bad.is_bad(cert.a, cert.b));
            assert!(run.q_classes.pigeonhole_holds() && run.w_classes.pigeonhole_holds());
            let report = verify_certificate(cert).unwrap();
            assert!(report.passed(), "{name}: {:?}", report.results);
            assert_eq!(report.hard, Some(cert.hard));
            // the predicted assignments really are the oracle's
            let a = cert.matrix().unwrap();
            let fs = cert.formulas().unwrap();
            let det = fs[0].layout().unwrap().determining_vars();
            for k in 0..2 {
                let sols = brute_force_sat_over(&fs[k], &det, VERIFY_VAR_CAP).unwrap();
                assert_eq!(sols.len(), 1);
                assert_eq!(Some(sols[0].clone()), predicted_assignment(&a, &a.inverse().unwrap(), &cert.params(k).unwrap()).unwrap());
            }
            let json = serde_json::to_string(cert).unwrap();
            let back: AdversaryCertificate = serde_json::from_str(&json).unwrap();
            assert_eq!(&back, cert);
        }
    }

    #[test]
    fn tampered_d_fails() {
        let mut cert = certify("parity-sketch:4", 10, &AdversaryOptions::default()).certificate;
        let mut d = Gf2Vector::from_hex(&cert.d, 10).unwrap();
        d.flip(0);
        cert.d = d.to_hex();
        let report = verify_certificate(&cert).unwrap();
        assert!(!report.passed());
        let failed = report.failed();
        assert!(failed.iter().any(|c| matches!(c, Condition::UniqueSatFirst | Condition::UniqueSatSecond | Condition::Opposite)));
    }

    #[test]
    fn parity_zero_also_certifies() {
        let opts = AdversaryOptions { psi_parity: false, ..AdversaryOptions::default() };
        let cert = certify("first-true", 10, &opts).certificate;
        assert!(!cert.psi_parity);
        assert!(verify_certificate(&cert).unwrap().passed());
    }

    #[test]
    fn single_q_class_is_degenerate() {
        let a = expander(8, 8);
        let inv = a.inverse().unwrap();
        let tilde = Tilde { d: Gf2Vector::zeros(8), w_tilde: vec![Gf2Vector::ones(8)], q_tilde: vec![Gf2Vector::zeros(8)] };
        let bad = bad_pairs(&a);
        assert!(matches!(choose_psi_and_points(&inv, &tilde, &bad), Err(AdversaryError::OneClass(1))));
    }
}
