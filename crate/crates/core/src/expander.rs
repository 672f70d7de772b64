//! Boundary-expander matrices: boundary queries, exhaustive expansion checks,
//! and seeded rejection sampling of square row-weight-`s` matrices.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2::{Gf2Error, Gf2Matrix, Gf2Vector};

/// Largest number of row subsets `verify_boundary_expansion` will enumerate.
pub const ENUMERATION_CAP: u64 = 50_000_000;

/// Parameters the existence result promises, recorded verbatim for reference.
pub const TARGET_PARAMS: &str = "(n/log^14 n, 3, 11/13)";

#[derive(Debug, Error)]
pub enum ExpanderError {
    #[error("row index {index} out of range for {rows} rows")]
    RowOutOfRange { index: usize, rows: usize },
    #[error("enumeration of {count} row subsets exceeds the cap of {cap}")]
    EnumerationCap { count: u64, cap: u64 },
    #[error("cannot place {s} ones per row in {n} columns with column degree cap {cap}")]
    Infeasible { n: usize, s: usize, cap: usize },
    #[error("no candidate accepted after {} tries ({} rank failures, {} expansion failures, {} placement failures)", .0.tries, .0.rank_failures, .0.expansion_failures, .0.placement_failures)]
    Exhausted(AcceptanceStats),
    #[error("invalid expander parameters: {0}")]
    Params(String),
    #[error("malformed matrix file, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Non-negative rational, used for the expansion constant `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub const fn new(num: u64, den: u64) -> Self {
        Ratio { num, den }
    }

    /// `value ≥ self · count`, compared exactly.
    pub fn satisfied_by(&self, value: usize, count: usize) -> bool {
        value as u128 * self.den as u128 >= self.num as u128 * count as u128
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Ratio {
    type Err = ExpanderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ExpanderError::Params(format!("cannot parse ratio {s:?}"));
        let (num, den) = match s.split_once('/') {
            Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
            None => (s.trim().parse().map_err(|_| bad())?, 1),
        };
        if den == 0 {
            return Err(bad());
        }
        Ok(Ratio { num, den })
    }
}

/// `(r, s, c)`: expansion is promised for row sets up to size `r`, rows carry `s` ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpanderParams {
    pub r: usize,
    pub s: usize,
    pub c: Ratio,
}

impl ExpanderParams {
    pub const DEFAULT_C: Ratio = Ratio::new(11, 13);

    pub fn new(r: usize, s: usize, c: Ratio) -> Result<Self, ExpanderError> {
        if s == 0 || r == 0 {
            return Err(ExpanderError::Params(format!("need r ≥ 1 and s ≥ 1, got r={r} s={s}")));
        }
        if c.num == 0 {
            return Err(ExpanderError::Params("c must be positive".into()));
        }
        Ok(ExpanderParams { r, s, c })
    }

    /// Desk-scale defaults: weight 3, c = 11/13, expansion checked up to 5 rows.
    pub fn desk(n: usize) -> Self {
        ExpanderParams {
            r: n.clamp(1, 5),
            s: 3,
            c: Self::DEFAULT_C,
        }
    }
}

/// Columns covered by exactly one row of `rows`, by counting incidences.
pub fn boundary(a: &Gf2Matrix, rows: &[usize]) -> Result<Vec<usize>, ExpanderError> {
    let mut count = vec![0u32; a.n_cols()];
    for &i in rows {
        if i >= a.n_rows() {
            return Err(ExpanderError::RowOutOfRange { index: i, rows: a.n_rows() });
        }
        for &j in a.support(i) {
            count[j] += 1;
        }
    }
    Ok((0..a.n_cols()).filter(|&j| count[j] == 1).collect())
}

/// Same set as [`boundary`], folded row by row over packed words: a column
/// leaves the boundary the second time it is seen and never returns.
pub fn boundary_by_folding(a: &Gf2Matrix, rows: &[usize]) -> Result<Vec<usize>, ExpanderError> {
    let n = a.n_cols();
    let words = n.div_ceil(64);
    let mut once = vec![0u64; words];
    let mut many = vec![0u64; words];
    for &i in rows {
        if i >= a.n_rows() {
            return Err(ExpanderError::RowOutOfRange { index: i, rows: a.n_rows() });
        }
        let mut row = vec![0u64; words];
        for &j in a.support(i) {
            row[j / 64] |= 1 << (j % 64);
        }
        for w in 0..words {
            many[w] |= once[w] & row[w];
            once[w] = (once[w] ^ row[w]) & !many[w];
        }
    }
    Ok((0..n).filter(|&j| once[j / 64] >> (j % 64) & 1 == 1).collect())
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Number of row subsets with `1 ≤ |I| ≤ r_max`.
pub fn subset_count(n_rows: usize, r_max: usize) -> u64 {
    (1..=r_max.min(n_rows)).fold(0u64, |acc, k| acc.saturating_add(binomial(n_rows, k)))
}

/// Visit every `k`-subset of `0..n` in lexicographic order; stop early when `visit` returns false.
pub fn for_each_subset(n: usize, k: usize, mut visit: impl FnMut(&[usize]) -> bool) {
    if k == 0 || k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if !visit(&idx) {
            return;
        }
        let mut p = k;
        loop {
            if p == 0 {
                return;
            }
            p -= 1;
            if idx[p] < n - k + p {
                idx[p] += 1;
                for q in p + 1..k {
                    idx[q] = idx[q - 1] + 1;
                }
                break;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionCheck {
    pub holds: bool,
    /// First row set (by size, then lexicographically) with `|∂I| < c·|I|`.
    pub violator: Option<Vec<usize>>,
    pub checked: u64,
}

/// Exhaustively check `|∂I| ≥ c·|I|` for every row set with `1 ≤ |I| ≤ r_max`.
pub fn verify_boundary_expansion(
    a: &Gf2Matrix,
    r_max: usize,
    c: Ratio,
) -> Result<ExpansionCheck, ExpanderError> {
    let count = subset_count(a.n_rows(), r_max);
    if count > ENUMERATION_CAP {
        return Err(ExpanderError::EnumerationCap { count, cap: ENUMERATION_CAP });
    }
    let mut counts = vec![0u32; a.n_cols()];
    let mut checked = 0;
    let mut violator = None;
    for k in 1..=r_max.min(a.n_rows()) {
        for_each_subset(a.n_rows(), k, |rows| {
            checked += 1;
            counts.iter_mut().for_each(|c| *c = 0);
            for &i in rows {
                for &j in a.support(i) {
                    counts[j] += 1;
                }
            }
            let b = counts.iter().filter(|&&c| c == 1).count();
            if !c.satisfied_by(b, rows.len()) {
                violator = Some(rows.to_vec());
                return false;
            }
            true
        });
        if violator.is_some() {
            break;
        }
    }
    Ok(ExpansionCheck {
        holds: violator.is_none(),
        violator,
        checked,
    })
}

/// `ceil(3 · log₂ n)`, at least 1.
pub fn default_col_degree_cap(n: usize) -> usize {
    if n <= 1 {
        return 1;
    }
    ((3.0 * (n as f64).log2()).ceil() as usize).max(1)
}

const ROW_RETRIES: usize = 64;
const MATRIX_RETRIES: usize = 64;

/// A seeded `n × n` matrix with exactly `s` ones per row and no column above `col_degree_cap`.
pub fn generate_candidate(
    n: usize,
    s: usize,
    col_degree_cap: usize,
    rng_seed: u64,
) -> Result<Gf2Matrix, ExpanderError> {
    if s == 0 || n < s || col_degree_cap == 0 || n * col_degree_cap < n * s {
        return Err(ExpanderError::Infeasible { n, s, cap: col_degree_cap });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let columns: Vec<usize> = (0..n).collect();
    'matrix: for _ in 0..MATRIX_RETRIES {
        let mut degree = vec![0usize; n];
        let mut supports = Vec::with_capacity(n);
        for _ in 0..n {
            let open: Vec<usize> = columns.iter().copied().filter(|&j| degree[j] < col_degree_cap).collect();
            if open.len() < s {
                continue 'matrix;
            }
            let mut row = None;
            for _ in 0..ROW_RETRIES {
                let mut pick: Vec<usize> = open.choose_multiple(&mut rng, s).copied().collect();
                pick.sort_unstable();
                if !supports.contains(&pick) || open.len() == s {
                    row = Some(pick);
                    break;
                }
            }
            let Some(row) = row else { continue 'matrix };
            for &j in &row {
                degree[j] += 1;
            }
            supports.push(row);
        }
        return Ok(Gf2Matrix::from_supports(n, &supports)?);
    }
    Err(ExpanderError::Infeasible { n, s, cap: col_degree_cap })
}

/// Node budget for one [`generate_guided`] search.
pub const GUIDED_NODE_BUDGET: usize = 3_000;

/// Like [`generate_candidate`], but rows are placed by a randomized depth-first search:
/// each row is drawn from the least-used columns (degree at most one above the minimum)
/// and rejected when some row set containing it, of size ≤ `r_local`, already fails
/// `|∂I| ≥ c·|I|`. Dead ends backtrack; the search gives up after
/// [`GUIDED_NODE_BUDGET`] candidate checks.
pub fn generate_guided(
    n: usize,
    s: usize,
    col_degree_cap: usize,
    r_local: usize,
    c: Ratio,
    rng_seed: u64,
) -> Result<Gf2Matrix, ExpanderError> {
    if s == 0 || n < s || col_degree_cap < s {
        return Err(ExpanderError::Infeasible { n, s, cap: col_degree_cap });
    }
    let mut search = GuidedSearch {
        n,
        s,
        cap: col_degree_cap,
        r_local,
        c,
        rng: ChaCha8Rng::seed_from_u64(rng_seed),
        degree: vec![0; n],
        supports: Vec::with_capacity(n),
        basis: Vec::with_capacity(n),
        budget: GUIDED_NODE_BUDGET,
    };
    if search.place() {
        Ok(Gf2Matrix::from_supports(n, &search.supports)?)
    } else {
        Err(ExpanderError::Infeasible { n, s, cap: col_degree_cap })
    }
}

struct GuidedSearch {
    n: usize,
    s: usize,
    cap: usize,
    r_local: usize,
    c: Ratio,
    rng: ChaCha8Rng,
    degree: Vec<usize>,
    supports: Vec<Vec<usize>>,
    /// reduced rows of `supports`, with pivots, kept in push order
    basis: Vec<(usize, Gf2Vector)>,
    budget: usize,
}

impl GuidedSearch {
    fn place(&mut self) -> bool {
        if self.supports.len() == self.n {
            return true;
        }
        let min_deg = *self.degree.iter().min().expect("n ≥ 1");
        let pool: Vec<usize> = (0..self.n)
            .filter(|&j| self.degree[j] < self.cap && self.degree[j] <= min_deg + 1)
            .collect();
        let mut rows = Vec::new();
        for_each_subset(pool.len(), self.s, |idx| {
            rows.push(idx.iter().map(|&k| pool[k]).collect::<Vec<_>>());
            true
        });
        rows.shuffle(&mut self.rng);
        for row in rows {
            if self.budget == 0 {
                return false;
            }
            self.budget -= 1;
            let Some(reduced) = self.independent(&row) else { continue };
            if !locally_expanding(&self.supports, &row, self.n, self.r_local, self.c) {
                continue;
            }
            row.iter().for_each(|&j| self.degree[j] += 1);
            self.supports.push(row);
            self.basis.push(reduced);
            if self.place() {
                return true;
            }
            self.basis.pop();
            let row = self.supports.pop().expect("just pushed");
            row.iter().for_each(|&j| self.degree[j] -= 1);
        }
        false
    }

    /// The row reduced against the basis with its pivot, or `None` if it is in their span.
    fn independent(&self, row: &[usize]) -> Option<(usize, Gf2Vector)> {
        let mut v = Gf2Vector::zeros(self.n);
        row.iter().for_each(|&j| v.set(j, true));
        for (p, b) in &self.basis {
            if v.get(*p) {
                v.xor_assign(b);
            }
        }
        v.support().first().map(|&p| (p, v))
    }
}

fn locally_expanding(placed: &[Vec<usize>], row: &[usize], n: usize, r: usize, c: Ratio) -> bool {
    let mut counts = vec![0u32; n];
    let mut ok = true;
    for k in 0..r.min(placed.len() + 1) {
        if k == 0 {
            if !c.satisfied_by(row.len(), 1) {
                return false;
            }
            continue;
        }
        for_each_subset(placed.len(), k, |rows| {
            counts.iter_mut().for_each(|x| *x = 0);
            for j in rows.iter().flat_map(|&i| &placed[i]).chain(row) {
                counts[*j] += 1;
            }
            let b = counts.iter().filter(|&&x| x == 1).count();
            ok = c.satisfied_by(b, k + 1);
            ok
        });
        if !ok {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub tries: usize,
    pub rank_failures: usize,
    pub expansion_failures: usize,
    /// Guided generation could not place every row.
    pub placement_failures: usize,
}

/// A square matrix checked to be full rank and to expand for every row set up to `verified_up_to`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpanderMatrix {
    pub matrix: Gf2Matrix,
    pub params: ExpanderParams,
    pub verified_up_to: usize,
    pub col_degree_max: usize,
    pub seed: u64,
    pub stats: AcceptanceStats,
}

impl ExpanderMatrix {
    /// Re-check every recorded invariant from scratch.
    pub fn reverify(&self) -> Result<bool, ExpanderError> {
        let a = &self.matrix;
        let weights_ok = a.supports().iter().all(|s| s.len() == self.params.s);
        let degree_ok = a.column_degrees().into_iter().max().unwrap_or(0) <= self.col_degree_max;
        let expansion = verify_boundary_expansion(a, self.verified_up_to, self.params.c)?;
        Ok(a.is_square() && a.is_full_rank() && weights_ok && degree_ok && expansion.holds)
    }

    pub fn n(&self) -> usize {
        self.matrix.n_rows()
    }
}

/// Rejection-sample candidates until one is full rank and passes the expansion check up to `r_verify`.
/// Try `t` uses seed `rng_seed + t`.
pub fn construct_expander(
    n: usize,
    params: ExpanderParams,
    r_verify: usize,
    rng_seed: u64,
    max_tries: usize,
) -> Result<ExpanderMatrix, ExpanderError> {
    let count = subset_count(n, r_verify);
    if count > ENUMERATION_CAP {
        return Err(ExpanderError::EnumerationCap { count, cap: ENUMERATION_CAP });
    }
    let cap = default_col_degree_cap(n).max(params.s);
    let mut stats = AcceptanceStats::default();
    for t in 0..max_tries {
        stats.tries += 1;
        let seed = rng_seed.wrapping_add(t as u64);
        let a = match generate_guided(n, params.s, cap, r_verify, params.c, seed) {
            Ok(a) => a,
            Err(ExpanderError::Infeasible { .. }) if n >= params.s => {
                stats.placement_failures += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if !a.is_full_rank() {
            stats.rank_failures += 1;
            continue;
        }
        if !verify_boundary_expansion(&a, r_verify, params.c)?.holds {
            stats.expansion_failures += 1;
            continue;
        }
        let col_degree_max = a.column_degrees().into_iter().max().unwrap_or(0);
        return Ok(ExpanderMatrix {
            matrix: a,
            params,
            verified_up_to: r_verify,
            col_degree_max,
            seed,
            stats,
        });
    }
    Err(ExpanderError::Exhausted(stats))
}

/// Plain-text matrix format: `n s`, then one line of `s` column indices per row.
pub fn write_matrix<W: Write>(a: &Gf2Matrix, mut out: W) -> Result<(), ExpanderError> {
    let s = a.supports().first().map_or(0, Vec::len);
    writeln!(out, "{} {}", a.n_rows(), s)?;
    for row in a.supports() {
        let line: Vec<String> = row.iter().map(usize::to_string).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_matrix<R: BufRead>(input: R) -> Result<Gf2Matrix, ExpanderError> {
    let mut lines = input
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty() && !l.trim_start().starts_with('#')));
    let err = |line, msg: &str| ExpanderError::Parse { line, msg: msg.to_string() };
    let (hline, header) = lines.next().ok_or_else(|| err(1, "missing header"))?;
    let header = header?;
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err(hline, "header must be two integers")))
        .collect::<Result<_, _>>()?;
    let [n, s] = nums[..] else {
        return Err(err(hline, "header must be `n s`"));
    };
    let mut supports = Vec::with_capacity(n);
    for (line, text) in lines {
        let text = text?;
        let mut row: Vec<usize> = text
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(line, "column index must be an integer")))
            .collect::<Result<_, _>>()?;
        if row.len() != s {
            return Err(err(line, &format!("expected {s} column indices, found {}", row.len())));
        }
        if let Some(&j) = row.iter().find(|&&j| j >= n) {
            return Err(err(line, &format!("column {j} out of range for n={n}")));
        }
        row.sort_unstable();
        if row.windows(2).any(|w| w[0] == w[1]) {
            return Err(err(line, "repeated column index"));
        }
        supports.push(row);
    }
    if supports.len() != n {
        return Err(err(0, &format!("expected {n} rows, found {}", supports.len())));
    }
    Ok(Gf2Matrix::from_supports(n, &supports)?)
}
