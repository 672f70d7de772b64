//! Linear algebra over the two-element field.
//!
//! Vectors are bit-packed into `u64` words. Matrices keep every row twice:
//! packed (for elimination) and as a sorted support set (for boundary and
//! expansion queries). Both views are built together and never diverge.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

const WORD: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Gf2Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular (rank {rank} of {n})")]
    Singular { rank: usize, n: usize },
    #[error("linear system has no solution")]
    NoSolution,
    #[error("column index {index} out of range for {cols} columns")]
    IndexOutOfRange { index: usize, cols: usize },
    #[error("invalid bit string: {0}")]
    Parse(String),
}

/// A vector over GF(2) of fixed length.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Gf2Vector {
    words: Vec<u64>,
    len: usize,
}

impl Gf2Vector {
    pub fn zeros(len: usize) -> Self {
        Gf2Vector {
            words: vec![0; len.div_ceil(WORD)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self::zeros(len);
        for w in v.words.iter_mut() {
            *w = u64::MAX;
        }
        v.mask_tail();
        v
    }

    pub fn unit(len: usize, index: usize) -> Self {
        let mut v = Self::zeros(len);
        v.set(index, true);
        v
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let bits: Vec<bool> = bits.into_iter().collect();
        let mut v = Self::zeros(bits.len());
        for (i, b) in bits.into_iter().enumerate() {
            v.set(i, b);
        }
        v
    }

    /// Low `len` bits of `value`; coordinate `i` is bit `i`.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= WORD, "from_u64 supports at most 64 coordinates");
        let mut v = Self::zeros(len);
        if len > 0 {
            v.words[0] = value;
            v.mask_tail();
        }
        v
    }

    /// Inverse of [`Gf2Vector::from_u64`]; `None` when longer than 64.
    pub fn to_u64(&self) -> Option<u64> {
        match self.len {
            0 => Some(0),
            l if l <= WORD => Some(self.words[0]),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "index {i} out of range for length {}", self.len);
        self.words[i / WORD] >> (i % WORD) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % WORD);
        if bit {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        let b = self.get(i);
        self.set(i, !b);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Indices of the set coordinates, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| self.get(i)).collect()
    }

    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn xor(&self, other: &Gf2Vector) -> Result<Gf2Vector, Gf2Error> {
        if self.len != other.len {
            return Err(Gf2Error::DimensionMismatch {
                expected: self.len,
                got: other.len,
            });
        }
        let mut out = self.clone();
        out.xor_assign(other);
        Ok(out)
    }

    /// In-place xor; panics on length mismatch.
    pub fn xor_assign(&mut self, other: &Gf2Vector) {
        assert_eq!(self.len, other.len, "xor of vectors with different lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= *b;
        }
    }

    pub fn dot(&self, other: &Gf2Vector) -> bool {
        assert_eq!(self.len, other.len, "dot of vectors with different lengths");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum::<u32>()
            & 1
            == 1
    }

    /// `x ⊕ 1`, the opposite vector.
    pub fn complement(&self) -> Gf2Vector {
        let mut out = self.clone();
        for w in out.words.iter_mut() {
            *w = !*w;
        }
        out.mask_tail();
        out
    }

    pub fn is_opposite(&self, other: &Gf2Vector) -> bool {
        self.len == other.len && self.complement() == *other
    }

    /// Bits as a `0`/`1` string, coordinate 0 first.
    pub fn to_bit_string(&self) -> String {
        self.iter().map(|b| if b { '1' } else { '0' }).collect()
    }

    pub fn parse_bit_string(s: &str) -> Result<Gf2Vector, Gf2Error> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Gf2Error::Parse(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Gf2Vector::from_bits(bits))
    }

    /// Little-endian byte packing (coordinate `i` is bit `i % 8` of byte `i / 8`), hex encoded.
    pub fn to_hex(&self) -> String {
        let bytes: Vec<u8> = (0..self.len.div_ceil(8))
            .map(|b| (self.words[b / 8] >> ((b % 8) * 8)) as u8)
            .collect();
        hex::encode(bytes)
    }

    pub fn from_hex(s: &str, len: usize) -> Result<Gf2Vector, Gf2Error> {
        let bytes = hex::decode(s.trim()).map_err(|e| Gf2Error::Parse(e.to_string()))?;
        if bytes.len() != len.div_ceil(8) {
            return Err(Gf2Error::Parse(format!(
                "expected {} hex bytes for length {len}, got {}",
                len.div_ceil(8),
                bytes.len()
            )));
        }
        let mut v = Gf2Vector::zeros(len);
        for i in 0..len {
            v.set(i, bytes[i / 8] >> (i % 8) & 1 == 1);
        }
        if bytes.iter().enumerate().any(|(b, &byte)| {
            (0..8).any(|k| byte >> k & 1 == 1 && b * 8 + k >= len)
        }) {
            return Err(Gf2Error::Parse("bits set beyond vector length".into()));
        }
        Ok(v)
    }

    fn mask_tail(&mut self) {
        let rem = self.len % WORD;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

/// Lexicographic over coordinates, coordinate 0 first, `0 < 1`; shorter vectors first.
impl Ord for Gf2Vector {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len
            .cmp(&other.len)
            .then_with(|| self.iter().cmp(other.iter()))
    }
}

impl PartialOrd for Gf2Vector {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Gf2Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf2Vector({})", self.to_bit_string())
    }
}

impl fmt::Display for Gf2Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}

/// A dense matrix over GF(2).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Gf2Matrix {
    n_rows: usize,
    n_cols: usize,
    rows: Vec<Gf2Vector>,
    supports: Vec<Vec<usize>>,
}

impl Gf2Matrix {
    pub fn from_rows(n_cols: usize, rows: Vec<Gf2Vector>) -> Result<Self, Gf2Error> {
        for r in &rows {
            if r.len() != n_cols {
                return Err(Gf2Error::DimensionMismatch {
                    expected: n_cols,
                    got: r.len(),
                });
            }
        }
        let supports = rows.iter().map(Gf2Vector::support).collect();
        Ok(Gf2Matrix {
            n_rows: rows.len(),
            n_cols,
            rows,
            supports,
        })
    }

    /// Build from row supports; duplicate indices within a row cancel.
    pub fn from_supports(n_cols: usize, supports: &[Vec<usize>]) -> Result<Self, Gf2Error> {
        let mut rows = Vec::with_capacity(supports.len());
        for s in supports {
            let mut row = Gf2Vector::zeros(n_cols);
            for &j in s {
                if j >= n_cols {
                    return Err(Gf2Error::IndexOutOfRange { index: j, cols: n_cols });
                }
                row.flip(j);
            }
            rows.push(row);
        }
        Self::from_rows(n_cols, rows)
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n).map(|i| Gf2Vector::unit(n, i)).collect();
        Self::from_rows(n, rows).expect("identity rows have matching width")
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self::from_rows(n_cols, vec![Gf2Vector::zeros(n_cols); n_rows])
            .expect("zero rows have matching width")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row(&self, i: usize) -> &Gf2Vector {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Gf2Vector] {
        &self.rows
    }

    /// Sorted column indices of the ones in row `i`.
    pub fn support(&self, i: usize) -> &[usize] {
        &self.supports[i]
    }

    pub fn supports(&self) -> &[Vec<usize>] {
        &self.supports
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i].get(j)
    }

    pub fn column_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_cols];
        for s in &self.supports {
            for &j in s {
                deg[j] += 1;
            }
        }
        deg
    }

    /// Stack an extra row below the existing ones.
    pub fn with_row(&self, row: Gf2Vector) -> Result<Self, Gf2Error> {
        let mut rows = self.rows.clone();
        rows.push(row);
        Self::from_rows(self.n_cols, rows)
    }

    pub fn mat_vec_mul(&self, x: &Gf2Vector) -> Result<Gf2Vector, Gf2Error> {
        if x.len() != self.n_cols {
            return Err(Gf2Error::DimensionMismatch {
                expected: self.n_cols,
                got: x.len(),
            });
        }
        Ok(Gf2Vector::from_bits(self.rows.iter().map(|r| r.dot(x))))
    }

    pub fn mul(&self, other: &Gf2Matrix) -> Result<Gf2Matrix, Gf2Error> {
        if self.n_cols != other.n_rows {
            return Err(Gf2Error::DimensionMismatch {
                expected: self.n_cols,
                got: other.n_rows,
            });
        }
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut acc = Gf2Vector::zeros(other.n_cols);
                for j in r.support() {
                    acc.xor_assign(&other.rows[j]);
                }
                acc
            })
            .collect();
        Gf2Matrix::from_rows(other.n_cols, rows)
    }

    pub fn transpose(&self) -> Gf2Matrix {
        let rows = (0..self.n_cols)
            .map(|j| Gf2Vector::from_bits((0..self.n_rows).map(|i| self.get(i, j))))
            .collect();
        Gf2Matrix::from_rows(self.n_rows, rows).expect("transpose rows have matching width")
    }

    pub fn rank(&self) -> usize {
        Echelon::reduce(&self.rows, self.n_cols, None).pivots.len()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.n_rows.min(self.n_cols)
    }

    pub fn inverse(&self) -> Result<Gf2Matrix, Gf2Error> {
        if !self.is_square() {
            return Err(Gf2Error::NotSquare {
                rows: self.n_rows,
                cols: self.n_cols,
            });
        }
        let n = self.n_rows;
        let ident: Vec<Gf2Vector> = (0..n).map(|i| Gf2Vector::unit(n, i)).collect();
        let ech = Echelon::reduce(&self.rows, n, Some(&ident));
        if ech.pivots.len() < n {
            return Err(Gf2Error::Singular {
                rank: ech.pivots.len(),
                n,
            });
        }
        // Fully reduced with pivots on the diagonal, so the tracked rows are A⁻¹.
        Gf2Matrix::from_rows(n, ech.tracked.expect("tracked rows requested"))
    }

    /// Some `x` with `A x = b`; free variables are set to zero.
    pub fn solve(&self, b: &Gf2Vector) -> Result<Gf2Vector, Gf2Error> {
        if b.len() != self.n_rows {
            return Err(Gf2Error::DimensionMismatch {
                expected: self.n_rows,
                got: b.len(),
            });
        }
        let rhs: Vec<Gf2Vector> = b.iter().map(|bit| Gf2Vector::from_bits([bit])).collect();
        let ech = Echelon::reduce(&self.rows, self.n_cols, Some(&rhs));
        let tracked = ech.tracked.expect("tracked rows requested");
        let mut x = Gf2Vector::zeros(self.n_cols);
        for (r, &col) in ech.pivots.iter().enumerate() {
            x.set(col, tracked[r].get(0));
        }
        // Rows past the pivots are zero on the left; any one on the right is a contradiction.
        if tracked[ech.pivots.len()..].iter().any(|t| t.get(0)) {
            return Err(Gf2Error::NoSolution);
        }
        Ok(x)
    }
}

impl fmt::Debug for Gf2Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Gf2Matrix {}x{} [", self.n_rows, self.n_cols)?;
        for r in &self.rows {
            writeln!(f, "  {}", r.to_bit_string())?;
        }
        write!(f, "]")
    }
}

/// Reduced row echelon form, optionally applying the same row operations to a
/// companion block (identity for inversion, right-hand side for solving).
struct Echelon {
    pivots: Vec<usize>,
    tracked: Option<Vec<Gf2Vector>>,
}

impl Echelon {
    fn reduce(rows: &[Gf2Vector], n_cols: usize, companion: Option<&[Gf2Vector]>) -> Echelon {
        let mut m: Vec<Gf2Vector> = rows.to_vec();
        let mut t: Option<Vec<Gf2Vector>> = companion.map(|c| c.to_vec());
        let mut pivots = Vec::new();
        let mut r = 0;
        for col in 0..n_cols {
            if r == m.len() {
                break;
            }
            // lowest row index holding a one in this column
            let Some(p) = (r..m.len()).find(|&i| m[i].get(col)) else {
                continue;
            };
            m.swap(r, p);
            if let Some(t) = t.as_mut() {
                t.swap(r, p);
            }
            for i in 0..m.len() {
                if i != r && m[i].get(col) {
                    let pivot_row = m[r].clone();
                    m[i].xor_assign(&pivot_row);
                    if let Some(t) = t.as_mut() {
                        let pivot_t = t[r].clone();
                        t[i].xor_assign(&pivot_t);
                    }
                }
            }
            pivots.push(col);
            r += 1;
        }
        Echelon { pivots, tracked: t }
    }
}
