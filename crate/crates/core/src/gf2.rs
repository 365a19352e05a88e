//! Arithmetic in GF(2^m) via exp/log tables, and GF(2) linear algebra on
//! packed bit vectors.
//!
//! Elements are written in the polynomial basis `{1, ν, …, ν^(m-1)}` where
//! `ν` is the root of the field polynomial. Coordinate `j` is bit `j` of the
//! packed word, and the text form prints coordinate 0 first, so the element
//! `1` of GF(16) reads `1000`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Largest supported extension degree; tables hold `2^m` entries.
pub const MAX_DEGREE: u32 = 24;

/// Environment variable naming a polynomial table file that overrides the
/// bundled defaults. One `m hexpoly` pair per line, `#` starts a comment.
pub const POLY_TABLE_ENV: &str = "SPREADCODE_POLY_TABLE";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GfError {
    #[error("extension degree {0} is outside the supported range 2..={MAX_DEGREE}")]
    DegreeOutOfRange(u32),
    #[error("polynomial {poly:#x} has degree {found}, expected {expected}")]
    DegreeMismatch { poly: u32, expected: u32, found: u32 },
    #[error("polynomial {poly:#x} is not primitive")]
    NotPrimitive { poly: u32 },
    #[error("width mismatch: {0} vs {1}")]
    WidthMismatch(u32, u32),
    #[error("logarithm of zero")]
    LogOfZero,
    #[error("invalid bit string {0:?}")]
    InvalidBits(String),
    #[error("no primitive polynomial known for degree {0}")]
    NoDefaultPoly(u32),
    #[error("polynomial table: {0}")]
    PolyTable(String),
}

/// A packed vector over GF(2) of width at most 32.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVector {
    width: u8,
    bits: u32,
}

impl BitVector {
    pub fn new(width: u32, bits: u32) -> Self {
        assert!((1..=32).contains(&width), "bit vector width {width} out of range");
        let mask = if width == 32 { u32::MAX } else { (1u32 << width) - 1 };
        assert!(bits & !mask == 0, "bits {bits:#x} exceed width {width}");
        BitVector { width: width as u8, bits }
    }

    pub fn zero(width: u32) -> Self {
        Self::new(width, 0)
    }

    /// The canonical unit vector `e_i` (0-based coordinate).
    pub fn unit(width: u32, i: u32) -> Self {
        Self::new(width, 1 << i)
    }

    pub fn width(&self) -> u32 {
        self.width as u32
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    pub fn bit(&self, j: u32) -> bool {
        self.bits >> j & 1 == 1
    }

    pub fn try_xor(&self, other: &BitVector) -> Result<BitVector, GfError> {
        check_width(self.width(), other.width())?;
        Ok(BitVector { width: self.width, bits: self.bits ^ other.bits })
    }
}

impl std::ops::BitXor for BitVector {
    type Output = BitVector;

    fn bitxor(self, rhs: BitVector) -> BitVector {
        assert_eq!(self.width, rhs.width, "xor of vectors with different widths");
        BitVector { width: self.width, bits: self.bits ^ rhs.bits }
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.width() {
            f.write_str(if self.bit(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({self})")
    }
}

impl FromStr for BitVector {
    type Err = GfError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().trim_start_matches('(').trim_end_matches(')');
        if s.is_empty() || s.len() > 32 {
            return Err(GfError::InvalidBits(s.to_string()));
        }
        let mut bits = 0u32;
        for (j, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => bits |= 1 << j,
                _ => return Err(GfError::InvalidBits(s.to_string())),
            }
        }
        Ok(BitVector::new(s.len() as u32, bits))
    }
}

fn check_width(a: u32, b: u32) -> Result<(), GfError> {
    if a == b {
        Ok(())
    } else {
        Err(GfError::WidthMismatch(a, b))
    }
}

fn check_widths(rows: &[BitVector]) -> Result<Option<u32>, GfError> {
    let Some(first) = rows.first() else {
        return Ok(None);
    };
    for r in rows {
        check_width(first.width(), r.width())?;
    }
    Ok(Some(first.width()))
}

/// Coordinatewise XOR. Addition in characteristic 2.
pub fn gf_add(a: BitVector, b: BitVector) -> Result<BitVector, GfError> {
    a.try_xor(&b)
}

/// Degree of a nonzero polynomial packed with bit `i` = coefficient of `x^i`.
fn poly_degree(poly: u32) -> u32 {
    31 - poly.leading_zeros()
}

/// Primitive polynomials keyed by degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyTable {
    entries: BTreeMap<u32, u32>,
}

const BUNDLED_POLYS: &[(u32, u32)] = &[
    (2, 0x7),
    (3, 0xb),
    (4, 0x13),
    (5, 0x25),
    (6, 0x43),
    (7, 0x83),
    (8, 0x11d),
    (9, 0x211),
    (10, 0x409),
    (11, 0x805),
    (12, 0x1053),
    (13, 0x201b),
    (14, 0x4443),
    (15, 0x8003),
    (16, 0x1100b),
    (17, 0x20009),
    (18, 0x40081),
    (19, 0x80027),
    (20, 0x100009),
    (21, 0x200005),
    (22, 0x400003),
    (23, 0x800021),
    (24, 0x1000087),
];

impl PolyTable {
    pub fn bundled() -> Self {
        PolyTable { entries: BUNDLED_POLYS.iter().copied().collect() }
    }

    /// Parses `m hexpoly` lines. Entries are not checked for primitivity
    /// here; [`GfContext::new`] rejects bad ones when they are used.
    pub fn parse(text: &str) -> Result<Self, GfError> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || GfError::PolyTable(format!("line {}: {line:?}", lineno + 1));
            let mut parts = line.split_whitespace();
            let m: u32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let hex = parts.next().ok_or_else(bad)?;
            let hex = hex.trim_start_matches("0x").trim_start_matches("0X");
            let poly = u32::from_str_radix(hex, 16).map_err(|_| bad())?;
            if parts.next().is_some() {
                return Err(bad());
            }
            entries.insert(m, poly);
        }
        Ok(PolyTable { entries })
    }

    /// Bundled table overlaid with the file named by `SPREADCODE_POLY_TABLE`, if set.
    pub fn from_env() -> Result<Self, GfError> {
        let mut table = Self::bundled();
        if let Ok(path) = std::env::var(POLY_TABLE_ENV) {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| GfError::PolyTable(format!("{path}: {e}")))?;
            table.entries.extend(Self::parse(&text)?.entries);
        }
        Ok(table)
    }

    pub fn get(&self, m: u32) -> Result<u32, GfError> {
        self.entries.get(&m).copied().ok_or(GfError::NoDefaultPoly(m))
    }
}

impl Default for PolyTable {
    fn default() -> Self {
        Self::bundled()
    }
}

/// GF(2^m) with exp/log tables for the generator `ν = x`.
#[derive(Clone)]
pub struct GfContext {
    m: u32,
    poly: u32,
    /// `exp[i] = ν^i`, stored twice over so a sum of two logs indexes directly.
    exp: Vec<u32>,
    /// `log[ν^i] = i`; `log[0]` is unused.
    log: Vec<u32>,
}

impl fmt::Debug for GfContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GfContext").field("m", &self.m).field("poly", &format_args!("{:#x}", self.poly)).finish()
    }
}

impl GfContext {
    /// Builds the tables, rejecting polynomials for which `x` does not have
    /// order exactly `2^m - 1`.
    pub fn new(m: u32, poly: u32) -> Result<Self, GfError> {
        if !(2..=MAX_DEGREE).contains(&m) {
            return Err(GfError::DegreeOutOfRange(m));
        }
        if poly == 0 || poly_degree(poly) != m {
            let found = if poly == 0 { 0 } else { poly_degree(poly) };
            return Err(GfError::DegreeMismatch { poly, expected: m, found });
        }
        let order = (1usize << m) - 1;
        let top = 1u32 << m;
        let mut exp = vec![0u32; 2 * order];
        let mut log = vec![0u32; order + 1];
        let mut x = 1u32;
        for (i, e) in exp.iter_mut().take(order).enumerate() {
            if i > 0 && x == 1 {
                return Err(GfError::NotPrimitive { poly });
            }
            *e = x;
            log[x as usize] = i as u32;
            x <<= 1;
            if x & top != 0 {
                x ^= poly;
            }
        }
        if x != 1 {
            return Err(GfError::NotPrimitive { poly });
        }
        exp.copy_within(0..order, order);
        Ok(GfContext { m, poly, exp, log })
    }

    pub fn with_table(m: u32, table: &PolyTable) -> Result<Self, GfError> {
        Self::new(m, table.get(m)?)
    }

    /// Context under the bundled default polynomial for `m`.
    pub fn with_default(m: u32) -> Result<Self, GfError> {
        Self::with_table(m, &PolyTable::bundled())
    }

    pub fn degree(&self) -> u32 {
        self.m
    }

    pub fn poly(&self) -> u32 {
        self.poly
    }

    /// Size of the multiplicative group, `2^m - 1`.
    pub fn order(&self) -> u32 {
        (1u32 << self.m) - 1
    }

    pub fn element(&self, bits: u32) -> BitVector {
        BitVector::new(self.m, bits)
    }

    pub fn one(&self) -> BitVector {
        self.element(1)
    }

    /// `ν^e`, exponent reduced modulo the group order.
    pub fn exp(&self, e: u64) -> BitVector {
        self.element(self.exp[(e % self.order() as u64) as usize])
    }

    fn check(&self, a: &BitVector) -> Result<(), GfError> {
        check_width(self.m, a.width())
    }

    pub fn add(&self, a: BitVector, b: BitVector) -> Result<BitVector, GfError> {
        self.check(&a)?;
        gf_add(a, b)
    }

    pub fn mul(&self, a: BitVector, b: BitVector) -> Result<BitVector, GfError> {
        self.check(&a)?;
        self.check(&b)?;
        Ok(self.element(self.mul_raw(a.bits, b.bits)))
    }

    pub(crate) fn mul_raw(&self, a: u32, b: u32) -> u32 {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[(self.log[a as usize] + self.log[b as usize]) as usize]
        }
    }

    pub fn pow(&self, a: BitVector, e: u64) -> Result<BitVector, GfError> {
        self.check(&a)?;
        if a.is_zero() {
            return Ok(if e == 0 { self.one() } else { a });
        }
        let l = self.log[a.bits as usize] as u64;
        let r = (l * (e % self.order() as u64)) % self.order() as u64;
        Ok(self.exp(r))
    }

    pub fn log(&self, a: BitVector) -> Result<u32, GfError> {
        self.check(&a)?;
        self.log_raw(a.bits)
    }

    pub(crate) fn log_raw(&self, a: u32) -> Result<u32, GfError> {
        if a == 0 {
            Err(GfError::LogOfZero)
        } else {
            Ok(self.log[a as usize])
        }
    }

    pub fn inv(&self, a: BitVector) -> Result<BitVector, GfError> {
        let l = self.log(a)?;
        Ok(self.exp((self.order() - l) as u64))
    }
}

/// Incremental row-echelon state over packed rows of width ≤ 32. Each stored
/// row is indexed by its leading (highest) set bit.
#[derive(Clone, Debug, Default)]
pub struct Echelon {
    rows: [u32; 32],
    rank: u32,
}

impl Echelon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rank(&self) -> u32 {
        self.rank
    }

    pub fn reduce(&self, mut v: u32) -> u32 {
        while v != 0 {
            let top = 31 - v.leading_zeros();
            let row = self.rows[top as usize];
            if row == 0 {
                break;
            }
            v ^= row;
        }
        v
    }

    /// Adds `v`; returns whether the rank grew.
    pub fn insert(&mut self, v: u32) -> bool {
        let v = self.reduce(v);
        if v == 0 {
            return false;
        }
        self.rows[(31 - v.leading_zeros()) as usize] = v;
        self.rank += 1;
        true
    }

    pub fn contains(&self, v: u32) -> bool {
        self.reduce(v) == 0
    }
}

/// GF(2) rank of a list of equal-width vectors. The empty list has rank 0.
pub fn rank(rows: &[BitVector]) -> Result<usize, GfError> {
    check_widths(rows)?;
    let mut ech = Echelon::new();
    for r in rows {
        ech.insert(r.bits);
    }
    Ok(ech.rank as usize)
}

/// Whether `target` lies in the span of `rows`.
pub fn in_span(target: BitVector, rows: &[BitVector]) -> Result<bool, GfError> {
    if let Some(w) = check_widths(rows)? {
        check_width(w, target.width())?;
    }
    let mut ech = Echelon::new();
    for r in rows {
        ech.insert(r.bits);
    }
    Ok(ech.contains(target.bits))
}

/// Set of pool indices, one bit per index.
#[derive(Clone, PartialEq, Eq)]
struct IndexMask(Vec<u64>);

impl IndexMask {
    fn new(len: usize) -> Self {
        IndexMask(vec![0; len.div_ceil(64).max(1)])
    }

    fn singleton(len: usize, i: usize) -> Self {
        let mut m = Self::new(len);
        m.0[i / 64] |= 1 << (i % 64);
        m
    }

    fn xor_with(&mut self, other: &IndexMask) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a ^= b;
        }
    }

    fn count(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }

    /// True when `self` sorts before `other` as ascending index lists of the
    /// same length: the lowest index where they differ belongs to `self`.
    fn lex_less(&self, other: &IndexMask) -> bool {
        for (a, b) in self.0.iter().zip(&other.0) {
            let diff = a ^ b;
            if diff != 0 {
                return a & (diff & diff.wrapping_neg()) != 0;
            }
        }
        false
    }

    fn indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (w, &word) in self.0.iter().enumerate() {
            let mut word = word;
            while word != 0 {
                out.push(w * 64 + word.trailing_zeros() as usize);
                word &= word - 1;
            }
        }
        out
    }
}

/// Kernel dimensions up to this size are searched exhaustively for the
/// smallest solution; larger kernels return the elimination solution.
const MAX_KERNEL_SEARCH: usize = 20;

/// Expresses each target as an XOR of pool vectors.
///
/// Each result is the ascending list of pool indices whose XOR equals the
/// target, or `None` when the target is outside the pool's span. The
/// elimination processes the pool in index order (lowest-index pivots). When
/// the pool has dependencies the smallest subset is chosen, ties broken by
/// the lexicographically smallest index list.
pub fn solve_xor(targets: &[BitVector], pool: &[BitVector]) -> Result<Vec<Option<Vec<usize>>>, GfError> {
    let width = match check_widths(pool)? {
        Some(w) => Some(w),
        None => check_widths(targets)?,
    };
    if let Some(w) = width {
        for t in targets {
            check_width(w, t.width())?;
        }
    }
    let len = pool.len();
    // basis[bit] = (row, combination of pool indices producing it)
    let mut basis: Vec<Option<(u32, IndexMask)>> = vec![None; 32];
    let mut kernel: Vec<IndexMask> = Vec::new();
    let reduce = |basis: &[Option<(u32, IndexMask)>], mut v: u32, mut combo: IndexMask| {
        while v != 0 {
            let top = (31 - v.leading_zeros()) as usize;
            match &basis[top] {
                Some((row, c)) => {
                    v ^= row;
                    combo.xor_with(c);
                }
                None => break,
            }
        }
        (v, combo)
    };
    for (i, p) in pool.iter().enumerate() {
        let (v, combo) = reduce(&basis, p.bits, IndexMask::singleton(len, i));
        if v == 0 {
            kernel.push(combo);
        } else {
            basis[(31 - v.leading_zeros()) as usize] = Some((v, combo));
        }
    }

    let mut out = Vec::with_capacity(targets.len());
    for t in targets {
        let (v, particular) = reduce(&basis, t.bits, IndexMask::new(len));
        if v != 0 {
            out.push(None);
            continue;
        }
        out.push(Some(smallest_in_coset(particular, &kernel).indices()));
    }
    Ok(out)
}

fn smallest_in_coset(particular: IndexMask, kernel: &[IndexMask]) -> IndexMask {
    if kernel.is_empty() || kernel.len() > MAX_KERNEL_SEARCH {
        return particular;
    }
    let mut best = particular.clone();
    let mut best_count = best.count();
    let mut cur = particular;
    // Gray-code walk over all kernel combinations.
    for step in 1u64..(1u64 << kernel.len()) {
        let flip = step.trailing_zeros() as usize;
        cur.xor_with(&kernel[flip]);
        let c = cur.count();
        if c < best_count || (c == best_count && cur.lex_less(&best)) {
            best = cur.clone();
            best_count = c;
        }
    }
    best
}
