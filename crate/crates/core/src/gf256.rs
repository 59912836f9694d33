//! Arithmetic in GF(2^8) with the reduction polynomial x^8 + x^4 + x^3 + x + 1 (0x11B),
//! plus dense matrices over the field.
//!
//! Multiplication goes through a 64 KiB product table built at compile time by
//! shift-and-reduce, so every product is bit-identical to the polynomial definition.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Sub};

use thiserror::Error;

/// Reduction polynomial, including the x^8 term.
pub const POLYNOMIAL: u16 = 0x11B;

/// Extension degree of the field over GF(2).
pub const FIELD_BITS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("division by zero in GF(2^8)")]
    DivisionByZero,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular matrix: rank {rank} of {size}")]
    Singular { rank: usize, size: usize },
}

const fn shift_mul(mut a: u8, mut b: u8) -> u8 {
    let mut acc = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        let carry = a & 0x80 != 0;
        a <<= 1;
        if carry {
            a ^= (POLYNOMIAL & 0xFF) as u8;
        }
        b >>= 1;
    }
    acc
}

const fn build_mul_table() -> [[u8; 256]; 256] {
    let mut table = [[0u8; 256]; 256];
    let mut a = 0;
    while a < 256 {
        let mut b = 0;
        while b < 256 {
            table[a][b] = shift_mul(a as u8, b as u8);
            b += 1;
        }
        a += 1;
    }
    table
}

const fn build_inv_table() -> [u8; 256] {
    let mut inv = [0u8; 256];
    let mut a = 1;
    while a < 256 {
        let mut b = 1;
        while b < 256 {
            if shift_mul(a as u8, b as u8) == 1 {
                inv[a] = b as u8;
                break;
            }
            b += 1;
        }
        a += 1;
    }
    inv
}

static MUL_TABLE: [[u8; 256]; 256] = build_mul_table();
static INV_TABLE: [u8; 256] = build_inv_table();

/// Adds two field elements (XOR).
#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    MUL_TABLE[a as usize][b as usize]
}

/// Multiplicative inverse; zero has none.
#[inline]
pub fn inv(a: u8) -> Result<u8, FieldError> {
    if a == 0 {
        Err(FieldError::DivisionByZero)
    } else {
        Ok(INV_TABLE[a as usize])
    }
}

/// The 256-entry row `x -> c * x`.
#[inline]
pub fn mul_row(c: u8) -> &'static [u8; 256] {
    &MUL_TABLE[c as usize]
}

/// `dst[i] ^= c * src[i]` for every byte. Slices must have equal length.
#[inline]
pub fn mul_acc(dst: &mut [u8], src: &[u8], c: u8) {
    debug_assert_eq!(dst.len(), src.len());
    match c {
        0 => {}
        1 => {
            for (d, s) in dst.iter_mut().zip(src) {
                *d ^= *s;
            }
        }
        _ => {
            let row = mul_row(c);
            for (d, s) in dst.iter_mut().zip(src) {
                *d ^= row[*s as usize];
            }
        }
    }
}

/// `buf[i] = c * buf[i]`.
#[inline]
pub fn scale(buf: &mut [u8], c: u8) {
    if c == 1 {
        return;
    }
    let row = mul_row(c);
    for b in buf.iter_mut() {
        *b = row[*b as usize];
    }
}

/// One element of GF(2^8).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(transparent)]
pub struct FieldElement(pub u8);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    pub fn inv(self) -> Result<FieldElement, FieldError> {
        inv(self.0).map(FieldElement)
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

impl From<u8> for FieldElement {
    fn from(v: u8) -> Self {
        FieldElement(v)
    }
}

#[allow(clippy::suspicious_arithmetic_impl, clippy::suspicious_op_assign_impl)]
impl Add for FieldElement {
    type Output = FieldElement;
    fn add(self, rhs: Self) -> Self {
        FieldElement(self.0 ^ rhs.0)
    }
}

#[allow(clippy::suspicious_arithmetic_impl, clippy::suspicious_op_assign_impl)]
impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: Self) {
        self.0 ^= rhs.0;
    }
}

// Characteristic 2: subtraction is addition.
#[allow(clippy::suspicious_arithmetic_impl, clippy::suspicious_op_assign_impl)]
impl Sub for FieldElement {
    type Output = FieldElement;
    fn sub(self, rhs: Self) -> Self {
        FieldElement(self.0 ^ rhs.0)
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;
    fn mul(self, rhs: Self) -> Self {
        FieldElement(mul(self.0, rhs.0))
    }
}

impl MulAssign for FieldElement {
    fn mul_assign(&mut self, rhs: Self) {
        self.0 = mul(self.0, rhs.0);
    }
}

/// Dense row-major matrix over GF(2^8).
#[derive(Clone, PartialEq, Eq)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl fmt::Debug for FieldMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "FieldMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:02x?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl FieldMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<u8>) -> Result<Self, FieldError> {
        if data.len() != rows * cols {
            return Err(FieldError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(FieldMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        FieldMatrix { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self, FieldError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(FieldError::Dimension(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(FieldMatrix { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> FieldElement {
        FieldElement(self.data[r * self.cols + c])
    }

    pub fn set(&mut self, r: usize, c: usize, v: FieldElement) {
        self.data[r * self.cols + c] = v.0;
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    /// Applies the matrix to a stack of equal-length byte vectors:
    /// output `u` is `sum_l m[u][l] * v[l]`, computed byte-wise.
    pub fn mul_vectors<V: AsRef<[u8]>>(&self, vectors: &[V]) -> Result<Vec<Vec<u8>>, FieldError> {
        if vectors.len() != self.cols {
            return Err(FieldError::Dimension(format!(
                "{} vectors for a matrix with {} columns",
                vectors.len(),
                self.cols
            )));
        }
        let len = vectors.first().map_or(0, |v| v.as_ref().len());
        if vectors.iter().any(|v| v.as_ref().len() != len) {
            return Err(FieldError::Dimension("vectors differ in length".into()));
        }
        let out = (0..self.rows)
            .map(|r| {
                let mut acc = vec![0u8; len];
                for (c, v) in self.row(r).iter().zip(vectors) {
                    mul_acc(&mut acc, v.as_ref(), *c);
                }
                acc
            })
            .collect();
        Ok(out)
    }

    /// Matrix product `self * rhs`.
    pub fn mul_matrix(&self, rhs: &FieldMatrix) -> Result<FieldMatrix, FieldError> {
        if self.cols != rhs.rows {
            return Err(FieldError::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = FieldMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let dst = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for (l, c) in self.row(r).iter().enumerate() {
                mul_acc(dst, rhs.row(l), *c);
            }
        }
        Ok(out)
    }

    /// Gauss-Jordan inversion with first-nonzero pivot selection.
    pub fn invert(&self) -> Result<FieldMatrix, FieldError> {
        if self.rows != self.cols {
            return Err(FieldError::Dimension(format!(
                "cannot invert a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut work = self.clone();
        let mut out = FieldMatrix::identity(n);
        for col in 0..n {
            let Some(pivot) = (col..n).find(|&r| work.data[r * n + col] != 0) else {
                return Err(FieldError::Singular { rank: self.rank(), size: n });
            };
            if pivot != col {
                work.swap_rows(pivot, col);
                out.swap_rows(pivot, col);
            }
            let scale_by = INV_TABLE[work.data[col * n + col] as usize];
            scale(work.row_mut(col), scale_by);
            scale(out.row_mut(col), scale_by);
            for r in 0..n {
                let factor = work.data[r * n + col];
                if r == col || factor == 0 {
                    continue;
                }
                let (dst, src) = work.two_rows(r, col);
                mul_acc(dst, src, factor);
                let (dst, src) = out.two_rows(r, col);
                mul_acc(dst, src, factor);
            }
        }
        Ok(out)
    }

    pub fn rank(&self) -> usize {
        let mut echelon = RowEchelon::new(self.cols);
        for r in 0..self.rows {
            echelon.insert(self.row(r));
        }
        echelon.rank()
    }

    fn row_mut(&mut self, r: usize) -> &mut [u8] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let cols = self.cols;
        let (lo, hi) = (a.min(b), a.max(b));
        let (head, tail) = self.data.split_at_mut(hi * cols);
        head[lo * cols..(lo + 1) * cols].swap_with_slice(&mut tail[..cols]);
    }

    /// Mutable row `dst` and shared row `src`, `dst != src`.
    fn two_rows(&mut self, dst: usize, src: usize) -> (&mut [u8], &[u8]) {
        let cols = self.cols;
        if dst < src {
            let (head, tail) = self.data.split_at_mut(src * cols);
            (&mut head[dst * cols..(dst + 1) * cols], &tail[..cols])
        } else {
            let (head, tail) = self.data.split_at_mut(dst * cols);
            (&mut tail[..cols], &head[src * cols..(src + 1) * cols])
        }
    }
}

/// Incrementally maintained reduced row basis, used to track rank as rows arrive.
///
/// Each stored basis row is normalised so its pivot entry is 1.
#[derive(Debug, Clone)]
pub struct RowEchelon {
    cols: usize,
    basis: Vec<(usize, Vec<u8>)>,
    scratch: Vec<u8>,
}

impl RowEchelon {
    pub fn new(cols: usize) -> Self {
        RowEchelon { cols, basis: Vec::new(), scratch: vec![0; cols] }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn is_full(&self) -> bool {
        self.basis.len() == self.cols
    }

    /// Reduces `row` against the basis; keeps it and returns true when it is independent.
    pub fn insert(&mut self, row: &[u8]) -> bool {
        assert_eq!(row.len(), self.cols, "row width");
        if self.is_full() {
            return false;
        }
        self.scratch.copy_from_slice(row);
        for (pivot, b) in &self.basis {
            let factor = self.scratch[*pivot];
            if factor != 0 {
                mul_acc(&mut self.scratch, b, factor);
            }
        }
        let Some(pivot) = self.scratch.iter().position(|&v| v != 0) else {
            return false;
        };
        let mut kept = self.scratch.clone();
        let norm = INV_TABLE[kept[pivot] as usize];
        scale(&mut kept, norm);
        self.basis.push((pivot, kept));
        true
    }
}
