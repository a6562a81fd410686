//! Arithmetic in GF(2^m), 1 <= m <= 16, and matrix rank over it.
//!
//! Elements are stored as `u16` bit patterns of polynomials over GF(2).
//! Multiplication goes through log/antilog tables built from a fixed
//! primitive polynomial per `m`:
//!
//! | m | polynomial | m | polynomial |
//! |---|------------|---|------------|
//! | 1 | 0x3        | 9 | 0x211      |
//! | 2 | 0x7        | 10 | 0x409     |
//! | 3 | 0xB        | 11 | 0x805     |
//! | 4 | 0x13       | 12 | 0x1053    |
//! | 5 | 0x25       | 13 | 0x201B    |
//! | 6 | 0x43       | 14 | 0x4443    |
//! | 7 | 0x89       | 15 | 0x8003    |
//! | 8 | 0x11D      | 16 | 0x1100B   |

use rand::Rng;

use crate::error::{Error, Result};

pub const PRIMITIVE_POLYNOMIALS: [u32; 17] = [
    0, 0x3, 0x7, 0xB, 0x13, 0x25, 0x43, 0x89, 0x11D, 0x211, 0x409, 0x805, 0x1053, 0x201B, 0x4443, 0x8003,
    0x1100B,
];

pub type FieldElement = u16;

#[derive(Debug, Clone)]
pub struct GaloisField {
    bits: u32,
    polynomial: u32,
    exp: Vec<u16>,
    log: Vec<u32>,
}

impl GaloisField {
    pub fn new(bits: u32) -> Result<Self> {
        if !(1..=16).contains(&bits) {
            return Err(Error::FieldSize(bits));
        }
        let polynomial = PRIMITIVE_POLYNOMIALS[bits as usize];
        let order = 1usize << bits;
        let group = order - 1;
        let mut exp = vec![0u16; 2 * group];
        let mut log = vec![0u32; order];
        let mut x: u32 = 1;
        for i in 0..group {
            exp[i] = x as u16;
            log[x as usize] = i as u32;
            x <<= 1;
            if x & (1 << bits) != 0 {
                x ^= polynomial;
            }
        }
        assert_eq!(x, 1, "polynomial 0x{polynomial:x} is not primitive");
        for i in group..2 * group {
            exp[i] = exp[i - group];
        }
        Ok(Self { bits, polynomial, exp, log })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Field order q = 2^m.
    pub fn order(&self) -> u32 {
        1 << self.bits
    }

    pub fn polynomial(&self) -> u32 {
        self.polynomial
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        a ^ b
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[(self.log[a as usize] + self.log[b as usize]) as usize]
        }
    }

    pub fn inv(&self, a: FieldElement) -> Result<FieldElement> {
        if a == 0 {
            return Err(Error::InverseOfZero);
        }
        let group = self.order() - 1;
        Ok(self.exp[((group - self.log[a as usize]) % group) as usize])
    }

    /// Uniform element of the field, or of its nonzero elements when `nonzero_only`.
    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R, nonzero_only: bool) -> FieldElement {
        if nonzero_only {
            rng.gen_range(1..self.order()) as u16
        } else {
            rng.gen_range(0..self.order()) as u16
        }
    }

    /// `acc += coeff * x`, element-wise.
    #[inline]
    pub fn axpy(&self, acc: &mut [FieldElement], coeff: FieldElement, x: &[FieldElement]) {
        if coeff == 0 {
            return;
        }
        let lc = self.log[coeff as usize];
        for (a, &v) in acc.iter_mut().zip(x) {
            if v != 0 {
                *a ^= self.exp[(lc + self.log[v as usize]) as usize];
            }
        }
    }
}

/// Dense row-major matrix over a [`GaloisField`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<FieldElement>,
}

impl FieldMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, entries: Vec<FieldElement>) -> Self {
        assert_eq!(entries.len(), rows * cols);
        Self { rows, cols, entries }
    }

    pub fn random<R: Rng + ?Sized>(field: &GaloisField, rows: usize, cols: usize, rng: &mut R) -> Self {
        let entries = (0..rows * cols).map(|_| field.random_element(rng, false)).collect();
        Self { rows, cols, entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> FieldElement {
        self.entries[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: FieldElement) {
        self.entries[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[FieldElement] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul(&self, field: &GaloisField, other: &FieldMatrix) -> FieldMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = FieldMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let mut acc = vec![0; other.cols];
            for k in 0..self.cols {
                field.axpy(&mut acc, self.get(r, k), other.row(k));
            }
            out.entries[r * other.cols..(r + 1) * other.cols].copy_from_slice(&acc);
        }
        out
    }

    pub fn rank(&self, field: &GaloisField) -> usize {
        rank_of_rows(field, self.entries.clone(), self.rows, self.cols)
    }
}

/// Rank of a row-major `rows x cols` matrix by Gaussian elimination. Consumes the buffer.
pub fn rank_of_rows(field: &GaloisField, mut m: Vec<FieldElement>, rows: usize, cols: usize) -> usize {
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let Some(p) = (rank..rows).find(|&r| m[r * cols + c] != 0) else { continue };
        if p != rank {
            for k in 0..cols {
                m.swap(p * cols + k, rank * cols + k);
            }
        }
        let inv = field.inv(m[rank * cols + c]).expect("pivot is nonzero");
        let pivot: Vec<FieldElement> = m[rank * cols..(rank + 1) * cols].iter().map(|&v| field.mul(v, inv)).collect();
        for r in rank + 1..rows {
            let f = m[r * cols + c];
            if f != 0 {
                field.axpy(&mut m[r * cols..(r + 1) * cols], f, &pivot);
            }
        }
        rank += 1;
    }
    rank
}
