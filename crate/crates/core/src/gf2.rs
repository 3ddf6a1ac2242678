//! Dense bit matrices over GF(2) and an incremental row-reduced basis.

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words: usize,
    data: Vec<u64>,
}

impl std::fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BitMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let s: String = (0..self.cols).map(|c| if self.get(r, c) { '1' } else { '0' }).collect();
            writeln!(f, "  {s}")?;
        }
        Ok(())
    }
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64);
        BitMatrix { rows, cols, words, data: vec![0; rows * words] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if f(r, c) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.words + c / 64] >> (c % 64) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        let w = &mut self.data[r * self.words + c / 64];
        if v {
            *w |= 1 << (c % 64);
        } else {
            *w &= !(1 << (c % 64));
        }
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.words..(r + 1) * self.words]
    }

    /// row[dst] ^= row[src]
    pub fn add_row(&mut self, src: usize, dst: usize) {
        assert_ne!(src, dst);
        for k in 0..self.words {
            let v = self.data[src * self.words + k];
            self.data[dst * self.words + k] ^= v;
        }
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    t.set(c, r, true);
                }
            }
        }
        t
    }

    pub fn mul(&self, other: &BitMatrix) -> Result<BitMatrix> {
        if self.cols != other.rows {
            return Err(Error::InvalidConfig(format!(
                "shape mismatch {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = BitMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                if self.get(r, k) {
                    for w in 0..out.words {
                        out.data[r * out.words + w] ^= other.data[k * other.words + w];
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[bool]) -> Vec<bool> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| (0..self.cols).filter(|&c| v[c] && self.get(r, c)).count() % 2 == 1)
            .collect()
    }

    pub fn kron(&self, other: &BitMatrix) -> BitMatrix {
        BitMatrix::from_fn(self.rows * other.rows, self.cols * other.cols, |r, c| {
            self.get(r / other.rows, c / other.cols) && other.get(r % other.rows, c % other.cols)
        })
    }

    /// Gauss-Jordan inverse. Errors on a singular matrix.
    pub fn inverse(&self) -> Result<BitMatrix> {
        if self.rows != self.cols {
            return Err(Error::InvalidConfig("inverse of non-square matrix".into()));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = BitMatrix::identity(n);
        for col in 0..n {
            let pivot = (col..n)
                .find(|&r| a.get(r, col))
                .ok_or_else(|| Error::InvalidConfig("singular matrix".into()))?;
            if pivot != col {
                a.swap_rows(pivot, col);
                inv.swap_rows(pivot, col);
            }
            for r in 0..n {
                if r != col && a.get(r, col) {
                    a.add_row(col, r);
                    inv.add_row(col, r);
                }
            }
        }
        Ok(inv)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for k in 0..self.words {
            self.data.swap(a * self.words + k, b * self.words + k);
        }
    }
}

/// Bit-reversal of the low `bits` bits of `i`.
pub fn bit_reverse(i: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Parity of `a & b` over packed words.
pub fn dot(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum::<u32>() % 2 == 1
}

/// Linear constraints `<row, u> = value` over unknown bits `u`, kept fully
/// reduced so that membership queries are a single pass.
#[derive(Clone, Debug)]
pub struct Basis {
    words: usize,
    /// (pivot column, row, value)
    rows: Vec<(usize, Vec<u64>, bool)>,
}

/// Outcome of querying a linear functional against a [`Basis`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Knowledge {
    Determined(bool),
    Undetermined,
}

impl Basis {
    pub fn new(unknowns: usize) -> Self {
        Basis { words: unknowns.div_ceil(64).max(1), rows: Vec::new() }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    fn reduce(&self, row: &mut [u64], value: &mut bool) {
        for (p, r, v) in &self.rows {
            if row[p / 64] >> (p % 64) & 1 == 1 {
                for (a, b) in row.iter_mut().zip(r) {
                    *a ^= b;
                }
                *value ^= v;
            }
        }
    }

    pub fn query(&self, row: &[u64]) -> Knowledge {
        let mut r = row.to_vec();
        r.resize(self.words, 0);
        let mut v = false;
        self.reduce(&mut r, &mut v);
        if r.iter().all(|&w| w == 0) {
            Knowledge::Determined(v)
        } else {
            Knowledge::Undetermined
        }
    }

    /// Add a constraint. Errors if it contradicts what is already known.
    pub fn insert(&mut self, row: &[u64], value: bool) -> Result<()> {
        let mut r = row.to_vec();
        r.resize(self.words, 0);
        let mut v = value;
        self.reduce(&mut r, &mut v);
        let Some(p) = first_set(&r) else {
            return if v {
                Err(Error::InconsistentEvidence("contradictory linear constraint".into()))
            } else {
                Ok(())
            };
        };
        for (_, other, ov) in &mut self.rows {
            if other[p / 64] >> (p % 64) & 1 == 1 {
                for (a, b) in other.iter_mut().zip(&r) {
                    *a ^= b;
                }
                *ov ^= v;
            }
        }
        self.rows.push((p, r, v));
        Ok(())
    }
}

fn first_set(r: &[u64]) -> Option<usize> {
    r.iter()
        .enumerate()
        .find(|(_, &w)| w != 0)
        .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
}
