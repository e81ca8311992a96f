//! Dense matrices over a [`FieldSpec`], exact rank, Hamming distance and
//! serialization.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSpec, Modulus, Scalar};

/// Rows at or above this count are eliminated in parallel.
const PAR_ROWS: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    field: FieldSpec,
    entries: Vec<Scalar>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, field: FieldSpec, entries: Vec<Scalar>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!("{} entries for a {rows}x{cols} matrix", entries.len())));
        }
        if let Some(bad) = entries.iter().find(|e| !field.contains(e)) {
            return Err(Error::FieldMismatch { left: field.label(), right: format!("entry {bad}") });
        }
        Ok(DenseMatrix { rows, cols, field, entries })
    }

    pub fn zeros(rows: usize, cols: usize, field: FieldSpec) -> Self {
        DenseMatrix { rows, cols, field, entries: vec![field.zero(); rows * cols] }
    }

    pub fn ones(rows: usize, cols: usize, field: FieldSpec) -> Self {
        DenseMatrix { rows, cols, field, entries: vec![field.one(); rows * cols] }
    }

    pub fn identity(n: usize, field: FieldSpec) -> Self {
        Self::from_fn(n, n, field, |i, j| field.from_i64((i == j) as i64))
    }

    pub fn from_fn(rows: usize, cols: usize, field: FieldSpec, f: impl Fn(usize, usize) -> Scalar) -> Self {
        let entries = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        DenseMatrix { rows, cols, field, entries }
    }

    /// Parallel variant of [`DenseMatrix::from_fn`] for expensive entries.
    pub fn par_from_fn(rows: usize, cols: usize, field: FieldSpec, f: impl Fn(usize, usize) -> Scalar + Sync) -> Self {
        let entries = (0..rows * cols).into_par_iter().map(|k| f(k / cols, k % cols)).collect();
        DenseMatrix { rows, cols, field, entries }
    }

    pub fn from_i64_rows(field: FieldSpec, rows: &[Vec<i64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        let entries = rows.iter().flatten().map(|&v| field.from_i64(v)).collect();
        Ok(DenseMatrix { rows: rows.len(), cols, field, entries })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn entries(&self) -> &[Scalar] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> &Scalar {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Scalar) {
        assert!(self.field.contains(&v), "{v} is not in {}", self.field);
        self.entries[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[Scalar] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, self.field, |i, j| self.get(j, i).clone())
    }

    /// Entry `(i, j)` of the result is entry `(row_perm[i], col_perm[j])`.
    pub fn permuted(&self, row_perm: &[usize], col_perm: &[usize]) -> Self {
        Self::from_fn(self.rows, self.cols, self.field, |i, j| self.get(row_perm[i], col_perm[j]).clone())
    }

    pub fn mul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.field != other.field {
            return Err(Error::FieldMismatch { left: self.field.label(), right: other.field.label() });
        }
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let f = self.field;
        Ok(Self::par_from_fn(self.rows, other.cols, f, |i, j| {
            (0..self.cols).fold(f.zero(), |acc, k| f.add(&acc, &f.mul(self.get(i, k), other.get(k, j))))
        }))
    }

    /// Kronecker product.
    pub fn kron(&self, other: &DenseMatrix) -> Result<Self> {
        if self.field != other.field {
            return Err(Error::FieldMismatch { left: self.field.label(), right: other.field.label() });
        }
        let f = self.field;
        Ok(Self::from_fn(self.rows * other.rows, self.cols * other.cols, f, |i, j| {
            f.mul(self.get(i / other.rows, j / other.cols), other.get(i % other.rows, j % other.cols))
        }))
    }

    /// Exact rank: Gaussian elimination over `F_p`, Bareiss fraction-free
    /// elimination over the rationals.
    pub fn rank(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            return 0;
        }
        match self.field {
            FieldSpec::PrimeField { p } => {
                let rows = (0..self.rows).map(|i| self.row(i).iter().map(Scalar::residue).collect()).collect();
                rank_mod_p(rows, self.cols, Modulus::new(p))
            }
            FieldSpec::Rationals => rank_bareiss(self.integral_rows()),
        }
    }

    /// Each row scaled by the lcm of its denominators; row scaling preserves
    /// rank.
    fn integral_rows(&self) -> Vec<Vec<BigInt>> {
        (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                let lcm = row.iter().fold(BigInt::one(), |acc, e| acc.lcm(e.rational().denom()));
                row.iter().map(|e| e.rational().numer() * (&lcm / e.rational().denom())).collect()
            })
            .collect()
    }

    pub fn hamming_distance(&self, other: &DenseMatrix) -> Result<usize> {
        self.check_same_shape(other)?;
        Ok(self.entries.iter().zip(&other.entries).filter(|(a, b)| a != b).count())
    }

    /// Positions `(i, j)` where the two matrices differ, in row-major order.
    pub fn diff_positions(&self, other: &DenseMatrix) -> Result<Vec<(usize, usize)>> {
        self.check_same_shape(other)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(k, _)| (k / self.cols, k % self.cols))
            .collect())
    }

    fn check_same_shape(&self, other: &DenseMatrix) -> Result<()> {
        if self.field != other.field {
            return Err(Error::FieldMismatch { left: self.field.label(), right: other.field.label() });
        }
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::ShapeMismatch(format!("{}x{} vs {}x{}", self.rows, self.cols, other.rows, other.cols)));
        }
        Ok(())
    }

    /// Reduced row echelon form and pivot columns.
    pub fn rref(&self) -> (DenseMatrix, Vec<usize>) {
        let f = self.field;
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let Some(p) = (r..self.rows).find(|&i| !m.get(i, c).is_zero()) else { continue };
            for j in 0..self.cols {
                m.entries.swap(p * self.cols + j, r * self.cols + j);
            }
            let inv = f.inv(m.get(r, c)).expect("pivot is nonzero");
            for j in 0..self.cols {
                let v = f.mul(m.get(r, j), &inv);
                m.entries[r * self.cols + j] = v;
            }
            for i in 0..self.rows {
                if i == r || m.get(i, c).is_zero() {
                    continue;
                }
                let factor = m.get(i, c).clone();
                for j in 0..self.cols {
                    let v = f.sub(m.get(i, j), &f.mul(&factor, m.get(r, j)));
                    m.entries[i * self.cols + j] = v;
                }
            }
            pivots.push(c);
            r += 1;
        }
        (m, pivots)
    }

    /// `M = C * R` with `C` the pivot columns of `M` and `R` the nonzero rows
    /// of its reduced row echelon form; both have inner dimension `rank(M)`.
    pub fn rank_factorization(&self) -> (DenseMatrix, DenseMatrix) {
        let (rref, pivots) = self.rref();
        let r = pivots.len();
        let c = Self::from_fn(self.rows, r, self.field, |i, k| self.get(i, pivots[k]).clone());
        let rr = Self::from_fn(r, self.cols, self.field, |k, j| rref.get(k, j).clone());
        (c, rr)
    }

    /// One line per row, entries separated by commas.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(Scalar::to_string).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn from_csv(text: &str, field: FieldSpec) -> Result<Self> {
        let rows: Vec<Vec<Scalar>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.split(',').map(|e| field.parse_scalar(e)).collect())
            .collect::<Result<_>>()?;
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Parse("CSV rows have different lengths".into()));
        }
        let n = rows.len();
        DenseMatrix::new(n, cols, field, rows.into_iter().flatten().collect())
    }
}

/// JSON envelope `{rows, cols, field, entries}` with entries as strings.
#[derive(Serialize, Deserialize)]
struct MatrixEnvelope {
    rows: usize,
    cols: usize,
    field: FieldSpec,
    entries: Vec<String>,
}

impl Serialize for DenseMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixEnvelope {
            rows: self.rows,
            cols: self.cols,
            field: self.field,
            entries: self.entries.iter().map(Scalar::to_string).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let env = MatrixEnvelope::deserialize(d)?;
        let entries = env
            .entries
            .iter()
            .map(|e| env.field.parse_scalar(e))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        DenseMatrix::new(env.rows, env.cols, env.field, entries).map_err(serde::de::Error::custom)
    }
}

/// Rank of a matrix of canonical residues. Row reduction below each pivot
/// runs in parallel; the result does not depend on scheduling.
pub(crate) fn rank_mod_p(mut rows: Vec<Vec<u64>>, cols: usize, m: Modulus) -> usize {
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows.len() {
            break;
        }
        let Some(p) = (rank..rows.len()).find(|&i| rows[i][c] != 0) else { continue };
        rows.swap(rank, p);
        let (top, rest) = rows.split_at_mut(rank + 1);
        let pivot_row = &mut top[rank];
        let inv = m.inv(pivot_row[c]);
        for v in pivot_row[c..].iter_mut() {
            *v = m.mul(*v, inv);
        }
        let pivot_row = &*pivot_row;
        let eliminate = |row: &mut Vec<u64>| {
            let factor = row[c];
            if factor != 0 {
                for (v, &pv) in row[c..].iter_mut().zip(&pivot_row[c..]) {
                    *v = m.sub(*v, m.mul(factor, pv));
                }
            }
        };
        if rest.len() >= PAR_ROWS {
            rest.par_iter_mut().for_each(eliminate);
        } else {
            rest.iter_mut().for_each(eliminate);
        }
        rank += 1;
    }
    rank
}

/// Bareiss fraction-free elimination; every division is exact.
pub(crate) fn rank_bareiss(mut a: Vec<Vec<BigInt>>) -> usize {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut prev = BigInt::one();
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let Some(p) = (rank..rows).find(|&i| !a[i][c].is_zero()) else { continue };
        a.swap(rank, p);
        let (top, rest) = a.split_at_mut(rank + 1);
        let pivot_row = &top[rank];
        let pivot = &pivot_row[c];
        let prev_ref = &prev;
        let eliminate = |row: &mut Vec<BigInt>| {
            let lead = row[c].clone();
            for j in c + 1..cols {
                let v = (&row[j] * pivot - &lead * &pivot_row[j]) / prev_ref;
                row[j] = v;
            }
            row[c] = BigInt::zero();
        };
        if rest.len() >= PAR_ROWS {
            rest.par_iter_mut().for_each(eliminate);
        } else {
            rest.iter_mut().for_each(eliminate);
        }
        prev = pivot.clone();
        rank += 1;
    }
    rank
}
