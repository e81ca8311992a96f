//! Low-rank matrices held as explicit sums of outer products.

use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::field::{FieldSpec, Modulus, Scalar};
use crate::matrix::DenseMatrix;

/// Source of target entries that never needs the whole matrix in memory.
pub trait EntryOracle: Send + Sync {
    fn entry(&self, row: usize, col: usize) -> Scalar;
}

impl<F> EntryOracle for F
where
    F: Fn(usize, usize) -> Scalar + Send + Sync,
{
    fn entry(&self, row: usize, col: usize) -> Scalar {
        self(row, col)
    }
}

impl EntryOracle for DenseMatrix {
    fn entry(&self, row: usize, col: usize) -> Scalar {
        self.get(row, col).clone()
    }
}

/// One outer product `left ⊗ right`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub left: Vec<Scalar>,
    pub right: Vec<Scalar>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactoredMatrix {
    rows: usize,
    cols: usize,
    field: FieldSpec,
    terms: Vec<Term>,
}

impl FactoredMatrix {
    pub fn empty(rows: usize, cols: usize, field: FieldSpec) -> Self {
        FactoredMatrix { rows, cols, field, terms: Vec::new() }
    }

    pub fn new(rows: usize, cols: usize, field: FieldSpec, terms: Vec<Term>) -> Result<Self> {
        let mut m = Self::empty(rows, cols, field);
        for t in terms {
            m.push(t.left, t.right)?;
        }
        Ok(m)
    }

    /// Terms are the pivot columns of `m` against the rows of its reduced
    /// echelon form, so the term count equals `rank(m)`.
    pub fn from_dense(m: &DenseMatrix) -> Self {
        let (c, r) = m.rank_factorization();
        let terms = (0..c.cols())
            .map(|k| Term { left: (0..c.rows()).map(|i| c.get(i, k).clone()).collect(), right: r.row(k).to_vec() })
            .collect();
        FactoredMatrix { rows: m.rows(), cols: m.cols(), field: m.field(), terms }
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

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn into_terms(self) -> Vec<Term> {
        self.terms
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn push(&mut self, left: Vec<Scalar>, right: Vec<Scalar>) -> Result<()> {
        if left.len() != self.rows || right.len() != self.cols {
            return Err(Error::ShapeMismatch(format!(
                "term of shape {}x{} for a {}x{} matrix",
                left.len(),
                right.len(),
                self.rows,
                self.cols
            )));
        }
        if let Some(bad) = left.iter().chain(&right).find(|e| !self.field.contains(e)) {
            return Err(Error::FieldMismatch { left: self.field.label(), right: format!("entry {bad}") });
        }
        self.terms.push(Term { left, right });
        Ok(())
    }

    /// A copy with one more term.
    pub fn append_rank_one(&self, left: Vec<Scalar>, right: Vec<Scalar>) -> Result<Self> {
        let mut out = self.clone();
        out.push(left, right)?;
        Ok(out)
    }

    /// Sum of both term lists; the rank bound adds.
    pub fn concat(&self, other: &FactoredMatrix) -> Result<Self> {
        if self.field != other.field {
            return Err(Error::FieldMismatch { left: self.field.label(), right: other.field.label() });
        }
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::ShapeMismatch(format!("{}x{} vs {}x{}", self.rows, self.cols, other.rows, other.cols)));
        }
        let mut out = self.clone();
        out.terms.extend(other.terms.iter().cloned());
        Ok(out)
    }

    /// Every left vector multiplied by `c`.
    pub fn scaled(&self, c: &Scalar) -> Self {
        let f = self.field;
        let terms = self
            .terms
            .iter()
            .map(|t| Term { left: t.left.iter().map(|v| f.mul(v, c)).collect(), right: t.right.clone() })
            .collect();
        FactoredMatrix { terms, ..self.clone() }
    }

    pub fn entry(&self, i: usize, j: usize) -> Scalar {
        let f = self.field;
        self.terms.iter().fold(f.zero(), |acc, t| {
            if t.left[i].is_zero() {
                acc
            } else {
                f.add(&acc, &f.mul(&t.left[i], &t.right[j]))
            }
        })
    }

    /// Row `i` without materializing the rest.
    pub fn row(&self, i: usize) -> Vec<Scalar> {
        let f = self.field;
        let mut out = vec![f.zero(); self.cols];
        for t in self.terms.iter().filter(|t| !t.left[i].is_zero()) {
            for (o, r) in out.iter_mut().zip(&t.right) {
                *o = f.add(o, &f.mul(&t.left[i], r));
            }
        }
        out
    }

    /// Column `j` without materializing the rest.
    pub fn column(&self, j: usize) -> Vec<Scalar> {
        let f = self.field;
        let mut out = vec![f.zero(); self.rows];
        for t in self.terms.iter().filter(|t| !t.right[j].is_zero()) {
            for (o, l) in out.iter_mut().zip(&t.left) {
                if !l.is_zero() {
                    *o = f.add(o, &f.mul(l, &t.right[j]));
                }
            }
        }
        out
    }

    /// Dense value of `Σ_k left_k ⊗ right_k`.
    pub fn materialize(&self, budget: &Budget) -> Result<DenseMatrix> {
        let needed = self.rows as u128 * self.cols as u128;
        budget.check(&format!("materializing a {}x{} matrix", self.rows, self.cols), needed)?;
        let entries = match self.field {
            FieldSpec::PrimeField { p } => self.materialize_mod_p(Modulus::new(p)),
            FieldSpec::Rationals => self.materialize_integral().unwrap_or_else(|| self.materialize_generic()),
        };
        DenseMatrix::new(self.rows, self.cols, self.field, entries)
    }

    fn materialize_mod_p(&self, m: Modulus) -> Vec<Scalar> {
        let p = m.p();
        let left: Vec<Vec<u64>> = self.terms.iter().map(|t| t.left.iter().map(Scalar::residue).collect()).collect();
        let right: Vec<Vec<u64>> = self.terms.iter().map(|t| t.right.iter().map(Scalar::residue).collect()).collect();
        let flush_every = m.products_per_u128().saturating_sub(1).max(1);
        let cols = self.cols;
        (0..self.rows)
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut acc = vec![0u128; cols];
                let mut pending = 0usize;
                for (l, r) in left.iter().zip(&right) {
                    let a = l[i];
                    if a == 0 {
                        continue;
                    }
                    for (o, &b) in acc.iter_mut().zip(r) {
                        *o += a as u128 * b as u128;
                    }
                    pending += 1;
                    if pending == flush_every {
                        for o in acc.iter_mut() {
                            *o %= p as u128;
                        }
                        pending = 0;
                    }
                }
                acc.into_iter().map(move |v| Scalar::Residue(m.reduce_u128(v)))
            })
            .collect()
    }

    /// Integer-valued terms over the rationals, accumulated in `i128` with
    /// overflow checks. `None` when some value is fractional or overflows.
    fn materialize_integral(&self) -> Option<Vec<Scalar>> {
        let to_i64 = |v: &Vec<Scalar>| v.iter().map(Scalar::to_i64).collect::<Option<Vec<i64>>>();
        let left: Vec<Vec<i64>> = self.terms.iter().map(|t| to_i64(&t.left)).collect::<Option<_>>()?;
        let right: Vec<Vec<i64>> = self.terms.iter().map(|t| to_i64(&t.right)).collect::<Option<_>>()?;
        let cols = self.cols;
        let rows: Option<Vec<Vec<i128>>> = (0..self.rows)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0i128; cols];
                for (l, r) in left.iter().zip(&right) {
                    let a = l[i] as i128;
                    if a == 0 {
                        continue;
                    }
                    for (o, &b) in acc.iter_mut().zip(r) {
                        *o = o.checked_add(a * b as i128)?;
                    }
                }
                Some(acc)
            })
            .collect();
        Some(
            rows?
                .into_iter()
                .flatten()
                .map(|v| Scalar::Rational(Box::new(BigRational::from_integer(BigInt::from(v)))))
                .collect(),
        )
    }

    fn materialize_generic(&self) -> Vec<Scalar> {
        (0..self.rows).into_par_iter().flat_map_iter(|i| self.row(i)).collect()
    }

    /// Left factor as a `rows x terms` matrix.
    pub fn left_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows, self.terms.len(), self.field, |i, k| self.terms[k].left[i].clone())
    }

    /// Right factor as a `terms x cols` matrix.
    pub fn right_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.terms.len(), self.cols, self.field, |k, j| self.terms[k].right[j].clone())
    }
}
