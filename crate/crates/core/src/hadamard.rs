//! The Sylvester-type Walsh-Hadamard family, weight windows, low-overlap
//! counts and line corrections.

use num_bigint::BigUint;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits;
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::factored::{EntryOracle, FactoredMatrix};
use crate::field::{FieldSpec, Scalar};
use crate::matrix::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HadamardSpec {
    pub n: usize,
    pub field: FieldSpec,
}

impl HadamardSpec {
    pub fn new(n: usize, field: FieldSpec) -> Result<Self> {
        field.require_odd_characteristic()?;
        if n > 62 {
            return Err(Error::InvalidParameters(format!("n = {n} exceeds the supported 62 bits")));
        }
        Ok(HadamardSpec { n, field })
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn oracle(&self) -> HadamardOracle {
        HadamardOracle { field: self.field }
    }
}

/// Inclusive Hamming-weight interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightWindow {
    pub lo: usize,
    pub hi: usize,
}

impl WeightWindow {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidParameters(format!("empty weight window [{lo}, {hi}]")));
        }
        Ok(WeightWindow { lo, hi })
    }

    pub fn full(n: usize) -> Self {
        WeightWindow { lo: 0, hi: n }
    }

    pub fn contains(&self, w: usize) -> bool {
        (self.lo..=self.hi).contains(&w)
    }
}

/// `(-1)^{<x, y>}` in `field`.
pub fn hadamard_entry(x: &[bool], y: &[bool], field: FieldSpec) -> Result<Scalar> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("vectors of lengths {} and {}", x.len(), y.len())));
    }
    let overlap = x.iter().zip(y).filter(|(a, b)| **a && **b).count();
    Ok(field.sign_power(overlap as u32))
}

/// Entries of `H_n` by index, never materialized.
#[derive(Clone, Copy, Debug)]
pub struct HadamardOracle {
    field: FieldSpec,
}

impl EntryOracle for HadamardOracle {
    fn entry(&self, row: usize, col: usize) -> Scalar {
        self.field.sign_power(bits::inner(row as u64, col as u64))
    }
}

pub fn materialize_hadamard(spec: &HadamardSpec, budget: &Budget) -> Result<DenseMatrix> {
    let d = spec.dim();
    budget.check(&format!("materializing H_{}", spec.n), d as u128 * d as u128)?;
    let o = spec.oracle();
    Ok(DenseMatrix::par_from_fn(d, d, spec.field, |i, j| o.entry(i, j)))
}

/// Indices of `n`-bit vectors whose weight falls outside `window`, ascending.
pub fn out_of_window_indices(n: usize, window: &WeightWindow) -> Vec<usize> {
    (0..1usize << n).filter(|&v| !window.contains(bits::weight(v as u64) as usize)).collect()
}

/// Appends one rank-one term per bad column, then one per bad row, so the
/// result equals `target` on every listed line. Row corrections are taken
/// against the column-corrected matrix, so crossings stay exact.
pub fn correct_rows_columns(
    m: &FactoredMatrix,
    target: &dyn EntryOracle,
    bad_rows: &[usize],
    bad_cols: &[usize],
) -> Result<FactoredMatrix> {
    let (rows, cols) = (m.rows(), m.cols());
    if let Some(&r) = bad_rows.iter().find(|&&r| r >= rows) {
        return Err(Error::IndexOutOfRange(format!("row {r} of a {rows}-row matrix")));
    }
    if let Some(&c) = bad_cols.iter().find(|&&c| c >= cols) {
        return Err(Error::IndexOutOfRange(format!("column {c} of a {cols}-column matrix")));
    }
    let f = m.field();
    let mut out = m.clone();
    let col_fixes: Vec<(Vec<Scalar>, Vec<Scalar>)> = bad_cols
        .par_iter()
        .map(|&c| {
            let current = m.column(c);
            let delta: Vec<Scalar> = (0..rows).map(|i| f.sub(&target.entry(i, c), &current[i])).collect();
            let mut unit = vec![f.zero(); cols];
            unit[c] = f.one();
            (delta, unit)
        })
        .collect();
    for (delta, unit) in col_fixes {
        out.push(delta, unit)?;
    }
    let row_fixes: Vec<(Vec<Scalar>, Vec<Scalar>)> = bad_rows
        .par_iter()
        .map(|&r| {
            let current = out.row(r);
            let delta: Vec<Scalar> = (0..cols).map(|j| f.sub(&target.entry(r, j), &current[j])).collect();
            let mut unit = vec![f.zero(); rows];
            unit[r] = f.one();
            (unit, delta)
        })
        .collect();
    for (unit, delta) in row_fixes {
        out.push(unit, delta)?;
    }
    Ok(out)
}

/// Number of `y` with `|y|` in `window` and `<x, y> <= b`, where `|x| = wx`:
/// `Σ_{k ∈ window} Σ_{s <= b} C(wx, s) C(n - wx, k - s)`.
pub fn low_ip_count(n: usize, wx: usize, b: i64, window: &WeightWindow) -> BigUint {
    low_ip_count_at(n, wx, window, |s| s as i64 <= b)
}

/// The same double sum restricted to overlaps `s` accepted by `keep`.
pub fn low_ip_count_at(n: usize, wx: usize, window: &WeightWindow, keep: impl Fn(usize) -> bool) -> BigUint {
    let mut total = BigUint::zero();
    for k in window.lo..=window.hi.min(n) {
        for s in 0..=k.min(wx) {
            if keep(s) && k - s <= n - wx {
                total += binom_big(wx, s) * binom_big(n - wx, k - s);
            }
        }
    }
    total
}

pub fn binom_big(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factored::Term;

    fn f3() -> FieldSpec {
        FieldSpec::prime(3).unwrap()
    }

    #[test]
    fn entries() {
        let f = f3();
        assert_eq!(hadamard_entry(&[false; 3], &[true, false, true], f).unwrap(), f.one());
        assert_eq!(hadamard_entry(&[true; 3], &[true; 3], f).unwrap(), f.from_i64(-1));
        assert!(hadamard_entry(&[true], &[true, false], f).is_err());
        let h1 = materialize_hadamard(&HadamardSpec::new(1, f).unwrap(), &Budget::default()).unwrap();
        assert_eq!(h1, DenseMatrix::from_i64_rows(f, &[vec![1, 1], vec![1, -1]]).unwrap());
    }

    #[test]
    fn characteristic_two_is_rejected() {
        let err = HadamardSpec::new(3, FieldSpec::prime(2).unwrap()).unwrap_err();
        assert!(err.to_string().contains("rank-1"));
    }

    #[test]
    fn full_rank_and_kronecker() {
        let q = FieldSpec::Rationals;
        for n in 0..=5 {
            let h = materialize_hadamard(&HadamardSpec::new(n, q).unwrap(), &Budget::default()).unwrap();
            assert_eq!(h.rank(), 1 << n);
        }
        let h1 = materialize_hadamard(&HadamardSpec::new(1, q).unwrap(), &Budget::default()).unwrap();
        let h2 = materialize_hadamard(&HadamardSpec::new(2, q).unwrap(), &Budget::default()).unwrap();
        assert_eq!(h1.kron(&h1).unwrap(), h2);
    }

    #[test]
    fn window_indices() {
        assert!(out_of_window_indices(5, &WeightWindow::full(5)).is_empty());
        assert_eq!(out_of_window_indices(4, &WeightWindow::new(2, 2).unwrap()).len(), 10);
        assert_eq!(out_of_window_indices(2, &WeightWindow::new(1, 2).unwrap()), vec![0]);
        assert!(WeightWindow::new(3, 2).is_err());
    }

    #[test]
    fn low_ip_examples() {
        assert_eq!(low_ip_count(6, 2, 6, &WeightWindow::full(6)), BigUint::from(64u32));
        let brute =
            (0..64u64).filter(|&y| (2..=4).contains(&y.count_ones()) && (0b111000 & y).count_ones() <= 1).count();
        assert_eq!(low_ip_count(6, 3, 1, &WeightWindow::new(2, 4).unwrap()), BigUint::from(brute));
        assert_eq!(low_ip_count(6, 3, -1, &WeightWindow::full(6)), BigUint::zero());
    }

    #[test]
    fn correcting_a_zero_matrix_row() {
        let f = f3();
        let spec = HadamardSpec::new(2, f).unwrap();
        let m = FactoredMatrix::empty(4, 4, f);
        let c = correct_rows_columns(&m, &spec.oracle(), &[0], &[]).unwrap();
        assert_eq!(c.term_count(), 1);
        assert_eq!(c.row(0), vec![f.one(); 4]);
        assert_eq!(correct_rows_columns(&m, &spec.oracle(), &[], &[]).unwrap(), m);
        assert!(correct_rows_columns(&m, &spec.oracle(), &[4], &[]).is_err());
    }

    #[test]
    fn corrections_fix_lines_and_leave_the_rest() {
        let f = f3();
        let spec = HadamardSpec::new(3, f).unwrap();
        let h = materialize_hadamard(&spec, &Budget::default()).unwrap();
        let vals = |s: u64| (0..8u64).map(|i| f.from_i64(((i * s + 1) % 3) as i64)).collect::<Vec<_>>();
        let m = FactoredMatrix::new(
            8,
            8,
            f,
            vec![Term { left: vals(1), right: vals(2) }, Term { left: vals(5), right: vals(7) }],
        )
        .unwrap();
        let (rows, cols) = ([1usize, 6], [3usize]);
        let c = correct_rows_columns(&m, &spec.oracle(), &rows, &cols).unwrap();
        assert_eq!(c.term_count(), m.term_count() + 3);
        let before = m.materialize(&Budget::default()).unwrap();
        let after = c.materialize(&Budget::default()).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                if rows.contains(&i) || cols.contains(&j) {
                    assert_eq!(after.get(i, j), h.get(i, j));
                } else {
                    assert_eq!(after.get(i, j), before.get(i, j));
                }
            }
        }
    }
}
