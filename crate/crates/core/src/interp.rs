//! Integer interpolation of weight profiles in the binomial basis.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::poly::{for_each_subset, PolyBuilder, SparseMultilinearPoly};

/// `P(w) = Σ_j coeffs[j] * C(w, j)`, matching the targets at `w = k+1..=k+r`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightInterpolant {
    pub k: i64,
    pub r: usize,
    pub coeffs: Vec<BigInt>,
}

impl WeightInterpolant {
    /// Exact value of `P(w)` for `w >= 0`.
    pub fn eval(&self, w: u64) -> BigInt {
        let mut binom = BigInt::one();
        let mut acc = BigInt::zero();
        for (j, a) in self.coeffs.iter().enumerate() {
            if j as u64 > w {
                break;
            }
            acc += a * &binom;
            binom = binom * BigInt::from(w - j as u64) / BigInt::from(j as u64 + 1);
        }
        acc
    }

    pub fn degree_bound(&self) -> usize {
        self.r.saturating_sub(1)
    }

    /// The lowest and highest weight the targets were pinned at.
    pub fn range(&self) -> (i64, i64) {
        (self.k + 1, self.k + self.r as i64)
    }
}

/// Newton forward differences anchored at `k + 1`, extrapolated down to 0.
/// `k = -1` anchors the targets at weight 0.
pub fn weight_interpolant(k: i64, targets: &[BigInt]) -> Result<WeightInterpolant> {
    if targets.is_empty() {
        return Err(Error::InvalidParameters("at least one target value is required".into()));
    }
    if k < -1 {
        return Err(Error::InvalidParameters(format!("offset k = {k} must be at least -1")));
    }
    let r = targets.len();
    // diffs[j] = Δ^j P(anchor), starting at anchor = k + 1.
    let mut row = targets.to_vec();
    let mut diffs = Vec::with_capacity(r);
    for _ in 0..r {
        diffs.push(row[0].clone());
        row = row.windows(2).map(|w| &w[1] - &w[0]).collect();
    }
    // Δ^j P(a - 1) = Δ^j P(a) - Δ^{j+1} P(a - 1), top order first.
    for _ in 0..k + 1 {
        for j in (0..r.saturating_sub(1)).rev() {
            let next = diffs[j + 1].clone();
            diffs[j] -= next;
        }
    }
    let w = WeightInterpolant { k, r, coeffs: diffs };
    for (i, t) in targets.iter().enumerate() {
        let at = (k + 1 + i as i64) as u64;
        if &w.eval(at) != t {
            return Err(Error::Invariant(format!("interpolant misses target {t} at weight {at}")));
        }
    }
    Ok(w)
}

pub fn weight_interpolant_i64(k: i64, targets: &[i64]) -> Result<WeightInterpolant> {
    let t: Vec<BigInt> = targets.iter().map(|&v| BigInt::from(v)).collect();
    weight_interpolant(k, &t)
}

/// `Σ_j a_j e_j(z_1..z_n)` with coefficients reduced into `field`.
pub fn interpolant_to_poly(w: &WeightInterpolant, n: usize, field: FieldSpec) -> Result<SparseMultilinearPoly> {
    if n + 1 < w.r {
        return Err(Error::InvalidParameters(format!(
            "{n} variables cannot carry an interpolant of degree {}",
            w.degree_bound()
        )));
    }
    if n > 63 {
        return Err(Error::InvalidParameters(format!("{n} variables exceed the supported 63")));
    }
    let mut b = PolyBuilder::new(n, field);
    for (j, a) in w.coeffs.iter().enumerate() {
        let c = field.from_bigint(a);
        if c.is_zero() {
            continue;
        }
        let mut err = None;
        for_each_subset(n, j, |s| {
            let vars = (0..n as u32).filter(|&i| s >> (n as u32 - 1 - i) & 1 == 1);
            if let Err(e) = b.add(vars, c.clone()) {
                err.get_or_insert(e);
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    Ok(b.build())
}
