//! Sparse multilinear polynomials and the monomial-to-outer-product bridge.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits;
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::factored::{FactoredMatrix, Term};
use crate::field::{FieldSpec, Scalar};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Monomial {
    /// Strictly increasing variable indices.
    pub vars: Vec<u32>,
    pub coeff: Scalar,
}

impl Monomial {
    pub fn degree(&self) -> usize {
        self.vars.len()
    }

    /// Whether every variable of the monomial is set at `point`.
    pub fn is_on(&self, point: &[bool]) -> bool {
        self.vars.iter().all(|&v| point[v as usize])
    }
}

/// Multilinear polynomial with one entry per distinct variable set and no
/// zero coefficients. Monomials are kept sorted by (degree, variables).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseMultilinearPoly {
    n_vars: usize,
    field: FieldSpec,
    monomials: Vec<Monomial>,
}

/// Accumulates monomials, applying `v^2 = v` and merging equal variable sets.
#[derive(Clone, Debug)]
pub struct PolyBuilder {
    n_vars: usize,
    field: FieldSpec,
    acc: BTreeMap<(usize, Vec<u32>), Scalar>,
}

impl PolyBuilder {
    pub fn new(n_vars: usize, field: FieldSpec) -> Self {
        PolyBuilder { n_vars, field, acc: BTreeMap::new() }
    }

    /// Adds `coeff * Π vars`; repeated variables collapse.
    pub fn add(&mut self, vars: impl IntoIterator<Item = u32>, coeff: Scalar) -> Result<()> {
        let mut vars: Vec<u32> = vars.into_iter().collect();
        vars.sort_unstable();
        vars.dedup();
        if let Some(&v) = vars.last() {
            if v as usize >= self.n_vars {
                return Err(Error::IndexOutOfRange(format!(
                    "variable {v} in a polynomial over {} variables",
                    self.n_vars
                )));
            }
        }
        if coeff.is_zero() {
            return Ok(());
        }
        let key = (vars.len(), vars);
        let f = self.field;
        match self.acc.get_mut(&key) {
            Some(c) => *c = f.add(c, &coeff),
            None => {
                self.acc.insert(key, coeff);
            }
        }
        Ok(())
    }

    pub fn build(self) -> SparseMultilinearPoly {
        let monomials = self
            .acc
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|((_, vars), coeff)| Monomial { vars, coeff })
            .collect();
        SparseMultilinearPoly { n_vars: self.n_vars, field: self.field, monomials }
    }
}

impl SparseMultilinearPoly {
    pub fn zero(n_vars: usize, field: FieldSpec) -> Self {
        SparseMultilinearPoly { n_vars, field, monomials: Vec::new() }
    }

    pub fn constant(n_vars: usize, field: FieldSpec, c: Scalar) -> Self {
        let mut b = PolyBuilder::new(n_vars, field);
        b.add([], c).expect("constant has no variables");
        b.build()
    }

    pub fn from_monomials(n_vars: usize, field: FieldSpec, monomials: Vec<Monomial>) -> Result<Self> {
        let mut b = PolyBuilder::new(n_vars, field);
        for m in monomials {
            if !field.contains(&m.coeff) {
                return Err(Error::FieldMismatch { left: field.label(), right: format!("coefficient {}", m.coeff) });
            }
            b.add(m.vars, m.coeff)?;
        }
        Ok(b.build())
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn monomial_count(&self) -> usize {
        self.monomials.len()
    }

    pub fn degree(&self) -> usize {
        self.monomials.iter().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn evaluate(&self, point: &[bool]) -> Result<Scalar> {
        if point.len() != self.n_vars {
            return Err(Error::ShapeMismatch(format!(
                "point of length {} for a polynomial over {} variables",
                point.len(),
                self.n_vars
            )));
        }
        let f = self.field;
        Ok(self.monomials.iter().filter(|m| m.is_on(point)).fold(f.zero(), |acc, m| f.add(&acc, &m.coeff)))
    }

    /// Evaluation at the point whose bits are the index `v` (component 0 is
    /// the most significant bit).
    pub fn evaluate_index(&self, v: u64) -> Scalar {
        let n = self.n_vars;
        let f = self.field;
        self.monomials
            .iter()
            .filter(|m| m.vars.iter().all(|&i| bits::bit(v, i as usize, n)))
            .fold(f.zero(), |acc, m| f.add(&acc, &m.coeff))
    }

    /// Values at every 0/1 point, in index order.
    pub fn truth_table(&self) -> Vec<Scalar> {
        (0..1u64 << self.n_vars).into_par_iter().map(|v| self.evaluate_index(v)).collect()
    }

    /// Replaces `z_i` by `x_i * y_i`: variable `i` becomes the pair `i`,
    /// `n + i` of a polynomial over `2n` variables.
    pub fn substitute_products(&self) -> SparseMultilinearPoly {
        let n = self.n_vars as u32;
        let monomials = self
            .monomials
            .iter()
            .map(|m| Monomial {
                vars: m.vars.iter().copied().chain(m.vars.iter().map(|&v| v + n)).collect(),
                coeff: m.coeff.clone(),
            })
            .collect::<Vec<_>>();
        SparseMultilinearPoly::from_monomials(2 * self.n_vars, self.field, monomials)
            .expect("substituted variables stay in range")
    }

    /// Composition with `z -> z XOR shift`, using `1 - z_i` for the shifted
    /// coordinates.
    pub fn shifted_substitute(&self, shift: &[bool]) -> Result<SparseMultilinearPoly> {
        if shift.len() != self.n_vars {
            return Err(Error::ShapeMismatch(format!(
                "shift of length {} for a polynomial over {} variables",
                shift.len(),
                self.n_vars
            )));
        }
        let f = self.field;
        let mut b = PolyBuilder::new(self.n_vars, f);
        for m in &self.monomials {
            let (flipped, kept): (Vec<u32>, Vec<u32>) = m.vars.iter().partition(|&&v| shift[v as usize]);
            // Π_{i flipped}(1 - z_i) = Σ_{S ⊆ flipped} (-1)^{|S|} Π_{i∈S} z_i
            for sub in 0u64..1 << flipped.len() {
                let chosen = flipped.iter().enumerate().filter(|(k, _)| sub >> k & 1 == 1).map(|(_, &v)| v);
                let sign = f.sign_power(sub.count_ones());
                b.add(kept.iter().copied().chain(chosen), f.mul(&sign, &m.coeff))?;
            }
        }
        Ok(b.build())
    }

    /// One outer product per monomial over `x = vars 0..n`, `y = vars n..2n`:
    /// the left vector is the x-part indicator, the right vector the
    /// coefficient times the y-part indicator.
    pub fn to_factored(&self, budget: &Budget) -> Result<FactoredMatrix> {
        if !self.n_vars.is_multiple_of(2) {
            return Err(Error::InvalidParameters(format!(
                "a matrix polynomial needs an even number of variables, got {}",
                self.n_vars
            )));
        }
        let n = self.n_vars / 2;
        if n >= 63 {
            return Err(Error::InvalidParameters(format!("n = {n} is too large to index")));
        }
        let dim = 1usize << n;
        budget.check(
            &format!("{} factor vectors of length 2^{n}", 2 * self.monomials.len()),
            2 * self.monomials.len() as u128 * dim as u128,
        )?;
        let f = self.field;
        let (zero, one) = (f.zero(), f.one());
        let terms = self
            .monomials
            .par_iter()
            .map(|m| {
                let xmask = bits::mask(m.vars.iter().filter(|&&v| (v as usize) < n).map(|&v| v as usize), n);
                let ymask = bits::mask(m.vars.iter().filter(|&&v| v as usize >= n).map(|&v| v as usize - n), n);
                let left = (0..dim as u64).map(|x| if x & xmask == xmask { one.clone() } else { zero.clone() });
                let right = (0..dim as u64).map(|y| if y & ymask == ymask { m.coeff.clone() } else { zero.clone() });
                Term { left: left.collect(), right: right.collect() }
            })
            .collect();
        FactoredMatrix::new(dim, dim, f, terms)
    }

    /// The unique multilinear polynomial agreeing with `table` on every 0/1
    /// point, by Möbius inversion over the subset lattice.
    pub fn multilinear_extension(table: &[Scalar], field: FieldSpec) -> Result<SparseMultilinearPoly> {
        if !table.len().is_power_of_two() {
            return Err(Error::InvalidParameters(format!("table length {} is not a power of two", table.len())));
        }
        let k = table.len().trailing_zeros() as usize;
        if let Some(bad) = table.iter().find(|e| !field.contains(e)) {
            return Err(Error::FieldMismatch { left: field.label(), right: format!("value {bad}") });
        }
        let mut a = table.to_vec();
        for b in 0..k {
            let bit = 1usize << b;
            for idx in 0..a.len() {
                if idx & bit != 0 {
                    a[idx] = field.sub(&a[idx], &a[idx ^ bit]);
                }
            }
        }
        let mut builder = PolyBuilder::new(k, field);
        for (idx, c) in a.into_iter().enumerate() {
            let vars = (0..k as u32).filter(|&i| bits::bit(idx as u64, i as usize, k));
            builder.add(vars, c)?;
        }
        Ok(builder.build())
    }
}

#[derive(Serialize, Deserialize)]
struct MonomialEnvelope {
    vars: Vec<u32>,
    coeff: String,
}

#[derive(Serialize, Deserialize)]
struct PolyEnvelope {
    n_vars: usize,
    field: FieldSpec,
    monomials: Vec<MonomialEnvelope>,
}

impl Serialize for SparseMultilinearPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolyEnvelope {
            n_vars: self.n_vars,
            field: self.field,
            monomials: self
                .monomials
                .iter()
                .map(|m| MonomialEnvelope { vars: m.vars.clone(), coeff: m.coeff.to_string() })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SparseMultilinearPoly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let env = PolyEnvelope::deserialize(d)?;
        let monomials = env
            .monomials
            .into_iter()
            .map(|m| Ok(Monomial { vars: m.vars, coeff: env.field.parse_scalar(&m.coeff)? }))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        SparseMultilinearPoly::from_monomials(env.n_vars, env.field, monomials).map_err(serde::de::Error::custom)
    }
}

/// Calls `f` with every `j`-subset of `0..n` as a bit mask over bit
/// positions, in increasing numeric order.
pub fn for_each_subset(n: usize, j: usize, mut f: impl FnMut(u64)) {
    if j > n {
        return;
    }
    if j == 0 {
        f(0);
        return;
    }
    let mut s: u64 = (1 << j) - 1;
    let limit: u64 = 1 << n;
    while s < limit {
        f(s);
        let c = s & s.wrapping_neg();
        let r = s + c;
        s = (((r ^ s) >> 2) / c) | r;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> FieldSpec {
        FieldSpec::Rationals
    }

    fn poly(n: usize, terms: &[(&[u32], i64)]) -> SparseMultilinearPoly {
        let f = q();
        let ms = terms.iter().map(|(v, c)| Monomial { vars: v.to_vec(), coeff: f.from_i64(*c) }).collect();
        SparseMultilinearPoly::from_monomials(n, f, ms).unwrap()
    }

    #[test]
    fn builder_merges_and_drops_zeros() {
        let p = poly(3, &[(&[0, 1], 2), (&[1, 0], -2), (&[2, 2], 5), (&[], 0)]);
        assert_eq!(p.monomials(), &[Monomial { vars: vec![2], coeff: q().from_i64(5) }]);
        assert!(
            SparseMultilinearPoly::from_monomials(2, q(), vec![Monomial { vars: vec![2], coeff: q().one() }]).is_err()
        );
    }

    #[test]
    fn evaluate_examples() {
        let c5 = SparseMultilinearPoly::constant(3, q(), q().from_i64(5));
        assert_eq!(c5.evaluate(&[true, false, true]).unwrap(), q().from_i64(5));
        let z1z2 = poly(2, &[(&[0, 1], 1)]);
        assert_eq!(z1z2.evaluate(&[true, true]).unwrap(), q().one());
        assert_eq!(z1z2.evaluate(&[true, false]).unwrap(), q().zero());
        assert!(z1z2.evaluate(&[true]).is_err());
        let p = poly(2, &[(&[], -3), (&[0], 2), (&[1], 2)]);
        assert_eq!(p.evaluate(&[true, true]).unwrap(), q().one());
        assert_eq!(p.evaluate_index(0b11), q().one());
        assert_eq!(p.evaluate_index(0b10), q().from_i64(-1));
    }

    #[test]
    fn product_substitution() {
        let p = poly(2, &[(&[0], 1), (&[1], 1)]);
        assert_eq!(p.substitute_products(), poly(4, &[(&[0, 2], 1), (&[1, 3], 1)]));
        let c = SparseMultilinearPoly::constant(2, q(), q().from_i64(4));
        assert_eq!(c.substitute_products().monomials(), c.monomials());
        let z1z2 = poly(2, &[(&[0, 1], 1)]);
        let s = z1z2.substitute_products();
        assert_eq!(s, poly(4, &[(&[0, 1, 2, 3], 1)]));
        for v in 0..16u64 {
            let (x, y) = (v >> 2, v & 3);
            assert_eq!(s.evaluate_index(v), z1z2.evaluate_index(x & y));
        }
    }

    #[test]
    fn shifted_substitution() {
        let p = poly(3, &[(&[0], 1)]);
        assert_eq!(p.shifted_substitute(&[false; 3]).unwrap(), p);
        assert_eq!(p.shifted_substitute(&[true, false, false]).unwrap(), poly(3, &[(&[], 1), (&[0], -1)]));
        assert!(p.shifted_substitute(&[true]).is_err());
    }

    #[test]
    fn factored_examples() {
        let xy = poly(2, &[(&[0, 1], 1)]);
        let m = xy.to_factored(&Budget::default()).unwrap();
        assert_eq!(m.term_count(), 1);
        assert_eq!(m.terms()[0].left, vec![q().zero(), q().one()]);
        assert_eq!(m.terms()[0].right, vec![q().zero(), q().one()]);
        let c = SparseMultilinearPoly::constant(4, q(), q().from_i64(7));
        let d = c.to_factored(&Budget::default()).unwrap().materialize(&Budget::default()).unwrap();
        assert_eq!(d.rank(), 1);
        assert!(d.entries().iter().all(|e| *e == q().from_i64(7)));
        assert!(poly(3, &[]).to_factored(&Budget::default()).is_err());
    }

    #[test]
    fn extension_examples() {
        let f = q();
        let xor: Vec<Scalar> = [0, 1, 1, 0].iter().map(|&v| f.from_i64(v)).collect();
        let p = SparseMultilinearPoly::multilinear_extension(&xor, f).unwrap();
        assert_eq!(p, poly(2, &[(&[0], 1), (&[1], 1), (&[0, 1], -2)]));
        let and: Vec<Scalar> = [0, 0, 0, 1].iter().map(|&v| f.from_i64(v)).collect();
        assert_eq!(SparseMultilinearPoly::multilinear_extension(&and, f).unwrap(), poly(2, &[(&[0, 1], 1)]));
        assert!(SparseMultilinearPoly::multilinear_extension(&and[..3], f).is_err());
        let xor4: Vec<Scalar> = (0..16u64).map(|v| f.from_i64((v.count_ones() % 2) as i64)).collect();
        let p4 = SparseMultilinearPoly::multilinear_extension(&xor4, f).unwrap();
        assert_eq!(p4.truth_table(), xor4);
    }

    #[test]
    fn json_round_trip() {
        let p = poly(2, &[(&[], -3), (&[0, 1], 2)]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(
            s,
            r#"{"n_vars":2,"field":{"kind":"rationals"},"monomials":[{"vars":[],"coeff":"-3"},{"vars":[0,1],"coeff":"2"}]}"#
        );
        assert_eq!(serde_json::from_str::<SparseMultilinearPoly>(&s).unwrap(), p);
    }

    #[test]
    fn subsets_are_enumerated_once() {
        let mut seen = Vec::new();
        for_each_subset(5, 2, |s| seen.push(s));
        assert_eq!(seen.len(), 10);
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
        assert!(seen.iter().all(|s| s.count_ones() == 2 && *s < 32));
        let mut count = 0;
        for_each_subset(4, 0, |_| count += 1);
        assert_eq!(count, 1);
    }
}
