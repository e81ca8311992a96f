//! From non-rigidity to probabilistic rank: the `H_n` shift self-reduction,
//! random self-reductions, and the inner-product protocol view.

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::bits;
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::factored::{EntryOracle, FactoredMatrix, Term};
use crate::field::{rational_str, FieldSpec, Scalar};
use crate::hadamard::HadamardSpec;
use crate::matrix::DenseMatrix;
use crate::poly::SparseMultilinearPoly;
use crate::sampler::{Agreement, Coins, ProbMatrixSampler, SeededCoins};
use crate::seed::{derive_seed, rng};

fn dims_of(m: &FactoredMatrix) -> Result<usize> {
    let d = m.rows();
    if d != m.cols() || !d.is_power_of_two() {
        return Err(Error::ShapeMismatch(format!("{}x{} is not a 2^n x 2^n matrix", m.rows(), m.cols())));
    }
    Ok(d.trailing_zeros() as usize)
}

/// Replaces every `a_k` by `a_k^{(x,y)}[v] = (-1)^{<v,y>} a_k[v XOR x]` and
/// every `b_k` by `b_k^{(y,x)}`, with the global sign `(-1)^{<x,y>}` folded
/// into the left vectors. On `H_n` itself this is the identity; an error at
/// `(u, v)` moves to `(u XOR x, v XOR y)`.
pub fn shift_factors(m: &FactoredMatrix, x: u64, y: u64) -> Result<FactoredMatrix> {
    let n = dims_of(m)?;
    let f = m.field();
    f.require_odd_characteristic()?;
    let dim = 1u64 << n;
    if x >= dim || y >= dim {
        return Err(Error::IndexOutOfRange(format!("shift ({x}, {y}) for n = {n}")));
    }
    let global = bits::inner(x, y);
    let shift = |vec: &[Scalar], by: u64, sign_with: u64, extra: u32| -> Vec<Scalar> {
        (0..dim)
            .map(|v| {
                let val = &vec[(v ^ by) as usize];
                if (bits::inner(v, sign_with) + extra) % 2 == 1 {
                    f.neg(val)
                } else {
                    val.clone()
                }
            })
            .collect()
    };
    let terms = m
        .terms()
        .iter()
        .map(|t| Term { left: shift(&t.left, x, y, global), right: shift(&t.right, y, x, 0) })
        .collect();
    FactoredMatrix::new(m.rows(), m.cols(), f, terms)
}

/// The exact Sylvester factorization `H_n = Σ_u e_u ⊗ H_n[u, .]`.
pub fn sylvester_factors(spec: &HadamardSpec) -> FactoredMatrix {
    let d = spec.dim();
    let f = spec.field;
    let o = spec.oracle();
    let terms = (0..d)
        .map(|u| {
            let mut e = vec![f.zero(); d];
            e[u] = f.one();
            Term { left: e, right: (0..d).map(|v| o.entry(u, v)).collect() }
        })
        .collect();
    FactoredMatrix::new(d, d, f, terms).expect("Sylvester terms have matching shapes")
}

/// `count` distinct cells of a `rows x cols` matrix chosen from `seed`,
/// sorted row-major.
pub fn planted_cells(rows: usize, cols: usize, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if count > rows * cols {
        return Err(Error::InvalidParameters(format!("{count} cells requested from a {rows}x{cols} matrix")));
    }
    let mut r = rng(derive_seed(seed, "planted-cells", 0));
    let mut cells: Vec<(usize, usize)> =
        rand::seq::index::sample(&mut r, rows * cols, count).into_iter().map(|c| (c / cols, c % cols)).collect();
    cells.sort_unstable();
    Ok(cells)
}

/// Sylvester factors of `H_n` with the right-vector entry of each listed
/// cell set to zero, so the product is wrong exactly at those cells.
pub fn corrupted_sylvester(spec: &HadamardSpec, cells: &[(usize, usize)]) -> Result<FactoredMatrix> {
    let d = spec.dim();
    let mut terms = sylvester_factors(spec).into_terms();
    for &(u, v) in cells {
        if u >= d || v >= d {
            return Err(Error::IndexOutOfRange(format!("cell ({u}, {v}) of H_{}", spec.n)));
        }
        terms[u].right[v] = spec.field.zero();
    }
    FactoredMatrix::new(d, d, spec.field, terms)
}

/// Rank factorization of the 0/1 truth table of `rsr.f` with the listed
/// cells flipped.
pub fn planted_truth_table_factors(rsr: &RSRSpec, cells: &[(usize, usize)]) -> Result<FactoredMatrix> {
    let d = 1usize << rsr.n;
    let f = rsr.field;
    let mut m = DenseMatrix::from_fn(d, d, f, |i, j| (rsr.f)(i as u64, j as u64));
    for &(i, j) in cells {
        if i >= d || j >= d {
            return Err(Error::IndexOutOfRange(format!("cell ({i}, {j}) of a {d}x{d} table")));
        }
        let flipped = f.sub(&f.one(), m.get(i, j));
        m.set(i, j, flipped);
    }
    let (a, b) = m.rank_factorization();
    let terms = (0..a.cols())
        .map(|k| Term { left: (0..d).map(|i| a.get(i, k).clone()).collect(), right: b.row(k).to_vec() })
        .collect();
    FactoredMatrix::new(d, d, f, terms)
}

/// Sampler drawing a uniform shift pair `(x, y)` and returning the shifted
/// factors. The claimed error is the normalized Hamming distance to `H_n`
/// when the input can be materialized, otherwise `fallback_error`.
pub fn rigidity_to_prob_rank(
    m: &FactoredMatrix,
    fallback_error: Option<BigRational>,
    budget: &Budget,
) -> Result<ProbMatrixSampler> {
    let n = dims_of(m)?;
    let spec = HadamardSpec::new(n, m.field())?;
    let oracle = spec.oracle();
    let claimed_error = match m.materialize(budget) {
        Ok(d) => {
            let wrong = (0..d.rows())
                .flat_map(|i| (0..d.cols()).map(move |j| (i, j)))
                .filter(|&(i, j)| *d.get(i, j) != oracle.entry(i, j))
                .count();
            BigRational::new(BigInt::from(wrong), BigInt::from(1u64) << (2 * n))
        }
        Err(Error::Budget { .. }) => fallback_error
            .ok_or_else(|| Error::InvalidParameters("input too large to measure and no error bound supplied".into()))?,
        Err(e) => return Err(e),
    };
    let input = m.clone();
    let dim = 1u64 << n;
    let draw = move |coins: &mut dyn Coins| {
        let x = coins.choose(dim);
        let y = coins.choose(dim);
        shift_factors(&input, x, y).expect("validated shape and field")
    };
    Ok(ProbMatrixSampler::new(
        format!("hadamard-shift(n={n})"),
        m.rows(),
        m.cols(),
        m.field(),
        m.term_count(),
        claimed_error,
        Agreement::Value,
        Arc::new(oracle),
        Arc::new(draw),
    ))
}

pub type QueryFn = dyn Fn(u64, u64) -> Vec<u64> + Send + Sync;
pub type TargetFn = dyn Fn(u64, u64) -> Scalar + Send + Sync;

/// A non-adaptive `k`-query random self-reduction of `f` on `n + n` bits.
/// Randomness is an index in `0..randomness`; the `i`-th query is
/// `(left(x, rand)[i], right(y, rand)[i])` and
/// `f(x, y) = g(f(x_1, y_1), ..., f(x_k, y_k))`.
#[derive(Clone)]
pub struct RSRSpec {
    pub name: String,
    pub n: usize,
    pub k: usize,
    pub randomness: u64,
    pub field: FieldSpec,
    pub left: Arc<QueryFn>,
    pub right: Arc<QueryFn>,
    pub f: Arc<TargetFn>,
    /// `g` on `{0,1}^k`, indexed with query 1 as the most significant bit.
    pub g_table: Vec<Scalar>,
}

impl std::fmt::Debug for RSRSpec {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("RSRSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("k", &self.k)
            .field("randomness", &self.randomness)
            .field("field", &self.field)
            .finish()
    }
}

/// Outcome of the exhaustive invariant check of an [`RSRSpec`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RSRCheck {
    pub reconstruction_failures: u64,
    /// Queries whose `(x_i, y_i)` pair is not uniform over randomness, for
    /// some fixed input.
    pub non_uniform_queries: u64,
    pub checked_inputs: u64,
}

impl RSRCheck {
    pub fn holds(&self) -> bool {
        self.reconstruction_failures == 0 && self.non_uniform_queries == 0
    }
}

impl RSRSpec {
    fn g(&self, answers: &[Scalar]) -> Result<Scalar> {
        let idx = answers.iter().try_fold(0usize, |acc, a| {
            if a.is_zero() {
                Ok(acc << 1)
            } else if *a == self.field.one() {
                Ok(acc << 1 | 1)
            } else {
                Err(Error::InvalidParameters(format!("query answer {a} is not 0 or 1")))
            }
        })?;
        Ok(self.g_table[idx].clone())
    }

    /// Exhaustive check of reconstruction and joint uniformity of every
    /// query pair, over all inputs and all randomness.
    pub fn check(&self, budget: &Budget) -> Result<RSRCheck> {
        let dim = 1u64 << self.n;
        budget.check("RSR invariant enumeration", dim as u128 * dim as u128 * self.randomness as u128)?;
        if self.g_table.len() != 1 << self.k {
            return Err(Error::InvalidParameters(format!(
                "g table has {} entries, need 2^{}",
                self.g_table.len(),
                self.k
            )));
        }
        let mut check = RSRCheck { reconstruction_failures: 0, non_uniform_queries: 0, checked_inputs: 0 };
        let cells = (dim * dim) as usize;
        for x in 0..dim {
            for y in 0..dim {
                let mut hist = vec![vec![0u64; cells]; self.k];
                for r in 0..self.randomness {
                    let (xs, ys) = ((self.left)(x, r), (self.right)(y, r));
                    if xs.len() != self.k || ys.len() != self.k {
                        return Err(Error::InvalidParameters("query count differs from k".into()));
                    }
                    let answers: Vec<Scalar> = xs.iter().zip(&ys).map(|(&a, &b)| (self.f)(a, b)).collect();
                    if self.g(&answers)? != (self.f)(x, y) {
                        check.reconstruction_failures += 1;
                    }
                    for i in 0..self.k {
                        hist[i][(xs[i] * dim + ys[i]) as usize] += 1;
                    }
                }
                check.non_uniform_queries +=
                    hist.iter().filter(|h| h.iter().any(|&c| c * cells as u64 != self.randomness)).count() as u64;
                check.checked_inputs += 1;
            }
        }
        Ok(check)
    }
}

/// Four-query self-reduction of inner product mod 2 with randomness
/// `(x', y')`: queries `(x^x', y^y')`, `(x^x', y')`, `(x', y^y')`, `(x', y')`
/// and `g` the XOR of the answers.
pub fn ip2_rsr(n: usize, field: FieldSpec) -> Result<RSRSpec> {
    if n == 0 || n > 30 {
        return Err(Error::InvalidParameters(format!("n = {n} must lie in 1..=30")));
    }
    let mask = (1u64 << n) - 1;
    let split = move |r: u64| (r >> n, r & mask);
    let left = move |x: u64, r: u64| {
        let (xp, _) = split(r);
        vec![x ^ xp, x ^ xp, xp, xp]
    };
    let right = move |y: u64, r: u64| {
        let (_, yp) = split(r);
        vec![y ^ yp, yp, y ^ yp, yp]
    };
    let f = move |x: u64, y: u64| field.from_i64((bits::inner(x, y) % 2) as i64);
    let g_table = (0..16u64).map(|v| field.from_i64((v.count_ones() % 2) as i64)).collect();
    Ok(RSRSpec {
        name: format!("ip2(n={n})"),
        n,
        k: 4,
        randomness: 1 << (2 * n),
        field,
        left: Arc::new(left),
        right: Arc::new(right),
        f: Arc::new(f),
        g_table,
    })
}

/// Number of expanded terms `Σ_{S: c_S != 0} r^{|S|}` for a reduction with
/// multilinear `g`-extension `p` applied to rank-`r` factors.
pub fn rsr_term_count(p: &SparseMultilinearPoly, r: usize) -> u128 {
    p.monomials().iter().map(|m| (r as u128).pow(m.degree() as u32)).sum()
}

/// Probabilistic-rank sampler for `M_f` from factors approximating it: the
/// multilinear extension of `g` evaluated at the `k` query inner products,
/// expanded into outer products. Terms vanishing on every row or column are
/// dropped.
pub fn rsr_prob_rank(
    rsr: &RSRSpec,
    m: &FactoredMatrix,
    input_error: Option<BigRational>,
    budget: &Budget,
) -> Result<ProbMatrixSampler> {
    let n = dims_of(m)?;
    if n != rsr.n || m.field() != rsr.field {
        return Err(Error::InvalidParameters(format!(
            "factors are {}x{} over {}, reduction expects n = {} over {}",
            m.rows(),
            m.cols(),
            m.field(),
            rsr.n,
            rsr.field
        )));
    }
    let f = rsr.field;
    let p = SparseMultilinearPoly::multilinear_extension(&rsr.g_table, f)?;
    let r = m.term_count();
    let t = rsr_term_count(&p, r);
    budget.check("expanded reduction terms", t * 2 * m.rows() as u128)?;
    let claimed_error = match (m.materialize(budget), input_error) {
        (_, Some(e)) => e * BigInt::from(rsr.k),
        (Ok(d), None) => {
            let wrong = (0..d.rows() as u64)
                .flat_map(|i| (0..d.cols() as u64).map(move |j| (i, j)))
                .filter(|&(i, j)| *d.get(i as usize, j as usize) != (rsr.f)(i, j))
                .count();
            BigRational::new(BigInt::from(wrong * rsr.k), BigInt::from(d.rows() * d.cols()))
        }
        (Err(e), None) => return Err(e),
    };
    let dim = m.rows();
    let left_factor: Vec<Vec<Scalar>> =
        (0..dim).map(|i| m.terms().iter().map(|t| t.left[i].clone()).collect()).collect();
    let right_factor: Vec<Vec<Scalar>> =
        (0..dim).map(|j| m.terms().iter().map(|t| t.right[j].clone()).collect()).collect();
    let spec = rsr.clone();
    let poly = p.clone();
    let draw = move |coins: &mut dyn Coins| {
        let rand = coins.choose(spec.randomness);
        let xq: Vec<Vec<u64>> = (0..dim as u64).map(|x| (spec.left)(x, rand)).collect();
        let yq: Vec<Vec<u64>> = (0..dim as u64).map(|y| (spec.right)(y, rand)).collect();
        let mut out = FactoredMatrix::empty(dim, dim, f);
        for mono in poly.monomials() {
            let deg = mono.vars.len();
            let combos = r.pow(deg as u32);
            for code in 0..combos {
                // j_i for each variable of the monomial, in base r.
                let js: Vec<usize> = (0..deg).map(|i| code / r.pow(i as u32) % r).collect();
                let left: Vec<Scalar> = (0..dim)
                    .map(|x| {
                        mono.vars.iter().zip(&js).fold(mono.coeff.clone(), |acc, (&q, &j)| {
                            f.mul(&acc, &left_factor[xq[x][q as usize] as usize][j])
                        })
                    })
                    .collect();
                if left.iter().all(Scalar::is_zero) {
                    continue;
                }
                let right: Vec<Scalar> = (0..dim)
                    .map(|y| {
                        mono.vars
                            .iter()
                            .zip(&js)
                            .fold(f.one(), |acc, (&q, &j)| f.mul(&acc, &right_factor[yq[y][q as usize] as usize][j]))
                    })
                    .collect();
                if right.iter().all(Scalar::is_zero) {
                    continue;
                }
                out.push(left, right).expect("shape");
            }
        }
        out
    };
    let target_spec = rsr.clone();
    let target = move |i: usize, j: usize| (target_spec.f)(i as u64, j as u64);
    Ok(ProbMatrixSampler::new(
        format!("rsr[{}]", rsr.name),
        dim,
        dim,
        f,
        t as usize,
        claimed_error,
        Agreement::Value,
        Arc::new(target),
        Arc::new(draw),
    ))
}

/// One run of the shared-randomness protocol: both parties draw the same
/// sample, Alice sends her row of the left factor, Bob answers with the
/// inner product against his column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolTrace {
    pub x: usize,
    pub y: usize,
    pub seed: u64,
    pub answer: Scalar,
    /// For sign samplers: whether the answer predicts a true entry.
    pub predicted_true: Option<bool>,
    pub bits: u32,
    #[serde(with = "rational_str")]
    pub claimed_error: BigRational,
}

/// `ceil(log2(r + 1))`.
pub fn protocol_bits(claimed_rank: usize) -> u32 {
    (usize::BITS - claimed_rank.leading_zeros()).max(if claimed_rank == 0 { 0 } else { 1 })
}

pub fn simulate_protocol(sampler: &ProbMatrixSampler, x: usize, y: usize, seed: u64) -> Result<ProtocolTrace> {
    if x >= sampler.rows || y >= sampler.cols {
        return Err(Error::IndexOutOfRange(format!("entry ({x}, {y}) of a {}x{} sampler", sampler.rows, sampler.cols)));
    }
    let m = sampler.draw_with(&mut SeededCoins::new(seed))?;
    let f = sampler.field;
    let alice: Vec<&Scalar> = m.terms().iter().map(|t| &t.left[x]).collect();
    let bob: Vec<&Scalar> = m.terms().iter().map(|t| &t.right[y]).collect();
    let answer = alice.iter().zip(&bob).fold(f.zero(), |acc, (a, b)| f.add(&acc, &f.mul(a, b)));
    let predicted_true = match sampler.agreement {
        Agreement::Value => None,
        Agreement::Sign { zero_is_true } => {
            let s = answer.signum().expect("sign samplers are rational");
            Some(s < 0 || (s == 0 && zero_is_true))
        }
    };
    Ok(ProtocolTrace {
        x,
        y,
        seed,
        answer,
        predicted_true,
        bits: protocol_bits(sampler.claimed_rank),
        claimed_error: sampler.claimed_error.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::rational;
    use crate::hadamard::materialize_hadamard;
    use crate::sampler::{eq_sampler, estimate_error, EstimateMode};

    fn f3() -> FieldSpec {
        FieldSpec::prime(3).unwrap()
    }

    #[test]
    fn zero_shift_is_identity() {
        let spec = HadamardSpec::new(2, f3()).unwrap();
        let m = sylvester_factors(&spec);
        assert_eq!(shift_factors(&m, 0, 0).unwrap(), m);
        assert!(shift_factors(&m, 4, 0).is_err());
    }

    #[test]
    fn exact_factors_stay_exact_under_every_shift() {
        let spec = HadamardSpec::new(3, f3()).unwrap();
        let h = materialize_hadamard(&spec, &Budget::default()).unwrap();
        let m = sylvester_factors(&spec);
        for x in 0..8 {
            for y in 0..8 {
                let s = shift_factors(&m, x, y).unwrap();
                assert_eq!(s.term_count(), m.term_count());
                assert_eq!(s.materialize(&Budget::default()).unwrap(), h);
            }
        }
    }

    #[test]
    fn a_single_error_moves_with_the_shift() {
        let f = f3();
        let spec = HadamardSpec::new(3, f).unwrap();
        let h = materialize_hadamard(&spec, &Budget::default()).unwrap();
        let mut terms = sylvester_factors(&spec).into_terms();
        terms[5].right[2] = f.zero();
        let m = FactoredMatrix::new(8, 8, f, terms).unwrap();
        for (x, y) in [(0u64, 0u64), (3, 6), (7, 1)] {
            let d = shift_factors(&m, x, y).unwrap().materialize(&Budget::default()).unwrap();
            assert_eq!(d.diff_positions(&h).unwrap(), vec![(5 ^ x as usize, 2 ^ y as usize)]);
        }
    }

    #[test]
    fn shift_sampler_of_exact_factors_is_exact() {
        let spec = HadamardSpec::new(2, FieldSpec::Rationals).unwrap();
        let s = rigidity_to_prob_rank(&sylvester_factors(&spec), None, &Budget::default()).unwrap();
        assert_eq!(s.claimed_rank, 4);
        assert_eq!(s.claimed_error, rational(0, 1));
        let r = estimate_error(&s, EstimateMode::Exhaustive, 0, 0, 1e-6, &Budget::default()).unwrap();
        assert_eq!(r.max_error, rational(0, 1));
    }

    #[test]
    fn ip2_reduction_invariants_hold() {
        for n in 1..=2 {
            let c = ip2_rsr(n, f3()).unwrap().check(&Budget::default()).unwrap();
            assert!(c.holds(), "{c:?}");
        }
        let rsr = ip2_rsr(2, f3()).unwrap();
        assert_eq!((rsr.left)(3, 0), vec![3, 3, 0, 0]);
        assert_eq!((rsr.right)(2, 0), vec![2, 0, 2, 0]);
    }

    #[test]
    fn broken_reduction_is_detected() {
        let mut rsr = ip2_rsr(2, f3()).unwrap();
        rsr.right = Arc::new(|y: u64, _r: u64| vec![y, 0, y, 0]);
        let c = rsr.check(&Budget::default()).unwrap();
        assert!(!c.holds());
    }

    #[test]
    fn rsr_over_exact_factors_is_exact() {
        let f = f3();
        let rsr = ip2_rsr(2, f).unwrap();
        let m = crate::matrix::DenseMatrix::from_fn(4, 4, f, |i, j| (rsr.f)(i as u64, j as u64));
        let fm = FactoredMatrix::from_dense(&m);
        let s = rsr_prob_rank(&rsr, &fm, None, &Budget::default()).unwrap();
        let p = SparseMultilinearPoly::multilinear_extension(&rsr.g_table, f).unwrap();
        assert_eq!(s.claimed_rank as u128, rsr_term_count(&p, fm.term_count()));
        assert_eq!(s.claimed_rank, (fm.term_count() + 1).pow(4) - 1);
        let r = estimate_error(&s, EstimateMode::Exhaustive, 0, 0, 1e-6, &Budget::default()).unwrap();
        assert_eq!(r.max_error, rational(0, 1));
    }

    #[test]
    fn planted_inputs() {
        let cells = planted_cells(8, 8, 3, 5).unwrap();
        assert_eq!(cells.len(), 3);
        assert_eq!(cells, planted_cells(8, 8, 3, 5).unwrap());
        assert!(planted_cells(2, 2, 5, 0).is_err());
        let spec = HadamardSpec::new(3, f3()).unwrap();
        let h = materialize_hadamard(&spec, &Budget::default()).unwrap();
        let m = corrupted_sylvester(&spec, &cells).unwrap().materialize(&Budget::default()).unwrap();
        assert_eq!(m.diff_positions(&h).unwrap(), cells);
        let rsr = ip2_rsr(2, f3()).unwrap();
        let t = planted_truth_table_factors(&rsr, &[(3, 3)]).unwrap().materialize(&Budget::default()).unwrap();
        assert_eq!(*t.get(3, 3), f3().one());
        assert_eq!(*t.get(1, 1), f3().one());
    }

    #[test]
    fn protocol_examples() {
        assert_eq!(protocol_bits(4), 3);
        assert_eq!(protocol_bits(1), 1);
        assert_eq!(protocol_bits(7), 3);
        assert_eq!(protocol_bits(8), 4);
        let s = eq_sampler(3, &rational(1, 4), f3()).unwrap();
        for seed in 0..10 {
            let t = simulate_protocol(&s, 2, 5, seed).unwrap();
            assert_eq!(t.bits, 3);
            assert_eq!(t.answer, s.sample(seed).unwrap().entry(2, 5));
        }
        assert!(simulate_protocol(&s, 8, 0, 0).is_err());
        let spec = HadamardSpec::new(2, f3()).unwrap();
        let exact = rigidity_to_prob_rank(&sylvester_factors(&spec), None, &Budget::default()).unwrap();
        for seed in 0..5 {
            for x in 0..4 {
                for y in 0..4 {
                    let t = simulate_protocol(&exact, x, y, seed).unwrap();
                    assert_eq!(t.answer, spec.oracle().entry(x, y));
                }
            }
        }
    }
}
