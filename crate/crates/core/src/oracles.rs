//! Exact rigidity of tiny matrices by exhaustive search: one oracle
//! enumerates candidate matrices, the other enumerates edits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits;
use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::matrix::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleBudget {
    pub max_enumeration: u128,
    pub max_dim: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget { max_enumeration: 1 << 26, max_dim: 5 }
    }
}

impl OracleBudget {
    pub fn new(max_enumeration: u128, max_dim: usize) -> Result<Self> {
        if max_enumeration == 0 || max_dim == 0 {
            return Err(Error::InvalidParameters("oracle budget must be positive".into()));
        }
        Ok(OracleBudget { max_enumeration, max_dim })
    }

    fn check(&self, what: &str, needed: u128) -> Result<()> {
        if needed > self.max_enumeration {
            let budget = u64::try_from(self.max_enumeration).unwrap_or(u64::MAX);
            return Err(Error::Budget { what: what.into(), needed, budget });
        }
        Ok(())
    }
}

fn prime_of(m: &DenseMatrix, budget: &OracleBudget) -> Result<u64> {
    let p = match m.field() {
        FieldSpec::PrimeField { p } => p,
        FieldSpec::Rationals => {
            return Err(Error::InvalidField("brute-force rigidity needs a prime field".into()));
        }
    };
    if m.rows().max(m.cols()) > budget.max_dim.min(MAX_SIDE) {
        return Err(Error::Budget {
            what: format!("oracle on a {}x{} matrix", m.rows(), m.cols()),
            needed: m.rows().max(m.cols()) as u128,
            budget: budget.max_dim.min(MAX_SIDE) as u64,
        });
    }
    Ok(p)
}

fn candidate_count(p: u64, cells: usize) -> u128 {
    (p as u128).checked_pow(cells as u32).unwrap_or(u128::MAX)
}

const MAX_SIDE: usize = 8;

/// Rank over `F_p` of a matrix of at most `MAX_SIDE` columns, in place.
fn small_rank(a: &mut [[u64; MAX_SIDE]], cols: usize, p: u64) -> usize {
    let mulm = |x: u64, y: u64| (x as u128 * y as u128 % p as u128) as u64;
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..a.len()).find(|&i| a[i][c] != 0) else { continue };
        a.swap(rank, piv);
        let inv = crate::field::pow_mod(a[rank][c], p - 2, p);
        let (top, rest) = a.split_at_mut(rank + 1);
        let pivot = &top[rank];
        for row in rest {
            let f = mulm(row[c], inv);
            if f != 0 {
                for (v, &q) in row[c..cols].iter_mut().zip(&pivot[c..cols]) {
                    *v = (*v + p - mulm(f, q)) % p;
                }
            }
        }
        rank += 1;
        if rank == a.len() {
            break;
        }
    }
    rank
}

/// Entries of `M` as residues, row-major.
fn residues(m: &DenseMatrix) -> Vec<u64> {
    m.entries().iter().map(Scalar::residue).collect()
}

/// Visits candidates `lo..hi` in base-`p` order (first cell most significant)
/// with their Hamming distance to `target` and a closure computing their
/// rank on demand.
fn scan(
    target: &[u64],
    rows: usize,
    cols: usize,
    p: u64,
    lo: u128,
    hi: u128,
    mut visit: impl FnMut(usize, &dyn Fn() -> usize),
) {
    let cells = target.len();
    let mut digits = vec![0u64; cells];
    let mut idx = lo;
    for d in digits.iter_mut().rev() {
        *d = (idx % p as u128) as u64;
        idx /= p as u128;
    }
    for _ in lo..hi {
        let dist = digits.iter().zip(target).filter(|(a, b)| a != b).count();
        let rank = || {
            let mut a = [[0u64; MAX_SIDE]; MAX_SIDE];
            for (i, row) in a.iter_mut().enumerate().take(rows) {
                row[..cols].copy_from_slice(&digits[i * cols..(i + 1) * cols]);
            }
            small_rank(&mut a[..rows], cols, p)
        };
        visit(dist, &rank);
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < p {
                break;
            }
            *d = 0;
        }
    }
}

const CHUNK: u128 = 1 << 16;

fn chunks(total: u128) -> impl ParallelIterator<Item = (u128, u128)> {
    (0..total.div_ceil(CHUNK) as u64)
        .into_par_iter()
        .map(move |c| (c as u128 * CHUNK, ((c as u128 + 1) * CHUNK).min(total)))
}

/// `min { hamming(M, N) : rank(N) <= r }` over every matrix `N` of the same
/// shape, skipping the rank computation once a candidate cannot improve on
/// the running minimum.
pub fn brute_force_rigidity(m: &DenseMatrix, r: usize, budget: &OracleBudget) -> Result<usize> {
    let p = prime_of(m, budget)?;
    let cells = m.rows() * m.cols();
    let total = candidate_count(p, cells);
    budget.check("rigidity candidates", total)?;
    if m.rank() <= r {
        return Ok(0);
    }
    let target = residues(m);
    let best = chunks(total)
        .map(|(lo, hi)| {
            let mut best = cells;
            scan(&target, m.rows(), m.cols(), p, lo, hi, |d, rank| {
                if d < best && rank() <= r {
                    best = d;
                }
            });
            best
        })
        .min()
        .unwrap_or(cells);
    Ok(best)
}

/// `ℛ_M(r)` for every `r` in `0..=min(rows, cols)` from one pass.
pub fn rigidity_profile(m: &DenseMatrix, budget: &OracleBudget) -> Result<Vec<usize>> {
    let p = prime_of(m, budget)?;
    let cells = m.rows() * m.cols();
    let total = candidate_count(p, cells);
    budget.check("rigidity candidates", total)?;
    let top = m.rows().min(m.cols());
    let target = residues(m);
    let by_rank = chunks(total)
        .map(|(lo, hi)| {
            let mut best = vec![cells; top + 1];
            scan(&target, m.rows(), m.cols(), p, lo, hi, |d, rank| {
                // A candidate only matters if it beats the best at rank 0.
                if d < best[0] {
                    let k = rank();
                    best[k] = best[k].min(d);
                }
            });
            best
        })
        .reduce(|| vec![cells; top + 1], |a, b| a.iter().zip(&b).map(|(x, y)| *x.min(y)).collect());
    let mut out = by_rank;
    for k in 1..=top {
        out[k] = out[k].min(out[k - 1]);
    }
    Ok(out)
}

fn edit_count(cells: usize, t: usize, p: u64) -> u128 {
    (0..=t.min(cells))
        .map(|s| bits::binomial(cells as u64, s as u64).saturating_mul((p as u128 - 1).pow(s as u32)))
        .fold(0u128, u128::saturating_add)
}

/// Minimum rank reachable from `M` by changing at most `t` entries, for
/// every budget `0..=t`, by enumerating edit positions and new values.
pub fn min_rank_profile(m: &DenseMatrix, t: usize, budget: &OracleBudget) -> Result<Vec<usize>> {
    let p = prime_of(m, budget)?;
    let cells = m.rows() * m.cols();
    budget.check("edit candidates", edit_count(cells, t, p))?;
    let mut out = Vec::with_capacity(t + 1);
    let mut best = m.rank();
    out.push(best);
    for s in 1..=t {
        if s <= cells && best > 0 {
            let mut positions = Vec::new();
            crate::poly::for_each_subset(cells, s, |mask| positions.push(mask));
            let level = positions.par_iter().map(|&mask| best_edit(m, p, mask, cells)).min().unwrap_or(best);
            best = best.min(level);
        }
        out.push(best);
    }
    Ok(out)
}

/// Lowest rank over every way of replacing the cells of `mask` with values
/// different from the current ones.
fn best_edit(m: &DenseMatrix, p: u64, mask: u64, cells: usize) -> usize {
    let pos: Vec<usize> = (0..cells).filter(|&c| mask >> c & 1 == 1).collect();
    let choices = (p - 1).pow(pos.len() as u32);
    let cols = m.cols();
    let mut best = usize::MAX;
    for mut code in 0..choices {
        let mut n = m.clone();
        for &c in &pos {
            let old = m.get(c / cols, c % cols).residue();
            let offset = code % (p - 1) + 1;
            code /= p - 1;
            n.set(c / cols, c % cols, Scalar::Residue((old + offset) % p));
        }
        best = best.min(n.rank());
        if best == 0 {
            break;
        }
    }
    best
}

pub fn min_rank_within(m: &DenseMatrix, t: usize, budget: &OracleBudget) -> Result<usize> {
    Ok(*min_rank_profile(m, t, budget)?.last().expect("nonempty profile"))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossValidation {
    /// `ℛ_M(r)` for `r = 0..=min(rows, cols)`.
    pub rigidity: Vec<usize>,
    /// Minimum rank within `t` edits for `t = 0..=rows*cols`.
    pub min_rank: Vec<usize>,
    pub violations: Vec<String>,
}

impl CrossValidation {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Runs both oracles over their full ranges and checks that they invert
/// each other and that both profiles are non-increasing.
pub fn cross_validate(m: &DenseMatrix, budget: &OracleBudget) -> Result<CrossValidation> {
    let cells = m.rows() * m.cols();
    let rigidity = rigidity_profile(m, budget)?;
    let min_rank = min_rank_profile(m, cells, budget)?;
    let mut violations = Vec::new();
    for (t, &k) in min_rank.iter().enumerate() {
        if rigidity[k] > t {
            violations.push(format!("rigidity at rank {k} is {} but {t} edits reach rank {k}", rigidity[k]));
        }
    }
    for (r, &d) in rigidity.iter().enumerate() {
        if min_rank[d] > r {
            violations.push(format!("{d} edits should reach rank {r}, best found {}", min_rank[d]));
        }
    }
    for w in rigidity.windows(2) {
        if w[1] > w[0] {
            violations.push(format!("rigidity profile increases: {rigidity:?}"));
        }
    }
    for w in min_rank.windows(2) {
        if w[1] > w[0] {
            violations.push(format!("min-rank profile increases: {min_rank:?}"));
        }
    }
    if rigidity[m.rank().min(rigidity.len() - 1)] != 0 {
        violations.push("rigidity at the matrix's own rank is nonzero".into());
    }
    if min_rank[0] != m.rank() {
        violations.push("zero edits changed the rank".into());
    }
    Ok(CrossValidation { rigidity, min_rank, violations })
}
