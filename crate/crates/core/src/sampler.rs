//! Seeded distributions over factored matrices, the EQ / LEQ / LTF /
//! LTF∘LTF constructions, and error estimation.

use std::collections::BTreeSet;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits;
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::factored::{EntryOracle, FactoredMatrix, Term};
use crate::field::{rational_str, FieldSpec, Scalar};
use crate::seed::{derive_seed, rng};

/// Source of uniform choices. Samplers draw all their randomness through it,
/// which lets the same draw code run from a seed or over its whole domain.
pub trait Coins {
    /// Uniform value in `0..bound`.
    fn choose(&mut self, bound: u64) -> u64;
}

pub struct SeededCoins(ChaCha20Rng);

impl SeededCoins {
    pub fn new(seed: u64) -> Self {
        SeededCoins(rng(seed))
    }
}

impl Coins for SeededCoins {
    fn choose(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "cannot choose from an empty range");
        self.0.random_range(0..bound)
    }
}

/// Depth-first walk over every sequence of choices a draw can make.
struct Odometer {
    path: Vec<(u64, u64)>,
    pos: usize,
}

impl Coins for Odometer {
    fn choose(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "cannot choose from an empty range");
        let c = if self.pos < self.path.len() {
            let (c, b) = self.path[self.pos];
            assert_eq!(b, bound, "draw is not deterministic in its choices");
            c
        } else {
            self.path.push((0, bound));
            0
        };
        self.pos += 1;
        c
    }
}

/// Runs `draw` once per outcome of its randomness and passes each result
/// with its exact probability. Fails once more than `max_outcomes` outcomes
/// have been visited.
pub fn for_each_outcome<R>(
    mut draw: impl FnMut(&mut dyn Coins) -> R,
    max_outcomes: u64,
    mut visit: impl FnMut(R, &BigRational),
) -> Result<u64> {
    let mut od = Odometer { path: Vec::new(), pos: 0 };
    let mut count = 0u64;
    loop {
        od.pos = 0;
        let r = draw(&mut od);
        od.path.truncate(od.pos);
        count += 1;
        if count > max_outcomes {
            return Err(Error::Budget {
                what: "exhaustive enumeration of sampler randomness".into(),
                needed: count as u128,
                budget: max_outcomes,
            });
        }
        let denom = od.path.iter().fold(BigInt::one(), |acc, &(_, b)| acc * BigInt::from(b));
        visit(r, &BigRational::new(BigInt::one(), denom));
        loop {
            match od.path.last_mut() {
                None => return Ok(count),
                Some(last) if last.0 + 1 < last.1 => {
                    last.0 += 1;
                    break;
                }
                Some(_) => {
                    od.path.pop();
                }
            }
        }
    }
}

/// How sampled entries are compared with the target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Agreement {
    /// Equal field values.
    Value,
    /// Target is 1 (true) or 0 (false); a sample predicts true when it is
    /// negative, or zero and `zero_is_true`.
    Sign { zero_is_true: bool },
}

impl Agreement {
    pub fn agrees(&self, sample: &Scalar, target: &Scalar) -> bool {
        match self {
            Agreement::Value => sample == target,
            Agreement::Sign { zero_is_true } => {
                let s = sample.signum().expect("sign agreement needs rational samples");
                let predicted = s < 0 || (s == 0 && *zero_is_true);
                predicted == !target.is_zero()
            }
        }
    }
}

pub type DrawFn = dyn Fn(&mut dyn Coins) -> FactoredMatrix + Send + Sync;

/// A distribution over factored matrices together with the matrix it
/// approximates and its claimed rank and error.
#[derive(Clone)]
pub struct ProbMatrixSampler {
    pub label: String,
    pub rows: usize,
    pub cols: usize,
    pub field: FieldSpec,
    pub claimed_rank: usize,
    pub claimed_error: BigRational,
    pub agreement: Agreement,
    target: Arc<dyn EntryOracle>,
    draw: Arc<DrawFn>,
}

impl std::fmt::Debug for ProbMatrixSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProbMatrixSampler")
            .field("label", &self.label)
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("field", &self.field)
            .field("claimed_rank", &self.claimed_rank)
            .field("claimed_error", &self.claimed_error)
            .field("agreement", &self.agreement)
            .finish()
    }
}

impl ProbMatrixSampler {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        label: impl Into<String>,
        rows: usize,
        cols: usize,
        field: FieldSpec,
        claimed_rank: usize,
        claimed_error: BigRational,
        agreement: Agreement,
        target: Arc<dyn EntryOracle>,
        draw: Arc<DrawFn>,
    ) -> Self {
        ProbMatrixSampler {
            label: label.into(),
            rows,
            cols,
            field,
            claimed_rank,
            claimed_error,
            agreement,
            target,
            draw,
        }
    }

    pub fn target(&self, row: usize, col: usize) -> Scalar {
        self.target.entry(row, col)
    }

    pub fn target_oracle(&self) -> Arc<dyn EntryOracle> {
        self.target.clone()
    }

    /// One draw driven by `coins`, checked against the rank claim.
    pub fn draw_with(&self, coins: &mut dyn Coins) -> Result<FactoredMatrix> {
        let m = (self.draw)(coins);
        if m.term_count() > self.claimed_rank {
            return Err(Error::Invariant(format!(
                "{} drew {} terms, above its claimed rank {}",
                self.label,
                m.term_count(),
                self.claimed_rank
            )));
        }
        Ok(m)
    }

    pub fn sample(&self, seed: u64) -> Result<FactoredMatrix> {
        self.draw_with(&mut SeededCoins::new(seed))
    }

    pub fn draw_fn(&self) -> Arc<DrawFn> {
        self.draw.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMode {
    Exhaustive,
    MonteCarlo,
}

/// Per-entry disagreement frequencies of a sampler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub sampler: String,
    pub mode: EstimateMode,
    pub rows: usize,
    pub cols: usize,
    /// Monte-Carlo trials, or the number of enumerated outcomes.
    pub draws: u64,
    pub seed: Option<u64>,
    pub claimed_rank: usize,
    #[serde(with = "rational_str")]
    pub claimed_error: BigRational,
    pub max_terms_drawn: usize,
    #[serde(with = "rational_str")]
    pub max_error: BigRational,
    pub max_error_f64: f64,
    pub mean_error_f64: f64,
    pub delta: f64,
    /// `sqrt(ln(2 rows cols / delta) / (2 trials))`; absent for exact runs.
    pub hoeffding_radius: Option<f64>,
    /// Exact per-entry frequencies in row-major order.
    #[serde(skip)]
    pub entry_errors: Vec<BigRational>,
    /// One summary per Monte-Carlo trial; empty for exact runs.
    #[serde(skip)]
    pub trials: Vec<TrialSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: u64,
    pub seed: u64,
    pub terms: usize,
    pub disagreements: usize,
}

impl ErrorReport {
    pub fn entry_error(&self, i: usize, j: usize) -> &BigRational {
        &self.entry_errors[i * self.cols + j]
    }
}

/// Budget charge per cell for every outcome enumerated by an exhaustive
/// estimate.
pub const OUTCOME_COST: u64 = 1 << 8;

pub fn hoeffding_radius(cells: usize, delta: f64, trials: u64) -> f64 {
    ((2.0 * cells as f64 / delta).ln() / (2.0 * trials as f64)).sqrt()
}

/// Estimates per-entry error either exactly, by enumerating every outcome of
/// the sampler's randomness, or from `trials` seeded draws.
pub fn estimate_error(
    sampler: &ProbMatrixSampler,
    mode: EstimateMode,
    trials: u64,
    seed: u64,
    delta: f64,
    budget: &Budget,
) -> Result<ErrorReport> {
    let cells = sampler.rows * sampler.cols;
    let target: Vec<Scalar> = (0..cells).map(|k| sampler.target(k / sampler.cols, k % sampler.cols)).collect();
    let wrong_cells = |m: &FactoredMatrix| -> Result<Vec<usize>> {
        let d = m.materialize(budget)?;
        Ok(d.entries()
            .iter()
            .zip(&target)
            .enumerate()
            .filter(|(_, (s, t))| !sampler.agreement.agrees(s, t))
            .map(|(k, _)| k)
            .collect())
    };
    let mut summaries = Vec::new();
    let (entry_errors, draws, max_terms, radius, seed_used) = match mode {
        EstimateMode::Exhaustive => {
            // Each outcome is charged `OUTCOME_COST` entries per cell.
            let max_outcomes = (budget.max_entries / (cells.max(1) as u64 * OUTCOME_COST)).max(1);
            let mut errors = vec![BigRational::zero(); cells];
            let mut max_terms = 0usize;
            let mut failure = None;
            let draws = for_each_outcome(
                |coins| sampler.draw_with(coins),
                max_outcomes,
                |m, weight| match m.and_then(|m| {
                    max_terms = max_terms.max(m.term_count());
                    wrong_cells(&m)
                }) {
                    Ok(wrong) => wrong.into_iter().for_each(|k| errors[k] += weight),
                    Err(e) => {
                        failure.get_or_insert(e);
                    }
                },
            )
            .map_err(|e| match e {
                Error::Budget { what, needed, .. } => Error::Budget {
                    what: format!("{what} (lower bound)"),
                    needed: needed * cells as u128 * OUTCOME_COST as u128,
                    budget: budget.max_entries,
                },
                e => e,
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            (errors, draws, max_terms, None, None)
        }
        EstimateMode::MonteCarlo => {
            if trials == 0 {
                return Err(Error::InvalidParameters("Monte-Carlo estimation needs at least one trial".into()));
            }
            budget.check("Monte-Carlo error estimation", cells as u128 * trials as u128)?;
            let per_trial: Vec<(usize, Vec<usize>)> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let m = sampler.sample(derive_seed(seed, "trial", t))?;
                    Ok((m.term_count(), wrong_cells(&m)?))
                })
                .collect::<Result<_>>()?;
            let mut counts = vec![0u64; cells];
            let mut max_terms = 0;
            for (t, (terms, wrong)) in per_trial.iter().enumerate() {
                let t = t as u64;
                summaries.push(TrialSummary {
                    trial: t,
                    seed: derive_seed(seed, "trial", t),
                    terms: *terms,
                    disagreements: wrong.len(),
                });
                max_terms = max_terms.max(*terms);
                for &k in wrong {
                    counts[k] += 1;
                }
            }
            let errors = counts.into_iter().map(|c| BigRational::new(BigInt::from(c), BigInt::from(trials))).collect();
            (errors, trials, max_terms, Some(hoeffding_radius(cells, delta, trials)), Some(seed))
        }
    };
    let max_error = entry_errors.iter().max().cloned().unwrap_or_else(BigRational::zero);
    let mean = entry_errors.iter().map(|e| e.to_f64().unwrap_or(0.0)).sum::<f64>() / cells.max(1) as f64;
    Ok(ErrorReport {
        sampler: sampler.label.clone(),
        mode,
        rows: sampler.rows,
        cols: sampler.cols,
        draws,
        seed: seed_used,
        claimed_rank: sampler.claimed_rank,
        claimed_error: sampler.claimed_error.clone(),
        max_terms_drawn: max_terms,
        max_error_f64: max_error.to_f64().unwrap_or(f64::NAN),
        max_error,
        mean_error_f64: mean,
        delta,
        hoeffding_radius: radius,
        entry_errors,
        trials: summaries,
    })
}

/// Smallest `k` with `2^k * eps >= 1`.
pub fn log2_ceil_inverse(eps: &BigRational) -> u32 {
    let mut k = 0;
    let mut p = eps.clone();
    while p < BigRational::one() {
        p *= BigInt::from(2);
        k += 1;
    }
    k
}

fn check_eps(eps: &BigRational) -> Result<()> {
    if eps.is_positive() && *eps < BigRational::one() {
        Ok(())
    } else {
        Err(Error::InvalidParameters(format!("eps = {eps} must lie strictly between 0 and 1")))
    }
}

/// Parity hash of `v` (an index over `len` bits) restricted to `mask`.
fn hash_bit(v: u64, h: u64) -> u64 {
    ((v & h).count_ones() & 1) as u64
}

/// Pattern of `k` random parity hashes on the top `len` bits of each index.
/// Equal prefixes always share a pattern; distinct ones collide with
/// probability exactly `2^-k`.
fn draw_hashes(coins: &mut dyn Coins, len: usize, k: u32) -> Vec<u64> {
    (0..k).map(|_| coins.choose(1 << len)).collect()
}

fn pattern(prefix: u64, hashes: &[u64]) -> u64 {
    hashes.iter().fold(0, |acc, &h| (acc << 1) | hash_bit(prefix, h))
}

/// Equality sampler on `n` bits: `k = ceil(log2(1/eps))` random parity hashes
/// expanded into `2^k` terms, one per hash pattern.
pub fn eq_sampler(n: usize, eps: &BigRational, field: FieldSpec) -> Result<ProbMatrixSampler> {
    check_eps(eps)?;
    if n > 30 {
        return Err(Error::InvalidParameters(format!("n = {n} is too large for a dense index space")));
    }
    let k = log2_ceil_inverse(eps);
    let dim = 1usize << n;
    let draw = move |coins: &mut dyn Coins| {
        let hashes = draw_hashes(coins, n, k);
        let pats: Vec<u64> = (0..dim as u64).map(|v| pattern(v, &hashes)).collect();
        let terms = (0..1u64 << k)
            .map(|c| {
                let ind: Vec<Scalar> = pats.iter().map(|&p| field.from_i64((p == c) as i64)).collect();
                Term { left: ind.clone(), right: ind }
            })
            .collect();
        FactoredMatrix::new(dim, dim, field, terms).expect("EQ terms have matching shapes")
    };
    let target = move |i: usize, j: usize| field.from_i64((i == j) as i64);
    Ok(ProbMatrixSampler::new(
        format!("eq(n={n})"),
        dim,
        dim,
        field,
        1 << k,
        BigRational::new(BigInt::one(), BigInt::from(1u64) << k),
        Agreement::Value,
        Arc::new(target),
        Arc::new(draw),
    ))
}

/// Plan of a `[a <= b]` sampler over `m`-bit indices.
#[derive(Clone, Copy, Debug)]
struct LeqPlan {
    m: usize,
    k: u32,
    strict: bool,
}

impl LeqPlan {
    fn new(m: usize, eps: &BigRational, strict: bool) -> Self {
        let events = if strict { m } else { m + 1 };
        let per_event = eps / BigInt::from(events.max(1));
        LeqPlan { m, k: log2_ceil_inverse(&per_event), strict }
    }

    /// Positions `i` compare prefixes of length `i`; position 0 needs no hash.
    fn claimed_rank(&self) -> usize {
        let hashed = self.m.saturating_sub(1) + usize::from(!self.strict);
        usize::from(self.m > 0) + hashed * (1usize << self.k)
    }

    /// Terms of `Σ_i (1 - a_i) b_i EQ(a_{<i}, b_{<i}) [+ EQ(a, b)]`, evaluated
    /// at row indices `a_idx` and column indices `b_idx`. Terms that vanish on
    /// every listed row or column are dropped.
    fn draw(&self, coins: &mut dyn Coins, a_idx: &[u64], b_idx: &[u64], field: FieldSpec) -> Vec<Term> {
        let m = self.m;
        let mut terms = Vec::new();
        let mut push = |left: Vec<Scalar>, right: Vec<Scalar>| {
            if left.iter().any(|v| !v.is_zero()) && right.iter().any(|v| !v.is_zero()) {
                terms.push(Term { left, right });
            }
        };
        let prefix = |v: u64, len: usize| v >> (m - len);
        let positions: Vec<Option<usize>> = (0..m).map(Some).chain((!self.strict).then_some(None)).collect();
        for pos in positions {
            let len = pos.unwrap_or(m);
            let bit_a = |v: u64| pos.map_or(1, |i| 1 - bits::bit(v, i, m) as i64);
            let bit_b = |v: u64| pos.map_or(1, |i| bits::bit(v, i, m) as i64);
            if len == 0 {
                push(
                    a_idx.iter().map(|&v| field.from_i64(bit_a(v))).collect(),
                    b_idx.iter().map(|&v| field.from_i64(bit_b(v))).collect(),
                );
                continue;
            }
            let hashes = draw_hashes(coins, len, self.k);
            let pa: Vec<u64> = a_idx.iter().map(|&v| pattern(prefix(v, len), &hashes)).collect();
            let pb: Vec<u64> = b_idx.iter().map(|&v| pattern(prefix(v, len), &hashes)).collect();
            // Only patterns live on both sides give nonvanishing terms.
            let live = |idx: &[u64], pats: &[u64], bit: &dyn Fn(u64) -> i64| -> BTreeSet<u64> {
                idx.iter().zip(pats).filter(|(&v, _)| bit(v) != 0).map(|(_, &p)| p).collect()
            };
            let (la, lb) = (live(a_idx, &pa, &bit_a), live(b_idx, &pb, &bit_b));
            for &c in la.intersection(&lb) {
                let left = a_idx.iter().zip(&pa).map(|(&v, &p)| field.from_i64(bit_a(v) * (p == c) as i64)).collect();
                let right = b_idx.iter().zip(&pb).map(|(&v, &p)| field.from_i64(bit_b(v) * (p == c) as i64)).collect();
                push(left, right);
            }
        }
        terms
    }
}

/// `[x <= y]` on `n`-bit integers (component 0 most significant). The
/// non-strict form adds `EQ_n(x, y)`; the error budget is split evenly over
/// the EQ events.
pub fn leq_sampler(n: usize, eps: &BigRational, field: FieldSpec, strict: bool) -> Result<ProbMatrixSampler> {
    check_eps(eps)?;
    if n == 0 || n > 20 {
        return Err(Error::InvalidParameters(format!("n = {n} must lie in 1..=20")));
    }
    let plan = LeqPlan::new(n, eps, strict);
    let dim = 1usize << n;
    let idx: Arc<Vec<u64>> = Arc::new((0..dim as u64).collect());
    let draw = move |coins: &mut dyn Coins| {
        let terms = plan.draw(coins, &idx, &idx, field);
        FactoredMatrix::new(dim, dim, field, terms).expect("LEQ terms have matching shapes")
    };
    let target = move |i: usize, j: usize| field.from_i64(if strict { i < j } else { i <= j } as i64);
    Ok(ProbMatrixSampler::new(
        format!("{}(n={n})", if strict { "lt" } else { "leq" }),
        dim,
        dim,
        field,
        plan.claimed_rank(),
        eps.clone(),
        Agreement::Value,
        Arc::new(target),
        Arc::new(draw),
    ))
}

/// `[Σ v_i x_i + Σ w_i y_i >= threshold]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LTFSpec {
    pub x_weights: Vec<i64>,
    pub y_weights: Vec<i64>,
    pub threshold: i64,
}

impl LTFSpec {
    pub fn nx(&self) -> usize {
        self.x_weights.len()
    }

    pub fn ny(&self) -> usize {
        self.y_weights.len()
    }

    fn dot(weights: &[i64], v: u64) -> i64 {
        let n = weights.len();
        weights.iter().enumerate().filter(|(i, _)| bits::bit(v, *i, n)).map(|(_, w)| w).sum()
    }

    pub fn eval(&self, x: u64, y: u64) -> bool {
        Self::dot(&self.x_weights, x) + Self::dot(&self.y_weights, y) >= self.threshold
    }

    /// Row and column positions in the sorted list of all `a(x) = -Σ v_i x_i`
    /// and `b(y) = Σ w_i y_i - threshold`, each value mapped to its earliest
    /// position, so `[a <= b]` on positions equals it on values.
    fn index_maps(&self) -> (Vec<u64>, Vec<u64>, usize) {
        let a: Vec<i64> = (0..1u64 << self.nx()).map(|x| -Self::dot(&self.x_weights, x)).collect();
        let b: Vec<i64> = (0..1u64 << self.ny()).map(|y| Self::dot(&self.y_weights, y) - self.threshold).collect();
        let mut sorted: Vec<i64> = a.iter().chain(&b).copied().collect();
        sorted.sort_unstable();
        let earliest = |v: i64| sorted.partition_point(|&s| s < v) as u64;
        let m = (usize::BITS - (sorted.len() - 1).leading_zeros()) as usize;
        (a.iter().map(|&v| earliest(v)).collect(), b.iter().map(|&v| earliest(v)).collect(), m.max(1))
    }
}

/// Probabilistic-rank sampler for an LTF via a LEQ sampler on sorted-value
/// positions.
pub fn ltf_sampler(spec: &LTFSpec, eps: &BigRational, field: FieldSpec) -> Result<ProbMatrixSampler> {
    check_eps(eps)?;
    if spec.nx() > 16 || spec.ny() > 16 {
        return Err(Error::Budget {
            what: "LTF index tables".into(),
            needed: (1u128 << spec.nx()) + (1u128 << spec.ny()),
            budget: 1 << 17,
        });
    }
    let (ia, ib, m) = spec.index_maps();
    let plan = LeqPlan::new(m, eps, false);
    let (rows, cols) = (ia.len(), ib.len());
    // A constant function needs no randomness: one all-ones term or none.
    let constant = if ia.iter().max() <= ib.iter().min() {
        Some(true)
    } else if ia.iter().min() > ib.iter().max() {
        Some(false)
    } else {
        None
    };
    let (ia, ib) = (Arc::new(ia), Arc::new(ib));
    let draw = move |coins: &mut dyn Coins| match constant {
        Some(true) => FactoredMatrix::new(
            rows,
            cols,
            field,
            vec![Term { left: vec![field.one(); rows], right: vec![field.one(); cols] }],
        )
        .expect("shape"),
        Some(false) => FactoredMatrix::empty(rows, cols, field),
        None => {
            let terms = plan.draw(coins, &ia, &ib, field);
            FactoredMatrix::new(rows, cols, field, terms).expect("LTF terms have matching shapes")
        }
    };
    let s = spec.clone();
    let target = move |i: usize, j: usize| field.from_i64(s.eval(i as u64, j as u64) as i64);
    Ok(ProbMatrixSampler::new(
        format!("ltf(nx={}, ny={})", spec.nx(), spec.ny()),
        rows,
        cols,
        field,
        if constant.is_some() { 1 } else { plan.claimed_rank() },
        eps.clone(),
        Agreement::Value,
        Arc::new(target),
        Arc::new(draw),
    ))
}

/// `C(x, y) = [Σ top_weights_i * gate_i(x, y) <= top_threshold]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthTwoLTFCircuit {
    pub gates: Vec<LTFSpec>,
    pub top_weights: Vec<i64>,
    pub top_threshold: i64,
}

impl DepthTwoLTFCircuit {
    pub fn validate(&self) -> Result<(usize, usize)> {
        let first = self.gates.first().ok_or_else(|| Error::InvalidParameters("circuit has no gates".into()))?;
        let (nx, ny) = (first.nx(), first.ny());
        if self.gates.iter().any(|g| g.nx() != nx || g.ny() != ny) {
            return Err(Error::InvalidParameters("gates disagree on input lengths".into()));
        }
        if self.top_weights.len() != self.gates.len() {
            return Err(Error::InvalidParameters(format!(
                "{} top weights for {} gates",
                self.top_weights.len(),
                self.gates.len()
            )));
        }
        Ok((nx, ny))
    }

    pub fn eval(&self, x: u64, y: u64) -> bool {
        let s: i64 = self.gates.iter().zip(&self.top_weights).map(|(g, w)| w * g.eval(x, y) as i64).sum();
        s <= self.top_threshold
    }

    /// Top weights and threshold multiplied by `c > 0`.
    pub fn scaled(&self, c: i64) -> Self {
        DepthTwoLTFCircuit {
            gates: self.gates.clone(),
            top_weights: self.top_weights.iter().map(|w| w * c).collect(),
            top_threshold: self.top_threshold * c,
        }
    }
}

/// Sign sampler `Q = -K J + Σ w_i P_i` where `J` is the all-ones matrix and
/// each `P_i` an LTF sampler with error `eps / s`. Over the rationals only.
pub fn ltf_ltf_sign_sampler(
    circuit: &DepthTwoLTFCircuit,
    eps: &BigRational,
    field: FieldSpec,
    zero_is_true: bool,
) -> Result<ProbMatrixSampler> {
    if field != FieldSpec::Rationals {
        return Err(Error::InvalidField(format!("sign agreement needs the rationals, got {}", field.label())));
    }
    check_eps(eps)?;
    let (nx, ny) = circuit.validate()?;
    let s = circuit.gates.len();
    let gate_eps = eps / BigInt::from(s);
    let gates = circuit.gates.iter().map(|g| ltf_sampler(g, &gate_eps, field)).collect::<Result<Vec<_>>>()?;
    let claimed_rank = gates.iter().map(|g| g.claimed_rank).sum::<usize>() + 1;
    let (rows, cols) = (1usize << nx, 1usize << ny);
    let weights = circuit.top_weights.clone();
    let k = circuit.top_threshold;
    let draw = move |coins: &mut dyn Coins| {
        let mut m = FactoredMatrix::empty(rows, cols, field);
        m.push(vec![field.from_i64(-k); rows], vec![field.one(); cols]).expect("shape");
        for (g, &w) in gates.iter().zip(&weights) {
            let p = (g.draw)(coins);
            for t in p.into_terms() {
                let left = t.left.iter().map(|v| field.mul(v, &field.from_i64(w))).collect();
                m.push(left, t.right).expect("shape");
            }
        }
        m
    };
    let c = circuit.clone();
    let target = move |i: usize, j: usize| field.from_i64(c.eval(i as u64, j as u64) as i64);
    Ok(ProbMatrixSampler::new(
        format!("ltf-ltf-sign(s={s}, nx={nx}, ny={ny})"),
        rows,
        cols,
        field,
        claimed_rank,
        eps.clone(),
        Agreement::Sign { zero_is_true },
        Arc::new(target),
        Arc::new(draw),
    ))
}

/// First top layer (weights in `-range..=range`, threshold in
/// `-range*s..=range*s`) making the gates compute `target` on every input,
/// in the `<=` convention of [`DepthTwoLTFCircuit`].
pub fn search_top_layer(
    gates: &[LTFSpec],
    target: impl Fn(u64, u64) -> bool,
    range: i64,
) -> Option<DepthTwoLTFCircuit> {
    let s = gates.len();
    let (nx, ny) = (gates.first()?.nx(), gates.first()?.ny());
    let outputs: Vec<(Vec<i64>, bool)> = (0..1u64 << nx)
        .flat_map(|x| (0..1u64 << ny).map(move |y| (x, y)))
        .map(|(x, y)| (gates.iter().map(|g| g.eval(x, y) as i64).collect(), target(x, y)))
        .collect();
    let side = (2 * range + 1) as u64;
    for code in 0..side.pow(s as u32) {
        let w: Vec<i64> = (0..s).map(|i| (code / side.pow(i as u32) % side) as i64 - range).collect();
        for k in -range * s as i64..=range * s as i64 {
            let ok = outputs.iter().all(|(g, t)| (g.iter().zip(&w).map(|(a, b)| a * b).sum::<i64>() <= k) == *t);
            if ok {
                return Some(DepthTwoLTFCircuit { gates: gates.to_vec(), top_weights: w, top_threshold: k });
            }
        }
    }
    None
}

/// The four gates `[x1+y1 >= 2]`, `[x2+y2 >= 2]`, `[x1+x2+y1+y2 >= 4]` and
/// `[x1+x2+y1+y2 >= 3]` on 2+2 bits.
pub fn ip2_pair_gates() -> Vec<LTFSpec> {
    let g = |xw: [i64; 2], yw: [i64; 2], t| LTFSpec { x_weights: xw.to_vec(), y_weights: yw.to_vec(), threshold: t };
    vec![g([1, 0], [1, 0], 2), g([0, 1], [0, 1], 2), g([1, 1], [1, 1], 4), g([1, 1], [1, 1], 3)]
}

/// Exact depth-two circuit for inner product mod 2 on `n`+`n` bits with one
/// gate `g_S = AND_{i in S} (x_i AND y_i)` per nonempty `S`. Parity of the
/// `z_i = x_i y_i` is `Σ_S (-2)^{|S|-1} g_S`, so top weights
/// `-2 (-2)^{|S|-1}` and threshold `-1` give top sums `0` or `-2`.
pub fn ip2_exact_circuit(n: usize) -> Result<DepthTwoLTFCircuit> {
    if n == 0 || n > 8 {
        return Err(Error::InvalidParameters(format!("n = {n} must lie in 1..=8")));
    }
    let mut gates = Vec::new();
    let mut top_weights = Vec::new();
    for s in 1..1u64 << n {
        let w: Vec<i64> = (0..n).map(|i| bits::bit(s, i, n) as i64).collect();
        let size = s.count_ones();
        gates.push(LTFSpec { x_weights: w.clone(), y_weights: w, threshold: 2 * size as i64 });
        top_weights.push(-2 * (-2i64).pow(size - 1));
    }
    Ok(DepthTwoLTFCircuit { gates, top_weights, top_threshold: -1 })
}

/// Inner product mod 2 of two `n`-bit indices.
pub fn ip2(x: u64, y: u64) -> bool {
    bits::inner(x, y) % 2 == 1
}
