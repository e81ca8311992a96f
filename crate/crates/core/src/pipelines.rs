//! End-to-end non-rigidity constructions for `H_n` and SYM∘AND matrices.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits;
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::factored::{EntryOracle, FactoredMatrix};
use crate::field::{ceil_rational, floor_rational, rational, rational_str, FieldSpec, Scalar};
use crate::hadamard::{
    correct_rows_columns, low_ip_count, low_ip_count_at, out_of_window_indices, HadamardSpec, WeightWindow,
};
use crate::interp::{interpolant_to_poly, weight_interpolant, WeightInterpolant};
use crate::matrix::DenseMatrix;
use crate::poly::SparseMultilinearPoly;
use crate::seed::{derive_seed, rng};

/// Parameters of the low-error construction. Defaults follow
/// `k = ceil(2 eps n) - 1`, `r = floor((1/2 - eps) n) + 1` and the window
/// `[ceil((1/2 - eps) n), floor((1/2 + eps) n)]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonRigidityParams {
    pub n: usize,
    #[serde(with = "rational_str")]
    pub eps: BigRational,
    pub k_offset: i64,
    pub r_points: usize,
    pub window: WeightWindow,
    pub field: FieldSpec,
}

impl NonRigidityParams {
    pub fn new(n: usize, eps: BigRational, field: FieldSpec) -> Result<Self> {
        let half = rational(1, 2);
        if !(eps.is_positive() && eps < half) {
            return Err(Error::InvalidParameters(format!("eps = {eps} must lie strictly between 0 and 1/2")));
        }
        let nq = BigRational::from_integer(BigInt::from(n));
        let to_i64 = |v: BigInt| v.to_i64().expect("small integer");
        let k_offset = to_i64(ceil_rational(&(BigRational::from_integer(2.into()) * &eps * &nq))) - 1;
        let r_points = to_i64(floor_rational(&((&half - &eps) * &nq))) as usize + 1;
        let lo = to_i64(ceil_rational(&((&half - &eps) * &nq))).max(0) as usize;
        let hi = (to_i64(floor_rational(&((&half + &eps) * &nq))) as usize).min(n);
        let p = NonRigidityParams { n, eps, k_offset, r_points, window: WeightWindow::new(lo, hi)?, field };
        p.validate()?;
        Ok(p)
    }

    /// Interpolation over every overlap `0..=n` and the full weight window:
    /// the construction is then exact.
    pub fn full_window(n: usize, field: FieldSpec) -> Result<Self> {
        let p = NonRigidityParams {
            n,
            eps: rational(1, 4),
            k_offset: -1,
            r_points: n + 1,
            window: WeightWindow::full(n),
            field,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        HadamardSpec::new(self.n, self.field)?;
        if self.k_offset < -1 {
            return Err(Error::InvalidParameters(format!("k_offset = {} must be at least -1", self.k_offset)));
        }
        if self.r_points == 0 {
            return Err(Error::InvalidParameters("r_points must be positive".into()));
        }
        if self.k_offset + self.r_points as i64 > self.n as i64 {
            return Err(Error::InvalidParameters(format!(
                "k_offset + r_points = {} exceeds n = {}",
                self.k_offset + self.r_points as i64,
                self.n
            )));
        }
        if self.window.hi > self.n || self.window.lo > self.window.hi {
            return Err(Error::InvalidParameters(format!(
                "window [{}, {}] is not inside [0, {}]",
                self.window.lo, self.window.hi, self.n
            )));
        }
        Ok(())
    }
}

/// Integer interpolant of `(-1)^s` on `s = k+1..=k+r`.
pub fn ip2_window_interpolant(params: &NonRigidityParams) -> Result<WeightInterpolant> {
    params.validate()?;
    let targets: Vec<BigInt> = (1..=params.r_points as i64)
        .map(|i| BigInt::from(if (params.k_offset + i) % 2 == 0 { 1 } else { -1 }))
        .collect();
    weight_interpolant(params.k_offset, &targets)
}

/// Polynomial over `x_1..x_n, y_1..y_n` equal to `(-1)^{<x, y>}` whenever
/// the overlap lies in the interpolation range.
pub fn ip2_window_poly(params: &NonRigidityParams) -> Result<SparseMultilinearPoly> {
    let w = ip2_window_interpolant(params)?;
    Ok(interpolant_to_poly(&w, params.n, params.field)?.substitute_products())
}

/// Overlaps `s` in `0..=n` where the interpolant disagrees with `(-1)^s` in
/// the field.
pub fn erring_overlaps(w: &WeightInterpolant, n: usize, field: FieldSpec) -> Vec<usize> {
    (0..=n).filter(|&s| field.from_bigint(&w.eval(s as u64)) != field.sign_power(s as u32)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RigidityReport {
    pub construction: String,
    pub n: usize,
    pub field: FieldSpec,
    pub params: serde_json::Value,
    pub monomials: usize,
    pub degree: usize,
    pub corrections: usize,
    pub claimed_rank_bound: usize,
    pub realized_rank: Option<usize>,
    pub total_diffs: Option<u64>,
    pub max_row_diffs: Option<u64>,
    /// Pairs `[diffs, rows]`: how many rows carry each diff count.
    pub row_diff_histogram: Option<Vec<[u64; 2]>>,
    /// Overlap bound: in-window `y` with overlap at most `k_offset`,
    /// maximized over in-window rows.
    pub per_row_diff_bound: Option<String>,
    /// Exact predicted diff counts from the erring overlaps.
    pub predicted_max_row_diffs: Option<String>,
    pub predicted_total_diffs: Option<String>,
    pub erring_overlaps: Option<Vec<usize>>,
    pub notes: Vec<String>,
}

impl RigidityReport {
    fn base(construction: &str, n: usize, field: FieldSpec, params: serde_json::Value) -> Self {
        RigidityReport {
            construction: construction.into(),
            n,
            field,
            params,
            monomials: 0,
            degree: 0,
            corrections: 0,
            claimed_rank_bound: 0,
            realized_rank: None,
            total_diffs: None,
            max_row_diffs: None,
            row_diff_histogram: None,
            per_row_diff_bound: None,
            predicted_max_row_diffs: None,
            predicted_total_diffs: None,
            erring_overlaps: None,
            notes: Vec::new(),
        }
    }

    /// Fills the realized fields from a materialized matrix, or records why
    /// they are absent.
    fn measure(
        &mut self,
        m: &FactoredMatrix,
        target: &dyn EntryOracle,
        budget: &Budget,
    ) -> Result<Option<DenseMatrix>> {
        match m.materialize(budget) {
            Ok(d) => {
                let rows = row_diffs(&d, target);
                self.realized_rank = Some(d.rank());
                self.total_diffs = Some(rows.iter().sum());
                self.max_row_diffs = Some(rows.iter().copied().max().unwrap_or(0));
                self.row_diff_histogram = Some(histogram(&rows));
                Ok(Some(d))
            }
            Err(Error::Budget { what, needed, budget }) => {
                self.notes.push(format!("not materialized: {what} needs {needed} entries, budget {budget}"));
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }
}

/// Per-row count of entries that differ from `target`.
pub fn row_diffs(d: &DenseMatrix, target: &dyn EntryOracle) -> Vec<u64> {
    (0..d.rows())
        .into_par_iter()
        .map(|i| d.row(i).iter().enumerate().filter(|(j, v)| **v != target.entry(i, *j)).count() as u64)
        .collect()
}

fn histogram(rows: &[u64]) -> Vec<[u64; 2]> {
    let mut h = std::collections::BTreeMap::new();
    for &r in rows {
        *h.entry(r).or_insert(0u64) += 1;
    }
    h.into_iter().map(|(k, v)| [k, v]).collect()
}

/// Low-error construction: window polynomial, then wholesale correction of
/// every out-of-window row and column against `H_n`.
pub fn valiant_nonrigidity(params: &NonRigidityParams, budget: &Budget) -> Result<(FactoredMatrix, RigidityReport)> {
    let spec = HadamardSpec::new(params.n, params.field)?;
    let w = ip2_window_interpolant(params)?;
    let poly = interpolant_to_poly(&w, params.n, params.field)?.substitute_products();
    let m = poly.to_factored(budget)?;
    let bad = out_of_window_indices(params.n, &params.window);
    let corrected = correct_rows_columns(&m, &spec.oracle(), &bad, &bad)?;

    let mut report = RigidityReport::base(
        "valiant",
        params.n,
        params.field,
        serde_json::to_value(params).expect("params serialize"),
    );
    report.monomials = poly.monomial_count();
    report.degree = poly.degree();
    report.corrections = 2 * bad.len();
    report.claimed_rank_bound = report.monomials + report.corrections;

    let errs = erring_overlaps(&w, params.n, params.field);
    let (n, win) = (params.n, params.window);
    let in_window_rows: Vec<usize> = (win.lo..=win.hi).collect();
    let bound = in_window_rows.iter().map(|&wx| low_ip_count(n, wx, params.k_offset, &win)).max().unwrap_or_default();
    let per_weight: Vec<BigUint> =
        in_window_rows.iter().map(|&wx| low_ip_count_at(n, wx, &win, |s| errs.contains(&s))).collect();
    let predicted_total: BigUint =
        in_window_rows.iter().zip(&per_weight).map(|(&wx, c)| crate::hadamard::binom_big(n, wx) * c).sum();
    report.per_row_diff_bound = Some(bound.to_string());
    report.predicted_max_row_diffs = Some(per_weight.iter().max().cloned().unwrap_or_default().to_string());
    report.predicted_total_diffs = Some(predicted_total.to_string());
    if errs.iter().any(|&s| s as i64 > params.k_offset + params.r_points as i64 && s <= win.hi) {
        report.notes.push("some in-window overlaps lie above the interpolation range and are counted as diffs".into());
    }
    report.erring_overlaps = Some(errs);

    report.measure(&corrected, &spec.oracle(), budget)?;
    Ok((corrected, report))
}

/// `t = ceil(sqrt(n ln(2/eps) / 2))`, so that a uniform `n`-bit vector has
/// weight outside `n/2 ± t` with probability at most `eps`.
pub fn hoeffding_half_width(n: usize, eps: f64) -> usize {
    ((n as f64) * (2.0 / eps).ln() / 2.0).sqrt().ceil() as usize
}

/// Weights `[ceil(n/2 - t), floor(n/2 + t)]` clamped to `[0, n]`.
pub fn centered_window(n: usize, t: usize) -> WeightWindow {
    let lo = (n as i64 - 2 * t as i64 + 1).div_euclid(2).max(0) as usize;
    let hi = ((n + 2 * t) / 2).min(n);
    WeightWindow { lo, hi }
}

/// One draw of the XOR-shift construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftedSample {
    pub poly: SparseMultilinearPoly,
    pub shift: u64,
    pub t: usize,
    pub window: WeightWindow,
}

fn check_eps(eps: &BigRational) -> Result<f64> {
    if !(eps.is_positive() && *eps <= BigRational::one()) {
        return Err(Error::InvalidParameters(format!("eps = {eps} must lie in (0, 1]")));
    }
    Ok(eps.to_f64().expect("eps is finite"))
}

/// `alpha + beta (-1)^{|z|}`, realized as `alpha + beta (-1)^{|s|} q(z XOR s)`
/// for a uniform shift `s` and `q` interpolating `(-1)^w` on the central
/// window.
fn shifted_alternating_poly(
    n: usize,
    alpha: &Scalar,
    beta: &Scalar,
    eps: &BigRational,
    field: FieldSpec,
    seed: u64,
) -> Result<ShiftedSample> {
    if n == 0 || n > 62 {
        return Err(Error::InvalidParameters(format!("n = {n} must lie in 1..=62")));
    }
    let e = check_eps(eps)?;
    let t = hoeffding_half_width(n, e);
    let window = centered_window(n, t);
    let shift = rng(derive_seed(seed, "xor-shift", 0)).random::<u64>() & ((1u64 << n) - 1);
    let targets: Vec<BigInt> = (window.lo..=window.hi).map(|w| BigInt::from(if w % 2 == 0 { 1 } else { -1 })).collect();
    let interp = weight_interpolant(window.lo as i64 - 1, &targets)?;
    let q = interpolant_to_poly(&interp, n, field)?;
    let shifted = q.shifted_substitute(&bits::to_bits(shift, n))?;
    let scale = field.mul(beta, &field.sign_power(bits::weight(shift)));
    let mut b = crate::poly::PolyBuilder::new(n, field);
    for m in shifted.monomials() {
        b.add(m.vars.iter().copied(), field.mul(&scale, &m.coeff))?;
    }
    b.add([], alpha.clone())?;
    Ok(ShiftedSample { poly: b.build(), shift, t, window })
}

/// One sample of the probabilistic polynomial for `(-1)^{|z|}`: for each
/// fixed `z`, correct with probability at least `1 - eps` over the seed.
pub fn parity_prob_poly(n: usize, eps: &BigRational, field: FieldSpec, seed: u64) -> Result<ShiftedSample> {
    field.require_odd_characteristic()?;
    shifted_alternating_poly(n, &field.zero(), &field.one(), eps, field, seed)
}

/// `eps = 1/r_target` construction: shifted parity polynomial composed with
/// `z_i = x_i y_i`, one outer product per monomial.
pub fn high_error_nonrigidity(
    n: usize,
    r_target: u64,
    field: FieldSpec,
    seed: u64,
    budget: &Budget,
) -> Result<(FactoredMatrix, RigidityReport)> {
    let spec = SymmetricFunctionSpec::parity(n);
    let (m, mut report) = sym_and_nonrigidity(&spec, r_target, field, seed, budget)?;
    report.construction = "high-error".into();
    Ok((m, report))
}

/// A symmetric function given by its integer value at each Hamming weight.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetricFunctionSpec {
    pub n: usize,
    pub values: Vec<i64>,
}

impl SymmetricFunctionSpec {
    pub fn new(n: usize, values: Vec<i64>) -> Result<Self> {
        if values.len() != n + 1 {
            return Err(Error::InvalidParameters(format!("{} values for n = {n} (need n + 1)", values.len())));
        }
        Ok(SymmetricFunctionSpec { n, values })
    }

    /// `(-1)^w`.
    pub fn parity(n: usize) -> Self {
        SymmetricFunctionSpec { n, values: (0..=n).map(|w| if w % 2 == 0 { 1 } else { -1 }).collect() }
    }

    /// `[w > n/2]`.
    pub fn majority(n: usize) -> Self {
        SymmetricFunctionSpec { n, values: (0..=n).map(|w| (2 * w > n) as i64).collect() }
    }

    pub fn constant(n: usize, c: i64) -> Self {
        SymmetricFunctionSpec { n, values: vec![c; n + 1] }
    }

    /// `(alpha, beta)` with `values[w] = alpha + beta (-1)^w` for every `w`,
    /// when such a pair exists.
    pub fn alternating_form(&self) -> Option<(BigRational, BigRational)> {
        let v0 = BigRational::from_integer(BigInt::from(self.values[0]));
        let v1 = self.values.get(1).map_or(v0.clone(), |&v| BigRational::from_integer(BigInt::from(v)));
        let half = rational(1, 2);
        let alpha = (&v0 + &v1) * &half;
        let beta = (&v0 - &v1) * &half;
        let fits = self.values.iter().enumerate().all(|(w, &v)| {
            let sign = if w % 2 == 0 { BigRational::one() } else { -BigRational::one() };
            &alpha + &beta * sign == BigRational::from_integer(BigInt::from(v))
        });
        fits.then_some((alpha, beta))
    }
}

/// Entries `f(|x AND y|)` by index.
struct SymAndOracle {
    values: Vec<Scalar>,
}

impl EntryOracle for SymAndOracle {
    fn entry(&self, row: usize, col: usize) -> Scalar {
        self.values[bits::inner(row as u64, col as u64) as usize].clone()
    }
}

/// `f(x_1 y_1, ..., x_n y_n)` for symmetric `f`. Functions of the form
/// `alpha + beta (-1)^w` use the XOR-shift construction with error
/// `1/r_target`; any other profile is interpolated exactly over all weights,
/// since a shift does not preserve the weight of `z`.
pub fn sym_and_nonrigidity(
    spec: &SymmetricFunctionSpec,
    r_target: u64,
    field: FieldSpec,
    seed: u64,
    budget: &Budget,
) -> Result<(FactoredMatrix, RigidityReport)> {
    let n = spec.n;
    if spec.values.len() != n + 1 {
        return Err(Error::InvalidParameters(format!("{} values for n = {n}", spec.values.len())));
    }
    if r_target == 0 || (n < 32 && r_target as u128 > 1u128 << (2 * n)) {
        return Err(Error::InvalidParameters(format!("r_target = {r_target} must lie in [1, 4^n]")));
    }
    let eps = BigRational::new(BigInt::one(), BigInt::from(r_target));
    let params = serde_json::json!({
        "n": n,
        "r_target": r_target,
        "eps": format!("1/{r_target}"),
        "seed": seed,
        "values": spec.values,
    });
    let mut report = RigidityReport::base("sym-and", n, field, params);
    let poly = match spec.alternating_form() {
        Some((alpha, beta)) => {
            if !beta.is_zero() {
                field.require_odd_characteristic()?;
            }
            let a = field.from_rational(&alpha)?;
            let b = field.from_rational(&beta)?;
            let sample = shifted_alternating_poly(n, &a, &b, &eps, field, seed)?;
            report.notes.push(format!(
                "xor-shift: shift {:0width$b}, half-width t = {}, window [{}, {}]",
                sample.shift,
                sample.t,
                sample.window.lo,
                sample.window.hi,
                width = n
            ));
            report.params["t"] = sample.t.into();
            report.params["method"] = "xor-shift".into();
            sample.poly
        }
        None => {
            let targets: Vec<BigInt> = spec.values.iter().map(|&v| BigInt::from(v)).collect();
            let w = weight_interpolant(-1, &targets)?;
            report.notes.push("exact-profile: interpolated over every weight, zero error".into());
            report.params["method"] = "exact-profile".into();
            interpolant_to_poly(&w, n, field)?
        }
    };
    let lifted = poly.substitute_products();
    let m = lifted.to_factored(budget)?;
    report.monomials = lifted.monomial_count();
    report.degree = poly.degree();
    report.claimed_rank_bound = report.monomials;
    let oracle = SymAndOracle { values: spec.values.iter().map(|&v| field.from_i64(v)).collect() };
    report.measure(&m, &oracle, budget)?;
    Ok((m, report))
}

/// Entry oracle for `f(|x AND y|)`.
pub fn sym_and_oracle(spec: &SymmetricFunctionSpec, field: FieldSpec) -> impl EntryOracle {
    SymAndOracle { values: spec.values.iter().map(|&v| field.from_i64(v)).collect() }
}
