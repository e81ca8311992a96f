use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;
use rigidlab::field::rational;
use rigidlab::hadamard::{materialize_hadamard, HadamardSpec};
use rigidlab::reductions::{
    ip2_rsr, planted_truth_table_factors, rigidity_to_prob_rank, rsr_prob_rank, shift_factors, simulate_protocol,
    sylvester_factors,
};
use rigidlab::sampler::{
    eq_sampler, estimate_error, leq_sampler, ltf_ltf_sign_sampler, ltf_sampler, DepthTwoLTFCircuit, EstimateMode,
    LTFSpec, ProbMatrixSampler,
};
use rigidlab::{Budget, FactoredMatrix, FieldSpec};

fn f3() -> FieldSpec {
    FieldSpec::prime(3).unwrap()
}

fn exhaustive(s: &ProbMatrixSampler) -> rigidlab::sampler::ErrorReport {
    estimate_error(s, EstimateMode::Exhaustive, 0, 0, 1e-6, &Budget::default()).unwrap()
}

/// Sylvester factors of `H_n` with the listed right-vector entries replaced
/// by zero, so exactly those entries of the product are wrong.
fn corrupted_hadamard(n: usize, field: FieldSpec, cells: &[(usize, usize)]) -> FactoredMatrix {
    let spec = HadamardSpec::new(n, field).unwrap();
    let mut terms = sylvester_factors(&spec).into_terms();
    for &(u, v) in cells {
        terms[u].right[v] = field.zero();
    }
    FactoredMatrix::new(1 << n, 1 << n, field, terms).unwrap()
}

fn distinct_cells(n: usize, raw: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let dim = 1usize << n;
    let mut cells: Vec<(usize, usize)> = raw.iter().map(|&(u, v)| (u % dim, v % dim)).collect();
    cells.sort_unstable();
    cells.dedup();
    cells
}

#[test]
fn eq_errors_are_exact_for_small_inputs() {
    for n in 1..=3usize {
        for (num, den) in [(1, 2), (1, 4), (1, 5)] {
            let eps = rational(num, den);
            let s = eq_sampler(n, &eps, f3()).unwrap();
            let r = exhaustive(&s);
            let k = s.claimed_rank.trailing_zeros() as i64;
            assert_eq!(s.claimed_rank, 1 << k);
            assert_eq!(s.claimed_error, rational(1, 1 << k));
            for i in 0..1 << n {
                for j in 0..1 << n {
                    let expect = if i == j { BigRational::zero() } else { rational(1, 1 << k) };
                    assert_eq!(*r.entry_error(i, j), expect, "n={n} eps={eps} ({i},{j})");
                }
            }
        }
    }
}

#[test]
fn leq_and_ltf_meet_their_error_claims_on_every_entry() {
    let trials = 400;
    let check = |s: &ProbMatrixSampler, eps: BigRational| {
        let r = estimate_error(s, EstimateMode::MonteCarlo, trials, 3, 1e-6, &Budget::default()).unwrap();
        let slack = r.hoeffding_radius.unwrap();
        let limit = rigidlab::field::rational_to_f64(&eps) + slack;
        assert!(r.max_error_f64 <= limit, "{}: {} > {limit}", s.label, r.max_error_f64);
        assert!(r.max_terms_drawn <= s.claimed_rank);
    };
    for n in 1..=3usize {
        for strict in [false, true] {
            check(&leq_sampler(n, &rational(1, 4), f3(), strict).unwrap(), rational(1, 4));
        }
    }
    let exact = exhaustive(&leq_sampler(1, &rational(1, 2), f3(), false).unwrap());
    assert!(exact.max_error <= rational(1, 2));
    let specs = [
        LTFSpec { x_weights: vec![1, 2, -1], y_weights: vec![3, -2, 1], threshold: 1 },
        LTFSpec { x_weights: vec![2, 2], y_weights: vec![1, 1, 1], threshold: 4 },
        LTFSpec { x_weights: vec![1], y_weights: vec![-1, 5], threshold: 0 },
    ];
    for spec in &specs {
        check(&ltf_sampler(spec, &rational(1, 5), f3()).unwrap(), rational(1, 5));
    }
}

#[test]
fn rescaled_top_weights_give_identical_sign_statistics() {
    let gate = |t| LTFSpec { x_weights: vec![1, 1], y_weights: vec![1, 1], threshold: t };
    let circuit = DepthTwoLTFCircuit { gates: vec![gate(2), gate(3)], top_weights: vec![1, -2], top_threshold: 0 };
    let q = FieldSpec::Rationals;
    let base = ltf_ltf_sign_sampler(&circuit, &rational(1, 5), q, true).unwrap();
    let scaled = ltf_ltf_sign_sampler(&circuit.scaled(3), &rational(1, 5), q, true).unwrap();
    let run =
        |s: &ProbMatrixSampler| estimate_error(s, EstimateMode::MonteCarlo, 300, 7, 1e-6, &Budget::default()).unwrap();
    let (a, b) = (run(&base), run(&scaled));
    assert_eq!(a.entry_errors, b.entry_errors);
    assert_eq!(a.claimed_rank, b.claimed_rank);
}

#[test]
fn every_draw_respects_the_rank_claim() {
    let samplers = vec![
        eq_sampler(4, &rational(1, 8), f3()).unwrap(),
        leq_sampler(4, &rational(1, 8), f3(), false).unwrap(),
        ltf_sampler(&LTFSpec { x_weights: vec![3, 1, 2], y_weights: vec![-1, 4], threshold: 2 }, &rational(1, 3), f3())
            .unwrap(),
    ];
    for s in &samplers {
        for seed in 0..50 {
            assert!(s.sample(seed).unwrap().term_count() <= s.claimed_rank, "{}", s.label);
        }
    }
}

#[test]
fn protocol_answer_is_the_sampled_entry() {
    let s = eq_sampler(3, &rational(1, 4), f3()).unwrap();
    for seed in 0..40 {
        let m = s.sample(seed).unwrap();
        for x in 0..8 {
            for y in 0..8 {
                let t = simulate_protocol(&s, x, y, seed).unwrap();
                assert_eq!((t.answer, t.bits), (m.entry(x, y), 3));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shifting_permutes_the_error_set(
        n in 1usize..=3, raw in prop::collection::vec((0usize..8, 0usize..8), 0..6),
    ) {
        let f = f3();
        let cells = distinct_cells(n, &raw);
        let m = corrupted_hadamard(n, f, &cells);
        let h = materialize_hadamard(&HadamardSpec::new(n, f).unwrap(), &Budget::default()).unwrap();
        let dim = 1u64 << n;
        for x in 0..dim {
            for y in 0..dim {
                let d = shift_factors(&m, x, y).unwrap().materialize(&Budget::default()).unwrap();
                let mut moved: Vec<(usize, usize)> = cells.iter().map(|&(u, v)| (u ^ x as usize, v ^ y as usize)).collect();
                moved.sort_unstable();
                prop_assert_eq!(d.diff_positions(&h).unwrap(), moved);
            }
        }
    }

    #[test]
    fn averaging_over_shifts_spreads_errors_uniformly(
        n in 1usize..=3, raw in prop::collection::vec((0usize..8, 0usize..8), 0..6),
        rational_field: bool,
    ) {
        let f = if rational_field { FieldSpec::Rationals } else { f3() };
        let cells = distinct_cells(n, &raw);
        let m = corrupted_hadamard(n, f, &cells);
        let s = rigidity_to_prob_rank(&m, None, &Budget::default()).unwrap();
        let expect = BigRational::new(BigInt::from(cells.len()), BigInt::from(1u64 << (2 * n)));
        prop_assert_eq!(&s.claimed_error, &expect);
        let r = exhaustive(&s);
        prop_assert_eq!(r.draws, 1u64 << (2 * n));
        prop_assert!(r.entry_errors.iter().all(|e| *e == expect));
    }
}

#[test]
fn ip2_reduction_holds_exhaustively_up_to_three_bits() {
    for n in 1..=3 {
        let c = ip2_rsr(n, f3()).unwrap().check(&Budget::default()).unwrap();
        assert!(c.holds(), "n={n}: {c:?}");
        assert_eq!(c.checked_inputs, 1 << (2 * n));
    }
}

#[test]
fn rsr_error_stays_within_k_times_input_error() {
    let f = f3();
    for (n, planted) in [(2usize, vec![(1usize, 3usize)]), (2, vec![(0, 0), (3, 2)]), (3, vec![(5, 6), (2, 7)])] {
        let rsr = ip2_rsr(n, f).unwrap();
        let dim = 1usize << n;
        let m = planted_truth_table_factors(&rsr, &planted).unwrap();
        let s = rsr_prob_rank(&rsr, &m, None, &Budget::default()).unwrap();
        let eps = BigRational::new(BigInt::from(planted.len()), BigInt::from(dim * dim));
        assert_eq!(s.claimed_error, &eps * BigInt::from(4));
        let r = exhaustive(&s);
        assert!(r.max_error <= s.claimed_error, "n={n}: {} > {}", r.max_error, s.claimed_error);
        assert!(r.max_terms_drawn <= s.claimed_rank);
        for (i, j) in (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))) {
            assert_eq!(s.target(i, j), rsr.f.as_ref()(i as u64, j as u64));
        }
    }
}
