use rigidlab::field::FieldSpec;
use rigidlab::oracles::{brute_force_rigidity, cross_validate, min_rank_within, OracleBudget};
use rigidlab::{DenseMatrix, Scalar};

fn binary_3x3(code: u64) -> DenseMatrix {
    let entries = (0..9).map(|c| Scalar::Residue(code >> c & 1)).collect();
    DenseMatrix::new(3, 3, FieldSpec::prime(2).unwrap(), entries).unwrap()
}

#[test]
fn every_binary_3x3_matrix_cross_validates() {
    let b = OracleBudget::default();
    for code in 0..512 {
        let m = binary_3x3(code);
        let c = cross_validate(&m, &b).unwrap();
        assert!(c.passed(), "matrix {code:09b}: {:?}", c.violations);
        assert!(c.rigidity.windows(2).all(|w| w[1] <= w[0]));
        assert!(c.min_rank.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(c.min_rank[0], m.rank());
    }
}

#[test]
fn single_queries_match_the_profiles() {
    let b = OracleBudget::default();
    for code in [0b111_111_111u64, 0b100_010_001, 0b110_011_101, 0b000_000_001] {
        let m = binary_3x3(code);
        let c = cross_validate(&m, &b).unwrap();
        for r in 0..=3 {
            assert_eq!(brute_force_rigidity(&m, r, &b).unwrap(), c.rigidity[r]);
        }
        for t in 0..=9 {
            assert_eq!(min_rank_within(&m, t, &b).unwrap(), c.min_rank[t]);
        }
    }
}

#[test]
fn identity_rigidity_examples() {
    let b = OracleBudget::default();
    let f2 = FieldSpec::prime(2).unwrap();
    let i4 = DenseMatrix::identity(4, f2);
    assert_eq!(brute_force_rigidity(&i4, 2, &b).unwrap(), 2);
    assert_eq!(brute_force_rigidity(&i4, 4, &b).unwrap(), 0);
    assert_eq!(min_rank_within(&i4, 2, &b).unwrap(), 2);
}
