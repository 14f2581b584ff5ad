//! Deterministic fixtures sized for benchmarking: big enough to exercise the
//! interesting paths (rational weights, multi-iteration closure, nontrivial
//! transport), small enough that a single evaluation stays in the millisecond
//! range.

use num_bigint::BigInt;
use num_rational::BigRational;

use nonarch_core::boundedness::MatGroup;
use nonarch_core::measures::{FiniteMeasure, MetricSpace, Point};
use nonarch_core::{FieldSpec, Matrix, Scalar, SplitNorm};

pub fn field() -> FieldSpec {
    FieldSpec::new(3).unwrap()
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn s(v: &str) -> Scalar {
    v.parse().unwrap()
}

/// Two 3x3 norms with mixed valuations and ramified (denominator-2 and -3)
/// weights, the generic case of the distance computation.
pub fn norm_pair() -> (SplitNorm, SplitNorm) {
    let f = field();
    let a = SplitNorm::new(
        f,
        Matrix::from_rows(vec![
            vec![s("1"), s("3"), s("0")],
            vec![s("0"), s("1"), s("1/3")],
            vec![s("9"), s("0"), s("1")],
        ])
        .unwrap(),
        vec![rat(1, 2), rat(-2, 1), rat(0, 1)],
    )
    .unwrap();
    let b = SplitNorm::new(
        f,
        Matrix::from_rows(vec![
            vec![s("2"), s("0"), s("1/9")],
            vec![s("1"), s("1"), s("0")],
            vec![s("0"), s("3"), s("1")],
        ])
        .unwrap(),
        vec![rat(0, 1), rat(1, 3), rat(-1, 1)],
    )
    .unwrap();
    (a, b)
}

/// Measures with 8 and 6 atoms on Q_3^2; distances span several scales so the
/// flow search sweeps a real candidate set.
pub fn measure_pair() -> (FiniteMeasure, FiniteMeasure) {
    let space = MetricSpace::qp_vec(field(), 2).unwrap();
    let pt = |x: &str, y: &str| Point::Vec(vec![s(x), s(y)]);
    let mu = FiniteMeasure::new(
        space.clone(),
        vec![
            (pt("0", "0"), rat(1, 8)),
            (pt("1", "0"), rat(1, 8)),
            (pt("1/3", "2"), rat(1, 8)),
            (pt("3", "1/9"), rat(1, 8)),
            (pt("2", "2"), rat(1, 8)),
            (pt("9", "1"), rat(1, 8)),
            (pt("1/9", "0"), rat(1, 8)),
            (pt("4", "1/3"), rat(1, 8)),
        ],
    )
    .unwrap();
    let nu = FiniteMeasure::new(
        space,
        vec![
            (pt("0", "1"), rat(1, 6)),
            (pt("1", "1"), rat(1, 6)),
            (pt("3", "0"), rat(1, 3)),
            (pt("1/3", "1/3"), rat(1, 6)),
            (pt("2", "9"), rat(1, 6)),
        ],
    )
    .unwrap();
    (mu, nu)
}

/// A bounded group whose invariant lattice is more than one closure iteration
/// away from Z_p^3: staggered unipotent shears whose product g1·g2 deepens
/// the first coordinate to 1/9, reachable only at word length two.
pub fn closure_group() -> MatGroup {
    let f = field();
    let gens = vec![
        Matrix::from_rows(vec![
            vec![s("1"), s("1/3"), s("0")],
            vec![s("0"), s("1"), s("0")],
            vec![s("0"), s("0"), s("1")],
        ])
        .unwrap(),
        Matrix::from_rows(vec![
            vec![s("1"), s("0"), s("0")],
            vec![s("0"), s("1"), s("1/3")],
            vec![s("0"), s("0"), s("1")],
        ])
        .unwrap(),
    ];
    MatGroup::new(f, gens).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nonarch_core::boundedness::certify;
    use nonarch_core::measures::prokhorov;
    use num_traits::Zero;

    #[test]
    fn fixtures_are_well_formed_and_nontrivial() {
        let (a, b) = norm_pair();
        assert!(!a.gi_distance(&b).unwrap().is_zero());

        let (mu, nu) = measure_pair();
        assert!(mu.is_probability() && nu.is_probability());
        assert!(!prokhorov(&mu, &nu).unwrap().is_zero());

        let cert = certify(&closure_group(), 64, 4).unwrap();
        assert!(cert.is_bounded());
        assert!(cert.iterations() > 1, "fixture must exercise the iteration loop");
    }
}
