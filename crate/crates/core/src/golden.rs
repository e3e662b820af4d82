//! Reference coefficient matrices with hand-checkable structure.

use crate::field::FieldSpec;
use crate::matrix::FqMatrix;
use crate::rates::HsaConfig;
use crate::scheme::{external_scheme, CoefficientScheme};

/// Two clusters of three users over F_3 with collusion level 1. Rows are in
/// lexicographic user order: `Z_{1,v} = N_v`, `Z_{2,1} = N_4 - N_1`,
/// `Z_{2,2} = N_4 - N_2`, `Z_{2,3} = -(N_3 + 2 N_4)`.
pub fn three_user_clusters_matrix() -> FqMatrix {
    let f = FieldSpec::new(3).expect("3 is prime");
    FqMatrix::from_signed_rows(
        f,
        &[
            vec![1, 0, 0, 0],
            vec![0, 1, 0, 0],
            vec![0, 0, 1, 0],
            vec![-1, 0, 0, 1],
            vec![0, -1, 0, 1],
            vec![0, 0, -1, -2],
        ],
    )
    .expect("well-formed rows")
}

pub fn three_user_clusters_f3() -> CoefficientScheme {
    let cfg = HsaConfig::new(2, 3, 1).expect("valid shape");
    external_scheme(&cfg, three_user_clusters_matrix()).expect("zero row sum")
}

pub fn three_user_clusters_json() -> String {
    three_user_clusters_f3()
        .to_json(false)
        .expect("serializable")
}

/// Six keys from four source symbols using geometric nodes
/// `{0, g, g^2, g^3, g^4}`: row `i < 5` is `(1, y_i, y_i^2, y_i^3)` with
/// `y_0 = 0`, and the last row is the negated sum of the first five.
pub fn geometric_nodes_matrix(q: u64, gamma: u64) -> FqMatrix {
    let f = FieldSpec::new(q).expect("prime modulus");
    let mut rows: Vec<Vec<u64>> = Vec::with_capacity(6);
    rows.push(vec![1, 0, 0, 0]);
    for i in 1..5 {
        let y = f.pow(gamma % q, i);
        rows.push((0..4).map(|k| f.pow(y, k)).collect());
    }
    let parity = (0..4)
        .map(|c| f.neg(f.sum(rows.iter().map(|r| r[c]))))
        .collect();
    rows.push(parity);
    FqMatrix::from_rows(f, 4, &rows).expect("6x4 rows")
}

/// The geometric-node matrix as a three-relay, two-user, `T = 2` scheme.
pub fn geometric_nodes_scheme(q: u64, gamma: u64) -> CoefficientScheme {
    let cfg = HsaConfig::new(3, 2, 2).expect("valid shape");
    external_scheme(&cfg, geometric_nodes_matrix(q, gamma)).expect("zero row sum")
}

pub fn geometric_nodes_json(q: u64, gamma: u64) -> String {
    geometric_nodes_scheme(q, gamma)
        .to_json(false)
        .expect("serializable")
}
