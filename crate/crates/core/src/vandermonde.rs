//! Vandermonde-type constructions and the determinant identities behind the
//! MDS property of the parity-extended Vandermonde matrix.

use serde::{Deserialize, Serialize};

use crate::error::{HsaError, Result};
use crate::field::FieldSpec;
use crate::matrix::FqMatrix;

/// An ordered list of field elements `x_0, ..., x_{m-1}` used as Vandermonde
/// nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementSet(Vec<u64>);

impl ElementSet {
    /// Wraps the elements without checking distinctness. Use
    /// [`ElementSet::distinct`] when the Vandermonde rank property matters.
    pub fn new(elements: Vec<u64>) -> Self {
        Self(elements)
    }

    pub fn distinct(elements: Vec<u64>) -> Result<Self> {
        let set = Self(elements);
        if !set.is_distinct() {
            return Err(HsaError::InvalidArgument(format!(
                "elements {:?} are not pairwise distinct",
                set.0
            )));
        }
        Ok(set)
    }

    pub fn is_distinct(&self) -> bool {
        let mut sorted = self.0.clone();
        sorted.sort_unstable();
        sorted.windows(2).all(|w| w[0] != w[1])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn subset(&self, indices: &[usize]) -> ElementSet {
        ElementSet(indices.iter().map(|&i| self.0[i]).collect())
    }
}

fn check_canonical(field: &FieldSpec, xs: &ElementSet) -> Result<()> {
    match xs.as_slice().iter().find(|&&x| !field.is_canonical(x)) {
        Some(x) => Err(HsaError::InvalidArgument(format!(
            "element {x} is not a residue mod {}",
            field.q()
        ))),
        None => Ok(()),
    }
}

/// `|X| x n` matrix with row `i` equal to `(1, x_i, ..., x_i^{n-1})`.
pub fn vandermonde(field: FieldSpec, xs: &ElementSet, n: usize) -> Result<FqMatrix> {
    check_canonical(&field, xs)?;
    if xs.len() < n {
        return Err(HsaError::InvalidArgument(format!(
            "need at least {n} elements, got {}",
            xs.len()
        )));
    }
    let mut data = Vec::with_capacity(xs.len() * n);
    for &x in xs.as_slice() {
        let mut p = 1 % field.q();
        for _ in 0..n {
            data.push(p);
            p = field.mul(p, x);
        }
    }
    FqMatrix::new(field, xs.len(), n, data)
}

/// Vandermonde matrix with a leading parity row equal to the negated sum of
/// all Vandermonde rows, so the rows of the result sum to zero.
pub fn extended_vandermonde(field: FieldSpec, xs: &ElementSet, n: usize) -> Result<FqMatrix> {
    let v = vandermonde(field, xs, n)?;
    let parity: Vec<u64> = v.column_sums().into_iter().map(|s| field.neg(s)).collect();
    let mut data = parity;
    data.extend_from_slice(v.data());
    FqMatrix::new(field, xs.len() + 1, n, data)
}

/// `prod_{i<j} (x_j - x_i)`, the closed-form Vandermonde determinant.
pub fn vandermonde_det(field: FieldSpec, xs: &ElementSet) -> u64 {
    let x = xs.as_slice();
    let mut acc = 1 % field.q();
    for j in 0..x.len() {
        for i in 0..j {
            acc = field.mul(acc, field.sub(x[j], x[i]));
        }
    }
    acc
}

/// Degree-`k` elementary symmetric polynomial of the elements.
pub fn elementary_symmetric(field: FieldSpec, xs: &ElementSet, k: usize) -> Result<u64> {
    if k > xs.len() {
        return Err(HsaError::InvalidArgument(format!(
            "degree {k} exceeds element count {}",
            xs.len()
        )));
    }
    // e[j] after processing a prefix holds e_j of that prefix.
    let mut e = vec![0u64; k + 1];
    e[0] = 1 % field.q();
    for &x in xs.as_slice() {
        for j in (1..=k).rev() {
            e[j] = field.add(e[j], field.mul(e[j - 1], x));
        }
    }
    Ok(e[k])
}

/// Determinant of `[x_i^{p_j}]` for a strictly increasing exponent list.
pub fn generalized_vandermonde_det(
    field: FieldSpec,
    xs: &ElementSet,
    exponents: &[u64],
) -> Result<u64> {
    check_canonical(&field, xs)?;
    if exponents.len() != xs.len() {
        return Err(HsaError::InvalidArgument(format!(
            "{} exponents for {} elements",
            exponents.len(),
            xs.len()
        )));
    }
    if exponents.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HsaError::InvalidArgument(
            "exponents must be strictly increasing".into(),
        ));
    }
    let m = xs.len();
    let data: Vec<u64> = xs
        .as_slice()
        .iter()
        .flat_map(|&x| exponents.iter().map(move |&p| field.pow(x, p)))
        .collect();
    FqMatrix::new(field, m, m, data)?.determinant()
}

/// Determinant of the square submatrix of `extended_vandermonde(xs, n)` made of
/// the parity row followed by the Vandermonde rows indexed by `indices`
/// (ascending), where `n = indices.len() + 1`.
///
/// Evaluated in closed form as
/// `(-1)^n * V_{n-1}(X_I) * sum_{i not in I} prod_{j in I} (x_i - x_j)`.
pub fn extended_vandermonde_subdet(
    field: FieldSpec,
    xs: &ElementSet,
    indices: &[usize],
) -> Result<u64> {
    check_canonical(&field, xs)?;
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HsaError::InvalidArgument(
            "row indices must be strictly increasing".into(),
        ));
    }
    if indices.iter().any(|&i| i >= xs.len()) {
        return Err(HsaError::InvalidArgument(format!(
            "row index out of range for {} elements",
            xs.len()
        )));
    }
    let n = indices.len() + 1;
    let x = xs.as_slice();
    let chosen = xs.subset(indices);
    let mut tail = 0;
    for i in (0..x.len()).filter(|i| !indices.contains(i)) {
        let p = indices.iter().fold(1 % field.q(), |acc, &j| {
            field.mul(acc, field.sub(x[i], x[j]))
        });
        tail = field.add(tail, p);
    }
    let value = field.mul(vandermonde_det(field, &chosen), tail);
    Ok(if n.is_multiple_of(2) {
        value
    } else {
        field.neg(value)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{cofactor_det, combinations};
    use proptest::prelude::*;

    fn f(q: u64) -> FieldSpec {
        FieldSpec::new(q).unwrap()
    }

    fn set(xs: &[u64]) -> ElementSet {
        ElementSet::new(xs.to_vec())
    }

    fn rows(m: &FqMatrix) -> Vec<Vec<u64>> {
        m.row_iter().map(<[u64]>::to_vec).collect()
    }

    #[test]
    fn vandermonde_examples() {
        assert_eq!(
            rows(&vandermonde(f(7), &set(&[0]), 1).unwrap()),
            vec![vec![1]]
        );
        assert_eq!(
            rows(&vandermonde(f(17), &set(&[3, 9]), 2).unwrap()),
            vec![vec![1, 3], vec![1, 9]]
        );
        assert_eq!(
            rows(&vandermonde(f(7), &set(&[0, 1, 2]), 3).unwrap()),
            vec![vec![1, 0, 0], vec![1, 1, 1], vec![1, 2, 4]]
        );
        assert!(vandermonde(f(7), &set(&[0]), 2).is_err());
        assert!(vandermonde(f(7), &set(&[9]), 1).is_err());
    }

    #[test]
    fn extended_vandermonde_examples() {
        let m = extended_vandermonde(f(5), &set(&[0, 1]), 2).unwrap();
        assert_eq!(rows(&m), vec![vec![3, 4], vec![1, 0], vec![1, 1]]);
        assert_eq!(m.column_sums(), vec![0, 0]);
        let dets: Vec<u64> = combinations(3, 2)
            .iter()
            .map(|s| m.select_rows(s).determinant().unwrap())
            .collect();
        assert_eq!(dets, vec![1, 4, 1]);

        let m = extended_vandermonde(f(7), &set(&[0, 1, 2]), 2).unwrap();
        assert_eq!(m.row(0), &[4, 4]);
    }

    #[test]
    fn product_formula_matches_elimination() {
        let fld = f(7);
        let xs = set(&[0, 1, 2]);
        assert_eq!(vandermonde_det(fld, &xs), 2);
        assert_eq!(vandermonde(fld, &xs, 3).unwrap().determinant().unwrap(), 2);
    }

    #[test]
    fn elementary_symmetric_examples() {
        let fld = f(101);
        let xs = set(&[1, 2, 3]);
        assert_eq!(elementary_symmetric(fld, &xs, 2).unwrap(), 11);
        assert_eq!(elementary_symmetric(fld, &xs, 0).unwrap(), 1);
        assert_eq!(elementary_symmetric(fld, &set(&[]), 0).unwrap(), 1);
        assert_eq!(elementary_symmetric(fld, &xs, 3).unwrap(), 6);
        assert!(elementary_symmetric(fld, &xs, 4).is_err());
    }

    #[test]
    fn generalized_vandermonde_examples() {
        let fld = f(101);
        let xs = set(&[1, 2, 3]);
        assert_eq!(
            generalized_vandermonde_det(fld, &xs, &[0, 1, 2]).unwrap(),
            vandermonde(fld, &xs, 3).unwrap().determinant().unwrap()
        );
        assert_eq!(
            generalized_vandermonde_det(fld, &xs, &[0, 1, 3]).unwrap(),
            12
        );
        assert_eq!(
            generalized_vandermonde_det(fld, &set(&[5]), &[3]).unwrap(),
            24
        );
        assert!(generalized_vandermonde_det(fld, &xs, &[0, 2, 1]).is_err());
        assert!(generalized_vandermonde_det(fld, &xs, &[0, 1]).is_err());
        assert!(generalized_vandermonde_det(fld, &xs, &[0, 1, 1]).is_err());
    }

    #[test]
    fn subdet_single_term_when_all_but_one_index_chosen() {
        let fld = f(101);
        let xs = set(&[0, 3, 12, 39]);
        let n = xs.len();
        for omit in 0..n {
            let idx: Vec<usize> = (0..n).filter(|&i| i != omit).collect();
            let x = xs.as_slice();
            let prod = idx
                .iter()
                .fold(1, |acc, &j| fld.mul(acc, fld.sub(x[omit], x[j])));
            let mut expected = fld.mul(vandermonde_det(fld, &xs.subset(&idx)), prod);
            if n % 2 == 1 {
                expected = fld.neg(expected);
            }
            assert_eq!(
                extended_vandermonde_subdet(fld, &xs, &idx).unwrap(),
                expected
            );
        }
    }

    #[test]
    fn subdet_vanishes_on_repeated_node() {
        let fld = f(101);
        let xs = set(&[4, 7, 4, 9]);
        assert_eq!(extended_vandermonde_subdet(fld, &xs, &[0, 2]).unwrap(), 0);
        assert!(extended_vandermonde_subdet(fld, &xs, &[2, 0]).is_err());
        assert!(extended_vandermonde_subdet(fld, &xs, &[4]).is_err());
    }

    fn assembled_subdet(fld: FieldSpec, xs: &ElementSet, idx: &[usize]) -> u64 {
        let ext = extended_vandermonde(fld, xs, idx.len() + 1).unwrap();
        let mut sel = vec![0];
        sel.extend(idx.iter().map(|i| i + 1));
        cofactor_det(&ext.select_rows(&sel))
    }

    #[test]
    fn vandermonde_submatrices_are_nonsingular_for_distinct_nodes() {
        let fld = f(13);
        for m in 1..=8usize {
            let xs =
                ElementSet::distinct((0..m as u64).map(|i| (i * 5 + 1) % 13).collect()).unwrap();
            for n in 1..=m {
                let v = vandermonde(fld, &xs, n).unwrap();
                for s in combinations(m, n) {
                    assert_ne!(v.select_rows(&s).determinant().unwrap(), 0);
                }
            }
        }
    }

    fn distinct_nodes(q: u64, max: usize) -> impl Strategy<Value = Vec<u64>> {
        prop::collection::btree_set(0..q, 1..=max)
            .prop_map(|s| s.into_iter().collect::<Vec<_>>())
            .prop_shuffle()
    }

    proptest! {
        #[test]
        fn extended_rows_sum_to_zero(xs in prop::collection::vec(0u64..31, 1..8), n in 1usize..8) {
            let fld = f(31);
            let xs = set(&xs);
            prop_assume!(n <= xs.len());
            prop_assert!(extended_vandermonde(fld, &xs, n).unwrap().has_zero_row_sum());
        }

        #[test]
        fn closed_form_subdet_matches_cofactors(
            nodes in distinct_nodes(101, 7),
            pick in any::<prop::sample::Index>(),
            width in 0usize..7,
        ) {
            let fld = f(101);
            let xs = set(&nodes);
            let k = width.min(xs.len() - 1);
            let subsets = combinations(xs.len(), k);
            let idx = &subsets[pick.index(subsets.len())];
            prop_assert_eq!(
                extended_vandermonde_subdet(fld, &xs, idx).unwrap(),
                assembled_subdet(fld, &xs, idx)
            );
        }

        #[test]
        fn missing_exponent_identity(nodes in distinct_nodes(97, 6), missing in 0usize..7) {
            let fld = f(97);
            let xs = set(&nodes);
            let m = xs.len();
            let ell = missing.min(m) as u64;
            let exps: Vec<u64> = (0..=m as u64).filter(|&p| p != ell).collect();
            let lhs = generalized_vandermonde_det(fld, &xs, &exps).unwrap();
            let rhs = fld.mul(
                vandermonde(fld, &xs, m).unwrap().determinant().unwrap(),
                elementary_symmetric(fld, &xs, m - ell as usize).unwrap(),
            );
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn elementary_symmetric_matches_subset_sum(nodes in prop::collection::vec(0u64..53, 0..7), k in 0usize..7) {
            let fld = f(53);
            let xs = set(&nodes);
            prop_assume!(k <= xs.len());
            let brute = combinations(xs.len(), k).iter().fold(0, |acc, s| {
                fld.add(acc, s.iter().fold(1, |p, &i| fld.mul(p, nodes[i])))
            });
            prop_assert_eq!(elementary_symmetric(fld, &xs, k).unwrap(), brute);
        }
    }
}
