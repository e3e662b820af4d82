//! Independent oracles used only by unit tests.

use crate::matrix::FqMatrix;

/// Determinant by Laplace expansion along the first row.
pub fn cofactor_det(m: &FqMatrix) -> u64 {
    let f = m.field();
    let n = m.rows();
    assert_eq!(n, m.cols());
    let rows: Vec<Vec<u64>> = m.row_iter().map(<[u64]>::to_vec).collect();
    fn go(f: &crate::field::FieldSpec, rows: &[Vec<u64>]) -> u64 {
        let n = rows.len();
        if n == 0 {
            return 1;
        }
        let mut acc = 0;
        for c in 0..n {
            let minor: Vec<Vec<u64>> = rows[1..]
                .iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .filter(|&(j, _)| j != c)
                        .map(|(_, &x)| x)
                        .collect()
                })
                .collect();
            let term = f.mul(rows[0][c], go(f, &minor));
            acc = if c % 2 == 0 {
                f.add(acc, term)
            } else {
                f.sub(acc, term)
            };
        }
        acc
    }
    go(&f, &rows)
}

pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Rank as the size of the largest nonsingular square minor.
pub fn rank_by_minors(m: &FqMatrix) -> usize {
    let f = m.field();
    for k in (1..=m.rows().min(m.cols())).rev() {
        for rs in combinations(m.rows(), k) {
            for cs in combinations(m.cols(), k) {
                let data: Vec<u64> = rs
                    .iter()
                    .flat_map(|&r| cs.iter().map(move |&c| m.get(r, c)))
                    .collect();
                let minor = FqMatrix::new(f, k, k, data).unwrap();
                if cofactor_det(&minor) != 0 {
                    return k;
                }
            }
        }
    }
    0
}
