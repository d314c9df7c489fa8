//! Exact integer linear algebra: determinants and Smith normal form over `BigInt`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

/// Dense integer matrix, row major.
pub type IntMatrix = Vec<Vec<BigInt>>;

/// Determinant by fraction-free (Bareiss) elimination.
pub fn determinant(matrix: &IntMatrix) -> BigInt {
    let n = matrix.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut m = matrix.clone();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if m[k][k].is_zero() {
            match (k + 1..n).find(|&i| !m[i][k].is_zero()) {
                Some(i) => {
                    m.swap(k, i);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &m[i][j] * &m[k][k] - &m[i][k] * &m[k][j];
                m[i][j] = v / &prev;
            }
        }
        prev = m[k][k].clone();
    }
    sign * &m[n - 1][n - 1]
}

/// Diagonal of the Smith normal form, each entry non-negative and dividing the next.
///
/// Zero diagonal entries (rank deficiency) are reported as zeros at the end.
pub fn smith_diagonal(matrix: &IntMatrix) -> Vec<BigInt> {
    let rows = matrix.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = matrix[0].len();
    let mut m = matrix.clone();
    let mut diag = Vec::new();
    let n = rows.min(cols);

    for k in 0..n {
        // smallest nonzero pivot in the trailing block keeps entries small
        let Some((pi, pj)) = smallest_nonzero(&m, k) else {
            diag.extend(std::iter::repeat_with(BigInt::zero).take(n - k));
            break;
        };
        m.swap(k, pi);
        for row in m.iter_mut() {
            row.swap(k, pj);
        }

        loop {
            let mut dirty = false;
            for i in k + 1..rows {
                if m[i][k].is_zero() {
                    continue;
                }
                let q = m[i][k].div_floor(&m[k][k]);
                for j in k..cols {
                    let v = &m[i][j] - &q * &m[k][j];
                    m[i][j] = v;
                }
                if !m[i][k].is_zero() {
                    dirty = true;
                }
            }
            for j in k + 1..cols {
                if m[k][j].is_zero() {
                    continue;
                }
                let q = m[k][j].div_floor(&m[k][k]);
                for i in k..rows {
                    let v = &m[i][j] - &q * &m[i][k];
                    m[i][j] = v;
                }
                if !m[k][j].is_zero() {
                    dirty = true;
                }
            }
            if dirty {
                let (pi, pj) = smallest_nonzero(&m, k).expect("pivot block is nonzero");
                m.swap(k, pi);
                for row in m.iter_mut() {
                    row.swap(k, pj);
                }
                continue;
            }
            // the pivot must divide everything left in the trailing block
            let bad_row = (k + 1..rows)
                .find(|&i| (k + 1..cols).any(|j| !(&m[i][j] % &m[k][k]).is_zero()));
            match bad_row {
                Some(i) => {
                    for j in k..cols {
                        let v = &m[k][j] + &m[i][j];
                        m[k][j] = v;
                    }
                }
                None => break,
            }
        }
        diag.push(m[k][k].abs());
    }
    diag
}

fn smallest_nonzero(m: &IntMatrix, k: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for (i, row) in m.iter().enumerate().skip(k) {
        for (j, v) in row.iter().enumerate().skip(k) {
            if v.is_zero() {
                continue;
            }
            match best {
                Some((bi, bj)) if m[bi][bj].abs() <= v.abs() => {}
                _ => best = Some((i, j)),
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[i64]]) -> IntMatrix {
        rows.iter()
            .map(|r| r.iter().map(|&v| BigInt::from(v)).collect())
            .collect()
    }

    #[test]
    fn determinant_small() {
        assert_eq!(determinant(&mat(&[&[2, -1], &[-1, 2]])), BigInt::from(3));
        assert_eq!(determinant(&mat(&[&[0, 1], &[1, 0]])), BigInt::from(-1));
        assert_eq!(determinant(&mat(&[&[1, 2], &[2, 4]])), BigInt::zero());
        assert_eq!(determinant(&Vec::new()), BigInt::one());
    }

    #[test]
    fn smith_of_triangle_laplacian() {
        let d = smith_diagonal(&mat(&[&[2, -1], &[-1, 2]]));
        assert_eq!(d, vec![BigInt::from(1), BigInt::from(3)]);
    }

    #[test]
    fn smith_needs_divisibility_fix() {
        // diag(2, 3) is Z/6, Smith form diag(1, 6)
        let d = smith_diagonal(&mat(&[&[2, 0], &[0, 3]]));
        assert_eq!(d, vec![BigInt::from(1), BigInt::from(6)]);
        let d = smith_diagonal(&mat(&[&[4, 0, 0], &[0, 6, 0], &[0, 0, 10]]));
        assert_eq!(d, vec![BigInt::from(2), BigInt::from(2), BigInt::from(60)]);
    }

    #[test]
    fn smith_rank_deficient() {
        let d = smith_diagonal(&mat(&[&[1, 1], &[1, 1]]));
        assert_eq!(d, vec![BigInt::from(1), BigInt::zero()]);
    }
}
