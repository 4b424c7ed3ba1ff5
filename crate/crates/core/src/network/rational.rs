//! Exact rational linear algebra for stoichiometric subspaces.
//!
//! Everything here works on row-major `Vec<Vec<BigRational>>`. The only
//! operations needed are reduced row-echelon form, null spaces and rank, so a
//! small hand-rolled Gauss–Jordan elimination is enough.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type RatMatrix = Vec<Vec<BigRational>>;

pub fn from_int_rows(rows: &[Vec<i64>]) -> RatMatrix {
    rows.iter()
        .map(|r| r.iter().map(|&x| BigRational::from_integer(BigInt::from(x))).collect())
        .collect()
}

/// Reduced row-echelon form; returns the nonzero rows and their pivot columns.
pub fn rref(rows: &RatMatrix, ncols: usize) -> (RatMatrix, Vec<usize>) {
    let mut m: RatMatrix = rows.to_vec();
    let mut pivots = Vec::new();
    let mut lead = 0usize;
    for col in 0..ncols {
        if lead >= m.len() {
            break;
        }
        let Some(p) = (lead..m.len()).find(|&i| !m[i][col].is_zero()) else {
            continue;
        };
        m.swap(lead, p);
        let inv = m[lead][col].recip();
        for x in m[lead].iter_mut() {
            *x = &*x * &inv;
        }
        for i in 0..m.len() {
            if i != lead && !m[i][col].is_zero() {
                let f = m[i][col].clone();
                for j in 0..ncols {
                    let d = &f * &m[lead][j];
                    m[i][j] = &m[i][j] - d;
                }
            }
        }
        pivots.push(col);
        lead += 1;
    }
    m.truncate(lead);
    (m, pivots)
}

pub fn rank(rows: &RatMatrix, ncols: usize) -> usize {
    rref(rows, ncols).1.len()
}

/// Basis of `{x : A x = 0}`, one vector per free column.
pub fn null_space(rows: &RatMatrix, ncols: usize) -> RatMatrix {
    let (r, pivots) = rref(rows, ncols);
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![BigRational::zero(); ncols];
            v[f] = BigRational::one();
            for (row, &p) in r.iter().zip(&pivots) {
                v[p] = -row[f].clone();
            }
            v
        })
        .collect()
}

/// Scale a rational vector to coprime integers with a positive leading entry.
pub fn to_coprime(v: &[BigRational]) -> Vec<BigInt> {
    let lcm = v
        .iter()
        .filter(|x| !x.is_zero())
        .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    let mut ints: Vec<BigInt> = v.iter().map(|x| (x * &lcm).to_integer()).collect();
    let g = ints.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if !g.is_zero() {
        for x in ints.iter_mut() {
            *x = &*x / &g;
        }
    }
    if ints.iter().find(|x| !x.is_zero()).is_some_and(|x| x.is_negative()) {
        for x in ints.iter_mut() {
            *x = -&*x;
        }
    }
    ints
}

/// Canonical integer basis of the row space: RREF rows scaled to coprime integers.
pub fn canonical_basis(rows: &RatMatrix, ncols: usize) -> Result<Vec<Vec<i64>>> {
    let (r, _) = rref(rows, ncols);
    r.iter()
        .map(|row| {
            to_coprime(row)
                .iter()
                .map(|x| {
                    x.to_i64()
                        .ok_or_else(|| Error::Numerical("integer basis entry exceeds i64".into()))
                })
                .collect()
        })
        .collect()
}

/// Exact equality of row spaces.
pub fn same_row_space(a: &[Vec<i64>], b: &[Vec<i64>], ncols: usize) -> bool {
    let ra = from_int_rows(a);
    let rb = from_int_rows(b);
    let mut both = ra.clone();
    both.extend(rb.iter().cloned());
    let k = rank(&ra, ncols);
    k == rank(&rb, ncols) && k == rank(&both, ncols)
}

/// Exact containment `rowspace(a) ⊆ rowspace(b)`.
pub fn row_space_contained(a: &[Vec<i64>], b: &[Vec<i64>], ncols: usize) -> bool {
    let rb = from_int_rows(b);
    let mut both = rb.clone();
    both.extend(from_int_rows(a));
    rank(&rb, ncols) == rank(&both, ncols)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(x: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(x))
    }

    #[test]
    fn null_space_of_single_row() {
        let a = vec![vec![r(1), r(1), r(-2)]];
        let ns = null_space(&a, 3);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            let dot: BigRational = a[0].iter().zip(v).map(|(x, y)| x * y).sum();
            assert!(dot.is_zero());
        }
    }

    #[test]
    fn coprime_scaling() {
        let v = vec![
            BigRational::new(BigInt::from(-1), BigInt::from(2)),
            BigRational::new(BigInt::from(1), BigInt::from(3)),
            r(0),
        ];
        let c: Vec<i64> = to_coprime(&v).iter().map(|x| x.to_i64().unwrap()).collect();
        assert_eq!(c, vec![3, -2, 0]);
    }

    #[test]
    fn row_space_comparisons() {
        let a = vec![vec![1, 1, 1], vec![1, -1, 0]];
        let b = vec![vec![2, 0, 1], vec![0, 2, 1]];
        assert!(same_row_space(&a, &b, 3));
        assert!(row_space_contained(&[vec![1, 1, 1]], &a, 3));
        assert!(!row_space_contained(&[vec![1, 0, 0]], &a, 3));
    }
}
