//! Arithmetic and linear algebra over the prime field GF(q).
//!
//! Symbols are `u64` values in `[0, q)`. Multiplication goes through `u128`,
//! so any prime modulus that fits in a `u64` works.

use thiserror::Error;

/// Errors produced by field construction and linear solving.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    /// The requested modulus is not a prime number.
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    /// A linear system had no unique solution.
    #[error("singular matrix")]
    Singular,
}

/// The prime field GF(q).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrimeField {
    q: u64,
}

impl PrimeField {
    /// Builds the field, rejecting composite moduli.
    pub fn new(q: u64) -> Result<Self, FieldError> {
        if is_prime(q) {
            Ok(Self { q })
        } else {
            Err(FieldError::NotPrime(q))
        }
    }

    /// The field modulus.
    pub fn modulus(&self) -> u64 {
        self.q
    }

    /// Reduces an arbitrary integer into the field.
    pub fn reduce(&self, a: u64) -> u64 {
        a % self.q
    }

    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    pub fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.q as u128) as u64
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        base %= self.q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem. `a` must be nonzero.
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(a % self.q != 0, "inverse of zero");
        self.pow(a, self.q - 2)
    }

    /// Dot product of two equal-length symbol slices.
    pub fn dot(&self, a: &[u64], b: &[u64]) -> u64 {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = 0u64;
        for (x, y) in a.iter().zip(b.iter()) {
            acc = self.add(acc, self.mul(*x, *y));
        }
        acc
    }

    /// Solves `A * X = RHS` in place by Gauss-Jordan elimination.
    ///
    /// `a` is an n-by-n matrix given as rows; `rhs` holds one or more
    /// right-hand-side columns, also as rows (`rhs[i]` pairs with `a[i]`).
    /// On success `rhs` contains `A^-1 * RHS` and `a` is destroyed.
    pub fn solve_in_place(
        &self,
        a: &mut [Vec<u64>],
        rhs: &mut [Vec<u64>],
    ) -> Result<(), FieldError> {
        let n = a.len();
        debug_assert_eq!(rhs.len(), n);
        for col in 0..n {
            let pivot_row = (col..n)
                .find(|&r| a[r][col] != 0)
                .ok_or(FieldError::Singular)?;
            a.swap(col, pivot_row);
            rhs.swap(col, pivot_row);
            let inv = self.inv(a[col][col]);
            for v in a[col].iter_mut() {
                *v = self.mul(*v, inv);
            }
            for v in rhs[col].iter_mut() {
                *v = self.mul(*v, inv);
            }
            for row in 0..n {
                if row == col || a[row][col] == 0 {
                    continue;
                }
                let factor = a[row][col];
                for j in 0..n {
                    let t = self.mul(factor, a[col][j]);
                    a[row][j] = self.sub(a[row][j], t);
                }
                for j in 0..rhs[row].len() {
                    let t = self.mul(factor, rhs[col][j]);
                    rhs[row][j] = self.sub(rhs[row][j], t);
                }
            }
        }
        Ok(())
    }
}

/// Deterministic Miller-Rabin primality test, exact for all `u64` inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut base: u64, mut exp: u64| {
        let mut acc = 1u64;
        base %= n;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = mul(acc, base);
            }
            base = mul(base, base);
            exp >>= 1;
        }
        acc
    };
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primality() {
        assert!(is_prime(2));
        assert!(is_prime(7));
        assert!(is_prime(13));
        assert!(is_prime(65537));
        assert!(!is_prime(1));
        assert!(!is_prime(9));
        assert!(!is_prime(65536));
        assert!(!is_prime(6700417 * 2));
    }

    #[test]
    fn rejects_composite_modulus() {
        assert_eq!(PrimeField::new(10).unwrap_err(), FieldError::NotPrime(10));
    }

    #[test]
    fn basic_ops_mod_7() {
        let f = PrimeField::new(7).unwrap();
        assert_eq!(f.add(5, 4), 2);
        assert_eq!(f.sub(2, 5), 4);
        assert_eq!(f.mul(3, 5), 1);
        assert_eq!(f.neg(3), 4);
        assert_eq!(f.pow(3, 6), 1);
        for a in 1..7 {
            assert_eq!(f.mul(a, f.inv(a)), 1);
        }
    }

    #[test]
    fn solve_small_system() {
        // Over GF(7): [[1,2],[1,3]] x = (6,4) has solution (3,5).
        let f = PrimeField::new(7).unwrap();
        let mut a = vec![vec![1, 2], vec![1, 3]];
        let mut rhs = vec![vec![6], vec![4]];
        f.solve_in_place(&mut a, &mut rhs).unwrap();
        assert_eq!(rhs, vec![vec![3], vec![5]]);
    }

    #[test]
    fn solve_rejects_singular() {
        let f = PrimeField::new(7).unwrap();
        let mut a = vec![vec![1, 2], vec![2, 4]];
        let mut rhs = vec![vec![1], vec![2]];
        assert_eq!(
            f.solve_in_place(&mut a, &mut rhs).unwrap_err(),
            FieldError::Singular
        );
    }

    #[test]
    fn solve_multi_column() {
        let f = PrimeField::new(13).unwrap();
        let a0 = vec![vec![2u64, 1, 0], vec![1, 3, 5], vec![0, 4, 11]];
        let x = vec![vec![1u64, 7], vec![5, 0], vec![9, 2]];
        // rhs = a0 * x
        let mut rhs = vec![vec![0u64; 2]; 3];
        for i in 0..3 {
            for j in 0..2 {
                for l in 0..3 {
                    rhs[i][j] = f.add(rhs[i][j], f.mul(a0[i][l], x[l][j]));
                }
            }
        }
        let mut a = a0.clone();
        f.solve_in_place(&mut a, &mut rhs).unwrap();
        assert_eq!(rhs, x);
    }
}
