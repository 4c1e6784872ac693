//! Minimum-bandwidth regenerating code and the two-tier system parameters.
//!
//! The code is the symmetric product-matrix construction: for repair degree
//! `d`, a value of `b` symbols fills a d-by-d symmetric message matrix `M`
//! (a k-by-k symmetric block `S`, a k-by-(d-k) block `T`, its transpose, and
//! a zero block). Node `i` stores the row vector `psi_i^T * M`, where `psi_i`
//! is a Vandermonde row over the nonzero point `x_i = i`. Each stored element
//! has `d` symbols per stripe, so one value costs `alpha = d * beta` symbols
//! per node while repairing a node moves only `beta` symbols from each of `d`
//! helpers: a helper for target `t` sends the dot product of its element with
//! `psi_t`, and stacking `d` such dot products yields `M * psi_t` by solving
//! a Vandermonde system; symmetry of `M` turns that column back into the
//! lost row. Any `k` elements recover the full value, because the trailing
//! columns of `M` expose `T` and the leading columns then expose `S`.
//!
//! Striping: `beta > 1` runs `beta` independent copies of the `beta = 1`
//! construction; elements, helpers, and values concatenate their per-stripe
//! symbols stripe by stripe.

use crate::field::{FieldError, PrimeField};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One field symbol.
pub type Symbol = u64;
/// A stored object value (`b` symbols).
pub type Value = Vec<Symbol>;
/// One node's coded element (`alpha` symbols).
pub type Element = Vec<Symbol>;
/// Repair helper data from one node (`beta` symbols).
pub type Helper = Vec<Symbol>;

/// Errors from code construction and codec operations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("invalid code parameters: {0}")]
    InvalidParams(String),
    #[error("input has wrong length: expected {expected}, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("node index {0} out of range")]
    BadIndex(u32),
    #[error("indices must be distinct")]
    DuplicateIndex,
    #[error("need exactly {need} inputs, got {got}")]
    WrongCount { need: usize, got: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// A minimum-bandwidth regenerating code over GF(q) with `n` nodes,
/// reconstruction degree `k`, repair degree `d`, and `beta` stripes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegenCode {
    n: u32,
    k: u32,
    d: u32,
    beta: u32,
    field: PrimeField,
}

impl RegenCode {
    /// Builds a code. Requires `1 <= k <= d`, `k <= n`, and a prime
    /// `q > n` so that nodes 1..=n get distinct nonzero evaluation points.
    pub fn new(n: u32, k: u32, d: u32, beta: u32, q: u64) -> Result<Self, CodecError> {
        if k == 0 {
            return Err(CodecError::InvalidParams("k must be at least 1".into()));
        }
        if d < k {
            return Err(CodecError::InvalidParams(format!(
                "repair degree d={d} must be at least k={k}"
            )));
        }
        if n < k {
            return Err(CodecError::InvalidParams(format!(
                "n={n} must be at least k={k}"
            )));
        }
        if beta == 0 {
            return Err(CodecError::InvalidParams("beta must be at least 1".into()));
        }
        if q <= n as u64 {
            return Err(CodecError::InvalidParams(format!(
                "field size q={q} must exceed n={n} for distinct nonzero points"
            )));
        }
        let field = PrimeField::new(q)?;
        Ok(Self { n, k, d, beta, field })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn beta(&self) -> u32 {
        self.beta
    }

    pub fn q(&self) -> u64 {
        self.field.modulus()
    }

    /// Symbols per stored element: `alpha = d * beta`.
    pub fn alpha(&self) -> u32 {
        self.d * self.beta
    }

    /// Symbols per value, summed as `sum_{i=0}^{k-1} (d - i) * beta`.
    pub fn b(&self) -> u32 {
        (0..self.k).map(|i| self.d - i).sum::<u32>() * self.beta
    }

    fn b_per_stripe(&self) -> usize {
        (self.b() / self.beta) as usize
    }

    /// Vandermonde row for node `i` (1-based): `(1, x, x^2, ..., x^(d-1))`
    /// with `x = i`.
    fn psi(&self, i: u32) -> Vec<u64> {
        let x = self.field.reduce(i as u64);
        let mut row = Vec::with_capacity(self.d as usize);
        let mut acc = 1u64;
        for _ in 0..self.d {
            row.push(acc);
            acc = self.field.mul(acc, x);
        }
        row
    }

    fn check_index(&self, i: u32) -> Result<(), CodecError> {
        if i == 0 || i > self.n {
            Err(CodecError::BadIndex(i))
        } else {
            Ok(())
        }
    }

    /// Fills the d-by-d symmetric message matrix from one stripe of the value.
    /// Layout: upper triangle of `S` row-major, then `T` row-major.
    fn message_matrix(&self, stripe: &[u64]) -> Vec<Vec<u64>> {
        let (k, d) = (self.k as usize, self.d as usize);
        let mut m = vec![vec![0u64; d]; d];
        let mut it = stripe.iter().copied();
        for i in 0..k {
            for j in i..k {
                let v = it.next().unwrap();
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        for i in 0..k {
            for j in k..d {
                let v = it.next().unwrap();
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        m
    }

    /// Reads one stripe of the value back out of `S` and `T`.
    fn stripe_from_blocks(&self, s: &[Vec<u64>], t: &[Vec<u64>]) -> Vec<u64> {
        let (k, d) = (self.k as usize, self.d as usize);
        let mut out = Vec::with_capacity(self.b_per_stripe());
        for i in 0..k {
            for j in i..k {
                out.push(s[i][j]);
            }
        }
        for row in t.iter().take(k) {
            for j in 0..d - k {
                out.push(row[j]);
            }
        }
        out
    }

    fn split_stripes<'a>(&self, data: &'a [u64], per: usize) -> Vec<&'a [u64]> {
        data.chunks(per).collect()
    }

    /// Encodes a value into the coded elements for the listed nodes
    /// (1-based indices). The full codeword is `encode_nodes(v, 1..=n)`.
    pub fn encode_nodes(&self, value: &Value, indices: &[u32]) -> Result<Vec<Element>, CodecError> {
        if value.len() != self.b() as usize {
            return Err(CodecError::WrongLength {
                expected: self.b() as usize,
                got: value.len(),
            });
        }
        for &i in indices {
            self.check_index(i)?;
        }
        let per = self.b_per_stripe();
        let matrices: Vec<Vec<Vec<u64>>> = self
            .split_stripes(value, per)
            .into_iter()
            .map(|s| self.message_matrix(s))
            .collect();
        let d = self.d as usize;
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            let psi = self.psi(i);
            let mut elem = Vec::with_capacity(self.alpha() as usize);
            for m in &matrices {
                for col in 0..d {
                    let mut acc = 0u64;
                    for (row, p) in psi.iter().enumerate() {
                        acc = self.field.add(acc, self.field.mul(*p, m[row][col]));
                    }
                    elem.push(acc);
                }
            }
            out.push(elem);
        }
        Ok(out)
    }

    /// Encodes a value into all `n` coded elements.
    pub fn encode(&self, value: &Value) -> Result<Vec<Element>, CodecError> {
        let indices: Vec<u32> = (1..=self.n).collect();
        self.encode_nodes(value, &indices)
    }

    /// Helper data that node `holder` (owning `element`) sends to repair node
    /// `target`: per stripe, the dot product of the stored row with
    /// `psi_target`.
    pub fn helper(&self, element: &Element, target: u32) -> Result<Helper, CodecError> {
        self.check_index(target)?;
        if element.len() != self.alpha() as usize {
            return Err(CodecError::WrongLength {
                expected: self.alpha() as usize,
                got: element.len(),
            });
        }
        let psi = self.psi(target);
        let out = self
            .split_stripes(element, self.d as usize)
            .into_iter()
            .map(|stripe| self.field.dot(stripe, &psi))
            .collect();
        Ok(out)
    }

    /// Rebuilds the element of node `target` from exactly `d` helpers, given
    /// as `(helper node index, helper data)` with distinct indices.
    pub fn regenerate(
        &self,
        target: u32,
        helpers: &[(u32, Helper)],
    ) -> Result<Element, CodecError> {
        self.check_index(target)?;
        if helpers.len() != self.d as usize {
            return Err(CodecError::WrongCount {
                need: self.d as usize,
                got: helpers.len(),
            });
        }
        let mut seen: Vec<u32> = helpers.iter().map(|(i, _)| *i).collect();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != helpers.len() {
            return Err(CodecError::DuplicateIndex);
        }
        for (i, h) in helpers {
            self.check_index(*i)?;
            if h.len() != self.beta as usize {
                return Err(CodecError::WrongLength {
                    expected: self.beta as usize,
                    got: h.len(),
                });
            }
        }
        let mut elem = Vec::with_capacity(self.alpha() as usize);
        for stripe in 0..self.beta as usize {
            let mut a: Vec<Vec<u64>> = helpers.iter().map(|(i, _)| self.psi(*i)).collect();
            let mut rhs: Vec<Vec<u64>> = helpers.iter().map(|(_, h)| vec![h[stripe]]).collect();
            // Solves psi_i^T * (M psi_target) = h_i; the solution column is
            // M psi_target, which equals the lost row by symmetry of M.
            self.field.solve_in_place(&mut a, &mut rhs)?;
            for row in rhs {
                elem.push(row[0]);
            }
        }
        Ok(elem)
    }

    /// Recovers the value from exactly `k` coded elements, given as
    /// `(node index, element)` with distinct indices.
    pub fn decode(&self, shares: &[(u32, Element)]) -> Result<Value, CodecError> {
        let k = self.k as usize;
        let d = self.d as usize;
        if shares.len() != k {
            return Err(CodecError::WrongCount {
                need: k,
                got: shares.len(),
            });
        }
        let mut seen: Vec<u32> = shares.iter().map(|(i, _)| *i).collect();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != shares.len() {
            return Err(CodecError::DuplicateIndex);
        }
        for (i, e) in shares {
            self.check_index(*i)?;
            if e.len() != self.alpha() as usize {
                return Err(CodecError::WrongLength {
                    expected: self.alpha() as usize,
                    got: e.len(),
                });
            }
        }
        let psis: Vec<Vec<u64>> = shares.iter().map(|(i, _)| self.psi(*i)).collect();
        let mut value = Vec::with_capacity(self.b() as usize);
        for stripe in 0..self.beta as usize {
            let rows: Vec<&[u64]> = shares
                .iter()
                .map(|(_, e)| &e[stripe * d..(stripe + 1) * d])
                .collect();
            // phi = leading k columns of the psi rows; delta = the rest.
            let phi: Vec<Vec<u64>> = psis.iter().map(|p| p[..k].to_vec()).collect();
            let delta: Vec<Vec<u64>> = psis.iter().map(|p| p[k..].to_vec()).collect();
            // Trailing columns: rows[., k..] = phi * T.
            let mut t = vec![vec![0u64; d - k]; k];
            if d > k {
                let mut a = phi.clone();
                let mut rhs: Vec<Vec<u64>> = rows.iter().map(|r| r[k..].to_vec()).collect();
                self.field.solve_in_place(&mut a, &mut rhs)?;
                t = rhs;
            }
            // Leading columns: rows[., ..k] = phi * S + delta * T^t.
            let mut rhs: Vec<Vec<u64>> = rows
                .iter()
                .enumerate()
                .map(|(r, row)| {
                    (0..k)
                        .map(|j| {
                            let mut acc = row[j];
                            for l in 0..d - k {
                                let sub = self.field.mul(delta[r][l], t[j][l]);
                                acc = self.field.sub(acc, sub);
                            }
                            acc
                        })
                        .collect()
                })
                .collect();
            let mut a = phi;
            self.field.solve_in_place(&mut a, &mut rhs)?;
            value.extend(self.stripe_from_blocks(&rhs, &t));
        }
        Ok(value)
    }
}

/// Configuration of the two-tier system code, from the scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeConfig {
    /// Edge servers.
    pub n1: u32,
    /// Edge crash tolerance (`f1 < n1 / 2`).
    pub f1: u32,
    /// Backend servers.
    pub n2: u32,
    /// Backend crash tolerance (`f2 < n2 / 3`).
    pub f2: u32,
    /// Stripes per value.
    pub beta: u32,
    /// Field modulus (prime, `q > n1 + n2`).
    pub q: u64,
}

/// Derived system parameters: quorum sizes and the shared regenerating code
/// spanning all `n1 + n2` coordinates. Edge servers own coordinates
/// `1..=n1`; backend server `i` owns coordinate `n1 + i`.
#[derive(Debug, Clone)]
pub struct SystemParams {
    pub n1: u32,
    pub f1: u32,
    pub k: u32,
    pub n2: u32,
    pub f2: u32,
    pub d: u32,
    pub beta: u32,
    pub q: u64,
    pub alpha: u32,
    pub b: u32,
    pub code: RegenCode,
}

impl SystemParams {
    /// Derives `k = n1 - 2*f1` and `d = n2 - 2*f2` and validates the whole
    /// parameter set.
    pub fn new(cfg: CodeConfig) -> Result<Self, CodecError> {
        let CodeConfig { n1, f1, n2, f2, beta, q } = cfg;
        if 2 * f1 >= n1 {
            return Err(CodecError::InvalidParams(format!(
                "edge tolerance f1={f1} requires n1 > 2*f1, got n1={n1}"
            )));
        }
        if 3 * f2 >= n2 {
            return Err(CodecError::InvalidParams(format!(
                "backend tolerance f2={f2} requires n2 > 3*f2, got n2={n2}"
            )));
        }
        let k = n1 - 2 * f1;
        let d = n2 - 2 * f2;
        if d < k {
            return Err(CodecError::InvalidParams(format!(
                "derived repair degree d={d} is below derived k={k}; \
                 grow n2 or shrink n1"
            )));
        }
        let code = RegenCode::new(n1 + n2, k, d, beta, q)?;
        Ok(Self {
            n1,
            f1,
            k,
            n2,
            f2,
            d,
            beta,
            q,
            alpha: code.alpha(),
            b: code.b(),
            code,
        })
    }

    /// Client-facing quorum size at the edge tier.
    pub fn edge_quorum(&self) -> u32 {
        self.f1 + self.k
    }

    /// Internal-op quorum size at the backend tier (`n2 - f2 = f2 + d`).
    pub fn backend_quorum(&self) -> u32 {
        self.n2 - self.f2
    }

    /// Global codeword coordinate of backend server `i` (1-based).
    pub fn backend_coord(&self, i: u32) -> u32 {
        self.n1 + i
    }

    /// Encodes a value into the `n2` backend elements.
    pub fn encode_backend(&self, value: &Value) -> Result<Vec<Element>, CodecError> {
        let indices: Vec<u32> = (1..=self.n2).map(|i| self.backend_coord(i)).collect();
        self.code.encode_nodes(value, &indices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn small_code() -> RegenCode {
        // k = d = 2 over GF(7) with three nodes at x = 1, 2, 3.
        RegenCode::new(3, 2, 2, 1, 7).unwrap()
    }

    #[test]
    fn b_matches_closed_form() {
        for k in 1..=5u32 {
            for d in k..=7u32 {
                let code = RegenCode::new(d + 2, k, d, 1, 65537).unwrap();
                assert_eq!(2 * code.b(), k * (2 * d - k + 1));
                assert_eq!(code.alpha(), d);
            }
        }
    }

    #[test]
    fn worked_example_encode() {
        // Value (1, 2, 3) fills S = [[1,2],[2,3]]; elements are psi_i^T S.
        let code = small_code();
        let elems = code.encode(&vec![1, 2, 3]).unwrap();
        assert_eq!(elems[0], vec![3, 5]);
        assert_eq!(elems[1], vec![5, 1]);
        assert_eq!(elems[2], vec![0, 4]);
    }

    #[test]
    fn worked_example_helpers_and_repair() {
        let code = small_code();
        let elems = code.encode(&vec![1, 2, 3]).unwrap();
        let h2 = code.helper(&elems[1], 1).unwrap();
        let h3 = code.helper(&elems[2], 1).unwrap();
        assert_eq!(h2, vec![6]);
        assert_eq!(h3, vec![4]);
        let rebuilt = code.regenerate(1, &[(2, h2), (3, h3)]).unwrap();
        assert_eq!(rebuilt, elems[0]);
    }

    #[test]
    fn worked_example_decode() {
        let code = small_code();
        let elems = code.encode(&vec![1, 2, 3]).unwrap();
        let value = code
            .decode(&[(1, elems[0].clone()), (2, elems[1].clone())])
            .unwrap();
        assert_eq!(value, vec![1, 2, 3]);
        // Any other pair works too.
        let value = code
            .decode(&[(3, elems[2].clone()), (1, elems[0].clone())])
            .unwrap();
        assert_eq!(value, vec![1, 2, 3]);
    }

    fn random_value(rng: &mut ChaCha12Rng, b: u32, q: u64) -> Value {
        (0..b).map(|_| rng.gen_range(0..q)).collect()
    }

    fn subsets(n: u32, size: usize) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        fn rec(start: u32, n: u32, size: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if cur.len() == size {
                out.push(cur.clone());
                return;
            }
            for i in start..=n {
                cur.push(i);
                rec(i + 1, n, size, cur, out);
                cur.pop();
            }
        }
        rec(1, n, size, &mut cur, &mut out);
        out
    }

    #[test]
    fn round_trip_every_k_subset() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for (k, d, q) in [(2, 3, 13u64), (3, 4, 13), (2, 2, 7), (3, 3, 13)] {
            let n = d + 2;
            let code = RegenCode::new(n, k, d, 1, q).unwrap();
            for _ in 0..20 {
                let value = random_value(&mut rng, code.b(), q);
                let elems = code.encode(&value).unwrap();
                for subset in subsets(n, k as usize) {
                    let shares: Vec<(u32, Element)> = subset
                        .iter()
                        .map(|&i| (i, elems[i as usize - 1].clone()))
                        .collect();
                    assert_eq!(code.decode(&shares).unwrap(), value);
                }
            }
        }
    }

    #[test]
    fn exact_repair_every_d_subset() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for (k, d, q) in [(2, 3, 13u64), (3, 4, 13), (2, 2, 7)] {
            let n = d + 2;
            let code = RegenCode::new(n, k, d, 1, q).unwrap();
            for _ in 0..20 {
                let value = random_value(&mut rng, code.b(), q);
                let elems = code.encode(&value).unwrap();
                for target in 1..=n {
                    let others: Vec<u32> = (1..=n).filter(|&i| i != target).collect();
                    for subset in subsets(others.len() as u32, d as usize) {
                        let helpers: Vec<(u32, Helper)> = subset
                            .iter()
                            .map(|&pos| {
                                let i = others[pos as usize - 1];
                                let h =
                                    code.helper(&elems[i as usize - 1], target).unwrap();
                                (i, h)
                            })
                            .collect();
                        let rebuilt = code.regenerate(target, &helpers).unwrap();
                        assert_eq!(rebuilt, elems[target as usize - 1]);
                    }
                }
            }
        }
    }

    #[test]
    fn striping_concatenates_independent_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let code = RegenCode::new(5, 2, 3, 3, 13).unwrap();
        assert_eq!(code.alpha(), 9);
        assert_eq!(code.b(), 15);
        let value = random_value(&mut rng, code.b(), 13);
        let elems = code.encode(&value).unwrap();
        let shares = vec![(2u32, elems[1].clone()), (4, elems[3].clone())];
        assert_eq!(code.decode(&shares).unwrap(), value);
        let helpers: Vec<(u32, Helper)> = [1u32, 3, 5]
            .iter()
            .map(|&i| (i, code.helper(&elems[i as usize - 1], 4).unwrap()))
            .collect();
        assert_eq!(code.regenerate(4, &helpers).unwrap(), elems[3]);
        // Stripe 0 of the striped code matches the unstriped code on the
        // first b/beta value symbols.
        let flat = RegenCode::new(5, 2, 3, 1, 13).unwrap();
        let flat_elems = flat.encode(&value[..5].to_vec()).unwrap();
        for i in 0..5 {
            assert_eq!(&elems[i][..3], &flat_elems[i][..]);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let code = small_code();
        assert!(matches!(
            code.encode(&vec![1, 2]).unwrap_err(),
            CodecError::WrongLength { expected: 3, got: 2 }
        ));
        assert!(matches!(
            code.decode(&[(1, vec![0, 0])]).unwrap_err(),
            CodecError::WrongCount { need: 2, got: 1 }
        ));
        assert!(matches!(
            code.decode(&[(1, vec![0, 0]), (1, vec![0, 0])]).unwrap_err(),
            CodecError::DuplicateIndex
        ));
        assert!(matches!(
            code.regenerate(4, &[]).unwrap_err(),
            CodecError::BadIndex(4)
        ));
        assert!(RegenCode::new(3, 2, 2, 1, 6).is_err());
        assert!(RegenCode::new(3, 0, 2, 1, 7).is_err());
        assert!(RegenCode::new(3, 3, 2, 1, 7).is_err());
        assert!(RegenCode::new(7, 2, 2, 1, 7).is_err());
    }

    #[test]
    fn system_params_worked_example() {
        let p = SystemParams::new(CodeConfig {
            n1: 4,
            f1: 1,
            n2: 5,
            f2: 1,
            beta: 1,
            q: 7411,
        })
        .unwrap();
        assert_eq!(p.k, 2);
        assert_eq!(p.d, 3);
        assert_eq!(p.alpha, 3);
        assert_eq!(p.b, 5);
        assert_eq!(p.edge_quorum(), 3);
        assert_eq!(p.backend_quorum(), 4);
        assert_eq!(p.backend_coord(1), 5);
        assert_eq!(p.code.n(), 9);
    }

    #[test]
    fn system_params_rejections() {
        let base = CodeConfig { n1: 4, f1: 1, n2: 5, f2: 1, beta: 1, q: 65537 };
        assert!(SystemParams::new(CodeConfig { f1: 2, ..base }).is_err());
        assert!(SystemParams::new(CodeConfig { f2: 2, ..base }).is_err());
        assert!(SystemParams::new(CodeConfig { n1: 9, f1: 1, ..base }).is_err());
        assert!(SystemParams::new(CodeConfig { q: 9, ..base }).is_err());
        assert!(SystemParams::new(CodeConfig { q: 7, ..base }).is_err());
    }

    #[test]
    fn backend_encoding_matches_tail_coordinates() {
        let p = SystemParams::new(CodeConfig {
            n1: 4,
            f1: 1,
            n2: 5,
            f2: 1,
            beta: 1,
            q: 13,
        })
        .unwrap();
        let value = vec![1, 2, 3, 4, 5];
        let all = p.code.encode(&value).unwrap();
        let backend = p.encode_backend(&value).unwrap();
        assert_eq!(backend.len(), 5);
        for i in 0..5 {
            assert_eq!(backend[i], all[4 + i]);
        }
    }
}
