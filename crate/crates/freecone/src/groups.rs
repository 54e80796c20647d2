//! Families of groups `{G_n}` acting on the base coordinate spaces.
//!
//! A family fixes, for every level `n`, a finite set of discrete generators
//! (orthogonal matrices, in fact signed permutations for the finite families)
//! and, for the continuous family, a basis of its Lie algebra. The embeddings
//! `G_n ⊆ G_{n+1}` are the standard ones: a generator at level `n` extends by
//! fixing the new coordinate.

use crate::error::{Error, Result};
use crate::sparse::{SignedPerm, SpMat};

/// The supported group families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupFamily {
    /// Symmetric groups `S_n` permuting coordinates.
    Sym,
    /// Signed permutation groups (hyperoctahedral) `B_n`.
    SignedSym,
    /// Even-signed permutation groups `D_n` (even numbers of sign flips).
    EvenSignedSym,
    /// Cyclic groups `C_n` of coordinate shifts.
    Cyclic,
    /// Orthogonal groups `O_n` (one discrete generator plus a Lie-algebra basis).
    Orthogonal,
    /// The trivial group at every level.
    Trivial,
}

impl GroupFamily {
    pub fn name(&self) -> &'static str {
        match self {
            GroupFamily::Sym => "sym",
            GroupFamily::SignedSym => "signed",
            GroupFamily::EvenSignedSym => "evensigned",
            GroupFamily::Cyclic => "cyclic",
            GroupFamily::Orthogonal => "orth",
            GroupFamily::Trivial => "trivial",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sym" => Ok(GroupFamily::Sym),
            "signed" => Ok(GroupFamily::SignedSym),
            "evensigned" => Ok(GroupFamily::EvenSignedSym),
            "cyclic" => Ok(GroupFamily::Cyclic),
            "orth" => Ok(GroupFamily::Orthogonal),
            "trivial" => Ok(GroupFamily::Trivial),
            other => Err(Error::UnsupportedGroup(other.to_string())),
        }
    }

    /// Whether the family is finite at every level.
    pub fn is_finite(&self) -> bool {
        !matches!(self, GroupFamily::Orthogonal)
    }

    /// Whether the degree calculus applies to this family (the three Weyl
    /// families of signed/unsigned permutations).
    pub fn has_degree_calculus(&self) -> bool {
        matches!(self, GroupFamily::Sym | GroupFamily::SignedSym | GroupFamily::EvenSignedSym)
    }

    /// Discrete generators of `G_n` acting on `R^n`, as signed permutations.
    ///
    /// For `Sym` these are the transposition `(1,2)` and the `n`-cycle; the
    /// signed families add a single sign flip (`diag(−1,1,…,1)`) or a double
    /// one (`diag(−1,−1,1,…,1)`); `Cyclic` keeps just the `n`-cycle; the
    /// `Orthogonal` family keeps `diag(−1,1,…,1)` as its discrete generator
    /// and is completed by [`GroupFamily::lie_algebra_basis`].
    pub fn discrete_generators(&self, n: usize) -> Result<Vec<SignedPerm>> {
        if n < 1 {
            return Err(Error::InvalidLevel(format!("group level must be >= 1, got {n}")));
        }
        let mut gens = Vec::new();
        let perm_gens = |gens: &mut Vec<SignedPerm>| {
            if n >= 2 {
                gens.push(transposition(n, 0, 1));
                gens.push(cycle(n));
            }
        };
        match self {
            GroupFamily::Sym => perm_gens(&mut gens),
            GroupFamily::SignedSym => {
                perm_gens(&mut gens);
                gens.push(sign_flip(n, &[0]));
            }
            GroupFamily::EvenSignedSym => {
                perm_gens(&mut gens);
                if n >= 2 {
                    gens.push(sign_flip(n, &[0, 1]));
                }
            }
            GroupFamily::Cyclic => {
                if n >= 2 {
                    gens.push(cycle(n));
                }
            }
            GroupFamily::Orthogonal => {
                gens.push(sign_flip(n, &[0]));
            }
            GroupFamily::Trivial => {}
        }
        Ok(gens)
    }

    /// Basis of the Lie algebra of `G_n` acting on `R^n`: the elementary skew
    /// matrices `E_{i,j} = e_i e_j^T − e_j e_i^T` for `i < j` when the family
    /// is `Orthogonal`, and the empty list for the finite families.
    pub fn lie_algebra_basis(&self, n: usize) -> Vec<SpMat> {
        match self {
            GroupFamily::Orthogonal => {
                let mut out = Vec::with_capacity(n * (n - 1) / 2);
                for i in 0..n {
                    for j in (i + 1)..n {
                        out.push(SpMat::from_triplets(n, n, vec![(i, j, 1.0), (j, i, -1.0)]));
                    }
                }
                out
            }
            _ => Vec::new(),
        }
    }

    /// `|G_n|` for the finite families, `None` for `Orthogonal`.
    pub fn order(&self, n: usize) -> Option<u128> {
        let fact = |n: usize| -> u128 { (1..=n as u128).product() };
        match self {
            GroupFamily::Sym => Some(fact(n)),
            GroupFamily::SignedSym => Some((1u128 << n) * fact(n)),
            GroupFamily::EvenSignedSym => {
                if n == 0 {
                    Some(1)
                } else {
                    Some((1u128 << (n - 1)) * fact(n))
                }
            }
            GroupFamily::Cyclic => Some(n as u128),
            GroupFamily::Orthogonal => None,
            GroupFamily::Trivial => Some(1),
        }
    }
}

fn transposition(n: usize, i: usize, j: usize) -> SignedPerm {
    let mut to: Vec<usize> = (0..n).collect();
    to.swap(i, j);
    SignedPerm { to, sign: vec![1.0; n] }
}

/// The `n`-cycle sending coordinate `i` to `i+1 (mod n)`.
fn cycle(n: usize) -> SignedPerm {
    let to: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
    SignedPerm { to, sign: vec![1.0; n] }
}

fn sign_flip(n: usize, flipped: &[usize]) -> SignedPerm {
    let mut sign = vec![1.0; n];
    for &i in flipped {
        sign[i] = -1.0;
    }
    SignedPerm { to: (0..n).collect(), sign }
}

/// Enumerates all elements of a finite group generated by `gens`, as signed
/// permutations, up to a cap on the group order. Returns `None` if the cap is
/// exceeded. Intended for test oracles (Reynolds averaging, order checks).
pub fn enumerate_group(gens: &[SignedPerm], dim: usize, cap: usize) -> Option<Vec<SignedPerm>> {
    use std::collections::HashSet;
    let key = |p: &SignedPerm| -> Vec<(usize, i8)> {
        p.to.iter().zip(&p.sign).map(|(&t, &s)| (t, if s < 0.0 { -1 } else { 1 })).collect()
    };
    let id = SignedPerm::identity(dim);
    let mut seen: HashSet<Vec<(usize, i8)>> = HashSet::new();
    seen.insert(key(&id));
    let mut elems = vec![id];
    let mut frontier = elems.clone();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for g in &frontier {
            for h in gens {
                let gh = h.compose(g);
                if seen.insert(key(&gh)) {
                    if elems.len() + next.len() + 1 > cap {
                        return None;
                    }
                    next.push(gh);
                }
            }
        }
        elems.extend(next.iter().cloned());
        frontier = next;
    }
    Some(elems)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_matrices_are_orthogonal() {
        for fam in [
            GroupFamily::Sym,
            GroupFamily::SignedSym,
            GroupFamily::EvenSignedSym,
            GroupFamily::Cyclic,
            GroupFamily::Orthogonal,
            GroupFamily::Trivial,
        ] {
            for n in 1..=6 {
                for g in fam.discrete_generators(n).unwrap() {
                    let m = g.to_spmat();
                    let gtg = m.transpose().matmul(&m);
                    let err = gtg.add_scaled(&SpMat::identity(n), -1.0).max_abs();
                    assert!(err <= 1e-12, "{fam:?} n={n}");
                }
            }
        }
    }

    #[test]
    fn closure_reproduces_group_orders() {
        for fam in [
            GroupFamily::Sym,
            GroupFamily::SignedSym,
            GroupFamily::EvenSignedSym,
            GroupFamily::Cyclic,
        ] {
            for n in 1..=6 {
                let gens = fam.discrete_generators(n).unwrap();
                let elems = enumerate_group(&gens, n, 200_000).unwrap();
                assert_eq!(elems.len() as u128, fam.order(n).unwrap(), "{fam:?} n={n}");
            }
        }
    }

    #[test]
    fn lie_basis_is_skew_and_sized() {
        let basis = GroupFamily::Orthogonal.lie_algebra_basis(3);
        assert_eq!(basis.len(), 3);
        for e in &basis {
            let skew = e.add_scaled(&e.transpose(), 1.0).max_abs();
            assert!(skew == 0.0);
        }
        assert!(GroupFamily::Sym.lie_algebra_basis(6).is_empty());
    }

    #[test]
    fn sym_generators_match_contract() {
        let gens = GroupFamily::Sym.discrete_generators(4).unwrap();
        assert_eq!(gens.len(), 2);
        // transposition (1,2)
        assert_eq!(gens[0].to, vec![1, 0, 2, 3]);
        // 4-cycle
        assert_eq!(gens[1].to, vec![1, 2, 3, 0]);
        assert!(GroupFamily::Trivial.discrete_generators(5).unwrap().is_empty());
        let o = GroupFamily::Orthogonal.discrete_generators(3).unwrap();
        assert_eq!(o.len(), 1);
        assert_eq!(o[0].sign, vec![-1.0, 1.0, 1.0]);
    }
}
