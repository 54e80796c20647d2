//! Bases of invariant vectors, equivariant maps, and maps that extend to
//! morphisms of sequences, plus the linear solves that extend such objects to
//! higher levels.
//!
//! For group families acting by signed permutations the bases are computed
//! exactly: the fixed-point equations permute (coordinate or coordinate-pair)
//! indices with relative signs, so the solution space is spanned by signed
//! orbit indicators found by a union-find with sign tracking. Orbits whose
//! sign relation is inconsistent carry no nonzero solution and are dropped.
//! For continuous families (or dense actions) a dense nullspace of the
//! stacked commutation constraints is used instead.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::seq::{ConsistentSequence, Degree, SpaceInstance};
use crate::sparse::{gram_nullspace, lsqr, SpMat};

/// Which fixed-point equations a basis satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintClass {
    /// Invariant vectors of one space.
    Invariant,
    /// Equivariant linear maps between two spaces at one level.
    Equivariant,
    /// Equivariant maps additionally mapping each low-degree subspace into
    /// its counterpart, so that they extend to morphisms of sequences.
    Morphism,
    /// Morphism maps whose metric adjoints are also morphisms.
    MorphismWithAdjoint,
}

/// An orthonormal basis (w.r.t. the metric-weighted inner products) of one of
/// the fixed-point spaces, at a stated level. Invariant vectors are stored as
/// `dim×1` matrices.
#[derive(Debug, Clone)]
pub struct BasisFamily {
    pub class: ConstraintClass,
    pub n: usize,
    pub elements: Vec<SpMat>,
}

impl BasisFamily {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Union-find with relative signs
// ---------------------------------------------------------------------------

struct SignedUnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
    /// Sign of this element relative to its parent.
    sign: Vec<f64>,
    /// Whether the class contains a sign contradiction (forces zero).
    dead: Vec<bool>,
}

impl SignedUnionFind {
    fn new(n: usize) -> Self {
        SignedUnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
            sign: vec![1.0; n],
            dead: vec![false; n],
        }
    }

    /// Returns `(root, sign of x relative to root)` with path compression.
    fn find(&mut self, x: usize) -> (usize, f64) {
        if self.parent[x] == x {
            return (x, 1.0);
        }
        let (root, s) = self.find(self.parent[x]);
        self.parent[x] = root;
        self.sign[x] *= s;
        (root, self.sign[x])
    }

    /// Records the relation `value[b] = rel · value[a]`.
    fn union(&mut self, a: usize, b: usize, rel: f64) {
        let (ra, sa) = self.find(a);
        let (rb, sb) = self.find(b);
        if ra == rb {
            // value[b] = (sb/sa·rel ... consistency requires sb = rel·sa.
            if sb != rel * sa {
                self.dead[ra] = true;
            }
            return;
        }
        let dead = self.dead[ra] || self.dead[rb];
        // value relative to roots: value[a] = sa·v[ra], value[b] = sb·v[rb];
        // relation gives v[rb] = (rel·sa/sb)·v[ra].
        let rel_roots = rel * sa * sb; // signs are ±1 so 1/sb = sb
        if self.rank[ra] < self.rank[rb] {
            self.parent[ra] = rb;
            self.sign[ra] = rel_roots;
            self.dead[rb] = dead;
        } else {
            self.parent[rb] = ra;
            self.sign[rb] = rel_roots;
            if self.rank[ra] == self.rank[rb] {
                self.rank[ra] += 1;
            }
            self.dead[ra] = dead;
        }
    }
}

// ---------------------------------------------------------------------------
// Invariant vectors
// ---------------------------------------------------------------------------

/// Orthonormal basis of the invariant vectors of `seq` at level `n`.
pub fn invariant_basis(seq: &ConsistentSequence, n: usize) -> Result<BasisFamily> {
    let inst = seq.instance(n)?;
    let elements = if inst.all_signed() {
        invariant_basis_signed(&inst)
    } else {
        invariant_basis_dense(&inst)?
    };
    Ok(BasisFamily { class: ConstraintClass::Invariant, n, elements })
}

fn invariant_basis_signed(inst: &SpaceInstance) -> Vec<SpMat> {
    let d = inst.dim;
    let mut uf = SignedUnionFind::new(d);
    for act in &inst.disc_actions {
        let p = act.as_signed().unwrap();
        for j in 0..d {
            // Invariance: v[to[j]] = sign[j]·v[j].
            uf.union(j, p.to[j], p.sign[j]);
        }
    }
    let mut classes: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
    for j in 0..d {
        let (r, s) = uf.find(j);
        if !uf.dead[r] {
            classes.entry(r).or_default().push((j, s));
        }
    }
    let mut roots: Vec<usize> = classes.keys().copied().collect();
    roots.sort_unstable();
    roots
        .into_iter()
        .map(|r| {
            let members = &classes[&r];
            let nrm: f64 =
                members.iter().map(|&(j, _)| inst.weights[j]).sum::<f64>().sqrt();
            SpMat::from_triplets(
                d,
                1,
                members.iter().map(|&(j, s)| (j, 0, s / nrm)).collect(),
            )
        })
        .collect()
}

fn invariant_basis_dense(inst: &SpaceInstance) -> Result<Vec<SpMat>> {
    let d = inst.dim;
    let mut rows: Vec<SpMat> = Vec::new();
    let id = SpMat::identity(d);
    for act in &inst.disc_actions {
        rows.push(act.to_spmat().add_scaled(&id, -1.0));
    }
    for lie in &inst.lie_actions {
        rows.push(lie.clone());
    }
    if rows.is_empty() {
        rows.push(SpMat::zeros(d, d));
    }
    let refs: Vec<&SpMat> = rows.iter().collect();
    let stacked = stack_rows(&refs);
    let null = crate::sparse::dense_nullspace(&stacked.to_dense(), 1e-8)?;
    Ok(orthonormalize_columns(&null, &inst.weights)
        .into_iter()
        .map(|v| SpMat::from_triplets(
            d,
            1,
            v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, &x)| (i, 0, x)).collect(),
        ))
        .collect())
}

fn stack_rows(blocks: &[&SpMat]) -> SpMat {
    let ncols = blocks[0].ncols();
    let mut trips = Vec::new();
    let mut off = 0;
    for b in blocks {
        assert_eq!(b.ncols(), ncols);
        for (r, c, v) in b.iter() {
            trips.push((off + r, c, v));
        }
        off += b.nrows();
    }
    SpMat::from_triplets(off, ncols, trips)
}

/// Gram–Schmidt on the columns of `m` w.r.t. a diagonal metric; drops
/// numerically dependent columns.
fn orthonormalize_columns(m: &DMatrix<f64>, weights: &[f64]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let inner = |a: &[f64], b: &[f64]| -> f64 {
        weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    };
    for c in 0..m.ncols() {
        let mut v: Vec<f64> = m.column(c).iter().copied().collect();
        let orig = inner(&v, &v).sqrt();
        for _ in 0..2 {
            for q in &out {
                let coef = inner(q, &v);
                for i in 0..v.len() {
                    v[i] -= coef * q[i];
                }
            }
        }
        let nrm = inner(&v, &v).sqrt();
        if nrm > 1e-10 * orig.max(1.0) {
            for x in &mut v {
                *x /= nrm;
            }
            out.push(v);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Equivariant maps
// ---------------------------------------------------------------------------

/// Orthonormal basis of the equivariant linear maps `V_n → U_n`, w.r.t. the
/// metric-weighted Frobenius inner product
/// `⟨A, B⟩ = Σ_{r,c} (w_U[r]/w_V[c]) A_{rc} B_{rc}`.
pub fn equivariant_basis(
    seq_v: &ConsistentSequence,
    seq_u: &ConsistentSequence,
    n: usize,
) -> Result<BasisFamily> {
    if seq_v.family != seq_u.family {
        return Err(Error::UnsupportedGroup(
            "equivariant_basis requires both sequences over the same family".into(),
        ));
    }
    let iv = seq_v.instance(n)?;
    let iu = seq_u.instance(n)?;
    let elements = if iv.all_signed() && iu.all_signed() {
        equivariant_basis_signed(&iv, &iu)
    } else {
        equivariant_basis_dense(&iv, &iu)?
    };
    Ok(BasisFamily { class: ConstraintClass::Equivariant, n, elements })
}

fn equivariant_basis_signed(iv: &SpaceInstance, iu: &SpaceInstance) -> Vec<SpMat> {
    let (dv, du) = (iv.dim, iu.dim);
    let idx = |r: usize, c: usize| r * dv + c;
    let mut uf = SignedUnionFind::new(du * dv);
    assert_eq!(iv.disc_actions.len(), iu.disc_actions.len());
    for (gv, gu) in iv.disc_actions.iter().zip(&iu.disc_actions) {
        let pv = gv.as_signed().unwrap();
        let pu = gu.as_signed().unwrap();
        for r in 0..du {
            for c in 0..dv {
                // Equivariance: A[to_u[r], to_v[c]] = s_u[r]·s_v[c]·A[r,c].
                uf.union(idx(r, c), idx(pu.to[r], pv.to[c]), pu.sign[r] * pv.sign[c]);
            }
        }
    }
    let mut classes: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
    for j in 0..du * dv {
        let (root, s) = uf.find(j);
        if !uf.dead[root] {
            classes.entry(root).or_default().push((j, s));
        }
    }
    let mut roots: Vec<usize> = classes.keys().copied().collect();
    roots.sort_unstable();
    roots
        .into_iter()
        .map(|root| {
            let members = &classes[&root];
            // The Frobenius weight w_U[r]/w_V[c] is constant on an
            // equivariance orbit (the actions are isometries), so normalizing
            // uses the orbit size times the common weight.
            let nrm: f64 = members
                .iter()
                .map(|&(j, _)| iu.weights[j / dv] / iv.weights[j % dv])
                .sum::<f64>()
                .sqrt();
            SpMat::from_triplets(
                du,
                dv,
                members.iter().map(|&(j, s)| (j / dv, j % dv, s / nrm)).collect(),
            )
        })
        .collect()
}

fn equivariant_basis_dense(iv: &SpaceInstance, iu: &SpaceInstance) -> Result<Vec<SpMat>> {
    let (dv, du) = (iv.dim, iu.dim);
    let unknowns = du * dv;
    // Constraint rows: vec(ρ_U(h)·A − A·ρ_V(h)) = (ρ_U(h) ⊗ I − I ⊗ ρ_V(h)ᵀ)·vec(A)
    // with vec in row-major order (A[r,c] at r·dv+c).
    let iu_id = SpMat::identity(du);
    let iv_id = SpMat::identity(dv);
    let mut blocks: Vec<SpMat> = Vec::new();
    assert_eq!(iv.disc_actions.len(), iu.disc_actions.len());
    for (gv, gu) in iv.disc_actions.iter().zip(&iu.disc_actions) {
        let mu = gu.to_spmat().kron(&iv_id);
        let mv = iu_id.kron(&gv.to_spmat().transpose());
        blocks.push(mu.add_scaled(&mv, -1.0));
    }
    assert_eq!(iv.lie_actions.len(), iu.lie_actions.len());
    for (lv, lu) in iv.lie_actions.iter().zip(&iu.lie_actions) {
        let mu = lu.kron(&iv_id);
        let mv = iu_id.kron(&lv.transpose());
        blocks.push(mu.add_scaled(&mv, -1.0));
    }
    if blocks.is_empty() {
        blocks.push(SpMat::zeros(unknowns, unknowns));
    }
    let refs: Vec<&SpMat> = blocks.iter().collect();
    let c = stack_rows(&refs);
    let gram = c.transpose().matmul(&c).to_dense();
    let null = gram_nullspace(&gram, 1e-10);
    // Frobenius metric weights per unknown.
    let fw: Vec<f64> = (0..unknowns).map(|j| iu.weights[j / dv] / iv.weights[j % dv]).collect();
    Ok(orthonormalize_columns(&null, &fw)
        .into_iter()
        .map(|v| {
            SpMat::from_triplets(
                du,
                dv,
                v.iter()
                    .enumerate()
                    .filter(|(_, x)| x.abs() > 1e-14)
                    .map(|(j, &x)| (j / dv, j % dv, x))
                    .collect(),
            )
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Morphism bases
// ---------------------------------------------------------------------------

/// Levels `i < n0` at which the subspace-preservation constraints are
/// imposed: up to the generation degree of `seq` (all lower levels when the
/// degree is unknown).
fn constraint_levels(seq: &ConsistentSequence, n0: usize) -> Vec<usize> {
    let top = match seq.generation_degree() {
        Degree::Known(d) => d.min(n0.saturating_sub(1)),
        Degree::Unknown(_) => n0.saturating_sub(1),
    };
    (1..=top).collect()
}

/// Residual of the subspace-preservation conditions on a single operator
/// `op : V_{n0} → U_{n0}`: the worst weighted Frobenius norm over constraint
/// levels of `(I − ψ_i ψ_i*)·op·φ_i` (and, with `with_adjoint`, of
/// `ψ_i*·op·(I − φ_i φ_i*)`), relative to the weighted norm of `op`.
/// A small residual certifies that the extension of `op` is a morphism
/// of sequences (resp. that its adjoint sequence is one too).
pub fn morphism_residual(
    seq_v: &ConsistentSequence,
    seq_u: &ConsistentSequence,
    op: &SpMat,
    n0: usize,
    with_adjoint: bool,
) -> Result<f64> {
    let iu = seq_u.instance(n0)?;
    let iv = seq_v.instance(n0)?;
    let wnorm = |m: &SpMat, wr: &[f64], wc: &[f64]| -> f64 {
        m.iter().map(|(r, c, v)| wr[r] / wc[c] * v * v).sum::<f64>().sqrt()
    };
    let scale = wnorm(op, &iu.weights, &iv.weights).max(1e-30);
    let mut worst = 0.0f64;
    for i in constraint_levels(seq_v, n0) {
        let phi = seq_v.embedding(i, n0)?;
        let psi = seq_u.embedding(i, n0)?;
        let psi_star = seq_u.projection(n0, i)?;
        let proj_perp = SpMat::identity(iu.dim).add_scaled(&psi.matmul(&psi_star), -1.0);
        let img = proj_perp.matmul(&op.matmul(&phi)).prune(1e-15);
        let wv = seq_v.instance(i)?.weights.clone();
        worst = worst.max(wnorm(&img, &iu.weights, &wv));
    }
    if with_adjoint {
        for i in constraint_levels(seq_u, n0) {
            let phi = seq_v.embedding(i, n0)?;
            let phi_star = seq_v.projection(n0, i)?;
            let psi_star = seq_u.projection(n0, i)?;
            let proj_perp = SpMat::identity(iv.dim).add_scaled(&phi.matmul(&phi_star), -1.0);
            let img = psi_star.matmul(&op.matmul(&proj_perp)).prune(1e-15);
            let wu = seq_u.instance(i)?.weights.clone();
            worst = worst.max(wnorm(&img, &wu, &iv.weights));
        }
    }
    Ok(worst / scale)
}

/// Orthonormal basis of the equivariant maps `V_{n0} → U_{n0}` that map
/// `V_i` into `U_i` for every `i` up to the generation degree of `seq_v`
/// (and, with `with_adjoint`, also `V_i^⊥` into `U_i^⊥` up to the generation
/// degree of `seq_u`). Such maps extend uniquely to morphisms of sequences
/// once `n0` reaches the presentation degrees.
pub fn morphism_basis(
    seq_v: &ConsistentSequence,
    seq_u: &ConsistentSequence,
    n0: usize,
    with_adjoint: bool,
) -> Result<BasisFamily> {
    let equiv = equivariant_basis(seq_v, seq_u, n0)?;
    let k = equiv.len();
    if k == 0 {
        return Ok(BasisFamily {
            class: if with_adjoint {
                ConstraintClass::MorphismWithAdjoint
            } else {
                ConstraintClass::Morphism
            },
            n: n0,
            elements: Vec::new(),
        });
    }
    let iu = seq_u.instance(n0)?;
    let iv = seq_v.instance(n0)?;

    // Constraint images per basis element, stacked into one sparse matrix C
    // (rows: constraint coordinates, cols: basis elements); the coefficient
    // nullspace of C is computed via its Gram matrix.
    let mut trips: Vec<(usize, usize, f64)> = Vec::new();
    let mut row_off = 0usize;

    // (I − ψ_i ψ_i*) E φ_i = 0: E maps V_i into U_i.
    for i in constraint_levels(seq_v, n0) {
        let phi = seq_v.embedding(i, n0)?;
        let psi = seq_u.embedding(i, n0)?;
        let psi_star = seq_u.projection(n0, i)?;
        let proj_perp = SpMat::identity(iu.dim).add_scaled(&psi.matmul(&psi_star), -1.0);
        for (kk, e) in equiv.elements.iter().enumerate() {
            let img = proj_perp.matmul(&e.matmul(&phi)).prune(1e-13);
            for (r, c, v) in img.iter() {
                trips.push((row_off + r * phi.ncols() + c, kk, v));
            }
        }
        row_off += iu.dim * phi.ncols();
    }
    if with_adjoint {
        // ψ_i* E (I − φ_i φ_i*) = 0: E maps V_i^⊥ into U_i^⊥.
        for i in constraint_levels(seq_u, n0) {
            let phi = seq_v.embedding(i, n0)?;
            let phi_star = seq_v.projection(n0, i)?;
            let psi_star = seq_u.projection(n0, i)?;
            let proj_perp = SpMat::identity(iv.dim).add_scaled(&phi.matmul(&phi_star), -1.0);
            for (kk, e) in equiv.elements.iter().enumerate() {
                let img = psi_star.matmul(&e.matmul(&proj_perp)).prune(1e-13);
                for (r, c, v) in img.iter() {
                    trips.push((row_off + r * iv.dim + c, kk, v));
                }
            }
            row_off += psi_star.nrows() * iv.dim;
        }
    }
    let c = SpMat::from_triplets(row_off.max(1), k, trips);
    let gram = c.transpose().matmul(&c).to_dense();
    let null = gram_nullspace(&gram, 1e-8);

    // The equivariant basis elements are orthonormal, so orthonormal
    // coefficient vectors yield orthonormal maps.
    let mut elements = Vec::with_capacity(null.ncols());
    for col in 0..null.ncols() {
        let mut acc = SpMat::zeros(iu.dim, iv.dim);
        for (kk, e) in equiv.elements.iter().enumerate() {
            let coef = null[(kk, col)];
            if coef.abs() > 1e-14 {
                acc = acc.add_scaled(e, coef);
            }
        }
        elements.push(acc.prune(1e-14));
    }
    Ok(BasisFamily {
        class: if with_adjoint {
            ConstraintClass::MorphismWithAdjoint
        } else {
            ConstraintClass::Morphism
        },
        n: n0,
        elements,
    })
}

// ---------------------------------------------------------------------------
// Extension to higher levels
// ---------------------------------------------------------------------------

/// Expands coefficient vectors to operators and measures their difference.
fn coeff_diff(elements: &[SpMat], x: &[f64], y: &[f64]) -> f64 {
    // Elements are orthonormal, so the operator distance is the coefficient
    // distance.
    let _ = elements;
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// The linear operator of the projection constraint `ψ* E φ = A0` acting on
/// coefficients over an equivariant basis.
struct ProjectionSystem<'a> {
    /// Flattened (row-major, pruned to a fixed sparsity-free dense layout)
    /// images `ψ*·E_k·φ` per basis element, as sparse columns.
    cols: Vec<Vec<(usize, f64)>>,
    rows: usize,
    _marker: std::marker::PhantomData<&'a ()>,
}

impl crate::sparse::LinOp for ProjectionSystem<'_> {
    fn nrows(&self) -> usize {
        self.rows
    }

    fn ncols(&self) -> usize {
        self.cols.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (k, col) in self.cols.iter().enumerate() {
            let xv = x[k];
            if xv != 0.0 {
                for &(r, v) in col {
                    y[r] += v * xv;
                }
            }
        }
    }

    fn apply_t(&self, y: &[f64], x: &mut [f64]) {
        for (k, col) in self.cols.iter().enumerate() {
            let mut acc = 0.0;
            for &(r, v) in col {
                acc += v * y[r];
            }
            x[k] += acc;
        }
    }
}

fn extension_solve(
    basis: &[SpMat],
    project: impl Fn(&SpMat) -> SpMat,
    target: &SpMat,
    level: usize,
) -> Result<Vec<f64>> {
    let rows = target.nrows() * target.ncols();
    let mut cols = Vec::with_capacity(basis.len());
    for e in basis {
        let img = project(e).prune(1e-14);
        let mut col: Vec<(usize, f64)> = img
            .iter()
            .map(|(r, c, v)| (r * target.ncols() + c, v))
            .collect();
        col.sort_unstable_by_key(|&(r, _)| r);
        cols.push(col);
    }
    let sys = ProjectionSystem { cols, rows, _marker: std::marker::PhantomData };
    let mut b = vec![0.0; rows];
    for (r, c, v) in target.iter() {
        b[r * target.ncols() + c] = v;
    }
    let bnorm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cap = 10 * (basis.len() as f64).sqrt() as usize + 500;
    let sol = lsqr(&sys, &b, None, 1e-10, cap);
    if sol.rel_residual > 1e-8 {
        return Err(Error::SolverDiverged(format!(
            "projection system at level {level}: relative residual {:.3e} after {} iterations",
            sol.rel_residual, sol.iterations
        )));
    }
    // Uniqueness check: a second solve from a perturbed start must land on
    // the same solution; otherwise the homogeneous system has a nullspace
    // meeting the constraint fiber.
    let mut rng_state = 0x9e3779b97f4a7c15u64;
    let mut x0 = vec![0.0; basis.len()];
    for x in &mut x0 {
        rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        *x = ((rng_state >> 33) as f64 / (1u64 << 31) as f64 - 1.0) * (bnorm + 1.0);
    }
    let sol2 = lsqr(&sys, &b, Some(&x0), 1e-10, cap);
    let diff = coeff_diff(basis, &sol.x, &sol2.x);
    let scale = sol.x.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    if sol2.rel_residual <= 1e-8 && diff > 1e-6 * scale {
        return Err(Error::NonUniqueExtension {
            level,
            detail: format!("two least-squares solutions differ by {diff:.3e}"),
        });
    }
    Ok(sol.x)
}

/// Extends an equivariant operator `A0 : V_{n0} → U_{n0}` to the unique
/// equivariant operator at level `n` satisfying `ψ* A_n φ = A0`.
pub fn extend_operator(
    seq_v: &ConsistentSequence,
    seq_u: &ConsistentSequence,
    a0: &SpMat,
    n0: usize,
    n: usize,
) -> Result<SpMat> {
    extend_operator_in_class(seq_v, seq_u, a0, n0, n, ConstraintClass::Equivariant)
}

/// Like [`extend_operator`], but restricted to a constraint class. When the
/// base operator is known to be a morphism (of sequences), searching inside
/// the morphism space makes the extension unique already at the generation
/// degree, well below the level the unrestricted equivariant search needs.
pub fn extend_operator_in_class(
    seq_v: &ConsistentSequence,
    seq_u: &ConsistentSequence,
    a0: &SpMat,
    n0: usize,
    n: usize,
    class: ConstraintClass,
) -> Result<SpMat> {
    if n == n0 {
        return Ok(a0.clone());
    }
    if n < n0 {
        return Err(Error::InvalidLevel(format!("extension target {n} below base level {n0}")));
    }
    let basis = match class {
        ConstraintClass::Equivariant => equivariant_basis(seq_v, seq_u, n)?,
        ConstraintClass::Morphism => morphism_basis(seq_v, seq_u, n, false)?,
        ConstraintClass::MorphismWithAdjoint => morphism_basis(seq_v, seq_u, n, true)?,
        ConstraintClass::Invariant => {
            return Err(Error::ShapeMismatch(
                "the invariant class applies to vectors, not operators".into(),
            ))
        }
    };
    if basis.is_empty() {
        return Err(Error::EmptyBasis);
    }
    let phi = seq_v.embedding(n0, n)?;
    let psi_star = seq_u.projection(n, n0)?;
    let coeffs = extension_solve(
        &basis.elements,
        |e| psi_star.matmul(&e.matmul(&phi)),
        a0,
        n,
    )?;
    let mut acc = SpMat::zeros(seq_u.dim(n)?, seq_v.dim(n)?);
    for (k, e) in basis.elements.iter().enumerate() {
        if coeffs[k].abs() > 1e-14 {
            acc = acc.add_scaled(e, coeffs[k]);
        }
    }
    Ok(acc.prune(1e-14))
}

/// Extends an invariant vector `u0 ∈ U_{n0}` to the unique invariant vector
/// at level `n` with `ψ* u_n = u0`.
pub fn extend_invariant(
    seq_u: &ConsistentSequence,
    u0: &[f64],
    n0: usize,
    n: usize,
) -> Result<Vec<f64>> {
    if n == n0 {
        return Ok(u0.to_vec());
    }
    if n < n0 {
        return Err(Error::InvalidLevel(format!("extension target {n} below base level {n0}")));
    }
    let basis = invariant_basis(seq_u, n)?;
    let psi_star = seq_u.projection(n, n0)?;
    let target = SpMat::from_triplets(
        u0.len(),
        1,
        u0.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, &v)| (i, 0, v)).collect(),
    );
    if basis.is_empty() {
        if u0.iter().all(|&v| v == 0.0) {
            return Ok(vec![0.0; seq_u.dim(n)?]);
        }
        return Err(Error::EmptyBasis);
    }
    let coeffs =
        extension_solve(&basis.elements, |e| psi_star.matmul(e), &target, n)?;
    let dim = seq_u.dim(n)?;
    let mut out = vec![0.0; dim];
    for (k, e) in basis.elements.iter().enumerate() {
        if coeffs[k].abs() > 1e-14 {
            for (r, _, v) in e.iter() {
                out[r] += coeffs[k] * v;
            }
        }
    }
    Ok(out)
}

/// Maximum commutation residual `‖ρ_U(h)A − Aρ_V(h)‖_F` over all generators
/// (and Lie basis elements), for validating operators.
pub fn equivariance_residual(
    seq_v: &ConsistentSequence,
    seq_u: &ConsistentSequence,
    a: &SpMat,
    n: usize,
) -> Result<f64> {
    let iv = seq_v.instance(n)?;
    let iu = seq_u.instance(n)?;
    let mut worst: f64 = 0.0;
    for (gv, gu) in iv.disc_actions.iter().zip(&iu.disc_actions) {
        let lhs = gu.to_spmat().matmul(a);
        let rhs = a.matmul(&gv.to_spmat());
        worst = worst.max(lhs.add_scaled(&rhs, -1.0).norm_fro());
    }
    for (lv, lu) in iv.lie_actions.iter().zip(&iu.lie_actions) {
        let lhs = lu.matmul(a);
        let rhs = a.matmul(lv);
        worst = worst.max(lhs.add_scaled(&rhs, -1.0).norm_fro());
    }
    Ok(worst)
}

/// Invariance residual `max_h ‖ρ(h)u − u‖` of a vector.
pub fn invariance_residual(seq: &ConsistentSequence, u: &[f64], n: usize) -> Result<f64> {
    let inst = seq.instance(n)?;
    let mut worst: f64 = 0.0;
    for g in &inst.disc_actions {
        let img = g.apply_vec(u);
        let d: f64 = img.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        worst = worst.max(d);
    }
    for lie in &inst.lie_actions {
        let img = lie.mul_vec(u);
        let d: f64 = img.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(d);
    }
    Ok(worst)
}
