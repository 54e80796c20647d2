//! A library of ready-made free descriptions of classical set sequences:
//! simplices, norm balls, cubes, elliptopes, permutahedra, Schur–Horn
//! orbitopes, and free spectrahedra. Each constructor pins the operators at
//! a small base level; higher levels are produced by equivariant extension.
//!
//! Two classical families are deliberately *not* included because they are
//! not consistent in this framework: regular polygons (their symmetry groups
//! do not embed compatibly along the sequence) and the exponential-cone
//! approximations of operator relative entropy (their lifting dimensions
//! grow with the approximation order rather than with the level).

use nalgebra::DMatrix;

use crate::descriptions::FreeDescription;
use crate::equivariant::ConstraintClass;
use crate::error::{Error, Result};
use crate::groups::GroupFamily;
use crate::seq::{
    direct_sum, doubling_seq, fixed_seq, liftedl1_seq, moment_seq, symdoubling_seq, symmat_seq,
    vec_seq, vecp_seq,
};
use crate::solver::ConeSpec;
use crate::sparse::SpMat;

/// Row-major upper-triangle index of entry `(i, j)`, `i ≤ j`, of a
/// symmetric matrix of side `n`.
pub fn tri(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < n);
    i * n - (i * i - i) / 2 + (j - i)
}

/// The standard simplex `{x ≥ 0 : 𝟙ᵀx = 1}` under coordinate permutations.
pub fn simplex() -> Result<FreeDescription> {
    let fam = GroupFamily::Sym;
    let n0 = 2;
    let seq_v = vec_seq(fam);
    let seq_w = fixed_seq(0, fam);
    let seq_u = direct_sum(&[&vec_seq(fam), &fixed_seq(1, fam)]);
    let mut a = vec![(2, 0, 1.0), (2, 1, 1.0)];
    for i in 0..n0 {
        a.push((i, i, 1.0));
    }
    FreeDescription::new_with_classes(
        seq_v,
        seq_w,
        seq_u,
        ConeSpec::parse("nonneg(n) zero(1)")?,
        SpMat::from_triplets(3, 2, a),
        SpMat::zeros(3, 0),
        vec![0.0, 0.0, -1.0],
        n0,
        ConstraintClass::Morphism,
        ConstraintClass::Equivariant,
    )
}

/// The unit ℓ¹ ball under signed permutations, via the lifted split
/// `x = p − q`, `p, q ≥ 0`, `𝟙ᵀ(p + q) ≤ 1`.
pub fn l1_ball() -> Result<FreeDescription> {
    let fam = GroupFamily::SignedSym;
    let n0 = 2;
    let seq_v = vec_seq(fam);
    let seq_w = vecp_seq(fam);
    let seq_u = liftedl1_seq(fam);
    // Rows: p (n), q (n), slack scalar. Witness y plays p + q − |x| ≥ 0.
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n0 {
        a.push((i, i, 1.0));
        a.push((n0 + i, i, -1.0));
        b.push((i, i, 1.0));
        b.push((n0 + i, i, 1.0));
        b.push((2 * n0, i, -1.0));
    }
    FreeDescription::new_with_classes(
        seq_v,
        seq_w,
        seq_u,
        ConeSpec::parse("nonneg(2n+1)")?,
        SpMat::from_triplets(2 * n0 + 1, n0, a),
        SpMat::from_triplets(2 * n0 + 1, n0, b),
        {
            let mut u = vec![0.0; 2 * n0 + 1];
            u[2 * n0] = 1.0;
            u
        },
        n0,
        ConstraintClass::MorphismWithAdjoint,
        ConstraintClass::Morphism,
    )
}

/// The unit ℓ² ball under orthogonal transformations, via the arrow-matrix
/// condition `[[1, xᵀ], [x, I]] ⪰ 0` written on the degree-≤1 moment space.
pub fn l2_ball() -> Result<FreeDescription> {
    let fam = GroupFamily::Orthogonal;
    let n0 = 2;
    let seq_v = vec_seq(fam);
    let seq_w = fixed_seq(0, fam);
    let seq_u = moment_seq(1, &vec_seq(fam));
    let side = n0 + 1;
    let mut a = Vec::new();
    for i in 0..n0 {
        a.push((tri(side, 0, 1 + i), i, 1.0));
    }
    let mut u = vec![0.0; side * (side + 1) / 2];
    for i in 0..side {
        u[tri(side, i, i)] = 1.0;
    }
    FreeDescription::new_with_classes(
        seq_v,
        seq_w,
        seq_u,
        ConeSpec::parse("psd(n+1)")?,
        SpMat::from_triplets(side * (side + 1) / 2, n0, a),
        SpMat::zeros(side * (side + 1) / 2, 0),
        u,
        n0,
        ConstraintClass::MorphismWithAdjoint,
        ConstraintClass::Equivariant,
    )
}

/// The unit cube `[−1, 1]ⁿ` under signed permutations, with the witness
/// split `y` enforcing `|xᵢ| ≤ yᵢ = 1` through an auxiliary zero block.
pub fn cube() -> Result<FreeDescription> {
    let fam = GroupFamily::SignedSym;
    let n0 = 2;
    let seq_v = vec_seq(fam);
    let seq_w = direct_sum(&[&vecp_seq(fam), &fixed_seq(1, fam)]);
    let seq_u = direct_sum(&[&liftedl1_seq(fam), &vecp_seq(fam)]);
    let rows = 2 * n0 + 1 + n0;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n0 {
        a.push((i, i, 1.0));
        a.push((n0 + i, i, -1.0));
        b.push((i, i, 1.0));
        b.push((n0 + i, i, 1.0));
        b.push((2 * n0 + 1 + i, i, 1.0));
    }
    let mut u = vec![0.0; rows];
    for i in 0..n0 {
        u[2 * n0 + 1 + i] = -1.0;
    }
    FreeDescription::new_with_classes(
        seq_v,
        seq_w,
        seq_u,
        ConeSpec::parse("nonneg(2n+1) zero(n)")?,
        SpMat::from_triplets(rows, n0, a),
        SpMat::from_triplets(rows, n0 + 1, b),
        u,
        n0,
        ConstraintClass::MorphismWithAdjoint,
        ConstraintClass::MorphismWithAdjoint,
    )
}

/// A shrinking variant of the cube description: at level `n` it cuts out
/// `(3/(2n−1))·[−1, 1]ⁿ`, so the sets fail to nest and the compatibility
/// certificate must reject it.
pub fn cube_bad() -> Result<FreeDescription> {
    let fam = GroupFamily::SignedSym;
    let n0 = 2;
    let seq_v = vec_seq(fam);
    let seq_w = direct_sum(&[&vecp_seq(fam), &fixed_seq(1, fam)]);
    let seq_u = direct_sum(&[&liftedl1_seq(fam), &vecp_seq(fam)]);
    let rows = 2 * n0 + 1 + n0;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n0 {
        a.push((i, i, 1.0));
        a.push((n0 + i, i, -1.0));
        b.push((i, i, 1.0));
        b.push((n0 + i, i, 1.0));
        // Scalar row: −𝟙ᵀy − β.
        b.push((2 * n0, i, -1.0));
        // Zero block: (I − 𝟙𝟙ᵀ)y + β𝟙.
        for j in 0..n0 {
            let v = if i == j { 0.0 } else { -1.0 };
            if v != 0.0 {
                b.push((2 * n0 + 1 + i, j, v));
            }
        }
        b.push((2 * n0 + 1 + i, n0, 1.0));
    }
    b.push((2 * n0, n0, -1.0));
    let mut u = vec![0.0; rows];
    u[2 * n0] = 3.0;
    FreeDescription::new_with_classes(
        seq_v,
        seq_w,
        seq_u,
        ConeSpec::parse("nonneg(2n+1) zero(n)")?,
        SpMat::from_triplets(rows, n0, a),
        SpMat::from_triplets(rows, n0 + 1, b),
        u,
        n0,
        ConstraintClass::MorphismWithAdjoint,
        ConstraintClass::Equivariant,
    )
}

/// The elliptope `{X ⪰ 0 : diag X = 𝟙}` under simultaneous row/column
/// permutations.
pub fn elliptope() -> Result<FreeDescription> {
    let fam = GroupFamily::Sym;
    let n0 = 3;
    let dv = n0 * (n0 + 1) / 2;
    let seq_v = symmat_seq(fam);
    let seq_w = fixed_seq(0, fam);
    let seq_u = direct_sum(&[&symmat_seq(fam), &vec_seq(fam)]);
    let mut a = Vec::new();
    for r in 0..dv {
        a.push((r, r, 1.0));
    }
    for i in 0..n0 {
        a.push((dv + i, tri(n0, i, i), 1.0));
    }
    let mut u = vec![0.0; dv + n0];
    for i in 0..n0 {
        u[dv + i] = -1.0;
    }
    FreeDescription::new_with_classes(
        seq_v,
        seq_w,
        seq_u,
        ConeSpec::parse("psd(n) zero(n)")?,
        SpMat::from_triplets(dv + n0, dv, a),
        SpMat::zeros(dv + n0, 0),
        u,
        n0,
        ConstraintClass::MorphismWithAdjoint,
        ConstraintClass::Equivariant,
    )
}

/// The doubly-nonnegative slice `{X ⪰ 0, X ≥ 0 : 𝟙ᵀX𝟙 = 1}` under
/// coordinate permutations (a projection-stable inverse-image example).
pub fn inverse_stability() -> Result<FreeDescription> {
    let fam = GroupFamily::Sym;
    let n0 = 3;
    let dv = n0 * (n0 + 1) / 2;
    let seq_v = symmat_seq(fam);
    let seq_w = fixed_seq(0, fam);
    let seq_u = direct_sum(&[&symmat_seq(fam), &fixed_seq(1, fam)]);
    let mut a = Vec::new();
    for r in 0..dv {
        a.push((r, r, 1.0));
    }
    for i in 0..n0 {
        for j in i..n0 {
            let mult = if i == j { 1.0 } else { 2.0 };
            a.push((dv, tri(n0, i, j), mult));
        }
    }
    let mut u = vec![0.0; dv + 1];
    u[dv] = -1.0;
    FreeDescription::new_with_classes(
        seq_v,
        seq_w,
        seq_u,
        ConeSpec::parse("dnn(n) zero(1)")?,
        SpMat::from_triplets(dv + 1, dv, a),
        SpMat::zeros(dv + 1, 0),
        u,
        n0,
        ConstraintClass::Morphism,
        ConstraintClass::Equivariant,
    )
}

/// The spectraplex `{X ⪰ 0 : Tr X = 1}` under orthogonal conjugation.
pub fn spectraplex() -> Result<FreeDescription> {
    let fam = GroupFamily::Orthogonal;
    let n0 = 2;
    let dv = n0 * (n0 + 1) / 2;
    let seq_v = symmat_seq(fam);
    let seq_w = fixed_seq(0, fam);
    let seq_u = direct_sum(&[&symmat_seq(fam), &fixed_seq(1, fam)]);
    let mut a = Vec::new();
    for r in 0..dv {
        a.push((r, r, 1.0));
    }
    for i in 0..n0 {
        a.push((dv, tri(n0, i, i), 1.0));
    }
    let mut u = vec![0.0; dv + 1];
    u[dv] = -1.0;
    FreeDescription::new_with_classes(
        seq_v,
        seq_w,
        seq_u,
        ConeSpec::parse("psd(n) zero(1)")?,
        SpMat::from_triplets(dv + 1, dv, a),
        SpMat::zeros(dv + 1, 0),
        u,
        n0,
        ConstraintClass::Morphism,
        ConstraintClass::Equivariant,
    )
}

fn check_masses(values: &[f64], mults: &[usize]) -> Result<(usize, usize)> {
    if values.len() != mults.len() || values.is_empty() {
        return Err(Error::ShapeMismatch(
            "values and multiplicities must be nonempty and equally long".into(),
        ));
    }
    let m: usize = mults.iter().sum();
    if m < 2 || !m.is_power_of_two() {
        return Err(Error::InvalidLevel(format!(
            "total multiplicity {m} must be a power of two ≥ 2 so the base level exists"
        )));
    }
    Ok((m, m.trailing_zeros() as usize))
}

/// The permutahedron of a vector with distinct entries `values[j]`, each of
/// multiplicity `mults[j]`: the convex hull of its coordinate permutations.
/// The total multiplicity must be a power of two; levels live on the
/// dyadic sequence `ℝ^{2ⁿ}`, and the base vector occupies level
/// `log₂(Σ mults)`.
pub fn permutahedron(values: &[f64], mults: &[usize]) -> Result<FreeDescription> {
    let (m, n0) = check_masses(values, mults)?;
    let q = values.len();
    let fam = GroupFamily::Sym;
    let dbl = doubling_seq(fam);
    let copies: Vec<&_> = std::iter::repeat(&dbl).take(q).collect();
    let seq_w = direct_sum(&copies);
    let mut u_parts: Vec<&_> = copies.clone();
    u_parts.push(&dbl);
    u_parts.push(&dbl);
    let fixq = fixed_seq(q, fam);
    u_parts.push(&fixq);
    let seq_u = direct_sum(&u_parts);
    let d = 1usize << n0;
    let rows = (q + 2) * d + q;
    // Witness M has column j for value j; x must equal Mλ with M ≥ 0,
    // unit row sums, and column masses mults[j]/m.
    let mut a = Vec::new();
    for i in 0..d {
        a.push((q * d + i, i, -1.0));
    }
    let w = 1.0 / d as f64;
    let mut b = Vec::new();
    for j in 0..q {
        for i in 0..d {
            b.push((j * d + i, j * d + i, 1.0));
            b.push((q * d + i, j * d + i, values[j]));
            b.push(((q + 1) * d + i, j * d + i, 1.0));
            b.push(((q + 2) * d + j, j * d + i, w));
        }
    }
    let mut u = vec![0.0; rows];
    for i in 0..d {
        u[(q + 1) * d + i] = -1.0;
    }
    for j in 0..q {
        u[(q + 2) * d + j] = -(mults[j] as f64) / m as f64;
    }
    FreeDescription::new(
        dbl,
        seq_w,
        seq_u,
        ConeSpec::parse(&format!("nonneg({q}*2^n) zero(2^n) zero(2^n) zero({q})"))?,
        SpMat::from_triplets(rows, d, a),
        SpMat::from_triplets(rows, q * d, b),
        u,
        n0,
    )
}

/// The Schur–Horn orbitope of a symmetric matrix with eigenvalues
/// `values[j]` of multiplicities `mults[j]`: the convex hull of its
/// conjugation orbit, described by the spectral witness decomposition
/// `X = Σ λⱼ Yⱼ`, `Yⱼ ⪰ 0`, `Σ Yⱼ = I`, `Tr Yⱼ` fixed to the multiplicity
/// fractions. Levels live on the dyadic sequence `𝕊^{2ⁿ}`.
pub fn schur_horn(values: &[f64], mults: &[usize]) -> Result<FreeDescription> {
    let (m, n0) = check_masses(values, mults)?;
    let q = values.len();
    // Conjugation orbits only span the full symmetric-matrix space under the
    // orthogonal groups; the permutation subfamily leaves the extension
    // underdetermined.
    let fam = GroupFamily::Orthogonal;
    let sdbl = symdoubling_seq(fam);
    let copies: Vec<&_> = std::iter::repeat(&sdbl).take(q).collect();
    let seq_w = direct_sum(&copies);
    let mut u_parts: Vec<&_> = copies.clone();
    u_parts.push(&sdbl);
    u_parts.push(&sdbl);
    let fixq = fixed_seq(q, fam);
    u_parts.push(&fixq);
    let seq_u = direct_sum(&u_parts);
    let d = 1usize << n0;
    let dd = d * (d + 1) / 2;
    let rows = (q + 2) * dd + q;
    let mut a = Vec::new();
    for r in 0..dd {
        a.push((q * dd + r, r, -1.0));
    }
    let w = 1.0 / d as f64;
    let mut b = Vec::new();
    for j in 0..q {
        for r in 0..dd {
            b.push((j * dd + r, j * dd + r, 1.0));
            b.push((q * dd + r, j * dd + r, values[j]));
            b.push(((q + 1) * dd + r, j * dd + r, 1.0));
        }
        for i in 0..d {
            b.push(((q + 2) * dd + j, j * dd + tri(d, i, i), w));
        }
    }
    let mut u = vec![0.0; rows];
    for i in 0..d {
        u[(q + 1) * dd + tri(d, i, i)] = -1.0;
    }
    for j in 0..q {
        u[(q + 2) * dd + j] = -(mults[j] as f64) / m as f64;
    }
    let psd_blocks = "psd(2^n) ".repeat(q);
    FreeDescription::new_with_classes(
        sdbl,
        seq_w,
        seq_u,
        ConeSpec::parse(&format!(
            "{psd_blocks}zero(C(2^n+1,2)) zero(C(2^n+1,2)) zero({q})"
        ))?,
        SpMat::from_triplets(rows, dd, a),
        SpMat::from_triplets(rows, q * dd, b),
        u,
        n0,
        ConstraintClass::MorphismWithAdjoint,
        ConstraintClass::MorphismWithAdjoint,
    )
}

/// The monic free spectrahedron of the pencil `L₀ ⊗ I + Σᵢ Lᵢ ⊗ Xᵢ ⪰ 0`
/// in `d` symmetric matrix variables, with `mats = [L₀, L₁, …, L_d]` of
/// common side `k` and `L₀ ⪰ 0`.
pub fn free_spectrahedron(mats: &[DMatrix<f64>]) -> Result<FreeDescription> {
    if mats.len() < 2 {
        return Err(Error::ShapeMismatch("need L₀ and at least one pencil coefficient".into()));
    }
    let k = mats[0].nrows();
    if mats.iter().any(|m| m.nrows() != k || m.ncols() != k) {
        return Err(Error::ShapeMismatch(format!("all pencil coefficients must be {k}×{k}")));
    }
    let d = mats.len() - 1;
    let fam = GroupFamily::Orthogonal;
    let n0 = 2;
    let dd = n0 * (n0 + 1) / 2;
    let sm = symmat_seq(fam);
    let v_copies: Vec<&_> = std::iter::repeat(&sm).take(d).collect();
    let seq_v = direct_sum(&v_copies);
    let seq_w = fixed_seq(0, fam);
    let k2 = k * (k + 1) / 2;
    let seq_u = crate::seq::ConsistentSequence::new(
        crate::seq::SeqExpr::Tensor(
            Box::new(crate::seq::SeqExpr::Fixed(k2)),
            Box::new(crate::seq::SeqExpr::SymMat),
        ),
        fam,
    );
    let mut a = Vec::new();
    for aa in 0..k {
        for bb in aa..k {
            let kappa = tri(k, aa, bb);
            for (i, l) in mats.iter().skip(1).enumerate() {
                let coef = l[(aa, bb)];
                if coef != 0.0 {
                    for mu in 0..dd {
                        a.push((kappa * dd + mu, i * dd + mu, coef));
                    }
                }
            }
        }
    }
    let mut u = vec![0.0; k2 * dd];
    for aa in 0..k {
        for bb in aa..k {
            let coef = mats[0][(aa, bb)];
            if coef != 0.0 {
                let kappa = tri(k, aa, bb);
                for j in 0..n0 {
                    u[kappa * dd + tri(n0, j, j)] = coef;
                }
            }
        }
    }
    FreeDescription::new(
        seq_v,
        seq_w,
        seq_u,
        ConeSpec::parse(&format!("psdkron({k};n)"))?,
        SpMat::from_triplets(k2 * dd, d * dd, a),
        SpMat::zeros(k2 * dd, 0),
        u,
        n0,
    )
}

/// Looks up a parameter-free fixture by name (for the command-line tool).
/// Parameterized families use small representative defaults:
/// `permutahedron` is `Perm(3, 1)` and `schur_horn` is `SH(3, 1)`.
pub fn by_name(name: &str) -> Result<FreeDescription> {
    match name {
        "simplex" => simplex(),
        "l1_ball" => l1_ball(),
        "l2_ball" => l2_ball(),
        "cube" => cube(),
        "cube_bad" => cube_bad(),
        "elliptope" => elliptope(),
        "inverse_stability" => inverse_stability(),
        "spectraplex" => spectraplex(),
        "permutahedron" => permutahedron(&[3.0, 1.0], &[1, 1]),
        "schur_horn" => schur_horn(&[3.0, 1.0], &[1, 1]),
        "free_spectrahedron" => {
            let l0 = DMatrix::identity(2, 2);
            let l1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
            let l2 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
            free_spectrahedron(&[l0, l1, l2])
        }
        other => Err(Error::Parse(format!(
            "unknown fixture '{other}' (expected simplex, l1_ball, l2_ball, cube, cube_bad, \
             elliptope, inverse_stability, spectraplex, permutahedron, schur_horn, or \
             free_spectrahedron)"
        ))),
    }
}
