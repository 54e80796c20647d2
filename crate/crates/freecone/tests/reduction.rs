//! Tests for the symmetry-reduction module: block diagonalization of
//! commutants, reduced PSD cones and programs, orbit bases, reduced
//! relative-entropy cones, and reduced SAGE feasibility.

use freecone::groups::GroupFamily;
use freecone::reduction::{
    block_diagonalize, invariant_projection_sym, orbit_basis, random_invariant_sym,
    reduce_program, reduce_psd_cone, reduce_relative_entropy, reduce_sage, relative_entropy,
    sage_feasible_full, InvariantSdp, SageInstance,
};
use freecone::seq::{fixed_seq, vec_seq, ConsistentSequence, SeqExpr};
use freecone::solver::{ConeInstance, ConicProgram};
use freecone::sparse::SpMat;
use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn symleq1(fam: GroupFamily) -> ConsistentSequence {
    ConsistentSequence::new(SeqExpr::SymLeq(1, Box::new(vec_seq(fam).expr)), fam)
}

fn sorted_blocks(blocks: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut b = blocks.to_vec();
    b.sort();
    b
}

// ---------------------------------------------------------------------------
// Block diagonalization
// ---------------------------------------------------------------------------

#[test]
fn coordinate_space_splits_into_trivial_and_standard() {
    let bs = block_diagonalize(&vec_seq(GroupFamily::Sym), 5).unwrap();
    assert_eq!(sorted_blocks(&bs.blocks), vec![(1, 1), (1, 4)]);
    assert_eq!(bs.dim(), 5);
}

#[test]
fn fixed_space_under_trivial_group_is_one_block_of_scalars() {
    let bs = block_diagonalize(&fixed_seq(3, GroupFamily::Trivial), 4).unwrap();
    assert_eq!(bs.blocks, vec![(3, 1)]);
}

#[test]
fn degree_one_polynomials_split_with_a_repeated_trivial_factor() {
    let seq = symleq1(GroupFamily::Sym);
    let bs = block_diagonalize(&seq, 4).unwrap();
    assert_eq!(sorted_blocks(&bs.blocks), vec![(1, 3), (2, 1)]);
    // The commutant dimension must equal the sum of squared multiplicities.
    let comm = freecone::equivariant::equivariant_basis(&seq, &seq, 4).unwrap();
    assert_eq!(comm.len(), bs.commutant_dim());
    assert_eq!(bs.commutant_dim(), 5);
}

#[test]
fn change_of_basis_is_orthogonal_and_reproduces_the_pattern() {
    let seq = vec_seq(GroupFamily::SignedSym);
    let bs = block_diagonalize(&seq, 4).unwrap();
    let q = &bs.q;
    let gram = q.transpose() * q;
    assert!((gram - DMatrix::<f64>::identity(4, 4)).norm() < 1e-10);
    // Round trip through assemble/disassemble.
    let mut rng = StdRng::seed_from_u64(3);
    let xs: Vec<DMatrix<f64>> = bs
        .blocks
        .iter()
        .map(|&(m, _)| DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let full = bs.assemble(&xs).unwrap();
    let (back, residual) = bs.disassemble(&full).unwrap();
    assert!(residual < 1e-10);
    for (x, y) in xs.iter().zip(&back) {
        assert!((x - y).norm() < 1e-10);
    }
}

// ---------------------------------------------------------------------------
// Reduced PSD cones
// ---------------------------------------------------------------------------

#[test]
fn invariant_matrices_on_coordinate_space_reduce_to_two_scalars() {
    // aI + b11ᵀ at n=5 is PSD iff a ≥ 0 and a + 5b ≥ 0; the reduction must
    // produce two 1×1 blocks carrying exactly those two numbers.
    let red = reduce_psd_cone(&vec_seq(GroupFamily::Sym), 5).unwrap();
    let mut sides = red.block_sides();
    sides.sort();
    assert_eq!(sides, vec![1, 1]);
    for (a, b) in [(1.0, 0.5), (2.0, -0.3), (0.1, -1.0), (3.0, 1.0)] {
        let full =
            DMatrix::<f64>::identity(5, 5) * a + DMatrix::<f64>::from_element(5, 5, b);
        let blocks = red.to_blocks(&full).unwrap();
        let mut vals: Vec<f64> = blocks.iter().map(|x| x[(0, 0)]).collect();
        vals.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let mut want = [a, a + 5.0 * b];
        want.sort_by(|p, q| p.partial_cmp(q).unwrap());
        assert!((vals[0] - want[0]).abs() < 1e-8, "{vals:?} vs {want:?}");
        assert!((vals[1] - want[1]).abs() < 1e-8, "{vals:?} vs {want:?}");
    }
}

#[test]
fn trivial_group_reduction_keeps_the_full_psd_cone() {
    let red = reduce_psd_cone(&fixed_seq(4, GroupFamily::Trivial), 2).unwrap();
    assert_eq!(red.block_sides(), vec![4]);
    assert_eq!(red.cones(), vec![ConeInstance::Psd { side: 4 }]);
    // The map is an orthogonal conjugation: it preserves eigenvalues.
    let mut rng = StdRng::seed_from_u64(5);
    let raw = DMatrix::<f64>::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
    let sym = (&raw + raw.transpose()) * 0.5;
    let full = red.to_full(&[sym.clone()]).unwrap();
    let mut ev1 = nalgebra::SymmetricEigen::new(sym).eigenvalues.as_slice().to_vec();
    let mut ev2 = nalgebra::SymmetricEigen::new(full).eigenvalues.as_slice().to_vec();
    ev1.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev2.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (a, b) in ev1.iter().zip(&ev2) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn moment_style_block_sizes_are_constant_across_levels() {
    let mut sides_per_level = Vec::new();
    for n in [2usize, 3, 4] {
        let red = reduce_psd_cone(&symleq1(GroupFamily::Sym), n).unwrap();
        let mut sides = red.block_sides();
        sides.sort();
        sides_per_level.push(sides);
    }
    assert_eq!(sides_per_level[0], sides_per_level[1]);
    assert_eq!(sides_per_level[1], sides_per_level[2]);
}

#[test]
fn two_sided_containment_under_sampling() {
    // Random points of the reduced cone map to invariant PSD matrices, and
    // random invariant PSD matrices pull back into the reduced cone.
    for seq in [vec_seq(GroupFamily::Sym), vec_seq(GroupFamily::SignedSym), symleq1(GroupFamily::Sym)]
    {
        let n = 5;
        let red = reduce_psd_cone(&seq, n).unwrap();
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..30 {
            // Forward: PSD blocks assemble to a PSD invariant matrix.
            let xs: Vec<DMatrix<f64>> = red
                .block_sides()
                .iter()
                .map(|&m| {
                    let g = DMatrix::<f64>::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
                    &g * g.transpose()
                })
                .collect();
            let full = red.to_full(&xs).unwrap();
            let eig = nalgebra::SymmetricEigen::new((&full + full.transpose()) * 0.5);
            assert!(eig.eigenvalues.min() >= -1e-8, "forward image not PSD");
            // Backward: an invariant PSD matrix has PSD blocks.
            let dim = full.nrows();
            let raw = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
            let inv = invariant_projection_sym(&seq, n, &((&raw + raw.transpose()) * 0.5)).unwrap();
            let eig = nalgebra::SymmetricEigen::new(inv.clone());
            let shift = (-eig.eigenvalues.min()).max(0.0) + 1e-6;
            let psd = inv + DMatrix::<f64>::identity(dim, dim) * shift;
            let blocks = red.to_blocks(&psd).unwrap();
            for x in &blocks {
                let e = nalgebra::SymmetricEigen::new((x + x.transpose()) * 0.5);
                assert!(e.eigenvalues.min() >= -1e-8, "pullback block not PSD");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Reduced invariant programs
// ---------------------------------------------------------------------------

#[test]
fn max_cut_relaxation_value_survives_the_reduction() {
    let n = 6;
    let objective = DMatrix::<f64>::from_element(n, n, 1.0) - DMatrix::<f64>::identity(n, n);
    let sdp = InvariantSdp {
        seq: vec_seq(GroupFamily::Sym),
        n,
        maximize: true,
        objective,
        constraints: vec![(DMatrix::<f64>::identity(n, n), n as f64)],
    };
    let full = sdp.solve_full().unwrap();
    let reduced = reduce_program(&sdp).unwrap();
    let value = reduced.solve().unwrap();
    assert!((full - 30.0).abs() < 1e-5, "full value {full}");
    assert!((value - 30.0).abs() < 1e-5, "reduced value {value}");
    assert!((full - value).abs() < 1e-6);
}

#[test]
fn random_invariant_programs_agree_with_their_reductions() {
    for (seed, seq, n) in [
        (1u64, vec_seq(GroupFamily::Sym), 5),
        (2, vec_seq(GroupFamily::SignedSym), 4),
        (3, symleq1(GroupFamily::Sym), 4),
        (4, symleq1(GroupFamily::Sym), 5),
    ] {
        let dim = seq.instance(n).unwrap().dim;
        let objective = random_invariant_sym(&seq, n, seed).unwrap();
        let sdp = InvariantSdp {
            seq: seq.clone(),
            n,
            maximize: true,
            objective,
            constraints: vec![(DMatrix::<f64>::identity(dim, dim), 1.0)],
        };
        let full = sdp.solve_full().unwrap();
        let value = reduce_program(&sdp).unwrap().solve().unwrap();
        assert!(
            (full - value).abs() < 1e-6,
            "seed {seed}: full {full} vs reduced {value}"
        );
    }
}

#[test]
fn zero_objective_reduces_to_zero() {
    let n = 4;
    let sdp = InvariantSdp {
        seq: vec_seq(GroupFamily::Sym),
        n,
        maximize: true,
        objective: DMatrix::<f64>::zeros(n, n),
        constraints: vec![(DMatrix::<f64>::identity(n, n), 1.0)],
    };
    let full = sdp.solve_full().unwrap();
    let value = reduce_program(&sdp).unwrap().solve().unwrap();
    assert!(full.abs() < 1e-8);
    assert!(value.abs() < 1e-8);
}

#[test]
fn non_invariant_data_is_rejected() {
    let n = 4;
    let mut objective = DMatrix::<f64>::zeros(n, n);
    objective[(0, 0)] = 1.0; // singles out one coordinate: not invariant
    let sdp = InvariantSdp {
        seq: vec_seq(GroupFamily::Sym),
        n,
        maximize: true,
        objective,
        constraints: vec![(DMatrix::<f64>::identity(n, n), 1.0)],
    };
    assert!(matches!(
        reduce_program(&sdp),
        Err(freecone::error::Error::NonInvariantData(_))
    ));
}

// ---------------------------------------------------------------------------
// Orbit bases
// ---------------------------------------------------------------------------

fn unit(n: usize, i: usize, s: f64) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = s;
    v
}

#[test]
fn standard_basis_is_a_single_orbit_under_permutations() {
    let pts: Vec<Vec<f64>> = (0..4).map(|i| unit(4, i, 1.0)).collect();
    let ob = orbit_basis(&pts, GroupFamily::Sym, 4).unwrap();
    assert_eq!(ob.orbit_count(), 1);
    assert_eq!(ob.sizes, vec![4]);
    assert_eq!(ob.closure_added, 0);
}

#[test]
fn signed_units_and_pair_sums_fall_into_three_orbits() {
    let n = 3;
    let mut pts = Vec::new();
    for i in 0..n {
        pts.push(unit(n, i, 1.0));
        pts.push(unit(n, i, -1.0));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v[j] = 1.0;
            pts.push(v);
        }
    }
    let ob = orbit_basis(&pts, GroupFamily::Sym, n).unwrap();
    assert_eq!(ob.orbit_count(), 3);
    let mut sizes = ob.sizes.clone();
    sizes.sort();
    assert_eq!(sizes, vec![3, 3, 3]);
}

#[test]
fn sign_flips_identify_plus_and_minus_units() {
    let n = 3;
    let mut pts = Vec::new();
    for i in 0..n {
        pts.push(unit(n, i, 1.0));
        pts.push(unit(n, i, -1.0));
    }
    let ob = orbit_basis(&pts, GroupFamily::SignedSym, n).unwrap();
    assert_eq!(ob.orbit_count(), 1);
    assert_eq!(ob.sizes, vec![6]);
}

#[test]
fn representatives_are_graded_lex_minimal_and_indicators_partition() {
    let n = 3;
    let mut pts = Vec::new();
    for i in 0..n {
        pts.push(unit(n, i, 1.0));
        pts.push(unit(n, i, -1.0));
    }
    let ob = orbit_basis(&pts, GroupFamily::Sym, n).unwrap();
    assert_eq!(ob.orbit_count(), 2);
    // The negative-unit orbit has the graded-lex smaller representative.
    let rep0 = &ob.points[ob.reps[0]];
    assert!(rep0.iter().sum::<f64>() < 0.0);
    // Indicators are 0/1, orthogonal, and their counts sum to the set size.
    let total: usize = ob.sizes.iter().sum();
    assert_eq!(total, ob.points.len());
    let ind0 = ob.indicator(0);
    let ind1 = ob.indicator(1);
    assert!(ind0.iter().zip(&ind1).map(|(a, b)| a * b).sum::<f64>() == 0.0);
    assert!(ind0.iter().all(|v| *v == 0.0 || *v == 1.0));
}

// ---------------------------------------------------------------------------
// Reduced relative-entropy cones
// ---------------------------------------------------------------------------

#[test]
fn uniform_distributions_have_zero_reduced_entropy() {
    let n = 4;
    let pts: Vec<Vec<f64>> = (0..n).map(|i| unit(n, i, 1.0)).collect();
    let red = reduce_relative_entropy(&pts, GroupFamily::Sym, n).unwrap();
    let m = red.orbits.orbit_count();
    let hat = vec![1.0 / pts.len() as f64; m];
    assert!(red.reduced_value(&hat, &hat).abs() < 1e-12);
}

#[test]
fn single_orbit_entropy_expands_with_the_orbit_size() {
    let n = 5;
    let pts: Vec<Vec<f64>> = (0..n).map(|i| unit(n, i, 1.0)).collect();
    let red = reduce_relative_entropy(&pts, GroupFamily::Sym, n).unwrap();
    assert_eq!(red.orbits.orbit_count(), 1);
    let value = red.reduced_value(&[1.0], &[2.0]);
    let want = -(n as f64) * (2.0f64).ln();
    assert!((value - want).abs() < 1e-12, "{value} vs {want}");
    // And it matches the full relative entropy of the expanded vectors.
    let nu = red.orbits.expand(&[1.0]).unwrap();
    let c = red.orbits.expand(&[2.0]).unwrap();
    assert!((relative_entropy(&nu, &c) - value).abs() < 1e-12);
}

#[test]
fn invariant_entropy_program_agrees_with_its_reduction() {
    // min t s.t. Σν = 1, ν ≥ 0 invariant, c fixed invariant, D(ν,c) ≤ t,
    // solved both at full size and over orbit variables.
    let n = 5;
    let mut pts: Vec<Vec<f64>> = (0..n).map(|i| unit(n, i, 1.0)).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v[j] = 1.0;
            pts.push(v);
        }
    }
    let red = reduce_relative_entropy(&pts, GroupFamily::Sym, n).unwrap();
    let m = red.orbits.orbit_count();
    assert_eq!(m, 2);
    let c_hat = vec![0.3, 0.05];
    let c_full = red.orbits.expand(&c_hat).unwrap();
    let na = pts.len();

    // Full program: variables (ν, t).
    let mut trips = Vec::new();
    let mut b = Vec::new();
    for k in 0..na {
        trips.push((k, k, -1.0));
        b.push(0.0);
    }
    for (k, cv) in c_full.iter().enumerate() {
        b.push(*cv);
        let _ = k;
    }
    trips.push((b.len(), na, -1.0));
    b.push(0.0);
    let re_rows = b.len();
    let _ = re_rows;
    let row = b.len();
    for k in 0..na {
        trips.push((row, k, -1.0));
    }
    b.push(-1.0);
    let full_prog = ConicProgram {
        num_vars: na + 1,
        objective: {
            let mut q = vec![0.0; na + 1];
            q[na] = 1.0;
            q
        },
        a: SpMat::from_triplets(b.len(), na + 1, trips),
        b,
        cones: vec![ConeInstance::RelEntropy { m: na }, ConeInstance::Zero(1)],
    };
    let full_value = full_prog.solve().unwrap().objective;

    // Reduced program: variables (ν̂, t); weights fold into the cone rows.
    let sizes = red.orbit_weights();
    let mut trips = Vec::new();
    let mut b = Vec::new();
    for j in 0..m {
        trips.push((j, j, -sizes[j]));
        b.push(0.0);
    }
    for j in 0..m {
        b.push(sizes[j] * c_hat[j]);
        let _ = j;
    }
    trips.push((b.len(), m, -1.0));
    b.push(0.0);
    let row = b.len();
    for j in 0..m {
        trips.push((row, j, -sizes[j]));
    }
    b.push(-1.0);
    let red_prog = ConicProgram {
        num_vars: m + 1,
        objective: {
            let mut q = vec![0.0; m + 1];
            q[m] = 1.0;
            q
        },
        a: SpMat::from_triplets(b.len(), m + 1, trips),
        b,
        cones: vec![ConeInstance::RelEntropy { m }, ConeInstance::Zero(1)],
    };
    let red_value = red_prog.solve().unwrap().objective;
    assert!(
        (full_value - red_value).abs() < 1e-6,
        "full {full_value} vs reduced {red_value}"
    );
}

// ---------------------------------------------------------------------------
// SAGE reductions
// ---------------------------------------------------------------------------

fn orbit_closure(seed_pts: &[Vec<f64>], fam: GroupFamily, n: usize) -> Vec<Vec<f64>> {
    orbit_basis(seed_pts, fam, n).unwrap().points
}

#[test]
fn negative_coefficient_without_negative_support_is_infeasible_both_ways() {
    let n = 3;
    let a = orbit_closure(&[unit(n, 0, 2.0)], GroupFamily::Sym, n);
    let c = vec![-1.0; a.len()];
    let inst = SageInstance {
        family: GroupFamily::Sym,
        n,
        a,
        b: vec![],
        c,
        t: vec![],
    };
    assert!(!sage_feasible_full(&inst).unwrap());
    assert!(!reduce_sage(&inst).unwrap().feasible().unwrap());
}

#[test]
fn empty_negative_support_reduces_to_orbit_nonnegativity() {
    let n = 3;
    let a = orbit_closure(&[unit(n, 0, 2.0)], GroupFamily::Sym, n);
    let c = vec![0.5; a.len()];
    let inst = SageInstance {
        family: GroupFamily::Sym,
        n,
        a,
        b: vec![],
        c,
        t: vec![],
    };
    assert!(sage_feasible_full(&inst).unwrap());
    assert!(reduce_sage(&inst).unwrap().feasible().unwrap());
}

#[test]
fn am_gm_style_instances_agree_between_full_and_reduced() {
    // Instances f = Σ_i e^{2x_i} + t·e^{(2/n)Σx_i} for a sweep of t values:
    // feasibility must agree between the full and the reduced programs.
    for n in [3usize, 4] {
        let a = orbit_closure(&[unit(n, 0, 2.0)], GroupFamily::Sym, n);
        let beta = vec![2.0 / n as f64; n];
        for t in [-4.0, -2.0, -1.0, -0.5, 0.5] {
            let inst = SageInstance {
                family: GroupFamily::Sym,
                n,
                a: a.clone(),
                b: vec![beta.clone()],
                c: vec![1.0; a.len()],
                t: vec![t],
            };
            let full = sage_feasible_full(&inst).unwrap();
            let reduced = reduce_sage(&inst).unwrap().feasible().unwrap();
            assert_eq!(full, reduced, "n={n}, t={t}");
        }
    }
}

#[test]
fn random_symmetric_instances_agree_between_full_and_reduced() {
    let mut rng = StdRng::seed_from_u64(99);
    let mut count = 0;
    for case in 0..20 {
        let n = if case % 2 == 0 { 3 } else { 4 };
        let fam = if case % 3 == 0 { GroupFamily::SignedSym } else { GroupFamily::Sym };
        // Support: orbit of a random small integer exponent, plus the origin.
        let mut seedpt = vec![0.0; n];
        seedpt[0] = rng.gen_range(1..=2) as f64 * 2.0;
        if case % 4 == 0 && n > 1 {
            seedpt[1] = 2.0;
        }
        let mut a = orbit_closure(&[seedpt], fam, n);
        a.push(vec![0.0; n]);
        // Candidate negative support: the orbit of a mixed exponent.
        let mut bpt = vec![0.0; n];
        bpt[0] = 1.0;
        bpt[1] = 1.0;
        let b = orbit_closure(&[bpt], fam, n);
        let c_scale: f64 = rng.gen_range(0.2..2.0);
        let t_val: f64 = rng.gen_range(-3.0..1.0);
        let inst = SageInstance {
            family: fam,
            n,
            c: vec![c_scale; a.len()],
            t: vec![t_val; b.len()],
            a,
            b,
        };
        let full = sage_feasible_full(&inst).unwrap();
        let reduced = reduce_sage(&inst).unwrap().feasible().unwrap();
        assert_eq!(full, reduced, "case {case}: full {full} vs reduced {reduced}");
        count += 1;
    }
    assert_eq!(count, 20);
}

#[test]
fn non_invariant_support_is_rejected() {
    let n = 3;
    // A support missing part of an orbit.
    let a = vec![unit(n, 0, 2.0), unit(n, 1, 2.0)]; // e3-slot missing
    let inst = SageInstance {
        family: GroupFamily::Sym,
        n,
        c: vec![1.0; 2],
        t: vec![],
        a,
        b: vec![],
    };
    assert!(matches!(
        reduce_sage(&inst),
        Err(freecone::error::Error::NonInvariantSupport(_))
    ));
}
