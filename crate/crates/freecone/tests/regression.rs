//! Oracle tests for description fitting: data normalization, the cube
//! parametric families, recovery of the cube from two-dimensional boundary
//! data, alternation diagnostics, and fit evaluation.

use freecone::descriptions::FreeDescription;
use freecone::equivariant::{invariant_basis, morphism_basis};
use freecone::error::Error;
use freecone::fixtures;
use freecone::groups::GroupFamily;
use freecone::regression::{
    dataset_to_text, evaluate_fit, identity_direction, parse_dataset, DataPoint, FitOptions,
    FitResult, RegressionProblem,
};
use freecone::seq::{direct_sum, fixed_seq, liftedl1_seq, vec_seq, vecp_seq};
use freecone::solver::ConeSpec;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn pt(level: usize, x: &[f64], target: f64) -> DataPoint {
    DataPoint { level, x: x.to_vec(), target }
}

/// The signed-permutation family of cube-like descriptions: nonnegative rows
/// `(x, −x, scalar)` plus a zero block coupling the witness to the all-ones
/// vector. With morphism-constrained bases and a free invariant `u`, the
/// coefficient space has dimension 1 + 3 + 3 = 7; with plain equivariant
/// bases it has dimension 1 + 8 + 3 = 12.
fn cube_problem(data: Vec<DataPoint>, options: FitOptions) -> RegressionProblem {
    let fam = GroupFamily::SignedSym;
    let seq_v = vec_seq(fam);
    let seq_w = direct_sum(&[&vecp_seq(fam), &fixed_seq(1, fam)]);
    let seq_u = direct_sum(&[&liftedl1_seq(fam), &vecp_seq(fam)]);
    let cone = ConeSpec::parse("nonneg(2n+1) zero(n)").unwrap();
    let u0 = identity_direction(&cone, 2).unwrap();
    RegressionProblem { seq_v, seq_w, seq_u, cone, n0: 2, u0, data, options }
}

fn square_boundary_data() -> Vec<DataPoint> {
    let pts: [[f64; 2]; 12] = [
        [1.0, 1.0],
        [1.0, -1.0],
        [-1.0, 1.0],
        [-1.0, -1.0],
        [1.0, 0.0],
        [-1.0, 0.0],
        [0.0, 1.0],
        [0.0, -1.0],
        [1.0, 0.5],
        [-1.0, -0.5],
        [0.5, 1.0],
        [-0.5, -1.0],
    ];
    pts.iter().map(|x| pt(2, x, 1.0)).collect()
}

fn fit_cube(restarts: usize, calibrate: bool, seed: u64) -> FitResult {
    let options = FitOptions {
        restarts,
        fit_u: true,
        calibrate,
        seed,
        ..FitOptions::default()
    };
    cube_problem(square_boundary_data(), options).fit().unwrap()
}

// ---------------------------------------------------------------------------
// Data normalization and the dataset format
// ---------------------------------------------------------------------------

#[test]
fn normalize_scales_targets_to_one() {
    let prob = cube_problem(
        vec![pt(2, &[2.0, 0.0], 2.0), pt(2, &[0.3, -0.1], 1.0), pt(1, &[1.5], 3.0)],
        FitOptions::default(),
    );
    let pts = prob.normalize().unwrap();
    assert_eq!(pts[0], vec![1.0, 0.0]);
    assert_eq!(pts[1], vec![0.3, -0.1]);
    // Lower-level data embeds by zero padding, then scales.
    assert_eq!(pts[2], vec![0.5, 0.0]);
}

#[test]
fn normalize_rejects_nonpositive_targets() {
    let prob = cube_problem(vec![pt(2, &[1.0, 0.0], 0.0)], FitOptions::default());
    assert!(matches!(prob.normalize(), Err(Error::InvalidTarget(_))));
    let prob = cube_problem(vec![pt(2, &[1.0, 0.0], -2.0)], FitOptions::default());
    assert!(matches!(prob.normalize(), Err(Error::InvalidTarget(_))));
}

#[test]
fn dataset_round_trips_through_text() {
    let pts = vec![pt(2, &[1.0, -0.5], 1.0), pt(3, &[0.25, 0.0, 2.0], 0.75)];
    let text = dataset_to_text(&pts);
    assert_eq!(parse_dataset(&text).unwrap(), pts);
    assert!(parse_dataset("2 1.0\n\n# comment\n3 1 2 3 4\n").is_ok());
    assert!(parse_dataset("x 1 2").is_err());
}

#[test]
fn identity_direction_fills_cone_blocks() {
    let cone = ConeSpec::parse("psd(n) zero(1)").unwrap();
    let u = identity_direction(&cone, 3).unwrap();
    assert_eq!(u, vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
}

// ---------------------------------------------------------------------------
// The cube coefficient families
// ---------------------------------------------------------------------------

#[test]
fn cube_families_have_seven_and_twelve_parameters() {
    let prob = cube_problem(Vec::new(), FitOptions::default());
    let a_mor = morphism_basis(&prob.seq_v, &prob.seq_u, 2, false).unwrap();
    let b_mor = morphism_basis(&prob.seq_w, &prob.seq_u, 2, true).unwrap();
    let u_inv = invariant_basis(&prob.seq_u, 2).unwrap();
    assert_eq!((a_mor.len(), b_mor.len(), u_inv.len()), (1, 3, 3));
    let a_eq =
        freecone::equivariant::equivariant_basis(&prob.seq_v, &prob.seq_u, 2).unwrap();
    let b_eq =
        freecone::equivariant::equivariant_basis(&prob.seq_w, &prob.seq_u, 2).unwrap();
    assert_eq!((a_eq.len(), b_eq.len()), (1, 8));
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

#[test]
fn single_point_is_interpolated_exactly() {
    let options = FitOptions { restarts: 8, fit_u: true, seed: 1, ..FitOptions::default() };
    let res = cube_problem(vec![pt(2, &[1.0, 0.0], 1.0)], options).fit().unwrap();
    let obj = *res.trace.last().unwrap();
    assert!(obj <= 1e-5, "best objective {obj}");
}

#[test]
fn cube_recovery_from_boundary_data() {
    let res = fit_cube(12, true, 3);
    assert!(
        res.feasibility_residual <= 1e-6,
        "witness feasibility residual {}",
        res.feasibility_residual
    );
    assert!(res.lambda >= 1e-3);
    let mut rng = StdRng::seed_from_u64(5);
    for n in [2usize, 3] {
        for _ in 0..25 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let linf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if linf < 0.05 {
                continue;
            }
            let g = res.description.gauge(n, &x, 0.0).unwrap();
            assert!(
                (g - linf).abs() <= 1e-4 * linf.max(1.0),
                "n={n}: gauge {g} vs max-abs {linf} at {x:?}"
            );
        }
    }
}

#[test]
fn objective_trace_is_monotone_per_restart() {
    let res = fit_cube(6, false, 7);
    assert!(!res.all_traces.is_empty());
    for trace in &res.all_traces {
        for w in trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-8,
                "objective increased from {} to {} within a restart",
                w[0],
                w[1]
            );
        }
    }
}

#[test]
fn winner_satisfies_the_sandwich_property() {
    let res = fit_cube(6, false, 11);
    let desc = &res.description;
    for (p, eps) in square_boundary_data().iter().zip(&res.residuals) {
        let upper = desc.gauge(2, &p.x, res.lambda).unwrap();
        let lower = desc.gauge_dual(2, &p.x, res.lambda).unwrap();
        assert!(lower - eps <= 1.0 + 1e-6, "dual value {lower} with slack {eps}");
        assert!(1.0 <= upper + eps + 1e-6, "primal value {upper} with slack {eps}");
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

#[test]
fn exact_cube_description_evaluates_exactly() {
    let desc = fixtures::cube().unwrap();
    let mut rng = StdRng::seed_from_u64(2);
    let mut test = Vec::new();
    for n in [2usize, 5, 20] {
        for _ in 0..5 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let linf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if linf < 0.05 {
                continue;
            }
            test.push(DataPoint { level: n, x, target: linf });
        }
    }
    let table = evaluate_fit(&desc, 0.0, &test).unwrap();
    for (n, err) in table {
        assert!(err <= 1e-6, "level {n} mean error {err}");
    }
}

#[test]
fn evaluation_at_training_points_reproduces_residuals() {
    let res = fit_cube(6, false, 13);
    let table = evaluate_fit(&res.description, res.lambda, &square_boundary_data()).unwrap();
    assert_eq!(table.len(), 1);
    let mean_res: f64 = res.residuals.iter().sum::<f64>() / res.residuals.len() as f64;
    assert!(
        (table[0].1 - mean_res).abs() <= 1e-6,
        "reported error {} vs stored residual mean {mean_res}",
        table[0].1
    );
}

#[test]
fn shrinking_cube_misses_high_level_targets_by_its_scaling() {
    // At level 5 the shrinking-cube description carves out (3/9)·[−1,1]⁵, so
    // its gauge is 3·max-abs and the relative error against max-abs data on
    // the unit-cube boundary is exactly 2.
    let desc: FreeDescription = fixtures::cube_bad().unwrap();
    let test = vec![
        DataPoint { level: 5, x: vec![1.0, 0.0, 0.0, 0.0, 0.0], target: 1.0 },
        DataPoint { level: 5, x: vec![1.0, 0.5, -0.5, 0.25, 0.0], target: 1.0 },
    ];
    let table = evaluate_fit(&desc, 0.0, &test).unwrap();
    assert!((table[0].1 - 2.0).abs() <= 1e-3, "mean error {}", table[0].1);
}
