//! Scratch diagnostics for the ℓπ fit (not part of the test suite).

use freecone::groups::GroupFamily;
use freecone::regression::{evaluate_fit, identity_direction, DataPoint, FitOptions, RegressionProblem};
use freecone::seq::{liftedl1_seq, moment_seq, vec_seq};
use freecone::solver::ConeSpec;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::time::Instant;

fn lpi_norm(x: &[f64]) -> f64 {
    let pi = std::f64::consts::PI;
    x.iter().map(|v| v.abs().powf(pi)).sum::<f64>().powf(1.0 / pi)
}

fn main() {
    let restarts: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let fam = GroupFamily::SignedSym;
    let seq_v = vec_seq(fam);
    let seq_w = moment_seq(1, &liftedl1_seq(fam));
    let seq_u = seq_w.clone();
    let cone = ConeSpec::parse("psd(2n+2)").unwrap();
    let u0 = identity_direction(&cone, 2).unwrap();

    let mut rng = StdRng::seed_from_u64(42);
    let mut data = Vec::new();
    for i in 0..50 {
        let level = if i % 5 == 0 { 1 } else { 2 };
        let x: Vec<f64> = (0..level).map(|_| rng.gen_range(-1.0..1.0f64)).collect();
        let t = lpi_norm(&x);
        if t < 0.05 {
            continue;
        }
        data.push(DataPoint { level, x, target: t });
    }
    println!("{} data points", data.len());

    let max_alt: usize =
        std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(40);
    let options =
        FitOptions { restarts, seed: 7, max_alternations: max_alt, ..FitOptions::default() };
    let prob = RegressionProblem {
        seq_v: seq_v.clone(),
        seq_w,
        seq_u,
        cone,
        n0: 2,
        u0,
        data: data.clone(),
        options,
    };
    let t0 = Instant::now();
    let res = prob.fit().unwrap();
    println!("fit took {:.1?} for {restarts} restarts", t0.elapsed());
    println!("winner {} lambda {} obj {}", res.winner, res.lambda, res.trace.last().unwrap());
    for (i, tr) in res.all_traces.iter().enumerate() {
        println!("restart {i}: rounds {} final {:.4e}", tr.len(), tr.last().unwrap());
    }
    // Training error.
    let table = evaluate_fit(&res.description, res.lambda, &data).unwrap();
    for (n, e) in &table {
        println!("train level {n}: mean rel err {e:.4}");
    }
    // Test error at n=4.
    let mut test = Vec::new();
    for n in [4usize] {
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0f64)).collect();
            let t = lpi_norm(&x);
            if t < 0.05 {
                continue;
            }
            test.push(DataPoint { level: n, x, target: t });
        }
    }
    let t1 = Instant::now();
    let table = evaluate_fit(&res.description, res.lambda, &test).unwrap();
    println!("eval n=4 took {:.1?}", t1.elapsed());
    for (n, e) in &table {
        println!("test level {n}: mean rel err {e:.4}");
    }
}
