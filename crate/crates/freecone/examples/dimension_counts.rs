//! Prints the dimension tables for the three reference description
//! configurations: spaces of invariant vectors, equivariant maps, and maps
//! extending to morphisms (optionally with morphism adjoints).

use freecone::equivariant::{equivariant_basis, invariant_basis, morphism_basis};
use freecone::seq::ConsistentSequence;

fn main() {
    let t0 = std::time::Instant::now();

    // (a) V = R^n over Sym, W = U = Sym²(Sym^{≤2} R^n), at n = 8.
    let v = ConsistentSequence::parse("vec(sym)").unwrap();
    let u = ConsistentSequence::parse("moment(2, vec(sym))").unwrap();
    println!("config (a): V=vec(sym), W=U=moment(2, vec(sym)), n=8");
    println!("  dim L(V,U)^G   = {}", equivariant_basis(&v, &u, 8).unwrap().len());
    println!("  [{:?}]", t0.elapsed());
    println!("  dim L(W,U)^G   = {}", equivariant_basis(&u, &u, 8).unwrap().len());
    println!("  [{:?}]", t0.elapsed());
    println!("  dim U^G        = {}", invariant_basis(&u, 8).unwrap().len());
    println!("  A morphisms    = {}", morphism_basis(&v, &u, 8, false).unwrap().len());
    println!("  [{:?}]", t0.elapsed());
    println!("  A w/ adjoint   = {}", morphism_basis(&v, &u, 8, true).unwrap().len());
    println!("  B w/ adjoint   = {}", morphism_basis(&u, &u, 8, true).unwrap().len());
    println!("  [{:?}]", t0.elapsed());

    // (b) V = S^n over Sym, same W, U.
    let s = ConsistentSequence::parse("symmat(sym)").unwrap();
    println!("config (b): V=symmat(sym)");
    println!("  dim L(V,U)^G   = {}", equivariant_basis(&s, &u, 8).unwrap().len());
    println!("  A morphisms    = {}", morphism_basis(&s, &u, 8, false).unwrap().len());
    println!("  A w/ adjoint   = {}", morphism_basis(&s, &u, 8, true).unwrap().len());
    println!("  [{:?}]", t0.elapsed());

    // (c) V = R^n over SignedSym, W = U = Sym²(Sym^{≤1} R^{2n+1}), at n = 4.
    let v = ConsistentSequence::parse("vec(signed)").unwrap();
    let u = ConsistentSequence::parse("moment(1, liftedl1(signed))").unwrap();
    println!("config (c): V=vec(signed), W=U=moment(1, liftedl1(signed)), n=4");
    println!("  dim L(V,U)^G   = {}", equivariant_basis(&v, &u, 4).unwrap().len());
    println!("  dim L(W,U)^G   = {}", equivariant_basis(&u, &u, 4).unwrap().len());
    println!("  dim U^G        = {}", invariant_basis(&u, 4).unwrap().len());
    println!("  A morphisms    = {}", morphism_basis(&v, &u, 4, false).unwrap().len());
    println!("  B w/ adjoint   = {}", morphism_basis(&u, &u, 4, true).unwrap().len());
    println!("total: {:?}", t0.elapsed());
}
