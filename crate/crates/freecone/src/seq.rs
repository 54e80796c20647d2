//! Consistent sequences of group representations.
//!
//! A [`ConsistentSequence`] is a symbolic constructor tree (base kinds plus
//! combinators) together with a group family. Instantiating it at a level `n`
//! yields the concrete space: its dimension, diagonal metric weights, basis
//! labels, and the actions of the family's generators; separate calls produce
//! the isometric embedding into the next level and its metric adjoint (the
//! orthogonal projection).
//!
//! The canonical basis is ordered graded-lexicographically for symmetric
//! powers (and by sorted index tuples for alternating powers), so all
//! zero-padding embeddings are sub-index inclusions and basis labels are
//! stable across levels.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::groups::GroupFamily;
use crate::sparse::{Action, SignedPerm, SpMat};

/// Constructor tree over base kinds and combinators.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SeqExpr {
    /// `R^n` with the family's standard action and zero-padding embeddings.
    Vec,
    /// `R^n` on which only the permutation part of the family acts (sign
    /// generators act trivially). Used for witness spaces of descriptions
    /// whose witnesses are sign-invariant.
    VecPermOnly,
    /// Symmetric matrices `S^n` with conjugation action and zero-padding.
    SymMat,
    /// `R^n ⊕ R^n ⊕ R` with the lift action of signed permutations used to
    /// describe the l1 ball: permutations act within each copy, a sign flip
    /// at coordinate `i` swaps coordinate `i` of the two copies, and the
    /// scalar is fixed.
    LiftedL1,
    /// `R^{2^n}` with embeddings `x ↦ x ⊗ 1_2` and inner product scaled by
    /// `2^{-n}`; the family acts on the `2^n` coordinates.
    DoublingVec,
    /// `S^{2^n}` with embeddings `X ↦ X ⊗ 1 1^T` and inner product scaled by
    /// `2^{-2n}` (step functions on the square).
    Graphon,
    /// `S^{2^n}` with embeddings `X ↦ X ⊗ I_2` and the normalized trace
    /// inner product `2^{-n} Tr(XY)` (spectra-preserving doubling, used for
    /// spectral orbitopes).
    SymMatDoubling,
    /// A fixed `k`-dimensional space with the trivial action at every level.
    Fixed(usize),
    DirectSum(std::vec::Vec<SeqExpr>),
    Tensor(Box<SeqExpr>, Box<SeqExpr>),
    /// `Sym^k` of the child, in monomial coordinates.
    SymPow(usize, Box<SeqExpr>),
    /// `Sym^{<=k}` of the child: direct sum of `Sym^0 .. Sym^k`.
    SymLeq(usize, Box<SeqExpr>),
    /// `Λ^k` of the child, on sorted index tuples.
    WedgePow(usize, Box<SeqExpr>),
    /// Moment space `Sym^2(Sym^{<=k} ·)`.
    Moment(usize, Box<SeqExpr>),
}

impl SeqExpr {
    /// Removes the sugar constructors (`SymMat`, `Graphon`, `Moment`),
    /// returning the equivalent core tree used for instantiation.
    fn desugar(&self) -> SeqExpr {
        match self {
            SeqExpr::SymMat => SeqExpr::SymPow(2, Box::new(SeqExpr::Vec)),
            SeqExpr::Graphon => SeqExpr::SymPow(2, Box::new(SeqExpr::DoublingVec)),
            SeqExpr::Moment(k, a) => {
                SeqExpr::SymPow(2, Box::new(SeqExpr::SymLeq(*k, Box::new(a.desugar()))))
            }
            SeqExpr::DirectSum(v) => SeqExpr::DirectSum(v.iter().map(|e| e.desugar()).collect()),
            SeqExpr::Tensor(a, b) => {
                SeqExpr::Tensor(Box::new(a.desugar()), Box::new(b.desugar()))
            }
            SeqExpr::SymPow(k, a) => SeqExpr::SymPow(*k, Box::new(a.desugar())),
            SeqExpr::SymLeq(k, a) => SeqExpr::SymLeq(*k, Box::new(a.desugar())),
            SeqExpr::WedgePow(k, a) => SeqExpr::WedgePow(*k, Box::new(a.desugar())),
            other => other.clone(),
        }
    }

    /// Number of letters the group acts on at level `n`, if the tree contains
    /// a base kind that pins it down.
    fn letters(&self, n: usize) -> Result<Option<usize>> {
        let merge = |a: Option<usize>, b: Option<usize>| -> Result<Option<usize>> {
            match (a, b) {
                (Some(x), Some(y)) if x != y => Err(Error::InvalidLevel(format!(
                    "incompatible base kinds acting on {x} vs {y} letters"
                ))),
                (Some(x), _) => Ok(Some(x)),
                (_, y) => Ok(y),
            }
        };
        match self {
            SeqExpr::Vec | SeqExpr::VecPermOnly | SeqExpr::SymMat | SeqExpr::LiftedL1 => {
                Ok(Some(n))
            }
            SeqExpr::DoublingVec | SeqExpr::Graphon | SeqExpr::SymMatDoubling => {
                if n > 30 {
                    return Err(Error::InvalidLevel(format!("2^{n} letters is too large")));
                }
                Ok(Some(1usize << n))
            }
            SeqExpr::Fixed(_) => Ok(None),
            SeqExpr::DirectSum(v) => {
                let mut acc = None;
                for e in v {
                    acc = merge(acc, e.letters(n)?)?;
                }
                Ok(acc)
            }
            SeqExpr::Tensor(a, b) => merge(a.letters(n)?, b.letters(n)?),
            SeqExpr::SymPow(_, a) | SeqExpr::SymLeq(_, a) | SeqExpr::WedgePow(_, a)
            | SeqExpr::Moment(_, a) => a.letters(n),
        }
    }

    /// Canonical text form, e.g. `moment(2, vec(sym))`.
    pub fn to_text(&self, fam: GroupFamily) -> String {
        let f = fam.name();
        match self {
            SeqExpr::Vec => format!("vec({f})"),
            SeqExpr::VecPermOnly => format!("vecp({f})"),
            SeqExpr::SymMat => format!("symmat({f})"),
            SeqExpr::LiftedL1 => format!("liftedl1({f})"),
            SeqExpr::DoublingVec => format!("doubling({f})"),
            SeqExpr::Graphon => format!("graphon({f})"),
            SeqExpr::SymMatDoubling => format!("symdoubling({f})"),
            SeqExpr::Fixed(k) => format!("fixed({k})"),
            SeqExpr::DirectSum(v) => {
                let parts: Vec<String> = v.iter().map(|e| e.to_text(fam)).collect();
                format!("sum({})", parts.join(", "))
            }
            SeqExpr::Tensor(a, b) => format!("tensor({}, {})", a.to_text(fam), b.to_text(fam)),
            SeqExpr::SymPow(k, a) => format!("sympow({k}, {})", a.to_text(fam)),
            SeqExpr::SymLeq(k, a) => format!("symleq({k}, {})", a.to_text(fam)),
            SeqExpr::WedgePow(k, a) => format!("wedge({k}, {})", a.to_text(fam)),
            SeqExpr::Moment(k, a) => format!("moment({k}, {})", a.to_text(fam)),
        }
    }
}

/// A consistent sequence: a constructor tree plus a group family.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConsistentSequence {
    pub expr: SeqExpr,
    pub family: GroupFamily,
}

/// A space of the sequence instantiated at one level.
#[derive(Debug, Clone)]
pub struct SpaceInstance {
    pub n: usize,
    pub dim: usize,
    /// Diagonal metric: `⟨x, y⟩ = Σ_i weights[i] x_i y_i`.
    pub weights: Vec<f64>,
    pub labels: Vec<String>,
    /// Action of each discrete generator of the family at this level.
    pub disc_actions: Vec<Action>,
    /// Action of each Lie-algebra basis element (empty for finite families).
    pub lie_actions: Vec<SpMat>,
}

impl SpaceInstance {
    /// Weighted inner product of two coordinate vectors.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        self.weights.iter().zip(x).zip(y).map(|((w, a), b)| w * a * b).sum()
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.inner(x, x).sqrt()
    }

    /// Whether every generator acts by a signed permutation of the basis.
    pub fn all_signed(&self) -> bool {
        self.lie_actions.is_empty()
            && self.disc_actions.iter().all(|a| matches!(a, Action::Signed(_)))
    }
}

type InstanceKey = (SeqExpr, GroupFamily, usize);

fn instance_cache() -> &'static Mutex<HashMap<InstanceKey, Arc<SpaceInstance>>> {
    static CACHE: OnceLock<Mutex<HashMap<InstanceKey, Arc<SpaceInstance>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn embed_cache() -> &'static Mutex<HashMap<InstanceKey, Arc<SpMat>>> {
    static CACHE: OnceLock<Mutex<HashMap<InstanceKey, Arc<SpMat>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl ConsistentSequence {
    pub fn new(expr: SeqExpr, family: GroupFamily) -> Self {
        ConsistentSequence { expr, family }
    }

    /// Instantiates the space at level `n` (cached).
    pub fn instance(&self, n: usize) -> Result<Arc<SpaceInstance>> {
        if n < 1 {
            return Err(Error::InvalidLevel(format!("level must be >= 1, got {n}")));
        }
        let key = (self.expr.clone(), self.family, n);
        if let Some(hit) = instance_cache().lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let core = self.expr.desugar();
        let m = core.letters(n)?.unwrap_or(n);
        let base_gens = self.family.discrete_generators(m)?;
        let base_lie = self.family.lie_algebra_basis(m);
        let inst = Arc::new(build_instance(&core, &base_gens, &base_lie, self.family, n)?);
        instance_cache().lock().unwrap().insert(key, inst.clone());
        Ok(inst)
    }

    pub fn dim(&self, n: usize) -> Result<usize> {
        Ok(self.instance(n)?.dim)
    }

    /// The embedding `V_n → V_{n+1}` as a sparse matrix (cached).
    pub fn embedding_step(&self, n: usize) -> Result<Arc<SpMat>> {
        if n < 1 {
            return Err(Error::InvalidLevel(format!("level must be >= 1, got {n}")));
        }
        let key = (self.expr.clone(), self.family, n);
        if let Some(hit) = embed_cache().lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let core = self.expr.desugar();
        let m = build_embed_step(&core, n)?;
        let m = Arc::new(m);
        embed_cache().lock().unwrap().insert(key, m.clone());
        Ok(m)
    }

    /// The composed embedding `V_n → V_N` (identity when `n == N`).
    pub fn embedding(&self, n: usize, nn: usize) -> Result<SpMat> {
        if n > nn {
            return Err(Error::InvalidLevel(format!("embedding requires n <= N, got {n} > {nn}")));
        }
        let mut acc = SpMat::identity(self.dim(n)?);
        for level in n..nn {
            acc = self.embedding_step(level)?.matmul(&acc);
        }
        Ok(acc)
    }

    /// The orthogonal projection `V_N → V_n`: the metric adjoint of the
    /// embedding, so `projection ∘ embedding = identity` on `V_n`.
    pub fn projection(&self, nn: usize, n: usize) -> Result<SpMat> {
        let phi = self.embedding(n, nn)?;
        let wn = self.instance(n)?.weights.clone();
        let wnn = self.instance(nn)?.weights.clone();
        let inv_wn: Vec<f64> = wn.iter().map(|w| 1.0 / w).collect();
        Ok(phi.transpose().scale_rows(&inv_wn).scale_cols(&wnn))
    }

    pub fn to_text(&self) -> String {
        self.expr.to_text(self.family)
    }

    /// Parses the canonical text form produced by [`Self::to_text`].
    pub fn parse(text: &str) -> Result<Self> {
        parse_sequence(text)
    }

    pub fn generation_degree(&self) -> Degree {
        degrees(&self.expr, self.family).0
    }

    pub fn presentation_degree(&self) -> Degree {
        degrees(&self.expr, self.family).1
    }

    /// Numerically checks that the orbit of `V_d` under the group action
    /// spans all of `V_{n_check}`: whether the sequence is generated in
    /// degree `d` as witnessed at level `n_check`.
    pub fn verify_generation_degree(&self, d: usize, n_check: usize) -> Result<bool> {
        if n_check <= d {
            return Err(Error::InvalidLevel(format!(
                "verify_generation_degree needs n_check > d, got d={d}, n_check={n_check}"
            )));
        }
        let inst = self.instance(n_check)?;
        let phi = self.embedding(d, n_check)?;
        let dim_low = self.dim(d)?;

        // Closure of span{φ(V_d)} under all generator actions, maintained as
        // an orthonormal set w.r.t. the weighted inner product. A subspace is
        // closed under all generators iff it is group-invariant, so the loop
        // computes the smallest invariant subspace containing φ(V_d).
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut queue: Vec<Vec<f64>> = Vec::new();
        for j in 0..dim_low {
            let mut e = vec![0.0; dim_low];
            e[j] = 1.0;
            queue.push(phi.mul_vec(&e));
        }
        let tol = 1e-8;
        while let Some(v) = queue.pop() {
            let orig = inst.norm(&v);
            if orig == 0.0 {
                continue;
            }
            let mut w = v;
            for q in &basis {
                let c = inst.inner(q, &w);
                for i in 0..w.len() {
                    w[i] -= c * q[i];
                }
            }
            // Re-orthogonalize once for numerical safety.
            for q in &basis {
                let c = inst.inner(q, &w);
                for i in 0..w.len() {
                    w[i] -= c * q[i];
                }
            }
            let nrm = inst.norm(&w);
            if nrm > tol * orig.max(1.0) {
                for x in &mut w {
                    *x /= nrm;
                }
                for act in &inst.disc_actions {
                    queue.push(act.apply_vec(&w));
                }
                for lie in &inst.lie_actions {
                    queue.push(lie.mul_vec(&w));
                }
                basis.push(w);
                if basis.len() == inst.dim {
                    return Ok(true);
                }
            }
        }
        Ok(basis.len() == inst.dim)
    }
}

/// Generation/presentation degree values: a known integer or unknown with a
/// reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Degree {
    Known(usize),
    Unknown(String),
}

impl Degree {
    pub fn known(&self) -> Option<usize> {
        match self {
            Degree::Known(d) => Some(*d),
            Degree::Unknown(_) => None,
        }
    }
}

impl std::fmt::Display for Degree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Degree::Known(d) => write!(f, "{d}"),
            Degree::Unknown(r) => write!(f, "unknown ({r})"),
        }
    }
}

/// `(generation, presentation)` degrees by the combinator calculus.
fn degrees(expr: &SeqExpr, fam: GroupFamily) -> (Degree, Degree) {
    use Degree::*;
    if let SeqExpr::Fixed(_) = expr {
        return (Known(0), Known(0));
    }
    match expr {
        SeqExpr::Graphon => {
            // Generation degree 2 is verified computationally; no
            // presentation-degree rule is available for this sequence.
            return (
                Known(2),
                Unknown("no presentation-degree rule for the graphon sequence".into()),
            );
        }
        SeqExpr::DoublingVec | SeqExpr::SymMatDoubling => {
            return (
                Unknown("doubling sequences are not finitely generated over shifts".into()),
                Unknown("doubling sequences are not finitely generated over shifts".into()),
            );
        }
        _ => {}
    }
    if !fam.has_degree_calculus() {
        let why = format!("no degree calculus for the {} family", fam.name());
        return (Unknown(why.clone()), Unknown(why));
    }
    let comb = |a: (Degree, Degree), f: &dyn Fn(usize, usize) -> (usize, usize)| match a {
        (Known(d), Known(k)) => {
            let (d2, k2) = f(d, k);
            (Known(d2), Known(k2))
        }
        (d, k) => (
            match d {
                Known(_) => Unknown("child degree unknown".into()),
                u => u,
            },
            match k {
                Known(_) => Unknown("child degree unknown".into()),
                u => u,
            },
        ),
    };
    match expr {
        SeqExpr::Vec | SeqExpr::VecPermOnly | SeqExpr::LiftedL1 => (Known(1), Known(1)),
        SeqExpr::SymMat => (Known(2), Known(2)),
        SeqExpr::Fixed(_) => (Known(0), Known(0)),
        SeqExpr::DirectSum(v) => {
            let mut gd = 0usize;
            let mut pd = 0usize;
            for e in v {
                match degrees(e, fam) {
                    (Known(d), Known(k)) => {
                        gd = gd.max(d);
                        pd = pd.max(k);
                    }
                    (d, k) => {
                        return (
                            if d.known().is_some() {
                                Unknown("summand degree unknown".into())
                            } else {
                                d
                            },
                            if k.known().is_some() {
                                Unknown("summand degree unknown".into())
                            } else {
                                k
                            },
                        )
                    }
                }
            }
            (Known(gd), Known(pd))
        }
        SeqExpr::Tensor(a, b) => {
            match (degrees(a, fam), degrees(b, fam)) {
                ((Known(da), Known(ka)), (Known(db), Known(kb))) => {
                    (Known(da + db), Known((ka + db).max(kb + da)))
                }
                _ => {
                    let why = "tensor factor degree unknown".to_string();
                    (Unknown(why.clone()), Unknown(why))
                }
            }
        }
        SeqExpr::SymPow(l, a) | SeqExpr::WedgePow(l, a) => {
            let l = *l;
            comb(degrees(a, fam), &move |d, k| {
                if l == 0 {
                    (0, 0)
                } else {
                    (l * d, (l - 1) * d + k)
                }
            })
        }
        SeqExpr::SymLeq(l, a) => {
            let l = *l;
            comb(degrees(a, fam), &move |d, k| {
                if l == 0 {
                    (0, 0)
                } else {
                    (l * d, (l - 1) * d + k)
                }
            })
        }
        SeqExpr::Moment(k, a) => degrees(&expr_moment_core(*k, a), fam),
        SeqExpr::Graphon | SeqExpr::DoublingVec | SeqExpr::SymMatDoubling => {
            unreachable!("handled above")
        }
    }
}

fn expr_moment_core(k: usize, a: &SeqExpr) -> SeqExpr {
    SeqExpr::SymPow(2, Box::new(SeqExpr::SymLeq(k, Box::new(a.clone()))))
}

// ---------------------------------------------------------------------------
// Instantiation
// ---------------------------------------------------------------------------

fn build_instance(
    expr: &SeqExpr,
    base_gens: &[SignedPerm],
    base_lie: &[SpMat],
    fam: GroupFamily,
    n: usize,
) -> Result<SpaceInstance> {
    match expr {
        SeqExpr::Vec => {
            let m = base_gens.first().map(|g| g.dim()).unwrap_or(n);
            Ok(SpaceInstance {
                n,
                dim: m,
                weights: vec![1.0; m],
                labels: (0..m).map(|i| format!("e{}", i + 1)).collect(),
                disc_actions: base_gens.iter().map(|g| Action::Signed(g.clone())).collect(),
                lie_actions: base_lie.to_vec(),
            })
        }
        SeqExpr::VecPermOnly => {
            if !fam.is_finite() {
                return Err(Error::UnsupportedGroup(
                    "vecp requires a finite (permutation-like) family".into(),
                ));
            }
            let m = base_gens.first().map(|g| g.dim()).unwrap_or(n);
            let stripped: Vec<Action> = base_gens
                .iter()
                .map(|g| {
                    Action::Signed(SignedPerm { to: g.to.clone(), sign: vec![1.0; g.dim()] })
                })
                .collect();
            Ok(SpaceInstance {
                n,
                dim: m,
                weights: vec![1.0; m],
                labels: (0..m).map(|i| format!("y{}", i + 1)).collect(),
                disc_actions: stripped,
                lie_actions: Vec::new(),
            })
        }
        SeqExpr::DoublingVec => {
            let m = 1usize << n;
            let w = (2.0f64).powi(-(n as i32));
            Ok(SpaceInstance {
                n,
                dim: m,
                weights: vec![w; m],
                labels: (0..m).map(|i| format!("e{}", i + 1)).collect(),
                disc_actions: base_gens.iter().map(|g| Action::Signed(g.clone())).collect(),
                lie_actions: base_lie.to_vec(),
            })
        }
        SeqExpr::SymMatDoubling => {
            // Same coordinates and actions as Sym² of the doubling vector
            // space, but with the normalized trace metric 2^{-n}·Tr instead
            // of the squared doubling weights.
            let child = build_instance(&SeqExpr::DoublingVec, base_gens, base_lie, fam, n)?;
            let mut inst = sympow_instance(&child, 2, n);
            let rescale = (1usize << n) as f64;
            for w in &mut inst.weights {
                *w *= rescale;
            }
            Ok(inst)
        }
        SeqExpr::LiftedL1 => {
            if !fam.is_finite() {
                return Err(Error::UnsupportedGroup(
                    "liftedl1 requires a finite (permutation-like) family".into(),
                ));
            }
            let dim = 2 * n + 1;
            let mut actions = Vec::with_capacity(base_gens.len());
            for g in base_gens {
                let mut to = vec![0usize; dim];
                let sign = vec![1.0; dim];
                for i in 0..n {
                    let t = g.to[i];
                    if g.sign[i] > 0.0 {
                        to[i] = t;
                        to[n + i] = n + t;
                    } else {
                        // A sign flip at coordinate i swaps the two copies.
                        to[i] = n + t;
                        to[n + i] = t;
                    }
                }
                to[2 * n] = 2 * n;
                actions.push(Action::Signed(SignedPerm { to, sign }));
            }
            let mut labels: Vec<String> = (0..n).map(|i| format!("p{}", i + 1)).collect();
            labels.extend((0..n).map(|i| format!("q{}", i + 1)));
            labels.push("s".into());
            Ok(SpaceInstance {
                n,
                dim,
                weights: vec![1.0; dim],
                labels,
                disc_actions: actions,
                lie_actions: Vec::new(),
            })
        }
        SeqExpr::Fixed(k) => {
            let arity = base_gens.len();
            Ok(SpaceInstance {
                n,
                dim: *k,
                weights: vec![1.0; *k],
                labels: (0..*k).map(|i| format!("c{}", i + 1)).collect(),
                disc_actions: (0..arity)
                    .map(|_| Action::Signed(SignedPerm::identity(*k)))
                    .collect(),
                lie_actions: base_lie.iter().map(|_| SpMat::zeros(*k, *k)).collect(),
            })
        }
        SeqExpr::DirectSum(children) => {
            let insts: Vec<SpaceInstance> = children
                .iter()
                .map(|c| build_instance(c, base_gens, base_lie, fam, n))
                .collect::<Result<_>>()?;
            Ok(direct_sum_instance(&insts, n))
        }
        SeqExpr::Tensor(a, b) => {
            let ia = build_instance(a, base_gens, base_lie, fam, n)?;
            let ib = build_instance(b, base_gens, base_lie, fam, n)?;
            Ok(tensor_instance(&ia, &ib, n))
        }
        SeqExpr::SymPow(k, a) => {
            let ia = build_instance(a, base_gens, base_lie, fam, n)?;
            Ok(sympow_instance(&ia, *k, n))
        }
        SeqExpr::WedgePow(k, a) => {
            let ia = build_instance(a, base_gens, base_lie, fam, n)?;
            Ok(wedgepow_instance(&ia, *k, n))
        }
        SeqExpr::SymLeq(k, a) => {
            let ia = build_instance(a, base_gens, base_lie, fam, n)?;
            let parts: Vec<SpaceInstance> =
                (0..=*k).map(|j| sympow_instance(&ia, j, n)).collect();
            Ok(direct_sum_instance(&parts, n))
        }
        SeqExpr::SymMat | SeqExpr::Graphon | SeqExpr::Moment(_, _) => {
            unreachable!("sugar removed by desugar()")
        }
    }
}

fn direct_sum_instance(parts: &[SpaceInstance], n: usize) -> SpaceInstance {
    let dim = parts.iter().map(|p| p.dim).sum();
    let mut weights = Vec::with_capacity(dim);
    let mut labels = Vec::with_capacity(dim);
    for p in parts {
        weights.extend_from_slice(&p.weights);
        labels.extend_from_slice(&p.labels);
    }
    let arity = parts.first().map(|p| p.disc_actions.len()).unwrap_or(0);
    let mut disc_actions = Vec::with_capacity(arity);
    for g in 0..arity {
        let all_signed = parts.iter().all(|p| p.disc_actions[g].as_signed().is_some());
        if all_signed {
            let mut to = Vec::with_capacity(dim);
            let mut sign = Vec::with_capacity(dim);
            let mut off = 0usize;
            for p in parts {
                let sp = p.disc_actions[g].as_signed().unwrap();
                to.extend(sp.to.iter().map(|&t| t + off));
                sign.extend_from_slice(&sp.sign);
                off += p.dim;
            }
            disc_actions.push(Action::Signed(SignedPerm { to, sign }));
        } else {
            let mats: Vec<SpMat> = parts.iter().map(|p| p.disc_actions[g].to_spmat()).collect();
            let refs: Vec<&SpMat> = mats.iter().collect();
            disc_actions.push(Action::Dense(SpMat::block_diag(&refs)));
        }
    }
    let lie_arity = parts.first().map(|p| p.lie_actions.len()).unwrap_or(0);
    let mut lie_actions = Vec::with_capacity(lie_arity);
    for g in 0..lie_arity {
        let mats: Vec<&SpMat> = parts.iter().map(|p| &p.lie_actions[g]).collect();
        lie_actions.push(SpMat::block_diag(&mats));
    }
    SpaceInstance { n, dim, weights, labels, disc_actions, lie_actions }
}

fn tensor_instance(a: &SpaceInstance, b: &SpaceInstance, n: usize) -> SpaceInstance {
    let dim = a.dim * b.dim;
    let mut weights = Vec::with_capacity(dim);
    let mut labels = Vec::with_capacity(dim);
    for i in 0..a.dim {
        for j in 0..b.dim {
            weights.push(a.weights[i] * b.weights[j]);
            labels.push(format!("{}⊗{}", a.labels[i], b.labels[j]));
        }
    }
    assert_eq!(a.disc_actions.len(), b.disc_actions.len());
    let mut disc_actions = Vec::with_capacity(a.disc_actions.len());
    for (ga, gb) in a.disc_actions.iter().zip(&b.disc_actions) {
        match (ga.as_signed(), gb.as_signed()) {
            (Some(pa), Some(pb)) => {
                let mut to = vec![0usize; dim];
                let mut sign = vec![1.0; dim];
                for i in 0..a.dim {
                    for j in 0..b.dim {
                        to[i * b.dim + j] = pa.to[i] * b.dim + pb.to[j];
                        sign[i * b.dim + j] = pa.sign[i] * pb.sign[j];
                    }
                }
                disc_actions.push(Action::Signed(SignedPerm { to, sign }));
            }
            _ => {
                disc_actions.push(Action::Dense(ga.to_spmat().kron(&gb.to_spmat())));
            }
        }
    }
    assert_eq!(a.lie_actions.len(), b.lie_actions.len());
    let ia = SpMat::identity(a.dim);
    let ib = SpMat::identity(b.dim);
    let lie_actions = a
        .lie_actions
        .iter()
        .zip(&b.lie_actions)
        .map(|(la, lb)| la.kron(&ib).add_scaled(&ia.kron(lb), 1.0))
        .collect();
    SpaceInstance { n, dim, weights, labels, disc_actions, lie_actions }
}

/// Enumerates the nondecreasing `k`-tuples over `0..d` in lexicographic order
/// (the graded-lex monomial order within one degree).
pub fn multisets(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(d: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            cur.push(i);
            rec(d, k, i, cur, out);
            cur.pop();
        }
    }
    if k == 0 {
        out.push(Vec::new());
        return out;
    }
    rec(d, k, 0, &mut cur, &mut out);
    out
}

/// Strictly increasing `k`-tuples over `0..d` in lexicographic order.
fn subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(d: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            cur.push(i);
            rec(d, k, i + 1, cur, out);
            cur.pop();
        }
    }
    if k == 0 {
        out.push(Vec::new());
        return out;
    }
    rec(d, k, 0, &mut cur, &mut out);
    out
}

fn rank_map(tuples: &[Vec<usize>]) -> HashMap<Vec<usize>, usize> {
    tuples.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect()
}

/// Number of distinct arrangements of a sorted tuple.
fn multiplicity(alpha: &[usize]) -> f64 {
    let k = alpha.len();
    let mut fact = vec![1.0f64; k + 1];
    for i in 1..=k {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut denom = 1.0;
    let mut run = 1usize;
    for i in 1..alpha.len() {
        if alpha[i] == alpha[i - 1] {
            run += 1;
        } else {
            denom *= fact[run];
            run = 1;
        }
    }
    denom *= fact[run.min(k)];
    if k == 0 {
        return 1.0;
    }
    fact[k] / denom
}

/// Distinct permutations of a sorted tuple.
fn distinct_perms(alpha: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut items = alpha.to_vec();
    permute_unique(&mut items, 0, &mut out);
    out
}

fn permute_unique(items: &mut Vec<usize>, start: usize, out: &mut Vec<Vec<usize>>) {
    if start == items.len() {
        out.push(items.clone());
        return;
    }
    let mut used = std::collections::HashSet::new();
    for i in start..items.len() {
        if used.insert(items[i]) {
            items.swap(start, i);
            permute_unique(items, start + 1, out);
            items.swap(start, i);
        }
    }
}

fn sympow_instance(child: &SpaceInstance, k: usize, n: usize) -> SpaceInstance {
    let tuples = multisets(child.dim, k);
    let ranks = rank_map(&tuples);
    let dim = tuples.len();
    let mut weights = Vec::with_capacity(dim);
    let mut labels = Vec::with_capacity(dim);
    for t in &tuples {
        let mut w = multiplicity(t);
        for &i in t {
            w *= child.weights[i];
        }
        weights.push(w);
        if t.is_empty() {
            labels.push("1".into());
        } else {
            labels.push(t.iter().map(|&i| child.labels[i].clone()).collect::<Vec<_>>().join("·"));
        }
    }
    let mut disc_actions = Vec::with_capacity(child.disc_actions.len());
    for act in &child.disc_actions {
        match act.as_signed() {
            Some(p) => {
                let mut to = vec![0usize; dim];
                let mut sign = vec![1.0; dim];
                for (r, t) in tuples.iter().enumerate() {
                    let mut img: Vec<usize> = t.iter().map(|&i| p.to[i]).collect();
                    let s: f64 = t.iter().map(|&i| p.sign[i]).product();
                    img.sort_unstable();
                    to[r] = ranks[&img];
                    sign[r] = s;
                }
                disc_actions.push(Action::Signed(SignedPerm { to, sign }));
            }
            None => {
                disc_actions.push(Action::Dense(sympow_push(
                    &act.to_spmat(),
                    k,
                    &tuples,
                    &ranks,
                    &tuples,
                )));
            }
        }
    }
    let lie_actions = child
        .lie_actions
        .iter()
        .map(|l| sym_derivation_push(l, &tuples, &ranks))
        .collect();
    SpaceInstance { n, dim, weights, labels, disc_actions, lie_actions }
}

/// Pushes a linear map `A: V → V'` to `Sym^k A` in monomial coordinates.
///
/// `src_tuples` index the domain monomials (over `A.ncols()` letters) and
/// `dst_tuples`/`dst_ranks` the codomain monomials (over `A.nrows()` letters).
pub fn sympow_push(
    a: &SpMat,
    k: usize,
    src_tuples: &[Vec<usize>],
    dst_ranks: &HashMap<Vec<usize>, usize>,
    dst_tuples: &[Vec<usize>],
) -> SpMat {
    // Column access to A.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); a.ncols()];
    for (r, c, v) in a.iter() {
        cols[c].push((r, v));
    }
    let mut trips: Vec<(usize, usize, f64)> = Vec::new();
    let mut slot_rows = vec![0usize; k];
    for (src_rank, alpha) in src_tuples.iter().enumerate() {
        for p in distinct_perms(alpha) {
            // Enumerate entry choices per slot; keep only nondecreasing
            // output tuples: the coefficient of a monomial equals the tensor
            // coefficient of its sorted representative.
            fn rec(
                slot: usize,
                k: usize,
                p: &[usize],
                cols: &[Vec<(usize, f64)>],
                rows: &mut Vec<usize>,
                prod: f64,
                src_rank: usize,
                dst_ranks: &HashMap<Vec<usize>, usize>,
                trips: &mut Vec<(usize, usize, f64)>,
            ) {
                if slot == k {
                    if rows.windows(2).all(|w| w[0] <= w[1]) {
                        let dst = dst_ranks[&rows.to_vec()];
                        trips.push((dst, src_rank, prod));
                    }
                    return;
                }
                for &(r, v) in &cols[p[slot]] {
                    // Prune early: rows must be nondecreasing.
                    if slot > 0 && r < rows[slot - 1] {
                        continue;
                    }
                    rows[slot] = r;
                    rec(slot + 1, k, p, cols, rows, prod * v, src_rank, dst_ranks, trips);
                }
            }
            rec(0, k, &p, &cols, &mut slot_rows, 1.0, src_rank, dst_ranks, &mut trips);
        }
    }
    SpMat::from_triplets(dst_tuples.len(), src_tuples.len(), trips)
}

/// Pushes a Lie-algebra element `L` on `V` to the induced derivation on
/// `Sym^k V` (Leibniz rule across tensor slots).
fn sym_derivation_push(
    l: &SpMat,
    tuples: &[Vec<usize>],
    ranks: &HashMap<Vec<usize>, usize>,
) -> SpMat {
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); l.ncols()];
    for (r, c, v) in l.iter() {
        cols[c].push((r, v));
    }
    let mut trips = Vec::new();
    for (src_rank, alpha) in tuples.iter().enumerate() {
        for p in distinct_perms(alpha) {
            for slot in 0..p.len() {
                for &(j, v) in &cols[p[slot]] {
                    let mut out = p.clone();
                    out[slot] = j;
                    if out.windows(2).all(|w| w[0] <= w[1]) {
                        trips.push((ranks[&out], src_rank, v));
                    }
                }
            }
        }
    }
    SpMat::from_triplets(tuples.len(), tuples.len(), trips)
}

fn wedgepow_instance(child: &SpaceInstance, k: usize, n: usize) -> SpaceInstance {
    let tuples = subsets(child.dim, k);
    let ranks = rank_map(&tuples);
    let dim = tuples.len();
    let factorial: f64 = (1..=k).map(|i| i as f64).product::<f64>().max(1.0);
    let mut weights = Vec::with_capacity(dim);
    let mut labels = Vec::with_capacity(dim);
    for t in &tuples {
        let mut w = factorial;
        for &i in t {
            w *= child.weights[i];
        }
        weights.push(w);
        if t.is_empty() {
            labels.push("1".into());
        } else {
            labels.push(t.iter().map(|&i| child.labels[i].clone()).collect::<Vec<_>>().join("∧"));
        }
    }
    let mut disc_actions = Vec::with_capacity(child.disc_actions.len());
    for act in &child.disc_actions {
        match act.as_signed() {
            Some(p) => {
                let mut to = vec![0usize; dim];
                let mut sign = vec![1.0; dim];
                for (r, t) in tuples.iter().enumerate() {
                    let mut img: Vec<usize> = t.iter().map(|&i| p.to[i]).collect();
                    let mut s: f64 = t.iter().map(|&i| p.sign[i]).product();
                    s *= sort_sign(&mut img);
                    to[r] = ranks[&img];
                    sign[r] = s;
                }
                disc_actions.push(Action::Signed(SignedPerm { to, sign }));
            }
            None => {
                disc_actions.push(Action::Dense(wedge_push(&act.to_spmat(), &tuples, &ranks)));
            }
        }
    }
    let lie_actions = child
        .lie_actions
        .iter()
        .map(|l| wedge_derivation_push(l, &tuples, &ranks))
        .collect();
    SpaceInstance { n, dim, weights, labels, disc_actions, lie_actions }
}

/// Sorts a tuple of distinct indices in place and returns the sign of the
/// sorting permutation.
fn sort_sign(t: &mut [usize]) -> f64 {
    let mut sign = 1.0;
    for i in 1..t.len() {
        let mut j = i;
        while j > 0 && t[j - 1] > t[j] {
            t.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    sign
}

/// Pushes `A` to `Λ^k A`: the coefficient from subset `α` to subset `β` is
/// `det A[β, α]`.
fn wedge_push(a: &SpMat, src_tuples: &[Vec<usize>], _src_ranks: &HashMap<Vec<usize>, usize>) -> SpMat {
    let k = src_tuples.first().map(|t| t.len()).unwrap_or(0);
    let dst_tuples = subsets(a.nrows(), k);
    let dense = a.to_dense();
    let mut trips = Vec::new();
    for (c, alpha) in src_tuples.iter().enumerate() {
        for (r, beta) in dst_tuples.iter().enumerate() {
            let mut sub = nalgebra::DMatrix::zeros(k, k);
            for (ri, &row) in beta.iter().enumerate() {
                for (ci, &col) in alpha.iter().enumerate() {
                    sub[(ri, ci)] = dense[(row, col)];
                }
            }
            let det = if k == 0 { 1.0 } else { sub.determinant() };
            if det != 0.0 {
                trips.push((r, c, det));
            }
        }
    }
    SpMat::from_triplets(dst_tuples.len(), src_tuples.len(), trips)
}

fn wedge_derivation_push(
    l: &SpMat,
    tuples: &[Vec<usize>],
    ranks: &HashMap<Vec<usize>, usize>,
) -> SpMat {
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); l.ncols()];
    for (r, c, v) in l.iter() {
        cols[c].push((r, v));
    }
    let mut trips = Vec::new();
    for (src_rank, alpha) in tuples.iter().enumerate() {
        for slot in 0..alpha.len() {
            for &(j, v) in &cols[alpha[slot]] {
                if alpha.iter().enumerate().any(|(s, &x)| s != slot && x == j) {
                    continue; // repeated index: wedge vanishes
                }
                let mut out = alpha.clone();
                out[slot] = j;
                let mut sorted = out.clone();
                let s = sort_sign(&mut sorted);
                trips.push((ranks[&sorted], src_rank, v * s));
            }
        }
    }
    SpMat::from_triplets(tuples.len(), tuples.len(), trips)
}

// ---------------------------------------------------------------------------
// Embedding steps
// ---------------------------------------------------------------------------

fn build_embed_step(expr: &SeqExpr, n: usize) -> Result<SpMat> {
    match expr {
        SeqExpr::Vec | SeqExpr::VecPermOnly => {
            Ok(inclusion(n, n + 1))
        }
        SeqExpr::DoublingVec => {
            let m = 1usize << n;
            let mut trips = Vec::with_capacity(2 * m);
            for i in 0..m {
                trips.push((2 * i, i, 1.0));
                trips.push((2 * i + 1, i, 1.0));
            }
            Ok(SpMat::from_triplets(2 * m, m, trips))
        }
        SeqExpr::SymMatDoubling => {
            // Coordinate (i,j), i ≤ j, of S^{2^n} maps to entries
            // (2i, 2j) and (2i+1, 2j+1) of S^{2^{n+1}} (the matrix X ⊗ I₂).
            let m = 1usize << n;
            let src = multisets(m, 2);
            let dst = multisets(2 * m, 2);
            let ranks = rank_map(&dst);
            let mut trips = Vec::with_capacity(2 * src.len());
            for (r, t) in src.iter().enumerate() {
                let (i, j) = (t[0], t[1]);
                trips.push((ranks[&vec![2 * i, 2 * j]], r, 1.0));
                trips.push((ranks[&vec![2 * i + 1, 2 * j + 1]], r, 1.0));
            }
            Ok(SpMat::from_triplets(dst.len(), src.len(), trips))
        }
        SeqExpr::LiftedL1 => {
            let mut trips = Vec::with_capacity(2 * n + 1);
            for i in 0..n {
                trips.push((i, i, 1.0)); // first copy
                trips.push((n + 1 + i, n + i, 1.0)); // second copy
            }
            trips.push((2 * n + 2, 2 * n, 1.0)); // scalar
            Ok(SpMat::from_triplets(2 * n + 3, 2 * n + 1, trips))
        }
        SeqExpr::Fixed(k) => Ok(SpMat::identity(*k)),
        SeqExpr::DirectSum(children) => {
            let mats: Vec<SpMat> =
                children.iter().map(|c| build_embed_step(c, n)).collect::<Result<_>>()?;
            let refs: Vec<&SpMat> = mats.iter().collect();
            Ok(SpMat::block_diag(&refs))
        }
        SeqExpr::Tensor(a, b) => {
            Ok(build_embed_step(a, n)?.kron(&build_embed_step(b, n)?))
        }
        SeqExpr::SymPow(k, a) => {
            let ea = build_embed_step(a, n)?;
            let src = multisets(ea.ncols(), *k);
            let dst = multisets(ea.nrows(), *k);
            let ranks = rank_map(&dst);
            Ok(sympow_push(&ea, *k, &src, &ranks, &dst))
        }
        SeqExpr::WedgePow(k, a) => {
            let ea = build_embed_step(a, n)?;
            let src = subsets(ea.ncols(), *k);
            let ranks = rank_map(&src);
            Ok(wedge_push(&ea, &src, &ranks))
        }
        SeqExpr::SymLeq(k, a) => {
            let ea = build_embed_step(a, n)?;
            let mats: Vec<SpMat> = (0..=*k)
                .map(|j| {
                    let src = multisets(ea.ncols(), j);
                    let dst = multisets(ea.nrows(), j);
                    let ranks = rank_map(&dst);
                    sympow_push(&ea, j, &src, &ranks, &dst)
                })
                .collect();
            let refs: Vec<&SpMat> = mats.iter().collect();
            Ok(SpMat::block_diag(&refs))
        }
        SeqExpr::SymMat | SeqExpr::Graphon | SeqExpr::Moment(_, _) => {
            build_embed_step(&expr.desugar(), n)
        }
    }
}

fn inclusion(n: usize, m: usize) -> SpMat {
    SpMat::from_triplets(m, n, (0..n).map(|i| (i, i, 1.0)).collect())
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

fn parse_sequence(text: &str) -> Result<ConsistentSequence> {
    let mut p = Parser { s: text.as_bytes(), pos: 0 };
    let (expr, fam) = p.parse_expr()?;
    p.skip_ws();
    if p.pos != p.s.len() {
        return Err(Error::Parse(format!("trailing input at byte {}", p.pos)));
    }
    let fam = fam.ok_or_else(|| {
        Error::Parse("sequence has no base kind carrying a group family".into())
    })?;
    Ok(ConsistentSequence::new(expr, fam))
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && (self.s[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len()
            && ((self.s[self.pos] as char).is_ascii_alphanumeric() || self.s[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Parse(format!("expected identifier at byte {start}")));
        }
        Ok(std::str::from_utf8(&self.s[start..self.pos]).unwrap().to_string())
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        self.skip_ws();
        if self.pos < self.s.len() && self.s[self.pos] == c {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Parse(format!("expected '{}' at byte {}", c as char, self.pos)))
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn int(&mut self) -> Result<usize> {
        let id = self.ident()?;
        id.parse::<usize>().map_err(|_| Error::Parse(format!("expected integer, got '{id}'")))
    }

    fn family(&mut self) -> Result<GroupFamily> {
        let id = self.ident()?;
        GroupFamily::parse(&id).map_err(|_| Error::Parse(format!("unknown group family '{id}'")))
    }

    fn merge_fam(
        a: Option<GroupFamily>,
        b: Option<GroupFamily>,
    ) -> Result<Option<GroupFamily>> {
        match (a, b) {
            (Some(x), Some(y)) if x != y => Err(Error::Parse(format!(
                "mixed group families '{}' and '{}'",
                x.name(),
                y.name()
            ))),
            (Some(x), _) => Ok(Some(x)),
            (_, y) => Ok(y),
        }
    }

    fn parse_expr(&mut self) -> Result<(SeqExpr, Option<GroupFamily>)> {
        let head = self.ident()?;
        match head.as_str() {
            "vec" | "vecp" | "symmat" | "liftedl1" | "doubling" | "graphon"
            | "symdoubling" => {
                self.expect(b'(')?;
                let fam = self.family()?;
                self.expect(b')')?;
                let expr = match head.as_str() {
                    "vec" => SeqExpr::Vec,
                    "vecp" => SeqExpr::VecPermOnly,
                    "symmat" => SeqExpr::SymMat,
                    "liftedl1" => SeqExpr::LiftedL1,
                    "doubling" => SeqExpr::DoublingVec,
                    "symdoubling" => SeqExpr::SymMatDoubling,
                    _ => SeqExpr::Graphon,
                };
                Ok((expr, Some(fam)))
            }
            "fixed" => {
                self.expect(b'(')?;
                let k = self.int()?;
                self.expect(b')')?;
                Ok((SeqExpr::Fixed(k), None))
            }
            "sum" => {
                self.expect(b'(')?;
                let mut parts = Vec::new();
                let mut fam = None;
                loop {
                    let (e, f) = self.parse_expr()?;
                    fam = Self::merge_fam(fam, f)?;
                    parts.push(e);
                    match self.peek() {
                        Some(b',') => {
                            self.expect(b',')?;
                        }
                        _ => break,
                    }
                }
                self.expect(b')')?;
                Ok((SeqExpr::DirectSum(parts), fam))
            }
            "tensor" => {
                self.expect(b'(')?;
                let (a, fa) = self.parse_expr()?;
                self.expect(b',')?;
                let (b, fb) = self.parse_expr()?;
                self.expect(b')')?;
                Ok((SeqExpr::Tensor(Box::new(a), Box::new(b)), Self::merge_fam(fa, fb)?))
            }
            "sympow" | "symleq" | "wedge" | "moment" => {
                self.expect(b'(')?;
                let k = self.int()?;
                self.expect(b',')?;
                let (a, fam) = self.parse_expr()?;
                self.expect(b')')?;
                let expr = match head.as_str() {
                    "sympow" => SeqExpr::SymPow(k, Box::new(a)),
                    "symleq" => SeqExpr::SymLeq(k, Box::new(a)),
                    "wedge" => SeqExpr::WedgePow(k, Box::new(a)),
                    _ => SeqExpr::Moment(k, Box::new(a)),
                };
                Ok((expr, fam))
            }
            other => Err(Error::Parse(format!("unknown constructor '{other}'"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Convenience constructors
// ---------------------------------------------------------------------------

pub fn vec_seq(fam: GroupFamily) -> ConsistentSequence {
    ConsistentSequence::new(SeqExpr::Vec, fam)
}

pub fn vecp_seq(fam: GroupFamily) -> ConsistentSequence {
    ConsistentSequence::new(SeqExpr::VecPermOnly, fam)
}

pub fn symmat_seq(fam: GroupFamily) -> ConsistentSequence {
    ConsistentSequence::new(SeqExpr::SymMat, fam)
}

pub fn liftedl1_seq(fam: GroupFamily) -> ConsistentSequence {
    ConsistentSequence::new(SeqExpr::LiftedL1, fam)
}

pub fn graphon_seq() -> ConsistentSequence {
    ConsistentSequence::new(SeqExpr::Graphon, GroupFamily::Sym)
}

pub fn doubling_seq(fam: GroupFamily) -> ConsistentSequence {
    ConsistentSequence::new(SeqExpr::DoublingVec, fam)
}

pub fn symdoubling_seq(fam: GroupFamily) -> ConsistentSequence {
    ConsistentSequence::new(SeqExpr::SymMatDoubling, fam)
}

pub fn fixed_seq(k: usize, fam: GroupFamily) -> ConsistentSequence {
    ConsistentSequence::new(SeqExpr::Fixed(k), fam)
}

pub fn moment_seq(k: usize, inner: &ConsistentSequence) -> ConsistentSequence {
    ConsistentSequence::new(SeqExpr::Moment(k, Box::new(inner.expr.clone())), inner.family)
}

pub fn direct_sum(parts: &[&ConsistentSequence]) -> ConsistentSequence {
    let fam = parts[0].family;
    assert!(parts.iter().all(|p| p.family == fam), "mixed families in direct sum");
    ConsistentSequence::new(
        SeqExpr::DirectSum(parts.iter().map(|p| p.expr.clone()).collect()),
        fam,
    )
}
