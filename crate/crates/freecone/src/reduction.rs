//! Symmetry reduction: constant-sized reformulations of invariant cones and
//! programs.
//!
//! Three families of reductions are provided.
//!
//! * PSD cones: a numerically computed simultaneous block diagonalization of
//!   the commutant turns the cone of invariant PSD operators on a space into
//!   a direct sum of small PSD cones ([`block_diagonalize`],
//!   [`reduce_psd_cone`], [`reduce_program`]).
//! * Relative-entropy cones over a finite invariant point set: grouping the
//!   points into orbits collapses the cone to one weighted relative-entropy
//!   constraint per orbit ([`orbit_basis`], [`reduce_relative_entropy`]).
//! * Sums of nonnegative AM/GM exponentials (SAGE certificates for
//!   signomials): one relative-entropy block per orbit of candidate negative
//!   terms, with the inner variables reduced by the stabilizer of the orbit
//!   representative ([`reduce_sage`]).
//!
//! All reductions are pure functions of immutable inputs and are safe to run
//! in parallel across levels and instances.

use crate::equivariant::equivariant_basis;
use crate::error::{Error, Result};
use crate::groups::{enumerate_group, GroupFamily};
use crate::seq::ConsistentSequence;
use crate::solver::{ConeInstance, ConicProgram, Solution};
use crate::sparse::{SignedPerm, SpMat};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Relative tolerance for the off-pattern mass of validation samples.
const PATTERN_TOL: f64 = 1e-7;
/// Relative tolerance for invariance checks on program data.
const INVARIANCE_TOL: f64 = 1e-8;
/// Number of resampling attempts before giving up on eigenvalue clustering.
const MAX_RESAMPLES: usize = 10;
/// Validation samples drawn after a candidate block structure is found.
const VALIDATION_SAMPLES: usize = 5;

// ---------------------------------------------------------------------------
// Block diagonalization of the commutant
// ---------------------------------------------------------------------------

/// An orthogonal change of basis exhibiting every operator that commutes with
/// the group action as a direct sum of repeated small blocks.
///
/// Conjugating a commuting operator by `q` produces, for each entry
/// `(mult, dim)` of `blocks`, a `mult·dim × mult·dim` principal block of the
/// form `X ⊗ I_dim` with `X` an arbitrary `mult × mult` matrix. Columns of
/// `q` are grouped accordingly: for each block, `mult` groups of `dim`
/// aligned columns. All matrices are expressed in the orthonormalized
/// coordinates of the space (identical to plain coordinates when the metric
/// weights are all one).
#[derive(Debug, Clone)]
pub struct BlockStructure {
    /// Level at which the structure was computed.
    pub n: usize,
    /// Orthogonal change of basis.
    pub q: DMatrix<f64>,
    /// Per isotypic block: (multiplicity, dimension of the repeated factor).
    pub blocks: Vec<(usize, usize)>,
}

impl BlockStructure {
    /// Total dimension of the underlying space.
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|(m, d)| m * d).sum()
    }

    /// Dimension of the commutant implied by the block pattern, `Σ mult²`.
    pub fn commutant_dim(&self) -> usize {
        self.blocks.iter().map(|(m, _)| m * m).sum()
    }

    /// Column offset of each block inside `q`.
    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.blocks.len());
        let mut o = 0;
        for &(m, d) in &self.blocks {
            off.push(o);
            o += m * d;
        }
        off
    }

    /// Assembles the full operator `q (⊕ X_b ⊗ I) qᵀ` from small blocks.
    pub fn assemble(&self, xs: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
        if xs.len() != self.blocks.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} blocks, got {}",
                self.blocks.len(),
                xs.len()
            )));
        }
        let nn = self.dim();
        let mut mid = DMatrix::<f64>::zeros(nn, nn);
        for (p, (&(m, d), x)) in self.blocks.iter().zip(xs).enumerate() {
            if x.nrows() != m || x.ncols() != m {
                return Err(Error::ShapeMismatch(format!(
                    "block {p} must be {m}×{m}, got {}×{}",
                    x.nrows(),
                    x.ncols()
                )));
            }
            let o = self.offsets()[p];
            for a in 0..m {
                for b in 0..m {
                    for w in 0..d {
                        mid[(o + a * d + w, o + b * d + w)] = x[(a, b)];
                    }
                }
            }
        }
        Ok(&self.q * mid * self.q.transpose())
    }

    /// Extracts the small blocks of an operator commuting with the action,
    /// together with the mass of the conjugated operator that falls outside
    /// the block pattern.
    pub fn disassemble(&self, full: &DMatrix<f64>) -> Result<(Vec<DMatrix<f64>>, f64)> {
        let nn = self.dim();
        if full.nrows() != nn || full.ncols() != nn {
            return Err(Error::ShapeMismatch(format!(
                "expected a {nn}×{nn} matrix, got {}×{}",
                full.nrows(),
                full.ncols()
            )));
        }
        let g = self.q.transpose() * full * &self.q;
        let offsets = self.offsets();
        let mut xs = Vec::with_capacity(self.blocks.len());
        for (p, &(m, d)) in self.blocks.iter().enumerate() {
            let o = offsets[p];
            let mut x = DMatrix::<f64>::zeros(m, m);
            for a in 0..m {
                for b in 0..m {
                    let mut s = 0.0;
                    for w in 0..d {
                        s += g[(o + a * d + w, o + b * d + w)];
                    }
                    x[(a, b)] = s / d as f64;
                }
            }
            xs.push(x);
        }
        let residual = (g - pattern_of(self, &xs)).norm();
        Ok((xs, residual))
    }
}

/// The conjugated pattern `⊕ X_b ⊗ I` as a dense matrix (middle factor only).
fn pattern_of(bs: &BlockStructure, xs: &[DMatrix<f64>]) -> DMatrix<f64> {
    let nn = bs.dim();
    let mut mid = DMatrix::<f64>::zeros(nn, nn);
    let offsets = bs.offsets();
    for (p, (&(m, d), x)) in bs.blocks.iter().zip(xs).enumerate() {
        let o = offsets[p];
        for a in 0..m {
            for b in 0..m {
                for w in 0..d {
                    mid[(o + a * d + w, o + b * d + w)] = x[(a, b)];
                }
            }
        }
    }
    mid
}

/// Dense matrix of a sparse operator conjugated into orthonormal coordinates:
/// `D^{1/2} M D^{-1/2}` for the diagonal metric `D`.
fn to_ortho(m: &SpMat, weights: &[f64]) -> DMatrix<f64> {
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let mut out = DMatrix::<f64>::zeros(m.nrows(), m.ncols());
    for (r, c, v) in m.iter() {
        out[(r, c)] = v * sqrt_w[r] / sqrt_w[c];
    }
    out
}

/// Splits sorted eigenvalues into clusters separated by gaps above the
/// threshold. Returns the cluster index of each eigenvalue position.
fn cluster_eigenvalues(vals: &[f64], threshold: f64) -> Vec<usize> {
    let mut cluster = vec![0usize; vals.len()];
    let mut c = 0;
    for i in 1..vals.len() {
        if vals[i] - vals[i - 1] > threshold {
            c += 1;
        }
        cluster[i] = c;
    }
    cluster
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra] = rb;
        }
    }
}

/// Computes a simultaneous block diagonalization of all operators commuting
/// with the group action on the space at level `n`.
///
/// One random commuting operator (Gaussian coefficients on a commutant
/// basis, symmetrized) is eigendecomposed; eigenvalue clusters are merged
/// into isotypic groups and aligned using further commutant elements, and the
/// candidate structure is validated on fresh random samples. Sampling is
/// retried up to ten times before reporting a degenerate sample.
pub fn block_diagonalize(seq: &ConsistentSequence, n: usize) -> Result<BlockStructure> {
    match seq.family {
        GroupFamily::Sym
        | GroupFamily::SignedSym
        | GroupFamily::EvenSignedSym
        | GroupFamily::Trivial => {}
        GroupFamily::Orthogonal => {
            eprintln!(
                "warning: block diagonalization for the orthogonal family is \
                 best-effort; the computed structure is validated numerically only"
            );
        }
        GroupFamily::Cyclic => {
            return Err(Error::UnsupportedGroup(
                "cyclic families have rotation blocks that do not split over the reals"
                    .to_string(),
            ));
        }
    }
    let inst = seq.instance(n)?;
    let nn = inst.dim;
    let basis = equivariant_basis(seq, seq, n)?;
    if basis.is_empty() {
        return Err(Error::EmptyBasis);
    }
    let comm: Vec<DMatrix<f64>> =
        basis.elements.iter().map(|m| to_ortho(m, &inst.weights)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_b10c);
    let sample = |rng: &mut ChaCha8Rng| -> DMatrix<f64> {
        use rand_distr::Distribution;
        let normal = rand_distr::StandardNormal;
        let mut s = DMatrix::<f64>::zeros(nn, nn);
        for c in &comm {
            let g: f64 = normal.sample(rng);
            s += c * g;
        }
        s
    };

    'attempt: for attempt in 0..MAX_RESAMPLES {
        let raw = sample(&mut rng);
        let sym = (&raw + raw.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..nn).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vecs = DMatrix::<f64>::from_columns(
            &order.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>(),
        );
        let range = vals[nn - 1] - vals[0];
        let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let threshold = (1e-6 * range).max(1e-10 * scale.max(1.0));
        let cluster_of = cluster_eigenvalues(&vals, threshold);
        let num_clusters = cluster_of.last().map_or(1, |c| c + 1);
        let mut cluster_cols: Vec<Vec<usize>> = vec![Vec::new(); num_clusters];
        for (col, &c) in cluster_of.iter().enumerate() {
            cluster_cols[c].push(col);
        }

        // Merge clusters that some commuting operator connects: those belong
        // to the same isotypic group.
        let mut uf = UnionFind::new(num_clusters);
        for c in &comm {
            let g = vecs.transpose() * c * &vecs;
            for i in 0..num_clusters {
                for j in (i + 1)..num_clusters {
                    let mut mass = 0.0f64;
                    for &r in &cluster_cols[i] {
                        for &cc in &cluster_cols[j] {
                            mass = mass.max(g[(r, cc)].abs()).max(g[(cc, r)].abs());
                        }
                    }
                    if mass > 1e-8 * c.norm().max(1.0) {
                        uf.union(i, j);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        {
            let mut root_of_group: Vec<usize> = Vec::new();
            for i in 0..num_clusters {
                let r = uf.find(i);
                match root_of_group.iter().position(|&x| x == r) {
                    Some(g) => groups[g].push(i),
                    None => {
                        root_of_group.push(r);
                        groups.push(vec![i]);
                    }
                }
            }
        }

        // Each isotypic group must consist of equally sized clusters; the
        // multiplicity is the number of clusters and the factor dimension is
        // the common cluster size.
        let mut blocks: Vec<(usize, usize, Vec<DMatrix<f64>>)> = Vec::new();
        for group in &groups {
            let d = cluster_cols[group[0]].len();
            if group.iter().any(|&c| cluster_cols[c].len() != d) {
                continue 'attempt;
            }
            let m = group.len();
            // Cross-check the multiplicity as the dimension of the commutant
            // restricted to rows of one cluster.
            let rows: Vec<DVector<f64>> = comm
                .iter()
                .map(|c| {
                    let q0 = columns(&vecs, &cluster_cols[group[0]]);
                    let proj = q0.transpose() * c;
                    DVector::from_column_slice(proj.as_slice())
                })
                .collect();
            if numerical_rank(&rows) != m {
                continue 'attempt;
            }
            // Align the copies: pick a generic commuting operator and use the
            // polar factor of its cross blocks to rotate every cluster into
            // the coordinates of the first.
            let generic = sample(&mut rng);
            let q0 = columns(&vecs, &cluster_cols[group[0]]);
            let mut aligned: Vec<DMatrix<f64>> = vec![q0.clone()];
            for &c in group.iter().skip(1) {
                let qj = columns(&vecs, &cluster_cols[c]);
                let b = qj.transpose() * &generic * &q0;
                let svd = b.clone().svd(true, true);
                let smax = svd.singular_values.max();
                let smin = svd.singular_values.min();
                if smax <= 0.0 || (smax - smin) / smax > 1e-6 {
                    continue 'attempt;
                }
                let rot = svd.u.unwrap() * svd.v_t.unwrap();
                aligned.push(qj * rot);
            }
            blocks.push((m, d, aligned));
        }

        // Deterministic block order: by factor dimension, then multiplicity.
        blocks.sort_by_key(|(m, d, _)| (*d, *m));
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(nn);
        let mut shape = Vec::with_capacity(blocks.len());
        for (m, d, aligned) in &blocks {
            shape.push((*m, *d));
            for copy in aligned {
                for c in 0..*d {
                    cols.push(copy.column(c).into_owned());
                }
            }
        }
        let q = DMatrix::<f64>::from_columns(&cols.iter().map(|c| c.column(0)).collect::<Vec<_>>());
        let candidate = BlockStructure { n, q, blocks: shape };
        if candidate.dim() != nn {
            continue 'attempt;
        }

        // Validate the pattern on fresh random commuting operators.
        let mut ok = true;
        for _ in 0..VALIDATION_SAMPLES {
            let s = sample(&mut rng);
            let (xs, residual) = candidate.disassemble(&s)?;
            let _ = xs;
            if residual > PATTERN_TOL * s.norm().max(1.0) {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(candidate);
        }
        let _ = attempt;
    }
    Err(Error::DegenerateSample { tries: MAX_RESAMPLES })
}

/// Extracts the listed columns of a matrix.
fn columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_columns(&idx.iter().map(|&i| m.column(i)).collect::<Vec<_>>())
}

/// Numerical rank of a set of vectors (singular values above `1e-7·σ_max`).
fn numerical_rank(rows: &[DVector<f64>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let mat = DMatrix::<f64>::from_columns(&rows.iter().map(|r| r.column(0)).collect::<Vec<_>>());
    let svd = mat.svd(false, false);
    let smax = svd.singular_values.max();
    if smax <= 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|&&s| s > 1e-7 * smax).count()
}

// ---------------------------------------------------------------------------
// Reduced PSD cones and invariant semidefinite programs
// ---------------------------------------------------------------------------

/// A constant-sized description of the invariant PSD operators on a space:
/// small symmetric blocks whose PSD-ness is equivalent to PSD-ness of the
/// assembled full operator.
#[derive(Debug, Clone)]
pub struct PsdReduction {
    pub structure: BlockStructure,
}

impl PsdReduction {
    /// Side lengths of the reduced PSD blocks (the multiplicities).
    pub fn block_sides(&self) -> Vec<usize> {
        self.structure.blocks.iter().map(|&(m, _)| m).collect()
    }

    /// Cone instances of the reduced description, one PSD cone per block.
    pub fn cones(&self) -> Vec<ConeInstance> {
        self.block_sides().into_iter().map(|side| ConeInstance::Psd { side }).collect()
    }

    /// The linear map of the reduced description: assembles an invariant
    /// operator from small blocks.
    pub fn to_full(&self, xs: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
        self.structure.assemble(xs)
    }

    /// Pulls an invariant operator back to small blocks; fails if the input
    /// does not commute with the action (off-pattern mass above tolerance).
    pub fn to_blocks(&self, full: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
        let (xs, residual) = self.structure.disassemble(full)?;
        if residual > 1e-6 * full.norm().max(1.0) {
            return Err(Error::NonInvariantData(format!(
                "off-pattern mass {residual:.3e} after conjugation"
            )));
        }
        Ok(xs)
    }
}

/// Computes a constant-sized description of the invariant PSD cone on the
/// space of `seq` at level `n`.
pub fn reduce_psd_cone(seq: &ConsistentSequence, n: usize) -> Result<PsdReduction> {
    Ok(PsdReduction { structure: block_diagonalize(seq, n)? })
}

/// A semidefinite program over one invariant PSD matrix variable:
/// optimize `⟨objective, X⟩` subject to `⟨constraints[i].0, X⟩ = constraints[i].1`
/// and `X ⪰ 0`, where all data matrices commute with the group action on the
/// space at level `n` (in orthonormalized coordinates).
#[derive(Debug, Clone)]
pub struct InvariantSdp {
    pub seq: ConsistentSequence,
    pub n: usize,
    pub maximize: bool,
    pub objective: DMatrix<f64>,
    pub constraints: Vec<(DMatrix<f64>, f64)>,
}

/// Row-major upper-triangle index of a symmetric matrix entry.
fn tri(n: usize, i: usize, j: usize) -> usize {
    i * n - (i * i - i) / 2 + (j - i)
}

/// Builds the objective vector for `⟨C, X⟩` over upper-triangle variables.
fn sym_objective(c: &DMatrix<f64>, sign: f64) -> Vec<f64> {
    let n = c.nrows();
    let mut q = vec![0.0; n * (n + 1) / 2];
    for i in 0..n {
        for j in i..n {
            let v = if i == j { c[(i, i)] } else { c[(i, j)] + c[(j, i)] };
            q[tri(n, i, j)] = sign * v;
        }
    }
    q
}

impl InvariantSdp {
    /// Solves the program at full size, without any reduction.
    pub fn solve_full(&self) -> Result<f64> {
        let inst = self.seq.instance(self.n)?;
        let nn = inst.dim;
        let nvar = nn * (nn + 1) / 2;
        let sign = if self.maximize { -1.0 } else { 1.0 };
        let mut trips = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::new();
        for (a, rhs) in &self.constraints {
            let row = b.len();
            for i in 0..nn {
                for j in i..nn {
                    let v = if i == j { a[(i, i)] } else { a[(i, j)] + a[(j, i)] };
                    if v != 0.0 {
                        trips.push((row, tri(nn, i, j), -v));
                    }
                }
            }
            b.push(-*rhs);
            cones.push(ConeInstance::Zero(1));
        }
        let base = b.len();
        for r in 0..nvar {
            trips.push((base + r, r, -1.0));
            b.push(0.0);
        }
        cones.push(ConeInstance::Psd { side: nn });
        let prog = ConicProgram {
            num_vars: nvar,
            objective: sym_objective(&self.objective, sign),
            a: SpMat::from_triplets(b.len(), nvar, trips),
            b,
            cones,
        };
        let sol = prog.solve()?;
        Ok(sign * sol.objective)
    }

    /// Checks that a data matrix commutes with every generator action.
    fn check_invariant(&self, m: &DMatrix<f64>, what: &str) -> Result<()> {
        let inst = self.seq.instance(self.n)?;
        let tol = INVARIANCE_TOL * m.norm().max(1.0);
        for act in &inst.disc_actions {
            let g = to_ortho(&act.to_spmat(), &inst.weights);
            if (&g * m * g.transpose() - m).norm() > tol {
                return Err(Error::NonInvariantData(format!(
                    "{what} is not fixed by a discrete generator"
                )));
            }
        }
        for lie in &inst.lie_actions {
            let l = to_ortho(lie, &inst.weights);
            if (&l * m - m * &l).norm() > tol {
                return Err(Error::NonInvariantData(format!(
                    "{what} does not commute with a continuous generator"
                )));
            }
        }
        Ok(())
    }
}

/// An invariant semidefinite program rewritten over the small block
/// variables of a reduced PSD cone.
#[derive(Debug, Clone)]
pub struct ReducedSdp {
    pub reduction: PsdReduction,
    pub program: ConicProgram,
    pub maximize: bool,
}

impl ReducedSdp {
    /// Solves the reduced program and reports the objective value in the
    /// original (min/max) sense.
    pub fn solve(&self) -> Result<f64> {
        let sol = self.program.solve()?;
        Ok(if self.maximize { -sol.objective } else { sol.objective })
    }

    /// Solves and reassembles the full-size optimal matrix.
    pub fn solve_matrix(&self) -> Result<(f64, DMatrix<f64>)> {
        let sol = self.program.solve()?;
        let value = if self.maximize { -sol.objective } else { sol.objective };
        Ok((value, self.recover(&sol)?))
    }

    fn recover(&self, sol: &Solution) -> Result<DMatrix<f64>> {
        let mut xs = Vec::new();
        let mut off = 0;
        for &side in &self.reduction.block_sides() {
            let mut x = DMatrix::<f64>::zeros(side, side);
            for i in 0..side {
                for j in i..side {
                    let v = sol.x[off + tri(side, i, j)];
                    x[(i, j)] = v;
                    x[(j, i)] = v;
                }
            }
            off += side * (side + 1) / 2;
            xs.push(x);
        }
        self.reduction.to_full(&xs)
    }
}

/// Rewrites an invariant semidefinite program over the block variables of
/// the reduced PSD cone. Objective and constraint matrices must commute with
/// the group action (checked against every generator).
pub fn reduce_program(sdp: &InvariantSdp) -> Result<ReducedSdp> {
    sdp.check_invariant(&sdp.objective, "objective")?;
    for (i, (a, _)) in sdp.constraints.iter().enumerate() {
        sdp.check_invariant(a, &format!("constraint {i}"))?;
    }
    let reduction = reduce_psd_cone(&sdp.seq, sdp.n)?;
    let sides = reduction.block_sides();
    let dims: Vec<usize> = reduction.structure.blocks.iter().map(|&(_, d)| d).collect();
    let nvar: usize = sides.iter().map(|s| s * (s + 1) / 2).sum();
    let sign = if sdp.maximize { -1.0 } else { 1.0 };

    // Partial trace of a full data matrix to one coefficient per block
    // entry: ⟨A, assemble(X)⟩ = Σ_p d_p ⟨Ã_p, X_p⟩ with Ã the disassembled
    // (block-averaged) conjugate of A.
    let compress = |a: &DMatrix<f64>| -> Result<Vec<DMatrix<f64>>> {
        let (xs, _) = reduction.structure.disassemble(a)?;
        Ok(xs)
    };
    let block_objective = compress(&sdp.objective)?;
    let mut q = vec![0.0; nvar];
    {
        let mut off = 0;
        for (p, side) in sides.iter().enumerate() {
            let w = dims[p] as f64;
            for i in 0..*side {
                for j in i..*side {
                    let c = &block_objective[p];
                    let v = if i == j { c[(i, i)] } else { c[(i, j)] + c[(j, i)] };
                    q[off + tri(*side, i, j)] = sign * w * v;
                }
            }
            off += side * (side + 1) / 2;
        }
    }

    let mut trips = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    for (a, rhs) in &sdp.constraints {
        let blocks = compress(a)?;
        let row = b.len();
        let mut off = 0;
        for (p, side) in sides.iter().enumerate() {
            let w = dims[p] as f64;
            for i in 0..*side {
                for j in i..*side {
                    let c = &blocks[p];
                    let v = if i == j { c[(i, i)] } else { c[(i, j)] + c[(j, i)] };
                    if v.abs() > 1e-14 {
                        trips.push((row, off + tri(*side, i, j), -w * v));
                    }
                }
            }
            off += side * (side + 1) / 2;
        }
        b.push(-*rhs);
        cones.push(ConeInstance::Zero(1));
    }
    {
        let mut off = 0;
        for side in &sides {
            let block = side * (side + 1) / 2;
            let base = b.len();
            for r in 0..block {
                trips.push((base + r, off + r, -1.0));
                b.push(0.0);
            }
            cones.push(ConeInstance::Psd { side: *side });
            off += block;
        }
    }
    let program = ConicProgram {
        num_vars: nvar,
        objective: q,
        a: SpMat::from_triplets(b.len(), nvar, trips),
        b,
        cones,
    };
    Ok(ReducedSdp { reduction, program, maximize: sdp.maximize })
}

// ---------------------------------------------------------------------------
// Orbit bases of finite invariant point sets
// ---------------------------------------------------------------------------

/// Orbit decomposition of a finite point set under the group at one level.
#[derive(Debug, Clone)]
pub struct OrbitBasis {
    pub n: usize,
    pub family: GroupFamily,
    /// The closed point set (input points plus any closure completion).
    pub points: Vec<Vec<f64>>,
    /// Index into `points` of each orbit representative (graded-lex minimal).
    pub reps: Vec<usize>,
    /// Orbit index of every point.
    pub orbit_of: Vec<usize>,
    /// Orbit sizes; sum equals `points.len()`.
    pub sizes: Vec<usize>,
    /// Number of points added to close the set under the action (zero when
    /// the input was already closed).
    pub closure_added: usize,
}

impl OrbitBasis {
    pub fn orbit_count(&self) -> usize {
        self.reps.len()
    }

    /// 0/1 indicator vector of one orbit over the point list.
    pub fn indicator(&self, orbit: usize) -> Vec<f64> {
        self.orbit_of.iter().map(|&o| if o == orbit { 1.0 } else { 0.0 }).collect()
    }

    /// Per-point sums of each orbit (used in moment conditions).
    pub fn orbit_sums(&self) -> Vec<Vec<f64>> {
        let mut sums = vec![vec![0.0; self.n]; self.orbit_count()];
        for (p, &o) in self.orbit_of.iter().enumerate() {
            for (s, v) in sums[o].iter_mut().zip(&self.points[p]) {
                *s += v;
            }
        }
        sums
    }

    /// Compresses an invariant vector over the points to one value per
    /// orbit; fails if the vector is not constant on some orbit.
    pub fn compress(&self, full: &[f64]) -> Result<Vec<f64>> {
        if full.len() != self.points.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} entries, got {}",
                self.points.len(),
                full.len()
            )));
        }
        let mut vals = vec![f64::NAN; self.orbit_count()];
        let scale = full.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for (p, &o) in self.orbit_of.iter().enumerate() {
            if vals[o].is_nan() {
                vals[o] = full[p];
            } else if (vals[o] - full[p]).abs() > 1e-9 * scale {
                return Err(Error::NonInvariantData(format!(
                    "vector is not constant on orbit {o}"
                )));
            }
        }
        Ok(vals)
    }

    /// Expands per-orbit values to a vector over all points.
    pub fn expand(&self, hat: &[f64]) -> Result<Vec<f64>> {
        if hat.len() != self.orbit_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} orbit values, got {}",
                self.orbit_count(),
                hat.len()
            )));
        }
        Ok(self.orbit_of.iter().map(|&o| hat[o]).collect())
    }
}

/// Rounded integer key for hashing points up to numerical noise.
fn point_key(p: &[f64]) -> Vec<i64> {
    p.iter().map(|v| (v * 1e9).round() as i64).collect()
}

/// Graded-lex order key: total coordinate sum first, then lexicographic.
fn graded_lex_key(p: &[f64]) -> (i64, Vec<i64>) {
    let k = point_key(p);
    (k.iter().sum(), k)
}

/// Decomposes a finite point set into orbits under the group family at level
/// `n`. The set is closed under the generator action first (a warning is
/// printed if points had to be added); representatives are the graded-lex
/// minimal points of each orbit.
pub fn orbit_basis(points: &[Vec<f64>], family: GroupFamily, n: usize) -> Result<OrbitBasis> {
    if !family.is_finite() {
        return Err(Error::UnsupportedGroup(format!(
            "orbit bases require a finite family, got {}",
            family.name()
        )));
    }
    for p in points {
        if p.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "point of length {} at level {n}",
                p.len()
            )));
        }
    }
    let gens = family.discrete_generators(n)?;
    let mut pts: Vec<Vec<f64>> = Vec::new();
    let mut index: std::collections::HashMap<Vec<i64>, usize> = std::collections::HashMap::new();
    for p in points {
        let key = point_key(p);
        index.entry(key).or_insert_with(|| {
            pts.push(p.clone());
            pts.len() - 1
        });
    }
    let input_count = pts.len();
    // Close under the action and union orbits at the same time.
    let mut uf = UnionFind::new(pts.len());
    let mut frontier: Vec<usize> = (0..pts.len()).collect();
    while let Some(i) = frontier.pop() {
        for g in &gens {
            let img = g.apply_vec(&pts[i]);
            let key = point_key(&img);
            let j = match index.get(&key) {
                Some(&j) => j,
                None => {
                    pts.push(img);
                    uf.0.push(pts.len() - 1);
                    index.insert(key, pts.len() - 1);
                    frontier.push(pts.len() - 1);
                    pts.len() - 1
                }
            };
            uf.union(i, j);
        }
    }
    let closure_added = pts.len() - input_count;
    if closure_added > 0 {
        eprintln!(
            "warning: point set was not closed under the action; added {closure_added} points"
        );
    }
    let mut orbit_of = vec![usize::MAX; pts.len()];
    let mut reps: Vec<usize> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    let mut root_to_orbit: std::collections::HashMap<usize, usize> =
        std::collections::HashMap::new();
    for i in 0..pts.len() {
        let r = uf.find(i);
        let o = *root_to_orbit.entry(r).or_insert_with(|| {
            reps.push(i);
            sizes.push(0);
            reps.len() - 1
        });
        orbit_of[i] = o;
        sizes[o] += 1;
        if graded_lex_key(&pts[i]) < graded_lex_key(&pts[reps[o]]) {
            reps[o] = i;
        }
    }
    // Deterministic orbit order: by representative in graded-lex.
    let mut order: Vec<usize> = (0..reps.len()).collect();
    order.sort_by_key(|&o| graded_lex_key(&pts[reps[o]]));
    let mut rank = vec![0usize; reps.len()];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    let reps = order.iter().map(|&o| reps[o]).collect();
    let sizes = order.iter().map(|&o| sizes[o]).collect();
    let orbit_of = orbit_of.into_iter().map(|o| rank[o]).collect();
    Ok(OrbitBasis { n, family, points: pts, reps, orbit_of, sizes, closure_added })
}

// ---------------------------------------------------------------------------
// Relative-entropy cones over invariant point sets
// ---------------------------------------------------------------------------

/// Relative entropy `D(ν, c) = Σ ν_i log(ν_i / c_i)` (with `0 log 0 = 0`).
pub fn relative_entropy(nu: &[f64], c: &[f64]) -> f64 {
    nu.iter()
        .zip(c)
        .map(|(&v, &d)| if v <= 0.0 { 0.0 } else { v * (v / d).ln() })
        .sum()
}

/// Constant-sized description of the invariant relative-entropy cone over a
/// finite invariant point set: one weighted relative-entropy constraint with
/// one term per orbit.
#[derive(Debug, Clone)]
pub struct ReReduction {
    pub orbits: OrbitBasis,
}

impl ReReduction {
    /// Value of the reduced constraint on per-orbit values: the orbit-size
    /// weighted relative entropy `Σ_j |orbit_j| ν̂_j log(ν̂_j/ĉ_j)`, which
    /// equals the full `D(ν, c)` on the expanded invariant vectors.
    pub fn reduced_value(&self, nu_hat: &[f64], c_hat: &[f64]) -> f64 {
        self.orbits
            .sizes
            .iter()
            .zip(nu_hat)
            .zip(c_hat)
            .map(|((&s, &v), &d)| if v <= 0.0 { 0.0 } else { s as f64 * v * (v / d).ln() })
            .sum()
    }

    /// Rows of a [`ConeInstance::RelEntropy`] block realizing the weighted
    /// constraint: both ν̂ and ĉ entries are scaled by the orbit size, which
    /// turns `Σ_j s_j ν̂_j log(ν̂_j/ĉ_j) ≤ t` into an unweighted relative
    /// entropy in the scaled variables.
    pub fn orbit_weights(&self) -> Vec<f64> {
        self.orbits.sizes.iter().map(|&s| s as f64).collect()
    }
}

/// Builds the orbit reduction of the relative-entropy cone over a finite
/// invariant point set.
pub fn reduce_relative_entropy(
    points: &[Vec<f64>],
    family: GroupFamily,
    n: usize,
) -> Result<ReReduction> {
    Ok(ReReduction { orbits: orbit_basis(points, family, n)? })
}

// ---------------------------------------------------------------------------
// SAGE certificates for invariant signomials
// ---------------------------------------------------------------------------

/// A signomial nonnegativity instance: `f(x) = Σ_α c_α e^{⟨α,x⟩} +
/// Σ_β t_β e^{⟨β,x⟩}` with `c ≥ 0` demanded on the support `a` and arbitrary
/// signs allowed on `b`. Membership in the SAGE cone is certified by one
/// relative-entropy block per element of `b`.
#[derive(Debug, Clone)]
pub struct SageInstance {
    pub family: GroupFamily,
    pub n: usize,
    /// Support of the nonnegative terms.
    pub a: Vec<Vec<f64>>,
    /// Support of the possibly negative terms.
    pub b: Vec<Vec<f64>>,
    /// Coefficients on `a` (must be invariant for the reduction).
    pub c: Vec<f64>,
    /// Coefficients on `b`.
    pub t: Vec<f64>,
}

fn feasibility_outcome(result: Result<Solution>) -> Result<bool> {
    match result {
        Ok(_) => Ok(true),
        Err(Error::Infeasible) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Decides full-size SAGE membership: for every β there must exist
/// `ν^{(β)} ≥ 0` and `c^{(β)} ≥ 0` with `D(ν^{(β)}, c^{(β)}) ≤ t_β`,
/// `Σ_α ν^{(β)}_α (α − β) = 0`, and `Σ_β c^{(β)} = c`.
pub fn sage_feasible_full(inst: &SageInstance) -> Result<bool> {
    let na = inst.a.len();
    let nb = inst.b.len();
    if inst.c.len() != na || inst.t.len() != nb {
        return Err(Error::ShapeMismatch(
            "coefficient lengths must match the supports".to_string(),
        ));
    }
    if nb == 0 {
        return Ok(inst.c.iter().all(|&v| v >= -1e-12));
    }
    // Variables: for each β, ν^{(β)} (na) then c^{(β)} (na).
    let nvar = nb * 2 * na;
    let mut trips = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    for (bi, beta) in inst.b.iter().enumerate() {
        let nu0 = bi * 2 * na;
        let c0 = nu0 + na;
        // Relative-entropy block: rows ν, rows c, then the budget t_β.
        for k in 0..na {
            trips.push((b.len(), nu0 + k, -1.0));
            b.push(0.0);
        }
        for k in 0..na {
            trips.push((b.len(), c0 + k, -1.0));
            b.push(0.0);
        }
        b.push(inst.t[bi]);
        cones.push(ConeInstance::RelEntropy { m: na });
        // Moment conditions: Σ_α ν_α (α − β) = 0.
        for coord in 0..inst.n {
            let row = b.len();
            for (k, alpha) in inst.a.iter().enumerate() {
                let v = alpha[coord] - beta[coord];
                if v.abs() > 1e-14 {
                    trips.push((row, nu0 + k, -v));
                }
            }
            b.push(0.0);
        }
        cones.push(ConeInstance::Zero(inst.n));
    }
    // Matching: Σ_β c^{(β)}_α = c_α.
    for k in 0..na {
        let row = b.len();
        for bi in 0..nb {
            trips.push((row, bi * 2 * na + na + k, -1.0));
        }
        b.push(-inst.c[k]);
    }
    cones.push(ConeInstance::Zero(na));
    let prog = ConicProgram {
        num_vars: nvar,
        objective: vec![0.0; nvar],
        a: SpMat::from_triplets(b.len(), nvar, trips),
        b,
        cones,
    };
    feasibility_outcome(prog.solve())
}

/// The symmetry-reduced SAGE feasibility program: one weighted
/// relative-entropy block per orbit of candidate negative terms, with inner
/// variables indexed by orbits of the support under the representative's
/// stabilizer.
#[derive(Debug, Clone)]
pub struct SageReduction {
    /// Orbit decomposition of the nonnegative support under the full group.
    pub a_orbits: OrbitBasis,
    /// Orbit decomposition of the candidate negative support.
    pub b_orbits: OrbitBasis,
    /// The feasibility program (empty when the reduction decided directly).
    pub program: Option<ConicProgram>,
    /// Direct outcome for degenerate instances (no negative support).
    pub direct: Option<bool>,
}

impl SageReduction {
    /// Decides membership from the reduced program.
    pub fn feasible(&self) -> Result<bool> {
        if let Some(ans) = self.direct {
            return Ok(ans);
        }
        feasibility_outcome(self.program.as_ref().unwrap().solve())
    }
}

/// Builds the symmetry-reduced SAGE feasibility program for an invariant
/// instance. Coefficients must be constant on orbits of their supports; the
/// supports must be closed under the group action.
pub fn reduce_sage(inst: &SageInstance) -> Result<SageReduction> {
    let a_orbits = orbit_basis(&inst.a, inst.family, inst.n)?;
    if a_orbits.closure_added > 0 {
        return Err(Error::NonInvariantSupport(
            "nonnegative support is not closed under the action".to_string(),
        ));
    }
    let b_orbits = orbit_basis(&inst.b, inst.family, inst.n)?;
    if b_orbits.closure_added > 0 {
        return Err(Error::NonInvariantSupport(
            "candidate negative support is not closed under the action".to_string(),
        ));
    }
    let c_hat = a_orbits
        .compress(&inst.c)
        .map_err(|_| Error::NonInvariantData("c is not constant on orbits".to_string()))?;
    if inst.b.is_empty() {
        return Ok(SageReduction {
            direct: Some(c_hat.iter().all(|&v| v >= -1e-12)),
            program: None,
            a_orbits,
            b_orbits,
        });
    }
    let t_hat = b_orbits
        .compress(&inst.t)
        .map_err(|_| Error::NonInvariantData("t is not constant on orbits".to_string()))?;

    // Enumerate the full group once; stabilizers are cut out from it.
    let gens = inst.family.discrete_generators(inst.n)?;
    let group = enumerate_group(&gens, inst.n, 1 << 21).ok_or_else(|| {
        Error::UnsupportedGroup(format!(
            "group too large to enumerate for SAGE reduction at level {}",
            inst.n
        ))
    })?;

    // Per β-orbit representative: orbits of the support under Stab(β).
    struct RepBlock {
        stab_orbits: OrbitLocal,
        orbit_size: usize,
        t_value: f64,
    }
    struct OrbitLocal {
        sizes: Vec<usize>,
        sums: Vec<Vec<f64>>,
        full_orbit_of: Vec<usize>,
    }
    let mut blocks: Vec<RepBlock> = Vec::new();
    for (oi, &rep) in b_orbits.reps.iter().enumerate() {
        let beta = &b_orbits.points[rep];
        let beta_key = point_key(beta);
        let stab: Vec<&SignedPerm> =
            group.iter().filter(|g| point_key(&g.apply_vec(beta)) == beta_key).collect();
        // Orbits of the A-points under the stabilizer.
        let mut uf = UnionFind::new(a_orbits.points.len());
        let mut key_to_idx: std::collections::HashMap<Vec<i64>, usize> =
            std::collections::HashMap::new();
        for (i, p) in a_orbits.points.iter().enumerate() {
            key_to_idx.insert(point_key(p), i);
        }
        for (i, p) in a_orbits.points.iter().enumerate() {
            for g in &stab {
                let img = g.apply_vec(p);
                let j = *key_to_idx.get(&point_key(&img)).ok_or_else(|| {
                    Error::NonInvariantSupport(
                        "support is not closed under the stabilizer".to_string(),
                    )
                })?;
                uf.union(i, j);
            }
        }
        let mut orbit_of = vec![usize::MAX; a_orbits.points.len()];
        let mut sizes: Vec<usize> = Vec::new();
        let mut sums: Vec<Vec<f64>> = Vec::new();
        let mut full_of: Vec<usize> = Vec::new();
        let mut root_map: std::collections::HashMap<usize, usize> =
            std::collections::HashMap::new();
        for i in 0..a_orbits.points.len() {
            let r = uf.find(i);
            let o = *root_map.entry(r).or_insert_with(|| {
                sizes.push(0);
                sums.push(vec![0.0; inst.n]);
                full_of.push(a_orbits.orbit_of[i]);
                sizes.len() - 1
            });
            orbit_of[i] = o;
            sizes[o] += 1;
            for (s, v) in sums[o].iter_mut().zip(&a_orbits.points[i]) {
                *s += v;
            }
        }
        blocks.push(RepBlock {
            stab_orbits: OrbitLocal { sizes, sums, full_orbit_of: full_of },
            orbit_size: b_orbits.sizes[oi],
            t_value: t_hat[oi],
        });
    }

    // Variables: per representative, ν̂ then ĉ over its stabilizer orbits.
    let mut var_off = Vec::with_capacity(blocks.len());
    let mut nvar = 0usize;
    for blk in &blocks {
        var_off.push(nvar);
        nvar += 2 * blk.stab_orbits.sizes.len();
    }
    let mut trips = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    for (bi, blk) in blocks.iter().enumerate() {
        let m = blk.stab_orbits.sizes.len();
        let nu0 = var_off[bi];
        let c0 = nu0 + m;
        // Weighted relative entropy: scale ν̂_j and ĉ_j by the orbit size so
        // the unweighted cone computes Σ_j s_j ν̂_j log(ν̂_j/ĉ_j) ≤ t_β.
        for j in 0..m {
            trips.push((b.len(), nu0 + j, -(blk.stab_orbits.sizes[j] as f64)));
            b.push(0.0);
        }
        for j in 0..m {
            trips.push((b.len(), c0 + j, -(blk.stab_orbits.sizes[j] as f64)));
            b.push(0.0);
        }
        b.push(blk.t_value);
        cones.push(ConeInstance::RelEntropy { m });
        // Moment conditions: Σ_j ν̂_j (σ_j − s_j β) = 0.
        let beta = &b_orbits.points[b_orbits.reps[bi]];
        for coord in 0..inst.n {
            let row = b.len();
            for j in 0..m {
                let v = blk.stab_orbits.sums[j][coord]
                    - blk.stab_orbits.sizes[j] as f64 * beta[coord];
                if v.abs() > 1e-12 {
                    trips.push((row, nu0 + j, -v));
                }
            }
            b.push(0.0);
        }
        cones.push(ConeInstance::Zero(inst.n));
    }
    // Matching per full orbit k of the support: summing the equivariant
    // extension of the per-representative certificates over the whole group
    // gives Σ_β |orbit(β)| Σ_{j ⊆ k} s_j ĉ^{(β)}_j = Σ_{α∈k} c_α.
    for (k, (&sz, &ch)) in a_orbits.sizes.iter().zip(&c_hat).enumerate() {
        let row = b.len();
        for (bi, blk) in blocks.iter().enumerate() {
            let m = blk.stab_orbits.sizes.len();
            for j in 0..m {
                if blk.stab_orbits.full_orbit_of[j] == k {
                    let coef = blk.orbit_size as f64 * blk.stab_orbits.sizes[j] as f64;
                    trips.push((row, var_off[bi] + m + j, -coef));
                }
            }
        }
        b.push(-(sz as f64) * ch);
    }
    cones.push(ConeInstance::Zero(a_orbits.orbit_count()));
    let program = ConicProgram {
        num_vars: nvar,
        objective: vec![0.0; nvar],
        a: SpMat::from_triplets(b.len(), nvar, trips),
        b,
        cones,
    };
    Ok(SageReduction { a_orbits, b_orbits, program: Some(program), direct: None })
}

// ---------------------------------------------------------------------------
// Helpers for building invariant test data
// ---------------------------------------------------------------------------

/// Projects a symmetric matrix (orthonormalized coordinates) onto the
/// invariant symmetric matrices, i.e. onto the symmetric part of the
/// commutant. Useful for generating invariant program data.
pub fn invariant_projection_sym(
    seq: &ConsistentSequence,
    n: usize,
    m: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let inst = seq.instance(n)?;
    let basis = equivariant_basis(seq, seq, n)?;
    let mut ortho: Vec<DMatrix<f64>> = Vec::new();
    for e in &basis.elements {
        let d = to_ortho(e, &inst.weights);
        let mut s = (&d + d.transpose()) * 0.5;
        for prev in &ortho {
            let c = (prev.transpose() * &s).trace();
            s -= prev * c;
        }
        let norm = s.norm();
        if norm > 1e-10 {
            ortho.push(s / norm);
        }
    }
    let mut out = DMatrix::<f64>::zeros(m.nrows(), m.ncols());
    for e in &ortho {
        let c = (e.transpose() * m).trace();
        out += e * c;
    }
    Ok(out)
}

/// A deterministic random symmetric invariant matrix, for tests and demos.
pub fn random_invariant_sym(
    seq: &ConsistentSequence,
    n: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let inst = seq.instance(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DMatrix::<f64>::from_fn(inst.dim, inst.dim, |_, _| rng.gen_range(-1.0..1.0));
    invariant_projection_sym(seq, n, &((&raw + raw.transpose()) * 0.5))
}
