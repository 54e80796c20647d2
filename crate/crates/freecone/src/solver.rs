//! Conic-program contract and the adapter to the interior-point backend.
//!
//! Programs are stated as `min qᵀx  s.t.  Ax + s = b, s ∈ K` where `K` is a
//! product of zero, nonnegative, PSD, exponential, and relative-entropy
//! blocks. PSD blocks use the same graded-lex symmetric-matrix coordinates
//! as the sequence algebra (upper triangle, row-major, one entry per pair);
//! the adapter converts to the backend's scaled-triangle convention.
//! Relative-entropy blocks are lowered to exponential cones plus one linear
//! aggregation row before the backend sees them.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::error::{Error, Result};
use crate::sparse::SpMat;

// ---------------------------------------------------------------------------
// Symbolic sizes
// ---------------------------------------------------------------------------

/// An integer-valued function of the level `n`, e.g. `2n+1` or `C(n+2,2)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SizeExpr {
    Const(i64),
    N,
    Add(Box<SizeExpr>, Box<SizeExpr>),
    Sub(Box<SizeExpr>, Box<SizeExpr>),
    Mul(Box<SizeExpr>, Box<SizeExpr>),
    /// Binomial coefficient `C(a, b)`.
    Binom(Box<SizeExpr>, Box<SizeExpr>),
    /// `2^a`.
    Pow2(Box<SizeExpr>),
}

impl SizeExpr {
    pub fn eval(&self, n: usize) -> Result<usize> {
        let v = self.eval_i(n as i64)?;
        if v < 0 {
            return Err(Error::Parse(format!("size expression negative at n={n}")));
        }
        Ok(v as usize)
    }

    fn eval_i(&self, n: i64) -> Result<i64> {
        Ok(match self {
            SizeExpr::Const(c) => *c,
            SizeExpr::N => n,
            SizeExpr::Add(a, b) => a.eval_i(n)? + b.eval_i(n)?,
            SizeExpr::Sub(a, b) => a.eval_i(n)? - b.eval_i(n)?,
            SizeExpr::Mul(a, b) => a.eval_i(n)? * b.eval_i(n)?,
            SizeExpr::Binom(a, b) => {
                let (a, b) = (a.eval_i(n)?, b.eval_i(n)?);
                if b < 0 || a < 0 {
                    0
                } else {
                    let mut acc: i64 = 1;
                    for i in 0..b {
                        acc = acc * (a - i) / (i + 1);
                    }
                    acc
                }
            }
            SizeExpr::Pow2(a) => {
                let e = a.eval_i(n)?;
                if !(0..=62).contains(&e) {
                    return Err(Error::Parse(format!("2^{e} out of range")));
                }
                1i64 << e
            }
        })
    }

    pub fn parse(text: &str) -> Result<SizeExpr> {
        let mut p = SizeParser { s: text.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(Error::Parse(format!("trailing input in size expression '{text}'")));
        }
        Ok(e)
    }
}

impl std::fmt::Display for SizeExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SizeExpr::Const(c) => write!(f, "{c}"),
            SizeExpr::N => write!(f, "n"),
            SizeExpr::Add(a, b) => write!(f, "{a}+{b}"),
            SizeExpr::Sub(a, b) => write!(f, "{a}-{b}"),
            SizeExpr::Mul(a, b) => match (a.as_ref(), b.as_ref()) {
                (SizeExpr::Const(c), SizeExpr::N) => write!(f, "{c}n"),
                _ => write!(f, "{a}*{b}"),
            },
            SizeExpr::Binom(a, b) => write!(f, "C({a},{b})"),
            SizeExpr::Pow2(a) => write!(f, "2^{a}"),
        }
    }
}

struct SizeParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> SizeParser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<SizeExpr> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = SizeExpr::Add(Box::new(acc), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = SizeExpr::Sub(Box::new(acc), Box::new(self.term()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<SizeExpr> {
        let mut acc = self.factor()?;
        while let Some(b'*') = self.peek() {
            self.pos += 1;
            acc = SizeExpr::Mul(Box::new(acc), Box::new(self.factor()?));
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<SizeExpr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(b'n') => {
                self.pos += 1;
                Ok(SizeExpr::N)
            }
            Some(b'C') => {
                self.pos += 1;
                self.expect(b'(')?;
                let a = self.expr()?;
                self.expect(b',')?;
                let b = self.expr()?;
                self.expect(b')')?;
                Ok(SizeExpr::Binom(Box::new(a), Box::new(b)))
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let v: i64 = std::str::from_utf8(&self.s[start..self.pos])
                    .unwrap()
                    .parse()
                    .map_err(|_| Error::Parse("bad integer".into()))?;
                let base = SizeExpr::Const(v);
                // Implicit products and powers: "2n", "2^n".
                match self.s.get(self.pos) {
                    Some(b'n') => {
                        self.pos += 1;
                        Ok(SizeExpr::Mul(Box::new(base), Box::new(SizeExpr::N)))
                    }
                    Some(b'^') if v == 2 => {
                        self.pos += 1;
                        Ok(SizeExpr::Pow2(Box::new(self.factor()?)))
                    }
                    _ => Ok(base),
                }
            }
            other => Err(Error::Parse(format!(
                "unexpected token {:?} in size expression",
                other.map(|c| c as char)
            ))),
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Parse(format!("expected '{}' in size expression", c as char)))
        }
    }
}

// ---------------------------------------------------------------------------
// Cones
// ---------------------------------------------------------------------------

/// Cone block kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Zero,
    NonNeg,
    /// PSD cone of symmetric matrices; the size expression is the matrix
    /// side, and the block occupies `side(side+1)/2` rows.
    Psd,
    /// `count` exponential cones `{(x,y,z) : y e^{x/y} ≤ z}`, 3 rows each.
    Exp,
    /// Relative-entropy cone `{(ν,c,t) : ν,c ≥ 0, Σ ν_i log(ν_i/c_i) ≤ t}`;
    /// the size expression is `m = |ν|`, and the block occupies `2m+1` rows.
    RelEntropy,
    /// Doubly-nonnegative cone (PSD and entrywise nonnegative); the size
    /// expression is the matrix side, and the block occupies
    /// `side(side+1)/2` rows.
    Dnn,
    /// PSD matrices of Kronecker form `Σ S_κ ⊗ X_μ` with `S_κ ∈ 𝕊^k` fixed
    /// per block and `X_μ ∈ 𝕊^m`; coordinates are pairs (κ, μ) of
    /// graded-lex symmetric indices, κ-major. The parameter is `k` and the
    /// size expression is `m`; the block occupies
    /// `k(k+1)/2 · m(m+1)/2` rows and constrains the assembled `km × km`
    /// symmetric matrix to be PSD.
    PsdKron(usize),
}

impl ConeKind {
    pub fn name(&self) -> &'static str {
        match self {
            ConeKind::Zero => "zero",
            ConeKind::NonNeg => "nonneg",
            ConeKind::Psd => "psd",
            ConeKind::Exp => "exp",
            ConeKind::RelEntropy => "relent",
            ConeKind::Dnn => "dnn",
            ConeKind::PsdKron(_) => "psdkron",
        }
    }

    pub fn parse(s: &str) -> Result<ConeKind> {
        match s {
            "zero" => Ok(ConeKind::Zero),
            "nonneg" => Ok(ConeKind::NonNeg),
            "psd" => Ok(ConeKind::Psd),
            "exp" => Ok(ConeKind::Exp),
            "relent" => Ok(ConeKind::RelEntropy),
            "dnn" => Ok(ConeKind::Dnn),
            other => Err(Error::Parse(format!("unknown cone kind '{other}'"))),
        }
    }
}

/// A symbolic cone block: kind plus size expression in the level `n`.
#[derive(Debug, Clone)]
pub struct ConeBlock {
    pub kind: ConeKind,
    pub size: SizeExpr,
}

/// An ordered list of symbolic cone blocks.
#[derive(Debug, Clone)]
pub struct ConeSpec {
    pub blocks: Vec<ConeBlock>,
}

impl ConeSpec {
    /// Instantiates the blocks at level `n`.
    pub fn at_level(&self, n: usize) -> Result<Vec<ConeInstance>> {
        self.blocks
            .iter()
            .map(|b| {
                let s = b.size.eval(n)?;
                Ok(match b.kind {
                    ConeKind::Zero => ConeInstance::Zero(s),
                    ConeKind::NonNeg => ConeInstance::NonNeg(s),
                    ConeKind::Psd => ConeInstance::Psd { side: s },
                    ConeKind::Exp => ConeInstance::Exp(s),
                    ConeKind::RelEntropy => ConeInstance::RelEntropy { m: s },
                    ConeKind::Dnn => ConeInstance::Dnn { side: s },
                    ConeKind::PsdKron(k) => ConeInstance::PsdKron { k, side: s },
                })
            })
            .collect()
    }

    /// Total row dimension at level `n`.
    pub fn dim(&self, n: usize) -> Result<usize> {
        Ok(self.at_level(n)?.iter().map(|c| c.rows()).sum())
    }

    pub fn to_text(&self) -> String {
        self.blocks
            .iter()
            .map(|b| match b.kind {
                ConeKind::PsdKron(k) => format!("psdkron({k};{})", b.size),
                _ => format!("{}({})", b.kind.name(), b.size),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Parses a whitespace-separated list like `nonneg(2n+1) zero(n)`.
    pub fn parse(text: &str) -> Result<ConeSpec> {
        let mut blocks = Vec::new();
        for tok in text.split_whitespace() {
            let open = tok
                .find('(')
                .ok_or_else(|| Error::Parse(format!("cone block '{tok}' missing '('")))?;
            if !tok.ends_with(')') {
                return Err(Error::Parse(format!("cone block '{tok}' missing ')'")));
            }
            let name = &tok[..open];
            let args = &tok[open + 1..tok.len() - 1];
            let (kind, size) = if name == "psdkron" {
                let (k_text, m_text) = args.split_once(';').ok_or_else(|| {
                    Error::Parse("psdkron block needs 'k;size' arguments".into())
                })?;
                let k: usize = k_text
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse("psdkron k must be an integer".into()))?;
                (ConeKind::PsdKron(k), SizeExpr::parse(m_text)?)
            } else {
                (ConeKind::parse(name)?, SizeExpr::parse(args)?)
            };
            blocks.push(ConeBlock { kind, size });
        }
        Ok(ConeSpec { blocks })
    }
}

/// A concrete cone block at one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeInstance {
    Zero(usize),
    NonNeg(usize),
    Psd { side: usize },
    Exp(usize),
    RelEntropy { m: usize },
    Dnn { side: usize },
    PsdKron { k: usize, side: usize },
    /// Second-order cone `{(r, v) : ‖v‖₂ ≤ r}` of total dimension `size`;
    /// used internally by norm-penalized programs, not part of the symbolic
    /// cone language.
    Soc(usize),
}

impl ConeInstance {
    /// Number of rows the block occupies in the program.
    pub fn rows(&self) -> usize {
        match self {
            ConeInstance::Zero(s) | ConeInstance::NonNeg(s) | ConeInstance::Soc(s) => *s,
            ConeInstance::Psd { side } | ConeInstance::Dnn { side } => side * (side + 1) / 2,
            ConeInstance::Exp(k) => 3 * k,
            ConeInstance::RelEntropy { m } => 2 * m + 1,
            ConeInstance::PsdKron { k, side } => {
                (k * (k + 1) / 2) * (side * (side + 1) / 2)
            }
        }
    }

    /// Whether the block needs rewriting before the backend sees it.
    fn needs_lowering(&self) -> bool {
        matches!(
            self,
            ConeInstance::RelEntropy { .. }
                | ConeInstance::Dnn { .. }
                | ConeInstance::PsdKron { .. }
        )
    }
}

// ---------------------------------------------------------------------------
// Programs
// ---------------------------------------------------------------------------

/// `min qᵀx  s.t.  Ax + s = b, s ∈ K`.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub a: SpMat,
    pub b: Vec<f64>,
    pub cones: Vec<ConeInstance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    AlmostOptimal,
}

/// A solution: primal variables, slacks, duals (in the program's own row
/// coordinates), and objective value.
///
/// For PSD blocks the dual rows are scaled so that the plain dot product of
/// `dual` with any slack vector in program coordinates equals the matrix
/// pairing `Tr(S Z)`: the off-diagonal dual entry at row `(i,j)` is `2·Z_ij`.
#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub dual: Vec<f64>,
    pub objective: f64,
}

impl ConicProgram {
    pub fn validate(&self) -> Result<()> {
        let rows: usize = self.cones.iter().map(|c| c.rows()).sum();
        if self.a.nrows() != rows || self.a.ncols() != self.num_vars {
            return Err(Error::ShapeMismatch(format!(
                "A is {}×{}, expected {}×{}",
                self.a.nrows(),
                self.a.ncols(),
                rows,
                self.num_vars
            )));
        }
        if self.b.len() != rows || self.objective.len() != self.num_vars {
            return Err(Error::ShapeMismatch("b/objective length mismatch".into()));
        }
        Ok(())
    }

    /// Solves the program with the backend.
    pub fn solve(&self) -> Result<Solution> {
        self.validate()?;
        let lowered = self.lower();
        lowered.solve_lowered(self)
    }

    /// Rewrites blocks the backend does not support natively:
    /// relative-entropy blocks become exponential cones with auxiliary
    /// variables `q_i` and the aggregation row `Σ q_i ≤ t`;
    /// doubly-nonnegative blocks become a PSD block plus a duplicated
    /// nonnegative block; Kronecker-PSD blocks become one large PSD block
    /// whose entries replicate the block coordinates.
    fn lower(&self) -> LoweredProgram {
        if !self.cones.iter().any(|c| c.needs_lowering()) {
            return LoweredProgram {
                program: self.clone(),
                s_map: (0..self.b.len()).collect(),
                dual_rows: (0..self.b.len()).map(|r| vec![r]).collect(),
            };
        }
        let nv = self.num_vars;
        let num_aux: usize = self
            .cones
            .iter()
            .map(|c| if let ConeInstance::RelEntropy { m } = c { *m } else { 0 })
            .sum();
        let mut trips: Vec<(usize, usize, f64)> = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::new();
        let mut s_map = vec![usize::MAX; self.b.len()];
        let mut dual_rows: Vec<Vec<usize>> = vec![Vec::new(); self.b.len()];
        // Collect A by original row for re-emission.
        let mut rows_of_a: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.a.nrows()];
        for (r, c, v) in self.a.iter() {
            rows_of_a[r].push((c, v));
        }
        // Emits a copy of an original row; records it as a dual contributor
        // and, on first emission, as the slack carrier.
        macro_rules! emit {
            ($src:expr) => {{
                let new_r = b.len();
                if s_map[$src] == usize::MAX {
                    s_map[$src] = new_r;
                }
                dual_rows[$src].push(new_r);
                for &(c, v) in &rows_of_a[$src] {
                    trips.push((new_r, c, v));
                }
                b.push(self.b[$src]);
            }};
        }
        let tri = |side: usize, i: usize, j: usize| i * side - (i * i - i) / 2 + (j - i);
        let mut orig_off = 0usize;
        let mut aux_off = nv;
        for cone in &self.cones {
            match cone {
                ConeInstance::RelEntropy { m } => {
                    let m = *m;
                    // Exponential triples (−q_i, ν_i, c_i).
                    for i in 0..m {
                        // Row for −q_i: s = 0 − q_i.
                        trips.push((b.len(), aux_off + i, 1.0));
                        b.push(0.0);
                        emit!(orig_off + i);
                        emit!(orig_off + m + i);
                    }
                    cones.push(ConeInstance::Exp(m));
                    // Aggregation: t − Σ q_i ≥ 0 where t is the last block row.
                    let t_row = orig_off + 2 * m;
                    emit!(t_row);
                    let new_r = b.len() - 1;
                    for i in 0..m {
                        trips.push((new_r, aux_off + i, 1.0));
                    }
                    cones.push(ConeInstance::NonNeg(1));
                    aux_off += m;
                }
                ConeInstance::Dnn { side } => {
                    let block = side * (side + 1) / 2;
                    for r in 0..block {
                        emit!(orig_off + r);
                    }
                    cones.push(ConeInstance::Psd { side: *side });
                    for r in 0..block {
                        emit!(orig_off + r);
                    }
                    cones.push(ConeInstance::NonNeg(block));
                }
                ConeInstance::PsdKron { k, side } => {
                    let (k, m) = (*k, *side);
                    let mblock = m * (m + 1) / 2;
                    let big = k * m;
                    for p in 0..big {
                        for q in p..big {
                            let (a1, i1) = (p / m, p % m);
                            let (b1, j1) = (q / m, q % m);
                            let kap = tri(k, a1.min(b1), a1.max(b1));
                            let mu = tri(m, i1.min(j1), i1.max(j1));
                            emit!(orig_off + kap * mblock + mu);
                        }
                    }
                    cones.push(ConeInstance::Psd { side: big });
                }
                other => {
                    for i in 0..other.rows() {
                        emit!(orig_off + i);
                    }
                    cones.push(*other);
                }
            }
            orig_off += cone.rows();
        }
        let rows = b.len();
        let mut objective = self.objective.clone();
        objective.resize(nv + num_aux, 0.0);
        LoweredProgram {
            program: ConicProgram {
                num_vars: nv + num_aux,
                objective,
                a: SpMat::from_triplets(rows, nv + num_aux, trips),
                b,
                cones,
            },
            s_map,
            dual_rows,
        }
    }

    /// Dumps the program in a sparse text format for debugging.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        use std::fmt::Write;
        writeln!(out, "vars {}", self.num_vars).unwrap();
        let cones: Vec<String> = self
            .cones
            .iter()
            .map(|c| match c {
                ConeInstance::Zero(s) => format!("zero({s})"),
                ConeInstance::NonNeg(s) => format!("nonneg({s})"),
                ConeInstance::Psd { side } => format!("psd({side})"),
                ConeInstance::Exp(k) => format!("exp({k})"),
                ConeInstance::RelEntropy { m } => format!("relent({m})"),
                ConeInstance::Dnn { side } => format!("dnn({side})"),
                ConeInstance::PsdKron { k, side } => format!("psdkron({k};{side})"),
                ConeInstance::Soc(s) => format!("soc({s})"),
            })
            .collect();
        writeln!(out, "cones {}", cones.join(" ")).unwrap();
        writeln!(out, "objective").unwrap();
        for (i, v) in self.objective.iter().enumerate() {
            if *v != 0.0 {
                writeln!(out, "{i} {v:.17e}").unwrap();
            }
        }
        writeln!(out, "A {} {} {}", self.a.nrows(), self.a.ncols(), self.a.nnz()).unwrap();
        for (r, c, v) in self.a.iter() {
            writeln!(out, "{r} {c} {v:.17e}").unwrap();
        }
        writeln!(out, "b").unwrap();
        for (i, v) in self.b.iter().enumerate() {
            if *v != 0.0 {
                writeln!(out, "{i} {v:.17e}").unwrap();
            }
        }
        out
    }
}

struct LoweredProgram {
    program: ConicProgram,
    /// Maps each original row to the lowered row carrying its slack value.
    s_map: Vec<usize>,
    /// Maps each original row to the lowered rows whose (pairing-compatible)
    /// duals sum to the original row's dual.
    dual_rows: Vec<Vec<usize>>,
}

impl LoweredProgram {
    fn solve_lowered(&self, original: &ConicProgram) -> Result<Solution> {
        let p = &self.program;
        // Permute rows to the backend convention and scale PSD rows to the
        // scaled-triangle (svec) form.
        let rows = p.b.len();
        let mut perm = vec![0usize; rows]; // program row -> backend row
        let mut scale = vec![1.0f64; rows];
        let mut off = 0usize;
        let mut cones_out: Vec<SupportedConeT<f64>> = Vec::new();
        for cone in &p.cones {
            match cone {
                ConeInstance::Zero(s) => {
                    for i in 0..*s {
                        perm[off + i] = off + i;
                    }
                    if *s > 0 {
                        cones_out.push(SupportedConeT::ZeroConeT(*s));
                    }
                }
                ConeInstance::NonNeg(s) => {
                    for i in 0..*s {
                        perm[off + i] = off + i;
                    }
                    if *s > 0 {
                        cones_out.push(SupportedConeT::NonnegativeConeT(*s));
                    }
                }
                ConeInstance::Exp(k) => {
                    for i in 0..3 * k {
                        perm[off + i] = off + i;
                    }
                    for _ in 0..*k {
                        cones_out.push(SupportedConeT::ExponentialConeT());
                    }
                }
                ConeInstance::Soc(s) => {
                    for i in 0..*s {
                        perm[off + i] = off + i;
                    }
                    if *s > 0 {
                        cones_out.push(SupportedConeT::SecondOrderConeT(*s));
                    }
                }
                ConeInstance::Psd { side } => {
                    // Program order: (i,j) with i ≤ j, row-major upper
                    // triangle. Backend svec order: column-major upper
                    // triangle, index j(j+1)/2 + i, off-diagonals × √2.
                    let mut r = 0usize;
                    for i in 0..*side {
                        for j in i..*side {
                            perm[off + r] = off + j * (j + 1) / 2 + i;
                            if i != j {
                                scale[off + r] = std::f64::consts::SQRT_2;
                            }
                            r += 1;
                        }
                    }
                    if *side > 0 {
                        cones_out.push(SupportedConeT::PSDTriangleConeT(*side));
                    }
                }
                ConeInstance::RelEntropy { .. }
                | ConeInstance::Dnn { .. }
                | ConeInstance::PsdKron { .. } => unreachable!("lowered away"),
            }
            off += cone.rows();
        }

        // Assemble CSC for the backend.
        let mut trips: Vec<(usize, usize, f64)> = p
            .a
            .iter()
            .map(|(r, c, v)| (perm[r], c, v * scale[r]))
            .collect();
        trips.sort_unstable_by_key(|&(r, c, _)| (c, r));
        let mut colptr = vec![0usize; p.num_vars + 1];
        let mut rowval = Vec::with_capacity(trips.len());
        let mut nzval = Vec::with_capacity(trips.len());
        for &(r, c, v) in &trips {
            colptr[c + 1] += 1;
            rowval.push(r);
            nzval.push(v);
        }
        for c in 0..p.num_vars {
            colptr[c + 1] += colptr[c];
        }
        let a_csc = CscMatrix::new(rows, p.num_vars, colptr, rowval, nzval);
        let mut b_out = vec![0.0; rows];
        for r in 0..rows {
            b_out[perm[r]] = p.b[r] * scale[r];
        }
        let p_csc: CscMatrix<f64> = CscMatrix::zeros((p.num_vars, p.num_vars));
        let settings = DefaultSettingsBuilder::default()
            .verbose(std::env::var("SOLVER_VERBOSE").is_ok())
            .build()
            .map_err(|e| Error::Indeterminate(format!("solver settings: {e:?}")))?;
        let mut solver =
            DefaultSolver::new(&p_csc, &p.objective, &a_csc, &b_out, &cones_out, settings)
                .map_err(|e| Error::Indeterminate(format!("solver setup: {e:?}")))?;
        solver.solve();
        let status = match solver.solution.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => SolveStatus::AlmostOptimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                return Err(Error::Infeasible)
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                return Err(Error::Unbounded)
            }
            SolverStatus::NumericalError | SolverStatus::InsufficientProgress => {
                return Err(Error::NumericalFailure)
            }
            other => return Err(Error::Indeterminate(format!("{other:?}"))),
        };
        // Undo the permutation/scaling and the relative-entropy lowering.
        let mut s_low = vec![0.0; rows];
        let mut z_low = vec![0.0; rows];
        for r in 0..rows {
            // s_backend = scale·s_program ⇒ s_program = s_backend/scale.
            s_low[r] = solver.solution.s[perm[r]] / scale[r];
            // Dual pairing preserved: z_program = scale·z_backend so that
            // Σ z_program·s_program = Σ z_backend·s_backend.
            z_low[r] = solver.solution.z[perm[r]] * scale[r];
        }
        let x: Vec<f64> = solver.solution.x[..original.num_vars].to_vec();
        let mut s = vec![0.0; original.b.len()];
        let mut dual = vec![0.0; original.b.len()];
        for orig_r in 0..original.b.len() {
            s[orig_r] = s_low[self.s_map[orig_r]];
            dual[orig_r] = self.dual_rows[orig_r].iter().map(|&nr| z_low[nr]).sum();
        }
        Ok(Solution { status, x, s, dual, objective: solver.solution.obj_val })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_expressions() {
        assert_eq!(SizeExpr::parse("2n+1").unwrap().eval(3).unwrap(), 7);
        assert_eq!(SizeExpr::parse("C(n+2,2)").unwrap().eval(3).unwrap(), 10);
        assert_eq!(SizeExpr::parse("C(n+2,2)*(C(n+2,2)+1)").unwrap().eval(2).unwrap(), 42);
        assert_eq!(SizeExpr::parse("2^n").unwrap().eval(4).unwrap(), 16);
        assert_eq!(SizeExpr::parse("n").unwrap().eval(9).unwrap(), 9);
        let e = SizeExpr::parse("2n+1").unwrap();
        assert_eq!(SizeExpr::parse(&e.to_string()).unwrap(), e);
        assert!(SizeExpr::parse("2n+").is_err());
    }

    #[test]
    fn cone_spec_round_trip() {
        let spec = ConeSpec::parse("nonneg(2n+1) zero(n) psd(n+1)").unwrap();
        assert_eq!(spec.dim(3).unwrap(), 7 + 3 + 10);
        let text = spec.to_text();
        let spec2 = ConeSpec::parse(&text).unwrap();
        assert_eq!(spec2.dim(5).unwrap(), spec.dim(5).unwrap());
    }

    #[test]
    fn socp_via_psd_arrow() {
        // min t s.t. [[t,3,4],[3,t,0],[4,0,t]] ⪰ 0 → t = 5.
        // Rows in graded-lex order: (0,0),(0,1),(0,2),(1,1),(1,2),(2,2).
        let a = SpMat::from_triplets(
            6,
            1,
            vec![(0, 0, -1.0), (3, 0, -1.0), (5, 0, -1.0)],
        );
        let b = vec![0.0, 3.0, 4.0, 0.0, 0.0, 0.0];
        let prog = ConicProgram {
            num_vars: 1,
            objective: vec![1.0],
            a,
            b,
            cones: vec![ConeInstance::Psd { side: 3 }],
        };
        let sol = prog.solve().unwrap();
        assert!((sol.objective - 5.0).abs() < 1e-6, "got {}", sol.objective);
    }

    #[test]
    fn relative_entropy_of_equal_vectors_is_zero() {
        // min t s.t. (ν, c, t) ∈ RelEntropy with ν = c = (1, 2).
        let m = 2;
        let a = SpMat::from_triplets(2 * m + 1, 1, vec![(2 * m, 0, -1.0)]);
        let b = vec![1.0, 2.0, 1.0, 2.0, 0.0];
        let prog = ConicProgram {
            num_vars: 1,
            objective: vec![1.0],
            a,
            b,
            cones: vec![ConeInstance::RelEntropy { m }],
        };
        let sol = prog.solve().unwrap();
        assert!(sol.objective.abs() < 1e-6, "got {}", sol.objective);
    }

    #[test]
    fn relative_entropy_known_value() {
        // D((1,1), (2,2)) = 2·log(1/2) = −2 log 2; min t → that value.
        let m = 2;
        let a = SpMat::from_triplets(2 * m + 1, 1, vec![(2 * m, 0, -1.0)]);
        let b = vec![1.0, 1.0, 2.0, 2.0, 0.0];
        let prog = ConicProgram {
            num_vars: 1,
            objective: vec![1.0],
            a,
            b,
            cones: vec![ConeInstance::RelEntropy { m }],
        };
        let sol = prog.solve().unwrap();
        let want = -2.0 * (2.0f64).ln();
        assert!((sol.objective - want).abs() < 1e-6, "got {}", sol.objective);
    }

    #[test]
    fn elliptope_maxcut_value() {
        // max ⟨11ᵀ−I, X⟩ over X ⪰ 0 with diag X = 1, n = 3 → 6.
        // Variables: svec entries of X in graded-lex order (6 vars).
        // min −⟨C,X⟩; constraints: X ⪰ 0 (s = x rows), diag fixed.
        let side = 3;
        let rows_psd = 6;
        let mut trips = Vec::new();
        for r in 0..rows_psd {
            trips.push((r, r, -1.0)); // s = 0 + x → x ∈ PSD (b − Ax with A = −I)
        }
        // Zero rows: X_ii − 1 = 0 → rows s = 1 − x_ii ∈ {0}.
        let diag_idx = [0usize, 3, 5];
        for (k, &di) in diag_idx.iter().enumerate() {
            trips.push((rows_psd + k, di, 1.0));
        }
        let mut b = vec![0.0; rows_psd + side];
        for k in 0..side {
            b[rows_psd + k] = 1.0;
        }
        // Objective: −⟨C, X⟩ with C = 11ᵀ − I: off-diagonal entries (i<j)
        // contribute 2·X_ij each.
        let mut obj = vec![0.0; rows_psd];
        for (r, idx) in [(1usize, (0, 1)), (2, (0, 2)), (4, (1, 2))] {
            let _ = idx;
            obj[r] = -2.0;
        }
        let prog = ConicProgram {
            num_vars: rows_psd,
            objective: obj,
            a: SpMat::from_triplets(rows_psd + side, rows_psd, trips),
            b,
            cones: vec![
                ConeInstance::Psd { side },
                ConeInstance::Zero(side),
            ],
        };
        let sol = prog.solve().unwrap();
        assert!((-sol.objective - 6.0).abs() < 1e-6, "got {}", -sol.objective);
    }

    #[test]
    fn soc_norm() {
        // min t s.t. ‖(3,4)‖₂ ≤ t.
        let prog = ConicProgram {
            num_vars: 1,
            objective: vec![1.0],
            a: SpMat::from_triplets(3, 1, vec![(0, 0, -1.0)]),
            b: vec![0.0, 3.0, 4.0],
            cones: vec![ConeInstance::Soc(3)],
        };
        let sol = prog.solve().unwrap();
        assert!((sol.objective - 5.0).abs() < 1e-7, "got {}", sol.objective);
    }

    #[test]
    fn dnn_tightens_psd() {
        // X 2×2 with diag X = 1: min X_12 is −1 over PSD but 0 over DNN.
        let build = |cone: ConeInstance| ConicProgram {
            num_vars: 3,
            objective: vec![0.0, 1.0, 0.0],
            a: {
                let mut t = vec![(0usize, 0usize, -1.0), (1, 1, -1.0), (2, 2, -1.0)];
                t.push((3, 0, 1.0));
                t.push((4, 2, 1.0));
                SpMat::from_triplets(5, 3, t)
            },
            b: vec![0.0, 0.0, 0.0, 1.0, 1.0],
            cones: vec![cone, ConeInstance::Zero(2)],
        };
        let psd = build(ConeInstance::Psd { side: 2 }).solve().unwrap();
        assert!((psd.objective + 1.0).abs() < 1e-6, "got {}", psd.objective);
        let dnn = build(ConeInstance::Dnn { side: 2 }).solve().unwrap();
        assert!(dnn.objective.abs() < 1e-6, "got {}", dnn.objective);
    }

    #[test]
    fn psd_kron_block() {
        // Coordinates (κ, μ) with k = 2, m = 2; the assembled matrix is
        // [[a,1],[1,c]] ⊗-interleaved with I₂, so min a+c s.t. PSD is 2.
        let mut trips = Vec::new();
        let mut b = vec![0.0; 9];
        // κ=(0,0) block: diag μ entries = a.
        trips.push((0, 0, -1.0));
        trips.push((2, 0, -1.0));
        // κ=(0,1) block: diag μ entries = 1.
        b[3] = 1.0;
        b[5] = 1.0;
        // κ=(1,1) block: diag μ entries = c.
        trips.push((6, 1, -1.0));
        trips.push((8, 1, -1.0));
        let prog = ConicProgram {
            num_vars: 2,
            objective: vec![1.0, 1.0],
            a: SpMat::from_triplets(9, 2, trips),
            b,
            cones: vec![ConeInstance::PsdKron { k: 2, side: 2 }],
        };
        let sol = prog.solve().unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-6, "got {}", sol.objective);
    }

    #[test]
    fn psdkron_spec_round_trip() {
        let spec = ConeSpec::parse("psdkron(3;n+1) dnn(n)").unwrap();
        assert_eq!(spec.to_text(), "psdkron(3;n+1) dnn(n)");
        // k(k+1)/2 · m(m+1)/2 = 6·10 at n = 3, plus 6 for dnn.
        assert_eq!(spec.dim(3).unwrap(), 60 + 6);
    }

    #[test]
    fn infeasible_and_duality() {
        // x ≥ 1 and −x ≥ 0 is infeasible.
        let prog = ConicProgram {
            num_vars: 1,
            objective: vec![1.0],
            a: SpMat::from_triplets(2, 1, vec![(0, 0, -1.0), (1, 0, 1.0)]),
            b: vec![-1.0, 0.0],
            cones: vec![ConeInstance::NonNeg(2)],
        };
        assert!(matches!(prog.solve(), Err(Error::Infeasible)));
        // Simple LP duality: min x s.t. x ≥ 2 → obj 2; dual −bᵀz = 2.
        let prog = ConicProgram {
            num_vars: 1,
            objective: vec![1.0],
            a: SpMat::from_triplets(1, 1, vec![(0, 0, -1.0)]),
            b: vec![-2.0],
            cones: vec![ConeInstance::NonNeg(1)],
        };
        let sol = prog.solve().unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-7);
        let dual_obj = -sol.dual[0] * -2.0;
        assert!((dual_obj - 2.0).abs() < 1e-6);
    }

    #[test]
    fn random_sdps_match_dual_restatement() {
        // min qᵀx s.t. s = b − Ax ∈ PSD: dual max −bᵀz s.t. Aᵀz + q = 0,
        // z ∈ PSD. Verify stationarity and the gap from the returned dual.
        let mut state = 17u64;
        let mut rand = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64 - 0.5
        };
        for _trial in 0..20 {
            let side = 3;
            let rows = 6;
            let nv = 2;
            // A random, with b chosen so s = I is feasible (b = A·0 + svec(I)).
            let mut trips = Vec::new();
            for r in 0..rows {
                for c in 0..nv {
                    trips.push((r, c, rand()));
                }
            }
            let a = SpMat::from_triplets(rows, nv, trips);
            let b = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
            // Bounded objective: q = Aᵀ·(weights of identity dual) keeps the
            // dual feasible set nonempty; use q = Aᵀ·svec-pairing of I.
            let zi = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
            let q = a.tr_mul_vec(&zi).iter().map(|v| -v).collect::<Vec<_>>();
            let prog = ConicProgram {
                num_vars: nv,
                objective: q.clone(),
                a: a.clone(),
                b: b.clone(),
                cones: vec![ConeInstance::Psd { side }],
            };
            let sol = match prog.solve() {
                Ok(s) => s,
                Err(Error::Unbounded) => continue,
                Err(e) => panic!("{e}"),
            };
            // Stationarity: Aᵀz + q ≈ 0 (in pairing-compatible coordinates).
            let mut resid = a.tr_mul_vec(&sol.dual);
            for (r, qq) in resid.iter_mut().zip(&q) {
                *r += qq;
            }
            let rn: f64 = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(rn <= 1e-5, "stationarity residual {rn}");
            // Gap: qᵀx ≈ −bᵀz.
            let dual_obj: f64 = -b.iter().zip(&sol.dual).map(|(bb, zz)| bb * zz).sum::<f64>();
            assert!(
                (sol.objective - dual_obj).abs() <= 1e-6 * (1.0 + sol.objective.abs()),
                "gap {} vs {}",
                sol.objective,
                dual_obj
            );
        }
    }
}
