//! Problem data, factor state, smooth objective, partial gradients and
//! block Lipschitz moduli.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{self, diff_frobenius_sq, spectral_norm, vstack, Matrix};

/// Floor applied to every Lipschitz modulus so that `1 / (alpha L)` stays finite.
pub const LIPSCHITZ_FLOOR: f64 = 1e-12;

/// Relative tolerance used for the spectral norms behind the moduli.
pub const LIPSCHITZ_TOL: f64 = 1e-9;

/// Tolerance for constraint checks on factor states.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Which model is being fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Full spatial-spectral cofactorization: spectral, spatial and clustering terms.
    Sp2u,
    /// Spectral term only (sum-to-one constrained NMF).
    Nmf,
    /// Naive coupling: the spatial codes are the abundances themselves (`U = A`).
    NSp2u,
    /// Spectral term plus clustering of the abundances, no spatial term.
    CSpu,
    /// Pure-pixel extraction followed by constrained least squares; no joint solve.
    Fcls,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Sp2u,
        Variant::Nmf,
        Variant::NSp2u,
        Variant::CSpu,
        Variant::Fcls,
    ];

    /// Blocks updated by the solver, in update order.
    pub fn active_blocks(self) -> &'static [Block] {
        match self {
            Variant::Sp2u => &Block::ALL,
            Variant::Nmf => &[Block::M, Block::A],
            Variant::NSp2u => &[Block::M, Block::A, Block::D],
            Variant::CSpu => &[Block::M, Block::A, Block::B, Block::Z],
            Variant::Fcls => &[],
        }
    }

    pub fn is_active(self, block: Block) -> bool {
        self.active_blocks().contains(&block)
    }

    /// Whether the variant reads the spatial feature matrix `S`.
    pub fn uses_spatial(self) -> bool {
        matches!(self, Variant::Sp2u | Variant::NSp2u)
    }

    pub fn uses_clustering(self) -> bool {
        matches!(self, Variant::Sp2u | Variant::CSpu)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Sp2u => "sp2u",
            Variant::Nmf => "nmf",
            Variant::NSp2u => "nsp2u",
            Variant::CSpu => "cspu",
            Variant::Fcls => "vca-fcls",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// One of the six estimated matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    M,
    A,
    D,
    U,
    B,
    Z,
}

impl Block {
    pub const ALL: [Block; 6] = [Block::M, Block::A, Block::D, Block::U, Block::B, Block::Z];
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Block::M => "M",
            Block::A => "A",
            Block::D => "D",
            Block::U => "U",
            Block::B => "B",
            Block::Z => "Z",
        };
        f.write_str(s)
    }
}

/// Where the scale-fixing sum-to-one constraint lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Constraint {
    /// Abundance columns on the simplex, endmembers non-negative.
    #[default]
    AbundanceSimplex,
    /// Endmember columns on the simplex, abundances only non-negative.
    EndmemberSimplex,
}

impl Constraint {
    pub fn name(self) -> &'static str {
        match self {
            Constraint::AbundanceSimplex => "abundance-simplex",
            Constraint::EndmemberSimplex => "endmember-simplex",
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Constraint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Constraint::AbundanceSimplex, Constraint::EndmemberSimplex]
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown constraint `{s}`")))
    }
}

/// Feasible set of a single block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintSet {
    NonNegative,
    SimplexColumns,
}

impl ConstraintSet {
    pub fn project_inplace(self, x: &mut Matrix) {
        match self {
            ConstraintSet::NonNegative => linalg::project_nonneg_inplace(x),
            ConstraintSet::SimplexColumns => linalg::project_simplex_columns_inplace(x),
        }
    }

    pub fn violation(self, x: &Matrix) -> f64 {
        match self {
            ConstraintSet::NonNegative => linalg::nonneg_violation(x),
            ConstraintSet::SimplexColumns => linalg::simplex_violation(x),
        }
    }
}

/// Weights of the four smooth terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    /// Spectral data fit.
    pub lambda0: f64,
    /// Spatial data fit.
    pub lambda1: f64,
    /// Clustering fit.
    pub lambda2: f64,
    /// Orthogonality penalty on the assignments.
    pub lambda_z: f64,
}

impl Weights {
    pub fn new(lambda0: f64, lambda1: f64, lambda2: f64, lambda_z: f64) -> Self {
        Weights {
            lambda0,
            lambda1,
            lambda2,
            lambda_z,
        }
    }

    /// Scales the two data-fit weights by the size and dynamic range of their
    /// data: `lambda0 = l0 / (d1 max|Y|^2)`, `lambda1 = l1 / (d2 max|S|^2)`.
    pub fn renormalized(
        lambda0: f64,
        lambda1: f64,
        lambda2: f64,
        lambda_z: f64,
        y: &Matrix,
        s: Option<&Matrix>,
    ) -> Self {
        let scale = |m: &Matrix| {
            let sup = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if sup > 0.0 {
                m.nrows() as f64 * sup * sup
            } else {
                1.0
            }
        };
        Weights {
            lambda0: lambda0 / scale(y),
            lambda1: s.map_or(lambda1, |s| lambda1 / scale(s)),
            lambda2,
            lambda_z,
        }
    }

    fn all_nonneg(&self) -> bool {
        [self.lambda0, self.lambda1, self.lambda2, self.lambda_z]
            .iter()
            .all(|w| *w >= 0.0 && w.is_finite())
    }
}

impl Default for Weights {
    fn default() -> Self {
        Weights::new(1.0, 1.0, 1.0, 0.1)
    }
}

/// Number of endmembers, spatial atoms and clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ranks {
    pub r1: usize,
    pub r2: usize,
    pub k: usize,
}

impl Ranks {
    pub fn new(r1: usize, r2: usize, k: usize) -> Self {
        Ranks { r1, r2, k }
    }
}

/// Observed data together with model sizes, weights and variant.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    /// `d1 x P` hyperspectral data.
    pub y: Matrix,
    /// `d2 x P` spatial features; required by variants that use them.
    pub s: Option<Matrix>,
    pub ranks: Ranks,
    pub weights: Weights,
    pub variant: Variant,
    pub constraint: Constraint,
}

impl ProblemSpec {
    pub fn new(
        y: Matrix,
        s: Option<Matrix>,
        ranks: Ranks,
        weights: Weights,
        variant: Variant,
        constraint: Constraint,
    ) -> Result<Self> {
        let spec = ProblemSpec {
            y,
            s,
            ranks,
            weights,
            variant,
            constraint,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (d1, p) = self.y.dim();
        let Ranks { r1, r2, k } = self.ranks;
        if d1 == 0 || p == 0 {
            return Err(Error::InvalidArgument("empty data matrix Y".into()));
        }
        if r1 == 0 || r1 >= d1 {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= R1 < d1, got R1 = {r1}, d1 = {d1}"
            )));
        }
        if r1 > p {
            return Err(Error::InvalidArgument(format!("R1 = {r1} exceeds P = {p}")));
        }
        if !self.weights.all_nonneg() {
            return Err(Error::InvalidArgument(format!(
                "weights must be finite and non-negative: {:?}",
                self.weights
            )));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData("Y"));
        }
        if self.variant.uses_clustering() && (k == 0 || k > p) {
            return Err(Error::InvalidArgument(format!("need 1 <= K <= P, got K = {k}")));
        }
        if self.variant.uses_spatial() {
            let s = self.s.as_ref().ok_or_else(|| {
                Error::InvalidArgument(format!("variant {} requires spatial features S", self.variant))
            })?;
            if s.ncols() != p {
                return Err(Error::dims(
                    "Y",
                    "S",
                    format!("column counts differ: {} vs {}", p, s.ncols()),
                ));
            }
            if s.nrows() == 0 {
                return Err(Error::InvalidArgument("S has no features".into()));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteData("S"));
            }
            if self.variant == Variant::Sp2u && (r2 == 0 || r2 > p) {
                return Err(Error::InvalidArgument(format!("need 1 <= R2 <= P, got R2 = {r2}")));
            }
        }
        Ok(())
    }

    pub fn d1(&self) -> usize {
        self.y.nrows()
    }

    pub fn d2(&self) -> usize {
        self.s.as_ref().map_or(0, |s| s.nrows())
    }

    pub fn pixels(&self) -> usize {
        self.y.ncols()
    }

    fn spatial(&self) -> &Matrix {
        self.s.as_ref().expect("validated: spatial variant carries S")
    }

    /// Expected shape of a block, `None` when the variant does not use it.
    pub fn block_shape(&self, block: Block) -> Option<(usize, usize)> {
        let Ranks { r1, r2, k } = self.ranks;
        let (d1, p, d2) = (self.d1(), self.pixels(), self.d2());
        let v = self.variant;
        match block {
            Block::M => Some((d1, r1)),
            Block::A => Some((r1, p)),
            Block::D => match v {
                Variant::Sp2u => Some((d2, r2)),
                Variant::NSp2u => Some((d2, r1)),
                _ => None,
            },
            Block::U => (v == Variant::Sp2u).then_some((r2, p)),
            Block::B => match v {
                Variant::Sp2u => Some((r1 + r2, k)),
                Variant::CSpu => Some((r1, k)),
                _ => None,
            },
            Block::Z => v.uses_clustering().then_some((k, p)),
        }
    }

    /// Feasible set of a block under the current constraint placement.
    pub fn constraint_set(&self, block: Block) -> ConstraintSet {
        let endmember_simplex = self.constraint == Constraint::EndmemberSimplex;
        match block {
            Block::M if endmember_simplex => ConstraintSet::SimplexColumns,
            Block::A if !endmember_simplex => ConstraintSet::SimplexColumns,
            Block::U | Block::Z => ConstraintSet::SimplexColumns,
            _ => ConstraintSet::NonNegative,
        }
    }

    /// Checks every block shape against the variant.
    pub fn check_state(&self, st: &FactorState) -> Result<()> {
        for block in Block::ALL {
            let actual = st.block(block).dim();
            match self.block_shape(block) {
                Some(expected) if expected != actual => {
                    return Err(Error::dims(
                        block_label(block),
                        "ProblemSpec",
                        format!("expected {expected:?}, got {actual:?}"),
                    ));
                }
                None if actual != (0, 0) && !st.block(block).is_empty() => {
                    return Err(Error::dims(
                        block_label(block),
                        "ProblemSpec",
                        format!("block unused by variant {} but has shape {actual:?}", self.variant),
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Largest constraint violation over the blocks used by the variant.
    pub fn feasibility_violation(&self, st: &FactorState) -> f64 {
        Block::ALL
            .into_iter()
            .filter(|b| self.block_shape(*b).is_some())
            .map(|b| self.constraint_set(b).violation(st.block(b)))
            .fold(0.0, f64::max)
    }

    pub fn check_feasible(&self, st: &FactorState) -> Result<()> {
        self.check_state(st)?;
        for block in Block::ALL.into_iter().filter(|b| self.block_shape(*b).is_some()) {
            let x = st.block(block);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Infeasible(format!("block {block} has non-finite entries")));
            }
            let viol = self.constraint_set(block).violation(x);
            if viol > FEASIBILITY_TOL {
                return Err(Error::Infeasible(format!(
                    "block {block} violates its constraint set by {viol:e}"
                )));
            }
        }
        Ok(())
    }
}

fn block_label(block: Block) -> &'static str {
    match block {
        Block::M => "M",
        Block::A => "A",
        Block::D => "D",
        Block::U => "U",
        Block::B => "B",
        Block::Z => "Z",
    }
}

/// The six estimated matrices. Blocks unused by a variant are `0 x 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState {
    pub m: Matrix,
    pub a: Matrix,
    pub d: Matrix,
    pub u: Matrix,
    pub b: Matrix,
    pub z: Matrix,
}

impl FactorState {
    pub fn empty() -> Self {
        let e = || Matrix::zeros((0, 0));
        FactorState {
            m: e(),
            a: e(),
            d: e(),
            u: e(),
            b: e(),
            z: e(),
        }
    }

    pub fn block(&self, block: Block) -> &Matrix {
        match block {
            Block::M => &self.m,
            Block::A => &self.a,
            Block::D => &self.d,
            Block::U => &self.u,
            Block::B => &self.b,
            Block::Z => &self.z,
        }
    }

    pub fn block_mut(&mut self, block: Block) -> &mut Matrix {
        match block {
            Block::M => &mut self.m,
            Block::A => &mut self.a,
            Block::D => &mut self.d,
            Block::U => &mut self.u,
            Block::B => &mut self.b,
            Block::Z => &mut self.z,
        }
    }
}

/// Lipschitz moduli of the six partial gradients at one state. Entries for
/// blocks the variant does not use hold the floor value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzSet {
    pub m: f64,
    pub a: f64,
    pub d: f64,
    pub u: f64,
    pub b: f64,
    pub z: f64,
}

impl LipschitzSet {
    pub fn at(spec: &ProblemSpec, st: &FactorState) -> Result<Self> {
        let get = |b| {
            if spec.variant.is_active(b) {
                lipschitz_block(spec, st, b)
            } else {
                Ok(LIPSCHITZ_FLOOR)
            }
        };
        Ok(LipschitzSet {
            m: get(Block::M)?,
            a: get(Block::A)?,
            d: get(Block::D)?,
            u: get(Block::U)?,
            b: get(Block::B)?,
            z: get(Block::Z)?,
        })
    }

    pub fn get(&self, block: Block) -> f64 {
        match block {
            Block::M => self.m,
            Block::A => self.a,
            Block::D => self.d,
            Block::U => self.u,
            Block::B => self.b,
            Block::Z => self.z,
        }
    }
}

/// `V Z` with `V = 1 1^T - I`, without forming `V`.
pub fn apply_coupling(z: &Matrix) -> Matrix {
    let sums: Array1<f64> = z.sum_axis(Axis(0));
    let mut out = -z;
    for (mut col, s) in out.columns_mut().into_iter().zip(sums.iter()) {
        col += *s;
    }
    out
}

/// `Tr(Z^T V Z)`, the sum of inner products between distinct rows of `Z`.
pub fn coupling_penalty(z: &Matrix) -> f64 {
    z.columns()
        .into_iter()
        .map(|col| {
            let sum: f64 = col.sum();
            let sq: f64 = col.dot(&col);
            sum * sum - sq
        })
        .sum()
}

/// The stacked coding matrix clustered by `B Z`: `[A; U]` for the full
/// model, `A` alone when the spatial term is absent.
pub fn coding_matrix(spec: &ProblemSpec, st: &FactorState) -> Matrix {
    match spec.variant {
        Variant::Sp2u => vstack(st.a.view(), st.u.view()),
        _ => st.a.clone(),
    }
}

/// Value of each smooth term, already weighted.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ObjectiveTerms {
    pub spectral: f64,
    pub spatial: f64,
    pub clustering: f64,
    pub orthogonality: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.spectral + self.spatial + self.clustering + self.orthogonality
    }
}

pub fn objective_terms(spec: &ProblemSpec, st: &FactorState) -> Result<ObjectiveTerms> {
    spec.check_state(st)?;
    let w = spec.weights;
    let mut terms = ObjectiveTerms::default();
    if w.lambda0 > 0.0 {
        let fit = st.m.dot(&st.a);
        terms.spectral = 0.5 * w.lambda0 * diff_frobenius_sq(spec.y.view(), fit.view());
    }
    if w.lambda1 > 0.0 && spec.variant.uses_spatial() {
        let codes = if spec.variant == Variant::NSp2u { &st.a } else { &st.u };
        let fit = st.d.dot(codes);
        terms.spatial = 0.5 * w.lambda1 * diff_frobenius_sq(spec.spatial().view(), fit.view());
    }
    if spec.variant.uses_clustering() {
        if w.lambda2 > 0.0 {
            let codes = coding_matrix(spec, st);
            let fit = st.b.dot(&st.z);
            terms.clustering = 0.5 * w.lambda2 * diff_frobenius_sq(codes.view(), fit.view());
        }
        if w.lambda_z > 0.0 {
            terms.orthogonality = 0.5 * w.lambda_z * coupling_penalty(&st.z);
        }
    }
    Ok(terms)
}

/// Smooth part `g` of the objective; equal to the full objective on feasible states.
pub fn eval_smooth(spec: &ProblemSpec, st: &FactorState) -> Result<f64> {
    objective_terms(spec, st).map(|t| t.total())
}

// Gradients of ½‖T − X C‖². The residual is formed explicitly rather than
// expanding into Gram products: at an exact fit it is exactly zero, so exact
// fits are exact fixed points of the solver.

/// With respect to the dictionary `X`: `(X C − T) Cᵀ`.
fn dictionary_grad(x: &Matrix, codes: &Matrix, target: ArrayView2<f64>) -> Matrix {
    (x.dot(codes) - target).dot(&codes.t())
}

/// With respect to the codes `C`: `Xᵀ (X C − T)`.
fn code_grad(x: &Matrix, codes: &Matrix, target: ArrayView2<f64>) -> Matrix {
    x.t().dot(&(x.dot(codes) - target))
}

/// Partial gradient of the smooth objective with respect to one block.
pub fn grad_block(spec: &ProblemSpec, st: &FactorState, block: Block) -> Result<Matrix> {
    if !spec.variant.is_active(block) {
        return Err(Error::InactiveBlock {
            block,
            variant: spec.variant,
        });
    }
    spec.check_state(st)?;
    let w = spec.weights;
    let v = spec.variant;
    let r1 = spec.ranks.r1;
    let shape = st.block(block).dim();
    let mut grad = Matrix::zeros(shape);

    match block {
        Block::M => {
            if w.lambda0 > 0.0 {
                grad.scaled_add(w.lambda0, &dictionary_grad(&st.m, &st.a, spec.y.view()));
            }
        }
        Block::A => {
            if w.lambda0 > 0.0 {
                grad.scaled_add(w.lambda0, &code_grad(&st.m, &st.a, spec.y.view()));
            }
            if v == Variant::NSp2u && w.lambda1 > 0.0 {
                grad.scaled_add(w.lambda1, &code_grad(&st.d, &st.a, spec.spatial().view()));
            }
            if v.uses_clustering() && w.lambda2 > 0.0 {
                let b1 = st.b.slice(s![..r1, ..]);
                let diff = &st.a - &b1.dot(&st.z);
                grad.scaled_add(w.lambda2, &diff);
            }
        }
        Block::D => {
            if w.lambda1 > 0.0 {
                let codes = if v == Variant::NSp2u { &st.a } else { &st.u };
                grad.scaled_add(w.lambda1, &dictionary_grad(&st.d, codes, spec.spatial().view()));
            }
        }
        Block::U => {
            if w.lambda1 > 0.0 {
                grad.scaled_add(w.lambda1, &code_grad(&st.d, &st.u, spec.spatial().view()));
            }
            if w.lambda2 > 0.0 {
                let b2 = st.b.slice(s![r1.., ..]);
                let diff = &st.u - &b2.dot(&st.z);
                grad.scaled_add(w.lambda2, &diff);
            }
        }
        Block::B => {
            if w.lambda2 > 0.0 {
                let codes = coding_matrix(spec, st);
                grad.scaled_add(w.lambda2, &dictionary_grad(&st.b, &st.z, codes.view()));
            }
        }
        Block::Z => {
            if w.lambda2 > 0.0 {
                let codes = coding_matrix(spec, st);
                grad.scaled_add(w.lambda2, &code_grad(&st.b, &st.z, codes.view()));
            }
            if w.lambda_z > 0.0 {
                grad.scaled_add(w.lambda_z, &apply_coupling(&st.z));
            }
        }
    }
    Ok(grad)
}

/// The symmetric operator whose spectral norm bounds the variation of a
/// partial gradient.
pub fn curvature_operator(spec: &ProblemSpec, st: &FactorState, block: Block) -> Matrix {
    let w = spec.weights;
    let v = spec.variant;
    let gram = |x: &Matrix| x.dot(&x.t());
    let cross = |x: &Matrix| x.t().dot(x);
    match block {
        Block::M => gram(&st.a) * w.lambda0,
        Block::A => {
            let mut h = cross(&st.m) * w.lambda0;
            if v == Variant::NSp2u && w.lambda1 > 0.0 {
                h.scaled_add(w.lambda1, &cross(&st.d));
            }
            if v.uses_clustering() && w.lambda2 > 0.0 {
                h.diag_mut().mapv_inplace(|x| x + w.lambda2);
            }
            h
        }
        Block::D => {
            let codes = if v == Variant::NSp2u { &st.a } else { &st.u };
            gram(codes) * w.lambda1
        }
        Block::U => {
            let mut h = cross(&st.d) * w.lambda1;
            if w.lambda2 > 0.0 {
                h.diag_mut().mapv_inplace(|x| x + w.lambda2);
            }
            h
        }
        Block::B => gram(&st.z) * w.lambda2,
        Block::Z => {
            let mut h = cross(&st.b) * w.lambda2;
            if w.lambda_z > 0.0 {
                h.mapv_inplace(|x| x + w.lambda_z);
                h.diag_mut().mapv_inplace(|x| x - w.lambda_z);
            }
            h
        }
    }
}

/// Lipschitz modulus of the partial gradient of one block, floored at
/// [`LIPSCHITZ_FLOOR`].
pub fn lipschitz_block(spec: &ProblemSpec, st: &FactorState, block: Block) -> Result<f64> {
    if !spec.variant.is_active(block) {
        return Err(Error::InactiveBlock {
            block,
            variant: spec.variant,
        });
    }
    spec.check_state(st)?;
    let h = curvature_operator(spec, st, block);
    let raw = spectral_norm(&h, LIPSCHITZ_TOL)?;
    Ok(raw.max(LIPSCHITZ_FLOOR))
}

/// `blockdiag(M, D) B`: column `k` stacks the mean spectral signature of
/// cluster `k` over its mean spatial signature. Without a spatial dictionary
/// only the spectral half is returned.
pub fn cluster_signatures(st: &FactorState) -> Result<Matrix> {
    let r1 = st.m.ncols();
    let r2 = st.d.ncols();
    let has_spatial = !st.d.is_empty() && st.b.nrows() == r1 + r2;
    if st.b.nrows() != r1 && !has_spatial {
        return Err(Error::dims(
            "B",
            "M/D",
            format!("B has {} rows, expected {} or {}", st.b.nrows(), r1, r1 + r2),
        ));
    }
    let spectral = st.m.dot(&st.b.slice(s![..r1, ..]));
    if has_spatial {
        let spatial = st.d.dot(&st.b.slice(s![r1.., ..]));
        Ok(vstack(spectral.view(), spatial.view()))
    } else {
        Ok(spectral)
    }
}
