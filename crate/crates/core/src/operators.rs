//! Monotone operators, resolvents and the anchored auxiliary map.
//!
//! Single-valued operators are either affine, carrying their linear part and
//! offset explicitly, or opaque closures with advertised constants. Affine
//! operators get exact constants: the Lipschitz constant is the spectral norm
//! of the linear part and the strong-monotonicity modulus is the smallest
//! eigenvalue of its symmetric part.
//!
//! Set-valued operators are only ever accessed through their resolvent
//! `J_{gA} = (Id + gA)^{-1}`; [`ResolventOp`] enumerates the ones the solver
//! supports.
//!
//! `C_M`, the bound on `||v||` over `v in M x`, is infinite as soon as `M`
//! contains a normal cone. [`estimate_constants`] reports the minimal-norm
//! selection instead, i.e. the normal-cone component is taken to be zero.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::vectorspace::{Point, SeededRng};

/// Linear part of an affine map.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearPart {
    Zero,
    /// `s * Id`
    Scaled(f64),
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl LinearPart {
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            LinearPart::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            LinearPart::Scaled(s) => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = s * v;
                }
            }
            LinearPart::Diagonal(d) => {
                for ((o, v), di) in out.iter_mut().zip(x).zip(d) {
                    *o = di * v;
                }
            }
            LinearPart::Dense(m) => {
                let (rows, cols) = m.shape();
                for (r, o) in out.iter_mut().enumerate().take(rows) {
                    let mut acc = 0.0;
                    for c in 0..cols {
                        acc += m[(r, c)] * x[c];
                    }
                    *o = acc;
                }
            }
        }
    }

    pub fn to_dense(&self, dim: usize) -> DMatrix<f64> {
        match self {
            LinearPart::Zero => DMatrix::zeros(dim, dim),
            LinearPart::Scaled(s) => DMatrix::identity(dim, dim) * *s,
            LinearPart::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            LinearPart::Dense(m) => m.clone(),
        }
    }

    /// `self + s * other`
    fn plus_scaled(&self, s: f64, other: &LinearPart, dim: usize) -> LinearPart {
        use LinearPart::*;
        if s == 0.0 {
            return self.clone();
        }
        match (self, other) {
            (a, Zero) => a.clone(),
            (Zero, Scaled(b)) => Scaled(s * b),
            (Zero, Diagonal(b)) => Diagonal(b.iter().map(|v| s * v).collect()),
            (Zero, Dense(b)) => Dense(b * s),
            (Scaled(a), Scaled(b)) => Scaled(a + s * b),
            (Scaled(a), Diagonal(b)) => Diagonal(b.iter().map(|v| a + s * v).collect()),
            (Diagonal(a), Scaled(b)) => Diagonal(a.iter().map(|v| v + s * b).collect()),
            (Diagonal(a), Diagonal(b)) => {
                Diagonal(a.iter().zip(b).map(|(x, y)| x + s * y).collect())
            }
            (a, b) => Dense(a.to_dense(dim) + b.to_dense(dim) * s),
        }
    }

    fn spectral_norm(&self) -> f64 {
        match self {
            LinearPart::Zero => 0.0,
            LinearPart::Scaled(s) => s.abs(),
            LinearPart::Diagonal(d) => d.iter().fold(0.0, |m, v| m.max(v.abs())),
            LinearPart::Dense(m) => m
                .singular_values()
                .iter()
                .fold(0.0, |acc: f64, v| acc.max(*v)),
        }
    }

    /// Smallest eigenvalue of the symmetric part.
    fn min_symmetric_eigenvalue(&self) -> f64 {
        match self {
            LinearPart::Zero => 0.0,
            LinearPart::Scaled(s) => *s,
            LinearPart::Diagonal(d) => d.iter().copied().fold(f64::INFINITY, f64::min),
            LinearPart::Dense(m) => {
                let sym = (m + m.transpose()) * 0.5;
                SymmetricEigen::new(sym)
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// True when `<Lx, x> = 0` for all `x`.
    pub fn is_skew(&self) -> bool {
        match self {
            LinearPart::Zero => true,
            LinearPart::Scaled(s) => *s == 0.0,
            LinearPart::Diagonal(d) => d.iter().all(|v| *v == 0.0),
            LinearPart::Dense(m) => (m + m.transpose()).iter().all(|v| v.abs() <= 1e-14),
        }
    }

    pub fn transpose_apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            LinearPart::Dense(m) => (m.transpose() * DVector::from_column_slice(x))
                .iter()
                .copied()
                .collect(),
            other => {
                let mut out = vec![0.0; x.len()];
                other.apply_into(x, &mut out);
                out
            }
        }
    }
}

/// `x -> L x + offset`
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    dim: usize,
    linear: LinearPart,
    offset: Option<Point>,
}

impl AffineMap {
    pub fn new(dim: usize, linear: LinearPart, offset: Option<Point>) -> Result<Self> {
        let ok = match &linear {
            LinearPart::Diagonal(d) => d.len() == dim,
            LinearPart::Dense(m) => m.shape() == (dim, dim),
            _ => true,
        };
        if !ok {
            return Err(invalid("linear part does not match the operator dimension"));
        }
        if let Some(c) = &offset {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.len(),
                });
            }
        }
        Ok(Self {
            dim,
            linear,
            offset,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn linear(&self) -> &LinearPart {
        &self.linear
    }

    pub fn offset(&self) -> Option<&Point> {
        self.offset.as_ref()
    }

    pub fn apply(&self, x: &Point) -> Point {
        assert_eq!(x.len(), self.dim, "affine map: dimension mismatch");
        let mut out = x.clone();
        self.linear.apply_into(x.as_slice(), out.as_mut_slice());
        if let Some(c) = &self.offset {
            out.add_scaled(1.0, c);
        }
        out
    }

    /// `self + s * other`
    fn plus_scaled(&self, s: f64, other: &AffineMap) -> AffineMap {
        let linear = self.linear.plus_scaled(s, &other.linear, self.dim);
        let offset = match (&self.offset, &other.offset) {
            (None, None) => None,
            (Some(a), None) => Some(a.clone()),
            (None, Some(b)) => Some(b.scaled(s)),
            (Some(a), Some(b)) => Some(a.lincomb(1.0, s, b)),
        };
        AffineMap {
            dim: self.dim,
            linear,
            offset,
        }
    }

    /// Largest `||L x + c||` over the box `[lower, upper]`.
    ///
    /// Exact for identity, scaled and diagonal linear parts (the problem
    /// separates per coordinate) and for dense parts in up to 16 dimensions
    /// (corner enumeration; a convex function peaks at a vertex). `None`
    /// otherwise.
    pub fn max_norm_over_box(&self, lower: &Point, upper: &Point) -> Option<f64> {
        let n = self.dim;
        let c = |i: usize| self.offset.as_ref().map_or(0.0, |o| o[i]);
        let separable = |d: &dyn Fn(usize) -> f64| {
            (0..n)
                .map(|i| {
                    let lo = d(i) * lower[i] + c(i);
                    let hi = d(i) * upper[i] + c(i);
                    (lo * lo).max(hi * hi)
                })
                .sum::<f64>()
                .sqrt()
        };
        match &self.linear {
            LinearPart::Zero => Some(separable(&|_| 0.0)),
            LinearPart::Scaled(s) => Some(separable(&|_| *s)),
            LinearPart::Diagonal(d) => Some(separable(&|i| d[i])),
            LinearPart::Dense(_) if n <= 16 => {
                let mut best: f64 = 0.0;
                for mask in 0u32..(1u32 << n) {
                    let corner = Point::new(
                        (0..n)
                            .map(|i| if mask >> i & 1 == 1 { upper[i] } else { lower[i] })
                            .collect(),
                    );
                    best = best.max(self.apply(&corner).norm());
                }
                Some(best)
            }
            LinearPart::Dense(_) => None,
        }
    }
}

type EvalFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;

#[derive(Clone)]
enum Eval {
    Affine(AffineMap),
    Custom(EvalFn),
}

/// A single-valued Lipschitz monotone operator with its constants.
#[derive(Clone)]
pub struct SingleValuedOp {
    dim: usize,
    eval: Eval,
    lipschitz: f64,
    strong_monotonicity: f64,
}

impl fmt::Debug for SingleValuedOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.eval {
            Eval::Affine(_) => "affine",
            Eval::Custom(_) => "custom",
        };
        f.debug_struct("SingleValuedOp")
            .field("dim", &self.dim)
            .field("kind", &kind)
            .field("lipschitz", &self.lipschitz)
            .field("strong_monotonicity", &self.strong_monotonicity)
            .finish()
    }
}

impl SingleValuedOp {
    /// Affine operator with exact constants.
    pub fn affine(map: AffineMap) -> Self {
        let lipschitz = map.linear.spectral_norm();
        let strong_monotonicity = map.linear.min_symmetric_eigenvalue().max(0.0);
        Self {
            dim: map.dim,
            eval: Eval::Affine(map),
            lipschitz,
            strong_monotonicity,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::affine(AffineMap::new(dim, LinearPart::Zero, None).expect("zero map"))
    }

    pub fn identity(dim: usize) -> Self {
        Self::affine(AffineMap::new(dim, LinearPart::Scaled(1.0), None).expect("identity map"))
    }

    pub fn dense(matrix: DMatrix<f64>, offset: Option<Point>) -> Result<Self> {
        let dim = matrix.nrows();
        Ok(Self::affine(AffineMap::new(
            dim,
            LinearPart::Dense(matrix),
            offset,
        )?))
    }

    /// Opaque operator. The caller vouches for the advertised constants.
    pub fn custom(
        dim: usize,
        f: impl Fn(&Point) -> Point + Send + Sync + 'static,
        lipschitz: f64,
        strong_monotonicity: f64,
    ) -> Self {
        Self {
            dim,
            eval: Eval::Custom(Arc::new(f)),
            lipschitz,
            strong_monotonicity,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn strong_monotonicity(&self) -> f64 {
        self.strong_monotonicity
    }

    /// `mu / L^2`, the cocoercivity modulus implied by the constants.
    pub fn cocoercivity(&self) -> f64 {
        if self.lipschitz == 0.0 {
            return f64::INFINITY;
        }
        self.strong_monotonicity / (self.lipschitz * self.lipschitz)
    }

    pub fn as_affine(&self) -> Option<&AffineMap> {
        match &self.eval {
            Eval::Affine(m) => Some(m),
            Eval::Custom(_) => None,
        }
    }

    pub fn evaluate(&self, x: &Point) -> Point {
        match &self.eval {
            Eval::Affine(m) => m.apply(x),
            Eval::Custom(f) => {
                assert_eq!(x.len(), self.dim, "operator: dimension mismatch");
                f(x)
            }
        }
    }
}

/// `Phi(v) = F(v) + beta G(v) + alpha (v - w)`.
///
/// Advertised constants are `L = L_F + beta L_G + alpha` and modulus `alpha`.
/// The three-operator map `Psi` is the same construction; its cocoercivity
/// `alpha / L^2` is [`SingleValuedOp::cocoercivity`].
pub fn build_phi(
    w: &Point,
    alpha: f64,
    beta: f64,
    f: &SingleValuedOp,
    g: &SingleValuedOp,
) -> Result<SingleValuedOp> {
    let dim = w.len();
    if f.dim != dim || g.dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: if f.dim != dim { f.dim } else { g.dim },
        });
    }
    if !(alpha > 0.0) || !(beta >= 0.0) {
        return Err(invalid(format!(
            "build_phi needs alpha > 0 and beta >= 0 (got {alpha}, {beta})"
        )));
    }
    let lipschitz = f.lipschitz + beta * g.lipschitz + alpha;
    let eval = match (f.as_affine(), g.as_affine()) {
        (Some(fa), Some(ga)) => {
            let anchor = AffineMap::new(dim, LinearPart::Scaled(1.0), Some(w.scaled(-1.0)))?;
            Eval::Affine(fa.plus_scaled(beta, ga).plus_scaled(alpha, &anchor))
        }
        _ => {
            let (f, g, w) = (f.clone(), g.clone(), w.clone());
            Eval::Custom(Arc::new(move |v: &Point| {
                let mut out = f.evaluate(v);
                if beta != 0.0 {
                    out.add_scaled(beta, &g.evaluate(v));
                }
                out.add_scaled(alpha, v);
                out.add_scaled(-alpha, &w);
                out
            }))
        }
    };
    Ok(SingleValuedOp {
        dim,
        eval,
        lipschitz,
        strong_monotonicity: alpha,
    })
}

/// Iteration cap of the fixed-point sub-solver used for non-affine `Phi`.
pub const RESOLVENT_MAX_ITERATIONS: usize = 100_000;

/// Relative residual target of the resolvent solve.
pub const RESOLVENT_TOLERANCE: f64 = 1e-10;

enum ResolventKind {
    Scaled { inv: f64, offset: Option<Point> },
    Diagonal { inv: Vec<f64>, offset: Option<Point> },
    Dense { lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>, offset: Option<Point> },
    Iterative { op: SingleValuedOp },
}

/// Solver for `x + gamma * op(x) = y`, prepared once per `(op, gamma)`.
///
/// Affine operators are solved directly. Anything else uses the damped
/// iteration `x <- x - s (x + gamma op(x) - y)` with
/// `s = (1 + gamma mu) / (1 + gamma L)^2`, a contraction for a
/// `mu`-strongly monotone `L`-Lipschitz `op`.
pub struct ResolventSolver {
    gamma: f64,
    kind: ResolventKind,
}

impl ResolventSolver {
    pub fn new(op: &SingleValuedOp, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(invalid(format!("resolvent step must be positive, got {gamma}")));
        }
        let kind = match op.as_affine() {
            Some(map) => {
                let offset = map.offset.as_ref().map(|c| c.scaled(gamma));
                match &map.linear {
                    LinearPart::Zero => ResolventKind::Scaled { inv: 1.0, offset },
                    LinearPart::Scaled(s) => ResolventKind::Scaled {
                        inv: 1.0 / (1.0 + gamma * s),
                        offset,
                    },
                    LinearPart::Diagonal(d) => ResolventKind::Diagonal {
                        inv: d.iter().map(|v| 1.0 / (1.0 + gamma * v)).collect(),
                        offset,
                    },
                    LinearPart::Dense(m) => {
                        let n = map.dim;
                        let system = DMatrix::identity(n, n) + m * gamma;
                        let lu = system.lu();
                        if !lu.is_invertible() {
                            return Err(Error::SingularSystem);
                        }
                        ResolventKind::Dense { lu, offset }
                    }
                }
            }
            None => ResolventKind::Iterative { op: op.clone() },
        };
        Ok(Self { gamma, kind })
    }

    pub fn solve(&self, y: &Point) -> Result<Point> {
        let shifted = |offset: &Option<Point>| match offset {
            Some(c) => y - c,
            None => y.clone(),
        };
        match &self.kind {
            ResolventKind::Scaled { inv, offset } => Ok(shifted(offset).scaled(*inv)),
            ResolventKind::Diagonal { inv, offset } => {
                let mut x = shifted(offset);
                for (v, s) in x.as_mut_slice().iter_mut().zip(inv) {
                    *v *= s;
                }
                Ok(x)
            }
            ResolventKind::Dense { lu, offset } => {
                let rhs = DVector::from_column_slice(shifted(offset).as_slice());
                let sol = lu.solve(&rhs).ok_or(Error::SingularSystem)?;
                Point::new(sol.iter().copied().collect()).with_shape(y.shape())
            }
            ResolventKind::Iterative { op } => self.solve_iteratively(op, y),
        }
    }

    fn solve_iteratively(&self, op: &SingleValuedOp, y: &Point) -> Result<Point> {
        let g = self.gamma;
        let step = (1.0 + g * op.strong_monotonicity) / (1.0 + g * op.lipschitz).powi(2);
        let tol = RESOLVENT_TOLERANCE * (1.0 + y.norm());
        let mut x = y.clone();
        let mut residual = f64::INFINITY;
        for _ in 0..RESOLVENT_MAX_ITERATIONS {
            let mut r = op.evaluate(&x);
            r.scale(g);
            r.add_scaled(1.0, &x);
            r.add_scaled(-1.0, y);
            residual = r.norm();
            if residual <= tol {
                return Ok(x);
            }
            x.add_scaled(-step, &r);
        }
        Err(Error::ResolventNotConverged {
            iterations: RESOLVENT_MAX_ITERATIONS,
            residual,
        })
    }
}

/// The unique `x` with `x + gamma * phi(x) = y`.
pub fn resolve_phi(phi: &SingleValuedOp, y: &Point, gamma: f64) -> Result<Point> {
    ResolventSolver::new(phi, gamma)?.solve(y)
}

/// Componentwise clamp of `y` to `[lower, upper]`.
pub fn project_box(y: &Point, lower: &Point, upper: &Point) -> Result<Point> {
    for b in [lower, upper] {
        if b.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                found: b.len(),
            });
        }
    }
    if lower.as_slice().iter().zip(upper.as_slice()).any(|(l, u)| l > u) {
        return Err(invalid("box lower bound exceeds upper bound"));
    }
    Ok(clamp_unchecked(y, lower.as_slice(), upper.as_slice()))
}

fn clamp_unchecked(y: &Point, lower: &[f64], upper: &[f64]) -> Point {
    let mut out = y.clone();
    for ((v, l), u) in out.as_mut_slice().iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*l, *u);
    }
    out
}

fn thin_svd(m: DMatrix<f64>) -> Result<nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SvdFailure);
    }
    m.try_svd(true, true, f64::EPSILON, 0).ok_or(Error::SvdFailure)
}

/// Singular value soft-thresholding: `U max(S - threshold, 0) V^T`.
///
/// This is the resolvent of `sigma * d||.||_*` with `threshold = gamma * sigma`.
pub fn svt(y: &Point, threshold: f64) -> Result<Point> {
    if !(threshold >= 0.0) {
        return Err(invalid(format!("svt threshold must be >= 0, got {threshold}")));
    }
    let m = y.to_matrix()?;
    let svd = thin_svd(m)?;
    let mut u = svd.u.ok_or(Error::SvdFailure)?;
    let v_t = svd.v_t.ok_or(Error::SvdFailure)?;
    for (j, s) in svd.singular_values.iter().enumerate() {
        let shrunk = (s - threshold).max(0.0);
        u.column_mut(j).scale_mut(shrunk);
    }
    Ok(Point::from_matrix(&(u * v_t)))
}

pub fn nuclear_norm(y: &Point) -> Result<f64> {
    let m = y.to_matrix()?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SvdFailure);
    }
    Ok(m.singular_values().iter().sum())
}

/// Domain of a maximally monotone operator.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainDescriptor {
    WholeSpace { dim: usize },
    Box { lower: Point, upper: Point },
    MatrixBox { lo: f64, hi: f64, rows: usize, cols: usize },
}

impl DomainDescriptor {
    pub fn diameter(&self) -> f64 {
        match self {
            DomainDescriptor::WholeSpace { .. } => f64::INFINITY,
            DomainDescriptor::Box { lower, upper } => upper.dist(lower),
            DomainDescriptor::MatrixBox { lo, hi, rows, cols } => {
                (hi - lo) * ((rows * cols) as f64).sqrt()
            }
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, DomainDescriptor::WholeSpace { .. })
    }

    /// Explicit `(lower, upper)` vectors for box-shaped domains.
    pub fn box_bounds(&self) -> Option<(Point, Point)> {
        match self {
            DomainDescriptor::WholeSpace { .. } => None,
            DomainDescriptor::Box { lower, upper } => Some((lower.clone(), upper.clone())),
            DomainDescriptor::MatrixBox { lo, hi, rows, cols } => {
                let n = rows * cols;
                Some((Point::filled(n, *lo), Point::filled(n, *hi)))
            }
        }
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        match self.box_bounds() {
            None => true,
            Some((lower, upper)) => x
                .as_slice()
                .iter()
                .zip(lower.as_slice().iter().zip(upper.as_slice()))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
        }
    }
}

/// A maximally monotone operator accessed through its resolvent.
#[derive(Debug, Clone)]
pub enum ResolventOp {
    /// `A = 0`; the resolvent is the identity.
    Zero { dim: usize },
    /// Normal cone of `[lower, upper]`; the resolvent is the projection.
    BoxNormalCone { lower: Point, upper: Point },
    /// Normal cone of `[lo, hi]^{rows x cols}`.
    MatrixBoxNormalCone { lo: f64, hi: f64, rows: usize, cols: usize },
    /// `sigma * d||.||_*` on `rows x cols` matrices; the resolvent is SVT.
    NuclearNorm { sigma: f64, rows: usize, cols: usize },
    /// Monotone affine `A x = L x + c`.
    Affine(AffineMap),
}

impl ResolventOp {
    pub fn box_normal_cone(lower: Point, upper: Point) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.as_slice().iter().zip(upper.as_slice()).any(|(l, u)| l > u) {
            return Err(invalid("box lower bound exceeds upper bound"));
        }
        Ok(ResolventOp::BoxNormalCone { lower, upper })
    }

    pub fn dim(&self) -> usize {
        match self {
            ResolventOp::Zero { dim } => *dim,
            ResolventOp::BoxNormalCone { lower, .. } => lower.len(),
            ResolventOp::MatrixBoxNormalCone { rows, cols, .. }
            | ResolventOp::NuclearNorm { rows, cols, .. } => rows * cols,
            ResolventOp::Affine(m) => m.dim,
        }
    }

    /// `J_{gamma A}(y)`.
    pub fn resolve(&self, y: &Point, gamma: f64) -> Result<Point> {
        match self {
            ResolventOp::Zero { .. } => Ok(y.clone()),
            ResolventOp::BoxNormalCone { lower, upper } => {
                Ok(clamp_unchecked(y, lower.as_slice(), upper.as_slice()))
            }
            ResolventOp::MatrixBoxNormalCone { lo, hi, .. } => Ok(y.map(|v| v.clamp(*lo, *hi))),
            ResolventOp::NuclearNorm { sigma, rows, cols } => {
                let shaped = y.clone().with_shape(Some((*rows, *cols)))?;
                svt(&shaped, gamma * sigma)?.with_shape(y.shape().or(Some((*rows, *cols))))
            }
            ResolventOp::Affine(map) => {
                ResolventSolver::new(&SingleValuedOp::affine(map.clone()), gamma)?.solve(y)
            }
        }
    }

    pub fn domain(&self) -> DomainDescriptor {
        match self {
            ResolventOp::BoxNormalCone { lower, upper } => DomainDescriptor::Box {
                lower: lower.clone(),
                upper: upper.clone(),
            },
            ResolventOp::MatrixBoxNormalCone { lo, hi, rows, cols } => {
                DomainDescriptor::MatrixBox {
                    lo: *lo,
                    hi: *hi,
                    rows: *rows,
                    cols: *cols,
                }
            }
            other => DomainDescriptor::WholeSpace { dim: other.dim() },
        }
    }

    /// Lipschitz constant when the operator is single-valued and Lipschitz.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            ResolventOp::Zero { .. } => Some(0.0),
            ResolventOp::Affine(m) => Some(m.linear.spectral_norm()),
            _ => None,
        }
    }

    /// Minimal-norm selection when it is single-valued on the domain.
    fn single_valued_part(&self) -> Option<AffineMap> {
        match self {
            ResolventOp::Zero { dim } => AffineMap::new(*dim, LinearPart::Zero, None).ok(),
            ResolventOp::BoxNormalCone { lower, .. } => {
                AffineMap::new(lower.len(), LinearPart::Zero, None).ok()
            }
            ResolventOp::MatrixBoxNormalCone { rows, cols, .. } => {
                AffineMap::new(rows * cols, LinearPart::Zero, None).ok()
            }
            ResolventOp::Affine(m) => Some(m.clone()),
            ResolventOp::NuclearNorm { .. } => None,
        }
    }
}

/// `D_M`, `C_M`, `C_G` of a bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleConstants {
    pub d_m: f64,
    pub c_m: f64,
    pub c_g: f64,
}

/// Problem data: upper operator `G` and lower operator `M = F + A (+ B)`.
#[derive(Debug, Clone)]
pub struct OperatorBundle {
    pub upper: SingleValuedOp,
    pub lower_smooth: SingleValuedOp,
    pub lower_resolvent_a: ResolventOp,
    pub lower_resolvent_b: Option<ResolventOp>,
    pub constants: BundleConstants,
}

/// Samples used when a bundle computes its own constants.
pub const DEFAULT_CONSTANT_SAMPLES: usize = 2000;

impl OperatorBundle {
    /// Assembles a bundle. Constants are computed with [`estimate_constants`]
    /// (seed 0) when the domain is a box, and left infinite otherwise.
    pub fn new(
        upper: SingleValuedOp,
        lower_smooth: SingleValuedOp,
        lower_resolvent_a: ResolventOp,
        lower_resolvent_b: Option<ResolventOp>,
    ) -> Result<Self> {
        let dim = upper.dim();
        let dims = [
            lower_smooth.dim(),
            lower_resolvent_a.dim(),
            lower_resolvent_b.as_ref().map_or(dim, |b| b.dim()),
        ];
        if let Some(&bad) = dims.iter().find(|&&d| d != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad,
            });
        }
        let mut bundle = Self {
            upper,
            lower_smooth,
            lower_resolvent_a,
            lower_resolvent_b,
            constants: BundleConstants {
                d_m: f64::INFINITY,
                c_m: f64::INFINITY,
                c_g: f64::INFINITY,
            },
        };
        if bundle.domain().is_bounded() {
            bundle.constants =
                estimate_constants(&bundle, &mut SeededRng::new(0), DEFAULT_CONSTANT_SAMPLES)?;
        }
        Ok(bundle)
    }

    pub fn dim(&self) -> usize {
        self.upper.dim()
    }

    /// `dom(M)`: the bounded one of `dom(A)`, `dom(B)` (assumed nested).
    pub fn domain(&self) -> DomainDescriptor {
        let a = self.lower_resolvent_a.domain();
        if a.is_bounded() {
            return a;
        }
        match &self.lower_resolvent_b {
            Some(b) => b.domain(),
            None => a,
        }
    }

    /// `F(x)` plus the minimal-norm selections of the affine resolvent parts.
    pub fn lower_selection(&self, x: &Point) -> Point {
        let mut v = self.lower_smooth.evaluate(x);
        for part in [Some(&self.lower_resolvent_a), self.lower_resolvent_b.as_ref()]
            .into_iter()
            .flatten()
        {
            if let ResolventOp::Affine(m) = part {
                v.add_scaled(1.0, &m.apply(x));
            }
        }
        v
    }

    /// The minimal-norm selection of `M` as one affine map, when every part
    /// is affine on the domain.
    pub fn affine_selection(&self) -> Option<AffineMap> {
        let mut selection = self.lower_smooth.as_affine().cloned();
        for part in [Some(&self.lower_resolvent_a), self.lower_resolvent_b.as_ref()]
            .into_iter()
            .flatten()
        {
            selection = match (selection, part.single_valued_part()) {
                (Some(s), Some(p)) => Some(s.plus_scaled(1.0, &p)),
                _ => None,
            };
        }
        selection
    }

    /// Natural residual `||x - J_A(x - F(x))||` of a two-operator lower level.
    pub fn natural_residual(&self, x: &Point) -> Result<f64> {
        if self.lower_resolvent_b.is_some() {
            return Err(Error::Unsupported(
                "natural residual needs a two-operator lower level".into(),
            ));
        }
        let step = x - &self.lower_smooth.evaluate(x);
        Ok(x.dist(&self.lower_resolvent_a.resolve(&step, 1.0)?))
    }
}

/// `(D_M, C_M, C_G)` for a bundle with a box domain.
///
/// `D_M` is exact. `C_G` and `C_M` are the largest norms over `samples`
/// uniform points of the box, raised to the exact box maximum whenever the
/// operator is affine with a structure [`AffineMap::max_norm_over_box`]
/// handles. `C_M` uses the minimal-norm selection of `M`.
pub fn estimate_constants(
    bundle: &OperatorBundle,
    rng: &mut SeededRng,
    samples: usize,
) -> Result<BundleConstants> {
    if samples == 0 {
        return Err(invalid("estimate_constants needs at least one sample"));
    }
    let domain = bundle.domain();
    let (lower, upper) = domain
        .box_bounds()
        .ok_or_else(|| Error::Unsupported("constants need a box domain".into()))?;
    let d_m = domain.diameter();

    let selection = bundle.affine_selection();
    let mut c_g: f64 = 0.0;
    let mut c_m: f64 = 0.0;
    for _ in 0..samples {
        let x = rng.uniform_point(&lower, &upper);
        c_g = c_g.max(bundle.upper.evaluate(&x).norm());
        c_m = c_m.max(bundle.lower_selection(&x).norm());
    }
    if let Some(exact) = bundle
        .upper
        .as_affine()
        .and_then(|g| g.max_norm_over_box(&lower, &upper))
    {
        c_g = c_g.max(exact);
    }
    if let Some(exact) = selection.and_then(|s| s.max_norm_over_box(&lower, &upper)) {
        c_m = c_m.max(exact);
    }
    Ok(BundleConstants { d_m, c_m, c_g })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorspace::sample_gaussian;
    use approx::assert_relative_eq;

    fn p(v: &[f64]) -> Point {
        Point::new(v.to_vec())
    }

    #[test]
    fn project_box_examples() {
        let (lo, hi) = (p(&[11.0, 10.0]), p(&[60.0, 50.0]));
        let inside = p(&[20.0, 30.0]);
        assert_eq!(project_box(&inside, &lo, &hi).unwrap(), inside);
        let y = p(&[70.0, 5.0]);
        let once = project_box(&y, &lo, &hi).unwrap();
        assert_eq!(once, p(&[60.0, 10.0]));
        assert_eq!(project_box(&once, &lo, &hi).unwrap(), once);
        assert!(project_box(&p(&[1.0]), &lo, &hi).is_err());
        assert!(project_box(&y, &hi, &lo).is_err());
    }

    #[test]
    fn svt_examples() {
        let y = Point::matrix(vec![3.0, 0.0, 0.0, 1.0], 2, 2).unwrap();
        let same = svt(&y, 0.0).unwrap();
        for (a, b) in same.as_slice().iter().zip(y.as_slice()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        let shrunk = svt(&y, 2.0).unwrap();
        for (a, b) in shrunk.as_slice().iter().zip(&[1.0, 0.0, 0.0, 0.0]) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        let mut rng = SeededRng::new(5);
        let r = Point::matrix(sample_gaussian(&mut rng, 12, 1.0).into_vec(), 3, 4).unwrap();
        let smax = r.to_matrix().unwrap().singular_values().max();
        assert!(svt(&r, smax).unwrap().norm() < 1e-12);
    }

    #[test]
    fn svt_rejects_bad_input() {
        assert!(matches!(svt(&Point::zeros(4), 1.0), Err(Error::MissingShape)));
        let bad = Point::matrix(vec![f64::NAN, 0.0, 0.0, 1.0], 2, 2).unwrap();
        assert!(matches!(svt(&bad, 1.0), Err(Error::SvdFailure)));
    }

    #[test]
    fn resolvents_are_firmly_nonexpansive() {
        let mut rng = SeededRng::new(17);
        let (lo, hi) = (p(&[-1.0, 0.0, 2.0]), p(&[1.0, 0.5, 4.0]));
        for _ in 0..1000 {
            let y1 = sample_gaussian(&mut rng, 3, 3.0);
            let y2 = sample_gaussian(&mut rng, 3, 3.0);
            let (t1, t2) = (
                project_box(&y1, &lo, &hi).unwrap(),
                project_box(&y2, &lo, &hi).unwrap(),
            );
            let d = &t1 - &t2;
            assert!(d.norm_sq() <= d.inner(&(&y1 - &y2)) + 1e-12);
        }
        for _ in 0..1000 {
            let y1 = Point::matrix(sample_gaussian(&mut rng, 12, 2.0).into_vec(), 4, 3).unwrap();
            let y2 = Point::matrix(sample_gaussian(&mut rng, 12, 2.0).into_vec(), 4, 3).unwrap();
            let t = rng.uniform(0.0, 3.0);
            let d = &svt(&y1, t).unwrap() - &svt(&y2, t).unwrap();
            assert!(d.norm_sq() <= d.inner(&(&y1 - &y2)) + 1e-10);
        }
    }

    #[test]
    fn phi_examples() {
        let w = Point::zeros(1);
        let phi = build_phi(&w, 1.0, 1.0, &SingleValuedOp::zero(1), &SingleValuedOp::identity(1))
            .unwrap();
        assert_eq!(phi.evaluate(&p(&[3.0])), p(&[6.0]));

        let w = p(&[2.0, -1.0]);
        let phi = build_phi(&w, 0.5, 0.0, &SingleValuedOp::zero(2), &SingleValuedOp::identity(2))
            .unwrap();
        assert_eq!(phi.evaluate(&w), Point::zeros(2));
        assert_eq!(phi.evaluate(&p(&[4.0, 1.0])), p(&[1.0, 1.0]));

        let f = SingleValuedOp::custom(1, |x| x.scaled(2.0), 2.0, 0.0);
        let g = SingleValuedOp::custom(1, |x| x.clone(), 1.0, 0.0);
        let phi = build_phi(&Point::zeros(1), 1.0, 0.5, &f, &g).unwrap();
        assert_relative_eq!(phi.lipschitz(), 3.5);
        assert_relative_eq!(phi.strong_monotonicity(), 1.0);
        assert_relative_eq!(phi.cocoercivity(), 1.0 / 12.25);
    }

    #[test]
    fn phi_is_strongly_monotone() {
        let mut rng = SeededRng::new(23);
        let n = 4;
        let skew = {
            let m = rng.gaussian_matrix(n, n);
            &m - m.transpose()
        };
        let f = SingleValuedOp::dense(skew, Some(sample_gaussian(&mut rng, n, 1.0))).unwrap();
        let g = SingleValuedOp::custom(n, |x| x.map(|v| v.atan() + v), 2.0, 1.0);
        let alpha = 0.3;
        let w = sample_gaussian(&mut rng, n, 1.0);
        let phi = build_phi(&w, alpha, 0.7, &f, &g).unwrap();
        for _ in 0..500 {
            let x = sample_gaussian(&mut rng, n, 5.0);
            let y = sample_gaussian(&mut rng, n, 5.0);
            let d = &x - &y;
            let lhs = (&phi.evaluate(&x) - &phi.evaluate(&y)).inner(&d);
            assert!(lhs >= alpha * d.norm_sq() - 1e-10 * (1.0 + d.norm_sq()));
        }
    }

    #[test]
    fn resolve_phi_examples() {
        // phi(x) = 2x + 1
        let phi = SingleValuedOp::affine(
            AffineMap::new(1, LinearPart::Scaled(2.0), Some(p(&[1.0]))).unwrap(),
        );
        assert_relative_eq!(resolve_phi(&phi, &p(&[4.0]), 1.0).unwrap()[0], 1.0);
        let y = p(&[3.0, -2.0]);
        for gamma in [0.1, 1.0, 10.0] {
            assert_eq!(resolve_phi(&SingleValuedOp::zero(2), &y, gamma).unwrap(), y);
        }
        assert!(resolve_phi(&phi, &p(&[4.0]), 0.0).is_err());
    }

    #[test]
    fn resolve_phi_residuals() {
        let mut rng = SeededRng::new(31);
        for n in [1usize, 3, 6] {
            let m = rng.gaussian_matrix(n, n);
            let mono = &m * m.transpose() + (&m - m.transpose());
            let phi = build_phi(
                &sample_gaussian(&mut rng, n, 1.0),
                0.4,
                0.2,
                &SingleValuedOp::dense(mono, Some(sample_gaussian(&mut rng, n, 1.0))).unwrap(),
                &SingleValuedOp::identity(n),
            )
            .unwrap();
            for gamma in [0.05, 1.0, 7.0] {
                let y = sample_gaussian(&mut rng, n, 4.0);
                let x = resolve_phi(&phi, &y, gamma).unwrap();
                let r = &(&x + &phi.evaluate(&x).scaled(gamma)) - &y;
                assert!(r.norm() <= 1e-10 * (1.0 + y.norm()), "residual {}", r.norm());
            }
        }
        // non-affine route
        let g = SingleValuedOp::custom(2, |x| x.map(|v| v.tanh()), 1.0, 0.0);
        let phi = build_phi(&p(&[1.0, 2.0]), 0.5, 1.0, &SingleValuedOp::zero(2), &g).unwrap();
        let y = p(&[0.3, -4.0]);
        let x = resolve_phi(&phi, &y, 2.0).unwrap();
        let r = &(&x + &phi.evaluate(&x).scaled(2.0)) - &y;
        assert!(r.norm() <= 1e-10 * (1.0 + y.norm()));
    }

    #[test]
    fn affine_constants_are_exact() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -0.1, 0.1, 0.0]);
        let f = SingleValuedOp::dense(m, Some(p(&[1.0, 0.0]))).unwrap();
        assert_relative_eq!(f.lipschitz(), 0.1, epsilon = 1e-14);
        assert_eq!(f.strong_monotonicity(), 0.0);
        assert!(f.as_affine().unwrap().linear().is_skew());
    }

    fn equilibrium_like(g: SingleValuedOp) -> OperatorBundle {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -0.1, 0.1, 0.0]);
        OperatorBundle::new(
            g,
            SingleValuedOp::dense(m, Some(p(&[1.0, 0.0]))).unwrap(),
            ResolventOp::box_normal_cone(p(&[11.0, 10.0]), p(&[60.0, 50.0])).unwrap(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn constants_on_the_equilibrium_box() {
        let bundle = equilibrium_like(SingleValuedOp::identity(2));
        let c = estimate_constants(&bundle, &mut SeededRng::new(1), 100).unwrap();
        assert_relative_eq!(c.d_m, (49.0f64 * 49.0 + 40.0 * 40.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(c.d_m, 63.25, epsilon = 5e-3);
        assert_relative_eq!(c.c_g, (60.0f64 * 60.0 + 50.0 * 50.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(c.c_g, 78.10, epsilon = 5e-3);
        // ||S x + c|| peaks at the corner (60, 50): (-4, 6)
        assert_relative_eq!(c.c_m, 52f64.sqrt(), epsilon = 1e-12);
        assert!(estimate_constants(&bundle, &mut SeededRng::new(1), 0).is_err());
    }

    #[test]
    fn constants_need_a_box() {
        let bundle = OperatorBundle::new(
            SingleValuedOp::identity(2),
            SingleValuedOp::zero(2),
            ResolventOp::Zero { dim: 2 },
            None,
        )
        .unwrap();
        assert!(bundle.constants.d_m.is_infinite());
        assert!(estimate_constants(&bundle, &mut SeededRng::new(1), 10).is_err());
    }

    #[test]
    fn nonlinear_upper_constant_by_sampling() {
        let g = SingleValuedOp::custom(2, |x| x.map(|v| 2.0 * v), 2.0, 2.0);
        let bundle = equilibrium_like(g);
        // the sampled maximum cannot exceed the true one, 2 * ||(60, 50)||
        assert!(bundle.constants.c_g <= 2.0 * 78.103);
        assert!(bundle.constants.c_g > 0.9 * 2.0 * 78.1);
    }

    #[test]
    fn matrix_box_domain() {
        let d = DomainDescriptor::MatrixBox {
            lo: 0.0,
            hi: 1.0,
            rows: 4,
            cols: 9,
        };
        assert_relative_eq!(d.diameter(), 6.0);
        assert!(d.contains(&Point::filled(36, 0.5), 0.0));
        assert!(!d.contains(&Point::filled(36, 1.5), 0.0));
    }
}
