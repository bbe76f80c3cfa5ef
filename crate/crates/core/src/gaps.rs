//! Merit functions, the per-step energy inequality and the a priori bounds.
//!
//! * `gap_opt(u) = sup_{v in S0} <G v, u - v>`
//! * `gap_feas(x) = sup_{y in dom M} <V(y), x - y>` with `V` the minimal-norm
//!   selection of `M`. For `x` in `dom M` a normal-cone element only lowers
//!   the objective, so the restriction is exact there. Outside the domain the
//!   literal supremum is infinite; the restricted value is returned together
//!   with an out-of-domain flag.

use crate::error::{invalid, Error, Result};
use crate::operators::{AffineMap, OperatorBundle, SingleValuedOp};
use crate::outer_loop::Trace;
use crate::vectorspace::Point;

/// Analytically known lower-level solution set.
#[derive(Debug, Clone, PartialEq)]
pub enum SolutionSet {
    /// `{a + t (b - a) : t in [0, 1]}`
    Segment { a: Point, b: Point },
    Singleton(Point),
    Sampled(Vec<Point>),
}

impl SolutionSet {
    pub fn description(&self) -> String {
        match self {
            SolutionSet::Segment { a, b } => format!("segment {:?} to {:?}", a.as_slice(), b.as_slice()),
            SolutionSet::Singleton(p) => format!("singleton {:?}", p.as_slice()),
            SolutionSet::Sampled(ps) => format!("{} sampled points", ps.len()),
        }
    }

    pub fn project(&self, u: &Point) -> Point {
        match self {
            SolutionSet::Segment { a, b } => {
                let d = b - a;
                let dd = d.norm_sq();
                let t = if dd == 0.0 {
                    0.0
                } else {
                    ((u - a).inner(&d) / dd).clamp(0.0, 1.0)
                };
                a.lincomb(1.0, t, &d)
            }
            SolutionSet::Singleton(p) => p.clone(),
            SolutionSet::Sampled(ps) => ps
                .iter()
                .min_by(|x, y| u.dist(x).total_cmp(&u.dist(y)))
                .cloned()
                .unwrap_or_else(|| u.clone()),
        }
    }

    /// `k >= 2` evenly spaced points of a segment, or the stored points.
    pub fn sample(&self, k: usize) -> Vec<Point> {
        match self {
            SolutionSet::Segment { a, b } => {
                let d = b - a;
                (0..k.max(2))
                    .map(|i| a.lincomb(1.0, i as f64 / (k.max(2) - 1) as f64, &d))
                    .collect()
            }
            SolutionSet::Singleton(p) => vec![p.clone()],
            SolutionSet::Sampled(ps) => ps.clone(),
        }
    }
}

pub fn dist_to_solution(u: &Point, sol: &SolutionSet) -> f64 {
    u.dist(&sol.project(u))
}

/// Grid size used on segments when `G` is not affine.
pub const SEGMENT_GRID: usize = 1000;

pub fn gap_opt(u: &Point, sol: &SolutionSet, g: &SingleValuedOp) -> Result<f64> {
    let value = |v: &Point| g.evaluate(v).inner(&(u - v));
    match sol {
        SolutionSet::Singleton(p) => Ok(value(p)),
        SolutionSet::Sampled(ps) => {
            if ps.is_empty() {
                return Err(invalid("empty solution sample"));
            }
            Ok(ps.iter().map(value).fold(f64::NEG_INFINITY, f64::max))
        }
        SolutionSet::Segment { a, b } => {
            let d = b - a;
            match g.as_affine() {
                Some(map) => Ok(segment_quadratic_max(u, a, &d, map)),
                None => {
                    let at = |t: f64| value(&a.lincomb(1.0, t, &d));
                    Ok(refine_max_1d(&at, SEGMENT_GRID))
                }
            }
        }
    }
}

/// `max_{t in [0,1]} <G(a + t d), u - a - t d>` for affine `G`.
///
/// With `G(a + t d) = G a + t L d` the objective is
/// `c0 + c1 t + c2 t^2`, `c2 = -<L d, d>`.
fn segment_quadratic_max(u: &Point, a: &Point, d: &Point, g: &AffineMap) -> f64 {
    let ga = g.apply(a);
    let ld = &g.apply(&(a + d)) - &ga;
    let ua = u - a;
    let c0 = ga.inner(&ua);
    let c1 = ld.inner(&ua) - ga.inner(d);
    let c2 = -ld.inner(d);
    let f = |t: f64| c0 + c1 * t + c2 * t * t;
    let mut best = f(0.0).max(f(1.0));
    if c2 < 0.0 {
        let vertex = -c1 / (2.0 * c2);
        if vertex > 0.0 && vertex < 1.0 {
            best = best.max(f(vertex));
        }
    }
    best
}

/// Grid search on `[0, 1]` followed by golden-section refinement to `1e-9`.
fn refine_max_1d(f: &dyn Fn(f64) -> f64, grid: usize) -> f64 {
    let h = 1.0 / grid as f64;
    let (mut best_t, mut best) = (0.0, f(0.0));
    for i in 1..=grid {
        let t = i as f64 * h;
        let v = f(t);
        if v > best {
            best = v;
            best_t = t;
        }
    }
    let (mut lo, mut hi) = ((best_t - h).max(0.0), (best_t + h).min(1.0));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-9 {
        let (m1, m2) = (hi - r * (hi - lo), lo + r * (hi - lo));
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    best.max(f(0.5 * (lo + hi)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasGap {
    pub value: f64,
    pub in_domain: bool,
}

/// Grid points per dimension for the fallback evaluation.
pub const FEAS_GRID: usize = 200;

pub fn gap_feas(x: &Point, bundle: &OperatorBundle) -> Result<FeasGap> {
    let domain = bundle.domain();
    let (lower, upper) = domain
        .box_bounds()
        .ok_or_else(|| Error::Unsupported("feasibility gap needs a box domain".into()))?;
    let in_domain = domain.contains(x, 1e-12);
    if let Some(sel) = bundle.affine_selection() {
        if sel.linear().is_skew() {
            return Ok(FeasGap {
                value: skew_affine_feas(x, &sel, &lower, &upper),
                in_domain,
            });
        }
    }
    gap_feas_grid(x, bundle, FEAS_GRID)
}

/// `<L y + c, x - y> = <y, L^T x - c> + <c, x>` for skew `L`: linear in `y`,
/// so the box maximum picks a bound per coordinate.
fn skew_affine_feas(x: &Point, sel: &AffineMap, lower: &Point, upper: &Point) -> f64 {
    let ltx = sel.linear().transpose_apply(x.as_slice());
    let zero = Point::zeros(x.len());
    let c = sel.offset().unwrap_or(&zero);
    let mut value = c.inner(x);
    for i in 0..x.len() {
        let coef = ltx[i] - c[i];
        value += if coef > 0.0 { coef * upper[i] } else { coef * lower[i] };
    }
    value
}

/// Grid evaluation with one local refinement pass; boxes of dimension 1 or 2.
pub fn gap_feas_grid(x: &Point, bundle: &OperatorBundle, per_dim: usize) -> Result<FeasGap> {
    let domain = bundle.domain();
    let (lower, upper) = domain
        .box_bounds()
        .ok_or_else(|| Error::Unsupported("feasibility gap needs a box domain".into()))?;
    let dim = x.len();
    if dim > 2 {
        return Err(Error::Unsupported(format!(
            "grid feasibility gap supports at most 2 dimensions, got {dim}"
        )));
    }
    if per_dim < 2 {
        return Err(invalid("grid needs at least 2 points per dimension"));
    }
    let objective = |y: &Point| bundle.lower_selection(y).inner(&(x - y));
    let search = |lo: &[f64], hi: &[f64]| {
        let mut best = (f64::NEG_INFINITY, Point::zeros(dim));
        let steps = per_dim - 1;
        let count = if dim == 1 { per_dim } else { per_dim * per_dim };
        for idx in 0..count {
            let coords: Vec<f64> = (0..dim)
                .map(|k| {
                    let i = if k == 0 { idx % per_dim } else { idx / per_dim };
                    lo[k] + (hi[k] - lo[k]) * i as f64 / steps as f64
                })
                .collect();
            let y = Point::new(coords);
            let v = objective(&y);
            if v > best.0 {
                best = (v, y);
            }
        }
        best
    };
    let (coarse, at) = search(lower.as_slice(), upper.as_slice());
    let cell: Vec<f64> = (0..dim)
        .map(|k| (upper[k] - lower[k]) / (per_dim - 1) as f64)
        .collect();
    let lo: Vec<f64> = (0..dim).map(|k| (at[k] - cell[k]).max(lower[k])).collect();
    let hi: Vec<f64> = (0..dim).map(|k| (at[k] + cell[k]).min(upper[k])).collect();
    let (fine, _) = search(&lo, &hi);
    Ok(FeasGap {
        value: coarse.max(fine),
        in_domain: domain.contains(x, 1e-12),
    })
}

/// Inputs of the bound constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub alpha: f64,
    pub mu: f64,
    pub beta_max: f64,
    pub e_max: f64,
    pub e0: f64,
    pub d_m: f64,
    pub c_m: f64,
    pub c_g: f64,
    pub beta0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub inputs: BoundInputs,
}

impl BoundConstants {
    pub fn new(inputs: BoundInputs) -> Self {
        let BoundInputs {
            alpha,
            mu,
            beta_max,
            e_max,
            e0,
            d_m,
            c_m,
            c_g,
            beta0,
        } = inputs;
        let c1 = 2.0 * alpha * (1.0 + mu * beta_max / alpha) * (e_max + d_m)
            + c_m / alpha
            + beta_max * c_g / alpha;
        let c2 = alpha * (e0 * e0 + d_m * d_m);
        Self {
            c1,
            c2,
            c3: beta0 * c2,
            c4: c_g * (e_max + d_m),
            inputs,
        }
    }

    /// Constants for a finished run; `e_max` is taken over every step.
    pub fn from_trace(trace: &Trace, bundle: &OperatorBundle, alpha: f64, mu: f64) -> Result<Self> {
        let errors = trace
            .errors()
            .ok_or_else(|| Error::Unsupported("tracking errors unavailable in nonexpansive mode".into()))?;
        let first = trace
            .records
            .first()
            .ok_or_else(|| invalid("empty trace"))?;
        let beta_max = trace.records.iter().map(|r| r.beta).fold(0.0, f64::max);
        Ok(Self::new(BoundInputs {
            alpha,
            mu,
            beta_max,
            e_max: errors.iter().copied().fold(0.0, f64::max),
            e0: errors[0],
            d_m: bundle.constants.d_m,
            c_m: bundle.constants.c_m,
            c_g: bundle.constants.c_g,
            beta0: first.beta,
        }))
    }

    /// The same constants with `C1` replaced.
    pub fn with_c1(mut self, c1: f64) -> Self {
        self.c1 = c1;
        self
    }
}

/// `(lambda_n, beta_n, e_n)` for one outer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerm {
    pub lambda: f64,
    pub beta: f64,
    pub e: f64,
}

pub fn bound_terms(trace: &Trace) -> Option<Vec<BoundTerm>> {
    trace
        .records
        .iter()
        .map(|r| {
            r.e.map(|e| BoundTerm {
                lambda: r.lambda,
                beta: r.beta,
                e,
            })
        })
        .collect()
}

/// `C2 / sum(lb) + C1 sum(l e) / sum(lb)` over the first `terms.len()` steps.
pub fn bound_opt(terms: &[BoundTerm], c: &BoundConstants) -> f64 {
    let s: f64 = terms.iter().map(|t| t.lambda * t.beta).sum();
    let le: f64 = terms.iter().map(|t| t.lambda * t.e).sum();
    c.c2 / s + c.c1 * le / s
}

/// `C3 / sum(lb) + C4 sum(l b^2) / sum(lb) + C1 sum(l b e) / sum(lb)`.
pub fn bound_feas(terms: &[BoundTerm], c: &BoundConstants) -> f64 {
    let s: f64 = terms.iter().map(|t| t.lambda * t.beta).sum();
    let lb2: f64 = terms.iter().map(|t| t.lambda * t.beta * t.beta).sum();
    let lbe: f64 = terms.iter().map(|t| t.lambda * t.beta * t.e).sum();
    c.c3 / s + c.c4 * lb2 / s + c.c1 * lbe / s
}

/// LHS minus RHS of the per-step energy inequality at `(x, v)`, `v in M x`.
///
/// `None` when a step ran in nonexpansive mode. Needs full anchors.
pub fn energy_check(
    trace: &Trace,
    g: &SingleValuedOp,
    x: &Point,
    v: &Point,
    constants: &BoundConstants,
    alpha: f64,
) -> Result<Option<Vec<f64>>> {
    let gx = g.evaluate(x);
    let mut out = Vec::with_capacity(trace.len());
    for r in &trace.records {
        let Some(e) = r.e else { return Ok(None) };
        let (w, w_next) = match (trace.anchor(r.n), r.w_next.point()) {
            (Some(w), Some(wn)) => (w, wn),
            _ => return Err(Error::Unsupported("energy check needs full anchors".into())),
        };
        let d_next = w_next - x;
        let lhs = r.lambda * v.inner(&d_next) + r.lambda * r.beta * gx.inner(&d_next);
        let rhs = -0.5 * alpha * r.lambda_next * d_next.norm_sq()
            + 0.5 * alpha * r.lambda * w.dist(x).powi(2)
            + constants.c1 * r.lambda * e;
        out.push(lhs - rhs);
    }
    Ok(Some(out))
}

/// Least-squares fit of `log gap_feas = log kappa + rho log dist` over points
/// at positive distance from `S0`. Returns `(kappa, rho)`.
pub fn weak_sharpness_diag(
    points: &[Point],
    bundle: &OperatorBundle,
    sol: &SolutionSet,
) -> Result<(f64, f64)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for p in points {
        let d = dist_to_solution(p, sol);
        if d <= 1e-12 {
            continue;
        }
        let g = gap_feas(p, bundle)?.value;
        if g <= 0.0 {
            continue;
        }
        xs.push(d.ln());
        ys.push(g.ln());
    }
    if xs.len() < 3 {
        return Err(invalid("weak sharpness fit needs at least 3 points off the solution set"));
    }
    let (slope, intercept) = least_squares(&xs, &ys);
    Ok((intercept.exp(), slope))
}

/// Slope and intercept of the least-squares line through `(xs, ys)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
