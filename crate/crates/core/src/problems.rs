//! Generators for the three experiment instances.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::encodings::EncodingKind;
use crate::error::{invalid, Error, Result};
use crate::gaps::{gap_feas, gap_opt, SolutionSet};
use crate::operators::{
    nuclear_norm, AffineMap, LinearPart, OperatorBundle, ResolventOp, SingleValuedOp,
};
use crate::outer_loop::{
    dante_run_with, BetaSchedule, DanteConfig, EpsilonSchedule, Schedules, StepView, TauPolicy,
    Trace,
};
use crate::vectorspace::{sample_gaussian, Point, SeededRng};

/// Which iterate a monitor reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorTarget {
    /// The anchor `w_{n+1}`.
    Anchor,
    /// The averaged iterate.
    Average,
}

pub type MonitorFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Monitor {
    pub name: String,
    pub target: MonitorTarget,
    pub f: MonitorFn,
}

impl fmt::Debug for Monitor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Monitor")
            .field("name", &self.name)
            .field("target", &self.target)
            .finish()
    }
}

impl Monitor {
    pub fn new(
        name: &str,
        target: MonitorTarget,
        f: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.to_string(),
            target,
            f: Arc::new(f),
        }
    }
}

/// Data kept alongside the inpainting instance.
#[derive(Debug, Clone)]
pub struct InpaintingData {
    pub original: Point,
    pub mask: Vec<f64>,
    pub corrupt: Point,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub name: &'static str,
    pub bundle: OperatorBundle,
    pub sol: Option<SolutionSet>,
    pub reference: Option<Point>,
    pub monitors: Vec<Monitor>,
    pub defaults: DanteConfig,
    pub inpainting: Option<InpaintingData>,
}

impl ProblemInstance {
    /// Per-step diagnostics: gaps at the average when `sol` is known, then monitors.
    pub fn observe(&self, view: &StepView<'_>) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        if let Some(sol) = &self.sol {
            if let Ok(v) = gap_opt(view.wbar_next, sol, &self.bundle.upper) {
                out.push(("gap_opt".to_string(), v));
            }
            if let Ok(g) = gap_feas(view.wbar_next, &self.bundle) {
                out.push(("gap_feas".to_string(), g.value));
                out.push(("in_domain".to_string(), if g.in_domain { 1.0 } else { 0.0 }));
            }
        }
        for m in &self.monitors {
            let x = match m.target {
                MonitorTarget::Anchor => view.w_next,
                MonitorTarget::Average => view.wbar_next,
            };
            out.push((m.name.clone(), (m.f)(x)));
        }
        out
    }

    /// Monitor values at the starting point.
    pub fn initial_monitors(&self, w0: &Point) -> Vec<(String, f64)> {
        self.monitors
            .iter()
            .map(|m| (m.name.clone(), (m.f)(w0)))
            .collect()
    }
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub wbar: Point,
    pub trace: Trace,
    pub elapsed: std::time::Duration,
}

/// Runs `config` on `inst`, recording the instance diagnostics at every step.
pub fn run_instance(inst: &ProblemInstance, config: &DanteConfig) -> Result<RunOutput> {
    let start = std::time::Instant::now();
    let (wbar, trace) = dante_run_with(&inst.bundle, config, |v| inst.observe(v))?;
    Ok(RunOutput {
        wbar,
        trace,
        elapsed: start.elapsed(),
    })
}

fn power_schedules(b: f64, eps_scale: f64, eps_exponent: f64) -> Schedules {
    Schedules {
        beta: BetaSchedule::Monotone { b },
        epsilon: EpsilonSchedule {
            scale: eps_scale,
            exponent: eps_exponent,
        },
    }
}

/// Two-player zero-sum game on `[11,60] x [10,50]` with solution set `[11,60] x {10}`.
pub fn build_equilibrium() -> Result<ProblemInstance> {
    let s = DMatrix::from_row_slice(2, 2, &[0.0, -0.1, 0.1, 0.0]);
    let lower = Point::new(vec![11.0, 10.0]);
    let upper = Point::new(vec![60.0, 50.0]);
    let bundle = OperatorBundle::new(
        SingleValuedOp::identity(2),
        SingleValuedOp::dense(s, Some(Point::new(vec![1.0, 0.0])))?,
        ResolventOp::box_normal_cone(lower, upper)?,
        None,
    )?;
    let reference = Point::new(vec![11.0, 10.0]);
    let sol = SolutionSet::Segment {
        a: reference.clone(),
        b: Point::new(vec![60.0, 10.0]),
    };
    let r = reference.clone();
    let defaults = DanteConfig {
        alpha: 0.1,
        mu: 0.0,
        n_outer: 1000,
        schedules: power_schedules(0.55, 1e-3, 2.0),
        encoding: EncodingKind::Fb,
        theta: 0.7,
        tau: TauPolicy::default(),
        hard_cap: None,
        gamma: None,
        eta: 0.5,
        w0: Point::new(vec![40.0, 30.0]),
    };
    Ok(ProblemInstance {
        name: "equilibrium",
        bundle,
        sol: Some(sol),
        reference: Some(reference),
        monitors: vec![Monitor::new("err_to_ref", MonitorTarget::Average, move |x| {
            x.dist(&r)
        })],
        defaults,
        inpainting: None,
    })
}

/// Options for [`build_lnls_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct LnlsOptions {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub nonzeros: usize,
    pub noise: f64,
    pub seed: u64,
}

impl LnlsOptions {
    pub fn new(rows: usize, cols: usize, rank: usize, seed: u64) -> Self {
        Self {
            rows,
            cols,
            rank,
            nonzeros: 20,
            noise: 0.1,
            seed,
        }
    }
}

pub const LNLS_BOX: f64 = 1000.0;
pub const LNLS_SINGULAR_CLIP: f64 = 10.0;
const LNLS_ATTEMPTS: usize = 100;

/// Generated least-squares data.
#[derive(Debug, Clone)]
pub struct LnlsData {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub s: DVector<f64>,
    pub z: DVector<f64>,
}

fn clip_singular_values(a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut svd = a.try_svd(true, true, f64::EPSILON, 0).ok_or(Error::SvdFailure)?;
    svd.singular_values
        .iter_mut()
        .for_each(|s| *s = s.clamp(0.0, LNLS_SINGULAR_CLIP));
    svd.recompose().map_err(|_| Error::SvdFailure)
}

fn min_norm_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().try_svd(true, true, f64::EPSILON, 0).ok_or(Error::SvdFailure)?;
    let smax = svd.singular_values.max();
    let tol = smax * a.nrows().max(a.ncols()) as f64 * f64::EPSILON;
    svd.solve(b, tol).map_err(|_| Error::SvdFailure)
}

/// Draws `A`, `s`, `b` and `z = A^+ b`, retrying until `z` lies in the box.
pub fn generate_lnls(opts: &LnlsOptions) -> Result<LnlsData> {
    if opts.rows == 0 || opts.cols == 0 || opts.rank == 0 {
        return Err(invalid("LNLS dimensions and rank must be positive"));
    }
    if opts.nonzeros > opts.cols {
        return Err(invalid(format!(
            "cannot place {} nonzeros in {} coordinates",
            opts.nonzeros, opts.cols
        )));
    }
    if !(opts.noise >= 0.0) {
        return Err(invalid("noise scale must be nonnegative"));
    }
    let mut rng = SeededRng::new(opts.seed);
    for _ in 0..LNLS_ATTEMPTS {
        let u1 = rng.gaussian_matrix(opts.rows, opts.rank);
        let u2 = rng.gaussian_matrix(opts.rank, opts.cols);
        let a = clip_singular_values(u1 * u2)?;
        let mut s = DVector::zeros(opts.cols);
        for i in rng.sample_indices(opts.cols, opts.nonzeros) {
            s[i] = rng.uniform(0.0, 10.0);
        }
        let noise = DVector::from_fn(opts.rows, |_, _| rng.normal() * opts.noise);
        let b = &a * &s + noise;
        let z = min_norm_least_squares(&a, &b)?;
        if z.iter().all(|v| v.is_finite() && v.abs() <= LNLS_BOX) {
            return Ok(LnlsData { a, b, s, z });
        }
    }
    Err(Error::Generation(format!(
        "no admissible least-squares instance after {LNLS_ATTEMPTS} attempts"
    )))
}

/// `½‖Av − b‖²`.
pub fn lnls_objective(a: &DMatrix<f64>, b: &DVector<f64>, v: &[f64]) -> f64 {
    let r = a * DVector::from_column_slice(v) - b;
    0.5 * r.norm_squared()
}

pub fn build_lnls(rows: usize, cols: usize, rank: usize, seed: u64) -> Result<ProblemInstance> {
    build_lnls_with(&LnlsOptions::new(rows, cols, rank, seed))
}

/// Least-squares problem over `[-1000, 1000]^Q` with `F(v) = 2Aᵀ(Av − b)`.
pub fn build_lnls_with(opts: &LnlsOptions) -> Result<ProblemInstance> {
    let data = generate_lnls(opts)?;
    let q = opts.cols;
    let at = data.a.transpose();
    let hessian = (&at * &data.a) * 2.0;
    let offset = (&at * &data.b) * -2.0;
    let bundle = OperatorBundle::new(
        SingleValuedOp::identity(q),
        SingleValuedOp::dense(hessian, Some(Point::new(offset.as_slice().to_vec())))?,
        ResolventOp::box_normal_cone(Point::filled(q, -LNLS_BOX), Point::filled(q, LNLS_BOX))?,
        None,
    )?;
    let reference = Point::new(data.z.as_slice().to_vec());
    let z = reference.clone();
    let f_star = lnls_objective(&data.a, &data.b, data.z.as_slice());
    let (a, b) = (data.a.clone(), data.b.clone());
    let alpha = 1.0;
    let mut rng = SeededRng::new(opts.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let defaults = DanteConfig {
        alpha,
        mu: 0.0,
        n_outer: 2000,
        schedules: power_schedules(0.55, alpha * 1e-3, 1.0),
        encoding: EncodingKind::Fb,
        theta: 0.75,
        tau: TauPolicy::default(),
        hard_cap: None,
        gamma: None,
        eta: 0.5,
        w0: sample_gaussian(&mut rng, q, 0.1),
    };
    Ok(ProblemInstance {
        name: "lnls",
        bundle,
        sol: None,
        reference: Some(reference),
        monitors: vec![
            Monitor::new("err_to_ref", MonitorTarget::Anchor, move |x| x.dist(&z)),
            Monitor::new("lower_obj", MonitorTarget::Anchor, move |x| {
                lnls_objective(&a, &b, x.as_slice()) - f_star
            }),
        ],
        defaults,
        inpainting: None,
    })
}

/// Low-rank image: product of seeded normal factors, min-max scaled to `[0, 1]`.
pub fn synthetic_image(rows: usize, cols: usize, rank: usize, seed: u64) -> Result<Point> {
    if rows == 0 || cols == 0 || rank == 0 {
        return Err(invalid("image dimensions and rank must be positive"));
    }
    let mut rng = SeededRng::new(seed);
    let u = rng.gaussian_matrix(rows, rank);
    let v = rng.gaussian_matrix(rank, cols);
    let m = u * v;
    let (lo, hi) = (m.min(), m.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    Ok(Point::from_matrix(&m.map(|x| (x - lo) / span)))
}

/// `½‖R(Y) − Y_c‖² + σ‖Y‖_*`.
pub fn inpainting_objective(y: &Point, mask: &[f64], corrupt: &Point, sigma: f64) -> Result<f64> {
    let fit: f64 = y
        .as_slice()
        .iter()
        .zip(mask)
        .zip(corrupt.as_slice())
        .map(|((v, m), c)| (m * v - c).powi(2))
        .sum();
    Ok(0.5 * fit + sigma * nuclear_norm(y)?)
}

/// Matrix completion with a nuclear-norm prior and box constraint `[0,1]`.
pub fn build_inpainting(
    image: &Point,
    corruption_fraction: f64,
    sigma: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    let (rows, cols) = image.shape().ok_or(Error::MissingShape)?;
    if image.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(invalid("image entries must lie in [0, 1]"));
    }
    if !(0.0..1.0).contains(&corruption_fraction) {
        return Err(invalid(format!(
            "corruption fraction must lie in [0, 1), got {corruption_fraction}"
        )));
    }
    if !(sigma >= 0.0) {
        return Err(invalid("sigma must be nonnegative"));
    }
    let dim = rows * cols;
    let mut rng = SeededRng::new(seed);
    let dropped = (corruption_fraction * dim as f64).round() as usize;
    let mut mask = vec![1.0; dim];
    for i in rng.sample_indices(dim, dropped) {
        mask[i] = 0.0;
    }
    let corrupt = Point::matrix(
        image
            .as_slice()
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect(),
        rows,
        cols,
    )?;
    let smooth = AffineMap::new(
        dim,
        LinearPart::Diagonal(mask.clone()),
        Some(corrupt.scaled(-1.0)),
    )?;
    let bundle = OperatorBundle::new(
        SingleValuedOp::identity(dim),
        SingleValuedOp::affine(smooth),
        ResolventOp::NuclearNorm { sigma, rows, cols },
        Some(ResolventOp::MatrixBoxNormalCone {
            lo: 0.0,
            hi: 1.0,
            rows,
            cols,
        }),
    )?;
    let (m, c) = (mask.clone(), corrupt.clone());
    let monitor = Monitor::new("lower_obj", MonitorTarget::Anchor, move |y| {
        y.clone()
            .with_shape(Some((rows, cols)))
            .and_then(|y| inpainting_objective(&y, &m, &c, sigma))
            .unwrap_or(f64::NAN)
    });
    let defaults = DanteConfig {
        alpha: 1.0,
        mu: 0.0,
        n_outer: 200,
        schedules: power_schedules(0.55, 2.0, 2.0),
        encoding: EncodingKind::Tos,
        theta: 0.75,
        tau: TauPolicy::default(),
        hard_cap: None,
        gamma: None,
        eta: 0.5,
        w0: corrupt.clone(),
    };
    Ok(ProblemInstance {
        name: "inpainting",
        bundle,
        sol: None,
        reference: None,
        monitors: vec![monitor],
        defaults,
        inpainting: Some(InpaintingData {
            original: image.clone(),
            mask,
            corrupt,
            sigma,
        }),
    })
}

/// The desk-scale inpainting instance: 64x64 rank-5 image, 20% corruption, `σ = 50`.
pub fn build_inpainting_default(seed: u64) -> Result<ProblemInstance> {
    let image = synthetic_image(64, 64, 5, seed)?;
    build_inpainting(&image, 0.2, 50.0, seed)
}
