//! The outer anchor loop and its parameter schedules.
//!
//! Each outer step `n` builds the encoding of the auxiliary problem anchored
//! at `w_n` with Tikhonov weight `beta_n`, runs the inner loop to tolerance
//! `eps_n`, transports the result to the next anchor `w_{n+1}` and updates
//!
//! ```text
//! lambda_{n+1} = lambda_n (1 + 2 mu beta_n / alpha)
//! S_{n+1}      = S_n + lambda_n beta_n
//! wbar_{n+1}   = (S_n wbar_n + lambda_n beta_n w_{n+1}) / S_{n+1}
//! ```

use crate::encodings::{build_encoding, EncodingKind};
use crate::error::{invalid, Error, Result};
use crate::inner_loop::{default_hard_cap, km_solve, max_tau, tracking_error_bound, KmParams};
use crate::operators::OperatorBundle;
use crate::vectorspace::Point;

/// Points up to this dimension are stored in full in the trace.
pub const FULL_POINT_MAX_DIM: usize = 64;

/// `(n + 1)^{-b}`.
pub fn beta_monotone(n: usize, b: f64) -> f64 {
    ((n + 1) as f64).powf(-b)
}

/// `alpha / (2 mu n + xi)`.
pub fn beta_strong(n: usize, alpha: f64, mu: f64, xi: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(invalid(format!(
            "strongly monotone schedule needs mu > 0, got {mu}"
        )));
    }
    if !(xi > 0.0) {
        return Err(invalid(format!("xi must be positive, got {xi}")));
    }
    Ok(alpha / (2.0 * mu * n as f64 + xi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSchedule {
    Monotone { b: f64 },
    Strong { alpha: f64, mu: f64, xi: f64 },
}

impl BetaSchedule {
    pub fn beta(&self, n: usize) -> f64 {
        match *self {
            BetaSchedule::Monotone { b } => beta_monotone(n, b),
            BetaSchedule::Strong { alpha, mu, xi } => alpha / (2.0 * mu * n as f64 + xi),
        }
    }

    fn check(&self) -> Result<()> {
        match *self {
            BetaSchedule::Monotone { b } if !(b > 0.0 && b < 1.0) => {
                Err(invalid(format!("b must lie in (0, 1), got {b}")))
            }
            BetaSchedule::Strong { alpha, mu, xi } => beta_strong(0, alpha, mu, xi).map(|_| ()),
            _ => Ok(()),
        }
    }
}

/// `eps_n = scale * (n + 1)^{-exponent}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub scale: f64,
    pub exponent: f64,
}

impl EpsilonSchedule {
    pub fn epsilon(&self, n: usize) -> f64 {
        self.scale * ((n + 1) as f64).powf(-self.exponent)
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            scale: 1e-3,
            exponent: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedules {
    pub beta: BetaSchedule,
    pub epsilon: EpsilonSchedule,
}

/// How the momentum `tau` is chosen for each inner loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauPolicy {
    /// `safety * max_tau(theta, q_n)`.
    Auto { safety: f64 },
    Fixed(f64),
}

impl Default for TauPolicy {
    fn default() -> Self {
        TauPolicy::Auto { safety: 0.99 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DanteConfig {
    pub alpha: f64,
    pub mu: f64,
    pub n_outer: usize,
    pub schedules: Schedules,
    pub encoding: EncodingKind,
    pub theta: f64,
    pub tau: TauPolicy,
    /// Overrides the per-loop default cap.
    pub hard_cap: Option<usize>,
    /// Overrides the encoding's default step.
    pub gamma: Option<f64>,
    /// TOS parameter.
    pub eta: f64,
    pub w0: Point,
}

impl DanteConfig {
    pub fn check(&self, bundle: &OperatorBundle) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.mu >= 0.0) {
            return Err(invalid(format!("mu must be nonnegative, got {}", self.mu)));
        }
        if self.n_outer == 0 {
            return Err(invalid("n_outer must be at least 1"));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(invalid(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(invalid(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        match self.tau {
            TauPolicy::Auto { safety } if !(0.0..1.0).contains(&safety) => {
                return Err(invalid(format!("tau safety must lie in [0, 1), got {safety}")))
            }
            TauPolicy::Fixed(t) if !(0.0..1.0).contains(&t) => {
                return Err(invalid(format!("tau must lie in [0, 1), got {t}")))
            }
            _ => {}
        }
        if !(self.schedules.epsilon.scale > 0.0) {
            return Err(invalid("epsilon scale must be positive"));
        }
        self.schedules.beta.check()?;
        if self.w0.len() != bundle.dim() {
            return Err(Error::DimensionMismatch {
                expected: bundle.dim(),
                found: self.w0.len(),
            });
        }
        if self.encoding == EncodingKind::Tos && bundle.lower_resolvent_b.is_none() {
            return Err(invalid("TOS needs a bundle with a second resolvent operator"));
        }
        Ok(())
    }
}

/// A point, or only its norm for large dimensions.
#[derive(Debug, Clone, PartialEq)]
pub enum PointSummary {
    Full(Point),
    Norm(f64),
}

impl PointSummary {
    fn of(p: &Point) -> Self {
        if p.len() <= FULL_POINT_MAX_DIM {
            PointSummary::Full(p.clone())
        } else {
            PointSummary::Norm(p.norm())
        }
    }

    pub fn point(&self) -> Option<&Point> {
        match self {
            PointSummary::Full(p) => Some(p),
            PointSummary::Norm(_) => None,
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            PointSummary::Full(p) => p.norm(),
            PointSummary::Norm(n) => *n,
        }
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub n: usize,
    pub beta: f64,
    pub epsilon: f64,
    /// Tracking error bound; `None` in nonexpansive mode.
    pub e: Option<f64>,
    pub lambda: f64,
    pub lambda_next: f64,
    pub s_next: f64,
    pub inner_iterations: usize,
    pub q: f64,
    pub tau: f64,
    pub gamma: Option<f64>,
    pub stopped_by_criterion: bool,
    pub residual: f64,
    pub w_next: PointSummary,
    pub wbar_next: PointSummary,
    pub diagnostics: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub w0: Point,
    pub theta: f64,
    pub records: Vec<OuterRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `w_n`, when stored in full.
    pub fn anchor(&self, n: usize) -> Option<&Point> {
        if n == 0 {
            Some(&self.w0)
        } else {
            self.records.get(n - 1).and_then(|r| r.w_next.point())
        }
    }

    pub fn total_inner_iterations(&self) -> usize {
        self.records.iter().map(|r| r.inner_iterations).sum()
    }

    /// `sup_n q_n`.
    pub fn q_bar(&self) -> f64 {
        self.records.iter().map(|r| r.q).fold(0.0, f64::max)
    }

    /// `sup_n tau_n`.
    pub fn tau_bar(&self) -> f64 {
        self.records.iter().map(|r| r.tau).fold(0.0, f64::max)
    }

    /// `e_n` for all `n`, if every loop ran in contraction mode.
    pub fn errors(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.e).collect()
    }

    pub fn diagnostic(&self, n: usize, name: &str) -> Option<f64> {
        self.records
            .get(n)?
            .diagnostics
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| *v)
    }
}

/// What an observer sees after outer step `n`.
pub struct StepView<'a> {
    pub n: usize,
    pub w_next: &'a Point,
    pub wbar_next: &'a Point,
}

/// `(S_n wbar_n + lambda_n beta_n w_{n+1}) / S_{n+1}`.
pub fn averaged_update(
    wbar: &Point,
    s_n: f64,
    s_next: f64,
    lambda: f64,
    beta: f64,
    w_next: &Point,
) -> Result<Point> {
    if !(s_next > 0.0) {
        return Err(invalid(format!("S_(n+1) must be positive, got {s_next}")));
    }
    Ok(wbar.lincomb(s_n / s_next, lambda * beta / s_next, w_next))
}

pub fn dante_run(bundle: &OperatorBundle, config: &DanteConfig) -> Result<(Point, Trace)> {
    dante_run_with(bundle, config, |_| Vec::new())
}

/// [`dante_run`] with an observer whose named values are stored per step.
pub fn dante_run_with<F>(
    bundle: &OperatorBundle,
    config: &DanteConfig,
    mut observe: F,
) -> Result<(Point, Trace)>
where
    F: FnMut(&StepView<'_>) -> Vec<(String, f64)>,
{
    config.check(bundle)?;
    let alpha = config.alpha;
    let diameter = bundle.constants.d_m;
    let mut w = config.w0.clone();
    let mut wbar = config.w0.clone();
    let mut lambda = 1.0;
    let mut s = 0.0;
    let mut records = Vec::with_capacity(config.n_outer);

    for n in 0..config.n_outer {
        let beta = config.schedules.beta.beta(n);
        let epsilon = config.schedules.epsilon.epsilon(n);
        let enc = build_encoding(
            config.encoding,
            bundle,
            &w,
            alpha,
            beta,
            config.gamma,
            config.eta,
        )?;
        let q = enc.q();
        let contraction = enc.is_contraction() && q < 1.0;
        let tau = match config.tau {
            TauPolicy::Auto { safety } => (safety * max_tau(config.theta, q)).max(0.0),
            TauPolicy::Fixed(t) => t,
        };
        let hard_cap = config
            .hard_cap
            .unwrap_or_else(|| default_hard_cap(tau, config.theta, q, epsilon, diameter));
        let params = KmParams {
            tau,
            theta: config.theta,
            epsilon,
            hard_cap,
        };
        let inner = km_solve(&w, &enc, &params)?;
        if !inner.stopped_by_criterion && contraction {
            return Err(Error::InnerCapExceeded {
                outer: n,
                cap: hard_cap,
                residual: inner.residual,
            });
        }
        let e = if contraction {
            Some(tracking_error_bound(epsilon, config.theta, q)?)
        } else {
            None
        };
        let w_next = enc.transport(&inner.v_final)?;
        let lambda_next = lambda * (1.0 + 2.0 * config.mu * beta / alpha);
        let s_next = s + lambda * beta;
        let wbar_next = averaged_update(&wbar, s, s_next, lambda, beta, &w_next)?;
        if !wbar_next.is_finite() {
            return Err(Error::NonFinite("outer iterate"));
        }
        let diagnostics = observe(&StepView {
            n,
            w_next: &w_next,
            wbar_next: &wbar_next,
        });
        records.push(OuterRecord {
            n,
            beta,
            epsilon,
            e,
            lambda,
            lambda_next,
            s_next,
            inner_iterations: inner.iterations,
            q,
            tau,
            gamma: enc.step(),
            stopped_by_criterion: inner.stopped_by_criterion,
            residual: inner.residual,
            w_next: PointSummary::of(&w_next),
            wbar_next: PointSummary::of(&wbar_next),
            diagnostics,
        });
        w = w_next;
        wbar = wbar_next;
        lambda = lambda_next;
        s = s_next;
    }
    Ok((
        wbar,
        Trace {
            w0: config.w0.clone(),
            theta: config.theta,
            records,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{AffineMap, LinearPart, ResolventOp, SingleValuedOp};
    use crate::vectorspace::{sample_gaussian, SeededRng};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    #[test]
    fn beta_examples() {
        assert_eq!(beta_monotone(0, 0.55), 1.0);
        assert_relative_eq!(beta_monotone(999, 0.55), 0.02239, epsilon = 1e-5);
        assert!((0..100).all(|n| beta_monotone(n + 1, 0.55) < beta_monotone(n, 0.55)));
        assert_relative_eq!(beta_strong(0, 2.0, 0.5, 4.0).unwrap(), 0.5);
        assert!(beta_strong(3, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn averaging_examples() {
        let w1 = Point::new(vec![3.0, -1.0]);
        assert_eq!(averaged_update(&Point::zeros(2), 0.0, 0.5, 1.0, 0.5, &w1).unwrap(), w1);
        // uniform weights give the arithmetic mean
        let ws: Vec<Point> = (0..5).map(|i| Point::new(vec![i as f64, 1.0])).collect();
        let (mut wbar, mut s) = (Point::zeros(2), 0.0);
        for w in &ws {
            wbar = averaged_update(&wbar, s, s + 0.3, 1.0, 0.3, w).unwrap();
            s += 0.3;
        }
        assert_relative_eq!(wbar[0], 2.0, epsilon = 1e-14);
        assert!(averaged_update(&wbar, 0.0, 0.0, 1.0, 0.0, &w1).is_err());
    }

    proptest! {
        #[test]
        fn recursive_average_matches_direct_sum(
            weights in proptest::collection::vec(0.01f64..5.0, 1..100),
            seed in 0u64..1000,
        ) {
            let mut rng = SeededRng::new(seed);
            let points: Vec<Point> = weights.iter().map(|_| sample_gaussian(&mut rng, 3, 2.0)).collect();
            let (mut wbar, mut s) = (Point::zeros(3), 0.0);
            for (w, p) in weights.iter().zip(&points) {
                wbar = averaged_update(&wbar, s, s + w, *w, 1.0, p).unwrap();
                s += w;
            }
            let mut direct = Point::zeros(3);
            for (w, p) in weights.iter().zip(&points) {
                direct.add_scaled(*w / s, p);
            }
            prop_assert!(wbar.dist(&direct) <= 1e-12 * (1.0 + direct.norm()));
        }
    }

    /// `M = F + A` with affine monotone `F`, `A`; `G = Id`.
    struct Affine {
        bundle: OperatorBundle,
        lf: DMatrix<f64>,
        la: DMatrix<f64>,
        c: DVector<f64>,
    }

    fn affine_bundle(seed: u64, n: usize) -> Affine {
        let mut rng = SeededRng::new(seed);
        let m = rng.gaussian_matrix(n, n);
        let lf = (&m - m.transpose()) * 0.5;
        let k = rng.gaussian_matrix(n, n) * 0.5;
        let la = &k * k.transpose();
        let cf = sample_gaussian(&mut rng, n, 1.0);
        let f = SingleValuedOp::dense(lf.clone(), Some(cf.clone())).unwrap();
        let a = ResolventOp::Affine(AffineMap::new(n, LinearPart::Dense(la.clone()), None).unwrap());
        Affine {
            bundle: OperatorBundle::new(SingleValuedOp::identity(n), f, a, None).unwrap(),
            lf,
            la,
            c: DVector::from_column_slice(cf.as_slice()),
        }
    }

    fn config(w0: Point, encoding: EncodingKind, n_outer: usize) -> DanteConfig {
        DanteConfig {
            alpha: 0.5,
            mu: 0.0,
            n_outer,
            schedules: Schedules {
                beta: BetaSchedule::Monotone { b: 0.55 },
                epsilon: EpsilonSchedule::default(),
            },
            encoding,
            theta: 0.7,
            tau: TauPolicy::default(),
            hard_cap: None,
            gamma: None,
            eta: 0.5,
            w0,
        }
    }

    #[test]
    fn single_step_average_is_the_anchor() {
        let inst = affine_bundle(1, 2);
        let (wbar, trace) =
            dante_run(&inst.bundle, &config(Point::zeros(2), EncodingKind::Fb, 1)).unwrap();
        assert_eq!(trace.records[0].w_next.point().unwrap(), &wbar);
    }

    #[test]
    fn lambda_is_one_without_strong_monotonicity() {
        let inst = affine_bundle(2, 2);
        let (_, trace) =
            dante_run(&inst.bundle, &config(Point::zeros(2), EncodingKind::Dr, 20)).unwrap();
        assert!(trace.records.iter().all(|r| r.lambda == 1.0 && r.lambda_next == 1.0));
        let mut s = 0.0;
        for r in &trace.records {
            s += r.beta;
            assert_eq!(r.s_next, s);
        }
    }

    #[test]
    fn strong_schedule_closed_forms() {
        let inst = affine_bundle(3, 2);
        let (alpha, mu, xi) = (0.5, 1.0, 3.0);
        let mut cfg = config(Point::zeros(2), EncodingKind::Fb, 100);
        cfg.mu = mu;
        cfg.schedules.beta = BetaSchedule::Strong { alpha, mu, xi };
        let (_, trace) = dante_run(&inst.bundle, &cfg).unwrap();
        let mut product = 1.0;
        for r in &trace.records {
            let expected = (2.0 * mu * r.n as f64 + xi) / xi;
            assert_relative_eq!(r.lambda, expected, max_relative = 1e-12);
            assert_relative_eq!(r.lambda, product, max_relative = 1e-12);
            product *= 1.0 + 2.0 * mu * r.beta / alpha;
            assert_relative_eq!(r.s_next, (r.n + 1) as f64 * alpha / xi, max_relative = 1e-12);
        }
    }

    #[test]
    fn anchors_track_the_auxiliary_zero() {
        let inst = affine_bundle(4, 3);
        for kind in [EncodingKind::Fb, EncodingKind::Bf, EncodingKind::Dr] {
            let cfg = config(Point::new(vec![1.0, -2.0, 0.5]), kind, 30);
            let (_, trace) = dante_run(&inst.bundle, &cfg).unwrap();
            for r in &trace.records {
                let w = trace.anchor(r.n).unwrap();
                // (L_F + L_A + (beta + alpha) I) u = alpha w - c
                let system = &inst.lf + &inst.la + DMatrix::identity(3, 3) * (r.beta + cfg.alpha);
                let rhs = DVector::from_column_slice(w.as_slice()) * cfg.alpha - &inst.c;
                let u = system.lu().solve(&rhs).unwrap();
                let u = Point::new(u.iter().copied().collect());
                let drift = r.w_next.point().unwrap().dist(&u);
                assert!(drift <= r.e.unwrap(), "{kind} n={} drift {drift} > e {}", r.n, r.e.unwrap());
            }
        }
    }

    #[test]
    fn observer_values_are_recorded() {
        let inst = affine_bundle(5, 2);
        let (_, trace) = dante_run_with(&inst.bundle, &config(Point::zeros(2), EncodingKind::Fb, 5), |v| {
            vec![("norm".to_string(), v.wbar_next.norm())]
        })
        .unwrap();
        for (n, r) in trace.records.iter().enumerate() {
            assert_eq!(trace.diagnostic(n, "norm"), Some(r.wbar_next.norm()));
        }
    }

    #[test]
    fn config_errors() {
        let inst = affine_bundle(6, 2);
        let mut cfg = config(Point::zeros(2), EncodingKind::Fb, 0);
        assert!(dante_run(&inst.bundle, &cfg).is_err());
        cfg.n_outer = 3;
        cfg.encoding = EncodingKind::Tos;
        assert!(dante_run(&inst.bundle, &cfg).is_err());
        cfg.encoding = EncodingKind::Fb;
        cfg.w0 = Point::zeros(3);
        assert!(dante_run(&inst.bundle, &cfg).is_err());
    }

    #[test]
    fn contraction_cap_breach_aborts() {
        let inst = affine_bundle(7, 2);
        let mut cfg = config(Point::new(vec![5.0, 5.0]), EncodingKind::Fb, 3);
        cfg.hard_cap = Some(1);
        cfg.schedules.epsilon.scale = 1e-12;
        assert!(matches!(
            dante_run(&inst.bundle, &cfg),
            Err(Error::InnerCapExceeded { outer: 0, cap: 1, .. })
        ));
    }

    #[test]
    fn default_epsilon_is_faster_than_beta() {
        let eps = EpsilonSchedule::default();
        let ratios: Vec<f64> = (0..200).map(|n| eps.epsilon(n) / beta_monotone(n, 0.55)).collect();
        assert!(ratios.windows(2).all(|w| w[1] < w[0]));
        assert!(ratios[199] < 1e-6);
        let partial: f64 = (0..100_000).map(|n| beta_monotone(n, 0.55)).sum();
        assert!(partial > 300.0);
    }
}
