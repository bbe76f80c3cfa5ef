//! Acceptance checks shared by the `acceptance` test target and `dante verify`.

use std::fmt;
use std::time::Duration;

use nalgebra::DMatrix;

use crate::encodings::{build_encoding, EncodingKind};
use crate::error::Result;
use crate::gaps::{
    bound_feas, bound_opt, bound_terms, energy_check, least_squares, BoundConstants, BoundTerm,
};
use crate::inner_loop::{
    cap_constant, combined_complexity_bound, iteration_cap, km_solve, max_tau, q_rate,
    tracking_error_bound, validate_km_params, KmParams,
};
use crate::operators::{AffineMap, LinearPart, OperatorBundle, ResolventOp, SingleValuedOp};
use crate::outer_loop::{averaged_update, dante_run, BetaSchedule, DanteConfig, EpsilonSchedule};
use crate::problems::{
    build_equilibrium, build_inpainting_default, build_lnls, run_instance, ProblemInstance,
    RunOutput,
};
use crate::vectorspace::{sample_gaussian, Point, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }

    fn from_result(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

pub const EQUILIBRIUM_BUDGET: Duration = Duration::from_secs(60);
pub const LARGE_RUN_BUDGET: Duration = Duration::from_secs(300);

/// The equilibrium run used by several checks.
pub fn equilibrium_run() -> Result<(ProblemInstance, RunOutput)> {
    let inst = build_equilibrium()?;
    let out = run_instance(&inst, &inst.defaults)?;
    Ok((inst, out))
}

pub fn check_equilibrium(inst: &ProblemInstance, out: &RunOutput) -> Check {
    Check::from_result("equilibrium_reproduction", equilibrium_inner(inst, out))
}

fn equilibrium_inner(inst: &ProblemInstance, out: &RunOutput) -> Result<(bool, String)> {
    let n = out.trace.len();
    let reference = inst.reference.as_ref().expect("equilibrium has a reference");
    let err = out.wbar.dist(reference);
    // Record 9 holds the average after ten outer steps.
    let ratio = |name: &str| -> f64 {
        let at = |k: usize| out.trace.diagnostic(k, name).unwrap_or(f64::NAN);
        at(n - 1).abs() / at(9).abs()
    };
    let (ro, rf) = (ratio("gap_opt"), ratio("gap_feas"));
    let passed = err <= 0.5 && ro <= 0.1 && rf <= 0.1 && out.elapsed <= EQUILIBRIUM_BUDGET;
    Ok((
        passed,
        format!(
            "N={n} |wbar-(11,10)|={err:.3e} gap_opt ratio={ro:.4} gap_feas ratio={rf:.4} time={:.2?}",
            out.elapsed
        ),
    ))
}

/// `T z = p + M (z - p)` with `||M|| = q`.
struct AffineContraction {
    p: Point,
    m: DMatrix<f64>,
}

impl crate::inner_loop::FixedPointMap for AffineContraction {
    fn apply_map(&self, z: &Point) -> Result<Point> {
        let d = z - &self.p;
        let md = &self.m * nalgebra::DVector::from_column_slice(d.as_slice());
        Ok(&self.p + &Point::new(md.as_slice().to_vec()))
    }
}

pub fn check_inner_loop_guarantee(cases: usize, seed: u64) -> Check {
    Check::from_result("inner_loop_guarantee", inner_loop_inner(cases, seed))
}

fn inner_loop_inner(cases: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = SeededRng::new(seed);
    let half = 10.0;
    let diameter = 2.0 * half * 2f64.sqrt();
    let (mut ok_err, mut ok_cap) = (0, 0);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let q = rng.uniform(0.05, 0.9);
        let raw = rng.gaussian_matrix(2, 2);
        let norm = raw.singular_values().max();
        let map = AffineContraction {
            p: Point::new(vec![rng.uniform(-half, half), rng.uniform(-half, half)]),
            m: raw * (q / norm),
        };
        let v0 = Point::new(vec![rng.uniform(-half, half), rng.uniform(-half, half)]);
        let theta = rng.uniform(0.2, 0.95);
        let tau = 0.99 * max_tau(theta, q);
        let epsilon = 10f64.powf(rng.uniform(-8.0, -2.0));
        let params = KmParams {
            tau,
            theta,
            epsilon,
            hard_cap: 1_000_000,
        };
        let res = km_solve(&v0, &map, &params)?;
        let bound = tracking_error_bound(epsilon, theta, q)?;
        let err = res.v_final.dist(&map.p);
        worst = worst.max(err / bound);
        if res.stopped_by_criterion && err <= bound {
            ok_err += 1;
        }
        let big_q = q_rate(theta, q);
        let cap = iteration_cap(cap_constant(tau, theta, big_q, diameter), epsilon, big_q)?;
        if res.iterations <= cap {
            ok_cap += 1;
        }
    }
    Ok((
        ok_err == cases && ok_cap == cases,
        format!("error bound {ok_err}/{cases}, iteration cap {ok_cap}/{cases}, worst error/bound={worst:.3}"),
    ))
}

fn random_strongly_monotone_bundle(rng: &mut SeededRng, n: usize, box_part: bool) -> Result<OperatorBundle> {
    let skew = |rng: &mut SeededRng| {
        let m = rng.gaussian_matrix(n, n);
        (&m - m.transpose()) * 0.5
    };
    let psd = |rng: &mut SeededRng, s: f64| {
        let m = rng.gaussian_matrix(n, n) * s;
        &m * m.transpose()
    };
    let lf = skew(rng) + psd(rng, 0.4);
    let f = SingleValuedOp::dense(lf, Some(sample_gaussian(rng, n, 1.0)))?;
    let g = SingleValuedOp::dense(psd(rng, 0.3), None)?;
    let a = if box_part {
        let lo = sample_gaussian(rng, n, 1.0).map(|x| x - 2.0);
        let hi = lo.map(|x| x + 4.0);
        ResolventOp::box_normal_cone(lo, hi)?
    } else {
        let la = psd(rng, 0.5) + skew(rng) * 0.5;
        ResolventOp::Affine(AffineMap::new(
            n,
            LinearPart::Dense(la),
            Some(sample_gaussian(rng, n, 1.0)),
        )?)
    };
    OperatorBundle::new(g, f, a, None)
}

pub fn check_contraction_factors(instances: usize, pairs: usize, seed: u64) -> Check {
    Check::from_result(
        "contraction_factors",
        contraction_inner(instances, pairs, seed),
    )
}

fn contraction_inner(instances: usize, pairs: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = SeededRng::new(seed);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut failures = 0;
    for i in 0..instances {
        let n = 2 + i % 4;
        let bundle = random_strongly_monotone_bundle(&mut rng, n, i % 2 == 0)?;
        let w = sample_gaussian(&mut rng, n, 2.0);
        let alpha = rng.uniform(0.1, 3.0);
        let beta = rng.uniform(0.0, 1.0);
        for kind in [EncodingKind::Fb, EncodingKind::Bf, EncodingKind::Dr] {
            let enc = build_encoding(kind, &bundle, &w, alpha, beta, None, 0.5)?;
            let mut ratio = 0.0f64;
            for _ in 0..pairs {
                let z1 = sample_gaussian(&mut rng, n, 3.0);
                let scale = 10f64.powf(rng.uniform(-3.0, 1.0));
                let z2 = &z1 + &sample_gaussian(&mut rng, n, scale);
                let d = z1.dist(&z2);
                if d == 0.0 {
                    continue;
                }
                ratio = ratio.max(enc.apply(&z1)?.dist(&enc.apply(&z2)?) / d);
            }
            let excess = ratio - enc.q();
            worst_excess = worst_excess.max(excess);
            if excess > 1e-12 {
                failures += 1;
            }
        }
    }
    Ok((
        failures == 0,
        format!(
            "{instances} instances x FB/BF/DR x {pairs} pairs, violations={failures}, max(ratio - q)={worst_excess:.3e}"
        ),
    ))
}

/// Pairs `(x, v)` with `v in M x`: the reference with `v = 0` and interior points with `v = F(x)`.
pub fn energy_pairs(inst: &ProblemInstance, interior: usize, seed: u64) -> Vec<(Point, Point)> {
    let mut pairs = Vec::with_capacity(interior + 1);
    if let Some(r) = &inst.reference {
        pairs.push((r.clone(), Point::zeros(r.len())));
    }
    let (lo, hi) = inst
        .bundle
        .domain()
        .box_bounds()
        .expect("energy pairs need a box domain");
    let mut rng = SeededRng::new(seed);
    for _ in 0..interior {
        let x = rng.uniform_point(&lo, &hi);
        let v = inst.bundle.lower_smooth.evaluate(&x);
        pairs.push((x, v));
    }
    pairs
}

/// Energy inequality at every step and pair, plus gaps below the bounds for every `N`.
/// `c1_override` replaces the constant for negative controls.
pub fn check_energy_inequality(
    inst: &ProblemInstance,
    out: &RunOutput,
    c1_override: Option<f64>,
) -> Check {
    Check::from_result("energy_inequality", energy_inner(inst, out, c1_override))
}

fn energy_inner(
    inst: &ProblemInstance,
    out: &RunOutput,
    c1_override: Option<f64>,
) -> Result<(bool, String)> {
    let cfg = &inst.defaults;
    let mut constants = BoundConstants::from_trace(&out.trace, &inst.bundle, cfg.alpha, cfg.mu)?;
    if let Some(c1) = c1_override {
        constants = constants.with_c1(c1);
    }
    let mut worst = f64::NEG_INFINITY;
    for (x, v) in energy_pairs(inst, 10, 17) {
        let diffs = energy_check(&out.trace, &inst.bundle.upper, &x, &v, &constants, cfg.alpha)?
            .expect("contraction-mode run");
        worst = diffs.iter().copied().fold(worst, f64::max);
    }
    let terms = bound_terms(&out.trace).expect("contraction-mode run");
    let mut bound_violations = 0;
    for k in 0..terms.len() {
        let go = out.trace.diagnostic(k, "gap_opt").unwrap_or(f64::NAN);
        let gf = out.trace.diagnostic(k, "gap_feas").unwrap_or(f64::NAN);
        let ok = go <= bound_opt(&terms[..=k], &constants)
            && gf <= bound_feas(&terms[..=k], &constants);
        if !ok {
            bound_violations += 1;
        }
    }
    Ok((
        worst <= 1e-8 && bound_violations == 0,
        format!(
            "C1={:.4e} max(LHS-RHS)={worst:.3e} over {} steps x 11 pairs, bound violations={bound_violations}",
            constants.c1,
            out.trace.len()
        ),
    ))
}

pub fn check_closed_forms(seed: u64) -> Check {
    Check::from_result("closed_forms", closed_forms_inner(seed))
}

fn closed_forms_inner(seed: u64) -> Result<(bool, String)> {
    let inst = build_equilibrium()?;
    let (alpha, mu, xi) = (0.1, 1.0, 0.7);
    let mut cfg: DanteConfig = inst.defaults.clone();
    cfg.mu = mu;
    cfg.n_outer = 100;
    cfg.schedules.beta = BetaSchedule::Strong { alpha, mu, xi };
    cfg.alpha = alpha;
    let (wbar, trace) = dante_run(&inst.bundle, &cfg)?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    let mut worst_lambda = 0.0f64;
    let mut worst_sum = 0.0f64;
    for r in &trace.records {
        let n = r.n as f64;
        worst_lambda = worst_lambda.max(rel(r.lambda, (2.0 * mu * n + xi) / xi));
        worst_sum = worst_sum.max(rel(r.s_next, (n + 1.0) * alpha / xi));
    }
    // Direct weighted sum of the run's anchors.
    let mut num = Point::zeros(2);
    let mut den = 0.0;
    for r in &trace.records {
        let w = r.w_next.point().expect("two-dimensional anchors are stored");
        num.add_scaled(r.lambda * r.beta, w);
        den += r.lambda * r.beta;
    }
    let run_avg = wbar.dist(&num.scaled(1.0 / den)) / wbar.norm();

    let mut rng = SeededRng::new(seed);
    let mut wbar = Point::zeros(3);
    let mut s = 0.0;
    let mut num = Point::zeros(3);
    let mut worst_avg = 0.0f64;
    for _ in 0..100 {
        let weight_l = rng.uniform(0.5, 3.0);
        let weight_b = rng.uniform(0.01, 1.0);
        let w = sample_gaussian(&mut rng, 3, 5.0);
        let s_next = s + weight_l * weight_b;
        wbar = averaged_update(&wbar, s, s_next, weight_l, weight_b, &w)?;
        num.add_scaled(weight_l * weight_b, &w);
        s = s_next;
        let direct = num.scaled(1.0 / s);
        worst_avg = worst_avg.max(wbar.dist(&direct) / direct.norm().max(1.0));
    }
    let passed = worst_lambda <= 1e-12 && worst_sum <= 1e-12 && worst_avg <= 1e-12 && run_avg <= 1e-12;
    Ok((
        passed,
        format!(
            "lambda rel err={worst_lambda:.2e} sum rel err={worst_sum:.2e} averaging err={worst_avg:.2e} run averaging err={run_avg:.2e}"
        ),
    ))
}

/// Independent bisection for the admissible-momentum boundary.
fn bisect_tau(theta: f64, q: f64) -> f64 {
    // General constant-parameter form: Q t(1+t) + (1/theta - 1) t(1-t) - Q (1/theta - 1)(1-t) < 0.
    let big_q = 1.0 - theta * (1.0 - q * q);
    let r = 1.0 / theta - 1.0;
    let admissible = |t: f64| big_q * t * (1.0 + t) + r * t * (1.0 - t) - big_q * r * (1.0 - t) < 0.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if admissible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn check_parameter_quadratic() -> Check {
    let tau = max_tau(0.7, 0.5);
    let oracle = bisect_tau(0.7, 0.5);
    let below = validate_km_params(tau - 1e-3, 0.7, 0.5);
    let above = validate_km_params(tau + 1e-3, 0.7, 0.5);
    Check::new(
        "parameter_quadratic",
        (tau - 0.18248).abs() <= 1e-4 && (tau - oracle).abs() <= 1e-4 && below && !above,
        format!("max_tau(0.7,0.5)={tau:.6} bisection={oracle:.6} valid below={below} valid above={above}"),
    )
}

pub fn check_rate_envelope() -> Result<Check> {
    let inst = build_equilibrium()?;
    let c = BoundConstants::new(crate::gaps::BoundInputs {
        alpha: inst.defaults.alpha,
        mu: 0.0,
        beta_max: 1.0,
        e_max: 0.0,
        e0: 0.0,
        d_m: inst.bundle.constants.d_m,
        c_m: inst.bundle.constants.c_m,
        c_g: inst.bundle.constants.c_g,
        beta0: 1.0,
    });
    let b = 0.55;
    let terms: Vec<BoundTerm> = (0..1000)
        .map(|n| BoundTerm {
            lambda: 1.0,
            beta: BetaSchedule::Monotone { b }.beta(n),
            e: 0.0,
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = (100..=1000)
        .map(|n| ((n as f64).ln(), bound_opt(&terms[..n], &c).ln()))
        .unzip();
    let (slope, _) = least_squares(&xs, &ys);
    Ok(Check::new(
        "rate_envelope",
        (slope + (1.0 - b)).abs() <= 0.05,
        format!("fitted slope={slope:.4} target={:.2}", -(1.0 - b)),
    ))
}

pub fn check_lnls(seed: u64) -> Check {
    Check::from_result("lnls", lnls_inner(seed))
}

fn lnls_inner(seed: u64) -> Result<(bool, String)> {
    let inst = build_lnls(70, 100, 50, seed)?;
    let mut cfg = inst.defaults.clone();
    cfg.alpha = 1.0;
    cfg.schedules.epsilon = EpsilonSchedule {
        scale: cfg.alpha * 1e-3,
        exponent: 1.0,
    };
    let out = run_instance(&inst, &cfg)?;
    let init = inst.initial_monitors(&cfg.w0);
    let first = |name: &str| init.iter().find(|(k, _)| k == name).map(|(_, v)| *v).unwrap_or(f64::NAN);
    let last = out.trace.len() - 1;
    let err0 = first("err_to_ref");
    let obj0 = first("lower_obj");
    let err = out.trace.diagnostic(last, "err_to_ref").unwrap_or(f64::NAN);
    let obj = out.trace.diagnostic(last, "lower_obj").unwrap_or(f64::NAN);
    let passed = err <= 0.1 * err0 && obj <= 0.01 * obj0 && out.elapsed <= LARGE_RUN_BUDGET;
    Ok((
        passed,
        format!(
            "N={} err {err0:.3e} -> {err:.3e} ({:.3}), objective gap {obj0:.3e} -> {obj:.3e} ({:.2e}), time={:.2?}",
            out.trace.len(),
            err / err0,
            obj / obj0,
            out.elapsed
        ),
    ))
}

pub fn check_inpainting(seed: u64) -> Check {
    Check::from_result("inpainting", inpainting_inner(seed))
}

fn inpainting_inner(seed: u64) -> Result<(bool, String)> {
    let inst = build_inpainting_default(seed)?;
    let cfg = inst.defaults.clone();
    let out = run_instance(&inst, &cfg)?;
    let obj0 = inst.initial_monitors(&cfg.w0)[0].1;
    let objs: Vec<f64> = (0..out.trace.len())
        .map(|k| out.trace.diagnostic(k, "lower_obj").unwrap_or(f64::NAN))
        .collect();
    let last = *objs.last().expect("nonempty run");
    let window = 50;
    let increases = (window..objs.len())
        .filter(|&k| !(objs[k] <= objs[k - window] * (1.0 + 1e-9)))
        .count();
    let passed = last <= 0.5 * obj0 && increases == 0 && out.elapsed <= LARGE_RUN_BUDGET;
    Ok((
        passed,
        format!(
            "N={} objective {obj0:.4e} -> {last:.4e} ({:.3}), window increases={increases}, time={:.2?}",
            objs.len(),
            last / obj0,
            out.elapsed
        ),
    ))
}

pub fn check_combined_complexity(inst: &ProblemInstance, out: &RunOutput) -> Check {
    Check::from_result("combined_complexity", complexity_inner(inst, out))
}

fn complexity_inner(inst: &ProblemInstance, out: &RunOutput) -> Result<(bool, String)> {
    let trace = &out.trace;
    let theta = trace.theta;
    let big_q = q_rate(theta, trace.q_bar());
    let c = cap_constant(trace.tau_bar(), theta, big_q, inst.bundle.constants.d_m);
    let eps: Vec<f64> = trace.records.iter().map(|r| r.epsilon).collect();
    let bound = combined_complexity_bound(c, big_q, &eps);
    let mut cumulative = Vec::with_capacity(trace.len());
    let mut total = 0usize;
    for r in &trace.records {
        total += r.inner_iterations;
        cumulative.push(total as f64);
    }
    let nlogn = |n: usize| n as f64 * (n as f64).ln();
    let fit_end = 500.min(trace.len());
    let c_fit = (10..=fit_end)
        .map(|n| cumulative[n - 1] / nlogn(n))
        .fold(0.0, f64::max);
    let nlogn_ok = (10..=trace.len()).all(|n| cumulative[n - 1] <= c_fit * nlogn(n));
    Ok((
        (total as f64) <= bound && nlogn_ok,
        format!(
            "total inner={total} bound={bound:.4e} fitted c={c_fit:.4} N log N envelope holds={nlogn_ok}"
        ),
    ))
}

/// Runs every check in order.
pub fn run_all() -> Vec<Check> {
    let mut checks = Vec::new();
    match equilibrium_run() {
        Ok((inst, out)) => {
            checks.push(check_equilibrium(&inst, &out));
            checks.push(check_energy_inequality(&inst, &out, None));
            checks.push(check_combined_complexity(&inst, &out));
        }
        Err(e) => {
            for name in ["equilibrium_reproduction", "energy_inequality", "combined_complexity"] {
                checks.push(Check::new(name, false, format!("error: {e}")));
            }
        }
    }
    checks.push(check_inner_loop_guarantee(100, 2024));
    checks.push(check_contraction_factors(50, 1000, 7));
    checks.push(check_closed_forms(3));
    checks.push(check_parameter_quadratic());
    checks.push(check_rate_envelope().unwrap_or_else(|e| {
        Check::new("rate_envelope", false, format!("error: {e}"))
    }));
    checks.push(check_lnls(1));
    checks.push(check_inpainting(1));
    checks
}
