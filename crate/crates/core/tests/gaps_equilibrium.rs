use dante_core::gaps::{
    bound_opt, bound_terms, dist_to_solution, energy_check, gap_feas, gap_opt, weak_sharpness_diag,
    BoundConstants, BoundInputs, BoundTerm,
};
use dante_core::outer_loop::BetaSchedule;
use dante_core::problems::{build_equilibrium, run_instance};
use dante_core::verify::energy_pairs;
use dante_core::{Point, SeededRng};

fn box_points(k: usize, seed: u64) -> Vec<Point> {
    let inst = build_equilibrium().unwrap();
    let (lo, hi) = inst.bundle.domain().box_bounds().unwrap();
    let mut rng = SeededRng::new(seed);
    (0..k).map(|_| rng.uniform_point(&lo, &hi)).collect()
}

#[test]
fn gap_feas_vanishes_on_solution_set() {
    let inst = build_equilibrium().unwrap();
    let sol = inst.sol.as_ref().unwrap();
    for x in sol.sample(20) {
        assert!(gap_feas(&x, &inst.bundle).unwrap().value.abs() <= 1e-10);
    }
}

#[test]
fn gap_opt_respects_lower_bound() {
    let inst = build_equilibrium().unwrap();
    let sol = inst.sol.as_ref().unwrap();
    let c_g = inst.bundle.constants.c_g;
    for u in box_points(200, 1) {
        let g = gap_opt(&u, sol, &inst.bundle.upper).unwrap();
        assert!(g >= -c_g * dist_to_solution(&u, sol) - 1e-9);
    }
}

#[test]
fn weak_sharpness_fit_then_verify() {
    let inst = build_equilibrium().unwrap();
    let sol = inst.sol.as_ref().unwrap();
    let pts = box_points(300, 2);
    let (kappa, rho) = weak_sharpness_diag(&pts, &inst.bundle, sol).unwrap();
    let kappa = 0.95 * kappa;
    for p in &pts {
        let d = dist_to_solution(p, sol);
        assert!(gap_feas(p, &inst.bundle).unwrap().value >= kappa * d.powf(rho) - 1e-12);
    }
}

#[test]
fn error_free_bound_is_nonincreasing() {
    let inst = build_equilibrium().unwrap();
    let k = inst.bundle.constants;
    let c = BoundConstants::new(BoundInputs {
        alpha: 0.1,
        mu: 0.0,
        beta_max: 1.0,
        e_max: 0.0,
        e0: 0.0,
        d_m: k.d_m,
        c_m: k.c_m,
        c_g: k.c_g,
        beta0: 1.0,
    });
    let terms: Vec<BoundTerm> = (0..500)
        .map(|n| BoundTerm {
            lambda: 1.0,
            beta: BetaSchedule::Monotone { b: 0.55 }.beta(n),
            e: 0.0,
        })
        .collect();
    let vals: Vec<f64> = (1..=terms.len()).map(|n| bound_opt(&terms[..n], &c)).collect();
    assert!(vals.windows(2).all(|w| w[1] <= w[0]));
}

/// The inner solves here are accurate enough that the inequality holds even
/// with the error term dropped; only a negative constant breaks it.
#[test]
fn energy_inequality_error_term_margin() {
    let inst = build_equilibrium().unwrap();
    let out = run_instance(&inst, &inst.defaults).unwrap();
    let c = BoundConstants::from_trace(&out.trace, &inst.bundle, 0.1, 0.0).unwrap();
    let worst = |c1: f64| {
        let cc = c.with_c1(c1);
        energy_pairs(&inst, 10, 17)
            .iter()
            .map(|(x, v)| {
                energy_check(&out.trace, &inst.bundle.upper, x, v, &cc, 0.1)
                    .unwrap()
                    .unwrap()
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    assert!(worst(c.c1) <= 1e-8);
    assert!(worst(0.0) <= 1e-8);
    assert!(worst(-1.0) > 1e-8);
    assert!(bound_terms(&out.trace).is_some());
}
