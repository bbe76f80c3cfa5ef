//! Fixed-point encodings of the auxiliary problem `0 in A(v) (+ B(v)) + Phi(v)`.
//!
//! Each [`Encoding`] bundles the map `T`, its contraction factor `q` and the
//! transportation map `Z` carrying fixed points of `T` to the auxiliary zero.
//! `q = 1` marks a map that is only known to be nonexpansive.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::operators::{build_phi, OperatorBundle, ResolventOp, ResolventSolver, SingleValuedOp};
use crate::vectorspace::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncodingKind {
    /// Forward-backward, `T = J_{gA} o (Id - g Phi)`.
    Fb,
    /// Backward-forward, `T = (Id - g Phi) o J_{gA}`.
    Bf,
    /// Douglas-Rachford, `T = (Id + R_Phi o R_A) / 2`.
    Dr,
    /// Three-operator splitting.
    Tos,
}

impl EncodingKind {
    pub const ALL: [EncodingKind; 4] = [Self::Fb, Self::Bf, Self::Dr, Self::Tos];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fb => "FB",
            Self::Bf => "BF",
            Self::Dr => "DR",
            Self::Tos => "TOS",
        }
    }
}

impl fmt::Display for EncodingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncodingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FB" => Ok(Self::Fb),
            "BF" => Ok(Self::Bf),
            "DR" => Ok(Self::Dr),
            "TOS" => Ok(Self::Tos),
            other => Err(Error::Parse(format!("unknown encoding '{other}'"))),
        }
    }
}

/// A resolvent with its step fixed, prepared for repeated evaluation.
#[derive(Clone)]
enum Prepared {
    Op(ResolventOp, f64),
    Solver(Arc<ResolventSolver>),
}

impl Prepared {
    fn new(op: &ResolventOp, gamma: f64) -> Result<Self> {
        match op {
            ResolventOp::Affine(map) => Ok(Prepared::Solver(Arc::new(ResolventSolver::new(
                &SingleValuedOp::affine(map.clone()),
                gamma,
            )?))),
            other => Ok(Prepared::Op(other.clone(), gamma)),
        }
    }

    fn resolve(&self, y: &Point) -> Result<Point> {
        match self {
            Prepared::Op(op, gamma) => op.resolve(y, *gamma),
            Prepared::Solver(s) => s.solve(y),
        }
    }
}

#[derive(Clone)]
enum Map {
    Fb { ja: Prepared },
    Bf { ja: Prepared },
    Dr { ja: Prepared, jphi: Arc<ResolventSolver> },
    Tos { ja: Prepared, jb: Prepared },
}

/// Fixed-point encoding `T` of one auxiliary problem.
#[derive(Clone)]
pub struct Encoding {
    kind: EncodingKind,
    phi: SingleValuedOp,
    map: Map,
    step: Option<f64>,
    q: f64,
    contraction: bool,
}

impl fmt::Debug for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Encoding")
            .field("kind", &self.kind)
            .field("step", &self.step)
            .field("q", &self.q)
            .field("contraction", &self.contraction)
            .finish()
    }
}

impl Encoding {
    pub fn kind(&self) -> EncodingKind {
        self.kind
    }

    /// Contraction factor; `1` in nonexpansive mode.
    pub fn q(&self) -> f64 {
        self.q
    }

    /// Step `gamma`; `None` for Douglas-Rachford.
    pub fn step(&self) -> Option<f64> {
        self.step
    }

    /// False when the parameters fall outside the contraction regime.
    pub fn is_contraction(&self) -> bool {
        self.contraction
    }

    pub fn phi(&self) -> &SingleValuedOp {
        &self.phi
    }

    /// `T(z)`.
    pub fn apply(&self, z: &Point) -> Result<Point> {
        match &self.map {
            Map::Fb { ja } => {
                let g = self.step.unwrap_or(1.0);
                ja.resolve(&z.lincomb(1.0, -g, &self.phi.evaluate(z)))
            }
            Map::Bf { ja } => {
                let g = self.step.unwrap_or(1.0);
                let x = ja.resolve(z)?;
                let fx = self.phi.evaluate(&x);
                Ok(x.lincomb(1.0, -g, &fx))
            }
            Map::Dr { ja, jphi } => {
                let ra = ja.resolve(z)?.lincomb(2.0, -1.0, z);
                let rphi = jphi.solve(&ra)?.lincomb(2.0, -1.0, &ra);
                Ok(z.lincomb(0.5, 0.5, &rphi))
            }
            Map::Tos { ja, jb } => {
                let g = self.step.unwrap_or(1.0);
                let xb = jb.resolve(z)?;
                let mut y = xb.lincomb(2.0, -1.0, z);
                y.add_scaled(-g, &self.phi.evaluate(&xb));
                let xa = ja.resolve(&y)?;
                let mut out = z - &xb;
                out.add_scaled(1.0, &xa);
                Ok(out)
            }
        }
    }

    /// `Z(v)`.
    pub fn transport(&self, v: &Point) -> Result<Point> {
        match &self.map {
            Map::Fb { .. } => Ok(v.clone()),
            Map::Bf { ja } | Map::Dr { ja, .. } => ja.resolve(v),
            Map::Tos { jb, .. } => jb.resolve(v),
        }
    }
}

/// `gamma = alpha / L^2`, the minimizer of the forward-backward factor.
pub fn default_step(alpha: f64, lipschitz: f64) -> f64 {
    alpha / (lipschitz * lipschitz)
}

/// Forward-backward / backward-forward factor `sqrt(1 - g (2a - g L^2))`.
///
/// Returns `(q, contraction)`; outside `0 < g < 2a / L^2` the factor is `1`.
pub fn fb_factor(alpha: f64, lipschitz: f64, gamma: f64) -> (f64, bool) {
    let l2 = lipschitz * lipschitz;
    if gamma > 0.0 && gamma < 2.0 * alpha / l2 {
        let inner = 1.0 - gamma * (2.0 * alpha - gamma * l2);
        (inner.max(0.0).sqrt(), true)
    } else {
        (1.0, false)
    }
}

/// Douglas-Rachford factor `1/2 + 1/2 sqrt((1 - 2a + L^2) / (1 + 2a + L^2))`.
pub fn dr_factor(alpha: f64, lipschitz: f64) -> f64 {
    let l2 = lipschitz * lipschitz;
    let ratio = ((1.0 - 2.0 * alpha + l2) / (1.0 + 2.0 * alpha + l2)).max(0.0);
    0.5 + 0.5 * ratio.sqrt()
}

/// Three-operator factor `sqrt(1 - 2 g a (1 - eta) / (1 + g L_B)^2)`.
///
/// Contraction requires a Lipschitz `B` and `g < eta * nu`; otherwise `1`.
pub fn tos_factor(
    alpha: f64,
    cocoercivity: f64,
    lipschitz_b: Option<f64>,
    gamma: f64,
    eta: f64,
) -> (f64, bool) {
    match lipschitz_b {
        Some(lb) if gamma > 0.0 && gamma < eta * cocoercivity && eta < 1.0 => {
            let drop = 2.0 * gamma * alpha * (1.0 - eta) / (1.0 + gamma * lb).powi(2);
            ((1.0 - drop).max(0.0).sqrt(), true)
        }
        _ => (1.0, false),
    }
}

fn check_common(bundle: &OperatorBundle, w: &Point, alpha: f64, beta: f64) -> Result<SingleValuedOp> {
    if w.len() != bundle.dim() {
        return Err(Error::DimensionMismatch {
            expected: bundle.dim(),
            found: w.len(),
        });
    }
    build_phi(w, alpha, beta, &bundle.lower_smooth, &bundle.upper)
}

fn two_operator(bundle: &OperatorBundle, kind: EncodingKind) -> Result<()> {
    if bundle.lower_resolvent_b.is_some() {
        return Err(Error::Unsupported(format!(
            "{kind} encodes two-operator problems; use TOS when B is present"
        )));
    }
    Ok(())
}

fn check_step(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("step must be positive and finite, got {gamma}")))
    }
}

pub fn fb_encoding(
    bundle: &OperatorBundle,
    w: &Point,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> Result<Encoding> {
    two_operator(bundle, EncodingKind::Fb)?;
    check_step(gamma)?;
    let phi = check_common(bundle, w, alpha, beta)?;
    let (q, contraction) = fb_factor(alpha, phi.lipschitz(), gamma);
    Ok(Encoding {
        kind: EncodingKind::Fb,
        map: Map::Fb {
            ja: Prepared::new(&bundle.lower_resolvent_a, gamma)?,
        },
        phi,
        step: Some(gamma),
        q,
        contraction,
    })
}

pub fn bf_encoding(
    bundle: &OperatorBundle,
    w: &Point,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> Result<Encoding> {
    two_operator(bundle, EncodingKind::Bf)?;
    check_step(gamma)?;
    let phi = check_common(bundle, w, alpha, beta)?;
    let (q, contraction) = fb_factor(alpha, phi.lipschitz(), gamma);
    Ok(Encoding {
        kind: EncodingKind::Bf,
        map: Map::Bf {
            ja: Prepared::new(&bundle.lower_resolvent_a, gamma)?,
        },
        phi,
        step: Some(gamma),
        q,
        contraction,
    })
}

/// Douglas-Rachford with unit steps in both reflected resolvents.
pub fn dr_encoding(bundle: &OperatorBundle, w: &Point, alpha: f64, beta: f64) -> Result<Encoding> {
    two_operator(bundle, EncodingKind::Dr)?;
    let phi = check_common(bundle, w, alpha, beta)?;
    let q = dr_factor(alpha, phi.lipschitz());
    Ok(Encoding {
        kind: EncodingKind::Dr,
        map: Map::Dr {
            ja: Prepared::new(&bundle.lower_resolvent_a, 1.0)?,
            jphi: Arc::new(ResolventSolver::new(&phi, 1.0)?),
        },
        phi,
        step: None,
        q,
        contraction: q < 1.0,
    })
}

/// Three-operator splitting. A missing `B` is treated as `B = 0`.
///
/// The transportation map is `J_{gB}`: at a fixed point `z*` the two
/// resolvent branches agree and `J_{gB}(z*)` is the auxiliary zero.
pub fn tos_encoding(
    bundle: &OperatorBundle,
    w: &Point,
    alpha: f64,
    beta: f64,
    gamma: f64,
    eta: f64,
) -> Result<Encoding> {
    check_step(gamma)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(invalid(format!("eta must lie in [0, 1], got {eta}")));
    }
    let phi = check_common(bundle, w, alpha, beta)?;
    let b = bundle
        .lower_resolvent_b
        .clone()
        .unwrap_or(ResolventOp::Zero { dim: bundle.dim() });
    let (q, contraction) = tos_factor(alpha, phi.cocoercivity(), b.lipschitz(), gamma, eta);
    Ok(Encoding {
        kind: EncodingKind::Tos,
        map: Map::Tos {
            ja: Prepared::new(&bundle.lower_resolvent_a, gamma)?,
            jb: Prepared::new(&b, gamma)?,
        },
        phi,
        step: Some(gamma),
        q,
        contraction,
    })
}

/// Default TOS step: `0.99 eta nu` when `B` is Lipschitz, else `nu`.
pub fn tos_default_step(nu: f64, eta: f64, b_lipschitz: bool) -> f64 {
    if b_lipschitz && eta > 0.0 {
        0.99 * eta * nu
    } else {
        nu
    }
}

/// Builds the encoding of `kind`, choosing the default step when `gamma` is `None`.
pub fn build_encoding(
    kind: EncodingKind,
    bundle: &OperatorBundle,
    w: &Point,
    alpha: f64,
    beta: f64,
    gamma: Option<f64>,
    eta: f64,
) -> Result<Encoding> {
    let lipschitz = bundle.lower_smooth.lipschitz() + beta * bundle.upper.lipschitz() + alpha;
    let step = |default: f64| gamma.unwrap_or(default);
    match kind {
        EncodingKind::Fb => fb_encoding(bundle, w, alpha, beta, step(default_step(alpha, lipschitz))),
        EncodingKind::Bf => bf_encoding(bundle, w, alpha, beta, step(default_step(alpha, lipschitz))),
        EncodingKind::Dr => dr_encoding(bundle, w, alpha, beta),
        EncodingKind::Tos => {
            let nu = default_step(alpha, lipschitz);
            let b_lip = bundle
                .lower_resolvent_b
                .as_ref()
                .is_none_or(|b| b.lipschitz().is_some());
            tos_encoding(bundle, w, alpha, beta, step(tos_default_step(nu, eta, b_lip)), eta)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{AffineMap, LinearPart};
    use crate::vectorspace::{sample_gaussian, SeededRng};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn p(v: &[f64]) -> Point {
        Point::new(v.to_vec())
    }

    fn plain(dim: usize, f: SingleValuedOp, a: ResolventOp) -> OperatorBundle {
        OperatorBundle::new(SingleValuedOp::identity(dim), f, a, None).unwrap()
    }

    #[test]
    fn factor_examples() {
        assert_relative_eq!(fb_factor(1.0, 2.0, 0.1).0, 0.84f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(fb_factor(1.0, 2.0, 0.1).0, 0.91652, epsilon = 1e-5);
        assert_relative_eq!(fb_factor(1.0, 2.0, 0.25).0, 0.75f64.sqrt(), epsilon = 1e-15);
        assert_eq!(fb_factor(1.0, 2.0, 0.5), (1.0, false));
        assert_relative_eq!(dr_factor(1.0, 2.0), 0.5 + 0.5 * (3.0f64 / 7.0).sqrt());
        assert_relative_eq!(dr_factor(1.0, 2.0), 0.82733, epsilon = 1e-5);
        assert_relative_eq!(dr_factor(0.0, 0.0), 1.0);
        let (q, c) = tos_factor(1.0, 1.0, Some(0.0), 0.1, 0.5);
        assert!(c);
        assert_relative_eq!(q, 0.9f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(q, 0.94868, epsilon = 1e-5);
        assert_eq!(tos_factor(1.0, 1.0, None, 0.1, 0.5), (1.0, false));
    }

    #[test]
    fn default_step_examples() {
        assert_relative_eq!(default_step(1.0, 2.0), 0.25);
        assert_relative_eq!(default_step(3.0, 3.0), 1.0 / 3.0);
        let (alpha, l) = (0.7, 2.3);
        let best = fb_factor(alpha, l, default_step(alpha, l)).0;
        assert_relative_eq!(best, (1.0 - alpha * alpha / (l * l)).sqrt(), epsilon = 1e-14);
        let upper = 2.0 * alpha / (l * l);
        for i in 1..200 {
            let g = upper * i as f64 / 200.0;
            assert!(fb_factor(alpha, l, g).0 >= best - 1e-15);
        }
    }

    #[test]
    fn one_dimensional_fb() {
        // A = 0, F = 0, G = Id, beta = 0, alpha = 1, w = 0: Phi(v) = v
        let bundle = plain(1, SingleValuedOp::zero(1), ResolventOp::Zero { dim: 1 });
        let enc = fb_encoding(&bundle, &Point::zeros(1), 1.0, 0.0, 0.3).unwrap();
        assert_relative_eq!(enc.apply(&p(&[2.0])).unwrap()[0], 1.4);
        assert_eq!(enc.apply(&Point::zeros(1)).unwrap(), Point::zeros(1));
        assert_eq!(enc.transport(&p(&[5.0])).unwrap(), p(&[5.0]));
    }

    #[test]
    fn out_of_range_step_is_flagged() {
        let bundle = plain(1, SingleValuedOp::zero(1), ResolventOp::Zero { dim: 1 });
        let enc = fb_encoding(&bundle, &Point::zeros(1), 1.0, 0.0, 3.0).unwrap();
        assert!(!enc.is_contraction());
        assert_eq!(enc.q(), 1.0);
        assert!(fb_encoding(&bundle, &Point::zeros(1), 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn bf_transport_inside_box_is_identity() {
        let a = ResolventOp::box_normal_cone(p(&[0.0, 0.0]), p(&[1.0, 1.0])).unwrap();
        let bundle = plain(2, SingleValuedOp::zero(2), a);
        let w = p(&[0.5, 0.5]);
        let enc = bf_encoding(&bundle, &w, 1.0, 0.0, 0.2).unwrap();
        let fb = fb_encoding(&bundle, &w, 1.0, 0.0, 0.2).unwrap();
        assert_eq!(enc.q(), fb.q());
        let inside = p(&[0.3, 0.9]);
        assert_eq!(enc.transport(&inside).unwrap(), inside);
    }

    struct Instance {
        bundle: OperatorBundle,
        w: Point,
        alpha: f64,
        beta: f64,
        zero: Point,
    }

    /// Random strongly monotone affine instance with `A` affine, so the auxiliary
    /// zero solves `(L_A + L_F + beta I + alpha I) x = alpha w - c_A - c_F`.
    fn affine_instance(rng: &mut SeededRng, n: usize) -> Instance {
        let skew = |rng: &mut SeededRng| {
            let m = rng.gaussian_matrix(n, n);
            (&m - m.transpose()) * 0.5
        };
        let psd = |rng: &mut SeededRng| {
            let m = rng.gaussian_matrix(n, n) * 0.5;
            &m * m.transpose()
        };
        let lf = skew(rng) + psd(rng) * 0.2;
        let la = psd(rng) + skew(rng) * 0.3;
        let (cf, ca) = (sample_gaussian(rng, n, 1.0), sample_gaussian(rng, n, 1.0));
        let alpha = rng.uniform(0.2, 2.0);
        let beta = rng.uniform(0.0, 1.0);
        let w = sample_gaussian(rng, n, 1.0);
        let f = SingleValuedOp::dense(lf.clone(), Some(cf.clone())).unwrap();
        let a = ResolventOp::Affine(
            AffineMap::new(n, LinearPart::Dense(la.clone()), Some(ca.clone())).unwrap(),
        );
        let system = &la + &lf + DMatrix::identity(n, n) * (alpha + beta);
        let rhs = nalgebra::DVector::from_iterator(
            n,
            (0..n).map(|i| alpha * w[i] - ca[i] - cf[i]),
        );
        let zero = system.lu().solve(&rhs).unwrap();
        Instance {
            bundle: plain(n, f, a),
            w,
            alpha,
            beta,
            zero: Point::new(zero.iter().copied().collect()),
        }
    }

    fn max_ratio(enc: &Encoding, rng: &mut SeededRng, n: usize, pairs: usize) -> f64 {
        (0..pairs)
            .map(|_| {
                let z1 = sample_gaussian(rng, n, 3.0);
                let z2 = sample_gaussian(rng, n, 3.0);
                let num = enc.apply(&z1).unwrap().dist(&enc.apply(&z2).unwrap());
                num / z1.dist(&z2)
            })
            .fold(0.0, f64::max)
    }

    fn all_two_operator(inst: &Instance, gamma: f64) -> Vec<Encoding> {
        vec![
            fb_encoding(&inst.bundle, &inst.w, inst.alpha, inst.beta, gamma).unwrap(),
            bf_encoding(&inst.bundle, &inst.w, inst.alpha, inst.beta, gamma).unwrap(),
            dr_encoding(&inst.bundle, &inst.w, inst.alpha, inst.beta).unwrap(),
        ]
    }

    #[test]
    fn empirical_lipschitz_ratio_below_factor() {
        let mut rng = SeededRng::new(101);
        for _ in 0..5 {
            let n = 3;
            let inst = affine_instance(&mut rng, n);
            let l = inst.bundle.lower_smooth.lipschitz() + inst.beta + inst.alpha;
            for enc in all_two_operator(&inst, default_step(inst.alpha, l)) {
                assert!(enc.is_contraction());
                let r = max_ratio(&enc, &mut rng, n, 1000);
                assert!(r <= enc.q() + 1e-12, "{:?}: ratio {r} > q {}", enc.kind(), enc.q());
            }
        }
    }

    fn iterate_to_fixed_point(enc: &Encoding, start: Point) -> Point {
        let mut z = start;
        for _ in 0..200_000 {
            let next = enc.apply(&z).unwrap();
            let done = next.dist(&z) <= 1e-13;
            z = next;
            if done {
                break;
            }
        }
        z
    }

    #[test]
    fn fixed_points_transport_to_the_auxiliary_zero() {
        let mut rng = SeededRng::new(202);
        for _ in 0..3 {
            let inst = affine_instance(&mut rng, 2);
            let l = inst.bundle.lower_smooth.lipschitz() + inst.beta + inst.alpha;
            for enc in all_two_operator(&inst, default_step(inst.alpha, l)) {
                let fixed = iterate_to_fixed_point(&enc, sample_gaussian(&mut rng, 2, 1.0));
                let u = enc.transport(&fixed).unwrap();
                assert!(u.dist(&inst.zero) <= 1e-8, "{:?}: {}", enc.kind(), u.dist(&inst.zero));
            }
        }
    }

    #[test]
    fn transport_is_nonexpansive() {
        let mut rng = SeededRng::new(303);
        let inst = affine_instance(&mut rng, 3);
        for enc in all_two_operator(&inst, 0.05) {
            for _ in 0..200 {
                let a = sample_gaussian(&mut rng, 3, 2.0);
                let b = sample_gaussian(&mut rng, 3, 2.0);
                let d = enc.transport(&a).unwrap().dist(&enc.transport(&b).unwrap());
                assert!(d <= a.dist(&b) + 1e-12);
            }
        }
    }

    #[test]
    fn tos_without_b_is_forward_backward() {
        let mut rng = SeededRng::new(404);
        let inst = affine_instance(&mut rng, 3);
        let tos = tos_encoding(&inst.bundle, &inst.w, inst.alpha, inst.beta, 0.07, 0.5).unwrap();
        let fb = fb_encoding(&inst.bundle, &inst.w, inst.alpha, inst.beta, 0.07).unwrap();
        for _ in 0..50 {
            let z = sample_gaussian(&mut rng, 3, 2.0);
            assert!(tos.apply(&z).unwrap().dist(&fb.apply(&z).unwrap()) <= 1e-12);
        }
    }

    #[test]
    fn tos_fixed_point_with_box() {
        // F = 0, G = Id, A = affine, B = box normal cone
        let n = 2;
        let a = ResolventOp::Affine(
            AffineMap::new(
                n,
                LinearPart::Dense(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 2.0])),
                Some(p(&[-3.0, 1.0])),
            )
            .unwrap(),
        );
        let b = ResolventOp::box_normal_cone(p(&[0.0, 0.0]), p(&[1.0, 1.0])).unwrap();
        let bundle = OperatorBundle::new(
            SingleValuedOp::identity(n),
            SingleValuedOp::zero(n),
            a.clone(),
            Some(b),
        )
        .unwrap();
        let w = p(&[0.2, 0.4]);
        let (alpha, beta) = (1.0, 0.5);
        let enc = build_encoding(EncodingKind::Tos, &bundle, &w, alpha, beta, None, 0.5).unwrap();
        assert_eq!(enc.q(), 1.0);
        let fixed = iterate_to_fixed_point(&enc, Point::zeros(n));
        let u = enc.transport(&fixed).unwrap();
        // u solves 0 in A u + N_box(u) + beta u + alpha (u - w): natural residual
        let ResolventOp::Affine(map) = &a else { unreachable!() };
        let mut field = map.apply(&u);
        field.add_scaled(beta, &u);
        field.add_scaled(alpha, &(&u - &w));
        let proj = crate::operators::project_box(&(&u - &field), &p(&[0.0, 0.0]), &p(&[1.0, 1.0]))
            .unwrap();
        assert!(u.dist(&proj) <= 1e-9, "residual {}", u.dist(&proj));
    }

    #[test]
    fn two_operator_encodings_reject_b() {
        let bundle = OperatorBundle::new(
            SingleValuedOp::identity(1),
            SingleValuedOp::zero(1),
            ResolventOp::Zero { dim: 1 },
            Some(ResolventOp::Zero { dim: 1 }),
        )
        .unwrap();
        assert!(fb_encoding(&bundle, &Point::zeros(1), 1.0, 0.0, 0.1).is_err());
        assert!(dr_encoding(&bundle, &Point::zeros(1), 1.0, 0.0).is_err());
    }

    #[test]
    fn kind_round_trip() {
        for k in EncodingKind::ALL {
            assert_eq!(k.to_string().parse::<EncodingKind>().unwrap(), k);
        }
        assert_eq!("fb".parse::<EncodingKind>().unwrap(), EncodingKind::Fb);
        assert!("xyz".parse::<EncodingKind>().is_err());
    }
}
