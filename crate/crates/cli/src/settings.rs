//! Run settings: flat TOML file keys, each mirrored by a flag.

use std::path::{Path, PathBuf};

use clap::Args;
use dante_core::encodings::EncodingKind;
use dante_core::io::{load_matrix_csv, load_pgm};
use dante_core::operators::{OperatorBundle, ResolventOp, SingleValuedOp};
use dante_core::outer_loop::{BetaSchedule, DanteConfig, EpsilonSchedule, TauPolicy};
use dante_core::problems::{
    build_equilibrium, build_inpainting, build_lnls_with, synthetic_image, LnlsOptions, ProblemInstance,
};
use dante_core::Point;
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Equilibrium,
    Lnls,
    Inpainting,
    Custom,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Equilibrium => "equilibrium",
            Experiment::Lnls => "lnls",
            Experiment::Inpainting => "inpainting",
            Experiment::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[arg(skip)]
    pub experiment: Option<Experiment>,
    /// Proximal parameter.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Strong monotonicity modulus of G used by the schedules.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Number of outer iterations.
    #[arg(long)]
    pub n_outer: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Fixed momentum; default is a safety factor times the admissible maximum.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub tau_safety: Option<f64>,
    /// Exponent of beta_n = (n+1)^-b.
    #[arg(long)]
    pub b: Option<f64>,
    /// Switches to beta_n = alpha / (2 mu n + xi).
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub eps_scale: Option<f64>,
    #[arg(long)]
    pub eps_exponent: Option<f64>,
    /// fb, bf, dr or tos.
    #[arg(long)]
    pub encoding: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub hard_cap: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub w0: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "DANTE_OUT")]
    pub output_dir: Option<PathBuf>,
    /// Progress line every this many outer steps; 0 is silent.
    #[arg(long)]
    pub log_every: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    /// Input image, PGM or matrix CSV.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Side of the synthetic image.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub corruption: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Row-major matrix of the custom affine operator.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub custom_matrix: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub custom_offset: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub custom_lower: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub custom_upper: Option<Vec<f64>>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Settings {
    /// Fields set in `top` win.
    pub fn overlay(mut self, top: &Settings) -> Settings {
        overlay!(self, top;
            experiment, alpha, mu, n_outer, theta, tau, tau_safety, b, xi, eps_scale, eps_exponent,
            encoding, gamma, eta, hard_cap, w0, seed, output_dir, log_every, rows, cols,
            rank, image, size, corruption, sigma, custom_matrix, custom_offset,
            custom_lower, custom_upper,
        );
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn output_dir(&self, experiment: Experiment) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("dante-out").join(experiment.as_str()))
    }
}

pub fn read_config(path: &Path) -> Result<Settings, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn load_image(path: &Path) -> Result<Point, CliError> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let img = if is_csv {
        load_matrix_csv(path)
    } else {
        load_pgm(path)
    };
    img.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn build_custom(s: &Settings) -> Result<ProblemInstance, CliError> {
    let need = |v: &Option<Vec<f64>>, key: &str| {
        v.clone()
            .ok_or_else(|| CliError::Config(format!("custom experiment needs `{key}`")))
    };
    let offset = need(&s.custom_offset, "custom_offset")?;
    let dim = offset.len();
    let matrix = need(&s.custom_matrix, "custom_matrix")?;
    if dim == 0 || matrix.len() != dim * dim {
        return Err(CliError::Config(format!(
            "custom_matrix needs {} entries for dimension {dim}, got {}",
            dim * dim,
            matrix.len()
        )));
    }
    let lower = Point::new(need(&s.custom_lower, "custom_lower")?);
    let upper = Point::new(need(&s.custom_upper, "custom_upper")?);
    let bundle = OperatorBundle::new(
        SingleValuedOp::identity(dim),
        SingleValuedOp::dense(
            DMatrix::from_row_slice(dim, dim, &matrix),
            Some(Point::new(offset)),
        )
        .map_err(config_err)?,
        ResolventOp::box_normal_cone(lower.clone(), upper.clone()).map_err(config_err)?,
        None,
    )
    .map_err(config_err)?;
    let mut defaults = build_equilibrium().map_err(config_err)?.defaults;
    defaults.w0 = lower.lincomb(0.5, 0.5, &upper);
    Ok(ProblemInstance {
        name: "custom",
        bundle,
        sol: None,
        reference: None,
        monitors: Vec::new(),
        defaults,
        inpainting: None,
    })
}

/// Builds the instance and the solver config; every failure is a config error.
pub fn build(experiment: Experiment, s: &Settings) -> Result<(ProblemInstance, DanteConfig), CliError> {
    let seed = s.seed();
    let inst = match experiment {
        Experiment::Equilibrium => build_equilibrium().map_err(config_err)?,
        Experiment::Lnls => {
            let opts = LnlsOptions::new(
                s.rows.unwrap_or(70),
                s.cols.unwrap_or(100),
                s.rank.unwrap_or(50),
                seed,
            );
            build_lnls_with(&opts).map_err(config_err)?
        }
        Experiment::Inpainting => {
            let image = match &s.image {
                Some(p) => load_image(p)?,
                None => {
                    let side = s.size.unwrap_or(64);
                    synthetic_image(side, side, 5, seed).map_err(config_err)?
                }
            };
            build_inpainting(
                &image,
                s.corruption.unwrap_or(0.2),
                s.sigma.unwrap_or(50.0),
                seed,
            )
            .map_err(config_err)?
        }
        Experiment::Custom => build_custom(s)?,
    };
    let cfg = apply(experiment, &inst, s)?;
    cfg.check(&inst.bundle).map_err(config_err)?;
    Ok((inst, cfg))
}

fn apply(experiment: Experiment, inst: &ProblemInstance, s: &Settings) -> Result<DanteConfig, CliError> {
    let mut cfg = inst.defaults.clone();
    if let Some(a) = s.alpha {
        cfg.alpha = a;
        if experiment == Experiment::Lnls {
            cfg.schedules.epsilon.scale = a * 1e-3;
        }
    }
    if let Some(mu) = s.mu {
        cfg.mu = mu;
    }
    if let Some(n) = s.n_outer {
        cfg.n_outer = n;
    }
    if let Some(t) = s.theta {
        cfg.theta = t;
    }
    match (s.tau, s.tau_safety) {
        (Some(_), Some(_)) => return Err(config_err("set at most one of `tau` and `tau_safety`")),
        (Some(t), None) => cfg.tau = TauPolicy::Fixed(t),
        (None, Some(safety)) => cfg.tau = TauPolicy::Auto { safety },
        (None, None) => {}
    }
    match (s.b, s.xi) {
        (Some(_), Some(_)) => return Err(config_err("set at most one of `b` and `xi`")),
        (Some(b), None) => cfg.schedules.beta = BetaSchedule::Monotone { b },
        (None, Some(xi)) => {
            cfg.schedules.beta = BetaSchedule::Strong {
                alpha: cfg.alpha,
                mu: cfg.mu,
                xi,
            }
        }
        (None, None) => {}
    }
    let eps = &mut cfg.schedules.epsilon;
    *eps = EpsilonSchedule {
        scale: s.eps_scale.unwrap_or(eps.scale),
        exponent: s.eps_exponent.unwrap_or(eps.exponent),
    };
    if let Some(e) = &s.encoding {
        cfg.encoding = e.parse::<EncodingKind>().map_err(config_err)?;
    }
    if s.gamma.is_some() {
        cfg.gamma = s.gamma;
    }
    if let Some(eta) = s.eta {
        cfg.eta = eta;
    }
    if s.hard_cap.is_some() {
        cfg.hard_cap = s.hard_cap;
    }
    if let Some(w0) = &s.w0 {
        cfg.w0 = Point::new(w0.clone())
            .with_shape(cfg.w0.shape())
            .map_err(config_err)?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("alpha = 1.0\nfoo = 2\n").is_err());
        let c: Settings = toml::from_str("experiment = \"lnls\"\nalpha = 1.0\nw0 = [1.0, 2.0]\n").unwrap();
        assert_eq!(c.experiment, Some(Experiment::Lnls));
        assert_eq!(c.w0, Some(vec![1.0, 2.0]));
    }

    #[test]
    fn overlay_prefers_top() {
        let base = Settings {
            alpha: Some(1.0),
            theta: Some(0.5),
            ..Default::default()
        };
        let top = Settings {
            alpha: Some(2.0),
            ..Default::default()
        };
        let s = base.overlay(&top);
        assert_eq!(s.alpha, Some(2.0));
        assert_eq!(s.theta, Some(0.5));
    }

    #[test]
    fn lnls_alpha_rescales_epsilon() {
        let s = Settings {
            alpha: Some(10.0),
            rows: Some(10),
            cols: Some(30),
            rank: Some(4),
            ..Default::default()
        };
        let (_, cfg) = build(Experiment::Lnls, &s).unwrap();
        assert_eq!(cfg.schedules.epsilon.scale, 10.0 * 1e-3);
    }

    #[test]
    fn conflicting_keys_are_config_errors() {
        let s = Settings {
            b: Some(0.5),
            xi: Some(1.0),
            ..Default::default()
        };
        assert!(matches!(build(Experiment::Equilibrium, &s), Err(CliError::Config(_))));
        let s = Settings {
            encoding: Some("xyz".into()),
            ..Default::default()
        };
        assert!(matches!(build(Experiment::Equilibrium, &s), Err(CliError::Config(_))));
    }

    #[test]
    fn custom_needs_consistent_data() {
        let s = Settings {
            custom_matrix: Some(vec![0.0, -0.1, 0.1, 0.0]),
            custom_offset: Some(vec![1.0, 0.0]),
            custom_lower: Some(vec![11.0, 10.0]),
            custom_upper: Some(vec![60.0, 50.0]),
            n_outer: Some(5),
            ..Default::default()
        };
        let (inst, cfg) = build(Experiment::Custom, &s).unwrap();
        assert_eq!(inst.bundle.dim(), 2);
        assert_eq!(cfg.w0.as_slice(), &[35.5, 30.0]);
        let mut bad = s.clone();
        bad.custom_matrix = Some(vec![1.0]);
        assert!(build(Experiment::Custom, &bad).is_err());
    }
}
