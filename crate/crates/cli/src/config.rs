//! Run configuration: a JSON file whose fields are mirrored by flags.
//!
//! Every field is optional in both places. A flag wins over the file, the
//! file wins over the built-in default. The resolved values are echoed into
//! each run manifest.

use std::path::{Path, PathBuf};

use clap::Args;
use persistence_lab::geometry::{make_domain, DomainKind};
use persistence_lab::persistence::{McOptions, DEFAULT_POINT_CAP};
use persistence_lab::{CovarianceModel, Domain, Mesh};
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PLAB_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "plab-out";

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Covariance model: fbm | perturbed_fbm
    #[arg(long)]
    pub model: Option<String>,
    /// Hurst index H in (0, 1)
    #[arg(long = "H", alias = "hurst")]
    pub hurst: Option<f64>,
    /// Perturbation amplitude (perturbed_fbm)
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Perturbation length scale (perturbed_fbm)
    #[arg(long)]
    pub ell: Option<f64>,
    /// Domain shape: cube | ball
    #[arg(long)]
    pub domain: Option<String>,
    /// Time dimension d
    #[arg(long = "d")]
    pub d: Option<usize>,
    /// Cube half-width or ball radius
    #[arg(long)]
    pub size: Option<f64>,
    /// Scale factors T (comma separated or repeated)
    #[arg(long = "T", value_delimiter = ',', num_args = 1..)]
    pub t: Option<Vec<f64>>,
    /// Persistence barrier (1 strict, 0 non-strict)
    #[arg(long)]
    pub barrier: Option<f64>,
    /// Net spacing δ = 1/m
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of realizations
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Curve: largest level
    #[arg(long)]
    pub nmax: Option<u64>,
    /// Curve: exponent ε of the schedule L_n
    #[arg(long)]
    pub eps: Option<f64>,
    /// Curve: step bound L
    #[arg(long = "L")]
    pub step_bound: Option<u32>,
    /// Worker threads (0 = all cores); never changes results
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub point_cap: Option<usize>,
    /// Output directory (default: $PLAB_OUT_DIR, then ./plab-out)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write samples in the binary layout instead of CSV
    #[arg(long)]
    pub binary: Option<bool>,
    /// Coarse net spacing ρ (lemma2)
    #[arg(long)]
    pub rho: Option<f64>,
    /// Continuum threshold a (lemma2)
    #[arg(long)]
    pub a: Option<f64>,
    /// Net threshold c < a (lemma2)
    #[arg(long)]
    pub c: Option<f64>,
    /// Truncation level b (lemma2)
    #[arg(long)]
    pub b: Option<f64>,
    /// Threshold exponent κ (cor3)
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Chain: inner level fraction q
    #[arg(long)]
    pub q: Option<f64>,
    /// Chain: outer level n
    #[arg(long)]
    pub level: Option<u64>,
    /// Tail radii (fernique)
    #[arg(long = "r", value_delimiter = ',', num_args = 1..)]
    pub r: Option<Vec<f64>>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Params {
    pub fn load(path: &Path) -> anyhow::Result<Params> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())).into())
    }

    /// Fields set in `flags` replace those in `self`.
    pub fn overlay(mut self, flags: &Params) -> Params {
        overlay!(self, flags; model, hurst, sigma, ell, domain, d, size, t, barrier, delta, seed, n,
            nmax, eps, step_bound, workers, point_cap, out, binary, rho, a, c, b, kappa, q, level, r);
        self
    }

    /// Fills unset fields with defaults, including the output directory.
    pub fn resolve(mut self) -> Params {
        let out = self
            .out
            .take()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        let defaults = Params {
            model: Some("fbm".into()),
            hurst: Some(0.5),
            sigma: Some(1.0),
            ell: Some(1.0),
            domain: Some("cube".into()),
            d: Some(1),
            size: Some(1.0),
            t: Some(vec![16.0]),
            barrier: Some(1.0),
            delta: Some(1.0),
            seed: Some(0),
            n: Some(10_000),
            nmax: Some(16),
            eps: Some(1.0),
            step_bound: Some(3),
            workers: Some(0),
            point_cap: Some(DEFAULT_POINT_CAP),
            out: Some(out),
            binary: Some(false),
            rho: Some(1.0),
            a: Some(2.0),
            c: Some(0.0),
            b: Some(1.0),
            kappa: Some(1.0),
            q: Some(0.5),
            level: Some(6),
            r: None,
        };
        defaults.overlay(&self)
    }

    pub fn model(&self) -> anyhow::Result<CovarianceModel> {
        let h = self.hurst.unwrap_or(0.5);
        let m = match self.model.as_deref().unwrap_or("fbm") {
            "fbm" => CovarianceModel::fbm(h),
            "perturbed_fbm" | "perturbed" => {
                CovarianceModel::perturbed_fbm(h, self.sigma.unwrap_or(1.0), self.ell.unwrap_or(1.0))
            }
            other => return Err(ConfigError(format!("unknown model '{other}' (fbm | perturbed_fbm)")).into()),
        };
        Ok(m?)
    }

    pub fn domain(&self) -> anyhow::Result<Domain> {
        let size = self.size.unwrap_or(1.0);
        let kind = match self.domain.as_deref().unwrap_or("cube") {
            "cube" => DomainKind::TangentCube { half_width: size },
            "ball" => DomainKind::TangentBall { radius: size },
            other => return Err(ConfigError(format!("unknown domain '{other}' (cube | ball)")).into()),
        };
        Ok(make_domain(kind, self.d.unwrap_or(1))?)
    }

    pub fn mesh(&self) -> anyhow::Result<Mesh> {
        Ok(Mesh::from_spacing(self.delta.unwrap_or(1.0))?)
    }

    pub fn scales(&self) -> anyhow::Result<Vec<f64>> {
        let ts = self.t.clone().unwrap_or_default();
        if ts.is_empty() {
            return Err(ConfigError("at least one T is required".into()).into());
        }
        if let Some(bad) = ts.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(ConfigError(format!("T must be positive, got {bad}")).into());
        }
        Ok(ts)
    }

    pub fn opts(&self) -> McOptions {
        McOptions {
            workers: self.workers.unwrap_or(0),
            point_cap: self.point_cap.unwrap_or(DEFAULT_POINT_CAP),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn count(&self) -> usize {
        self.n.unwrap_or(10_000)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

/// Invalid configuration; maps to exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}
