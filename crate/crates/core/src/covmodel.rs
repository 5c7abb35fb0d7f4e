//! Isotropic Gaussian models with stationary increments, pinned at the origin.
//!
//! A model is specified by its variogram `ν(h) = E(ξ(t+h) − ξ(t))²`, which
//! depends on `|h|` only (Euclidean norm). The covariance of the pinned field
//! is `K(t, s) = (ν(|t|) + ν(|s|) − ν(|t − s|)) / 2`.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Point;

/// Smallest admissible Gram eigenvalue, relative to the trace.
pub const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceModel {
    /// Lévy fractional Brownian motion, `ν(h) = h^{2H}`.
    Fbm { hurst: f64 },
    /// `ν(h) = h^{2H} + σ²(1 − exp(−(h/ℓ)²))`: stationary increments and
    /// `ν(h) ~ h^{2H}` at infinity, but not self-similar.
    PerturbedFbm { hurst: f64, sigma: f64, ell: f64 },
}

impl CovarianceModel {
    pub fn fbm(hurst: f64) -> Result<Self> {
        let m = CovarianceModel::Fbm { hurst };
        m.validate()?;
        Ok(m)
    }

    pub fn perturbed_fbm(hurst: f64, sigma: f64, ell: f64) -> Result<Self> {
        let m = CovarianceModel::PerturbedFbm { hurst, sigma, ell };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hurst();
        if !(h > 0.0 && h < 1.0) {
            return invalid(format!("Hurst index must lie in (0, 1), got {h}"));
        }
        if let CovarianceModel::PerturbedFbm { sigma, ell, .. } = *self {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return invalid(format!("perturbation amplitude must be >= 0, got {sigma}"));
            }
            if !(ell > 0.0 && ell.is_finite()) {
                return invalid(format!("perturbation length must be > 0, got {ell}"));
            }
        }
        Ok(())
    }

    pub fn hurst(&self) -> f64 {
        match *self {
            CovarianceModel::Fbm { hurst } | CovarianceModel::PerturbedFbm { hurst, .. } => hurst,
        }
    }

    pub fn is_self_similar(&self) -> bool {
        match *self {
            CovarianceModel::Fbm { .. } => true,
            CovarianceModel::PerturbedFbm { sigma, .. } => sigma == 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CovarianceModel::Fbm { .. } => "fbm",
            CovarianceModel::PerturbedFbm { .. } => "perturbed_fbm",
        }
    }

    /// Short human-readable description, e.g. `fbm(H=0.5)`.
    pub fn label(&self) -> String {
        match *self {
            CovarianceModel::Fbm { hurst } => format!("fbm(H={hurst})"),
            CovarianceModel::PerturbedFbm { hurst, sigma, ell } => {
                format!("perturbed_fbm(H={hurst},sigma={sigma},ell={ell})")
            }
        }
    }

    pub fn variogram(&self, h: f64) -> Result<f64> {
        if !(h >= 0.0) {
            return invalid(format!("variogram lag must be >= 0, got {h}"));
        }
        Ok(self.nu(h))
    }

    pub(crate) fn nu(&self, h: f64) -> f64 {
        if h == 0.0 {
            return 0.0;
        }
        match *self {
            CovarianceModel::Fbm { hurst } => h.powf(2.0 * hurst),
            CovarianceModel::PerturbedFbm { hurst, sigma, ell } => {
                let r = h / ell;
                h.powf(2.0 * hurst) + sigma * sigma * -(-r * r).exp_m1()
            }
        }
    }

    pub fn covariance(&self, t: &Point, s: &Point) -> f64 {
        0.5 * (self.nu(t.norm()) + self.nu(s.norm()) - self.nu(t.distance(s)))
    }

    /// Gram matrix on distinct points, gated on positive semidefiniteness.
    pub fn gram(&self, points: &[Point]) -> Result<GramMatrix> {
        check_distinct(points)?;
        let n = points.len();
        let norms: Vec<f64> = points.iter().map(|p| self.nu(p.norm())).collect();
        let mut entries = DMatrix::zeros(n, n);
        for j in 0..n {
            entries[(j, j)] = norms[j];
            for i in j + 1..n {
                let v = 0.5 * (norms[i] + norms[j] - self.nu(points[i].distance(&points[j])));
                entries[(i, j)] = v;
                entries[(j, i)] = v;
            }
        }
        let gram = GramMatrix { points: points.to_vec(), entries, model: *self };
        gram.psd_gate()?;
        Ok(gram)
    }

    /// Scans `ν(h)/h^{2H}` over a radius grid.
    pub fn check_conditions_ab(&self, radii: &[f64]) -> ConditionsReport {
        let two_h = 2.0 * self.hurst();
        let ratios: Vec<(f64, f64)> = radii
            .iter()
            .filter(|&&r| r > 0.0)
            .map(|&r| (r, self.nu(r) / r.powf(two_h)))
            .collect();
        let (k_argmax, k_sup) = ratios
            .iter()
            .copied()
            .fold((f64::NAN, f64::NEG_INFINITY), |acc, (r, v)| if v > acc.1 { (r, v) } else { acc });
        let r_max = ratios.last().map(|p| p.0).unwrap_or(f64::NAN);
        let tail: Vec<f64> = ratios
            .iter()
            .filter(|(r, _)| *r >= r_max / 10.0)
            .map(|p| p.1)
            .collect();
        let c_squared = tail.iter().sum::<f64>() / tail.len() as f64;
        let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tail_spread = (hi - lo) / c_squared;
        let bounded = k_sup.is_finite();
        let stable = tail_spread <= 0.01;
        ConditionsReport {
            k_sup,
            k_argmax,
            c_squared,
            tail_spread,
            bounded,
            stable,
            passed: bounded && stable,
        }
    }
}

/// Log-spaced radii from 1e-3 to 1e3, ten per decade.
pub fn default_radii() -> Vec<f64> {
    (0..=60).map(|i| 10f64.powf(-3.0 + i as f64 / 10.0)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionsReport {
    /// `sup ν(h)/h^{2H}` over the grid.
    pub k_sup: f64,
    pub k_argmax: f64,
    /// Mean of the ratio over the last decade.
    pub c_squared: f64,
    /// `(max − min)/mean` of the ratio over the last decade.
    pub tail_spread: f64,
    pub bounded: bool,
    pub stable: bool,
    pub passed: bool,
}

fn check_distinct(points: &[Point]) -> Result<()> {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        // +0.0 so that -0.0 and 0.0 collide
        let key: Vec<u64> = p.0.iter().map(|x| (x + 0.0).to_bits()).collect();
        if let Some(&first) = seen.get(&key) {
            return Err(Error::DuplicatePoint { first, second: i });
        }
        seen.insert(key, i);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub points: Vec<Point>,
    pub entries: DMatrix<f64>,
    pub model: CovarianceModel,
}

impl GramMatrix {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        SymmetricEigen::new(self.entries.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `λ_min ≥ −tol·trace` iff `G + tol·trace·I` admits a Cholesky factor.
    fn psd_gate(&self) -> Result<()> {
        let tr = self.trace();
        if tr == 0.0 {
            return if self.entries.iter().all(|&x| x == 0.0) {
                Ok(())
            } else {
                Err(Error::NotPositiveSemidefinite { tolerance: 0.0 })
            };
        }
        let shift = PSD_TOLERANCE * tr;
        let mut m = self.entries.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
        match Cholesky::new(m) {
            Some(_) => Ok(()),
            None => Err(Error::NotPositiveSemidefinite { tolerance: shift }),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for i in 0..self.len() {
            w.write_record(self.entries.row(i).iter().map(|x| format!("{x:.17e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}
