//! Monte Carlo persistence probabilities, expected maxima and exponent fits.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::covmodel::CovarianceModel;
use crate::curve::EnumerationCurve;
use crate::error::{invalid, Error, Result};
use crate::geometry::{Domain, LatticePoint, Point};
use crate::sampler::FieldSampler;
use crate::stats::{MeanEstimate, Proportion};

pub const DEFAULT_POINT_CAP: usize = 20_000;
pub const MIN_REALIZATIONS: usize = 100;

/// Net spacing `δ = 1/subdivisions`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mesh {
    pub subdivisions: u32,
}

impl Mesh {
    pub const LATTICE: Mesh = Mesh { subdivisions: 1 };

    pub fn refined(subdivisions: u32) -> Result<Mesh> {
        if subdivisions == 0 {
            return invalid("mesh subdivisions must be >= 1");
        }
        Ok(Mesh { subdivisions })
    }

    /// Accepts `δ ∈ (0, 1]` with `1/δ` an integer.
    pub fn from_spacing(delta: f64) -> Result<Mesh> {
        if !(delta > 0.0 && delta <= 1.0) {
            return invalid(format!("mesh spacing must lie in (0, 1], got {delta}"));
        }
        let m = (1.0 / delta).round();
        if ((1.0 / delta) - m).abs() > 1e-9 * m {
            return invalid(format!("mesh spacing {delta} is not 1/m for an integer m"));
        }
        Mesh::refined(m as u32)
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.subdivisions as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    /// Worker threads; 0 uses the ambient rayon pool.
    pub workers: usize,
    pub point_cap: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { workers: 0, point_cap: DEFAULT_POINT_CAP }
    }
}

/// Net points of `TΔ` on `δZ^d`, as integer multiples of `δ`.
pub fn net_lattice(domain: &Domain, t: f64, mesh: Mesh) -> Result<Vec<LatticePoint>> {
    Ok(domain.scale(t * mesh.subdivisions as f64)?.lattice_points())
}

pub fn net_points(domain: &Domain, t: f64, mesh: Mesh, cap: usize) -> Result<Vec<Point>> {
    let lattice = net_lattice(domain, t, mesh)?;
    if lattice.len() > cap {
        return Err(Error::PointCapExceeded { count: lattice.len(), cap });
    }
    Ok(lattice.iter().map(|p| p.to_point(mesh.spacing())).collect())
}

/// Non-exceedance: strict `max < barrier`, except `max ≤ 0` at barrier 0.
pub fn below_barrier(max: f64, barrier: f64) -> bool {
    if barrier == 0.0 {
        max <= 0.0
    } else {
        max < barrier
    }
}

fn check_count(count: usize) -> Result<()> {
    if count < MIN_REALIZATIONS {
        return invalid(format!("need at least {MIN_REALIZATIONS} realizations, got {count}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct PersistenceEstimate {
    pub model: CovarianceModel,
    pub domain: Domain,
    pub t: f64,
    pub barrier: f64,
    pub mesh: Mesh,
    pub n_points: usize,
    pub seed: u64,
    pub estimate: Proportion,
}

impl PersistenceEstimate {
    pub fn p(&self) -> f64 {
        self.estimate.p
    }

    pub fn stderr(&self) -> f64 {
        self.estimate.stderr
    }

    pub fn scale_point(&self) -> ScalePoint {
        ScalePoint { t: self.t, p: self.estimate.p, stderr: self.estimate.stderr }
    }
}

/// Per-realization maxima over the `δ`-net of `TΔ`.
pub fn sample_net_maxima(
    model: &CovarianceModel,
    domain: &Domain,
    t: f64,
    mesh: Mesh,
    seed: u64,
    count: usize,
    opts: McOptions,
) -> Result<(usize, Vec<f64>)> {
    let points = net_points(domain, t, mesh, opts.point_cap)?;
    let n = points.len();
    let sampler = FieldSampler::new(model, points)?;
    let all: Vec<usize> = (0..n).collect();
    Ok((n, sampler.sample_max(seed, count, opts.workers, &all)?))
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_p(
    model: &CovarianceModel,
    domain: &Domain,
    t: f64,
    barrier: f64,
    mesh: Mesh,
    seed: u64,
    count: usize,
    opts: McOptions,
) -> Result<PersistenceEstimate> {
    check_count(count)?;
    let (n_points, maxima) = sample_net_maxima(model, domain, t, mesh, seed, count, opts)?;
    let hits = maxima.iter().filter(|&&m| below_barrier(m, barrier)).count() as u64;
    Ok(PersistenceEstimate {
        model: *model,
        domain: *domain,
        t,
        barrier,
        mesh,
        n_points,
        seed,
        estimate: Proportion::new(hits, count as u64),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxEstimate {
    pub t: f64,
    pub mesh: Mesh,
    pub n_points: usize,
    pub seed: u64,
    pub estimate: MeanEstimate,
}

pub fn estimate_em(
    model: &CovarianceModel,
    domain: &Domain,
    t: f64,
    mesh: Mesh,
    seed: u64,
    count: usize,
    opts: McOptions,
) -> Result<MaxEstimate> {
    check_count(count)?;
    let (n_points, maxima) = sample_net_maxima(model, domain, t, mesh, seed, count, opts)?;
    Ok(MaxEstimate { t, mesh, n_points, seed, estimate: MeanEstimate::from_samples(&maxima) })
}

/// `(T, p̂, stderr)` input of an exponent fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalePoint {
    pub t: f64,
    pub p: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentFit {
    pub points: Vec<ScalePoint>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// `1/Var(log p̂) = (p̂/stderr)²`; all ones when every input is exact.
    pub weights: Vec<f64>,
}

/// Weighted least squares of `log p̂` on `log T`.
pub fn fit_exponent(points: &[ScalePoint]) -> Result<ExponentFit> {
    let mut ts: Vec<f64> = points.iter().map(|p| p.t).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    if ts.len() < 3 {
        return Err(Error::TooFewScales(ts.len()));
    }
    if let Some(z) = points.iter().find(|p| !(p.p > 0.0)) {
        return Err(Error::ZeroProbability { t: z.t });
    }
    let exact = points.iter().all(|p| p.stderr == 0.0);
    if !exact && points.iter().any(|p| !(p.stderr > 0.0)) {
        return invalid("mixing exact and estimated probabilities in one fit");
    }
    let weights: Vec<f64> = points
        .iter()
        .map(|p| if exact { 1.0 } else { (p.p / p.stderr).powi(2) })
        .collect();
    let x: Vec<f64> = points.iter().map(|p| p.t.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.p.ln()).collect();
    let sw: f64 = weights.iter().sum();
    let xm = weights.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = weights.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..points.len() {
        sxx += weights[i] * (x[i] - xm) * (x[i] - xm);
        sxy += weights[i] * (x[i] - xm) * (y[i] - ym);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let slope_stderr = if exact {
        let rss: f64 = x.iter().zip(&y).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (points.len() - 2) as f64 / sxx).sqrt()
    } else {
        (1.0 / sxx).sqrt()
    };
    Ok(ExponentFit { points: points.to_vec(), slope, intercept, slope_stderr, weights })
}

impl ExponentFit {
    /// Columns: `log_t, log_p, weight`.
    pub fn write_plot_data<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["log_t", "log_p", "weight"])?;
        for (p, wt) in self.points.iter().zip(&self.weights) {
            w.write_record([p.t.ln().to_string(), p.p.ln().to_string(), wt.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `P(ξ_i ≥ M_i)`: the curve point `t_i` holds the running maximum over the
/// first `i + 1` curve points.
pub fn record_prob(
    model: &CovarianceModel,
    curve: &EnumerationCurve,
    i: usize,
    seed: u64,
    count: usize,
    opts: McOptions,
) -> Result<Proportion> {
    if i >= curve.len() {
        return Err(Error::IndexOutOfRange { index: i, len: curve.len() });
    }
    if !curve.entries[i].first_visit {
        return invalid(format!("curve index {i} is a revisit"));
    }
    check_count(count)?;
    let prefix = curve.distinct_prefix(i);
    if prefix.len() > opts.point_cap {
        return Err(Error::PointCapExceeded { count: prefix.len(), cap: opts.point_cap });
    }
    let last = prefix.len() - 1;
    let points: Vec<Point> = prefix.iter().map(|p| p.to_point(1.0)).collect();
    let sampler = FieldSampler::new(model, points)?;
    let flags = sampler.map_realizations(seed, count, opts.workers, |_, v| {
        v[last] >= v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    })?;
    let hits = flags.iter().filter(|&&f| f).count() as u64;
    Ok(Proportion::new(hits, count as u64))
}

/// `P(max over {0} ∪ offsets ≤ 0)` for a set of lattice offsets.
pub fn box_persistence(
    model: &CovarianceModel,
    offsets: &[LatticePoint],
    seed: u64,
    count: usize,
    opts: McOptions,
) -> Result<Proportion> {
    let Some(first) = offsets.first() else {
        return Ok(Proportion::new(count as u64, count as u64));
    };
    let mut points = vec![Point::origin(first.dim())];
    points.extend(offsets.iter().filter(|o| !o.is_origin()).map(|o| o.to_point(1.0)));
    if points.len() > opts.point_cap {
        return Err(Error::PointCapExceeded { count: points.len(), cap: opts.point_cap });
    }
    let n = points.len();
    let sampler = FieldSampler::new(model, points)?;
    let all: Vec<usize> = (0..n).collect();
    let maxima = sampler.sample_max(seed, count, opts.workers, &all)?;
    let hits = maxima.iter().filter(|&&m| m <= 0.0).count() as u64;
    Ok(Proportion::new(hits, count as u64))
}

#[derive(Debug, Serialize)]
struct EstimateRow<'a> {
    model: &'a str,
    d: usize,
    hurst: f64,
    domain: &'a str,
    size: f64,
    t: f64,
    delta: f64,
    barrier: f64,
    n_points: usize,
    n: u64,
    hits: u64,
    p: f64,
    stderr: f64,
    ci_low: f64,
    ci_high: f64,
    seed: u64,
}

/// One CSV row per estimate.
pub fn write_estimates_csv<W: Write>(estimates: &[PersistenceEstimate], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in estimates {
        w.serialize(EstimateRow {
            model: e.model.name(),
            d: e.domain.dim,
            hurst: e.model.hurst(),
            domain: e.domain.kind.name(),
            size: e.domain.extent(),
            t: e.t,
            delta: e.mesh.spacing(),
            barrier: e.barrier,
            n_points: e.n_points,
            n: e.estimate.count,
            hits: e.estimate.hits,
            p: e.estimate.p,
            stderr: e.estimate.stderr,
            ci_low: e.estimate.ci_low,
            ci_high: e.estimate.ci_high,
            seed: e.seed,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::build_curve;

    #[test]
    fn mesh_parsing() {
        assert_eq!(Mesh::from_spacing(0.25).unwrap().subdivisions, 4);
        assert_eq!(Mesh::from_spacing(1.0).unwrap(), Mesh::LATTICE);
        assert!(Mesh::from_spacing(0.3).is_err());
        assert!(Mesh::from_spacing(2.0).is_err());
        assert!(Mesh::from_spacing(0.0).is_err());
    }

    #[test]
    fn origin_only_net_always_persists() {
        let m = CovarianceModel::fbm(0.5).unwrap();
        let dom = Domain::cube(2, 1.0).unwrap();
        let e = estimate_p(&m, &dom, 0.4, 1.0, Mesh::LATTICE, 1, 200, McOptions::default()).unwrap();
        assert_eq!(e.n_points, 1);
        assert_eq!(e.p(), 1.0);
        let em = estimate_em(&m, &dom, 0.4, Mesh::LATTICE, 1, 200, McOptions::default()).unwrap();
        assert_eq!(em.estimate.mean, 0.0);
    }

    #[test]
    fn point_cap_enforced() {
        let m = CovarianceModel::fbm(0.5).unwrap();
        let dom = Domain::cube(2, 1.0).unwrap();
        let opts = McOptions { workers: 0, point_cap: 50 };
        let err = estimate_p(&m, &dom, 8.0, 1.0, Mesh::LATTICE, 1, 200, opts).unwrap_err();
        assert!(matches!(err, Error::PointCapExceeded { count: 289, cap: 50 }));
    }

    #[test]
    fn too_few_realizations() {
        let m = CovarianceModel::fbm(0.5).unwrap();
        let dom = Domain::cube(1, 1.0).unwrap();
        assert!(estimate_p(&m, &dom, 4.0, 1.0, Mesh::LATTICE, 1, 99, McOptions::default()).is_err());
    }

    #[test]
    fn barrier_monotone_per_seed() {
        let m = CovarianceModel::fbm(0.7).unwrap();
        let dom = Domain::ball(2, 1.0).unwrap();
        let lo = estimate_p(&m, &dom, 3.0, 0.5, Mesh::LATTICE, 9, 2000, McOptions::default()).unwrap();
        let hi = estimate_p(&m, &dom, 3.0, 1.0, Mesh::LATTICE, 9, 2000, McOptions::default()).unwrap();
        assert!(lo.estimate.hits <= hi.estimate.hits);
    }

    #[test]
    fn perfect_power_law() {
        let pts: Vec<ScalePoint> = [4.0f64, 8.0, 16.0]
            .iter()
            .map(|&t| ScalePoint { t, p: t.powf(-1.5), stderr: 0.0 })
            .collect();
        let fit = fit_exponent(&pts).unwrap();
        assert!((fit.slope + 1.5).abs() < 1e-12);
        assert!(fit.slope_stderr < 1e-10);
    }

    #[test]
    fn constant_probability_has_zero_slope() {
        let pts: Vec<ScalePoint> =
            [4.0, 8.0, 16.0, 32.0].iter().map(|&t| ScalePoint { t, p: 0.3, stderr: 0.01 }).collect();
        let fit = fit_exponent(&pts).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }

    #[test]
    fn brownian_closed_form_slope() {
        let pts: Vec<ScalePoint> = [8.0, 16.0, 32.0, 64.0, 128.0]
            .iter()
            .map(|&t| ScalePoint { t, p: crate::stats::brownian_persistence(t), stderr: 0.0 })
            .collect();
        let fit = fit_exponent(&pts).unwrap();
        assert!(fit.slope >= -0.58 && fit.slope <= -0.42, "slope {}", fit.slope);
    }

    #[test]
    fn fit_errors() {
        let two = [ScalePoint { t: 4.0, p: 0.1, stderr: 0.0 }, ScalePoint { t: 8.0, p: 0.05, stderr: 0.0 }];
        assert!(matches!(fit_exponent(&two), Err(Error::TooFewScales(2))));
        let zero = [
            ScalePoint { t: 4.0, p: 0.1, stderr: 0.01 },
            ScalePoint { t: 8.0, p: 0.05, stderr: 0.01 },
            ScalePoint { t: 16.0, p: 0.0, stderr: 0.0 },
        ];
        assert!(matches!(fit_exponent(&zero), Err(Error::ZeroProbability { .. })));
    }

    #[test]
    fn record_prob_first_point_is_half() {
        let m = CovarianceModel::fbm(0.4).unwrap();
        let c = build_curve(2, 1, 1.0, 3).unwrap();
        let r = record_prob(&m, &c, 1, 3, 20_000, McOptions::default()).unwrap();
        assert!((r.p - 0.5).abs() < 3.0 * r.stderr, "{r:?}");
        assert!(record_prob(&m, &c, c.len(), 3, 200, McOptions::default()).is_err());
    }

    #[test]
    fn csv_row_per_estimate() {
        let m = CovarianceModel::fbm(0.5).unwrap();
        let dom = Domain::cube(1, 1.0).unwrap();
        let e = estimate_p(&m, &dom, 2.0, 1.0, Mesh::LATTICE, 1, 100, McOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_estimates_csv(&[e.clone(), e], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 3);
        assert!(s.starts_with("model,d,hurst,domain,size,t,delta,barrier,n_points,n,hits,p,stderr,ci_low,ci_high,seed"));
    }
}
