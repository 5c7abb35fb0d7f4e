//! Convex domains touching the origin and their integer points.
//!
//! Every domain lies in the half-space `t⁽¹⁾ ≥ 0` and is tangent to the
//! hyperplane `{t⁽¹⁾ = 0}` at the origin. Domains are closed: boundary points
//! count as members, so the origin is always a lattice point of the domain.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Result};

/// Relative slack on the defining inequality of a domain.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// A point of `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn origin(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Point {
        Point(self.0.iter().map(|x| x * factor).collect())
    }
}

/// A point of `Z^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint(pub Vec<i64>);

impl LatticePoint {
    pub fn origin(dim: usize) -> Self {
        LatticePoint(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }

    /// `max_α |t^(α)|`.
    pub fn sup_norm(&self) -> i64 {
        self.0.iter().map(|x| x.abs()).max().unwrap_or(0)
    }

    pub fn sup_distance(&self, other: &LatticePoint) -> i64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .max()
            .unwrap_or(0)
    }

    pub fn add(&self, other: &LatticePoint) -> LatticePoint {
        LatticePoint(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &LatticePoint) -> LatticePoint {
        LatticePoint(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// Real point with coordinates multiplied by `spacing`.
    pub fn to_point(&self, spacing: f64) -> Point {
        Point(self.0.iter().map(|&x| x as f64 * spacing).collect())
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    /// Ball of the given radius centred at `radius · e₁`.
    TangentBall { radius: f64 },
    /// Cube `[0, 2h] × [−h, h]^{d−1}`.
    TangentCube { half_width: f64 },
}

impl DomainKind {
    fn size(&self) -> f64 {
        match *self {
            DomainKind::TangentBall { radius } => radius,
            DomainKind::TangentCube { half_width } => half_width,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DomainKind::TangentBall { .. } => "ball",
            DomainKind::TangentCube { .. } => "cube",
        }
    }
}

/// A closed domain `T·Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
    pub dim: usize,
    pub scale: f64,
}

/// Builds the unscaled domain (`T = 1`).
pub fn make_domain(kind: DomainKind, dim: usize) -> Result<Domain> {
    if dim == 0 {
        return invalid("dimension must be >= 1");
    }
    let size = kind.size();
    if !(size > 0.0 && size.is_finite()) {
        return invalid(format!("domain size must be positive and finite, got {size}"));
    }
    Ok(Domain { kind, dim, scale: 1.0 })
}

impl Domain {
    pub fn ball(dim: usize, radius: f64) -> Result<Domain> {
        make_domain(DomainKind::TangentBall { radius }, dim)
    }

    pub fn cube(dim: usize, half_width: f64) -> Result<Domain> {
        make_domain(DomainKind::TangentCube { half_width }, dim)
    }

    /// Dilation about the origin.
    pub fn scale(&self, t: f64) -> Result<Domain> {
        if !(t > 0.0 && t.is_finite()) {
            return invalid(format!("scale must be positive and finite, got {t}"));
        }
        Ok(Domain { scale: self.scale * t, ..*self })
    }

    /// Radius or half-width after scaling.
    pub fn extent(&self) -> f64 {
        self.kind.size() * self.scale
    }

    pub fn center(&self) -> Point {
        let mut c = vec![0.0; self.dim];
        c[0] = self.extent();
        Point(c)
    }

    pub fn contains(&self, p: &Point) -> bool {
        debug_assert_eq!(p.dim(), self.dim);
        let r = self.extent();
        match self.kind {
            DomainKind::TangentBall { .. } => {
                let mut sq = (p.0[0] - r) * (p.0[0] - r);
                for x in &p.0[1..] {
                    sq += x * x;
                }
                sq - r * r <= BOUNDARY_TOLERANCE * (r * r).max(1.0)
            }
            DomainKind::TangentCube { .. } => {
                let slack = BOUNDARY_TOLERANCE * r.max(1.0);
                (p.0[0] - r).abs() - r <= slack && p.0[1..].iter().all(|x| x.abs() - r <= slack)
            }
        }
    }

    pub fn contains_lattice(&self, p: &LatticePoint) -> bool {
        self.contains(&p.to_point(1.0))
    }

    /// Lebesgue volume.
    pub fn volume(&self) -> f64 {
        let r = self.extent();
        let d = self.dim as f64;
        match self.kind {
            DomainKind::TangentBall { .. } => PI.powf(d / 2.0) / gamma(d / 2.0 + 1.0) * r.powf(d),
            DomainKind::TangentCube { .. } => (2.0 * r).powf(d),
        }
    }

    /// Integer points of the closed domain in lexicographic order.
    pub fn lattice_points(&self) -> Vec<LatticePoint> {
        let r = self.extent();
        let slack = BOUNDARY_TOLERANCE * r.max(1.0);
        let hi = (r + slack).floor() as i64;
        let mut lo = vec![-hi; self.dim];
        let mut up = vec![hi; self.dim];
        lo[0] = 0;
        up[0] = (2.0 * r + 2.0 * slack).floor() as i64;
        box_points(&lo, &up)
            .into_iter()
            .filter(|p| self.contains_lattice(p))
            .collect()
    }

    /// Inscribed tangent ball and circumscribed tangent cube.
    pub fn sandwich(&self) -> Result<(Domain, Domain)> {
        let size = self.kind.size();
        let ball = Domain { kind: DomainKind::TangentBall { radius: size }, ..*self };
        let cube = Domain { kind: DomainKind::TangentCube { half_width: size }, ..*self };
        Ok((ball, cube))
    }
}

/// All integer points of the box `∏ [lo_α, hi_α]`, lexicographic.
pub fn box_points(lo: &[i64], hi: &[i64]) -> Vec<LatticePoint> {
    let dim = lo.len();
    if lo.iter().zip(hi).any(|(a, b)| a > b) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut cur = lo.to_vec();
    loop {
        out.push(LatticePoint(cur.clone()));
        let mut axis = dim;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            if cur[axis] < hi[axis] {
                cur[axis] += 1;
                cur[axis + 1..].copy_from_slice(&lo[axis + 1..]);
                break;
            }
        }
    }
}

/// Integer points of the closed Euclidean ball of radius `radius` centred at 0.
pub fn centered_ball_lattice(dim: usize, radius: f64) -> Vec<LatticePoint> {
    let hi = (radius * (1.0 + BOUNDARY_TOLERANCE)).floor() as i64;
    let r2 = radius * radius * (1.0 + BOUNDARY_TOLERANCE);
    box_points(&vec![-hi; dim], &vec![hi; dim])
        .into_iter()
        .filter(|p| p.0.iter().map(|&x| (x * x) as f64).sum::<f64>() <= r2)
        .collect()
}

/// One row per point, integer coordinates.
pub fn write_lattice_csv<W: Write>(points: &[LatticePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(first) = points.first() {
        let header: Vec<String> = (1..=first.dim()).map(|a| format!("t{a}")).collect();
        w.write_record(&header)?;
    }
    for p in points {
        w.write_record(p.0.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
