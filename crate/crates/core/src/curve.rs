//! Shell-ordered enumeration of `Z^d`.
//!
//! The curve `i ↦ t_i` starts at the origin and first-visits the sup-norm
//! shells `S_n = {|t| = n}` in increasing order of `n`. Each shell is split
//! into the face bulk `S_n²` (points whose distance to the centre of their
//! face, measured inside the face, is at most `n(1 − 1/L_n)`) and the edge
//! band `S_n¹ = S_n \ S_n²`. Within a shell the band is first-visited before
//! the bulk; the bulk is covered face by face in serpentine order.
//!
//! Consecutive points are at sup-distance between 1 and `L`. Jumps between
//! disconnected pieces are bridged by connectors that walk back through
//! already-visited points, so every revisit is a record-free step of the
//! record functional.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{box_points, LatticePoint};

/// Curve length per lattice point of the covered cube tolerated by
/// [`validate_curve`].
pub const MAX_LENGTH_RATIO: f64 = 8.0;

/// `L_n = max(1.5, ln(n + 2)^ε)`.
pub fn schedule_ln(n: u64, eps: f64) -> f64 {
    1.5f64.max(((n + 2) as f64).ln().powf(eps))
}

/// `ρ_n = n / L_n`.
pub fn rho(n: u64, eps: f64) -> f64 {
    n as f64 / schedule_ln(n, eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZoneSpec {
    pub level: u64,
    pub l_n: f64,
    pub eps: f64,
    pub rho: f64,
}

impl ZoneSpec {
    pub fn new(level: u64, eps: f64) -> Result<Self> {
        if level == 0 {
            return invalid("zone spec needs level >= 1");
        }
        if !(eps > 0.0) {
            return invalid(format!("schedule exponent must be > 0, got {eps}"));
        }
        let l_n = schedule_ln(level, eps);
        Ok(ZoneSpec { level, l_n, eps, rho: level as f64 / l_n })
    }

    /// Largest in-face distance from the face centre that still belongs to the bulk.
    pub fn bulk_radius(&self) -> f64 {
        self.level as f64 * (1.0 - 1.0 / self.l_n)
    }
}

/// A face `{t^(axis) = ±n}` of the shell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Face {
    pub axis: usize,
    pub positive: bool,
}

impl Face {
    pub fn center(&self, level: u64, dim: usize) -> LatticePoint {
        let mut c = vec![0; dim];
        c[self.axis] = if self.positive { level as i64 } else { -(level as i64) };
        LatticePoint(c)
    }

    /// Faces in construction order: `+e₁, −e₁, +e₂, −e₂, …`.
    pub fn all(dim: usize) -> Vec<Face> {
        (0..dim)
            .flat_map(|axis| [Face { axis, positive: true }, Face { axis, positive: false }])
            .collect()
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}e{}", if self.positive { '+' } else { '-' }, self.axis + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Zone {
    /// `S_n¹`, visited first.
    Band,
    /// `S_n²`.
    Bulk,
}

impl Zone {
    pub fn number(&self) -> u8 {
        match self {
            Zone::Band => 1,
            Zone::Bulk => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub level: u64,
    pub face: Face,
    pub zone: Zone,
    /// Sup-distance from the face centre within the face.
    pub face_distance: i64,
}

/// Level, face and zone of a non-origin lattice point. Edge and corner points
/// belong to the face of their smallest saturated axis.
pub fn classify(p: &LatticePoint, eps: f64) -> Result<Classification> {
    if p.is_origin() {
        return invalid("the origin has no level");
    }
    let n = p.sup_norm();
    let axis = p.0.iter().position(|x| x.abs() == n).expect("sup norm is attained");
    let face = Face { axis, positive: p.0[axis] > 0 };
    let face_distance = p
        .0
        .iter()
        .enumerate()
        .filter(|&(a, _)| a != axis)
        .map(|(_, x)| x.abs())
        .max()
        .unwrap_or(0);
    let spec = ZoneSpec::new(n as u64, eps)?;
    let zone = if face_distance as f64 <= spec.bulk_radius() { Zone::Bulk } else { Zone::Band };
    Ok(Classification { level: n as u64, face, zone, face_distance })
}

/// Offsets `b` such that `t + b` must precede a bulk first visit `t` on
/// `face` at `level`: `[1, 2ρ_n]` inward along the face normal and
/// `[−(ρ_n − 1), ρ_n − 1]` along the other axes. All such points have
/// sup-norm at most `level − 1`.
pub fn shrunken_box(face: Face, level: u64, eps: f64, dim: usize) -> Result<Vec<LatticePoint>> {
    let r = ZoneSpec::new(level, eps)?.rho;
    let depth = (2.0 * r).floor() as i64;
    let half = (r - 1.0).floor() as i64;
    let mut lo = vec![-half; dim];
    let mut hi = vec![half; dim];
    if face.positive {
        lo[face.axis] = -depth;
        hi[face.axis] = -1;
    } else {
        lo[face.axis] = 1;
        hi[face.axis] = depth;
    }
    Ok(box_points(&lo, &hi))
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveEntry {
    pub point: LatticePoint,
    /// Sup-norm; 0 for the origin.
    pub level: u64,
    pub face: Option<Face>,
    pub zone: Option<Zone>,
    pub first_visit: bool,
}

#[derive(Debug, Clone)]
pub struct EnumerationCurve {
    pub dim: usize,
    pub n_max: u64,
    pub step_bound: u32,
    pub eps: f64,
    pub entries: Vec<CurveEntry>,
    first_index: HashMap<LatticePoint, usize>,
}

impl EnumerationCurve {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn point(&self, i: usize) -> &LatticePoint {
        &self.entries[i].point
    }

    pub fn points(&self) -> Vec<LatticePoint> {
        self.entries.iter().map(|e| e.point.clone()).collect()
    }

    pub fn first_index(&self, p: &LatticePoint) -> Option<usize> {
        self.first_index.get(p).copied()
    }

    /// Index of the last first visit of level `n` (`0` for `n = 0`).
    pub fn level_end(&self, n: u64) -> Option<usize> {
        if n == 0 {
            return Some(0);
        }
        self.entries.iter().rposition(|e| e.first_visit && e.level == n)
    }

    /// First-visited points with index `≤ i`, in visiting order.
    pub fn distinct_prefix(&self, i: usize) -> Vec<LatticePoint> {
        self.entries[..=i]
            .iter()
            .filter(|e| e.first_visit)
            .map(|e| e.point.clone())
            .collect()
    }

    /// Whether `probe ∈ D_i = {t_k − t_i : k ≤ i}`.
    pub fn difference_set_contains(&self, i: usize, probe: &LatticePoint) -> Result<bool> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange { index: i, len: self.len() });
        }
        let target = self.point(i).add(probe);
        Ok(self.first_index(&target).is_some_and(|k| k <= i))
    }

    /// Columns: index, coordinates, level, face, zone, first_visit.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string()];
        header.extend((1..=self.dim).map(|a| format!("t{a}")));
        header.extend(["level", "face", "zone", "first_visit"].map(String::from));
        w.write_record(&header)?;
        for (i, e) in self.entries.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(e.point.0.iter().map(|x| x.to_string()));
            rec.push(e.level.to_string());
            rec.push(e.face.map(|f| f.to_string()).unwrap_or_default());
            rec.push(e.zone.map(|z| z.number().to_string()).unwrap_or_default());
            rec.push(u8::from(e.first_visit).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Builder {
    step: i64,
    eps: f64,
    entries: Vec<CurveEntry>,
    first_index: HashMap<LatticePoint, usize>,
}

impl Builder {
    fn current(&self) -> &LatticePoint {
        &self.entries.last().expect("curve starts at the origin").point
    }

    fn push(&mut self, p: LatticePoint) -> Result<()> {
        let first_visit = !self.first_index.contains_key(&p);
        if first_visit {
            self.first_index.insert(p.clone(), self.entries.len());
        }
        let entry = if p.is_origin() {
            CurveEntry { point: p, level: 0, face: None, zone: None, first_visit }
        } else {
            let c = classify(&p, self.eps)?;
            CurveEntry { point: p, level: c.level, face: Some(c.face), zone: Some(c.zone), first_visit }
        };
        self.entries.push(entry);
        Ok(())
    }

    /// Moves to `target` (on shell `level`), through the visited cube
    /// `[−(level−1), level−1]^d` when a direct step is too long.
    fn move_to(&mut self, target: &LatticePoint, level: i64) -> Result<()> {
        let inner = level - 1;
        let inner_target = LatticePoint(target.0.iter().map(|&x| x.clamp(-inner, inner)).collect());
        loop {
            let cur = self.current().clone();
            if cur.sup_distance(target) <= self.step {
                return self.push(target.clone());
            }
            let next = if cur.sup_norm() > inner {
                LatticePoint(cur.0.iter().map(|&x| x.clamp(-inner, inner)).collect())
            } else {
                LatticePoint(
                    cur.0
                        .iter()
                        .zip(&inner_target.0)
                        .map(|(a, b)| a + (b - a).clamp(-self.step, self.step))
                        .collect(),
                )
            };
            debug_assert!(self.first_index.contains_key(&next));
            self.push(next)?;
        }
    }
}

/// Serpentine order of the box `[−a, a]^k`.
fn snake(k: usize, a: i64) -> Vec<Vec<i64>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let inner = snake(k - 1, a);
    let mut out = Vec::with_capacity(inner.len() * (2 * a as usize + 1));
    for (idx, v) in (-a..=a).enumerate() {
        let iter: Box<dyn Iterator<Item = &Vec<i64>>> =
            if idx % 2 == 0 { Box::new(inner.iter()) } else { Box::new(inner.iter().rev()) };
        for rest in iter {
            let mut p = Vec::with_capacity(k);
            p.push(v);
            p.extend_from_slice(rest);
            out.push(p);
        }
    }
    out
}

fn shell_points(dim: usize, n: i64) -> Vec<LatticePoint> {
    box_points(&vec![-n; dim], &vec![n; dim])
        .into_iter()
        .filter(|p| p.sup_norm() == n)
        .collect()
}

pub fn build_curve(dim: usize, n_max: u64, eps: f64, step_bound: u32) -> Result<EnumerationCurve> {
    if dim == 0 {
        return invalid("dimension must be >= 1");
    }
    if n_max == 0 {
        return invalid("n_max must be >= 1");
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return invalid(format!("schedule exponent must be positive, got {eps}"));
    }
    if step_bound < 2 {
        return invalid(format!("step bound must be >= 2, got {step_bound}"));
    }
    let step = step_bound as i64;
    let mut b = Builder { step, eps, entries: Vec::new(), first_index: HashMap::new() };
    b.push(LatticePoint::origin(dim))?;

    let mut offsets: Vec<LatticePoint> = box_points(&vec![-step; dim], &vec![step; dim])
        .into_iter()
        .filter(|o| !o.is_origin())
        .collect();
    offsets.sort_by_key(|o| (o.sup_norm(), o.clone()));

    for n in 1..=n_max as i64 {
        let spec = ZoneSpec::new(n as u64, eps)?;
        let mut band: HashSet<LatticePoint> = HashSet::new();
        let mut bulk_count = 0usize;
        for p in shell_points(dim, n) {
            match classify(&p, eps)?.zone {
                Zone::Band => {
                    band.insert(p);
                }
                Zone::Bulk => bulk_count += 1,
            }
        }

        // band: greedy nearest neighbour, lexicographic tie-break
        while !band.is_empty() {
            let cur = b.current().clone();
            let local = offsets.iter().map(|o| cur.add(o)).find(|q| band.contains(q));
            let next = match local {
                Some(q) => q,
                None => band
                    .iter()
                    .min_by_key(|q| (q.sup_distance(&cur), (*q).clone()))
                    .cloned()
                    .expect("band is nonempty"),
            };
            band.remove(&next);
            b.move_to(&next, n)?;
        }

        // bulk: face by face, serpentine inside each face
        let a = spec.bulk_radius().floor() as i64;
        let mut visited_bulk = 0usize;
        for face in Face::all(dim) {
            let sign = if face.positive { n } else { -n };
            for rest in snake(dim - 1, a) {
                let mut c = Vec::with_capacity(dim);
                c.extend_from_slice(&rest[..face.axis]);
                c.push(sign);
                c.extend_from_slice(&rest[face.axis..]);
                let p = LatticePoint(c);
                debug_assert_eq!(classify(&p, eps)?.zone, Zone::Bulk);
                b.move_to(&p, n)?;
                visited_bulk += 1;
            }
        }
        debug_assert_eq!(visited_bulk, bulk_count);
    }

    let curve = EnumerationCurve {
        dim,
        n_max,
        step_bound,
        eps,
        entries: b.entries,
        first_index: b.first_index,
    };
    if curve
        .entries
        .windows(2)
        .any(|w| w[0].point.sup_distance(&w[1].point) > step)
    {
        return Err(Error::StepBound(step_bound));
    }
    Ok(curve)
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub first_violation: Option<usize>,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, first_violation: Option<usize>, detail: String) -> Self {
        CheckResult { name: name.into(), passed: first_violation.is_none(), first_violation, detail }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveReport {
    pub dim: usize,
    pub n_max: u64,
    pub length: usize,
    pub lattice_count: usize,
    /// `length / (2 n_max + 1)^d`.
    pub length_ratio: f64,
    pub checks: Vec<CheckResult>,
}

impl CurveReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for CurveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "curve d={} n_max={} length={} lattice={} ratio={:.3}",
            self.dim, self.n_max, self.length, self.lattice_count, self.length_ratio
        )?;
        for c in &self.checks {
            let at = c.first_violation.map(|i| format!(" at index {i}")).unwrap_or_default();
            writeln!(f, "  {:<28} {}{}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, at, c.detail)?;
        }
        Ok(())
    }
}

pub fn validate_curve(curve: &EnumerationCurve) -> CurveReport {
    validate_sequence(&curve.points(), curve.dim, curve.n_max, curve.eps, curve.step_bound)
}

/// Checks an arbitrary point sequence against the enumeration invariants.
/// Zones are recomputed from the points themselves.
pub fn validate_sequence(points: &[LatticePoint], dim: usize, n_max: u64, eps: f64, step_bound: u32) -> CurveReport {
    let lattice_count = (2 * n_max as usize + 1).pow(dim as u32);
    let mut checks = Vec::new();

    let bad_start = match points.first() {
        Some(p) if p.is_origin() => None,
        _ => Some(0),
    };
    checks.push(CheckResult::new("starts_at_origin", bad_start, String::new()));

    let step = step_bound as i64;
    let bad_step = points
        .windows(2)
        .position(|w| {
            let s = w[0].sup_distance(&w[1]);
            !(1..=step).contains(&s)
        })
        .map(|i| i + 1);
    let detail = bad_step
        .map(|i| format!("|t_{} - t_{}| = {}", i - 1, i, points[i - 1].sup_distance(&points[i])))
        .unwrap_or_default();
    checks.push(CheckResult::new("step_bound", bad_step, detail));

    let mut first: HashMap<&LatticePoint, usize> = HashMap::new();
    let mut first_visits: Vec<usize> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if !first.contains_key(p) {
            first.insert(p, i);
            first_visits.push(i);
        }
    }

    let nm = n_max as i64;
    let missing = box_points(&vec![-nm; dim], &vec![nm; dim])
        .into_iter()
        .find(|p| !first.contains_key(p));
    let detail = missing.as_ref().map(|p| format!("{p} never visited")).unwrap_or_default();
    let onto = CheckResult {
        name: "onto".into(),
        passed: missing.is_none(),
        first_violation: None,
        detail,
    };
    checks.push(onto);

    let mut classes: HashMap<usize, Classification> = HashMap::new();
    for &i in &first_visits {
        if !points[i].is_origin() {
            if let Ok(c) = classify(&points[i], eps) {
                classes.insert(i, c);
            }
        }
    }
    let level_of = |i: usize| classes.get(&i).map(|c| c.level).unwrap_or(0);

    let bad_level = first_visits
        .windows(2)
        .find(|w| level_of(w[1]) < level_of(w[0]))
        .map(|w| w[1]);
    let detail = bad_level
        .map(|i| format!("{} (level {}) first-visited after a deeper level", points[i], level_of(i)))
        .unwrap_or_default();
    checks.push(CheckResult::new("first_visit_level_order", bad_level, detail));

    let mut bulk_started: HashSet<u64> = HashSet::new();
    let mut bad_zone = None;
    for &i in &first_visits {
        if let Some(c) = classes.get(&i) {
            match c.zone {
                Zone::Bulk => {
                    bulk_started.insert(c.level);
                }
                Zone::Band if bulk_started.contains(&c.level) => {
                    bad_zone = Some(i);
                    break;
                }
                Zone::Band => {}
            }
        }
    }
    let detail = bad_zone
        .map(|i| format!("band point {} after bulk of its level", points[i]))
        .unwrap_or_default();
    checks.push(CheckResult::new("band_before_bulk", bad_zone, detail));

    let mut boxes: HashMap<(Face, u64), Vec<LatticePoint>> = HashMap::new();
    let mut bad_box = None;
    let mut box_detail = String::new();
    let mut n_boxes = 0usize;
    'outer: for &i in &first_visits {
        let Some(c) = classes.get(&i) else { continue };
        if c.zone != Zone::Bulk {
            continue;
        }
        n_boxes += 1;
        let offsets = boxes
            .entry((c.face, c.level))
            .or_insert_with(|| shrunken_box(c.face, c.level, eps, dim).unwrap_or_default());
        for o in offsets.iter() {
            let q = points[i].add(o);
            if !first.get(&q).is_some_and(|&k| k < i) {
                bad_box = Some(i);
                box_detail = format!("{q} not visited before bulk point {}", points[i]);
                break 'outer;
            }
        }
    }
    if bad_box.is_none() {
        box_detail = format!("{n_boxes} bulk first visits checked");
    }
    checks.push(CheckResult::new("shrunken_box_containment", bad_box, box_detail));

    let length_ratio = points.len() as f64 / lattice_count as f64;
    let ratio_bad = (length_ratio > MAX_LENGTH_RATIO).then_some(points.len().saturating_sub(1));
    checks.push(CheckResult::new("length_ratio", ratio_bad, format!("{length_ratio:.3}")));

    CurveReport { dim, n_max, length: points.len(), lattice_count, length_ratio, checks }
}
