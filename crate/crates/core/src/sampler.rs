//! Exact sampling of the pinned Gaussian field on finite point sets.
//!
//! Realization `i` of a run with master seed `s` draws its standard normals
//! from a ChaCha8 stream keyed by [`derive_seed`]`(s, i)` (through
//! `SeedableRng::seed_from_u64`), converting each 64-bit output `x` to the
//! uniform `((x >> 11) + 0.5) / 2^53` and then to a normal by the inverse CDF.
//! The field values are `L z` where `L` is the lower Cholesky factor of the
//! Gram matrix restricted to the non-origin points; the origin is reinstated
//! as an exact zero. Realizations are processed in fixed blocks of
//! [`BLOCK_SIZE`], so results do not depend on the number of worker threads.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix};
use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::covmodel::{CovarianceModel, GramMatrix};
use crate::error::{invalid, Error, Result};
use crate::geometry::Point;
use crate::stats::normal_quantile;

/// Realizations generated per work item.
pub const BLOCK_SIZE: usize = 256;

/// Jitter levels tried in order, as multiples of the trace.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-realization stream seed: `mix64(master ^ mix64(index + γ))` with
/// `γ = 0x9E3779B97F4A7C15`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_add(GOLDEN_GAMMA)))
}

/// Independent master seed for a labelled sub-experiment.
pub fn split_seed(master: u64, label: u64) -> u64 {
    derive_seed(mix64(master.wrapping_add(0x5EED)), label)
}

/// Standard normals drawn by inversion from one realization's stream.
pub struct NormalStream(ChaCha8Rng);

impl NormalStream {
    pub fn new(master: u64, index: u64) -> Self {
        NormalStream(ChaCha8Rng::seed_from_u64(derive_seed(master, index)))
    }

    pub fn next_uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        normal_quantile(self.next_uniform())
    }
}

/// Lower Cholesky factor of the Gram matrix without the origin.
#[derive(Debug, Clone)]
pub struct Factorization {
    /// `m × m` lower-triangular factor.
    pub factor: DMatrix<f64>,
    /// Positions of the factored points within the full point list.
    pub active: Vec<usize>,
    pub n_points: usize,
    /// Absolute diagonal jitter that made the factorization succeed.
    pub jitter: f64,
}

pub fn factorize(gram: &GramMatrix) -> Result<Factorization> {
    let active: Vec<usize> = (0..gram.len()).filter(|&i| !gram.points[i].is_origin()).collect();
    let m = active.len();
    let sub = DMatrix::from_fn(m, m, |i, j| gram.entries[(active[i], active[j])]);
    let trace = sub.trace();
    for level in JITTER_LADDER {
        let jitter = level * trace;
        let mut a = sub.clone();
        for i in 0..m {
            a[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(a) {
            return Ok(Factorization { factor: ch.unpack(), active, n_points: gram.len(), jitter });
        }
    }
    Err(Error::FactorizationFailed { max_jitter: JITTER_LADDER[3] * trace })
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.active.len()
    }

    /// Frobenius norm of `L Lᵀ − G` on the factored block.
    pub fn reconstruction_error(&self, gram: &GramMatrix) -> f64 {
        let llt = &self.factor * self.factor.transpose();
        let m = self.dim();
        let mut sq = 0.0;
        for j in 0..m {
            for i in 0..m {
                let d = llt[(i, j)] - gram.entries[(self.active[i], self.active[j])];
                sq += d * d;
            }
        }
        sq.sqrt()
    }
}

/// A factored field on a fixed point set, ready to draw realizations.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    pub model: CovarianceModel,
    pub points: Vec<Point>,
    pub factorization: Factorization,
}

impl FieldSampler {
    pub fn new(model: &CovarianceModel, points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return invalid("point set is empty");
        }
        let dim = points[0].dim();
        if points.iter().any(|p| p.dim() != dim) {
            return invalid("points have mixed dimensions");
        }
        let gram = model.gram(&points)?;
        let factorization = factorize(&gram)?;
        Ok(FieldSampler { model: *model, points, factorization })
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    /// Realizations `first .. first+len` as columns of an `n_points × len` matrix.
    pub fn block(&self, seed: u64, first: u64, len: usize) -> DMatrix<f64> {
        let m = self.factorization.dim();
        let n = self.n_points();
        let mut full = DMatrix::zeros(n, len);
        if m == 0 {
            return full;
        }
        let mut z = DMatrix::zeros(m, len);
        for j in 0..len {
            let mut stream = NormalStream::new(seed, first + j as u64);
            for v in z.column_mut(j).iter_mut() {
                *v = stream.next_normal();
            }
        }
        let x = &self.factorization.factor * z;
        for (k, &row) in self.factorization.active.iter().enumerate() {
            for j in 0..len {
                full[(row, j)] = x[(k, j)];
            }
        }
        full
    }

    /// Applies `f(index, values)` to realizations `0..count`, results in index order.
    pub fn map_realizations<R, F>(&self, seed: u64, count: usize, workers: usize, f: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(u64, &[f64]) -> R + Sync,
    {
        let n = self.n_points();
        let blocks = count.div_ceil(BLOCK_SIZE);
        let work = || {
            (0..blocks)
                .into_par_iter()
                .map(|b| {
                    let first = b * BLOCK_SIZE;
                    let len = BLOCK_SIZE.min(count - first);
                    let x = self.block(seed, first as u64, len);
                    let data = x.as_slice();
                    (0..len)
                        .map(|j| f((first + j) as u64, &data[j * n..(j + 1) * n]))
                        .collect::<Vec<R>>()
                })
                .collect::<Vec<Vec<R>>>()
        };
        let chunks = if workers == 0 {
            work()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
                .install(work)
        };
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Per-realization maximum over the given point positions.
    pub fn sample_max(&self, seed: u64, count: usize, workers: usize, subset: &[usize]) -> Result<Vec<f64>> {
        check_subset(subset, self.n_points())?;
        self.map_realizations(seed, count, workers, |_, v| subset_max(v, subset))
    }
}

pub(crate) fn subset_max(values: &[f64], subset: &[usize]) -> f64 {
    subset.iter().map(|&i| values[i]).fold(f64::NEG_INFINITY, f64::max)
}

fn check_subset(subset: &[usize], len: usize) -> Result<()> {
    if subset.is_empty() {
        return invalid("subset is empty");
    }
    if let Some(&i) = subset.iter().find(|&&i| i >= len) {
        return Err(Error::IndexOutOfRange { index: i, len });
    }
    Ok(())
}

/// Realizations stored row-wise, origin in column 0.
#[derive(Debug, Clone, Serialize)]
pub struct SampleBatch {
    pub model: CovarianceModel,
    pub points: Vec<Point>,
    pub master_seed: u64,
    pub count: usize,
    /// `count × points.len()`, row-major.
    pub values: Vec<f64>,
}

impl SampleBatch {
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.points.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.count).map(|i| self.row(i)[j]).collect()
    }

    /// Per-realization maxima over `subset` (point positions).
    pub fn max_over(&self, subset: &[usize]) -> Result<Vec<f64>> {
        check_subset(subset, self.points.len())?;
        Ok((0..self.count).map(|i| subset_max(self.row(i), subset)).collect())
    }

    /// FNV-1a over the coordinate bit patterns.
    pub fn points_digest(&self) -> u64 {
        points_digest(&self.points)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# model={}", self.model.label())?;
        writeln!(out, "# points_digest={:016x}", self.points_digest())?;
        writeln!(out, "# seed={}", self.master_seed)?;
        writeln!(out, "# count={}", self.count)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["realization".to_string()];
        header.extend((0..self.points.len()).map(|j| format!("p{j}")));
        w.write_record(&header)?;
        for i in 0..self.count {
            let mut rec = vec![i.to_string()];
            rec.extend(self.row(i).iter().map(|x| format!("{x:.17e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Binary layout: `b"PLSB"`, `u32` header length, JSON header, then the
    /// values as little-endian `f64` row by row.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::json!({
            "model": self.model,
            "points": self.points,
            "points_digest": format!("{:016x}", self.points_digest()),
            "seed": self.master_seed,
            "count": self.count,
        });
        let bytes = serde_json::to_vec(&header)?;
        out.write_all(b"PLSB")?;
        out.write_all(&(bytes.len() as u32).to_le_bytes())?;
        out.write_all(&bytes)?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

pub fn points_digest(points: &[Point]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in points {
        for x in &p.0 {
            for b in (x + 0.0).to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}

/// Draws `count` realizations on `points`; the origin is placed first,
/// added if absent.
pub fn sample(
    model: &CovarianceModel,
    points: &[Point],
    master_seed: u64,
    count: usize,
    workers: usize,
) -> Result<SampleBatch> {
    if count == 0 {
        return invalid("count must be >= 1");
    }
    let Some(first) = points.first() else {
        return invalid("point set is empty");
    };
    let mut ordered = vec![Point::origin(first.dim())];
    ordered.extend(points.iter().filter(|p| !p.is_origin()).cloned());
    let sampler = FieldSampler::new(model, ordered)?;
    let rows = sampler.map_realizations(master_seed, count, workers, |_, v| v.to_vec())?;
    Ok(SampleBatch {
        model: *model,
        points: sampler.points,
        master_seed,
        count,
        values: rows.concat(),
    })
}
