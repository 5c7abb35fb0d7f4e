//! The record functional `F_n = Σ_{i ≤ n} (ξ_i − M_{i−1})₊` along a curve.
//!
//! With `M_{−1} = 0` the partial sums telescope to the running maximum, so
//! `F_n = max(0, ξ_0, …, ξ_n)`. Revisited curve points can never be records:
//! their increment is exactly zero.

use serde::Serialize;

use crate::curve::{EnumerationCurve, Zone};
use crate::error::{invalid, Error, Result};
use crate::stats::CompensatedSum;

#[derive(Debug, Clone)]
pub struct RecordTrace {
    pub values: Vec<f64>,
    /// `M_i = max(M_{i−1}, ξ_i)`, starting from `M_{−1} = 0`.
    pub running_max: Vec<f64>,
    /// `(ξ_i − M_{i−1})₊`.
    pub increments: Vec<f64>,
    /// Compensated partial sums of the increments.
    pub partial_f: Vec<f64>,
}

pub fn record_trace(values: &[f64]) -> Result<RecordTrace> {
    if values.is_empty() {
        return invalid("record trace needs a nonempty sequence");
    }
    let n = values.len();
    let mut running_max = Vec::with_capacity(n);
    let mut increments = Vec::with_capacity(n);
    let mut partial_f = Vec::with_capacity(n);
    let mut m = 0.0f64;
    let mut f = CompensatedSum::default();
    for &x in values {
        let inc = (x - m).max(0.0);
        m = m.max(x);
        f.add(inc);
        running_max.push(m);
        increments.push(inc);
        partial_f.push(f.value());
    }
    Ok(RecordTrace { values: values.to_vec(), running_max, increments, partial_f })
}

impl RecordTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `F` at the last index.
    pub fn total(&self) -> f64 {
        *self.partial_f.last().expect("trace is nonempty")
    }

    /// `F(nΔ)`: `F` at the last first visit of level `n`.
    pub fn f_at_level(&self, curve: &EnumerationCurve, n: u64) -> Result<f64> {
        self.check_aligned(curve)?;
        let idx = curve
            .level_end(n)
            .ok_or_else(|| Error::InvalidInput(format!("level {n} is not covered by the curve")))?;
        Ok(self.partial_f[idx])
    }

    fn check_aligned(&self, curve: &EnumerationCurve) -> Result<()> {
        if curve.len() != self.len() {
            return invalid(format!(
                "trace has {} values but the curve has {} entries",
                self.len(),
                curve.len()
            ));
        }
        Ok(())
    }
}

/// Level-`n` increments summed over the band (`Σ¹_n`) and the bulk (`Σ²_n`).
pub fn level_sums(curve: &EnumerationCurve, trace: &RecordTrace, n: u64) -> Result<(f64, f64)> {
    trace.check_aligned(curve)?;
    if n == 0 || n > curve.n_max {
        return invalid(format!("level {n} outside 1..={}", curve.n_max));
    }
    let mut band = CompensatedSum::default();
    let mut bulk = CompensatedSum::default();
    for (e, &inc) in curve.entries.iter().zip(&trace.increments) {
        if e.level != n {
            continue;
        }
        match e.zone {
            Some(Zone::Band) => band.add(inc),
            Some(Zone::Bulk) => bulk.add(inc),
            None => {}
        }
    }
    Ok((band.value(), bulk.value()))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShellBound {
    pub level: u64,
    /// `F(nΔ) − F((n−1)Δ)`.
    pub shell_increment: f64,
    pub band_sum: f64,
    pub bulk_sum: f64,
    /// `2 Σ²_n − (F(nΔ) − F((n−1)Δ))`.
    pub slack: f64,
    pub holds: bool,
}

/// Checks `F(nΔ) − F((n−1)Δ) ≤ 2 Σ²_n` on one realization.
pub fn shell_increment_bound_check(curve: &EnumerationCurve, trace: &RecordTrace, n: u64) -> Result<ShellBound> {
    let (band_sum, bulk_sum) = level_sums(curve, trace, n)?;
    let shell_increment = trace.f_at_level(curve, n)? - trace.f_at_level(curve, n - 1)?;
    let slack = 2.0 * bulk_sum - shell_increment;
    // increments telescope exactly up to rounding of the compensated sums
    let tol = 1e-12 * (1.0 + shell_increment.abs());
    Ok(ShellBound { level: n, shell_increment, band_sum, bulk_sum, slack, holds: slack >= -tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::build_curve;

    #[test]
    fn increasing_sequence() {
        let t = record_trace(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.increments, vec![0.0, 1.0, 1.0, 1.0]);
        assert_eq!(t.total(), 3.0);
        assert_eq!(t.running_max, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn early_record() {
        let t = record_trace(&[0.0, 3.0, 1.0, 2.0]).unwrap();
        assert_eq!(t.increments, vec![0.0, 3.0, 0.0, 0.0]);
        assert_eq!(t.total(), 3.0);
    }

    #[test]
    fn ties_are_not_records() {
        let t = record_trace(&[0.0, 1.5, 1.5, 0.2]).unwrap();
        assert_eq!(t.increments, vec![0.0, 1.5, 0.0, 0.0]);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(record_trace(&[]).is_err());
    }

    #[test]
    fn nonpositive_field_has_no_level_sums() {
        let c = build_curve(2, 3, 1.0, 3).unwrap();
        let vals: Vec<f64> = (0..c.len()).map(|i| if i == 0 { 0.0 } else { -(i as f64) }).collect();
        let t = record_trace(&vals).unwrap();
        for n in 1..=3 {
            assert_eq!(level_sums(&c, &t, n).unwrap(), (0.0, 0.0));
            let b = shell_increment_bound_check(&c, &t, n).unwrap();
            assert!(b.holds);
            assert_eq!(b.slack, 0.0);
        }
    }

    #[test]
    fn single_bulk_record() {
        let c = build_curve(2, 3, 1.0, 3).unwrap();
        let i = c
            .entries
            .iter()
            .position(|e| e.level == 2 && e.zone == Some(Zone::Bulk) && e.first_visit)
            .unwrap();
        let target = c.point(i).clone();
        let vals: Vec<f64> = c.entries.iter().map(|e| if e.point == target { 0.8 } else { 0.0 }).collect();
        let t = record_trace(&vals).unwrap();
        assert_eq!(level_sums(&c, &t, 2).unwrap(), (0.0, 0.8));
        assert_eq!(level_sums(&c, &t, 1).unwrap(), (0.0, 0.0));
        let b = shell_increment_bound_check(&c, &t, 2).unwrap();
        assert!((b.slack - 0.8).abs() < 1e-15);
    }

    #[test]
    fn band_only_record_breaks_pathwise_bound() {
        // a lone record in the band: F(nΔ) − F((n−1)Δ) = Σ¹ > 0 = 2Σ²
        let c = build_curve(2, 3, 1.0, 3).unwrap();
        let i = c
            .entries
            .iter()
            .position(|e| e.level == 3 && e.zone == Some(Zone::Band))
            .unwrap();
        let target = c.point(i).clone();
        let vals: Vec<f64> = c.entries.iter().map(|e| if e.point == target { 1.0 } else { 0.0 }).collect();
        let t = record_trace(&vals).unwrap();
        let b = shell_increment_bound_check(&c, &t, 3).unwrap();
        assert!(!b.holds);
        assert_eq!(b.band_sum, 1.0);
    }

    #[test]
    fn misaligned_trace_rejected() {
        let c = build_curve(1, 2, 1.0, 3).unwrap();
        let t = record_trace(&[0.0, 1.0]).unwrap();
        assert!(level_sums(&c, &t, 1).is_err());
    }
}
