//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the summary is printed by
//! `cargo test` whether or not the criteria pass; the process exits nonzero
//! if any criterion fails.

use std::time::Instant;

use persistence_lab::curve::{build_curve, validate_curve};
use persistence_lab::geometry::Domain;
use persistence_lab::persistence::{estimate_em, estimate_p, fit_exponent, McOptions, MaxEstimate};
use persistence_lab::records::record_trace;
use persistence_lab::sampler::{split_seed, NormalStream};
use persistence_lab::stats::brownian_persistence;
use persistence_lab::verify::{chain_report, corollary3_check, default_tail_grid, fernique_tail_check, lemma2_check};
use persistence_lab::{CovarianceModel, Mesh};

const SEED: u64 = 20_240_601;

/// Stated in standard errors for every Monte Carlo comparison.
const SIGMAS: f64 = 3.0;

// closed-form anchor
const ANCHOR_TS: [f64; 3] = [4.0, 16.0, 64.0];
const ANCHOR_VALUES: [f64; 3] = [0.38292, 0.19741, 0.09948];
const ANCHOR_BIAS: f64 = 0.08;
const ANCHOR_N: usize = 20_000;

const D1_TS: [f64; 5] = [8.0, 16.0, 32.0, 64.0, 128.0];
const D1_N: usize = 50_000;
const D1_SLOPE_TOL: f64 = 0.15;

const D2_TS: [f64; 3] = [4.0, 8.0, 16.0];
const D2_N: usize = 200_000;
const D2_SLOPE: f64 = -1.5;
const D2_SLOPE_TOL: f64 = 0.30;

const RECORD_SEQUENCES: usize = 10_000;
const RECORD_MAX_LEN: usize = 100_000;
const RECORD_REL_TOL: f64 = 1e-9;

const EM_RATIO_TOL_FBM: f64 = 0.10;
const EM_RATIO_TOL_PERTURBED: f64 = 0.15;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn opts() -> McOptions {
    McOptions::default()
}

fn closed_form_anchor() -> Outcome {
    let m = CovarianceModel::fbm(0.5).unwrap();
    // Δ = [0, 1], so TΔ = [0, T]
    let d = Domain::cube(1, 0.5).unwrap();
    let mesh = Mesh::from_spacing(0.25).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (&t, &anchor)) in ANCHOR_TS.iter().zip(&ANCHOR_VALUES).enumerate() {
        assert!((brownian_persistence(t) - anchor).abs() < 5e-6);
        let e = estimate_p(&m, &d, t, 1.0, mesh, split_seed(SEED, i as u64), ANCHOR_N, opts()).unwrap();
        let slack = SIGMAS * e.stderr();
        let lower = e.p() + slack >= anchor;
        let upper = e.p() - slack <= anchor + ANCHOR_BIAS;
        ok &= lower && upper;
        parts.push(format!(
            "T={t}: p={:.4}±{:.4} vs [{anchor}, {:.5}]{}{}",
            e.p(),
            e.stderr(),
            anchor + ANCHOR_BIAS,
            if lower { "" } else { " LOW" },
            if upper { "" } else { " HIGH" }
        ));
    }
    outcome(ok, parts.join("; "))
}

fn d1_exponents() -> Outcome {
    let d = Domain::cube(1, 1.0).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, h) in [0.25, 0.5, 0.75].into_iter().enumerate() {
        let m = CovarianceModel::fbm(h).unwrap();
        let pts: Vec<_> = D1_TS
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let seed = split_seed(SEED + 1 + k as u64, i as u64);
                estimate_p(&m, &d, t, 1.0, Mesh::LATTICE, seed, D1_N, opts()).unwrap().scale_point()
            })
            .collect();
        let fit = fit_exponent(&pts).unwrap();
        let pass = (fit.slope - (h - 1.0)).abs() <= D1_SLOPE_TOL;
        ok &= pass;
        parts.push(format!("H={h}: slope {:.3}±{:.3} target {:.2}±{D1_SLOPE_TOL}", fit.slope, fit.slope_stderr, h - 1.0));
    }
    outcome(ok, parts.join("; "))
}

fn d2_exponent() -> Outcome {
    let m = CovarianceModel::fbm(0.5).unwrap();
    // Δ = [0, 2] × [−1, 1]
    let d = Domain::cube(2, 1.0).unwrap();
    let ests: Vec<_> = D2_TS
        .iter()
        .enumerate()
        .map(|(i, &t)| estimate_p(&m, &d, t, 1.0, Mesh::LATTICE, split_seed(SEED + 10, i as u64), D2_N, opts()).unwrap())
        .collect();
    let pts: Vec<_> = ests.iter().map(|e| e.scale_point()).collect();
    let fit = fit_exponent(&pts).unwrap();
    let ps: Vec<String> = ests.iter().map(|e| format!("{:.4}", e.p())).collect();
    outcome(
        (fit.slope - D2_SLOPE).abs() <= D2_SLOPE_TOL,
        format!("p=[{}] slope {:.3}±{:.3} target {D2_SLOPE}±{D2_SLOPE_TOL}", ps.join(", "), fit.slope, fit.slope_stderr),
    )
}

fn record_identity() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for s in 0..RECORD_SEQUENCES {
        let mut g = NormalStream::new(SEED + 20, s as u64);
        // log-uniform lengths in [1, 10^5], plus the full length every 500th
        let len = if s % 500 == 0 {
            RECORD_MAX_LEN
        } else {
            (RECORD_MAX_LEN as f64).powf(g.next_uniform()).ceil() as usize
        };
        let mut walk = 0.0;
        let xs: Vec<f64> = (0..len)
            .map(|_| match s % 3 {
                0 => g.next_normal(),
                1 => {
                    walk += g.next_normal();
                    walk
                }
                _ => g.next_normal() * 1e6 * g.next_uniform().powi(4),
            })
            .collect();
        let t = record_trace(&xs).unwrap();
        let mut m = 0.0f64;
        for (i, &x) in xs.iter().enumerate() {
            m = m.max(x);
            worst = worst.max((t.partial_f[i] - m).abs() / m.abs().max(f64::MIN_POSITIVE));
        }
        checked += len;
    }
    outcome(worst <= RECORD_REL_TOL, format!("{RECORD_SEQUENCES} sequences, {checked} prefixes, worst rel err {worst:.2e}"))
}

fn curve_validation() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for dim in 1..=3 {
        let c = build_curve(dim, 16, 1.0, 3).unwrap();
        let r = validate_curve(&c);
        ok &= r.passed();
        let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        parts.push(format!(
            "d={dim}: len {} ratio {:.2} {}",
            r.length,
            r.length_ratio,
            if failed.is_empty() { "all checks pass".to_string() } else { format!("failed {failed:?}") }
        ));
    }
    outcome(ok, parts.join("; "))
}

fn shell_inequality() -> Outcome {
    let m = CovarianceModel::fbm(0.5).unwrap();
    // q small enough that m = 0: every shell 1..=6 is checked
    let r = chain_report(&m, 2, 6, 0.1, 1.0, SEED + 30, 10_000, opts()).unwrap();
    let pathwise = r.checks.iter().find(|c| c.name.contains("every realization")).unwrap();
    let violations: Vec<String> = r.shells.iter().map(|s| format!("{}:{}", s.level, s.pathwise_violations)).collect();
    let expectation: Vec<String> = r
        .shell_expectation
        .iter()
        .map(|c| if c.passed { "ok" } else { "no" }.to_string())
        .collect();
    outcome(
        pathwise.passed,
        format!(
            "violating realizations per level [{}] of {}; in expectation [{}]",
            violations.join(" "),
            r.count,
            expectation.join(" ")
        ),
    )
}

fn em_series(m: &CovarianceModel, d: &Domain, ts: &[f64], n: usize, salt: u64) -> Vec<MaxEstimate> {
    ts.iter()
        .enumerate()
        .map(|(i, &t)| estimate_em(m, d, t, Mesh::LATTICE, split_seed(SEED + salt, i as u64), n, opts()).unwrap())
        .collect()
}

fn em_scaling() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let d1_ts: Vec<f64> = (2..=10).map(|k| 2f64.powi(k)).collect();
    let d2_ts: Vec<f64> = (1..=5).map(|k| 2f64.powi(k)).collect();
    let fbm = CovarianceModel::fbm(0.5).unwrap();
    let perturbed = CovarianceModel::perturbed_fbm(0.5, 1.0, 1.0).unwrap();
    let cases = [
        ("fbm d=1", fbm, 1, &d1_ts, 4000, EM_RATIO_TOL_FBM),
        ("fbm d=2", fbm, 2, &d2_ts, 2000, EM_RATIO_TOL_FBM),
        ("perturbed d=1", perturbed, 1, &d1_ts, 4000, EM_RATIO_TOL_PERTURBED),
    ];
    for (k, (name, m, dim, ts, n, tol)) in cases.into_iter().enumerate() {
        let d = Domain::cube(dim, 1.0).unwrap();
        let em = em_series(&m, &d, ts, n, 40 + k as u64);
        let h = m.hurst();
        let mut dominated = true;
        for w in em.windows(2) {
            let (a, b) = (&w[0].estimate, &w[1].estimate);
            let f = 2f64.powf(h);
            let sigma = ((b.stderr / f).powi(2) + a.stderr.powi(2)).sqrt();
            dominated &= b.mean / f >= a.mean - SIGMAS * sigma;
        }
        let ratios: Vec<f64> = em.iter().map(|e| e.estimate.mean / e.t.powf(h)).collect();
        let (r0, r1) = (ratios[ratios.len() - 2], ratios[ratios.len() - 1]);
        let change = (r1 - r0).abs() / r0;
        // fbm carries the nested-net domination; the perturbed model only the ratio
        let pass = change < tol && (dominated || !m.is_self_similar());
        ok &= pass;
        parts.push(format!(
            "{name}: EM/T^H {:.4}->{:.4} over T={}->{} ({:.1}% < {:.0}%), domination {}",
            r0,
            r1,
            ts[ts.len() - 2],
            ts[ts.len() - 1],
            100.0 * change,
            100.0 * tol,
            if dominated { "holds" } else { "violated" }
        ));
    }
    outcome(ok, parts.join("; "))
}

fn interpolation_suites() -> Outcome {
    let m = CovarianceModel::fbm(0.5).unwrap();
    let d = Domain::cube(1, 1.0).unwrap();
    let l2 = lemma2_check(&m, &d, 32.0, 1.0, 2.0, 0.0, 1.0, SEED + 50, 10_000, opts()).unwrap();
    let c3 = corollary3_check(&m, &d, &[8.0, 16.0, 32.0, 64.0], 1.0, SEED + 51, 10_000, opts()).unwrap();
    let fr = fernique_tail_check(&m, 2, SEED + 52, 100_000, &default_tail_grid(), opts()).unwrap();
    let trend: Vec<String> = c3.rows.iter().map(|r| format!("{:.3}", r.normalized_gap)).collect();
    let failed: Vec<&str> = l2
        .checks
        .iter()
        .chain(&c3.checks)
        .chain(&fr.checks)
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    outcome(
        failed.is_empty(),
        format!(
            "lemma {} checks, corollary {} checks (gap/sqrt(lnT) [{}]), tail {} checks{}",
            l2.checks.len(),
            c3.checks.len(),
            trend.join(", "),
            fr.checks.len(),
            if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
        ),
    )
}

fn reproducibility() -> Outcome {
    let m = CovarianceModel::fbm(0.5).unwrap();
    let run = |workers: usize| {
        let o = McOptions { workers, ..McOptions::default() };
        let a = estimate_p(&m, &Domain::cube(1, 0.5).unwrap(), 16.0, 1.0, Mesh::refined(4).unwrap(), SEED, ANCHOR_N, o).unwrap();
        let b = estimate_p(&m, &Domain::cube(2, 1.0).unwrap(), 8.0, 1.0, Mesh::LATTICE, SEED, 20_000, o).unwrap();
        let c = estimate_em(&m, &Domain::cube(2, 1.0).unwrap(), 8.0, Mesh::LATTICE, SEED, 5_000, o).unwrap();
        let l = lemma2_check(&m, &Domain::cube(1, 1.0).unwrap(), 32.0, 1.0, 2.0, 0.0, 1.0, SEED, 5_000, o).unwrap();
        let ch = chain_report(&m, 2, 4, 0.5, 1.0, SEED, 2_000, o).unwrap();
        serde_json::to_string(&(a, b, c, l, ch)).unwrap()
    };
    let (one, four) = (run(1), run(4));
    let again = run(4);
    outcome(one == four && four == again, format!("{} bytes of serialized results compared across workers 1/4/4", one.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("closed-form anchor d=1 H=1/2", closed_form_anchor),
        ("d=1 exponent H-1", d1_exponents),
        ("d=2 exponent H-d", d2_exponent),
        ("record functional identity", record_identity),
        ("curve validation d=1,2,3", curve_validation),
        ("pathwise shell inequality", shell_inequality),
        ("expected-maximum scaling", em_scaling),
        ("interpolation and discretization suites", interpolation_suites),
        ("reproducibility across workers", reproducibility),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        if !o.passed {
            failures += 1;
        }
        println!(
            "criterion {}: {} — {name} ({secs:.1}s) — {}",
            i + 1,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
