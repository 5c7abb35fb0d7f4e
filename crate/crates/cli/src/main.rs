//! `plab`: command-line driver for persistence-lab.
//!
//! Exit status: 0 success, 1 I/O or a failed verification, 2 configuration
//! error, 3 numerical failure, 4 point cap exceeded.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use persistence_lab::curve::{build_curve, validate_curve};
use persistence_lab::export::{create, write_json_file};
use persistence_lab::persistence::{
    estimate_em, estimate_p, fit_exponent, net_points, write_estimates_csv, MaxEstimate,
};
use persistence_lab::sampler::sample;
use persistence_lab::verify::{chain_report, corollary3_check, default_tail_grid, fernique_tail_check, lemma2_check};
use persistence_lab::Error;
use serde::Serialize;

use config::{ConfigError, Params};

#[derive(Parser)]
#[command(name = "plab", version, about = "Persistence exponents of FBM with multidimensional time")]
struct Cli {
    /// JSON configuration file; flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw field realizations on the δ-net of TΔ (first T only)
    Sample(Params),
    /// Estimate P(max over the net of TΔ below the barrier) for each T
    Persist(Params),
    /// Persistence over ≥ 3 scales plus a weighted log-log slope fit
    Exponent(Params),
    /// Expected maximum over the net of TΔ for each T
    Maxscale(Params),
    /// Build or validate the enumeration curve of Z^d
    Curve {
        #[command(subcommand)]
        action: CurveAction,
    },
    /// Empirical checks of the interpolation lemmas and the record chain
    Verify {
        #[command(subcommand)]
        suite: Suite,
    },
}

#[derive(Subcommand)]
enum CurveAction {
    Build(Params),
    Validate(Params),
}

#[derive(Subcommand)]
enum Suite {
    Lemma2(Params),
    Cor3(Params),
    Fernique(Params),
    Chain(Params),
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a Params,
    outputs: Vec<String>,
    passed: Option<bool>,
    elapsed_seconds: f64,
}

struct Run {
    name: &'static str,
    params: Params,
    out: PathBuf,
    outputs: Vec<String>,
    passed: Option<bool>,
}

impl Run {
    fn path(&mut self, file: &str) -> PathBuf {
        self.outputs.push(file.to_string());
        self.out.join(file)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::PointCapExceeded { .. }) => 4,
        Some(Error::NotPositiveSemidefinite { .. } | Error::FactorizationFailed { .. }) => 3,
        Some(Error::Io(_) | Error::Csv(_) | Error::Json(_)) => 1,
        Some(_) => 2,
        None => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let file = match &cli.config {
        Some(path) => Params::load(path)?,
        None => Params::default(),
    };
    let (name, flags) = match &cli.command {
        Command::Sample(p) => ("sample", p),
        Command::Persist(p) => ("persist", p),
        Command::Exponent(p) => ("exponent", p),
        Command::Maxscale(p) => ("maxscale", p),
        Command::Curve { action: CurveAction::Build(p) } => ("curve-build", p),
        Command::Curve { action: CurveAction::Validate(p) } => ("curve-validate", p),
        Command::Verify { suite: Suite::Lemma2(p) } => ("verify-lemma2", p),
        Command::Verify { suite: Suite::Cor3(p) } => ("verify-cor3", p),
        Command::Verify { suite: Suite::Fernique(p) } => ("verify-fernique", p),
        Command::Verify { suite: Suite::Chain(p) } => ("verify-chain", p),
    };
    let params = file.overlay(flags).resolve();
    let out = params.out_dir();
    let mut run = Run { name, params, out, outputs: Vec::new(), passed: None };
    let started = Instant::now();

    match name {
        "sample" => cmd_sample(&mut run)?,
        "persist" => cmd_persist(&mut run, false)?,
        "exponent" => cmd_persist(&mut run, true)?,
        "maxscale" => cmd_maxscale(&mut run)?,
        "curve-build" => cmd_curve(&mut run, false)?,
        "curve-validate" => cmd_curve(&mut run, true)?,
        _ => cmd_verify(&mut run)?,
    }

    let manifest_path = run.out.join(format!("{}.manifest.json", run.name));
    let manifest = Manifest {
        command: run.name,
        version: env!("CARGO_PKG_VERSION"),
        config: &run.params,
        outputs: run.outputs.clone(),
        passed: run.passed,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    write_json_file(&manifest, &manifest_path).with_context(|| format!("writing {}", manifest_path.display()))?;
    Ok(run.passed.unwrap_or(true))
}

fn finish(mut w: impl Write, path: &Path) -> anyhow::Result<()> {
    w.flush().with_context(|| format!("writing {}", path.display()))
}

fn cmd_sample(run: &mut Run) -> anyhow::Result<()> {
    let p = &run.params;
    let (model, domain, mesh, ts) = (p.model()?, p.domain()?, p.mesh()?, p.scales()?);
    let opts = p.opts();
    let points = net_points(&domain, ts[0], mesh, opts.point_cap)?;
    let batch = sample(&model, &points, p.seed(), p.count(), opts.workers)?;
    let binary = p.binary.unwrap_or(false);
    let path = run.path(if binary { "samples.bin" } else { "samples.csv" });
    let mut w = create(&path)?;
    if binary {
        batch.write_binary(&mut w)?;
    } else {
        batch.write_csv(&mut w)?;
    }
    finish(w, &path)?;
    println!("{} realizations on {} points -> {}", batch.count, batch.points.len(), path.display());
    Ok(())
}

fn cmd_persist(run: &mut Run, fit: bool) -> anyhow::Result<()> {
    let p = run.params.clone();
    let ts = p.scales()?;
    if fit && ts.len() < 3 {
        return Err(Error::TooFewScales(ts.len()).into());
    }
    let (model, domain, mesh) = (p.model()?, p.domain()?, p.mesh()?);
    let barrier = p.barrier.unwrap_or(1.0);
    let mut estimates = Vec::new();
    println!("{:>8} {:>8} {:>8} {:>10} {:>10}", "T", "points", "hits", "p", "stderr");
    for &t in &ts {
        let e = estimate_p(&model, &domain, t, barrier, mesh, p.seed(), p.count(), p.opts())?;
        println!("{:>8} {:>8} {:>8} {:>10.6} {:>10.6}", t, e.n_points, e.estimate.hits, e.p(), e.stderr());
        estimates.push(e);
    }
    let path = run.path("estimates.csv");
    let mut w = create(&path)?;
    write_estimates_csv(&estimates, &mut w)?;
    finish(w, &path)?;
    if fit {
        let scale_points: Vec<_> = estimates.iter().map(|e| e.scale_point()).collect();
        let f = fit_exponent(&scale_points)?;
        println!("slope {:.4} ± {:.4} (H - d = {:.4})", f.slope, f.slope_stderr, model.hurst() - domain.dim as f64);
        let path = run.path("fit.json");
        write_json_file(&f, &path)?;
        let path = run.path("plot_data.csv");
        let mut w = create(&path)?;
        f.write_plot_data(&mut w)?;
        finish(w, &path)?;
    }
    Ok(())
}

fn cmd_maxscale(run: &mut Run) -> anyhow::Result<()> {
    let p = run.params.clone();
    let (model, domain, mesh, ts) = (p.model()?, p.domain()?, p.mesh()?, p.scales()?);
    let h = model.hurst();
    let rows: Vec<MaxEstimate> = ts
        .iter()
        .map(|&t| estimate_em(&model, &domain, t, mesh, p.seed(), p.count(), p.opts()))
        .collect::<Result<_, _>>()?;
    let path = run.path("maxscale.csv");
    let mut w = create(&path)?;
    writeln!(w, "t,n_points,n,em,stderr,em_over_t_h,log_t,log_em")?;
    println!("{:>8} {:>8} {:>10} {:>10} {:>10}", "T", "points", "EM", "stderr", "EM/T^H");
    for r in &rows {
        let e = &r.estimate;
        let ratio = e.mean / r.t.powf(h);
        writeln!(w, "{},{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}", r.t, r.n_points, e.count, e.mean, e.stderr, ratio, r.t.ln(), e.mean.ln())?;
        println!("{:>8} {:>8} {:>10.5} {:>10.5} {:>10.5}", r.t, r.n_points, e.mean, e.stderr, ratio);
    }
    finish(w, &path)
}

fn cmd_curve(run: &mut Run, validate: bool) -> anyhow::Result<()> {
    let p = run.params.clone();
    let curve = build_curve(p.d.unwrap_or(1), p.nmax.unwrap_or(16), p.eps.unwrap_or(1.0), p.step_bound.unwrap_or(3))?;
    if validate {
        let report = validate_curve(&curve);
        print!("{report}");
        let path = run.path("curve_report.json");
        write_json_file(&report, &path)?;
        run.passed = Some(report.passed());
    } else {
        let path = run.path("curve.csv");
        let mut w = create(&path)?;
        curve.write_csv(&mut w)?;
        finish(w, &path)?;
        println!("curve of length {} over [-{n}, {n}]^{} -> {}", curve.len(), curve.dim, path.display(), n = curve.n_max);
    }
    Ok(())
}

fn cmd_verify(run: &mut Run) -> anyhow::Result<()> {
    let p = run.params.clone();
    let model = p.model()?;
    let (seed, count, opts) = (p.seed(), p.count(), p.opts());
    let file = format!("{}.json", run.name.trim_start_matches("verify-"));
    let path = run.path(&file);
    let passed = match run.name {
        "verify-lemma2" => {
            let t = p.scales()?[0];
            let r = lemma2_check(
                &model,
                &p.domain()?,
                t,
                p.rho.unwrap_or(1.0),
                p.a.unwrap_or(2.0),
                p.c.unwrap_or(0.0),
                p.b.unwrap_or(1.0),
                seed,
                count,
                opts,
            )?;
            print!("{r}");
            write_json_file(&r, &path)?;
            r.passed()
        }
        "verify-cor3" => {
            let r = corollary3_check(&model, &p.domain()?, &p.scales()?, p.kappa.unwrap_or(1.0), seed, count, opts)?;
            print!("{r}");
            write_json_file(&r, &path)?;
            r.passed()
        }
        "verify-fernique" => {
            let grid = p.r.clone().unwrap_or_else(default_tail_grid);
            let r = fernique_tail_check(&model, p.d.unwrap_or(1), seed, count, &grid, opts)?;
            print!("{r}");
            write_json_file(&r, &path)?;
            r.passed()
        }
        "verify-chain" => {
            let r = chain_report(
                &model,
                p.d.unwrap_or(2),
                p.level.unwrap_or(6),
                p.q.unwrap_or(0.5),
                p.eps.unwrap_or(1.0),
                seed,
                count,
                opts,
            )?;
            print!("{r}");
            write_json_file(&r, &path)?;
            r.passed()
        }
        other => unreachable!("unknown suite {other}"),
    };
    run.passed = Some(passed);
    Ok(())
}
