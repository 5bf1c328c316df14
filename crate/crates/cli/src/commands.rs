//! Subcommand implementations. Exit codes: 0 success, 1 error, 2 when
//! --require-certified is set and the verdict is not `certified`.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use rescert_core::certify::{
    certify_contraction, certify_contraction_p, certify_linear_series, certify_local_persistence,
    compact_target_esp, Certificate, Verdict,
};
use rescert_core::evaluate::{
    directional_derivative, eval_filter, eval_forward_zero, input_forgetting_experiment,
    state_forgetting_experiment, EvalMode, ForgettingReport, DEFAULT_TOL,
};
use rescert_core::reservoir::{Readout, ReservoirSystem, SamplingSpec};
use rescert_core::rng::SplitMix64;
use rescert_core::seqspace::{norm, NormSpec, WeightingSequence, Window};
use rescert_core::volterra::{
    bound_check_experiment, eval_series, extract_exact, extract_fd, VolterraKernelSet,
};

use crate::formats::{
    format_float, load_config, load_kernels, load_system, parse_weighting, read_window,
    verdict_name, write_json, CertificateDto, KernelSetDto, SystemDto,
};

fn parse_vector(text: &str, what: &str) -> Result<DVector<f64>> {
    let values: Vec<f64> = serde_json::from_str(text)
        .with_context(|| format!("parsing {what} (expected a JSON array like [0.1,0.2])"))?;
    Ok(DVector::from_vec(values))
}

fn sampling_spec(points: usize, x_radius: f64, z_radius: f64) -> SamplingSpec {
    SamplingSpec { points, x_radius, z_radius }
}

fn print_certificate(cert: &Certificate) {
    let dto = CertificateDto::from_core(cert);
    println!("{:<24} {:<22} {:<15} {}", "condition", "lhs", "verdict", "filter Lipschitz");
    println!(
        "{:<24} {:<22} {:<15} {}",
        dto.condition,
        if cert.lhs_value.is_finite() { format_float(cert.lhs_value) } else { "inf".into() },
        dto.verdict,
        cert.implied
            .filter_lipschitz
            .map(format_float)
            .unwrap_or_else(|| "-".into()),
    );
    if !cert.notes.is_empty() {
        println!("notes:");
        for note in &cert.notes {
            println!("  - {note}");
        }
    }
}

fn certificate_exit(cert: &Certificate, require_certified: bool) -> i32 {
    if require_certified && cert.verdict != Verdict::Certified {
        2
    } else {
        0
    }
}

// ---------------------------------------------------------------------

#[derive(Args)]
pub struct CertifyArgs {
    /// System description JSON.
    #[arg(long)]
    system: Option<String>,
    /// Weighting sequence JSON (inline or path).
    #[arg(long)]
    weighting: Option<String>,
    /// Condition: contraction, contraction-p, linear-series,
    /// compact-target, local-persistence.
    #[arg(long, default_value = "contraction")]
    condition: String,
    /// Exponent for the contraction-p condition.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Series terms for the linear-series condition.
    #[arg(long, default_value_t = 120)]
    terms: usize,
    /// Known solution states (window CSV) for local-persistence.
    #[arg(long)]
    solution_x: Option<String>,
    /// Known solution inputs (window CSV) for local-persistence.
    #[arg(long)]
    solution_z: Option<String>,
    /// Grid points for sampled constants.
    #[arg(long, default_value_t = 4096)]
    points: usize,
    #[arg(long, default_value_t = 1.0)]
    x_radius: f64,
    #[arg(long, default_value_t = 1.0)]
    z_radius: f64,
    /// Exit with code 2 unless the verdict is `certified`.
    #[arg(long)]
    require_certified: bool,
    /// Write the certificate JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run-config JSON supplying defaults for system/weighting/out.
    #[arg(long)]
    config: Option<String>,
}

pub fn certify(args: CertifyArgs) -> Result<i32> {
    let config = load_config(args.config.as_deref())?;
    let system_path = args
        .system
        .or(config.system)
        .ok_or_else(|| anyhow!("--system is required (or set it in --config)"))?;
    let weighting_spec = args
        .weighting
        .or(config.weighting)
        .ok_or_else(|| anyhow!("--weighting is required (or set it in --config)"))?;
    let (dto, sys) = load_system(&system_path)?;
    let w = parse_weighting(&weighting_spec)?;
    let sampling = sampling_spec(args.points, args.x_radius, args.z_radius);

    let cert = match args.condition.as_str() {
        "contraction" => certify_contraction(&sys, &w, &sampling)?,
        "contraction-p" => certify_contraction_p(&sys, &w, args.p, &sampling)?,
        "linear-series" => {
            let (a, _, _) = dto
                .linear_parts()
                .ok_or_else(|| anyhow!("linear-series needs a linear-family system"))?;
            certify_linear_series(&a, &w, args.terms)?
        }
        "compact-target" => compact_target_esp(&sys, &sampling)?,
        "local-persistence" => {
            let x_path = args
                .solution_x
                .ok_or_else(|| anyhow!("local-persistence needs --solution-x"))?;
            let z_path = args
                .solution_z
                .ok_or_else(|| anyhow!("local-persistence needs --solution-z"))?;
            let x0 = read_window(&x_path)?;
            let z0 = read_window(&z_path)?;
            certify_local_persistence(&sys, &w, &x0, &z0)?
        }
        other => bail!(
            "unknown condition '{other}' (supported: contraction, contraction-p, \
             linear-series, compact-target, local-persistence)"
        ),
    };

    print_certificate(&cert);
    let out = args.out.or(config.out.map(PathBuf::from));
    if let Some(path) = out {
        write_json(&path, &CertificateDto::from_core(&cert))?;
    }
    Ok(certificate_exit(&cert, args.require_certified))
}

// ---------------------------------------------------------------------

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    system: Option<String>,
    /// Input window CSV, oldest row first.
    #[arg(long)]
    input: String,
    #[arg(long)]
    weighting: Option<String>,
    /// picard or forward.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Initial state as a JSON array; zeros when omitted.
    #[arg(long)]
    x_init: Option<String>,
    /// States (and outputs) CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<String>,
}

pub fn eval(args: EvalArgs) -> Result<i32> {
    let config = load_config(args.config.as_deref())?;
    let system_path = args
        .system
        .or(config.system)
        .ok_or_else(|| anyhow!("--system is required (or set it in --config)"))?;
    let weighting_spec = args
        .weighting
        .or(config.weighting.clone())
        .ok_or_else(|| anyhow!("--weighting is required (or set it in --config)"))?;
    let (_, sys) = load_system(&system_path)?;
    let w = parse_weighting(&weighting_spec)?;
    let z = read_window(&args.input)?;

    let x_init = match &args.x_init {
        Some(text) => parse_vector(text, "--x-init")?,
        None => DVector::zeros(sys.state_dim()),
    };
    let tol = args.tol.or(config.tol).unwrap_or(DEFAULT_TOL);
    let max_iter = args.max_iter.or(config.max_iter).unwrap_or(z.depth() + 16);
    let mode_name = args.mode.or(config.mode).unwrap_or_else(|| "picard".to_string());
    let mode = match mode_name.as_str() {
        "picard" => EvalMode::Picard { x_init, max_iter, tol },
        "forward" => EvalMode::ForwardWashout { x_init },
        other => bail!("unknown mode '{other}' (supported: picard, forward)"),
    };

    let result = eval_filter(&sys, &z, &w, &mode)?;
    println!(
        "states: {} x {}; iterations {}; residual {}; truncation bound {}",
        result.states.depth(),
        result.states.dim(),
        result.iterations,
        format_float(result.residual),
        result
            .truncation_error_bound
            .map(format_float)
            .unwrap_or_else(|| "-".into()),
    );

    let out = args.out.or(config.out.map(PathBuf::from));
    if let Some(path) = out {
        write_eval_csv(&path, &result.states, result.outputs.as_ref())?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn write_eval_csv(path: &Path, states: &Window, outputs: Option<&Window>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("creating CSV {}", path.display()))?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=states.dim()).map(|i| format!("x{i}")));
    if let Some(out) = outputs {
        header.extend((1..=out.dim()).map(|i| format!("y{i}")));
    }
    writer.write_record(&header)?;
    let depth = states.depth() as i64;
    for i in 0..states.depth() {
        let t = -(depth - 1) + i as i64;
        let mut row = vec![t.to_string()];
        row.extend((0..states.dim()).map(|j| format_float(states.values()[(i, j)])));
        if let Some(out) = outputs {
            row.extend((0..out.dim()).map(|j| format_float(out.values()[(i, j)])));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------

#[derive(Args)]
pub struct DerivativeCheckArgs {
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    weighting: Option<String>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Window depth for the random inputs; falls back to the config T.
    #[arg(long)]
    depth: Option<usize>,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Largest admissible relative error in the weighted norm.
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<String>,
}

#[derive(Serialize)]
struct DerivativeCheckReport {
    trials: usize,
    depth: usize,
    eps: f64,
    tolerance: f64,
    max_relative_error: f64,
    passed: bool,
}

pub fn derivative_check(args: DerivativeCheckArgs) -> Result<i32> {
    let config = load_config(args.config.as_deref())?;
    let system_path = args
        .system
        .or(config.system)
        .ok_or_else(|| anyhow!("--system is required (or set it in --config)"))?;
    let weighting_spec = args
        .weighting
        .or(config.weighting)
        .ok_or_else(|| anyhow!("--weighting is required (or set it in --config)"))?;
    let (_, sys) = load_system(&system_path)?;
    let w = parse_weighting(&weighting_spec)?;
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let depth = args.depth.or(config.depth).unwrap_or(40);
    let mut rng = SplitMix64::new(seed);
    let spec = NormSpec::Weighted(w.clone());

    let mut worst = 0.0f64;
    for _ in 0..args.trials {
        let z = random_window(&mut rng, depth, sys.input_dim(), 1.0)?;
        let u = random_window(&mut rng, depth, sys.input_dim(), 1.0)?;
        let flow = eval_forward_zero(&sys, &z, &w)?;
        let v = directional_derivative(&sys, &flow, &z, &u)?;

        let plus = Window::new(z.values() + u.values() * args.eps)?;
        let minus = Window::new(z.values() - u.values() * args.eps)?;
        let fp = eval_forward_zero(&sys, &plus, &w)?;
        let fm = eval_forward_zero(&sys, &minus, &w)?;
        let fd = Window::new((fp.states.values() - fm.states.values()) / (2.0 * args.eps))?;
        let err = norm(&v.sub(&fd)?, &spec)?;
        let scale = norm(&v, &spec)?.max(1e-12);
        worst = worst.max(err / scale);
    }

    let passed = worst <= args.tolerance;
    println!(
        "derivative check: max relative error {} over {} trials (tolerance {}): {}",
        format_float(worst),
        args.trials,
        format_float(args.tolerance),
        if passed { "PASS" } else { "FAIL" }
    );
    if let Some(path) = args.out {
        write_json(
            &path,
            &DerivativeCheckReport {
                trials: args.trials,
                depth,
                eps: args.eps,
                tolerance: args.tolerance,
                max_relative_error: worst,
                passed,
            },
        )?;
    }
    Ok(if passed { 0 } else { 1 })
}

fn random_window(rng: &mut SplitMix64, depth: usize, dim: usize, scale: f64) -> Result<Window> {
    Ok(Window::new(nalgebra::DMatrix::from_fn(depth, dim, |_, _| {
        rng.uniform_in(-scale, scale)
    }))?)
}

// ---------------------------------------------------------------------

#[derive(Args)]
pub struct ForgettingArgs {
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    weighting: Option<String>,
    /// input or state.
    #[arg(long)]
    kind: String,
    /// Past window A (input kind), CSV.
    #[arg(long)]
    past_a: Option<String>,
    /// Past window B (input kind), CSV.
    #[arg(long)]
    past_b: Option<String>,
    /// Common future window (input kind), CSV.
    #[arg(long)]
    future: Option<String>,
    /// Input window (state kind), CSV.
    #[arg(long)]
    input: Option<String>,
    /// First initial state, JSON array (state kind).
    #[arg(long)]
    x0: Option<String>,
    /// Second initial state, JSON array (state kind).
    #[arg(long)]
    x1: Option<String>,
    /// Attach the certified envelope (input kind; needs a certified
    /// contraction certificate).
    #[arg(long)]
    envelope: bool,
    /// Gap CSV destination (columns t, gap, envelope).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<String>,
}

pub fn forgetting(args: ForgettingArgs) -> Result<i32> {
    let config = load_config(args.config.as_deref())?;
    let system_path = args
        .system
        .or(config.system)
        .ok_or_else(|| anyhow!("--system is required (or set it in --config)"))?;
    let weighting_spec = args
        .weighting
        .or(config.weighting)
        .ok_or_else(|| anyhow!("--weighting is required (or set it in --config)"))?;
    let (_, sys) = load_system(&system_path)?;
    let w = parse_weighting(&weighting_spec)?;

    let report = match args.kind.as_str() {
        "input" => {
            let a = read_window(
                args.past_a.as_deref().ok_or_else(|| anyhow!("input kind needs --past-a"))?,
            )?;
            let b = read_window(
                args.past_b.as_deref().ok_or_else(|| anyhow!("input kind needs --past-b"))?,
            )?;
            let future = read_window(
                args.future.as_deref().ok_or_else(|| anyhow!("input kind needs --future"))?,
            )?;
            let cert = if args.envelope {
                Some(certify_contraction(&sys, &w, &SamplingSpec::default())?)
            } else {
                None
            };
            input_forgetting_experiment(&sys, &a, &b, &future, &w, cert.as_ref())?
        }
        "state" => {
            let z = read_window(
                args.input.as_deref().ok_or_else(|| anyhow!("state kind needs --input"))?,
            )?;
            let x0 = parse_vector(
                args.x0.as_deref().ok_or_else(|| anyhow!("state kind needs --x0"))?,
                "--x0",
            )?;
            let x1 = parse_vector(
                args.x1.as_deref().ok_or_else(|| anyhow!("state kind needs --x1"))?,
                "--x1",
            )?;
            state_forgetting_experiment(&sys, &z, &x0, &x1)?
        }
        other => bail!("unknown forgetting kind '{other}' (supported: input, state)"),
    };

    println!(
        "forgetting ({}): {} steps, max gap {}, violations {}",
        args.kind,
        report.gaps.len(),
        format_float(report.max_gap()),
        report.violations
    );
    if let Some(path) = args.out {
        write_forgetting_csv(&path, &report)?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn write_forgetting_csv(path: &Path, report: &ForgettingReport) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("creating CSV {}", path.display()))?;
    writer.write_record(["t", "gap", "envelope"])?;
    for (i, gap) in report.gaps.iter().enumerate() {
        let envelope = report
            .envelope
            .as_ref()
            .map(|env| format_float(env[i]))
            .unwrap_or_else(|| "-".into());
        writer.write_record(&[(i + 1).to_string(), format_float(*gap), envelope])?;
    }
    writer.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------

#[derive(Args)]
pub struct VolterraExtractArgs {
    #[arg(long)]
    system: Option<String>,
    /// Exact kernels of a nilpotent linear system with polynomial readout.
    #[arg(long, conflicts_with = "fd")]
    exact: bool,
    /// Finite-difference kernels of a certified smooth system.
    #[arg(long)]
    fd: bool,
    /// Kernel order J (finite differences; capped at 3).
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Kernel memory M_mem (finite differences).
    #[arg(long, default_value_t = 3)]
    memory: usize,
    /// Constant base window CSV; zero when omitted.
    #[arg(long)]
    base: Option<String>,
    /// Finite-difference step override.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<String>,
}

pub fn volterra_extract(args: VolterraExtractArgs) -> Result<i32> {
    let config = load_config(args.config.as_deref())?;
    let system_path = args
        .system
        .or(config.system)
        .ok_or_else(|| anyhow!("--system is required (or set it in --config)"))?;
    let (dto, sys) = load_system(&system_path)?;

    let kernels = if args.exact {
        let (a, c, _) = dto
            .linear_parts()
            .ok_or_else(|| anyhow!("--exact needs a linear-family system"))?;
        let h = readout_polynomial(&sys)?;
        extract_exact(&a, &c, &h)?
    } else if args.fd {
        let base = match &args.base {
            Some(path) => read_window(path)?,
            None => Window::zeros(args.memory + 1, sys.input_dim())?,
        };
        extract_fd(&sys, &base, args.order, args.memory, args.step)?
    } else {
        bail!("choose one of --exact or --fd");
    };

    println!(
        "kernels: order {}, memory {}, output dim {}, provenance {:?}",
        kernels.order(),
        kernels.memory(),
        kernels.output_dim(),
        kernels.provenance()
    );
    let out = args.out.or(config.out.map(PathBuf::from));
    if let Some(path) = out {
        write_json(&path, &KernelSetDto::from_core(&kernels)?)?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn readout_polynomial(sys: &ReservoirSystem) -> Result<rescert_core::reservoir::PolynomialMap> {
    match sys.readout() {
        Some(Readout::Polynomial(p)) => Ok(p.clone()),
        _ => bail!("--exact needs a polynomial readout on the system"),
    }
}

// ---------------------------------------------------------------------

#[derive(Args)]
pub struct VolterraEvalArgs {
    /// Kernel set JSON from volterra-extract.
    #[arg(long)]
    kernels: String,
    /// Input window CSV.
    #[arg(long)]
    input: String,
    /// Series values CSV destination (one row per evaluable time).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn volterra_eval(args: VolterraEvalArgs) -> Result<i32> {
    let kernels = load_kernels(&args.kernels)?;
    let z = read_window(&args.input)?;
    let rows = series_over_window(&kernels, &z)?;
    let at_zero = rows.last().expect("non-empty evaluation");
    println!(
        "series at time 0: [{}]",
        at_zero.1.iter().map(|v| format_float(*v)).collect::<Vec<_>>().join(", ")
    );
    if let Some(path) = args.out {
        let mut writer = csv::Writer::from_path(&path)
            .with_context(|| format!("creating CSV {}", path.display()))?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=kernels.output_dim()).map(|i| format!("y{i}")));
        writer.write_record(&header)?;
        for (t, values) in &rows {
            let mut row = vec![t.to_string()];
            row.extend(values.iter().map(|v| format_float(*v)));
            writer.write_record(&row)?;
        }
        writer.flush()?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

/// Evaluates the series at every time whose kernel support fits in the
/// window: time -k uses the sub-window ending k rows before the end.
fn series_over_window(
    kernels: &VolterraKernelSet,
    z: &Window,
) -> Result<Vec<(i64, Vec<f64>)>> {
    let needed = kernels.memory() + 1;
    if z.depth() < needed {
        bail!(
            "window depth {} is below the kernel support {}",
            z.depth(),
            needed
        );
    }
    let mut rows = Vec::new();
    for end in needed..=z.depth() {
        let sub = Window::new(z.values().rows(0, end).into_owned())?;
        let value = eval_series(kernels, &sub)?;
        let t = end as i64 - z.depth() as i64;
        rows.push((t, value.iter().copied().collect()));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------

#[derive(Args)]
pub struct BoundCheckArgs {
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    kernels: String,
    #[arg(long)]
    weighting: Option<String>,
    /// Domain ball radius M.
    #[arg(long)]
    ball_m: f64,
    /// Codomain ball radius L.
    #[arg(long)]
    ball_l: f64,
    #[arg(long, default_value_t = 12)]
    trials: usize,
    /// Slack covering finite-difference kernel error.
    #[arg(long, default_value_t = 1e-6)]
    slack: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<String>,
}

#[derive(Serialize)]
struct BoundCheckDto {
    rho: f64,
    max_error: f64,
    min_bound: f64,
    violations: usize,
}

#[derive(Serialize)]
struct BoundCheckReportDto {
    slack: f64,
    total_violations: usize,
    rows: Vec<BoundCheckDto>,
}

pub fn bound_check(args: BoundCheckArgs) -> Result<i32> {
    let config = load_config(args.config.as_deref())?;
    let system_path = args
        .system
        .or(config.system)
        .ok_or_else(|| anyhow!("--system is required (or set it in --config)"))?;
    let weighting_spec = args
        .weighting
        .or(config.weighting)
        .ok_or_else(|| anyhow!("--weighting is required (or set it in --config)"))?;
    let (_, sys) = load_system(&system_path)?;
    let w = parse_weighting(&weighting_spec)?;
    let kernels = load_kernels(&args.kernels)?;
    let seed = args.seed.or(config.seed).unwrap_or(0);

    let report = bound_check_experiment(
        &sys,
        &kernels,
        &w,
        args.trials,
        args.ball_m,
        args.ball_l,
        args.slack,
        seed,
    )?;

    println!("{:<6} {:<24} {:<24} violations", "rho", "max error", "min bound");
    for row in &report.rows {
        println!(
            "{:<6} {:<24} {:<24} {}",
            row.rho,
            format_float(row.max_error),
            format_float(row.min_bound),
            row.violations
        );
    }
    println!("total violations: {}", report.total_violations());

    if let Some(path) = args.out {
        let dto = BoundCheckReportDto {
            slack: report.slack,
            total_violations: report.total_violations(),
            rows: report
                .rows
                .iter()
                .map(|r| BoundCheckDto {
                    rho: r.rho,
                    max_error: r.max_error,
                    min_bound: r.min_bound,
                    violations: r.violations,
                })
                .collect(),
        };
        write_json(&path, &dto)?;
    }
    Ok(0)
}

// ---------------------------------------------------------------------

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    system: Option<String>,
    /// Base weighting JSON; lambda/d sweeps rebuild it per grid point.
    #[arg(long)]
    weighting: Option<String>,
    /// Grid spec `name=start:stop:count` with name one of a-scale,
    /// c-scale, lambda, d.
    #[arg(long)]
    param: String,
    /// Optional second grid axis.
    #[arg(long)]
    param2: Option<String>,
    /// Long-format CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SweepParam {
    AScale,
    CScale,
    Lambda,
    HarmonicD,
}

impl SweepParam {
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "a-scale" => SweepParam::AScale,
            "c-scale" => SweepParam::CScale,
            "lambda" => SweepParam::Lambda,
            "d" => SweepParam::HarmonicD,
            other => bail!(
                "unknown sweep parameter '{other}' (supported: a-scale, c-scale, lambda, d)"
            ),
        })
    }

    fn name(self) -> &'static str {
        match self {
            SweepParam::AScale => "a-scale",
            SweepParam::CScale => "c-scale",
            SweepParam::Lambda => "lambda",
            SweepParam::HarmonicD => "d",
        }
    }
}

fn parse_grid(spec: &str) -> Result<(SweepParam, Vec<f64>)> {
    let (name, rest) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("grid spec must look like name=start:stop:count"))?;
    let parts: Vec<&str> = rest.split(':').collect();
    if parts.len() != 3 {
        bail!("grid spec must look like name=start:stop:count, got '{spec}'");
    }
    let start: f64 = parts[0].parse().context("grid start")?;
    let stop: f64 = parts[1].parse().context("grid stop")?;
    let count: usize = parts[2].parse().context("grid count")?;
    if count == 0 {
        bail!("grid count must be >= 1");
    }
    let values = if count == 1 {
        vec![start]
    } else {
        (0..count)
            .map(|i| start + (stop - start) * i as f64 / (count as f64 - 1.0))
            .collect()
    };
    Ok((SweepParam::parse(name)?, values))
}

fn apply_sweep_point(
    dto: &SystemDto,
    base_w: &WeightingSequence,
    assignments: &[(SweepParam, f64)],
) -> Result<(ReservoirSystem, WeightingSequence)> {
    let mut dto = dto.clone();
    let mut w = base_w.clone();
    for (param, value) in assignments {
        match param {
            SweepParam::AScale => dto = dto.scale_state_matrix(*value),
            SweepParam::CScale => dto = dto.scale_input_matrix(*value),
            SweepParam::Lambda => w = WeightingSequence::geometric(*value)?,
            SweepParam::HarmonicD => w = WeightingSequence::harmonic(*value)?,
        }
    }
    Ok((dto.to_core()?, w))
}

pub fn sweep(args: SweepArgs) -> Result<i32> {
    let config = load_config(args.config.as_deref())?;
    let system_path = args
        .system
        .or(config.system)
        .ok_or_else(|| anyhow!("--system is required (or set it in --config)"))?;
    let weighting_spec = args
        .weighting
        .or(config.weighting)
        .ok_or_else(|| anyhow!("--weighting is required (or set it in --config)"))?;
    let (dto, _) = load_system(&system_path)?;
    let base_w = parse_weighting(&weighting_spec)?;

    let (p1, grid1) = parse_grid(&args.param)?;
    let second = args.param2.as_deref().map(parse_grid).transpose()?;

    // Cartesian grid, deterministic ordering by index.
    let mut points: Vec<Vec<(SweepParam, f64)>> = Vec::new();
    match &second {
        None => {
            for &v1 in &grid1 {
                points.push(vec![(p1, v1)]);
            }
        }
        Some((p2, grid2)) => {
            for &v1 in &grid1 {
                for &v2 in grid2 {
                    points.push(vec![(p1, v1), (*p2, v2)]);
                }
            }
        }
    }

    let rows: Vec<Result<Vec<String>>> = points
        .par_iter()
        .map(|assignments| {
            let (sys, w) = apply_sweep_point(&dto, &base_w, assignments)?;
            let cert = certify_contraction(&sys, &w, &SamplingSpec::default())?;
            let mut row = Vec::new();
            for (param, value) in assignments {
                row.push(param.name().to_string());
                row.push(format_float(*value));
            }
            row.push(if cert.lhs_value.is_finite() {
                format_float(cert.lhs_value)
            } else {
                "inf".to_string()
            });
            row.push(verdict_name(cert.verdict).to_string());
            row.push(
                cert.implied
                    .filter_lipschitz
                    .map(format_float)
                    .unwrap_or_else(|| "-".to_string()),
            );
            Ok(row)
        })
        .collect();

    let mut header = vec!["param1".to_string(), "value1".to_string()];
    if second.is_some() {
        header.push("param2".to_string());
        header.push("value2".to_string());
    }
    header.extend(["lhs".to_string(), "verdict".to_string(), "filter_lipschitz".to_string()]);

    let out = args.out.or(config.out.map(PathBuf::from));
    match out {
        Some(path) => {
            let mut writer = csv::Writer::from_path(&path)
                .with_context(|| format!("creating CSV {}", path.display()))?;
            writer.write_record(&header)?;
            for row in rows {
                writer.write_record(&row?)?;
            }
            writer.flush()?;
            println!("wrote {}", path.display());
        }
        None => {
            println!("{}", header.join(","));
            for row in rows {
                println!("{}", row?.join(","));
            }
        }
    }
    Ok(0)
}
