//! The four experiment commands.

use crate::config::{get_f64, get_string, get_usize, load_table, parse_grid};
use crate::output::{csv, RunDir};
use crate::Common;
use anyhow::{Context, Result};
use clap::Args;
use liftmac_core::bounds::{check_front_contraction, verify_convergence_chain, LogQuantity};
use liftmac_core::coupled::{coupling_threshold, scheme_from_name, ThresholdResult};
use liftmac_core::de::{ber_curve, BerPoint, PartitionDegree};
use liftmac_core::demod::{demodulate, DemodReport, VarianceMode};
use liftmac_core::frame::{generate, read_frame, rebuild, write_frame};
use liftmac_core::gkernel::{GEval, GKernel, MemoGKernel};
use liftmac_core::graph::SystemConfig;
use liftmac_core::quad::{integrate_adaptive, npdf, qfunc};
use liftmac_core::rng::{domain, RngStream};
use liftmac_core::signals::{angle_density, projection_power_onto_span, sample_unit_vector};
use rayon::prelude::*;
use serde::Serialize;
use std::process::ExitCode;

fn partition_degree(m: usize) -> PartitionDegree {
    if m == 0 {
        PartitionDegree::Infinite
    } else {
        PartitionDegree::Finite(m as u32)
    }
}

// ---------------------------------------------------------------------------
// de
// ---------------------------------------------------------------------------

#[derive(Args, Debug, Clone, Serialize)]
pub struct DeArgs {
    /// System load α = K/N.
    #[arg(long)]
    alpha: Option<f64>,

    /// SNR grid in dB: `start:step:end`, a comma list, or one value.
    #[arg(long)]
    snr: Option<String>,

    /// Partition degree M (0 = the large-M limit).
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Serialize)]
struct DeResults {
    alpha: f64,
    m: usize,
    points: Vec<BerPoint>,
    awgn_reference: Vec<BerPoint>,
    multi_solution_points: Vec<f64>,
}

pub fn run_de(common: &Common, args: DeArgs) -> Result<ExitCode> {
    let defaults = load_table(common.config.as_deref(), "de")?;
    let alpha = args.alpha.or_else(|| get_f64(&defaults, "alpha")).unwrap_or(1.0);
    let snr_spec = args
        .snr
        .or_else(|| get_string(&defaults, "snr"))
        .unwrap_or_else(|| "0:0.5:12".to_string());
    let m = args.m.or_else(|| get_usize(&defaults, "m")).unwrap_or(0);
    anyhow::ensure!(alpha >= 0.0, "load must be >= 0");
    let grid = parse_grid(&snr_spec)?;
    let pd = partition_degree(m);

    let run = RunDir::create(common.out.as_deref(), "de")?;
    let points = ber_curve(alpha, &grid, pd)?;
    let awgn = ber_curve(0.0, &grid, pd)?;
    let multi: Vec<f64> = points
        .iter()
        .filter(|p| p.multiplicity > 1)
        .map(|p| p.snr_db)
        .collect();

    let mut rows = Vec::new();
    for p in points.iter() {
        rows.push(vec![
            format!("{alpha}"),
            format!("{}", p.snr_db),
            format!("{:e}", p.sigma2),
            format!("{:.12e}", p.gamma_sq),
            format!("{:.12e}", p.pb),
            format!("{}", p.multiplicity),
        ]);
    }
    for p in awgn.iter() {
        rows.push(vec![
            "0".to_string(),
            format!("{}", p.snr_db),
            format!("{:e}", p.sigma2),
            format!("{:.12e}", p.gamma_sq),
            format!("{:.12e}", p.pb),
            "1".to_string(),
        ]);
    }
    run.write_text(
        "results.csv",
        &csv(&["alpha", "snr_db", "sigma2", "gamma_sq", "pb", "multiplicity"], &rows),
    )?;
    let results = DeResults { alpha, m, points, awgn_reference: awgn, multi_solution_points: multi };
    run.write_json("results.json", &results)?;

    #[derive(Serialize)]
    struct Params {
        alpha: f64,
        snr: String,
        m: usize,
    }
    run.write_manifest("de", None, &Params { alpha, snr: snr_spec, m })?;
    for p in &results.points {
        println!(
            "alpha {alpha} snr {:>6.2} dB: pb {:.4e} (awgn {:.4e}, solutions {})",
            p.snr_db, p.pb, p.pb_awgn, p.multiplicity
        );
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// threshold
// ---------------------------------------------------------------------------

#[derive(Args, Debug, Clone, Serialize)]
pub struct ThresholdArgs {
    /// Comma list of window half-widths W.
    #[arg(long)]
    window: Option<String>,

    /// Also search the one-neighbor scheme with this keep fraction a.
    #[arg(long = "simple-a")]
    simple_a: Option<f64>,

    /// Any registered scheme spec (e.g. `window:5`, `simple:0.5`).
    #[arg(long)]
    scheme: Vec<String>,

    /// Noise variance (default 0: the interference-limited regime).
    #[arg(long)]
    noise_var: Option<f64>,

    /// Chain length T (default max(300, 30·(2W+1)) per scheme).
    #[arg(long = "chain-len")]
    chain_len: Option<usize>,

    /// Iteration budget per probe.
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,

    /// Bisection tolerance on the load.
    #[arg(long = "alpha-tol")]
    alpha_tol: Option<f64>,
}

pub fn run_threshold(common: &Common, args: ThresholdArgs) -> Result<ExitCode> {
    let defaults = load_table(common.config.as_deref(), "threshold")?;
    let noise_var = args.noise_var.or_else(|| get_f64(&defaults, "noise_var")).unwrap_or(0.0);
    let max_iter = args.max_iter.or_else(|| get_usize(&defaults, "max_iter")).unwrap_or(200_000);
    let alpha_tol = args.alpha_tol.or_else(|| get_f64(&defaults, "alpha_tol")).unwrap_or(0.01);
    let window_spec = args.window.or_else(|| get_string(&defaults, "window"));
    let simple_a = args.simple_a.or_else(|| get_f64(&defaults, "simple_a"));

    let mut schemes: Vec<String> = Vec::new();
    if let Some(ws) = &window_spec {
        for w in ws.split(',') {
            schemes.push(format!("window:{}", w.trim()));
        }
    }
    if let Some(a) = simple_a {
        schemes.push(format!("simple:{a}"));
    }
    schemes.extend(args.scheme.iter().cloned());
    anyhow::ensure!(!schemes.is_empty(), "nothing to search: give --window, --simple-a or --scheme");

    let run = RunDir::create(common.out.as_deref(), "threshold")?;
    let g = MemoGKernel::shared();
    let results: Vec<ThresholdResult> = schemes
        .par_iter()
        .map(|spec| {
            let scheme = scheme_from_name(spec).map_err(anyhow::Error::from)?;
            let chain = args
                .chain_len
                .or_else(|| get_usize(&defaults, "chain_len"))
                .unwrap_or_else(|| scheme.min_chain_len().max(300) * 3 / 2);
            coupling_threshold(scheme.as_ref(), noise_var, chain, max_iter, alpha_tol, g)
                .map_err(anyhow::Error::from)
        })
        .collect::<Result<_>>()?;

    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.scheme.clone(),
                format!("{:.4}", r.alpha_threshold),
                format!("{}", r.chain_len),
                format!("{}", r.iterations_used),
                format!("{}", r.censored),
            ]
        })
        .collect();
    run.write_text(
        "results.csv",
        &csv(&["scheme", "alpha_threshold", "chain_len", "iterations_used", "censored"], &rows),
    )?;
    run.write_json("results.json", &results)?;
    #[derive(Serialize)]
    struct Params {
        schemes: Vec<String>,
        noise_var: f64,
        max_iter: usize,
        alpha_tol: f64,
    }
    run.write_manifest("threshold", None, &Params { schemes, noise_var, max_iter, alpha_tol })?;

    let mut censored = false;
    for r in &results {
        println!(
            "{}: threshold {:.3}{}",
            r.scheme,
            r.alpha_threshold,
            if r.censored {
                censored = true;
                "  [censored: budget or chain too small]"
            } else {
                ""
            }
        );
    }
    Ok(if censored { ExitCode::from(4) } else { ExitCode::SUCCESS })
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    l: Option<usize>,
    /// SNR in dB (σ² = 10^(-SNR/10)).
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Give each user an orthonormal fragment basis per block.
    #[arg(long)]
    orthogonal: bool,
    /// Estimate the per-iteration variance from the true symbols
    /// (instrumentation) instead of the lockstep recursion.
    #[arg(long = "empirical-variance")]
    empirical_variance: bool,
    /// Write each trial's received frame to this directory for replay.
    #[arg(long = "dump-frames")]
    dump_frames: Option<std::path::PathBuf>,
    /// Demodulate one stored frame instead of generating trials.
    #[arg(long)]
    replay: Option<std::path::PathBuf>,
}

#[derive(Serialize)]
struct TrialRecord {
    trial: usize,
    seed: u64,
    errors: usize,
    data_bits: usize,
    final_sir: f64,
}

#[derive(Serialize)]
struct SimulateResults {
    config: SystemConfig,
    iterations: usize,
    variance_mode: VarianceMode,
    trials: Vec<TrialRecord>,
    total_errors: usize,
    total_bits: usize,
    ber: f64,
    /// Normal-approximation 3σ interval on the simulated BER.
    ber_ci: (f64, f64),
    /// Q(γ∞) from the finite-size lockstep recursion.
    predicted_pb: f64,
    prediction_within_ci: bool,
}

pub fn run_simulate(common: &Common, args: SimulateArgs) -> Result<ExitCode> {
    let run = RunDir::create(common.out.as_deref(), "simulate")?;
    if let Some(path) = &args.replay {
        let frame = read_frame(std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?)?;
        let iterations = args.iterations.unwrap_or(50);
        let (topo, wf, _) = rebuild(&frame.cfg, frame.seed, args.orthogonal)?;
        let report = demodulate(&frame, &topo, &wf, iterations, VarianceMode::Analytic)?;
        run.write_json("results.json", &ReplayOut { config: frame.cfg.clone(), seed: frame.seed, report: &report })?;
        run.write_manifest("simulate", Some(frame.seed), &args)?;
        println!(
            "replayed {}: {} errors over {} data bits",
            path.display(),
            report.bit_error_count,
            report.data_bits
        );
        return Ok(ExitCode::SUCCESS);
    }

    #[derive(Serialize)]
    struct ReplayOut<'a> {
        config: SystemConfig,
        seed: u64,
        report: &'a DemodReport,
    }

    let defaults = load_table(common.config.as_deref(), "simulate")?;
    let k = args.k.or_else(|| get_usize(&defaults, "k")).unwrap_or(32);
    let n = args.n.or_else(|| get_usize(&defaults, "n")).unwrap_or(32);
    let m = args.m.or_else(|| get_usize(&defaults, "m")).unwrap_or(8);
    let l = args.l.or_else(|| get_usize(&defaults, "l")).unwrap_or(64);
    let snr = args.snr.or_else(|| get_f64(&defaults, "snr")).unwrap_or(10.0);
    let trials = args.trials.or_else(|| get_usize(&defaults, "trials")).unwrap_or(200);
    let iterations = args.iterations.or_else(|| get_usize(&defaults, "iterations")).unwrap_or(50);
    let seed = args.seed.unwrap_or(1);
    let noise_var = 10f64.powf(-snr / 10.0);
    let cfg = SystemConfig::uncoupled(k, n, m, l, noise_var);
    cfg.validate()?;
    let mode = if args.empirical_variance { VarianceMode::Empirical } else { VarianceMode::Analytic };

    if let Some(dir) = &args.dump_frames {
        std::fs::create_dir_all(dir)?;
    }
    let records: Vec<TrialRecord> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<TrialRecord> {
            let trial_seed = seed.wrapping_add(t as u64);
            let (topo, wf, frame) = generate(&cfg, trial_seed, args.orthogonal)?;
            if let Some(dir) = &args.dump_frames {
                let f = std::fs::File::create(dir.join(format!("frame-{trial_seed}.lmfr")))?;
                write_frame(&frame, std::io::BufWriter::new(f))?;
            }
            let rep = demodulate(&frame, &topo, &wf, iterations, mode)?;
            Ok(TrialRecord {
                trial: t,
                seed: trial_seed,
                errors: rep.bit_error_count,
                data_bits: rep.data_bits,
                final_sir: *rep.per_iteration_sir.last().unwrap_or(&f64::NAN),
            })
        })
        .collect::<Result<_>>()?;

    let total_errors: usize = records.iter().map(|r| r.errors).sum();
    let total_bits: usize = records.iter().map(|r| r.data_bits).sum();
    let ber = total_errors as f64 / total_bits as f64;

    // finite-size lockstep prediction at the same iteration count
    let g = GKernel::shared();
    let mut x = f64::INFINITY;
    for _ in 0..iterations {
        x = if x.is_infinite() {
            ((k * m - 1) as f64) / ((n * m) as f64) + noise_var
        } else {
            liftmac_core::de::de_step_finite_size(x, k as u32, n as u32, m as u32, noise_var, g)?
        };
    }
    let predicted_pb = qfunc((1.0 / x).sqrt());
    let sigma = (ber.max(predicted_pb) * (1.0 - ber.max(predicted_pb)) / total_bits as f64).sqrt();
    let ci = (ber - 3.0 * sigma, ber + 3.0 * sigma);
    let within = predicted_pb >= ci.0 && predicted_pb <= ci.1;

    let results = SimulateResults {
        config: cfg,
        iterations,
        variance_mode: mode,
        trials: records,
        total_errors,
        total_bits,
        ber,
        ber_ci: ci,
        predicted_pb,
        prediction_within_ci: within,
    };
    run.write_json("results.json", &results)?;
    run.write_manifest("simulate", Some(seed), &args)?;
    println!(
        "ber {ber:.4e} ({total_errors}/{total_bits}) vs predicted {predicted_pb:.4e}; 3σ CI [{:.4e}, {:.4e}]{}",
        ci.0,
        ci.1,
        if within { "" } else { "  [prediction outside CI]" }
    );
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyArgs {
    /// Which verification suite: `a` (bound chain) or `b` (projection
    /// geometry).
    #[arg(long)]
    appendix: Option<String>,

    /// Loads for the bound chain (comma list).
    #[arg(long)]
    alpha: Option<String>,

    /// Dimension for the projection geometry checks.
    #[arg(long)]
    n: Option<usize>,

    /// Samples for the Monte Carlo geometry checks.
    #[arg(long)]
    samples: Option<usize>,

    /// Run the kernel integrity checks (quadrature vs adaptive oracle,
    /// monotonicity, envelope bounds).
    #[arg(long)]
    gkernel: bool,
}

#[derive(Serialize)]
struct VerifyLine {
    name: String,
    pass: bool,
    detail: String,
}

pub fn run_verify(common: &Common, args: VerifyArgs) -> Result<ExitCode> {
    let defaults = load_table(common.config.as_deref(), "verify")?;
    let run = RunDir::create(common.out.as_deref(), "verify")?;
    let mut lines: Vec<VerifyLine> = Vec::new();

    match args.appendix.as_deref() {
        Some("a") => {
            let alphas = args
                .alpha
                .clone()
                .or_else(|| get_string(&defaults, "alpha"))
                .unwrap_or_else(|| "3".into());
            for a in parse_grid(&alphas)? {
                let report = verify_convergence_chain(a)?;
                for c in &report.checks {
                    lines.push(VerifyLine {
                        name: format!("chain alpha {a}: {}", c.name),
                        pass: c.holds,
                        detail: format!("log lhs {:.6e} vs log rhs {:.6e}", c.log_lhs, c.log_rhs),
                    });
                }
                run.write_json(&format!("bound-chain-alpha-{a}.json"), &report)?;
                // a deliberately undersized window must break the chain
                let small = check_front_contraction(a, LogQuantity::from_value(10.0)?)?;
                lines.push(VerifyLine {
                    name: format!("chain alpha {a}: window 10 breaks"),
                    pass: !small.all_hold,
                    detail: "expected failure demonstrates the window requirement".into(),
                });
            }
        }
        Some("b") => {
            let n = args.n.or_else(|| get_usize(&defaults, "n")).unwrap_or(64);
            let k = 8.min(n / 2).max(1);
            let samples = args.samples.or_else(|| get_usize(&defaults, "samples")).unwrap_or(100_000);
            lines.extend(geometry_checks(n, k, samples));
        }
        Some(other) => anyhow::bail!("unknown appendix {other:?}: use a or b"),
        None => {
            anyhow::ensure!(args.gkernel, "nothing to verify: give --appendix a|b and/or --gkernel");
        }
    }

    if args.gkernel {
        lines.extend(kernel_checks());
    }

    let all = lines.iter().all(|l| l.pass);
    for l in &lines {
        println!("[{}] {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail);
    }
    run.write_json("results.json", &lines)?;
    run.write_manifest("verify", None, &args)?;
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn geometry_checks(n: usize, k: usize, samples: usize) -> Vec<VerifyLine> {
    let mut lines = Vec::new();

    let stats: (f64, f64) = (0..samples)
        .into_par_iter()
        .map(|i| {
            let a = sample_unit_vector(n, RngStream::scoped(61, domain::MISC, 2 * i as u64)).unwrap();
            let b = sample_unit_vector(n, RngStream::scoped(61, domain::MISC, 2 * i as u64 + 1)).unwrap();
            let r = a.dot(&b).powi(2);
            (r, r * r)
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
    let mean = stats.0 / samples as f64;
    let var = (stats.1 / samples as f64 - mean * mean).max(0.0);
    let se = (var / samples as f64).sqrt();
    let want = 1.0 / n as f64;
    lines.push(VerifyLine {
        name: format!("pairwise projection power (n = {n})"),
        pass: (mean - want).abs() <= 4.0 * se,
        detail: format!("{mean:.6} vs {want:.6} ± {:.2e}", 4.0 * se),
    });

    let stats: (f64, f64) = (0..samples)
        .into_par_iter()
        .map(|i| {
            let span_seed = (i / 1000) as u64;
            let span: Vec<_> = (0..k)
                .map(|j| {
                    sample_unit_vector(n, RngStream::scoped(62, domain::MISC, span_seed * 64 + j as u64)).unwrap()
                })
                .collect();
            let x = sample_unit_vector(n, RngStream::scoped(63, domain::MISC, i as u64)).unwrap();
            let p = projection_power_onto_span(&x, &span).unwrap();
            (p, p * p)
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
    let mean = stats.0 / samples as f64;
    let var = (stats.1 / samples as f64 - mean * mean).max(0.0);
    let se = (var / samples as f64).sqrt();
    let want = k as f64 / n as f64;
    lines.push(VerifyLine {
        name: format!("subspace projection power (n = {n}, k = {k})"),
        pass: (mean - want).abs() <= 4.0 * se,
        detail: format!("{mean:.6} vs {want:.6} ± {:.2e}", 4.0 * se),
    });

    let total = integrate_adaptive(
        &|phi| angle_density(phi, n, k).unwrap(),
        0.0,
        std::f64::consts::FRAC_PI_2,
        1e-12,
    );
    lines.push(VerifyLine {
        name: format!("angle density normalization (n = {n}, k = {k})"),
        pass: (total - 1.0).abs() <= 1e-8,
        detail: format!("integral {total:.12}"),
    });
    let m2 = integrate_adaptive(
        &|phi: f64| angle_density(phi, n, k).unwrap() * phi.cos().powi(2),
        0.0,
        std::f64::consts::FRAC_PI_2,
        1e-12,
    );
    lines.push(VerifyLine {
        name: format!("angle density cos² moment (n = {n}, k = {k})"),
        pass: (m2 - want).abs() <= 1e-8,
        detail: format!("{m2:.12} vs {want:.12}"),
    });
    lines
}

fn kernel_checks() -> Vec<VerifyLine> {
    let kern = GKernel::shared();
    let mut worst_rel = 0.0f64;
    let mut decreasing = true;
    let mut bounds_ok = true;
    let mut prev = kern.eval(0.0);
    for i in 1..=200 {
        let s = 100.0 * i as f64 / 200.0;
        let v = kern.eval(s);
        decreasing &= v < prev;
        prev = v;
        let reference = g_reference(s);
        worst_rel = worst_rel.max((v - reference).abs() / reference);
        bounds_ok &= v <= std::f64::consts::PI * qfunc(s.sqrt()) * (1.0 + 1e-12);
        bounds_ok &= v <= (-s / 2.0).exp() * (1.0 + 1e-12);
    }
    vec![
        VerifyLine {
            name: "kernel vs adaptive oracle".into(),
            pass: worst_rel <= 1e-10,
            detail: format!("worst relative deviation {worst_rel:.2e}"),
        },
        VerifyLine {
            name: "kernel strictly decreasing".into(),
            pass: decreasing,
            detail: "200-point grid on [0, 100]".into(),
        },
        VerifyLine {
            name: "kernel envelope bounds".into(),
            pass: bounds_ok,
            detail: "g ≤ π Q(√s) and g ≤ exp(-s/2) on the grid".into(),
        },
        VerifyLine {
            name: "kernel value at 0".into(),
            pass: kern.eval(0.0) == 1.0,
            detail: "g(0) = 1 exactly".into(),
        },
    ]
}

/// Adaptive-quadrature reference in the original variable, independent of the
/// production evaluation paths.
fn g_reference(s: f64) -> f64 {
    if s == 0.0 {
        return 1.0;
    }
    let rs = s.sqrt();
    let f = |xi: f64| {
        let u = s + rs * xi;
        let t = if u >= 0.0 {
            let e = (-2.0 * u).exp();
            2.0 * e / (1.0 + e)
        } else {
            2.0 / ((2.0 * u).exp() + 1.0)
        };
        npdf(xi) * t * t
    };
    let scale = npdf(rs.min(16.0));
    integrate_adaptive(&f, -16.0, -rs.clamp(0.0, 15.0), (scale * 1e-14).max(1e-320))
        + integrate_adaptive(&f, -rs.clamp(0.0, 15.0), 16.0, (scale * 1e-14).max(1e-320))
}
