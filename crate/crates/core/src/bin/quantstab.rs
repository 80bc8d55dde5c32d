//! Command-line front end: data checks, controller synthesis, density
//! maximization, H-infinity oracles, witnesses, and Monte Carlo sweeps.
//!
//! Exit codes: 0 success, 1 negative verdict (infeasible synthesis,
//! failed data check, failed verification), 2 usage error, 3 numerical
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use quantstab::adversarial::{build_witness, informativity_report, WitnessOutcome};
use quantstab::certificates::{
    hinf_norm_bisection, mahler_measure, maximize_density, solve_fixed_density, DensityOutcome,
    SynthesisOutcome,
};
use quantstab::data::{
    example1_data, rank_condition, NoiseBound, TrajectoryData, UncertaintyEllipsoid,
};
use quantstab::error::Error;
use quantstab::experiments::{
    emit_plot_data, run_noise_sweep, run_prior_sweep, sample_ball_noise, ExperimentConfig,
    SystemSource,
};
use quantstab::io::{
    certificate_from_json, certificate_to_json, matrix_from_json, matrix_to_json,
    noise_bound_to_json, vector_from_json, Document,
};
use quantstab::lti::{
    frequency_response_norm, simulate_open_loop, spectral_radius, ClosedLoopSystem, LinearSystem,
};
use quantstab::sdp::SolveOptions;

#[derive(Parser)]
#[command(name = "quantstab", version, about = "Data-driven stabilization with logarithmically quantized feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonIo {
    /// Input JSON document.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Output JSON path; printed to stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolverFlags {
    /// Margin substituted for strict inequalities.
    #[arg(long, default_value_t = 1e-6)]
    eps_margin: f64,
    /// Feasibility tolerance of the independent re-validation.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

impl SolverFlags {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            strict_margin: self.eps_margin,
            revalidation_tol: self.tol,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct SweepFlags {
    /// Output CSV path (a companion JSON with per-trial detail is
    /// written next to it).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Trials per grid point.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Use 1000 trials per grid point.
    #[arg(long)]
    full_scale: bool,
    /// Master seed (falls back to QUANTSTAB_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// System source per trial.
    #[arg(long, value_enum, default_value = "benchmark")]
    system: SystemChoice,
    /// Also run the H-infinity oracle on every verification sample.
    #[arg(long)]
    verify_hinf: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SystemChoice {
    Benchmark,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the open loop of a system document and write a data set.
    Simulate {
        #[command(flatten)]
        io: CommonIo,
        /// Horizon length.
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Squared radius of the per-step noise ball.
        #[arg(long, default_value_t = 0.0)]
        omega_max: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rank, Slater, and boundedness diagnostics for a data set.
    CheckData {
        #[command(flatten)]
        io: CommonIo,
    },
    /// Synthesize a gain at a fixed quantization density.
    Stabilize {
        #[command(flatten)]
        io: CommonIo,
        /// Sector radius in (0,1); mutually exclusive with --rho.
        #[arg(long, conflicts_with = "rho")]
        delta: Option<f64>,
        /// Quantization density in (0,1).
        #[arg(long)]
        rho: Option<f64>,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Maximize the sector radius (coarsest density).
    Coarsest {
        #[command(flatten)]
        io: CommonIo,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// H-infinity norm of K(zI - A - BK)^{-1}B via both oracles.
    Hinf {
        #[command(flatten)]
        io: CommonIo,
    },
    /// Re-check a saved certificate against a saved data set.
    Verify {
        /// Certificate JSON.
        #[arg(long, value_name = "FILE")]
        cert: PathBuf,
        #[command(flatten)]
        io: CommonIo,
        #[arg(long)]
        seed: Option<u64>,
        /// Verification samples drawn from the uncertainty set.
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Unbounded-eigenvalue witness for rank-deficient data.
    Witness {
        #[command(flatten)]
        io: CommonIo,
        /// Scale k of the witness family.
        #[arg(long, default_value_t = 1e3)]
        k_scale: f64,
    },
    /// Noise-level sweep (feasibility fraction and mean density margin).
    SweepNoise {
        #[command(flatten)]
        sweep: SweepFlags,
    },
    /// Prior-inflation sweep at fixed noise level.
    SweepPrior {
        #[command(flatten)]
        sweep: SweepFlags,
    },
    /// The rank-deficient two-state fixture: bounded eigenvalues under
    /// unbounded entries, failed rank condition, and a witness.
    Example1 {
        /// Output JSON path; printed to stdout when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NumericalFailure(_) | Error::UnboundedUncertainty => ExitCode::from(3),
                Error::UnstableClosedLoop => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| std::env::var("QUANTSTAB_SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(0)
}

fn read_json(path: &Path) -> Result<Value, Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write_output(out: &Option<PathBuf>, value: &Value) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

/// Loads a data document and builds its uncertainty ellipsoid.
fn load_problem(
    path: &Path,
) -> Result<(Document, TrajectoryData, DVector<f64>, NoiseBound, UncertaintyEllipsoid), Error> {
    let doc = Document::from_json(&read_json(path)?)?;
    let data = doc
        .trajectory
        .clone()
        .ok_or_else(|| Error::InvalidParameter("document has no trajectory data".into()))?;
    let b = doc.input_vector()?;
    let bound = doc
        .noise_bound
        .clone()
        .ok_or_else(|| Error::InvalidParameter("document has no noise bound".into()))?;
    let b_mat = DMatrix::from_column_slice(b.nrows(), 1, b.as_slice());
    let ell = UncertaintyEllipsoid::build(&data, &b_mat, &bound)?;
    Ok((doc, data, b, bound, ell))
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Simulate { io, steps, omega_max, seed } => {
            let doc = Document::from_json(&read_json(&io.input)?)?;
            let sys = doc
                .system
                .ok_or_else(|| Error::InvalidParameter("simulate needs A and B".into()))?;
            let seed = resolve_seed(seed);
            use quantstab::data::{mix, standard_normal};
            let mut rng: rand_chacha::ChaCha8Rng = rand::SeedableRng::seed_from_u64(mix(seed, 1));
            let n = sys.dim();
            let x0 = DVector::from_fn(n, |_, _| standard_normal(&mut rng));
            let inputs: Vec<f64> = (0..steps).map(|_| standard_normal(&mut rng)).collect();
            let noise = sample_ball_noise(n, omega_max, steps, mix(seed, 2));
            let data = simulate_open_loop(&sys, &x0, &inputs, &noise)?;
            let bound = NoiseBound::energy_ball(n, steps, omega_max)?;
            let out_doc = Document {
                system: Some(sys.clone()),
                b: Some(sys.b().clone()),
                trajectory: Some(data),
                noise_bound: Some(bound),
            };
            write_output(&io.out, &out_doc.to_json())?;
            println!(
                "simulated horizon {steps} with noise ball radius^2 {omega_max} (seed {seed})"
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckData { io } => {
            let (_, data, _, _, ell) = load_problem(&io.input)?;
            let report = informativity_report(&data, &ell)?;
            let ok = report.rank_condition;
            let value = serde_json::to_value(&report)?;
            write_output(&io.out, &value)?;
            println!(
                "rank {} of {}; slater {}; bounded {}",
                report.rank, report.state_dimension, report.slater, report.sigma_bounded
            );
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Stabilize { io, delta, rho, solver, seed } => {
            let delta = match (delta, rho) {
                (Some(d), None) => d,
                (None, Some(r)) => {
                    if !(0.0 < r && r < 1.0) {
                        return Err(Error::InvalidParameter("rho must be in (0,1)".into()));
                    }
                    (1.0 - r) / (1.0 + r)
                }
                _ => {
                    return Err(Error::InvalidParameter(
                        "exactly one of --delta or --rho is required".into(),
                    ))
                }
            };
            let (_, _, b, _, ell) = load_problem(&io.input)?;
            let b_mat = DMatrix::from_column_slice(b.nrows(), 1, b.as_slice());
            match solve_fixed_density(&ell, &b_mat, delta, &solver.options())? {
                SynthesisOutcome::Feasible(cert) => {
                    let verification = quantstab::certificates::verify_certificate(
                        &ell,
                        &b,
                        &cert,
                        50,
                        resolve_seed(seed),
                        true,
                    )
                    .ok();
                    let value = certificate_to_json(&cert, verification.as_ref());
                    write_output(&io.out, &value)?;
                    println!(
                        "feasible at delta {delta:.6} (rho {:.6}); K = {:?}",
                        cert.rho,
                        cert.k.as_slice()
                    );
                    Ok(ExitCode::SUCCESS)
                }
                SynthesisOutcome::Infeasible { stats, slater_ok } => {
                    let value = json!({
                        "status": "infeasible",
                        "delta": delta,
                        "slater": slater_ok,
                        "solver": stats,
                    });
                    write_output(&io.out, &value)?;
                    println!("infeasible at delta {delta:.6}");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Coarsest { io, solver, seed } => {
            let (_, _, b, _, ell) = load_problem(&io.input)?;
            let b_mat = DMatrix::from_column_slice(b.nrows(), 1, b.as_slice());
            match maximize_density(&ell, &b_mat, &solver.options())? {
                DensityOutcome::Feasible(result) => {
                    let verification = quantstab::certificates::verify_certificate(
                        &ell,
                        &b,
                        &result.certificate,
                        50,
                        resolve_seed(seed),
                        true,
                    )
                    .ok();
                    let value = json!({
                        "delta_star": result.delta_star,
                        "delta_sq": result.delta_sq,
                        "rho_star": result.rho_star,
                        "certificate": certificate_to_json(&result.certificate, verification.as_ref()),
                    });
                    write_output(&io.out, &value)?;
                    println!(
                        "coarsest density rho* {:.6} (delta* {:.6})",
                        result.rho_star, result.delta_star
                    );
                    Ok(ExitCode::SUCCESS)
                }
                DensityOutcome::Infeasible { stats, slater_ok } => {
                    let value = json!({
                        "status": "infeasible",
                        "slater": slater_ok,
                        "solver": stats,
                    });
                    write_output(&io.out, &value)?;
                    println!("no stabilizing quantized feedback found");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Hinf { io } => {
            let v = read_json(&io.input)?;
            let obj = v
                .as_object()
                .ok_or_else(|| Error::InvalidParameter("expected a JSON object".into()))?;
            let a = matrix_from_json(
                obj.get("A").ok_or_else(|| Error::InvalidParameter("missing A".into()))?,
                "A",
            )?;
            let b = vector_from_json(
                obj.get("B").ok_or_else(|| Error::InvalidParameter("missing B".into()))?,
                "B",
            )?;
            let k = matrix_from_json(
                obj.get("K").ok_or_else(|| Error::InvalidParameter("missing K".into()))?,
                "K",
            )?;
            let bisection = hinf_norm_bisection(&a, &b, &k)?;
            let sys = LinearSystem::new(a.clone(), b)?;
            let cl = ClosedLoopSystem::new(sys, k, None)?;
            let grid = frequency_response_norm(&cl, 4096)?;
            let value = json!({
                "hinf_bisection": bisection,
                "hinf_grid": grid,
                "mahler_measure": mahler_measure(&a),
            });
            write_output(&io.out, &value)?;
            println!("hinf {bisection:.6} (grid oracle {grid:.6})");
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { cert, io, seed, samples } => {
            let (k, y, delta) = certificate_from_json(&read_json(&cert)?)?;
            let (_, _, b, _, ell) = load_problem(&io.input)?;
            let p = y
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::NumericalFailure("certificate Y is singular".into()))?;
            let rebuilt = quantstab::certificates::StabilizationCertificate {
                x: &k * &y,
                k,
                y,
                p,
                alpha: 0.0,
                beta: 0.0,
                delta,
                rho: (1.0 - delta) / (1.0 + delta),
                z: DMatrix::zeros(b.nrows(), b.nrows()),
                slater_ok: ell.slater_check(),
                stats: Default::default(),
            };
            let report = quantstab::certificates::verify_certificate(
                &ell,
                &b,
                &rebuilt,
                samples,
                resolve_seed(seed),
                true,
            )?;
            let ok = report.hinf_violations == 0 && report.vertex_violations == 0;
            let value = serde_json::to_value(&report)?;
            write_output(&io.out, &value)?;
            println!(
                "verification over {} samples: {} hinf violations, {} vertex violations",
                report.samples, report.hinf_violations, report.vertex_violations
            );
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Witness { io, k_scale } => {
            let (_, data, _, _, ell) = load_problem(&io.input)?;
            match build_witness(&ell, &data, k_scale)? {
                WitnessOutcome::FullRank => {
                    let value = json!({"full_rank": true});
                    write_output(&io.out, &value)?;
                    println!("data matrix has full row rank; no witness exists");
                    Ok(ExitCode::SUCCESS)
                }
                WitnessOutcome::Witness(w) => {
                    let a_bar = w.matrix();
                    let value = json!({
                        "full_rank": false,
                        "rank": w.rank,
                        "k_scale": w.k_scale,
                        "A0": matrix_to_json(&w.a0),
                        "E": matrix_to_json(&w.e),
                        "witness": matrix_to_json(&a_bar),
                        "spectral_radius": spectral_radius(&a_bar),
                        "membership": ell.membership(&a_bar),
                    });
                    write_output(&io.out, &value)?;
                    println!(
                        "rank {} deficient; witness spectral radius {:.3e} at k = {k_scale:.1e}",
                        w.rank,
                        spectral_radius(&a_bar)
                    );
                    Ok(ExitCode::SUCCESS)
                }
            }
        }
        Command::SweepNoise { sweep } => run_sweep(sweep, true),
        Command::SweepPrior { sweep } => run_sweep(sweep, false),
        Command::Example1 { out } => {
            let (data, b, bound) = example1_data();
            let ell = UncertaintyEllipsoid::build(&data, &b, &bound)?;
            let memberships: Vec<Value> = [0.0, 1.0, 1e3, 1e6]
                .iter()
                .map(|&k| {
                    let a = DMatrix::from_row_slice(2, 2, &[0.0, k, 0.0, 0.0]);
                    json!({
                        "k": k,
                        "member": ell.membership(&a),
                        "spectral_radius": spectral_radius(&a),
                    })
                })
                .collect();
            let rank_ok = rank_condition(&data);
            let witness = match build_witness(&ell, &data, 1e3)? {
                WitnessOutcome::Witness(w) => json!({
                    "matrix": matrix_to_json(&w.matrix()),
                    "spectral_radius": spectral_radius(&w.matrix()),
                    "member": ell.membership(&w.matrix()),
                }),
                WitnessOutcome::FullRank => Value::Null,
            };
            let value = json!({
                "memberships": memberships,
                "rank_condition": rank_ok,
                "witness": witness,
                "noise_bound": noise_bound_to_json(&bound),
            });
            write_output(&out, &value)?;
            println!(
                "entries of consistent matrices are unbounded; rank condition {}",
                rank_ok
            );
            Ok(if rank_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn run_sweep(flags: SweepFlags, noise: bool) -> Result<ExitCode, Error> {
    let cfg = ExperimentConfig {
        trials: if flags.full_scale { 1000 } else { flags.trials },
        system_source: match flags.system {
            SystemChoice::Benchmark => SystemSource::Benchmark,
            SystemChoice::Random => SystemSource::RandomUniform,
        },
        master_seed: resolve_seed(flags.seed),
        verify_hinf: flags.verify_hinf,
        ..Default::default()
    };
    let records = if noise { run_noise_sweep(&cfg)? } else { run_prior_sweep(&cfg)? };
    emit_plot_data(&records, &flags.out)?;
    for r in &records {
        println!(
            "grid {:>10.4e}: feasible {:5.1}%, mean delta^2 {}",
            r.grid_value,
            100.0 * r.feasible_fraction,
            r.mean_delta_sq.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into()),
        );
    }
    Ok(ExitCode::SUCCESS)
}
