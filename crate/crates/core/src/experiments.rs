//! Monte Carlo harness: random unstable systems, ball-bounded noise,
//! sweeps over the noise level and over prior-bound inflation, and
//! CSV/JSON emission of the aggregated results.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certificates::{maximize_density, verify_certificate, DensityOutcome};
use crate::data::{mix, standard_normal, NoiseBound, UncertaintyEllipsoid};
use crate::error::{Error, Result};
use crate::lti::{simulate_open_loop, spectral_radius, LinearSystem};
use crate::sdp::SolveOptions;

/// Built-in 3-state open-loop-unstable benchmark system.
pub fn benchmark_system() -> LinearSystem {
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[-0.192, -0.936, -0.814, -0.918, 0.729, -0.724, -0.412, 0.735, -0.516],
    );
    let b = DVector::from_vec(vec![-0.554, 0.735, 0.528]);
    LinearSystem::new(a, b).expect("benchmark dimensions are consistent")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemSource {
    /// The fixed benchmark system above.
    Benchmark,
    /// Entries drawn uniformly from [-1, 1], redrawn until the open
    /// loop is unstable (at most 100 attempts).
    RandomUniform,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub horizon: usize,
    pub trials: usize,
    pub omega_grid: Vec<f64>,
    pub zeta_grid: Vec<f64>,
    pub system_source: SystemSource,
    pub master_seed: u64,
    /// Sampled members checked per feasible trial (vertex Lyapunov
    /// inequalities; cheap).
    pub verify_samples: usize,
    /// Also run the H-infinity oracle per sampled member (slow).
    pub verify_hinf: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 3,
            horizon: 20,
            trials: 100,
            omega_grid: default_omega_grid(),
            zeta_grid: default_zeta_grid(),
            system_source: SystemSource::Benchmark,
            master_seed: 0,
            verify_samples: 10,
            verify_hinf: false,
        }
    }
}

/// {0} followed by 13 log-spaced points from 1e-3 to 1.
pub fn default_omega_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    for k in 0..13 {
        grid.push(10f64.powf(-3.0 + 3.0 * k as f64 / 12.0));
    }
    grid
}

pub fn default_zeta_grid() -> Vec<f64> {
    vec![1.0, 2.0, 5.0, 10.0, 20.0, 35.0, 50.0]
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    /// "feasible", "infeasible", or "error: ...".
    pub status: String,
    pub delta_sq: Option<f64>,
    pub slater: bool,
    /// Vertex-inequality violations over the verification samples, for
    /// feasible trials on bounded uncertainty sets.
    pub verification_violations: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepRecord {
    pub grid_value: f64,
    pub feasible_fraction: f64,
    pub mean_delta_sq: Option<f64>,
    pub slater_pass_fraction: f64,
    pub trial_outcomes: Vec<TrialOutcome>,
}

impl SweepRecord {
    pub fn trials(&self) -> usize {
        self.trial_outcomes.len()
    }
}

/// T vectors i.i.d. uniform on the solid ball of squared radius
/// `omega_max`: uniform direction, radius scaled by u^(1/n).
pub fn sample_ball_noise(n: usize, omega_max: f64, t: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..t)
        .map(|_| {
            if omega_max == 0.0 {
                return DVector::zeros(n);
            }
            let mut dir = DVector::from_fn(n, |_, _| standard_normal(&mut rng));
            while dir.norm() < 1e-12 {
                dir = DVector::from_fn(n, |_, _| standard_normal(&mut rng));
            }
            dir /= dir.norm();
            let u: f64 = rng.gen_range(0.0..=1.0);
            dir * (omega_max.sqrt() * u.powf(1.0 / n as f64))
        })
        .collect()
}

fn draw_system(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<LinearSystem> {
    match cfg.system_source {
        SystemSource::Benchmark => Ok(benchmark_system()),
        SystemSource::RandomUniform => {
            for _ in 0..100 {
                let a = DMatrix::from_fn(cfg.n, cfg.n, |_, _| rng.gen_range(-1.0..1.0));
                let b = DVector::from_fn(cfg.n, |_, _| rng.gen_range(-1.0..1.0));
                if spectral_radius(&a) > 1.0 {
                    return LinearSystem::new(a, b);
                }
            }
            Err(Error::NumericalFailure(
                "no unstable draw in 100 attempts".into(),
            ))
        }
    }
}

/// One data set + synthesis attempt. `phi_scale` inflates the prior
/// bound: Phi11 = phi_scale * T * omega_max * I.
fn run_trial(
    cfg: &ExperimentConfig,
    omega_max: f64,
    phi_scale: f64,
    trial: usize,
    seed: u64,
) -> TrialOutcome {
    let mut outcome = TrialOutcome {
        trial,
        seed,
        status: String::new(),
        delta_sq: None,
        slater: false,
        verification_violations: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sys = match draw_system(cfg, &mut rng) {
        Ok(s) => s,
        Err(e) => {
            outcome.status = format!("error: {e}");
            return outcome;
        }
    };
    let n = sys.dim();
    let t = cfg.horizon;
    let x0 = DVector::from_fn(n, |_, _| standard_normal(&mut rng));
    let inputs: Vec<f64> = (0..t).map(|_| standard_normal(&mut rng)).collect();
    let noise = sample_ball_noise(n, omega_max, t, mix(seed, 0x6e6f_6973));
    let data = match simulate_open_loop(&sys, &x0, &inputs, &noise) {
        Ok(d) => d,
        Err(e) => {
            outcome.status = format!("error: {e}");
            return outcome;
        }
    };
    let bound = match NoiseBound::new(
        DMatrix::identity(n, n) * (phi_scale * t as f64 * omega_max),
        DMatrix::zeros(n, t),
        -DMatrix::identity(t, t),
    ) {
        Ok(b) => b,
        Err(e) => {
            outcome.status = format!("error: {e}");
            return outcome;
        }
    };
    debug_assert!(
        phi_scale < 1.0 || bound.admits(data.noise().expect("simulated data carries noise")),
        "realized noise must satisfy its own bound"
    );
    let ell = match UncertaintyEllipsoid::build(&data, &sys.b_matrix(), &bound) {
        Ok(e) => e,
        Err(e) => {
            outcome.status = format!("error: {e}");
            return outcome;
        }
    };
    outcome.slater = ell.slater_check();
    match maximize_density(&ell, &sys.b_matrix(), &SolveOptions::default()) {
        Ok(DensityOutcome::Feasible(result)) => {
            outcome.status = "feasible".into();
            outcome.delta_sq = Some(result.delta_sq);
            if cfg.verify_samples > 0 {
                if let Ok(report) = verify_certificate(
                    &ell,
                    sys.b(),
                    &result.certificate,
                    cfg.verify_samples,
                    mix(seed, 0x7665_7269),
                    cfg.verify_hinf,
                ) {
                    outcome.verification_violations =
                        Some(report.vertex_violations + report.hinf_violations);
                }
            }
        }
        Ok(DensityOutcome::Infeasible { .. }) => outcome.status = "infeasible".into(),
        Err(e) => outcome.status = format!("error: {e}"),
    }
    outcome
}

fn run_grid_point(
    cfg: &ExperimentConfig,
    grid_index: usize,
    grid_value: f64,
    omega_max: f64,
    phi_scale: f64,
) -> SweepRecord {
    let mut outcomes = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let seed = mix(mix(cfg.master_seed, grid_index as u64), trial as u64);
        outcomes.push(run_trial(cfg, omega_max, phi_scale, trial, seed));
    }
    let feasible: Vec<&TrialOutcome> =
        outcomes.iter().filter(|o| o.status == "feasible").collect();
    let mean_delta_sq = if feasible.is_empty() {
        None
    } else {
        Some(feasible.iter().filter_map(|o| o.delta_sq).sum::<f64>() / feasible.len() as f64)
    };
    SweepRecord {
        grid_value,
        feasible_fraction: feasible.len() as f64 / cfg.trials as f64,
        mean_delta_sq,
        slater_pass_fraction: outcomes.iter().filter(|o| o.slater).count() as f64
            / cfg.trials as f64,
        trial_outcomes: outcomes,
    }
}

/// Sweep over the noise level omega_max with Phi11 = T * omega * I.
pub fn run_noise_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    validate(cfg)?;
    Ok(cfg
        .omega_grid
        .iter()
        .enumerate()
        .map(|(gi, &omega)| run_grid_point(cfg, gi, omega, omega, 1.0))
        .collect())
}

/// Sweep over the prior inflation zeta at fixed omega_max = 0.005 with
/// Phi11 = zeta * T * omega_max * I.
pub fn run_prior_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    validate(cfg)?;
    const OMEGA_MAX: f64 = 0.005;
    Ok(cfg
        .zeta_grid
        .iter()
        .enumerate()
        .map(|(gi, &zeta)| run_grid_point(cfg, gi, zeta, OMEGA_MAX, zeta))
        .collect())
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    if cfg.omega_grid.iter().chain(cfg.zeta_grid.iter()).any(|&v| v < 0.0) {
        return Err(Error::InvalidParameter("grid values must be >= 0".into()));
    }
    if cfg.n == 0 || cfg.horizon == 0 {
        return Err(Error::InvalidParameter("dimension and horizon must be >= 1".into()));
    }
    Ok(())
}

/// Writes the aggregate CSV plus a companion JSON (same stem, `.json`
/// extension) carrying the full per-trial detail.
pub fn emit_plot_data(records: &[SweepRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("no records to emit".into()));
    }
    let mut csv = String::from("grid_value,feasible_fraction,mean_delta_sq,slater_pass_fraction,trials\n");
    for r in records {
        let mean = r.mean_delta_sq.map(|m| format!("{m:.9e}")).unwrap_or_default();
        csv.push_str(&format!(
            "{:.9e},{:.9e},{},{:.9e},{}\n",
            r.grid_value,
            r.feasible_fraction,
            mean,
            r.slater_pass_fraction,
            r.trials()
        ));
    }
    std::fs::write(path, csv)?;
    let json_path = companion_json_path(path);
    std::fs::write(json_path, serde_json::to_string_pretty(records)?)?;
    Ok(())
}

/// Reads records back from the companion JSON of an emitted CSV.
pub fn parse_plot_data(path: &Path) -> Result<Vec<SweepRecord>> {
    let text = std::fs::read_to_string(companion_json_path(path))?;
    Ok(serde_json::from_str(&text)?)
}

fn companion_json_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}
