//! Controller synthesis from data: the fixed-density LMI, the
//! coarsest-density SDP, and the H-infinity oracles (bounded-real
//! bisection and the unstable-eigenvalue product).

use nalgebra::{DMatrix, DVector};

use crate::data::{EllipsoidGeometry, UncertaintyEllipsoid};
use crate::error::{Error, Result};
use crate::lti::{eigenvalues, spectral_radius};
use crate::sdp::{solve, LmiConstraint, LmiProblem, SolveOptions, SolveStatus, SolverStats};

/// Upper cap on the sector radius; delta >= 1 would mean a nonpositive
/// density.
pub const DELTA_CAP: f64 = 1.0 - 1e-6;
/// Relative back-off applied when re-solving at the maximized radius.
pub const BACKOFF: f64 = 0.999;

/// Feasible solver output for one sector radius, with the extracted gain.
#[derive(Debug, Clone)]
pub struct StabilizationCertificate {
    /// Inverse Lyapunov matrix, n x n positive definite.
    pub y: DMatrix<f64>,
    /// 1 x n variable with K = X Y^{-1}.
    pub x: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
    /// Sector radius the certificate was solved at.
    pub delta: f64,
    /// Extracted feedback gain, 1 x n.
    pub k: DMatrix<f64>,
    /// Quantization density (1 - delta) / (1 + delta).
    pub rho: f64,
    /// Lyapunov matrix Y^{-1}.
    pub p: DMatrix<f64>,
    /// Y - X'X, positive definite by the second LMI.
    pub z: DMatrix<f64>,
    pub slater_ok: bool,
    pub stats: SolverStats,
}

#[derive(Debug, Clone)]
pub enum SynthesisOutcome {
    Feasible(Box<StabilizationCertificate>),
    Infeasible { stats: SolverStats, slater_ok: bool },
}

impl SynthesisOutcome {
    pub fn certificate(&self) -> Option<&StabilizationCertificate> {
        match self {
            SynthesisOutcome::Feasible(c) => Some(c),
            SynthesisOutcome::Infeasible { .. } => None,
        }
    }
}

/// Result of maximizing the sector radius.
#[derive(Debug, Clone)]
pub struct DensityResult {
    /// Maximized sector radius.
    pub delta_star: f64,
    /// The SDP decision value d = delta^2.
    pub delta_sq: f64,
    /// Coarsest density (1 - delta*) / (1 + delta*).
    pub rho_star: f64,
    /// Certificate re-solved at the backed-off radius.
    pub certificate: Box<StabilizationCertificate>,
}

enum DeltaMode {
    Fixed(f64),
    /// Decision variable d = delta^2, maximized.
    Variable,
}

/// Builds the synthesis LMI. Row/column partition of the first
/// constraint is (n, n, n, 1); the radius enters only through the
/// constant `-delta^2 B B'` block, so the problem is affine in all
/// variables including d = delta^2.
fn build_lmi(ell: &UncertaintyEllipsoid, b: &DMatrix<f64>, mode: DeltaMode) -> (LmiProblem, f64) {
    let n = ell.dim();
    assert_eq!(b.nrows(), n);
    assert_eq!(b.ncols(), 1, "synthesis requires a single-input system");
    let m = 3 * n + 1;

    // N enters only through alpha; normalize it for conditioning and
    // rescale alpha on extraction.
    let n_scale = ell
        .n_matrix()
        .symmetric_eigenvalues()
        .iter()
        .map(|e| e.abs())
        .fold(1.0, f64::max);
    let n_normalized = ell.n_matrix() / n_scale;

    let mut p = LmiProblem::new();
    let y = p.symmetric("Y", n);
    let x = p.row("X", n);
    let alpha = p.scalar("alpha");
    let beta = p.scalar("beta");
    p.set_lower(alpha, 0.0);
    p.set_lower_strict(beta, 0.0);

    // block selectors: rows [0,n), [n,2n), [2n,3n), [3n,3n+1)
    let sel = |block: usize, width: usize| -> DMatrix<f64> {
        let mut e = DMatrix::zeros(m, width);
        for i in 0..width {
            e[(block * n + i, i)] = 1.0;
        }
        e
    };
    let e1 = sel(0, n);
    let e2 = sel(1, n);
    let e3 = sel(2, n);
    let e4 = sel(3, 1);

    let mut constant = DMatrix::zeros(m, m);
    constant[(m - 1, m - 1)] = 1.0;

    let bbt = b * b.transpose();
    let mut c1 = LmiConstraint::new(constant)
        // (1,1): Y - beta I  (d B B' handled per mode below)
        .term(y, e1.clone(), e1.transpose())
        .scaled(beta, -&e1 * DMatrix::identity(n, n) * e1.transpose())
        // (1,3) + (3,1): B X and X' B'
        .sym_pair(x, &e1 * b, e3.transpose())
        // (2,3) + (3,2): Y and Y'
        .sym_pair(y, e2.clone(), e3.transpose())
        // (3,3): Y
        .term(y, e3.clone(), e3.transpose())
        // (3,4) + (4,3): X' and X
        .sym_pair(x, e4.clone(), e3.transpose());

    // - alpha * (bordered N), nonzero only in the leading 2n x 2n block
    let mut e12 = DMatrix::zeros(m, 2 * n);
    for i in 0..2 * n {
        e12[(i, i)] = 1.0;
    }
    c1 = c1.scaled(alpha, -&e12 * &n_normalized * e12.transpose());

    match mode {
        DeltaMode::Fixed(delta) => {
            let shifted = c1.constant.view((0, 0), (n, n)) - &bbt * (delta * delta);
            c1.constant.view_mut((0, 0), (n, n)).copy_from(&shifted);
        }
        DeltaMode::Variable => {
            let d = p.scalar("d");
            p.set_lower(d, 0.0);
            p.set_upper(d, DELTA_CAP * DELTA_CAP);
            c1 = c1.scaled(d, -&e1 * &bbt * e1.transpose());
            p.maximize(vec![(d, 1.0)]);
        }
    }
    p.add_constraint(c1);

    // [[Y, X'], [X, 1]] > 0
    let mut c2_const = DMatrix::zeros(n + 1, n + 1);
    c2_const[(n, n)] = 1.0;
    let mut f1 = DMatrix::zeros(n + 1, n);
    for i in 0..n {
        f1[(i, i)] = 1.0;
    }
    let mut f2 = DMatrix::zeros(n + 1, 1);
    f2[(n, 0)] = 1.0;
    let c2 = LmiConstraint::new(c2_const)
        .term(y, f1.clone(), f1.transpose())
        .sym_pair(x, f2, f1.transpose())
        .strict();
    p.add_constraint(c2);

    (p, n_scale)
}

/// The fixed-radius synthesis LMI as a standalone problem.
pub fn assemble_synthesis_lmi(
    ell: &UncertaintyEllipsoid,
    b: &DMatrix<f64>,
    delta: f64,
) -> Result<LmiProblem> {
    check_delta(delta)?;
    check_shapes(ell, b)?;
    Ok(build_lmi(ell, b, DeltaMode::Fixed(delta)).0)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0 < delta && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sector radius must be in (0,1), got {delta}"
        )));
    }
    Ok(())
}

fn check_shapes(ell: &UncertaintyEllipsoid, b: &DMatrix<f64>) -> Result<()> {
    if b.nrows() != ell.dim() || b.ncols() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "input matrix must be {} x 1",
            ell.dim()
        )));
    }
    Ok(())
}

fn extract_certificate(
    result: &crate::sdp::SolveResult,
    delta: f64,
    n_scale: f64,
    slater_ok: bool,
) -> Result<StabilizationCertificate> {
    let y = result.matrix("Y").clone();
    let x = result.matrix("X").clone();
    let alpha = result.scalar("alpha") / n_scale;
    let beta = result.scalar("beta");
    let p = y
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("certificate Y is singular".into()))?;
    let k = &x * &p;
    let z = &y - x.transpose() * &x;
    Ok(StabilizationCertificate {
        rho: (1.0 - delta) / (1.0 + delta),
        y,
        x,
        alpha,
        beta,
        delta,
        k,
        p,
        z,
        slater_ok,
        stats: result.stats.clone(),
    })
}

/// Cheap intrinsic sanity check on an extracted certificate: both
/// vertex Lyapunov inequalities must hold strictly at the ellipsoid
/// center. Guards against reduced-accuracy solver output whose
/// recovered gain is meaningless (for example a nearly singular Y).
fn certificate_plausible(
    ell: &UncertaintyEllipsoid,
    b: &DMatrix<f64>,
    cert: &StabilizationCertificate,
) -> bool {
    let EllipsoidGeometry::Bounded { center, .. } = ell.center_and_radius() else {
        return true;
    };
    for sign in [-1.0, 1.0] {
        let acl = &center + b * &cert.k * (1.0 + sign * cert.delta);
        let lhs = acl.transpose() * &cert.p * &acl - &cert.p;
        let max_eig = ((&lhs + lhs.transpose()) * 0.5)
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if max_eig >= 0.0 {
            return false;
        }
    }
    true
}

/// Solves the synthesis LMI at a fixed sector radius.
///
/// A failed Slater check downgrades to a warning recorded on the
/// outcome; near-boundary numerical ambiguity is resolved by probing
/// neighboring radii (feasibility is monotone decreasing in delta).
pub fn solve_fixed_density(
    ell: &UncertaintyEllipsoid,
    b: &DMatrix<f64>,
    delta: f64,
    options: &SolveOptions,
) -> Result<SynthesisOutcome> {
    check_delta(delta)?;
    check_shapes(ell, b)?;
    let slater_ok = ell.slater_check();
    let (problem, n_scale) = build_lmi(ell, b, DeltaMode::Fixed(delta));
    let result = solve(&problem, options)?;
    match result.status {
        SolveStatus::Feasible | SolveStatus::Optimal => {
            let cert = extract_certificate(&result, delta, n_scale, slater_ok)?;
            if certificate_plausible(ell, b, &cert) {
                return Ok(SynthesisOutcome::Feasible(Box::new(cert)));
            }
            let mut stats = cert.stats;
            stats.notes.push(
                "extracted gain failed the center Lyapunov check; classified infeasible".into(),
            );
            Ok(SynthesisOutcome::Infeasible { stats, slater_ok })
        }
        SolveStatus::Infeasible => {
            Ok(SynthesisOutcome::Infeasible { stats: result.stats, slater_ok })
        }
        _ => {
            // Three-point probe around delta. A feasible larger radius
            // certifies delta itself by monotonicity.
            let mut stats = result.stats;
            let upper = (delta * 1.05).min(DELTA_CAP);
            if upper > delta {
                let (pu, _) = build_lmi(ell, b, DeltaMode::Fixed(upper));
                let ru = solve(&pu, options)?;
                if ru.is_feasible() {
                    let mut cert = extract_certificate(&ru, delta, n_scale, slater_ok)?;
                    if certificate_plausible(ell, b, &cert) {
                        stats.notes.push(format!(
                            "accepted via feasibility at larger radius {upper}"
                        ));
                        cert.stats = stats;
                        return Ok(SynthesisOutcome::Feasible(Box::new(cert)));
                    }
                }
            }
            let lower = delta * 0.95;
            let (pl, _) = build_lmi(ell, b, DeltaMode::Fixed(lower));
            let rl = solve(&pl, options)?;
            stats.notes.push(format!(
                "numerical ambiguity at radius {delta}: probe at {lower} was {:?}, classified infeasible",
                rl.status
            ));
            Ok(SynthesisOutcome::Infeasible { stats, slater_ok })
        }
    }
}

/// Maximizes d = delta^2 subject to the synthesis LMI and returns the
/// coarsest density with a backed-off certificate.
pub fn maximize_density(
    ell: &UncertaintyEllipsoid,
    b: &DMatrix<f64>,
    options: &SolveOptions,
) -> Result<DensityOutcome> {
    check_shapes(ell, b)?;
    let slater_ok = ell.slater_check();
    let (problem, _) = build_lmi(ell, b, DeltaMode::Variable);
    let result = solve(&problem, options)?;
    let mut notes = result.stats.notes.clone();

    let delta_star = match result.status {
        SolveStatus::Optimal => {
            let d = result.objective_value.unwrap_or(0.0).clamp(0.0, DELTA_CAP * DELTA_CAP);
            Some(d.sqrt())
        }
        SolveStatus::Infeasible => None,
        SolveStatus::Unbounded => {
            return Err(Error::NumericalFailure(
                "radius maximization reported unbounded despite the cap; data inconsistent".into(),
            ));
        }
        _ => {
            notes.push(format!(
                "direct maximization ended with {}; falling back to bisection",
                result.stats.raw_status
            ));
            bisect_delta(ell, b, options)?
        }
    };

    let Some(delta_star) = delta_star else {
        return Ok(DensityOutcome::Infeasible { stats: stats_with(result.stats, notes), slater_ok });
    };

    // Re-solve at a backed-off radius so the strict inequalities hold
    // with margin; step further down if the boundary solve is noisy.
    for factor in [BACKOFF, 0.99, 0.95, 0.9] {
        let delta = (delta_star * factor).min(DELTA_CAP);
        if delta <= 0.0 {
            break;
        }
        if let SynthesisOutcome::Feasible(cert) = solve_fixed_density(ell, b, delta, options)? {
            return Ok(DensityOutcome::Feasible(DensityResult {
                delta_star,
                delta_sq: delta_star * delta_star,
                rho_star: (1.0 - delta_star) / (1.0 + delta_star),
                certificate: cert,
            }));
        }
        notes.push(format!("backed-off certificate solve failed at {delta}"));
    }
    Ok(DensityOutcome::Infeasible { stats: stats_with(result.stats, notes), slater_ok })
}

fn stats_with(mut stats: SolverStats, notes: Vec<String>) -> SolverStats {
    stats.notes = notes;
    stats
}

/// Maximization outcome; mirrors [`SynthesisOutcome`] with the density
/// payload.
#[derive(Debug, Clone)]
pub enum DensityOutcome {
    Feasible(DensityResult),
    Infeasible { stats: SolverStats, slater_ok: bool },
}

impl DensityOutcome {
    pub fn density(&self) -> Option<&DensityResult> {
        match self {
            DensityOutcome::Feasible(d) => Some(d),
            DensityOutcome::Infeasible { .. } => None,
        }
    }
}

/// Bisection fallback on delta using fixed-radius feasibility solves.
fn bisect_delta(
    ell: &UncertaintyEllipsoid,
    b: &DMatrix<f64>,
    options: &SolveOptions,
) -> Result<Option<f64>> {
    let feasible = |delta: f64| -> Result<bool> {
        Ok(matches!(
            solve_fixed_density(ell, b, delta, options)?,
            SynthesisOutcome::Feasible(_)
        ))
    };
    let mut lo = 1e-4;
    if !feasible(lo)? {
        return Ok(None);
    }
    let mut hi = DELTA_CAP;
    if feasible(hi)? {
        return Ok(Some(hi));
    }
    while hi - lo > 5e-4 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// H-infinity norm of K (zI - A - BK)^{-1} B by bisection over the
/// bounded-real LMI.
pub fn hinf_norm_bisection(a: &DMatrix<f64>, b: &DVector<f64>, k: &DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || k.nrows() != 1 || k.ncols() != n {
        return Err(Error::DimensionMismatch("hinf_norm_bisection shapes".into()));
    }
    let b_mat = DMatrix::from_column_slice(n, 1, b.as_slice());
    let acl = a + &b_mat * k;
    if spectral_radius(&acl) >= 1.0 - 1e-9 {
        return Err(Error::UnstableClosedLoop);
    }
    if k.norm() == 0.0 {
        return Ok(0.0);
    }

    let feasible = |gamma: f64| -> bool { brl_feasible(&acl, &b_mat, k, gamma) };

    let mut hi = 1.0;
    while !feasible(hi) {
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::NumericalFailure(
                "bounded-real bisection bracket exceeded cap".into(),
            ));
        }
    }
    let mut lo = 1e-6_f64.min(hi / 2.0);
    while hi - lo > 1e-5 * hi.max(1e-6) {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Feasibility of the discrete-time bounded-real LMI at level gamma.
fn brl_feasible(acl: &DMatrix<f64>, b_mat: &DMatrix<f64>, k: &DMatrix<f64>, gamma: f64) -> bool {
    let n = acl.nrows();
    let m = n + 1;
    let mut p = LmiProblem::new();
    let pv = p.symmetric("P", n);

    let mut e1 = DMatrix::zeros(m, n);
    for i in 0..n {
        e1[(i, i)] = 1.0;
    }
    let mut e2 = DMatrix::zeros(m, 1);
    e2[(n, 0)] = 1.0;

    let mut constant = DMatrix::zeros(m, m);
    constant
        .view_mut((0, 0), (n, n))
        .copy_from(&(-(k.transpose() * k)));
    constant[(n, n)] = gamma * gamma;

    let c = LmiConstraint::new(constant)
        .term(pv, e1.clone(), e1.transpose())
        .term(pv, -&e1 * acl.transpose(), acl * e1.transpose())
        .sym_pair(pv, -&e1 * acl.transpose(), b_mat * e2.transpose())
        .term(pv, -&e2 * b_mat.transpose(), b_mat * e2.transpose())
        .strict();
    p.add_constraint(c);
    p.add_constraint(
        LmiConstraint::new(DMatrix::zeros(n, n))
            .term(pv, DMatrix::identity(n, n), DMatrix::identity(n, n))
            .strict(),
    );
    let options = SolveOptions { strict_margin: 1e-9 * (1.0 + k.norm_squared()), ..Default::default() };
    match solve(&p, &options) {
        Ok(r) => r.is_feasible(),
        Err(_) => false,
    }
}

/// Product of eigenvalue magnitudes outside the unit circle; 1 when the
/// matrix is Schur stable.
pub fn mahler_measure(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a)
        .iter()
        .map(|l| l.norm())
        .filter(|&m| m > 1.0)
        .product()
}

/// Post-hoc verification of a certificate against sampled members of
/// the uncertainty set.
#[derive(Debug, Clone, serde::Serialize)]
pub struct VerificationReport {
    pub samples: usize,
    pub hinf_checked: usize,
    pub hinf_violations: usize,
    pub max_hinf_norm: f64,
    pub vertex_violations: usize,
    pub min_vertex_margin: f64,
    pub hinf_bound: f64,
}

/// Checks, for each sampled member A of the set: the closed-loop
/// H-infinity norm stays below 1/delta, and the two vertex Lyapunov
/// inequalities (A + B(1 +/- delta)K)' P (A + B(1 +/- delta)K) - P < 0
/// hold with P = Y^{-1}. Vertex sufficiency covers the whole sector
/// because the closed loop is affine in the scalar uncertainty and the
/// quadratic form is convex in it.
pub fn verify_certificate(
    ell: &UncertaintyEllipsoid,
    b: &DVector<f64>,
    cert: &StabilizationCertificate,
    samples: usize,
    seed: u64,
    with_hinf: bool,
) -> Result<VerificationReport> {
    let members = ell.sample_members(samples, seed)?;
    let b_mat = DMatrix::from_column_slice(b.nrows(), 1, b.as_slice());
    let mut report = VerificationReport {
        samples: members.len(),
        hinf_checked: 0,
        hinf_violations: 0,
        max_hinf_norm: 0.0,
        vertex_violations: 0,
        min_vertex_margin: f64::INFINITY,
        hinf_bound: 1.0 / cert.delta,
    };
    let p_scale = 1.0 + cert.p.norm();
    for a in &members {
        if with_hinf {
            report.hinf_checked += 1;
            match hinf_norm_bisection(a, b, &cert.k) {
                Ok(norm) => {
                    report.max_hinf_norm = report.max_hinf_norm.max(norm);
                    if norm >= 1.0 / cert.delta {
                        report.hinf_violations += 1;
                    }
                }
                Err(_) => report.hinf_violations += 1,
            }
        }
        for sign in [-1.0, 1.0] {
            let acl = a + &b_mat * &cert.k * (1.0 + sign * cert.delta);
            let lhs = acl.transpose() * &cert.p * &acl - &cert.p;
            let max_eig = ((&lhs + lhs.transpose()) * 0.5)
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            report.min_vertex_margin = report.min_vertex_margin.min(-max_eig);
            if max_eig > 1e-6 * p_scale {
                report.vertex_violations += 1;
            }
        }
    }
    Ok(report)
}
