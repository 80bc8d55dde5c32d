//! Negative constructions for rank-deficient data: a family of
//! consistent state matrices with an eigenvalue that grows without
//! bound, plus an aggregate informativity report.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::{
    numeric_rank, rank_condition, EllipsoidGeometry, TrajectoryData, UncertaintyEllipsoid,
    TOL_RANK,
};
use crate::error::{Error, Result};
use crate::lti::spectral_radius;

/// Witness family A(k) = A0 + k * Lambda * E for rank-deficient X-.
///
/// The rows of E are an orthonormal basis of the column space of X-
/// stacked over its orthogonal complement; Lambda zeroes the first
/// r rows, so Lambda * E * X- = 0 and the data-consistency quadratic
/// form is independent of k.
#[derive(Debug, Clone)]
pub struct RankDeficiencyWitness {
    /// Orthogonal row transform with E * X- = [X_r; 0].
    pub e: DMatrix<f64>,
    /// Diagonal 0/1 selector of the annihilating rows.
    pub lambda: DMatrix<f64>,
    /// A member of the consistency set serving as the base point.
    pub a0: DMatrix<f64>,
    pub k_scale: f64,
    /// rank(X-).
    pub rank: usize,
}

impl RankDeficiencyWitness {
    /// The witness matrix at scale k.
    pub fn matrix_at(&self, k: f64) -> DMatrix<f64> {
        &self.a0 + &self.lambda * &self.e * k
    }

    /// The witness at the stored scale.
    pub fn matrix(&self) -> DMatrix<f64> {
        self.matrix_at(self.k_scale)
    }
}

#[derive(Debug, Clone)]
pub enum WitnessOutcome {
    /// rank(X-) = n; no witness exists.
    FullRank,
    Witness(Box<RankDeficiencyWitness>),
}

impl WitnessOutcome {
    pub fn witness(&self) -> Option<&RankDeficiencyWitness> {
        match self {
            WitnessOutcome::Witness(w) => Some(w),
            WitnessOutcome::FullRank => None,
        }
    }
}

/// Constructs the unbounded-eigenvalue family for rank-deficient data,
/// or reports full rank.
pub fn build_witness(
    ell: &UncertaintyEllipsoid,
    data: &TrajectoryData,
    k_scale: f64,
) -> Result<WitnessOutcome> {
    let n = data.dim();
    if ell.dim() != n {
        return Err(Error::DimensionMismatch("ellipsoid and data dimensions".into()));
    }
    let svd = data.x_minus().clone().svd(true, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let r = if smax == 0.0 {
        0
    } else {
        svd.singular_values.iter().filter(|&&s| s > TOL_RANK * smax).count()
    };
    if r == n {
        return Ok(WitnessOutcome::FullRank);
    }
    // E = U' from the SVD X- = U S V'; its last n - r rows annihilate X-.
    let u = svd.u.as_ref().expect("svd requested u");
    // nalgebra's thin SVD returns U with min(n, T) columns; pad to a
    // full orthonormal basis when T < n via column-space completion.
    let mut e = full_orthonormal_rows(u, n);
    // Rotate the annihilating rows so the trailing (n-r) x (n-r) block
    // of E becomes symmetric PSD with eigenvalues equal to its singular
    // values: the eigenvalue-growth guarantee scales with the spectral
    // radius of that block, and an unlucky basis can make it nilpotent.
    let s: DMatrix<f64> = e.view((r, r), (n - r, n - r)).into();
    if s.norm() > 1e-12 {
        let svd_s = s.svd(true, true);
        let q = svd_s.v_t.as_ref().unwrap().transpose() * svd_s.u.as_ref().unwrap().transpose();
        let rotated = &q * e.view((r, 0), (n - r, n));
        e.view_mut((r, 0), (n - r, n)).copy_from(&rotated);
    }
    let mut lambda = DMatrix::zeros(n, n);
    for i in r..n {
        lambda[(i, i)] = 1.0;
    }
    debug_assert!(
        (&lambda * &e * data.x_minus()).norm() <= 1e-10 * (1.0 + data.x_minus().norm()),
        "annihilator property violated"
    );

    let a0 = base_point(ell, data)?;
    Ok(WitnessOutcome::Witness(Box::new(RankDeficiencyWitness {
        e,
        lambda,
        a0,
        k_scale,
        rank: r,
    })))
}

/// Completes the (possibly thin) orthonormal column set of `u` to a full
/// basis of R^n and returns the transpose.
fn full_orthonormal_rows(u: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut cols: Vec<nalgebra::DVector<f64>> =
        u.column_iter().map(|c| c.into_owned()).collect();
    // Gram-Schmidt the standard basis against the existing columns.
    let mut i = 0;
    while cols.len() < n {
        let mut v = nalgebra::DVector::zeros(n);
        v[i % n] = 1.0;
        i += 1;
        for c in &cols {
            let proj = c.dot(&v);
            v -= c * proj;
        }
        if v.norm() > 1e-8 {
            v /= v.norm();
            cols.push(v);
        }
    }
    let mut e = DMatrix::zeros(n, n);
    for (j, c) in cols.iter().enumerate() {
        e.set_row(j, &c.transpose());
    }
    e
}

/// A base point of the consistency set: minimum-norm least squares
/// (X+ - BU) X-^+, falling back to the bounded-directions center when
/// the least-squares point fails membership.
fn base_point(ell: &UncertaintyEllipsoid, data: &TrajectoryData) -> Result<DMatrix<f64>> {
    let n = data.dim();
    let pinv = data
        .x_minus()
        .clone()
        .svd(true, true)
        .pseudo_inverse(TOL_RANK)
        .map_err(|e| Error::NumericalFailure(format!("pseudo-inverse: {e}")))?;
    let ls = ell.x_shift() * pinv;
    if ell.membership(&ls) {
        return Ok(ls);
    }
    // Shrink toward zero along the unbounded directions, then toward
    // the reduced center on the bounded ones.
    for t in [0.5, 0.1, 0.0] {
        let cand = &ls * t;
        if ell.membership(&cand) {
            return Ok(cand);
        }
    }
    if let EllipsoidGeometry::Bounded { center, .. } = ell.center_and_radius() {
        if ell.membership(&center) {
            return Ok(center);
        }
    }
    // Reduced center restricted to the numerically nonsingular part of
    // -N22: project the normal equations onto its range.
    let n22 = ell.n22();
    let eig = (-n22).symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mut inv = DMatrix::zeros(n, n);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > 1e-12 * max_eig.max(1.0) {
            let v = eig.eigenvectors.column(i);
            inv += v * v.transpose() / lam;
        }
    }
    let reduced = ell.n12() * inv;
    if ell.membership(&reduced) {
        return Ok(reduced);
    }
    Err(Error::EmptyUncertainty(
        "no consistent base point found; the data set appears empty".into(),
    ))
}

/// Aggregate diagnostics: rank, Slater count, boundedness, and a
/// concrete witness magnitude when the data is rank-deficient.
#[derive(Debug, Clone, Serialize)]
pub struct InformativityReport {
    pub state_dimension: usize,
    pub horizon: usize,
    pub rank: usize,
    pub rank_condition: bool,
    pub slater: bool,
    pub sigma_bounded: bool,
    /// Spectral radius of the witness at k = 1e3, when one exists.
    pub witness_spectral_radius: Option<f64>,
}

pub fn informativity_report(
    data: &TrajectoryData,
    ell: &UncertaintyEllipsoid,
) -> Result<InformativityReport> {
    let bounded = matches!(ell.center_and_radius(), EllipsoidGeometry::Bounded { .. });
    let witness_spectral_radius = match build_witness(ell, data, 1e3) {
        Ok(WitnessOutcome::Witness(w)) => Some(spectral_radius(&w.matrix())),
        Ok(WitnessOutcome::FullRank) => None,
        Err(Error::EmptyUncertainty(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(InformativityReport {
        state_dimension: data.dim(),
        horizon: data.horizon(),
        rank: numeric_rank(data.x_minus()),
        rank_condition: rank_condition(data),
        slater: ell.slater_check(),
        sigma_bounded: bounded,
        witness_spectral_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{example1_data, NoiseBound};
    use crate::lti::{simulate_open_loop, LinearSystem};
    use nalgebra::DVector;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn example1_ellipsoid() -> (TrajectoryData, UncertaintyEllipsoid) {
        let (data, b, bound) = example1_data();
        let ell = UncertaintyEllipsoid::build(&data, &b, &bound).unwrap();
        (data, ell)
    }

    #[test]
    fn example1_witness_membership_and_growth() {
        let (data, ell) = example1_ellipsoid();
        let w = build_witness(&ell, &data, 1e6).unwrap();
        let w = w.witness().expect("rank 1 < 2");
        assert_eq!(w.rank, 1);
        for k in [0.0, 1.0, 1e3, 1e6, 1e8] {
            let a = w.matrix_at(k);
            assert!(ell.membership(&a), "k={k}");
        }
        // unbounded eigenvalue, not just unbounded entries
        let rho3 = spectral_radius(&w.matrix_at(1e3));
        assert!(rho3 >= 1e2, "rho={rho3}");
    }

    #[test]
    fn full_rank_data_has_no_witness() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let b = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let sys = LinearSystem::new(a, b).unwrap();
        let x0 = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let inputs: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let noise = vec![DVector::zeros(3); 20];
        let data = simulate_open_loop(&sys, &x0, &inputs, &noise).unwrap();
        let bound = NoiseBound::energy_ball(3, 20, 0.01).unwrap();
        let ell = UncertaintyEllipsoid::build(&data, &sys.b_matrix(), &bound).unwrap();
        assert!(rank_condition(&data));
        assert!(matches!(build_witness(&ell, &data, 1e3).unwrap(), WitnessOutcome::FullRank));
    }

    #[test]
    fn witness_iff_rank_deficient() {
        // rank-1 X- in n=3 via a single repeated direction
        let dir = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let mut x_minus = DMatrix::zeros(3, 6);
        for j in 0..6 {
            x_minus.set_column(j, &(&dir * (j as f64 + 1.0)));
        }
        let u = DMatrix::zeros(1, 6);
        let x_plus = DMatrix::zeros(3, 6);
        let data = TrajectoryData::new(x_minus, u, x_plus).unwrap();
        let b = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let bound = NoiseBound::energy_ball(3, 6, 0.5).unwrap();
        let ell = UncertaintyEllipsoid::build(&data, &b, &bound).unwrap();
        assert!(!rank_condition(&data));
        let w = build_witness(&ell, &data, 10.0).unwrap();
        let w = w.witness().expect("rank deficient");
        assert_eq!(w.rank, 1);
        // growth at least linear in k across a grid
        let mut prev = 0.0;
        for k in [10.0, 1e3, 1e5] {
            let rho = spectral_radius(&w.matrix_at(k));
            assert!(rho >= 0.5 * k, "k={k} rho={rho}");
            assert!(rho > prev);
            assert!(ell.membership(&w.matrix_at(k)));
            prev = rho;
        }
    }

    #[test]
    fn example1_report() {
        let (data, ell) = example1_ellipsoid();
        let report = informativity_report(&data, &ell).unwrap();
        assert_eq!(report.rank, 1);
        assert!(!report.rank_condition);
        assert!(!report.sigma_bounded);
        assert!(report.witness_spectral_radius.unwrap() >= 1e2);
        // serializes for CLI consumption
        let j = serde_json::to_value(&report).unwrap();
        assert_eq!(j["rank"], 1);
    }

    #[test]
    fn short_horizon_always_rank_deficient() {
        // T < n columns cannot reach rank n
        let data = TrajectoryData::new(
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(3, 2),
        )
        .unwrap();
        assert!(!rank_condition(&data));
    }
}
