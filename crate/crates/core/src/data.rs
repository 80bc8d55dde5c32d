//! Data matrices, the quadratic noise bound, and the data-consistency
//! ellipsoid of state matrices together with its membership, Slater,
//! rank and geometry queries.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative PSD tolerance for membership tests.
pub const TOL_PSD: f64 = 1e-8;
/// Relative eigenvalue tolerance for the Slater count.
pub const TOL_EIG: f64 = 1e-9;
/// Relative singular-value tolerance for the rank test.
pub const TOL_RANK: f64 = 1e-10;

/// One experiment's data matrices X-, U, X+ of horizon T.
///
/// The main construction path enforces a single input row; the
/// multi-input constructor exists for the two-input membership fixture
/// used in tests and nowhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryData {
    x_minus: DMatrix<f64>,
    u: DMatrix<f64>,
    x_plus: DMatrix<f64>,
    noise: Option<DMatrix<f64>>,
}

impl TrajectoryData {
    pub fn new(x_minus: DMatrix<f64>, u: DMatrix<f64>, x_plus: DMatrix<f64>) -> Result<Self> {
        if u.nrows() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "input matrix must have a single row, got {}",
                u.nrows()
            )));
        }
        Self::new_multi_input(x_minus, u, x_plus)
    }

    /// Multi-input fixture constructor; membership math never uses the
    /// input width, but controller synthesis does, so this stays out of
    /// the synthesis path.
    pub fn new_multi_input(
        x_minus: DMatrix<f64>,
        u: DMatrix<f64>,
        x_plus: DMatrix<f64>,
    ) -> Result<Self> {
        let t = x_minus.ncols();
        if t == 0 {
            return Err(Error::DimensionMismatch("horizon must be >= 1".into()));
        }
        if x_plus.shape() != x_minus.shape() {
            return Err(Error::DimensionMismatch("X- and X+ must have equal shape".into()));
        }
        if u.ncols() != t {
            return Err(Error::DimensionMismatch("U column count must equal horizon".into()));
        }
        Ok(TrajectoryData { x_minus, u, x_plus, noise: None })
    }

    pub fn with_noise(
        x_minus: DMatrix<f64>,
        u: DMatrix<f64>,
        x_plus: DMatrix<f64>,
        noise: DMatrix<f64>,
    ) -> Result<Self> {
        if noise.shape() != x_minus.shape() {
            return Err(Error::DimensionMismatch("noise matrix shape".into()));
        }
        let mut data = Self::new(x_minus, u, x_plus)?;
        data.noise = Some(noise);
        Ok(data)
    }

    pub fn dim(&self) -> usize {
        self.x_minus.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.x_minus.ncols()
    }

    pub fn x_minus(&self) -> &DMatrix<f64> {
        &self.x_minus
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn x_plus(&self) -> &DMatrix<f64> {
        &self.x_plus
    }

    pub fn noise(&self) -> Option<&DMatrix<f64>> {
        self.noise.as_ref()
    }
}

/// Partitioned symmetric noise bound: [I W']' Phi [I W']' form nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBound {
    phi11: DMatrix<f64>,
    phi12: DMatrix<f64>,
    phi22: DMatrix<f64>,
}

impl NoiseBound {
    pub fn new(phi11: DMatrix<f64>, phi12: DMatrix<f64>, phi22: DMatrix<f64>) -> Result<Self> {
        let n = phi11.nrows();
        let t = phi22.nrows();
        if phi11.ncols() != n || phi22.ncols() != t {
            return Err(Error::DimensionMismatch("Phi blocks must be square".into()));
        }
        if phi12.nrows() != n || phi12.ncols() != t {
            return Err(Error::DimensionMismatch("Phi12 must be n x T".into()));
        }
        let sym_err = |m: &DMatrix<f64>| (m - m.transpose()).norm() > 1e-10 * (1.0 + m.norm());
        if sym_err(&phi11) || sym_err(&phi22) {
            return Err(Error::InvalidParameter("Phi11 and Phi22 must be symmetric".into()));
        }
        let max_eig = phi22
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if max_eig >= -1e-10 {
            return Err(Error::InvalidParameter(
                "Phi22 must be negative definite".into(),
            ));
        }
        Ok(NoiseBound { phi11, phi12, phi22 })
    }

    /// Energy-ball shorthand: Phi11 = T * omega_max * I, Phi12 = 0,
    /// Phi22 = -I, which bounds W W' by T * omega_max * I.
    pub fn energy_ball(n: usize, t: usize, omega_max: f64) -> Result<Self> {
        if omega_max < 0.0 {
            return Err(Error::InvalidParameter("noise level must be >= 0".into()));
        }
        Self::new(
            DMatrix::identity(n, n) * (t as f64 * omega_max),
            DMatrix::zeros(n, t),
            -DMatrix::identity(t, t),
        )
    }

    pub fn phi11(&self) -> &DMatrix<f64> {
        &self.phi11
    }

    pub fn phi12(&self) -> &DMatrix<f64> {
        &self.phi12
    }

    pub fn phi22(&self) -> &DMatrix<f64> {
        &self.phi22
    }

    pub fn horizon(&self) -> usize {
        self.phi22.nrows()
    }

    /// Checks a realized noise matrix against the bound.
    pub fn admits(&self, w: &DMatrix<f64>) -> bool {
        let q = &self.phi11
            + &self.phi12 * w.transpose()
            + w * self.phi12.transpose()
            + w * &self.phi22 * w.transpose();
        let sym = (&q + q.transpose()) * 0.5;
        let min_eig = sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        min_eig >= -TOL_PSD * (1.0 + sym.norm())
    }
}

/// Quadratic-form representation of the set of state matrices consistent
/// with the data, cached in block form.
#[derive(Debug, Clone)]
pub struct UncertaintyEllipsoid {
    n_mat: DMatrix<f64>,
    dim: usize,
    x_shift: DMatrix<f64>,
}

/// Bounded geometry of the ellipsoid after completing the square.
#[derive(Debug, Clone)]
pub enum EllipsoidGeometry {
    Bounded {
        /// Chebyshev-style center -N12 N22^{-1}.
        center: DMatrix<f64>,
        /// Schur complement N11 - N12 N22^{-1} N12'.
        shape: DMatrix<f64>,
    },
    Unbounded,
}

impl UncertaintyEllipsoid {
    /// N = [I X_U; 0 -X-] Phi [I X_U; 0 -X-]' with X_U = X+ - B U.
    pub fn build(data: &TrajectoryData, b: &DMatrix<f64>, bound: &NoiseBound) -> Result<Self> {
        let n = data.dim();
        let t = data.horizon();
        if b.nrows() != n || b.ncols() != data.u().nrows() {
            return Err(Error::DimensionMismatch(format!(
                "input matrix must be {} x {}",
                n,
                data.u().nrows()
            )));
        }
        if bound.phi11().nrows() != n || bound.horizon() != t {
            return Err(Error::DimensionMismatch("noise bound shape".into()));
        }
        let x_shift = data.x_plus() - b * data.u();
        let mut lifting = DMatrix::zeros(2 * n, n + t);
        lifting.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
        lifting.view_mut((0, n), (n, t)).copy_from(&x_shift);
        lifting.view_mut((n, n), (n, t)).copy_from(&(-data.x_minus()));
        let mut phi = DMatrix::zeros(n + t, n + t);
        phi.view_mut((0, 0), (n, n)).copy_from(bound.phi11());
        phi.view_mut((0, n), (n, t)).copy_from(bound.phi12());
        phi.view_mut((n, 0), (t, n)).copy_from(&bound.phi12().transpose());
        phi.view_mut((n, n), (t, t)).copy_from(bound.phi22());
        let raw = &lifting * phi * lifting.transpose();
        let n_mat = (&raw + raw.transpose()) * 0.5;
        Ok(UncertaintyEllipsoid { n_mat, dim: n, x_shift })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The full 2n x 2n matrix N.
    pub fn n_matrix(&self) -> &DMatrix<f64> {
        &self.n_mat
    }

    pub fn n11(&self) -> DMatrix<f64> {
        self.n_mat.view((0, 0), (self.dim, self.dim)).into()
    }

    pub fn n12(&self) -> DMatrix<f64> {
        self.n_mat.view((0, self.dim), (self.dim, self.dim)).into()
    }

    pub fn n22(&self) -> DMatrix<f64> {
        self.n_mat.view((self.dim, self.dim), (self.dim, self.dim)).into()
    }

    /// X+ - B U.
    pub fn x_shift(&self) -> &DMatrix<f64> {
        &self.x_shift
    }

    /// Quadratic form [I A] N [I A]' whose nonnegativity defines
    /// membership.
    pub fn quadratic_form(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let q = self.n11() + self.n12() * a.transpose() + a * self.n12().transpose()
            + a * self.n22() * a.transpose();
        (&q + q.transpose()) * 0.5
    }

    /// True iff the candidate state matrix is consistent with the data.
    pub fn membership(&self, a: &DMatrix<f64>) -> bool {
        assert_eq!(a.nrows(), self.dim);
        assert_eq!(a.ncols(), self.dim);
        let q = self.quadratic_form(a);
        let min_eig = q.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        min_eig >= -TOL_PSD * self.scale()
    }

    fn scale(&self) -> f64 {
        // spectral norm of N
        self.n_mat.symmetric_eigenvalues().iter().map(|e| e.abs()).fold(1.0, f64::max)
    }

    /// Generalized Slater check by eigenvalue counting: N must have at
    /// least n eigenvalues above tolerance.
    pub fn slater_check(&self) -> bool {
        let eigs = self.n_mat.symmetric_eigenvalues();
        let tol = TOL_EIG * self.scale();
        eigs.iter().filter(|&&e| e > tol).count() >= self.dim
    }

    /// Completes the square: the set is A_c + {D : D (-N22) D' <= S}.
    pub fn center_and_radius(&self) -> EllipsoidGeometry {
        let n22 = self.n22();
        let max_eig =
            n22.symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max_eig >= -TOL_EIG * self.scale() {
            return EllipsoidGeometry::Unbounded;
        }
        let n22_inv = n22.try_inverse().expect("negative definite block is invertible");
        let center = -self.n12() * &n22_inv;
        let shape = self.n11() - self.n12() * &n22_inv * self.n12().transpose();
        let shape = (&shape + shape.transpose()) * 0.5;
        EllipsoidGeometry::Bounded { center, shape }
    }

    /// Deterministic members of the set: the center first, then samples
    /// with at least half on the boundary. Every returned matrix passes
    /// [`Self::membership`].
    pub fn sample_members(&self, count: usize, seed: u64) -> Result<Vec<DMatrix<f64>>> {
        let (center, shape) = match self.center_and_radius() {
            EllipsoidGeometry::Bounded { center, shape } => (center, shape),
            EllipsoidGeometry::Unbounded => return Err(Error::UnboundedUncertainty),
        };
        let n = self.dim;
        // -N22 = R R' (Cholesky); D = S^{1/2} C R^{-1} keeps the form
        // D (-N22) D' = S^{1/2} C C' S^{1/2} inside S whenever |C|_2 <= 1.
        let chol = (-self.n22())
            .cholesky()
            .ok_or_else(|| Error::NumericalFailure("-N22 lost definiteness".into()))?;
        let r_inv = chol
            .l()
            .try_inverse()
            .ok_or_else(|| Error::NumericalFailure("Cholesky factor inversion".into()))?;
        let shape_sqrt = psd_sqrt(&shape);

        let mut out = Vec::with_capacity(count);
        if count >= 1 {
            out.push(center.clone());
        }
        for idx in 1..count {
            // counter-based seeding keyed by (seed, index)
            let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, idx as u64));
            let c = DMatrix::from_fn(n, n, |_, _| standard_normal(&mut rng));
            let norm = spectral_norm(&c).max(1e-300);
            // even indices on the boundary, odd in the interior
            let target = if idx % 2 == 0 { 1.0 } else { rng.gen_range(0.0..1.0) };
            let c = c * (target / norm);
            // Boundary samples can land a hair outside on badly
            // conditioned sets; back off by machine-scale factors until
            // the membership check accepts the point.
            let mut member = &center + &shape_sqrt * &c * &r_inv;
            for shrink in [1.0 - 1e-12, 1.0 - 1e-9, 1.0 - 1e-6, 1.0 - 1e-3, 0.0] {
                if self.membership(&member) {
                    break;
                }
                member = &center + &shape_sqrt * &c * &r_inv * shrink;
            }
            debug_assert!(self.membership(&member));
            out.push(member);
        }
        Ok(out)
    }
}

/// True iff X- has full row rank at tolerance TOL_RANK.
pub fn rank_condition(data: &TrajectoryData) -> bool {
    numeric_rank(data.x_minus()) == data.dim()
}

/// Singular values above tol_rank * sigma_max.
pub fn numeric_rank(m: &DMatrix<f64>) -> usize {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|&&s| s > TOL_RANK * smax).count()
}

/// Splitmix64-style mixing for counter-based seeding.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal draw used wherever Gaussian samples are needed.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.iter().cloned().fold(0.0, f64::max)
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| e.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Two-state, two-input nilpotent fixture whose X- matrix is rank
/// deficient, so the consistent set has unbounded entries.
pub fn example1_data() -> (TrajectoryData, DMatrix<f64>, NoiseBound) {
    let x_minus = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
    let u = DMatrix::identity(2, 2);
    let x_plus = DMatrix::identity(2, 2);
    let b = DMatrix::identity(2, 2);
    let data = TrajectoryData::new_multi_input(x_minus, u, x_plus).unwrap();
    let bound = NoiseBound::new(
        DMatrix::identity(2, 2),
        DMatrix::zeros(2, 2),
        -DMatrix::identity(2, 2),
    )
    .unwrap();
    (data, b, bound)
}
