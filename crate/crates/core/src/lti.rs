//! Discrete-time LTI systems, the logarithmic quantizer, and noisy
//! open-loop / quantized closed-loop simulation.

use nalgebra::{Complex, DMatrix, DVector};

use crate::data::TrajectoryData;
use crate::error::{Error, Result};

/// Single-input discrete-time system x(k+1) = A x(k) + B u(k) + w(k).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch("state matrix must be square".into()));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "input vector has {} rows, expected {}",
                b.nrows(),
                a.nrows()
            )));
        }
        Ok(LinearSystem { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// B as an n x 1 matrix.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.dim(), 1, self.b.as_slice())
    }
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    m.clone().schur().complex_eigenvalues().iter().cloned().collect()
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Logarithmic quantizer with geometrically spaced levels u_i = rho^{-i} u0.
///
/// Levels are indexed over all integers so the sector bound holds on the
/// whole real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogQuantizer {
    rho: f64,
    u0: f64,
    delta: f64,
}

impl LogQuantizer {
    pub fn new(rho: f64, u0: f64) -> Result<Self> {
        if !(0.0 < rho && rho < 1.0) {
            return Err(Error::InvalidParameter(format!("density must be in (0,1), got {rho}")));
        }
        if !(u0 > 0.0) {
            return Err(Error::InvalidParameter(format!("base level must be positive, got {u0}")));
        }
        Ok(LogQuantizer { rho, u0, delta: (1.0 - rho) / (1.0 + rho) })
    }

    /// Density rho for a given sector radius delta.
    pub fn from_delta(delta: f64, u0: f64) -> Result<Self> {
        if !(0.0 < delta && delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sector radius must be in (0,1), got {delta}"
            )));
        }
        Self::new((1.0 - delta) / (1.0 + delta), u0)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn u0(&self) -> f64 {
        self.u0
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Level u_i = u0 * rho^{-i}; 0 or infinity once the level leaves
    /// the representable range.
    pub fn level(&self, i: i64) -> f64 {
        if let Ok(e) = i32::try_from(i) {
            self.u0 * self.rho.powi(-e)
        } else {
            self.u0 * (-(i as f64) * self.rho.ln()).exp()
        }
    }

    /// Maps v to the unique level with u_i/(1+delta) < v <= u_i/(1-delta)
    /// (v > 0), with f(0) = 0 and odd symmetry.
    pub fn quantize(&self, v: f64) -> f64 {
        if v == 0.0 {
            return 0.0;
        }
        if v < 0.0 {
            return -self.quantize(-v);
        }
        let (lo, hi) = (1.0 - self.delta, 1.0 + self.delta);
        // i = ceil(log_{1/rho}(v (1-delta) / u0)), then fix roundoff at
        // interval boundaries (lower-open, upper-closed).
        let raw = (v * lo / self.u0).ln() / (1.0 / self.rho).ln();
        if !raw.is_finite() {
            // v so extreme that even its logarithm over/underflowed
            return if v < 1.0 { 0.0 } else { f64::MAX };
        }
        let mut i = raw.ceil() as i64;
        for _ in 0..2 {
            let u = self.level(i);
            if u == 0.0 || u.is_infinite() {
                break;
            }
            if v * lo > u {
                i += 1;
            } else if v * hi <= u {
                i -= 1;
            } else {
                break;
            }
        }
        let u = self.level(i);
        if u == 0.0 || u.is_infinite() {
            // the exact level is outside the representable range;
            // saturate rather than violate the level spacing
            return if v < 1.0 { 0.0 } else { f64::MAX };
        }
        debug_assert!(u / hi < v && v <= u / lo, "quantizer interval violated: v={v} u={u}");
        u
    }
}

/// State feedback u = f(K x) around a linear system, with an optional
/// logarithmic quantizer f.
#[derive(Debug, Clone)]
pub struct ClosedLoopSystem {
    pub system: LinearSystem,
    /// 1 x n feedback gain.
    pub gain: DMatrix<f64>,
    pub quantizer: Option<LogQuantizer>,
}

impl ClosedLoopSystem {
    pub fn new(
        system: LinearSystem,
        gain: DMatrix<f64>,
        quantizer: Option<LogQuantizer>,
    ) -> Result<Self> {
        if gain.nrows() != 1 || gain.ncols() != system.dim() {
            return Err(Error::DimensionMismatch(format!(
                "gain must be 1 x {}, got {} x {}",
                system.dim(),
                gain.nrows(),
                gain.ncols()
            )));
        }
        Ok(ClosedLoopSystem { system, gain, quantizer })
    }

    /// A + B K.
    pub fn closed_loop_matrix(&self) -> DMatrix<f64> {
        self.system.a() + self.system.b_matrix() * &self.gain
    }
}

/// Runs x(k+1) = A x(k) + B u(k) + w(k) and returns the stacked data
/// matrices together with the realized noise.
pub fn simulate_open_loop(
    sys: &LinearSystem,
    x0: &DVector<f64>,
    inputs: &[f64],
    noise: &[DVector<f64>],
) -> Result<TrajectoryData> {
    let n = sys.dim();
    if x0.nrows() != n {
        return Err(Error::DimensionMismatch("initial state dimension".into()));
    }
    if inputs.is_empty() || inputs.len() != noise.len() {
        return Err(Error::DimensionMismatch(
            "inputs and noise must have equal nonzero length".into(),
        ));
    }
    if noise.iter().any(|w| w.nrows() != n) {
        return Err(Error::DimensionMismatch("noise vector dimension".into()));
    }
    let t = inputs.len();
    let mut x_minus = DMatrix::zeros(n, t);
    let mut x_plus = DMatrix::zeros(n, t);
    let mut w_mat = DMatrix::zeros(n, t);
    let mut x = x0.clone();
    for k in 0..t {
        x_minus.set_column(k, &x);
        w_mat.set_column(k, &noise[k]);
        x = sys.a() * &x + sys.b() * inputs[k] + &noise[k];
        x_plus.set_column(k, &x);
    }
    let u = DMatrix::from_row_slice(1, t, inputs);
    TrajectoryData::with_noise(x_minus, u, x_plus, w_mat)
}

/// Iterates the quantized closed loop x(k+1) = A x(k) + B f(K x(k)) + w(k)
/// and returns x(0..=steps).
pub fn simulate_quantized_closed_loop(
    cl: &ClosedLoopSystem,
    x0: &DVector<f64>,
    steps: usize,
    noise: Option<&[DVector<f64>]>,
) -> Result<Vec<DVector<f64>>> {
    let q = cl
        .quantizer
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("closed loop has no quantizer".into()))?;
    let n = cl.system.dim();
    if x0.nrows() != n {
        return Err(Error::DimensionMismatch("initial state dimension".into()));
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be >= 1".into()));
    }
    if let Some(w) = noise {
        if w.len() != steps || w.iter().any(|v| v.nrows() != n) {
            return Err(Error::DimensionMismatch("noise sequence shape".into()));
        }
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    states.push(x.clone());
    for k in 0..steps {
        let v = (&cl.gain * &x)[(0, 0)];
        let u = q.quantize(v);
        x = cl.system.a() * &x + cl.system.b() * u;
        if let Some(w) = noise {
            x += &w[k];
        }
        states.push(x.clone());
    }
    Ok(states)
}

/// H-infinity norm of the SISO transfer function K (zI - A - BK)^{-1} B by
/// frequency gridding on the upper unit circle with golden-section
/// refinement around the grid argmax.
pub fn frequency_response_norm(cl: &ClosedLoopSystem, grid_size: usize) -> Result<f64> {
    if grid_size < 64 {
        return Err(Error::InvalidParameter("grid size must be >= 64".into()));
    }
    let acl = cl.closed_loop_matrix();
    if spectral_radius(&acl) >= 1.0 {
        return Err(Error::UnstableClosedLoop);
    }
    let n = acl.nrows();
    let b = cl.system.b_matrix();
    let gain = &cl.gain;
    let magnitude = |theta: f64| -> f64 {
        let z = Complex::new(theta.cos(), theta.sin());
        let mut m = DMatrix::<Complex<f64>>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = Complex::new(-acl[(i, j)], 0.0);
            }
            m[(i, i)] += z;
        }
        let rhs = DMatrix::<Complex<f64>>::from_fn(n, 1, |i, _| Complex::new(b[(i, 0)], 0.0));
        let sol = m.lu().solve(&rhs).expect("zI - Acl is invertible off the spectrum");
        let mut g = Complex::new(0.0, 0.0);
        for j in 0..n {
            g += Complex::new(gain[(0, j)], 0.0) * sol[(j, 0)];
        }
        g.norm()
    };

    let mut best = (0usize, 0.0f64);
    let step = std::f64::consts::PI / (grid_size as f64 - 1.0);
    for k in 0..grid_size {
        let v = magnitude(k as f64 * step);
        if v > best.1 {
            best = (k, v);
        }
    }
    // Golden-section refinement on the bracketing grid interval.
    let lo = if best.0 == 0 { 0.0 } else { (best.0 - 1) as f64 * step };
    let hi = ((best.0 + 1).min(grid_size - 1)) as f64 * step;
    let (mut a, mut c) = (lo, hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = c - inv_phi * (c - a);
    let mut x2 = a + inv_phi * (c - a);
    let mut f1 = magnitude(x1);
    let mut f2 = magnitude(x2);
    while c - a > 1e-6 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (c - a);
            f2 = magnitude(x2);
        } else {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - inv_phi * (c - a);
            f1 = magnitude(x1);
        }
    }
    Ok(best.1.max(f1).max(f2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn e(n: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v
    }

    #[test]
    fn quantize_examples() {
        let q = LogQuantizer::new(0.5, 1.0).unwrap();
        assert_abs_diff_eq!(q.delta(), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(q.quantize(0.0), 0.0);
        // 1 lies in (0.75, 1.5], the level-1 interval
        assert_abs_diff_eq!(q.quantize(1.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.quantize(-1.0), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn quantize_rejects_bad_parameters() {
        assert!(LogQuantizer::new(0.0, 1.0).is_err());
        assert!(LogQuantizer::new(1.0, 1.0).is_err());
        assert!(LogQuantizer::new(0.5, 0.0).is_err());
    }

    #[test]
    fn quantize_idempotent_on_levels() {
        for rho in [0.1, 0.5, 0.9] {
            let q = LogQuantizer::new(rho, 1.0).unwrap();
            for i in -20..=20 {
                let u = q.level(i);
                assert_eq!(q.quantize(u), u, "rho={rho} i={i}");
            }
        }
    }

    #[test]
    fn delta_rho_bijection() {
        for rho in [0.05, 0.3, 0.77, 0.999] {
            let q = LogQuantizer::new(rho, 1.0).unwrap();
            let back = (1.0 - q.delta()) / (1.0 + q.delta());
            assert_abs_diff_eq!(back, rho, epsilon = 1e-12);
        }
    }

    #[test]
    fn open_loop_zero_dynamics() {
        let sys = LinearSystem::new(DMatrix::zeros(2, 2), e(2, 0)).unwrap();
        let data =
            simulate_open_loop(&sys, &DVector::zeros(2), &[1.0], &[DVector::zeros(2)]).unwrap();
        assert_eq!(data.x_minus().column(0), DVector::zeros(2).column(0));
        assert_eq!(data.u()[(0, 0)], 1.0);
        assert_eq!(data.x_plus().column(0), e(2, 0).column(0));
    }

    #[test]
    fn open_loop_identity_dynamics() {
        let sys = LinearSystem::new(DMatrix::identity(2, 2), e(2, 0)).unwrap();
        let data = simulate_open_loop(
            &sys,
            &e(2, 1),
            &[0.0, 0.0],
            &[DVector::zeros(2), DVector::zeros(2)],
        )
        .unwrap();
        assert_eq!(data.x_plus().column(1), e(2, 1).column(0));
    }

    #[test]
    fn open_loop_dimension_errors() {
        let sys = LinearSystem::new(DMatrix::zeros(2, 2), e(2, 0)).unwrap();
        assert!(simulate_open_loop(&sys, &DVector::zeros(3), &[1.0], &[DVector::zeros(2)]).is_err());
        assert!(simulate_open_loop(&sys, &DVector::zeros(2), &[1.0], &[]).is_err());
    }

    #[test]
    fn closed_loop_zero_state_stays_zero() {
        let sys = LinearSystem::new(DMatrix::identity(2, 2) * 2.0, e(2, 0)).unwrap();
        let cl = ClosedLoopSystem::new(
            sys,
            DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]),
            Some(LogQuantizer::new(0.5, 1.0).unwrap()),
        )
        .unwrap();
        let states = simulate_quantized_closed_loop(&cl, &DVector::zeros(2), 5, None).unwrap();
        assert!(states.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn closed_loop_k_zero_matches_open_loop_decay() {
        let sys = LinearSystem::new(DMatrix::identity(2, 2) * 0.5, e(2, 0)).unwrap();
        let cl = ClosedLoopSystem::new(
            sys,
            DMatrix::zeros(1, 2),
            Some(LogQuantizer::new(0.5, 1.0).unwrap()),
        )
        .unwrap();
        let x0 = DVector::from_vec(vec![1.0, -2.0]);
        let states = simulate_quantized_closed_loop(&cl, &x0, 10, None).unwrap();
        for (k, x) in states.iter().enumerate() {
            assert_abs_diff_eq!(x.norm(), x0.norm() * 0.5f64.powi(k as i32), epsilon = 1e-12);
        }
    }

    #[test]
    fn frequency_norm_scalar_closed_form() {
        // |0.5/(z - 0.5)| peaks at z = 1 with value 1.
        let sys =
            LinearSystem::new(DMatrix::zeros(1, 1), DVector::from_vec(vec![1.0])).unwrap();
        let cl =
            ClosedLoopSystem::new(sys, DMatrix::from_element(1, 1, 0.5), None).unwrap();
        let norm = frequency_response_norm(&cl, 4096).unwrap();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn frequency_norm_zero_gain() {
        let sys =
            LinearSystem::new(DMatrix::identity(2, 2) * 0.3, e(2, 0)).unwrap();
        let cl = ClosedLoopSystem::new(sys, DMatrix::zeros(1, 2), None).unwrap();
        assert_eq!(frequency_response_norm(&cl, 4096).unwrap(), 0.0);
    }

    #[test]
    fn frequency_norm_unstable_errors() {
        let sys =
            LinearSystem::new(DMatrix::identity(1, 1) * 2.0, DVector::from_vec(vec![0.0]))
                .unwrap();
        let cl = ClosedLoopSystem::new(sys, DMatrix::zeros(1, 1), None).unwrap();
        assert!(matches!(
            frequency_response_norm(&cl, 4096),
            Err(Error::UnstableClosedLoop)
        ));
    }

    #[test]
    fn frequency_norm_similarity_invariant() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-0.4..0.4));
        let b = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let k = DMatrix::from_fn(1, 3, |_, _| rng.gen_range(-0.2..0.2));
        let sys = LinearSystem::new(a.clone(), b.clone()).unwrap();
        let cl = ClosedLoopSystem::new(sys, k.clone(), None).unwrap();
        let n1 = frequency_response_norm(&cl, 4096).unwrap();
        // similarity transform by a well-conditioned T
        let t = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.1, 1.5, 0.2, 0.0, -0.4, 1.0]);
        let tinv = t.clone().try_inverse().unwrap();
        let at = &t * &a * &tinv;
        let bt = &t * &b;
        let kt = &k * &tinv;
        let sys2 = LinearSystem::new(at, bt).unwrap();
        let cl2 = ClosedLoopSystem::new(sys2, kt, None).unwrap();
        let n2 = frequency_response_norm(&cl2, 4096).unwrap();
        assert_abs_diff_eq!(n1, n2, epsilon = 1e-6 * (1.0 + n1));
    }

    proptest! {
        #[test]
        fn sector_bound_holds(
            exp in -8.0f64..8.0,
            mantissa in 1.0f64..10.0,
            negative in proptest::bool::ANY,
            rho in 0.05f64..0.95,
        ) {
            let v = mantissa * 10f64.powf(exp) * if negative { -1.0 } else { 1.0 };
            let q = LogQuantizer::new(rho, 1.0).unwrap();
            let f = q.quantize(v);
            let delta = q.delta();
            prop_assert!((f - v).abs() <= delta * v.abs() * (1.0 + 1e-12));
        }

        #[test]
        fn odd_symmetry(v in -1e6f64..1e6, rho in 0.05f64..0.95) {
            let q = LogQuantizer::new(rho, 1.0).unwrap();
            prop_assert_eq!(q.quantize(-v), -q.quantize(v));
        }
    }
}
