//! Affine LMI modeling layer over a conic interior-point solver.
//!
//! Problems are stated with symmetric-matrix, row-vector and scalar
//! variables, a list of affine PSD constraints and an optional linear
//! objective. Translation to conic standard form uses the scaled
//! symmetric vectorization (off-diagonals weighted by sqrt(2)), and
//! every result labeled feasible is re-checked against the original
//! constraints with an eigenvalue solver independent of the conic
//! solver.

use std::collections::HashMap;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Scaled symmetric vectorization in the conic solver's PSD-triangle
/// convention: column-major upper triangle, off-diagonals times sqrt(2).
pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                out.push(m[(i, j)]);
            } else {
                out.push(SQRT2 * 0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), n * (n + 1) / 2, "svec length mismatch");
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                m[(i, j)] = v[k];
            } else {
                m[(i, j)] = v[k] / SQRT2;
                m[(j, i)] = v[k] / SQRT2;
            }
            k += 1;
        }
    }
    m
}

/// Side length of the symmetric matrix a triangle vector of length `len`
/// corresponds to.
pub fn triangle_dim(len: usize) -> usize {
    let n = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    assert_eq!(n * (n + 1) / 2, len, "not a triangle number");
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarKind {
    /// Symmetric matrix of the given side length.
    Symmetric(usize),
    /// Row vector 1 x d.
    Row(usize),
    Scalar,
}

impl VarKind {
    fn num_coords(self) -> usize {
        match self {
            VarKind::Symmetric(d) => d * (d + 1) / 2,
            VarKind::Row(d) => d,
            VarKind::Scalar => 1,
        }
    }

    fn from_coords(self, x: &[f64]) -> DMatrix<f64> {
        match self {
            VarKind::Symmetric(d) => smat(x, d),
            VarKind::Row(d) => DMatrix::from_row_slice(1, d, x),
            VarKind::Scalar => DMatrix::from_element(1, 1, x[0]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug, Clone, Serialize)]
struct Variable {
    name: String,
    kind: VarKind,
    /// Lower bound for scalar variables; bool marks strictness.
    lower: Option<(f64, bool)>,
    upper: Option<f64>,
}

/// One additive term `pre * V * post` (or `pre * V' * post`) of a
/// constraint matrix expression. For scalar variables with a non-column
/// `pre`, the term is interpreted as `v * (pre * post)` so scalars can
/// multiply full coefficient matrices.
#[derive(Debug, Clone)]
pub struct Term {
    pub var: VarId,
    pub pre: DMatrix<f64>,
    pub post: DMatrix<f64>,
    pub transposed: bool,
}

/// Affine PSD constraint `constant + sum(terms) >= 0` (`> 0` when strict).
#[derive(Debug, Clone)]
pub struct LmiConstraint {
    pub dim: usize,
    pub constant: DMatrix<f64>,
    pub terms: Vec<Term>,
    pub strict: bool,
}

impl LmiConstraint {
    pub fn new(constant: DMatrix<f64>) -> Self {
        assert_eq!(constant.nrows(), constant.ncols());
        LmiConstraint { dim: constant.nrows(), constant, terms: Vec::new(), strict: false }
    }

    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    pub fn term(mut self, var: VarId, pre: DMatrix<f64>, post: DMatrix<f64>) -> Self {
        self.terms.push(Term { var, pre, post, transposed: false });
        self
    }

    pub fn term_t(mut self, var: VarId, pre: DMatrix<f64>, post: DMatrix<f64>) -> Self {
        self.terms.push(Term { var, pre, post, transposed: true });
        self
    }

    /// Adds `v * coeff` for a scalar variable and a symmetric coefficient
    /// matrix.
    pub fn scaled(self, var: VarId, coeff: DMatrix<f64>) -> Self {
        let dim = coeff.ncols();
        self.term(var, coeff, DMatrix::identity(dim, dim))
    }

    /// Adds `pre * V * post` together with its transpose so the pair is
    /// symmetric regardless of `V`.
    pub fn sym_pair(self, var: VarId, pre: DMatrix<f64>, post: DMatrix<f64>) -> Self {
        let pre_t = post.transpose();
        let post_t = pre.transpose();
        self.term(var, pre, post).term_t(var, pre_t, post_t)
    }
}

#[derive(Debug, Clone)]
pub enum Objective {
    Feasibility,
    /// Maximize a linear functional of scalar variables.
    Maximize(Vec<(VarId, f64)>),
}

#[derive(Debug, Clone)]
pub struct LmiProblem {
    vars: Vec<Variable>,
    constraints: Vec<LmiConstraint>,
    pub objective: Objective,
}

impl Default for LmiProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl LmiProblem {
    pub fn new() -> Self {
        LmiProblem { vars: Vec::new(), constraints: Vec::new(), objective: Objective::Feasibility }
    }

    fn add_var(&mut self, name: &str, kind: VarKind) -> VarId {
        assert!(
            self.vars.iter().all(|v| v.name != name),
            "duplicate variable name {name}"
        );
        self.vars.push(Variable { name: name.to_string(), kind, lower: None, upper: None });
        VarId(self.vars.len() - 1)
    }

    pub fn symmetric(&mut self, name: &str, dim: usize) -> VarId {
        self.add_var(name, VarKind::Symmetric(dim))
    }

    pub fn row(&mut self, name: &str, dim: usize) -> VarId {
        self.add_var(name, VarKind::Row(dim))
    }

    pub fn scalar(&mut self, name: &str) -> VarId {
        self.add_var(name, VarKind::Scalar)
    }

    /// Nonstrict scalar lower bound.
    pub fn set_lower(&mut self, var: VarId, lb: f64) {
        assert_eq!(self.vars[var.0].kind, VarKind::Scalar);
        self.vars[var.0].lower = Some((lb, false));
    }

    /// Strict scalar lower bound; rewritten as `>= lb + eps` at solve time.
    pub fn set_lower_strict(&mut self, var: VarId, lb: f64) {
        assert_eq!(self.vars[var.0].kind, VarKind::Scalar);
        self.vars[var.0].lower = Some((lb, true));
    }

    pub fn set_upper(&mut self, var: VarId, ub: f64) {
        assert_eq!(self.vars[var.0].kind, VarKind::Scalar);
        self.vars[var.0].upper = Some(ub);
    }

    pub fn add_constraint(&mut self, c: LmiConstraint) {
        self.constraints.push(c);
    }

    pub fn maximize(&mut self, terms: Vec<(VarId, f64)>) {
        self.objective = Objective::Maximize(terms);
    }

    fn kind(&self, var: VarId) -> VarKind {
        self.vars[var.0].kind
    }

    fn num_coords(&self) -> usize {
        self.vars.iter().map(|v| v.kind.num_coords()).sum()
    }

    fn var_offset(&self, var: VarId) -> usize {
        self.vars[..var.0].iter().map(|v| v.kind.num_coords()).sum()
    }

    /// Constraint matrix for the given variable assignment.
    fn eval_constraint(&self, c: &LmiConstraint, values: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut m = c.constant.clone();
        for t in &c.terms {
            let v = &values[t.var.0];
            let contrib = if v.nrows() == 1 && v.ncols() == 1 && t.pre.ncols() != 1 {
                (&t.pre * &t.post) * v[(0, 0)]
            } else if t.transposed {
                &t.pre * v.transpose() * &t.post
            } else {
                &t.pre * v * &t.post
            };
            m += contrib;
        }
        m
    }

    fn values_from_coords(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(self.vars.len());
        let mut off = 0;
        for v in &self.vars {
            let nc = v.kind.num_coords();
            out.push(v.kind.from_coords(&x[off..off + nc]));
            off += nc;
        }
        out
    }

    /// Rewrites strict constraints and bounds with the margin `eps`,
    /// per the single-knob reconciliation of strict LMIs with nonstrict
    /// conic solvers.
    pub fn apply_strict_margin(&self, eps: f64) -> LmiProblem {
        assert!(eps > 0.0, "margin must be positive");
        let mut p = self.clone();
        for c in &mut p.constraints {
            if c.strict {
                c.constant -= DMatrix::identity(c.dim, c.dim) * eps;
                c.strict = false;
            }
        }
        for v in &mut p.vars {
            if let Some((lb, true)) = v.lower {
                v.lower = Some((lb + eps, false));
            }
        }
        p
    }

    /// Debug dump of the problem in coefficient form.
    pub fn dump_json(&self) -> serde_json::Value {
        let ncoords = self.num_coords();
        let cons: Vec<serde_json::Value> = self
            .constraints
            .iter()
            .map(|c| {
                let zeros = self.values_from_coords(&vec![0.0; ncoords]);
                let constant = self.eval_constraint(c, &zeros);
                let mut cols = Vec::with_capacity(ncoords);
                for j in 0..ncoords {
                    let mut x = vec![0.0; ncoords];
                    x[j] = 1.0;
                    let vals = self.values_from_coords(&x);
                    let g = self.eval_constraint(c, &vals) - &constant;
                    cols.push(svec(&g));
                }
                serde_json::json!({
                    "dim": c.dim,
                    "strict": c.strict,
                    "constant_svec": svec(&constant),
                    "coefficient_columns": cols,
                })
            })
            .collect();
        serde_json::json!({
            "variables": self.vars,
            "constraints": cons,
            "objective": match &self.objective {
                Objective::Feasibility => serde_json::json!("feasibility"),
                Objective::Maximize(t) => serde_json::json!(t
                    .iter()
                    .map(|(v, c)| (self.vars[v.0].name.clone(), *c))
                    .collect::<Vec<_>>()),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct SolverStats {
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub raw_status: String,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub values: HashMap<String, DMatrix<f64>>,
    pub objective_value: Option<f64>,
    pub stats: SolverStats,
}

impl SolveResult {
    pub fn matrix(&self, name: &str) -> &DMatrix<f64> {
        &self.values[name]
    }

    pub fn scalar(&self, name: &str) -> f64 {
        self.values[name][(0, 0)]
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::Feasible)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Margin substituted for strict inequalities.
    pub strict_margin: f64,
    /// Relative feasibility tolerance of the independent re-validation.
    pub revalidation_tol: f64,
    pub max_iter: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { strict_margin: 1e-6, revalidation_tol: 1e-6, max_iter: 200 }
    }
}

/// Solves the LMI problem through the conic solver and re-validates the
/// reported solution independently before returning a status.
pub fn solve(problem: &LmiProblem, options: &SolveOptions) -> Result<SolveResult> {
    let p = problem.apply_strict_margin(options.strict_margin);
    let ncoords = p.num_coords();
    if ncoords == 0 {
        return Err(Error::InvalidParameter("problem has no variables".into()));
    }

    // Precompute per-constraint constant and coefficient columns in
    // svec coordinates, checking symmetry of the expression.
    let zeros = p.values_from_coords(&vec![0.0; ncoords]);
    let mut rows_total = 0;
    let mut blocks: Vec<(usize, Vec<f64>, Vec<Vec<f64>>)> = Vec::new();
    for c in &p.constraints {
        check_symmetric(&c.constant)?;
        let constant = p.eval_constraint(c, &zeros);
        let mut cols = Vec::with_capacity(ncoords);
        for j in 0..ncoords {
            let mut x = vec![0.0; ncoords];
            x[j] = 1.0;
            let vals = p.values_from_coords(&x);
            let g = p.eval_constraint(c, &vals) - &constant;
            check_symmetric(&g)?;
            cols.push(svec(&g));
        }
        let len = c.dim * (c.dim + 1) / 2;
        rows_total += len;
        blocks.push((c.dim, svec(&constant), cols));
    }

    // Scalar bound rows go into a single nonnegative cone.
    let mut bound_rows: Vec<(usize, f64, f64)> = Vec::new(); // (coord, sign, rhs)
    for (vi, v) in p.vars.iter().enumerate() {
        let off = p.var_offset(VarId(vi));
        if let Some((lb, strict)) = v.lower {
            debug_assert!(!strict, "strict bounds are rewritten before solving");
            bound_rows.push((off, -1.0, -lb)); // s = x - lb >= 0
        }
        if let Some(ub) = v.upper {
            bound_rows.push((off, 1.0, ub)); // s = ub - x >= 0
        }
    }
    rows_total += bound_rows.len();

    // Assemble A (rows_total x ncoords) and b with  A x + s = b,  s in K.
    let mut a_dense = DMatrix::zeros(rows_total, ncoords);
    let mut b = vec![0.0; rows_total];
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut row = 0;
    if !bound_rows.is_empty() {
        for &(coord, sign, rhs) in &bound_rows {
            a_dense[(row, coord)] = sign;
            b[row] = rhs;
            row += 1;
        }
        cones.push(SupportedConeT::NonnegativeConeT(bound_rows.len()));
    }
    for (dim, constant, cols) in &blocks {
        let len = constant.len();
        for (j, col) in cols.iter().enumerate() {
            for (k, &g) in col.iter().enumerate() {
                a_dense[(row + k, j)] = -g;
            }
        }
        b[row..row + len].copy_from_slice(constant);
        cones.push(SupportedConeT::PSDTriangleConeT(*dim));
        row += len;
    }

    let mut q = vec![0.0; ncoords];
    if let Objective::Maximize(terms) = &p.objective {
        for (var, coeff) in terms {
            assert_eq!(p.kind(*var), VarKind::Scalar, "objective must be over scalars");
            q[p.var_offset(*var)] -= coeff; // solver minimizes
        }
    }

    let a = dense_to_csc(&a_dense);
    let pmat = CscMatrix::zeros((ncoords, ncoords));
    let settings = DefaultSettings {
        verbose: false,
        max_iter: options.max_iter,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&pmat, &q, &a, &b, &cones, settings);
    solver.solve();

    let raw = solver.solution.status;
    let x = solver.solution.x.clone();
    let values_list = problem.values_from_coords(&x);
    let mut values = HashMap::new();
    for (v, m) in problem.vars.iter().zip(values_list.iter()) {
        values.insert(v.name.clone(), m.clone());
    }
    let objective_value = match &problem.objective {
        Objective::Feasibility => None,
        Objective::Maximize(_) => Some(-solver.solution.obj_val),
    };
    let mut stats = SolverStats {
        iterations: solver.solution.iterations,
        primal_residual: solver.solution.r_prim,
        dual_residual: solver.solution.r_dual,
        raw_status: format!("{raw:?}"),
        notes: Vec::new(),
    };

    let status = match raw {
        SolverStatus::Solved => {
            if revalidate(problem, &values_list, options.revalidation_tol) {
                if matches!(problem.objective, Objective::Feasibility) {
                    SolveStatus::Feasible
                } else {
                    SolveStatus::Optimal
                }
            } else {
                stats.notes.push("solver reported solved but re-validation failed".into());
                SolveStatus::NumericalFailure
            }
        }
        SolverStatus::AlmostSolved => {
            if revalidate(problem, &values_list, options.revalidation_tol) {
                stats.notes.push("accepted reduced-accuracy solution after re-validation".into());
                if matches!(problem.objective, Objective::Feasibility) {
                    SolveStatus::Feasible
                } else {
                    SolveStatus::Optimal
                }
            } else {
                SolveStatus::NumericalFailure
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            SolveStatus::Unbounded
        }
        _ => SolveStatus::NumericalFailure,
    };

    Ok(SolveResult { status, values, objective_value, stats })
}

/// Independent feasibility check of a candidate point against the
/// original (unmargined) constraints.
pub fn revalidate(problem: &LmiProblem, values: &[DMatrix<f64>], tol: f64) -> bool {
    for c in &problem.constraints {
        let m = problem.eval_constraint(c, values);
        let sym = (&m + m.transpose()) * 0.5;
        let eigs = sym.symmetric_eigenvalues();
        let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        let scale = 1.0 + c.constant.norm();
        if min_eig < -tol * scale {
            return false;
        }
    }
    for (vi, v) in problem.vars.iter().enumerate() {
        if v.kind != VarKind::Scalar {
            continue;
        }
        let x = values[vi][(0, 0)];
        if let Some((lb, _)) = v.lower {
            if x < lb - tol * (1.0 + lb.abs()) {
                return false;
            }
        }
        if let Some(ub) = v.upper {
            if x > ub + tol * (1.0 + ub.abs()) {
                return false;
            }
        }
    }
    true
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let asym = (m - m.transpose()).norm();
    if asym > 1e-10 * (1.0 + m.norm()) {
        return Err(Error::InvalidParameter(
            "constraint matrix expression is not symmetric".into(),
        ));
    }
    Ok(())
}

fn dense_to_csc(m: &DMatrix<f64>) -> CscMatrix<f64> {
    let (nrows, ncols) = m.shape();
    let mut colptr = Vec::with_capacity(ncols + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for j in 0..ncols {
        for i in 0..nrows {
            let v = m[(i, j)];
            if v != 0.0 {
                rowval.push(i);
                nzval.push(v);
            }
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(nrows, ncols, colptr, rowval, nzval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn svec_smat_roundtrip() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.5, -1.0, 4.0]);
        let v = svec(&m);
        let back = smat(&v, 3);
        assert!((m - back).norm() < 1e-14);
    }

    #[test]
    fn svec_preserves_inner_products() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]);
        let b = DMatrix::from_row_slice(2, 2, &[3.0, -1.0, -1.0, 2.0]);
        let tr = (&a * &b).trace();
        let dot: f64 = svec(&a).iter().zip(svec(&b)).map(|(x, y)| x * y).sum();
        assert_abs_diff_eq!(tr, dot, epsilon = 1e-12);
    }

    // Scalar Lyapunov: find P >= eps with A'PA - P <= -eps for A = 0.5.
    fn lyapunov_problem(a: f64) -> LmiProblem {
        let mut p = LmiProblem::new();
        let pv = p.symmetric("P", 1);
        // P > 0
        let c1 = LmiConstraint::new(DMatrix::zeros(1, 1))
            .term(pv, DMatrix::identity(1, 1), DMatrix::identity(1, 1))
            .strict();
        // -A'PA + P > 0
        let c2 = LmiConstraint::new(DMatrix::zeros(1, 1))
            .term(pv, DMatrix::from_element(1, 1, -a), DMatrix::from_element(1, 1, a))
            .term(pv, DMatrix::identity(1, 1), DMatrix::identity(1, 1))
            .strict();
        p.add_constraint(c1);
        p.add_constraint(c2);
        p
    }

    #[test]
    fn scalar_lyapunov_stable_feasible() {
        let p = lyapunov_problem(0.5);
        let r = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Feasible, "{:?}", r.stats);
        let pval = r.scalar("P");
        assert!(pval > 0.0);
        assert!(0.25 * pval - pval < 0.0);
    }

    #[test]
    fn scalar_lyapunov_unstable_infeasible() {
        let p = lyapunov_problem(2.0);
        let r = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible, "{:?}", r.stats);
    }

    fn bounded_t_problem(cap: f64) -> LmiProblem {
        let mut p = LmiProblem::new();
        let t = p.scalar("t");
        // cap - t >= 0 as a 1x1 PSD block
        let c = LmiConstraint::new(DMatrix::from_element(1, 1, cap)).term(
            t,
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::identity(1, 1),
        );
        p.add_constraint(c);
        p.set_lower(t, 0.0);
        p.maximize(vec![(t, 1.0)]);
        p
    }

    #[test]
    fn maximize_t_hits_cap() {
        let r = solve(&bounded_t_problem(3.0), &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(r.objective_value.unwrap(), 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.scalar("t"), 3.0, epsilon = 1e-6);
    }

    #[test]
    fn objective_monotone_in_cap() {
        let mut prev = f64::INFINITY;
        for cap in [5.0, 4.0, 2.5, 1.0, 0.25] {
            let r = solve(&bounded_t_problem(cap), &SolveOptions::default()).unwrap();
            let v = r.objective_value.unwrap();
            assert!(v <= prev + 1e-8, "tightening the cap improved the optimum");
            prev = v;
        }
    }

    #[test]
    fn strict_margin_rewrites() {
        let mut p = LmiProblem::new();
        let y = p.symmetric("Y", 2);
        let b = p.scalar("beta");
        p.set_lower_strict(b, 0.0);
        p.add_constraint(
            LmiConstraint::new(DMatrix::zeros(2, 2))
                .term(y, DMatrix::identity(2, 2), DMatrix::identity(2, 2))
                .strict(),
        );
        // nonstrict constraint stays unchanged
        p.add_constraint(LmiConstraint::new(DMatrix::identity(2, 2)));
        let q = p.apply_strict_margin(1e-6);
        assert!((q.constraints[0].constant[(0, 0)] + 1e-6).abs() < 1e-18);
        assert_eq!(q.constraints[1].constant, DMatrix::identity(2, 2));
        assert_eq!(q.vars[1].lower, Some((1e-6, false)));
    }

    #[test]
    fn dump_json_has_all_variables() {
        let p = lyapunov_problem(0.5);
        let d = p.dump_json();
        assert_eq!(d["variables"].as_array().unwrap().len(), 1);
        assert_eq!(d["constraints"].as_array().unwrap().len(), 2);
    }

    proptest! {
        #[test]
        fn svec_roundtrip_random(vals in proptest::collection::vec(-1e3f64..1e3, 10)) {
            let m = smat(&vals, 4);
            let v = svec(&m);
            for (a, b) in v.iter().zip(vals.iter()) {
                prop_assert!((a - b).abs() <= 1e-14 * (1.0 + b.abs()));
            }
        }
    }
}
