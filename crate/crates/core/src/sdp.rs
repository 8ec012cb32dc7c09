//! Semidefinite programs in LMI form and the interior-point backend.
//!
//! A [`ConicProgram`] is a linear objective over the decision vector of a
//! [`VariableSet`], a list of matrix inequalities `F(x) ⪰ δI` / `F(x) ⪯ −δI`
//! with `F` affine, and scalar upper bounds.  Solvers implement
//! [`ConicSolver`]; the shipped one is [`ClarabelSolver`].

use std::io::{self, Write};
use std::time::Instant;

use clarabel::algebra::{CscMatrix, FloatT};
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lmi::{AffineMatrix, VariableSet};
use crate::scalar::Real;

/// Relative asymmetry above which an LMI expression is rejected.
const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("constraint '{name}' is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { name: String, asymmetry: f64 },
    #[error("constraint '{name}' is not square ({rows}x{cols})")]
    NotSquare { name: String, rows: usize, cols: usize },
    #[error("objective has {got} coefficients for {expected} variables")]
    ObjectiveLength { got: usize, expected: usize },
    #[error("backend rejected the problem: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// `F(x) ⪰ δI`
    PositiveSemidefinite,
    /// `F(x) ⪯ −δI`
    NegativeSemidefinite,
}

#[derive(Debug, Clone)]
pub struct LmiConstraint<T: Real> {
    pub name: String,
    pub expr: AffineMatrix<T>,
    pub sense: Sense,
    pub margin: T,
}

/// `Σ coeffs_k x_k ≤ upper`.
#[derive(Debug, Clone)]
pub struct LinearConstraint<T: Real> {
    pub name: String,
    pub coeffs: Vec<(usize, T)>,
    pub upper: T,
}

#[derive(Debug, Clone)]
pub struct ConicProgram<T: Real> {
    pub vars: VariableSet,
    /// Minimized: `objective' x`.
    pub objective: Vec<T>,
    pub lmis: Vec<LmiConstraint<T>>,
    pub linear: Vec<LinearConstraint<T>>,
}

/// Feasibility of one constraint at a candidate point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResidual {
    pub name: String,
    pub sense: Sense,
    /// Smallest eigenvalue for `⪰`, largest for `⪯`, `a'x − upper` for
    /// scalar bounds.
    pub extreme_eigenvalue: f64,
    /// Distance past the margin; negative means violated.
    pub slack: f64,
    /// Frobenius norm of the backend's dual block (zero if unavailable).
    pub dual_norm: f64,
    /// Strictness margin the constraint was posed with.
    #[serde(default)]
    pub margin: f64,
}

impl ConstraintResidual {
    pub fn satisfied(&self, tol: f64) -> bool {
        self.slack >= -tol
    }

    /// Whether the constraint holds with at least half of its margin, up to
    /// an absolute `tol` (interior-point solutions sit on the boundary of the
    /// shifted cone only up to the solver tolerance).
    pub fn holds_with_half_margin(&self, tol: f64) -> bool {
        self.slack >= -0.5 * self.margin - tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport<T: Real> {
    pub status: SolveStatus,
    /// Set when the backend only reached its reduced-accuracy tolerances.
    pub inaccurate: bool,
    /// Raw backend status, for logs.
    pub backend_status: String,
    pub x: Vec<T>,
    pub objective: f64,
    /// Achieved `θ` and `γ² = 1/θ`; filled in by the synthesis layer.
    pub theta: Option<f64>,
    pub gamma_sq: Option<f64>,
    pub residuals: Vec<ConstraintResidual>,
    pub iterations: u32,
    pub solve_seconds: f64,
}

impl<T: Real> SolveReport<T> {
    /// Most violated slack over all constraints (positive if all hold).
    pub fn worst_slack(&self) -> f64 {
        self.residuals.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }
}

pub trait ConicSolver<T: Real> {
    fn solve(&self, program: &ConicProgram<T>) -> Result<SolveReport<T>, SdpError>;
}

impl<T: Real> ConicProgram<T> {
    pub fn new(vars: VariableSet) -> Self {
        let n = vars.len();
        Self {
            vars,
            objective: vec![T::zero(); n],
            lmis: Vec::new(),
            linear: Vec::new(),
        }
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn minimize(&mut self, coeffs: &[(usize, T)]) {
        self.objective.iter_mut().for_each(|c| *c = T::zero());
        for &(k, c) in coeffs {
            self.objective[k] += c;
        }
    }

    pub fn add_psd(&mut self, name: impl Into<String>, expr: AffineMatrix<T>, margin: T) {
        self.lmis.push(LmiConstraint {
            name: name.into(),
            expr,
            sense: Sense::PositiveSemidefinite,
            margin,
        });
    }

    pub fn add_nsd(&mut self, name: impl Into<String>, expr: AffineMatrix<T>, margin: T) {
        self.lmis.push(LmiConstraint {
            name: name.into(),
            expr,
            sense: Sense::NegativeSemidefinite,
            margin,
        });
    }

    pub fn add_upper_bound(&mut self, name: impl Into<String>, coeffs: Vec<(usize, T)>, upper: T) {
        self.linear.push(LinearConstraint {
            name: name.into(),
            coeffs,
            upper,
        });
    }

    /// Checks shapes and symmetry of every constraint.
    pub fn validate(&self) -> Result<(), SdpError> {
        if self.objective.len() != self.var_count() {
            return Err(SdpError::ObjectiveLength {
                got: self.objective.len(),
                expected: self.var_count(),
            });
        }
        for c in &self.lmis {
            let (rows, cols) = c.expr.shape();
            if rows != cols {
                return Err(SdpError::NotSquare {
                    name: c.name.clone(),
                    rows,
                    cols,
                });
            }
            let scale = c
                .expr
                .coefficient_scale()
                .max(c.expr.constant_part().norm())
                .max(T::one());
            let asymmetry = (c.expr.asymmetry() / scale).as_f64();
            if asymmetry > SYMMETRY_TOL {
                return Err(SdpError::NotSymmetric {
                    name: c.name.clone(),
                    asymmetry,
                });
            }
        }
        Ok(())
    }

    /// Eigenvalue residuals of every constraint at `x` (no dual information).
    pub fn evaluate(&self, x: &[T]) -> Vec<ConstraintResidual> {
        let mut out: Vec<_> = self
            .linear
            .iter()
            .map(|c| {
                let ax = c.coeffs.iter().fold(T::zero(), |acc, &(k, a)| acc + a * x[k]);
                let gap = (ax - c.upper).as_f64();
                ConstraintResidual {
                    name: c.name.clone(),
                    sense: Sense::NegativeSemidefinite,
                    extreme_eigenvalue: gap,
                    slack: -gap,
                    dual_norm: 0.0,
                    margin: 0.0,
                }
            })
            .collect();
        out.extend(self.lmis.iter().map(|c| {
            let m = c.expr.eval(x);
            let m = (&m + m.transpose()) * T::of(0.5);
            let eig = m.symmetric_eigenvalues();
            let (extreme, slack) = match c.sense {
                Sense::PositiveSemidefinite => {
                    let e = eig.min();
                    (e, e - c.margin)
                }
                Sense::NegativeSemidefinite => {
                    let e = eig.max();
                    (e, -e - c.margin)
                }
            };
            ConstraintResidual {
                name: c.name.clone(),
                sense: c.sense,
                extreme_eigenvalue: extreme.as_f64(),
                slack: slack.as_f64(),
                dual_norm: 0.0,
                margin: c.margin.as_f64(),
            }
        }));
        out
    }

    /// Writes the program in SDPA sparse format.
    ///
    /// SDPA's primal form is `max b'y` over `Σ F_k y_k − F_0 ⪰ 0`, so the
    /// objective is negated; scalar bounds go into one diagonal block.
    pub fn write_sdpa<W: Write>(&self, mut out: W) -> io::Result<()> {
        let m = self.var_count();
        let lp = self.linear.len();
        let mut sizes: Vec<i64> = Vec::new();
        if lp > 0 {
            sizes.push(-(lp as i64));
        }
        sizes.extend(self.lmis.iter().map(|c| c.expr.nrows() as i64));
        writeln!(out, "\"{} LMI blocks, {} scalar bounds", self.lmis.len(), lp)?;
        writeln!(out, "{m}")?;
        writeln!(out, "{}", sizes.len())?;
        writeln!(
            out,
            "{}",
            sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
        )?;
        writeln!(
            out,
            "{}",
            self.objective
                .iter()
                .map(|c| format!("{:.16e}", -c.as_f64()))
                .collect::<Vec<_>>()
                .join(" ")
        )?;
        let mut block = 1;
        if lp > 0 {
            // upper − a'x ≥ 0 ⇒ F_0 = −upper, F_k = −a_k
            for (r, c) in self.linear.iter().enumerate() {
                writeln!(out, "0 {block} {} {} {:.16e}", r + 1, r + 1, -c.upper.as_f64())?;
                for &(k, a) in &c.coeffs {
                    writeln!(out, "{} {block} {} {} {:.16e}", k + 1, r + 1, r + 1, -a.as_f64())?;
                }
            }
            block += 1;
        }
        for c in &self.lmis {
            let sign = match c.sense {
                Sense::PositiveSemidefinite => T::one(),
                Sense::NegativeSemidefinite => -T::one(),
            };
            let d = c.expr.nrows();
            let f0 = (c.expr.constant_part() * sign - DMatrix::identity(d, d) * c.margin) * -T::one();
            write_upper(&mut out, 0, block, &f0)?;
            for (k, fk) in c.expr.terms() {
                write_upper(&mut out, k + 1, block, &(fk * sign))?;
            }
            block += 1;
        }
        Ok(())
    }
}

fn write_upper<W: Write, T: Real>(out: &mut W, mat: usize, block: usize, f: &DMatrix<T>) -> io::Result<()> {
    for j in 0..f.ncols() {
        for i in 0..=j {
            let v = ((f[(i, j)] + f[(j, i)]) * T::of(0.5)).as_f64();
            if v != 0.0 {
                writeln!(out, "{mat} {block} {} {} {:.16e}", i + 1, j + 1, v)?;
            }
        }
    }
    Ok(())
}

/// Scaled upper-triangle vectorization used by Clarabel's PSD cone
/// (column-major, off-diagonals times `√2`).
pub fn svec<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    let d = m.nrows();
    let r2 = T::of(std::f64::consts::SQRT_2);
    let mut v = Vec::with_capacity(d * (d + 1) / 2);
    for j in 0..d {
        for i in 0..=j {
            let x = (m[(i, j)] + m[(j, i)]) * T::of(0.5);
            v.push(if i == j { x } else { x * r2 });
        }
    }
    v
}

/// Inverse of [`svec`].
pub fn smat<T: Real>(v: &[T], d: usize) -> DMatrix<T> {
    let r2 = T::of(std::f64::consts::SQRT_2);
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for j in 0..d {
        for i in 0..=j {
            if i == j {
                m[(i, i)] = v[k];
            } else {
                m[(i, j)] = v[k] / r2;
                m[(j, i)] = v[k] / r2;
            }
            k += 1;
        }
    }
    m
}

/// Interior-point backend.
///
/// Each matrix inequality is divided by the largest Frobenius norm among its
/// coefficient matrices before it is handed over, so that blocks built from
/// badly scaled data do not dominate the Newton systems.  Reported residuals
/// are always computed on the unscaled constraints.
#[derive(Debug, Clone)]
pub struct ClarabelSolver {
    pub max_iter: u32,
    pub tol_gap: f64,
    pub tol_feas: f64,
    pub verbose: bool,
}

impl Default for ClarabelSolver {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_gap: 1e-8,
            tol_feas: 1e-8,
            verbose: false,
        }
    }
}

struct Scalarized<T> {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
    b: Vec<T>,
    cones: Vec<SupportedConeT<T>>,
    /// (first row, dimension, scale) of each LMI cone.
    lmi_rows: Vec<(usize, usize, T)>,
}

fn scalarize<T: Real + FloatT>(p: &ConicProgram<T>) -> Scalarized<T> {
    let mut s = Scalarized {
        rows: Vec::new(),
        cols: Vec::new(),
        vals: Vec::new(),
        b: Vec::new(),
        cones: Vec::new(),
        lmi_rows: Vec::new(),
    };
    // a'x + s = upper, s ≥ 0
    for (r, c) in p.linear.iter().enumerate() {
        for &(k, a) in &c.coeffs {
            s.rows.push(r);
            s.cols.push(k);
            s.vals.push(a);
        }
        s.b.push(c.upper);
    }
    if !p.linear.is_empty() {
        s.cones.push(SupportedConeT::NonnegativeConeT(p.linear.len()));
    }
    for c in &p.lmis {
        let d = c.expr.nrows();
        let start = s.b.len();
        let scale = c.expr.coefficient_scale();
        let scale = if scale > T::zero() { scale } else { T::one() };
        let sign = match c.sense {
            Sense::PositiveSemidefinite => T::one(),
            Sense::NegativeSemidefinite => -T::one(),
        };
        // sign·F(x) − δI ⪰ 0  ⇔  s = b − A x with b = svec(sign·F0 − δI), A_k = −svec(sign·F_k)
        let f0 = c.expr.constant_part() * sign - DMatrix::identity(d, d) * c.margin;
        s.b.extend(svec(&(f0 / scale)));
        for (k, fk) in c.expr.terms() {
            for (r, v) in svec(fk).into_iter().enumerate() {
                if v != T::zero() {
                    s.rows.push(start + r);
                    s.cols.push(k);
                    s.vals.push(-sign * v / scale);
                }
            }
        }
        s.cones.push(SupportedConeT::PSDTriangleConeT(d));
        s.lmi_rows.push((start, d, scale));
    }
    s
}

/// Regularization and refinement settings scaled for a 24-bit mantissa;
/// the defaults are tuned for `f64` and stall after one step in `f32`.
fn relax_for_single_precision<T: Real + FloatT>(s: DefaultSettings<T>) -> DefaultSettings<T> {
    let of = <T as Real>::of;
    DefaultSettings {
        static_regularization_constant: of(1e-5),
        static_regularization_proportional: of(1e-6),
        dynamic_regularization_eps: of(1e-7),
        dynamic_regularization_delta: of(1e-4),
        iterative_refinement_reltol: of(1e-6),
        iterative_refinement_abstol: of(1e-6),
        reduced_tol_gap_abs: of(1e-3),
        reduced_tol_gap_rel: of(1e-3),
        reduced_tol_feas: of(1e-3),
        ..s
    }
}

fn map_status(status: SolverStatus) -> (SolveStatus, bool) {
    match status {
        SolverStatus::Solved => (SolveStatus::Optimal, false),
        SolverStatus::AlmostSolved => (SolveStatus::Optimal, true),
        SolverStatus::PrimalInfeasible => (SolveStatus::Infeasible, false),
        SolverStatus::AlmostPrimalInfeasible => (SolveStatus::Infeasible, true),
        _ => (SolveStatus::NumericalFailure, false),
    }
}

impl<T: Real + FloatT> ConicSolver<T> for ClarabelSolver {
    fn solve(&self, program: &ConicProgram<T>) -> Result<SolveReport<T>, SdpError> {
        program.validate()?;
        let started = Instant::now();
        let n = program.var_count();
        let sc = scalarize(program);
        let m = sc.b.len();
        let a = CscMatrix::new_from_triplets(m, n, sc.rows, sc.cols, sc.vals);
        let p = CscMatrix::<T>::zeros((n, n));
        let settings = DefaultSettings::<T> {
            max_iter: self.max_iter,
            verbose: self.verbose,
            tol_gap_abs: <T as Real>::of(self.tol_gap),
            tol_gap_rel: <T as Real>::of(self.tol_gap),
            tol_feas: <T as Real>::of(self.tol_feas),
            ..DefaultSettings::default()
        };
        let settings = if <T as Real>::epsilon() > <T as Real>::of(1e-10) {
            relax_for_single_precision(settings)
        } else {
            settings
        };
        let mut solver = DefaultSolver::new(&p, &program.objective, &a, &sc.b, &sc.cones, settings)
            .map_err(|e| SdpError::Backend(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let (status, inaccurate) = map_status(sol.status);
        let x = sol.x.clone();
        let mut residuals = program.evaluate(&x);
        let lp = program.linear.len();
        for (r, res) in residuals.iter_mut().take(lp).enumerate() {
            res.dual_norm = Real::as_f64(sol.z[r]);
        }
        for (res, &(start, d, scale)) in residuals.iter_mut().skip(lp).zip(&sc.lmi_rows) {
            let z = smat(&sol.z[start..start + d * (d + 1) / 2], d);
            res.dual_norm = Real::as_f64(z.norm() / scale);
        }
        Ok(SolveReport {
            status,
            inaccurate,
            backend_status: format!("{:?}", sol.status),
            objective: Real::as_f64(sol.obj_val),
            x,
            theta: None,
            gamma_sq: None,
            residuals,
            iterations: sol.iterations,
            solve_seconds: started.elapsed().as_secs_f64(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_round_trip() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let v = svec(&m);
        assert_eq!(v.len(), 6);
        assert_eq!(v[0], 1.0);
        assert!((v[1] - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(v[2], 4.0);
        // inner product is preserved
        let ip: f64 = v.iter().map(|x| x * x).sum();
        assert!((ip - m.norm_squared()).abs() < 1e-12);
        assert!((smat(&v, 3) - m).amax() < 1e-15);
    }

    #[test]
    fn scalar_bound_is_attained() {
        // maximize θ subject to θ ≤ 1 and [θ] ⪰ 0
        let mut vars = VariableSet::new();
        let t = vars.scalar("theta");
        let mut prog = ConicProgram::<f64>::new(vars);
        prog.minimize(&[(t.offset, -1.0)]);
        prog.add_upper_bound("cap", vec![(t.offset, 1.0)], 1.0);
        prog.add_psd("nonneg", AffineMatrix::var(&t), 0.0);
        let rep = ClarabelSolver::default().solve(&prog).unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal);
        assert!((rep.x[0] - 1.0).abs() < 1e-6);
        assert!(rep.worst_slack() > -1e-7);
    }

    #[test]
    fn matrix_lmi_feasible_and_infeasible() {
        // Y ⪰ I and Y ⪯ 2I: feasible; minimizing trace gives Y = I.
        let mut vars = VariableSet::new();
        let y = vars.symmetric("Y", 2);
        let mut prog = ConicProgram::<f64>::new(vars.clone());
        let yv = AffineMatrix::var(&y);
        prog.add_psd("lower", yv.clone() - AffineMatrix::identity(2), 0.0);
        prog.add_nsd("upper", yv.clone() - AffineMatrix::identity(2) * 2.0, 0.0);
        prog.minimize(&[(y.index_of(0, 0), 1.0), (y.index_of(1, 1), 1.0)]);
        let rep = ClarabelSolver::default().solve(&prog).unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal);
        let sol = y.unpack(&rep.x);
        assert!((sol - DMatrix::<f64>::identity(2, 2)).amax() < 1e-6);

        // Y ⪰ 2I and Y ⪯ I: infeasible
        let mut bad = ConicProgram::<f64>::new(vars);
        bad.add_psd("lower", yv.clone() - AffineMatrix::identity(2) * 2.0, 0.0);
        bad.add_nsd("upper", yv - AffineMatrix::identity(2), 0.0);
        let rep = ClarabelSolver::default().solve(&bad).unwrap();
        assert_eq!(rep.status, SolveStatus::Infeasible);
    }

    #[test]
    fn lyapunov_lmi_in_single_precision() {
        // A'P + PA ⪯ −I, P ⪰ I for a stable A
        let a = DMatrix::from_row_slice(2, 2, &[-1.0f32, 2.0, 0.0, -3.0]);
        let mut vars = VariableSet::new();
        let p = vars.symmetric("P", 2);
        let pv = AffineMatrix::var(&p);
        let lyap = pv.left_mul(&a.transpose()) + pv.right_mul(&a);
        let mut prog = ConicProgram::<f32>::new(vars);
        prog.add_psd("P", pv, 1.0);
        prog.add_nsd("lyap", lyap, 1.0);
        let rep = ClarabelSolver {
            tol_gap: 1e-5,
            tol_feas: 1e-5,
            ..Default::default()
        }
        .solve(&prog)
        .unwrap();
        assert_eq!(
            rep.status,
            SolveStatus::Optimal,
            "{} after {} iterations",
            rep.backend_status,
            rep.iterations
        );
        assert!(rep.worst_slack() > -1e-3);
    }

    #[test]
    fn rejects_asymmetric_constraint() {
        let mut vars = VariableSet::new();
        let g = vars.full("G", 2, 2);
        let mut prog = ConicProgram::<f64>::new(vars);
        prog.add_psd("bad", AffineMatrix::var(&g), 0.0);
        assert!(matches!(
            ClarabelSolver::default().solve(&prog),
            Err(SdpError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn sdpa_dump_layout() {
        let mut vars = VariableSet::new();
        let t = vars.scalar("t");
        let mut prog = ConicProgram::<f64>::new(vars);
        prog.minimize(&[(0, -1.0)]);
        prog.add_upper_bound("cap", vec![(0, 1.0)], 5.0);
        prog.add_psd("diag", AffineMatrix::var(&t).kron_left(&DMatrix::identity(2, 2)), 0.0);
        let mut buf = Vec::new();
        prog.write_sdpa(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "1");
        assert_eq!(lines[2], "2");
        assert_eq!(lines[3], "-1 2");
        assert!(lines[4].starts_with("1.0"));
        assert!(lines.iter().any(|l| l.starts_with("1 2 2 2 ")));
    }
}
