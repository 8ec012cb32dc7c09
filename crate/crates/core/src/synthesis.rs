//! Observer synthesis: program assembly, solve, gain recovery and the
//! analysis-side post-check.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lmi::{
    build_xi_analysis, build_xi_synthesis, certificate_matrix, park_constraint, AffineMatrix, LmiError,
    NodeMultipliers, StoragePoint, SynthesisVars,
};
use crate::model::{matrix_from_rows, matrix_to_rows, GainSet, GammaMode, MatrixRows, ModelError, Problem};
use crate::scalar::Real;
use crate::sdp::{ConicProgram, ConicSolver, ConstraintResidual, SdpError, SolveReport, SolveStatus};

/// Condition number of `X_i` above which gain recovery is refused.
pub const MAX_MULTIPLIER_CONDITION: f64 = 1e10;

/// `θ` below this is treated as "no finite `γ`".
const MIN_THETA: f64 = 1e-12;

pub const GAINS_FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("the LMI program is infeasible ({0})")]
    InfeasibleProgram(String),
    #[error("solver failed ({0})")]
    NumericalFailure(String),
    #[error("multiplier X{node} is singular to working precision (condition number {cond:e})")]
    SingularMultiplier { node: usize, cond: f64 },
    #[error("certificate matrix P is not positive definite")]
    IndefiniteCertificate,
    #[error("empty {0} list")]
    EmptyGrid(&'static str),
    #[error("gains file: {0}")]
    GainsFile(String),
}

/// Assembled synthesis program with its variable handles.
#[derive(Debug, Clone)]
pub struct SynthesisProgram<T: Real> {
    pub program: ConicProgram<T>,
    pub vars: SynthesisVars<T>,
}

/// Assembles every constraint of the synthesis program.
///
/// Per node: `Ŷ_i ⪰ δI`, `W_i ⪰ 0`, and for nodes with in-neighbours
/// `S_i ⪰ 0` and the Park block; then `Ξ̄_i ⪯ −δI`.  `θ` is bounded to
/// `[0, θ_cap]` and maximised.  Margins are relative to each constraint's
/// coefficient scale.
///
/// The program is the same for a fixed `γ`: pinning `θ` turns it into a bare
/// feasibility problem, which the interior-point method handles poorly near
/// the boundary.  [`synthesize`] instead compares the optimum against `γ⁻²`.
pub fn build_program<T: Real>(problem: &Problem<T>) -> Result<SynthesisProgram<T>, SynthesisError> {
    problem.options.validate(&problem.graph)?;
    let vars = SynthesisVars::allocate(problem);
    let mut prog = ConicProgram::new(vars.set.clone());
    let n = problem.state_dim();
    let delta = problem.options.margin;
    let zero = T::zero();
    let relative = |expr: &AffineMatrix<T>| delta * expr.coefficient_scale();

    let theta = &vars.theta;
    prog.minimize(&[(theta.offset, -T::one())]);
    prog.add_upper_bound("theta_cap", vec![(theta.offset, T::one())], problem.options.theta_cap);
    prog.add_upper_bound("theta_nonneg", vec![(theta.offset, -T::one())], zero);
    for (i, nv) in vars.nodes.iter().enumerate() {
        let label = i + 1;
        let y = AffineMatrix::var(&nv.y_hat);
        let m = relative(&y);
        prog.add_psd(format!("Yhat{label}"), y, m);
        prog.add_psd(format!("W{label}"), AffineMatrix::var(&nv.w), zero);
        if let Some(s) = &nv.s {
            prog.add_psd(format!("S{label}"), AffineMatrix::var(s), zero);
        }
        if nv.r.is_some() {
            prog.add_psd(
                format!("Park{label}"),
                park_constraint(&vars.r_expr(i, n), &vars.g_expr(i, n)),
                zero,
            );
        }
    }
    for i in 0..problem.node_count() {
        let xi = build_xi_synthesis(problem, &vars, i)?;
        let m = relative(&xi);
        prog.add_nsd(format!("Xi{}", i + 1), xi, m);
    }
    Ok(SynthesisProgram { program: prog, vars })
}

/// Output of a successful synthesis.
#[derive(Debug, Clone)]
pub struct SynthesisSolution<T: Real> {
    pub gains: GainSet<T>,
    pub report: SolveReport<T>,
    pub storage: StoragePoint<T>,
    /// Descriptor multipliers `X_i`.
    pub x: Vec<DMatrix<T>>,
    pub f: Vec<DMatrix<T>>,
    pub u: Vec<DMatrix<T>>,
    pub theta: T,
    /// `max_i max(‖X_i'K_i − F_i‖/‖F_i‖, ‖X_i'L_i − U_i‖/‖U_i‖)`.
    pub recovery_residual: f64,
    pub lmi_count: usize,
}

/// Runs the full pipeline on `problem` with the given backend.
pub fn synthesize<T: Real, S: ConicSolver<T>>(
    problem: &Problem<T>,
    solver: &S,
) -> Result<SynthesisSolution<T>, SynthesisError> {
    let sp = build_program(problem)?;
    let mut report = solver.solve(&sp.program)?;
    match report.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(SynthesisError::InfeasibleProgram(report.backend_status)),
        SolveStatus::NumericalFailure => return Err(SynthesisError::NumericalFailure(report.backend_status)),
    }
    let storage = StoragePoint::from_solution(&sp.vars, &report.x);
    let theta = storage.theta;
    if theta.as_f64() < MIN_THETA {
        return Err(SynthesisError::InfeasibleProgram(format!(
            "optimal theta {:e} admits no finite gamma",
            theta.as_f64()
        )));
    }
    if let GammaMode::Fixed(g) = problem.options.gamma_mode {
        let required = T::one() / (g * g);
        if theta < required {
            return Err(SynthesisError::InfeasibleProgram(format!(
                "requested gamma^2 = {:e} is below the smallest certifiable {:e}",
                (g * g).as_f64(),
                (T::one() / theta).as_f64()
            )));
        }
    }
    let gamma_sq = T::one() / theta;
    report.theta = Some(theta.as_f64());
    report.gamma_sq = Some(gamma_sq.as_f64());

    let mut x_all = Vec::new();
    let mut f_all = Vec::new();
    let mut u_all = Vec::new();
    let mut k_all = Vec::new();
    let mut l_all = Vec::new();
    let mut recovery = 0.0f64;
    for (i, nv) in sp.vars.nodes.iter().enumerate() {
        let x = nv.x.unpack(&report.x);
        let f = nv.f.unpack(&report.x);
        let u = nv.u.unpack(&report.x);
        let sv = x.singular_values();
        let cond = (sv.max() / sv.min()).as_f64();
        if !(cond <= MAX_MULTIPLIER_CONDITION) {
            return Err(SynthesisError::SingularMultiplier { node: i + 1, cond });
        }
        let lu = x.transpose().lu();
        let singular = || SynthesisError::SingularMultiplier { node: i + 1, cond };
        let k = lu.solve(&f).ok_or_else(singular)?;
        let l = lu.solve(&u).ok_or_else(singular)?;
        let xt = x.transpose();
        for (gain, rhs) in [(&k, &f), (&l, &u)] {
            let denom = rhs.norm().as_f64().max(f64::MIN_POSITIVE);
            recovery = recovery.max((&xt * gain - rhs).norm().as_f64() / denom);
        }
        x_all.push(x);
        f_all.push(f);
        u_all.push(u);
        k_all.push(k);
        l_all.push(l);
    }
    let p = certificate_matrix(problem, &storage);
    if p.clone().cholesky().is_none() {
        return Err(SynthesisError::IndefiniteCertificate);
    }
    Ok(SynthesisSolution {
        gains: GainSet {
            k: k_all,
            l: l_all,
            p,
            gamma_sq,
        },
        lmi_count: sp.program.lmis.len(),
        report,
        storage,
        x: x_all,
        f: f_all,
        u: u_all,
        theta,
        recovery_residual: recovery,
    })
}

/// Eigenvalue report of the analysis LMIs at a candidate design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub nodes: Vec<NodeAnalysis>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeAnalysis {
    pub node: usize,
    /// All eigenvalues of `Ξ_i`, ascending.
    pub eigenvalues: Vec<f64>,
    pub max_eigenvalue: f64,
    /// Smallest eigenvalue of the Park block (absent for nodes without
    /// in-neighbours).
    pub park_min_eigenvalue: Option<f64>,
    pub passed: bool,
}

/// Tolerance for the Park block, relative to `‖R_i‖`.
const PARK_TOL: f64 = 1e-8;

/// Builds `Ξ_i` with `Z_i = ε_iX_i`, `Q_i = ε̄_iX_i` and the recovered gains.
pub fn verify_theorem2<T: Real>(
    problem: &Problem<T>,
    sol: &SynthesisSolution<T>,
) -> Result<Theorem2Report, SynthesisError> {
    analysis_check(problem, &sol.storage, &sol.x, &sol.gains.k, &sol.gains.l)
}

/// [`verify_theorem2`] on explicit ingredients, for perturbation studies.
pub fn analysis_check<T: Real>(
    problem: &Problem<T>,
    storage: &StoragePoint<T>,
    x: &[DMatrix<T>],
    k: &[DMatrix<T>],
    l: &[DMatrix<T>],
) -> Result<Theorem2Report, SynthesisError> {
    let mut nodes = Vec::new();
    for i in 0..problem.node_count() {
        let m = NodeMultipliers {
            x: x[i].clone(),
            z: &x[i] * problem.options.eps[i],
            q: &x[i] * problem.options.epsbar[i],
            k: k[i].clone(),
            l: l[i].clone(),
        };
        let xi = build_xi_analysis(problem, storage, i, &m)?;
        let mut eig: Vec<f64> = xi.symmetric_eigenvalues().iter().map(|v| v.as_f64()).collect();
        eig.sort_by(f64::total_cmp);
        let max_eigenvalue = *eig.last().unwrap_or(&f64::NEG_INFINITY);
        let park_min_eigenvalue = (problem.graph.in_degree(i) > 0).then(|| {
            let r = AffineMatrix::constant(storage.r[i].clone());
            let g = AffineMatrix::constant(storage.g[i].clone());
            park_constraint(&r, &g).eval(&[]).symmetric_eigenvalues().min().as_f64()
        });
        let park_ok = park_min_eigenvalue.is_none_or(|e| e >= -PARK_TOL * storage.r[i].norm().as_f64().max(1.0));
        nodes.push(NodeAnalysis {
            node: i + 1,
            eigenvalues: eig,
            max_eigenvalue,
            park_min_eigenvalue,
            passed: max_eigenvalue < 0.0 && park_ok,
        });
    }
    let passed = nodes.iter().all(|n| n.passed);
    Ok(Theorem2Report { nodes, passed })
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub eps: f64,
    pub status: SweepStatus,
    pub gamma_sq: Option<f64>,
    pub wall_ms: f64,
    /// Error text for failed points.
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
    Error,
}

impl SweepStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepStatus::Optimal => "optimal",
            SweepStatus::Infeasible => "infeasible",
            SweepStatus::NumericalFailure => "numerical-failure",
            SweepStatus::Error => "error",
        }
    }
}

fn sweep_point<T: Real, S: ConicSolver<T>>(problem: &Problem<T>, delta: T, eps: T, solver: &S) -> SweepRow {
    let started = Instant::now();
    let outcome = problem
        .with_period(delta)
        .map_err(SynthesisError::from)
        .and_then(|p| synthesize(&p.with_eps(eps), solver));
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let (status, gamma_sq, message) = match outcome {
        Ok(sol) => (SweepStatus::Optimal, Some(sol.gains.gamma_sq.as_f64()), None),
        Err(SynthesisError::InfeasibleProgram(m)) => (SweepStatus::Infeasible, None, Some(m)),
        Err(SynthesisError::NumericalFailure(m)) => (SweepStatus::NumericalFailure, None, Some(m)),
        Err(e) => (SweepStatus::Error, None, Some(e.to_string())),
    };
    SweepRow {
        delta: delta.as_f64(),
        eps: eps.as_f64(),
        status,
        gamma_sq,
        wall_ms,
        message,
    }
}

/// One synthesis per `(Δ, ε)` pair, in parallel; failures are recorded per
/// row instead of aborting.  Rows come back in grid order (Δ outer).
pub fn sweep_delta<T: Real, S: ConicSolver<T> + Sync>(
    problem: &Problem<T>,
    deltas: &[T],
    eps: &[T],
    solver: &S,
) -> Result<Vec<SweepRow>, SynthesisError> {
    if deltas.is_empty() {
        return Err(SynthesisError::EmptyGrid("delta"));
    }
    if eps.is_empty() {
        return Err(SynthesisError::EmptyGrid("eps"));
    }
    let grid: Vec<(T, T)> = deltas.iter().flat_map(|&d| eps.iter().map(move |&e| (d, e))).collect();
    Ok(grid
        .par_iter()
        .map(|&(d, e)| sweep_point(problem, d, e, solver))
        .collect())
}

/// Grid search over a uniform `ε`: returns every row and the index of the
/// smallest `γ²` (if any point was feasible).
pub fn search_eps<T: Real, S: ConicSolver<T> + Sync>(
    problem: &Problem<T>,
    eps: &[T],
    solver: &S,
) -> Result<(Vec<SweepRow>, Option<usize>), SynthesisError> {
    let rows = sweep_delta(problem, &[problem.schedule.period()], eps, solver)?;
    let best = rows
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.gamma_sq.map(|g| (k, g)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k);
    Ok((rows, best))
}

/// Logarithmic grid `lo · (hi/lo)^{k/(count−1)}`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|k| lo * (hi / lo).powf(k as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// Writes sweep rows as CSV (`delta,eps,status,gamma_sq,wall_ms`).
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["delta", "eps", "status", "gamma_sq", "wall_ms"])?;
    for r in rows {
        w.write_record([
            format!("{:.16e}", r.delta),
            format!("{:.16e}", r.eps),
            r.status.as_str().to_string(),
            r.gamma_sq.map(|g| format!("{g:.16e}")).unwrap_or_default(),
            format!("{:.3}", r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// gains file

/// Echo of the settings that produced a gains file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsEcho {
    pub delta: f64,
    pub alpha: Vec<f64>,
    pub pi: Vec<f64>,
    pub eps: Vec<f64>,
    pub epsbar: Vec<f64>,
    pub margin: f64,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverEcho {
    pub status: String,
    pub backend_status: String,
    pub inaccurate: bool,
    pub iterations: u32,
    pub solve_seconds: f64,
    pub recovery_residual: f64,
    pub residuals: Vec<ConstraintResidual>,
}

/// Versioned on-disk form of a synthesis result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsFile {
    pub version: u32,
    pub nodes: usize,
    pub state_dim: usize,
    pub gamma_sq: f64,
    pub theta: f64,
    pub k: Vec<MatrixRows>,
    pub l: Vec<MatrixRows>,
    pub p: MatrixRows,
    pub options: OptionsEcho,
    pub solver: SolverEcho,
    /// Raw solution of the program, needed to re-run the analysis and
    /// dissipation checks.
    pub variables: Option<RawVariables>,
}

/// Decision variables per node (zero matrices where a variable is absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawVariables {
    pub y_hat: Vec<MatrixRows>,
    pub s: Vec<MatrixRows>,
    pub r: Vec<MatrixRows>,
    pub w: Vec<MatrixRows>,
    pub g: Vec<MatrixRows>,
    pub x: Vec<MatrixRows>,
    pub f: Vec<MatrixRows>,
    pub u: Vec<MatrixRows>,
}

impl GainsFile {
    pub fn from_solution<T: Real>(problem: &Problem<T>, sol: &SynthesisSolution<T>) -> Self {
        let f = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        let rows = |v: &[DMatrix<T>]| v.iter().map(matrix_to_rows).collect::<Vec<_>>();
        let o = &problem.options;
        Self {
            version: GAINS_FILE_VERSION,
            nodes: problem.node_count(),
            state_dim: problem.state_dim(),
            gamma_sq: sol.gains.gamma_sq.as_f64(),
            theta: sol.theta.as_f64(),
            k: sol.gains.k.iter().map(matrix_to_rows).collect(),
            l: sol.gains.l.iter().map(matrix_to_rows).collect(),
            p: matrix_to_rows(&sol.gains.p),
            options: OptionsEcho {
                delta: problem.schedule.period().as_f64(),
                alpha: f(&o.alpha),
                pi: f(&o.pi),
                eps: f(&o.eps),
                epsbar: f(&o.epsbar),
                margin: o.margin.as_f64(),
                gamma: match o.gamma_mode {
                    GammaMode::Minimize => None,
                    GammaMode::Fixed(g) => Some(g.as_f64()),
                },
            },
            solver: SolverEcho {
                status: format!("{:?}", sol.report.status),
                backend_status: sol.report.backend_status.clone(),
                inaccurate: sol.report.inaccurate,
                iterations: sol.report.iterations,
                solve_seconds: sol.report.solve_seconds,
                recovery_residual: sol.recovery_residual,
                residuals: sol.report.residuals.clone(),
            },
            variables: Some(RawVariables {
                y_hat: rows(&sol.storage.y_hat),
                s: rows(&sol.storage.s),
                r: rows(&sol.storage.r),
                w: rows(&sol.storage.w),
                g: rows(&sol.storage.g),
                x: rows(&sol.x),
                f: rows(&sol.f),
                u: rows(&sol.u),
            }),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("gains file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SynthesisError> {
        let g: Self = serde_json::from_str(text).map_err(|e| SynthesisError::GainsFile(e.to_string()))?;
        if g.version != GAINS_FILE_VERSION {
            return Err(SynthesisError::GainsFile(format!(
                "unsupported version {} (expected {GAINS_FILE_VERSION})",
                g.version
            )));
        }
        Ok(g)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, SynthesisError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| SynthesisError::GainsFile(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Converts to a [`GainSet`], checking dimensions against `problem`.
    pub fn to_gains<T: Real>(&self, problem: &Problem<T>) -> Result<GainSet<T>, SynthesisError> {
        let n = problem.state_dim();
        if self.nodes != problem.node_count() || self.state_dim != n {
            return Err(SynthesisError::GainsFile(format!(
                "gains for {} nodes / n = {} do not match the problem ({} nodes / n = {n})",
                self.nodes,
                self.state_dim,
                problem.node_count()
            )));
        }
        if self.k.len() != self.nodes || self.l.len() != self.nodes {
            return Err(SynthesisError::GainsFile("one K and one L per node required".into()));
        }
        let mut k = Vec::new();
        let mut l = Vec::new();
        for (i, s) in problem.sensors.iter().enumerate() {
            let ki: DMatrix<T> = matrix_from_rows(&self.k[i], &format!("K{}", i + 1))?;
            let li: DMatrix<T> = matrix_from_rows(&self.l[i], &format!("L{}", i + 1))?;
            if ki.shape() != (n, s.consensus_dim()) || li.shape() != (n, s.measurement_dim()) {
                return Err(SynthesisError::GainsFile(format!(
                    "gain shapes of node {} do not match its sensor",
                    i + 1
                )));
            }
            k.push(ki);
            l.push(li);
        }
        let p: DMatrix<T> = matrix_from_rows(&self.p, "P")?;
        if p.shape() != (n, n) {
            return Err(SynthesisError::GainsFile("P has the wrong shape".into()));
        }
        Ok(GainSet {
            k,
            l,
            p,
            gamma_sq: T::of(self.gamma_sq),
        })
    }
}

impl GainsFile {
    /// Rebuilds a [`SynthesisSolution`] (without the backend's raw vector)
    /// from a file that carries its variables.
    pub fn to_solution<T: Real>(&self, problem: &Problem<T>) -> Result<SynthesisSolution<T>, SynthesisError> {
        let gains = self.to_gains(problem)?;
        let raw = self
            .variables
            .as_ref()
            .ok_or_else(|| SynthesisError::GainsFile("file carries no solver variables".into()))?;
        let nodes = problem.node_count();
        let read = |v: &[MatrixRows], name: &str| -> Result<Vec<DMatrix<T>>, SynthesisError> {
            if v.len() != nodes {
                return Err(SynthesisError::GainsFile(format!(
                    "{name}: {} entries for {nodes} nodes",
                    v.len()
                )));
            }
            v.iter()
                .enumerate()
                .map(|(i, m)| matrix_from_rows(m, &format!("{name}{}", i + 1)).map_err(SynthesisError::from))
                .collect()
        };
        let theta = T::of(self.theta);
        let storage = StoragePoint {
            y_hat: read(&raw.y_hat, "Yhat")?,
            s: read(&raw.s, "S")?,
            r: read(&raw.r, "R")?,
            w: read(&raw.w, "W")?,
            g: read(&raw.g, "G")?,
            theta,
        };
        let n = problem.state_dim();
        for (name, mats) in [
            ("Yhat", &storage.y_hat),
            ("S", &storage.s),
            ("R", &storage.r),
            ("W", &storage.w),
            ("G", &storage.g),
        ] {
            if mats.iter().any(|m| m.shape() != (n, n)) {
                return Err(SynthesisError::GainsFile(format!("{name} has the wrong shape")));
            }
        }
        let x = read(&raw.x, "X")?;
        if x.iter().any(|m| m.shape() != (n, n)) {
            return Err(SynthesisError::GainsFile("X has the wrong shape".into()));
        }
        let report = SolveReport {
            status: SolveStatus::Optimal,
            inaccurate: self.solver.inaccurate,
            backend_status: self.solver.backend_status.clone(),
            x: Vec::new(),
            objective: -self.theta,
            theta: Some(self.theta),
            gamma_sq: Some(self.gamma_sq),
            residuals: self.solver.residuals.clone(),
            iterations: self.solver.iterations,
            solve_seconds: self.solver.solve_seconds,
        };
        Ok(SynthesisSolution {
            gains,
            report,
            storage,
            x,
            f: read(&raw.f, "F")?,
            u: read(&raw.u, "U")?,
            theta,
            recovery_residual: self.solver.recovery_residual,
            lmi_count: self.solver.residuals.len(),
        })
    }
}
