//! Plant, sensor and tuning data, plus the JSON problem configuration.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{GraphConfig, NetworkError, ObserverGraph, RoundRobinSchedule};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid configuration: {0}")]
    Schema(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("cannot read {path}")]
    Io { path: String, source: std::io::Error },
}

impl From<serde_json::Error> for ModelError {
    fn from(e: serde_json::Error) -> Self {
        ModelError::Schema(e.to_string())
    }
}

/// `ẋ = A x + B₂ w`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel<T: Real> {
    pub a: DMatrix<T>,
    pub b2: DMatrix<T>,
}

impl<T: Real> PlantModel<T> {
    pub fn new(a: DMatrix<T>, b2: DMatrix<T>) -> Result<Self, ModelError> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(ModelError::DimensionMismatch(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b2.nrows() != a.nrows() {
            return Err(ModelError::DimensionMismatch(format!(
                "B2 has {} rows, A has {}",
                b2.nrows(),
                a.nrows()
            )));
        }
        Ok(Self { a, b2 })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.b2.ncols()
    }
}

/// Node measurement `y_i = C_i x + D₂ᵢ w + D̄₂ᵢ v_i` and consensus map `H_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel<T: Real> {
    pub c: DMatrix<T>,
    pub d2: DMatrix<T>,
    pub d2bar: DMatrix<T>,
    pub h: DMatrix<T>,
}

impl<T: Real> SensorModel<T> {
    pub fn measurement_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.d2bar.ncols()
    }

    /// Rows of `H_i`, i.e. columns of the coupling gain `K_i`.
    pub fn consensus_dim(&self) -> usize {
        self.h.nrows()
    }

    /// `B = [B₂ 0]`, acting on `ξ_i = [w; v_i]`.
    pub fn stacked_b(&self, plant: &PlantModel<T>) -> DMatrix<T> {
        let n = plant.state_dim();
        let mw = plant.disturbance_dim();
        let mut b = DMatrix::zeros(n, mw + self.noise_dim());
        b.columns_mut(0, mw).copy_from(&plant.b2);
        b
    }

    /// `D_i = [D₂ᵢ D̄₂ᵢ]`.
    pub fn stacked_d(&self) -> DMatrix<T> {
        let my = self.measurement_dim();
        let mw = self.d2.ncols();
        let mut d = DMatrix::zeros(my, mw + self.noise_dim());
        d.columns_mut(0, mw).copy_from(&self.d2);
        d.columns_mut(mw, self.noise_dim()).copy_from(&self.d2bar);
        d
    }

    /// Dimension of `ξ_i`.
    pub fn xi_dim(&self, plant: &PlantModel<T>) -> usize {
        plant.disturbance_dim() + self.noise_dim()
    }
}

/// How `γ` enters the synthesis program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaMode<T> {
    /// Maximise `θ = γ⁻²`.
    Minimize,
    /// Accept only designs certifying at least the given `γ`.
    Fixed(T),
}

/// Tuning constants of the synthesis LMIs, one entry per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions<T> {
    pub alpha: Vec<T>,
    pub pi: Vec<T>,
    pub eps: Vec<T>,
    pub epsbar: Vec<T>,
    /// Strictness margin `δ` for `Ξ̄ ⪯ −δ I` and `Ŷ ⪰ δ I`, relative to each
    /// constraint's coefficient scale.
    pub margin: T,
    pub gamma_mode: GammaMode<T>,
    /// Upper bound on `θ`; only active when every node is isolated from the
    /// disagreement cost (a single-node network).
    pub theta_cap: T,
}

pub const DEFAULT_MARGIN: f64 = 1e-7;
pub const DEFAULT_THETA_CAP: f64 = 1e8;

impl<T: Real> SynthesisOptions<T> {
    /// Uniform `α`, `ε`, `ε̄` with the default `π_i = 2α_i/(1+q_i)`.
    pub fn uniform(graph: &ObserverGraph, alpha: T, eps: T, epsbar: T) -> Self {
        let n = graph.node_count();
        Self {
            alpha: vec![alpha; n],
            pi: default_pi(graph, &vec![alpha; n]),
            eps: vec![eps; n],
            epsbar: vec![epsbar; n],
            margin: T::of(DEFAULT_MARGIN),
            gamma_mode: GammaMode::Minimize,
            theta_cap: T::of(DEFAULT_THETA_CAP),
        }
    }

    pub fn with_eps(mut self, eps: T) -> Self {
        self.eps.iter_mut().for_each(|e| *e = eps);
        self
    }

    pub fn validate(&self, graph: &ObserverGraph) -> Result<(), ModelError> {
        let n = graph.node_count();
        for (name, v) in [
            ("alpha", &self.alpha),
            ("pi", &self.pi),
            ("eps", &self.eps),
            ("epsbar", &self.epsbar),
        ] {
            if v.len() != n {
                return Err(ModelError::DimensionMismatch(format!(
                    "{name} has {} entries for {n} nodes",
                    v.len()
                )));
            }
        }
        for i in 0..n {
            let (a, p, e, eb) = (self.alpha[i], self.pi[i], self.eps[i], self.epsbar[i]);
            if !(a > T::zero()) {
                return Err(ModelError::Schema(format!("alpha[{}] must be positive", i + 1)));
            }
            if !(e > T::zero()) {
                return Err(ModelError::Schema(format!("eps[{}] must be positive", i + 1)));
            }
            if !(eb >= T::zero()) {
                return Err(ModelError::Schema(format!("epsbar[{}] must be nonnegative", i + 1)));
            }
            if !(p >= T::zero()) {
                return Err(ModelError::Schema(format!("pi[{}] must be nonnegative", i + 1)));
            }
            let q = graph.out_degree(i);
            if q > 0 && !(p * T::of(q as f64) < T::of(2.0) * a) {
                return Err(ModelError::Schema(format!(
                    "pi[{}] = {} violates pi < 2 alpha / q = {}",
                    i + 1,
                    p,
                    T::of(2.0) * a / T::of(q as f64)
                )));
            }
        }
        if !(self.margin > T::zero()) {
            return Err(ModelError::Schema("margin must be positive".into()));
        }
        if let GammaMode::Fixed(g) = self.gamma_mode {
            if !(g > T::zero()) {
                return Err(ModelError::Schema("gamma must be positive".into()));
            }
        }
        Ok(())
    }
}

/// `π_i = 2α_i/(1+q_i)`.
pub fn default_pi<T: Real>(graph: &ObserverGraph, alpha: &[T]) -> Vec<T> {
    alpha
        .iter()
        .enumerate()
        .map(|(i, &a)| T::of(2.0) * a / T::of(1.0 + graph.out_degree(i) as f64))
        .collect()
}

/// Recovered observer gains with the certificate matrix of the initial-state
/// weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet<T: Real> {
    /// Coupling gains `K_i` (n × r_i).
    pub k: Vec<DMatrix<T>>,
    /// Output-injection gains `L_i` (n × m_{y,i}).
    pub l: Vec<DMatrix<T>>,
    pub p: DMatrix<T>,
    pub gamma_sq: T,
}

/// Everything needed to synthesise and simulate one observer network.
#[derive(Debug, Clone)]
pub struct Problem<T: Real> {
    pub plant: PlantModel<T>,
    pub sensors: Vec<SensorModel<T>>,
    pub graph: ObserverGraph,
    pub schedule: RoundRobinSchedule<T>,
    pub options: SynthesisOptions<T>,
    /// Per-entry rounding bound of the sensor data, used as an absolute
    /// floor in the rank tests of [`detectability_report`].
    pub data_precision: T,
}

impl<T: Real> Problem<T> {
    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }

    /// Same problem with a different sampling period.
    pub fn with_period(&self, period: T) -> Result<Self, ModelError> {
        let mut out = self.clone();
        out.schedule = RoundRobinSchedule::new(&self.graph, period)?;
        Ok(out)
    }

    pub fn with_eps(&self, eps: T) -> Self {
        let mut out = self.clone();
        out.options = out.options.with_eps(eps);
        out
    }
}

// ---------------------------------------------------------------------------
// configuration

/// A value given either once for all nodes or per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerNode {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerNode {
    fn expand(&self, n: usize, name: &str) -> Result<Vec<f64>, ModelError> {
        match self {
            PerNode::Uniform(v) => Ok(vec![*v; n]),
            PerNode::Each(v) if v.len() == n => Ok(v.clone()),
            PerNode::Each(v) => Err(ModelError::DimensionMismatch(format!(
                "{name} has {} entries for {n} nodes",
                v.len()
            ))),
        }
    }

    fn compress(v: &[f64]) -> Self {
        match v.first() {
            Some(&first) if v.iter().all(|&x| x == first) => PerNode::Uniform(first),
            _ => PerNode::Each(v.to_vec()),
        }
    }
}

pub type MatrixRows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub a: MatrixRows,
    pub b2: MatrixRows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub c: MatrixRows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d2: Option<MatrixRows>,
    pub d2bar: MatrixRows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<MatrixRows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    pub alpha: PerNode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<PerNode>,
    pub eps: PerNode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsbar: Option<PerNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    /// Fixed `γ`; absent means minimise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

/// Top-level JSON problem description. Matrices are row-major nested arrays,
/// nodes are 1-based, times are in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub plant: PlantConfig,
    pub sensors: Vec<SensorConfig>,
    pub graph: GraphConfig,
    pub schedule: ScheduleConfig,
    pub synthesis: SynthesisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_precision: Option<f64>,
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

pub fn matrix_from_rows<T: Real>(rows: &MatrixRows, name: &str) -> Result<DMatrix<T>, ModelError> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err(ModelError::DimensionMismatch(format!("{name} has ragged rows")));
    }
    if nr == 0 || nc == 0 {
        return Err(ModelError::DimensionMismatch(format!("{name} is empty")));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| T::of(rows[i][j])))
}

pub fn matrix_to_rows<T: Real>(m: &DMatrix<T>) -> MatrixRows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].as_f64()).collect())
        .collect()
}

fn expect_shape<T: Real>(m: &DMatrix<T>, rows: usize, cols: usize, what: &str) -> Result<(), ModelError> {
    if m.shape() != (rows, cols) {
        return Err(ModelError::DimensionMismatch(format!(
            "{what} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Validates a configuration and converts it to a [`Problem`].
pub fn load_problem<T: Real>(cfg: &ProblemConfig) -> Result<Problem<T>, ModelError> {
    let plant = PlantModel::new(
        matrix_from_rows::<T>(&cfg.plant.a, "plant.a")?,
        matrix_from_rows::<T>(&cfg.plant.b2, "plant.b2")?,
    )?;
    let n = plant.state_dim();
    let mw = plant.disturbance_dim();
    let graph = ObserverGraph::from_config(&cfg.graph)?;
    let nodes = graph.node_count();
    if cfg.sensors.len() != nodes {
        return Err(ModelError::DimensionMismatch(format!(
            "{} sensors for {nodes} nodes",
            cfg.sensors.len()
        )));
    }
    let mut sensors = Vec::with_capacity(nodes);
    for (i, s) in cfg.sensors.iter().enumerate() {
        let label = i + 1;
        let c = matrix_from_rows::<T>(&s.c, &format!("sensors[{label}].c"))?;
        let my = c.nrows();
        expect_shape(&c, my, n, &format!("sensors[{label}].c"))?;
        let d2 = match &s.d2 {
            Some(rows) => matrix_from_rows::<T>(rows, &format!("sensors[{label}].d2"))?,
            None => DMatrix::zeros(my, mw),
        };
        expect_shape(&d2, my, mw, &format!("sensors[{label}].d2"))?;
        let d2bar = matrix_from_rows::<T>(&s.d2bar, &format!("sensors[{label}].d2bar"))?;
        if d2bar.nrows() != my {
            return Err(ModelError::DimensionMismatch(format!(
                "sensors[{label}].d2bar has {} rows, expected {my}",
                d2bar.nrows()
            )));
        }
        let h = match &s.h {
            Some(rows) => matrix_from_rows::<T>(rows, &format!("sensors[{label}].h"))?,
            None => DMatrix::identity(n, n),
        };
        if h.ncols() != n {
            return Err(ModelError::DimensionMismatch(format!(
                "sensors[{label}].h has {} columns, expected {n}",
                h.ncols()
            )));
        }
        sensors.push(SensorModel { c, d2, d2bar, h });
    }

    let schedule = RoundRobinSchedule::new(&graph, T::of(cfg.schedule.delta))?;

    let syn = &cfg.synthesis;
    let alpha: Vec<T> = syn.alpha.expand(nodes, "alpha")?.into_iter().map(T::of).collect();
    let pi = match &syn.pi {
        Some(p) => p.expand(nodes, "pi")?.into_iter().map(T::of).collect(),
        None => default_pi(&graph, &alpha),
    };
    let eps = syn.eps.expand(nodes, "eps")?.into_iter().map(T::of).collect();
    let epsbar = match &syn.epsbar {
        Some(e) => e.expand(nodes, "epsbar")?.into_iter().map(T::of).collect(),
        None => vec![T::zero(); nodes],
    };
    let options = SynthesisOptions {
        alpha,
        pi,
        eps,
        epsbar,
        margin: T::of(syn.margin.unwrap_or(DEFAULT_MARGIN)),
        gamma_mode: syn.gamma.map_or(GammaMode::Minimize, |g| GammaMode::Fixed(T::of(g))),
        theta_cap: T::of(DEFAULT_THETA_CAP),
    };
    options.validate(&graph)?;

    Ok(Problem {
        plant,
        sensors,
        graph,
        schedule,
        options,
        data_precision: T::of(cfg.data_precision.unwrap_or(0.0)),
    })
}

impl<T: Real> Problem<T> {
    /// Inverse of [`load_problem`]. Defaults are written out explicitly.
    pub fn to_config(&self) -> ProblemConfig {
        let f = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        ProblemConfig {
            plant: PlantConfig {
                a: matrix_to_rows(&self.plant.a),
                b2: matrix_to_rows(&self.plant.b2),
            },
            sensors: self
                .sensors
                .iter()
                .map(|s| SensorConfig {
                    c: matrix_to_rows(&s.c),
                    d2: Some(matrix_to_rows(&s.d2)),
                    d2bar: matrix_to_rows(&s.d2bar),
                    h: Some(matrix_to_rows(&s.h)),
                })
                .collect(),
            graph: self.graph.to_config(),
            schedule: ScheduleConfig {
                delta: self.schedule.period().as_f64(),
            },
            synthesis: SynthesisConfig {
                alpha: PerNode::compress(&f(&self.options.alpha)),
                pi: Some(PerNode::compress(&f(&self.options.pi))),
                eps: PerNode::compress(&f(&self.options.eps)),
                epsbar: Some(PerNode::compress(&f(&self.options.epsbar))),
                margin: Some(self.options.margin.as_f64()),
                gamma: match self.options.gamma_mode {
                    GammaMode::Minimize => None,
                    GammaMode::Fixed(g) => Some(g.as_f64()),
                },
            },
            data_precision: (self.data_precision > T::zero()).then(|| self.data_precision.as_f64()),
        }
    }
}

// ---------------------------------------------------------------------------
// detectability

/// Relative threshold on singular values in the PBH rank test.
pub const PBH_RELATIVE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NodeDetectability {
    pub detectable: bool,
    pub observable: bool,
}

/// Whether `rank [A − λI; C] = n` for the eigenvalue `λ`.
///
/// A singular value counts as zero when it is below
/// `max(rel_tol·σ_max, abs_tol)`.
pub fn pbh_full_rank<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>, lambda: Complex<T>, rel_tol: T, abs_tol: T) -> bool {
    let n = a.nrows();
    let m = c.nrows();
    let stacked = DMatrix::<Complex<T>>::from_fn(n + m, n, |r, col| {
        if r < n {
            let mut v = Complex::new(a[(r, col)], T::zero());
            if r == col {
                v -= lambda;
            }
            v
        } else {
            Complex::new(c[(r - n, col)], T::zero())
        }
    });
    let sv: DVector<T> = stacked.singular_values();
    let smax = sv.iter().copied().fold(T::zero(), |x, y| x.max(y));
    let thresh = (rel_tol * smax).max(abs_tol);
    sv.iter().filter(|&&s| s > thresh).count() == n
}

/// PBH detectability/observability of `(A, C_i)` for every node.
///
/// The absolute floor is `data_precision·√(m_y n)`, the Frobenius size of a
/// per-entry rounding perturbation of `C_i`.
pub fn detectability_report<T: Real>(
    plant: &PlantModel<T>,
    sensors: &[SensorModel<T>],
    data_precision: T,
) -> Vec<NodeDetectability> {
    let eig = plant.a.complex_eigenvalues();
    sensors
        .iter()
        .map(|s| {
            let abs_tol = data_precision * T::of(((s.c.nrows() * s.c.ncols()) as f64).sqrt());
            let mut detectable = true;
            let mut observable = true;
            for &lambda in eig.iter() {
                if !pbh_full_rank(&plant.a, &s.c, lambda, T::of(PBH_RELATIVE_TOL), abs_tol) {
                    observable = false;
                    if lambda.re >= T::zero() {
                        detectable = false;
                    }
                }
            }
            NodeDetectability { detectable, observable }
        })
        .collect()
}

/// Rank of the observability matrix `[C; CA; …; CA^{n−1}]`.
pub fn observability_rank<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>, rel_tol: T) -> usize {
    let n = a.nrows();
    let m = c.nrows();
    let mut obs = DMatrix::zeros(n * m, n);
    let mut block = c.clone();
    for k in 0..n {
        obs.rows_mut(k * m, m).copy_from(&block);
        block = &block * a;
    }
    let sv = obs.singular_values();
    let smax = sv.iter().copied().fold(T::zero(), |x, y| x.max(y));
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chua_json() -> &'static str {
        r#"{
          "plant": {"a": [[-3.2, 10, 0], [1, -1, 1], [0, -14.87, 0]],
                    "b2": [[-0.1246], [-0.4461], [0.3350]]},
          "sensors": [
            {"c": [[0.0032, -0.0047, 0.0010]], "d2": [[0]], "d2bar": [[0.025]]},
            {"c": [[-0.8986, 0.1312, -1.9703]], "d2": [[0]], "d2bar": [[0.025]]},
            {"c": [[1, 0, 0]], "d2bar": [[0.025]]}
          ],
          "graph": {"nodes": 3, "edges": [[2, 1], [1, 2], [3, 2]]},
          "schedule": {"delta": 0.1},
          "synthesis": {"alpha": 0.1, "eps": 0.1, "epsbar": 0.0},
          "data_precision": 5e-5
        }"#
    }

    #[test]
    fn loads_chua_problem() {
        let cfg = ProblemConfig::from_json(chua_json()).unwrap();
        let p = load_problem::<f64>(&cfg).unwrap();
        assert_eq!(p.state_dim(), 3);
        assert_eq!(p.plant.disturbance_dim(), 1);
        assert_eq!(p.plant.a[(2, 1)], -14.87);
        assert_eq!(p.plant.b2[(1, 0)], -0.4461);
        let s3 = &p.sensors[2];
        assert_eq!(s3.c, DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]));
        assert_eq!(s3.d2, DMatrix::zeros(1, 1));
        assert_eq!(s3.d2bar[(0, 0)], 0.025);
        assert_eq!(s3.h, DMatrix::identity(3, 3));
        assert_eq!(s3.stacked_d(), DMatrix::from_row_slice(1, 2, &[0.0, 0.025]));
        let b = s3.stacked_b(&p.plant);
        assert_eq!(b.shape(), (3, 2));
        assert_eq!(b.column(1).sum(), 0.0);
        // π_i = 2α/(1+q_i), q = (1,1,1)
        for &pi in &p.options.pi {
            assert!((pi - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn config_round_trip() {
        let cfg = ProblemConfig::from_json(chua_json()).unwrap();
        let p = load_problem::<f64>(&cfg).unwrap();
        let back = p.to_config();
        let again = load_problem::<f64>(&ProblemConfig::from_json(&back.to_json()).unwrap()).unwrap();
        assert_eq!(again.to_config(), back);
        assert_eq!(back.plant, cfg.plant);
        assert_eq!(
            ObserverGraph::from_config(&back.graph).unwrap(),
            ObserverGraph::from_config(&cfg.graph).unwrap()
        );
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = ProblemConfig::from_json(chua_json()).unwrap();
        cfg.sensors[0].c = vec![vec![1.0, 0.0]];
        assert!(matches!(
            load_problem::<f64>(&cfg),
            Err(ModelError::DimensionMismatch(_))
        ));

        let mut cfg = ProblemConfig::from_json(chua_json()).unwrap();
        cfg.synthesis.pi = Some(PerNode::Uniform(0.25));
        assert!(matches!(load_problem::<f64>(&cfg), Err(ModelError::Schema(_))));

        let mut cfg = ProblemConfig::from_json(chua_json()).unwrap();
        cfg.synthesis.eps = PerNode::Uniform(0.0);
        assert!(load_problem::<f64>(&cfg).is_err());

        let mut cfg = ProblemConfig::from_json(chua_json()).unwrap();
        cfg.schedule.delta = -1.0;
        assert!(matches!(load_problem::<f64>(&cfg), Err(ModelError::Network(_))));

        assert!(matches!(
            ProblemConfig::from_json("{\"plant\": 3}"),
            Err(ModelError::Schema(_))
        ));
    }

    #[test]
    fn pi_bound_only_applies_with_listeners() {
        // node 2 of the chain 1 -> 2 has no out-edges, so π_2 is unconstrained
        let g = ObserverGraph::new(2, &[(0, 1)]).unwrap();
        let mut opts = SynthesisOptions::<f64>::uniform(&g, 0.1, 0.1, 0.0);
        opts.pi = vec![0.1, 5.0];
        assert!(opts.validate(&g).is_ok());
        opts.pi = vec![0.2, 5.0];
        assert!(opts.validate(&g).is_err());
    }

    #[test]
    fn full_output_is_observable() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        let plant = PlantModel::new(a, DMatrix::zeros(2, 1)).unwrap();
        let s = SensorModel {
            c: DMatrix::identity(2, 2),
            d2: DMatrix::zeros(2, 1),
            d2bar: DMatrix::zeros(2, 1),
            h: DMatrix::identity(2, 2),
        };
        let r = detectability_report(&plant, &[s], 0.0);
        assert!(r[0].observable && r[0].detectable);
    }

    #[test]
    fn unobservable_stable_mode_is_detectable() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let plant = PlantModel::new(a, DMatrix::zeros(2, 1)).unwrap();
        let sensor = |c: [f64; 2]| SensorModel {
            c: DMatrix::from_row_slice(1, 2, &c),
            d2: DMatrix::zeros(1, 1),
            d2bar: DMatrix::zeros(1, 1),
            h: DMatrix::identity(2, 2),
        };
        let r = detectability_report(&plant, &[sensor([1.0, 0.0]), sensor([0.0, 1.0])], 0.0);
        assert_eq!(
            r[0],
            NodeDetectability {
                detectable: true,
                observable: false
            }
        );
        assert_eq!(
            r[1],
            NodeDetectability {
                detectable: false,
                observable: false
            }
        );
    }
}
