//! Hybrid simulation of the plant and the observer network under the
//! Round-Robin protocol, plus the trajectory functionals used to check the
//! design: disagreement cost and gain, Lyapunov–Krasovskii functionals, the
//! summed dissipation inequality and the per-edge Wirtinger bound.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GainSet, Problem};
use crate::network::ObserverGraph;
use crate::scalar::{wirtinger_coeff, Real};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("step {h} does not divide the sampling period {period} into at least {min} equal parts")]
    StepNotDividingPeriod { h: f64, period: f64, min: usize },
    #[error("horizon {horizon} is not a positive multiple of the sampling period {period}")]
    HorizonNotMultiple { horizon: f64, period: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("time {t} is outside the simulated history [0, {horizon}] or off the grid")]
    OutOfHistory { t: f64, horizon: f64 },
    #[error("denominator of the disagreement gain is zero (x0 = 0 and no disturbance)")]
    ZeroDenominator,
}

/// Minimum number of integration steps per sampling period.
pub const MIN_STEPS_PER_PERIOD: usize = 20;

// ---------------------------------------------------------------------------
// disturbances

/// Which one-sided limit to take at a discontinuity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Time profile shared by all components of a disturbance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SignalShape {
    Zero,
    /// Unit on `[start, start + width)`.
    Pulse {
        start: f64,
        width: f64,
    },
    /// `e^{−decay·t} sin(2π·frequency·t + phase)`.
    DecayingSine {
        frequency: f64,
        decay: f64,
        phase: f64,
    },
    /// Independent uniform `[−1, 1]` values held for `hold` seconds, times
    /// `e^{−decay·t}`, zero after `support`.
    RandomPiecewise {
        seed: u64,
        hold: f64,
        decay: f64,
        support: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DisturbanceSpec {
    shape: SignalShape,
    amplitude: Vec<f64>,
}

/// Stacked disturbance `[w; v_1; …; v_N]`: one amplitude per component,
/// shaped by a common [`SignalShape`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "DisturbanceSpec", into = "DisturbanceSpec")]
pub struct DisturbanceSignal {
    pub shape: SignalShape,
    pub amplitude: Vec<f64>,
    /// Random draws of the piecewise shape, `[piece][component]`.
    table: Vec<Vec<f64>>,
}

impl From<DisturbanceSpec> for DisturbanceSignal {
    fn from(s: DisturbanceSpec) -> Self {
        Self::new(s.shape, s.amplitude)
    }
}

impl From<DisturbanceSignal> for DisturbanceSpec {
    fn from(s: DisturbanceSignal) -> Self {
        Self {
            shape: s.shape,
            amplitude: s.amplitude,
        }
    }
}

impl DisturbanceSignal {
    pub fn new(shape: SignalShape, amplitude: Vec<f64>) -> Self {
        let table = match &shape {
            SignalShape::RandomPiecewise {
                seed, hold, support, ..
            } => {
                let pieces = (support / hold).ceil().max(0.0) as usize;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..pieces)
                    .map(|_| (0..amplitude.len()).map(|_| rng.random_range(-1.0..=1.0)).collect())
                    .collect()
            }
            _ => Vec::new(),
        };
        Self {
            shape,
            amplitude,
            table,
        }
    }

    /// Parses the `{"shape": …, "amplitude": […]}` form.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(SignalShape::Zero, vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.amplitude.len()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.shape, SignalShape::Zero) || self.amplitude.iter().all(|&a| a == 0.0)
    }

    /// Component `c` at time `t`, taking the given one-sided limit.
    pub fn component(&self, c: usize, t: f64, side: Side) -> f64 {
        let a = self.amplitude[c];
        match &self.shape {
            SignalShape::Zero => 0.0,
            SignalShape::Pulse { start, width } => {
                let end = start + width;
                let t = snap(*start, snap(end, t));
                let inside = match side {
                    Side::Right => t >= *start && t < end,
                    Side::Left => t > *start && t <= end,
                };
                if inside {
                    a
                } else {
                    0.0
                }
            }
            SignalShape::DecayingSine {
                frequency,
                decay,
                phase,
            } => {
                if t < 0.0 {
                    return 0.0;
                }
                a * (-decay * t).exp() * (2.0 * std::f64::consts::PI * frequency * t + phase).sin()
            }
            SignalShape::RandomPiecewise { hold, decay, .. } => {
                let x = t / hold;
                let x = snap(x.round(), x);
                let piece = match side {
                    Side::Right => x.floor(),
                    Side::Left => x.ceil() - 1.0,
                };
                if piece < 0.0 || piece as usize >= self.table.len() {
                    return 0.0;
                }
                a * self.table[piece as usize][c] * (-decay * t).exp()
            }
        }
    }

    pub fn eval<T: Real>(&self, t: f64, side: Side) -> DVector<T> {
        DVector::from_iterator(self.dim(), (0..self.dim()).map(|c| T::of(self.component(c, t, side))))
    }

    /// `∫_0^horizon ‖ξ‖² dt` where a closed form exists (not for sines).
    pub fn energy_closed_form(&self, horizon: f64) -> Option<f64> {
        let a2: f64 = self.amplitude.iter().map(|a| a * a).sum();
        match &self.shape {
            SignalShape::Zero => Some(0.0),
            SignalShape::Pulse { start, width } => {
                let lo = start.max(0.0);
                let hi = (start + width).min(horizon);
                Some(a2 * (hi - lo).max(0.0))
            }
            SignalShape::DecayingSine { .. } => None,
            SignalShape::RandomPiecewise { hold, decay, .. } => {
                let mut total = 0.0;
                for (k, row) in self.table.iter().enumerate() {
                    let lo = k as f64 * hold;
                    let hi = (lo + hold).min(horizon);
                    if hi <= lo {
                        break;
                    }
                    let w = if *decay == 0.0 {
                        hi - lo
                    } else {
                        ((-2.0 * decay * lo).exp() - (-2.0 * decay * hi).exp()) / (2.0 * decay)
                    };
                    let s: f64 = row.iter().zip(&self.amplitude).map(|(u, a)| (u * a).powi(2)).sum();
                    total += s * w;
                }
                Some(total)
            }
        }
    }
}

/// Returns `edge` when `t` is within rounding of it, so that breakpoints
/// computed as `s·h` land exactly on signal breakpoints.
fn snap(edge: f64, t: f64) -> f64 {
    if (t - edge).abs() <= 1e-9 * edge.abs().max(1.0) {
        edge
    } else {
        t
    }
}

/// Length of the stacked disturbance `[w; v_1; …; v_N]`.
pub fn disturbance_dim<T: Real>(problem: &Problem<T>) -> usize {
    problem.plant.disturbance_dim() + problem.sensors.iter().map(|s| s.noise_dim()).sum::<usize>()
}

// ---------------------------------------------------------------------------
// trajectory

/// Contents of one directed edge's hold buffer over one sampling interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBuffer<T: Real> {
    /// `(j, i)`: `j` sends to `i` (0-based).
    pub edge: (usize, usize),
    /// `x̂_j − x̂_i` at the sample instant (zero for prehistory).
    pub value: DVector<T>,
    /// Index `s` of the sampling instant `t_s`, `None` for prehistory.
    pub sample_index: Option<usize>,
}

/// One poll: at `t_k` node `i` refreshed its buffer for neighbour `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferEvent {
    pub k: usize,
    pub t: f64,
    pub node: usize,
    pub polled: usize,
}

/// Simulated history on the grid `t_s = s·h`, `s = 0..=steps`.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub h: T,
    pub period: T,
    pub steps_per_period: usize,
    pub steps: usize,
    pub graph: ObserverGraph,
    pub x0: DVector<T>,
    pub x: Vec<DVector<T>>,
    /// `x̂_i` per node, then per grid point.
    pub xhat: Vec<Vec<DVector<T>>>,
    /// `e_i = x − x̂_i`.
    pub e: Vec<Vec<DVector<T>>>,
    /// `ė_i` from the right-hand side with the buffers of the interval
    /// ending at the grid point (left limit) or starting there (right limit).
    pub edot_left: Vec<Vec<DVector<T>>>,
    pub edot_right: Vec<Vec<DVector<T>>>,
    /// Stacked `ξ_i = [w; v_i]`, left and right limits.
    pub xi_left: Vec<Vec<DVector<T>>>,
    pub xi_right: Vec<Vec<DVector<T>>>,
    /// `held[k][e]`: buffer of edge `e` (in `graph.edges()` order) on
    /// `[t_k, t_{k+1})`.
    pub held: Vec<Vec<SampleBuffer<T>>>,
    pub events: Vec<BufferEvent>,
}

impl<T: Real> Trajectory<T> {
    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn time(&self, s: usize) -> T {
        T::of(s as f64) * self.h
    }

    pub fn horizon(&self) -> T {
        self.time(self.steps)
    }

    /// Sampling interval index containing grid step `[s, s+1]`.
    pub fn period_of_step(&self, s: usize) -> usize {
        s / self.steps_per_period
    }

    /// Grid index of time `t`, if `t` lies on the grid within the horizon.
    pub fn grid_index(&self, t: T) -> Result<usize, SimError> {
        let r = (t / self.h).as_f64();
        let s = r.round();
        if !(s >= 0.0 && s as usize <= self.steps && (r - s).abs() < 1e-6) {
            return Err(SimError::OutOfHistory {
                t: t.as_f64(),
                horizon: self.horizon().as_f64(),
            });
        }
        Ok(s as usize)
    }

    /// Composite trapezoid over the whole grid of a per-step integrand
    /// evaluated at the left end (right limits) and right end (left limits).
    pub fn trapezoid(&self, mut f: impl FnMut(usize, Side) -> T) -> T {
        let half = T::of(0.5) * self.h;
        let mut acc = T::zero();
        for s in 0..self.steps {
            acc += (f(s, Side::Right) + f(s + 1, Side::Left)) * half;
        }
        acc
    }

    /// `Σ_i ∫_0^T ‖ξ_i‖² dt`.
    pub fn disturbance_energy(&self) -> T {
        self.trapezoid(|s, side| {
            let xi = match side {
                Side::Left => &self.xi_left,
                Side::Right => &self.xi_right,
            };
            xi.iter().fold(T::zero(), |a, v| a + v[s].norm_squared())
        })
    }
}

// ---------------------------------------------------------------------------
// simulation

struct Dynamics<T: Real> {
    n: usize,
    nodes: usize,
    /// Block system matrix of `z = [x; x̂_1; …; x̂_N]`.
    a: DMatrix<T>,
    /// Input matrix of the stacked disturbance.
    g: DMatrix<T>,
    /// `K_i H_i` per node.
    kh: Vec<DMatrix<T>>,
}

impl<T: Real> Dynamics<T> {
    fn new(problem: &Problem<T>, gains: &GainSet<T>) -> Self {
        let n = problem.state_dim();
        let nodes = problem.node_count();
        let mw = problem.plant.disturbance_dim();
        let md = disturbance_dim(problem);
        let dim = n * (nodes + 1);
        let mut a = DMatrix::zeros(dim, dim);
        let mut g = DMatrix::zeros(dim, md);
        a.view_mut((0, 0), (n, n)).copy_from(&problem.plant.a);
        g.view_mut((0, 0), (n, mw)).copy_from(&problem.plant.b2);
        let mut v_off = mw;
        let mut kh = Vec::new();
        for (i, s) in problem.sensors.iter().enumerate() {
            let r = n * (i + 1);
            let l = &gains.l[i];
            a.view_mut((r, r), (n, n)).copy_from(&(&problem.plant.a - l * &s.c));
            a.view_mut((r, 0), (n, n)).copy_from(&(l * &s.c));
            g.view_mut((r, 0), (n, mw)).copy_from(&(l * &s.d2));
            let mv = s.noise_dim();
            g.view_mut((r, v_off), (n, mv)).copy_from(&(l * &s.d2bar));
            v_off += mv;
            kh.push(&gains.k[i] * &s.h);
        }
        Self { n, nodes, a, g, kh }
    }

    fn rhs(&self, z: &DVector<T>, d: &DVector<T>, coupling: &DVector<T>) -> DVector<T> {
        &self.a * z + &self.g * d + coupling
    }

    /// Constant coupling input `K_i H_i Σ_j d_ij` for every observer.
    fn coupling(&self, graph: &ObserverGraph, buffers: &[SampleBuffer<T>]) -> DVector<T> {
        let n = self.n;
        let mut c = DVector::zeros(n * (self.nodes + 1));
        let mut sum = vec![DVector::<T>::zeros(n); self.nodes];
        for b in buffers {
            sum[b.edge.1] += &b.value;
        }
        for (i, s) in sum.iter().enumerate() {
            if graph.in_degree(i) > 0 {
                let u = &self.kh[i] * s;
                c.rows_mut(n * (i + 1), n).copy_from(&u);
            }
        }
        c
    }

    fn edot(&self, zdot: &DVector<T>, i: usize) -> DVector<T> {
        zdot.rows(0, self.n) - zdot.rows(self.n * (i + 1), self.n)
    }
}

/// Splits the stacked disturbance into per-node `ξ_i = [w; v_i]`.
fn split_xi<T: Real>(problem: &Problem<T>, d: &DVector<T>) -> Vec<DVector<T>> {
    let mw = problem.plant.disturbance_dim();
    let mut off = mw;
    problem
        .sensors
        .iter()
        .map(|s| {
            let mv = s.noise_dim();
            let mut xi = DVector::zeros(mw + mv);
            xi.rows_mut(0, mw).copy_from(&d.rows(0, mw));
            xi.rows_mut(mw, mv).copy_from(&d.rows(off, mv));
            off += mv;
            xi
        })
        .collect()
}

fn steps_per_period<T: Real>(period: T, h: T) -> Result<usize, SimError> {
    let err = || SimError::StepNotDividingPeriod {
        h: h.as_f64(),
        period: period.as_f64(),
        min: MIN_STEPS_PER_PERIOD,
    };
    if !(h > T::zero()) {
        return Err(err());
    }
    let r = (period / h).as_f64();
    let m = r.round();
    if (r - m).abs() > 1e-9 * m.max(1.0) || (m as usize) < MIN_STEPS_PER_PERIOD {
        return Err(err());
    }
    Ok(m as usize)
}

/// Integrates plant and observers on `[0, horizon]` with classical RK4 and
/// step `h = Δ/m`, refreshing one buffer per node at every `t_k`.
///
/// Initial conditions: `x(0) = x0`, `x̂_i(0) = 0`, buffers zero.
pub fn simulate<T: Real>(
    problem: &Problem<T>,
    gains: &GainSet<T>,
    disturbance: &DisturbanceSignal,
    x0: &DVector<T>,
    horizon: T,
    h: T,
) -> Result<Trajectory<T>, SimError> {
    let n = problem.state_dim();
    let nodes = problem.node_count();
    let graph = &problem.graph;
    let period = problem.schedule.period();
    if x0.len() != n {
        return Err(SimError::DimensionMismatch(format!(
            "x0 has length {}, expected {n}",
            x0.len()
        )));
    }
    if disturbance.dim() != disturbance_dim(problem) {
        return Err(SimError::DimensionMismatch(format!(
            "disturbance has {} components, expected {}",
            disturbance.dim(),
            disturbance_dim(problem)
        )));
    }
    if gains.k.len() != nodes || gains.l.len() != nodes {
        return Err(SimError::DimensionMismatch("one K and one L per node required".into()));
    }
    for (i, s) in problem.sensors.iter().enumerate() {
        if gains.k[i].shape() != (n, s.consensus_dim()) || gains.l[i].shape() != (n, s.measurement_dim()) {
            return Err(SimError::DimensionMismatch(format!(
                "gains of node {} do not match its sensor",
                i + 1
            )));
        }
    }
    let m = steps_per_period(period, h)?;
    let kr = (horizon / period).as_f64();
    let periods = kr.round();
    if !(periods >= 1.0) || (kr - periods).abs() > 1e-9 * periods {
        return Err(SimError::HorizonNotMultiple {
            horizon: horizon.as_f64(),
            period: period.as_f64(),
        });
    }
    let periods = periods as usize;
    let steps = periods * m;
    let dyn_ = Dynamics::new(problem, gains);
    let edges = graph.edges().to_vec();
    let edge_index: HashMap<(usize, usize), usize> = edges.iter().enumerate().map(|(k, &e)| (e, k)).collect();

    let mut z = DVector::zeros(n * (nodes + 1));
    z.rows_mut(0, n).copy_from(x0);
    let mut buffers: Vec<SampleBuffer<T>> = edges
        .iter()
        .map(|&edge| SampleBuffer {
            edge,
            value: DVector::zeros(n),
            sample_index: None,
        })
        .collect();

    let new_series = || vec![Vec::with_capacity(steps + 1); nodes];
    let mut traj = Trajectory {
        h,
        period,
        steps_per_period: m,
        steps,
        graph: graph.clone(),
        x0: x0.clone(),
        x: Vec::with_capacity(steps + 1),
        xhat: new_series(),
        e: new_series(),
        edot_left: new_series(),
        edot_right: new_series(),
        xi_left: new_series(),
        xi_right: new_series(),
        held: Vec::with_capacity(periods),
        events: Vec::new(),
    };
    let time = |s: usize| T::of(s as f64) * h;
    let half = T::of(0.5);
    let sixth = T::one() / T::of(6.0);
    let record_state = |traj: &mut Trajectory<T>, z: &DVector<T>| {
        let x = z.rows(0, n).into_owned();
        for i in 0..nodes {
            let xh = z.rows(n * (i + 1), n).into_owned();
            traj.e[i].push(&x - &xh);
            traj.xhat[i].push(xh);
        }
        traj.x.push(x);
    };
    let record_side = |traj: &mut Trajectory<T>, z: &DVector<T>, d: &DVector<T>, coupling: &DVector<T>, side: Side| {
        let zdot = dyn_.rhs(z, d, coupling);
        let xis = split_xi(problem, d);
        for (i, xi) in xis.into_iter().enumerate() {
            let ed = dyn_.edot(&zdot, i);
            match side {
                Side::Left => {
                    traj.edot_left[i].push(ed);
                    traj.xi_left[i].push(xi);
                }
                Side::Right => {
                    traj.edot_right[i].push(ed);
                    traj.xi_right[i].push(xi);
                }
            }
        }
    };

    // prehistory: ė = 0 and ξ = 0 just before t = 0
    record_state(&mut traj, &z);
    for i in 0..nodes {
        traj.edot_left[i].push(DVector::zeros(n));
        let mi = traj_xi_dim(problem, i);
        traj.xi_left[i].push(DVector::zeros(mi));
    }

    let mut coupling = DVector::zeros(z.len());
    for s in 0..steps {
        let t = time(s);
        if s % m == 0 {
            let k = s / m;
            for i in 0..nodes {
                if let Some(j) = graph.polled_neighbour(i, k) {
                    let e = edge_index[&(j, i)];
                    let xj = z.rows(n * (j + 1), n);
                    let xi = z.rows(n * (i + 1), n);
                    buffers[e].value = xj - xi;
                    buffers[e].sample_index = Some(k);
                    traj.events.push(BufferEvent {
                        k,
                        t: t.as_f64(),
                        node: i,
                        polled: j,
                    });
                }
            }
            traj.held.push(buffers.clone());
            coupling = dyn_.coupling(graph, &buffers);
        }
        let tf = t.as_f64();
        let hf = h.as_f64();
        let d0 = disturbance.eval::<T>(tf, Side::Right);
        let dm = disturbance.eval::<T>(tf + 0.5 * hf, Side::Right);
        let d1 = disturbance.eval::<T>(time(s + 1).as_f64(), Side::Left);
        record_side(&mut traj, &z, &d0, &coupling, Side::Right);

        let k1 = dyn_.rhs(&z, &d0, &coupling);
        let k2 = dyn_.rhs(&(&z + &k1 * (h * half)), &dm, &coupling);
        let k3 = dyn_.rhs(&(&z + &k2 * (h * half)), &dm, &coupling);
        let k4 = dyn_.rhs(&(&z + &k3 * h), &d1, &coupling);
        z += (k1 + (k2 + k3) * T::of(2.0) + k4) * (h * sixth);

        record_state(&mut traj, &z);
        record_side(&mut traj, &z, &d1, &coupling, Side::Left);
    }
    // right limits at the final point continue with the last buffers
    let d_end = disturbance.eval::<T>(time(steps).as_f64(), Side::Right);
    record_side(&mut traj, &z, &d_end, &coupling, Side::Right);
    Ok(traj)
}

fn traj_xi_dim<T: Real>(problem: &Problem<T>, i: usize) -> usize {
    problem.plant.disturbance_dim() + problem.sensors[i].noise_dim()
}

// ---------------------------------------------------------------------------
// functionals

/// Both forms of the disagreement cost, truncated at the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisagreementCost<T> {
    /// `(1/N) ∫ Σ_i Σ_{j∈V_i} ‖x̂_j − x̂_i‖² dt`.
    pub pairwise: T,
    /// `(1/N) ∫ Σ_i [(p_i+q_i)‖e_i‖² − 2 e_i' Σ_{j∈V_i} e_j] dt`.
    pub degree_form: T,
}

pub fn disagreement_cost<T: Real>(traj: &Trajectory<T>, graph: &ObserverGraph) -> DisagreementCost<T> {
    let nodes = graph.node_count();
    let inv_n = T::one() / T::of(nodes as f64);
    let pairwise = traj.trapezoid(|s, _| {
        let mut acc = T::zero();
        for i in 0..nodes {
            for &j in graph.neighbourhood(i) {
                acc += (&traj.xhat[j][s] - &traj.xhat[i][s]).norm_squared();
            }
        }
        acc
    });
    let degree_form = traj.trapezoid(|s, _| {
        let mut acc = T::zero();
        for i in 0..nodes {
            let ei = &traj.e[i][s];
            let deg = T::of((graph.in_degree(i) + graph.out_degree(i)) as f64);
            acc += ei.norm_squared() * deg;
            for &j in graph.neighbourhood(i) {
                acc -= ei.dot(&traj.e[j][s]) * T::of(2.0);
            }
        }
        acc
    });
    DisagreementCost {
        pairwise: pairwise * inv_n,
        degree_form: degree_form * inv_n,
    }
}

/// `J / (x0'Px0 + (1/N) Σ_i ‖ξ_i‖²)`, all integrals truncated at the horizon.
pub fn disagreement_gain<T: Real>(traj: &Trajectory<T>, p: &DMatrix<T>) -> Result<T, SimError> {
    let nodes = T::of(traj.node_count() as f64);
    let j = disagreement_cost(traj, &traj.graph).pairwise;
    let x0 = &traj.x0;
    let denom = (x0.transpose() * p * x0)[(0, 0)] + traj.disturbance_energy() / nodes;
    if !(denom > T::zero()) {
        return Err(SimError::ZeroDenominator);
    }
    Ok(j / denom)
}

/// Variables of one node's Lyapunov–Krasovskii functional.
#[derive(Debug, Clone)]
pub struct LkParams<T: Real> {
    pub y_hat: DMatrix<T>,
    pub s: DMatrix<T>,
    pub r: DMatrix<T>,
    pub alpha: T,
    pub tau: T,
}

impl<T: Real> LkParams<T> {
    pub fn from_storage(problem: &Problem<T>, storage: &crate::lmi::StoragePoint<T>, i: usize) -> Self {
        Self {
            y_hat: storage.y_hat[i].clone(),
            s: storage.s[i].clone(),
            r: storage.r[i].clone(),
            alpha: problem.options.alpha[i],
            tau: problem.schedule.node_delay(i),
        }
    }
}

/// `V_i(t) = e'Ŷe + ∫_{t−τ}^t e^{−2α(t−s)} e'Se ds
///          + τ ∫_{t−τ}^t e^{−2α(t−s)} (τ+s−t) ė'Rė ds`,
/// with prehistory `e = x0`, `ė = 0` before `t = 0`.
pub fn lk_functional<T: Real>(traj: &Trajectory<T>, i: usize, t: T, par: &LkParams<T>) -> Result<T, SimError> {
    let s_end = traj.grid_index(t)?;
    Ok(LkTables::new(traj, i, par).value(traj, s_end))
}

/// Quadratic forms and kernel weights of one node's functional, tabulated
/// once so that evaluating it along a trajectory is cheap.
struct LkTables<T> {
    /// `e(s)'Ŷe(s)`.
    qy: Vec<T>,
    /// `e(s)'Se(s)`.
    qs: Vec<T>,
    /// `ė'Rė` with right and left limits.
    qr_right: Vec<T>,
    qr_left: Vec<T>,
    /// `e^{−2α·d·h}` for window offsets `d`.
    decay: Vec<T>,
    x0s: T,
    alpha: T,
    tau: T,
    window: usize,
}

impl<T: Real> LkTables<T> {
    fn new(traj: &Trajectory<T>, i: usize, par: &LkParams<T>) -> Self {
        let quad = |v: &DVector<T>, m: &DMatrix<T>| (v.transpose() * m * v)[(0, 0)];
        let tau = par.tau;
        let delayed = tau > T::zero();
        let window = if delayed {
            (tau / traj.h).as_f64().round() as usize
        } else {
            0
        };
        let e = &traj.e[i];
        let two_a = T::of(2.0) * par.alpha;
        let tab = |f: &dyn Fn(usize) -> T| {
            if delayed {
                (0..=traj.steps).map(f).collect()
            } else {
                Vec::new()
            }
        };
        Self {
            qy: e.iter().map(|v| quad(v, &par.y_hat)).collect(),
            qs: tab(&|s| quad(&e[s], &par.s)),
            qr_right: tab(&|s| quad(&traj.edot_right[i][s], &par.r)),
            qr_left: tab(&|s| quad(&traj.edot_left[i][s], &par.r)),
            decay: (0..=window)
                .map(|d| (-two_a * T::of(d as f64) * traj.h).exp())
                .collect(),
            x0s: quad(&traj.x0, &par.s),
            alpha: par.alpha,
            tau,
            window,
        }
    }

    fn value(&self, traj: &Trajectory<T>, s_end: usize) -> T {
        let mut v = self.qy[s_end];
        if self.window == 0 {
            return v;
        }
        let h = traj.h;
        let t = traj.time(s_end);
        let tau = self.tau;
        let two_a = T::of(2.0) * self.alpha;
        let first = s_end.saturating_sub(self.window);
        // prehistory part of the S-integral: e = x0 on [t − τ, 0]
        if self.window > s_end {
            let len = tau - t;
            let w = if self.alpha > T::zero() {
                (-two_a * t).exp() * (T::one() - (-two_a * len).exp()) / two_a
            } else {
                len
            };
            v += self.x0s * w;
        }
        let half = T::of(0.5) * h;
        let mut s_int = T::zero();
        let mut r_int = T::zero();
        for s in first..s_end {
            let (da, db) = (s_end - s, s_end - s - 1);
            let (wa, wb) = (self.decay[da], self.decay[db]);
            s_int += (wa * self.qs[s] + wb * self.qs[s + 1]) * half;
            let ka = wa * (tau - T::of(da as f64) * h);
            let kb = wb * (tau - T::of(db as f64) * h);
            r_int += (ka * self.qr_right[s] + kb * self.qr_left[s + 1]) * half;
        }
        v + s_int + tau * r_int
    }
}

/// `M_ii = −2α_i`, `M_ij = π_j` for `j ∈ V_i`.
pub fn m_matrix<T: Real>(problem: &Problem<T>) -> DMatrix<T> {
    let nodes = problem.node_count();
    let mut m = DMatrix::zeros(nodes, nodes);
    for i in 0..nodes {
        m[(i, i)] = -T::of(2.0) * problem.options.alpha[i];
        for &j in problem.graph.neighbourhood(i) {
            m[(i, j)] = problem.options.pi[j];
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    /// `𝟙'V(T) − 𝟙'V(0) − ∫𝟙'MV + θ ΣΣ∫‖e_i − e_j‖² − Σ∫‖ξ_i‖²`;
    /// nonpositive when the inequality holds.
    pub residual: f64,
    /// `Σ_i ∫‖ξ_i‖²`.
    pub disturbance_energy: f64,
    pub v0: f64,
    pub vt: f64,
}

impl DissipationReport {
    /// Holds up to `rel_tol · Σ∫‖ξ‖²` (absolute `rel_tol · 𝟙'V(0)` when the
    /// disturbance is zero).
    pub fn passed(&self, rel_tol: f64) -> bool {
        let scale = if self.disturbance_energy > 0.0 {
            self.disturbance_energy
        } else {
            self.v0.abs().max(f64::MIN_POSITIVE)
        };
        self.residual <= rel_tol * scale
    }
}

/// Summed dissipation inequality over `[0, T]` for the given functionals.
pub fn dissipation_check<T: Real>(
    traj: &Trajectory<T>,
    params: &[LkParams<T>],
    theta: T,
    m: &DMatrix<T>,
) -> DissipationReport {
    let nodes = traj.node_count();
    let v: Vec<Vec<T>> = (0..nodes)
        .map(|i| {
            let tables = LkTables::new(traj, i, &params[i]);
            (0..=traj.steps).map(|s| tables.value(traj, s)).collect()
        })
        .collect();
    let ones_m: Vec<T> = (0..nodes)
        .map(|j| (0..nodes).fold(T::zero(), |a, i| a + m[(i, j)]))
        .collect();
    let sum_v = |s: usize| v.iter().fold(T::zero(), |a, vi| a + vi[s]);
    let mv_int = traj.trapezoid(|s, _| (0..nodes).fold(T::zero(), |a, j| a + ones_m[j] * v[j][s]));
    let graph = &traj.graph;
    let pair_int = traj.trapezoid(|s, _| {
        let mut acc = T::zero();
        for i in 0..nodes {
            for &j in graph.neighbourhood(i) {
                acc += (&traj.e[i][s] - &traj.e[j][s]).norm_squared();
            }
        }
        acc
    });
    let energy = traj.disturbance_energy();
    let v0 = sum_v(0);
    let vt = sum_v(traj.steps);
    let residual = vt - v0 - mv_int + theta * pair_int - energy;
    DissipationReport {
        residual: residual.as_f64(),
        disturbance_energy: energy.as_f64(),
        v0: v0.as_f64(),
        vt: vt.as_f64(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeWirtinger {
    /// Sender `j` (1-based).
    pub from: usize,
    /// Receiver `i` (1-based).
    pub to: usize,
    /// `∫_0^T [τ_i² ė_j'W_jė_j − (π²/4)(e_j − e_j(sample))'W_j(e_j − e_j(sample))] dt`.
    pub total: f64,
}

/// Wirtinger integrand of sender `j` on every outgoing edge.
///
/// On each sampling interval the held sample of edge `(j, i)` dates from
/// the instant recorded in the simulation's buffer; prehistory samples take
/// `e_j = x0`.
pub fn wirtinger_check<T: Real>(traj: &Trajectory<T>, j: usize, w_j: &DMatrix<T>, tau: &[T]) -> Vec<EdgeWirtinger> {
    let graph = &traj.graph;
    let wc = wirtinger_coeff::<T>();
    let m = traj.steps_per_period;
    graph
        .out_neighbours(j)
        .iter()
        .map(|&i| {
            let e_idx = graph.edges().iter().position(|&e| e == (j, i)).expect("edge exists");
            let tau_sq = tau[i] * tau[i];
            let sample_of = |k: usize| match traj.held[k][e_idx].sample_index {
                Some(src) => traj.e[j][src * m].clone(),
                None => traj.x0.clone(),
            };
            let mut total = T::zero();
            let half = T::of(0.5) * traj.h;
            let mut cached_k = usize::MAX;
            let mut sample = traj.x0.clone();
            for s in 0..traj.steps {
                let k = traj.period_of_step(s);
                if k != cached_k {
                    sample = sample_of(k);
                    cached_k = k;
                }
                let integrand = |idx: usize, edot: &DVector<T>| {
                    let diff = &traj.e[j][idx] - &sample;
                    tau_sq * (edot.transpose() * w_j * edot)[(0, 0)] - wc * (diff.transpose() * w_j * &diff)[(0, 0)]
                };
                total += (integrand(s, &traj.edot_right[j][s]) + integrand(s + 1, &traj.edot_left[j][s + 1])) * half;
            }
            EdgeWirtinger {
                from: j + 1,
                to: i + 1,
                total: total.as_f64(),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// export

/// Trajectory CSV: `t`, `x_c`, `xhat{i}_c`, `e{i}_c`, then the held buffer
/// of every edge as `buf{j}to{i}_c`.
pub fn write_trajectory_csv<T: Real, W: Write>(traj: &Trajectory<T>, out: W) -> Result<(), csv::Error> {
    let n = traj.x0.len();
    let nodes = traj.node_count();
    let edges = traj.graph.edges();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|c| format!("x_{c}")));
    for i in 1..=nodes {
        header.extend((1..=n).map(|c| format!("xhat{i}_{c}")));
    }
    for i in 1..=nodes {
        header.extend((1..=n).map(|c| format!("e{i}_{c}")));
    }
    for &(j, i) in edges {
        header.extend((1..=n).map(|c| format!("buf{}to{}_{c}", j + 1, i + 1)));
    }
    w.write_record(&header)?;
    let fmt = |v: T| format!("{:.16e}", v.as_f64());
    for s in 0..=traj.steps {
        let mut row = vec![fmt(traj.time(s))];
        row.extend(traj.x[s].iter().map(|&v| fmt(v)));
        for i in 0..nodes {
            row.extend(traj.xhat[i][s].iter().map(|&v| fmt(v)));
        }
        for i in 0..nodes {
            row.extend(traj.e[i][s].iter().map(|&v| fmt(v)));
        }
        let k = traj.period_of_step(s).min(traj.held.len() - 1);
        for b in &traj.held[k] {
            row.extend(b.value.iter().map(|&v| fmt(v)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Buffer event log CSV: `k, t_k, i, polled j` (1-based nodes).
pub fn write_events_csv<W: Write>(events: &[BufferEvent], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "t_k", "i", "j"])?;
    for e in events {
        w.write_record([
            e.k.to_string(),
            format!("{:.16e}", e.t),
            (e.node + 1).to_string(),
            (e.polled + 1).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
