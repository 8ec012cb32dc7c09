//! End-to-end certification of a synthesized design against simulation.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::Problem;
use crate::scalar::Real;
use crate::sim::{
    disagreement_cost, disagreement_gain, dissipation_check, disturbance_dim, m_matrix, simulate, wirtinger_check,
    DissipationReport, DisturbanceSignal, EdgeWirtinger, LkParams, SignalShape, SimError,
};
use crate::synthesis::{verify_theorem2, SynthesisError, SynthesisSolution, Theorem2Report};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub horizon: f64,
    pub steps_per_period: usize,
    /// Allowed excess of the empirical ratio over `γ²` (relative).
    pub gain_slack: f64,
    /// Dissipation residual tolerance relative to `Σ∫‖ξ‖²`.
    pub dissipation_rel_tol: f64,
    pub wirtinger_tol: f64,
    /// Bound on `max_i ‖e_i(T)‖ / ‖x0‖` for the undisturbed run.
    pub decay_tol: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            horizon: 50.0,
            steps_per_period: 50,
            gain_slack: 1e-2,
            dissipation_rel_tol: 1e-4,
            wirtinger_tol: 1e-6,
            decay_tol: 1e-3,
        }
    }
}

/// One simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    pub x0: Vec<f64>,
    pub disturbance: DisturbanceSignal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub cost: f64,
    pub cost_degree_form: f64,
    pub ratio: f64,
    pub ratio_passed: bool,
    pub dissipation: DissipationReport,
    pub dissipation_passed: bool,
    pub wirtinger: Vec<EdgeWirtinger>,
    pub wirtinger_passed: bool,
    /// `max_i ‖e_i(T)‖`.
    pub final_error: f64,
    /// Estimate of the truncated tail of `J`: `γ²·(1/N)𝟙'V(T)`.
    pub tail_estimate: f64,
    pub sim_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    pub x0: Vec<f64>,
    pub ratio: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificationReport {
    pub gamma_sq: f64,
    pub theorem2: Theorem2Report,
    pub runs: Vec<RunReport>,
    pub max_ratio: f64,
    pub gain_bound_passed: bool,
    pub dissipation_passed: bool,
    pub wirtinger_passed: bool,
    pub decay: DecayReport,
    pub all_passed: bool,
    pub note: String,
}

const SUPREMUM_NOTE: &str = "the battery only samples the supremum over (x0, xi); \
a passing report lower-bounds the worst-case gain, it does not prove the bound";

/// Five nonzero initial states.
pub fn standard_initial_states(n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![1.0; n]];
    for c in 0..n.min(3) {
        let mut v = vec![0.0; n];
        v[c] = 1.0;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    let mixed = [-1.0, 0.5, 2.0];
    while out.len() < 5 {
        let k = out.len();
        out.push((0..n).map(|c| mixed[(c + k) % 3] * (1.0 + 0.1 * k as f64)).collect());
    }
    out.truncate(5);
    out
}

/// Twenty disturbances: pulses (some straddling sampling instants), decaying
/// sines at three frequencies and seeded random piecewise signals.
pub fn standard_battery<T: Real>(problem: &Problem<T>, h: f64) -> Vec<(String, DisturbanceSignal)> {
    let dim = disturbance_dim(problem);
    let mw = problem.plant.disturbance_dim();
    let delta = problem.schedule.period().as_f64();
    let all = vec![1.0; dim];
    let w_only: Vec<f64> = (0..dim).map(|c| if c < mw { 1.0 } else { 0.0 }).collect();
    let v_only: Vec<f64> = (0..dim).map(|c| if c < mw { 0.0 } else { 1.0 }).collect();
    let alternating: Vec<f64> = (0..dim).map(|c| if c % 2 == 0 { 1.0 } else { -0.5 }).collect();
    let mut out = Vec::new();

    let pulses = [
        (1.0, 0.5, &all),
        (2.0 * delta + h, 3.0 * delta, &w_only),
        (5.0 * delta - h, delta, &all),
        (0.0, 2.0, &v_only),
        (10.0 * delta + 2.0 * h, 0.25, &alternating),
        (3.0, 5.0, &w_only),
    ];
    for (k, (start, width, amp)) in pulses.into_iter().enumerate() {
        out.push((
            format!("pulse{}", k + 1),
            DisturbanceSignal::new(SignalShape::Pulse { start, width }, amp.clone()),
        ));
    }
    let sines = [(0.1, 0.1), (1.0, 0.2), (5.0, 0.3)];
    for (k, &(frequency, decay)) in sines.iter().enumerate() {
        for (tag, amp, phase) in [("a", &all, 0.0), ("b", &alternating, 1.0)] {
            out.push((
                format!("sine{}{tag}", k + 1),
                DisturbanceSignal::new(
                    SignalShape::DecayingSine {
                        frequency,
                        decay,
                        phase,
                    },
                    amp.clone(),
                ),
            ));
        }
    }
    let holds = [0.5, 1.0, 1.5, 2.0];
    for k in 0..8u64 {
        let hold = holds[k as usize % 4] * delta;
        out.push((
            format!("random{}", k + 1),
            DisturbanceSignal::new(
                SignalShape::RandomPiecewise {
                    seed: 1000 + k,
                    hold,
                    decay: 0.05 + 0.05 * (k % 3) as f64,
                    support: 30.0,
                },
                if k % 2 == 0 { all.clone() } else { alternating.clone() },
            ),
        ));
    }
    out
}

/// Battery scenarios (zero initial state) followed by the undisturbed
/// nonzero initial states.
pub fn standard_scenarios<T: Real>(problem: &Problem<T>, h: f64) -> Vec<Scenario> {
    let n = problem.state_dim();
    let mut out: Vec<Scenario> = standard_battery(problem, h)
        .into_iter()
        .map(|(label, disturbance)| Scenario {
            label,
            x0: vec![0.0; n],
            disturbance,
        })
        .collect();
    for (k, x0) in standard_initial_states(n).into_iter().enumerate() {
        out.push(Scenario {
            label: format!("x0_{}", k + 1),
            x0,
            disturbance: DisturbanceSignal::zero(disturbance_dim(problem)),
        });
    }
    out
}

fn run_one<T: Real>(
    problem: &Problem<T>,
    sol: &SynthesisSolution<T>,
    sc: &Scenario,
    opts: &CertifyOptions,
    params: &[LkParams<T>],
) -> Result<RunReport, SimError> {
    let started = Instant::now();
    let h = problem.schedule.period() / T::of(opts.steps_per_period as f64);
    let x0 = DVector::from_iterator(sc.x0.len(), sc.x0.iter().map(|&v| T::of(v)));
    let traj = simulate(problem, &sol.gains, &sc.disturbance, &x0, T::of(opts.horizon), h)?;
    let cost = disagreement_cost(&traj, &problem.graph);
    let ratio = disagreement_gain(&traj, &sol.gains.p)?.as_f64();
    let gamma_sq = sol.gains.gamma_sq.as_f64();
    let dissipation = dissipation_check(&traj, params, sol.theta, &m_matrix(problem));
    let wirtinger: Vec<EdgeWirtinger> = (0..problem.node_count())
        .flat_map(|j| wirtinger_check(&traj, j, &sol.storage.w[j], problem.schedule.node_delays()))
        .collect();
    let final_error = (0..problem.node_count())
        .map(|i| traj.e[i][traj.steps].norm().as_f64())
        .fold(0.0, f64::max);
    Ok(RunReport {
        label: sc.label.clone(),
        cost: cost.pairwise.as_f64(),
        cost_degree_form: cost.degree_form.as_f64(),
        ratio,
        ratio_passed: ratio <= gamma_sq * (1.0 + opts.gain_slack),
        dissipation_passed: dissipation.passed(opts.dissipation_rel_tol),
        dissipation,
        wirtinger_passed: wirtinger.iter().all(|w| w.total >= -opts.wirtinger_tol),
        wirtinger,
        final_error,
        tail_estimate: gamma_sq * dissipation.vt / problem.node_count() as f64,
        sim_seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, thiserror::Error)]
pub enum CertifyError {
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Runs the analysis post-check and every scenario (in parallel), plus the
/// undisturbed decay run from `x0 = 𝟙`.
pub fn certify<T: Real>(
    problem: &Problem<T>,
    sol: &SynthesisSolution<T>,
    scenarios: &[Scenario],
    opts: &CertifyOptions,
) -> Result<CertificationReport, CertifyError> {
    let theorem2 = verify_theorem2(problem, sol)?;
    let params: Vec<LkParams<T>> = (0..problem.node_count())
        .map(|i| LkParams::from_storage(problem, &sol.storage, i))
        .collect();
    let runs: Vec<RunReport> = scenarios
        .par_iter()
        .map(|sc| run_one(problem, sol, sc, opts, &params))
        .collect::<Result<_, _>>()?;

    let n = problem.state_dim();
    let ones = vec![1.0; n];
    let decay_run = run_one(
        problem,
        sol,
        &Scenario {
            label: "decay".into(),
            x0: ones.clone(),
            disturbance: DisturbanceSignal::zero(disturbance_dim(problem)),
        },
        opts,
        &params,
    )?;
    let decay_ratio = decay_run.final_error / (n as f64).sqrt();
    let decay = DecayReport {
        x0: ones,
        ratio: decay_ratio,
        passed: decay_ratio <= opts.decay_tol,
    };
    let max_ratio = runs.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let gain_bound_passed = runs.iter().all(|r| r.ratio_passed);
    let dissipation_passed = runs.iter().all(|r| r.dissipation_passed);
    let wirtinger_passed = runs.iter().all(|r| r.wirtinger_passed);
    let all_passed = theorem2.passed && gain_bound_passed && dissipation_passed && wirtinger_passed && decay.passed;
    Ok(CertificationReport {
        gamma_sq: sol.gains.gamma_sq.as_f64(),
        theorem2,
        runs,
        max_ratio,
        gain_bound_passed,
        dissipation_passed,
        wirtinger_passed,
        decay,
        all_passed,
        note: SUPREMUM_NOTE.into(),
    })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

impl CertificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable table, 4 significant digits.
    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "gamma^2 = {:.4}", self.gamma_sq);
        for n in &self.theorem2.nodes {
            let _ = writeln!(
                s,
                "node {}: lambda_max(Xi) = {:.4e}  park_min = {}  {}",
                n.node,
                n.max_eigenvalue,
                n.park_min_eigenvalue.map_or("-".to_string(), |v| format!("{v:.4e}")),
                verdict(n.passed)
            );
        }
        let _ = writeln!(
            s,
            "{:<10} {:>11} {:>11} {:>11} {:>11} {:>11}  checks",
            "run", "J", "ratio", "diss.res", "xi energy", "min wirt."
        );
        for r in &self.runs {
            let wmin = r.wirtinger.iter().map(|w| w.total).fold(f64::INFINITY, f64::min);
            let _ = writeln!(
                s,
                "{:<10} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e}  {}/{}/{}",
                r.label,
                r.cost,
                r.ratio,
                r.dissipation.residual,
                r.dissipation.disturbance_energy,
                wmin,
                verdict(r.ratio_passed),
                verdict(r.dissipation_passed),
                verdict(r.wirtinger_passed)
            );
        }
        let _ = writeln!(
            s,
            "max ratio = {:.4e} (gamma^2 = {:.4})  {}",
            self.max_ratio,
            self.gamma_sq,
            verdict(self.gain_bound_passed)
        );
        let _ = writeln!(
            s,
            "decay max_i |e_i(T)|/|x0| = {:.4e}  {}",
            self.decay.ratio,
            verdict(self.decay.passed)
        );
        let _ = writeln!(s, "analysis LMI check {}", verdict(self.theorem2.passed));
        let _ = writeln!(s, "overall {}", verdict(self.all_passed));
        let _ = writeln!(s, "note: {}", self.note);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_states_are_nonzero_and_distinct() {
        let xs = standard_initial_states(3);
        assert_eq!(xs.len(), 5);
        for (a, x) in xs.iter().enumerate() {
            assert!(x.iter().any(|&v| v != 0.0));
            for y in &xs[a + 1..] {
                assert_ne!(x, y);
            }
        }
        assert_eq!(standard_initial_states(1).len(), 5);
    }
}
