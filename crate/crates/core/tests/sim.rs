mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rrhinf::model::load_problem;
use rrhinf::sim::{disagreement_cost, disturbance_dim};
use rrhinf::{simulate, DisturbanceSignal, GainSet, ProblemF64, SignalShape, SimError, TrajectoryF64};

use common::{chua, random_config, random_matrix};

fn random_gains(rng: &mut ChaCha8Rng, p: &ProblemF64) -> GainSet<f64> {
    let n = p.state_dim();
    GainSet {
        k: p.sensors
            .iter()
            .map(|s| random_matrix(rng, n, s.consensus_dim(), 0.5))
            .collect(),
        l: p.sensors
            .iter()
            .map(|s| random_matrix(rng, n, s.measurement_dim(), 0.5))
            .collect(),
        p: DMatrix::identity(n, n),
        gamma_sq: 1.0,
    }
}

fn chua_gains(p: &ProblemF64) -> GainSet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    random_gains(&mut rng, p)
}

/// Largest absolute difference between `a` and `b + c` over states and errors.
fn superposition_error(a: &TrajectoryF64, b: &TrajectoryF64, c: &TrajectoryF64) -> f64 {
    let mut worst = 0.0f64;
    for s in 0..=a.steps {
        worst = worst.max((&a.x[s] - &b.x[s] - &c.x[s]).amax());
        for i in 0..a.node_count() {
            worst = worst.max((&a.e[i][s] - &b.e[i][s] - &c.e[i][s]).amax());
        }
    }
    worst
}

fn scale_of(t: &TrajectoryF64) -> f64 {
    t.x.iter().map(|v| v.amax()).fold(1.0, f64::max)
}

#[test]
fn zero_input_from_rest_stays_at_rest() {
    let p = chua(0.1, 0.1);
    let g = chua_gains(&p);
    let traj = simulate(
        &p,
        &g,
        &DisturbanceSignal::zero(disturbance_dim(&p)),
        &DVector::zeros(3),
        2.0,
        0.005,
    )
    .unwrap();
    assert_eq!(traj.steps, 400);
    assert!(traj.x.iter().all(|v| v.iter().all(|&c| c == 0.0)));
    assert!(traj.e.iter().flatten().all(|v| v.iter().all(|&c| c == 0.0)));
    assert_eq!(disagreement_cost(&traj, &p.graph).pairwise, 0.0);
}

#[test]
fn grid_aligned_pulse_energy_matches_closed_form() {
    let p = chua(0.1, 0.1);
    let g = chua_gains(&p);
    let dim = disturbance_dim(&p);
    let amp: Vec<f64> = (0..dim).map(|c| 0.5 + c as f64).collect();
    // pulse edges on grid points: the trapezoid with one-sided limits is exact
    let d = DisturbanceSignal::new(
        SignalShape::Pulse {
            start: 0.3,
            width: 0.45,
        },
        amp,
    );
    let traj = simulate(&p, &g, &d, &DVector::zeros(3), 1.0, 0.005).unwrap();
    // every node sees the plant disturbance w, each only its own noise v_i
    let mw = p.plant.disturbance_dim();
    let a2: f64 = d
        .amplitude
        .iter()
        .enumerate()
        .map(|(c, a)| if c < mw { 3.0 * a * a } else { a * a })
        .sum();
    let exact = 0.45 * a2;
    let numeric = traj.disturbance_energy();
    assert!((numeric - exact).abs() <= 1e-12 * exact, "{numeric} vs {exact}");
}

#[test]
fn piecewise_energy_converges_to_closed_form() {
    let p = chua(0.1, 0.1);
    let g = chua_gains(&p);
    let d = DisturbanceSignal::new(
        SignalShape::RandomPiecewise {
            seed: 5,
            hold: 0.05,
            decay: 0.3,
            support: 1.5,
        },
        // noise only, so the per-node energies add up to the stacked one
        (0..disturbance_dim(&p))
            .map(|c| if c < p.plant.disturbance_dim() { 0.0 } else { 1.0 })
            .collect(),
    );
    let exact = d.energy_closed_form(2.0).unwrap();
    let err = |h: f64| {
        let traj = simulate(&p, &g, &d, &DVector::zeros(3), 2.0, h).unwrap();
        (traj.disturbance_energy() - exact).abs()
    };
    let coarse = err(0.005);
    let fine = err(0.0025);
    // second order within each piece
    assert!(fine < 0.3 * coarse, "{coarse} -> {fine}");
    assert!(fine < 1e-4 * exact);
}

#[test]
fn rejects_inconsistent_arguments() {
    let p = chua(0.1, 0.1);
    let g = chua_gains(&p);
    let d = DisturbanceSignal::zero(disturbance_dim(&p));
    let x0 = DVector::zeros(3);
    assert!(matches!(
        simulate(&p, &g, &d, &x0, 1.0, 0.007),
        Err(SimError::StepNotDividingPeriod { .. })
    ));
    assert!(matches!(
        simulate(&p, &g, &d, &x0, 1.05, 0.005),
        Err(SimError::HorizonNotMultiple { .. })
    ));
    assert!(matches!(
        simulate(&p, &g, &d, &DVector::zeros(2), 1.0, 0.005),
        Err(SimError::DimensionMismatch(_))
    ));
    assert!(matches!(
        simulate(&p, &g, &DisturbanceSignal::zero(1), &x0, 1.0, 0.005),
        Err(SimError::DimensionMismatch(_))
    ));
}

#[test]
fn one_poll_per_node_with_neighbours_per_period() {
    let p = chua(0.1, 0.1);
    let g = chua_gains(&p);
    let traj = simulate(
        &p,
        &g,
        &DisturbanceSignal::zero(disturbance_dim(&p)),
        &DVector::from_element(3, 1.0),
        3.0,
        0.005,
    )
    .unwrap();
    let polling: Vec<usize> = (0..3).filter(|&i| p.graph.in_degree(i) > 0).collect();
    assert_eq!(traj.events.len(), 30 * polling.len());
    for i in polling {
        let polled: Vec<usize> = traj.events.iter().filter(|e| e.node == i).map(|e| e.polled).collect();
        let nbrs = p.graph.neighbourhood(i);
        // every neighbour is visited once in each window of p consecutive polls
        for w in polled.windows(nbrs.len()) {
            let mut seen = w.to_vec();
            seen.sort_unstable();
            assert_eq!(seen, nbrs);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trajectories_superpose(seed in any::<u64>(), c in 0.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: ProblemF64 = load_problem(&random_config(&mut rng)).unwrap();
        let g = random_gains(&mut rng, &p);
        let n = p.state_dim();
        let dim = disturbance_dim(&p);
        let delta = p.schedule.period();
        let horizon = 10.0 * delta;
        let h = delta / 20.0;
        let x0 = DVector::from_fn(n, |k, _| (k as f64 + 1.0) * 0.5 - 1.0);
        let shape = SignalShape::RandomPiecewise { seed, hold: delta / 3.0, decay: 0.1, support: horizon };
        let amp = vec![1.0; dim];
        let d = DisturbanceSignal::new(shape.clone(), amp.clone());
        let zero = DisturbanceSignal::zero(dim);

        let both = simulate(&p, &g, &d, &x0, horizon, h).unwrap();
        let free = simulate(&p, &g, &zero, &x0, horizon, h).unwrap();
        let forced = simulate(&p, &g, &d, &DVector::zeros(n), horizon, h).unwrap();
        let err = superposition_error(&both, &free, &forced);
        prop_assert!(err <= 1e-10 * scale_of(&both), "superposition error {err}");

        // homogeneity: scaling x0 and the amplitude scales every signal
        let scaled_d = DisturbanceSignal::new(shape, amp.iter().map(|a| c * a).collect());
        let scaled = simulate(&p, &g, &scaled_d, &(&x0 * c), horizon, h).unwrap();
        let cost = disagreement_cost(&both, &p.graph).pairwise;
        let scaled_cost = disagreement_cost(&scaled, &p.graph).pairwise;
        prop_assert!((scaled_cost - c * c * cost).abs() <= 1e-9 * (c * c * cost).max(1e-300));
        for s in 0..=both.steps {
            prop_assert!((&scaled.x[s] - &both.x[s] * c).amax() <= 1e-10 * c * scale_of(&both));
        }
    }
}
