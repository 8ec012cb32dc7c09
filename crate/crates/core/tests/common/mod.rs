//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rrhinf::model::{load_problem, MatrixRows, PerNode, ProblemConfig};
use rrhinf::ProblemF64;

pub fn chua_config() -> ProblemConfig {
    ProblemConfig::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/chua.json")).expect("chua config")
}

/// The Chua example at sampling period `delta` and uniform `eps`.
pub fn chua(delta: f64, eps: f64) -> ProblemF64 {
    load_problem::<f64>(&chua_config())
        .expect("valid config")
        .with_period(delta)
        .expect("positive period")
        .with_eps(eps)
}

pub fn random_rows(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> MatrixRows {
    (0..rows)
        .map(|_| (0..cols).map(|_| scale * rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0))
}

/// Random symmetric positive definite matrix with eigenvalues in roughly
/// `[0.1, 2]`.
pub fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let m = random_matrix(rng, n, n, 1.0);
    &m * m.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1
}

/// Random weakly connected directed graph without self-loops, 1-based.
pub fn random_edges(rng: &mut impl Rng, nodes: usize) -> Vec<[usize; 2]> {
    let mut edges = Vec::new();
    for v in 2..=nodes {
        let u = rng.random_range(1..v);
        edges.push(if rng.random_bool(0.5) { [u, v] } else { [v, u] });
    }
    for j in 1..=nodes {
        for i in 1..=nodes {
            if i != j && rng.random_bool(0.3) && !edges.contains(&[j, i]) {
                edges.push([j, i]);
            }
        }
    }
    edges
}

/// A random, dimensionally consistent problem configuration: `n ≤ 4`
/// states, `2..=4` nodes, random sensors, consensus maps and scalings.
pub fn random_config(rng: &mut impl Rng) -> ProblemConfig {
    let n = rng.random_range(1..=4);
    let nodes = rng.random_range(2..=4);
    let mw = rng.random_range(1..=2);
    let mut cfg = chua_config();
    cfg.plant.a = random_rows(rng, n, n, 2.0);
    cfg.plant.b2 = random_rows(rng, n, mw, 1.0);
    cfg.sensors = (0..nodes)
        .map(|_| {
            let my = rng.random_range(1..=2);
            let mv = rng.random_range(1..=2);
            let mut s = cfg.sensors[0].clone();
            s.c = random_rows(rng, my, n, 1.0);
            s.d2 = Some(random_rows(rng, my, mw, 0.5));
            s.d2bar = random_rows(rng, my, mv, 0.5);
            s.h = if rng.random_bool(0.5) {
                let mh = rng.random_range(1..=n);
                Some(random_rows(rng, mh, n, 1.0))
            } else {
                None
            };
            s
        })
        .collect();
    cfg.graph.nodes = nodes;
    cfg.graph.edges = random_edges(rng, nodes);
    cfg.schedule.delta = rng.random_range(0.01..0.3);
    cfg.synthesis.alpha = per_node(rng, nodes, 0.05, 1.0);
    cfg.synthesis.eps = per_node(rng, nodes, 0.05, 2.0);
    cfg.synthesis.epsbar = Some(per_node(rng, nodes, 0.0, 1.0));
    cfg.synthesis.pi = None;
    cfg
}

fn per_node(rng: &mut impl Rng, nodes: usize, lo: f64, hi: f64) -> PerNode {
    PerNode::Each((0..nodes).map(|_| rng.random_range(lo..hi)).collect())
}
