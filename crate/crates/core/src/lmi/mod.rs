//! Block matrices of the Round-Robin observer LMIs.
//!
//! Every builder works on [`AffineMatrix`] so the same code assembles both
//! the synthesis matrix `Ξ̄_i` (affine in the decision variables) and the
//! numeric analysis matrix `Ξ_i` (a constant expression).
//!
//! Block order of `η_i`, the vector the quadratic forms act on:
//!
//! | block | signal              | size      |
//! |-------|---------------------|-----------|
//! | a     | `ė_i`               | `n`       |
//! | b     | `e_i`               | `n`       |
//! | c     | own samples `𝐞_i`    | `p_i n`   |
//! | d     | `e_i(t − τ_i)`      | `n`       |
//! | e     | neighbours now      | `p_i n`   |
//! | f     | neighbours sampled  | `p_i n`   |
//! | g     | `ξ_i`               | `m_ξ`     |
//!
//! Nodes without in-neighbours have no sampled inputs and no delay; for them
//! blocks c–f are empty and the delay terms vanish.

pub mod expr;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use expr::{partition, AffineMatrix, BlockGrid, MatrixVar, VariableSet};

use crate::model::Problem;
use crate::scalar::{wirtinger_coeff, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmiError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("partition sizes {sizes:?} do not match a {dim}x{dim} matrix")]
    PartitionMismatch { sizes: Vec<usize>, dim: usize },
    #[error("node {0} has no in-neighbours")]
    EmptyNeighbourhood(usize),
    #[error("gap {index} is not positive")]
    NonPositiveGap { index: usize },
}

/// Sizes and offsets of the seven blocks of `η_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LmiBlockLayout {
    pub sizes: [usize; 7],
}

pub const BLOCK_A: usize = 0;
pub const BLOCK_B: usize = 1;
pub const BLOCK_C: usize = 2;
pub const BLOCK_D: usize = 3;
pub const BLOCK_E: usize = 4;
pub const BLOCK_F: usize = 5;
pub const BLOCK_G: usize = 6;

impl LmiBlockLayout {
    pub fn new(n: usize, p: usize, m_xi: usize) -> Self {
        let d = if p == 0 { 0 } else { n };
        Self {
            sizes: [n, n, p * n, d, p * n, p * n, m_xi],
        }
    }

    pub fn offsets(&self) -> [usize; 7] {
        let mut out = [0; 7];
        for k in 1..7 {
            out[k] = out[k - 1] + self.sizes[k - 1];
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.sizes.iter().sum()
    }
}

/// Per-node constants entering `Ξ_i` / `Ξ̄_i`.
#[derive(Debug, Clone)]
pub struct NodeContext<T: Real> {
    pub node: usize,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub tau: T,
    /// `Σ_{j : i ∈ V_j} τ_j²`.
    pub listener_tau_sq: T,
    pub alpha: T,
    pub eps: T,
    pub epsbar: T,
    pub a: DMatrix<T>,
    pub c: DMatrix<T>,
    pub b: DMatrix<T>,
    pub d: DMatrix<T>,
    pub h: DMatrix<T>,
    pub neighbours: Vec<usize>,
    pub neighbour_pi: Vec<T>,
}

impl<T: Real> NodeContext<T> {
    pub fn new(problem: &Problem<T>, i: usize) -> Self {
        let g = &problem.graph;
        let sens = &problem.sensors[i];
        let neighbours = g.neighbourhood(i).to_vec();
        let listener_tau_sq = g
            .out_neighbours(i)
            .iter()
            .map(|&j| problem.schedule.node_delay(j).powi(2))
            .fold(T::zero(), |acc, v| acc + v);
        Self {
            node: i,
            n: problem.state_dim(),
            p: g.in_degree(i),
            q: g.out_degree(i),
            tau: problem.schedule.node_delay(i),
            listener_tau_sq,
            alpha: problem.options.alpha[i],
            eps: problem.options.eps[i],
            epsbar: problem.options.epsbar[i],
            a: problem.plant.a.clone(),
            c: sens.c.clone(),
            b: sens.stacked_b(&problem.plant),
            d: sens.stacked_d(),
            h: sens.h.clone(),
            neighbour_pi: neighbours.iter().map(|&j| problem.options.pi[j]).collect(),
            neighbours,
        }
    }

    pub fn layout(&self) -> LmiBlockLayout {
        LmiBlockLayout::new(self.n, self.p, self.b.ncols())
    }
}

// ---------------------------------------------------------------------------
// elementary blocks

/// Bidiagonal difference operator `T_p ⊗ I_n` of size `(p+1)n × (p+2)n`.
pub fn build_t<T: Real>(p: usize, n: usize) -> DMatrix<T> {
    let mut pattern = DMatrix::<T>::zeros(p + 1, p + 2);
    for r in 0..=p {
        pattern[(r, r)] = T::one();
        pattern[(r, r + 1)] = -T::one();
    }
    pattern.kronecker(&DMatrix::identity(n, n))
}

/// `(p+1)×(p+1)` block matrix with `R` on the diagonal and `½(G+G')` off it.
pub fn build_psi<T: Real>(r: &AffineMatrix<T>, g: &AffineMatrix<T>, p: usize) -> AffineMatrix<T> {
    let n = r.nrows();
    let g_sym = (g.clone() + g.transpose()).scale(T::of(0.5));
    let mut grid = BlockGrid::square(&vec![n; p + 1]);
    for a in 0..=p {
        for b in 0..=p {
            grid.set(a, b, if a == b { r.clone() } else { g_sym.clone() });
        }
    }
    grid.build()
}

/// Numeric convenience wrapper around [`build_psi`].
pub fn psi_matrix<T: Real>(r: &DMatrix<T>, g: &DMatrix<T>, p: usize) -> DMatrix<T> {
    build_psi(
        &AffineMatrix::constant(r.clone()),
        &AffineMatrix::constant(g.clone()),
        p,
    )
    .eval(&[])
}

/// `[R G; G' R]`, required to be positive semidefinite.
pub fn park_constraint<T: Real>(r: &AffineMatrix<T>, g: &AffineMatrix<T>) -> AffineMatrix<T> {
    let n = r.nrows();
    let mut grid = BlockGrid::square(&[n, n]);
    grid.set(0, 0, r.clone());
    grid.set_sym(0, 1, g.clone());
    grid.set(1, 1, r.clone());
    grid.build()
}

/// Left side of the reciprocally convex bound:
/// `τ Σ_ν δ_ν' R δ_ν / gap_ν` with `τ = Σ gaps`.
pub fn lemma1_lhs<T: Real>(r: &DMatrix<T>, delta: &[DVector<T>], gaps: &[T]) -> Result<T, LmiError> {
    if delta.len() != gaps.len() {
        return Err(LmiError::DimensionMismatch(format!(
            "{} delta blocks for {} gaps",
            delta.len(),
            gaps.len()
        )));
    }
    if let Some(index) = gaps.iter().position(|&g| !(g > T::zero())) {
        return Err(LmiError::NonPositiveGap { index });
    }
    let tau = gaps.iter().fold(T::zero(), |a, &g| a + g);
    let sum = delta
        .iter()
        .zip(gaps)
        .fold(T::zero(), |acc, (d, &gap)| acc + (d.transpose() * r * d)[(0, 0)] / gap);
    Ok(tau * sum)
}

/// Right side of the reciprocally convex bound: `δ' Ψ δ`.
pub fn lemma1_rhs<T: Real>(psi: &DMatrix<T>, delta: &[DVector<T>]) -> T {
    let stacked = DVector::from_iterator(
        delta.iter().map(|d| d.len()).sum(),
        delta.iter().flat_map(|d| d.iter().copied()),
    );
    (stacked.transpose() * psi * &stacked)[(0, 0)]
}

/// The six distinct blocks of `Ψ̃_i`, partitioned as `[n, p n, n]`.
#[derive(Debug, Clone)]
pub struct PsiTilde<T: Real> {
    pub b11: AffineMatrix<T>,
    pub b12: AffineMatrix<T>,
    pub b13: AffineMatrix<T>,
    pub b22: AffineMatrix<T>,
    pub b23: AffineMatrix<T>,
    pub b33: AffineMatrix<T>,
}

impl<T: Real> PsiTilde<T> {
    pub fn assemble(&self) -> AffineMatrix<T> {
        let sizes = [self.b11.nrows(), self.b22.nrows(), self.b33.nrows()];
        let mut grid = BlockGrid::square(&sizes);
        grid.set(0, 0, self.b11.clone());
        grid.set_sym(0, 1, self.b12.clone());
        grid.set_sym(0, 2, self.b13.clone());
        grid.set(1, 1, self.b22.clone());
        grid.set_sym(1, 2, self.b23.clone());
        grid.set(2, 2, self.b33.clone());
        grid.build()
    }
}

/// `Ψ̄ = e^{−2ατ} T' Ψ T`.
pub fn build_psi_bar<T: Real>(psi: &AffineMatrix<T>, p: usize, n: usize, alpha: T, tau: T) -> AffineMatrix<T> {
    let t = build_t::<T>(p, n);
    psi.left_mul(&t.transpose())
        .right_mul(&t)
        .scale((-T::of(2.0) * alpha * tau).exp())
        .symmetrized()
}

/// `Ψ̃` from `Ψ̄`: only the (1,1) and (3,3) blocks change.
pub fn build_psi_tilde<T: Real>(
    psi_bar: &AffineMatrix<T>,
    y_hat: &AffineMatrix<T>,
    s: &AffineMatrix<T>,
    alpha: T,
    tau: T,
    p: usize,
) -> Result<PsiTilde<T>, LmiError> {
    let n = y_hat.nrows();
    let sizes = [n, p * n, n];
    let dim: usize = sizes.iter().sum();
    if psi_bar.shape() != (dim, dim) {
        return Err(LmiError::PartitionMismatch {
            sizes: sizes.to_vec(),
            dim: psi_bar.nrows(),
        });
    }
    let blocks = partition(psi_bar, &sizes);
    let decay = (-T::of(2.0) * alpha * tau).exp();
    Ok(PsiTilde {
        b11: blocks[0][0].clone() - y_hat.scale(T::of(2.0) * alpha) - s,
        b12: blocks[0][1].clone(),
        b13: blocks[0][2].clone(),
        b22: blocks[1][1].clone(),
        b23: blocks[1][2].clone(),
        b33: blocks[2][2].clone() + s.scale(decay),
    })
}

/// `Ψ̃` for a node without in-neighbours: the delay terms are absent and
/// only `−2αŶ` remains.
fn psi_tilde_isolated<T: Real>(y_hat: &AffineMatrix<T>, alpha: T) -> PsiTilde<T> {
    let n = y_hat.nrows();
    PsiTilde {
        b11: -y_hat.scale(T::of(2.0) * alpha),
        b12: AffineMatrix::zeros(n, 0),
        b13: AffineMatrix::zeros(n, 0),
        b22: AffineMatrix::zeros(0, 0),
        b23: AffineMatrix::zeros(0, 0),
        b33: AffineMatrix::zeros(0, 0),
    }
}

/// Blocks of the neighbour-storage bound; `Φ̄₁₂ = Φ̄₂₁ = −Φ̄₂₂`.
#[derive(Debug, Clone)]
pub struct PhiBar<T: Real> {
    pub b11: AffineMatrix<T>,
    pub b12: AffineMatrix<T>,
    pub b22: AffineMatrix<T>,
}

/// Block-diagonal `Φ̄` over the in-neighbours in ascending order.
///
/// `y_hat` and `w` are indexed by neighbour position, `pi` holds the
/// neighbours' dissipativity rates.
pub fn build_phi_bar<T: Real>(
    node: usize,
    y_hat: &[AffineMatrix<T>],
    w: &[AffineMatrix<T>],
    pi: &[T],
) -> Result<PhiBar<T>, LmiError> {
    let p = y_hat.len();
    if p == 0 {
        return Err(LmiError::EmptyNeighbourhood(node + 1));
    }
    if w.len() != p || pi.len() != p {
        return Err(LmiError::DimensionMismatch(format!(
            "{p} neighbour storages, {} weights, {} rates",
            w.len(),
            pi.len()
        )));
    }
    let n = y_hat[0].nrows();
    let wc = wirtinger_coeff::<T>();
    let mut g11 = BlockGrid::square(&vec![n; p]);
    let mut g22 = BlockGrid::square(&vec![n; p]);
    for k in 0..p {
        let ww = w[k].scale(wc);
        g11.set(k, k, y_hat[k].scale(pi[k]) + &ww);
        g22.set(k, k, ww);
    }
    let b22 = g22.build();
    Ok(PhiBar {
        b11: g11.build(),
        b12: -b22.clone(),
        b22,
    })
}

// ---------------------------------------------------------------------------
// Ξ assembly

/// The blocks of `Ξ` that differ between the analysis and synthesis forms.
struct CouplingBlocks<T: Real> {
    aa: AffineMatrix<T>,
    ab: AffineMatrix<T>,
    ac: AffineMatrix<T>,
    af: AffineMatrix<T>,
    ag: AffineMatrix<T>,
    /// `Ξ_bb` without the `θ(p+q)I − Ψ̃₁₁` part.
    bb: AffineMatrix<T>,
    /// `Ξ_bc` without `−Ψ̃₁₂`.
    bc: AffineMatrix<T>,
    bf: AffineMatrix<T>,
    bg: AffineMatrix<T>,
    cf: AffineMatrix<T>,
    /// `Ξ_ff` without `−Φ̄₂₂`.
    ff: AffineMatrix<T>,
    fg: AffineMatrix<T>,
}

struct StorageBlocks<T: Real> {
    psi: PsiTilde<T>,
    phi: Option<PhiBar<T>>,
}

fn storage_blocks<T: Real>(
    ctx: &NodeContext<T>,
    y_hat: &AffineMatrix<T>,
    s: &AffineMatrix<T>,
    r: &AffineMatrix<T>,
    g: &AffineMatrix<T>,
    nb_y_hat: &[AffineMatrix<T>],
    nb_w: &[AffineMatrix<T>],
) -> Result<StorageBlocks<T>, LmiError> {
    if ctx.p == 0 {
        return Ok(StorageBlocks {
            psi: psi_tilde_isolated(y_hat, ctx.alpha),
            phi: None,
        });
    }
    let psi = build_psi(r, g, ctx.p);
    let psi_bar = build_psi_bar(&psi, ctx.p, ctx.n, ctx.alpha, ctx.tau);
    let psi = build_psi_tilde(&psi_bar, y_hat, s, ctx.alpha, ctx.tau, ctx.p)?;
    let phi = build_phi_bar(ctx.node, nb_y_hat, nb_w, &ctx.neighbour_pi)?;
    Ok(StorageBlocks { psi, phi: Some(phi) })
}

fn assemble_xi<T: Real>(
    ctx: &NodeContext<T>,
    theta: &AffineMatrix<T>,
    store: &StorageBlocks<T>,
    cb: CouplingBlocks<T>,
) -> AffineMatrix<T> {
    let layout = ctx.layout();
    let (n, p) = (ctx.n, ctx.p);
    let eye = DMatrix::<T>::identity(n, n);
    let ones_row = DMatrix::<T>::from_element(1, p, T::one());
    let mut grid = BlockGrid::square(&layout.sizes);

    let bb = theta.scalar_times(&(eye.clone() * T::of((p + ctx.q) as f64))) - &store.psi.b11 + cb.bb;
    let bc = -store.psi.b12.clone() + cb.bc;
    let be = -theta.scalar_times(&ones_row.kronecker(&eye));

    grid.set(BLOCK_A, BLOCK_A, cb.aa);
    grid.set_sym(BLOCK_A, BLOCK_B, cb.ab);
    grid.set_sym(BLOCK_A, BLOCK_C, cb.ac);
    grid.set_sym(BLOCK_A, BLOCK_F, cb.af);
    grid.set_sym(BLOCK_A, BLOCK_G, cb.ag);
    grid.set(BLOCK_B, BLOCK_B, bb);
    grid.set_sym(BLOCK_B, BLOCK_C, bc);
    grid.set_sym(BLOCK_B, BLOCK_D, -store.psi.b13.clone());
    grid.set_sym(BLOCK_B, BLOCK_E, be);
    grid.set_sym(BLOCK_B, BLOCK_F, cb.bf);
    grid.set_sym(BLOCK_B, BLOCK_G, cb.bg);
    grid.set(BLOCK_C, BLOCK_C, -store.psi.b22.clone());
    grid.set_sym(BLOCK_C, BLOCK_D, -store.psi.b23.clone());
    grid.set_sym(BLOCK_C, BLOCK_F, cb.cf);
    grid.set(BLOCK_D, BLOCK_D, -store.psi.b33.clone());
    let pn = p * n;
    let (ee, ef, ff_phi) = match &store.phi {
        Some(phi) => (-phi.b11.clone(), -phi.b12.clone(), phi.b22.clone()),
        None => (
            AffineMatrix::zeros(pn, pn),
            AffineMatrix::zeros(pn, pn),
            AffineMatrix::zeros(pn, pn),
        ),
    };
    grid.set(BLOCK_E, BLOCK_E, ee);
    grid.set_sym(BLOCK_E, BLOCK_F, ef);
    grid.set(BLOCK_F, BLOCK_F, cb.ff - ff_phi);
    grid.set_sym(BLOCK_F, BLOCK_G, cb.fg);
    let m_xi = layout.sizes[BLOCK_G];
    grid.set(BLOCK_G, BLOCK_G, -AffineMatrix::identity(m_xi));
    grid.build().symmetrized()
}

/// Handles of every decision variable of the synthesis program.
#[derive(Debug, Clone)]
pub struct NodeVars {
    /// `Ŷ_i = Y_i⁻¹`.
    pub y_hat: MatrixVar,
    pub w: MatrixVar,
    /// Absent for nodes without in-neighbours (fixed at zero).
    pub s: Option<MatrixVar>,
    pub r: Option<MatrixVar>,
    pub g: Option<MatrixVar>,
    pub x: MatrixVar,
    pub f: MatrixVar,
    pub u: MatrixVar,
}

#[derive(Debug, Clone)]
pub struct SynthesisVars<T: Real> {
    pub set: VariableSet,
    /// `θ = γ⁻²`.
    pub theta: MatrixVar,
    pub nodes: Vec<NodeVars>,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Real> SynthesisVars<T> {
    pub fn allocate(problem: &Problem<T>) -> Self {
        let mut set = VariableSet::new();
        let n = problem.state_dim();
        let theta = set.scalar("theta");
        let nodes = (0..problem.node_count())
            .map(|i| {
                let label = i + 1;
                let sens = &problem.sensors[i];
                let delayed = problem.graph.in_degree(i) > 0;
                NodeVars {
                    y_hat: set.symmetric(format!("Yhat{label}"), n),
                    w: set.symmetric(format!("W{label}"), n),
                    s: delayed.then(|| set.symmetric(format!("S{label}"), n)),
                    r: delayed.then(|| set.symmetric(format!("R{label}"), n)),
                    g: delayed.then(|| set.full(format!("G{label}"), n, n)),
                    x: set.full(format!("X{label}"), n, n),
                    f: set.full(format!("F{label}"), n, sens.consensus_dim()),
                    u: set.full(format!("U{label}"), n, sens.measurement_dim()),
                }
            })
            .collect();
        Self {
            set,
            theta,
            nodes,
            _scalar: std::marker::PhantomData,
        }
    }

    pub fn theta_expr(&self) -> AffineMatrix<T> {
        AffineMatrix::var(&self.theta)
    }

    fn opt(&self, v: &Option<MatrixVar>, n: usize) -> AffineMatrix<T> {
        v.as_ref().map_or_else(|| AffineMatrix::zeros(n, n), AffineMatrix::var)
    }

    pub fn s_expr(&self, i: usize, n: usize) -> AffineMatrix<T> {
        self.opt(&self.nodes[i].s, n)
    }

    pub fn r_expr(&self, i: usize, n: usize) -> AffineMatrix<T> {
        self.opt(&self.nodes[i].r, n)
    }

    pub fn g_expr(&self, i: usize, n: usize) -> AffineMatrix<T> {
        self.opt(&self.nodes[i].g, n)
    }

    /// `θ` at a decision vector.
    pub fn theta_value(&self, x: &[T]) -> T {
        x[self.theta.offset]
    }
}

/// Synthesis matrix `Ξ̄_i`, affine in the decision variables.
pub fn build_xi_synthesis<T: Real>(
    problem: &Problem<T>,
    vars: &SynthesisVars<T>,
    i: usize,
) -> Result<AffineMatrix<T>, LmiError> {
    let ctx = NodeContext::new(problem, i);
    check_dims(&ctx)?;
    let nv = &vars.nodes[i];
    let n = ctx.n;
    let p = ctx.p;
    let y_hat = AffineMatrix::var(&nv.y_hat);
    let w = AffineMatrix::var(&nv.w);
    let s = vars.s_expr(i, n);
    let r = vars.r_expr(i, n);
    let g = vars.g_expr(i, n);
    let x = AffineMatrix::var(&nv.x);
    let f = AffineMatrix::var(&nv.f);
    let u = AffineMatrix::var(&nv.u);
    let nb_y: Vec<_> = ctx
        .neighbours
        .iter()
        .map(|&j| AffineMatrix::var(&vars.nodes[j].y_hat))
        .collect();
    let nb_w: Vec<_> = ctx
        .neighbours
        .iter()
        .map(|&j| AffineMatrix::var(&vars.nodes[j].w))
        .collect();
    let store = storage_blocks(&ctx, &y_hat, &s, &r, &g, &nb_y, &nb_w)?;

    let (eps, epsbar) = (ctx.eps, ctx.epsbar);
    let ones_row = DMatrix::<T>::from_element(1, p, T::one());
    let ones_col = DMatrix::<T>::from_element(p, 1, T::one());
    let ones_sq = DMatrix::<T>::from_element(p, p, T::one());

    let xt = x.transpose();
    // X'A − U C
    let acl = xt.right_mul(&ctx.a) - u.right_mul(&ctx.c);
    // X'B − U D
    let xb = xt.right_mul(&ctx.b) - u.right_mul(&ctx.d);
    let fh = f.right_mul(&ctx.h);

    let cb = CouplingBlocks {
        aa: r.scale(ctx.tau * ctx.tau) + w.scale(ctx.listener_tau_sq) - (x.clone() + &xt).scale(eps),
        ab: y_hat.clone() - &x + acl.scale(eps),
        ac: -fh.kron_left(&ones_row).scale(eps),
        af: (fh.scale(eps) - x.scale(epsbar)).kron_left(&ones_row),
        ag: xb.scale(eps),
        bb: acl.clone() + acl.transpose(),
        bc: -fh.kron_left(&ones_row),
        bf: (fh.clone() + acl.transpose().scale(epsbar)).kron_left(&ones_row),
        bg: xb.clone(),
        cf: -fh.transpose().kron_left(&ones_sq).scale(epsbar),
        ff: (fh.clone() + fh.transpose()).kron_left(&ones_sq).scale(epsbar),
        fg: xb.kron_left(&ones_col).scale(epsbar),
    };
    Ok(assemble_xi(&ctx, &vars.theta_expr(), &store, cb))
}

/// Numeric values of the storage-function variables of every node.
#[derive(Debug, Clone)]
pub struct StoragePoint<T: Real> {
    pub y_hat: Vec<DMatrix<T>>,
    pub s: Vec<DMatrix<T>>,
    pub r: Vec<DMatrix<T>>,
    pub w: Vec<DMatrix<T>>,
    pub g: Vec<DMatrix<T>>,
    pub theta: T,
}

impl<T: Real> StoragePoint<T> {
    /// Reads the storage variables out of a synthesis decision vector.
    pub fn from_solution(vars: &SynthesisVars<T>, x: &[T]) -> Self {
        let n = vars.nodes[0].y_hat.rows;
        let read = |v: &Option<MatrixVar>| v.as_ref().map_or_else(|| DMatrix::zeros(n, n), |v| v.unpack(x));
        Self {
            y_hat: vars.nodes.iter().map(|nv| nv.y_hat.unpack(x)).collect(),
            s: vars.nodes.iter().map(|nv| read(&nv.s)).collect(),
            r: vars.nodes.iter().map(|nv| read(&nv.r)).collect(),
            w: vars.nodes.iter().map(|nv| nv.w.unpack(x)).collect(),
            g: vars.nodes.iter().map(|nv| read(&nv.g)).collect(),
            theta: vars.theta_value(x),
        }
    }
}

/// Descriptor multipliers and gains of one node for the analysis matrix.
#[derive(Debug, Clone)]
pub struct NodeMultipliers<T: Real> {
    pub x: DMatrix<T>,
    pub z: DMatrix<T>,
    pub q: DMatrix<T>,
    pub k: DMatrix<T>,
    pub l: DMatrix<T>,
}

/// Analysis matrix `Ξ_i` for given gains, multipliers and storage variables.
pub fn build_xi_analysis<T: Real>(
    problem: &Problem<T>,
    point: &StoragePoint<T>,
    i: usize,
    m: &NodeMultipliers<T>,
) -> Result<DMatrix<T>, LmiError> {
    let ctx = NodeContext::new(problem, i);
    check_dims(&ctx)?;
    let n = ctx.n;
    let p = ctx.p;
    if m.k.shape() != (n, ctx.h.nrows()) || m.l.shape() != (n, ctx.c.nrows()) {
        return Err(LmiError::DimensionMismatch(format!(
            "gains of node {} have shapes {:?} and {:?}",
            i + 1,
            m.k.shape(),
            m.l.shape()
        )));
    }
    let c = |mat: &DMatrix<T>| AffineMatrix::constant(mat.clone());
    let nb_y: Vec<_> = ctx.neighbours.iter().map(|&j| c(&point.y_hat[j])).collect();
    let nb_w: Vec<_> = ctx.neighbours.iter().map(|&j| c(&point.w[j])).collect();
    let store = storage_blocks(
        &ctx,
        &c(&point.y_hat[i]),
        &c(&point.s[i]),
        &c(&point.r[i]),
        &c(&point.g[i]),
        &nb_y,
        &nb_w,
    )?;

    let ones_row = DMatrix::<T>::from_element(1, p, T::one());
    let ones_col = DMatrix::<T>::from_element(p, 1, T::one());
    let ones_sq = DMatrix::<T>::from_element(p, p, T::one());
    let (x, z, q) = (&m.x, &m.z, &m.q);
    let kh = &m.k * &ctx.h;
    let a_cl = &ctx.a - &m.l * &ctx.c;
    let b_cl = &ctx.b - &m.l * &ctx.d;
    let w = &point.w[i];
    let r = &point.r[i];

    let aa = r * (ctx.tau * ctx.tau) + w * ctx.listener_tau_sq - z - z.transpose();
    let ab = &point.y_hat[i] - x + z.transpose() * &a_cl;
    let ac = -ones_row.kronecker(&(z.transpose() * &kh));
    let af = ones_row.kronecker(&(-q + z.transpose() * &kh));
    let ag = z.transpose() * &b_cl;
    let bb = x.transpose() * &a_cl + a_cl.transpose() * x;
    let bc = -ones_row.kronecker(&(x.transpose() * &kh));
    let bf = ones_row.kronecker(&(x.transpose() * &kh + a_cl.transpose() * q));
    let bg = x.transpose() * &b_cl;
    let cf = -ones_sq.kronecker(&(kh.transpose() * q));
    let ff = ones_sq.kronecker(&(q.transpose() * &kh + kh.transpose() * q));
    let fg = ones_col.kronecker(&(q.transpose() * &b_cl));

    let cb = CouplingBlocks {
        aa: c(&aa),
        ab: c(&ab),
        ac: c(&ac),
        af: c(&af),
        ag: c(&ag),
        bb: c(&bb),
        bc: c(&bc),
        bf: c(&bf),
        bg: c(&bg),
        cf: c(&cf),
        ff: c(&ff),
        fg: c(&fg),
    };
    let theta = AffineMatrix::constant(DMatrix::from_element(1, 1, point.theta));
    Ok(assemble_xi(&ctx, &theta, &store, cb).eval(&[]))
}

fn check_dims<T: Real>(ctx: &NodeContext<T>) -> Result<(), LmiError> {
    let n = ctx.n;
    let label = ctx.node + 1;
    if ctx.c.ncols() != n || ctx.h.ncols() != n || ctx.b.nrows() != n {
        return Err(LmiError::DimensionMismatch(format!(
            "node {label}: C, H or B not compatible with n = {n}"
        )));
    }
    if ctx.d.nrows() != ctx.c.nrows() || ctx.d.ncols() != ctx.b.ncols() {
        return Err(LmiError::DimensionMismatch(format!(
            "node {label}: D does not match C and B"
        )));
    }
    Ok(())
}

/// `P = (1/N) Σ_i (Ŷ_i + S_i (1 − e^{−2α_iτ_i})/(2α_i))`.
pub fn certificate_matrix<T: Real>(problem: &Problem<T>, point: &StoragePoint<T>) -> DMatrix<T> {
    let n = problem.state_dim();
    let nodes = problem.node_count();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..nodes {
        let ctx_alpha = problem.options.alpha[i];
        let tau = problem.schedule.node_delay(i);
        p += &point.y_hat[i];
        if tau > T::zero() {
            let w = (T::one() - (-T::of(2.0) * ctx_alpha * tau).exp()) / (T::of(2.0) * ctx_alpha);
            p += &point.s[i] * w;
        }
    }
    let p = p / T::of(nodes as f64);
    (&p + p.transpose()) * T::of(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_matrix_patterns() {
        let t = build_t::<f64>(1, 1);
        assert_eq!(t, DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0]));
        let t = build_t::<f64>(2, 1);
        assert_eq!(
            t,
            DMatrix::from_row_slice(3, 4, &[1.0, -1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, 1.0, -1.0])
        );
        let t3 = build_t::<f64>(2, 3);
        assert_eq!(t3.shape(), (9, 12));
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert_eq!(t3.view((3, 3), (3, 3)), i3);
        assert_eq!(t3.view((3, 6), (3, 3)), -i3);
        assert_eq!(t3.view((3, 9), (3, 3)), DMatrix::zeros(3, 3));
    }

    #[test]
    fn psi_patterns() {
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = DMatrix::from_row_slice(2, 2, &[0.1, 0.3, -0.2, 0.4]);
        let psi = psi_matrix(&r, &g, 1);
        let gs = (&g + g.transpose()) * 0.5;
        assert_eq!(psi.view((0, 0), (2, 2)), r);
        assert_eq!(psi.view((0, 2), (2, 2)), gs);
        assert_eq!(psi.view((2, 0), (2, 2)), gs);
        assert_eq!(psi.view((2, 2), (2, 2)), r);

        let all_r = psi_matrix(&r, &r, 3);
        assert_eq!(all_r, DMatrix::from_element(4, 4, 1.0).kronecker(&r));

        let psi2 = psi_matrix(&r, &g, 2);
        assert_eq!(psi2, psi2.transpose());
    }

    #[test]
    fn lemma1_trivial_cases() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]);
        let zero = vec![DVector::zeros(2), DVector::zeros(2)];
        let psi = psi_matrix(&r, &r, 1);
        assert_eq!(lemma1_lhs(&r, &zero, &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(lemma1_rhs(&psi, &zero), 0.0);

        // p = 1, equal gaps, G = R, δ₀ = δ₁ = d: LHS = τ·(2/τ + 2/τ)·d'Rd
        // = 4 d'Rd, RHS = 4 d'Rd as well (all four blocks equal R).
        let d = DVector::from_vec(vec![1.0, -2.0]);
        let drd = (d.transpose() * &r * &d)[(0, 0)];
        let delta = vec![d.clone(), d.clone()];
        let lhs: f64 = lemma1_lhs(&r, &delta, &[0.3, 0.3]).unwrap();
        let rhs: f64 = lemma1_rhs(&psi, &delta);
        assert!((lhs - 4.0 * drd).abs() < 1e-12);
        assert!((rhs - 4.0 * drd).abs() < 1e-12);

        // with G = 0 the bound has slack for δ₀ = −δ₁ as well
        let psi0 = psi_matrix(&r, &DMatrix::zeros(2, 2), 1);
        let delta = vec![d.clone(), -d.clone()];
        assert!(lemma1_lhs(&r, &delta, &[0.3, 0.3]).unwrap() >= lemma1_rhs(&psi0, &delta));

        assert_eq!(
            lemma1_lhs(&r, &delta, &[0.3, 0.0]),
            Err(LmiError::NonPositiveGap { index: 1 })
        );
        assert!(matches!(
            lemma1_lhs(&r, &delta, &[0.3]),
            Err(LmiError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn psi_tilde_zero_coefficients() {
        let r = AffineMatrix::constant(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 2.0]));
        let g = AffineMatrix::constant(DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.2, 0.1]));
        let y = AffineMatrix::constant(DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 4.0]));
        let psi = build_psi(&r, &g, 2);
        let psi_bar = build_psi_bar(&psi, 2, 2, 0.0, 0.0);
        let pt = build_psi_tilde(&psi_bar, &y, &AffineMatrix::zeros(2, 2), 0.0, 0.0, 2).unwrap();
        assert_eq!(pt.assemble().eval(&[]), psi_bar.eval(&[]));

        // nonzero α, S: only the corner blocks change
        let s = AffineMatrix::constant(DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]));
        let psi_bar = build_psi_bar(&psi, 2, 2, 0.3, 0.2);
        let pt = build_psi_tilde(&psi_bar, &y, &s, 0.3, 0.2, 2)
            .unwrap()
            .assemble()
            .eval(&[]);
        let pb = psi_bar.eval(&[]);
        let diff = &pt - &pb;
        let decay = (-2.0 * 0.3 * 0.2_f64).exp();
        assert!((diff.view((0, 0), (2, 2)) + y.eval(&[]) * 0.6 + s.eval(&[])).amax() < 1e-15);
        assert!((diff.view((6, 6), (2, 2)) - s.eval(&[]) * decay).amax() < 1e-15);
        let mut rest = diff.clone();
        rest.view_mut((0, 0), (2, 2)).fill(0.0);
        rest.view_mut((6, 6), (2, 2)).fill(0.0);
        assert_eq!(rest.amax(), 0.0);
        assert_eq!(pt, pt.transpose());

        let bad = build_psi_tilde(&psi_bar, &y, &s, 0.3, 0.2, 1);
        assert!(matches!(bad, Err(LmiError::PartitionMismatch { .. })));
    }

    #[test]
    fn phi_bar_blocks() {
        let y = AffineMatrix::constant(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
        let w = AffineMatrix::constant(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
        let phi = build_phi_bar(0, std::slice::from_ref(&y), std::slice::from_ref(&w), &[0.1]).unwrap();
        let wc = std::f64::consts::PI.powi(2) / 4.0;
        let expect11 = y.eval(&[]) * 0.1 + w.eval(&[]) * wc;
        assert!((phi.b11.eval(&[]) - expect11).amax() < 1e-15);
        assert!((phi.b22.eval(&[]) - w.eval(&[]) * wc).amax() < 1e-15);
        assert_eq!(phi.b12.eval(&[]), -phi.b22.eval(&[]));

        let zero_w = AffineMatrix::zeros(2, 2);
        let phi0 = build_phi_bar(0, &[y.clone(), y.clone()], &[zero_w.clone(), zero_w], &[0.1, 0.2]).unwrap();
        assert_eq!(phi0.b22.eval(&[]).amax(), 0.0);
        assert_eq!(phi0.b12.eval(&[]).amax(), 0.0);
        assert_eq!(phi0.b11.eval(&[]).view((0, 2), (2, 2)).amax(), 0.0);
        assert_eq!(phi0.b11.eval(&[]).view((2, 2), (2, 2)), y.eval(&[]) * 0.2);

        assert_eq!(
            build_phi_bar::<f64>(4, &[], &[], &[]).unwrap_err(),
            LmiError::EmptyNeighbourhood(5)
        );
    }

    #[test]
    fn park_constraint_feasibility() {
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let eig_min = |m: DMatrix<f64>| m.symmetric_eigenvalues().min();
        let park = |g: &DMatrix<f64>| {
            park_constraint(&AffineMatrix::constant(r.clone()), &AffineMatrix::constant(g.clone())).eval(&[])
        };
        // G = 0: spectrum is that of R, twice
        assert!((eig_min(park(&DMatrix::zeros(2, 2))) - eig_min(r.clone())).abs() < 1e-12);
        // G = R: eigenvalues of R ± R, minimum 0
        assert!(eig_min(park(&r)).abs() < 1e-12);
        // ‖G‖ > ‖R‖ breaks it
        let big = DMatrix::identity(2, 2) * 3.0;
        assert!(eig_min(park(&big)) < 0.0);
    }

    #[test]
    fn layout_offsets() {
        let l = LmiBlockLayout::new(3, 2, 2);
        assert_eq!(l.sizes, [3, 3, 6, 3, 6, 6, 2]);
        assert_eq!(l.offsets(), [0, 3, 6, 12, 15, 21, 27]);
        assert_eq!(l.dim(), (3 + 3 * 2) * 3 + 2);
        let l0 = LmiBlockLayout::new(3, 0, 2);
        assert_eq!(l0.dim(), 8);
    }
}
