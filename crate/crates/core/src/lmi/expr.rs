//! Affine matrix expressions over a flat vector of scalar decision variables.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::scalar::Real;

/// Handle to a matrix-valued decision variable inside a [`VariableSet`].
///
/// Symmetric variables own `n(n+1)/2` scalars (lower triangle, column by
/// column); full variables own `rows·cols` scalars in column-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixVar {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub symmetric: bool,
}

impl MatrixVar {
    pub fn scalar_count(&self) -> usize {
        if self.symmetric {
            self.rows * (self.rows + 1) / 2
        } else {
            self.rows * self.cols
        }
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.scalar_count()
    }

    /// Scalar index of entry `(r, c)`.
    pub fn index_of(&self, r: usize, c: usize) -> usize {
        if self.symmetric {
            let (r, c) = if r >= c { (r, c) } else { (c, r) };
            // lower triangle, column-major: column c starts after
            // sum_{k<c} (n - k) = c·n − c(c−1)/2 entries
            let n = self.rows;
            self.offset + c * n - c * c.saturating_sub(1) / 2 + (r - c)
        } else {
            self.offset + c * self.rows + r
        }
    }

    /// Reassembles the variable's value from the decision vector.
    pub fn unpack<T: Real>(&self, x: &[T]) -> DMatrix<T> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| x[self.index_of(r, c)])
    }

    /// Writes a matrix value into the decision vector (symmetric variables
    /// read the lower triangle).
    pub fn pack<T: Real>(&self, value: &DMatrix<T>, x: &mut [T]) {
        assert_eq!(value.shape(), (self.rows, self.cols), "shape of {}", self.name);
        for c in 0..self.cols {
            let r0 = if self.symmetric { c } else { 0 };
            for r in r0..self.rows {
                x[self.index_of(r, c)] = value[(r, c)];
            }
        }
    }
}

/// Registry of decision variables; allocates contiguous scalar slices.
#[derive(Debug, Clone, Default)]
pub struct VariableSet {
    vars: Vec<MatrixVar>,
    len: usize,
}

impl VariableSet {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, name: String, rows: usize, cols: usize, symmetric: bool) -> MatrixVar {
        let v = MatrixVar {
            name,
            offset: self.len,
            rows,
            cols,
            symmetric,
        };
        self.len += v.scalar_count();
        self.vars.push(v.clone());
        v
    }

    pub fn symmetric(&mut self, name: impl Into<String>, n: usize) -> MatrixVar {
        self.push(name.into(), n, n, true)
    }

    pub fn full(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> MatrixVar {
        self.push(name.into(), rows, cols, false)
    }

    pub fn scalar(&mut self, name: impl Into<String>) -> MatrixVar {
        self.push(name.into(), 1, 1, false)
    }

    /// Total number of scalar decision variables.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn vars(&self) -> &[MatrixVar] {
        &self.vars
    }

    pub fn get(&self, name: &str) -> Option<&MatrixVar> {
        self.vars.iter().find(|v| v.name == name)
    }
}

/// `M(x) = M₀ + Σ_k x_k M_k`, a matrix affine in the decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrix<T: Real> {
    constant: DMatrix<T>,
    terms: BTreeMap<usize, DMatrix<T>>,
}

impl<T: Real> AffineMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn constant(m: DMatrix<T>) -> Self {
        Self {
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    /// The expression equal to the variable itself.
    pub fn var(v: &MatrixVar) -> Self {
        let mut terms = BTreeMap::new();
        for c in 0..v.cols {
            let r0 = if v.symmetric { c } else { 0 };
            for r in r0..v.rows {
                let mut coef = DMatrix::zeros(v.rows, v.cols);
                coef[(r, c)] = T::one();
                if v.symmetric {
                    coef[(c, r)] = T::one();
                }
                terms.insert(v.index_of(r, c), coef);
            }
        }
        Self {
            constant: DMatrix::zeros(v.rows, v.cols),
            terms,
        }
    }

    pub fn nrows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn constant_part(&self) -> &DMatrix<T> {
        &self.constant
    }

    /// Coefficient matrices of the scalar variables that appear.
    pub fn terms(&self) -> impl Iterator<Item = (usize, &DMatrix<T>)> {
        self.terms.iter().map(|(&k, m)| (k, m))
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: &[T]) -> DMatrix<T> {
        let mut out = self.constant.clone();
        for (&k, m) in &self.terms {
            if x[k] != T::zero() {
                out += m * x[k];
            }
        }
        out
    }

    fn map_all(&self, f: impl Fn(&DMatrix<T>) -> DMatrix<T>) -> Self {
        Self {
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(&k, m)| (k, f(m))).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        self.map_all(|m| m.transpose())
    }

    pub fn scale(&self, s: T) -> Self {
        self.map_all(|m| m * s)
    }

    /// `L · M(x)`.
    pub fn left_mul(&self, l: &DMatrix<T>) -> Self {
        self.map_all(|m| l * m)
    }

    /// `M(x) · R`.
    pub fn right_mul(&self, r: &DMatrix<T>) -> Self {
        self.map_all(|m| m * r)
    }

    /// `C ⊗ M(x)` for a constant `C`.
    pub fn kron_left(&self, c: &DMatrix<T>) -> Self {
        self.map_all(|m| c.kronecker(m))
    }

    /// `(M + M')/2`; the result is bitwise symmetric.
    pub fn symmetrized(&self) -> Self {
        let half = T::of(0.5);
        self.map_all(|m| (m + m.transpose()) * half)
    }

    /// For a 1×1 expression `s(x)`, the expression `s(x) · C`.
    pub fn scalar_times(&self, c: &DMatrix<T>) -> Self {
        assert_eq!(self.shape(), (1, 1), "scalar_times needs a 1x1 expression");
        self.map_all(|m| c * m[(0, 0)])
    }

    /// Largest absolute deviation from symmetry over all parts.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for m in std::iter::once(&self.constant).chain(self.terms.values()) {
            worst = worst.max((m - m.transpose()).amax());
        }
        worst
    }

    /// Largest Frobenius norm among the coefficient matrices.
    pub fn coefficient_scale(&self) -> T {
        self.terms.values().map(|m| m.norm()).fold(T::zero(), |a, b| a.max(b))
    }

    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        self.map_all(|m| m.view((r0, c0), (nr, nc)).into_owned())
    }

    fn combine(mut self, other: &Self, sign: T) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in affine sum");
        self.constant += &other.constant * sign;
        for (&k, m) in &other.terms {
            match self.terms.get_mut(&k) {
                Some(acc) => *acc += m * sign,
                None => {
                    self.terms.insert(k, m * sign);
                }
            }
        }
        self
    }
}

impl<T: Real> Add for AffineMatrix<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.combine(&rhs, T::one())
    }
}

impl<T: Real> Add<&AffineMatrix<T>> for AffineMatrix<T> {
    type Output = Self;
    fn add(self, rhs: &Self) -> Self {
        self.combine(rhs, T::one())
    }
}

impl<T: Real> Sub for AffineMatrix<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.combine(&rhs, -T::one())
    }
}

impl<T: Real> Sub<&AffineMatrix<T>> for AffineMatrix<T> {
    type Output = Self;
    fn sub(self, rhs: &Self) -> Self {
        self.combine(rhs, -T::one())
    }
}

impl<T: Real> Neg for AffineMatrix<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

impl<T: Real> Mul<T> for AffineMatrix<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

impl<T: Real> From<DMatrix<T>> for AffineMatrix<T> {
    fn from(m: DMatrix<T>) -> Self {
        Self::constant(m)
    }
}

/// Assembles a matrix from a grid of blocks with fixed row/column sizes.
/// Unset blocks are zero; zero-sized blocks are allowed.
#[derive(Debug, Clone)]
pub struct BlockGrid<T: Real> {
    row_sizes: Vec<usize>,
    col_sizes: Vec<usize>,
    blocks: BTreeMap<(usize, usize), AffineMatrix<T>>,
}

impl<T: Real> BlockGrid<T> {
    pub fn new(row_sizes: &[usize], col_sizes: &[usize]) -> Self {
        Self {
            row_sizes: row_sizes.to_vec(),
            col_sizes: col_sizes.to_vec(),
            blocks: BTreeMap::new(),
        }
    }

    pub fn square(sizes: &[usize]) -> Self {
        Self::new(sizes, sizes)
    }

    pub fn set(&mut self, r: usize, c: usize, block: AffineMatrix<T>) {
        assert_eq!(
            block.shape(),
            (self.row_sizes[r], self.col_sizes[c]),
            "block ({r},{c}) has wrong shape"
        );
        self.blocks.insert((r, c), block);
    }

    /// Sets block `(r, c)` and its mirror `(c, r)` to the transpose.
    pub fn set_sym(&mut self, r: usize, c: usize, block: AffineMatrix<T>) {
        if r != c {
            self.set(c, r, block.transpose());
        }
        self.set(r, c, block);
    }

    pub fn build(&self) -> AffineMatrix<T> {
        let offsets = |sizes: &[usize]| {
            sizes
                .iter()
                .scan(0, |acc, &s| {
                    let o = *acc;
                    *acc += s;
                    Some(o)
                })
                .collect::<Vec<_>>()
        };
        let ro = offsets(&self.row_sizes);
        let co = offsets(&self.col_sizes);
        let nr: usize = self.row_sizes.iter().sum();
        let nc: usize = self.col_sizes.iter().sum();
        let mut out = AffineMatrix::zeros(nr, nc);
        for (&(r, c), b) in &self.blocks {
            let (r0, c0) = (ro[r], co[c]);
            let (h, w) = b.shape();
            if h == 0 || w == 0 {
                continue;
            }
            out.constant.view_mut((r0, c0), (h, w)).copy_from(&b.constant);
            for (&k, m) in &b.terms {
                let acc = out.terms.entry(k).or_insert_with(|| DMatrix::zeros(nr, nc));
                acc.view_mut((r0, c0), (h, w)).copy_from(m);
            }
        }
        out
    }
}

/// Splits a square expression into blocks of the given sizes.
pub fn partition<T: Real>(m: &AffineMatrix<T>, sizes: &[usize]) -> Vec<Vec<AffineMatrix<T>>> {
    let mut offs = Vec::with_capacity(sizes.len());
    let mut acc = 0;
    for &s in sizes {
        offs.push(acc);
        acc += s;
    }
    sizes
        .iter()
        .zip(&offs)
        .map(|(&hr, &r0)| {
            sizes
                .iter()
                .zip(&offs)
                .map(|(&hc, &c0)| m.block(r0, c0, hr, hc))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_var_round_trip() {
        let mut vs = VariableSet::new();
        let _pad = vs.scalar("pad");
        let s = vs.symmetric("S", 3);
        assert_eq!(s.scalar_count(), 6);
        assert_eq!(vs.len(), 7);
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let mut x = vec![0.0; vs.len()];
        s.pack(&m, &mut x);
        assert_eq!(x, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(s.unpack(&x), m);
        assert_eq!(AffineMatrix::var(&s).eval(&x), m);
    }

    #[test]
    fn full_var_round_trip() {
        let mut vs = VariableSet::new();
        let f = vs.full("F", 2, 3);
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut x = vec![0.0; vs.len()];
        f.pack(&m, &mut x);
        assert_eq!(AffineMatrix::var(&f).eval(&x), m);
    }

    #[test]
    fn affine_ops_commute_with_eval() {
        let mut vs = VariableSet::new();
        let y = vs.symmetric("Y", 2);
        let g = vs.full("G", 2, 2);
        let x: Vec<f64> = (0..vs.len()).map(|k| 0.3 * k as f64 - 1.0).collect();
        let ye = AffineMatrix::var(&y);
        let ge = AffineMatrix::var(&g);
        let l = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]);
        let e = (ye.clone() + ge.transpose()).left_mul(&l).right_mul(&l.transpose()) * 2.0;
        let direct = y.unpack(&x) + g.unpack(&x).transpose();
        let direct = &l * direct * l.transpose() * 2.0;
        assert!((e.eval(&x) - direct).amax() < 1e-12);
        let k = ge.kron_left(&DMatrix::from_element(1, 2, 1.0));
        assert_eq!(k.shape(), (2, 4));
        assert_eq!(k.eval(&x).columns(2, 2), g.unpack(&x));
    }

    #[test]
    fn block_grid_assembles() {
        let mut grid = BlockGrid::<f64>::square(&[2, 0, 1]);
        grid.set(0, 0, AffineMatrix::identity(2));
        grid.set_sym(0, 2, AffineMatrix::constant(DMatrix::from_element(2, 1, 3.0)));
        grid.set(2, 2, AffineMatrix::constant(DMatrix::from_element(1, 1, -1.0)));
        let m = grid.build().eval(&[]);
        assert_eq!(
            m,
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 3.0, 0.0, 1.0, 3.0, 3.0, 3.0, -1.0])
        );
    }
}
