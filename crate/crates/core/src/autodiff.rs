//! Dense `f64` matrices and a reverse-mode tape over them.
//!
//! Every operation appends a node holding its value; [`Tape::backward`]
//! walks the nodes in reverse and accumulates gradients. Parameters enter
//! the tape through [`Tape::param`] so their gradients can be read back by
//! id. The op set is exactly what the policy network needs.

use std::fmt;
use std::rc::Rc;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{}, {:?})", self.rows, self.cols, self.data)
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Matrix::from_vec(1, data.len(), data)
    }

    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn scalar(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "not a scalar");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols,
            other.rows,
            "matmul {:?} x {:?}",
            self.shape(),
            other.shape()
        );
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · otherᵀ`
    pub fn matmul_bt(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols,
            other.cols,
            "matmul_bt {:?} x {:?}",
            self.shape(),
            other.shape()
        );
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = a.iter().zip(other.row(j)).map(|(x, y)| x * y).sum();
            }
        }
        out
    }

    /// `selfᵀ · other`
    pub fn matmul_at(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.rows,
            other.rows,
            "matmul_at {:?} x {:?}",
            self.shape(),
            other.shape()
        );
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = other.row(k);
            for (i, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.shape(), other.shape(), "add shapes");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(self.shape(), other.shape(), "elementwise shapes");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Allowed entries for a masked row softmax, row-major.
pub type Mask = Rc<Vec<bool>>;

struct GruSaved {
    r: Matrix,
    z: Matrix,
    n: Matrix,
    hn: Matrix,
    h_prev: Matrix,
}

enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    LeakyRelu(Var, f64),
    Elu(Var),
    Exp(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Transpose(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Row(Var, usize),
    MeanRows(Var),
    Sum(Var),
    Pick(Var, usize, usize),
    OuterSum(Var, Var),
    Gru {
        x: Var,
        h0: Var,
        wx: Var,
        wh: Var,
        b: Var,
        saved: Box<GruSaved>,
    },
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients from one backward pass.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    params: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// `(param id, gradient)` for every parameter leaf that received one.
    pub fn params(&self) -> impl Iterator<Item = (usize, &Matrix)> {
        self.params
            .iter()
            .filter_map(|&(node, id)| self.grads[node].as_ref().map(|g| (id, g)))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(row: &mut [f64], allowed: Option<&[bool]>) {
    let ok = |j: usize| allowed.is_none_or(|m| m[j]);
    let max = row
        .iter()
        .enumerate()
        .filter(|(j, _)| ok(*j))
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (j, x) in row.iter_mut().enumerate() {
        if ok(j) {
            *x = (*x - max).exp();
            total += *x;
        } else {
            *x = 0.0;
        }
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: usize, value: Matrix) -> Var {
        self.push(value, Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_bt(self.value(b));
        self.push(v, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    /// Adds the `1 × m` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!((1, av.cols()), bv.shape(), "add_row shapes");
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, x) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += x;
            }
        }
        self.push(out, Op::AddRow(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| k * x);
        self.push(v, Op::Affine(a, k))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push(v, Op::Elu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    /// Row-wise softmax; with a mask, disallowed entries are exactly zero.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<Mask>) -> Var {
        let mut v = self.value(a).clone();
        let cols = v.cols();
        if let Some(m) = &mask {
            assert_eq!(m.len(), v.data().len(), "mask shape");
        }
        for r in 0..v.rows() {
            let allowed = mask.as_ref().map(|m| &m[r * cols..(r + 1) * cols]);
            softmax_in_place(v.row_mut(r), allowed);
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        self.push(v, Op::LogSoftmaxRows(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols(), cols, "concat_rows widths");
            rows += m.rows();
            data.extend_from_slice(m.data());
        }
        self.push(
            Matrix::from_vec(rows, cols, data),
            Op::ConcatRows(parts.to_vec()),
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for &p in parts {
                let m = self.value(p);
                assert_eq!(m.rows(), rows, "concat_cols heights");
                out.row_mut(r)[c0..c0 + m.cols()].copy_from_slice(m.row(r));
                c0 += m.cols();
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn row(&mut self, a: Var, r: usize) -> Var {
        let v = Matrix::row_vector(self.value(a).row(r).to_vec());
        self.push(v, Op::Row(a, r))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut out = vec![0.0; m.cols()];
        for r in 0..m.rows() {
            for (o, x) in out.iter_mut().zip(m.row(r)) {
                *o += x;
            }
        }
        let n = m.rows() as f64;
        out.iter_mut().for_each(|x| *x /= n);
        self.push(Matrix::row_vector(out), Op::MeanRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::Sum(a))
    }

    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Var {
        let s = self.value(a).get(r, c);
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::Pick(a, r, c))
    }

    /// `out[i][j] = a[i] + b[j]` for column vectors `a` (n×1) and `b` (m×1).
    pub fn outer_sum(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols(), 1);
        assert_eq!(bv.cols(), 1);
        let mut out = Matrix::zeros(av.rows(), bv.rows());
        for i in 0..av.rows() {
            for j in 0..bv.rows() {
                out.set(i, j, av.get(i, 0) + bv.get(j, 0));
            }
        }
        self.push(out, Op::OuterSum(a, b))
    }

    /// Gated recurrent unit over the rows of `x` (n×d), starting from `h0`
    /// (1×H). `wx` is d×3H, `wh` is H×3H and `b` is 1×3H, with gate blocks
    /// ordered reset, update, candidate. Returns all hidden states (n×H).
    pub fn gru(&mut self, x: Var, h0: Var, wx: Var, wh: Var, b: Var) -> Var {
        let xv = self.value(x);
        let whv = self.value(wh);
        let hidden = self.value(h0).cols();
        assert_eq!(whv.shape(), (hidden, 3 * hidden), "gru wh shape");
        let n = xv.rows();
        let mut xp = xv.matmul(self.value(wx));
        let bv = self.value(b);
        for r in 0..n {
            for (o, bb) in xp.row_mut(r).iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        let mut saved = GruSaved {
            r: Matrix::zeros(n, hidden),
            z: Matrix::zeros(n, hidden),
            n: Matrix::zeros(n, hidden),
            hn: Matrix::zeros(n, hidden),
            h_prev: Matrix::zeros(n, hidden),
        };
        let mut out = Matrix::zeros(n, hidden);
        let mut h = self.value(h0).data().to_vec();
        for t in 0..n {
            let hp = Matrix::row_vector(h.clone()).matmul(whv);
            let xpr = xp.row(t);
            saved.h_prev.row_mut(t).copy_from_slice(&h);
            for j in 0..hidden {
                let r = sigmoid(xpr[j] + hp.data()[j]);
                let z = sigmoid(xpr[hidden + j] + hp.data()[hidden + j]);
                let hn = hp.data()[2 * hidden + j];
                let cand = (xpr[2 * hidden + j] + r * hn).tanh();
                saved.r.set(t, j, r);
                saved.z.set(t, j, z);
                saved.n.set(t, j, cand);
                saved.hn.set(t, j, hn);
                h[j] = (1.0 - z) * cand + z * h[j];
            }
            out.row_mut(t).copy_from_slice(&h);
        }
        self.push(
            out,
            Op::Gru {
                x,
                h0,
                wx,
                wh,
                b,
                saved: Box::new(saved),
            },
        )
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::from_vec(1, 1, vec![1.0]));

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        let mut params = Vec::new();
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if let Op::Param(id) = node.op {
                params.push((i, id));
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            let y = &node.value;
            match &node.op {
                Op::Leaf | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, g.matmul_bt(self.value(*b)));
                    acc(&mut grads, *b, self.value(*a).matmul_at(&g));
                }
                Op::MatMulBt(a, b) => {
                    acc(&mut grads, *a, g.matmul(self.value(*b)));
                    acc(&mut grads, *b, g.matmul_at(self.value(*a)));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, b) => {
                    let mut gb = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (o, x) in gb.iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, Matrix::row_vector(gb));
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Affine(a, k) => acc(&mut grads, *a, g.map(|x| k * x)),
                Op::Tanh(a) => acc(&mut grads, *a, g.zip_map(y, |g, y| g * (1.0 - y * y))),
                Op::Sigmoid(a) => acc(&mut grads, *a, g.zip_map(y, |g, y| g * y * (1.0 - y))),
                Op::LeakyRelu(a, slope) => {
                    let gx = g.zip_map(self.value(*a), |g, x| if x > 0.0 { g } else { slope * g });
                    acc(&mut grads, *a, gx);
                }
                Op::Elu(a) => {
                    let x = self.value(*a);
                    let mut gx = g.clone();
                    for (k, o) in gx.data_mut().iter_mut().enumerate() {
                        if x.data()[k] <= 0.0 {
                            *o *= y.data()[k] + 1.0;
                        }
                    }
                    acc(&mut grads, *a, gx);
                }
                Op::Exp(a) => acc(&mut grads, *a, g.zip_map(y, |g, y| g * y)),
                Op::SoftmaxRows(a) => {
                    let mut gx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                        for c in 0..y.cols() {
                            gx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    acc(&mut grads, *a, gx);
                }
                Op::LogSoftmaxRows(a) => {
                    let mut gx = g.clone();
                    for r in 0..y.rows() {
                        let total: f64 = g.row(r).iter().sum();
                        for c in 0..y.cols() {
                            gx.set(r, c, g.get(r, c) - y.get(r, c).exp() * total);
                        }
                    }
                    acc(&mut grads, *a, gx);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::ConcatRows(parts) => {
                    let mut r0 = 0;
                    for &p in parts {
                        let (rows, cols) = self.value(p).shape();
                        let data = g.data()[r0 * cols..(r0 + rows) * cols].to_vec();
                        acc(&mut grads, p, Matrix::from_vec(rows, cols, data));
                        r0 += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for &p in parts {
                        let (rows, cols) = self.value(p).shape();
                        let mut gp = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[c0..c0 + cols]);
                        }
                        acc(&mut grads, p, gp);
                        c0 += cols;
                    }
                }
                Op::Row(a, r) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut ga = Matrix::zeros(rows, cols);
                    ga.row_mut(*r).copy_from_slice(g.data());
                    acc(&mut grads, *a, ga);
                }
                Op::MeanRows(a) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut ga = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        for (o, x) in ga.row_mut(r).iter_mut().zip(g.data()) {
                            *o = x / rows as f64;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let (rows, cols) = self.value(*a).shape();
                    acc(
                        &mut grads,
                        *a,
                        Matrix::from_vec(rows, cols, vec![g.scalar(); rows * cols]),
                    );
                }
                Op::Pick(a, r, c) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut ga = Matrix::zeros(rows, cols);
                    ga.set(*r, *c, g.scalar());
                    acc(&mut grads, *a, ga);
                }
                Op::OuterSum(a, b) => {
                    let ga: Vec<f64> = (0..g.rows()).map(|i| g.row(i).iter().sum()).collect();
                    let mut gb = vec![0.0; g.cols()];
                    for i in 0..g.rows() {
                        for (o, x) in gb.iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                    let (na, nb) = (ga.len(), gb.len());
                    acc(&mut grads, *a, Matrix::from_vec(na, 1, ga));
                    acc(&mut grads, *b, Matrix::from_vec(nb, 1, gb));
                }
                Op::Gru {
                    x,
                    h0,
                    wx,
                    wh,
                    b,
                    saved,
                } => {
                    let (n, hidden) = y.shape();
                    let whv = self.value(*wh);
                    let mut dxp = Matrix::zeros(n, 3 * hidden);
                    let mut dhp = Matrix::zeros(n, 3 * hidden);
                    let mut dh_next = vec![0.0; hidden];
                    for t in (0..n).rev() {
                        let mut dh_prev = vec![0.0; hidden];
                        for j in 0..hidden {
                            let dh = g.get(t, j) + dh_next[j];
                            let (r, z) = (saved.r.get(t, j), saved.z.get(t, j));
                            let (cand, hn) = (saved.n.get(t, j), saved.hn.get(t, j));
                            let hprev = saved.h_prev.get(t, j);
                            let dcand = dh * (1.0 - z) * (1.0 - cand * cand);
                            let dz = dh * (hprev - cand) * z * (1.0 - z);
                            let dr = dcand * hn * r * (1.0 - r);
                            dh_prev[j] = dh * z;
                            dxp.set(t, j, dr);
                            dxp.set(t, hidden + j, dz);
                            dxp.set(t, 2 * hidden + j, dcand);
                            dhp.set(t, j, dr);
                            dhp.set(t, hidden + j, dz);
                            dhp.set(t, 2 * hidden + j, dcand * r);
                        }
                        let back = Matrix::row_vector(dhp.row(t).to_vec()).matmul_bt(whv);
                        for (o, x) in dh_prev.iter_mut().zip(back.data()) {
                            *o += x;
                        }
                        dh_next = dh_prev;
                    }
                    let mut gb = vec![0.0; 3 * hidden];
                    for t in 0..n {
                        for (o, x) in gb.iter_mut().zip(dxp.row(t)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *x, dxp.matmul_bt(self.value(*wx)));
                    acc(&mut grads, *wx, self.value(*x).matmul_at(&dxp));
                    acc(&mut grads, *wh, saved.h_prev.matmul_at(&dhp));
                    acc(&mut grads, *b, Matrix::row_vector(gb));
                    acc(&mut grads, *h0, Matrix::row_vector(dh_next));
                }
            }
            grads[i] = Some(g);
        }
        Gradients { grads, params }
    }
}
