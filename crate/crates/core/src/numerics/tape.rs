//! Reverse-mode differentiation over [`Tensor2`] values.
//!
//! A [`Tape`] records every operation in evaluation order. Each operation
//! stores what its backward transform needs, and [`Tape::backward`] walks the
//! record in reverse accumulating adjoints. Layers build their forward pass
//! out of these operations, so every trainable path gets exact gradients.

use super::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    /// Adds a `1 × m` row to every row of an `n × m` matrix.
    AddRow(Var, Var),
    Scale(Var, f64),
    /// Elementwise product with a constant (dropout masks).
    MulConst(Var, Tensor2),
    Relu(Var),
    SoftmaxRows(Var),
    /// Row-wise log-softmax restricted to the entries where `mask` is true.
    /// Masked-out outputs are zero. Results below `floor` are clamped there
    /// and pass no gradient.
    LogSoftmaxRows {
        input: Var,
        mask: Option<Vec<bool>>,
        floor: f64,
    },
    MeanRows(Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    /// `x ⊙ c` with `c` an `n × 1` column broadcast across columns.
    MulColumn(Var, Var),
    L2NormalizeRows(Var, f64),
    /// `Σ w ⊙ a` as a `1 × 1` scalar.
    WeightedSum(Var, Tensor2),
}

struct Node {
    value: Tensor2,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints for every node of a tape, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor2>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor2> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor2> {
        self.grads[v.0].take()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor2, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.shape(), (1, 1));
        t.data()[0]
    }

    pub fn leaf(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows(), 1, "add_row expects a 1 x m row");
        assert_eq!(r.cols(), self.value(a).cols(), "add_row width mismatch");
        let mut v = self.value(a).clone();
        let r = r.data().to_vec();
        for i in 0..v.rows() {
            for (x, b) in v.row_mut(i).iter_mut().zip(&r) {
                *x += b;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn mul_const(&mut self, a: Var, c: Tensor2) -> Var {
        let v = self.value(a).zip_map(&c, |x, m| x * m);
        self.push(v, Op::MulConst(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = Tensor2::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            v.row_mut(i).copy_from_slice(&super::softmax(x.row(i)));
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var, mask: Option<Vec<bool>>, floor: f64) -> Var {
        let x = self.value(a);
        let (n, m) = x.shape();
        if let Some(mask) = &mask {
            assert_eq!(mask.len(), n * m, "log_softmax mask shape mismatch");
        }
        let mut v = Tensor2::zeros(n, m);
        for i in 0..n {
            let row = x.row(i);
            let keep = |j: usize| mask.as_ref().map_or(true, |mk| mk[i * m + j]);
            let mx = (0..m).filter(|&j| keep(j)).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
            if mx == f64::NEG_INFINITY {
                continue;
            }
            let lse = mx + (0..m).filter(|&j| keep(j)).map(|j| (row[j] - mx).exp()).sum::<f64>().ln();
            for j in (0..m).filter(|&j| keep(j)) {
                v[(i, j)] = (row[j] - lse).max(floor);
            }
        }
        self.push(
            v,
            Op::LogSoftmaxRows {
                input: a,
                mask,
                floor,
            },
        )
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = Tensor2::row_vector(&self.value(a).mean_rows());
        self.push(v, Op::MeanRows(a))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.rows(), "slice_rows out of range");
        let v = Tensor2::from_raw(len, x.cols(), x.data()[start * x.cols()..(start + len) * x.cols()].to_vec());
        self.push(v, Op::SliceRows(a, start))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Var {
        self.slice_rows(a, i, 1)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols(), "slice_cols out of range");
        let mut data = Vec::with_capacity(x.rows() * len);
        for r in x.iter_rows() {
            data.extend_from_slice(&r[start..start + len]);
        }
        let v = Tensor2::from_raw(x.rows(), len, data);
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let v = self.value(a).select_rows(&idx);
        self.push(v, Op::GatherRows(a, idx))
    }

    pub fn concat_rows(&mut self, parts: Vec<Var>) -> Var {
        let v = {
            let vals: Vec<&Tensor2> = parts.iter().map(|&p| self.value(p)).collect();
            Tensor2::vstack(&vals)
        };
        self.push(v, Op::ConcatRows(parts))
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut v = Tensor2::zeros(rows, cols);
        let mut off = 0;
        for &p in &parts {
            let x = self.value(p);
            assert_eq!(x.rows(), rows, "concat_cols row mismatch");
            for i in 0..rows {
                v.row_mut(i)[off..off + x.cols()].copy_from_slice(x.row(i));
            }
            off += x.cols();
        }
        self.push(v, Op::ConcatCols(parts))
    }

    pub fn mul_column(&mut self, x: Var, c: Var) -> Var {
        let cv = self.value(c);
        assert_eq!(cv.cols(), 1, "mul_column expects an n x 1 column");
        assert_eq!(cv.rows(), self.value(x).rows(), "mul_column row mismatch");
        let col = cv.data().to_vec();
        let mut v = self.value(x).clone();
        for (i, &s) in col.iter().enumerate() {
            v.row_mut(i).iter_mut().for_each(|e| *e *= s);
        }
        self.push(v, Op::MulColumn(x, c))
    }

    pub fn l2_normalize_rows(&mut self, a: Var, eps: f64) -> Var {
        let x = self.value(a);
        let mut v = Tensor2::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            v.row_mut(i).copy_from_slice(&super::l2_normalize(x.row(i), eps));
        }
        self.push(v, Op::L2NormalizeRows(a, eps))
    }

    pub fn weighted_sum(&mut self, a: Var, w: Tensor2) -> Var {
        let s = super::dot(self.value(a).data(), w.data());
        assert_eq!(self.value(a).shape(), w.shape(), "weighted_sum shape mismatch");
        self.push(Tensor2::scalar(s), Op::WeightedSum(a, w))
    }

    /// Sum of several `1 × 1` scalars.
    pub fn sum_scalars(&mut self, parts: &[Var]) -> Var {
        let mut acc = parts[0];
        for &p in &parts[1..] {
            acc = self.add(acc, p);
        }
        acc
    }

    /// Adjoints of every node with respect to the scalar `output`.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).shape(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor2>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor2::scalar(1.0));

        fn acc(grads: &mut [Option<Tensor2>], v: Var, g: Tensor2) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.matmul(self.value(*b));
                    let gb = g.t_matmul(self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, r) => {
                    let gr = Tensor2::row_vector(&column_sums(&g));
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *r, gr);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g.scale(*c)),
                Op::MulConst(a, m) => acc(&mut grads, *a, g.zip_map(m, |x, y| x * y)),
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(*a), |gi, x| if x > 0.0 { gi } else { 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Tensor2::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let s = super::dot(g.row(i), y.row(i));
                        for j in 0..y.cols() {
                            ga[(i, j)] = y[(i, j)] * (g[(i, j)] - s);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::LogSoftmaxRows { input, mask, floor } => {
                    let y = &node.value;
                    let (n, m) = y.shape();
                    let mut ga = Tensor2::zeros(n, m);
                    for i in 0..n {
                        let keep = |j: usize| mask.as_ref().map_or(true, |mk| mk[i * m + j]);
                        // Clamped entries are constant, so their adjoint is dropped.
                        let live = |j: usize| keep(j) && y[(i, j)] > *floor;
                        let gsum: f64 = (0..m).filter(|&j| live(j)).map(|j| g[(i, j)]).sum();
                        let x = self.value(*input).row(i);
                        let mx = (0..m).filter(|&j| keep(j)).map(|j| x[j]).fold(f64::NEG_INFINITY, f64::max);
                        if mx == f64::NEG_INFINITY {
                            continue;
                        }
                        let z: f64 = (0..m).filter(|&j| keep(j)).map(|j| (x[j] - mx).exp()).sum();
                        for j in (0..m).filter(|&j| keep(j)) {
                            let p = (x[j] - mx).exp() / z;
                            let own = if live(j) { g[(i, j)] } else { 0.0 };
                            ga[(i, j)] = own - p * gsum;
                        }
                    }
                    acc(&mut grads, *input, ga);
                }
                Op::MeanRows(a) => {
                    let n = self.value(*a).rows();
                    let mut ga = Tensor2::zeros(n, g.cols());
                    for i in 0..n {
                        for (o, x) in ga.row_mut(i).iter_mut().zip(g.data()) {
                            *o = x / n as f64;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SliceRows(a, start) => {
                    let x = self.value(*a);
                    let mut ga = Tensor2::zeros(x.rows(), x.cols());
                    let c = x.cols();
                    ga.data_mut()[start * c..start * c + g.data().len()].copy_from_slice(g.data());
                    acc(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    let x = self.value(*a);
                    let mut ga = Tensor2::zeros(x.rows(), x.cols());
                    for i in 0..x.rows() {
                        ga.row_mut(i)[*start..start + g.cols()].copy_from_slice(g.row(i));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::GatherRows(a, idx) => {
                    let x = self.value(*a);
                    let mut ga = Tensor2::zeros(x.rows(), x.cols());
                    for (k, &i) in idx.iter().enumerate() {
                        for (o, v) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (r, c) = self.value(p).shape();
                        let gp = Tensor2::from_raw(r, c, g.data()[off * c..(off + r) * c].to_vec());
                        acc(&mut grads, p, gp);
                        off += r;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (r, c) = self.value(p).shape();
                        let mut gp = Tensor2::zeros(r, c);
                        for i in 0..r {
                            gp.row_mut(i).copy_from_slice(&g.row(i)[off..off + c]);
                        }
                        acc(&mut grads, p, gp);
                        off += c;
                    }
                }
                Op::MulColumn(x, c) => {
                    let xv = self.value(*x);
                    let cv = self.value(*c);
                    let mut gx = g.clone();
                    let mut gc = Tensor2::zeros(cv.rows(), 1);
                    for i in 0..xv.rows() {
                        let s = cv[(i, 0)];
                        gc[(i, 0)] = super::dot(g.row(i), xv.row(i));
                        gx.row_mut(i).iter_mut().for_each(|e| *e *= s);
                    }
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *c, gc);
                }
                Op::L2NormalizeRows(a, eps) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let mut ga = Tensor2::zeros(x.rows(), x.cols());
                    for i in 0..x.rows() {
                        let n = super::norm(x.row(i));
                        if n <= *eps {
                            continue;
                        }
                        let yg = super::dot(y.row(i), g.row(i));
                        for j in 0..x.cols() {
                            ga[(i, j)] = (g[(i, j)] - y[(i, j)] * yg) / n;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::WeightedSum(a, w) => {
                    let s = g.data()[0];
                    acc(&mut grads, *a, w.scale(s));
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }
}

fn column_sums(g: &Tensor2) -> Vec<f64> {
    let mut out = vec![0.0; g.cols()];
    for r in g.iter_rows() {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    out
}
