use super::tensor::{gemm, Matrix};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Index of a trainable tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    /// Whether weight decay applies (weights yes, biases no).
    pub decay: bool,
}

/// Flat registry of every trainable tensor of a model.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix, decay: bool) -> ParamId {
        self.params.push(Param { name: name.into(), value, decay });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of scalar weights.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    /// `x * w^T + b` with `w` stored `out x in`.
    Affine { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Sub(Var, Var),
    /// Elementwise product of two tape values.
    Mul(Var, Var),
    Tanh(Var),
    Relu(Var),
    /// Row `r` multiplied by `scale[r]`.
    ScaleRows { x: Var, scale: Vec<f64> },
    /// Elementwise product with a constant of the same shape.
    MulConst { x: Var, c: Matrix },
    AddScalar(Var),
    Concat(Vec<Var>),
    SliceCols { x: Var, start: usize },
    GatherRows { x: Var, idx: Vec<usize> },
    ScatterRows { base: Var, idx: Vec<usize>, rows: Var },
    /// Row-wise radial clipping; `factor[r] = min(1, gamma / |x_r|)`.
    BoundedRows { x: Var, gamma: f64, factor: Vec<f64> },
    RowNorm(Var),
    Square(Var),
    WeightedSum { x: Var, w: Matrix },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
}

/// Append-only record of a forward computation.
///
/// Parents always precede children, so the reverse pass is a single sweep
/// over the nodes in reverse insertion order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
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

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Leaf for a trainable tensor. Repeated calls return the same node.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        if self.param_vars.len() < params.len() {
            self.param_vars.resize(params.len(), None);
        }
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let v = self.push(Op::Param, params.value(id).clone());
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xr, xc) = self.value(x).shape();
        let (wr, wc) = self.value(w).shape();
        if xc != wc {
            return Err(Error::config(format!(
                "affine input width {xc} does not match weight input width {wc}"
            )));
        }
        let mut out = Matrix::zeros(xr, wr);
        if let Some(b) = b {
            let bias = self.value(b);
            if bias.len() != wr {
                return Err(Error::config(format!(
                    "bias length {} does not match output width {wr}",
                    bias.len()
                )));
            }
            for r in 0..xr {
                out.row_mut(r).copy_from_slice(bias.as_slice());
            }
        }
        gemm(1.0, self.value(x), false, self.value(w), true, 1.0, &mut out);
        Ok(self.push(Op::Affine { x, w, b }, out))
    }

    fn check_same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::usage(format!(
                "{what}: shape mismatch {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "sub")?;
        let mut out = self.value(a).clone();
        for (o, v) in out.as_mut_slice().iter_mut().zip(self.value(b).as_slice()) {
            *o -= v;
        }
        Ok(self.push(Op::Sub(a, b), out))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "mul")?;
        let mut out = self.value(a).clone();
        for (o, v) in out.as_mut_slice().iter_mut().zip(self.value(b).as_slice()) {
            *o *= v;
        }
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
        self.push(Op::Tanh(x), out)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(Op::Relu(x), out)
    }

    pub fn scale_rows(&mut self, x: Var, scale: Vec<f64>) -> Result<Var> {
        let (rows, cols) = self.value(x).shape();
        if scale.len() != rows {
            return Err(Error::usage("scale_rows: one factor per row required"));
        }
        let mut out = self.value(x).clone();
        for (r, s) in scale.iter().enumerate() {
            out.as_mut_slice()[r * cols..(r + 1) * cols].iter_mut().for_each(|v| *v *= s);
        }
        Ok(self.push(Op::ScaleRows { x, scale }, out))
    }

    pub fn mul_const(&mut self, x: Var, c: Matrix) -> Result<Var> {
        if self.value(x).shape() != c.shape() {
            return Err(Error::usage("mul_const: shape mismatch"));
        }
        let mut out = self.value(x).clone();
        for (o, v) in out.as_mut_slice().iter_mut().zip(c.as_slice()) {
            *o *= v;
        }
        Ok(self.push(Op::MulConst { x, c }, out))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let mut out = self.value(x).clone();
        out.as_mut_slice().iter_mut().for_each(|v| *v += c);
        self.push(Op::AddScalar(x), out)
    }

    /// Column-wise concatenation of equally tall blocks.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map(|p| self.value(*p).rows()).unwrap_or(0);
        if parts.iter().any(|p| self.value(*p).rows() != rows) {
            return Err(Error::usage("concat: row counts differ"));
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let src = self.value(*p).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(Op::Concat(parts.to_vec()), out))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.value(x).shape();
        if start + len > cols {
            return Err(Error::usage("slice_cols: out of range"));
        }
        let mut out = Matrix::zeros(rows, len);
        for r in 0..rows {
            out.row_mut(r).copy_from_slice(&self.value(x).row(r)[start..start + len]);
        }
        Ok(self.push(Op::SliceCols { x, start }, out))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Vec<usize>) -> Result<Var> {
        let (rows, cols) = self.value(x).shape();
        if idx.iter().any(|&i| i >= rows) {
            return Err(Error::usage("gather_rows: index out of range"));
        }
        let mut out = Matrix::zeros(idx.len(), cols);
        for (k, &i) in idx.iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.value(x).row(i));
        }
        Ok(self.push(Op::GatherRows { x, idx }, out))
    }

    /// Copy of `base` with rows `idx[k]` replaced by row `k` of `rows`.
    pub fn scatter_rows(&mut self, base: Var, idx: Vec<usize>, rows: Var) -> Result<Var> {
        let (br, bc) = self.value(base).shape();
        let (rr, rc) = self.value(rows).shape();
        if bc != rc || rr != idx.len() || idx.iter().any(|&i| i >= br) {
            return Err(Error::usage("scatter_rows: incompatible shapes"));
        }
        let mut out = self.value(base).clone();
        for (k, &i) in idx.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.value(rows).row(k));
        }
        Ok(self.push(Op::ScatterRows { base, idx, rows }, out))
    }

    /// Applies `x -> x * min(1, gamma / |x|_2)` to every row.
    pub fn bounded_rows(&mut self, x: Var, gamma: f64) -> Result<Var> {
        if !(gamma > 0.0) {
            return Err(Error::config(format!("output bound must be positive, got {gamma}")));
        }
        let (rows, _) = self.value(x).shape();
        let mut out = self.value(x).clone();
        let mut factor = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = out.row_mut(r);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let f = if norm > gamma { gamma / norm } else { 1.0 };
            row.iter_mut().for_each(|v| *v *= f);
            factor.push(f);
        }
        Ok(self.push(Op::BoundedRows { x, gamma, factor }, out))
    }

    /// Euclidean norm of every row, as a column.
    pub fn row_norm(&mut self, x: Var) -> Var {
        let m = self.value(x);
        let out: Vec<f64> = (0..m.rows())
            .map(|r| m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let rows = out.len();
        self.push(Op::RowNorm(x), Matrix::from_vec(rows, 1, out))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.as_mut_slice().iter_mut().for_each(|v| *v *= *v);
        self.push(Op::Square(x), out)
    }

    /// `sum_ij w_ij x_ij` as a `1 x 1` node.
    pub fn weighted_sum(&mut self, x: Var, w: Matrix) -> Result<Var> {
        if self.value(x).shape() != w.shape() {
            return Err(Error::usage("weighted_sum: weight shape mismatch"));
        }
        let s = self.value(x).as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum();
        Ok(self.push(Op::WeightedSum { x, w }, Matrix::scalar(s)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let (r, c) = self.value(x).shape();
        self.weighted_sum(x, Matrix::filled(r, c, 1.0)).expect("shapes agree by construction")
    }

    /// Reverse sweep from a scalar node.
    ///
    /// Adjoints of intermediate nodes are released as soon as they have been
    /// propagated; leaves and parameters keep theirs.
    pub fn backward(&self, seed: Var) -> Result<Gradients> {
        if self.value(seed).shape() != (1, 1) {
            return Err(Error::usage(format!(
                "backward seed must be scalar, got shape {:?}",
                self.value(seed).shape()
            )));
        }
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[seed.0] = Some(Matrix::scalar(1.0));
        for i in (0..=seed.0).rev() {
            let keep = matches!(self.nodes[i].op, Op::Leaf | Op::Param);
            let g = if keep { adj[i].clone() } else { adj[i].take() };
            let Some(g) = g else { continue };
            self.propagate(i, &g, &mut adj);
        }
        let params = self
            .param_vars
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (ParamId(i), v)))
            .collect();
        Ok(Gradients { adjoints: adj, params })
    }

    fn propagate(&self, i: usize, g: &Matrix, adj: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let acc = |adj: &mut [Option<Matrix>], v: Var, delta: Matrix| match &mut adj[v.0] {
            Some(a) => a.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        };
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Affine { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                gemm(1.0, g, false, wv, false, 0.0, &mut dx);
                let mut dw = Matrix::zeros(wv.rows(), wv.cols());
                gemm(1.0, g, true, xv, false, 0.0, &mut dw);
                if let Some(b) = b {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, v) in db.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    let (br, bc) = self.value(*b).shape();
                    acc(adj, *b, Matrix::from_vec(br, bc, db.into_vec()));
                }
                acc(adj, *x, dx);
                acc(adj, *w, dw);
            }
            Op::Add(a, b) => {
                acc(adj, *a, g.clone());
                acc(adj, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(adj, *a, g.clone());
                let mut n = g.clone();
                n.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
                acc(adj, *b, n);
            }
            Op::Mul(a, b) => {
                let mut da = g.clone();
                for (d, v) in da.as_mut_slice().iter_mut().zip(self.value(*b).as_slice()) {
                    *d *= v;
                }
                let mut db = g.clone();
                for (d, v) in db.as_mut_slice().iter_mut().zip(self.value(*a).as_slice()) {
                    *d *= v;
                }
                acc(adj, *a, da);
                acc(adj, *b, db);
            }
            Op::Tanh(x) => {
                let mut d = g.clone();
                for (d, y) in d.as_mut_slice().iter_mut().zip(node.value.as_slice()) {
                    *d *= 1.0 - y * y;
                }
                acc(adj, *x, d);
            }
            Op::Relu(x) => {
                let mut d = g.clone();
                for (d, xv) in d.as_mut_slice().iter_mut().zip(self.value(*x).as_slice()) {
                    if *xv <= 0.0 {
                        *d = 0.0;
                    }
                }
                acc(adj, *x, d);
            }
            Op::ScaleRows { x, scale } => {
                let mut d = g.clone();
                let cols = d.cols();
                for (r, s) in scale.iter().enumerate() {
                    d.as_mut_slice()[r * cols..(r + 1) * cols].iter_mut().for_each(|v| *v *= s);
                }
                acc(adj, *x, d);
            }
            Op::MulConst { x, c } => {
                let mut d = g.clone();
                for (d, v) in d.as_mut_slice().iter_mut().zip(c.as_slice()) {
                    *d *= v;
                }
                acc(adj, *x, d);
            }
            Op::AddScalar(x) => acc(adj, *x, g.clone()),
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let (rows, cols) = self.value(*p).shape();
                    let mut d = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        d.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                    }
                    off += cols;
                    acc(adj, *p, d);
                }
            }
            Op::SliceCols { x, start } => {
                let (rows, cols) = self.value(*x).shape();
                let mut d = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    d.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(adj, *x, d);
            }
            Op::GatherRows { x, idx } => {
                let (rows, cols) = self.value(*x).shape();
                let mut d = Matrix::zeros(rows, cols);
                for (k, &i) in idx.iter().enumerate() {
                    for (dv, gv) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                        *dv += gv;
                    }
                }
                acc(adj, *x, d);
            }
            Op::ScatterRows { base, idx, rows } => {
                let mut db = g.clone();
                let mut dr = Matrix::zeros(idx.len(), g.cols());
                for (k, &i) in idx.iter().enumerate() {
                    dr.row_mut(k).copy_from_slice(g.row(i));
                    db.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
                }
                acc(adj, *base, db);
                acc(adj, *rows, dr);
            }
            Op::BoundedRows { x, gamma, factor } => {
                let xv = self.value(*x);
                let mut d = g.clone();
                for (r, f) in factor.iter().enumerate() {
                    if *f >= 1.0 {
                        continue;
                    }
                    // y = gamma x / |x|  =>  dx = (gamma/|x|) (g - x (x.g) / |x|^2)
                    let xr = xv.row(r);
                    let n2: f64 = xr.iter().map(|v| v * v).sum();
                    let dot: f64 = xr.iter().zip(g.row(r)).map(|(a, b)| a * b).sum();
                    let s = gamma / n2.sqrt();
                    for ((dv, xi), gi) in d.row_mut(r).iter_mut().zip(xr).zip(g.row(r)) {
                        *dv = s * (gi - xi * dot / n2);
                    }
                }
                acc(adj, *x, d);
            }
            Op::RowNorm(x) => {
                let xv = self.value(*x);
                let mut d = Matrix::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    let n = node.value.get(r, 0);
                    if n == 0.0 {
                        continue;
                    }
                    let gr = g.get(r, 0);
                    for (dv, xi) in d.row_mut(r).iter_mut().zip(xv.row(r)) {
                        *dv = gr * xi / n;
                    }
                }
                acc(adj, *x, d);
            }
            Op::Square(x) => {
                let mut d = g.clone();
                for (d, xv) in d.as_mut_slice().iter_mut().zip(self.value(*x).as_slice()) {
                    *d *= 2.0 * xv;
                }
                acc(adj, *x, d);
            }
            Op::WeightedSum { x, w } => {
                let s = g.as_slice()[0];
                let mut d = w.clone();
                d.as_mut_slice().iter_mut().for_each(|v| *v *= s);
                acc(adj, *x, d);
            }
        }
    }
}

/// Result of a reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Partial derivative of the seed with respect to a leaf or parameter
    /// node. Nodes without a path to the seed get a zero gradient.
    pub fn wrt(&self, v: Var, tape: &Tape) -> Matrix {
        match &self.adjoints[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = tape.value(v).shape();
                Matrix::zeros(r, c)
            }
        }
    }

    /// Gradient of every parameter registered on the tape, zero for
    /// parameters that were not touched.
    pub fn param_grads(&self, params: &ParamSet) -> Vec<Matrix> {
        let mut out: Vec<Matrix> = params
            .iter()
            .map(|(_, p)| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        for (id, v) in &self.params {
            if let Some(g) = &self.adjoints[v.0] {
                out[id.0] = g.clone();
            }
        }
        out
    }
}
