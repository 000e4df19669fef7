//! Reverse-mode automatic differentiation over row-major `f64` matrices.
//!
//! A [`Tape`] records every intermediate of one forward pass. Parameter
//! leaves remember their offset in the flat parameter vector, so
//! [`Tape::backward`] accumulates straight into a gradient of the same layout.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Param { offset: usize },
    Const,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulBt(Var, Var),
    Add(Var, Var),
    /// `a + 1·bᵀ` for a row vector `b`.
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Softmax(Var),
    LogSoftmax(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    /// `out[t] = x[t + offset]`, zero outside the range.
    ShiftRows { x: Var, offset: isize },
    /// `out[t·n + i] = Σ_j a[i, j] · h[t·n + j]` over blocks of `n` rows.
    BlockMix { a: Var, h: Var },
    GatherRows { table: Var, ids: Vec<usize> },
    /// Scalar `Σ_i x[i, cols[i]]`.
    PickSum { x: Var, cols: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-5;

fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, bv) in row.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                *o += av * bv;
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
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

    /// Drops every node recorded after the first `len`.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, params: &[f64], offset: usize, rows: usize, cols: usize) -> Var {
        let value = params[offset..offset + rows * cols].to_vec();
        self.push(rows, cols, value, Op::Param { offset })
    }

    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        self.push(rows, cols, value, Op::Const)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dims");
        let value = matmul(self.value(a), self.value(b), n, k, m);
        self.push(n, m, value, Op::MatMul(a, b))
    }

    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (m, k2) = self.shape(b);
        assert_eq!(k, k2, "matmul_bt inner dims");
        let (av, bv) = (self.value(a), self.value(b));
        let mut value = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                value[i * m + j] = dot(&av[i * k..(i + 1) * k], &bv[j * k..(j + 1) * k]);
            }
        }
        self.push(n, m, value, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shapes");
        let (r, c) = self.shape(a);
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        self.push(r, c, value, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(b), (1, c), "add_row shapes");
        let bv = self.value(b);
        let value = self
            .value(a)
            .chunks(c)
            .flat_map(|row| row.iter().zip(bv).map(|(x, y)| x + y))
            .collect();
        self.push(r, c, value, Op::AddRow(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let (r, c) = self.shape(a);
        let value = self.value(a).iter().map(|x| x * s).collect();
        self.push(r, c, value, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let value = self.value(a).iter().map(|x| x.max(0.0)).collect();
        self.push(r, c, value, Op::Relu(a))
    }

    /// Row-wise layer normalization with learned gain and bias rows.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (r, c) = self.shape(x);
        assert_eq!(self.shape(gain), (1, c));
        assert_eq!(self.shape(bias), (1, c));
        let (xv, g, b) = (self.value(x), self.value(gain), self.value(bias));
        let mut xhat = Vec::with_capacity(r * c);
        let mut rstd = Vec::with_capacity(r);
        let mut value = Vec::with_capacity(r * c);
        for row in xv.chunks(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let s = 1.0 / (var + LN_EPS).sqrt();
            rstd.push(s);
            for (j, v) in row.iter().enumerate() {
                let h = (v - mean) * s;
                xhat.push(h);
                value.push(h * g[j] + b[j]);
            }
        }
        self.push(
            r,
            c,
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        )
    }

    /// Row-wise softmax. With `causal`, entry `(i, j)` for `j > i` is
    /// excluded and gets probability exactly zero.
    pub fn softmax(&mut self, x: Var, causal: bool) -> Var {
        let (r, c) = self.shape(x);
        let xv = self.value(x);
        let mut value = vec![0.0; r * c];
        for i in 0..r {
            let live = if causal { (i + 1).min(c) } else { c };
            let row = &xv[i * c..i * c + live];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = &mut value[i * c..i * c + live];
            let mut z = 0.0;
            for (o, v) in out.iter_mut().zip(row) {
                *o = (v - max).exp();
                z += *o;
            }
            for o in out.iter_mut() {
                *o /= z;
            }
        }
        self.push(r, c, value, Op::Softmax(x))
    }

    /// Row-wise log-softmax via logsumexp.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let value = self
            .value(x)
            .chunks(c)
            .flat_map(|row| {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                row.iter().map(move |v| v - lse)
            })
            .collect();
        self.push(r, c, value, Op::LogSoftmax(x))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Var {
        let (r, c) = self.shape(x);
        assert!(start + width <= c);
        let value = self
            .value(x)
            .chunks(c)
            .flat_map(|row| row[start..start + width].iter().copied())
            .collect();
        self.push(r, width, value, Op::SliceCols { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let r = self.shape(parts[0]).0;
        assert!(parts.iter().all(|&p| self.shape(p).0 == r));
        let c: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut value = Vec::with_capacity(r * c);
        for i in 0..r {
            for &p in parts {
                let pc = self.shape(p).1;
                value.extend_from_slice(&self.value(p)[i * pc..(i + 1) * pc]);
            }
        }
        self.push(r, c, value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let c = self.shape(parts[0]).1;
        assert!(parts.iter().all(|&p| self.shape(p).1 == c));
        let r: usize = parts.iter().map(|&p| self.shape(p).0).sum();
        let mut value = Vec::with_capacity(r * c);
        for &p in parts {
            value.extend_from_slice(self.value(p));
        }
        self.push(r, c, value, Op::ConcatRows(parts.to_vec()))
    }

    /// Same row-major data under a new shape.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let (r, c) = self.shape(x);
        assert_eq!(r * c, rows * cols);
        let value = self.value(x).to_vec();
        self.push(rows, cols, value, Op::Reshape(x))
    }

    pub fn shift_rows(&mut self, x: Var, offset: isize) -> Var {
        let (r, c) = self.shape(x);
        let xv = self.value(x);
        let mut value = vec![0.0; r * c];
        for t in 0..r {
            let src = t as isize + offset;
            if (0..r as isize).contains(&src) {
                let s = src as usize;
                value[t * c..(t + 1) * c].copy_from_slice(&xv[s * c..(s + 1) * c]);
            }
        }
        self.push(r, c, value, Op::ShiftRows { x, offset })
    }

    /// Mixes rows within consecutive blocks of `n` rows by the `n × n`
    /// matrix `a`.
    pub fn block_mix(&mut self, a: Var, h: Var) -> Var {
        let (n, n2) = self.shape(a);
        assert_eq!(n, n2);
        let (r, c) = self.shape(h);
        assert_eq!(r % n, 0);
        let (av, hv) = (self.value(a), self.value(h));
        let mut value = vec![0.0; r * c];
        for t in 0..r / n {
            let base = t * n;
            let block = matmul(av, &hv[base * c..(base + n) * c], n, n, c);
            value[base * c..(base + n) * c].copy_from_slice(&block);
        }
        self.push(r, c, value, Op::BlockMix { a, h })
    }

    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let (r, c) = self.shape(table);
        let tv = self.value(table);
        let mut value = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            assert!(id < r, "row {id} out of range {r}");
            value.extend_from_slice(&tv[id * c..(id + 1) * c]);
        }
        self.push(
            ids.len(),
            c,
            value,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn pick_sum(&mut self, x: Var, cols: &[usize]) -> Var {
        let (r, c) = self.shape(x);
        assert_eq!(r, cols.len());
        let xv = self.value(x);
        let total = cols.iter().enumerate().map(|(i, &j)| xv[i * c + j]).sum();
        self.push(
            1,
            1,
            vec![total],
            Op::PickSum {
                x,
                cols: cols.to_vec(),
            },
        )
    }

    /// Accumulates `coef · ∂out/∂θ` into `grad`, where `out` must be a scalar.
    pub fn backward(&self, out: Var, coef: f64, grad: &mut [f64]) {
        assert_eq!(self.nodes[out.0].value.len(), 1, "backward needs a scalar");
        let mut g: Vec<Vec<f64>> = vec![Vec::new(); out.0 + 1];
        g[out.0] = vec![coef];
        for idx in (0..=out.0).rev() {
            if g[idx].is_empty() {
                continue;
            }
            let gy = std::mem::take(&mut g[idx]);
            let node = &self.nodes[idx];
            let (r, c) = (node.rows, node.cols);
            match &node.op {
                Op::Const => {}
                Op::Param { offset } => {
                    for (acc, v) in grad[*offset..offset + gy.len()].iter_mut().zip(&gy) {
                        *acc += v;
                    }
                }
                Op::MatMul(a, b) => {
                    let (_, k) = self.shape(*a);
                    let (av, bv) = (self.value(*a), self.value(*b));
                    // da = gy · bᵀ, db = aᵀ · gy
                    let ga = acc_buf(&mut g, *a, r * k);
                    for i in 0..r {
                        for p in 0..k {
                            ga[i * k + p] += dot(&gy[i * c..(i + 1) * c], &bv[p * c..(p + 1) * c]);
                        }
                    }
                    let gb = acc_buf(&mut g, *b, k * c);
                    for i in 0..r {
                        for p in 0..k {
                            let av_ip = av[i * k + p];
                            if av_ip == 0.0 {
                                continue;
                            }
                            for (o, gv) in gb[p * c..(p + 1) * c].iter_mut().zip(&gy[i * c..(i + 1) * c]) {
                                *o += av_ip * gv;
                            }
                        }
                    }
                }
                Op::MatMulBt(a, b) => {
                    let (_, k) = self.shape(*a);
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = acc_buf(&mut g, *a, r * k);
                    for i in 0..r {
                        for j in 0..c {
                            let w = gy[i * c + j];
                            for (o, x) in ga[i * k..(i + 1) * k].iter_mut().zip(&bv[j * k..(j + 1) * k]) {
                                *o += w * x;
                            }
                        }
                    }
                    let gb = acc_buf(&mut g, *b, c * k);
                    for i in 0..r {
                        for j in 0..c {
                            let w = gy[i * c + j];
                            for (o, x) in gb[j * k..(j + 1) * k].iter_mut().zip(&av[i * k..(i + 1) * k]) {
                                *o += w * x;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc_buf(&mut g, *a, r * c), &gy);
                    add_into(acc_buf(&mut g, *b, r * c), &gy);
                }
                Op::AddRow(a, b) => {
                    add_into(acc_buf(&mut g, *a, r * c), &gy);
                    let gb = acc_buf(&mut g, *b, c);
                    for row in gy.chunks(c) {
                        add_into(gb, row);
                    }
                }
                Op::Scale(a, s) => {
                    let ga = acc_buf(&mut g, *a, r * c);
                    for (o, v) in ga.iter_mut().zip(&gy) {
                        *o += s * v;
                    }
                }
                Op::Relu(a) => {
                    let av = self.value(*a);
                    let ga = acc_buf(&mut g, *a, r * c);
                    for ((o, v), x) in ga.iter_mut().zip(&gy).zip(av) {
                        if *x > 0.0 {
                            *o += v;
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let gv = self.value(*gain).to_vec();
                    {
                        let gg = acc_buf(&mut g, *gain, c);
                        for (row_g, row_h) in gy.chunks(c).zip(xhat.chunks(c)) {
                            for j in 0..c {
                                gg[j] += row_g[j] * row_h[j];
                            }
                        }
                    }
                    {
                        let gb = acc_buf(&mut g, *bias, c);
                        for row in gy.chunks(c) {
                            add_into(gb, row);
                        }
                    }
                    let gx = acc_buf(&mut g, *x, r * c);
                    for i in 0..r {
                        let row_g = &gy[i * c..(i + 1) * c];
                        let row_h = &xhat[i * c..(i + 1) * c];
                        let dh: Vec<f64> = row_g.iter().zip(&gv).map(|(a, b)| a * b).collect();
                        let m1 = dh.iter().sum::<f64>() / c as f64;
                        let m2 = dot(&dh, row_h) / c as f64;
                        for j in 0..c {
                            gx[i * c + j] += rstd[i] * (dh[j] - m1 - row_h[j] * m2);
                        }
                    }
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let gx = acc_buf(&mut g, *x, r * c);
                    for i in 0..r {
                        let yr = &y[i * c..(i + 1) * c];
                        let gr = &gy[i * c..(i + 1) * c];
                        let s = dot(yr, gr);
                        for j in 0..c {
                            gx[i * c + j] += yr[j] * (gr[j] - s);
                        }
                    }
                }
                Op::LogSoftmax(x) => {
                    let y = &node.value;
                    let gx = acc_buf(&mut g, *x, r * c);
                    for i in 0..r {
                        let gr = &gy[i * c..(i + 1) * c];
                        let s: f64 = gr.iter().sum();
                        for j in 0..c {
                            gx[i * c + j] += gr[j] - y[i * c + j].exp() * s;
                        }
                    }
                }
                Op::SliceCols { x, start } => {
                    let (_, xc) = self.shape(*x);
                    let gx = acc_buf(&mut g, *x, r * xc);
                    for i in 0..r {
                        add_into(&mut gx[i * xc + start..i * xc + start + c], &gy[i * c..(i + 1) * c]);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pc = self.shape(p).1;
                        let gp = acc_buf(&mut g, p, r * pc);
                        for i in 0..r {
                            add_into(&mut gp[i * pc..(i + 1) * pc], &gy[i * c + off..i * c + off + pc]);
                        }
                        off += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.nodes[p.0].value.len();
                        add_into(acc_buf(&mut g, p, n), &gy[off..off + n]);
                        off += n;
                    }
                }
                Op::Reshape(x) => {
                    add_into(acc_buf(&mut g, *x, r * c), &gy);
                }
                Op::ShiftRows { x, offset } => {
                    let gx = acc_buf(&mut g, *x, r * c);
                    for t in 0..r {
                        let src = t as isize + offset;
                        if (0..r as isize).contains(&src) {
                            let s = src as usize;
                            add_into(&mut gx[s * c..(s + 1) * c], &gy[t * c..(t + 1) * c]);
                        }
                    }
                }
                Op::BlockMix { a, h } => {
                    let n = self.shape(*a).0;
                    let (av, hv) = (self.value(*a), self.value(*h));
                    let ga = acc_buf(&mut g, *a, n * n);
                    for t in 0..r / n {
                        let base = t * n;
                        for i in 0..n {
                            let gr = &gy[(base + i) * c..(base + i + 1) * c];
                            for j in 0..n {
                                ga[i * n + j] += dot(gr, &hv[(base + j) * c..(base + j + 1) * c]);
                            }
                        }
                    }
                    let gh = acc_buf(&mut g, *h, r * c);
                    for t in 0..r / n {
                        let base = t * n;
                        for i in 0..n {
                            for j in 0..n {
                                let w = av[i * n + j];
                                for k in 0..c {
                                    gh[(base + j) * c + k] += w * gy[(base + i) * c + k];
                                }
                            }
                        }
                    }
                }
                Op::GatherRows { table, ids } => {
                    let n = self.nodes[table.0].value.len();
                    let gt = acc_buf(&mut g, *table, n);
                    for (i, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * c..(id + 1) * c], &gy[i * c..(i + 1) * c]);
                    }
                }
                Op::PickSum { x, cols } => {
                    let (xr, xc) = self.shape(*x);
                    let gx = acc_buf(&mut g, *x, xr * xc);
                    for (i, &j) in cols.iter().enumerate() {
                        gx[i * xc + j] += gy[0];
                    }
                }
            }
        }
    }
}

fn acc_buf(g: &mut [Vec<f64>], v: Var, len: usize) -> &mut [f64] {
    let buf = &mut g[v.0];
    if buf.is_empty() {
        *buf = vec![0.0; len];
    }
    buf
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
