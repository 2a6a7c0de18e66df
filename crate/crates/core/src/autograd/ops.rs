use super::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{matmul_raw, transpose_raw, Tensor};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

fn softmax_in_place(row: &mut [f64], mask: Option<&[bool]>) {
    let keep = |j: usize| mask.map_or(true, |m| m[j]);
    let max = row
        .iter()
        .enumerate()
        .filter(|(j, _)| keep(*j))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (j, v) in row.iter_mut().enumerate() {
        if keep(j) {
            *v = (*v - max).exp();
            sum += *v;
        } else {
            *v = 0.0;
        }
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    softmax_in_place(&mut out, None);
    out
}

impl Graph {
    fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn matrix_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::dim(op, other, &[0, 0])),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, p) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(Error::dim("matmul", self.shape(a), self.shape(b)));
        }
        let data = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, p);
        let value = Tensor::new(vec![m, p], data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul(a, b), needs))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.matrix_dims("transpose", a)?;
        let value = Tensor::new(vec![c, r], transpose_raw(self.value(a).data(), r, c))?;
        let needs = self.needs(a);
        Ok(self.push(value, Op::Transpose(a), needs))
    }

    /// Adds a length-d bias to every row of an m×d matrix.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (_, d) = self.matrix_dims("add_bias", x)?;
        if self.shape(b) != [d] {
            return Err(Error::dim("add_bias", self.shape(x), self.shape(b)));
        }
        let bias = self.value(b).data().to_vec();
        let xv = self.value(x);
        let data = xv
            .data()
            .chunks(d)
            .flat_map(|row| row.iter().zip(&bias).map(|(a, c)| a + c))
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let needs = self.needs(x) || self.needs(b);
        Ok(self.push(value, Op::AddBias(x, b), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("add", self.shape(a), self.shape(b)));
        }
        let av = self.value(a);
        let data = av
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), needs))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x * factor).collect();
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(a);
        self.push(value, Op::Scale(a, factor), needs)
    }

    /// Row-wise softmax over an m×n matrix. Masked entries (`false`) are
    /// excluded from the normalizer and come out exactly zero.
    pub fn masked_row_softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (m, n) = self.matrix_dims("masked_row_softmax", x)?;
        if let Some(mask) = mask {
            if mask.len() != m * n {
                return Err(Error::dim("masked_row_softmax", &[m, n], &[mask.len()]));
            }
            if let Some(i) = mask.chunks(n).position(|row| !row.contains(&true)) {
                return Err(Error::Degenerate(format!("row {i} is fully masked")));
            }
        }
        let mut data = self.value(x).data().to_vec();
        for (i, row) in data.chunks_mut(n).enumerate() {
            softmax_in_place(row, mask.map(|mk| &mk[i * n..(i + 1) * n]));
        }
        let value = Tensor::new(vec![m, n], data)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::MaskedSoftmax(x), needs))
    }

    /// Mean over the rows of an m×d matrix, giving a length-d vector.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (m, d) = self.matrix_dims("mean_rows", x)?;
        let mut out = vec![0.0; d];
        for row in self.value(x).data().chunks(d) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= m as f64);
        let needs = self.needs(x);
        Ok(self.push(Tensor::vector(out), Op::MeanRows(x), needs))
    }

    /// Mean over the rows whose mask entry is set.
    pub fn masked_mean(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let (m, d) = self.matrix_dims("masked_mean", x)?;
        if mask.len() != m {
            return Err(Error::dim("masked_mean", &[m, d], &[mask.len()]));
        }
        let count = mask.iter().filter(|&&b| b).count();
        if count == 0 {
            return Err(Error::Degenerate("masked_mean over an all-zero mask".into()));
        }
        let mut out = vec![0.0; d];
        for (row, _) in self
            .value(x)
            .data()
            .chunks(d)
            .zip(mask)
            .filter(|(_, &keep)| keep)
        {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= count as f64);
        let needs = self.needs(x);
        Ok(self.push(Tensor::vector(out), Op::MaskedMean(x, mask.to_vec()), needs))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v.tanh()).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(value, Op::Tanh(x), needs)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv
            .data()
            .iter()
            .map(|&v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_K * v * v * v)).tanh()))
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(value, Op::Gelu(x), needs)
    }

    /// Looks up rows of a V×d table.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.matrix_dims("gather_rows", table)?;
        if ids.is_empty() {
            return Err(Error::Input("gather_rows with no ids".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= v) {
            return Err(Error::Input(format!("id {bad} out of range for table of {v} rows")));
        }
        let tv = self.value(table);
        let data = ids.iter().flat_map(|&id| tv.row(id).iter().copied()).collect();
        let value = Tensor::new(vec![ids.len(), d], data)?;
        let needs = self.needs(table);
        Ok(self.push(value, Op::GatherRows(table, ids.to_vec()), needs))
    }

    /// `-log softmax(logits)[label]` for a logit vector.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rank() != 1 && lv.dims2().0 != 1 {
            return Err(Error::dim("softmax_cross_entropy", lv.shape(), &[2]));
        }
        if label >= lv.numel() {
            return Err(Error::Input(format!(
                "label {label} out of range for {} classes",
                lv.numel()
            )));
        }
        let probs = softmax(lv.data());
        let max = lv.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + lv.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - lv.data()[label];
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            },
            needs,
        ))
    }

    /// Per-row layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (m, d) = self.matrix_dims("layer_norm", x)?;
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(Error::dim("layer_norm", self.shape(x), self.shape(gain)));
        }
        let g = self.value(gain).data().to_vec();
        let b = self.value(bias).data().to_vec();
        let mut xhat = Vec::with_capacity(m * d);
        let mut inv_std = Vec::with_capacity(m);
        for row in self.value(x).data().chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            xhat.extend(row.iter().map(|v| (v - mean) * is));
        }
        let data = xhat
            .chunks(d)
            .flat_map(|row| row.iter().zip(&g).zip(&b).map(|((h, g), b)| h * g + b))
            .collect();
        let value = Tensor::new(vec![m, d], data)?;
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            needs,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.matrix_dims("slice_cols", x)?;
        if len == 0 || start + len > n {
            return Err(Error::dim("slice_cols", &[m, n], &[start, len]));
        }
        let data = self
            .value(x)
            .data()
            .chunks(n)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let value = Tensor::new(vec![m, len], data)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::SliceCols { x, start }, needs))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Input("concat_cols of nothing".into()))?;
        let (m, _) = self.matrix_dims("concat_cols", first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.matrix_dims("concat_cols", p)?;
            if r != m {
                return Err(Error::dim("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let value = Tensor::new(vec![m, total], data)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), needs))
    }

    /// Stacks equal-length vectors into a matrix, one per row.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = *rows
            .first()
            .ok_or_else(|| Error::Input("stack_rows of nothing".into()))?;
        let d = self.value(first).numel();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            if self.value(r).numel() != d {
                return Err(Error::dim("stack_rows", self.shape(first), self.shape(r)));
            }
            data.extend_from_slice(self.value(r).data());
        }
        let value = Tensor::new(vec![rows.len(), d], data)?;
        let needs = rows.iter().any(|&r| self.needs(r));
        Ok(self.push(value, Op::StackRows(rows.to_vec()), needs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshaped(shape)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Reshape(x), needs))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(total), Op::Sum(x), needs)
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], graph: &Graph, target: Var, delta: Vec<f64>) {
    if !graph.needs(target) {
        return;
    }
    match &mut grads[target.0] {
        Some(existing) => {
            for (e, d) in existing.iter_mut().zip(delta) {
                *e += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

/// Propagates the gradient `g` of node `i` to its inputs.
pub(super) fn backprop(graph: &Graph, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let node = &graph.nodes[i];
    let out = &node.value;
    match &node.op {
        Op::Leaf | Op::Param(_) => {}
        Op::MatMul(a, b) => {
            let (m, k) = graph.value(*a).dims2();
            let p = graph.value(*b).dims2().1;
            if graph.needs(*a) {
                let bt = transpose_raw(graph.value(*b).data(), k, p);
                accumulate(grads, graph, *a, matmul_raw(g, &bt, m, p, k));
            }
            if graph.needs(*b) {
                let at = transpose_raw(graph.value(*a).data(), m, k);
                accumulate(grads, graph, *b, matmul_raw(&at, g, k, m, p));
            }
        }
        Op::Transpose(a) => {
            let (r, c) = out.dims2();
            accumulate(grads, graph, *a, transpose_raw(g, r, c));
        }
        Op::AddBias(x, b) => {
            accumulate(grads, graph, *x, g.to_vec());
            if graph.needs(*b) {
                let d = graph.value(*b).numel();
                let mut gb = vec![0.0; d];
                for row in g.chunks(d) {
                    for (s, v) in gb.iter_mut().zip(row) {
                        *s += v;
                    }
                }
                accumulate(grads, graph, *b, gb);
            }
        }
        Op::Add(a, b) => {
            accumulate(grads, graph, *a, g.to_vec());
            accumulate(grads, graph, *b, g.to_vec());
        }
        Op::Scale(a, f) => accumulate(grads, graph, *a, g.iter().map(|v| v * f).collect()),
        Op::MaskedSoftmax(x) => {
            let n = out.dims2().1;
            let mut gx = Vec::with_capacity(g.len());
            for (yrow, grow) in out.data().chunks(n).zip(g.chunks(n)) {
                let dot: f64 = yrow.iter().zip(grow).map(|(y, g)| y * g).sum();
                gx.extend(yrow.iter().zip(grow).map(|(y, g)| y * (g - dot)));
            }
            accumulate(grads, graph, *x, gx);
        }
        Op::MeanRows(x) => {
            let (m, _) = graph.value(*x).dims2();
            let inv = 1.0 / m as f64;
            let gx = (0..m).flat_map(|_| g.iter().map(|v| v * inv)).collect();
            accumulate(grads, graph, *x, gx);
        }
        Op::MaskedMean(x, mask) => {
            let inv = 1.0 / mask.iter().filter(|&&b| b).count() as f64;
            let gx = mask
                .iter()
                .flat_map(|&keep| g.iter().map(move |v| if keep { v * inv } else { 0.0 }))
                .collect();
            accumulate(grads, graph, *x, gx);
        }
        Op::Tanh(x) => {
            let gx = out.data().iter().zip(g).map(|(y, g)| g * (1.0 - y * y)).collect();
            accumulate(grads, graph, *x, gx);
        }
        Op::Gelu(x) => {
            let gx = graph
                .value(*x)
                .data()
                .iter()
                .zip(g)
                .map(|(&v, g)| {
                    let t = (GELU_C * (v + GELU_K * v * v * v)).tanh();
                    let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * v * v);
                    g * (0.5 * (1.0 + t) + 0.5 * v * dt)
                })
                .collect();
            accumulate(grads, graph, *x, gx);
        }
        Op::GatherRows(table, ids) => {
            let tv = graph.value(*table);
            let d = tv.dims2().1;
            let mut gt = vec![0.0; tv.numel()];
            for (row, &id) in g.chunks(d).zip(ids) {
                for (t, v) in gt[id * d..(id + 1) * d].iter_mut().zip(row) {
                    *t += v;
                }
            }
            accumulate(grads, graph, *table, gt);
        }
        Op::Dropout(x, mask) => {
            accumulate(grads, graph, *x, g.iter().zip(mask).map(|(g, m)| g * m).collect());
        }
        Op::SoftmaxCrossEntropy {
            logits,
            label,
            probs,
        } => {
            let gx = probs
                .iter()
                .enumerate()
                .map(|(j, p)| g[0] * (p - if j == *label { 1.0 } else { 0.0 }))
                .collect();
            accumulate(grads, graph, *logits, gx);
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let d = out.dims2().1;
            let gv = graph.value(*gain).data();
            if graph.needs(*x) {
                let mut gx = Vec::with_capacity(g.len());
                for ((grow, hrow), is) in g.chunks(d).zip(xhat.chunks(d)).zip(inv_std) {
                    let gh: Vec<f64> = grow.iter().zip(gv).map(|(a, b)| a * b).collect();
                    let mean_gh = gh.iter().sum::<f64>() / d as f64;
                    let mean_ghh =
                        gh.iter().zip(hrow).map(|(a, h)| a * h).sum::<f64>() / d as f64;
                    gx.extend(
                        gh.iter()
                            .zip(hrow)
                            .map(|(a, h)| is * (a - mean_gh - h * mean_ghh)),
                    );
                }
                accumulate(grads, graph, *x, gx);
            }
            let mut ggain = vec![0.0; d];
            let mut gbias = vec![0.0; d];
            for (grow, hrow) in g.chunks(d).zip(xhat.chunks(d)) {
                for j in 0..d {
                    ggain[j] += grow[j] * hrow[j];
                    gbias[j] += grow[j];
                }
            }
            accumulate(grads, graph, *gain, ggain);
            accumulate(grads, graph, *bias, gbias);
        }
        Op::SliceCols { x, start } => {
            let (m, n) = graph.value(*x).dims2();
            let len = out.dims2().1;
            let mut gx = vec![0.0; m * n];
            for (r, grow) in g.chunks(len).enumerate() {
                gx[r * n + start..r * n + start + len].copy_from_slice(grow);
            }
            accumulate(grads, graph, *x, gx);
        }
        Op::ConcatCols(parts) => {
            let (m, total) = out.dims2();
            let mut offset = 0;
            for &p in parts {
                let w = graph.value(p).dims2().1;
                if graph.needs(p) {
                    let gp = (0..m)
                        .flat_map(|r| g[r * total + offset..r * total + offset + w].iter().copied())
                        .collect();
                    accumulate(grads, graph, p, gp);
                }
                offset += w;
            }
        }
        Op::StackRows(rows) => {
            let d = out.dims2().1;
            for (&r, grow) in rows.iter().zip(g.chunks(d)) {
                accumulate(grads, graph, r, grow.to_vec());
            }
        }
        Op::Reshape(x) => accumulate(grads, graph, *x, g.to_vec()),
        Op::Sum(x) => {
            let n = graph.value(*x).numel();
            accumulate(grads, graph, *x, vec![g[0]; n]);
        }
    }
}
