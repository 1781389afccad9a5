//! Differentiable operations. Each op computes its forward value eagerly
//! and records a closure producing the gradients of its parents.

use super::raw;
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

impl<T: Scalar> Tensor<T> {
    /// c = a * b for a: [M,K], b: [K,N].
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner dims disagree: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let a = self.data();
        let b = other.data();
        let c = raw::mm(&a, &b, m, k, n);
        Tensor::make_op(
            vec![m, n],
            c,
            vec![self.clone(), other.clone()],
            move |g| {
                let da = raw::mm_a_bt(g, &b, m, n, k);
                let db = raw::mm_at_b(&a, g, m, k, n);
                vec![da, db]
            },
            "matmul",
        )
    }

    /// c = a * b^T for a: [M,K], b: [N,K]. Used for attention scores.
    pub fn matmul_nt(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k) = self.dims2()?;
        let (n, k2) = other.dims2()?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul_nt inner dims disagree: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let a = self.data();
        let b = other.data();
        let c = raw::mm_a_bt(&a, &b, m, k, n);
        Tensor::make_op(
            vec![m, n],
            c,
            vec![self.clone(), other.clone()],
            move |g| {
                // dA = G * B ; dB = G^T * A
                let da = raw::mm(g, &b, m, n, k);
                let db = raw::mm_at_b(g, &a, m, n, k);
                vec![da, db]
            },
            "matmul_nt",
        )
    }

    /// Elementwise sum of same-shape tensors.
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "add shapes disagree: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let a = self.data();
        let b = other.data();
        let out: Vec<T> = a.iter().zip(&b).map(|(&x, &y)| x + y).collect();
        Tensor::make_op(
            self.shape(),
            out,
            vec![self.clone(), other.clone()],
            move |g| vec![g.to_vec(), g.to_vec()],
            "add",
        )
    }

    /// Elementwise product of same-shape tensors.
    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "mul shapes disagree: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let a = self.data();
        let b = other.data();
        let out: Vec<T> = a.iter().zip(&b).map(|(&x, &y)| x * y).collect();
        Tensor::make_op(
            self.shape(),
            out,
            vec![self.clone(), other.clone()],
            move |g| {
                let da: Vec<T> = g.iter().zip(&b).map(|(&gv, &bv)| gv * bv).collect();
                let db: Vec<T> = g.iter().zip(&a).map(|(&gv, &av)| gv * av).collect();
                vec![da, db]
            },
            "mul",
        )
    }

    /// Multiply by a constant scalar.
    pub fn scale(&self, s: T) -> Result<Tensor<T>> {
        let out: Vec<T> = self.data().iter().map(|&x| x * s).collect();
        Tensor::make_op(
            self.shape(),
            out,
            vec![self.clone()],
            move |g| vec![g.iter().map(|&gv| gv * s).collect()],
            "scale",
        )
    }

    /// x: [L,D] plus bias row b: [D], broadcast over rows.
    pub fn add_bias(&self, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let (l, d) = self.dims2()?;
        if bias.numel() != d {
            return Err(Error::Dimension(format!(
                "bias length {} does not match row width {}",
                bias.numel(),
                d
            )));
        }
        let x = self.data();
        let b = bias.data();
        let mut out = x.clone();
        for i in 0..l {
            for j in 0..d {
                out[i * d + j] = out[i * d + j] + b[j];
            }
        }
        Tensor::make_op(
            self.shape(),
            out,
            vec![self.clone(), bias.clone()],
            move |g| {
                let mut db = vec![T::zero(); d];
                for i in 0..l {
                    for j in 0..d {
                        db[j] = db[j] + g[i * d + j];
                    }
                }
                vec![g.to_vec(), db]
            },
            "add_bias",
        )
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum_all(&self) -> Result<Tensor<T>> {
        let s: T = self.data().into_iter().sum();
        let n = self.numel();
        Tensor::make_op(
            vec![1],
            vec![s],
            vec![self.clone()],
            move |g| vec![vec![g[0]; n]],
            "sum_all",
        )
    }

    /// Row-wise softmax, stabilized by per-row max subtraction.
    pub fn softmax_rows(&self) -> Result<Tensor<T>> {
        let (m, n) = self.dims2()?;
        let mut y = self.data();
        raw::softmax_rows_inplace(&mut y, m, n);
        let yc = y.clone();
        Tensor::make_op(
            self.shape(),
            y,
            vec![self.clone()],
            move |g| {
                let mut dx = vec![T::zero(); m * n];
                for i in 0..m {
                    let yr = &yc[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    let inner = raw::dot(gr, yr);
                    for j in 0..n {
                        dx[i * n + j] = yr[j] * (gr[j] - inner);
                    }
                }
                vec![dx]
            },
            "softmax_rows",
        )
    }

    /// Exponential linear unit: x for x >= 0, exp(x)-1 otherwise.
    pub fn elu(&self) -> Result<Tensor<T>> {
        let x = self.data();
        let out: Vec<T> = x
            .iter()
            .map(|&v| if v >= T::zero() { v } else { v.exp() - T::one() })
            .collect();
        Tensor::make_op(
            self.shape(),
            out,
            vec![self.clone()],
            move |g| {
                let dx: Vec<T> = g
                    .iter()
                    .zip(&x)
                    .map(|(&gv, &xv)| if xv >= T::zero() { gv } else { gv * xv.exp() })
                    .collect();
                vec![dx]
            },
            "elu",
        )
    }

    /// 1-D cross-correlation, kernel width 3, zero padding 1 on both ends.
    /// x: [L, C_in], kernel: [3, C_in, C_out] -> [L, C_out].
    pub fn conv1d(&self, kernel: &Tensor<T>) -> Result<Tensor<T>> {
        let (l, c_in) = self.dims2()?;
        let kshape = kernel.shape();
        if kshape.len() != 3 || kshape[0] != 3 {
            return Err(Error::Dimension(format!(
                "conv1d kernel must be [3, C_in, C_out], got {:?}",
                kshape
            )));
        }
        if kshape[1] != c_in {
            return Err(Error::Dimension(format!(
                "conv1d channel mismatch: input C_in {} vs kernel C_in {}",
                c_in, kshape[1]
            )));
        }
        let c_out = kshape[2];
        let x = self.data();
        let k = kernel.data();
        let mut y = vec![T::zero(); l * c_out];
        for dt in 0..3usize {
            // y[t] += x[t + dt - 1] * k[dt]; valid t range keeps x index in [0, l)
            let t0 = if dt == 0 { 1 } else { 0 };
            let t1 = if dt == 2 { l.saturating_sub(1) } else { l };
            if t0 >= t1 {
                continue;
            }
            let rows = t1 - t0;
            let x0 = t0 + dt - 1;
            let kdt = &k[dt * c_in * c_out..(dt + 1) * c_in * c_out];
            let block = raw::mm(&x[x0 * c_in..(x0 + rows) * c_in], kdt, rows, c_in, c_out);
            for (i, row) in block.chunks(c_out).enumerate() {
                let dst = &mut y[(t0 + i) * c_out..(t0 + i + 1) * c_out];
                for (d, &v) in dst.iter_mut().zip(row) {
                    *d = *d + v;
                }
            }
        }
        Tensor::make_op(
            vec![l, c_out],
            y,
            vec![self.clone(), kernel.clone()],
            move |g| {
                let mut dx = vec![T::zero(); l * c_in];
                let mut dk = vec![T::zero(); 3 * c_in * c_out];
                for dt in 0..3usize {
                    let t0 = if dt == 0 { 1 } else { 0 };
                    let t1 = if dt == 2 { l.saturating_sub(1) } else { l };
                    if t0 >= t1 {
                        continue;
                    }
                    let rows = t1 - t0;
                    let x0 = t0 + dt - 1;
                    let kdt = &k[dt * c_in * c_out..(dt + 1) * c_in * c_out];
                    let grows = &g[t0 * c_out..t1 * c_out];
                    // dx[x0..] += g_rows * kdt^T
                    let dxb = raw::mm_a_bt(grows, kdt, rows, c_out, c_in);
                    for (i, row) in dxb.chunks(c_in).enumerate() {
                        let dst = &mut dx[(x0 + i) * c_in..(x0 + i + 1) * c_in];
                        for (d, &v) in dst.iter_mut().zip(row) {
                            *d = *d + v;
                        }
                    }
                    // dk[dt] += x_rows^T * g_rows
                    let dkb = raw::mm_at_b(
                        &x[x0 * c_in..(x0 + rows) * c_in],
                        grows,
                        rows,
                        c_in,
                        c_out,
                    );
                    let dst = &mut dk[dt * c_in * c_out..(dt + 1) * c_in * c_out];
                    for (d, &v) in dst.iter_mut().zip(dkb.iter()) {
                        *d = *d + v;
                    }
                }
                vec![dx, dk]
            },
            "conv1d",
        )
    }

    /// Max pooling over the sequence axis: window 3, stride 2, edge windows
    /// truncated. x: [L, C] -> [ceil(L/2), C]. Gradient routes to the first
    /// maximal index of each window.
    pub fn maxpool1d(&self) -> Result<Tensor<T>> {
        let (l, c) = self.dims2()?;
        if l == 0 {
            return Err(Error::Dimension("maxpool1d on empty sequence".into()));
        }
        let out_len = l.div_ceil(2);
        let x = self.data();
        let mut y = vec![T::zero(); out_len * c];
        let mut argmax = vec![0usize; out_len * c];
        for o in 0..out_len {
            let lo = (2 * o).saturating_sub(1);
            let hi = (2 * o + 2).min(l);
            for j in 0..c {
                let mut best = x[lo * c + j];
                let mut best_t = lo;
                for t in lo + 1..hi {
                    if x[t * c + j] > best {
                        best = x[t * c + j];
                        best_t = t;
                    }
                }
                y[o * c + j] = best;
                argmax[o * c + j] = best_t;
            }
        }
        Tensor::make_op(
            vec![out_len, c],
            y,
            vec![self.clone()],
            move |g| {
                let mut dx = vec![T::zero(); l * c];
                for o in 0..out_len {
                    for j in 0..c {
                        let t = argmax[o * c + j];
                        dx[t * c + j] = dx[t * c + j] + g[o * c + j];
                    }
                }
                vec![dx]
            },
            "maxpool1d",
        )
    }

    /// Per-row layer normalization with affine parameters.
    /// x: [L,D], gamma/beta: [D]; eps = 1e-5 inside the square root.
    pub fn layer_norm(&self, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<Tensor<T>> {
        let (l, d) = self.dims2()?;
        if gamma.numel() != d || beta.numel() != d {
            return Err(Error::Dimension(format!(
                "layer_norm affine params must have length {}, got {} and {}",
                d,
                gamma.numel(),
                beta.numel()
            )));
        }
        let eps = T::from_f64_(1e-5);
        let x = self.data();
        let gm = gamma.data();
        let bt = beta.data();
        let inv_d = T::one() / T::from_f64_(d as f64);
        let mut y = vec![T::zero(); l * d];
        let mut xhat = vec![T::zero(); l * d];
        let mut inv_std = vec![T::zero(); l];
        for i in 0..l {
            let row = &x[i * d..(i + 1) * d];
            let mean: T = row.iter().cloned().sum::<T>() * inv_d;
            let var: T = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
            let s = T::one() / (var + eps).sqrt();
            inv_std[i] = s;
            for j in 0..d {
                let h = (row[j] - mean) * s;
                xhat[i * d + j] = h;
                y[i * d + j] = gm[j] * h + bt[j];
            }
        }
        Tensor::make_op(
            self.shape(),
            y,
            vec![self.clone(), gamma.clone(), beta.clone()],
            move |g| {
                let mut dx = vec![T::zero(); l * d];
                let mut dgm = vec![T::zero(); d];
                let mut dbt = vec![T::zero(); d];
                for i in 0..l {
                    let gr = &g[i * d..(i + 1) * d];
                    let hr = &xhat[i * d..(i + 1) * d];
                    let mut mean_dh = T::zero();
                    let mut mean_dh_h = T::zero();
                    for j in 0..d {
                        let dh = gr[j] * gm[j];
                        mean_dh = mean_dh + dh;
                        mean_dh_h = mean_dh_h + dh * hr[j];
                        dgm[j] = dgm[j] + gr[j] * hr[j];
                        dbt[j] = dbt[j] + gr[j];
                    }
                    mean_dh = mean_dh * inv_d;
                    mean_dh_h = mean_dh_h * inv_d;
                    for j in 0..d {
                        let dh = gr[j] * gm[j];
                        dx[i * d + j] = inv_std[i] * (dh - mean_dh - hr[j] * mean_dh_h);
                    }
                }
                vec![dx, dgm, dbt]
            },
            "layer_norm",
        )
    }

    /// Mean cross-entropy over the batch: logits [B,K], labels in [0,K).
    pub fn cross_entropy(&self, labels: &[usize]) -> Result<Tensor<T>> {
        let (b, k) = self.dims2()?;
        if labels.len() != b {
            return Err(Error::Dimension(format!(
                "cross_entropy: {} logit rows but {} labels",
                b,
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Index(format!(
                "cross_entropy label {bad} out of range [0, {k})"
            )));
        }
        let x = self.data();
        let inv_b = T::one() / T::from_f64_(b as f64);
        let mut probs = x.clone();
        raw::softmax_rows_inplace(&mut probs, b, k);
        let mut loss = T::zero();
        for (i, &label) in labels.iter().enumerate() {
            let row = &x[i * k..(i + 1) * k];
            let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
            let lse: T = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            loss = loss + (lse - row[label]);
        }
        loss = loss * inv_b;
        let labels = labels.to_vec();
        Tensor::make_op(
            vec![1],
            vec![loss],
            vec![self.clone()],
            move |g| {
                // d logits = (softmax - onehot) / B
                let mut dx = probs.clone();
                for (i, &label) in labels.iter().enumerate() {
                    dx[i * k + label] = dx[i * k + label] - T::one();
                }
                for v in dx.iter_mut() {
                    *v = *v * inv_b * g[0];
                }
                vec![dx]
            },
            "cross_entropy",
        )
    }

    /// Column means as a single row: [L,D] -> [1,D].
    pub fn mean_rows(&self) -> Result<Tensor<T>> {
        let (l, d) = self.dims2()?;
        if l == 0 {
            return Err(Error::Dimension("mean_rows on empty tensor".into()));
        }
        let x = self.data();
        let inv_l = T::one() / T::from_f64_(l as f64);
        let mut out = vec![T::zero(); d];
        for i in 0..l {
            for j in 0..d {
                out[j] = out[j] + x[i * d + j];
            }
        }
        for v in out.iter_mut() {
            *v = *v * inv_l;
        }
        Tensor::make_op(
            vec![1, d],
            out,
            vec![self.clone()],
            move |g| {
                let mut dx = vec![T::zero(); l * d];
                for i in 0..l {
                    for j in 0..d {
                        dx[i * d + j] = g[j] * inv_l;
                    }
                }
                vec![dx]
            },
            "mean_rows",
        )
    }

    /// Rows [r0, r1) of a 2-D tensor.
    pub fn slice_rows(&self, r0: usize, r1: usize) -> Result<Tensor<T>> {
        let (l, d) = self.dims2()?;
        if r0 > r1 || r1 > l {
            return Err(Error::Index(format!(
                "slice_rows {r0}..{r1} out of range for {l} rows"
            )));
        }
        let x = self.data();
        let out = x[r0 * d..r1 * d].to_vec();
        Tensor::make_op(
            vec![r1 - r0, d],
            out,
            vec![self.clone()],
            move |g| {
                let mut dx = vec![T::zero(); l * d];
                dx[r0 * d..r1 * d].copy_from_slice(g);
                vec![dx]
            },
            "slice_rows",
        )
    }

    /// Stack 2-D tensors with equal column counts on top of each other.
    pub fn concat_rows(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
        if parts.is_empty() {
            return Err(Error::Usage("concat_rows of nothing".into()));
        }
        let (_, d) = parts[0].dims2()?;
        let mut rows = 0usize;
        let mut data = Vec::new();
        let mut row_counts = Vec::new();
        for p in parts {
            let (l, dp) = p.dims2()?;
            if dp != d {
                return Err(Error::Dimension(format!(
                    "concat_rows column mismatch: {d} vs {dp}"
                )));
            }
            rows += l;
            row_counts.push(l);
            data.extend(p.data());
        }
        Tensor::make_op(
            vec![rows, d],
            data,
            parts.iter().map(|&p| p.clone()).collect(),
            move |g| {
                let mut out = Vec::with_capacity(row_counts.len());
                let mut off = 0usize;
                for &l in &row_counts {
                    out.push(g[off * d..(off + l) * d].to_vec());
                    off += l;
                }
                out
            },
            "concat_rows",
        )
    }

    /// Concatenate 2-D tensors with equal row counts side by side.
    pub fn concat_cols(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
        if parts.is_empty() {
            return Err(Error::Usage("concat_cols of nothing".into()));
        }
        let (l, _) = parts[0].dims2()?;
        let mut widths = Vec::new();
        let mut total = 0usize;
        for p in parts {
            let (lp, dp) = p.dims2()?;
            if lp != l {
                return Err(Error::Dimension(format!(
                    "concat_cols row mismatch: {l} vs {lp}"
                )));
            }
            widths.push(dp);
            total += dp;
        }
        let datas: Vec<Vec<T>> = parts.iter().map(|p| p.data()).collect();
        let mut out = vec![T::zero(); l * total];
        for i in 0..l {
            let mut off = 0usize;
            for (pd, &w) in datas.iter().zip(&widths) {
                out[i * total + off..i * total + off + w].copy_from_slice(&pd[i * w..(i + 1) * w]);
                off += w;
            }
        }
        let widths_b = widths.clone();
        Tensor::make_op(
            vec![l, total],
            out,
            parts.iter().map(|&p| p.clone()).collect(),
            move |g| {
                let mut grads: Vec<Vec<T>> =
                    widths_b.iter().map(|&w| vec![T::zero(); l * w]).collect();
                for i in 0..l {
                    let mut off = 0usize;
                    for (gp, &w) in grads.iter_mut().zip(&widths_b) {
                        gp[i * w..(i + 1) * w]
                            .copy_from_slice(&g[i * total + off..i * total + off + w]);
                        off += w;
                    }
                }
                grads
            },
            "concat_cols",
        )
    }

    /// Select rows by index (duplicates allowed); gradient scatter-adds.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor<T>> {
        let (l, d) = self.dims2()?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= l) {
            return Err(Error::Index(format!(
                "gather_rows index {bad} out of range for {l} rows"
            )));
        }
        let x = self.data();
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            out.extend_from_slice(&x[i * d..(i + 1) * d]);
        }
        let idx = indices.to_vec();
        Tensor::make_op(
            vec![indices.len(), d],
            out,
            vec![self.clone()],
            move |g| {
                let mut dx = vec![T::zero(); l * d];
                for (r, &i) in idx.iter().enumerate() {
                    for j in 0..d {
                        dx[i * d + j] = dx[i * d + j] + g[r * d + j];
                    }
                }
                vec![dx]
            },
            "gather_rows",
        )
    }

    /// Build an [L,D] tensor whose rows at `indices` come from `selected`
    /// (row r of `selected` goes to row `indices[r]`) and every other row
    /// is the single `filler` row.
    pub fn compose_rows(
        selected: &Tensor<T>,
        filler: &Tensor<T>,
        indices: &[usize],
        total_rows: usize,
    ) -> Result<Tensor<T>> {
        let (u, d) = selected.dims2()?;
        let (fl, fd) = filler.dims2()?;
        if fl != 1 || fd != d {
            return Err(Error::Dimension(format!(
                "compose_rows filler must be [1,{d}], got {:?}",
                filler.shape()
            )));
        }
        if u != indices.len() {
            return Err(Error::Dimension(format!(
                "compose_rows: {} selected rows but {} indices",
                u,
                indices.len()
            )));
        }
        let mut seen = vec![false; total_rows];
        for &i in indices {
            if i >= total_rows {
                return Err(Error::Index(format!(
                    "compose_rows index {i} out of range for {total_rows} rows"
                )));
            }
            if seen[i] {
                return Err(Error::Usage(format!("compose_rows duplicate index {i}")));
            }
            seen[i] = true;
        }
        let sel = selected.data();
        let fil = filler.data();
        let mut out = Vec::with_capacity(total_rows * d);
        for covered in &seen {
            let _ = covered;
            out.extend_from_slice(&fil);
        }
        for (r, &i) in indices.iter().enumerate() {
            out[i * d..(i + 1) * d].copy_from_slice(&sel[r * d..(r + 1) * d]);
        }
        let idx = indices.to_vec();
        Tensor::make_op(
            vec![total_rows, d],
            out,
            vec![selected.clone(), filler.clone()],
            move |g| {
                let mut dsel = vec![T::zero(); idx.len() * d];
                let mut dfil = vec![T::zero(); d];
                let mut covered = vec![false; total_rows];
                for (r, &i) in idx.iter().enumerate() {
                    covered[i] = true;
                    dsel[r * d..(r + 1) * d].copy_from_slice(&g[i * d..(i + 1) * d]);
                }
                for (i, &c) in covered.iter().enumerate() {
                    if !c {
                        for j in 0..d {
                            dfil[j] = dfil[j] + g[i * d + j];
                        }
                    }
                }
                vec![dsel, dfil]
            },
            "compose_rows",
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t64(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let i2 = t64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let a = t64(&[2, 2], &[3.0, -1.5, 2.25, 0.75]);
        let c = i2.matmul(&a).unwrap();
        assert_eq!(c.shape(), vec![2, 2]);
        for (x, y) in c.data().iter().zip(a.data().iter()) {
            assert!((x - y).abs() < 1e-6);
        }
        let c2 = a.matmul(&i2).unwrap();
        for (x, y) in c2.data().iter().zip(a.data().iter()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn matmul_scalar_case() {
        let a = t64(&[1, 1], &[2.0]);
        let b = t64(&[1, 1], &[3.0]);
        assert_eq!(a.matmul(&b).unwrap().data(), vec![6.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_shapes() {
        let a = t64(&[2, 3], &[0.0; 6]);
        let b = t64(&[2, 2], &[0.0; 4]);
        match a.matmul(&b) {
            Err(crate::Error::Dimension(msg)) => {
                assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn softmax_symmetry_and_analytic() {
        let x = t64(&[1, 2], &[0.0, 0.0]);
        let y = x.softmax_rows().unwrap().data();
        assert!((y[0] - 0.5).abs() < 1e-12 && (y[1] - 0.5).abs() < 1e-12);

        let x = t64(&[1, 2], &[1.0f64.ln(), 3.0f64.ln()]);
        let y = x.softmax_rows().unwrap().data();
        assert!((y[0] - 0.25).abs() < 1e-12);
        assert!((y[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance() {
        let x = t64(&[1, 3], &[0.3, -1.2, 2.0]);
        let shifted = t64(&[1, 3], &[0.3 + 7.5, -1.2 + 7.5, 2.0 + 7.5]);
        let a = x.softmax_rows().unwrap().data();
        let b = shifted.softmax_rows().unwrap().data();
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn elu_values() {
        let x = t64(&[3], &[2.0, 0.0, -1.0]);
        let y = x.elu().unwrap().data();
        assert_eq!(y[0], 2.0);
        assert_eq!(y[1], 0.0);
        assert!((y[2] - (-0.632121)).abs() < 1e-6);
    }

    #[test]
    fn conv1d_identity_kernel() {
        let x = t64(&[4, 1], &[0.5, -1.0, 2.0, 3.0]);
        let k = t64(&[3, 1, 1], &[0.0, 1.0, 0.0]);
        let y = x.conv1d(&k).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv1d_hand_example() {
        let x = t64(&[3, 1], &[1.0, 1.0, 1.0]);
        let k = t64(&[3, 1, 1], &[1.0, 1.0, 1.0]);
        let y = x.conv1d(&k).unwrap().data();
        assert_eq!(y, vec![2.0, 3.0, 2.0]);
    }

    #[test]
    fn conv1d_shape_contract() {
        let x = Tensor::<f64>::zeros(&[50, 8]);
        let k = Tensor::<f64>::zeros(&[3, 8, 512]);
        let y = x.conv1d(&k).unwrap();
        assert_eq!(y.shape(), vec![50, 512]);
    }

    #[test]
    fn conv1d_channel_mismatch() {
        let x = Tensor::<f64>::zeros(&[5, 4]);
        let k = Tensor::<f64>::zeros(&[3, 3, 2]);
        assert!(matches!(x.conv1d(&k), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn maxpool_hand_example() {
        let x = t64(&[4, 1], &[1.0, 3.0, 2.0, 5.0]);
        let y = x.maxpool1d().unwrap().data();
        assert_eq!(y, vec![3.0, 5.0]);
    }

    #[test]
    fn maxpool_constant_input() {
        for &c in &[-2.5f64, 0.0, 4.0] {
            let x = Tensor::from_vec(&[7, 2], vec![c; 14]).unwrap();
            let y = x.maxpool1d().unwrap();
            assert_eq!(y.shape(), vec![4, 2]);
            assert!(y.data().iter().all(|&v| v == c));
        }
    }

    #[test]
    fn maxpool_lengths() {
        for l in 1..=100usize {
            let x = Tensor::<f64>::zeros(&[l, 1]);
            assert_eq!(x.maxpool1d().unwrap().shape()[0], l.div_ceil(2));
        }
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let x = Tensor::from_vec(&[1, 4], vec![3.7; 4]).unwrap();
        let g = Tensor::from_vec(&[4], vec![1.0; 4]).unwrap();
        let b = Tensor::<f64>::zeros(&[4]);
        let y = x.layer_norm(&g, &b).unwrap().data();
        assert!(y.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn layer_norm_two_values() {
        let x = t64(&[1, 2], &[1.0, 3.0]);
        let g = Tensor::from_vec(&[2], vec![1.0; 2]).unwrap();
        let b = Tensor::<f64>::zeros(&[2]);
        let y = x.layer_norm(&g, &b).unwrap().data();
        assert!((y[0] - (-1.0)).abs() < 1e-3);
        assert!((y[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn layer_norm_zero_gamma_gives_beta() {
        let x = t64(&[2, 3], &[0.1, 0.9, -0.4, 2.0, 1.0, 0.0]);
        let g = Tensor::<f64>::zeros(&[3]);
        let b = t64(&[3], &[0.5, -0.25, 1.5]);
        let y = x.layer_norm(&g, &b).unwrap().data();
        for row in y.chunks(3) {
            assert!((row[0] - 0.5).abs() < 1e-12);
            assert!((row[1] + 0.25).abs() < 1e-12);
            assert!((row[2] - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_uniform_and_saturated() {
        let logits = Tensor::<f64>::zeros(&[1, 35]);
        let loss = logits.cross_entropy(&[7]).unwrap().item().unwrap();
        assert!((loss - 35.0f64.ln()).abs() < 1e-9);

        let logits = Tensor::<f64>::zeros(&[1, 2]);
        let loss = logits.cross_entropy(&[0]).unwrap().item().unwrap();
        assert!((loss - 2.0f64.ln()).abs() < 1e-9);

        let mut v = vec![0.0; 10];
        v[3] = 20.0;
        let logits = Tensor::from_vec(&[1, 10], v).unwrap();
        let loss = logits.cross_entropy(&[3]).unwrap().item().unwrap();
        // exact: ln(1 + 9 e^-20)
        let expect = (1.0 + 9.0 * (-20.0f64).exp()).ln();
        assert!(loss < 1e-7);
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let logits = Tensor::<f64>::zeros(&[1, 4]);
        assert!(matches!(
            logits.cross_entropy(&[4]),
            Err(crate::Error::Index(_))
        ));
    }

    #[test]
    fn cross_entropy_gradient_closed_form() {
        // grad = (softmax - onehot)/B
        let logits =
            Tensor::<f64>::param(&[2, 3], vec![0.2, -0.7, 1.1, 0.0, 0.4, -0.9]).unwrap();
        let loss = logits.cross_entropy(&[2, 0]).unwrap();
        loss.backward().unwrap();
        let g = logits.grad().unwrap();
        let mut p = logits.data();
        raw::softmax_rows_inplace(&mut p, 2, 3);
        p[2] -= 1.0;
        p[3] -= 1.0;
        for (gv, pv) in g.iter().zip(p.iter()) {
            assert!((gv - pv / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn compose_and_gather_roundtrip() {
        let x = t64(&[4, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let sel = x.gather_rows(&[2, 0]).unwrap();
        assert_eq!(sel.data(), vec![5.0, 6.0, 1.0, 2.0]);
        let filler = t64(&[1, 2], &[-1.0, -1.0]);
        let y = Tensor::compose_rows(&sel, &filler, &[2, 0], 4).unwrap();
        assert_eq!(y.data(), vec![1.0, 2.0, -1.0, -1.0, 5.0, 6.0, -1.0, -1.0]);
    }
}
