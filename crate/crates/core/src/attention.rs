//! Scaled dot-product attention: the canonical form and the query-sparse
//! variant that gives full attention only to the queries whose score
//! distribution deviates most from uniform.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{raw, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    Canonical,
    ProbSparse,
}

impl std::str::FromStr for AttentionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "canonical" => Ok(AttentionMode::Canonical),
            "probsparse" => Ok(AttentionMode::ProbSparse),
            other => Err(Error::Usage(format!(
                "unknown attention mode '{other}' (expected canonical|probsparse)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionConfig {
    pub d_model: usize,
    pub n_heads: usize,
    /// Sampling factor c: both the sampled-key count and the dominant-query
    /// count are ceil(c * ln L).
    pub sampling_factor: usize,
    pub mode: AttentionMode,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            d_model: 512,
            n_heads: 8,
            sampling_factor: 5,
            mode: AttentionMode::ProbSparse,
        }
    }
}

impl AttentionConfig {
    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.sampling_factor < 1 {
            return Err(Error::Config("sampling factor must be >= 1".into()));
        }
        Ok(())
    }
}

/// How many keys/queries the sparsity machinery touches for length `l`.
pub fn sample_budget(l: usize, c: usize) -> usize {
    ((c as f64) * (l as f64).ln()).ceil() as usize
}

/// Per-query sparsity measurement over a sampled key subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityReport {
    /// max-minus-mean score per query.
    pub scores: Vec<f64>,
    /// Top-u query indices, sorted by score descending (ties by index).
    pub selected: Vec<usize>,
    pub u: usize,
    pub sampled_key_count: usize,
    /// Query-key dot products spent on the measurement.
    pub dot_product_count: u64,
}

/// softmax(Q K^T / sqrt(d)) V
pub fn canonical_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (_, d) = q.dims2()?;
    let (l_k, dk) = k.dims2()?;
    if d != dk {
        return Err(Error::Dimension(format!(
            "attention Q/K dims disagree: {:?} vs {:?}",
            q.shape(),
            k.shape()
        )));
    }
    let (l_v, _) = v.dims2()?;
    if l_v != l_k {
        return Err(Error::Dimension(format!(
            "attention K/V row counts disagree: {} vs {}",
            l_k, l_v
        )));
    }
    let scale = T::one() / T::from_f64_((d as f64).sqrt());
    q.matmul_nt(k)?.scale(scale)?.softmax_rows()?.matmul(v)
}

/// Uniform sample of key rows (without replacement) used for measurement.
pub fn sample_key_indices(l_k: usize, c: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = sample_budget(l_k, c).max(1).min(l_k);
    let mut idx: Vec<usize> = (0..l_k).collect();
    idx.shuffle(rng);
    idx.truncate(m);
    idx.sort_unstable();
    idx
}

/// Score each query against a sampled key subset with the max-minus-mean
/// surrogate for KL divergence from uniform.
pub fn sparsity_measure<T: Scalar>(
    q: &Tensor<T>,
    k_sample: &Tensor<T>,
    c: usize,
) -> Result<SparsityReport> {
    let (l_q, d) = q.dims2()?;
    let (m, dk) = k_sample.dims2()?;
    if m == 0 {
        return Err(Error::Usage("sparsity_measure with empty key sample".into()));
    }
    if d != dk {
        return Err(Error::Dimension(format!(
            "sparsity_measure Q/K dims disagree: {d} vs {dk}"
        )));
    }
    let qd = q.data();
    let kd = k_sample.data();
    let scale = 1.0 / (d as f64).sqrt();
    let mut scores = Vec::with_capacity(l_q);
    for i in 0..l_q {
        let qi = &qd[i * d..(i + 1) * d];
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for j in 0..m {
            let s = raw::dot(qi, &kd[j * d..(j + 1) * d]).to_f64_() * scale;
            max = max.max(s);
            sum += s;
        }
        scores.push(max - sum / m as f64);
    }
    let u = l_q.min(sample_budget(l_q, c));
    let mut order: Vec<usize> = (0..l_q).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order.truncate(u);
    Ok(SparsityReport {
        scores,
        selected: order,
        u,
        sampled_key_count: m,
        dot_product_count: (l_q * m) as u64,
    })
}

/// Query-sparse attention: the top-u queries by sparsity score receive
/// exact attention over all keys; every other output row is the value
/// mean. Deterministic for a given seed.
pub fn probsparse_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    config: &AttentionConfig,
    seed: u64,
) -> Result<(Tensor<T>, SparsityReport)> {
    let (l_q, _) = q.dims2()?;
    let (l_k, _) = k.dims2()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_idx = sample_key_indices(l_k, config.sampling_factor, &mut rng);
    let k_sample = k.gather_rows(&sample_idx)?;
    let report = sparsity_measure(q, &k_sample, config.sampling_factor)?;

    let filler = v.mean_rows()?;
    let out = if report.u == 0 {
        let empty = Tensor::zeros(&[0, v.dims2()?.1]);
        Tensor::compose_rows(&empty, &filler, &[], l_q)?
    } else if report.u >= l_q {
        canonical_attention(q, k, v)?
    } else {
        let q_sel = q.gather_rows(&report.selected)?;
        let out_sel = canonical_attention(&q_sel, k, v)?;
        Tensor::compose_rows(&out_sel, &filler, &report.selected, l_q)?
    };
    Ok((out, report))
}

/// Total query-key dot products the sparse path spends at length `l`:
/// measurement plus full attention for the selected queries.
pub fn probsparse_dot_budget(l: usize, c: usize) -> u64 {
    let m = sample_budget(l, c).max(1).min(l);
    let u = sample_budget(l, c).min(l);
    (l * m + u * l) as u64
}

/// Per-head projection weights plus the output projection.
pub struct MultiHeadWeights<T: Scalar> {
    pub wq: Vec<Tensor<T>>,
    pub wk: Vec<Tensor<T>>,
    pub wv: Vec<Tensor<T>>,
    pub wo: Tensor<T>,
}

impl<T: Scalar> MultiHeadWeights<T> {
    pub fn parameters(&self) -> Vec<Tensor<T>> {
        let mut out = Vec::new();
        for h in 0..self.wq.len() {
            out.push(self.wq[h].clone());
            out.push(self.wk[h].clone());
            out.push(self.wv[h].clone());
        }
        out.push(self.wo.clone());
        out
    }
}

/// Multi-head attention over a single sequence: heads run independently in
/// the configured mode, outputs concatenate and pass the output projection.
pub fn multi_head<T: Scalar>(
    x: &Tensor<T>,
    weights: &MultiHeadWeights<T>,
    config: &AttentionConfig,
    seed: u64,
) -> Result<Tensor<T>> {
    config.validate()?;
    if weights.wq.len() != config.n_heads {
        return Err(Error::Config(format!(
            "weights hold {} heads, config says {}",
            weights.wq.len(),
            config.n_heads
        )));
    }
    let mut heads = Vec::with_capacity(config.n_heads);
    for h in 0..config.n_heads {
        let q = x.matmul(&weights.wq[h])?;
        let k = x.matmul(&weights.wk[h])?;
        let v = x.matmul(&weights.wv[h])?;
        let out = match config.mode {
            AttentionMode::Canonical => canonical_attention(&q, &k, &v)?,
            AttentionMode::ProbSparse => {
                probsparse_attention(&q, &k, &v, config, seed.wrapping_add(h as u64))?.0
            }
        };
        heads.push(out);
    }
    let refs: Vec<&Tensor<T>> = heads.iter().collect();
    Tensor::concat_cols(&refs)?.matmul(&weights.wo)
}

/// Instrumented plain-`f32` attention used by the complexity benchmark.
/// Counts every query-key dot product actually evaluated.
pub mod counted {
    use super::*;

    pub struct CountedResult {
        pub output: Vec<f32>,
        pub dot_products: u64,
    }

    pub fn canonical(q: &[f32], k: &[f32], v: &[f32], l: usize, d: usize) -> CountedResult {
        let mut dots = 0u64;
        let scale = 1.0 / (d as f32).sqrt();
        let mut scores = vec![0.0f32; l * l];
        for i in 0..l {
            for j in 0..l {
                scores[i * l + j] = raw::dot(&q[i * d..(i + 1) * d], &k[j * d..(j + 1) * d]) * scale;
                dots += 1;
            }
        }
        raw::softmax_rows_inplace(&mut scores, l, l);
        let output = raw::mm(&scores, v, l, l, d);
        CountedResult { output, dot_products: dots }
    }

    pub fn probsparse(
        q: &[f32],
        k: &[f32],
        v: &[f32],
        l: usize,
        d: usize,
        c: usize,
        seed: u64,
    ) -> CountedResult {
        let mut dots = 0u64;
        let scale = 1.0 / (d as f32).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample_idx = sample_key_indices(l, c, &mut rng);
        let m = sample_idx.len();

        let mut measure = Vec::with_capacity(l);
        for i in 0..l {
            let qi = &q[i * d..(i + 1) * d];
            let mut max = f32::NEG_INFINITY;
            let mut sum = 0.0f32;
            for &j in &sample_idx {
                let s = raw::dot(qi, &k[j * d..(j + 1) * d]) * scale;
                dots += 1;
                max = max.max(s);
                sum += s;
            }
            measure.push(max - sum / m as f32);
        }
        let u = l.min(sample_budget(l, c));
        let mut order: Vec<usize> = (0..l).collect();
        order.sort_by(|&a, &b| measure[b].partial_cmp(&measure[a]).unwrap().then(a.cmp(&b)));
        order.truncate(u);

        // lazy rows = value mean
        let mut mean_v = vec![0.0f32; d];
        for row in v.chunks(d) {
            for (m, &x) in mean_v.iter_mut().zip(row) {
                *m += x;
            }
        }
        for mv in mean_v.iter_mut() {
            *mv /= l as f32;
        }
        let mut output = Vec::with_capacity(l * d);
        for _ in 0..l {
            output.extend_from_slice(&mean_v);
        }
        for &i in &order {
            let qi = &q[i * d..(i + 1) * d];
            let mut scores = vec![0.0f32; l];
            for j in 0..l {
                scores[j] = raw::dot(qi, &k[j * d..(j + 1) * d]) * scale;
                dots += 1;
            }
            raw::softmax_rows_inplace(&mut scores, 1, l);
            let row = raw::mm(&scores, v, 1, l, d);
            output[i * d..(i + 1) * d].copy_from_slice(&row);
        }
        CountedResult { output, dot_products: dots }
    }
}
