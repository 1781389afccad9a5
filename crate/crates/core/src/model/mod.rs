//! The pass-destination network: token-prefixed embedding, stacked
//! distilling encoders, and dual-axis classification heads.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{multi_head, AttentionConfig, AttentionMode, MultiHeadWeights};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use crate::zones::{GridScheme, ZoneGrid, ZoneLabel};

fn default_d_model() -> usize {
    512
}
fn default_n_heads() -> usize {
    8
}
fn default_n_stacks() -> usize {
    2
}
fn default_blocks() -> usize {
    3
}
fn default_input_dim() -> usize {
    crate::data::FEATURE_DIM
}
fn default_seq_len() -> usize {
    crate::data::SEQ_LEN
}
fn default_factor() -> usize {
    5
}
fn default_mode() -> AttentionMode {
    AttentionMode::ProbSparse
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_d_model")]
    pub d_model: usize,
    #[serde(default = "default_n_heads")]
    pub n_heads: usize,
    #[serde(default = "default_n_stacks")]
    pub n_stacks: usize,
    #[serde(default = "default_blocks")]
    pub blocks_per_stack: usize,
    pub grid: GridScheme,
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
    /// Feed-forward inner width; 0 means the 2*d_model default.
    #[serde(default)]
    pub d_ff: usize,
    #[serde(default)]
    pub context_dim: usize,
    #[serde(default = "default_factor")]
    pub sampling_factor: usize,
    #[serde(default = "default_mode")]
    pub mode: AttentionMode,
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(grid: GridScheme) -> Self {
        ModelConfig {
            d_model: default_d_model(),
            n_heads: default_n_heads(),
            n_stacks: default_n_stacks(),
            blocks_per_stack: default_blocks(),
            grid,
            input_dim: default_input_dim(),
            seq_len: default_seq_len(),
            d_ff: 0,
            context_dim: 0,
            sampling_factor: default_factor(),
            mode: default_mode(),
            seed: 0,
        }
    }

    pub fn d_ff(&self) -> usize {
        if self.d_ff == 0 {
            2 * self.d_model
        } else {
            self.d_ff
        }
    }

    pub fn zone_grid(&self) -> ZoneGrid {
        ZoneGrid::new(self.grid)
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            d_model: self.d_model,
            n_heads: self.n_heads,
            sampling_factor: self.sampling_factor,
            mode: self.mode,
        }
    }

    /// Frame count consumed by a stack: stack 0 reads the full window,
    /// each later stack reads the most recent half of its predecessor.
    pub fn stack_input_len(&self, stack: usize) -> usize {
        let mut l = self.seq_len;
        for _ in 0..stack {
            l = l.div_ceil(2);
        }
        l
    }

    /// Frame lengths at the input of each block of one stack.
    pub fn frame_length_chain(&self, stack: usize) -> Vec<usize> {
        let mut chain = vec![self.stack_input_len(stack)];
        for _ in 1..self.blocks_per_stack {
            chain.push(chain.last().unwrap().div_ceil(2));
        }
        chain
    }

    pub fn validate(&self) -> Result<()> {
        self.attention().validate()?;
        if self.blocks_per_stack < 1 {
            return Err(Error::Config("blocks_per_stack must be >= 1".into()));
        }
        if self.n_stacks < 1 {
            return Err(Error::Config("n_stacks must be >= 1".into()));
        }
        if self.seq_len < 1 || self.input_dim < 1 {
            return Err(Error::Config("seq_len and input_dim must be >= 1".into()));
        }
        if self.stack_input_len(self.n_stacks - 1) < self.blocks_per_stack.max(2) {
            return Err(Error::Config(format!(
                "seq_len {} too short for {} stacks of {} blocks",
                self.seq_len, self.n_stacks, self.blocks_per_stack
            )));
        }
        Ok(())
    }
}

pub struct BlockWeights<T: Scalar> {
    pub ln1_gamma: Tensor<T>,
    pub ln1_beta: Tensor<T>,
    pub attn: MultiHeadWeights<T>,
    pub ln2_gamma: Tensor<T>,
    pub ln2_beta: Tensor<T>,
    pub ff_w1: Tensor<T>,
    pub ff_b1: Tensor<T>,
    pub ff_w2: Tensor<T>,
    pub ff_b2: Tensor<T>,
}

pub struct StackWeights<T: Scalar> {
    pub blocks: Vec<BlockWeights<T>>,
    /// One conv kernel per distilling connection (blocks - 1 of them).
    pub distill_kernels: Vec<Tensor<T>>,
}

pub struct ModelWeights<T: Scalar> {
    pub input_proj: Tensor<T>,
    pub input_bias: Tensor<T>,
    /// Shared learnable classification token, one row.
    pub class_token: Tensor<T>,
    pub context_proj: Option<Tensor<T>>,
    pub stacks: Vec<StackWeights<T>>,
    pub head_x: Tensor<T>,
    pub head_y: Tensor<T>,
    /// Fixed sinusoidal table, one row per frame; not a parameter.
    pub positional: Tensor<T>,
}

/// The fixed sinusoidal position table for `len` positions.
pub fn positional_table<T: Scalar>(len: usize, d_model: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(len * d_model);
    for pos in 0..len {
        for i in 0..d_model {
            let exponent = 2.0 * (i / 2) as f64 / d_model as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            data.push(T::from_f64_(if i % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Tensor::from_vec(&[len, d_model], data).expect("finite positional table")
}

fn uniform_init<T: Scalar>(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    fan_in: usize,
) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n)
        .map(|_| T::from_f64_(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::param(shape, data).expect("finite init")
}

impl<T: Scalar> ModelWeights<T> {
    /// Seeded initialization: uniform +-1/sqrt(fan_in), zero class token.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_model;
        let dh = config.d_model / config.n_heads;
        let d_ff = config.d_ff();

        let input_proj = uniform_init(&mut rng, &[config.input_dim, d], config.input_dim);
        let input_bias = Tensor::param(&[d], vec![T::zero(); d])?;
        let class_token = Tensor::param(&[1, d], vec![T::zero(); d])?;
        let context_proj = if config.context_dim > 0 {
            Some(uniform_init(&mut rng, &[config.context_dim, d], config.context_dim))
        } else {
            None
        };

        let mut stacks = Vec::with_capacity(config.n_stacks);
        for _ in 0..config.n_stacks {
            let mut blocks = Vec::with_capacity(config.blocks_per_stack);
            for _ in 0..config.blocks_per_stack {
                let mk_heads = |rng: &mut ChaCha8Rng| -> Vec<Tensor<T>> {
                    (0..config.n_heads).map(|_| uniform_init(rng, &[d, dh], d)).collect()
                };
                blocks.push(BlockWeights {
                    ln1_gamma: Tensor::param(&[d], vec![T::one(); d])?,
                    ln1_beta: Tensor::param(&[d], vec![T::zero(); d])?,
                    attn: MultiHeadWeights {
                        wq: mk_heads(&mut rng),
                        wk: mk_heads(&mut rng),
                        wv: mk_heads(&mut rng),
                        wo: uniform_init(&mut rng, &[d, d], d),
                    },
                    ln2_gamma: Tensor::param(&[d], vec![T::one(); d])?,
                    ln2_beta: Tensor::param(&[d], vec![T::zero(); d])?,
                    ff_w1: uniform_init(&mut rng, &[d, d_ff], d),
                    ff_b1: Tensor::param(&[d_ff], vec![T::zero(); d_ff])?,
                    ff_w2: uniform_init(&mut rng, &[d_ff, d], d_ff),
                    ff_b2: Tensor::param(&[d], vec![T::zero(); d])?,
                });
            }
            let distill_kernels = (0..config.blocks_per_stack.saturating_sub(1))
                .map(|_| uniform_init(&mut rng, &[3, d, d], 3 * d))
                .collect();
            stacks.push(StackWeights { blocks, distill_kernels });
        }

        let grid = config.zone_grid();
        let concat = config.n_stacks * d;
        // heads start at zero: predictions begin exactly uniform and the
        // logits grow along the loss gradient from the first step
        let head_x = Tensor::param(&[concat, grid.nx], vec![T::zero(); concat * grid.nx])?;
        let head_y = Tensor::param(&[concat, grid.ny], vec![T::zero(); concat * grid.ny])?;

        Ok(ModelWeights {
            input_proj,
            input_bias,
            class_token,
            context_proj,
            stacks,
            head_x,
            head_y,
            positional: positional_table(config.seq_len, d),
        })
    }

    /// All learnable parameters with stable names, in a fixed order.
    pub fn parameters(&self) -> Vec<(String, Tensor<T>)> {
        let mut out: Vec<(String, Tensor<T>)> = vec![
            ("input_proj".into(), self.input_proj.clone()),
            ("input_bias".into(), self.input_bias.clone()),
            ("class_token".into(), self.class_token.clone()),
        ];
        if let Some(cp) = &self.context_proj {
            out.push(("context_proj".into(), cp.clone()));
        }
        for (s, stack) in self.stacks.iter().enumerate() {
            for (b, blk) in stack.blocks.iter().enumerate() {
                let p = format!("stack{s}.block{b}");
                out.push((format!("{p}.ln1_gamma"), blk.ln1_gamma.clone()));
                out.push((format!("{p}.ln1_beta"), blk.ln1_beta.clone()));
                for h in 0..blk.attn.wq.len() {
                    out.push((format!("{p}.attn.h{h}.wq"), blk.attn.wq[h].clone()));
                    out.push((format!("{p}.attn.h{h}.wk"), blk.attn.wk[h].clone()));
                    out.push((format!("{p}.attn.h{h}.wv"), blk.attn.wv[h].clone()));
                }
                out.push((format!("{p}.attn.wo"), blk.attn.wo.clone()));
                out.push((format!("{p}.ln2_gamma"), blk.ln2_gamma.clone()));
                out.push((format!("{p}.ln2_beta"), blk.ln2_beta.clone()));
                out.push((format!("{p}.ff_w1"), blk.ff_w1.clone()));
                out.push((format!("{p}.ff_b1"), blk.ff_b1.clone()));
                out.push((format!("{p}.ff_w2"), blk.ff_w2.clone()));
                out.push((format!("{p}.ff_b2"), blk.ff_b2.clone()));
            }
            for (k, kernel) in stack.distill_kernels.iter().enumerate() {
                out.push((format!("stack{s}.distill{k}"), kernel.clone()));
            }
        }
        out.push(("head_x".into(), self.head_x.clone()));
        out.push(("head_y".into(), self.head_y.clone()));
        out
    }

    pub fn param_tensors(&self) -> Vec<Tensor<T>> {
        self.parameters().into_iter().map(|(_, t)| t).collect()
    }
}

/// Embed the raw frame features: linear projection + bias + sinusoidal
/// positions (+ broadcast projected context), with the classification
/// token prepended at row 0. Output is (seq_len + 1) x d_model.
pub fn embed<T: Scalar>(
    features: &Tensor<T>,
    context: Option<&Tensor<T>>,
    weights: &ModelWeights<T>,
    config: &ModelConfig,
) -> Result<Tensor<T>> {
    let (l, f) = features.dims2()?;
    if l != config.seq_len || f != config.input_dim {
        return Err(Error::Config(format!(
            "feature shape {:?} does not match configured {}x{}",
            features.shape(),
            config.seq_len,
            config.input_dim
        )));
    }
    // vanilla Transformer embedding scale: sqrt(d_model) keeps the projected
    // signal from being drowned by the unit-amplitude positional table
    let scale = T::from_f64_((config.d_model as f64).sqrt());
    let mut frames = features
        .matmul(&weights.input_proj)?
        .add_bias(&weights.input_bias)?
        .scale(scale)?
        .add(&weights.positional)?;
    if let (Some(ctx), Some(proj)) = (context, &weights.context_proj) {
        let g = ctx.matmul(proj)?; // [1, d_model]
        frames = frames.add_bias(&g)?;
    }
    Tensor::concat_rows(&[&weights.class_token, &frames])
}

/// One distilling connection on frame rows only: maxpool(elu(conv(x))).
pub fn distill<T: Scalar>(frames: &Tensor<T>, kernel: &Tensor<T>) -> Result<Tensor<T>> {
    frames.conv1d(kernel)?.elu()?.maxpool1d()
}

fn encoder_block<T: Scalar>(
    x: &Tensor<T>,
    blk: &BlockWeights<T>,
    attn_cfg: &AttentionConfig,
    seed: u64,
) -> Result<Tensor<T>> {
    let normed = x.layer_norm(&blk.ln1_gamma, &blk.ln1_beta)?;
    let h = x.add(&multi_head(&normed, &blk.attn, attn_cfg, seed)?)?;
    let normed = h.layer_norm(&blk.ln2_gamma, &blk.ln2_beta)?;
    let ff = normed
        .matmul(&blk.ff_w1)?
        .add_bias(&blk.ff_b1)?
        .elu()?
        .matmul(&blk.ff_w2)?
        .add_bias(&blk.ff_b2)?;
    h.add(&ff)
}

/// Run one encoder stack over a token-prefixed input and return the
/// classification-token row after the final block.
pub fn encoder_stack_forward<T: Scalar>(
    x: &Tensor<T>,
    weights: &ModelWeights<T>,
    config: &ModelConfig,
    stack_index: usize,
    seed: u64,
) -> Result<Tensor<T>> {
    let stack = weights
        .stacks
        .get(stack_index)
        .ok_or_else(|| Error::Index(format!("no stack {stack_index}")))?;
    let attn_cfg = config.attention();
    let chain = config.frame_length_chain(stack_index);
    let mut cur = x.clone();
    for (b, blk) in stack.blocks.iter().enumerate() {
        let (rows, _) = cur.dims2()?;
        if rows != chain[b] + 1 {
            return Err(Error::Dimension(format!(
                "stack {stack_index} block {b}: expected {} rows (token + {} frames), got {rows}",
                chain[b] + 1,
                chain[b]
            )));
        }
        let block_seed = seed
            .wrapping_add(stack_index as u64 * 1000)
            .wrapping_add(b as u64 * 100);
        cur = encoder_block(&cur, blk, &attn_cfg, block_seed)?;
        if b + 1 < stack.blocks.len() {
            let (rows, _) = cur.dims2()?;
            let token = cur.slice_rows(0, 1)?;
            let frames = cur.slice_rows(1, rows)?;
            let pooled = distill(&frames, &stack.distill_kernels[b])?;
            cur = Tensor::concat_rows(&[&token, &pooled])?;
        }
    }
    cur.slice_rows(0, 1)
}

/// Full forward pass: stack 0 reads the whole window, each later stack the
/// most recent half, class tokens concatenate into the two axis heads.
pub fn forward<T: Scalar>(
    features: &Tensor<T>,
    context: Option<&Tensor<T>>,
    weights: &ModelWeights<T>,
    config: &ModelConfig,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let embedded = embed(features, context, weights, config)?;
    let (rows, _) = embedded.dims2()?;
    let frames = embedded.slice_rows(1, rows)?;
    let token = embedded.slice_rows(0, 1)?;

    let mut tokens_out = Vec::with_capacity(config.n_stacks);
    for s in 0..config.n_stacks {
        let take = config.stack_input_len(s);
        let input_frames = frames.slice_rows(config.seq_len - take, config.seq_len)?;
        let input = Tensor::concat_rows(&[&token, &input_frames])?;
        tokens_out.push(encoder_stack_forward(&input, weights, config, s, config.seed)?);
    }
    let refs: Vec<&Tensor<T>> = tokens_out.iter().collect();
    let concat = Tensor::concat_cols(&refs)?;
    Ok((concat.matmul(&weights.head_x)?, concat.matmul(&weights.head_y)?))
}

/// Dual-axis loss: CEL on the x head plus CEL on the y head.
pub fn loss<T: Scalar>(
    logits_x: &Tensor<T>,
    logits_y: &Tensor<T>,
    label: ZoneLabel,
) -> Result<Tensor<T>> {
    logits_x
        .cross_entropy(&[label.zx])?
        .add(&logits_y.cross_entropy(&[label.zy])?)
}

/// Outer-product heatmap over grid cells; row index = x-zone.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub nx: usize,
    pub ny: usize,
    /// Row-major probabilities, probs[zx * ny + zy].
    pub probs: Vec<f64>,
}

impl Heatmap {
    pub fn argmax(&self) -> ZoneLabel {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, &p) in self.probs.iter().enumerate() {
            if p > best.0 {
                best = (p, i);
            }
        }
        ZoneLabel { zx: best.1 / self.ny, zy: best.1 % self.ny }
    }
}

fn softmax_f64(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// H[i, j] = softmax(logits_x)[i] * softmax(logits_y)[j].
pub fn heatmap<T: Scalar>(
    logits_x: &Tensor<T>,
    logits_y: &Tensor<T>,
    grid: &ZoneGrid,
) -> Result<Heatmap> {
    if logits_x.numel() != grid.nx || logits_y.numel() != grid.ny {
        return Err(Error::Dimension(format!(
            "logit lengths {}/{} do not match grid {}x{}",
            logits_x.numel(),
            logits_y.numel(),
            grid.nx,
            grid.ny
        )));
    }
    let px = softmax_f64(&logits_x.data().iter().map(|v| v.to_f64_()).collect::<Vec<_>>());
    let py = softmax_f64(&logits_y.data().iter().map(|v| v.to_f64_()).collect::<Vec<_>>());
    let mut probs = Vec::with_capacity(grid.nx * grid.ny);
    for &a in &px {
        for &b in &py {
            probs.push(a * b);
        }
    }
    Ok(Heatmap { nx: grid.nx, ny: grid.ny, probs })
}

/// Features of one sample as a tensor in the model's scalar type.
pub fn sample_features<T: Scalar>(
    sample: &crate::data::SequenceSample,
    config: &ModelConfig,
) -> Result<Tensor<T>> {
    Tensor::from_vec(
        &[config.seq_len, config.input_dim],
        sample.features.iter().map(|&v| T::from_f64_(v as f64)).collect(),
    )
}
