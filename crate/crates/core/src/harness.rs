//! Training loop, evaluation metrics, and counterfactual trajectory
//! probes over a trained model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{SequenceSample, BALL_ENTITY, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::model::{forward, heatmap, loss, sample_features, Heatmap, ModelConfig, ModelWeights};
use crate::tensor::{adam_step, AdamState};
use crate::zones::{ZoneGrid, ZoneLabel, PITCH_LENGTH_M, PITCH_WIDTH_M};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 32,
            max_epochs: 30,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Index into `epochs` of the epoch whose weights were retained.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

fn mean_loss(
    samples: &[SequenceSample],
    weights: &ModelWeights<f32>,
    config: &ModelConfig,
) -> Result<f64> {
    let mut total = 0.0f64;
    for s in samples {
        let x = sample_features::<f32>(s, config)?;
        let (lx, ly) = forward(&x, None, weights, config)?;
        total += loss(&lx, &ly, s.label)?.item()? as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Train with Adam over seeded shuffled mini-batches, early-stopping on
/// validation loss. Returns the best-validation weights and the history.
pub fn train(
    train_split: &[SequenceSample],
    val_split: &[SequenceSample],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(ModelWeights<f32>, TrainHistory)> {
    train_config.validate()?;
    model_config.validate()?;
    if train_split.is_empty() || val_split.is_empty() {
        return Err(Error::Usage("train and validation splits must be non-empty".into()));
    }

    let weights = ModelWeights::<f32>::init(model_config)?;
    let params = weights.param_tensors();
    let mut opt = AdamState::new(&params, train_config.lr as f32);
    opt.beta1 = train_config.beta1 as f32;
    opt.beta2 = train_config.beta2 as f32;

    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let mut order: Vec<usize> = (0..train_split.len()).collect();
    let mut history = TrainHistory { epochs: Vec::new(), best_epoch: 0, best_val_loss: f64::INFINITY };
    let mut best_params: Vec<Vec<f32>> = params.iter().map(|p| p.data()).collect();
    let mut epochs_since_best = 0usize;

    for epoch in 0..train_config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for batch in order.chunks(train_config.batch_size) {
            for p in &params {
                p.zero_grad();
            }
            let inv_b = 1.0f32 / batch.len() as f32;
            for &i in batch {
                let s = &train_split[i];
                let x = sample_features::<f32>(s, model_config)?;
                let (lx, ly) = forward(&x, None, &weights, model_config)?;
                let l = loss(&lx, &ly, s.label)?;
                let lv = l.item()?;
                if !lv.is_finite() {
                    let max_logit = lx
                        .data()
                        .iter()
                        .chain(ly.data().iter())
                        .cloned()
                        .fold(f32::NEG_INFINITY, f32::max);
                    return Err(Error::NonFinite(format!(
                        "non-finite loss at epoch {epoch} on event ids {:?} (max logit {max_logit})",
                        batch.iter().map(|&j| train_split[j].event_id).collect::<Vec<_>>()
                    )));
                }
                epoch_loss += lv as f64;
                // scale before backward so batch gradients average
                l.scale(inv_b)?.backward()?;
            }
            adam_step(&params, &mut opt)?;
        }
        let train_loss = epoch_loss / train_split.len() as f64;
        let val_loss = mean_loss(val_split, &weights, model_config)?;
        history.epochs.push(EpochStats { epoch, train_loss, val_loss });

        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best_params = params.iter().map(|p| p.data()).collect();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= train_config.patience {
                break;
            }
        }
    }

    for (p, data) in params.iter().zip(best_params) {
        p.set_data(data)?;
    }
    Ok((weights, history))
}

/// Per-zone tally along one axis: how often the zone was the truth and how
/// often it was predicted correctly when it was.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneTally {
    pub zone: usize,
    pub truth_count: usize,
    pub correct_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub mean_cel: f64,
    pub top1_x: f64,
    pub top3_x: f64,
    pub top5_x: f64,
    pub top1_y: f64,
    pub top3_y: f64,
    pub top5_y: f64,
    pub top1_joint: f64,
    pub top3_joint: f64,
    pub top5_joint: f64,
    /// Non-empty x zones, ordered by zone index.
    pub confusion_x: Vec<ZoneTally>,
    /// Non-empty y zones, ordered by zone index.
    pub confusion_y: Vec<ZoneTally>,
}

/// Fraction of samples whose true cell is among the k highest-probability
/// cells; ties rank the lower cell index first.
pub fn top_k_accuracy(probabilities: &[Vec<f64>], labels: &[usize], k: usize) -> Result<f64> {
    if probabilities.len() != labels.len() || probabilities.is_empty() {
        return Err(Error::Usage("probabilities/labels length mismatch or empty".into()));
    }
    if k < 1 {
        return Err(Error::Usage("k must be >= 1".into()));
    }
    let cells = probabilities[0].len();
    if k > cells {
        return Err(Error::Usage(format!("top-{k} requested over {cells} cells")));
    }
    let mut hits = 0usize;
    for (probs, &label) in probabilities.iter().zip(labels) {
        if probs.len() != cells {
            return Err(Error::Dimension("ragged probability rows".into()));
        }
        if label >= cells {
            return Err(Error::Index(format!("label {label} out of range {cells}")));
        }
        // rank of the true cell: cells strictly better, plus equal-probability
        // cells with a lower index
        let p = probs[label];
        let rank = probs
            .iter()
            .enumerate()
            .filter(|&(i, &q)| q > p || (q == p && i < label))
            .count();
        if rank < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}

fn tally(pairs: &[(usize, usize)]) -> Vec<ZoneTally> {
    let mut map = std::collections::BTreeMap::<usize, (usize, usize)>::new();
    for &(truth, pred) in pairs {
        let e = map.entry(truth).or_insert((0, 0));
        e.0 += 1;
        if pred == truth {
            e.1 += 1;
        }
    }
    map.into_iter()
        .map(|(zone, (truth_count, correct_count))| ZoneTally { zone, truth_count, correct_count })
        .collect()
}

pub fn evaluate(
    weights: &ModelWeights<f32>,
    config: &ModelConfig,
    samples: &[SequenceSample],
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Usage("evaluation split is empty".into()));
    }
    let grid = config.zone_grid();
    let n = samples.len();
    let mut cel = 0.0f64;
    let mut px_rows = Vec::with_capacity(n);
    let mut py_rows = Vec::with_capacity(n);
    let mut joint_rows = Vec::with_capacity(n);
    let mut labels_x = Vec::with_capacity(n);
    let mut labels_y = Vec::with_capacity(n);
    let mut labels_joint = Vec::with_capacity(n);
    let mut pairs_x = Vec::with_capacity(n);
    let mut pairs_y = Vec::with_capacity(n);

    for s in samples {
        if s.label.zx >= grid.nx || s.label.zy >= grid.ny {
            return Err(Error::Config(format!(
                "sample label ({}, {}) outside the checkpoint grid {}x{}",
                s.label.zx, s.label.zy, grid.nx, grid.ny
            )));
        }
        let x = sample_features::<f32>(s, config)?;
        let (lx, ly) = forward(&x, None, weights, config)?;
        cel += loss(&lx, &ly, s.label)?.item()? as f64;
        let h = heatmap(&lx, &ly, &grid)?;
        let px: Vec<f64> = (0..grid.nx).map(|i| h.probs[i * grid.ny..(i + 1) * grid.ny].iter().sum()).collect();
        let py: Vec<f64> = (0..grid.ny).map(|j| (0..grid.nx).map(|i| h.probs[i * grid.ny + j]).sum()).collect();
        let pred = h.argmax();
        pairs_x.push((s.label.zx, pred.zx));
        pairs_y.push((s.label.zy, pred.zy));
        px_rows.push(px);
        py_rows.push(py);
        joint_rows.push(h.probs);
        labels_x.push(s.label.zx);
        labels_y.push(s.label.zy);
        labels_joint.push(s.label.zx * grid.ny + s.label.zy);
    }

    Ok(EvalReport {
        n,
        mean_cel: cel / n as f64,
        top1_x: top_k_accuracy(&px_rows, &labels_x, 1)?,
        top3_x: top_k_accuracy(&px_rows, &labels_x, 3)?,
        top5_x: top_k_accuracy(&px_rows, &labels_x, 5)?,
        top1_y: top_k_accuracy(&py_rows, &labels_y, 1)?,
        top3_y: top_k_accuracy(&py_rows, &labels_y, 3)?,
        top5_y: top_k_accuracy(&py_rows, &labels_y, 5)?,
        top1_joint: top_k_accuracy(&joint_rows, &labels_joint, 1)?,
        top3_joint: top_k_accuracy(&joint_rows, &labels_joint, 3)?,
        top5_joint: top_k_accuracy(&joint_rows, &labels_joint, 5)?,
        confusion_x: tally(&pairs_x),
        confusion_y: tally(&pairs_y),
    })
}

/// Jensen-Shannon divergence (natural log) between two distributions over
/// the same support; bounded by ln 2.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::Usage("JS divergence needs equal non-empty supports".into()));
    }
    let kl_to_mix = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .filter(|&(&ai, _)| ai > 0.0)
            .map(|(&ai, &bi)| ai * (ai / (0.5 * (ai + bi))).ln())
            .sum()
    };
    Ok(0.5 * kl_to_mix(p, q) + 0.5 * kl_to_mix(q, p))
}

/// Re-run the model with one entity's whole trajectory rigidly translated
/// by (dx, dy) meters, positions clamped to the pitch. Returns the
/// original heatmap, the perturbed heatmap, and their JS divergence.
pub fn counterfactual_diff(
    weights: &ModelWeights<f32>,
    config: &ModelConfig,
    sample: &SequenceSample,
    entity_index: usize,
    displacement_m: (f64, f64),
) -> Result<(Heatmap, Heatmap, f64)> {
    if entity_index >= BALL_ENTITY {
        return Err(Error::Usage(if entity_index == BALL_ENTITY {
            "cannot displace the ball: its path defines the event".into()
        } else {
            format!("entity index {entity_index} out of range [0, {BALL_ENTITY})")
        }));
    }
    let grid: ZoneGrid = config.zone_grid();
    let x0 = sample_features::<f32>(sample, config)?;
    let (lx, ly) = forward(&x0, None, weights, config)?;
    let original = heatmap(&lx, &ly, &grid)?;

    let mut features = sample.features.clone();
    let dx = (displacement_m.0 / PITCH_LENGTH_M) as f32;
    let dy = (displacement_m.1 / PITCH_WIDTH_M) as f32;
    for f in 0..config.seq_len {
        let ix = f * FEATURE_DIM + entity_index * 2;
        features[ix] = (features[ix] + dx).clamp(0.0, 1.0);
        features[ix + 1] = (features[ix + 1] + dy).clamp(0.0, 1.0);
    }
    let perturbed_sample = SequenceSample { features, ..sample.clone() };
    let x1 = sample_features::<f32>(&perturbed_sample, config)?;
    let (lx, ly) = forward(&x1, None, weights, config)?;
    let perturbed = heatmap(&lx, &ly, &grid)?;

    let div = js_divergence(&original.probs, &perturbed.probs)?;
    Ok((original, perturbed, div))
}

/// Zone label helper exposed for the CLI's report formatting.
pub fn cell_index(grid: &ZoneGrid, label: ZoneLabel) -> usize {
    label.zx * grid.ny + label.zy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::AttentionMode;
    use crate::data::synth_generate;
    use crate::data::SynthRule;
    use crate::zones::GridScheme;
    use rand::Rng;

    fn tiny_model() -> ModelConfig {
        let mut cfg = ModelConfig::new(GridScheme::Coarse);
        cfg.d_model = 16;
        cfg.n_heads = 2;
        cfg.input_dim = FEATURE_DIM;
        cfg.seq_len = crate::data::SEQ_LEN;
        cfg.mode = AttentionMode::Canonical;
        cfg.seed = 1;
        cfg
    }

    #[test]
    fn zero_lr_leaves_weights_unchanged() {
        let grid = ZoneGrid::coarse();
        let samples = synth_generate(12, 3, SynthRule::NearestTeammate, &grid);
        let cfg = tiny_model();
        let tc = TrainConfig { lr: 0.0, max_epochs: 2, ..TrainConfig::default() };
        let (w, _) = train(&samples[..8], &samples[8..], &cfg, &tc).unwrap();
        let fresh = ModelWeights::<f32>::init(&cfg).unwrap();
        for ((_, a), (_, b)) in w.parameters().iter().zip(fresh.parameters().iter()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn training_is_deterministic() {
        let grid = ZoneGrid::coarse();
        let samples = synth_generate(16, 4, SynthRule::NearestTeammate, &grid);
        let cfg = tiny_model();
        let tc = TrainConfig { max_epochs: 2, batch_size: 4, ..TrainConfig::default() };
        let (wa, ha) = train(&samples[..12], &samples[12..], &cfg, &tc).unwrap();
        let (wb, hb) = train(&samples[..12], &samples[12..], &cfg, &tc).unwrap();
        assert_eq!(ha, hb);
        for ((_, a), (_, b)) in wa.parameters().iter().zip(wb.parameters().iter()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn best_epoch_minimizes_history_val_loss() {
        let grid = ZoneGrid::coarse();
        let samples = synth_generate(20, 9, SynthRule::NearestTeammate, &grid);
        let cfg = tiny_model();
        let tc = TrainConfig { max_epochs: 3, lr: 1e-3, batch_size: 8, ..TrainConfig::default() };
        let (w, h) = train(&samples[..14], &samples[14..], &cfg, &tc).unwrap();
        let min = h
            .epochs
            .iter()
            .map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(h.epochs[h.best_epoch].val_loss, min);
        assert!((h.best_val_loss - min).abs() < 1e-12);
        // retained weights reproduce the recorded best validation loss
        let re = mean_loss(&samples[14..], &w, &cfg).unwrap();
        assert!((re - h.best_val_loss).abs() < 1e-6, "{re} vs {}", h.best_val_loss);
    }

    #[test]
    fn top_k_basics_and_ties() {
        // truth ranked 2nd
        let probs = vec![vec![0.5, 0.3, 0.2]];
        assert_eq!(top_k_accuracy(&probs, &[1], 1).unwrap(), 0.0);
        assert_eq!(top_k_accuracy(&probs, &[1], 3).unwrap(), 1.0);
        // k == cell count is always 1
        assert_eq!(top_k_accuracy(&probs, &[2], 3).unwrap(), 1.0);
        // tie: cells 0 and 1 equal; truth 1 loses the tie at k=1
        let probs = vec![vec![0.4, 0.4, 0.2]];
        assert_eq!(top_k_accuracy(&probs, &[1], 1).unwrap(), 0.0);
        assert_eq!(top_k_accuracy(&probs, &[0], 1).unwrap(), 1.0);
        // k too large
        assert!(matches!(
            top_k_accuracy(&probs, &[0], 4),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn top_k_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cells = 12;
        let probs: Vec<Vec<f64>> = (0..20)
            .map(|_| {
                let raw: Vec<f64> = (0..cells).map(|_| rng.gen_range(0.0..1.0)).collect();
                let z: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / z).collect()
            })
            .collect();
        let labels: Vec<usize> = (0..20).map(|_| rng.gen_range(0..cells)).collect();
        for k in [1usize, 3, 5] {
            let acc = top_k_accuracy(&probs, &labels, k).unwrap();
            // oracle: stable sort by descending probability
            let mut hits = 0;
            for (p, &l) in probs.iter().zip(&labels) {
                let mut idx: Vec<usize> = (0..cells).collect();
                idx.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap().then(a.cmp(&b)));
                if idx[..k].contains(&l) {
                    hits += 1;
                }
            }
            assert_eq!(acc, hits as f64 / 20.0);
        }
    }

    #[test]
    fn metric_ordering_on_random_model() {
        let grid = ZoneGrid::coarse();
        let samples = synth_generate(10, 21, SynthRule::NearestTeammate, &grid);
        let cfg = tiny_model();
        let w = ModelWeights::<f32>::init(&cfg).unwrap();
        let r = evaluate(&w, &cfg, &samples).unwrap();
        assert!(r.top1_x <= r.top3_x && r.top3_x <= r.top5_x);
        assert!(r.top1_y <= r.top3_y && r.top3_y <= r.top5_y);
        assert!(r.top1_joint <= r.top3_joint && r.top3_joint <= r.top5_joint);
        assert_eq!(r.n, 10);
        let truth_total: usize = r.confusion_x.iter().map(|t| t.truth_count).sum();
        assert_eq!(truth_total, 10);
    }

    #[test]
    fn uniform_predictions_hit_chance_level() {
        let grid = ZoneGrid::coarse();
        let samples = synth_generate(40, 2, SynthRule::NearestTeammate, &grid);
        let cfg = tiny_model();
        let w = ModelWeights::<f32>::init(&cfg).unwrap();
        let concat = cfg.n_stacks * cfg.d_model;
        w.head_x.set_data(vec![0.0; concat * grid.nx]).unwrap();
        w.head_y.set_data(vec![0.0; concat * grid.ny]).unwrap();
        let r = evaluate(&w, &cfg, &samples).unwrap();
        let expect = 35f64.ln() + 34f64.ln();
        assert!((r.mean_cel - expect).abs() < 1e-3, "{}", r.mean_cel);
        // ties in a uniform heatmap all break toward cell 0; chance level is
        // the point, not exact equality
        assert!(r.top1_joint <= 5.0 / 1190.0 * 10.0);
    }

    #[test]
    fn js_divergence_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..20 {
            let n = 16;
            let mk = |rng: &mut ChaCha8Rng| {
                let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
                let z: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / z).collect::<Vec<f64>>()
            };
            let p = mk(&mut rng);
            let q = mk(&mut rng);
            let d = js_divergence(&p, &q).unwrap();
            let d2 = js_divergence(&q, &p).unwrap();
            assert!((d - d2).abs() < 1e-12);
            assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&d));
        }
        let p = vec![0.25; 4];
        assert!(js_divergence(&p, &p).unwrap().abs() < 1e-15);
        // disjoint supports reach the ln 2 bound
        let a = vec![0.5, 0.5, 0.0, 0.0];
        let b = vec![0.0, 0.0, 0.5, 0.5];
        assert!((js_divergence(&a, &b).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn counterfactual_zero_displacement_and_ball_guard() {
        let grid = ZoneGrid::coarse();
        let samples = synth_generate(3, 6, SynthRule::NearestTeammate, &grid);
        let cfg = tiny_model();
        let w = ModelWeights::<f32>::init(&cfg).unwrap();
        let (a, b, d) = counterfactual_diff(&w, &cfg, &samples[0], 4, (0.0, 0.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(d, 0.0);
        assert!(matches!(
            counterfactual_diff(&w, &cfg, &samples[0], BALL_ENTITY, (5.0, 0.0)),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            counterfactual_diff(&w, &cfg, &samples[0], 40, (5.0, 0.0)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn counterfactual_displacement_clamps_and_changes_features_only_for_entity() {
        let grid = ZoneGrid::coarse();
        let samples = synth_generate(2, 8, SynthRule::NearestTeammate, &grid);
        let cfg = tiny_model();
        let w = ModelWeights::<f32>::init(&cfg).unwrap();
        // huge displacement clamps inside the pitch and still evaluates
        let (_, h, d) = counterfactual_diff(&w, &cfg, &samples[0], 0, (1e6, -1e6)).unwrap();
        assert!(h.probs.iter().all(|p| p.is_finite()));
        assert!((0.0..=std::f64::consts::LN_2).contains(&d));
    }
}
