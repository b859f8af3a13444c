//! Losses, negative sampling, and the gradient-descent training loop.
//!
//! The alignment loss runs a margin hinge over the pseudo-pair anchors
//! against embedding-space nearest-neighbor negatives; the refining loss
//! applies the same hinge to the textual top-N candidates weighted by their
//! (nonnegative-clamped) cosine similarity and a linearly decaying factor.
//! Gradients are derived analytically and checked against finite differences
//! in the test suite.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::encoder::{backward, forward, Aggregator, EncoderParams, EnhancedEmbeddings};
use super::manhattan_distance;
use crate::error::{Result, SotError};
use crate::kg::KnowledgeGraph;
use crate::text::{similarity_matrix, top_n_candidates, NameEmbeddings, PseudoPairSet};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub margin: f64,
    pub negatives_per_pair: usize,
    pub top_n: usize,
    pub w0: f64,
    pub decay_fraction: f64,
    pub learning_rate: f64,
    pub total_steps: usize,
    pub rng_seed: u64,
    /// Encoder hidden width; 0 means "same as the input dimension".
    pub hidden_dim: usize,
    /// Encoder output width before the residual concatenation; 0 as above.
    pub output_dim: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            margin: 3.0,
            negatives_per_pair: 5,
            top_n: 3,
            w0: 0.3,
            decay_fraction: 0.25,
            learning_rate: 1e-3,
            total_steps: 1000,
            rng_seed: 7,
            hidden_dim: 0,
            output_dim: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(SotError::Config(format!("margin must be > 0, got {}", self.margin)));
        }
        if !(self.decay_fraction > 0.0 && self.decay_fraction <= 1.0) {
            return Err(SotError::Config(format!(
                "decay_fraction must lie in (0, 1], got {}",
                self.decay_fraction
            )));
        }
        if self.w0 < 0.0 {
            return Err(SotError::Config(format!("w0 must be >= 0, got {}", self.w0)));
        }
        if self.negatives_per_pair == 0 {
            return Err(SotError::Config("negatives_per_pair must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(SotError::Config("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Refining weight `w(t)`: `w0` at step zero, linearly down to zero at
/// `decay_fraction` of the total steps, zero afterwards.
pub fn refining_weight(t: usize, config: &TrainingConfig) -> f64 {
    if t == 0 {
        return config.w0;
    }
    let horizon = config.decay_fraction * config.total_steps as f64;
    if horizon <= 0.0 {
        return 0.0;
    }
    config.w0 * (1.0 - t as f64 / horizon).max(0.0)
}

/// Replacement entities for one anchor pair: swapping in an `i_replacement`
/// keeps the anchor's column fixed, swapping in a `j_replacement` keeps the
/// row fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeSampleSet {
    pub i_replacements: Vec<usize>,
    pub j_replacements: Vec<usize>,
}

/// The `k` nearest entities to each anchor endpoint within its own KG under
/// Manhattan distance, the anchor itself excluded; ties break on index.
pub fn sample_negatives(
    anchor: (usize, usize),
    emb1: &Array2<f64>,
    emb2: &Array2<f64>,
    k: usize,
) -> NegativeSampleSet {
    let nearest = |emb: &Array2<f64>, center: usize| -> Vec<usize> {
        let anchor_row = emb.row(center);
        let mut scored: Vec<(f64, usize)> = (0..emb.nrows())
            .filter(|&u| u != center)
            .map(|u| {
                (
                    manhattan_distance(
                        anchor_row.as_slice().unwrap(),
                        emb.row(u).as_slice().unwrap(),
                    ),
                    u,
                )
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.into_iter().take(k).map(|(_, u)| u).collect()
    };
    NegativeSampleSet {
        i_replacements: nearest(emb1, anchor.0),
        j_replacements: nearest(emb2, anchor.1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedAnchor {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

fn add_sign(
    mut dst: ndarray::ArrayViewMut1<f64>,
    a: ndarray::ArrayView1<f64>,
    b: ndarray::ArrayView1<f64>,
    w: f64,
) {
    for ((d, &x), &y) in dst.iter_mut().zip(a.iter()).zip(b.iter()) {
        if x > y {
            *d += w;
        } else if x < y {
            *d -= w;
        }
    }
}

/// Weighted hinge over anchors and their negative pairs. Returns the loss
/// `sum weight * max(0, d(anchor) - d(negative) + margin)`; when gradient
/// buffers are supplied, accumulates `grad_scale * weight` times the sign
/// pattern of each active hinge.
fn hinge_sum(
    anchors: &[WeightedAnchor],
    negatives: &[NegativeSampleSet],
    emb1: &Array2<f64>,
    emb2: &Array2<f64>,
    margin: f64,
    grad_scale: f64,
    mut grads: Option<(&mut Array2<f64>, &mut Array2<f64>)>,
) -> f64 {
    debug_assert_eq!(anchors.len(), negatives.len());
    let mut total = 0.0;
    for (anchor, negs) in anchors.iter().zip(negatives) {
        if anchor.weight == 0.0 {
            continue;
        }
        let ei = emb1.row(anchor.i);
        let ej = emb2.row(anchor.j);
        let d_anchor = manhattan_distance(ei.as_slice().unwrap(), ej.as_slice().unwrap());
        for &ip in &negs.i_replacements {
            let en = emb1.row(ip);
            let d_neg = manhattan_distance(en.as_slice().unwrap(), ej.as_slice().unwrap());
            let term = d_anchor - d_neg + margin;
            if term > 0.0 {
                total += anchor.weight * term;
                if let Some((g1, g2)) = grads.as_mut() {
                    let w = grad_scale * anchor.weight;
                    add_sign(g1.row_mut(anchor.i), ei, ej, w);
                    add_sign(g2.row_mut(anchor.j), ej, ei, w);
                    add_sign(g1.row_mut(ip), en, ej, -w);
                    add_sign(g2.row_mut(anchor.j), ej, en, -w);
                }
            }
        }
        for &jp in &negs.j_replacements {
            let en = emb2.row(jp);
            let d_neg = manhattan_distance(ei.as_slice().unwrap(), en.as_slice().unwrap());
            let term = d_anchor - d_neg + margin;
            if term > 0.0 {
                total += anchor.weight * term;
                if let Some((g1, g2)) = grads.as_mut() {
                    let w = grad_scale * anchor.weight;
                    add_sign(g1.row_mut(anchor.i), ei, ej, w);
                    add_sign(g2.row_mut(anchor.j), ej, ei, w);
                    add_sign(g1.row_mut(anchor.i), ei, en, -w);
                    add_sign(g2.row_mut(jp), en, ei, -w);
                }
            }
        }
    }
    total
}

/// Contrastive alignment loss over anchor pairs with unit weight.
pub fn alignment_loss(
    pairs: &[(usize, usize)],
    negatives: &[NegativeSampleSet],
    emb1: &Array2<f64>,
    emb2: &Array2<f64>,
    margin: f64,
) -> f64 {
    let anchors: Vec<WeightedAnchor> = pairs
        .iter()
        .map(|&(i, j)| WeightedAnchor { i, j, weight: 1.0 })
        .collect();
    hinge_sum(&anchors, negatives, emb1, emb2, margin, 1.0, None)
}

/// Globally guided refining loss: the same hinge weighted by the clamped
/// textual similarity of each candidate pair.
pub fn refining_loss(
    candidates: &[(usize, usize)],
    similarities: &crate::text::SimilarityMatrix,
    negatives: &[NegativeSampleSet],
    emb1: &Array2<f64>,
    emb2: &Array2<f64>,
    margin: f64,
) -> f64 {
    let anchors: Vec<WeightedAnchor> = candidates
        .iter()
        .map(|&(i, j)| WeightedAnchor {
            i,
            j,
            weight: similarities.values[[i, j]].max(0.0),
        })
        .collect();
    hinge_sum(&anchors, negatives, emb1, emb2, margin, 1.0, None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub alignment: f64,
    pub refining: f64,
    /// `alignment + w_t * refining`.
    pub total: f64,
}

/// Evaluate `L = L_a + w_t * L_g` and its analytic gradient with respect to
/// every encoder parameter, for fixed anchor and negative sets.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_gradients(
    params: &EncoderParams,
    kg1: &KnowledgeGraph,
    names1: &NameEmbeddings,
    kg2: &KnowledgeGraph,
    names2: &NameEmbeddings,
    alignment_anchors: &[(usize, usize)],
    alignment_negatives: &[NegativeSampleSet],
    refining_anchors: &[WeightedAnchor],
    refining_negatives: &[NegativeSampleSet],
    margin: f64,
    w_t: f64,
) -> (LossBreakdown, EncoderParams) {
    let agg1 = Aggregator::new(kg1);
    let agg2 = Aggregator::new(kg2);
    let cache1 = forward(&agg1, &names1.matrix, params);
    let cache2 = forward(&agg2, &names2.matrix, params);

    let mut d_out1 = Array2::zeros(cache1.out.dim());
    let mut d_out2 = Array2::zeros(cache2.out.dim());
    let anchors_a: Vec<WeightedAnchor> = alignment_anchors
        .iter()
        .map(|&(i, j)| WeightedAnchor { i, j, weight: 1.0 })
        .collect();
    let loss_a = hinge_sum(
        &anchors_a,
        alignment_negatives,
        &cache1.out,
        &cache2.out,
        margin,
        1.0,
        Some((&mut d_out1, &mut d_out2)),
    );
    let loss_g = hinge_sum(
        refining_anchors,
        refining_negatives,
        &cache1.out,
        &cache2.out,
        margin,
        w_t,
        Some((&mut d_out1, &mut d_out2)),
    );

    let e = params.w2.nrows();
    let mut grads = params.zeros_like();
    backward(
        &agg1,
        params,
        &cache1,
        &d_out1.slice(ndarray::s![.., 0..e]).to_owned(),
        &mut grads,
    );
    backward(
        &agg2,
        params,
        &cache2,
        &d_out2.slice(ndarray::s![.., 0..e]).to_owned(),
        &mut grads,
    );

    (
        LossBreakdown {
            alignment: loss_a,
            refining: loss_g,
            total: loss_a + w_t * loss_g,
        },
        grads,
    )
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: EncoderParams,
    pub embeddings1: EnhancedEmbeddings,
    pub embeddings2: EnhancedEmbeddings,
    /// False when the anchor set was too small and the raw name embeddings
    /// were passed through instead.
    pub trained: bool,
    pub steps_run: usize,
    pub final_loss: f64,
}

/// Full-batch gradient descent on `L = L_a + w(t) L_g`. Negatives are
/// recomputed from the current embeddings at every step; the whole run is
/// deterministic given the seed. Supervised pairs, when given, augment the
/// pseudo pairs.
pub fn train(
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
    names1: &NameEmbeddings,
    names2: &NameEmbeddings,
    pseudo: &PseudoPairSet,
    config: &TrainingConfig,
    supervised: Option<&[(usize, usize)]>,
) -> Result<TrainOutput> {
    config.validate()?;
    if names1.dimension() != names2.dimension() {
        return Err(SotError::Shape(format!(
            "name embedding dimensions differ: {} vs {}",
            names1.dimension(),
            names2.dimension()
        )));
    }
    let d = names1.dimension();
    let hidden = if config.hidden_dim > 0 { config.hidden_dim } else { d };
    let output = if config.output_dim > 0 { config.output_dim } else { d };
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut params = EncoderParams::init(d, hidden, output, &mut rng);

    let mut anchor_set: std::collections::BTreeSet<(usize, usize)> =
        pseudo.pairs.iter().copied().collect();
    if let Some(extra) = supervised {
        anchor_set.extend(extra.iter().copied());
    }
    let anchors: Vec<(usize, usize)> = anchor_set.into_iter().collect();

    if anchors.len() < 2 {
        log::warn!(
            "only {} anchor pair(s); skipping metric learning and passing raw name embeddings through",
            anchors.len()
        );
        return Ok(TrainOutput {
            params,
            embeddings1: EnhancedEmbeddings {
                matrix: names1.matrix.clone(),
            },
            embeddings2: EnhancedEmbeddings {
                matrix: names2.matrix.clone(),
            },
            trained: false,
            steps_run: 0,
            final_loss: 0.0,
        });
    }

    let similarities = similarity_matrix(names1, names2)?;
    let refining_anchors: Vec<WeightedAnchor> = top_n_candidates(&similarities, config.top_n)
        .into_iter()
        .map(|(i, j)| WeightedAnchor {
            i,
            j,
            weight: similarities.values[[i, j]].max(0.0),
        })
        .collect();

    let agg1 = Aggregator::new(kg1);
    let agg2 = Aggregator::new(kg2);
    let mut final_loss = 0.0;
    for t in 0..config.total_steps {
        let out1 = forward(&agg1, &names1.matrix, &params).out;
        let out2 = forward(&agg2, &names2.matrix, &params).out;
        if out1.iter().chain(out2.iter()).any(|v| !v.is_finite()) {
            return Err(SotError::NonFiniteLoss { step: t });
        }
        let w_t = refining_weight(t, config);
        let negs_a: Vec<NegativeSampleSet> = anchors
            .iter()
            .map(|&a| sample_negatives(a, &out1, &out2, config.negatives_per_pair))
            .collect();
        let (refining_now, negs_g): (&[WeightedAnchor], Vec<NegativeSampleSet>) = if w_t > 0.0 {
            let negs = refining_anchors
                .iter()
                .map(|a| sample_negatives((a.i, a.j), &out1, &out2, config.negatives_per_pair))
                .collect();
            (&refining_anchors, negs)
        } else {
            (&[], Vec::new())
        };
        let (loss, grads) = loss_and_gradients(
            &params, kg1, names1, kg2, names2, &anchors, &negs_a, refining_now, &negs_g,
            config.margin, w_t,
        );
        if !loss.total.is_finite() {
            return Err(SotError::NonFiniteLoss { step: t });
        }
        params.axpy(-config.learning_rate, &grads);
        final_loss = loss.total;
    }

    let embeddings1 = EnhancedEmbeddings {
        matrix: forward(&agg1, &names1.matrix, &params).out,
    };
    let embeddings2 = EnhancedEmbeddings {
        matrix: forward(&agg2, &names2.matrix, &params).out,
    };
    Ok(TrainOutput {
        params,
        embeddings1,
        embeddings2,
        trained: true,
        steps_run: config.total_steps,
        final_loss,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    input: usize,
    hidden: usize,
    output: usize,
    seed: u64,
    steps: usize,
}

/// Text checkpoint: one JSON header line, then one whitespace-separated
/// line per tensor. Values are written in shortest round-trip form, so a
/// reload reproduces the parameters bit for bit.
pub fn save_checkpoint(path: &Path, params: &EncoderParams, seed: u64, steps: usize) -> Result<()> {
    let (input, hidden, output) = params.dims();
    let header = CheckpointHeader {
        input,
        hidden,
        output,
        seed,
        steps,
    };
    let mut buf = serde_json::to_string(&header)
        .map_err(|e| SotError::Config(format!("serializing checkpoint header: {e}")))?;
    buf.push('\n');
    for (name, values) in [
        ("w1", params.w1.iter().copied().collect::<Vec<f64>>()),
        ("b1", params.b1.to_vec()),
        ("w2", params.w2.iter().copied().collect::<Vec<f64>>()),
        ("b2", params.b2.to_vec()),
    ] {
        buf.push_str(name);
        for v in values {
            buf.push(' ');
            buf.push_str(&format!("{v}"));
        }
        buf.push('\n');
    }
    crate::kg::write_file(path, buf.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<(EncoderParams, u64, usize)> {
    let text = crate::kg::read_to_string(path)?;
    let mut lines = text.lines();
    let header: CheckpointHeader = serde_json::from_str(lines.next().unwrap_or(""))
        .map_err(|e| SotError::parse(path, 1, format!("bad checkpoint header: {e}")))?;
    let mut tensors: std::collections::HashMap<String, Vec<f64>> = std::collections::HashMap::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let name = parts.next().unwrap().to_string();
        let values: Vec<f64> = parts
            .map(|v| {
                v.parse()
                    .map_err(|_| SotError::parse(path, idx + 2, format!("bad float {v:?}")))
            })
            .collect::<Result<_>>()?;
        tensors.insert(name, values);
    }
    let mut flat = Vec::new();
    for name in ["w1", "b1", "w2", "b2"] {
        let t = tensors.remove(name).ok_or_else(|| {
            SotError::parse(path, 0, format!("checkpoint missing tensor {name}"))
        })?;
        flat.extend(t);
    }
    let expected = header.hidden * header.input
        + header.hidden
        + header.output * header.hidden
        + header.output;
    if flat.len() != expected {
        return Err(SotError::Shape(format!(
            "checkpoint holds {} values, header implies {expected}",
            flat.len()
        )));
    }
    Ok((
        EncoderParams::from_flat(header.input, header.hidden, header.output, &flat),
        header.seed,
        header.steps,
    ))
}
