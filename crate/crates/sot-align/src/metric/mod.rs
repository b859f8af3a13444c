//! Contrastive metric learning on the KG structure.
//!
//! A small shared encoder smooths the textual node embeddings over each
//! graph's relation edges; training pulls pseudo-pair anchors together and
//! pushes embedding-space neighbors apart under a margin hinge, with a
//! decaying similarity-weighted refinement term over the textual top-N
//! candidates.

mod encoder;
mod training;

pub use encoder::{encode, EncoderParams, EnhancedEmbeddings};
pub use training::{
    alignment_loss, load_checkpoint, loss_and_gradients, refining_loss, refining_weight,
    sample_negatives, save_checkpoint, train, LossBreakdown, NegativeSampleSet, TrainOutput,
    TrainingConfig, WeightedAnchor,
};

/// Sum of absolute coordinate differences.
///
/// Panics if the slices differ in length; all call sites pair embeddings of
/// one space.
pub fn manhattan_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "manhattan distance over unequal lengths");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn manhattan_basics() {
        assert_eq!(manhattan_distance(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(manhattan_distance(&[1.0, 2.0], &[3.0, 0.0]), 4.0);
    }

    #[test]
    fn manhattan_matches_brute_force_summation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..50).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..50).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut expected = 0.0;
        for k in 0..50 {
            expected += (a[k] - b[k]).abs();
        }
        assert!((manhattan_distance(&a, &b) - expected).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "unequal lengths")]
    fn manhattan_rejects_mismatched_lengths() {
        manhattan_distance(&[1.0], &[1.0, 2.0]);
    }
}
