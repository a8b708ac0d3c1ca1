//! Hard-EM ("segmental k-means") training: Viterbi-decode the corpus with the
//! current centroids, then move each centroid to the mean of its frames.

use std::borrow::Borrow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{decode_with_fixed_centroids, HmmConfig, HmmModel, SegmentationResult, INIT_MAX_FRAMES};
use crate::error::{Error, Result};
use crate::features::{check_dim, FeatureMatrix};
use crate::kmeans::{kmeans_plus_plus, squared_distance, subsample, update_means, Centroids};
use crate::svf::DeviationTrack;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Corpus Viterbi score under the centroids the epoch started with.
    pub total_score: f64,
    pub num_segments: usize,
    /// Clusters left empty by this epoch's decoding and re-seeded in its update.
    pub reseeded: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: HmmModel,
    pub initial_centroids: Centroids,
    pub epochs: Vec<EpochRecord>,
}

/// Trains centroids for `config.epochs` epochs from a k-means++ start.
///
/// Deviation tracks, when given, must align with the corpus and are used
/// during training only if `config.bf_in_training` is set.
pub fn train_segmental_kmeans<M>(
    corpus: &[M],
    config: &HmmConfig,
    deviations: Option<&[DeviationTrack]>,
) -> Result<TrainedModel>
where
    M: Borrow<FeatureMatrix> + Sync,
{
    config.validate()?;
    let first = corpus
        .first()
        .ok_or_else(|| Error::data("cannot train on an empty corpus"))?;
    let dim = first.borrow().dim();
    for m in corpus {
        check_dim(dim, m.borrow().dim())?;
    }
    if let Some(devs) = deviations {
        if devs.len() != corpus.len() {
            return Err(Error::data(format!(
                "{} deviation tracks for {} utterances",
                devs.len(),
                corpus.len()
            )));
        }
    }
    let deviations = deviations.filter(|_| config.bf_in_training && config.gamma > 0.0);

    let frames: Vec<&[f64]> = corpus.iter().flat_map(|m| m.borrow().rows()).collect();
    if frames.len() < config.num_clusters {
        return Err(Error::data(format!(
            "K = {} exceeds the {} training frames",
            config.num_clusters,
            frames.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init_frames = subsample(&frames, INIT_MAX_FRAMES, &mut rng);
    let initial_centroids = kmeans_plus_plus(&init_frames, config.num_clusters, &mut rng)?;
    let mut centroids = initial_centroids.clone();

    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let results = decode_corpus(corpus, &centroids, config, deviations)?;
        let total_score = results.iter().fold(0.0, |acc, r| acc + r.score);
        if !total_score.is_finite() {
            return Err(Error::Numerical(format!("epoch {epoch}: non-finite corpus score")));
        }
        let labels: Vec<usize> = results.iter().flat_map(|r| r.assignments.iter().copied()).collect();
        let dists: Vec<f64> = frames
            .iter()
            .zip(&labels)
            .map(|(f, &k)| squared_distance(f, centroids.row(k)))
            .collect();
        let reseeded = update_means(&frames, &labels, &dists, &mut centroids);
        if !reseeded.is_empty() {
            log::info!("epoch {epoch}: re-seeded empty clusters {reseeded:?}");
        }
        let num_segments = results.iter().map(SegmentationResult::num_segments).sum();
        log::debug!("epoch {epoch}: score {total_score:.4}, {num_segments} segments");
        epochs.push(EpochRecord {
            epoch,
            total_score,
            num_segments,
            reseeded,
        });
    }

    Ok(TrainedModel {
        model: HmmModel::new(centroids, config.clone())?,
        initial_centroids,
        epochs,
    })
}

/// Decodes every utterance in parallel; results keep corpus order.
pub(crate) fn decode_corpus<M>(
    corpus: &[M],
    centroids: &Centroids,
    config: &HmmConfig,
    deviations: Option<&[DeviationTrack]>,
) -> Result<Vec<SegmentationResult>>
where
    M: Borrow<FeatureMatrix> + Sync,
{
    corpus
        .par_iter()
        .enumerate()
        .map(|(i, m)| decode_with_fixed_centroids(m.borrow(), centroids, config, deviations.map(|d| &d[i])))
        .collect()
}
