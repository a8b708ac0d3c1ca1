//! Exhaustive reference decoder for small instances.
//!
//! A path through the segmental HMM is fully determined by its per-frame
//! centroid labels: a segment opens exactly where the label changes. The
//! oracle scores every label sequence directly, then applies the same
//! tie-breaking as the Viterbi backtrace: the smaller final label wins, and
//! walking backwards, "same label as the next frame" beats any switch, and
//! among switches the smaller label wins.

use std::cmp::Ordering;

use super::{emission_logscore, transition_logweight, HmmConfig, SegmentationResult, Variant};
use crate::error::{Error, Result};
use crate::features::{check_dim, FeatureMatrix};
use crate::kmeans::Centroids;
use crate::svf::{BoundarySet, DeviationTrack};

pub const MAX_BRUTE_FORCE_FRAMES: usize = 12;
pub const MAX_BRUTE_FORCE_CLUSTERS: usize = 4;

pub fn brute_force_decode(
    features: &FeatureMatrix,
    centroids: &Centroids,
    config: &HmmConfig,
    deviation: Option<&DeviationTrack>,
) -> Result<SegmentationResult> {
    config.validate()?;
    check_dim(centroids.dim(), features.dim())?;
    let (t_len, k) = (features.num_frames(), centroids.k());
    if t_len > MAX_BRUTE_FORCE_FRAMES || k > MAX_BRUTE_FORCE_CLUSTERS {
        return Err(Error::data(format!(
            "instance too large for exhaustive search: T = {t_len}, K = {k}"
        )));
    }
    if let Some(d) = deviation {
        if d.len() != t_len {
            return Err(Error::data("deviation track length differs from T"));
        }
    }
    let required = match config.variant {
        Variant::Dp => None,
        Variant::Nseg => {
            let n = config.num_segments(t_len);
            if n > t_len {
                return Err(Error::Infeasible(format!("{n} segments requested for {t_len} frames")));
            }
            Some(n)
        }
    };

    let mut emit = vec![vec![0.0; k]; t_len];
    for (t, row) in emit.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            *e = emission_logscore(features.row(t), centroids.row(j))?;
        }
    }
    let switch_cost = |t: usize| {
        let v = deviation.map_or(0, |d| d.v[t]);
        transition_logweight(config.variant, config.lambda, config.gamma, v)
    };

    let mut labels = vec![0usize; t_len];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let segments = 1 + labels.windows(2).filter(|w| w[0] != w[1]).count();
        if required.is_none_or(|n| n == segments) {
            let mut score = emit[0][labels[0]];
            for t in 1..t_len {
                if labels[t] != labels[t - 1] {
                    score = score + switch_cost(t);
                }
                score = score + emit[t][labels[t]];
            }
            let better = match &best {
                None => true,
                Some((s, l)) => score > *s || (score == *s && backtrace_order(&labels, l) == Ordering::Less),
            };
            if better {
                best = Some((score, labels.clone()));
            }
        }
        if !next_sequence(&mut labels, k) {
            break;
        }
    }

    let (score, assignments) = best.ok_or_else(|| {
        Error::Infeasible(format!("no label sequence of length {t_len} over K = {k} fits the topology"))
    })?;
    let boundaries = (1..t_len).filter(|&t| assignments[t] != assignments[t - 1]).collect();
    Ok(SegmentationResult {
        boundaries: BoundarySet::new(boundaries, t_len)?,
        assignments,
        score,
    })
}

/// Odometer increment; returns false after the last sequence.
fn next_sequence(labels: &mut [usize], k: usize) -> bool {
    for l in labels.iter_mut() {
        *l += 1;
        if *l < k {
            return true;
        }
        *l = 0;
    }
    false
}

/// Preference order applied from the last frame backwards.
fn backtrace_order(a: &[usize], b: &[usize]) -> Ordering {
    let last = a.len() - 1;
    if a[last] != b[last] {
        return a[last].cmp(&b[last]);
    }
    for t in (0..last).rev() {
        if a[t] != b[t] {
            // both share the label at t + 1
            let rank = |l: &[usize]| if l[t] == l[t + 1] { 0 } else { 1 + l[t] };
            return rank(a).cmp(&rank(b));
        }
    }
    Ordering::Equal
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureSource;

    #[test]
    fn guard_and_single_frame() {
        let c = Centroids::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let big = FeatureMatrix::new(vec![0.0; 13], 13, 1, 0.01, FeatureSource::Ssl).unwrap();
        assert!(brute_force_decode(&big, &c, &HmmConfig::dp(2, 1.0), None).is_err());
        let one = FeatureMatrix::new(vec![0.9], 1, 1, 0.01, FeatureSource::Ssl).unwrap();
        let r = brute_force_decode(&one, &c, &HmmConfig::dp(2, 1.0), None).unwrap();
        assert_eq!(r.assignments, vec![1]);
        assert!(r.boundaries.is_empty());
    }

    #[test]
    fn backtrace_preferences() {
        // smaller final label first
        assert_eq!(backtrace_order(&[1, 0], &[0, 1]), Ordering::Less);
        // staying beats switching
        assert_eq!(backtrace_order(&[1, 1], &[0, 1]), Ordering::Less);
        // among switches, the smaller source label
        assert_eq!(backtrace_order(&[0, 2], &[1, 2]), Ordering::Less);
    }
}
