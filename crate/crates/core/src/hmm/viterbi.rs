//! Max-product Viterbi over the segmental state space.
//!
//! Every segment switch into centroid `k` carries the same weight regardless
//! of the source centroid, so the best switch predecessor of `k` is the best
//! source state unless that state is `k` itself, in which case it is the
//! runner-up. Keeping the top two per level makes each frame `O(levels * K)`.
//!
//! For the DP topology no weight depends on the segment index, so the segment
//! axis collapses to a single level; the segment index of a state is just the
//! number of switches on its path. Nseg keeps one level per segment and only
//! the levels from which the final segment count is still reachable.

use super::{transition_logweight, HmmConfig, HmmModel, SegmentationResult, Variant};
use crate::error::{Error, Result};
use crate::features::{check_dim, FeatureMatrix};
use crate::kmeans::{squared_distance, Centroids};
use crate::svf::{BoundarySet, DeviationTrack};

const NONE: u32 = u32::MAX;

/// Per-frame best log-scores indexed by `(t, level, k)`. Unreachable states
/// hold negative infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    num_frames: usize,
    levels: usize,
    num_clusters: usize,
    scores: Vec<f64>,
}

impl Lattice {
    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    /// Number of segment levels kept: 1 for DP, `N` for Nseg.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn score(&self, t: usize, level: usize, k: usize) -> f64 {
        self.scores[(t * self.levels + level) * self.num_clusters + k]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

struct Problem<'a> {
    num_frames: usize,
    num_clusters: usize,
    variant: Variant,
    lambda: f64,
    gamma: f64,
    deviation: Option<&'a [u32]>,
    levels: usize,
    emissions: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(
        features: &FeatureMatrix,
        centroids: &Centroids,
        config: &HmmConfig,
        deviation: Option<&'a DeviationTrack>,
    ) -> Result<Self> {
        config.validate()?;
        check_dim(centroids.dim(), features.dim())?;
        let num_frames = features.num_frames();
        if let Some(dev) = deviation {
            if dev.len() != num_frames {
                return Err(Error::data(format!(
                    "deviation track has {} frames, features have {num_frames}",
                    dev.len()
                )));
            }
        }
        let levels = match config.variant {
            Variant::Dp => 1,
            Variant::Nseg => {
                let n = config.num_segments(num_frames);
                if n > num_frames {
                    return Err(Error::Infeasible(format!(
                        "{n} segments requested for {num_frames} frames"
                    )));
                }
                n
            }
        };
        let k = centroids.k();
        let mut emissions = Vec::with_capacity(num_frames * k);
        for x in features.rows() {
            emissions.extend(centroids.rows().map(|c| -0.5 * squared_distance(x, c)));
        }
        Ok(Self {
            num_frames,
            num_clusters: k,
            variant: config.variant,
            lambda: config.lambda,
            gamma: config.gamma,
            deviation: deviation.map(|d| d.v.as_slice()),
            levels,
            emissions,
        })
    }

    fn switch_weight(&self, t: usize) -> f64 {
        let v = self.deviation.map_or(0, |d| d[t]);
        transition_logweight(self.variant, self.lambda, self.gamma, v)
    }

    /// Levels that can be occupied at frame `t`.
    fn level_range(&self, t: usize) -> std::ops::RangeInclusive<usize> {
        match self.variant {
            Variant::Dp => 0..=0,
            Variant::Nseg => {
                let last = self.levels - 1;
                let lo = last.saturating_sub(self.num_frames - 1 - t);
                lo..=last.min(t)
            }
        }
    }

    fn source_level(&self, level: usize) -> Option<usize> {
        match self.variant {
            Variant::Dp => Some(level),
            Variant::Nseg => level.checked_sub(1),
        }
    }
}

/// Best and runner-up reachable states of one level, smaller index on ties.
fn top_two(row: &[f64]) -> (u32, u32) {
    let mut first = NONE;
    for (k, &s) in row.iter().enumerate() {
        if s > f64::NEG_INFINITY && (first == NONE || s > row[first as usize]) {
            first = k as u32;
        }
    }
    let mut second = NONE;
    for (k, &s) in row.iter().enumerate() {
        if k as u32 != first
            && s > f64::NEG_INFINITY
            && (second == NONE || s > row[second as usize])
        {
            second = k as u32;
        }
    }
    (first, second)
}

struct Forward {
    last_row: Vec<f64>,
    switched: Vec<bool>,
    preds: Vec<(u32, u32)>,
    scores: Option<Vec<f64>>,
}

fn forward(p: &Problem<'_>, keep_scores: bool) -> Forward {
    let (t_len, levels, k) = (p.num_frames, p.levels, p.num_clusters);
    let width = levels * k;
    let mut prev = vec![f64::NEG_INFINITY; width];
    prev[..k].copy_from_slice(&p.emissions[..k]);
    let mut cur = vec![f64::NEG_INFINITY; width];
    let mut switched = vec![false; t_len * width];
    let mut preds = vec![(NONE, NONE); t_len * levels];
    let mut scores = keep_scores.then(|| {
        let mut s = Vec::with_capacity(t_len * width);
        s.extend_from_slice(&prev);
        s
    });

    for t in 1..t_len {
        cur.fill(f64::NEG_INFINITY);
        let weight = p.switch_weight(t);
        let emit = &p.emissions[t * k..(t + 1) * k];
        for n in p.level_range(t) {
            let src = p.source_level(n);
            let (best, runner_up) = src.map_or((NONE, NONE), |s| top_two(&prev[s * k..(s + 1) * k]));
            preds[t * levels + n] = (best, runner_up);
            for j in 0..k {
                let stay = prev[n * k + j];
                let from = if best == j as u32 { runner_up } else { best };
                let switch = match (src, from) {
                    (Some(s), f) if f != NONE => prev[s * k + f as usize] + weight,
                    _ => f64::NEG_INFINITY,
                };
                let (score, did_switch) = if stay >= switch { (stay, false) } else { (switch, true) };
                if score > f64::NEG_INFINITY {
                    cur[n * k + j] = score + emit[j];
                    switched[(t * levels + n) * k + j] = did_switch;
                }
            }
        }
        std::mem::swap(&mut prev, &mut cur);
        if let Some(s) = scores.as_mut() {
            s.extend_from_slice(&prev);
        }
    }
    Forward {
        last_row: prev,
        switched,
        preds,
        scores,
    }
}

/// Runs the forward pass and returns every lattice score.
pub fn build_lattice(
    features: &FeatureMatrix,
    centroids: &Centroids,
    config: &HmmConfig,
    deviation: Option<&DeviationTrack>,
) -> Result<Lattice> {
    let p = Problem::new(features, centroids, config, deviation)?;
    let fwd = forward(&p, true);
    Ok(Lattice {
        num_frames: p.num_frames,
        levels: p.levels,
        num_clusters: p.num_clusters,
        scores: fwd.scores.unwrap(),
    })
}

/// Viterbi segmentation with externally supplied centroids (two-stage
/// decoding when the centroids come from offline k-means).
///
/// Ties prefer staying over switching, then the smaller centroid index, both
/// when choosing predecessors and when choosing the final state.
pub fn decode_with_fixed_centroids(
    features: &FeatureMatrix,
    centroids: &Centroids,
    config: &HmmConfig,
    deviation: Option<&DeviationTrack>,
) -> Result<SegmentationResult> {
    let p = Problem::new(features, centroids, config, deviation)?;
    let (levels, k) = (p.levels, p.num_clusters);
    let fwd = forward(&p, false);

    let final_level = levels - 1;
    let row = &fwd.last_row[final_level * k..(final_level + 1) * k];
    let mut state = (0..k)
        .filter(|&j| row[j] > f64::NEG_INFINITY)
        .fold(None, |best: Option<usize>, j| match best {
            Some(b) if row[b] >= row[j] => Some(b),
            _ => Some(j),
        })
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "no path with {levels} segment level(s) over {} frames and K = {k}",
                p.num_frames
            ))
        })?;
    let score = row[state];

    let mut level = final_level;
    let mut assignments = vec![0; p.num_frames];
    let mut boundaries = Vec::new();
    assignments[p.num_frames - 1] = state;
    for t in (1..p.num_frames).rev() {
        if fwd.switched[(t * levels + level) * k + state] {
            boundaries.push(t);
            let (best, runner_up) = fwd.preds[t * levels + level];
            state = if best == state as u32 { runner_up } else { best } as usize;
            level = p.source_level(level).expect("switch from a level without source");
        }
        assignments[t - 1] = state;
    }
    boundaries.reverse();
    Ok(SegmentationResult {
        boundaries: BoundarySet::new(boundaries, p.num_frames)?,
        assignments,
        score,
    })
}

pub fn decode(
    features: &FeatureMatrix,
    model: &HmmModel,
    deviation: Option<&DeviationTrack>,
) -> Result<SegmentationResult> {
    decode_with_fixed_centroids(features, &model.centroids, &model.config, deviation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureSource;
    use crate::svf::deviation_track;

    fn feats(values: &[f64]) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        FeatureMatrix::from_rows(&rows, 0.01, FeatureSource::Ssl).unwrap()
    }

    fn two_centroids() -> Centroids {
        Centroids::from_rows(&[vec![0.0], vec![10.0]]).unwrap()
    }

    const STEP: [f64; 6] = [0.0, 0.0, 0.0, 10.0, 10.0, 10.0];

    #[test]
    fn single_frame_picks_nearest() {
        let c = Centroids::from_rows(&[vec![0.0], vec![4.0], vec![5.0]]).unwrap();
        let r = decode_with_fixed_centroids(&feats(&[4.4]), &c, &HmmConfig::dp(3, 1.0), None).unwrap();
        assert!(r.boundaries.is_empty());
        assert_eq!(r.assignments, vec![1]);
        assert!((r.score - (-0.5 * 0.4f64 * 0.4)).abs() < 1e-12);
    }

    #[test]
    fn step_with_moderate_penalty() {
        let r = decode_with_fixed_centroids(&feats(&STEP), &two_centroids(), &HmmConfig::dp(2, 1.0), None)
            .unwrap();
        assert_eq!(r.boundaries.frames(), &[3]);
        assert_eq!(r.assignments, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(r.score, -1.0);
    }

    #[test]
    fn huge_penalty_forbids_switching() {
        let r = decode_with_fixed_centroids(&feats(&STEP), &two_centroids(), &HmmConfig::dp(2, 1e6), None)
            .unwrap();
        assert!(r.boundaries.is_empty());
        // both centroids cost 150; the tie goes to the smaller index
        assert_eq!(r.assignments, vec![0; 6]);
        assert_eq!(r.score, -150.0);
    }

    #[test]
    fn nseg_places_its_single_boundary() {
        let r = decode_with_fixed_centroids(&feats(&STEP), &two_centroids(), &HmmConfig::nseg(2, 3.0), None)
            .unwrap();
        assert_eq!(r.boundaries.frames(), &[3]);
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn nseg_too_many_segments() {
        let cfg = HmmConfig::nseg(2, 0.5);
        let err = decode_with_fixed_centroids(&feats(&[1.0, 2.0]), &two_centroids(), &cfg, None).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn single_centroid_never_switches() {
        let c = Centroids::from_rows(&[vec![3.0]]).unwrap();
        for lambda in [0.0, 1.0, 100.0] {
            let r = decode_with_fixed_centroids(&feats(&STEP), &c, &HmmConfig::dp(1, lambda), None).unwrap();
            assert!(r.boundaries.is_empty());
        }
        let err = decode_with_fixed_centroids(&feats(&STEP), &c, &HmmConfig::nseg(1, 3.0), None).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn boundary_penalty_pulls_switch() {
        // with lambda = 0 the step is cut at frame 3; a boundary prior at frame 1
        // with a huge weight makes any switch away from frame 1 prohibitive
        let dev = deviation_track(&BoundarySet::new(vec![1], 6).unwrap());
        let cfg = HmmConfig::dp(2, 0.0).with_gamma(1e6);
        let r = decode_with_fixed_centroids(&feats(&STEP), &two_centroids(), &cfg, Some(&dev)).unwrap();
        // switching at 1 costs 2 * 50 in emissions, staying put costs 150
        assert_eq!(r.boundaries.frames(), &[1]);
        assert_eq!(r.score, -100.0);
    }

    #[test]
    fn input_validation() {
        let c = Centroids::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            decode_with_fixed_centroids(&feats(&STEP), &c, &HmmConfig::dp(1, 1.0), None),
            Err(Error::DimensionMismatch { .. })
        ));
        let dev = DeviationTrack::zeros(5);
        assert!(decode_with_fixed_centroids(&feats(&STEP), &two_centroids(), &HmmConfig::dp(2, 1.0), Some(&dev))
            .is_err());
    }

    #[test]
    fn lattice_shapes() {
        let l = build_lattice(&feats(&STEP), &two_centroids(), &HmmConfig::nseg(2, 3.0), None).unwrap();
        assert_eq!((l.num_frames(), l.levels(), l.num_clusters()), (6, 2, 2));
        // the second segment cannot have started at frame 0
        assert_eq!(l.score(0, 1, 0), f64::NEG_INFINITY);
        // the first segment cannot still be open at the last frame
        assert_eq!(l.score(5, 0, 1), f64::NEG_INFINITY);
        assert_eq!(l.score(5, 1, 1), 0.0);
    }

    #[test]
    fn top_two_ties() {
        assert_eq!(top_two(&[1.0, 3.0, 3.0, 0.0]), (1, 2));
        assert_eq!(top_two(&[f64::NEG_INFINITY, 2.0]), (1, NONE));
        assert_eq!(top_two(&[f64::NEG_INFINITY; 2]), (NONE, NONE));
    }
}
