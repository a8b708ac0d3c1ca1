//! Frame-level k-means with k-means++ seeding, used for two-stage (VQ)
//! decoding and as the initializer for HMM training.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::check_dim;

/// `K x d` centroid matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    data: Vec<f64>,
    k: usize,
    dim: usize,
}

impl Centroids {
    pub fn new(data: Vec<f64>, k: usize, dim: usize) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::data(format!("centroid matrix must be non-empty, got {k}x{dim}")));
        }
        if data.len() != k * dim {
            return Err(Error::data(format!("{} values do not form {k}x{dim} centroids", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite centroid".into()));
        }
        Ok(Self { data, k, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != dim) {
            return Err(Error::data("centroid rows differ in length"));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(data, rows.len(), dim)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    /// Index of the nearest centroid and its squared distance; ties go to the
    /// smaller index.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (k, c) in self.rows().enumerate() {
            let d = squared_distance(x, c);
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    }

    /// Rounds every value through `f32`, i.e. to what a model file can store.
    pub fn quantized(&self) -> Self {
        Self {
            data: self.data.iter().map(|&v| v as f32 as f64).collect(),
            ..self.clone()
        }
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once the relative inertia improvement falls below this.
    pub tol: f64,
    /// Deterministic subsample cap on the number of frames used for fitting.
    pub max_frames: usize,
}

impl KmeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            ..Self::default()
        }
    }
}

impl Default for KmeansParams {
    fn default() -> Self {
        Self {
            k: 50,
            seed: 0,
            max_iters: 100,
            tol: 1e-4,
            max_frames: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansModel {
    pub centroids: Centroids,
    /// Sum of squared distances of the fitted frames to their centroids.
    pub inertia: f64,
    /// Inertia after each assignment step, first to last.
    pub history: Vec<f64>,
}

/// Lloyd's algorithm from a k-means++ start.
pub fn fit_kmeans(frames: &[&[f64]], params: &KmeansParams) -> Result<KmeansModel> {
    if frames.is_empty() {
        return Err(Error::data("k-means needs at least one frame"));
    }
    if params.k == 0 {
        return Err(Error::config("k-means needs K >= 1"));
    }
    let dim = frames[0].len();
    for f in frames {
        check_dim(dim, f.len())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let frames = subsample(frames, params.max_frames, &mut rng);
    if params.k > frames.len() {
        return Err(Error::data(format!(
            "K = {} exceeds the number of frames ({})",
            params.k,
            frames.len()
        )));
    }
    let mut centroids = kmeans_plus_plus(&frames, params.k, &mut rng)?;
    let mut history = Vec::new();
    for iter in 0.. {
        let (labels, dists) = assign_with_distances(&frames, &centroids);
        let inertia: f64 = dists.iter().sum();
        let converged = history
            .last()
            .is_some_and(|&prev: &f64| prev - inertia <= params.tol * prev.abs());
        history.push(inertia);
        if converged || iter >= params.max_iters {
            break;
        }
        let reseeded = update_means(&frames, &labels, &dists, &mut centroids);
        if !reseeded.is_empty() {
            log::debug!("k-means iteration {iter}: re-seeded empty clusters {reseeded:?}");
        }
    }
    let inertia = *history.last().unwrap();
    Ok(KmeansModel {
        centroids,
        inertia,
        history,
    })
}

/// Nearest-centroid labels; ties go to the smaller index.
pub fn assign(frames: &[&[f64]], model: &KmeansModel) -> Result<Vec<usize>> {
    for f in frames {
        check_dim(model.centroids.dim(), f.len())?;
    }
    Ok(assign_with_distances(frames, &model.centroids).0)
}

pub(crate) fn assign_with_distances(frames: &[&[f64]], centroids: &Centroids) -> (Vec<usize>, Vec<f64>) {
    frames.par_iter().map(|f| centroids.nearest(f)).unzip()
}

pub(crate) fn subsample<'a>(frames: &[&'a [f64]], cap: usize, rng: &mut ChaCha8Rng) -> Vec<&'a [f64]> {
    if frames.len() <= cap {
        return frames.to_vec();
    }
    let mut picks = index::sample(rng, frames.len(), cap).into_vec();
    picks.sort_unstable();
    picks.into_iter().map(|i| frames[i]).collect()
}

/// k-means++ seeding: each new centroid is drawn with probability proportional
/// to its squared distance from the closest centroid chosen so far. When every
/// frame coincides with a chosen centroid the draw falls back to uniform.
pub(crate) fn kmeans_plus_plus(frames: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Result<Centroids> {
    let dim = frames[0].len();
    let mut data = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..frames.len());
    data.extend_from_slice(frames[first]);
    let mut closest: Vec<f64> = frames.iter().map(|f| squared_distance(f, frames[first])).collect();
    for _ in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = frames.len() - 1;
            for (i, &d) in closest.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            if closest[chosen] == 0.0 {
                chosen = closest.iter().rposition(|&d| d > 0.0).unwrap();
            }
            chosen
        } else {
            rng.gen_range(0..frames.len())
        };
        data.extend_from_slice(frames[pick]);
        for (c, f) in closest.iter_mut().zip(frames) {
            *c = c.min(squared_distance(f, frames[pick]));
        }
    }
    Centroids::new(data, k, dim)
}

/// Moves every centroid to the mean of its frames. Empty clusters are moved
/// onto the frames farthest from their current centroids, farthest first.
/// Returns the re-seeded cluster ids.
pub(crate) fn update_means(
    frames: &[&[f64]],
    labels: &[usize],
    dists: &[f64],
    centroids: &mut Centroids,
) -> Vec<usize> {
    let dim = centroids.dim();
    let mut sums = vec![0.0; centroids.k() * dim];
    let mut counts = vec![0usize; centroids.k()];
    for (f, &k) in frames.iter().zip(labels) {
        counts[k] += 1;
        for (s, v) in sums[k * dim..(k + 1) * dim].iter_mut().zip(f.iter()) {
            *s += v;
        }
    }
    let empty: Vec<usize> = (0..centroids.k()).filter(|&k| counts[k] == 0).collect();
    for k in 0..centroids.k() {
        if counts[k] > 0 {
            let n = counts[k] as f64;
            for (c, s) in centroids.row_mut(k).iter_mut().zip(&sums[k * dim..(k + 1) * dim]) {
                *c = s / n;
            }
        }
    }
    if !empty.is_empty() {
        let mut order: Vec<usize> = (0..frames.len()).collect();
        order.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
        for (&k, &i) in empty.iter().zip(order.iter()) {
            centroids.row_mut(k).copy_from_slice(frames[i]);
        }
    }
    empty
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs(rows: &[Vec<f64>]) -> Vec<&[f64]> {
        rows.iter().map(|r| r.as_slice()).collect()
    }

    #[test]
    fn distinct_points_become_centroids() {
        let pts = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0]];
        let m = fit_kmeans(&refs(&pts), &KmeansParams::new(3, 1)).unwrap();
        let mut rows: Vec<Vec<f64>> = m.centroids.rows().map(|r| r.to_vec()).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = pts.clone();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(rows, want);
        assert_eq!(m.inertia, 0.0);
    }

    #[test]
    fn single_cluster_is_global_mean() {
        let pts = vec![vec![1.0], vec![2.0], vec![6.0]];
        let m = fit_kmeans(&refs(&pts), &KmeansParams::new(1, 0)).unwrap();
        assert!((m.centroids.row(0)[0] - 3.0).abs() < 1e-12);
        // population variance 14/3 times 3 frames
        assert!((m.inertia - 14.0).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        assert!(fit_kmeans(&[], &KmeansParams::new(1, 0)).is_err());
        let pts = vec![vec![1.0], vec![2.0]];
        assert!(fit_kmeans(&refs(&pts), &KmeansParams::new(3, 0)).is_err());
        let m = fit_kmeans(&refs(&pts), &KmeansParams::new(1, 0)).unwrap();
        assert!(assign(&[&[1.0, 2.0]], &m).is_err());
    }

    #[test]
    fn assignment_ties_prefer_smaller_index() {
        let c = Centroids::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(c.nearest(&[1.0]).0, 0);
        assert_eq!(c.nearest(&[2.0]), (1, 0.0));
    }

    #[test]
    fn empty_cluster_moves_to_farthest_frame() {
        let pts = vec![vec![0.0], vec![1.0], vec![9.0]];
        let frames = refs(&pts);
        let mut c = Centroids::from_rows(&[vec![0.5], vec![100.0]]).unwrap();
        let (labels, dists) = assign_with_distances(&frames, &c);
        assert_eq!(labels, vec![0, 0, 0]);
        let reseeded = update_means(&frames, &labels, &dists, &mut c);
        assert_eq!(reseeded, vec![1]);
        assert_eq!(c.row(1), &[9.0]);
        assert!((c.row(0)[0] - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn subsample_is_deterministic_and_capped() {
        let pts: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let frames = refs(&pts);
        let a = subsample(&frames, 10, &mut ChaCha8Rng::seed_from_u64(4));
        let b = subsample(&frames, 10, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a.len(), 10);
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0][0] < w[1][0]));
    }
}
