//! Segmental HMMs over frame features.
//!
//! State `(k, n)` means "frame belongs to segment `n` and is explained by
//! centroid `k`". A path either stays in its state or opens the next segment
//! with a different centroid. Two topologies are provided:
//!
//! * [`Variant::Dp`] charges `lambda` for every new segment and leaves the
//!   segment count free.
//! * [`Variant::Nseg`] makes new segments free but requires exactly
//!   `N = max(1, round(T / L))` of them.
//!
//! Either can add `gamma * v_t` to the cost of a segment starting at frame `t`,
//! where `v_t` is the distance to the nearest externally detected boundary.
//! Emissions are unit-variance Gaussians scored as `-||x - c||^2 / 2`.

mod brute_force;
mod train;
mod viterbi;

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

pub use brute_force::{brute_force_decode, MAX_BRUTE_FORCE_CLUSTERS, MAX_BRUTE_FORCE_FRAMES};
pub use train::{train_segmental_kmeans, EpochRecord, TrainedModel};
pub use viterbi::{build_lattice, decode, decode_with_fixed_centroids, Lattice};

use crate::error::{Error, Result};
use crate::features::check_dim;
use crate::kmeans::{squared_distance, Centroids};
use crate::svf::BoundarySet;

/// Cap on frames used for k-means++ initialization of HMM training.
pub const INIT_MAX_FRAMES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    #[default]
    Dp,
    Nseg,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dp" => Ok(Variant::Dp),
            "nseg" => Ok(Variant::Nseg),
            other => Err(Error::config(format!("unknown HMM variant `{other}` (dp|nseg)"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Dp => "dp",
            Variant::Nseg => "nseg",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmConfig {
    pub num_clusters: usize,
    pub variant: Variant,
    /// Per-segment penalty (DP only).
    pub lambda: f64,
    /// Weight of the boundary-deviation penalty; 0 disables it.
    pub gamma: f64,
    /// Average segment duration in frames (Nseg only).
    pub avg_duration: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Apply the boundary-deviation penalty while training, not just at inference.
    pub bf_in_training: bool,
}

impl Default for HmmConfig {
    fn default() -> Self {
        Self {
            num_clusters: 50,
            variant: Variant::Dp,
            lambda: 1.9,
            gamma: 0.0,
            avg_duration: 8.1,
            epochs: 10,
            seed: 0,
            bf_in_training: true,
        }
    }
}

impl HmmConfig {
    pub fn dp(num_clusters: usize, lambda: f64) -> Self {
        Self {
            num_clusters,
            variant: Variant::Dp,
            lambda,
            ..Self::default()
        }
    }

    pub fn nseg(num_clusters: usize, avg_duration: f64) -> Self {
        Self {
            num_clusters,
            variant: Variant::Nseg,
            lambda: 0.0,
            avg_duration,
            ..Self::default()
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clusters == 0 {
            return Err(Error::config("K must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.avg_duration > 0.0 && self.avg_duration.is_finite()) {
            return Err(Error::config(format!("L must be > 0, got {}", self.avg_duration)));
        }
        Ok(())
    }

    /// Segment count an Nseg model must produce for `num_frames` frames,
    /// rounding half up.
    pub fn num_segments(&self, num_frames: usize) -> usize {
        ((num_frames as f64 / self.avg_duration + 0.5).floor() as usize).max(1)
    }
}

/// Log-weight of opening a new segment at a frame whose boundary deviation is
/// `deviation`. `lambda` is ignored by the Nseg topology.
pub fn transition_logweight(variant: Variant, lambda: f64, gamma: f64, deviation: u32) -> f64 {
    let lambda = match variant {
        Variant::Dp => lambda,
        Variant::Nseg => 0.0,
    };
    -lambda - gamma * deviation as f64
}

/// `-||x - c||^2 / 2`; the Gaussian normalizer is the same for every path and
/// is dropped.
pub fn emission_logscore(x: &[f64], c: &[f64]) -> Result<f64> {
    check_dim(c.len(), x.len())?;
    Ok(-0.5 * squared_distance(x, c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    pub centroids: Centroids,
    pub config: HmmConfig,
}

impl HmmModel {
    pub fn new(centroids: Centroids, config: HmmConfig) -> Result<Self> {
        config.validate()?;
        if centroids.k() != config.num_clusters {
            return Err(Error::config(format!(
                "{} centroids for a K = {} model",
                centroids.k(),
                config.num_clusters
            )));
        }
        Ok(Self { centroids, config })
    }

    pub fn feature_dim(&self) -> usize {
        self.centroids.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    /// First frame of every segment after the first.
    pub boundaries: BoundarySet,
    /// Centroid id per frame.
    pub assignments: Vec<usize>,
    /// Emission log-scores plus transition log-weights along the path.
    pub score: f64,
}

impl SegmentationResult {
    pub fn num_segments(&self) -> usize {
        self.boundaries.len() + 1
    }
}

/// What a `PHMM` file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Hmm(Variant),
    /// Raw offline k-means centroids.
    Kmeans,
}

impl ModelKind {
    fn to_byte(self) -> u8 {
        match self {
            ModelKind::Hmm(Variant::Dp) => 0,
            ModelKind::Hmm(Variant::Nseg) => 1,
            ModelKind::Kmeans => 255,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(ModelKind::Hmm(Variant::Dp)),
            1 => Some(ModelKind::Hmm(Variant::Nseg)),
            255 => Some(ModelKind::Kmeans),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub lambda: f64,
    pub gamma: f64,
    pub avg_duration: f64,
    pub centroids: Centroids,
}

impl ModelFile {
    pub fn from_model(model: &HmmModel) -> Self {
        Self {
            kind: ModelKind::Hmm(model.config.variant),
            lambda: model.config.lambda,
            gamma: model.config.gamma,
            avg_duration: model.config.avg_duration,
            centroids: model.centroids.clone(),
        }
    }

    pub fn from_kmeans(centroids: &Centroids) -> Self {
        Self {
            kind: ModelKind::Kmeans,
            lambda: 0.0,
            gamma: 0.0,
            avg_duration: 0.0,
            centroids: centroids.clone(),
        }
    }

    /// Rebuilds an HMM; fields the file does not carry come from `base`.
    pub fn to_model(&self, base: &HmmConfig) -> Result<HmmModel> {
        let mut config = base.clone();
        config.num_clusters = self.centroids.k();
        if let ModelKind::Hmm(variant) = self.kind {
            config.variant = variant;
            config.lambda = self.lambda;
            config.gamma = self.gamma;
            config.avg_duration = self.avg_duration;
        }
        HmmModel::new(self.centroids.clone(), config)
    }
}

const MODEL_MAGIC: &[u8; 4] = b"PHMM";
const MODEL_VERSION: u32 = 1;
const MODEL_HEADER_LEN: usize = 4 + 4 + 8 + 8 + 1 + 8 * 3;

/// Writes the `PHMM` container: magic, version, `K`, `d`, kind byte,
/// lambda, gamma, L, then `K * d` little-endian `f32` centroids.
pub fn write_model_file(path: impl AsRef<Path>, model: &ModelFile) -> Result<()> {
    let path = path.as_ref();
    let c = &model.centroids;
    let mut bytes = Vec::with_capacity(MODEL_HEADER_LEN + c.as_slice().len() * 4);
    bytes.extend_from_slice(MODEL_MAGIC);
    bytes.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(c.k() as u64).to_le_bytes());
    bytes.extend_from_slice(&(c.dim() as u64).to_le_bytes());
    bytes.push(model.kind.to_byte());
    for v in [model.lambda, model.gamma, model.avg_duration] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for &v in c.as_slice() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_model_file(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::format(path, reason);
    if bytes.len() < MODEL_HEADER_LEN {
        return Err(bad("header truncated"));
    }
    if &bytes[0..4] != MODEL_MAGIC {
        return Err(bad("bad magic, expected PHMM"));
    }
    if u32::from_le_bytes(bytes[4..8].try_into().unwrap()) != MODEL_VERSION {
        return Err(bad("unsupported version"));
    }
    let k = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let dim = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let kind = ModelKind::from_byte(bytes[24]).ok_or_else(|| bad("unknown variant byte"))?;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (lambda, gamma, avg_duration) = (f64_at(25), f64_at(33), f64_at(41));
    let payload = &bytes[MODEL_HEADER_LEN..];
    if Some(payload.len()) != k.checked_mul(dim).and_then(|n| n.checked_mul(4)) {
        return Err(bad("payload length does not match K·d"));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let centroids = Centroids::new(data, k, dim).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(ModelFile {
        kind,
        lambda,
        gamma,
        avg_duration,
        centroids,
    })
}
