//! Frame-level features: log-Mel frontend, binary feature files, global
//! normalization and frame-rate alignment between Mel and self-supervised
//! streams.
//!
//! Every matrix is stored row-major as `f64`. Feature files hold `f32`
//! payloads, so a matrix survives a write/load round trip bit-for-bit once its
//! values are representable in single precision.

use std::borrow::Borrow;
use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
pub const WINDOW_LENGTH: usize = 400;
pub const HOP_LENGTH: usize = 160;
pub const FFT_SIZE: usize = 512;
pub const NUM_MEL_BANDS: usize = 40;
/// Energy floor applied before the natural log.
pub const LOG_FLOOR: f64 = 1e-10;
pub const MEL_FRAME_PERIOD: f64 = 0.010;
pub const SSL_FRAME_PERIOD: f64 = 0.020;
pub const STD_FLOOR: f64 = 1e-8;
/// Frame-count difference above which [`align_lengths`] logs a warning.
pub const MAX_LENGTH_MISMATCH: usize = 4;

const FEAT_MAGIC: &[u8; 4] = b"FEAT";
const FEAT_VERSION: u32 = 1;
const FEAT_HEADER_LEN: usize = 4 + 4 + 8 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureSource {
    Mel,
    Ssl,
}

/// A `T x d` sequence of frame vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    num_frames: usize,
    dim: usize,
    frame_period: f64,
    source: FeatureSource,
}

impl FeatureMatrix {
    pub fn new(
        data: Vec<f64>,
        num_frames: usize,
        dim: usize,
        frame_period: f64,
        source: FeatureSource,
    ) -> Result<Self> {
        if num_frames == 0 || dim == 0 {
            return Err(Error::data(format!(
                "feature matrix must be non-empty, got {num_frames}x{dim}"
            )));
        }
        if data.len() != num_frames * dim {
            return Err(Error::data(format!(
                "buffer of {} values does not hold {num_frames}x{dim}",
                data.len()
            )));
        }
        if !(frame_period > 0.0 && frame_period.is_finite()) {
            return Err(Error::data(format!("frame period must be positive, got {frame_period}")));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "non-finite value at frame {}, dim {}",
                i / dim,
                i % dim
            )));
        }
        Ok(Self {
            data,
            num_frames,
            dim,
            frame_period,
            source,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(
        rows: &[R],
        frame_period: f64,
        source: FeatureSource,
    ) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (t, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::data(format!(
                    "row {t} has {} values, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(data, rows.len(), dim, frame_period, source)
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_period(&self) -> f64 {
        self.frame_period
    }

    pub fn source(&self) -> FeatureSource {
        self.source
    }

    pub fn with_source(mut self, source: FeatureSource) -> Self {
        self.source = source;
        self
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Keeps the first `num_frames` frames.
    pub fn truncated(&self, num_frames: usize) -> Self {
        let n = num_frames.min(self.num_frames).max(1);
        Self {
            data: self.data[..n * self.dim].to_vec(),
            num_frames: n,
            ..self.clone()
        }
    }

    /// Rounds every value through `f32`, i.e. to what a feature file can store.
    pub fn quantized(&self) -> Self {
        Self {
            data: self.data.iter().map(|&v| v as f32 as f64).collect(),
            ..self.clone()
        }
    }
}

/// STFT + triangular HTK-mel filterbank producing 40 log energies every 10 ms.
///
/// Frames use a 400-sample periodic Hann window, hop 160, zero-padded to a
/// 512-point FFT, without centering: frame `t` covers samples
/// `[160 t, 160 t + 400)`.
pub struct MelExtractor {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    filterbank: Vec<Vec<f64>>,
}

impl Default for MelExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl MelExtractor {
    pub fn new() -> Self {
        let fft = FftPlanner::new().plan_fft_forward(FFT_SIZE);
        let window = (0..WINDOW_LENGTH)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / WINDOW_LENGTH as f64).cos())
            .collect();
        let filterbank = mel_filterbank(
            NUM_MEL_BANDS,
            FFT_SIZE,
            SAMPLE_RATE as f64,
            0.0,
            SAMPLE_RATE as f64 / 2.0,
        );
        Self {
            fft,
            window,
            filterbank,
        }
    }

    pub fn filterbank(&self) -> &[Vec<f64>] {
        &self.filterbank
    }

    pub fn compute(&self, samples: &[f64], sample_rate: u32) -> Result<FeatureMatrix> {
        if samples.is_empty() {
            return Err(Error::data("empty audio buffer"));
        }
        if sample_rate != SAMPLE_RATE {
            return Err(Error::data(format!(
                "expected {SAMPLE_RATE} Hz audio, got {sample_rate} Hz"
            )));
        }
        if samples.len() < WINDOW_LENGTH {
            return Err(Error::data(format!(
                "audio of {} samples is shorter than one {WINDOW_LENGTH}-sample window",
                samples.len()
            )));
        }
        let num_frames = 1 + (samples.len() - WINDOW_LENGTH) / HOP_LENGTH;
        let num_bins = FFT_SIZE / 2 + 1;
        let mut data = Vec::with_capacity(num_frames * NUM_MEL_BANDS);
        let mut buffer = vec![Complex::new(0.0, 0.0); FFT_SIZE];
        let mut power = vec![0.0; num_bins];
        for t in 0..num_frames {
            let frame = &samples[t * HOP_LENGTH..t * HOP_LENGTH + WINDOW_LENGTH];
            for (slot, (&s, &w)) in buffer.iter_mut().zip(frame.iter().zip(&self.window)) {
                *slot = Complex::new(s * w, 0.0);
            }
            for slot in &mut buffer[WINDOW_LENGTH..] {
                *slot = Complex::new(0.0, 0.0);
            }
            self.fft.process(&mut buffer);
            for (p, c) in power.iter_mut().zip(&buffer) {
                *p = c.norm_sqr();
            }
            for band in &self.filterbank {
                let energy: f64 = band.iter().zip(&power).map(|(w, p)| w * p).sum();
                data.push(energy.max(LOG_FLOOR).ln());
            }
        }
        FeatureMatrix::new(
            data,
            num_frames,
            NUM_MEL_BANDS,
            MEL_FRAME_PERIOD,
            FeatureSource::Mel,
        )
    }
}

/// Log-Mel spectrogram of 16 kHz mono samples in `[-1, 1]`.
pub fn compute_log_mel(samples: &[f64], sample_rate: u32) -> Result<FeatureMatrix> {
    MelExtractor::new().compute(samples, sample_rate)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the triangular filters.
pub fn mel_band_centers(num_bands: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    mel_points(num_bands, fmin, fmax)[1..=num_bands].to_vec()
}

fn mel_points(num_bands: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    (0..num_bands + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (num_bands + 1) as f64))
        .collect()
}

/// Unnormalized triangular filters over the `fft_size / 2 + 1` power bins.
pub fn mel_filterbank(
    num_bands: usize,
    fft_size: usize,
    sample_rate: f64,
    fmin: f64,
    fmax: f64,
) -> Vec<Vec<f64>> {
    let hz = mel_points(num_bands, fmin, fmax);
    let num_bins = fft_size / 2 + 1;
    (0..num_bands)
        .map(|m| {
            let (left, center, right) = (hz[m], hz[m + 1], hz[m + 2]);
            (0..num_bins)
                .map(|k| {
                    let f = k as f64 * sample_rate / fft_size as f64;
                    let rising = (f - left) / (center - left);
                    let falling = (right - f) / (right - center);
                    rising.min(falling).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Reads a 16-bit PCM WAV file as mono samples scaled to `[-1, 1]`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<(Vec<f64>, u32)> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|source| Error::Wav {
        path: path.to_path_buf(),
        source,
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::format(path, format!("expected mono audio, got {} channels", spec.channels)));
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::format(path, "expected 16-bit integer PCM"));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|source| Error::Wav {
            path: path.to_path_buf(),
            source,
        })?;
    Ok((samples, spec.sample_rate))
}

pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in samples {
        let v = (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        writer.write_sample(v).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}

/// Per-dimension global mean and (floored) population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let line = |name: &str, v: &[f64]| {
            let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            format!("{name}\t{}\n", vals.join(" "))
        };
        let text = line("mean", &self.mean) + &line("std", &self.std);
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut mean = None;
        let mut std = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (name, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(path, "expected `name<TAB>values`"))?;
            let values = values
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format(path, e.to_string()))?;
            match name {
                "mean" => mean = Some(values),
                "std" => std = Some(values),
                other => return Err(Error::format(path, format!("unknown row `{other}`"))),
            }
        }
        match (mean, std) {
            (Some(mean), Some(std)) if mean.len() == std.len() && !mean.is_empty() => {
                if std.iter().any(|&s| !(s > 0.0)) {
                    return Err(Error::format(path, "std must be strictly positive"));
                }
                Ok(Self { mean, std })
            }
            _ => Err(Error::format(path, "need `mean` and `std` rows of equal length")),
        }
    }
}

/// Fits global statistics over every frame of every matrix.
///
/// Per-matrix partial sums run in parallel and are reduced in corpus order.
pub fn fit_normalization<M>(corpus: &[M]) -> Result<NormalizationStats>
where
    M: Borrow<FeatureMatrix> + Sync,
{
    let first = corpus
        .first()
        .ok_or_else(|| Error::data("cannot fit normalization on an empty corpus"))?;
    let dim = first.borrow().dim();
    for m in corpus {
        check_dim(dim, m.borrow().dim())?;
    }
    let total: usize = corpus.iter().map(|m| m.borrow().num_frames()).sum();

    let sums: Vec<Vec<f64>> = corpus
        .par_iter()
        .map(|m| {
            let mut acc = vec![0.0; dim];
            for row in m.borrow().rows() {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            acc
        })
        .collect();
    let mean: Vec<f64> = reduce_in_order(&sums, dim)
        .into_iter()
        .map(|s| s / total as f64)
        .collect();

    let sq: Vec<Vec<f64>> = corpus
        .par_iter()
        .map(|m| {
            let mut acc = vec![0.0; dim];
            for row in m.borrow().rows() {
                for ((a, v), mu) in acc.iter_mut().zip(row).zip(&mean) {
                    *a += (v - mu) * (v - mu);
                }
            }
            acc
        })
        .collect();
    let std = reduce_in_order(&sq, dim)
        .into_iter()
        .map(|s| (s / total as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(NormalizationStats { mean, std })
}

fn reduce_in_order(parts: &[Vec<f64>], dim: usize) -> Vec<f64> {
    parts.iter().fold(vec![0.0; dim], |mut acc, p| {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
        acc
    })
}

pub fn apply_normalization(m: &FeatureMatrix, stats: &NormalizationStats) -> Result<FeatureMatrix> {
    check_dim(stats.dim(), m.dim())?;
    let data = m
        .rows()
        .flat_map(|row| {
            row.iter()
                .zip(stats.mean.iter().zip(&stats.std))
                .map(|(x, (mu, sd))| (x - mu) / sd)
        })
        .collect();
    Ok(FeatureMatrix { data, ..m.clone() })
}

/// Inverse of [`apply_normalization`].
pub fn invert_normalization(m: &FeatureMatrix, stats: &NormalizationStats) -> Result<FeatureMatrix> {
    check_dim(stats.dim(), m.dim())?;
    let data = m
        .rows()
        .flat_map(|row| {
            row.iter()
                .zip(stats.mean.iter().zip(&stats.std))
                .map(|(x, (mu, sd))| x * sd + mu)
        })
        .collect();
    Ok(FeatureMatrix { data, ..m.clone() })
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Writes the `FEAT` container: magic, version, `T`, `d`, frame period, then
/// `T * d` little-endian `f32` values row-major.
pub fn write_feature_file(path: impl AsRef<Path>, m: &FeatureMatrix) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(FEAT_HEADER_LEN);
    header.extend_from_slice(FEAT_MAGIC);
    header.extend_from_slice(&FEAT_VERSION.to_le_bytes());
    header.extend_from_slice(&(m.num_frames as u64).to_le_bytes());
    header.extend_from_slice(&(m.dim as u64).to_le_bytes());
    header.extend_from_slice(&m.frame_period.to_le_bytes());
    let write = |w: &mut BufWriter<File>, bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    write(&mut w, &header)?;
    for &v in &m.data {
        write(&mut w, &(v as f32).to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a `FEAT` file. Loaded matrices are tagged [`FeatureSource::Ssl`];
/// callers that know better can relabel with [`FeatureMatrix::with_source`].
pub fn load_feature_file(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_feature_bytes(&bytes).map_err(|reason| Error::format(path, reason))
}

fn decode_feature_bytes(bytes: &[u8]) -> std::result::Result<FeatureMatrix, String> {
    if bytes.len() < FEAT_HEADER_LEN {
        return Err("header truncated".into());
    }
    if &bytes[0..4] != FEAT_MAGIC {
        return Err("bad magic, expected FEAT".into());
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != FEAT_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let num_frames = u64_at(8) as usize;
    let dim = u64_at(16) as usize;
    let frame_period = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
    if num_frames == 0 {
        return Err("zero rows".into());
    }
    if dim == 0 {
        return Err("zero columns".into());
    }
    if !(frame_period > 0.0 && frame_period.is_finite()) {
        return Err(format!("invalid frame period {frame_period}"));
    }
    let expected = num_frames
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or("T·d overflows")?;
    let payload = &bytes[FEAT_HEADER_LEN..];
    if payload.len() < expected {
        return Err("payload shorter than T·d".into());
    }
    if payload.len() > expected {
        return Err("trailing bytes after T·d payload".into());
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    FeatureMatrix::new(data, num_frames, dim, frame_period, FeatureSource::Ssl)
        .map_err(|e| e.to_string())
}

/// Reads a whitespace-separated text matrix, one frame per line.
pub fn load_text_features(path: impl AsRef<Path>, frame_period: f64) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format(path, "zero rows"));
    }
    FeatureMatrix::from_rows(&rows, frame_period, FeatureSource::Ssl)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Repeats each frame `r` times where `r = frame_period / target_period`.
pub fn upsample_to_period(m: &FeatureMatrix, target_period: f64) -> Result<FeatureMatrix> {
    if !(target_period > 0.0) {
        return Err(Error::data(format!("target period must be positive, got {target_period}")));
    }
    let ratio = m.frame_period / target_period;
    let r = ratio.round();
    if r < 1.0 || (ratio - r).abs() > 1e-6 {
        return Err(Error::data(format!(
            "frame period {} is not an integer multiple of {target_period}",
            m.frame_period
        )));
    }
    let r = r as usize;
    let mut data = Vec::with_capacity(m.data.len() * r);
    for row in m.rows() {
        for _ in 0..r {
            data.extend_from_slice(row);
        }
    }
    Ok(FeatureMatrix {
        data,
        num_frames: m.num_frames * r,
        frame_period: target_period,
        ..m.clone()
    })
}

/// Truncates both streams to the shorter length.
pub fn align_lengths(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<(FeatureMatrix, FeatureMatrix)> {
    if (a.frame_period - b.frame_period).abs() > 1e-9 {
        return Err(Error::data(format!(
            "frame period mismatch: {} vs {}",
            a.frame_period, b.frame_period
        )));
    }
    let n = a.num_frames.min(b.num_frames);
    let diff = a.num_frames.abs_diff(b.num_frames);
    if diff > MAX_LENGTH_MISMATCH {
        log::warn!(
            "stream lengths differ by {diff} frames ({} vs {}), truncating to {n}",
            a.num_frames,
            b.num_frames
        );
    }
    Ok((a.truncated(n), b.truncated(n)))
}

/// One reference phone segment in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub label: String,
}

/// Sorted, non-overlapping reference segments for one utterance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Alignment {
    segments: Vec<Segment>,
}

impl Alignment {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        for (i, s) in segments.iter().enumerate() {
            if !(s.start < s.end) || !s.start.is_finite() || !s.end.is_finite() {
                return Err(Error::data(format!(
                    "segment {i} ({}) has start {} >= end {}",
                    s.label, s.start, s.end
                )));
            }
            if i > 0 && s.start < segments[i - 1].end - 1e-9 {
                return Err(Error::data(format!("segment {i} ({}) overlaps its predecessor", s.label)));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn end_time(&self) -> Option<f64> {
        self.segments.last().map(|s| s.end)
    }

    /// Label of the segment containing `time` (half-open intervals).
    pub fn label_at(&self, time: f64) -> Option<&str> {
        let idx = self.segments.partition_point(|s| s.start <= time);
        let seg = self.segments.get(idx.checked_sub(1)?)?;
        (time < seg.end).then_some(seg.label.as_str())
    }
}

/// Parses `start<TAB>end<TAB>label` lines.
pub fn read_alignment_file(path: impl AsRef<Path>) -> Result<Alignment> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut segments = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(start), Some(end), Some(label), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::format(path, format!("line {}: expected 3 tab-separated fields", i + 1)));
        };
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))
        };
        segments.push(Segment {
            start: parse(start)?,
            end: parse(end)?,
            label: label.trim().to_string(),
        });
    }
    Alignment::new(segments).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_alignment_file(path: impl AsRef<Path>, alignment: &Alignment) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for s in &alignment.segments {
        text.push_str(&format!("{}\t{}\t{}\n", s.start, s.end, s.label));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Corpus handle for one utterance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Utterance {
    pub id: String,
    pub audio_path: Option<PathBuf>,
    pub feature_path: Option<PathBuf>,
    pub alignment: Option<Alignment>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(rows: &[&[f64]], period: f64) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows, period, FeatureSource::Ssl).unwrap()
    }

    #[test]
    fn silence_hits_log_floor() {
        let m = compute_log_mel(&vec![0.0; 16_000], 16_000).unwrap();
        assert_eq!((m.num_frames(), m.dim()), (98, 40));
        assert_eq!(m.frame_period(), 0.010);
        assert!(m.as_slice().iter().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn frame_count_follows_hop() {
        for (n, t) in [(400, 1), (559, 1), (560, 2), (16_000, 98)] {
            let m = compute_log_mel(&vec![0.1; n], 16_000).unwrap();
            assert_eq!(m.num_frames(), t, "n = {n}");
        }
    }

    #[test]
    fn mel_rejects_bad_input() {
        assert!(compute_log_mel(&[], 16_000).is_err());
        assert!(compute_log_mel(&vec![0.0; 399], 16_000).is_err());
        assert!(compute_log_mel(&vec![0.0; 16_000], 8_000).is_err());
    }

    #[test]
    fn mel_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..4000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert_eq!(compute_log_mel(&x, 16_000).unwrap(), compute_log_mel(&x, 16_000).unwrap());
    }

    #[test]
    fn filterbank_triangles_peak_at_centers() {
        let fb = mel_filterbank(40, 512, 16_000.0, 0.0, 8_000.0);
        assert_eq!(fb.len(), 40);
        assert!(fb.iter().all(|b| b.len() == 257 && b.iter().any(|&w| w > 0.0)));
        assert!(fb.iter().flatten().all(|&w| (0.0..=1.0).contains(&w)));
        assert_abs_diff_eq!(hz_to_mel(mel_to_hz(1234.5)), 1234.5, epsilon = 1e-9);
    }

    #[test]
    fn normalization_hand_example() {
        let m = matrix(&[&[1.0, 3.0], &[3.0, 5.0]], 0.01);
        let s = fit_normalization(&[m]).unwrap();
        assert_eq!(s.mean, vec![2.0, 4.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_variance_is_floored() {
        let m = matrix(&[&[7.0], &[7.0]], 0.01);
        let s = fit_normalization(&[m.clone(), m]).unwrap();
        assert_eq!(s.mean, vec![7.0]);
        assert_eq!(s.std, vec![STD_FLOOR]);
    }

    #[test]
    fn normalization_errors() {
        let empty: [FeatureMatrix; 0] = [];
        assert!(fit_normalization(&empty).is_err());
        let a = matrix(&[&[1.0]], 0.01);
        let b = matrix(&[&[1.0, 2.0]], 0.01);
        assert!(matches!(
            fit_normalization(&[a.clone(), b.clone()]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(apply_normalization(&b, &NormalizationStats::identity(1)).is_err());
    }

    #[test]
    fn normalized_corpus_is_standard() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f64> = (0..100 * 40).map(|_| rng.gen_range(-5.0..20.0)).collect();
        let m = FeatureMatrix::new(data, 100, 40, 0.01, FeatureSource::Mel).unwrap();
        let s = fit_normalization(&[&m]).unwrap();
        let n = apply_normalization(&m, &s).unwrap();
        let again = fit_normalization(&[&n]).unwrap();
        for d in 0..40 {
            assert_abs_diff_eq!(again.mean[d], 0.0, epsilon = 1e-6);
            assert_abs_diff_eq!(again.std[d], 1.0, epsilon = 1e-6);
        }
        // idempotent up to the floor
        let twice = apply_normalization(&n, &again).unwrap();
        for (a, b) in twice.as_slice().iter().zip(n.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
        let back = invert_normalization(&n, &s).unwrap();
        for (a, b) in back.as_slice().iter().zip(m.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn mean_rows_normalize_to_zero_and_identity_is_noop() {
        let s = NormalizationStats {
            mean: vec![1.5, -2.0],
            std: vec![0.5, 4.0],
        };
        let m = matrix(&[&[1.5, -2.0], &[1.5, -2.0]], 0.01);
        assert!(apply_normalization(&m, &s).unwrap().as_slice().iter().all(|&v| v == 0.0));
        let id = apply_normalization(&m, &NormalizationStats::identity(2)).unwrap();
        assert_eq!(id, m);
    }

    #[test]
    fn stats_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stats.txt");
        let s = NormalizationStats {
            mean: vec![0.1, -3.25e-7],
            std: vec![1.0 / 3.0, 1e-8],
        };
        s.write(&p).unwrap();
        assert_eq!(NormalizationStats::read(&p).unwrap(), s);
    }

    #[test]
    fn feature_file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.feat");
        let m = matrix(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]], 0.02);
        write_feature_file(&p, &m).unwrap();
        let back = load_feature_file(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.frame_period(), 0.02);

        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        let err = load_feature_file(&p).unwrap_err().to_string();
        assert!(err.contains("payload shorter than T·d"), "{err}");

        let mut bad = bytes.clone();
        bad[0] = b'X';
        fs::write(&p, &bad).unwrap();
        assert!(load_feature_file(&p).unwrap_err().to_string().contains("magic"));

        let mut nan = bytes.clone();
        nan[FEAT_HEADER_LEN..FEAT_HEADER_LEN + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&p, &nan).unwrap();
        assert!(load_feature_file(&p).unwrap_err().to_string().contains("non-finite"));

        let mut zero = bytes[..FEAT_HEADER_LEN].to_vec();
        zero[8..16].copy_from_slice(&0u64.to_le_bytes());
        fs::write(&p, &zero).unwrap();
        assert!(load_feature_file(&p).unwrap_err().to_string().contains("zero rows"));
    }

    #[test]
    fn text_features_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        fs::write(&p, "1 2\n3 4\n\n").unwrap();
        let m = load_text_features(&p, 0.02).unwrap();
        assert_eq!(m, matrix(&[&[1.0, 2.0], &[3.0, 4.0]], 0.02));
        fs::write(&p, "1 2\n3\n").unwrap();
        assert!(load_text_features(&p, 0.02).is_err());
    }

    #[test]
    fn upsampling_duplicates_frames() {
        let m = matrix(&[&[1.0], &[2.0]], 0.020);
        let up = upsample_to_period(&m, 0.010).unwrap();
        assert_eq!(up.as_slice(), &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(up.frame_period(), 0.010);
        assert_eq!(upsample_to_period(&m, 0.020).unwrap(), m);
        let odd = matrix(&[&[1.0]], 0.015);
        assert!(upsample_to_period(&odd, 0.010).is_err());
    }

    #[test]
    fn align_truncates_to_shorter() {
        let a = FeatureMatrix::new(vec![0.5; 100], 100, 1, 0.01, FeatureSource::Mel).unwrap();
        let b = FeatureMatrix::new(vec![0.5; 98], 98, 1, 0.01, FeatureSource::Ssl).unwrap();
        let (x, y) = align_lengths(&a, &b).unwrap();
        assert_eq!((x.num_frames(), y.num_frames()), (98, 98));
        let (x, y) = align_lengths(&a, &a).unwrap();
        assert_eq!((x, y), (a.clone(), a.clone()));
        let c = matrix(&[&[1.0]], 0.02);
        assert!(align_lengths(&a, &c).is_err());
    }

    #[test]
    fn alignment_validation_and_lookup() {
        let seg = |s: f64, e: f64, l: &str| Segment {
            start: s,
            end: e,
            label: l.into(),
        };
        let a = Alignment::new(vec![seg(0.0, 0.1, "h#"), seg(0.1, 0.25, "aa")]).unwrap();
        assert_eq!(a.label_at(0.05), Some("h#"));
        assert_eq!(a.label_at(0.1), Some("aa"));
        assert_eq!(a.label_at(0.3), None);
        assert!(Alignment::new(vec![seg(0.0, 0.2, "a"), seg(0.1, 0.3, "b")]).is_err());
        assert!(Alignment::new(vec![seg(0.2, 0.2, "a")]).is_err());

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.phn");
        write_alignment_file(&p, &a).unwrap();
        assert_eq!(read_alignment_file(&p).unwrap(), a);
        fs::write(&p, "0.0 0.1 a\n").unwrap();
        assert!(read_alignment_file(&p).is_err());
    }
}
